"""RGB image to log-magnitude spectrum conversion for the frequency branch."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np
from PIL import Image

from .autodiff import Tensor
from .errors import ContractError, IngestionError

DOMAINS = ("T2I-like", "I2I-like", "FS-like", "FE-like")
SPECTRAL_DOMAINS = ("T2I-like", "I2I-like")
SPATIAL_DOMAINS = ("FS-like", "FE-like")
REAL, FAKE = 0, 1

LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])


def is_power_of_two(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


@dataclass
class ImageSample:
    """An RGB image in [0, 1] with shape (H, W, 3), a real/fake label and a domain tag."""

    pixels: np.ndarray
    label: int
    domain: str
    id: str

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float64)
        if px.ndim != 3 or px.shape[2] != 3:
            raise ContractError(f"sample {self.id}: pixels must be HxWx3, got {px.shape}")
        h, w = px.shape[:2]
        if not (is_power_of_two(h) and is_power_of_two(w)):
            raise ContractError(f"sample {self.id}: image size {h}x{w} is not a power of two")
        if not np.all(np.isfinite(px)) or px.min() < 0.0 or px.max() > 1.0:
            raise ContractError(f"sample {self.id}: pixel values outside [0, 1]")
        if self.label not in (REAL, FAKE):
            raise ContractError(f"sample {self.id}: label must be 0 (real) or 1 (fake), got {self.label}")
        if self.domain not in DOMAINS:
            raise ContractError(f"sample {self.id}: unknown domain {self.domain!r}")
        self.pixels = px

    @property
    def size(self) -> int:
        return self.pixels.shape[0]


@dataclass
class SpectrumMap:
    values: np.ndarray
    dc_centered: bool


def grayscale_array(pixels: np.ndarray) -> np.ndarray:
    """Luma of (..., H, W, 3) pixels: 0.299 R + 0.587 G + 0.114 B.

    Evaluated as B + 0.299 (R - B) + 0.587 (G - B), which is the same sum
    (the weights add to one) but maps gray pixels, white included, exactly
    onto their channel value instead of one ulp below it.
    """
    r, g, b = pixels[..., 0], pixels[..., 1], pixels[..., 2]
    return b + 0.299 * (r - b) + 0.587 * (g - b)


def to_grayscale(image: ImageSample) -> Tensor:
    return Tensor(np.clip(grayscale_array(image.pixels), 0.0, 1.0))


def _fft_last_axis(x: np.ndarray) -> np.ndarray:
    n = x.shape[-1]
    if not is_power_of_two(n):
        raise ContractError(f"fft: length {n} is not a power of two")
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.int64)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    x = x[..., rev].astype(np.complex128)
    lead = x.shape[:-1]
    size = 2
    while size <= n:
        half = size // 2
        twiddle = np.exp(-2j * np.pi * np.arange(half) / size)
        blocks = x.reshape(*lead, n // size, size)
        even = blocks[..., :half]
        odd = blocks[..., half:] * twiddle
        x = np.concatenate([even + odd, even - odd], axis=-1).reshape(*lead, n)
        size *= 2
    return x


def fft2d(gray) -> np.ndarray:
    """Unnormalized forward 2-D DFT over the last two axes (radix-2).

    Accepts a Tensor or array of shape (H, W) or (..., H, W); H and W must be
    powers of two.
    """
    g = gray.data if isinstance(gray, Tensor) else np.asarray(gray)
    if g.ndim < 2:
        raise ContractError(f"fft2d: expected at least 2 dims, got shape {g.shape}")
    h, w = g.shape[-2:]
    if not (is_power_of_two(h) and is_power_of_two(w)):
        raise ContractError(f"fft2d: dims {h}x{w} must be powers of two")
    rows = _fft_last_axis(g)
    cols = _fft_last_axis(np.swapaxes(rows, -1, -2))
    return np.swapaxes(cols, -1, -2)


def center_quadrants(values: np.ndarray) -> np.ndarray:
    """Move the zero-frequency bin from (0, 0) to (H/2, W/2)."""
    h, w = values.shape[-2:]
    return np.roll(values, (h // 2, w // 2), axis=(-2, -1))


def log_magnitude(spectrum: np.ndarray, center_dc: bool = True) -> SpectrumMap:
    values = np.log1p(np.abs(spectrum))
    if center_dc:
        values = center_quadrants(values)
    return SpectrumMap(values=values, dc_centered=center_dc)


def minmax_normalize(values: np.ndarray) -> np.ndarray:
    """Per-map min-max scaling of the last two axes to [0, 1]; constant maps become zeros."""
    lo = values.min(axis=(-2, -1), keepdims=True)
    hi = values.max(axis=(-2, -1), keepdims=True)
    span = hi - lo
    return np.divide(values - lo, span, out=np.zeros_like(values), where=span > 0)


def spectrum_to_branch_input(smap: SpectrumMap, normalize: bool = True) -> Tensor:
    values = minmax_normalize(smap.values) if normalize else smap.values
    return Tensor(values[None, :, :])


def image_spectrum(image: ImageSample, center_dc: bool = True) -> SpectrumMap:
    return log_magnitude(fft2d(to_grayscale(image)), center_dc=center_dc)


def branch_inputs(pixels: np.ndarray, center_dc: bool = True, normalize: bool = True) -> np.ndarray:
    """Frequency-branch inputs for a stack of images (N, H, W, 3) -> (N, 1, H, W).

    Per image this is exactly to_grayscale -> fft2d -> log_magnitude ->
    spectrum_to_branch_input.
    """
    gray = np.clip(grayscale_array(np.asarray(pixels, dtype=np.float64)), 0.0, 1.0)
    values = log_magnitude(fft2d(gray), center_dc=center_dc).values
    if normalize:
        values = minmax_normalize(values)
    return values[:, None, :, :]


def high_frequency_energy(pixels: np.ndarray, outer_fraction: float = 0.5, ratio: bool = True) -> np.ndarray:
    """Spectral energy outside ``(1 - outer_fraction)`` of the Nyquist radius.

    Works on a single image (H, W, 3) or a stack (N, H, W, 3). With
    ``ratio=True`` the energy is divided by the total spectral energy.
    """
    gray = grayscale_array(np.asarray(pixels, dtype=np.float64))
    power = np.abs(fft2d(gray)) ** 2
    h, w = gray.shape[-2:]
    fy = np.minimum(np.arange(h), h - np.arange(h))[:, None] / (h / 2)
    fx = np.minimum(np.arange(w), w - np.arange(w))[None, :] / (w / 2)
    outer = np.sqrt(fy**2 + fx**2) > (1.0 - outer_fraction)
    hf = (power * outer).sum(axis=(-2, -1))
    if ratio:
        return hf / power.sum(axis=(-2, -1))
    return hf


# -- file formats -------------------------------------------------------------


def pixels_to_png(pixels: np.ndarray, path: Union[str, Path]) -> None:
    arr = np.clip(np.rint(np.asarray(pixels) * 255.0), 0, 255).astype(np.uint8)
    mode = "L" if arr.ndim == 2 else "RGB"
    Image.fromarray(arr, mode=mode).save(path, format="PNG")


def png_to_pixels(path: Union[str, Path]) -> np.ndarray:
    try:
        with Image.open(path) as img:
            img.load()
            arr = np.asarray(img.convert("RGB"), dtype=np.float64)
    except (OSError, ValueError) as exc:
        raise IngestionError(f"cannot read PNG {path}: {exc}") from exc
    return arr / 255.0


def save_png(image: ImageSample, path: Union[str, Path]) -> None:
    pixels_to_png(image.pixels, path)


def load_png(path: Union[str, Path], label: int = REAL, domain: str = DOMAINS[0], id: str | None = None) -> ImageSample:
    pixels = png_to_pixels(path)
    try:
        return ImageSample(pixels, label, domain, id or Path(path).stem)
    except ContractError as exc:
        raise IngestionError(f"{path}: {exc}") from exc
