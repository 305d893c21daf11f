"""Procedural four-family toy corpus standing in for a real/fake face benchmark.

Real images are smooth blob compositions with a little sensor noise. Each
fake starts from such an image and adds one family-specific artifact:

* ``T2I-like``: additive periodic grid (pure tones in the spectrum)
* ``I2I-like``: 2x nearest-neighbour upscale of a half-resolution copy
* ``FS-like``:  rectangle pasted from a second real image, with a hard seam
* ``FE-like``:  unsharp-masked local region

Every sample draws from its own random stream derived from
``(corpus seed, sample id)``, so content never depends on generation order.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
from scipy.ndimage import gaussian_filter

from .errors import ConfigError, IngestionError
from .spectral import DOMAINS, FAKE, REAL, ImageSample, is_power_of_two, pixels_to_png, png_to_pixels

MANIFEST_NAME = "manifest.tsv"
MANIFEST_VERSION = 1

DEFAULT_STRENGTH = {"T2I-like": 1.0, "I2I-like": 1.0, "FS-like": 1.0, "FE-like": 1.0}

# artifact amplitudes at strength 1
GRID_AMPLITUDE = 0.10
SEAM_DARKENING = 0.25
SHARPEN_GAIN = 2.0


@dataclass
class CorpusSpec:
    image_size: int = 32
    samples_per_domain_per_class: int = 500
    seed: int = 0
    artifact_strength: Dict[str, float] = field(default_factory=lambda: dict(DEFAULT_STRENGTH))
    noise_std: float = 0.02

    def validate(self) -> None:
        if not is_power_of_two(self.image_size) or self.image_size < 8:
            raise ConfigError(f"corpus.image_size: {self.image_size} must be a power of two >= 8")
        if self.samples_per_domain_per_class < 1:
            raise ConfigError("corpus.samples_per_domain_per_class: must be positive")
        if not 0 <= self.seed < 2**64:
            raise ConfigError(f"corpus.seed: {self.seed} is not an unsigned 64-bit integer")
        unknown = set(self.artifact_strength) - set(DOMAINS)
        if unknown:
            raise ConfigError(f"corpus.artifact_strength: unknown families {sorted(unknown)}")
        for fam, s in self.artifact_strength.items():
            if not 0.0 < s <= 1.0:
                raise ConfigError(f"corpus.artifact_strength.{fam}: {s} outside (0, 1]")
        if self.noise_std < 0:
            raise ConfigError("corpus.noise_std: must be >= 0")

    def strength(self, family: str) -> float:
        return self.artifact_strength.get(family, DEFAULT_STRENGTH[family])


@dataclass
class Protocol:
    kind: str = "in-domain"
    train_domain: str = "T2I-like"
    test_domain: Optional[str] = None

    def validate(self) -> None:
        if self.kind not in ("in-domain", "cross-domain"):
            raise ConfigError(f"protocol.kind: expected 'in-domain' or 'cross-domain', got {self.kind!r}")
        if self.train_domain not in DOMAINS:
            raise ConfigError(f"protocol.train_domain: unknown family {self.train_domain!r}")
        if self.kind == "cross-domain":
            if self.test_domain not in DOMAINS:
                raise ConfigError(f"protocol.test_domain: unknown family {self.test_domain!r}")
            if self.test_domain == self.train_domain:
                raise ConfigError("protocol.test_domain: cross-domain train and test families must differ")

    def describe(self) -> str:
        if self.kind == "in-domain":
            return f"in-domain({self.train_domain})"
        return f"cross-domain({self.train_domain},{self.test_domain})"


@dataclass
class CorpusSplit:
    train: List[ImageSample]
    test: List[ImageSample]
    protocol: Protocol

    def __post_init__(self):
        overlap = {s.id for s in self.train} & {s.id for s in self.test}
        if overlap:
            raise ConfigError(f"split: {len(overlap)} ids appear in both train and test")


# -- random streams ------------------------------------------------------------


def sample_stream(seed: int, sample_id: str) -> np.random.Generator:
    digest = hashlib.sha256(sample_id.encode("utf-8")).digest()
    key = [int.from_bytes(digest[i : i + 4], "little") for i in range(0, 32, 4)]
    return np.random.default_rng(np.random.SeedSequence(entropy=int(seed), spawn_key=key))


def sample_id(domain: str, label: int, index: int) -> str:
    return f"{domain}-{'fake' if label == FAKE else 'real'}-{index:05d}"


# -- generators ---------------------------------------------------------------------


def _soft_clip(x: np.ndarray) -> np.ndarray:
    return 0.5 + 0.5 * np.tanh(2.0 * (x - 0.5))


def _real_pixels(size: int, noise_std: float, rng: np.random.Generator) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    img = np.broadcast_to(rng.uniform(0.25, 0.75, size=3), (size, size, 3)).copy()
    for _ in range(int(rng.integers(3, 7))):
        cy, cx = rng.uniform(0, size, size=2)
        sigma = rng.uniform(size / 8, size / 3)
        chroma = rng.uniform(-0.45, 0.45, size=3)
        blob = np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * sigma**2))
        img += blob[:, :, None] * chroma
    img = _soft_clip(img)
    if noise_std > 0:
        img = img + rng.normal(0.0, noise_std, size=img.shape)
    return np.clip(img, 0.0, 1.0)


def generate_real(spec: CorpusSpec, rng: np.random.Generator, id: str = "real", domain: str = DOMAINS[0]) -> ImageSample:
    return ImageSample(_real_pixels(spec.image_size, spec.noise_std, rng), REAL, domain, id)


def _random_rect(size: int, rng: np.random.Generator):
    h, w = rng.integers(size // 4, size // 2 + 1, size=2)
    y0 = int(rng.integers(1, size - h))
    x0 = int(rng.integers(1, size - w))
    return y0, x0, int(h), int(w)


def _grid(base: np.ndarray, s: float, rng: np.random.Generator) -> np.ndarray:
    size = base.shape[0]
    lo, hi = size // 4 + 1, size // 2 - 1
    ky, kx = rng.integers(lo, hi + 1, size=2)
    py, px = rng.uniform(0, 2 * np.pi, size=2)
    coords = np.arange(size)
    rows = np.cos(2 * np.pi * ky * coords / size + py)[:, None]
    cols = np.cos(2 * np.pi * kx * coords / size + px)[None, :]
    pattern = 0.5 * GRID_AMPLITUDE * s * (rows + cols)
    return base + pattern[:, :, None]


def _upscale(base: np.ndarray, s: float, rng: np.random.Generator) -> np.ndarray:
    size = base.shape[0]
    half = base.reshape(size // 2, 2, size // 2, 2, 3).mean(axis=(1, 3))
    up = np.repeat(np.repeat(half, 2, axis=0), 2, axis=1)
    return (1.0 - s) * base + s * up


def _swap(base: np.ndarray, s: float, rng: np.random.Generator, spec: CorpusSpec) -> np.ndarray:
    size = base.shape[0]
    donor = _real_pixels(size, spec.noise_std, rng)
    y0, x0, h, w = _random_rect(size, rng)
    out = base.copy()
    region = (slice(y0, y0 + h), slice(x0, x0 + w))
    out[region] = (1.0 - s) * base[region] + s * donor[region]
    seam = np.zeros((size, size), dtype=bool)
    seam[y0, x0 : x0 + w] = seam[y0 + h - 1, x0 : x0 + w] = True
    seam[y0 : y0 + h, x0] = seam[y0 : y0 + h, x0 + w - 1] = True
    out[seam] -= SEAM_DARKENING * s
    return out


def _sharpen(base: np.ndarray, s: float, rng: np.random.Generator) -> np.ndarray:
    size = base.shape[0]
    y0, x0, h, w = _random_rect(size, rng)
    blurred = gaussian_filter(base, sigma=(1.0, 1.0, 0.0), mode="reflect")
    out = base.copy()
    region = (slice(y0, y0 + h), slice(x0, x0 + w))
    out[region] += SHARPEN_GAIN * s * (base[region] - blurred[region])
    return out


def apply_artifact(base: np.ndarray, family: str, strength: float, rng: np.random.Generator, spec: CorpusSpec) -> np.ndarray:
    if family == "T2I-like":
        out = _grid(base, strength, rng)
    elif family == "I2I-like":
        out = _upscale(base, strength, rng)
    elif family == "FS-like":
        out = _swap(base, strength, rng, spec)
    elif family == "FE-like":
        out = _sharpen(base, strength, rng)
    else:
        raise ConfigError(f"unknown forgery family {family!r}; expected one of {DOMAINS}")
    return np.clip(out, 0.0, 1.0)


def generate_fake(
    spec: CorpusSpec,
    family: str,
    rng: np.random.Generator,
    id: str = "fake",
    strength: Optional[float] = None,
) -> ImageSample:
    """A real image from ``rng`` followed by the family's artifact."""
    if family not in DOMAINS:
        raise ConfigError(f"unknown forgery family {family!r}; expected one of {DOMAINS}")
    s = spec.strength(family) if strength is None else strength
    base = _real_pixels(spec.image_size, spec.noise_std, rng)
    if s == 0:
        return ImageSample(base, FAKE, family, id)
    return ImageSample(apply_artifact(base, family, s, rng, spec), FAKE, family, id)


def generate_domain(spec: CorpusSpec, domain: str) -> List[ImageSample]:
    """All samples of one family: reals first, then fakes, in index order."""
    spec.validate()
    out = []
    for i in range(spec.samples_per_domain_per_class):
        sid = sample_id(domain, REAL, i)
        out.append(generate_real(spec, sample_stream(spec.seed, sid), sid, domain))
    for i in range(spec.samples_per_domain_per_class):
        sid = sample_id(domain, FAKE, i)
        out.append(generate_fake(spec, domain, sample_stream(spec.seed, sid), sid))
    return out


class Corpus:
    """Lazily generated, cached corpus for one :class:`CorpusSpec`."""

    def __init__(self, spec: CorpusSpec):
        spec.validate()
        self.spec = spec
        self._domains: Dict[str, List[ImageSample]] = {}

    def domain(self, name: str) -> List[ImageSample]:
        if name not in DOMAINS:
            raise ConfigError(f"unknown forgery family {name!r}")
        if name not in self._domains:
            self._domains[name] = generate_domain(self.spec, name)
        return self._domains[name]

    def in_domain_parts(self, name: str, train_fraction: float = 0.8):
        """Stratified split of one family into (train, test), 1:1 real:fake in both."""
        samples = self.domain(name)
        rng = sample_stream(self.spec.seed, f"split:{name}")
        train, test = [], []
        for label in (REAL, FAKE):
            group = [s for s in samples if s.label == label]
            order = rng.permutation(len(group))
            cut = int(round(train_fraction * len(group)))
            train.extend(group[i] for i in sorted(order[:cut]))
            test.extend(group[i] for i in sorted(order[cut:]))
        return train, test


def build_split(spec: Union[CorpusSpec, Corpus], protocol: Protocol) -> CorpusSplit:
    """In-domain: stratified 80/20 within one family. Cross-domain: all of A vs all of B."""
    protocol.validate()
    corpus = spec if isinstance(spec, Corpus) else Corpus(spec)
    if protocol.kind == "in-domain":
        train, test = corpus.in_domain_parts(protocol.train_domain)
    else:
        train = list(corpus.domain(protocol.train_domain))
        test = list(corpus.domain(protocol.test_domain))
    return CorpusSplit(train=train, test=test, protocol=protocol)


# -- on-disk format ------------------------------------------------------------------


def export_corpus(split: CorpusSplit, directory: Union[str, Path]) -> Path:
    """Write ``<root>/<domain>/<split>/<id>.png`` files plus ``manifest.tsv``."""
    root = Path(directory)
    lines = [
        f"# dualbranch-corpus v{MANIFEST_VERSION} protocol={split.protocol.describe()}",
        "id\tlabel\tdomain\tsplit",
    ]
    for part, samples in (("train", split.train), ("test", split.test)):
        for s in samples:
            folder = root / s.domain / part
            folder.mkdir(parents=True, exist_ok=True)
            pixels_to_png(s.pixels, folder / f"{s.id}.png")
            lines.append(f"{s.id}\t{s.label}\t{s.domain}\t{part}")
    root.mkdir(parents=True, exist_ok=True)
    manifest = root / MANIFEST_NAME
    manifest.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return manifest


def _parse_protocol(text: str) -> Protocol:
    if text.startswith("in-domain(") and text.endswith(")"):
        return Protocol("in-domain", text[len("in-domain(") : -1])
    if text.startswith("cross-domain(") and text.endswith(")"):
        a, b = text[len("cross-domain(") : -1].split(",")
        return Protocol("cross-domain", a, b)
    raise ValueError(text)


def read_manifest(directory: Union[str, Path]):
    root = Path(directory)
    manifest = root / MANIFEST_NAME
    if not manifest.is_file():
        raise IngestionError(f"{manifest}: manifest not found")
    lines = manifest.read_text(encoding="utf-8").splitlines()
    if not lines or not lines[0].startswith("# dualbranch-corpus v"):
        raise IngestionError(f"{manifest}: missing version header")
    header = lines[0].split()
    try:
        version = int(header[2][1:])
        protocol = _parse_protocol(header[3].split("=", 1)[1])
    except (IndexError, ValueError):
        raise IngestionError(f"{manifest}: malformed header {lines[0]!r}") from None
    if version != MANIFEST_VERSION:
        raise IngestionError(f"{manifest}: unsupported manifest version {version}")
    if len(lines) < 2 or lines[1].split("\t") != ["id", "label", "domain", "split"]:
        raise IngestionError(f"{manifest}: missing column header")
    rows = []
    for lineno, line in enumerate(lines[2:], start=3):
        fields = line.split("\t")
        if len(fields) != 4 or fields[3] not in ("train", "test") or fields[1] not in ("0", "1"):
            raise IngestionError(f"{manifest}:{lineno}: malformed entry {line!r}")
        rows.append((fields[0], int(fields[1]), fields[2], fields[3]))
    return protocol, rows


def import_corpus(directory: Union[str, Path]) -> CorpusSplit:
    root = Path(directory)
    protocol, rows = read_manifest(root)
    parts: Dict[str, List[ImageSample]] = {"train": [], "test": []}
    for sid, label, domain, part in rows:
        path = root / domain / part / f"{sid}.png"
        if not path.is_file():
            raise IngestionError(f"{path}: listed in manifest but missing")
        pixels = png_to_pixels(path)
        try:
            parts[part].append(ImageSample(pixels, label, domain, sid))
        except Exception as exc:
            raise IngestionError(f"{path}: {exc}") from exc
    return CorpusSplit(train=parts["train"], test=parts["test"], protocol=protocol)


def stack_pixels(samples: Sequence[ImageSample]) -> np.ndarray:
    return np.stack([s.pixels for s in samples])


def stack_labels(samples: Sequence[ImageSample]) -> np.ndarray:
    return np.array([s.label for s in samples], dtype=np.int64)
