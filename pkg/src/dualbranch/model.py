"""Dual-branch (RGB + spectrum) detector with channel-attention fusion."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Union

import numpy as np

from . import spectral
from .autodiff import (
    ParameterSet,
    Tensor,
    add,
    clamp,
    concat_channels,
    conv2d,
    div,
    global_avg_pool,
    global_max_pool,
    l2_norm,
    linear,
    mul,
    relu,
    reshape,
    sigmoid,
)
from .errors import ConfigError, ShapeError

AttentionOverride = Union[None, float, np.ndarray]


@dataclass
class BackboneConfig:
    """A plain conv/ReLU stack: one ``kernel_size`` conv per stage, padded by ``kernel_size // 2``."""

    stage_channels: List[int]
    strides: List[int]
    in_channels: int = 3
    kernel_size: int = 3

    def validate(self, name: str) -> None:
        if not self.stage_channels:
            raise ConfigError(f"{name}.stage_channels: need at least one stage")
        if len(self.strides) != len(self.stage_channels):
            raise ConfigError(
                f"{name}.strides: {len(self.strides)} strides for {len(self.stage_channels)} stages"
            )
        if any(c < 1 for c in self.stage_channels):
            raise ConfigError(f"{name}.stage_channels: channel counts must be positive")
        if any(s < 1 for s in self.strides):
            raise ConfigError(f"{name}.strides: strides must be positive")
        if self.kernel_size < 1 or self.kernel_size % 2 == 0:
            raise ConfigError(f"{name}.kernel_size: must be a positive odd integer")

    @property
    def out_channels(self) -> int:
        return self.stage_channels[-1]

    def output_size(self, input_size: int) -> int:
        size = input_size
        pad = self.kernel_size // 2
        for s in self.strides:
            size = (size + 2 * pad - self.kernel_size) // s + 1
        return size


@dataclass
class ModelConfig:
    image_size: int = 32
    rgb: BackboneConfig = field(default_factory=lambda: BackboneConfig([16, 32, 64], [2, 2, 2], in_channels=3))
    fre: BackboneConfig = field(default_factory=lambda: BackboneConfig([8, 16, 32], [2, 2, 2], in_channels=1))
    reduction: int = 4
    head_hidden: int = 32
    center_dc: bool = True
    normalize_spectrum: bool = True
    # weights ~ U[-s, s] with s = sqrt(init_gain / fan_in); 6 is He-uniform, 1 the plain 1/sqrt(fan_in) rule
    init_gain: float = 6.0

    def validate(self) -> None:
        if not spectral.is_power_of_two(self.image_size):
            raise ConfigError(f"model.image_size: {self.image_size} is not a power of two")
        self.rgb.validate("model.rgb")
        self.fre.validate("model.fre")
        if self.rgb.in_channels != 3:
            raise ConfigError("model.rgb.in_channels: the RGB branch takes 3 channels")
        if self.fre.in_channels != 1:
            raise ConfigError("model.fre.in_channels: the frequency branch takes 1 channel")
        h_rgb = self.rgb.output_size(self.image_size)
        h_fre = self.fre.output_size(self.image_size)
        if h_rgb != h_fre:
            raise ConfigError(f"model: branch output sizes differ ({h_rgb} vs {h_fre}); fusion impossible")
        if h_rgb < 1 or self.image_size % h_rgb != 0:
            raise ConfigError(f"model: final spatial size {h_rgb} must divide image size {self.image_size}")
        if self.reduction < 1 or self.fused_channels % self.reduction != 0:
            raise ConfigError(
                f"model.reduction: {self.reduction} does not divide fused channel count {self.fused_channels}"
            )
        if self.head_hidden < 1:
            raise ConfigError("model.head_hidden: must be positive")
        if not self.init_gain > 0:
            raise ConfigError(f"model.init_gain: must be positive, got {self.init_gain}")

    @property
    def fused_channels(self) -> int:
        return self.rgb.out_channels + self.fre.out_channels

    @property
    def feature_size(self) -> int:
        return self.rgb.output_size(self.image_size)


@dataclass
class AttentionWeights:
    """Shared two-layer MLP of the channel attention; weights are (out, in)."""

    mlp_w1: Tensor
    mlp_w2: Tensor

    @property
    def channels(self) -> int:
        return self.mlp_w1.shape[1]


@dataclass
class FusedFeature:
    embedding: Tensor
    attention: Tensor


@dataclass
class ForwardOutput:
    p: Tensor
    z: Tensor
    f_fre: Optional[Tensor]
    attention: Tensor
    fused: FusedFeature
    intermediates: Dict[str, Tensor]


def _stream(seed: int, name: str) -> np.random.Generator:
    digest = hashlib.sha256(name.encode("utf-8")).digest()
    key = [int.from_bytes(digest[i : i + 4], "little") for i in range(0, 16, 4)]
    return np.random.default_rng(np.random.SeedSequence(entropy=int(seed) & (2**64 - 1), spawn_key=key))


def init_uniform(seed: int, name: str, shape: Sequence[int], fan_in: int, gain: float = 6.0) -> np.ndarray:
    """U[-s, s] with s = sqrt(gain / fan_in), drawn from a stream keyed by (seed, name).

    The default gain 6 is He-uniform. It keeps ReLU activations at a stable
    scale; with gain 1 they shrink ~2.4x per layer and training sits on a
    long 50%-accuracy plateau before it starts to separate the classes.
    """
    bound = np.sqrt(gain / fan_in)
    return _stream(seed, name).uniform(-bound, bound, size=tuple(shape))


def init_params(config: ModelConfig, seed: int) -> ParameterSet:
    config.validate()
    params = ParameterSet()

    def add_param(name, shape, fan_in=None):
        if fan_in is None:
            data = np.zeros(shape)
        else:
            data = init_uniform(seed, name, shape, fan_in, config.init_gain)
        params.add(name, Tensor(data, requires_grad=True))

    for prefix, bb in (("rgb", config.rgb), ("fre", config.fre)):
        c_in = bb.in_channels
        for i, c_out in enumerate(bb.stage_channels):
            fan_in = c_in * bb.kernel_size**2
            add_param(f"{prefix}.conv{i}.weight", (c_out, c_in, bb.kernel_size, bb.kernel_size), fan_in)
            add_param(f"{prefix}.conv{i}.bias", (c_out, 1, 1))
            c_in = c_out

    c = config.fused_channels
    hidden = c // config.reduction
    add_param("attn.mlp_w1", (hidden, c), c)
    add_param("attn.mlp_w2", (c, hidden), hidden)
    add_param("head.fc1.weight", (config.head_hidden, c), c)
    add_param("head.fc1.bias", (config.head_hidden,))
    add_param("head.fc2.weight", (1, config.head_hidden), config.head_hidden)
    add_param("head.fc2.bias", (1,))
    return params


class DualBranchDetector:
    """RGB backbone + spectrum backbone, channel-attention fusion, two-layer head.

    Parameters live in ``self.params`` (a :class:`ParameterSet`), which may be
    shared with extra loss state such as class centers.
    """

    def __init__(self, config: ModelConfig, params: ParameterSet):
        config.validate()
        self.config = config
        self.params = params

    @classmethod
    def create(cls, config: ModelConfig, seed: int) -> "DualBranchDetector":
        return cls(config, init_params(config, seed))

    @property
    def attention_weights(self) -> AttentionWeights:
        return AttentionWeights(self.params["attn.mlp_w1"], self.params["attn.mlp_w2"])

    # -- branches -------------------------------------------------------
    def _backbone(self, prefix: str, bb: BackboneConfig, x) -> Tensor:
        x = x if isinstance(x, Tensor) else Tensor(x)
        expected = (bb.in_channels, self.config.image_size, self.config.image_size)
        if tuple(x.shape[-3:]) != expected or x.ndim not in (3, 4):
            raise ShapeError(f"{prefix}_branch: expected input (..., {expected}), got {x.shape}")
        pad = bb.kernel_size // 2
        for i, stride in enumerate(bb.strides):
            x = conv2d(x, self.params[f"{prefix}.conv{i}.weight"], stride=stride, padding=pad)
            x = relu(add(x, self.params[f"{prefix}.conv{i}.bias"]))
        return x

    def rgb_branch(self, image_tensor) -> Tensor:
        """(3,H,W) or (N,3,H,W) -> (C_rgb,h,w) or (N,C_rgb,h,w)."""
        return self._backbone("rgb", self.config.rgb, image_tensor)

    def fre_branch(self, spectrum_tensor) -> Tensor:
        """(1,H,W) or (N,1,H,W) -> (C_fre,h,w) or (N,C_fre,h,w)."""
        return self._backbone("fre", self.config.fre, spectrum_tensor)

    # -- fusion -----------------------------------------------------------
    def channel_attention(self, concat: Tensor, weights: Optional[AttentionWeights] = None) -> Tensor:
        weights = weights or self.attention_weights
        return channel_attention(concat, weights)

    def fuse(
        self,
        f_rgb: Tensor,
        f_fre: Tensor,
        weights: Optional[AttentionWeights] = None,
        attention_override: AttentionOverride = None,
    ) -> FusedFeature:
        return fuse(f_rgb, f_fre, weights or self.attention_weights, attention_override)

    def classify(self, feature: Union[FusedFeature, Tensor]) -> Tensor:
        """Probability of class fake: (C,) -> (1,), or (N,C) -> (N,)."""
        f = feature.embedding if isinstance(feature, FusedFeature) else feature
        expected = self.params["head.fc1.weight"].shape[1]
        if f.shape[-1] != expected:
            raise ShapeError(f"classify: embedding size {f.shape[-1]} but head expects {expected}")
        single = f.ndim == 1
        if single:
            f = reshape(f, (1, -1))
        h = relu(linear(f, self.params["head.fc1.weight"], self.params["head.fc1.bias"]))
        logit = linear(h, self.params["head.fc2.weight"], self.params["head.fc2.bias"])
        p = sigmoid(logit)
        return reshape(p, (1,)) if single else reshape(p, (p.shape[0],))

    # -- full pipeline ----------------------------------------------------
    def spectra(self, pixels: np.ndarray) -> np.ndarray:
        return spectral.branch_inputs(
            pixels, center_dc=self.config.center_dc, normalize=self.config.normalize_spectrum
        )

    def forward_batch(
        self,
        pixels: np.ndarray,
        spectra: Optional[np.ndarray] = None,
        disable_fre_branch: bool = False,
        disable_attention: bool = False,
        attention_override: AttentionOverride = None,
    ) -> ForwardOutput:
        """Run the whole detector on a stack of images ``(N, H, W, 3)``.

        ``spectra`` may carry precomputed frequency-branch inputs (N, 1, H, W).
        """
        pixels = np.asarray(pixels, dtype=np.float64)
        if pixels.ndim != 4:
            raise ShapeError(f"forward_batch: expected (N,H,W,3) pixels, got {pixels.shape}")
        rgb_in = Tensor(np.ascontiguousarray(pixels.transpose(0, 3, 1, 2)))
        f_rgb = self.rgb_branch(rgb_in)
        inter: Dict[str, Tensor] = {"f_rgb": f_rgb}

        if disable_fre_branch:
            shape = (pixels.shape[0], self.config.fre.out_channels) + f_rgb.shape[-2:]
            f_fre = Tensor(np.zeros(shape))
            f_fre_vec = None
        else:
            if spectra is None:
                spectra = self.spectra(pixels)
            f_fre = self.fre_branch(Tensor(spectra))
            f_fre_vec = global_avg_pool(f_fre)
            inter["f_fre_vec"] = f_fre_vec
        inter["f_fre"] = f_fre

        if disable_attention:
            attention_override = 1.0
        fused = self.fuse(f_rgb, f_fre, attention_override=attention_override)
        inter["embedding"] = fused.embedding
        inter["attention"] = fused.attention

        p = self.classify(fused)
        norm = clamp(l2_norm(fused.embedding, axis=1, keepdims=True), low=1e-12)
        z = div(fused.embedding, norm)
        inter["p"] = p
        inter["z"] = z
        return ForwardOutput(p=p, z=z, f_fre=f_fre_vec, attention=fused.attention, fused=fused, intermediates=inter)

    def forward(self, image: spectral.ImageSample, **options) -> ForwardOutput:
        """Single-image forward; outputs drop the batch axis (p has shape (1,))."""
        if image.size != self.config.image_size:
            raise ShapeError(f"forward: image is {image.size}px, model expects {self.config.image_size}px")
        out = self.forward_batch(image.pixels[None], **options)
        return ForwardOutput(
            p=out.p,
            z=out.z[0],
            f_fre=None if out.f_fre is None else out.f_fre[0],
            attention=out.attention[0],
            fused=FusedFeature(out.fused.embedding[0], out.fused.attention[0]),
            intermediates=out.intermediates,
        )


def _shared_mlp(x: Tensor, weights: AttentionWeights) -> Tensor:
    return linear(relu(linear(x, weights.mlp_w1)), weights.mlp_w2)


def channel_attention(concat: Tensor, weights: AttentionWeights) -> Tensor:
    """Per-channel gate in (0, 1) from spatially avg- and max-pooled descriptors.

    Accepts (C,h,w) -> (C,) or (N,C,h,w) -> (N,C).
    """
    c = concat.shape[-3]
    hidden = weights.mlp_w1.shape[0]
    if weights.channels != c or weights.mlp_w2.shape != (c, hidden):
        raise ShapeError(
            f"channel_attention: {c} channels vs MLP weights {weights.mlp_w1.shape}, {weights.mlp_w2.shape}"
        )
    if c % hidden != 0:
        raise ConfigError(f"channel_attention: reduced width {hidden} does not divide {c} channels")
    single = concat.ndim == 3
    f_avg = global_avg_pool(concat)
    f_max = global_max_pool(concat)
    if single:
        f_avg = reshape(f_avg, (1, c))
        f_max = reshape(f_max, (1, c))
    m = sigmoid(add(_shared_mlp(f_avg, weights), _shared_mlp(f_max, weights)))
    return reshape(m, (c,)) if single else m


def fuse(
    f_rgb: Tensor,
    f_fre: Tensor,
    weights: AttentionWeights,
    attention_override: AttentionOverride = None,
) -> FusedFeature:
    """Concatenate, gate every channel by the attention map, then global-average-pool.

    ``attention_override`` replaces the computed attention by a constant or a
    fixed per-channel array (test and ablation hook).
    """
    concat = concat_channels(f_rgb, f_fre)
    lead = concat.shape[:-2]
    if attention_override is None:
        attention = channel_attention(concat, weights)
    else:
        attention = Tensor(np.broadcast_to(np.asarray(attention_override, dtype=np.float64), lead).copy())
    gated = mul(concat, reshape(attention, lead + (1, 1)))
    return FusedFeature(embedding=global_avg_pool(gated), attention=attention)
