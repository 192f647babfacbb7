"""Network composition: transformer layers, UFONE units, and the full
DITN super-resolution models, plus parameter and FLOP accounting.

A model is a pipeline of a shallow 3x3 convolution, K UFONE units, a deep
3x3 convolution with a long residual, and a reconstruction head (3x3 conv to
``3*s^2`` channels followed by pixel shuffle). Each UFONE unfolds the feature
map into patch tokens exactly once, runs M inner-patch transformer layers
(ITL) on the tokens, folds once, then runs N spatial-aware layers (SAL) and a
trailing 3x3 convolution inside a unit-level residual. A full forward
therefore performs exactly K unfolds and K folds, which the counters verify.

ITL and SAL are pre-norm residual blocks (norm -> mixer -> add, then
norm -> gated FFN -> add). ITL's mixer is the channel self-attention of
:mod:`ditn.attention`; SAL's mixer gates one channel half by a stack of
dilated depthwise convolutions of the other half, giving a large receptive
field without any further reshaping.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields, replace
from typing import Mapping

import numpy as np

from . import attention as att
from .counters import OpCounters
from .ops import (
    ConvWeights,
    GdfnWeights,
    LAYER_NORM,
    NormParams,
    TANH_CONV,
    conv2d,
    fold_patches,
    gdfn,
    normalize,
    pixel_shuffle,
    split_channels,
    unfold_patches,
)
from .tensor import DimensionError, Tensor

REFERENCE = "reference"
FUSED = "fused"
PATHS = (REFERENCE, FUSED)


class ConfigError(ValueError):
    """Raised for invalid or unknown model configuration inputs."""


@dataclass(frozen=True)
class ModelConfig:
    """All architecture hyperparameters.

    ``ufone_count``/``itl_per_ufone``/``sal_per_ufone`` are the K/M/N unit
    counts; ``patch_size`` is the ITL token patch edge; ``sda_kernel``,
    ``sda_dilation`` and ``sda_depth`` shape the dilated convolution stack;
    ``ffn_expansion`` sets the gated FFN hidden width ``round(e*C)``.
    """

    scale: int = 2
    channels: int = 60
    ufone_count: int = 1
    itl_per_ufone: int = 4
    sal_per_ufone: int = 4
    patch_size: int = 8
    sda_kernel: int = 7
    sda_dilation: int = 3
    sda_depth: int = 3
    norm_mode: str = LAYER_NORM
    ffn_expansion: float = 1.5
    itl_out_conv_kernel: int = 1

    def __post_init__(self):
        if self.scale not in (2, 3, 4):
            raise ConfigError(f"scale must be 2, 3 or 4, got {self.scale}")
        if self.channels < 1 or self.patch_size < 1 or self.ufone_count < 1:
            raise ConfigError("channels, patch_size and ufone_count must be >= 1")
        if self.itl_per_ufone < 0 or self.sal_per_ufone < 0:
            raise ConfigError("layer counts cannot be negative")
        if self.itl_per_ufone + self.sal_per_ufone < 1:
            raise ConfigError("each UFONE needs at least one ITL or SAL")
        if self.sda_kernel % 2 == 0 or self.sda_kernel < 1:
            raise ConfigError(f"sda_kernel must be odd, got {self.sda_kernel}")
        if self.sda_dilation < 1 or self.sda_depth < 1:
            raise ConfigError("sda_dilation and sda_depth must be >= 1")
        if self.norm_mode not in (LAYER_NORM, TANH_CONV):
            raise ConfigError(f"norm_mode must be {LAYER_NORM!r} or {TANH_CONV!r}")
        if self.ffn_expansion <= 0:
            raise ConfigError("ffn_expansion must be positive")
        if self.itl_out_conv_kernel % 2 == 0 or self.itl_out_conv_kernel < 1:
            raise ConfigError("itl_out_conv_kernel must be odd")

    @property
    def ffn_hidden(self) -> int:
        """Gated FFN hidden width, rounded to the nearest integer."""
        return int(round(self.channels * self.ffn_expansion))

    @classmethod
    def ditn(cls, scale: int = 2) -> "ModelConfig":
        """Full model: three UFONE units, layer normalization."""
        return cls(scale=scale, ufone_count=3)

    @classmethod
    def ditn_tiny(cls, scale: int = 2) -> "ModelConfig":
        """Light model: a single UFONE unit, layer normalization."""
        return cls(scale=scale, ufone_count=1)

    @classmethod
    def ditn_real(cls, scale: int = 2) -> "ModelConfig":
        """Deployment model: tiny topology with the tanh+conv norm substitute."""
        return cls(scale=scale, ufone_count=1, norm_mode=TANH_CONV)

    @classmethod
    def preset(cls, name: str, scale: int = 2) -> "ModelConfig":
        presets = {"ditn": cls.ditn, "ditn-tiny": cls.ditn_tiny, "ditn-real": cls.ditn_real}
        key = name.lower()
        if key not in presets:
            raise ConfigError(f"unknown preset {name!r}; expected one of {sorted(presets)}")
        return presets[key](scale)

    def with_overrides(self, overrides: Mapping[str, object]) -> "ModelConfig":
        if not overrides:
            return self
        parsed = {k: _parse_config_value(k, v) for k, v in overrides.items()}
        return replace(self, **parsed)

    @classmethod
    def from_mapping(cls, mapping: Mapping[str, object]) -> "ModelConfig":
        return cls().with_overrides(mapping)

    @classmethod
    def from_file(cls, path) -> "ModelConfig":
        """Parse a ``key = value`` per-line config file; unknown keys are errors."""
        mapping = {}
        with open(path, "r", encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
                key, value = (part.strip() for part in line.split("=", 1))
                if key in mapping:
                    raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
                mapping[key] = value
        return cls.from_mapping(mapping)

    def to_mapping(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}


_CONFIG_FIELDS = {f.name: f.type for f in fields(ModelConfig)}


def _parse_config_value(key: str, value):
    if key not in _CONFIG_FIELDS:
        raise ConfigError(f"unknown config key {key!r}")
    if key == "norm_mode":
        return str(value)
    if key == "ffn_expansion":
        try:
            return float(value)
        except ValueError as exc:
            raise ConfigError(f"config key {key!r}: {value!r} is not a number") from exc
    try:
        return int(str(value), 10)
    except ValueError as exc:
        raise ConfigError(f"config key {key!r}: {value!r} is not an integer") from exc


# ---------------------------------------------------------------------------
# Expected weight shapes and parameter accounting


def _norm_shapes(prefix: str, config: ModelConfig) -> dict[str, tuple[int, ...]]:
    c = config.channels
    if config.norm_mode == LAYER_NORM:
        return {f"{prefix}.gain": (c,), f"{prefix}.bias": (c,)}
    return {f"{prefix}.weight": (c, c), f"{prefix}.bias": (c,)}


def _ffn_shapes(prefix: str, config: ModelConfig) -> dict[str, tuple[int, ...]]:
    c, h = config.channels, config.ffn_hidden
    return {
        f"{prefix}.expand.kernel": (2 * h, c, 1, 1),
        f"{prefix}.expand.bias": (2 * h,),
        f"{prefix}.dw.kernel": (2 * h, 1, 3, 3),
        f"{prefix}.dw.bias": (2 * h,),
        f"{prefix}.project.kernel": (c, h, 1, 1),
        f"{prefix}.project.bias": (c,),
    }


def expected_shapes(config: ModelConfig) -> dict[str, tuple[int, ...]]:
    """Ordered name -> shape map of every tensor the config requires."""
    c = config.channels
    ko = config.itl_out_conv_kernel
    sk = config.sda_kernel
    shapes: dict[str, tuple[int, ...]] = {
        "shallow.kernel": (c, 3, 3, 3),
        "shallow.bias": (c,),
    }
    for u in range(config.ufone_count):
        for m in range(config.itl_per_ufone):
            p = f"ufone.{u}.itl.{m}"
            shapes.update(_norm_shapes(f"{p}.norm1", config))
            shapes[f"{p}.isa.qkv_packed"] = (3 * c, c)
            shapes[f"{p}.isa.qkv_bias"] = (3 * c,)
            shapes[f"{p}.isa.alpha"] = (1,)
            shapes[f"{p}.isa.out.kernel"] = (c, c, ko, ko)
            shapes[f"{p}.isa.out.bias"] = (c,)
            shapes.update(_norm_shapes(f"{p}.norm2", config))
            shapes.update(_ffn_shapes(f"{p}.ffn", config))
        for n in range(config.sal_per_ufone):
            p = f"ufone.{u}.sal.{n}"
            shapes.update(_norm_shapes(f"{p}.norm1", config))
            shapes[f"{p}.sda.in.kernel"] = (2 * c, c, 1, 1)
            shapes[f"{p}.sda.in.bias"] = (2 * c,)
            for d in range(config.sda_depth):
                shapes[f"{p}.sda.dconv.{d}.kernel"] = (c, 1, sk, sk)
                shapes[f"{p}.sda.dconv.{d}.bias"] = (c,)
            shapes[f"{p}.sda.out.kernel"] = (c, c, 1, 1)
            shapes[f"{p}.sda.out.bias"] = (c,)
            shapes.update(_norm_shapes(f"{p}.norm2", config))
            shapes.update(_ffn_shapes(f"{p}.ffn", config))
        shapes[f"ufone.{u}.conv.kernel"] = (c, c, 3, 3)
        shapes[f"ufone.{u}.conv.bias"] = (c,)
    shapes["deep.kernel"] = (c, c, 3, 3)
    shapes["deep.bias"] = (c,)
    shapes["recon.kernel"] = (3 * config.scale ** 2, c, 3, 3)
    shapes["recon.bias"] = (3 * config.scale ** 2,)
    return shapes


def count_params(config: ModelConfig) -> int:
    """Exact element count of every weight tensor, biases and temperatures included."""
    return sum(math.prod(shape) for shape in expected_shapes(config).values())


def count_params_breakdown(config: ModelConfig) -> dict[str, int]:
    """Per-component parameter totals keyed by pipeline stage (shallow, ufone.N, deep, recon)."""
    breakdown: dict[str, int] = {}
    for name, shape in expected_shapes(config).items():
        parts = name.split(".")
        component = f"{parts[0]}.{parts[1]}" if parts[0] == "ufone" else parts[0]
        breakdown[component] = breakdown.get(component, 0) + math.prod(shape)
    return breakdown


# ---------------------------------------------------------------------------
# Weight containers and model building


@dataclass(frozen=True)
class SdaWeights:
    in_conv: ConvWeights
    dconvs: tuple[ConvWeights, ...]
    out_conv: ConvWeights


@dataclass(frozen=True)
class ItlWeights:
    norm1: NormParams
    isa: att.IsaWeights
    norm2: NormParams
    ffn: GdfnWeights


@dataclass(frozen=True)
class SalWeights:
    norm1: NormParams
    sda: SdaWeights
    norm2: NormParams
    ffn: GdfnWeights


@dataclass(frozen=True)
class UfoneWeights:
    itls: tuple[ItlWeights, ...]
    sals: tuple[SalWeights, ...]
    conv: ConvWeights


class Model:
    """A validated, immutable pairing of a config with structured weights."""

    def __init__(self, config: ModelConfig, shallow: ConvWeights,
                 ufones: tuple[UfoneWeights, ...], deep: ConvWeights, recon: ConvWeights):
        self.config = config
        self.shallow = shallow
        self.ufones = ufones
        self.deep = deep
        self.recon = recon

    @classmethod
    def build(cls, config: ModelConfig, store: Mapping[str, np.ndarray]) -> "Model":
        """Assemble a model, validating that the store holds exactly the
        expected tensor names with the expected shapes (``meta.*`` entries
        are configuration metadata and are ignored here)."""
        shapes = expected_shapes(config)
        missing = [name for name in shapes if name not in store]
        if missing:
            raise ConfigError(f"weight store is missing {len(missing)} tensors, first: {missing[0]!r}")
        unexpected = [name for name in store if name not in shapes and not name.startswith("meta.")]
        if unexpected:
            raise ConfigError(f"weight store has unexpected tensors, first: {unexpected[0]!r}")
        for name, shape in shapes.items():
            if tuple(store[name].shape) != shape:
                raise ConfigError(
                    f"tensor {name!r} has shape {tuple(store[name].shape)}, expected {shape}"
                )

        def conv(prefix: str, dilation: int = 1, depthwise: bool = False) -> ConvWeights:
            return ConvWeights(kernel=store[f"{prefix}.kernel"], bias=store[f"{prefix}.bias"],
                               dilation=dilation, depthwise=depthwise)

        def norm(prefix: str) -> NormParams:
            if config.norm_mode == LAYER_NORM:
                return NormParams.layer_norm(store[f"{prefix}.gain"], store[f"{prefix}.bias"])
            return NormParams.tanh_conv(store[f"{prefix}.weight"], store[f"{prefix}.bias"])

        def ffn(prefix: str) -> GdfnWeights:
            return GdfnWeights(
                expand=conv(f"{prefix}.expand"),
                depthwise=conv(f"{prefix}.dw", depthwise=True),
                project=conv(f"{prefix}.project"),
                expansion=config.ffn_expansion,
            )

        ufones = []
        for u in range(config.ufone_count):
            itls = []
            for m in range(config.itl_per_ufone):
                p = f"ufone.{u}.itl.{m}"
                isa = att.IsaWeights(
                    qkv_packed=store[f"{p}.isa.qkv_packed"],
                    qkv_bias=store[f"{p}.isa.qkv_bias"],
                    alpha=float(store[f"{p}.isa.alpha"][0]),
                    out_conv=conv(f"{p}.isa.out"),
                )
                itls.append(ItlWeights(norm(f"{p}.norm1"), isa, norm(f"{p}.norm2"), ffn(f"{p}.ffn")))
            sals = []
            for n in range(config.sal_per_ufone):
                p = f"ufone.{u}.sal.{n}"
                sda = SdaWeights(
                    in_conv=conv(f"{p}.sda.in"),
                    dconvs=tuple(
                        conv(f"{p}.sda.dconv.{d}", dilation=config.sda_dilation, depthwise=True)
                        for d in range(config.sda_depth)
                    ),
                    out_conv=conv(f"{p}.sda.out"),
                )
                sals.append(SalWeights(norm(f"{p}.norm1"), sda, norm(f"{p}.norm2"), ffn(f"{p}.ffn")))
            ufones.append(UfoneWeights(tuple(itls), tuple(sals), conv(f"ufone.{u}.conv")))
        return cls(config, conv("shallow"), tuple(ufones), conv("deep"), conv("recon"))

    def count_params(self) -> int:
        return count_params(self.config)

    def forward(self, img: Tensor, path: str = FUSED, ctr: OpCounters | None = None) -> Tensor:
        return ditn_forward(img, self, path, ctr if ctr is not None else OpCounters())


# ---------------------------------------------------------------------------
# Forward passes


def _check_path(path: str) -> None:
    if path not in PATHS:
        raise ConfigError(f"unknown attention path {path!r}; expected one of {PATHS}")


def itl_forward(tokens: att.PatchBatch, lw: ItlWeights, path: str, ctr: OpCounters) -> att.PatchBatch:
    """Inner-patch transformer layer on ``B x C x P*P`` tokens."""
    _check_path(path)
    p = int(round(tokens.shape[2] ** 0.5))
    attend = att.attend_reference if path == REFERENCE else att.attend_fused
    x = tokens + attend(normalize(tokens, lw.norm1), lw.isa, ctr)
    return gdfn(x, lw.ffn, lw.norm2, (p, p))


def sda_branch(f: Tensor, norm1: NormParams, sda: SdaWeights) -> Tensor:
    """The spatial gate: ``out_conv(DConvs(x1) * x2)`` from the split of
    ``in_conv(normalize(f))``. Exposed separately so its receptive field can
    be probed directly."""
    c, h, w = f.shape
    n = normalize(f.reshape(c, h * w), norm1).reshape(c, h, w)
    x1, x2 = split_channels(conv2d(n, sda.in_conv))
    d = x1
    for dc in sda.dconvs:
        d = conv2d(d, dc)
    return conv2d(d * x2, sda.out_conv)


def sal_forward(f: Tensor, lw: SalWeights, ctr: OpCounters) -> Tensor:
    """Spatial-aware layer on a ``C x H x W`` map; performs no unfold/fold."""
    c, h, w = f.shape
    x = f + sda_branch(f, lw.norm1, lw.sda)
    return gdfn(x.reshape(c, h * w), lw.ffn, lw.norm2, (h, w)).reshape(c, h, w)


def ufone_forward(f: Tensor, uw: UfoneWeights, path: str, ctr: OpCounters, patch_size: int) -> Tensor:
    """One transformer unit: unfold once, M ITLs, fold once, N SALs, trailing
    3x3 conv, all inside a unit-level residual. Skips the unfold/fold pair
    entirely when the unit has no ITLs."""
    _check_path(path)
    c, h, w = f.shape
    x = f
    if uw.itls:
        tokens = unfold_patches(x, patch_size, ctr)
        for lw in uw.itls:
            tokens = itl_forward(tokens, lw, path, ctr)
        x = fold_patches(tokens, h, w, patch_size, ctr)
    for lw in uw.sals:
        x = sal_forward(x, lw, ctr)
    return f + conv2d(x, uw.conv)


def _pad_to_multiple(img: Tensor, p: int) -> Tensor:
    """Edge-inclusive reflection padding on the bottom/right up to multiples of p."""
    _, h, w = img.shape
    ph = (-h) % p
    pw = (-w) % p
    if ph == 0 and pw == 0:
        return img
    return np.pad(img, ((0, 0), (0, ph), (0, pw)), mode="symmetric")


def ditn_forward(img: Tensor, model: Model, path: str, ctr: OpCounters) -> Tensor:
    """Full super-resolution forward: ``3 x H x W`` in [0, 1] to ``3 x sH x sW``.

    Inputs of arbitrary size are reflection-padded up to patch multiples,
    processed, and the output is cropped back to exactly ``s*H x s*W`` before
    the final clamp to [0, 1].
    """
    _check_path(path)
    if img.ndim != 3 or img.shape[0] != 3:
        raise DimensionError(f"expected a 3 x H x W image, got shape {tuple(img.shape)}")
    _, h, w = img.shape
    if h < 1 or w < 1:
        raise DimensionError("image has an empty spatial dimension")
    cfg = model.config
    x = _pad_to_multiple(np.ascontiguousarray(img, dtype=np.float32), cfg.patch_size)
    f_sf = conv2d(x, model.shallow)
    feat = f_sf
    for uw in model.ufones:
        feat = ufone_forward(feat, uw, path, ctr, cfg.patch_size)
    f_df = conv2d(feat, model.deep)
    merged = f_sf + f_df
    up = pixel_shuffle(conv2d(merged, model.recon), cfg.scale)
    out = up[:, : cfg.scale * h, : cfg.scale * w]
    return np.clip(out, 0.0, 1.0).astype(np.float32)


# ---------------------------------------------------------------------------
# FLOP estimation


def estimate_flops_breakdown(config: ModelConfig, out_h: int, out_w: int) -> dict[str, int]:
    """Analytic multiply-accumulate counts per pipeline stage.

    Convention: one multiply-accumulate counts as one FLOP, the usual
    super-resolution reporting convention. Counted ops are convolutions and
    attention matrix products (including the tanh+conv norm's C x C map);
    elementwise work and layer-norm statistics are ignored. The spatial size
    is the low-resolution input after padding to patch multiples, i.e. what
    the engine actually processes.
    """
    if out_h < 1 or out_w < 1:
        raise DimensionError("output size must be positive")
    s = config.scale
    lr_h = -(-out_h // s)
    lr_w = -(-out_w // s)
    p = config.patch_size
    hw = (-(-lr_h // p) * p) * (-(-lr_w // p) * p)
    c = config.channels
    hid = config.ffn_hidden
    ko = config.itl_out_conv_kernel

    norm_macs = c * c if config.norm_mode == TANH_CONV else 0
    ffn_macs = 2 * hid * c + 2 * hid * 9 + hid * c
    itl_macs = 2 * norm_macs + 3 * c * c + 2 * c * c + ko * ko * c * c + ffn_macs
    sal_macs = (2 * norm_macs + 2 * c * c + config.sda_depth * c * config.sda_kernel ** 2
                + c * c + ffn_macs)
    ufone_macs = (config.itl_per_ufone * itl_macs + config.sal_per_ufone * sal_macs + 9 * c * c)

    breakdown = {
        "shallow": 3 * c * 9 * hw,
        "ufones": config.ufone_count * ufone_macs * hw,
        "deep": 9 * c * c * hw,
        "recon": c * 3 * s * s * 9 * hw,
    }
    breakdown["total"] = sum(breakdown.values())
    return breakdown


def estimate_flops(config: ModelConfig, out_h: int, out_w: int) -> int:
    """Total multiply-accumulate estimate for producing an ``out_h x out_w`` output."""
    return estimate_flops_breakdown(config, out_h, out_w)["total"]
