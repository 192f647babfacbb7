"""Command-line surface.

Subcommands: ``upscale`` (run the network on a PNG), ``verify`` (fused vs
reference equivalence and structural self-checks), ``bench`` (wall time and
operator counters for both attention paths), ``eval`` (PSNR/SSIM over a
directory of image pairs), ``params`` (parameter and FLOP reports), and
``init-weights`` (seeded weight file generation).

Exit codes are a stable contract: 0 success, 1 verification failure, 2 usage
or I/O error. Reports are dual-emitted: a human-readable summary plus
machine-readable ``key = value`` lines.
"""

from __future__ import annotations

import argparse
import statistics
import sys
import time
from pathlib import Path

import numpy as np

from . import attention as att
from .counters import OpCounters
from .image_io import UnsupportedImageError, load_image, save_image, to_float, to_u8
from .metrics import EvalResult, psnr_y, ssim_y
from .model import (
    FUSED,
    REFERENCE,
    ConfigError,
    Model,
    ModelConfig,
    count_params,
    count_params_breakdown,
    ditn_forward,
    estimate_flops_breakdown,
)
from .ops import ConvWeights, conv2d, fold_patches, unfold_patches
from .resize import bicubic_resize
from .tensor import DimensionError
from .weights import WeightFormatError, embed_config, extract_config, load_weights, random_init, save_weights

EXIT_OK = 0
EXIT_VERIFY_FAILED = 1
EXIT_USAGE = 2


class CliError(Exception):
    """User-facing failure; message printed to stderr, exit code 2."""


def _parse_size(text: str, flag: str) -> tuple[int, int]:
    try:
        first, second = text.lower().split("x")
        a, b = int(first), int(second)
    except ValueError as exc:
        raise CliError(f"{flag} expects <int>x<int>, got {text!r}") from exc
    if a < 1 or b < 1:
        raise CliError(f"{flag} dimensions must be positive, got {text!r}")
    return a, b


def _config_from_args(args) -> ModelConfig:
    if getattr(args, "config", None):
        cfg = ModelConfig.from_file(args.config)
    else:
        cfg = ModelConfig.preset(args.preset)
    overrides = {}
    for item in getattr(args, "set", None) or []:
        if "=" not in item:
            raise CliError(f"--set expects key=value, got {item!r}")
        key, value = (part.strip() for part in item.split("=", 1))
        overrides[key] = value
    if getattr(args, "scale", None) is not None:
        overrides["scale"] = args.scale
    return cfg.with_overrides(overrides)


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--preset", default="ditn-tiny",
                        help="model preset: ditn, ditn-tiny, or ditn-real (default ditn-tiny)")
    parser.add_argument("--config", help="key = value config file (overrides --preset)")
    parser.add_argument("--set", action="append", metavar="KEY=VALUE",
                        help="override a single config field (repeatable)")


def _load_model(weights_path: str, expect_scale: int | None) -> tuple[Model, ModelConfig]:
    path = Path(weights_path)
    if not path.exists():
        raise CliError(f"weight file not found: {path}")
    try:
        store = load_weights(path)
    except WeightFormatError as exc:
        raise CliError(f"{path}: {exc}") from exc
    cfg = extract_config(store)
    if cfg is None:
        raise CliError(f"{path}: weight file has no embedded config; regenerate it with init-weights")
    if expect_scale is not None and cfg.scale != expect_scale:
        raise CliError(f"{path}: weights are for scale {cfg.scale}, but --scale {expect_scale} was requested")
    try:
        return Model.build(cfg, store), cfg
    except ConfigError as exc:
        raise CliError(f"{path}: {exc}") from exc


# ---------------------------------------------------------------------------
# upscale


def _cmd_upscale(args) -> int:
    model, _ = _load_model(args.weights, args.scale)
    img = load_image(args.input)
    ctr = OpCounters()
    sr = ditn_forward(to_float(img), model, args.path, ctr)
    save_image(to_u8(sr), args.output)
    for line in ctr.summary_lines():
        print(line, file=sys.stderr)
    return EXIT_OK


# ---------------------------------------------------------------------------
# verify


def _random_isa_weights(rng: np.random.Generator, c: int) -> att.IsaWeights:
    a = np.sqrt(1.0 / c)
    return att.IsaWeights(
        qkv_packed=rng.uniform(-a, a, size=(3 * c, c)).astype(np.float32),
        qkv_bias=rng.uniform(-0.1, 0.1, size=(3 * c,)).astype(np.float32),
        alpha=float(rng.uniform(0.5, 2.0)),
        out_conv=ConvWeights(
            kernel=rng.uniform(-a, a, size=(c, c, 1, 1)).astype(np.float32),
            bias=np.zeros(c, dtype=np.float32),
        ),
    )


def _verify_attention(seed: int, trials: int, inject_fault: bool) -> tuple[float, float]:
    max_isa = 0.0
    max_qkv = 0.0
    for t in range(trials):
        rng = np.random.default_rng(seed * 100003 + t)
        b = int(rng.integers(1, 17))
        c = int(rng.choice([1, 2, 8, 60]))
        p = int(rng.choice([1, 2, 4, 8]))
        w = _random_isa_weights(rng, c)
        tokens = rng.standard_normal((b, c, p * p)).astype(np.float32)
        ref = att.isa_reference(tokens, w, OpCounters())
        fused = att.isa_fused(tokens, w, OpCounters())
        if inject_fault and t == 0:
            fused = fused.copy()
            fused[0, 0, 0] += np.float32(1e-3)
        max_isa = max(max_isa, float(np.max(np.abs(ref - fused))))
        q_r = att.qkv_project_reference(tokens, w, OpCounters())
        q_f = att.qkv_project_fused(tokens, w, OpCounters())
        for a_side, b_side in zip(q_r, q_f):
            max_qkv = max(max_qkv, float(np.max(np.abs(a_side - b_side))))
    return max_isa, max_qkv


def _verify_roundtrips(seed: int, trials: int) -> bool:
    rng = np.random.default_rng(seed + 777)
    for _ in range(trials):
        c = int(rng.integers(1, 8))
        p = int(rng.choice([1, 2, 4, 8]))
        h = p * int(rng.integers(1, 6))
        w = p * int(rng.integers(1, 6))
        f = rng.standard_normal((c, h, w)).astype(np.float32)
        back = fold_patches(unfold_patches(f, p), h, w, p)
        if not np.array_equal(back, f):
            return False
    return True


def _dilated_stack_support(kernel: int, dilation: int, depth: int) -> bool:
    """Impulse through ``depth`` stacked dilated depthwise convs must land
    exactly on the dilation lattice within the predicted footprint."""
    reach = depth * dilation * (kernel - 1) // 2
    size = 2 * reach + 7
    center = size // 2
    x = np.zeros((1, size, size), dtype=np.float32)
    x[0, center, center] = 1.0
    w = ConvWeights(kernel=np.ones((1, 1, kernel, kernel), dtype=np.float32),
                    bias=np.zeros(1, dtype=np.float32), dilation=dilation, depthwise=True)
    for _ in range(depth):
        x = conv2d(x, w)
    offsets = np.arange(size) - center
    on_lattice = (np.abs(offsets) <= reach) & (offsets % dilation == 0)
    expected = on_lattice[:, None] & on_lattice[None, :]
    return bool(np.array_equal(x[0] != 0, expected))


def _cmd_verify(args) -> int:
    if args.trials < 1:
        raise CliError(f"--trials must be at least 1, got {args.trials}")
    max_isa, max_qkv = _verify_attention(args.seed, args.trials, args.inject_fault)
    roundtrips_ok = _verify_roundtrips(args.seed, args.trials)
    support_ok = _dilated_stack_support(kernel=7, dilation=3, depth=3)

    isa_ok = max_isa <= 1e-5
    qkv_ok = max_qkv <= 1e-6
    print(f"verify.attention_max_abs_diff = {max_isa:.3e}")
    print(f"verify.qkv_max_abs_diff = {max_qkv:.3e}")
    print(f"verify.attention_equivalence = {'pass' if isa_ok and qkv_ok else 'FAIL'}")
    print(f"verify.fold_unfold_roundtrip = {'pass' if roundtrips_ok else 'FAIL'}")
    print(f"verify.dilated_receptive_field = {'pass' if support_ok else 'FAIL'}")
    ok = isa_ok and qkv_ok and roundtrips_ok and support_ok
    print(f"verify.result = {'pass' if ok else 'FAIL'}")
    return EXIT_OK if ok else EXIT_VERIFY_FAILED


# ---------------------------------------------------------------------------
# bench


def _cmd_bench(args) -> int:
    if args.repeats < 1:
        raise CliError(f"--repeats must be at least 1, got {args.repeats}")
    cfg = _config_from_args(args)
    h, w = _parse_size(args.size, "--size")
    store = random_init(cfg, args.seed)
    model = Model.build(cfg, store)
    rng = np.random.default_rng(args.seed)
    img = rng.uniform(0.0, 1.0, size=(3, h, w)).astype(np.float32)

    paths = [REFERENCE, FUSED] if args.path == "both" else [args.path]
    counters: dict[str, OpCounters] = {}
    for path in (REFERENCE, FUSED):
        ctr = OpCounters()
        ditn_forward(img, model, path, ctr)
        counters[path] = ctr
    for path in paths:
        times = []
        for _ in range(args.repeats):
            start = time.perf_counter()
            ditn_forward(img, model, path, OpCounters())
            times.append(time.perf_counter() - start)
        print(f"bench.{path}.median_wall_seconds = {statistics.median(times):.4f}")
        for line in counters[path].summary_lines(prefix=f"bench.{path}"):
            print(line)

    ref_scratch = counters[REFERENCE].peak_scratch_bytes
    fused_scratch = counters[FUSED].peak_scratch_bytes
    print(f"bench.scratch_ratio = {fused_scratch / ref_scratch if ref_scratch else 1.0:.4f}")
    if fused_scratch > ref_scratch:
        print("bench.result = FAIL (fused scratch exceeds reference)", file=sys.stderr)
        return EXIT_VERIFY_FAILED
    print("bench.result = pass")
    return EXIT_OK


# ---------------------------------------------------------------------------
# eval


def _modcrop(img: np.ndarray, s: int) -> np.ndarray:
    h = img.shape[0] - img.shape[0] % s
    w = img.shape[1] - img.shape[1] % s
    return img[:h, :w]


def _matched_pngs(lr_dir: Path | None, hr_dir: Path) -> list[tuple[str, Path | None, Path]]:
    if not hr_dir.is_dir():
        raise CliError(f"--hr directory not found: {hr_dir}")
    hr_files = {p.name: p for p in sorted(hr_dir.glob("*.png"))}
    if not hr_files:
        raise CliError(f"no PNG files in {hr_dir}")
    if lr_dir is None:
        return [(name, None, path) for name, path in hr_files.items()]
    if not lr_dir.is_dir():
        raise CliError(f"--lr directory not found: {lr_dir}")
    lr_files = {p.name: p for p in sorted(lr_dir.glob("*.png"))}
    lr_only = sorted(set(lr_files) - set(hr_files))
    hr_only = sorted(set(hr_files) - set(lr_files))
    if lr_only or hr_only:
        raise CliError(
            "LR/HR file sets do not match; "
            f"LR-only: {lr_only or 'none'}, HR-only: {hr_only or 'none'}"
        )
    return [(name, lr_files[name], hr_files[name]) for name in sorted(hr_files)]


def evaluate_pairs(pairs, scale: int, method: str, model: Model | None, path: str) -> EvalResult:
    per_image = []
    for name, lr_path, hr_path in pairs:
        hr = _modcrop(load_image(hr_path), scale)
        hr_h, hr_w = hr.shape[0], hr.shape[1]
        if lr_path is None:
            lr_float = bicubic_resize(to_float(hr), hr_h // scale, hr_w // scale)
            lr = to_u8(lr_float)
        else:
            lr = load_image(lr_path)
        if method == "bicubic":
            sr = to_u8(bicubic_resize(to_float(lr), hr_h, hr_w))
        else:
            sr = to_u8(ditn_forward(to_float(lr), model, path, OpCounters()))
        if sr.shape != hr.shape:
            raise CliError(
                f"{name}: output {sr.shape[1]}x{sr.shape[0]} does not match HR {hr_w}x{hr_h}; "
                "check --scale against the LR images"
            )
        per_image.append((name, psnr_y(sr, hr, crop=scale), ssim_y(sr, hr, crop=scale)))
    mean_psnr = float(np.mean([p for _, p, _ in per_image]))
    mean_ssim = float(np.mean([s for _, _, s in per_image]))
    return EvalResult(psnr_db=mean_psnr, ssim=mean_ssim, n_images=len(per_image), per_image=per_image)


def _cmd_eval(args) -> int:
    model = None
    if args.method == "network":
        if not args.weights:
            raise CliError("--weights is required for --method network")
        if args.lr is None:
            raise CliError("--lr is required for --method network")
        model, _ = _load_model(args.weights, args.scale)
    pairs = _matched_pngs(Path(args.lr) if args.lr else None, Path(args.hr))
    result = evaluate_pairs(pairs, args.scale, args.method, model, args.path)
    for name, p, s in result.per_image:
        print(f"{name}: psnr={p:.4f} dB ssim={s:.6f}")
    print(f"average over {result.n_images} images: psnr={result.psnr_db:.4f} dB ssim={result.ssim:.6f}")
    for line in result.summary_lines():
        print(line)
    return EXIT_OK


# ---------------------------------------------------------------------------
# params / init-weights


def _cmd_params(args) -> int:
    cfg = _config_from_args(args)
    breakdown = count_params_breakdown(cfg)
    total = count_params(cfg)
    print(f"model: scale x{cfg.scale}, {cfg.ufone_count} UFONE(s), "
          f"M={cfg.itl_per_ufone}, N={cfg.sal_per_ufone}, C={cfg.channels}, norm={cfg.norm_mode}")
    for component, count in breakdown.items():
        print(f"param.{component} = {count}")
    print(f"param.total = {total}")
    print(f"param.total_millions = {total / 1e6:.4f}")
    if args.out_size:
        out_w, out_h = _parse_size(args.out_size, "--out-size")
        flops = estimate_flops_breakdown(cfg, out_h, out_w)
        for component, count in flops.items():
            print(f"flops.{component} = {count}")
        print(f"flops.total_giga = {flops['total'] / 1e9:.3f}")
        print("flops.convention = multiply-accumulates counted once, convolutions and "
              "attention products only, at the padded low-resolution input size")
    return EXIT_OK


def _cmd_init_weights(args) -> int:
    cfg = _config_from_args(args)
    store = random_init(cfg, args.seed)
    embed_config(store, cfg)
    save_weights(store, args.output)
    print(f"wrote {args.output}: {len(store)} tensors, {count_params(cfg)} parameters, "
          f"crc32 = {store.crc32():#010x}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ditn", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("upscale", help="super-resolve a PNG")
    p.add_argument("--weights", required=True, help="DITNW1 weight file with embedded config")
    p.add_argument("--scale", type=int, required=True, choices=(2, 3, 4))
    p.add_argument("--path", choices=(REFERENCE, FUSED), default=FUSED)
    p.add_argument("input", help="input PNG")
    p.add_argument("output", help="output PNG")
    p.set_defaults(func=_cmd_upscale)

    p = sub.add_parser("verify", help="run fused-vs-reference and structural self-checks")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trials", type=int, default=20)
    p.add_argument("--inject-fault", action="store_true", help=argparse.SUPPRESS)
    p.set_defaults(func=_cmd_verify)

    p = sub.add_parser("bench", help="time a forward pass and report operator counters")
    p.add_argument("--size", default="64x64", help="input size as HxW (default 64x64)")
    p.add_argument("--scale", type=int, choices=(2, 3, 4))
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--path", choices=(REFERENCE, FUSED, "both"), default="both")
    p.add_argument("--seed", type=int, default=0)
    _add_config_flags(p)
    p.set_defaults(func=_cmd_bench)

    p = sub.add_parser("eval", help="average PSNR/SSIM over matched image pairs")
    p.add_argument("--lr", help="directory of low-resolution PNGs (matched by filename)")
    p.add_argument("--hr", required=True, help="directory of high-resolution PNGs")
    p.add_argument("--weights", help="weight file (network method)")
    p.add_argument("--scale", type=int, required=True, choices=(1, 2, 3, 4))
    p.add_argument("--method", choices=("network", "bicubic"), default="network")
    p.add_argument("--path", choices=(REFERENCE, FUSED), default=FUSED)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("params", help="report parameter counts and optional FLOP estimate")
    p.add_argument("--scale", type=int, choices=(2, 3, 4))
    p.add_argument("--out-size", help="output size as WxH for the FLOP estimate")
    _add_config_flags(p)
    p.set_defaults(func=_cmd_params)

    p = sub.add_parser("init-weights", help="write a seeded random weight file")
    p.add_argument("--scale", type=int, choices=(2, 3, 4))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("output", help="output .ditnw path")
    _add_config_flags(p)
    p.set_defaults(func=_cmd_init_weights)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    try:
        return args.func(args)
    except (CliError, ConfigError, WeightFormatError, UnsupportedImageError,
            DimensionError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def entry() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entry()
