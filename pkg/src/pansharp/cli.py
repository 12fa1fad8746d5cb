"""Command-line interface.

Subcommands: simulate, train, fuse, eval. Options resolve in priority order
flag > config file (--config, key=value lines) > built-in default, and every
command that writes into an output directory drops an `effective_config.txt`
echo of the resolved options there.

Exit codes: 0 success, 2 validation or usage error, 1 unexpected failure.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .baselines import BASELINES, prepare_fusion_input
from .metrics import diff_map, gradient_map, noreference_report, reference_report, sam_map
from .network import FusionConfig
from .raster import RasterImage, export_png8, load_raster, normalize_to_unit, save_raster
from .train import TrainConfig, load_model, train
from .wald import WaldConfig, make_dataset, read_dataset, write_dataset


class CliError(Exception):
    """Validation failure; maps to exit code 2."""


_SIM_DEFAULTS = {
    "r": 4,
    "patch": 64,
    "stride": 0,
    "seed": 0,
    "train_fraction": 0.9,
}

_TRAIN_DEFAULTS = {
    "blocks": 9,
    "channels": 64,
    "spectral_kernel": 3,
    "attention_kernel": 7,
    "ablate": "none",
    "epochs": 350,
    "batch_size": 64,
    "lr0": 1e-4,
    "decay_epoch": 150,
    "decay_factor": 0.1,
    "beta1": 0.7,
    "beta2": 0.99,
    "epsilon": 1e-8,
    "seed": 0,
    "checkpoint_every": 0,
    "max_train_samples": 0,
    "max_val_samples": 0,
}

_FUSE_DEFAULTS = {"r": 4}
_EVAL_DEFAULTS = {"r": 4}


def _read_config_file(path):
    values = {}
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise CliError(f"cannot read config file {path}: {exc}") from None
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise CliError(f"{path}:{lineno}: expected key=value, got {line!r}")
        values[key.strip()] = value.strip()
    return values


def _resolve(args, defaults):
    """flag > config file > default; unknown config keys are rejected."""
    config_values = _read_config_file(args.config) if args.config else {}
    unknown = sorted(set(config_values) - set(defaults))
    if unknown:
        raise CliError(f"unknown config keys: {', '.join(unknown)}")
    out = {}
    for key, default in defaults.items():
        flag_value = getattr(args, key, None)
        if flag_value is not None:
            out[key] = flag_value
        elif key in config_values:
            raw = config_values[key]
            try:
                out[key] = type(default)(raw)
            except ValueError:
                raise CliError(f"config key {key}: cannot parse {raw!r}") from None
        else:
            out[key] = default
    return out


def _echo_config(out_dir, command, options):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    lines = [f"command = {command}"]
    for key in sorted(options):
        lines.append(f"{key} = {options[key]}")
    (out_dir / "effective_config.txt").write_text("\n".join(lines) + "\n", encoding="ascii")


def _load_raster_checked(path, what):
    try:
        return load_raster(path)
    except FileNotFoundError:
        raise CliError(f"{what} raster not found: {path}") from None
    except ValueError as exc:
        raise CliError(str(exc)) from None


def _ensure_unit_range(img):
    """Rasters holding digital numbers are normalized by their bit depth."""
    data = img.data
    if data.max(initial=0.0) > 1.0 + 1e-6 or data.min(initial=0.0) < -1.0 - 1e-6:
        return normalize_to_unit(img)
    return img


def cmd_simulate(args):
    opts = _resolve(args, _SIM_DEFAULTS)
    ms = _load_raster_checked(args.ms, "MS")
    pan = _load_raster_checked(args.pan, "PAN")
    try:
        cfg = WaldConfig(
            r=opts["r"], patch=opts["patch"], stride=opts["stride"],
            train_fraction=opts["train_fraction"], seed=opts["seed"],
        )
        manifest = make_dataset(ms, pan, cfg)
        manifest_path = write_dataset(manifest, args.out)
    except ValueError as exc:
        raise CliError(str(exc)) from None
    _echo_config(args.out, "simulate", opts)
    print(f"wrote {len(manifest.train)} train + {len(manifest.val)} val samples")
    print(f"manifest: {manifest_path}")
    return 0


def cmd_train(args):
    opts = _resolve(args, _TRAIN_DEFAULTS)
    try:
        manifest = read_dataset(args.manifest)
    except (OSError, ValueError, KeyError) as exc:
        raise CliError(f"cannot read manifest {args.manifest}: {exc}") from None
    try:
        net_cfg = FusionConfig(
            blocks=opts["blocks"], channels=opts["channels"],
            spectral_kernel=opts["spectral_kernel"],
            attention_kernel=opts["attention_kernel"],
            scale=manifest.config.r, ablation=opts["ablate"],
        )
        train_cfg = TrainConfig(
            epochs=opts["epochs"], batch_size=opts["batch_size"], lr0=opts["lr0"],
            decay_epoch=opts["decay_epoch"], decay_factor=opts["decay_factor"],
            beta1=opts["beta1"], beta2=opts["beta2"], epsilon=opts["epsilon"],
            seed=opts["seed"], checkpoint_every=opts["checkpoint_every"],
            max_train_samples=opts["max_train_samples"],
            max_val_samples=opts["max_val_samples"],
        )
    except ValueError as exc:
        raise CliError(str(exc)) from None
    _echo_config(args.out, "train", opts)
    try:
        net, history = train(manifest, net_cfg, train_cfg, args.out, resume_from=args.resume)
    except ValueError as exc:
        raise CliError(str(exc)) from None
    last = history[-1] if history else None
    if last is not None:
        print(
            f"trained {len(history)} epochs; final train_l1 {last.train_l1:.6f} "
            f"val_l1 {last.val_l1:.6f}"
        )
    print(f"final checkpoint: {Path(args.out) / 'checkpoint_final.ckpt'}")
    return 0


def cmd_fuse(args):
    opts = _resolve(args, _FUSE_DEFAULTS)
    if (args.checkpoint is None) == (args.baseline is None):
        raise CliError("pick exactly one of --checkpoint or --baseline")
    ms = _ensure_unit_range(_load_raster_checked(args.ms, "MS"))
    pan = _ensure_unit_range(_load_raster_checked(args.pan, "PAN"))
    r = opts["r"]

    if args.baseline is not None:
        if args.baseline not in BASELINES:
            raise CliError(
                f"unknown baseline {args.baseline!r}; choose from {', '.join(sorted(BASELINES))}"
            )
        try:
            inp = prepare_fusion_input(ms, pan, r)
            fused = BASELINES[args.baseline](inp)
        except ValueError as exc:
            raise CliError(str(exc)) from None
        method = args.baseline
    else:
        from .autograd import Tensor, no_grad

        try:
            net, _ = load_model(args.checkpoint)
        except (OSError, ValueError) as exc:
            raise CliError(f"cannot load checkpoint {args.checkpoint}: {exc}") from None
        if net.cfg.scale != r:
            raise CliError(
                f"checkpoint was trained for r = {net.cfg.scale}, requested r = {r}"
            )
        try:
            with no_grad():
                out = net(
                    Tensor(ms.data[None].astype(np.float32)),
                    Tensor(pan.data[None].astype(np.float32)),
                )
        except ValueError as exc:
            raise CliError(str(exc)) from None
        fused = RasterImage(out.data[0], bit_depth=ms.bit_depth, band_names=ms.band_names)
        method = "network"

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    fused_path = out_dir / "fused.raster"
    save_raster(fused, fused_path, dtype="f32")
    _echo_config(out_dir, "fuse", dict(opts, method=method))
    if args.png:
        try:
            export_png8(fused, _parse_band_selection(args.png_bands, fused.bands), args.png)
        except ValueError as exc:
            raise CliError(str(exc)) from None
    print(f"fused ({method}): {fused_path}")
    return 0


def _parse_band_selection(text, n_bands):
    try:
        sel = [int(part) for part in text.split(",")]
    except ValueError:
        raise CliError(f"bad band selection {text!r}; expected comma-separated indices") from None
    for b in sel:
        if not 0 <= b < n_bands:
            raise CliError(f"band index {b} out of range [0, {n_bands})")
    return sel


def cmd_eval(args):
    opts = _resolve(args, _EVAL_DEFAULTS)
    have_ref = args.ref is not None
    have_noref = args.ms is not None or args.pan is not None
    if have_ref == have_noref:
        raise CliError("pick exactly one of --ref REF or --ms MS --pan PAN")
    if have_noref and (args.ms is None or args.pan is None):
        raise CliError("no-reference evaluation needs both --ms and --pan")
    fused = _ensure_unit_range(_load_raster_checked(args.fused, "fused"))
    r = opts["r"]

    try:
        if have_ref:
            ref = _ensure_unit_range(_load_raster_checked(args.ref, "reference"))
            report = reference_report(fused, ref, r)
        else:
            ms = _ensure_unit_range(_load_raster_checked(args.ms, "MS"))
            pan = _ensure_unit_range(_load_raster_checked(args.pan, "PAN"))
            report = noreference_report(fused, ms, pan, r)
    except ValueError as exc:
        raise CliError(str(exc)) from None

    sys.stdout.write(report.to_text())
    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "report.txt").write_text(report.to_text(), encoding="ascii")
        (out_dir / "report.json").write_text(report.to_json(), encoding="ascii")
        _echo_config(out_dir, "eval", opts)
        print(f"report: {out_dir / 'report.json'}")

    if args.maps:
        maps_dir = Path(args.maps)
        maps_dir.mkdir(parents=True, exist_ok=True)
        rasters = {"gradient_fused": gradient_map(fused)}
        if have_ref:
            rasters["sam"] = sam_map(fused, ref)
            rasters["diff"] = diff_map(fused, ref)
            rasters["gradient_ref"] = gradient_map(ref)
        for name, img in rasters.items():
            save_raster(img, maps_dir / f"{name}.raster", dtype="f32")
            export_png8(img, [0], maps_dir / f"{name}.png", stretch="percentile")
        print(f"maps: {maps_dir}")
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="pansharp",
        description="Pan-sharpening toolkit: simulation, training, fusion, evaluation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="build a reduced-resolution training dataset")
    p.add_argument("ms", help="4-band MS raster (digital numbers)")
    p.add_argument("pan", help="1-band PAN raster (digital numbers)")
    p.add_argument("out", help="output dataset directory")
    p.add_argument("--r", type=int, help="resolution ratio (default 4)")
    p.add_argument("--patch", type=int, help="patch size at reference scale (default 64)")
    p.add_argument("--stride", type=int, help="patch stride (default: patch)")
    p.add_argument("--seed", type=int, help="shuffle seed (default 0)")
    p.add_argument("--train-fraction", dest="train_fraction", type=float,
                   help="train split fraction (default 0.9)")
    p.add_argument("--config", help="key=value config file")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("train", help="train the fusion network")
    p.add_argument("manifest", help="manifest.txt from `pansharp simulate`")
    p.add_argument("out", help="output run directory")
    p.add_argument("--B", "--blocks", dest="blocks", type=int,
                   help="expert block count (default 9)")
    p.add_argument("--channels", type=int, help="feature channels (default 64)")
    p.add_argument("--spectral-kernel", dest="spectral_kernel", type=int,
                   help="channel-attention 1-D kernel size (default 3)")
    p.add_argument("--attention-kernel", dest="attention_kernel", type=int,
                   help="spatial-attention kernel size (default 7)")
    p.add_argument("--ablate", help="none | no-rsab | no-rmsab | disconnect=i,j,...")
    p.add_argument("--epochs", type=int, help="training epochs (default 350)")
    p.add_argument("--batch-size", dest="batch_size", type=int, help="batch size (default 64)")
    p.add_argument("--lr", dest="lr0", type=float, help="initial learning rate (default 1e-4)")
    p.add_argument("--decay-epoch", dest="decay_epoch", type=int,
                   help="epoch of the single lr decay (default 150)")
    p.add_argument("--decay-factor", dest="decay_factor", type=float,
                   help="lr decay factor (default 0.1)")
    p.add_argument("--beta1", type=float, help="Adam beta1 (default 0.7)")
    p.add_argument("--beta2", type=float, help="Adam beta2 (default 0.99)")
    p.add_argument("--epsilon", type=float, help="Adam epsilon (default 1e-8)")
    p.add_argument("--seed", type=int, help="training seed (default 0)")
    p.add_argument("--checkpoint-every", dest="checkpoint_every", type=int,
                   help="save a checkpoint every N epochs (default: final only)")
    p.add_argument("--max-train-samples", dest="max_train_samples", type=int,
                   help="cap on training samples (default: all)")
    p.add_argument("--max-val-samples", dest="max_val_samples", type=int,
                   help="cap on validation samples (default: all)")
    p.add_argument("--resume", help="checkpoint to resume from")
    p.add_argument("--config", help="key=value config file")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("fuse", help="pan-sharpen one MS/PAN pair")
    p.add_argument("ms", help="4-band MS raster")
    p.add_argument("pan", help="1-band PAN raster")
    p.add_argument("out", help="output directory")
    p.add_argument("--checkpoint", help="trained model checkpoint")
    p.add_argument("--baseline", help="ihs | pca | gs | mtf-glp-hpm")
    p.add_argument("--r", type=int, help="resolution ratio (default 4)")
    p.add_argument("--png", help="also export an 8-bit preview PNG to this path")
    p.add_argument("--png-bands", dest="png_bands", default="1,2,3",
                   help="bands for the preview (default 1,2,3 = R,G,B)")
    p.add_argument("--config", help="key=value config file")
    p.set_defaults(func=cmd_fuse)

    p = sub.add_parser("eval", help="score a fused image")
    p.add_argument("fused", help="fused 4-band raster")
    p.add_argument("--ref", help="reference MS raster (reference evaluation)")
    p.add_argument("--ms", help="original low-resolution MS raster (no-reference)")
    p.add_argument("--pan", help="original PAN raster (no-reference)")
    p.add_argument("--r", type=int, help="resolution ratio (default 4)")
    p.add_argument("--out", help="directory for report.txt / report.json")
    p.add_argument("--maps", help="directory for diagnostic maps")
    p.add_argument("--config", help="key=value config file")
    p.set_defaults(func=cmd_eval)

    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:   # unexpected
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
