"""Command-line entry point: ``afvit <subcommand> [flags]``.

Exit status is 0 on success, 1 when a check fails (``selftest`` or a
``--max-error`` / ``--min-consistency`` threshold) and 2 on usage errors,
including unreadable config or weight files.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import math
import sys
from pathlib import Path

from ..layers import GELU_FIT_CUBIC, GELU_FIT_QUADRATIC, ActivationSpec
from ..model import (
    FORMAT_VERSION,
    VARIANTS,
    ModelConfig,
    init_weights,
    load_weights,
    param_shapes,
    read_manifest,
    save_weights,
)
from .evaluate import adversarial_eval, consistency_eval, equivariance_probe
from .selftest import run_selftest
from .shifts import (
    DEFAULT_BILINEAR_DIVISOR,
    GRID_KINDS,
    GridSpec,
    grid_sampler,
    grid_shifts,
    synth_image,
    synth_source,
)

PROBE_COLUMNS = ("image_seed", "shift_dy", "shift_dx", "kind", "layer", "rel_error")
CONSISTENCY_COLUMNS = ("image_seed", "base_pred", "consistent", "max_dev")


class UsageError(Exception):
    pass


def _build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="JSON file mirroring ModelConfig")
    common.add_argument("--weights", type=Path, help="weight manifest written by 'init'")
    common.add_argument("--seed", type=int, default=0, help="weight-init and sampler seed")
    common.add_argument("--variant", choices=VARIANTS)
    common.add_argument("--activation", choices=("gelu", "poly"))
    common.add_argument("--out", type=Path, help="output path; .json for JSON, anything else CSV (default stdout CSV)")

    evals = argparse.ArgumentParser(add_help=False)
    evals.add_argument("--images", type=int, default=4, help="number of synthetic images")
    evals.add_argument("--image-seed", type=int, default=1, help="seed of the first image")
    evals.add_argument("--grid", choices=GRID_KINDS, default="half")
    evals.add_argument("--radius", type=int, default=None)

    family = argparse.ArgumentParser(add_help=False)
    family.add_argument("--shift-kind", choices=("cyclic", "crop", "bilinear"), default="cyclic")
    family.add_argument("--divisor", type=int, default=DEFAULT_BILINEAR_DIVISOR, help="bilinear offset divisor")
    family.add_argument("--min-consistency", type=float, help="exit 1 if worst-case consistency falls below this")

    p = argparse.ArgumentParser(prog="afvit", description="Alias-free ViT building blocks and shift-robustness harness.")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("selftest", help="run the fast oracle suite")
    probe = sub.add_parser("probe", parents=[common, evals], help="per-layer equivariance errors over grid shifts")
    probe.add_argument("--max-error", type=float, help="exit 1 if any layer error exceeds this")
    cons = sub.add_parser("consistency", parents=[common, evals, family], help="random-shift prediction consistency")
    cons.add_argument("--trials", type=int, default=5)
    sub.add_parser("adversarial", parents=[common, evals, family], help="worst-case consistency over a full grid")
    sub.add_parser("init", parents=[common], help="write deterministic initial weights")
    sub.add_parser("info", parents=[common], help="print the resolved config")
    return p


# --------------------------------------------------------------------------
# config and weights


def _activation_overrides(kind: str) -> dict:
    if kind == "poly":
        return dict(activation=ActivationSpec.poly(GELU_FIT_QUADRATIC), pe_activation=ActivationSpec.poly(GELU_FIT_CUBIC))
    return dict(activation=ActivationSpec.gelu(), pe_activation=None)


def _resolve_config(args) -> ModelConfig:
    if args.config is not None:
        data = json.loads(args.config.read_text())
        try:
            cfg = ModelConfig.from_dict(data)
        except (KeyError, TypeError) as e:
            raise UsageError(f"bad config {args.config}: {e}") from e
    elif args.weights is not None and read_manifest(args.weights).get("config"):
        cfg = ModelConfig.from_dict(read_manifest(args.weights)["config"])
    else:
        cfg = ModelConfig.desk(args.activation or "gelu", args.variant or "aft")
    changes = {}
    if args.variant is not None:
        changes["variant"] = args.variant
    if args.activation is not None:
        changes.update(_activation_overrides(args.activation))
    return dataclasses.replace(cfg, **changes) if changes else cfg


def _resolve_weights(args, cfg: ModelConfig) -> dict:
    if args.weights is not None:
        return load_weights(args.weights)
    return init_weights(cfg, args.seed)


def _image_seeds(args) -> list:
    if args.images < 1:
        raise UsageError("--images must be >= 1")
    return [args.image_seed + i for i in range(args.images)]


def _grid(args, default_radius: int) -> GridSpec:
    return GridSpec(args.grid, default_radius if args.radius is None else args.radius)


# --------------------------------------------------------------------------
# output


def _fmt(v) -> str:
    return repr(float(v)) if isinstance(v, float) else str(v)


def _write(args, header: list, columns, rows, payload: dict):
    if args.out is not None and args.out.suffix == ".json":
        args.out.write_text(json.dumps(payload, indent=1, sort_keys=True) + "\n")
        return
    buf = io.StringIO()
    for line in header:
        buf.write(f"# {line}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    if args.out is None:
        sys.stdout.write(buf.getvalue())
    else:
        args.out.write_text(buf.getvalue())


def _header(cfg: ModelConfig, extra: str) -> list:
    return [f"format_version={FORMAT_VERSION}", f"variant={cfg.variant} activation={cfg.activation.kind}", extra]


# --------------------------------------------------------------------------
# subcommands


def cmd_selftest(args) -> int:
    failed = 0
    for name, ok, measured, tol in run_selftest():
        print(f"{'PASS' if ok else 'FAIL'} {name}: {measured:.3e} (tol {tol:.0e})")
        failed += not ok
    return 1 if failed else 0


def cmd_probe(args) -> int:
    cfg = _resolve_config(args)
    weights = _resolve_weights(args, cfg)
    shifts = [s for s in grid_shifts(_grid(args, 1)) if (s.dy, s.dx) != (0.0, 0.0)]
    if not shifts:
        raise UsageError("probe needs a grid radius >= 1")
    rows, reports = [], []
    for seed in _image_seeds(args):
        img = synth_image(seed, cfg.image_size, cfg.in_channels)
        for spec in shifts:
            rep = equivariance_probe(cfg, weights, img, spec)
            reports.append({"image_seed": seed, **rep.as_dict()})
            rows += [(seed, rep.dy, rep.dx, rep.kind, name, err) for name, err in rep.layers]
            rows.append((seed, rep.dy, rep.dx, rep.kind, "logits", rep.logit_deviation))
    header = _header(cfg, "rel_error = ||f(shift x) - shift f(x)|| / max(||f(x)||, 1e-12); 'logits' rows compare logits directly")
    _write(args, header, PROBE_COLUMNS, rows, {"format_version": FORMAT_VERSION, "config": cfg.to_dict(), "probes": reports})
    if args.max_error is not None and max(r[-1] for r in rows) > args.max_error:
        print(f"max layer error exceeds {args.max_error}", file=sys.stderr)
        return 1
    return 0


def _family_images(args, cfg: ModelConfig, grid: GridSpec):
    seeds = _image_seeds(args)
    if args.shift_kind == "cyclic":
        return seeds, [synth_image(s, cfg.image_size, cfg.in_channels) for s in seeds]
    margin = grid_shifts(grid, args.shift_kind, args.divisor)[0].margin
    return seeds, [synth_source(s, cfg.image_size, margin, cfg.in_channels) for s in seeds]


def _family_label(args, grid: GridSpec) -> str:
    r = grid.radius
    if args.shift_kind == "crop":
        return f"crop offsets (i, j), |i|, |j| <= {r}"
    if args.shift_kind == "bilinear":
        return f"bilinear offsets (i/{args.divisor}, j/{args.divisor}), |i|, |j| <= {r}"
    return f"cyclic {args.grid} grid, radius {r}"


def _emit_consistency(args, cfg: ModelConfig, report, label: str) -> int:
    rows = zip(report.image_ids, report.base_preds, report.per_image_consistency, report.per_image_max_deviation())
    s = report.summary()
    header = _header(cfg, report.note) + [
        label,
        f"consistency={s['consistency']!r} worst_case_consistency={s['worst_case_consistency']!r}",
    ]
    payload = dict(s, config=cfg.to_dict(), shifts=label, **{"per_image": report.as_dict()["per_image"]})
    _write(args, header, CONSISTENCY_COLUMNS, list(rows), payload)
    if args.min_consistency is not None and report.worst_case_consistency < args.min_consistency:
        print(f"worst-case consistency {report.worst_case_consistency} < {args.min_consistency}", file=sys.stderr)
        return 1
    return 0


def cmd_consistency(args) -> int:
    if args.trials < 1:
        raise UsageError("--trials must be >= 1")
    cfg = _resolve_config(args)
    weights = _resolve_weights(args, cfg)
    grid = _grid(args, 6)
    seeds, images = _family_images(args, cfg, grid)
    sampler = grid_sampler(grid, args.shift_kind, args.divisor)
    report = consistency_eval(cfg, weights, images, sampler, args.trials, seed=args.seed, image_ids=seeds)
    label = f"sampler=uniform over {_family_label(args, grid)}, trials={args.trials}"
    return _emit_consistency(args, cfg, report, label)


def cmd_adversarial(args) -> int:
    cfg = _resolve_config(args)
    weights = _resolve_weights(args, cfg)
    grid = _grid(args, 6)
    seeds, images = _family_images(args, cfg, grid)
    report = adversarial_eval(cfg, weights, images, grid, args.shift_kind, args.divisor, image_ids=seeds)
    label = f"{_family_label(args, grid)}, {len(grid)} shifts; consistent = per-image fraction of shifts preserving the prediction"
    return _emit_consistency(args, cfg, report, label)


def cmd_init(args) -> int:
    if args.out is None:
        raise UsageError("init needs --out")
    cfg = _resolve_config(args)
    path = save_weights(init_weights(cfg, args.seed), args.out, cfg)
    print(path)
    return 0


def cmd_info(args) -> int:
    cfg = _resolve_config(args)
    shapes = param_shapes(cfg)
    info = {
        "format_version": FORMAT_VERSION,
        "config": cfg.to_dict(),
        "tokens": cfg.num_tokens,
        "stem_channels": list(cfg.stage_channels),
        "parameters": sum(math.prod(s) for s in shapes.values()),
    }
    text = json.dumps(info, indent=1, sort_keys=True) + "\n"
    if args.out is not None:
        args.out.write_text(text)
    else:
        sys.stdout.write(text)
    return 0


COMMANDS = {
    "selftest": cmd_selftest,
    "probe": cmd_probe,
    "consistency": cmd_consistency,
    "adversarial": cmd_adversarial,
    "init": cmd_init,
    "info": cmd_info,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        return COMMANDS[args.command](args)
    except (UsageError, ValueError, OSError) as e:
        # ShapeError and WeightFormatError are ValueErrors
        print(f"afvit {args.command}: error: {e}", file=sys.stderr)
        return 2


def main_exit():
    sys.exit(main())


if __name__ == "__main__":
    main_exit()
