"""Command-line surface: train, register, saliency, benchmark, synth.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical degeneracy.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from .errors import DataFormatError, DegenerateGeometryError
from .evaluation import (
    NoiseSpec,
    SWEEP_METHODS,
    TransformSpec,
    histogram,
    run_sweep,
)
from .features import train_feature_extractor
from .geometry import invert, rotation_to_euler
from .io import (
    CLOUD_FORMATS,
    RunConfig,
    load_cloud,
    load_model,
    load_run_config,
    save_model,
    write_cloud,
    write_histogram_csv,
    write_registration_csv,
    write_report_csv,
    write_saliency_csv,
)
from .registration import register_icp, register_spa
from .saliency import local_curvature_energies, select_salient_points
from .shapes import SHAPE_KINDS, generate_shape

__all__ = ["main", "cli_main"]

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_DEGENERATE = 3

_CLOUD_SUFFIXES = (".xyz", ".txt", ".ply", ".off", ".csv")


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on usage problems; the contract here is exit 1."""

    def error(self, message):
        raise _UsageError(f"{self.prog}: {message}")


def _build_parser() -> _Parser:
    parser = _Parser(prog="spa", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train a feature extractor on a cloud directory")
    p_train.add_argument("--data", required=True, help="directory of cloud files")
    p_train.add_argument("--config", help="run-config file (key = value lines)")
    p_train.add_argument("--out", required=True, help="output model path")

    p_reg = sub.add_parser("register", help="align a source cloud onto a target cloud")
    p_reg.add_argument("--model", help="trained model (required for --method spa)")
    p_reg.add_argument("--target", required=True)
    p_reg.add_argument("--source", required=True)
    p_reg.add_argument("--method", choices=["spa", "icp"], default="spa")
    p_reg.add_argument("--iters", type=int, default=None, help="iteration cap")
    p_reg.add_argument("--salient", type=int, default=None, help="salient points per side")
    p_reg.add_argument("--config", help="run-config file")
    p_reg.add_argument("--out", required=True, help="output csv path")

    p_sal = sub.add_parser("saliency", help="emit selected salient points as csv")
    p_sal.add_argument("--model", help="model supplying the neighborhood size")
    p_sal.add_argument("--cloud", required=True)
    p_sal.add_argument("--salient", type=int, default=None)
    p_sal.add_argument("--config", help="run-config file")
    p_sal.add_argument("--out", required=True)

    p_bench = sub.add_parser("benchmark", help="angle-sweep benchmark over a cloud directory")
    p_bench.add_argument("--model", help="trained model (required for spa methods)")
    p_bench.add_argument("--data", required=True)
    p_bench.add_argument("--angles", required=True, help="start:stop:step, stop inclusive")
    p_bench.add_argument("--noise-var", type=float, default=None)
    p_bench.add_argument("--seed", type=int, default=None)
    p_bench.add_argument("--methods", default="spa",
                         help=f"comma list from {','.join(SWEEP_METHODS)}")
    p_bench.add_argument("--config", help="run-config file")
    p_bench.add_argument("--out", required=True)
    p_bench.add_argument("--hist-out", help="histogram csv for the first method, all angles")
    p_bench.add_argument("--hist-bin-width", type=float, default=1.0)

    p_synth = sub.add_parser("synth", help="generate a synthetic shape cloud file")
    p_synth.add_argument("--kind", required=True, choices=list(SHAPE_KINDS))
    p_synth.add_argument("--n", required=True, type=int)
    p_synth.add_argument("--seed", required=True, type=int)
    p_synth.add_argument("--out", required=True)
    return parser


def _config_from(args) -> RunConfig:
    if getattr(args, "config", None):
        return load_run_config(args.config)
    return RunConfig()


def _parse_angles(text: str):
    parts = text.split(":")
    if len(parts) != 3:
        raise _UsageError(f"--angles must be start:stop:step, got {text!r}")
    try:
        start, stop, step = (float(p) for p in parts)
    except ValueError:
        raise _UsageError(f"--angles fields must be numeric, got {text!r}") from None
    if step <= 0:
        raise _UsageError("--angles step must be positive")
    if stop < start:
        raise _UsageError("--angles stop must be >= start")
    angles = []
    value = start
    while value <= stop + 1e-9:
        angles.append(round(value, 9))
        value += step
    return angles


def _cloud_paths(directory: str):
    d = Path(directory)
    if not d.is_dir():
        raise DataFormatError(f"{directory}: not a directory")
    paths = sorted(p for p in d.iterdir() if p.suffix.lower() in _CLOUD_SUFFIXES)
    if not paths:
        raise DataFormatError(f"{directory}: contains no cloud files {_CLOUD_SUFFIXES}")
    return paths


def _load_dir(directory: str, subsample_to: int):
    sub = subsample_to if subsample_to > 0 else None
    return [load_cloud(p, subsample_to=sub) for p in _cloud_paths(directory)]


def _cmd_train(args) -> int:
    cfg = _config_from(args)
    clouds = _load_dir(args.data, cfg.subsample_to)
    extractor = train_feature_extractor(clouds, cfg.hop_config())
    save_model(extractor, args.out)
    print(f"trained on {len(clouds)} clouds; feature_dim={extractor.feature_dim}; "
          f"model written to {args.out}")
    return EXIT_OK


def _cmd_register(args) -> int:
    cfg = _config_from(args)
    sub = cfg.subsample_to if cfg.subsample_to > 0 else None
    target = load_cloud(args.target, subsample_to=sub)
    source = load_cloud(args.source, subsample_to=sub)
    iterations = args.iters if args.iters is not None else (
        cfg.icp_iterations if args.method == "icp" else cfg.iterations)
    if args.method == "icp":
        result = register_icp(target, source, iterations=iterations)
    else:
        model_path = args.model or cfg.model_path
        if not model_path:
            raise _UsageError("register --method spa requires --model")
        extractor = load_model(model_path)
        result = register_spa(
            target,
            source,
            extractor,
            m_salient=args.salient if args.salient is not None else cfg.m_salient,
            iterations=iterations,
            saliency_k=cfg.saliency_k,
            pool_fraction=cfg.pool_fraction,
            match_all_source=cfg.match_all_source,
            selection_seed=cfg.seed,
        )
    if result.flagged and result.flag_reason == "degenerate-estimation" and not result.per_iteration:
        raise DegenerateGeometryError("registration failed: degenerate correspondence geometry")
    estimate = result.transform
    euler = rotation_to_euler(estimate.rotation)
    write_registration_csv(result, estimate, euler, args.out)
    print(f"registered in {result.iterations_run} iterations; "
          f"euler=({euler.rx:.4f}, {euler.ry:.4f}, {euler.rz:.4f}) deg; "
          f"result written to {args.out}")
    return EXIT_OK


def _cmd_saliency(args) -> int:
    cfg = _config_from(args)
    sub = cfg.subsample_to if cfg.subsample_to > 0 else None
    cloud = load_cloud(args.cloud, subsample_to=sub)
    k = cfg.saliency_k
    if args.model:
        k = load_model(args.model).config.neighbors_per_hop[0]
    m = args.salient if args.salient is not None else cfg.m_salient
    field = local_curvature_energies(cloud, k)
    salient = select_salient_points(cloud, field, m, cfg.pool_fraction)
    write_saliency_csv(cloud, salient, args.out)
    print(f"selected {salient.m} salient points; written to {args.out}")
    return EXIT_OK


def _cmd_benchmark(args) -> int:
    cfg = _config_from(args)
    methods = [m.strip() for m in args.methods.split(",") if m.strip()]
    if not methods:
        raise _UsageError("--methods must list at least one method")
    for m in methods:
        if m not in SWEEP_METHODS:
            raise _UsageError(f"unknown method {m!r}; choose from {SWEEP_METHODS}")
    angles = _parse_angles(args.angles)
    clouds = _load_dir(args.data, cfg.subsample_to)

    extractor = None
    if any(m != "icp" for m in methods):
        model_path = args.model or cfg.model_path
        if not model_path:
            raise _UsageError("benchmark with spa methods requires --model")
        extractor = load_model(model_path)

    seed = args.seed if args.seed is not None else cfg.seed
    noise_var = args.noise_var if args.noise_var is not None else cfg.noise_variance
    template = TransformSpec(max_rotation_deg=0.0, seed=seed)
    noise = NoiseSpec(noise_var, cfg.noise_seed) if noise_var > 0 else None

    all_rows = []
    for method in methods:
        all_rows.extend(run_sweep(
            clouds, method, angles, template, extractor, noise,
            m_salient=cfg.m_salient,
            iterations=cfg.iterations,
            saliency_k=cfg.saliency_k,
            pool_fraction=cfg.pool_fraction,
            icp_iterations=cfg.icp_iterations,
        ))
    write_report_csv(all_rows, args.out)
    print(f"benchmarked {len(methods)} methods x {len(angles)} angles "
          f"on {len(clouds)} clouds; report written to {args.out}")

    if args.hist_out:
        first = methods[0]
        samples = np.concatenate([
            row.report.per_sample_mae_r
            for row in all_rows
            if row.method == first and row.report is not None
        ]) if any(r.method == first and r.report is not None for r in all_rows) else None
        if samples is None or samples.size == 0:
            raise DataFormatError("no successful samples to histogram")
        write_histogram_csv(histogram(samples, args.hist_bin_width), args.hist_out)
        print(f"histogram for {first} written to {args.hist_out}")
    return EXIT_OK


def _cmd_synth(args) -> int:
    cloud = generate_shape(args.kind, args.n, args.seed)
    write_cloud(cloud, args.out)
    print(f"wrote {cloud.n}-point {args.kind} to {args.out}")
    return EXIT_OK


_COMMANDS = {
    "train": _cmd_train,
    "register": _cmd_register,
    "saliency": _cmd_saliency,
    "benchmark": _cmd_benchmark,
    "synth": _cmd_synth,
}


def cli_main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except _UsageError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_USAGE
    except DegenerateGeometryError as exc:
        print(f"numerical degeneracy: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except DataFormatError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


def main():
    sys.exit(cli_main())
