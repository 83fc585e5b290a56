"""Command-line frontend: train models, then integrate, marginalize, scan.

Four subcommands sharing one vocabulary of flags. Results go to stdout as
JSON (integrate) or to --out files as CSV (marginalize, scan, loss traces);
checkpoints are written one file per replica as <out>.<k>.json. Every
subcommand is deterministic in exact mode given its full flag set.

Exit codes: 0 success, 2 flag problem, 3 numerical failure, 4 I/O failure.
VQCINT_THREADS sets how many replicas train concurrently (default 1).
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace

import numpy as np

from .checkpoint import CheckpointError, load_model, save_model
from .integration import (
    DegenerateNormalizationError,
    ExtrapolationWarning,
    corner_sum,
    marginalize,
    parametric_scan,
)
from .targets import CosineTarget, HalfSineTarget, TabulatedGrid
from .training import TrainConfig, generate_dataset, replica_seed, train

EXIT_OK, EXIT_FLAGS, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4

_OPTIMIZERS = {"qn": "quasi-newton", "es": "evolutionary"}
_SAMPLERS = {"grid": "grid", "random": "uniform-random"}


def _floats(text: str) -> tuple[float, ...]:
    try:
        return tuple(float(v) for v in text.split(","))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from exc


def _ints(text: str) -> tuple[int, ...]:
    try:
        return tuple(int(v) for v in text.split(","))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from exc


def _parse_fixed(items) -> dict[int, float]:
    out = {}
    for item in items or []:
        try:
            dim, _, value = item.partition("=")
            out[int(dim)] = float(value)
        except ValueError as exc:
            raise ValueError(f"--fixed wants dim=value, got {item!r}") from exc
    return out


def _grid_values(args) -> np.ndarray:
    values = getattr(args, "grid", None) or getattr(args, "values", None)
    if values is not None:
        return np.asarray(values, dtype=np.float64)
    a, b, n = args.linspace
    return np.linspace(a, b, int(n))


def _resolve_target(args):
    name = args.target
    if name == "halfsine":
        return HalfSineTarget()
    if name == "cosine":
        return CosineTarget(tuple(args.alpha), args.alpha0)
    if name.startswith("csv:"):
        return TabulatedGrid.from_csv(name[4:])
    raise ValueError(f"--target must be cosine, halfsine or csv:<path>, got {name!r}")


def _shot_kwargs(args) -> dict:
    return {"n_shots": args.nshots, "n_runs": args.nruns, "seed": args.seed}


def _check_extrapolation(args, results) -> None:
    if any(r.extrapolated for r in results) and not args.allow_extrapolation:
        raise ValueError(
            "requested points leave the trained domain; pass --allow-extrapolation "
            "to integrate there anyway"
        )


def _write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(float(v)) for v in row])


# ------------------------------------------------------------------ train


def cmd_train(args) -> int:
    target = _resolve_target(args)
    dims = target.input_dims
    if args.dims is not None and args.dims != dims:
        raise ValueError(f"--dims {args.dims} contradicts the target, which has {dims} dims")
    domain = target.domain
    lower = args.lower if args.lower is not None else tuple(lo for lo, _ in domain)
    upper = args.upper if args.upper is not None else tuple(hi for _, hi in domain)
    if len(lower) != dims or len(upper) != dims:
        raise ValueError(f"--lower/--upper need {dims} entries for this target")
    bounds = tuple(zip(lower, upper))

    if args.spectator is not None:
        spectators = args.spectator
    elif isinstance(target, CosineTarget) and target.alpha0 is None:
        spectators = (dims - 1,)
    elif args.ansatz == "qpdf":
        spectators = (1,)
    else:
        spectators = ()

    spectator_values = {}
    for i, d in enumerate(spectators):
        if i == 0 and args.spectator_values is not None:
            spectator_values[d] = np.asarray(args.spectator_values)
        else:
            spectator_values[d] = np.linspace(*bounds[d], min(args.npoints, 8))

    config = TrainConfig(
        ansatz=args.ansatz,
        n_layers=args.layers,
        optimizer=_OPTIMIZERS[args.optimizer],
        max_iterations=args.iterations,
        n_shots=args.nshots,
        seed=args.seed,
        replicas=args.replicas,
        tolerance=args.tolerance,
        spectator_dims=tuple(spectators),
        train_output_map=args.train_output_map,
        population=args.population,
    )
    dataset = generate_dataset(
        target, bounds, args.npoints, _SAMPLERS[args.sampler], args.seed, spectator_values
    )

    def job(k):
        return train(replace(config, seed=replica_seed(args.seed, k), replicas=1), dataset)

    n_threads = max(1, int(os.environ.get("VQCINT_THREADS", "1")))
    if n_threads > 1 and args.replicas > 1:
        with ThreadPoolExecutor(max_workers=n_threads) as pool:
            results = list(pool.map(job, range(args.replicas)))
    else:
        results = [job(k) for k in range(args.replicas)]

    for k, (model, trace) in enumerate(results):
        path = f"{args.out}.{k}.json"
        save_model(model, path)
        _write_csv(f"{args.out}.{k}.trace.csv", ["iteration", "loss"],
                   [(i, v) for i, v in enumerate(trace)])
        print(f"replica {k}: final_loss={model.metadata['final_loss']:.6e} -> {path}")
    return EXIT_OK


# -------------------------------------------------------------- integrate


def cmd_integrate(args) -> int:
    model = load_model(args.model)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ExtrapolationWarning)
        res = corner_sum(
            model, args.lower, args.upper, args.dims, _parse_fixed(args.fixed),
            **_shot_kwargs(args),
        )
    _check_extrapolation(args, [res])
    print(json.dumps(res.to_dict(), indent=2))
    return EXIT_OK


# ------------------------------------------------------------ marginalize


def cmd_marginalize(args) -> int:
    model = load_model(args.model)
    dims = args.dims if args.dims is not None else model.template.integrated_dims()
    roles = model.template.dim_roles
    if (
        0 <= args.grid_dim < len(roles)
        and roles[args.grid_dim] == "spectator"
        and set(dims) == set(model.template.integrated_dims())
    ):
        raise ValueError(
            "the grid variable is a spectator and every integrated dim is being "
            "integrated: that is a parametric scan, use the scan subcommand"
        )
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ExtrapolationWarning)
        rows = marginalize(
            model, dims, args.lower, args.upper, args.grid_dim, _grid_values(args),
            _parse_fixed(args.fixed), **_shot_kwargs(args),
        )
    _check_extrapolation(args, rows)
    _write_csv(args.out, ["grid_value", "marginal", "std"],
               [(r.grid_value, r.value, r.uncertainty) for r in rows])
    print(f"wrote {len(rows)} rows -> {args.out}")
    return EXIT_OK


# ------------------------------------------------------------------- scan


def cmd_scan(args) -> int:
    model = load_model(args.model)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ExtrapolationWarning)
        results = parametric_scan(
            model, args.spectator_dim, _grid_values(args), args.lower, args.upper,
            args.dims, _parse_fixed(args.fixed), **_shot_kwargs(args),
        )
    _check_extrapolation(args, results)
    values = _grid_values(args)
    _write_csv(args.out, ["spectator_value", "integral", "std"],
               [(v, r.value, r.uncertainty) for v, r in zip(values, results)])
    print(f"wrote {len(results)} rows -> {args.out}")
    return EXIT_OK


# ----------------------------------------------------------------- parser


def _add_shot_flags(p) -> None:
    p.add_argument("--nshots", type=int, default=0,
                   help="measurement shots per expectation; 0 means exact")
    p.add_argument("--nruns", type=int, default=1,
                   help="independent repeats for the shot-noise spread")
    p.add_argument("--seed", type=int, default=0, help="base seed for sampling")
    p.add_argument("--allow-extrapolation", action="store_true",
                   help="permit points outside the trained domain")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vqcint",
        description="Train a quantum-circuit surrogate primitive, then read "
        "integrals, marginals and parameter scans off it.",
    )
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")
    fmt = {"formatter_class": argparse.ArgumentDefaultsHelpFormatter}

    t = sub.add_parser("train", help="fit models and write checkpoints", **fmt)
    t.add_argument("--target", required=True,
                   help="integrand: cosine, halfsine or csv:<path> (default: required)")
    t.add_argument("--ansatz", choices=("reuploading", "qpdf"), default="reuploading",
                   help="circuit family")
    t.add_argument("--layers", type=int, default=2, help="ansatz depth")
    t.add_argument("--dims", type=int, default=None,
                   help="expected input dims, checked against the target")
    t.add_argument("--lower", type=_floats, default=None,
                   help="comma-separated lower training bounds (default: target domain)")
    t.add_argument("--upper", type=_floats, default=None,
                   help="comma-separated upper training bounds (default: target domain)")
    t.add_argument("--npoints", type=int, default=20,
                   help="points per free dim (grid) or total points (random)")
    t.add_argument("--sampler", choices=("grid", "random"), default="grid",
                   help="training-point layout")
    t.add_argument("--optimizer", choices=("qn", "es"), default="qn",
                   help="qn = quasi-Newton (exact only), es = evolutionary")
    t.add_argument("--iterations", type=int, default=200, help="optimizer iteration cap")
    t.add_argument("--nshots", type=int, default=0,
                   help="shots per expectation during training; 0 means exact")
    t.add_argument("--seed", type=int, default=0, help="base seed")
    t.add_argument("--replicas", type=int, default=1, help="independent models to train")
    t.add_argument("--spectator", type=_ints, default=None,
                   help="comma-separated spectator dim indices (default: inferred)")
    t.add_argument("--spectator-values", type=_floats, default=None,
                   help="training values cycled through the first spectator dim "
                   "(default: 8 evenly spaced)")
    t.add_argument("--alpha", type=_floats, default=(1.0,),
                   help="cosine-target frequencies")
    t.add_argument("--alpha0", type=float, default=None,
                   help="freeze the cosine phase offset instead of learning over it")
    t.add_argument("--train-output-map", action="store_true",
                   help="learn an affine read-out scale and offset too")
    t.add_argument("--population", type=int, default=24, help="offspring per es generation")
    t.add_argument("--tolerance", type=float, default=1e-10, help="early-stop loss window")
    t.add_argument("--out", required=True,
                   help="checkpoint stem; writes <out>.<k>.json and <out>.<k>.trace.csv "
                   "(default: required)")
    t.set_defaults(func=cmd_train)

    g = sub.add_parser("integrate", help="corner-sum integral of a saved model", **fmt)
    g.add_argument("--model", required=True, help="checkpoint path (default: required)")
    g.add_argument("--lower", type=_floats, required=True,
                   help="comma-separated lower limits (default: required)")
    g.add_argument("--upper", type=_floats, required=True,
                   help="comma-separated upper limits (default: required)")
    g.add_argument("--dims", type=_ints, default=None,
                   help="dims to integrate (default: every integrated dim)")
    g.add_argument("--fixed", action="append", metavar="DIM=VALUE", default=None,
                   help="pin a non-integrated dim, repeatable")
    _add_shot_flags(g)
    g.set_defaults(func=cmd_integrate)

    m = sub.add_parser("marginalize", help="integrate some dims on a grid of another", **fmt)
    m.add_argument("--model", required=True, help="checkpoint path (default: required)")
    m.add_argument("--dims", type=_ints, default=None,
                   help="dims to integrate out (default: every integrated dim)")
    m.add_argument("--lower", type=_floats, required=True,
                   help="lower limits for the integrated dims (default: required)")
    m.add_argument("--upper", type=_floats, required=True,
                   help="upper limits for the integrated dims (default: required)")
    m.add_argument("--grid-dim", type=int, required=True,
                   help="dim the marginal stays differential in (default: required)")
    grid = m.add_mutually_exclusive_group(required=True)
    grid.add_argument("--grid", type=_floats, default=None,
                      help="explicit comma-separated grid values")
    grid.add_argument("--linspace", type=_floats, default=None, metavar="A,B,N",
                      help="evenly spaced grid: start, stop, count")
    m.add_argument("--fixed", action="append", metavar="DIM=VALUE", default=None,
                   help="pin a non-integrated dim, repeatable")
    _add_shot_flags(m)
    m.add_argument("--out", required=True, help="CSV output path (default: required)")
    m.set_defaults(func=cmd_marginalize)

    s = sub.add_parser("scan", help="one integral per spectator value", **fmt)
    s.add_argument("--model", required=True, help="checkpoint path (default: required)")
    s.add_argument("--spectator-dim", type=int, required=True,
                   help="spectator dim to sweep (default: required)")
    vals = s.add_mutually_exclusive_group(required=True)
    vals.add_argument("--values", type=_floats, default=None,
                      help="explicit comma-separated spectator values")
    vals.add_argument("--linspace", type=_floats, default=None, metavar="A,B,N",
                      help="evenly spaced values: start, stop, count")
    s.add_argument("--lower", type=_floats, required=True,
                   help="comma-separated lower limits (default: required)")
    s.add_argument("--upper", type=_floats, required=True,
                   help="comma-separated upper limits (default: required)")
    s.add_argument("--dims", type=_ints, default=None,
                   help="dims to integrate (default: every integrated dim)")
    s.add_argument("--fixed", action="append", metavar="DIM=VALUE", default=None,
                   help="pin another non-integrated dim, repeatable")
    _add_shot_flags(s)
    s.add_argument("--out", required=True, help="CSV output path (default: required)")
    s.set_defaults(func=cmd_scan)

    return parser


def run(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "train" and args.optimizer == "qn" and args.nshots > 0:
        parser.error("--nshots > 0 is incompatible with --optimizer qn; use --optimizer es")
    try:
        return args.func(args)
    except (CheckpointError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (DegenerateNormalizationError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FLAGS


if __name__ == "__main__":
    sys.exit(run())
