"""Command-line interface.

Exit codes:
    0  success
    2  an input file (spec, dataset, params) is missing or malformed
    3  invalid parameter values or arguments (params invariants, slice
       arguments, grid cap, unsupported oracle count)

Set ``HSDSCATTER_LOG`` (e.g. ``DEBUG``) to change log verbosity.
"""

from __future__ import annotations

import argparse
import collections
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import io
from .evaluate import DEFAULT_R_MATCH, GridSpec, grid_oracle, landscape_slice, match_inclusions
from .experiments import TRUTH, ExperimentSpec, experiment
from .forward import ConfigurationError
from .hsd import HsdParams, hsd_run
from .objective import ObjectiveContext

log = logging.getLogger("hsdscatter")

EXIT_OK = 0
EXIT_BAD_INPUT = 2
EXIT_BAD_PARAMS = 3

# Default slice: point 0 sweeps x1 along (r, 0, 0.52); point 1 sits at
# (-1, 0.3, 0.58); the remaining four are the true inclusions 3-6.
SLICE_BASE = [(0.0, 0.0, 0.520), (-1.0, 0.3, 0.580)] + [s.position for s in TRUTH[2:]]


class CliError(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _pair(text: str, cast=float, n: int = 2):
    try:
        vals = tuple(cast(t) for t in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected {n} comma-separated values, got {text!r}")
    if len(vals) != n:
        raise argparse.ArgumentTypeError(f"expected {n} comma-separated values, got {text!r}")
    return vals


def run_seed(master_seed: int, run: int, stream: int) -> int:
    """Derived 63-bit seed for (run, stream) under ``master_seed``."""
    ss = np.random.SeedSequence(master_seed, spawn_key=(run, stream))
    return int(ss.generate_state(1, dtype=np.uint64)[0] >> np.uint64(1))


def load_spec(args) -> ExperimentSpec:
    if getattr(args, "spec", None):
        try:
            spec = io.spec_from_json(io.load_json(args.spec, "experiment_spec"))
        except ConfigurationError as exc:
            raise CliError(EXIT_BAD_INPUT, f"{args.spec}: {exc}")
        except io.FormatError as exc:
            raise CliError(EXIT_BAD_INPUT, str(exc))
    else:
        spec = experiment(args.experiment or 1)
    if getattr(args, "noise", None) is not None:
        spec.noise_delta = args.noise
    if getattr(args, "seed", None) is not None:
        spec.seed = args.seed
    if spec.noise_delta < 0:
        raise CliError(EXIT_BAD_PARAMS, "noise must be nonnegative")
    return spec


def load_params(path, seed=None) -> HsdParams:
    params = HsdParams()
    if path:
        try:
            params = io.params_from_json(io.load_json(path, "hsd_params"))
        except io.FormatError as exc:
            raise CliError(EXIT_BAD_INPUT, str(exc))
        except (TypeError, ValueError) as exc:
            raise CliError(EXIT_BAD_PARAMS, f"{path}: {exc}")
    if seed is not None:
        try:
            params = HsdParams(**{**params.__dict__, "master_seed": seed})
        except ValueError as exc:
            raise CliError(EXIT_BAD_PARAMS, str(exc))
    return params


def simulate(spec: ExperimentSpec):
    return spec.measurement()


def invert(ms, params: HsdParams, spec: ExperimentSpec | None, truth=None):
    box = spec.box if spec else experiment(1).box
    ctx = ObjectiveContext(ms, box, params.v_max, params.M_cap)
    t0 = time.perf_counter()
    found, reports = hsd_run(ctx, params)
    wall = time.perf_counter() - t0
    match = match_inclusions(found, truth) if truth else None
    return found, reports, match, wall


# -- commands -------------------------------------------------------------------------

def cmd_simulate(args) -> int:
    spec = load_spec(args)
    ms = simulate(spec)
    io.write_measurement(ms, args.out)
    log.info("wrote %d measurements to %s", len(ms), args.out)
    return EXIT_OK


def _read_data(path):
    try:
        return io.read_measurement(path)
    except (io.FormatError, ConfigurationError) as exc:
        raise CliError(EXIT_BAD_INPUT, f"{path}: {exc}")


def cmd_invert(args) -> int:
    ms = _read_data(args.data)
    params = load_params(args.params, args.seed)
    spec = load_spec(args) if (args.spec or args.experiment) else None
    truth = spec.truth if spec else None
    found, reports, match, wall = invert(ms, params, spec, truth)
    io.dump_json(io.result_to_json(found, reports, match, wall, params), args.out)
    for row in io.format_table(found):
        print(row)
    return EXIT_OK


def _one_replicate(number, noise, params, master_seed, run):
    spec = experiment(number, noise, seed=run_seed(master_seed, run, 1))
    run_params = HsdParams(**{**params.__dict__, "master_seed": run_seed(master_seed, run, 2)})
    ms = simulate(spec)
    found, reports, match, wall = invert(ms, run_params, spec, spec.truth)
    return found, reports, match, wall


def replicate(number: int, noise: float, runs: int, params: HsdParams, master_seed: int,
              workers: int = 1) -> dict:
    """Independent simulate+invert cycles; noise is re-drawn for every run."""
    job = [(number, noise, params, master_seed, r) for r in range(runs)]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            results = list(pool.map(_one_replicate, *zip(*job)))
    else:
        results = [_one_replicate(*j) for j in job]
    records, hist = [], collections.Counter()
    for r, (found, reports, match, wall) in enumerate(results):
        hist[match.n_matched] += 1
        records.append({
            "run": r,
            "n_found": len(found),
            "n_matched": match.n_matched,
            "result": io.result_to_json(found, reports, match, wall),
        })
    powell_calls = [sum(p.powell_invocations for p in res[1]) for res in results]
    fractions = [np.mean([p.powell_time_fraction for p in res[1]]) for res in results]
    return {
        "kind": "replicate_summary",
        "experiment": number,
        "noise_delta": noise,
        "runs": runs,
        "master_seed": master_seed,
        "noise_policy": "noise re-drawn independently for every run",
        "match_radius": DEFAULT_R_MATCH,
        "histogram": {str(k): hist[k] for k in sorted(hist)},
        "mean_powell_invocations": float(np.mean(powell_calls)),
        "mean_powell_time_fraction": float(np.mean(fractions)),
        "records": records,
    }


def cmd_replicate(args) -> int:
    if args.runs < 1:
        raise CliError(EXIT_BAD_PARAMS, "--runs must be positive")
    if args.noise < 0:
        raise CliError(EXIT_BAD_PARAMS, "--noise must be nonnegative")
    params = load_params(args.params)
    summary = replicate(args.experiment, args.noise, args.runs, params, args.seed, args.workers)
    io.dump_json(summary, args.out)
    for k, v in summary["histogram"].items():
        print(f"{k} matched: {v} run(s)")
    return EXIT_OK


def cmd_landscape(args) -> int:
    if args.data:
        ms = _read_data(args.data)
        box = experiment(1).box
    else:
        spec = load_spec(args)
        ms, box = simulate(spec), spec.box
    ctx = ObjectiveContext(ms, box, 2.0, 16)
    if args.samples < 1:
        raise CliError(EXIT_BAD_PARAMS, "--samples must be positive")
    try:
        curve = landscape_slice(ctx, SLICE_BASE, args.index, args.axis, args.range, args.samples)
    except IndexError as exc:
        raise CliError(EXIT_BAD_PARAMS, str(exc))
    io.atomic_write_text(args.out, io.slice_to_csv(curve))
    return EXIT_OK


def cmd_oracle(args) -> int:
    if args.count not in (1, 2):
        raise CliError(EXIT_BAD_PARAMS, f"--count must be 1 or 2, got {args.count}")
    ms = _read_data(args.data)
    spec = load_spec(args) if (args.spec or args.experiment) else experiment(1)
    ctx = ObjectiveContext(ms, spec.box, spec.v_max, max(args.count, 1))
    try:
        grid = GridSpec(*args.grid, cap=args.cap)
        t0 = time.perf_counter()
        found = grid_oracle(ctx, grid, args.count)
    except ConfigurationError as exc:
        raise CliError(EXIT_BAD_PARAMS, str(exc))
    out = {
        "kind": "oracle_result",
        "grid": list(args.grid),
        "count": args.count,
        "spacing": grid.spacing(spec.box).tolist(),
        "found": io.configuration_to_json(found),
        "wall_time": time.perf_counter() - t0,
    }
    io.dump_json(out, args.out)
    for row in io.format_table(found):
        print(row)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="hsdscatter", description=__doc__.split("\n")[0])
    sub = p.add_subparsers(dest="command", required=True)

    def spec_args(sp):
        g = sp.add_mutually_exclusive_group()
        g.add_argument("--experiment", type=int, choices=(1, 2), help="built-in geometry")
        g.add_argument("--spec", help="experiment spec JSON file")

    sp = sub.add_parser("simulate", help="synthesize a dataset")
    spec_args(sp)
    sp.add_argument("--noise", type=float, help="noise level delta")
    sp.add_argument("--seed", type=int, help="noise seed")
    sp.add_argument("--out", required=True, help="dataset file (.json or .csv)")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("invert", help="run the HSD search on a dataset")
    sp.add_argument("data")
    sp.add_argument("--params", help="HSD parameter JSON file (defaults: published values)")
    sp.add_argument("--seed", type=int, help="override master seed")
    spec_args(sp)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_invert)

    sp = sub.add_parser("replicate", help="repeat simulate+invert for a built-in experiment")
    sp.add_argument("--experiment", type=int, choices=(1, 2), required=True)
    sp.add_argument("--noise", type=float, default=0.0)
    sp.add_argument("--runs", type=int, default=10)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--params")
    sp.add_argument("--workers", type=int, default=1)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_replicate)

    sp = sub.add_parser("landscape", help="1-D slice of the reduced objective (CSV)")
    spec_args(sp)
    sp.add_argument("--data", help="dataset file instead of a simulated one")
    sp.add_argument("--index", type=int, default=0, help="which base point varies (0-based)")
    sp.add_argument("--axis", type=int, default=0, help="which coordinate varies (0=x1)")
    sp.add_argument("--range", type=_pair, default=(-2.0, 2.0))
    sp.add_argument("--samples", type=int, default=401)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_landscape, noise=None, seed=None)

    sp = sub.add_parser("oracle", help="exhaustive grid search for 1 or 2 scatterers")
    sp.add_argument("data")
    sp.add_argument("--grid", type=lambda t: _pair(t, int, 3), default=(41, 21, 21))
    sp.add_argument("--count", type=int, default=1)
    sp.add_argument("--cap", type=int, default=1_000_000)
    spec_args(sp)
    sp.add_argument("--out", required=True)
    sp.set_defaults(func=cmd_oracle, noise=None, seed=None)
    return p


def main(argv=None) -> int:
    logging.basicConfig(
        level=os.environ.get("HSDSCATTER_LOG", "WARNING").upper(),
        format="%(levelname)s %(name)s: %(message)s",
    )
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
