"""``dagforge`` command line: generate, run, eval, bench.

Exit codes: 0 success, 2 usage or input error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .dag_core import MatrixFormatError, read_adjacency_csv
from .metrics import evaluate
from .runner import (
    RUN_DEFAULTS,
    env_seed,
    execute,
    load_manifest,
    read_dataset_and_truth,
    run_bench,
)
from .scoring import DataFormatError, NumericalError
from .synth import (
    MECHANISMS,
    NOISES,
    WEIGHT_RANGES,
    GraphSpec,
    SemSpec,
    gen_graph,
    simulate,
    spec_dict,
    with_hidden_confounders,
    write_dataset,
)

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 2, 3

log = logging.getLogger("dagforge")


class InputError(Exception):
    """Bad user input detected after argument parsing."""


def _opt_int(text: str):
    return None if text.lower() == "none" else int(text)


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dagforge", description="Score-based causal discovery over DAG potentials.")
    p.add_argument("--version", action="version", version=f"dagforge {__version__}")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="simulate a dataset and its ground-truth DAG")
    g.add_argument("--d", type=int, required=True, help="number of observed nodes")
    g.add_argument("--graph", default="er", type=str.upper, choices=["ER", "SF"])
    g.add_argument("--k", type=int, default=1, help="expected edges per node (ER) or edges per new node (SF)")
    g.add_argument("--mech", default="linear", type=lambda s: s.upper().replace("-", "_"), choices=MECHANISMS)
    g.add_argument("--noise", default="gauss", type=str.upper, choices=NOISES)
    g.add_argument("--noise-scale", type=float, default=1.0)
    g.add_argument("--n", type=int, default=1000)
    g.add_argument("--weights", default="wide", type=str.lower, choices=sorted(WEIGHT_RANGES))
    g.add_argument("--standardize", action="store_true")
    g.add_argument("--hidden", type=int, default=0, help="extra latent confounders to marginalize out")
    g.add_argument("--seed", type=int, default=None)
    g.add_argument("--out", default="dataset", help="output prefix (writes PREFIX.csv, PREFIX_graph.csv, PREFIX.json)")

    r = sub.add_parser("run", help="search for a DAG on a dataset")
    r.add_argument("--data", help="dataset CSV")
    r.add_argument("--truth", help="ground-truth adjacency CSV; adds metrics to the manifest")
    r.add_argument("--config", help="JSON file of run parameters; explicit flags win")
    r.add_argument("--manifest", help="re-run the configuration recorded in a manifest")
    r.add_argument("--out", help="output directory (default: run_out)")
    r.add_argument("--algo", type=str.lower, choices=["ppo", "a2c", "vpg", "st-continuous"])
    r.add_argument("--score", type=str.lower, choices=["bic-ev", "bic-nv", "ls"])
    r.add_argument("--regressor", type=str.lower, choices=["ols", "gp"])
    r.add_argument("--lambda0", type=float, help="edge penalty for the LS score")
    r.add_argument("--gp-alpha", type=float, dest="gp_alpha")
    r.add_argument("--steps", type=int)
    r.add_argument("--batch", type=int)
    r.add_argument("--lr", type=float)
    r.add_argument("--entropy-coef", type=float, dest="entropy_coef")
    r.add_argument("--patience", type=_opt_int, help="early-stop after this many steps without improvement")
    r.add_argument("--lambda1", type=float, help="L1 weight for st-continuous")
    r.add_argument("--max-iters", type=int, dest="max_iters", help="iteration cap for st-continuous")
    r.add_argument("--prune", help="none | threshold[:delta] | ci[:alpha]")
    r.add_argument("--no-cache", dest="cache", action="store_const", const=False)
    r.add_argument("--seed", type=int)

    e = sub.add_parser("eval", help="compare a predicted adjacency CSV with the truth")
    e.add_argument("--pred", required=True)
    e.add_argument("--truth", required=True)

    b = sub.add_parser("bench", help="run an experiment grid")
    b.add_argument("--grid", required=True, help="grid JSON")
    b.add_argument("--out", default="bench_out")
    b.add_argument("--jobs", type=int, default=None, help="worker processes (default: all cores)")
    b.add_argument("--seed", type=int, default=None, help="master seed")
    return p


def _read_json(path) -> dict:
    try:
        obj = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise InputError(f"{path}: no such file") from None
    except json.JSONDecodeError as exc:
        raise InputError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from None
    if not isinstance(obj, dict):
        raise InputError(f"{path}: expected a JSON object")
    return obj


def _require_file(path, what: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise InputError(f"{what} {path}: no such file")
    return p


def cmd_generate(args) -> int:
    seed = args.seed if args.seed is not None else env_seed()
    gspec = GraphSpec(args.d, args.graph, args.k, seed)
    sem = SemSpec(mechanism=args.mech, weight_range=WEIGHT_RANGES[args.weights], noise=args.noise,
                  noise_scale=args.noise_scale, n=args.n, standardize=args.standardize)
    rng = np.random.default_rng(seed)
    if args.hidden:
        data, truth = with_hidden_confounders(gspec, sem, args.hidden, rng)
    else:
        truth = gen_graph(gspec, rng)
        data = simulate(truth, sem, rng)
    sidecar = spec_dict(gspec, sem)
    sidecar["weights"] = args.weights
    if args.hidden:
        sidecar["hidden"] = [int(h) for h in data.meta["hidden"]]
    paths = write_dataset(args.out, data, truth, sidecar)
    for p in paths.values():
        print(p)
    return EXIT_OK


def _run_params(args) -> tuple[dict, dict]:
    """Merge defaults < manifest/config file < explicit flags."""
    base: dict = {}
    origin: dict = {}
    if args.manifest:
        m = load_manifest(_require_file(args.manifest, "manifest"))
        base.update(m["config"])
        origin = m
    if args.config:
        base.update(_read_json(args.config))
    flags = {k: getattr(args, k) for k in RUN_DEFAULTS if getattr(args, k, None) is not None}
    base.update(flags)
    if "seed" not in base:
        base["seed"] = env_seed()
    return base, origin


def cmd_run(args) -> int:
    params, origin = _run_params(args)
    data_path = args.data or (origin.get("dataset") or {}).get("path")
    truth_path = args.truth or origin.get("truth_path")
    if not data_path:
        raise InputError("run needs --data (or a manifest that records the dataset path)")
    data, truth = read_dataset_and_truth(_require_file(data_path, "dataset"),
                                         _require_file(truth_path, "truth") if truth_path else None)
    if origin and origin["dataset"].get("fingerprint") not in (None, data.fingerprint()):
        raise InputError(f"dataset {data_path} does not match the manifest fingerprint")
    out = args.out or (str(Path(args.manifest).parent) if args.manifest else "run_out")
    manifest = execute(data, params, out, truth, data_path=data_path, truth_path=truth_path)
    summary = {k: manifest.get(k) for k in ("shd", "best_reward", "steps_run", "wall_time")}
    summary["manifest"] = str(Path(out) / "manifest.json")
    print(json.dumps(summary))
    return EXIT_OK


def cmd_eval(args) -> int:
    pred = read_adjacency_csv(_require_file(args.pred, "prediction"))
    truth = read_adjacency_csv(_require_file(args.truth, "truth"))
    print(evaluate(pred, truth).to_json())
    return EXIT_OK


def cmd_bench(args) -> int:
    grid = _read_json(args.grid)
    master = grid.get("master_seed", args.seed if args.seed is not None else env_seed())
    rows, failed = run_bench(grid, args.out, args.jobs, int(master))
    print(f"{len(rows)} runs, {failed} failed; table: {Path(args.out) / 'results.csv'}")
    return EXIT_NUMERIC if rows and failed == len(rows) else EXIT_OK


COMMANDS = {"generate": cmd_generate, "run": cmd_run, "eval": cmd_eval, "bench": cmd_bench}


def main(argv=None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except (NumericalError, FloatingPointError, np.linalg.LinAlgError) as exc:
        print(f"dagforge: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (InputError, DataFormatError, MatrixFormatError, ValueError, OSError) as exc:
        print(f"dagforge: error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
