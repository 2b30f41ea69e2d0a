"""Experiment plumbing shared by the CLI: single runs, manifests and bench grids."""

from __future__ import annotations

import csv
import itertools
import json
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from .dag_core import read_adjacency_csv, write_adjacency_csv
from .gp_kernel import GpConfig
from .kernels import BACKEND
from .metrics import evaluate
from .policy_opt import TrainConfig, train, train_continuous_st
from .postprocess import PruneConfig, prune
from .scoring import Dataset, ScoreCache, ScoreConfig, load_csv
from .synth import WEIGHT_RANGES, GraphSpec, SemSpec, gen_graph, simulate, spec_dict

log = logging.getLogger(__name__)

MANIFEST_VERSION = 1

# Canonical run parameters; CLI flags and config files use the same names.
RUN_DEFAULTS = {
    "algo": "ppo",
    "score": "bic-ev",
    "regressor": "ols",
    "lambda0": 0.0,
    "gp_alpha": 1.0,
    "steps": 20_000,
    "batch": 64,
    "lr": None,
    "entropy_coef": 0.0,
    "patience": None,
    "lambda1": 1e-7,
    "max_iters": 20_000,
    "prune": "threshold:0.3",
    "cache": True,
    "seed": 0,
}

TABLE_COLUMNS = [
    "run_id", "cell", "seed", "d", "model", "k", "mechanism", "noise", "weights", "n",
    "algo", "score", "steps", "batch", "prune", "status", "error",
    "shd", "fdr", "tpr", "skeleton_f1", "predicted", "wall_time",
]


def env_seed(default: int = 0) -> int:
    raw = os.environ.get("DAGFORGE_SEED")
    if raw is None or raw == "":
        return default
    try:
        return int(raw)
    except ValueError:
        raise ValueError(f"DAGFORGE_SEED must be an integer, got {raw!r}") from None


def _now() -> str:
    return datetime.now(timezone.utc).isoformat()


def resolve_params(overrides: dict) -> dict:
    params = dict(RUN_DEFAULTS)
    unknown = set(overrides) - set(RUN_DEFAULTS)
    if unknown:
        raise ValueError(f"unknown run parameter(s): {', '.join(sorted(unknown))}")
    params.update({k: v for k, v in overrides.items() if v is not None})
    params["algo"] = str(params["algo"]).lower()
    if params["algo"] not in ("ppo", "a2c", "vpg", "st-continuous"):
        raise ValueError(f"unknown algorithm {params['algo']!r}")
    PruneConfig.parse(params["prune"])
    score_config(params)
    return params


def score_config(params: dict) -> ScoreConfig:
    return ScoreConfig(
        kind=params["score"],
        regressor=params["regressor"].upper(),
        lambda0=float(params["lambda0"]),
        gp=GpConfig(alpha=float(params["gp_alpha"])),
    )


def _write_trace(path: Path, header, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def execute(data: Dataset, params: dict, out_dir, truth=None, *, data_path=None,
            truth_path=None) -> dict:
    """Run one discovery job, write its artifacts to ``out_dir`` and return the manifest."""
    params = resolve_params(params)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    started, t0 = _now(), time.perf_counter()
    extra: dict = {}
    if params["algo"] == "st-continuous":
        W, losses = train_continuous_st(data, lr=float(params["lr"] or 1e-3),
                                        lambda1=float(params["lambda1"]),
                                        max_iters=int(params["max_iters"]), seed=int(params["seed"]))
        raw = (W != 0).astype(np.uint8)
        _write_trace(out / "trace.csv", ["step", "loss"], [(i + 1, repr(v)) for i, v in enumerate(losses)])
        extra["iterations"] = len(losses)
        extra["final_loss"] = losses[-1]
    else:
        cfg = TrainConfig(
            algorithm=params["algo"].upper(),
            batch_size=int(params["batch"]),
            total_steps=int(params["steps"]),
            learning_rate=params["lr"],
            entropy_coef=float(params["entropy_coef"]),
            patience=params["patience"],
            seed=int(params["seed"]),
        )
        cache = ScoreCache(enabled=bool(params["cache"]))
        res = train(data, cfg, score_config(params), truth=truth, cache=cache)
        raw = res.best_dag
        _write_trace(
            out / "trace.csv",
            ["step", "mean_reward", "best_reward", "best_shd"],
            [(r.step, repr(r.mean_reward), repr(r.best_reward), "" if r.best_shd is None else r.best_shd)
             for r in res.trace],
        )
        extra.update(steps_run=res.steps_run, best_reward=res.best_reward, best_z=res.best_z.tolist(),
                     cache_hits=cache.hits, cache_misses=cache.misses)
    final = prune(data, raw, PruneConfig.parse(params["prune"]))
    write_adjacency_csv(out / "raw_dag.csv", raw)
    write_adjacency_csv(out / "best_dag.csv", final)
    result = evaluate(final, truth).to_dict() if truth is not None else None
    manifest = {
        "version": MANIFEST_VERSION,
        "config": params,
        "seed": params["seed"],
        "dataset": {"path": str(data_path) if data_path else None, "fingerprint": data.fingerprint(),
                    "n": data.n, "d": data.d},
        "truth_path": str(truth_path) if truth_path else None,
        "backend": BACKEND,
        "start_time": started,
        "end_time": _now(),
        "wall_time": time.perf_counter() - t0,
        "trace_path": "trace.csv",
        "raw_dag_path": "raw_dag.csv",
        "best_dag_path": "best_dag.csv",
        "result": result,
        "shd": None if result is None else result["shd"],
        **extra,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return manifest


def load_manifest(path) -> dict:
    m = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(m, dict) or "config" not in m or "dataset" not in m:
        raise ValueError(f"{path}: not a run manifest")
    return m


# --- bench grids ---------------------------------------------------------------


def _sem_from_cell(cell: dict) -> SemSpec:
    weights = cell.get("weights", "wide")
    kw = {k: cell[k] for k in ("n", "noise_scale", "standardize") if k in cell}
    return SemSpec(
        mechanism=cell.get("mechanism", "LINEAR").upper().replace("-", "_"),
        noise=cell.get("noise", "GAUSS").upper(),
        weight_range=WEIGHT_RANGES[weights.lower()],
        **kw,
    )


def expand_grid(grid: dict) -> list[dict]:
    """Cross product of graphs x sems x algos x seeds, in a stable order."""
    graphs = grid.get("graphs", [])
    sems = grid.get("sems", [{}])
    algos = grid.get("algos", [{}])
    seeds = grid.get("seeds", [0])
    if isinstance(seeds, int):
        seeds = list(range(seeds))
    jobs = []
    for cell, (gi, si, ai) in enumerate(
        itertools.product(range(len(graphs)), range(len(sems)), range(len(algos)))
    ):
        for seed in seeds:
            jobs.append({
                "run_id": f"cell{cell:03d}_seed{seed}",
                "cell": cell,
                "data_cell": gi * len(sems) + si,
                "seed": int(seed),
                "graph": graphs[gi],
                "sem": sems[si],
                "algo": algos[ai],
            })
    return jobs


def _job_rng(master: int, *keys: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([master, *keys]))


def _row(job: dict, manifest: dict | None, status: str, error: str = "", wall: float | None = None) -> dict:
    g, s, a = job["graph"], job["sem"], job["algo"]
    cfg = manifest["config"] if manifest else {}
    res = (manifest or {}).get("result") or {}
    return {
        "run_id": job["run_id"],
        "cell": job["cell"],
        "seed": job["seed"],
        "d": g.get("d"),
        "model": g.get("model", "ER"),
        "k": g.get("k", 1),
        "mechanism": s.get("mechanism", "LINEAR"),
        "noise": s.get("noise", "GAUSS"),
        "weights": s.get("weights", "wide"),
        "n": s.get("n", 1000),
        "algo": cfg.get("algo", a.get("algo", "ppo")),
        "score": cfg.get("score", a.get("score", "bic-ev")),
        "steps": cfg.get("steps", a.get("steps")),
        "batch": cfg.get("batch", a.get("batch")),
        "prune": cfg.get("prune", a.get("prune")),
        "status": status,
        "error": error,
        "shd": res.get("shd"),
        "fdr": res.get("fdr"),
        "tpr": res.get("tpr"),
        "skeleton_f1": res.get("skeleton_f1"),
        "predicted": res.get("predicted"),
        "wall_time": wall if wall is not None else (manifest or {}).get("wall_time"),
    }


def run_job(job: dict, out_root: str, master: int) -> dict:
    """Execute one grid job (picklable entry point for the worker pool)."""
    run_dir = Path(out_root) / "runs" / job["run_id"]
    t0 = time.perf_counter()
    try:
        g = job["graph"]
        gspec = GraphSpec(int(g["d"]), g.get("model", "ER").upper(), int(g.get("k", 1)))
        sem = _sem_from_cell(job["sem"])
        drng = _job_rng(master, job["data_cell"], job["seed"])
        truth = gen_graph(gspec, drng)
        data = simulate(truth, sem, drng)
        params = dict(job["algo"])
        params["seed"] = int(_job_rng(master, job["cell"], job["seed"]).integers(2**31))
        manifest = execute(data, params, run_dir, truth)
        manifest["grid_job"] = {k: job[k] for k in ("run_id", "cell", "seed")}
        manifest["generator"] = spec_dict(gspec, sem)
        (run_dir / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
        return _row(job, manifest, "ok")
    except Exception as exc:  # recorded per row; the bench keeps going
        log.warning("run %s failed: %s", job["run_id"], exc)
        return _row(job, None, "error", f"{type(exc).__name__}: {exc}", time.perf_counter() - t0)


def run_bench(grid: dict, out_root, jobs: int | None = None, master: int = 0) -> tuple[list[dict], int]:
    """Run a grid; returns ``(rows, n_failed)`` and writes ``results.csv``.

    Jobs whose manifest already exists are not rerun; their row is rebuilt
    from the manifest.
    """
    out_root = Path(out_root)
    out_root.mkdir(parents=True, exist_ok=True)
    todo = expand_grid(grid)
    rows: dict[str, dict] = {}
    pending = []
    for job in todo:
        mpath = out_root / "runs" / job["run_id"] / "manifest.json"
        if mpath.exists():
            try:
                rows[job["run_id"]] = _row(job, load_manifest(mpath), "ok")
                continue
            except (ValueError, json.JSONDecodeError):
                pass
        pending.append(job)
    workers = jobs or os.cpu_count() or 1
    if workers <= 1 or len(pending) <= 1:
        for job in pending:
            rows[job["run_id"]] = run_job(job, str(out_root), master)
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(run_job, job, str(out_root), master) for job in pending]
            for job, fut in zip(pending, futures):
                rows[job["run_id"]] = fut.result()
    ordered = [rows[j["run_id"]] for j in todo]
    with open(out_root / "results.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=TABLE_COLUMNS, lineterminator="\n")
        w.writeheader()
        for r in ordered:
            w.writerow({k: "" if v is None else v for k, v in r.items()})
    failed = sum(r["status"] != "ok" for r in ordered)
    return ordered, failed


def read_dataset_and_truth(data_path, truth_path=None):
    data = load_csv(data_path)
    truth = read_adjacency_csv(truth_path) if truth_path else None
    if truth is not None and truth.shape[0] != data.d:
        raise ValueError(f"truth graph has {truth.shape[0]} nodes but data has {data.d} columns")
    return data, truth


__all__ = [
    "RUN_DEFAULTS",
    "TABLE_COLUMNS",
    "env_seed",
    "resolve_params",
    "score_config",
    "execute",
    "load_manifest",
    "expand_grid",
    "run_job",
    "run_bench",
    "read_dataset_and_truth",
]
