"""Synthetic structural equation models: random DAGs, weights, mechanisms, noise, corruptions."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from scipy.special import expit

from .dag_core import topological_order, write_adjacency_csv
from .gp_kernel import gp_sample_function
from .scoring import Dataset, save_csv

__all__ = [
    "GraphSpec",
    "SemSpec",
    "WIDE_RANGE",
    "REGULAR_RANGE",
    "WEIGHT_RANGES",
    "gen_graph",
    "gen_weights",
    "simulate",
    "corrupt",
    "with_hidden_confounders",
    "induced_subgraph",
    "write_dataset",
]

WIDE_RANGE = ((-5.0, -2.0), (2.0, 5.0))
REGULAR_RANGE = ((-2.0, -0.5), (0.5, 2.0))
WEIGHT_RANGES = {"wide": WIDE_RANGE, "regular": REGULAR_RANGE}

MECHANISMS = ("LINEAR", "GP", "MLP", "PNL_GP")
NOISES = ("GAUSS", "EXP", "GUMBEL", "LAPLACE", "UNIFORM")
GP_MAX_N = 2000


@dataclass(frozen=True)
class GraphSpec:
    d: int
    model: str = "ER"
    k: int = 1
    seed: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "model", self.model.upper())
        if self.model not in ("ER", "SF"):
            raise ValueError(f"unknown graph model {self.model!r}")
        if self.d < 1 or self.k < 1:
            raise ValueError("d and k must be positive")
        if self.model == "ER" and self.d > 1 and 2 * self.k / (self.d - 1) > 1:
            raise ValueError(
                f"ER-{self.k} infeasible for d={self.d}: edge probability "
                f"{2 * self.k / (self.d - 1):.3f} > 1"
            )

    @property
    def edge_prob(self) -> float:
        return 0.0 if self.d == 1 else 2 * self.k / (self.d - 1)


@dataclass(frozen=True)
class SemSpec:
    mechanism: str = "LINEAR"
    weight_range: tuple[tuple[float, float], ...] = WIDE_RANGE
    noise: str = "GAUSS"
    noise_scale: float = 1.0  # GAUSS variance; scale for the other families
    n: int = 1000
    standardize: bool = False
    mlp_hidden: int = 100
    mlp_weight_range: tuple[tuple[float, float], ...] = REGULAR_RANGE
    gp_length_scale: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "mechanism", self.mechanism.upper())
        object.__setattr__(self, "noise", self.noise.upper())
        object.__setattr__(self, "weight_range", tuple(tuple(map(float, iv)) for iv in self.weight_range))
        if self.mechanism not in MECHANISMS:
            raise ValueError(f"unknown mechanism {self.mechanism!r}")
        if self.noise not in NOISES:
            raise ValueError(f"unknown noise {self.noise!r}")
        if self.n < 2:
            raise ValueError("n must be at least 2")
        if self.mechanism in ("GP", "PNL_GP") and self.n > GP_MAX_N:
            raise ValueError(f"GP mechanisms are capped at n={GP_MAX_N}")
        for lo, hi in self.weight_range:
            if lo > hi or (lo <= 0 <= hi):
                raise ValueError("weight intervals must exclude 0")


def gen_graph(spec: GraphSpec, rng=None) -> np.ndarray:
    """Random DAG adjacency: Erdos-Renyi on a random order, or Barabasi-Albert.

    ER includes each forward pair of a random permutation with probability
    ``2k/(d-1)`` (expected ``k d`` edges). SF grows the graph one node at a
    time; each new node sends ``k`` edges to existing nodes picked with
    probability proportional to degree + 1, then labels are permuted.
    """
    rng = rng if rng is not None else np.random.default_rng(spec.seed)
    d = spec.d
    A = np.zeros((d, d), dtype=np.uint8)
    if spec.model == "ER":
        perm = rng.permutation(d)
        rows, cols = np.triu_indices(d, 1)
        keep = rng.random(rows.shape[0]) < spec.edge_prob
        A[perm[rows[keep]], perm[cols[keep]]] = 1
        return A
    degree = np.zeros(d)
    for new in range(1, d):
        m = min(spec.k, new)
        w = degree[:new] + 1.0
        targets = rng.choice(new, size=m, replace=False, p=w / w.sum())
        A[new, targets] = 1
        degree[targets] += 1
        degree[new] += m
    perm = rng.permutation(d)
    out = np.zeros_like(A)
    out[np.ix_(perm, perm)] = A
    return out


def _uniform_union(intervals, size, rng):
    intervals = np.asarray(intervals, dtype=np.float64)
    lengths = intervals[:, 1] - intervals[:, 0]
    which = rng.choice(len(intervals), size=size, p=lengths / lengths.sum())
    u = rng.random(size)
    return intervals[which, 0] + u * lengths[which]


def gen_weights(g, weight_range=WIDE_RANGE, rng=None) -> np.ndarray:
    """Edge weights uniform on a union of intervals; zeros off the support."""
    rng = rng if rng is not None else np.random.default_rng()
    A = np.asarray(g) != 0
    W = np.zeros(A.shape)
    W[A] = _uniform_union(weight_range, int(A.sum()), rng)
    return W


def _noise(kind: str, scale: float, n: int, rng) -> np.ndarray:
    if kind == "GAUSS":
        return rng.normal(0.0, np.sqrt(scale), n)
    if kind == "EXP":
        return rng.exponential(scale, n)
    if kind == "GUMBEL":
        return rng.gumbel(0.0, scale, n)
    if kind == "LAPLACE":
        return rng.laplace(0.0, scale, n)
    return rng.uniform(-scale, scale, n)


def simulate(g, sem: SemSpec, rng=None, weights=None) -> Dataset:
    """Sample ``sem.n`` observations from an SEM over DAG ``g``.

    For LINEAR mechanisms ``g`` may be a weighted matrix; otherwise pass
    ``weights`` or they are drawn from ``sem.weight_range``.
    """
    rng = rng if rng is not None else np.random.default_rng()
    G = np.asarray(g, dtype=np.float64)
    A = G != 0
    d = A.shape[0]
    n = sem.n
    order = topological_order(A)
    if sem.mechanism == "LINEAR":
        if weights is not None:
            W = np.asarray(weights, dtype=np.float64)
        elif np.any((G != 0) & (G != 1)):
            W = G
        else:
            W = gen_weights(A, sem.weight_range, rng)
    else:
        W = None
    X = np.zeros((n, d))
    for j in order:
        pa = np.flatnonzero(A[:, j])
        if sem.mechanism == "LINEAR":
            X[:, j] = X[:, pa] @ W[pa, j] + _noise(sem.noise, sem.noise_scale, n, rng)
        elif sem.mechanism == "GP":
            f = gp_sample_function(X[:, pa], sem.gp_length_scale, rng) if pa.size else 0.0
            X[:, j] = f + _noise(sem.noise, sem.noise_scale, n, rng)
        elif sem.mechanism == "PNL_GP":
            f = gp_sample_function(X[:, pa], sem.gp_length_scale, rng) if pa.size else 0.0
            X[:, j] = expit(f + rng.laplace(0.0, 1.0, n))
        else:
            if pa.size:
                W1 = _uniform_union(sem.mlp_weight_range, pa.size * sem.mlp_hidden, rng)
                W2 = _uniform_union(sem.mlp_weight_range, sem.mlp_hidden, rng)
                f = expit(X[:, pa] @ W1.reshape(pa.size, sem.mlp_hidden)) @ W2
            else:
                f = 0.0
            X[:, j] = f + _noise(sem.noise, sem.noise_scale, n, rng)
        if not np.all(np.isfinite(X[:, j])):
            raise ArithmeticError(f"mechanism for node {j} produced non-finite samples")
    if sem.standardize:
        X = (X - X.mean(axis=0)) / X.std(axis=0)
    meta = {
        "graph": A.astype(np.uint8),
        "weights": W,
        "mechanism": sem.mechanism,
        "noise": sem.noise,
        "standardized": sem.standardize,
    }
    return Dataset(X, meta)


def corrupt(data: Dataset, percent: float, sigma2: float = 0.1, rng=None) -> Dataset:
    """Add ``N(0, sigma2)`` to exactly ``round(percent/100 * n * d)`` distinct entries."""
    if not 0 <= percent <= 100:
        raise ValueError("percent must lie in [0, 100]")
    rng = rng if rng is not None else np.random.default_rng()
    X = data.x.copy()
    count = int(round(percent / 100 * X.size))
    idx = rng.choice(X.size, size=count, replace=False)
    X.flat[idx] += rng.normal(0.0, np.sqrt(sigma2), count)
    meta = dict(data.meta, corrupted_percent=percent, corrupted_sigma2=sigma2)
    return Dataset(X, meta)


def induced_subgraph(g, keep) -> np.ndarray:
    keep = np.asarray(keep)
    return np.asarray(g)[np.ix_(keep, keep)].copy()


def with_hidden_confounders(spec: GraphSpec, sem: SemSpec, extra: int, rng=None):
    """Simulate on ``d + extra`` nodes, then hide ``extra`` of them.

    Hidden nodes are drawn uniformly among nodes with at least two children
    when enough exist, topped up uniformly from the rest. Returns the
    ``d``-column dataset and the induced DAG on the kept nodes.
    """
    rng = rng if rng is not None else np.random.default_rng(spec.seed)
    full_spec = GraphSpec(spec.d + extra, spec.model, spec.k, spec.seed)
    G = gen_graph(full_spec, rng)
    data = simulate(G, sem, rng)
    if extra <= 0:
        return data, G
    n_children = G.sum(axis=1)
    hubs = np.flatnonzero(n_children >= 2)
    if hubs.size >= extra:
        hidden = rng.choice(hubs, size=extra, replace=False)
    else:
        rest = np.setdiff1d(np.arange(G.shape[0]), hubs)
        hidden = np.concatenate([hubs, rng.choice(rest, size=extra - hubs.size, replace=False)])
    keep = np.setdiff1d(np.arange(G.shape[0]), hidden)
    sub = induced_subgraph(G, keep)
    meta = dict(data.meta, graph=sub, hidden=sorted(int(h) for h in hidden))
    if meta.get("weights") is not None:
        meta["weights"] = induced_subgraph(meta["weights"], keep)
    return Dataset(data.x[:, keep], meta), sub


def write_dataset(prefix, data: Dataset, truth, sidecar: dict) -> dict[str, Path]:
    """Write ``<prefix>.csv``, ``<prefix>_graph.csv`` and ``<prefix>.json``."""
    prefix = Path(prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    paths = {
        "data": prefix.with_name(prefix.name + ".csv"),
        "graph": prefix.with_name(prefix.name + "_graph.csv"),
        "sidecar": prefix.with_name(prefix.name + ".json"),
    }
    save_csv(paths["data"], data)
    write_adjacency_csv(paths["graph"], truth)
    meta = dict(sidecar, graph_csv_path=paths["graph"].name, n=data.n, d=data.d)
    paths["sidecar"].write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return paths


def spec_dict(graph: GraphSpec, sem: SemSpec) -> dict:
    """Flat description of a generation run for sidecars and manifests."""
    out = {"model": graph.model, "k": graph.k, "seed": graph.seed}
    s = asdict(sem)
    out.update(
        mechanism=s["mechanism"],
        noise=s["noise"],
        weight_range=[list(iv) for iv in s["weight_range"]],
        standardized=s["standardize"],
    )
    return out
