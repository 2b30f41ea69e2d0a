"""Causal structure learning by policy-gradient search over DAG potential vectors."""

__version__ = "0.1.0"

from .dag_core import (  # noqa: E402
    CyclicGraphError,
    MatrixFormatError,
    dag_to_vec,
    enumerate_dags,
    is_acyclic,
    num_params,
    read_adjacency_csv,
    topological_order,
    vec_to_dag,
    write_adjacency_csv,
)
from .kernels import BACKEND  # noqa: E402
from .metrics import EvalResult, evaluate, shd, sortnregress, varsortability  # noqa: E402
from .policy_opt import TrainConfig, TrainResult, train, train_continuous_st  # noqa: E402
from .postprocess import PruneConfig, prune  # noqa: E402
from .scoring import (  # noqa: E402
    Dataset,
    NumericalError,
    ScoreCache,
    ScoreConfig,
    load_csv,
    reward,
    save_csv,
    score,
)
from .synth import GraphSpec, SemSpec, gen_graph, gen_weights, simulate  # noqa: E402

__all__ = [
    "BACKEND",
    "CyclicGraphError",
    "Dataset",
    "EvalResult",
    "GraphSpec",
    "MatrixFormatError",
    "NumericalError",
    "PruneConfig",
    "ScoreCache",
    "ScoreConfig",
    "SemSpec",
    "TrainConfig",
    "TrainResult",
    "dag_to_vec",
    "enumerate_dags",
    "evaluate",
    "gen_graph",
    "gen_weights",
    "is_acyclic",
    "load_csv",
    "num_params",
    "prune",
    "read_adjacency_csv",
    "reward",
    "save_csv",
    "score",
    "shd",
    "simulate",
    "sortnregress",
    "topological_order",
    "train",
    "train_continuous_st",
    "varsortability",
    "vec_to_dag",
    "write_adjacency_csv",
]
