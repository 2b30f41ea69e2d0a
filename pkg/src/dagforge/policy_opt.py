"""Policy-gradient search over potential vectors.

The policy is a stateless diagonal Gaussian over ``z``; each episode is a
single action whose reward is the normalized score of ``vec_to_dag(z)``.
Three update rules are provided (vanilla policy gradient, A2C-style, PPO),
all driven by analytic gradients and Adam. ``train_continuous_st`` is the
gradient-based alternative that optimizes ``z`` directly with a
straight-through estimator for the ordering step.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .dag_core import num_params, vec_to_dag
from .metrics import shd
from .scoring import Dataset, NumericalError, ScoreCache, ScoreConfig, batch_rewards

__all__ = [
    "PolicyParams",
    "AdamState",
    "TrainConfig",
    "TraceRow",
    "TrainResult",
    "sample_actions",
    "log_prob",
    "log_prob_grad",
    "entropy",
    "entropy_grad",
    "ppo_objective",
    "ppo_objective_grad",
    "adam_step",
    "train",
    "train_vpg",
    "train_a2c",
    "train_ppo",
    "continuous_loss",
    "train_continuous_st",
]

log = logging.getLogger(__name__)

LOG_2PI = math.log(2 * math.pi)
DEFAULT_LR = {"PPO": 3e-4, "A2C": 7e-4, "VPG": 7e-4}


@dataclass
class PolicyParams:
    """Diagonal Gaussian ``N(mu, diag(exp(log_sigma)^2))``; actions are clamped to ``[-gamma_clip, gamma_clip]``."""

    mu: np.ndarray
    log_sigma: np.ndarray
    gamma_clip: float = 10.0

    def __post_init__(self):
        self.mu = np.asarray(self.mu, dtype=np.float64)
        self.log_sigma = np.asarray(self.log_sigma, dtype=np.float64)
        if self.mu.shape != self.log_sigma.shape:
            raise ValueError("mu and log_sigma must have the same shape")
        if not (np.all(np.isfinite(self.mu)) and np.all(np.isfinite(self.log_sigma))):
            raise NumericalError("policy parameters are not finite")
        if not self.gamma_clip > 0:
            raise ValueError("gamma_clip must be positive")

    @classmethod
    def init(cls, dim: int, log_sigma: float = 0.0, gamma_clip: float = 10.0) -> "PolicyParams":
        return cls(np.zeros(dim), np.full(dim, float(log_sigma)), gamma_clip)

    @property
    def sigma(self) -> np.ndarray:
        return np.exp(self.log_sigma)

    @property
    def dim(self) -> int:
        return self.mu.shape[0]

    def flat(self) -> np.ndarray:
        return np.concatenate([self.mu, self.log_sigma])

    def with_flat(self, theta) -> "PolicyParams":
        k = self.dim
        return PolicyParams(theta[:k].copy(), theta[k:].copy(), self.gamma_clip)


@dataclass
class AdamState:
    """Bias-corrected Adam moments. ``adam_step`` *descends* along the gradient."""

    lr: float
    m: np.ndarray
    v: np.ndarray
    t: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros(cls, dim: int, lr: float, **kw) -> "AdamState":
        return cls(lr, np.zeros(dim), np.zeros(dim), **kw)


def adam_step(state: AdamState, params, grad) -> np.ndarray:
    """One Adam update; returns the new parameters and mutates ``state``."""
    params = np.asarray(params, dtype=np.float64)
    grad = np.asarray(grad, dtype=np.float64)
    if grad.shape != params.shape or state.m.shape != params.shape:
        raise ValueError("shape mismatch between parameters, gradient and Adam state")
    if not np.all(np.isfinite(grad)):
        raise NumericalError("non-finite gradient; optimization diverged")
    state.t += 1
    state.m = state.beta1 * state.m + (1 - state.beta1) * grad
    state.v = state.beta2 * state.v + (1 - state.beta2) * grad * grad
    m_hat = state.m / (1 - state.beta1**state.t)
    v_hat = state.v / (1 - state.beta2**state.t)
    return params - state.lr * m_hat / (np.sqrt(v_hat) + state.eps)


def sample_actions(params: PolicyParams, count: int, rng):
    """Draw ``count`` actions; returns ``(pre_clamp, clamped)``, both ``(count, dim)``."""
    if count < 1:
        raise ValueError("count must be at least 1")
    xi = rng.standard_normal((count, params.dim))
    pre = params.mu + params.sigma * xi
    return pre, np.clip(pre, -params.gamma_clip, params.gamma_clip)


def log_prob(params: PolicyParams, z) -> np.ndarray | float:
    """Log density of pre-clamp action(s) ``z`` (shape ``(dim,)`` or ``(B, dim)``)."""
    z = np.asarray(z, dtype=np.float64)
    u = (z - params.mu) / params.sigma
    lp = (-0.5 * LOG_2PI - params.log_sigma - 0.5 * u * u).sum(axis=-1)
    return float(lp) if np.ndim(lp) == 0 else lp


def log_prob_grad(params: PolicyParams, z):
    """Gradients of :func:`log_prob` w.r.t. ``mu`` and ``log_sigma`` (same leading shape as ``z``)."""
    z = np.asarray(z, dtype=np.float64)
    u = (z - params.mu) / params.sigma
    return u / params.sigma, u * u - 1.0


def entropy(params: PolicyParams) -> float:
    return float((0.5 * (LOG_2PI + 1.0) + params.log_sigma).sum())


def entropy_grad(params: PolicyParams):
    return np.zeros_like(params.mu), np.ones_like(params.log_sigma)


def ppo_objective(params: PolicyParams, z, old_logp, adv, clip: float = 0.2,
                  entropy_coef: float = 0.0) -> float:
    """Clipped surrogate ``mean(min(rho A, clip(rho) A)) + c H`` (to be maximized)."""
    rho = np.exp(log_prob(params, z) - old_logp)
    surr = np.minimum(rho * adv, np.clip(rho, 1 - clip, 1 + clip) * adv)
    return float(surr.mean() + entropy_coef * entropy(params))


def ppo_objective_grad(params: PolicyParams, z, old_logp, adv, clip: float = 0.2,
                       entropy_coef: float = 0.0):
    """Analytic gradient of :func:`ppo_objective` w.r.t. ``(mu, log_sigma)``.

    A sample contributes only where the unclipped branch attains the min.
    """
    z = np.atleast_2d(z)
    adv = np.asarray(adv, dtype=np.float64)
    rho = np.exp(log_prob(params, z) - old_logp)
    active = ((adv >= 0) & (rho <= 1 + clip)) | ((adv < 0) & (rho >= 1 - clip))
    coef = np.where(active, adv * rho, 0.0) / z.shape[0]
    g_mu, g_ls = log_prob_grad(params, z)
    return coef @ g_mu, coef @ g_ls + entropy_coef


@dataclass
class TrainConfig:
    """Search settings; ``learning_rate=None`` picks the per-algorithm default."""

    algorithm: str = "PPO"
    batch_size: int = 64
    total_steps: int = 20_000
    learning_rate: float | None = None
    entropy_coef: float = 0.0
    advantage_normalization: bool = True
    ppo_clip: float = 0.2
    ppo_epochs: int = 10
    ppo_minibatch: int = 64
    vf_coef: float = 0.5
    max_grad_norm: float | None = 0.5
    vpg_baseline: bool = True
    value_baseline: bool = True
    gamma_clip: float = 10.0
    init_log_sigma: float = 0.0
    patience: int | None = None
    seed: int = 0

    def __post_init__(self):
        self.algorithm = self.algorithm.upper()
        if self.algorithm not in DEFAULT_LR:
            raise ValueError(f"unknown algorithm {self.algorithm!r}")
        if self.batch_size < 1 or self.total_steps < 1:
            raise ValueError("batch_size and total_steps must be >= 1")
        if not self.ppo_clip > 0:
            raise ValueError("ppo_clip must be positive")
        if self.ppo_epochs < 1 or self.ppo_minibatch < 1:
            raise ValueError("ppo_epochs and ppo_minibatch must be >= 1")

    @property
    def lr(self) -> float:
        return self.learning_rate if self.learning_rate is not None else DEFAULT_LR[self.algorithm]


@dataclass(frozen=True)
class TraceRow:
    step: int
    mean_reward: float
    best_reward: float
    best_shd: int | None


@dataclass
class TrainResult:
    params: PolicyParams
    trace: list[TraceRow]
    best_dag: np.ndarray
    best_reward: float
    best_z: np.ndarray
    steps_run: int
    wall_time: float = 0.0
    cache: ScoreCache | None = field(default=None, repr=False)


def _normalize(adv: np.ndarray) -> np.ndarray:
    if adv.shape[0] < 2:
        return adv
    return (adv - adv.mean()) / (adv.std() + 1e-8)


def _clip_norm(grads: list[np.ndarray], max_norm: float | None) -> list[np.ndarray]:
    if max_norm is None:
        return grads
    total = math.sqrt(sum(float(g @ g) for g in grads))
    if total > max_norm:
        scale = max_norm / (total + 1e-6)
        grads = [g * scale for g in grads]
    return grads


class _Learner:
    """Policy + optional scalar value baseline with a shared Adam state."""

    def __init__(self, dim: int, cfg: TrainConfig):
        self.cfg = cfg
        self.params = PolicyParams.init(dim, cfg.init_log_sigma, cfg.gamma_clip)
        self.value = 0.0
        self.adam = AdamState.zeros(2 * dim + 1, cfg.lr)

    def apply(self, g_mu, g_ls, g_value):
        """Descend on the loss whose gradients are given."""
        g_mu, g_ls, g_v = _clip_norm([g_mu, g_ls, np.array([g_value])], self.cfg.max_grad_norm)
        theta = np.concatenate([self.params.mu, self.params.log_sigma, [self.value]])
        theta = adam_step(self.adam, theta, np.concatenate([g_mu, g_ls, g_v]))
        k = self.params.dim
        self.params = PolicyParams(theta[:k], theta[k : 2 * k], self.cfg.gamma_clip)
        self.value = float(theta[-1])

    def value_grad(self, rewards) -> float:
        if not self.cfg.value_baseline:
            return 0.0
        # d/db of vf_coef * mean((r - b)^2)
        return float(-2.0 * self.cfg.vf_coef * np.mean(rewards - self.value))


def _update_vpg(learner: _Learner, pre, rewards, rng):
    cfg = learner.cfg
    adv = rewards - rewards.mean() if cfg.vpg_baseline else rewards.copy()
    if cfg.advantage_normalization:
        adv = _normalize(adv)
    g_mu, g_ls = log_prob_grad(learner.params, pre)
    # Ascent on mean(adv * log pi) + c H  ->  descend on its negation.
    gm = -(adv @ g_mu) / len(adv)
    gl = -(adv @ g_ls) / len(adv) - cfg.entropy_coef
    learner.apply(gm, gl, 0.0)


def _update_a2c(learner: _Learner, pre, rewards, rng):
    cfg = learner.cfg
    adv = rewards - (learner.value if cfg.value_baseline else 0.0)
    if cfg.advantage_normalization:
        adv = _normalize(adv)
    g_mu, g_ls = log_prob_grad(learner.params, pre)
    gm = -(adv @ g_mu) / len(adv)
    gl = -(adv @ g_ls) / len(adv) - cfg.entropy_coef
    learner.apply(gm, gl, learner.value_grad(rewards))


def _update_ppo(learner: _Learner, pre, rewards, rng):
    cfg = learner.cfg
    old_logp = log_prob(learner.params, pre)
    adv_all = rewards - (learner.value if cfg.value_baseline else 0.0)
    B = len(rewards)
    for _ in range(cfg.ppo_epochs):
        perm = rng.permutation(B)
        for start in range(0, B, cfg.ppo_minibatch):
            idx = perm[start : start + cfg.ppo_minibatch]
            adv = _normalize(adv_all[idx]) if cfg.advantage_normalization else adv_all[idx]
            gm, gl = ppo_objective_grad(
                learner.params, pre[idx], old_logp[idx], adv, cfg.ppo_clip, cfg.entropy_coef
            )
            learner.apply(-gm, -gl, learner.value_grad(rewards[idx]))


_UPDATES = {"VPG": _update_vpg, "A2C": _update_a2c, "PPO": _update_ppo}


def train(data: Dataset, cfg: TrainConfig, score_cfg: ScoreConfig | None = None, *,
          truth=None, cache: ScoreCache | None = None, progress=None) -> TrainResult:
    """Run the policy-gradient search selected by ``cfg.algorithm``.

    Each step draws ``batch_size`` actions, scores their DAGs, tracks the best
    DAG seen so far, and updates the policy. ``truth`` (optional) adds the
    SHD of the incumbent to the trace. ``progress(step, row)`` is called
    after every step when given.
    """
    score_cfg = score_cfg or ScoreConfig()
    cache = cache if cache is not None else ScoreCache()
    d = data.d
    rng = np.random.default_rng(cfg.seed)
    learner = _Learner(num_params(d), cfg)
    update = _UPDATES[cfg.algorithm]
    best_r = -np.inf
    best_z = np.zeros(num_params(d))
    best_dag = np.zeros((d, d), dtype=np.uint8)
    best_shd = None
    since_best = 0
    trace: list[TraceRow] = []
    t0 = time.perf_counter()
    step = 0
    for step in range(1, cfg.total_steps + 1):
        pre, actions = sample_actions(learner.params, cfg.batch_size, rng)
        rewards, _ = batch_rewards(data, actions, score_cfg, cache)
        k = int(np.argmax(rewards))
        if rewards[k] > best_r:
            best_r = float(rewards[k])
            best_z = actions[k].copy()
            best_dag = vec_to_dag(best_z)
            if truth is not None:
                best_shd = shd(best_dag, truth)
            since_best = 0
        else:
            since_best += 1
        update(learner, pre, rewards, rng)
        row = TraceRow(step, float(rewards.mean()), best_r, best_shd)
        trace.append(row)
        if progress is not None:
            progress(step, row)
        if cfg.patience is not None and since_best >= cfg.patience:
            log.info("early stop at step %d (no improvement for %d steps)", step, cfg.patience)
            break
    return TrainResult(
        params=learner.params,
        trace=trace,
        best_dag=best_dag,
        best_reward=best_r,
        best_z=best_z,
        steps_run=step,
        wall_time=time.perf_counter() - t0,
        cache=cache,
    )


def train_vpg(data, cfg: TrainConfig, score_cfg=None, **kw) -> TrainResult:
    return train(data, replace(cfg, algorithm="VPG"), score_cfg, **kw)


def train_a2c(data, cfg: TrainConfig, score_cfg=None, **kw) -> TrainResult:
    return train(data, replace(cfg, algorithm="A2C"), score_cfg, **kw)


def train_ppo(data, cfg: TrainConfig, score_cfg=None, **kw) -> TrainResult:
    return train(data, replace(cfg, algorithm="PPO"), score_cfg, **kw)


# --- gradient-based ablation -------------------------------------------------


def _split(z, d):
    p = z[:d]
    E = np.zeros((d, d))
    E[np.triu_indices(d, 1)] = z[d:]
    return p, E + E.T


def continuous_weights(z, d: int) -> np.ndarray:
    """``(E + E^T) * H(grad p)``: a weighted adjacency whose support is a DAG."""
    p, S = _split(np.asarray(z, dtype=np.float64), d)
    return S * (p[None, :] > p[:, None])


def continuous_loss(z, gram: np.ndarray, n: int, lambda1: float) -> float:
    """``ln(||X - X M||^2 / (n d)) + lambda1 |z|_1`` with ``gram = X^T X``."""
    d = gram.shape[0]
    IM = np.eye(d) - continuous_weights(z, d)
    sse = float(np.sum(IM * (gram @ IM)))
    return math.log(sse / (n * d)) + lambda1 * float(np.abs(z).sum())


def _continuous_grad(z, gram, n, lambda1):
    """Straight-through gradient: H(grad p) forward, identity on grad p backward."""
    d = gram.shape[0]
    p, S = _split(z, d)
    H = (p[None, :] > p[:, None]).astype(np.float64)
    M = S * H
    IM = np.eye(d) - M
    GIM = gram @ IM
    sse = float(np.sum(IM * GIM))
    loss = math.log(sse / (n * d)) + lambda1 * float(np.abs(z).sum())
    Q = -2.0 * GIM / sse  # dL/dM
    QH = Q * H
    gE = QH + QH.T
    QS = Q * S
    g_p = QS.sum(axis=0) - QS.sum(axis=1)
    grad = np.concatenate([g_p, gE[np.triu_indices(d, 1)]])
    grad += lambda1 * np.sign(z)
    return loss, grad


def train_continuous_st(data: Dataset, lr: float = 1e-3, lambda1: float = 1e-7,
                        max_iters: int = 20_000, seed: int = 0, init_scale: float = 1.0,
                        tol: float = 1e-6, window: int = 100):
    """Adam on the potential vector under the straight-through relaxation.

    Stops after ``max_iters`` or when the loss changes by less than ``tol``
    (relative) over ``window`` iterations. Returns ``(weights, losses)``.
    """
    x = data.x
    n, d = x.shape
    gram = x.T @ x
    rng = np.random.default_rng(seed)
    z = rng.normal(scale=init_scale, size=num_params(d))
    adam = AdamState.zeros(z.size, lr)
    losses: list[float] = []
    for it in range(max_iters):
        loss, grad = _continuous_grad(z, gram, n, lambda1)
        if not math.isfinite(loss):
            raise NumericalError("continuous loss is not finite")
        losses.append(loss)
        if it >= window:
            prev = losses[-1 - window]
            if abs(prev - loss) <= tol * max(abs(prev), 1e-12):
                break
        z = adam_step(adam, z, grad)
    return continuous_weights(z, d), losses
