"""Two-stage pretraining: one gradient step on the MLP layer, then ridge
regression on the attention matrix.

Stage I uses weight decay 1/eta1, which cancels the initialization exactly and
leaves w^(1) = (2 eta1 / T1) sum_t (y^t - f^t) grad_w f^t. Stage II is convex
in Gamma and is solved to its global minimum (direct or CG) or approximately
(mini-batch SGD).
"""

from __future__ import annotations

import json
import math
import time
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .model import Gamma, ModelParams, relu
from .streams import stream
from .tasks import ProblemConfig, Prompt, sample_prompt, sample_task


@dataclass(frozen=True)
class TrainConfig:
    problem: ProblemConfig
    m: int
    T1: int
    N1: int
    T2: int
    N2: int
    seed: int
    lambda2: float = 0.1
    c_eta: float = 1.0
    c_gamma: float = 1.0
    eta1: float | None = None  # explicit override of the scaling default
    gamma0: float | None = None
    eta1_autoscale: bool = True
    stage2_solver: str = "cg"
    cg_tol: float = 1e-8
    cg_maxiter: int = 2000
    sgd_batch: int = 64
    sgd_lr: float = 0.01
    sgd_epochs: int = 50

    def __post_init__(self):
        if self.m < 1 or self.T1 < 1 or self.N1 < 1 or self.T2 < 1 or self.N2 < 1:
            raise ValueError("m, T1, N1, T2, N2 must all be positive")
        if self.lambda2 <= 0:
            raise ValueError("lambda2 must be positive")
        if self.stage2_solver not in ("direct", "cg", "sgd"):
            raise ValueError(f"unknown stage2 solver {self.stage2_solver!r}")

    def eta1_value(self) -> float:
        """Default learning rate scaling m^{3/2} r d^{2Q - 1/2}."""
        if self.eta1 is not None:
            return self.eta1
        p = self.problem
        return self.c_eta * self.m**1.5 * p.r * p.d ** (2 * p.Q - 0.5)

    def gamma0_value(self) -> float:
        """Default attention init scale 1 / (m^{3/2} r^{1/2} d^Q)."""
        if self.gamma0 is not None:
            return self.gamma0
        p = self.problem
        return self.c_gamma / (self.m**1.5 * p.r**0.5 * p.d**p.Q)


@dataclass
class TrainReport:
    eta1_effective: float = 0.0
    eta1_scale: float = 1.0
    max_w1_norm: float = 0.0
    stage2_objective: float = 0.0
    stage2_iterations: int = 0
    stage2_residual: float = 0.0
    stage2_max_preactivation: float = 0.0
    stage1_seconds: float = 0.0
    stage2_seconds: float = 0.0

    def to_json_line(self) -> str:
        return json.dumps(vars(self), sort_keys=True)


def init_params(cfg: TrainConfig, rng: np.random.Generator) -> ModelParams:
    """Rows uniform on the sphere, biases uniform on [-1, 1], diagonal Gamma
    with entries +-gamma0."""
    W = rng.standard_normal((cfg.m, cfg.problem.d))
    W /= np.linalg.norm(W, axis=1, keepdims=True)
    b = rng.uniform(-1.0, 1.0, size=cfg.m)
    diag = cfg.gamma0_value() * rng.choice([-1.0, 1.0], size=cfg.m)
    return ModelParams(W=W, b=b, gamma=Gamma("diag", diag))


def reinit_bias(cfg: TrainConfig, rng: np.random.Generator) -> np.ndarray:
    if cfg.problem.d < 2:
        raise ValueError("bias re-initialization needs d >= 2 (log d > 0)")
    bound = math.log(cfg.problem.d)
    return rng.uniform(-bound, bound, size=cfg.m)


def _pairwise_sum(blocks: list[np.ndarray]) -> np.ndarray:
    """Deterministic pairwise-tree reduction over equally shaped blocks."""
    while len(blocks) > 1:
        nxt = [blocks[i] + blocks[i + 1] for i in range(0, len(blocks) - 1, 2)]
        if len(blocks) % 2:
            nxt.append(blocks[-1])
        blocks = nxt
    return blocks[0]


def stage1_loss_gradients(params: ModelParams, prompts: list[Prompt]) -> np.ndarray:
    """Exact gradient of (1/T) sum_t (y^t - f^t)^2 with respect to each row of
    W, for diagonal Gamma. Reference implementation used by the finite
    difference oracle; the streaming path in stage1_step must match it."""
    if params.gamma.layout != "diag":
        raise ValueError("stage-I gradients assume diagonal Gamma")
    diag = params.gamma.data
    T = len(prompts)
    G = np.zeros_like(params.W)
    for pr in prompts:
        Z = params.W @ pr.X + params.b[:, None]
        S = relu(Z)
        mask = (Z > 0).astype(float)
        u = S @ pr.y / pr.N
        vz = params.W @ pr.query_x + params.b
        v = relu(vz)
        vp = (vz > 0).astype(float)
        f = float(np.dot(diag * u, v))
        # grad_{w_j} f: Gamma_jj [ (1/N sum y_i s'_ij x_i) v_j + u_j v'_j x ]
        A = (mask * pr.y) @ pr.X.T / pr.N
        grad_f = diag[:, None] * (v[:, None] * A + np.outer(u * vp, pr.query_x))
        G += (2.0 / T) * (f - pr.query_y) * grad_f
    return G


def empirical_loss(params: ModelParams, prompts: list[Prompt]) -> float:
    from .model import forward

    return float(np.mean([(pr.query_y - forward(params, pr)) ** 2 for pr in prompts]))


def stage1_step(params: ModelParams, cfg: TrainConfig,
                report: TrainReport | None = None) -> ModelParams:
    """One gradient step on W over T1 fresh prompts of length N1.

    With weight decay fixed at 1/eta1 the initialization cancels and the update
    is w^(1) = (2 eta1 / T1) sum_t (y^t - f^t) grad_w f^t. When autoscale is
    on, eta1 is reduced (never raised) so that max_j ||w_j^(1)|| <= 1.
    """
    if params.gamma.layout != "diag":
        raise ValueError("stage I expects the diagonal initialization of Gamma")
    p = cfg.problem
    m, N1 = cfg.m, cfg.N1
    # Single precision for the per-context tensor contractions: the update is
    # a Monte Carlo average whose statistical error dwarfs float32 rounding,
    # and the narrow GEMMs run about twice as fast. Accumulation across tasks
    # stays in float64 with a fixed pairwise reduction, so the result is
    # deterministic for a given seed.
    W32 = params.W.astype(np.float32)
    b32 = params.b.astype(np.float32)
    diag32 = params.gamma.data.astype(np.float32)
    B = 512  # context columns per tile, keeps the m x B buffer cache-sized
    blocks: list[np.ndarray] = []
    G = np.zeros_like(params.W)
    for t in range(cfg.T1):
        task = sample_task(p, stream(cfg.seed, "task", t))
        pr = sample_prompt(task, N1, p, stream(cfg.seed, "prompt", t))
        X32 = pr.X.astype(np.float32)
        y32 = pr.y.astype(np.float32)
        u = np.zeros(m, np.float32)
        P = np.zeros((m, p.d), np.float32)  # (mask * y) X^T, scaled later
        for k in range(0, N1, B):
            Xb, yb = X32[:, k:k + B], y32[k:k + B]
            T = W32 @ Xb
            T += b32[:, None]
            np.maximum(T, 0.0, out=T)
            u += T @ yb
            np.greater(T, 0.0, out=T)
            T *= yb[None, :]
            P += T @ Xb.T
        u /= N1
        vz = W32 @ pr.query_x.astype(np.float32) + b32
        v = relu(vz)
        f = float(np.dot(diag32 * u, v))
        c = pr.query_y - f
        G += ((c / N1) * diag32 * v)[:, None] * P
        G += np.outer(c * diag32 * u * (vz > 0), pr.query_x)
        if (t + 1) % 256 == 0 or t + 1 == cfg.T1:
            blocks.append(G)
            G = np.zeros_like(params.W)
    total = _pairwise_sum(blocks)
    eta1 = cfg.eta1_value()
    W1 = (2.0 * eta1 / cfg.T1) * total
    norms = np.linalg.norm(W1, axis=1)
    max_norm = float(norms.max())
    scale = 1.0
    if cfg.eta1_autoscale and max_norm > 1.0:
        scale = 1.0 / max_norm
        W1 *= scale
    if report is not None:
        report.eta1_effective = eta1 * scale
        report.eta1_scale = scale
        report.max_w1_norm = float(np.linalg.norm(W1, axis=1).max())
    return replace(params, W=W1)


def stage2_features(params: ModelParams, cfg: TrainConfig):
    """Per-task attention inputs over T2 fresh prompts of length N2: context
    averages U (m x T2), query features V (m x T2), labels y (T2)."""
    p = cfg.problem
    U = np.empty((cfg.m, cfg.T2))
    V = np.empty((cfg.m, cfg.T2))
    y = np.empty(cfg.T2)
    max_pre = 0.0
    for t in range(cfg.T2):
        task = sample_task(p, stream(cfg.seed, "stage2", 2 * t))
        pr = sample_prompt(task, cfg.N2, p, stream(cfg.seed, "stage2", 2 * t + 1))
        Z = params.W @ pr.X + params.b[:, None]
        max_pre = max(max_pre, float(np.abs(Z - params.b[:, None]).max()))
        U[:, t] = relu(Z) @ pr.y / cfg.N2
        V[:, t] = relu(params.W @ pr.query_x + params.b)
        y[t] = pr.query_y
    return U, V, y, max_pre


def ridge_objective(gamma: Gamma, U: np.ndarray, V: np.ndarray, y: np.ndarray,
                    lam2: float) -> float:
    preds = np.einsum("mt,mt->t", V, gamma.matvec(U))
    return float(np.mean((y - preds) ** 2) + 0.5 * lam2 * gamma.frobenius_norm() ** 2)


def ridge_gradient(gamma_dense: np.ndarray, U: np.ndarray, V: np.ndarray,
                   y: np.ndarray, lam2: float) -> np.ndarray:
    T2 = len(y)
    resid = np.einsum("mt,mt->t", V, gamma_dense @ U) - y
    return (2.0 / T2) * (V * resid) @ U.T + lam2 * gamma_dense


def _solve_direct(U, V, y, lam2):
    m, T2 = U.shape
    if m > 32:
        raise ValueError("direct solver is restricted to m <= 32")
    Z = np.einsum("mt,nt->tmn", V, U).reshape(T2, m * m)
    A = (2.0 / T2) * Z.T @ Z + lam2 * np.eye(m * m)
    rhs = (2.0 / T2) * Z.T @ y
    return np.linalg.solve(A, rhs).reshape(m, m), 0, 0.0


def _solve_cg(U, V, y, lam2, tol, maxiter):
    # The minimizer lies in span{v_t u_t^T}; CG therefore runs in those
    # coordinates, where the normal-equations operator becomes
    # (2/T2) (V^T V * U^T U) + lam2 I and each matvec is one T2 x T2 product.
    T2 = len(y)
    K = (V.T @ V) * (U.T @ U)
    rhs = (2.0 / T2) * y
    alpha = np.zeros(T2)
    r = rhs.copy()
    p = r.copy()
    rs = float(r @ r)
    rhs_norm = math.sqrt(float(rhs @ rhs))
    iters = 0
    for iters in range(1, maxiter + 1):
        Ap = (2.0 / T2) * (K @ p) + lam2 * p
        a = rs / float(p @ Ap)
        alpha += a * p
        r -= a * Ap
        rs_new = float(r @ r)
        if math.sqrt(rs_new) <= tol * rhs_norm:
            rs = rs_new
            break
        p = r + (rs_new / rs) * p
        rs = rs_new
    resid = math.sqrt(rs) / rhs_norm if rhs_norm > 0 else 0.0
    if resid > tol:
        warnings.warn(f"stage-II CG stopped after {iters} iterations, "
                      f"relative residual {resid:.3e}")
    return (V * alpha) @ U.T, iters, resid


def _solve_sgd(U, V, y, lam2, cfg, rng):
    m, T2 = U.shape
    gamma = np.zeros((m, m))
    idx = np.arange(T2)
    for _ in range(cfg.sgd_epochs):
        rng.shuffle(idx)
        for start in range(0, T2, cfg.sgd_batch):
            batch = idx[start:start + cfg.sgd_batch]
            Ub, Vb, yb = U[:, batch], V[:, batch], y[batch]
            resid = np.einsum("mt,mt->t", Vb, gamma @ Ub) - yb
            grad = (2.0 / len(batch)) * (Vb * resid) @ Ub.T + lam2 * gamma
            gamma -= cfg.sgd_lr * grad
    return gamma, cfg.sgd_epochs, float("nan")


def stage2_ridge(params: ModelParams, cfg: TrainConfig,
                 report: TrainReport | None = None) -> ModelParams:
    """Ridge regression on Gamma with W, b frozen; returns the new snapshot."""
    U, V, y, max_pre = stage2_features(params, cfg)
    if cfg.stage2_solver == "direct":
        gd, iters, resid = _solve_direct(U, V, y, cfg.lambda2)
    elif cfg.stage2_solver == "cg":
        gd, iters, resid = _solve_cg(U, V, y, cfg.lambda2, cfg.cg_tol, cfg.cg_maxiter)
    else:
        gd, iters, resid = _solve_sgd(U, V, y, cfg.lambda2, cfg,
                                      stream(cfg.seed, "stage2", -1 & 0x7FFFFFFF))
    gamma = Gamma("dense", gd)
    if report is not None:
        report.stage2_objective = ridge_objective(gamma, U, V, y, cfg.lambda2)
        report.stage2_iterations = iters
        report.stage2_residual = resid
        report.stage2_max_preactivation = max_pre
    return replace(params, gamma=gamma)


def pretrain(cfg: TrainConfig) -> tuple[ModelParams, TrainReport]:
    """Full pipeline: init, stage-I step, bias re-initialization, stage-II ridge."""
    report = TrainReport()
    params = init_params(cfg, stream(cfg.seed, "init"))
    t0 = time.perf_counter()
    params = stage1_step(params, cfg, report)
    report.stage1_seconds = time.perf_counter() - t0
    params = replace(params, b=reinit_bias(cfg, stream(cfg.seed, "bias_reinit")))
    t0 = time.perf_counter()
    params = stage2_ridge(params, cfg, report)
    report.stage2_seconds = time.perf_counter() - t0
    return params, report
