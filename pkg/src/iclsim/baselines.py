"""Prompt-only comparison learners: RBF kernel ridge regression and a
two-layer ReLU network trained from scratch on each test prompt.

Neither learner sees any pretraining data; the fit functions take a single
context (X, y) and the query points, nothing else.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class KrrConfig:
    bandwidth_sq: float  # sigma^2 in k(x, x') = exp(-||x - x'||^2 / sigma^2)
    ridge: float = 0.01
    scale_ridge_by_n: bool = True  # solve (K + N*lambda*I) alpha = y; else (K + lambda*I)

    def __post_init__(self):
        if self.bandwidth_sq <= 0:
            raise ValueError("bandwidth_sq must be positive")
        if self.ridge < 0:
            raise ValueError("ridge must be non-negative")


def default_krr_config(d: int, ridge: float = 0.01) -> KrrConfig:
    # sigma^2 = 2d keeps typical squared distances ||x - x'||^2 ~ 2d of order
    # the bandwidth for standard Gaussian inputs.
    return KrrConfig(bandwidth_sq=2.0 * d, ridge=ridge)


def _rbf_gram(A: np.ndarray, B: np.ndarray, bandwidth_sq: float) -> np.ndarray:
    """k(a_i, b_j) over columns of A (d x n) and B (d x p)."""
    sq = (np.sum(A * A, axis=0)[:, None] + np.sum(B * B, axis=0)[None, :]
          - 2.0 * A.T @ B)
    np.maximum(sq, 0.0, out=sq)
    return np.exp(-sq / bandwidth_sq)


def krr_fit_predict(cfg: KrrConfig, X: np.ndarray, y: np.ndarray,
                    queries: np.ndarray) -> np.ndarray:
    """alpha = (K + N lambda I)^{-1} y via Cholesky; predictions k(q, .)^T alpha."""
    N = X.shape[1]
    if N < 1:
        raise ValueError("context must contain at least one example")
    K = _rbf_gram(X, X, cfg.bandwidth_sq)
    lam = cfg.ridge * N if cfg.scale_ridge_by_n else cfg.ridge
    try:
        L = np.linalg.cholesky(K + lam * np.eye(N))
    except np.linalg.LinAlgError as exc:
        raise ValueError(
            "kernel system not positive definite; with ridge=0 this happens "
            "for duplicate context points") from exc
    alpha = np.linalg.solve(L.T, np.linalg.solve(L, y))
    return _rbf_gram(queries, X, cfg.bandwidth_sq) @ alpha


@dataclass(frozen=True)
class NnConfig:
    width: int
    optimizer: str = "adam"  # or "one_step_gd"
    lr_first: float = 0.1
    lr_second: float | None = None  # default 0.1 / width
    weight_decay: float = 1e-4
    max_epochs: int = 500
    patience: int = 10
    second_layer_ridge: float = 0.01  # one_step_gd only

    def __post_init__(self):
        if self.width < 1:
            raise ValueError("width must be at least 1")
        if self.lr_first <= 0 or (self.lr_second is not None and self.lr_second <= 0):
            raise ValueError("learning rates must be positive")
        if self.optimizer not in ("adam", "one_step_gd"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")

    def lr_second_value(self) -> float:
        return self.lr_second if self.lr_second is not None else 0.1 / self.width


class AdamState:
    """Standard first/second-moment recursion with bias correction."""

    def __init__(self, shape, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = np.zeros(shape)
        self.v = np.zeros(shape)
        self.t = 0

    def update(self, grad: np.ndarray) -> np.ndarray:
        """Returns the additive step for this gradient."""
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad * grad
        mh = self.m / (1 - self.beta1**self.t)
        vh = self.v / (1 - self.beta2**self.t)
        return -self.lr * mh / (np.sqrt(vh) + self.eps)


def _init_two_layer(cfg: NnConfig, d: int, rng: np.random.Generator):
    W = rng.standard_normal((cfg.width, d))
    W /= np.linalg.norm(W, axis=1, keepdims=True)
    a = rng.choice([-1.0, 1.0], size=cfg.width) / cfg.width
    return W, a


def _nn_forward(W, a, X):
    return a @ np.maximum(W @ X, 0.0)


def _fit_adam(cfg: NnConfig, X, y, rng):
    """Full-batch Adam on squared loss with weight decay; early stopping on a
    20% held-out split when the context is large enough."""
    d, N = X.shape
    W, a = _init_two_layer(cfg, d, rng)
    if N >= 5:
        n_val = max(1, N // 5)
        perm = rng.permutation(N)
        val, tr = perm[:n_val], perm[n_val:]
        Xtr, ytr, Xval, yval = X[:, tr], y[tr], X[:, val], y[val]
    else:
        Xtr, ytr, Xval, yval = X, y, None, None
    opt_W = AdamState(W.shape, cfg.lr_first)
    opt_a = AdamState(a.shape, cfg.lr_second_value())
    best = (np.inf, W.copy(), a.copy())
    stale = 0
    for _ in range(cfg.max_epochs):
        Z = W @ Xtr
        H = np.maximum(Z, 0.0)
        resid = a @ H - ytr
        n = len(ytr)
        grad_a = (2.0 / n) * H @ resid + cfg.weight_decay * a
        grad_W = (2.0 / n) * ((a[:, None] * (Z > 0)) * resid) @ Xtr.T \
            + cfg.weight_decay * W
        W = W + opt_W.update(grad_W)
        a = a + opt_a.update(grad_a)
        if Xval is not None:
            mae = float(np.mean(np.abs(_nn_forward(W, a, Xval) - yval)))
            if mae < best[0]:
                best = (mae, W.copy(), a.copy())
                stale = 0
            else:
                stale += 1
                if stale > cfg.patience:
                    break
    if Xval is not None and best[0] < np.inf:
        _, W, a = best
    return W, a


def _fit_one_step(cfg: NnConfig, X, y, rng):
    """One full-batch gradient step on the first layer, then ridge on the
    second layer, solved in the dual so any width is cheap."""
    d, N = X.shape
    W, a = _init_two_layer(cfg, d, rng)
    Z = W @ X
    resid = a @ np.maximum(Z, 0.0) - y
    grad_W = (2.0 / N) * ((a[:, None] * (Z > 0)) * resid) @ X.T
    W = W - cfg.lr_first * grad_W
    Phi = np.maximum(W @ X, 0.0)  # width x N
    lam = cfg.second_layer_ridge * N
    a = Phi @ np.linalg.solve(Phi.T @ Phi + lam * np.eye(N), y)
    return W, a


def nn_fit_predict(cfg: NnConfig, X: np.ndarray, y: np.ndarray,
                   queries: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    if X.shape[1] < 1:
        raise ValueError("context must contain at least one example")
    if cfg.optimizer == "adam":
        W, a = _fit_adam(cfg, X, y, rng)
    else:
        W, a = _fit_one_step(cfg, X, y, rng)
    return _nn_forward(W, a, queries)
