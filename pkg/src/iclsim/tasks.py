"""Single-index task sampling, prompt generation, and exact correlations.

A task is f_*(x) = sum_{i=Q}^P (c_i / i!) He_i(<x, beta>) with beta a unit
vector supported on the first r coordinates (canonical subspace). Labels carry
two-point noise sign * tau.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .hermite import BasisIndex, hermite_table

COEFF_SCHEMES = ("sphere_normalized", "fixed")


@dataclass(frozen=True)
class ProblemConfig:
    d: int
    r: int
    Q: int
    P: int
    tau: float = 0.0
    coeff_scheme: str = "sphere_normalized"
    fixed_coeffs: tuple[float, ...] | None = None  # c_Q..c_P when scheme is "fixed"
    rotate: bool = False  # apply a fixed random rotation to the index subspace

    def __post_init__(self):
        if not (2 <= self.Q <= self.P):
            raise ValueError("need 2 <= Q <= P")
        if not (1 <= self.r <= self.d):
            raise ValueError("need 1 <= r <= d")
        if self.tau < 0:
            raise ValueError("tau must be non-negative")
        if self.coeff_scheme not in COEFF_SCHEMES:
            raise ValueError(f"unknown coeff_scheme {self.coeff_scheme!r}")
        if self.coeff_scheme == "fixed":
            if self.fixed_coeffs is None or len(self.fixed_coeffs) != self.n_coeffs:
                raise ValueError("fixed scheme needs exactly P-Q+1 coefficients")
            if not any(c != 0.0 for c in self.fixed_coeffs):
                raise ValueError("coefficients must not all vanish")

    @property
    def n_coeffs(self) -> int:
        return self.P - self.Q + 1

    def coeff_second_moment(self) -> float:
        """E[c_Q^2] under the coefficient scheme, in closed form.

        sphere_normalized draws c_i = g_i sqrt(i!) / ||g|| with g standard
        Gaussian, so E[c_Q^2] = Q! * E[g_Q^2/||g||^2] = Q! / (P-Q+1) by
        exchangeability.
        """
        if self.coeff_scheme == "fixed":
            return float(self.fixed_coeffs[0] ** 2)
        return math.factorial(self.Q) / self.n_coeffs


@dataclass(frozen=True)
class TaskSpec:
    """One draw of the target function: index vector and Hermite coefficients."""

    beta: np.ndarray  # unit d-vector
    coeffs: np.ndarray  # c_Q..c_P
    Q: int

    def __post_init__(self):
        if abs(np.linalg.norm(self.beta) - 1.0) > 1e-12:
            raise ValueError("beta must be a unit vector")
        if not np.any(self.coeffs != 0.0):
            raise ValueError("coefficients must not all vanish")

    @property
    def P(self) -> int:
        return self.Q + len(self.coeffs) - 1


@dataclass(frozen=True)
class Prompt:
    X: np.ndarray  # d x N inputs
    y: np.ndarray  # N noisy labels
    query_x: np.ndarray  # d-vector
    query_y: float

    @property
    def N(self) -> int:
        return self.X.shape[1]


def _rotation_matrix(d: int, rng: np.random.Generator) -> np.ndarray:
    q, rmat = np.linalg.qr(rng.standard_normal((d, d)))
    return q * np.sign(np.diag(rmat))


def sample_coeffs(cfg: ProblemConfig, rng: np.random.Generator) -> np.ndarray:
    if cfg.coeff_scheme == "fixed":
        return np.array(cfg.fixed_coeffs, dtype=float)
    # Uniform on the ellipsoid sum_i c_i^2 / i! = 1.
    while True:
        g = rng.standard_normal(cfg.n_coeffs)
        norm = np.linalg.norm(g)
        if norm > 0.0:
            break
    scale = np.sqrt([math.factorial(i) for i in range(cfg.Q, cfg.P + 1)])
    return g * scale / norm


def sample_task(cfg: ProblemConfig, rng: np.random.Generator,
                rotation: np.ndarray | None = None) -> TaskSpec:
    """Draw beta uniformly on the unit sphere of the index subspace plus coefficients."""
    while True:
        head = rng.standard_normal(cfg.r)
        norm = np.linalg.norm(head)
        if norm > 0.0:
            break
    beta = np.zeros(cfg.d)
    beta[: cfg.r] = head / norm
    if cfg.rotate:
        if rotation is None:
            raise ValueError("rotate flag set but no rotation supplied")
        beta = rotation @ beta
        beta = beta / np.linalg.norm(beta)
    return TaskSpec(beta=beta, coeffs=sample_coeffs(cfg, rng), Q=cfg.Q)


def eval_target(task: TaskSpec, x: np.ndarray) -> float:
    x = np.asarray(x, dtype=float)
    if x.shape != task.beta.shape:
        raise ValueError("input dimension mismatch")
    return float(eval_target_batch(task, x[:, None])[0])


def eval_target_batch(task: TaskSpec, X: np.ndarray) -> np.ndarray:
    """f_* at the columns of X (d x M)."""
    z = task.beta @ X
    tab = hermite_table(task.P, z)
    out = np.zeros_like(z)
    for i in range(task.Q, task.P + 1):
        out += (task.coeffs[i - task.Q] / math.factorial(i)) * tab[i]
    return out


def _noisy_labels(task: TaskSpec, X: np.ndarray, tau: float,
                  rng: np.random.Generator) -> np.ndarray:
    y = eval_target_batch(task, X)
    if tau > 0.0:
        y = y + tau * rng.choice([-1.0, 1.0], size=y.shape)
    return y


def sample_prompt(task: TaskSpec, N: int, cfg: ProblemConfig,
                  rng: np.random.Generator) -> Prompt:
    if N < 1:
        raise ValueError("context length must be at least 1")
    X = rng.standard_normal((cfg.d, N))
    y = _noisy_labels(task, X, cfg.tau, rng)
    query_x = rng.standard_normal(cfg.d)
    query_y = float(_noisy_labels(task, query_x[:, None], cfg.tau, rng)[0])
    return Prompt(X=X, y=y, query_x=query_x, query_y=query_y)


def exact_correlation(task: TaskSpec, p: BasisIndex) -> float:
    """Closed form of E_{x~N(0,I_d)}[f_*(x) h_p(x)].

    Expanding He_{|p|}(<x,beta>) in the product basis and using orthogonality
    leaves a single term: c_{|p|} * prod_j beta_j^{p_j} / sqrt(prod_j p_j!).
    Degrees outside [Q, P] carry no Hermite mass and return 0.
    """
    deg = p.degree
    if deg < task.Q or deg > task.P:
        return 0.0
    beta_head = task.beta[: len(p.p)]
    prod = 1.0
    for k, bj in zip(p.p, beta_head):
        prod *= bj**k
    return float(task.coeffs[deg - task.Q] * prod / p.norm_factor)


def dump_prompt_npz(prompt: Prompt, path) -> None:
    """Debug dump; schema: arrays X (d x N), y (N), query_x (d), query_y ()."""
    np.savez(path, X=prompt.X, y=prompt.y,
             query_x=prompt.query_x, query_y=prompt.query_y)


def load_prompt_npz(path) -> Prompt:
    data = np.load(path)
    return Prompt(X=data["X"], y=data["y"], query_x=data["query_x"],
                  query_y=float(data["query_y"]))
