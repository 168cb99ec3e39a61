"""Empirical checks of the mechanism behind the two-stage training: the
population main term driving stage-I alignment, the subspace mass of the
trained first layer, how well the ReLU features span the low-degree Hermite
basis, and the 1/sqrt(N) concentration of label-basis correlations.

All diagnostics interpret coordinates 1..r as the index subspace, so they
refuse configurations with the rotation flag set.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .hermite import (BasisIndex, chi_even_moment, eval_basis_matrix,
                      relu_hermite_coeff)
from .model import Gamma, ModelParams, relu
from .streams import stream
from .tasks import (ProblemConfig, TaskSpec, eval_target_batch,
                    exact_correlation, sample_prompt, sample_task)


def _require_canonical(cfg: ProblemConfig):
    if cfg.rotate:
        raise ValueError("diagnostics require the canonical index subspace "
                         "(rotation flag must be off)")


def _double_factorial_odd(Q: int) -> float:
    return float(math.prod(range(2 * Q - 1, 0, -2)))


def population_main_term(w: np.ndarray, b: float, cfg: ProblemConfig,
                         coeff_second_moment: float) -> np.ndarray:
    """Leading term of the expected stage-I gradient at a unit-norm neuron:

        m(w, b) = 2 a_Q(b)^2 E[c_Q^2] / (Q! (Q-1)!)
                  * (2Q-1)!! / E_{z~chi_r}[z^{2Q}]
                  * ||w_{1:r}||^{2Q-2} [w_{1:r}; 0]
    """
    _require_canonical(cfg)
    w = np.asarray(w, dtype=float)
    if abs(np.linalg.norm(w) - 1.0) > 1e-10:
        raise ValueError("w must be a unit vector")
    Q, r = cfg.Q, cfg.r
    aQ = relu_hermite_coeff(Q, b)
    pref = 2.0 * aQ**2 * coeff_second_moment / (
        math.factorial(Q) * math.factorial(Q - 1))
    pref *= _double_factorial_odd(Q) / chi_even_moment(r, Q)
    head = w[:r]
    out = np.zeros_like(w)
    out[:r] = pref * float(np.dot(head, head)) ** (Q - 1) * head
    return out


def empirical_gradient(w: np.ndarray, b: float, cfg: ProblemConfig,
                       T1: int, N1: int, seed: int,
                       index_offset: int = 0) -> np.ndarray:
    """Monte Carlo estimate of the expected stage-I correlation statistic

        g = E_t[ y^t sigma_b(w^T x^t) (1/N1) sum_i y_i sigma_b'(w^T x_i) x_i
               + y^t sigma_b'(w^T x^t) x^t (1/N1) sum_i y_i sigma_b(w^T x_i) ]

    averaged over T1 fresh tasks with contexts of length N1."""
    _require_canonical(cfg)
    w = np.asarray(w, dtype=float)
    acc = np.zeros(cfg.d)
    for t in range(T1):
        rng = stream(seed, "diagnostic", index_offset + t)
        task = sample_task(cfg, rng)
        pr = sample_prompt(task, N1, cfg, rng)
        z = w @ pr.X + b
        s = relu(z)
        sp = (z > 0).astype(float)
        zq = float(w @ pr.query_x + b)
        term1 = pr.query_y * max(zq, 0.0) * (pr.X @ (pr.y * sp)) / N1
        term2 = pr.query_y * (1.0 if zq > 0 else 0.0) * pr.query_x \
            * float(np.dot(pr.y, s)) / N1
        acc += term1 + term2
    return acc / T1


@dataclass
class GradientCheckReport:
    empirical: np.ndarray
    main_term: np.ndarray
    rel_deviation_head: float  # first-r block, relative to ||main term||
    off_subspace_norm: float


def empirical_gradient_check(w: np.ndarray, b: float, cfg: ProblemConfig,
                             T1: int, N1: int, seed: int) -> GradientCheckReport:
    if cfg.d > 8:
        raise ValueError("gradient check is a Monte Carlo diagnostic; keep d <= 8")
    g = empirical_gradient(w, b, cfg, T1, N1, seed)
    m = population_main_term(w, b, cfg, cfg.coeff_second_moment())
    r = cfg.r
    denom = np.linalg.norm(m[:r])
    rel = float(np.linalg.norm(g[:r] - m[:r]) / denom) if denom > 0 else float("inf")
    return GradientCheckReport(
        empirical=g, main_term=m, rel_deviation_head=rel,
        off_subspace_norm=float(np.linalg.norm(g[r:])))


@dataclass
class AlignmentReport:
    ratios: np.ndarray  # per-neuron ||w_{1:r}||^2 / ||w||^2
    cosines: np.ndarray  # per-neuron cosine to the population main-term direction
    mean_ratio: float
    baseline: float  # r/d, the mean ratio of a uniform random direction

    def to_csv(self, path) -> None:
        """Columns: neuron, mass_ratio, cosine, baseline."""
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["neuron", "mass_ratio", "cosine", "baseline"])
            for j, (rat, cos) in enumerate(zip(self.ratios, self.cosines)):
                wr.writerow([j, f"{rat:.10g}", f"{cos:.10g}", f"{self.baseline:.10g}"])


def alignment_report(params: ModelParams, cfg: ProblemConfig) -> AlignmentReport:
    """Subspace mass of each first-layer row after stage I."""
    _require_canonical(cfg)
    r = cfg.r
    norms_sq = np.sum(params.W**2, axis=1)
    head_sq = np.sum(params.W[:, :r] ** 2, axis=1)
    # Rows that received no gradient mass stay at zero; count them as having
    # no subspace mass rather than dividing by zero.
    ratios = np.divide(head_sq, norms_sq, out=np.zeros_like(head_sq),
                       where=norms_sq > 0)
    # The main term points along [w_{1:r}; 0], so the cosine is the root ratio.
    return AlignmentReport(ratios=ratios, cosines=np.sqrt(ratios),
                           mean_ratio=float(ratios.mean()), baseline=cfg.r / cfg.d)


@dataclass
class BasisFit:
    A: np.ndarray  # m x B coefficient matrix, column n approximates h_n
    rms_residuals: np.ndarray  # per basis element
    coeff_norms_sq: np.ndarray  # ||a^n||^2 per basis element


def fit_basis_network(W: np.ndarray, b: np.ndarray, X: np.ndarray,
                      basis: list[BasisIndex], ridge: float | None = None) -> BasisFit:
    """Ridge least squares a^n = argmin ||a^T sigma(WX+b) - h_n(X)||^2 over a
    shared sample X (d x M); one Gram factorization serves every basis element."""
    m, M = W.shape[0], X.shape[1]
    if M < len(basis):
        raise ValueError("need at least as many sample points as basis elements")
    r = len(basis[0].p)
    Phi = relu(W @ X + b[:, None])  # m x M
    Y = eval_basis_matrix(basis, X[:r])  # B x M
    G = Phi @ Phi.T / M
    if ridge is None:
        ridge = 1e-8 * float(np.trace(G)) / m
    A = np.linalg.solve(G + ridge * np.eye(m), Phi @ Y.T / M)
    resid = A.T @ Phi - Y
    return BasisFit(A=A,
                    rms_residuals=np.sqrt(np.mean(resid**2, axis=1)),
                    coeff_norms_sq=np.sum(A**2, axis=0))


@dataclass
class ConstructedGammaReport:
    risk_mean: float
    frobenius_norm: float


def constructed_gamma_eval(A: np.ndarray, W: np.ndarray, b: np.ndarray,
                           cfg: ProblemConfig, N: int, n_tasks: int,
                           queries_per_task: int, seed: int) -> ConstructedGammaReport:
    """Mean absolute prediction error of the explicitly constructed attention
    matrix AA^T on fresh prompts."""
    _require_canonical(cfg)
    from .model import predict_queries

    params = ModelParams(W=W, b=b, gamma=Gamma("lowrank", A))
    errs = []
    for t in range(n_tasks):
        rng = stream(seed, "validation", t)
        task = sample_task(cfg, rng)
        pr = sample_prompt(task, N, cfg, rng)
        queries = rng.standard_normal((cfg.d, queries_per_task))
        y = eval_target_batch(task, queries)
        if cfg.tau > 0:
            y = y + cfg.tau * rng.choice([-1.0, 1.0], size=y.shape)
        preds = predict_queries(params, pr.X, pr.y, queries)
        errs.append(np.mean(np.abs(preds - y)))
    return ConstructedGammaReport(
        risk_mean=float(np.mean(errs)),
        frobenius_norm=Gamma("lowrank", A).frobenius_norm())


@dataclass
class ConcentrationTable:
    context_lengths: np.ndarray
    mean_abs_error: np.ndarray
    stderr: np.ndarray
    slope: float  # log-log fit; 1/sqrt(N) concentration shows as ~ -0.5

    def to_csv(self, path) -> None:
        """Columns: context_length, abs_error_mean, abs_error_stderr."""
        with open(path, "w", newline="") as fh:
            wr = csv.writer(fh)
            wr.writerow(["context_length", "abs_error_mean", "abs_error_stderr"])
            for n, mu, se in zip(self.context_lengths, self.mean_abs_error,
                                 self.stderr):
                wr.writerow([int(n), f"{mu:.10g}", f"{se:.10g}"])


def correlation_concentration(task: TaskSpec, p: BasisIndex,
                              cfg: ProblemConfig, N_grid, reps: int,
                              seed: int) -> ConcentrationTable:
    """|empirical label-basis correlation - exact value| versus context length."""
    _require_canonical(cfg)
    if not (task.Q <= p.degree <= task.P):
        raise ValueError("basis degree outside the task's Hermite band")
    exact = exact_correlation(task, p)
    r = len(p.p)
    N_grid = np.asarray(sorted(N_grid), dtype=int)
    means = np.empty(len(N_grid))
    errs = np.empty(len(N_grid))
    for k, N in enumerate(N_grid):
        vals = np.empty(reps)
        for rep in range(reps):
            rng = stream(seed, "diagnostic", k * reps + rep)
            X = rng.standard_normal((cfg.d, N))
            y = eval_target_batch(task, X)
            if cfg.tau > 0:
                y = y + cfg.tau * rng.choice([-1.0, 1.0], size=y.shape)
            emp = float(np.mean(y * eval_basis_matrix([p], X[:r])[0]))
            vals[rep] = abs(emp - exact)
        means[k] = vals.mean()
        errs[k] = vals.std(ddof=1) / math.sqrt(reps)
    slope = float(np.polyfit(np.log(N_grid), np.log(means), 1)[0])
    return ConcentrationTable(context_lengths=N_grid, mean_abs_error=means,
                              stderr=errs, slope=slope)
