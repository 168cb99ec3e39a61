"""Risk estimation harness and result emission.

The ICL risk of a predictor is E|prediction - y| over fresh tasks and prompts
of a given context length; a perfect predictor attains the noise level tau, so
excess risk is mean - tau. All methods under comparison are evaluated on the
same validation tasks (shared streams), and baselines only ever receive the
validation prompts — they have no path to the pretraining data.

CSV contract (exact header):
    config_hash,seed,method,d,r,Q,P,m,context_length,risk_mean,risk_stderr,excess_risk,wall_ms
The m column is the transformer / network width; 0 for methods without one.
"""

from __future__ import annotations

import csv
import hashlib
import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .baselines import (KrrConfig, NnConfig, default_krr_config,
                        krr_fit_predict, nn_fit_predict)
from .model import ModelParams, predict_queries
from .streams import stream
from .tasks import ProblemConfig, eval_target_batch, sample_task
from .training import TrainConfig, TrainReport, pretrain

CSV_HEADER = ("config_hash,seed,method,d,r,Q,P,m,context_length,"
              "risk_mean,risk_stderr,excess_risk,wall_ms")

# Half-integer powers of two, matching the published context-length range.
DEFAULT_N_GRID = tuple(int(round(2**e)) for e in
                       (4.5, 5.0, 5.5, 6.0, 6.5, 7.0, 7.5, 8.0, 8.5, 9.0))


@dataclass(frozen=True)
class RiskPoint:
    context_length: int
    risk_mean: float
    risk_stderr: float
    excess_risk: float
    wall_ms: float


@dataclass(frozen=True)
class RiskCurve:
    method: str
    problem: ProblemConfig
    m: int  # width, 0 when not applicable
    config_hash: str
    seed: int
    points: tuple[RiskPoint, ...]

    def __post_init__(self):
        lengths = [p.context_length for p in self.points]
        if lengths != sorted(lengths):
            raise ValueError("points must be sorted by context length")
        for p in self.points:
            if p.risk_mean < 0 or p.risk_stderr < 0:
                raise ValueError("risk and stderr must be non-negative")


def config_hash(cfg: TrainConfig) -> str:
    """Stable short hash of every config field, for provenance in output rows."""
    items = []
    for k, v in sorted(vars(cfg).items()):
        items.append(f"{k}={vars(v) if isinstance(v, ProblemConfig) else v!r}")
    return hashlib.sha256(";".join(items).encode()).hexdigest()[:12]


def estimate_icl_risk(predict_fn, cfg: ProblemConfig, N_star: int,
                      n_tasks: int, queries_per_task: int,
                      seed: int) -> tuple[float, float]:
    """Mean absolute error and task-clustered standard error.

    predict_fn(X, y, queries) sees only the validation prompt. Validation
    streams depend on (seed, task index) alone, so every method evaluated with
    the same seed faces identical tasks, contexts, and queries.
    """
    if n_tasks < 1 or queries_per_task < 1 or N_star < 1:
        raise ValueError("n_tasks, queries_per_task, N_star must be positive")
    task_means = np.empty(n_tasks)
    for t in range(n_tasks):
        rng = stream(seed, "validation", t)
        task = sample_task(cfg, rng)
        X = rng.standard_normal((cfg.d, N_star))
        y = eval_target_batch(task, X)
        queries = rng.standard_normal((cfg.d, queries_per_task))
        y_q = eval_target_batch(task, queries)
        if cfg.tau > 0:
            y = y + cfg.tau * rng.choice([-1.0, 1.0], size=y.shape)
            y_q = y_q + cfg.tau * rng.choice([-1.0, 1.0], size=y_q.shape)
        preds = np.asarray(predict_fn(X, y, queries))
        task_means[t] = np.mean(np.abs(preds - y_q))
    mean = float(task_means.mean())
    stderr = float(task_means.std(ddof=1) / math.sqrt(n_tasks)) if n_tasks > 1 else 0.0
    return mean, stderr


def transformer_predictor(params: ModelParams):
    return lambda X, y, queries: predict_queries(params, X, y, queries)


def krr_predictor(cfg: KrrConfig):
    return lambda X, y, queries: krr_fit_predict(cfg, X, y, queries)


def nn_predictor(cfg: NnConfig, seed: int):
    # Fresh model per prompt; the fit stream advances with each call so the
    # whole evaluation is reproducible from (seed, call order).
    counter = [0]

    def predict(X, y, queries):
        rng = stream(seed, "baseline", counter[0])
        counter[0] += 1
        return nn_fit_predict(cfg, X, y, queries, rng)

    return predict


def risk_curve(predict_fn, method: str, cfg: TrainConfig, width: int, N_grid,
               n_tasks: int, queries_per_task: int, seed: int) -> RiskCurve:
    points = []
    for N_star in sorted(N_grid):
        t0 = time.perf_counter()
        mean, se = estimate_icl_risk(predict_fn, cfg.problem, N_star,
                                     n_tasks, queries_per_task, seed)
        wall = (time.perf_counter() - t0) * 1e3
        points.append(RiskPoint(N_star, mean, se, mean - cfg.problem.tau, wall))
    return RiskCurve(method=method, problem=cfg.problem, m=width,
                     config_hash=config_hash(cfg), seed=seed,
                     points=tuple(points))


def run_f2_comparison(cfg: TrainConfig, N_grid=DEFAULT_N_GRID,
                      n_tasks: int = 128, queries_per_task: int = 128,
                      krr_cfg: KrrConfig | None = None,
                      nn_cfg: NnConfig | None = None,
                      params: ModelParams | None = None,
                      ) -> tuple[list[RiskCurve], ModelParams, TrainReport]:
    """Pretrain once (unless a checkpoint is supplied), then evaluate the
    transformer, kernel ridge regression, and the one-step-GD network on
    shared validation tasks across the context-length grid."""
    report = TrainReport()
    if params is None:
        params, report = pretrain(cfg)
    if krr_cfg is None:
        krr_cfg = default_krr_config(cfg.problem.d)
    if nn_cfg is None:
        nn_cfg = NnConfig(width=cfg.m, optimizer="one_step_gd")
    curves = [
        risk_curve(transformer_predictor(params), "transformer", cfg, cfg.m,
               N_grid, n_tasks, queries_per_task, cfg.seed),
        risk_curve(krr_predictor(krr_cfg), "krr", cfg, 0,
               N_grid, n_tasks, queries_per_task, cfg.seed),
        risk_curve(nn_predictor(nn_cfg, cfg.seed), "nn_one_step", cfg, nn_cfg.width,
               N_grid, n_tasks, queries_per_task, cfg.seed),
    ]
    return curves, params, report


def run_dimension_sweep(cfg: TrainConfig, d_list, r_list,
                        N_grid=DEFAULT_N_GRID, n_tasks: int = 128,
                        queries_per_task: int = 128) -> list[RiskCurve]:
    """One pretraining per (d, r); transformer and KRR curves on a shared grid."""
    r_max = max(r_list)
    if any(d < r_max for d in d_list):
        raise ValueError("every d must be at least max(r_list)")
    curves = []
    for d in d_list:
        for r in r_list:
            sub = replace(cfg, problem=replace(cfg.problem, d=d, r=r))
            params, _ = pretrain(sub)
            curves.append(risk_curve(transformer_predictor(params), "transformer",
                                 sub, sub.m, N_grid, n_tasks,
                                 queries_per_task, sub.seed))
            curves.append(risk_curve(krr_predictor(default_krr_config(d)), "krr",
                                 sub, 0, N_grid, n_tasks,
                                 queries_per_task, sub.seed))
    return curves


def write_csv(curves: list[RiskCurve], path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(CSV_HEADER + "\n")
        wr = csv.writer(fh)
        for c in curves:
            p = c.problem
            for pt in c.points:
                wr.writerow([c.config_hash, c.seed, c.method, p.d, p.r, p.Q,
                             p.P, c.m, pt.context_length,
                             repr(pt.risk_mean), repr(pt.risk_stderr),
                             repr(pt.excess_risk), repr(pt.wall_ms)])


def read_csv(path) -> list[RiskCurve]:
    """Parse an emitted file back into curves (grouped by hash/seed/method/d/r)."""
    with open(path, newline="") as fh:
        header = fh.readline().strip()
        if header != CSV_HEADER:
            raise ValueError(f"unexpected CSV header: {header!r}")
        groups: dict[tuple, list] = {}
        order: list[tuple] = []
        for row in csv.reader(fh):
            (chash, seed, method, d, r, Q, P, m, N, mean, se, excess, wall) = row
            key = (chash, int(seed), method, int(d), int(r), int(Q), int(P), int(m))
            if key not in groups:
                groups[key] = []
                order.append(key)
            groups[key].append(RiskPoint(int(N), float(mean), float(se),
                                         float(excess), float(wall)))
    curves = []
    for key in order:
        chash, seed, method, d, r, Q, P, m = key
        pts = sorted(groups[key], key=lambda p: p.context_length)
        tau = pts[0].risk_mean - pts[0].excess_risk
        problem = ProblemConfig(d=d, r=r, Q=Q, P=P, tau=max(round(tau, 12), 0.0))
        curves.append(RiskCurve(method=method, problem=problem, m=m,
                                config_hash=chash, seed=seed, points=tuple(pts)))
    return curves
