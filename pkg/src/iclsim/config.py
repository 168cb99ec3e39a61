"""Flat key=value experiment configuration.

Files contain one `key = value` pair per line; blank lines and `#` comments
are ignored. Keys mirror the ProblemConfig / TrainConfig field names, plus a
small set of harness keys:

    d, r, Q, P, tau, coeff_scheme, fixed_coeffs, rotate
    m, T1, N1, T2, N2, lambda2, c_eta, c_gamma, eta1, gamma0,
    eta1_autoscale, stage2_solver, cg_tol, cg_maxiter,
    sgd_batch, sgd_lr, sgd_epochs
    n_tasks, queries_per_task, n_grid,
    krr_bandwidth_sq, krr_ridge, nn_width, nn_optimizer

List-valued keys (fixed_coeffs, n_grid) take comma-separated values. The seed
is never read from a file; it comes from the mandatory --seed flag.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .baselines import KrrConfig, NnConfig, default_krr_config
from .tasks import ProblemConfig
from .training import TrainConfig

_PROBLEM_KEYS = {"d", "r", "Q", "P", "tau", "coeff_scheme", "fixed_coeffs",
                 "rotate"}
_TRAIN_KEYS = {"m", "T1", "N1", "T2", "N2", "lambda2", "c_eta", "c_gamma",
               "eta1", "gamma0", "eta1_autoscale", "stage2_solver", "cg_tol",
               "cg_maxiter", "sgd_batch", "sgd_lr", "sgd_epochs"}
_HARNESS_KEYS = {"n_tasks", "queries_per_task", "n_grid", "krr_bandwidth_sq",
                 "krr_ridge", "nn_width", "nn_optimizer"}
KNOWN_KEYS = _PROBLEM_KEYS | _TRAIN_KEYS | _HARNESS_KEYS

_INT_KEYS = {"d", "r", "Q", "P", "m", "T1", "N1", "T2", "N2", "cg_maxiter",
             "sgd_batch", "sgd_epochs", "n_tasks", "queries_per_task",
             "nn_width"}
_FLOAT_KEYS = {"tau", "lambda2", "c_eta", "c_gamma", "eta1", "gamma0",
               "cg_tol", "sgd_lr", "krr_bandwidth_sq", "krr_ridge"}
_BOOL_KEYS = {"rotate", "eta1_autoscale"}
_LIST_KEYS = {"fixed_coeffs", "n_grid"}


class ConfigError(ValueError):
    pass


def _convert(key: str, raw: str):
    try:
        if key in _INT_KEYS:
            return int(raw)
        if key in _FLOAT_KEYS:
            return float(raw)
        if key in _BOOL_KEYS:
            if raw.lower() in ("true", "1", "yes"):
                return True
            if raw.lower() in ("false", "0", "no"):
                return False
            raise ValueError(raw)
        if key in _LIST_KEYS:
            parts = [p.strip() for p in raw.split(",") if p.strip()]
            return tuple(float(p) if key == "fixed_coeffs" else int(p)
                         for p in parts)
    except ValueError as exc:
        raise ConfigError(f"bad value for {key!r}: {raw!r}") from exc
    return raw


def parse_kv_lines(lines) -> dict:
    out = {}
    for ln, line in enumerate(lines, start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {ln}: expected key = value, got {line!r}")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key not in KNOWN_KEYS:
            raise ConfigError(f"line {ln}: unknown key {key!r}")
        out[key] = _convert(key, raw)
    return out


def load_config_file(path) -> dict:
    with open(path) as fh:
        return parse_kv_lines(fh)


def apply_overrides(values: dict, overrides: list[str]) -> dict:
    """Apply `key=value` strings from the command line on top of file values."""
    values = dict(values)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override must look like key=value: {item!r}")
        key, raw = (s.strip() for s in item.split("=", 1))
        if key not in KNOWN_KEYS:
            raise ConfigError(f"unknown key {key!r}")
        values[key] = _convert(key, raw)
    return values


@dataclass(frozen=True)
class HarnessConfig:
    n_tasks: int = 128
    queries_per_task: int = 128
    n_grid: tuple[int, ...] | None = None  # None -> DEFAULT_N_GRID
    krr: KrrConfig | None = None  # None -> bandwidth 2d, ridge 0.01
    nn: NnConfig | None = None


def build_configs(values: dict, seed: int) -> tuple[TrainConfig, HarnessConfig]:
    missing = {"d", "r", "Q", "P", "m", "T1", "N1", "T2", "N2"} - values.keys()
    if missing:
        raise ConfigError(f"missing required keys: {', '.join(sorted(missing))}")
    problem = ProblemConfig(**{k: values[k] for k in _PROBLEM_KEYS & values.keys()})
    train_kwargs = {k: values[k] for k in _TRAIN_KEYS & values.keys()}
    try:
        train = TrainConfig(problem=problem, seed=seed, **train_kwargs)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    krr = None
    if "krr_bandwidth_sq" in values or "krr_ridge" in values:
        base = default_krr_config(problem.d)
        krr = KrrConfig(
            bandwidth_sq=values.get("krr_bandwidth_sq", base.bandwidth_sq),
            ridge=values.get("krr_ridge", base.ridge))
    nn = None
    if "nn_width" in values or "nn_optimizer" in values:
        nn = NnConfig(width=values.get("nn_width", train.m),
                      optimizer=values.get("nn_optimizer", "one_step_gd"))
    harness = HarnessConfig(
        n_tasks=values.get("n_tasks", 128),
        queries_per_task=values.get("queries_per_task", 128),
        n_grid=values.get("n_grid"), krr=krr, nn=nn)
    return train, harness


def snapshot_lines(values: dict, seed: int) -> str:
    """Resolved key=value text written into the run directory."""
    lines = [f"seed = {seed}"]
    for key in sorted(values):
        val = values[key]
        if isinstance(val, tuple):
            val = ",".join(str(v) for v in val)
        lines.append(f"{key} = {val}")
    return "\n".join(lines) + "\n"
