import math
from dataclasses import replace

import numpy as np
import pytest

from iclsim.baselines import KrrConfig, NnConfig
from iclsim.experiment import (CSV_HEADER, DEFAULT_N_GRID, RiskCurve,
                               RiskPoint, config_hash, estimate_icl_risk,
                               read_csv, risk_curve, run_dimension_sweep,
                               run_f2_comparison, transformer_predictor,
                               write_csv)
from iclsim.streams import stream
from iclsim.tasks import ProblemConfig, eval_target_batch, sample_task
from iclsim.training import TrainConfig


def _problem(**kw):
    base = dict(d=4, r=2, Q=2, P=2)
    base.update(kw)
    return ProblemConfig(**base)


def _tiny_train(**kw):
    base = dict(problem=_problem(), m=8, T1=20, N1=10, T2=20, N2=8, seed=5)
    base.update(kw)
    return TrainConfig(**base)


def _oracle_predictor(cfg, seed):
    """Replays the validation streams to recover each task and predicts the
    noise-free target exactly; its risk is therefore exactly tau."""
    counter = [0]

    def predict(X, y, queries):
        rng = stream(seed, "validation", counter[0])
        counter[0] += 1
        task = sample_task(cfg, rng)
        return eval_target_batch(task, queries)

    return predict


def test_default_grid_is_half_powers_of_two():
    assert DEFAULT_N_GRID == (23, 32, 45, 64, 91, 128, 181, 256, 362, 512)


def test_oracle_predictor_attains_noise_floor():
    cfg = _problem(tau=0.25)
    mean, stderr = estimate_icl_risk(_oracle_predictor(cfg, 9), cfg, N_star=16,
                                     n_tasks=12, queries_per_task=8, seed=9)
    assert mean == pytest.approx(0.25, abs=1e-12)
    assert stderr == pytest.approx(0.0, abs=1e-12)


def test_zero_predictor_matches_independent_target_norm():
    # E|prediction - y| for the zero predictor is E|f*|; estimate the latter
    # with a completely separate Monte Carlo over task and query draws.
    cfg = _problem(d=6)
    zero = lambda X, y, queries: np.zeros(queries.shape[1])
    mean, stderr = estimate_icl_risk(zero, cfg, N_star=8, n_tasks=400,
                                     queries_per_task=64, seed=21)
    rng = np.random.default_rng(12345)
    vals = []
    for _ in range(400):
        task = sample_task(cfg, rng)
        vals.append(np.mean(np.abs(eval_target_batch(
            task, rng.standard_normal((6, 64))))))
    ref_mean = np.mean(vals)
    ref_se = np.std(vals, ddof=1) / math.sqrt(len(vals))
    assert abs(mean - ref_mean) < 3 * math.hypot(stderr, ref_se)


def test_stderr_shrinks_with_more_tasks():
    cfg = _problem()
    zero = lambda X, y, queries: np.zeros(queries.shape[1])
    _, se_small = estimate_icl_risk(zero, cfg, 8, n_tasks=64,
                                    queries_per_task=4, seed=3)
    _, se_large = estimate_icl_risk(zero, cfg, 8, n_tasks=256,
                                    queries_per_task=4, seed=3)
    assert se_large < se_small


def test_estimate_risk_input_validation():
    cfg = _problem()
    zero = lambda X, y, queries: np.zeros(queries.shape[1])
    with pytest.raises(ValueError):
        estimate_icl_risk(zero, cfg, 0, 4, 4, 0)
    with pytest.raises(ValueError):
        estimate_icl_risk(zero, cfg, 8, 0, 4, 0)


def test_estimate_risk_deterministic():
    cfg = _problem()
    zero = lambda X, y, queries: np.zeros(queries.shape[1])
    assert estimate_icl_risk(zero, cfg, 8, 16, 4, 7) == \
        estimate_icl_risk(zero, cfg, 8, 16, 4, 7)


def test_risk_curve_validation():
    good = RiskPoint(8, 1.0, 0.1, 1.0, 5.0)
    bad_order = (RiskPoint(16, 1.0, 0.1, 1.0, 5.0), good)
    with pytest.raises(ValueError, match="sorted"):
        RiskCurve("krr", _problem(), 0, "abc", 0, bad_order)
    with pytest.raises(ValueError, match="non-negative"):
        RiskCurve("krr", _problem(), 0, "abc", 0,
                  (RiskPoint(8, -1.0, 0.1, -1.0, 5.0),))


def test_config_hash_sensitivity():
    cfg = _tiny_train()
    assert config_hash(cfg) == config_hash(_tiny_train())
    assert config_hash(cfg) != config_hash(replace(cfg, lambda2=0.2))
    assert config_hash(cfg) != config_hash(
        replace(cfg, problem=_problem(d=5)))
    assert len(config_hash(cfg)) == 12


def test_csv_round_trip(tmp_path):
    cfg = _tiny_train()
    zero = lambda X, y, queries: np.zeros(queries.shape[1])
    curves = [risk_curve(zero, "krr", cfg, 0, (8, 16), 4, 4, cfg.seed),
              risk_curve(zero, "transformer", cfg, cfg.m, (8, 16), 4, 4,
                         cfg.seed)]
    path = tmp_path / "out.csv"
    write_csv(curves, path)
    assert path.read_text().splitlines()[0] == CSV_HEADER
    back = read_csv(path)
    assert len(back) == 2
    for orig, parsed in zip(curves, back):
        assert parsed.method == orig.method
        assert parsed.m == orig.m
        assert parsed.config_hash == orig.config_hash
        assert parsed.seed == orig.seed
        assert parsed.points == orig.points
        assert parsed.problem.d == orig.problem.d
        assert parsed.problem.tau == orig.problem.tau


def test_read_csv_rejects_wrong_header(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("method,risk\nkrr,1.0\n")
    with pytest.raises(ValueError, match="header"):
        read_csv(path)


def test_f2_comparison_smoke():
    cfg = _tiny_train()
    curves, params, report = run_f2_comparison(
        cfg, N_grid=(8, 16), n_tasks=4, queries_per_task=4,
        krr_cfg=KrrConfig(bandwidth_sq=8.0),
        nn_cfg=NnConfig(width=4, optimizer="one_step_gd"))
    assert [c.method for c in curves] == ["transformer", "krr", "nn_one_step"]
    assert {c.config_hash for c in curves} == {config_hash(cfg)}
    assert curves[0].m == cfg.m and curves[1].m == 0 and curves[2].m == 4
    assert params.gamma.layout == "dense"
    assert report.stage2_iterations > 0
    for c in curves:
        assert [p.context_length for p in c.points] == [8, 16]


def test_f2_reuses_supplied_checkpoint():
    cfg = _tiny_train()
    _, params, _ = run_f2_comparison(cfg, N_grid=(8,), n_tasks=2,
                                     queries_per_task=2,
                                     nn_cfg=NnConfig(width=4))
    curves, params2, report = run_f2_comparison(
        cfg, N_grid=(8,), n_tasks=2, queries_per_task=2,
        nn_cfg=NnConfig(width=4), params=params)
    assert params2 is params
    assert report.stage2_iterations == 0  # no training happened
    tr = curves[0]
    direct = risk_curve(transformer_predictor(params), "transformer", cfg,
                        cfg.m, (8,), 2, 2, cfg.seed)
    assert tr.points[0].risk_mean == direct.points[0].risk_mean


def test_dimension_sweep_rejects_small_d():
    with pytest.raises(ValueError, match="at least"):
        run_dimension_sweep(_tiny_train(), d_list=[3, 8], r_list=[4])


def test_dimension_sweep_smoke():
    cfg = _tiny_train()
    curves = run_dimension_sweep(cfg, d_list=[3, 4], r_list=[2],
                                 N_grid=(8,), n_tasks=2, queries_per_task=2)
    assert [(c.problem.d, c.method) for c in curves] == \
        [(3, "transformer"), (3, "krr"), (4, "transformer"), (4, "krr")]
