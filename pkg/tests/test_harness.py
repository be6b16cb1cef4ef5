import json
from dataclasses import replace

import numpy as np
import pytest

from meshacq.acquisition import AgentConfig
from meshacq.core import SelectionMask
from meshacq.harness import (
    CurvePoint,
    RunConfig,
    Selection,
    aggregate,
    aggregate_methods,
    iterations_to_threshold,
    median_curve,
    pretrain_agent,
    query_solver,
    read_curve,
    read_selections,
    run_active_learning,
    run_budget_sweep,
    run_seed,
    sweep_schedule,
    write_curve,
    write_selections,
)
from meshacq.reward import RewardConfig
from meshacq.surrogate import RidgeConfig

TINY_AGENT = AgentConfig(hidden=32, batch_size=16, imitation_epochs=5)


def tiny(method="uniform", **kw):
    base = dict(method=method, iterations=3, instances_per_iteration=5, budget=20, pretrain_size=20,
                holdout_size=10, seeds=(0, 1), surrogate=RidgeConfig(input_scale=0.1),
                reward=RewardConfig(proxy=RidgeConfig(input_scale=0.1, mode="interpolate")),
                agent=TINY_AGENT, demo_instances=20, updates_per_episode=2)
    base.update(kw)
    return RunConfig(**base)


def pts(values, seed=0):
    return [CurvePoint(k, 10 * k, 0, v, 0.1 * k, seed) for k, v in enumerate(values, start=1)]


def test_run_config_validation():
    with pytest.raises(ValueError):
        tiny("nonsense")
    with pytest.raises(ValueError):
        tiny(solver_mode="fast")
    with pytest.raises(ValueError):
        tiny(schedule=(1, 2))
    assert tiny(schedule=(1, 2, 3)).per_iteration() == [1, 2, 3]
    assert tiny().fingerprint() != tiny(budget=21).fingerprint()


def test_corpus_too_small_is_reported(small_corpus):
    with pytest.raises(ValueError, match="training instances"):
        run_seed(small_corpus, tiny(instances_per_iteration=50), 0)


def test_curve_rows_and_dataset_growth(small_corpus):
    curve = run_seed(small_corpus, tiny(), 0)
    assert [p.iteration for p in curve] == [1, 2, 3]
    assert [p.samples for p in curve] == [25, 30, 35]
    assert all(p.solver_time == 0.0 for p in curve)


@pytest.mark.parametrize("method", ["uniform", "random", "gradient", "intensity", "variance", "oracle", "rlmesh"])
def test_query_budget_parity(small_corpus, method):
    cfg = tiny(method, seeds=(0,))
    curve = run_seed(small_corpus, cfg, 0)
    n = small_corpus.spec.field_size
    expected = [20 * n + k * 5 * 20 for k in (1, 2, 3)]
    assert [p.queries for p in curve] == expected
    assert all(np.isfinite(p.rmse) for p in curve)


def test_full_information_is_dense(small_corpus):
    curve = run_seed(small_corpus, tiny("full_information"), 0)
    assert curve[-1].queries == 20 * 129 + 15 * 129


def test_rerun_bit_exact(small_corpus, tmp_path):
    cfg = tiny("rlmesh", seeds=(0,))
    a = run_seed(small_corpus, cfg, 0, tmp_path / "a")
    b = run_seed(small_corpus, cfg, 0, tmp_path / "b")
    d = "runs/burgers/rlmesh/0/curve.csv"
    assert (tmp_path / "a" / d).read_bytes() == (tmp_path / "b" / d).read_bytes()
    assert [p.rmse for p in a] == [p.rmse for p in b]


@pytest.mark.parametrize("method", ["oracle", "rlmesh"])
def test_resume_matches_uninterrupted(small_corpus, tmp_path, method):
    cfg = tiny(method, seeds=(0,), retrain_interval=2)
    full = run_seed(small_corpus, cfg, 0, tmp_path / "full")
    part = run_seed(small_corpus, cfg, 0, tmp_path / "part", stop_after=1)
    assert len(part) == 1
    resumed = run_seed(small_corpus, cfg, 0, tmp_path / "part")
    assert [p.rmse for p in resumed] == [p.rmse for p in full]
    d = f"runs/burgers/{method}/0"
    for name in ("curve.csv", "selections.csv"):
        assert (tmp_path / "full" / d / name).read_bytes() == (tmp_path / "part" / d / name).read_bytes()
    if method == "rlmesh":
        for name in ("rewards.csv", "train_log.csv"):
            assert (tmp_path / "full" / d / name).read_bytes() == (tmp_path / "part" / d / name).read_bytes()


def test_force_restarts_and_manifest(small_corpus, tmp_path):
    cfg = tiny(seeds=(0,))
    run_seed(small_corpus, cfg, 0, tmp_path, stop_after=1)
    curve = run_seed(small_corpus, cfg, 0, tmp_path, force=True)
    assert len(curve) == 3
    man = json.loads((tmp_path / "runs/burgers/uniform/0/manifest.json").read_text())
    assert man["method"] == "uniform" and man["seed"] == 0 and "pretrain_rmse" in man
    other = run_seed(small_corpus, replace(cfg, method="random"), 0, tmp_path)
    man2 = json.loads((tmp_path / "runs/burgers/random/0/manifest.json").read_text())
    assert man2["pretrain_rmse"] == man["pretrain_rmse"]
    assert len(other) == 3


def test_selections_are_distinct_and_logged(small_corpus, tmp_path):
    run_seed(small_corpus, tiny("oracle", seeds=(0,)), 0, tmp_path)
    sels = read_selections(tmp_path / "runs/burgers/oracle/0/selections.csv")
    assert len(sels) == 15
    assert all(len(set(s.indices)) == 20 for s in sels)
    assert len({s.instance_id for s in sels}) == 15


def test_nonuniform_mode_charges_time(small_corpus):
    curve = run_seed(small_corpus, tiny("uniform", iterations=2, instances_per_iteration=2), 0)
    assert curve[0].solver_time == 0.0
    timed = run_seed(small_corpus, tiny("uniform", iterations=2, instances_per_iteration=2,
                                        solver_mode="nonuniform"), 0)
    assert 0 < timed[0].solver_time < timed[1].solver_time


def test_query_solver_modes(small_corpus):
    mask = SelectionMask(tuple(range(0, 129, 4)), 33)
    exact, t = query_solver(small_corpus, 30, mask, "oracle_uniform")
    assert t == 0.0
    np.testing.assert_array_equal(exact, small_corpus.train[30].observed[list(mask.indices)])
    approx, t = query_solver(small_corpus, 30, mask, "nonuniform")
    assert t > 0 and np.mean(np.abs(approx - exact)) < 2e-2


def test_pretrain_agent_fits_demonstrations(small_corpus):
    agent, acc = pretrain_agent(small_corpus, tiny("rlmesh", agent=replace(TINY_AGENT, imitation_epochs=40)), 0,
                                report=True)
    assert acc > 0.5
    assert agent.updates == 0 and len(agent.buffer) == 0


def test_run_active_learning_and_aggregate(small_corpus):
    curves = run_active_learning(small_corpus, tiny())
    assert set(curves) == {0, 1}
    rows = aggregate(curves)
    assert len(rows) == 3 and rows[0].rmse_std >= 0


def test_budget_sweep(small_corpus, tmp_path):
    res = run_budget_sweep(small_corpus, tiny(seeds=(0,)), budgets=(10, 30), total_budget=300, out=tmp_path)
    assert set(res) == {10, 30}
    assert res[10][0][-1].queries - 20 * 129 == 300
    assert res[30][0][-1].queries - 20 * 129 == 300
    assert (tmp_path / "sweep_B10" / "runs/burgers/uniform/0/curve.csv").exists()


def test_sweep_schedule():
    assert sum(sweep_schedule(100, 10, 10_000)) == 100
    assert sum(sweep_schedule(20, 10, 10_000)) == 500
    for b in (20, 40, 60, 80, 100):
        assert abs(sum(sweep_schedule(b, 10, 10_000)) * b - 10_000) <= b - 1
    with pytest.raises(ValueError):
        sweep_schedule(100, 10, 500)


def test_aggregate_examples():
    dup = {0: pts([0.1, 0.2]), 1: pts([0.1, 0.2], seed=1)}
    assert all(r.rmse_std == 0 for r in aggregate(dup))
    two = {0: pts([0.01]), 1: pts([0.03], seed=1)}
    assert aggregate(two)[0].rmse_mean == pytest.approx(0.02)
    flipped = {1: two[1], 0: two[0]}
    assert aggregate(flipped) == aggregate(two)
    with pytest.raises(ValueError):
        aggregate({0: pts([0.1])})
    with pytest.raises(ValueError):
        aggregate_methods({"a": two, "b": {0: pts([0.01]), 2: pts([0.02], seed=2)}})
    np.testing.assert_allclose(median_curve({0: pts([1, 2]), 1: pts([3, 4]), 2: pts([5, 0])}), [3, 2])


def test_iterations_to_threshold():
    curve = pts([0.09, 0.08, 0.07, 0.06, 0.055, 0.045, 0.04])
    assert iterations_to_threshold(curve, 0.05) == 6
    assert iterations_to_threshold(curve, 0.01) is None
    with pytest.raises(ValueError):
        iterations_to_threshold(curve, 0)


def test_curve_and_selection_io(tmp_path):
    c = pts([0.1, 0.05])
    write_curve(tmp_path / "c.csv", c)
    assert read_curve(tmp_path / "c.csv") == c
    s = [Selection(1, 4, (3, 1, 2))]
    write_selections(tmp_path / "s.csv", s)
    assert read_selections(tmp_path / "s.csv") == s
