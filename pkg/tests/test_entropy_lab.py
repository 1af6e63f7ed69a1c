import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gmflab.entropy_lab import (HistogramEstimator, MappingExperimentConfig, RankTrialConfig,
                                WidthSweepConfig, build_probe, histogram_entropy, joint_entropy,
                                mapping_task, mutual_information, numerical_rank, rank_trial,
                                up_down_experiment, width_sweep)
from gmflab.errors import ConfigError, ContractError

from oracles import plugin_entropy_from_probs


def test_constant_samples_have_zero_entropy():
    assert histogram_entropy(np.full(100, 3.0), bins=8) == 0.0


def test_uniform_eight_bins():
    rng = np.random.default_rng(0)
    x = rng.integers(0, 8, 100_000).astype(float)
    assert abs(histogram_entropy(x, bins=8, ranges=[(-0.5, 7.5)]) - math.log(8)) < 0.01


def test_bernoulli_quarter():
    expected = plugin_entropy_from_probs([0.25, 0.75])
    assert abs(expected - 0.5623) < 1e-4
    x = (np.random.default_rng(1).random(100_000) < 0.25).astype(float)
    assert abs(histogram_entropy(x, bins=2) - expected) < 0.01


def test_independent_coins_have_no_information():
    rng = np.random.default_rng(2)
    x, y = rng.integers(0, 2, 100_000), rng.integers(0, 2, 100_000)
    assert mutual_information(x, y, bins=2) < 0.01


def test_identity_mi_equals_entropy():
    x = np.random.default_rng(3).normal(size=5000)
    assert mutual_information(x, x, bins=10) == pytest.approx(histogram_entropy(x, bins=10), abs=1e-12)


def test_correlated_table_mi():
    table = np.array([[0.4, 0.1], [0.1, 0.4]])
    px, py = table.sum(1), table.sum(0)
    closed = float((table * np.log(table / np.outer(px, py))).sum())
    assert abs(closed - 0.1927) < 1e-4
    cells = np.random.default_rng(4).choice(4, size=100_000, p=table.ravel())
    x, y = cells // 2, cells % 2
    assert abs(mutual_information(x, y, bins=2) - closed) < 0.02


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.integers(2, 12), st.integers(20, 400))
def test_mi_symmetric_and_nonnegative(seed, bins, n):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=n)
    y = 0.5 * x + rng.normal(size=n)
    ranges = [(-5.0, 5.0), (-5.0, 5.0)]
    a = mutual_information(x, y, bins=bins, ranges=ranges)
    b = mutual_information(y, x, bins=bins, ranges=ranges)
    assert a == b and a >= 0.0


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000), st.integers(2, 32), st.integers(1, 300))
def test_entropy_bounds(seed, bins, n):
    x = np.random.default_rng(seed).standard_t(2, size=n)
    h = histogram_entropy(x, bins=bins)
    assert 0.0 <= h <= math.log(bins) + 1e-12


def test_joint_entropy_subadditive():
    rng = np.random.default_rng(5)
    x, y = rng.normal(size=3000), rng.normal(size=3000)
    assert joint_entropy(x, y, bins=8) <= histogram_entropy(x, 8) + histogram_entropy(y, 8) + 1e-12


def test_estimator_accumulates():
    rng = np.random.default_rng(6)
    a, b = rng.random(500), rng.random(700)
    est = HistogramEstimator(5, [(0.0, 1.0)]).fit(a).fit(b)
    assert est.n == 1200
    assert est.probabilities().sum() == pytest.approx(1.0)
    assert est.entropy() == pytest.approx(histogram_entropy(np.concatenate([a, b]), 5, [(0.0, 1.0)]))


def test_estimator_contracts():
    with pytest.raises(ContractError):
        histogram_entropy([], bins=4)
    with pytest.raises(ContractError):
        histogram_entropy([1.0, 2.0], bins=1)
    with pytest.raises(ContractError):
        mutual_information([1, 2, 3], [1, 2], bins=2)


def test_rank_matches_svd_oracle():
    rng = np.random.default_rng(7)
    for _ in range(200):
        r, c = rng.integers(1, 9, 2)
        k = rng.integers(1, min(r, c) + 1)
        a = rng.normal(size=(r, k)) @ rng.normal(size=(k, c))
        assert numerical_rank(a) == np.linalg.matrix_rank(a) == k


def test_rank_of_zero_and_bound():
    assert numerical_rank(np.zeros((3, 4))) == 0
    rng = np.random.default_rng(8)
    for shape in [(2, 8), (8, 2), (5, 5)]:
        assert numerical_rank(rng.normal(size=shape)) <= min(shape)


def test_rank_trials():
    assert rank_trial(RankTrialConfig(8, 2, 1000, seed=1)).full_rank_fraction == 1.0
    half = rank_trial(RankTrialConfig(8, 0.5, 1000, seed=1))
    assert half.rank_d_fraction == 0.0
    assert half.ranks.max() <= 4 and half.full_rank_fraction == 1.0
    assert rank_trial(RankTrialConfig(1, 1, 100)).full_rank_fraction == 1.0


def test_rank_trial_config_contracts():
    with pytest.raises(ConfigError):
        RankTrialConfig(8, 2, trials=99)
    with pytest.raises(ConfigError):
        RankTrialConfig(8, 0.0)


def test_identity_init_matches_direct_probe_exactly():
    cfg = MappingExperimentConfig(magnifications=(1.0,), identity_init=True, samples=300)
    f, _ = mapping_task(cfg, 1)
    direct, _ = build_probe(cfg, None, 1)
    mapped, params = build_probe(cfg, 1.0, 1)
    assert np.array_equal(direct(f).value, mapped(f).value)
    assert len(params) == 4


def test_mapping_config_contracts():
    with pytest.raises(ConfigError):
        MappingExperimentConfig(magnifications=(0.0, 1.0))
    with pytest.raises(ConfigError):
        MappingExperimentConfig(seeds=(1, 2))


def test_up_down_small_run_reports_every_cell():
    cfg = MappingExperimentConfig(samples=600, epochs=3, anneal_epochs=1, magnifications=(0.5, 2.0))
    rep = up_down_experiment(cfg)
    assert [a["cell"] for a in rep.aggregate] == ["direct", "n=0.5", "n=2"]
    assert len(rep.rows) == 9
    assert all(0.0 <= r["test_acc"] <= 1.0 for r in rep.rows)
    assert up_down_experiment(cfg).to_csv_text() == rep.to_csv_text()


def _means(rep, field="test_acc_mean"):
    return [a[field] for a in rep.aggregate]


@pytest.mark.slow
def test_width_sweep_plateau_and_width_one():
    rep = width_sweep(WidthSweepConfig(samples=2000, label_noise=0.0, epochs=100))
    acc = _means(rep)
    top = acc[len(acc) // 2:]
    assert max(top) - min(top) <= 0.005
    assert min(top) - acc[0] > 0.05
    assert acc[0] < max(acc) and acc[-1] <= max(acc)


@pytest.mark.slow
def test_width_sweep_ratio_declines_past_best_width():
    rep = width_sweep(WidthSweepConfig())
    acc, ratio = _means(rep), _means(rep, "ratio_mean")
    best = int(np.argmax(acc))
    tail = ratio[best:]
    # trend over the grid, tolerating small seed noise between neighbours
    assert all(b <= a + 0.01 for a, b in zip(tail, tail[1:]))
    assert tail[-1] < tail[0] - 0.05
    assert acc[0] < max(acc) and acc[-1] < max(acc)


def test_width_config_contracts():
    with pytest.raises(ConfigError):
        WidthSweepConfig(intrinsic_dim=1)
    with pytest.raises(ConfigError):
        WidthSweepConfig(label_noise=1.0)
