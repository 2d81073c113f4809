from collections import Counter

import numpy as np
import pytest

from conftest import random_series
from npchange.cusum_core import DetectionConfig, Scanner
from npchange.dgp_sim import ChangeModelSpec, simulate
from npchange.experiment_harness import ExperimentSpec, run_pdc_experiment
from npchange.thresholding import (
    PermutationPolicy,
    block_permutation,
    cube_root_ceil,
    detect,
    nearest_rank,
    permutation_maxima,
    permutation_orders,
    permutation_threshold,
)
from npchange.windowed_regression import PairedSeries

CFG = DetectionConfig(bandwidth=0.8, m=20)


def test_nearest_rank_is_198th_of_200():
    v = np.arange(1.0, 201.0)
    assert nearest_rank(v, 0.99) == 198.0
    assert nearest_rank(v, 0.95) == 190.0
    assert nearest_rank(np.array([7.0]), 0.99) == 7.0


def test_single_permutation_threshold(rng):
    s = random_series(rng, 100)
    policy = PermutationPolicy(n_permutations=1, seed=3)
    (order,) = list(permutation_orders(s.n, policy))
    expected = Scanner(s, CFG).profile(order).values.max()
    assert permutation_threshold(s, CFG, policy) == expected


def test_threshold_deterministic(rng):
    s = random_series(rng, 120, change=True)
    policy = PermutationPolicy(n_permutations=30, seed=11)
    a = permutation_threshold(s, CFG, policy)
    b = permutation_threshold(s, CFG, policy)
    assert a == b


def test_threshold_monotone_in_level(rng):
    s = random_series(rng, 120)
    lo = permutation_threshold(s, CFG, PermutationPolicy(50, 0.95, seed=5))
    hi = permutation_threshold(s, CFG, PermutationPolicy(50, 0.99, seed=5))
    assert lo <= hi


@pytest.mark.parametrize("block", [1, 4, 11, None])
def test_permutations_preserve_pairs(rng, block):
    s = random_series(rng, 97)
    pairs = Counter(zip(s.x.tolist(), s.y.tolist()))
    for order in permutation_orders(s.n, PermutationPolicy(20, seed=2, block_length=block)):
        assert sorted(order.tolist()) == list(range(s.n))
        assert Counter(zip(s.x[order].tolist(), s.y[order].tolist())) == pairs


def test_block_permutation_keeps_runs():
    gen = np.random.default_rng(0)
    order = block_permutation(gen, 50, 7)
    breaks = np.flatnonzero(np.diff(order) != 1)
    # runs are whole blocks, so at most ceil(50/7) + 1 of them
    assert breaks.size + 1 <= 9


def test_default_block_is_cube_root_rounded_up():
    for b in range(1, 40):
        assert cube_root_ceil(b ** 3) == b
        assert cube_root_ceil(b ** 3 + 1) == b + 1
    assert PermutationPolicy().block_for(500) == 8
    assert PermutationPolicy(block_length=50).block_for(20) == 20


def test_block_length_one_is_plain_permutation():
    a = list(permutation_orders(30, PermutationPolicy(5, seed=9, block_length=1)))
    for b, order in enumerate(a):
        from npchange import rng as keyed
        assert order.tolist() == keyed.stream(9, keyed.PERMUTATION, b).permutation(30).tolist()


def test_policy_validation():
    for bad in [dict(n_permutations=0), dict(level=0.0), dict(level=1.0),
                dict(block_length=0), dict(seed=-1)]:
        with pytest.raises(ValueError):
            PermutationPolicy(**bad)


def test_constant_response_never_detected(rng):
    s = PairedSeries(rng.normal(size=100), np.full(100, 1.5))
    out = detect(s, CFG, PermutationPolicy(50, seed=1))
    assert out.max_stat == 0.0
    assert not out.change_detected and out.k_hat is None


def test_decision_coherence(rng):
    for r in range(5):
        s = random_series(rng, 150, change=bool(r % 2))
        out = detect(s, CFG, PermutationPolicy(40, seed=r))
        assert out.change_detected == (out.max_stat > out.threshold)
        assert (out.k_hat is not None) == out.change_detected
        assert out.permutation_maxima.size == 40


def test_tie_means_no_change():
    # every permuted copy of a constant response scans to exactly 0
    s = PairedSeries(np.linspace(-1, 1, 60), np.zeros(60))
    out = detect(s, CFG, PermutationPolicy(10))
    assert out.threshold == out.max_stat == 0.0
    assert not out.change_detected


def test_maxima_use_original_grid(rng):
    s = random_series(rng, 80)
    policy = PermutationPolicy(3, seed=4)
    sc = Scanner(s, CFG)
    want = [sc.profile(o).values.max() for o in permutation_orders(s.n, policy)]
    np.testing.assert_array_equal(permutation_maxima(s, CFG, policy), want)


@pytest.mark.slow
def test_m41_detected_almost_always():
    model = ChangeModelSpec("m41", 0.4)
    hits = sum(
        detect(simulate("arma", model, 500, seed=5, replicate=r), DetectionConfig(),
               PermutationPolicy(seed=r)).change_detected
        for r in range(100)
    )
    assert hits >= 99


@pytest.mark.slow
def test_detection_rate_grows_with_change_size():
    rates = []
    for delta in (0.1, 0.3, 0.5):
        spec = ExperimentSpec("arma", ChangeModelSpec("m42", 0.4, delta), 500,
                              policy=PermutationPolicy(), replications=200, master_seed=21)
        rates.append(run_pdc_experiment(spec).pdc)
    assert rates[0] <= rates[1] <= rates[2]
