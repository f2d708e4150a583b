"""Simulation conditions, generator properties, and the Bayes oracle."""

import math

import numpy as np
import pytest

from stackbench.core import InvalidArgumentError, SeededRng
from stackbench import simgen
from stackbench.simgen import (
    DEFAULT_FLIP_RATE,
    SimCondition,
    bayes_accuracy,
    condition_catalog,
    generate,
    generate_with_flips,
    signal,
)


# --------------------------------------------------------------------------
# condition type

def test_condition_validation():
    with pytest.raises(InvalidArgumentError):
        SimCondition("quadratic", "low")
    with pytest.raises(InvalidArgumentError):
        SimCondition("linear", "medium")
    with pytest.raises(InvalidArgumentError):
        SimCondition("linear", "low", 0.075)   # flips need high noise
    with pytest.raises(InvalidArgumentError):
        SimCondition("linear", "high", 0.04)   # below the documented range
    with pytest.raises(InvalidArgumentError):
        SimCondition("linear", "high", 0.11)
    SimCondition("linear", "high", 0.05)
    SimCondition("linear", "high", 0.10)


def test_condition_ids_and_doc_roundtrip():
    c = SimCondition("mixed", "high", 0.075)
    assert c.condition_id == "mixed-high-mis"
    assert SimCondition.from_doc(c.to_doc()) == c
    assert SimCondition.from_id("mixed-high-mis") == c
    assert SimCondition.from_id("linear-low") == SimCondition("linear", "low")
    with pytest.raises(InvalidArgumentError):
        SimCondition.from_id("linear")
    with pytest.raises(InvalidArgumentError):
        SimCondition.from_id("linear-low-mis")


def test_catalog_is_the_nine_paper_cells():
    cat = condition_catalog()
    assert len(cat) == 9
    assert [c.condition_id for c in cat] == [
        "linear-low", "linear-high", "linear-high-mis",
        "nonlinear-low", "nonlinear-high", "nonlinear-high-mis",
        "mixed-low", "mixed-high", "mixed-high-mis",
    ]
    flagged = [c for c in cat if c.misclassification_rate is not None]
    assert len(flagged) == 3
    assert all(c.noise == "high" for c in flagged)
    assert all(c.misclassification_rate == DEFAULT_FLIP_RATE for c in flagged)


# --------------------------------------------------------------------------
# generation

def test_generate_shapes_and_determinism():
    cond = SimCondition("nonlinear", "high")
    d1 = generate(cond, 500, SeededRng(7, "g"))
    d2 = generate(cond, 500, SeededRng(7, "g"))
    assert d1.features.shape == (500, 13)
    assert set(np.unique(d1.labels)) <= {0.0, 1.0}
    assert np.array_equal(d1.features, d2.features)
    assert np.array_equal(d1.labels, d2.labels)
    d3 = generate(cond, 500, SeededRng(8, "g"))
    assert not np.array_equal(d1.features, d3.features)


def test_generate_minimum_n():
    with pytest.raises(InvalidArgumentError):
        generate(SimCondition("linear", "low"), 9, SeededRng(0))


def test_flip_indices_actually_flip():
    cond = SimCondition("linear", "high", 0.10)
    rng = SeededRng(3, "flip")
    flipped_data, flipped = generate_with_flips(cond, 2000, rng)
    clean = generate(SimCondition("linear", "high"), 2000, SeededRng(3, "flip"))
    assert np.array_equal(flipped_data.features, clean.features)
    diff = np.flatnonzero(flipped_data.labels != clean.labels)
    assert np.array_equal(diff, flipped)
    assert flipped.size > 0


def test_flip_fraction_within_99pct_interval():
    rate = DEFAULT_FLIP_RATE
    n = 10000
    half = 2.5758293035489004 * math.sqrt(rate * (1 - rate) / n)
    cond = SimCondition("mixed", "high", rate)
    for seed in range(5):
        _, flipped = generate_with_flips(cond, n, SeededRng(seed, "ci"))
        assert abs(flipped.size / n - rate) <= half


def test_noise_features_uncorrelated_with_labels():
    n = 10000
    bound = 4.0 / math.sqrt(n)
    for cond in condition_catalog():
        data = generate(cond, n, SeededRng(17, cond.condition_id))
        yc = data.labels - data.labels.mean()
        sy = math.sqrt(float(yc @ yc))
        for j in range(4, 13):
            xc = data.features[:, j] - data.features[:, j].mean()
            corr = abs(float(xc @ yc)) / (math.sqrt(float(xc @ xc)) * sy)
            assert corr < bound, (cond.condition_id, j, corr)


def test_label_balance_at_scale():
    for cond in condition_catalog():
        data = generate(cond, 10000, SeededRng(23, cond.condition_id))
        prevalence = float(data.labels.mean())
        assert 0.35 <= prevalence <= 0.65, (cond.condition_id, prevalence)


def test_signal_forms_are_the_documented_constants():
    X = np.zeros((3, 13))
    X[0, :4] = [1.0, 1.0, 1.0, 1.0]
    X[1, :4] = [0.5, -1.0, 2.0, 0.0]
    lin = signal("linear", X)
    assert math.isclose(lin[0], 1.5 - 2.0 + 1.0 + 0.5)
    assert math.isclose(lin[1], 0.75 + 2.0 + 2.0)
    nl = signal("nonlinear", X)
    assert math.isclose(nl[0], 2 * math.sin(2.0) + 0.0 + 1.5)
    mx = signal("mixed", X)
    assert math.isclose(mx[0], 1.5 - 2.0 + 2 * math.sin(2.0) + 0.0)


# --------------------------------------------------------------------------
# Bayes oracle

def test_bayes_flip_algebra():
    # flip adjustment is (1-r)a + r(1-a); with a -> 1 the rate caps at 1-r
    base = SimCondition("linear", "high")
    flip = SimCondition("linear", "high", 0.075)
    a = bayes_accuracy(base, 100_000, SeededRng(5, "b"))
    af = bayes_accuracy(flip, 100_000, SeededRng(5, "b"))
    assert math.isclose(af, (1 - 0.075) * a + 0.075 * (1 - a), rel_tol=1e-12)


def test_bayes_ordering_low_high_flip():
    for rel in ("linear", "nonlinear", "mixed"):
        lo = bayes_accuracy(SimCondition(rel, "low"), 100_000, SeededRng(1, "o"))
        hi = bayes_accuracy(SimCondition(rel, "high"), 100_000, SeededRng(1, "o"))
        fl = bayes_accuracy(SimCondition(rel, "high", 0.075), 100_000,
                            SeededRng(1, "o"))
        assert lo > hi > fl


def test_bayes_monte_carlo_stability():
    cond = SimCondition("linear", "low")
    values = [bayes_accuracy(cond, 1_000_000, SeededRng(s, "stab"))
              for s in range(3)]
    assert max(values) - min(values) <= 0.002


def test_bayes_zero_noise_limit_is_one():
    # shrink sigma towards zero: accuracy of the optimal rule tends to 1
    from scipy.special import ndtr

    gen = SeededRng(2, "z").child("bayes").gen
    eta = signal("linear", gen.standard_normal((50_000, 13)))
    accs = [float(ndtr(np.abs(eta) / sigma).mean())
            for sigma in (0.5, 0.05, 0.005)]
    assert accs == sorted(accs)
    assert accs[-1] > 0.999


def test_bayes_chunking_invariance():
    cond = SimCondition("mixed", "high")
    a = bayes_accuracy(cond, 100_000, SeededRng(9, "c"), chunk=100_000)
    b = bayes_accuracy(cond, 100_000, SeededRng(9, "c"), chunk=7_919)
    assert math.isclose(a, b, rel_tol=1e-9)
