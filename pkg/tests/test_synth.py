import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ausekit.errors import InputError
from ausekit.metrics import ClassConfig
from ausekit.sparsification import evaluate_dataset
from ausekit.synth import ScenarioSpec, corrupt_labels, generate_scenario


def same(a, b):
    return all(np.array_equal(x.pred, y.pred) and np.array_equal(x.label, y.label)
               and np.array_equal(x.uncertainty, y.uncertainty) for x, y in zip(a, b))


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from(["striped", "blobs"]))
def test_deterministic_per_seed(seed, layout):
    spec = ScenarioSpec(num_classes=4, shape=(16, 16), layout=layout, seed=seed, store_samples=True)
    a, b = generate_scenario(spec), generate_scenario(spec)
    assert same(a, b)
    assert np.array_equal(a[0].samples.probs, b[0].samples.probs)


def test_error_rate_within_binomial_bound():
    acc = [0.3, 0.5, 0.7, 0.9, 0.95]
    spec = ScenarioSpec(num_classes=5, shape=(200, 250), accuracy=acc, seed=4)
    f = generate_scenario(spec)[0]
    for c, a in enumerate(acc):
        on = f.label.reshape(-1) == c
        n = on.sum()
        rate = (f.pred.reshape(-1)[on] != c).mean()
        assert abs(rate - (1 - a)) <= 3 * np.sqrt(a * (1 - a) / n)


def test_calibrated_ranks_errors_first():
    f = generate_scenario(ScenarioSpec(num_classes=6, shape=(32, 32), accuracy=0.6, seed=2))[0]
    err = (f.pred != f.label).reshape(-1)
    assert f.uncertainty[err].min() > f.uncertainty[~err].max()
    g = generate_scenario(ScenarioSpec(num_classes=6, shape=(32, 32), accuracy=0.6, seed=2,
                                       calibration_mode="anticalibrated"))[0]
    assert g.uncertainty[err].max() < g.uncertainty[~err].min()
    h = generate_scenario(ScenarioSpec(num_classes=6, shape=(32, 32), calibration_mode="constant"))[0]
    assert np.ptp(h.uncertainty) == 0.0


def test_samples_match_analytic_entropy_order():
    from ausekit.uncertainty import mean_softmax, normalize_uncertainty, predictive_entropy
    f = generate_scenario(ScenarioSpec(num_classes=5, shape=(20, 20), accuracy=0.7,
                                       store_samples=True, mc_samples=5, seed=8))[0]
    pbar, pred = mean_softmax(f.samples)
    assert np.array_equal(pred, f.pred.reshape(-1))
    np.testing.assert_allclose(normalize_uncertainty(predictive_entropy(pbar), 5), f.uncertainty, atol=1e-9)


def test_perfect_accuracy_gives_zero_ause():
    frames = generate_scenario(ScenarioSpec(num_classes=4, shape=(20, 20), accuracy=1.0))
    r = evaluate_dataset(frames, "precomputed", ClassConfig(4), 10)
    assert all(c.ause_normalized == 0.0 for c in r.classes)


def test_anticalibrated_example():
    frames = generate_scenario(ScenarioSpec(num_classes=6, shape=(60, 60), accuracy=0.7,
                                            calibration_mode="anticalibrated", seed=5))
    r = evaluate_dataset(frames, "precomputed", ClassConfig(6), 100)
    assert all(c.ause_normalized >= 0.5 for c in r.classes if c.present)


def test_blob_layout_respects_fractions():
    fr = [0.001, 0.099, 0.4, 0.5]
    f = generate_scenario(ScenarioSpec(num_classes=4, shape=(100, 100), layout="blobs",
                                       class_fractions=fr, accuracy=1.0, seed=1))[0]
    counts = np.bincount(f.label.reshape(-1), minlength=4)
    assert counts[0] == 10 and counts[1] == 990


def test_spec_validation():
    with pytest.raises(InputError):
        ScenarioSpec(num_classes=1)
    with pytest.raises(InputError):
        ScenarioSpec(mc_samples=1)
    with pytest.raises(InputError):
        ScenarioSpec(accuracy=1.5)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.01, 0.05))
def test_corruption_ledger(seed, rate):
    frames = generate_scenario(ScenarioSpec(num_classes=5, shape=(160, 160), seed=seed))
    out, ledger = corrupt_labels(frames, rate, seed=seed, num_classes=5)
    before = frames[0].label.reshape(-1)
    after = out[0].label.reshape(-1)
    touched = np.zeros(before.size, bool)
    for r in ledger:
        px = r.pixels(160)
        assert (after[px] != before[px]).all()
        assert not touched[px].any()
        touched[px] = True
    assert np.array_equal(after[~touched], before[~touched])
    assert np.array_equal(out[0].pred, frames[0].pred)
    assert abs(touched.mean() - rate) <= 0.5 * rate


def test_corruption_limits():
    frames = generate_scenario(ScenarioSpec(num_classes=3, shape=(30, 30)))
    out, ledger = corrupt_labels(frames, 1e-6)
    assert ledger == [] and np.array_equal(out[0].label, frames[0].label)
    with pytest.raises(InputError):
        corrupt_labels(frames, 0.0)
    with pytest.raises(InputError):
        corrupt_labels(frames, 0.9, max_attempts=5)
