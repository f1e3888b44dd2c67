import numpy as np
import pytest

from conftest import extract_runs, fast_cnn, make_scenario
from notilab.classifier import (CnnConfig, TrainingDiverged, centroid_baseline,
                                centroid_cross_validate, convergence_curve, cross_validate,
                                predict, train_cnn, _softmax)
from notilab.dataset import (TimingSequenceSample, balance_classes, build_sequences,
                             group_records, make_folds)
from notilab import seeds


def toy_samples(n_per_class=30, length=1, gap=10.0, rng_seed=0):
    """Two classes fully separated: all A values below all B values."""
    rng = np.random.default_rng(rng_seed)
    samples = []
    for i in range(n_per_class):
        a = tuple(rng.uniform(0.0, 1.0, size=length))
        b = tuple(rng.uniform(gap, gap + 1.0, size=length))
        samples.append(TimingSequenceSample(values=a, label="A", source=("a", i)))
        samples.append(TimingSequenceSample(values=b, label="B", source=("b", i)))
    return samples


def scenario_samples(means, iterations, seed, n=5):
    cfg = make_scenario(means, iterations=iterations, seed=seed)
    rows, labels, _ = extract_runs(cfg)
    samples, _ = build_sequences(group_records(rows), n=n, labels=labels)
    return samples


# ---------------------------------------------------------------------------
# config

def test_config_validation():
    with pytest.raises(ValueError):
        CnnConfig(dropout_rate=1.0)
    with pytest.raises(ValueError):
        CnnConfig(epochs=0)
    with pytest.raises(ValueError):
        CnnConfig(activation="gelu")
    with pytest.raises(ValueError):
        CnnConfig(optimizer="lion")


def test_config_tuned_defaults():
    cfg = CnnConfig()
    assert (cfg.activation, cfg.optimizer) == ("relu", "adam")
    assert (cfg.dropout_rate, cfg.epochs) == (0.1, 60)
    assert (cfg.conv_filters, cfg.fc_layers, cfg.fc_neurons) == (32, 2, 50)


# ---------------------------------------------------------------------------
# training and prediction

def test_separable_classes_reach_perfect_heldout_accuracy():
    folded = make_folds(toy_samples(length=1), seed=0)
    model = train_cnn(folded, fast_cnn(seed=1), fold=0)
    _, test_idx = folded.split(0)
    x = folded.matrix()
    hits = 0
    for i in test_idx:
        _, cls = predict(model, x[i])
        hits += model.classes[cls] == folded.samples[i].label
    assert hits == len(test_idx)


def test_probabilities_sum_to_one():
    folded = make_folds(toy_samples(length=3), seed=0)
    model = train_cnn(folded, fast_cnn(seed=2, epochs=5), fold=0)
    probs, _ = predict(model, folded.matrix()[0])
    assert probs.sum() == pytest.approx(1.0, abs=1e-6)
    assert (probs >= 0.0).all()


def test_predict_rejects_length_mismatch():
    folded = make_folds(toy_samples(length=3), seed=0)
    model = train_cnn(folded, fast_cnn(seed=2, epochs=2), fold=0)
    with pytest.raises(ValueError, match="length"):
        predict(model, [0.1, 0.2])


def test_exact_tie_breaks_to_lowest_class_index():
    folded = make_folds(toy_samples(length=2), seed=0)
    model = train_cnn(folded, fast_cnn(seed=3, epochs=1), fold=0)
    for key in model.params:
        model.params[key][:] = 0.0  # all logits become equal
    probs, cls = predict(model, folded.matrix()[0])
    assert probs[0] == pytest.approx(probs[1])
    assert cls == 0


def test_adding_constant_to_logits_changes_nothing():
    rng = np.random.default_rng(5)
    logits = rng.normal(size=(16, 4))
    base = _softmax(logits)
    shifted = _softmax(logits + 123.456)
    assert np.allclose(base, shifted, atol=1e-9)
    assert (base.argmax(axis=1) == shifted.argmax(axis=1)).all()


def test_nan_input_aborts_with_diagnostics():
    samples = toy_samples(length=2)
    for i in range(10):  # ensure the bad values land in every training split
        samples[i] = TimingSequenceSample(values=(float("nan"), 1.0),
                                          label=samples[i].label, source=("a", 90 + i))
    folded = make_folds(samples, seed=0)
    with pytest.raises(TrainingDiverged, match="epoch"):
        train_cnn(folded, fast_cnn(seed=1, epochs=1), fold=1)


def test_training_is_deterministic():
    folded = make_folds(toy_samples(length=2), seed=4)
    r1 = cross_validate(folded, fast_cnn(seed=11, epochs=5))
    r2 = cross_validate(folded, fast_cnn(seed=11, epochs=5))
    assert np.array_equal(r1.confusion, r2.confusion)
    assert r1.overall_accuracy == r2.overall_accuracy
    assert r1.to_json() == r2.to_json()


# ---------------------------------------------------------------------------
# cross-validation bookkeeping

def test_cross_validation_predicts_every_sample_once():
    samples = toy_samples(n_per_class=20, length=2, gap=0.0)  # inseparable, content irrelevant
    folded = make_folds(samples, seed=1)
    report = cross_validate(folded, fast_cnn(seed=0, epochs=2))
    assert report.n_samples == len(samples)
    assert report.confusion.sum() == len(samples)
    row_sums = report.confusion.sum(axis=1)
    assert row_sums.tolist() == [20, 20]


def test_report_metrics_consistent():
    folded = make_folds(toy_samples(n_per_class=15, length=1), seed=2)
    report = cross_validate(folded, fast_cnn(seed=5, epochs=10))
    c = report.confusion
    assert report.overall_accuracy == pytest.approx(np.trace(c) / c.sum())
    for i, label in enumerate(report.classes):
        col = c[:, i].sum()
        row = c[i, :].sum()
        if col:
            assert report.per_class_precision[label] == pytest.approx(c[i, i] / col)
        if row:
            assert report.per_class_recall[label] == pytest.approx(c[i, i] / row)


def test_permuted_labels_give_chance_level_accuracy():
    base = toy_samples(n_per_class=30, length=3)
    accs = []
    for rep in range(10):
        rng = seeds.sub_rng(1234, rep)
        labels = [s.label for s in base]
        perm = rng.permutation(len(labels))
        shuffled = [TimingSequenceSample(values=s.values, label=labels[perm[i]], source=s.source)
                    for i, s in enumerate(base)]
        folded = make_folds(shuffled, seed=rep)
        accs.append(cross_validate(folded, fast_cnn(seed=rep, epochs=10)).overall_accuracy)
    assert abs(float(np.mean(accs)) - 0.5) <= 0.10


# ---------------------------------------------------------------------------
# centroid baseline

def test_centroid_separable_is_perfect():
    folded = make_folds(toy_samples(length=2), seed=3)
    report = centroid_baseline(folded, fold=0)
    assert report.overall_accuracy == 1.0


def test_centroid_identical_distributions_near_chance():
    cfg = make_scenario([0.1, 0.1], iterations=60, seed=60)
    rows, labels, _ = extract_runs(cfg)
    samples, _ = build_sequences(group_records(rows), n=5, labels=labels)
    folded = make_folds(balance_classes(samples, 0), seed=0)
    report = centroid_cross_validate(folded)
    assert 0.3 <= report.overall_accuracy <= 0.7


def test_cnn_and_centroid_agree_on_separable_scenario():
    samples = scenario_samples([0.03, 0.23], iterations=100, seed=70)
    folded = make_folds(balance_classes(samples, 1), seed=1)
    cnn_acc = cross_validate(folded, fast_cnn(seed=1)).overall_accuracy
    cen_acc = centroid_cross_validate(folded).overall_accuracy
    assert cnn_acc >= 0.95
    assert abs(cnn_acc - cen_acc) <= 0.10


# ---------------------------------------------------------------------------
# convergence

def test_convergence_sizes_capped_at_available_samples():
    samples = toy_samples(n_per_class=25, length=1)
    points = convergence_curve(samples, fast_cnn(seed=0, epochs=2), sizes=(10, 20, 300), seed=0)
    assert [p[0] for p in points] == [10, 20]


def test_convergence_small_size_three_classes():
    samples = []
    rng = np.random.default_rng(0)
    for ci, label in enumerate("ABC"):
        for i in range(12):
            samples.append(TimingSequenceSample(
                values=tuple(rng.normal(ci, 0.1, size=2)), label=label, source=(label, i)))
    points = convergence_curve(samples, fast_cnn(seed=0, epochs=5), sizes=(10,), seed=0)
    assert len(points) == 1
    size, acc = points[0]
    assert size == 10
    assert 0.0 <= acc <= 1.0
