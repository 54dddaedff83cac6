import csv

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ibis.errors import DegenerateProblemError, InputError
from ibis.evaluation import (
    AntennaPrediction,
    ConfusionMatrix,
    auc,
    confusion_matrix,
    load_report,
    majority_vote,
    metrics_from_confusion,
    one_vs_rest_roc,
    report_export,
    roc_curve,
)

WALK, RUN = 2, 3


def pairwise_auc(scores, truth):
    """O(n^2) oracle: P(positive outranks negative), ties count 1/2."""
    pos = [s for s, t in zip(scores, truth) if t]
    neg = [s for s, t in zip(scores, truth) if not t]
    wins = sum(1.0 if p > n else 0.5 if p == n else 0.0 for p in pos for n in neg)
    return wins / (len(pos) * len(neg))


def preds(labels_by_antenna, conf_by_antenna=None, windows=None):
    out = []
    for a, labels in enumerate(labels_by_antenna):
        n = len(labels)
        conf = conf_by_antenna[a] if conf_by_antenna else [0.5] * n
        out.append(AntennaPrediction(a, windows if windows is not None else np.arange(n), labels, conf))
    return out


# ---------------------------------------------------------------------------
# majority vote


def test_vote_strict_majority():
    _, fused = majority_vote(preds([[WALK], [WALK], [RUN], [WALK]]))
    assert fused.tolist() == [WALK]


def test_vote_tie_goes_to_higher_mean_confidence():
    _, fused = majority_vote(preds([[WALK], [WALK], [RUN], [RUN]], [[0.9], [0.9], [0.6], [0.6]]))
    assert fused.tolist() == [WALK]
    _, fused = majority_vote(preds([[WALK], [WALK], [RUN], [RUN]], [[0.5], [0.5], [0.6], [0.6]]))
    assert fused.tolist() == [RUN]


def test_vote_full_tie_goes_to_lowest_class():
    _, fused = majority_vote(preds([[4], [1], [4], [1]], [[0.7], [0.7], [0.7], [0.7]]))
    assert fused.tolist() == [1]


def test_vote_unanimity_ignores_confidence():
    _, fused = majority_vote(preds([[RUN]] * 4, [[0.0], [1.0], [0.2], [0.3]]))
    assert fused.tolist() == [RUN]


def test_vote_aligns_by_window_id():
    a = AntennaPrediction(0, [5, 3], [1, 0], [0.9, 0.9])
    b = AntennaPrediction(1, [3, 5], [0, 1], [0.9, 0.9])
    ids, fused = majority_vote([a, b])
    assert ids.tolist() == [3, 5] and fused.tolist() == [0, 1]


def test_vote_errors():
    with pytest.raises(InputError):
        majority_vote(preds([[1, 2]]))
    with pytest.raises(InputError):
        majority_vote([AntennaPrediction(0, [0, 1], [1, 1], [1, 1]), AntennaPrediction(1, [0, 2], [1, 1], [1, 1])])
    with pytest.raises(InputError):
        AntennaPrediction(0, [0], [1], [1.5])
    with pytest.raises(InputError):
        AntennaPrediction(0, [0, 1], [1], [0.5])


@settings(max_examples=60, deadline=None)
@given(st.data())
def test_vote_permutation_invariant(data):
    n = data.draw(st.integers(1, 12))
    k = data.draw(st.integers(2, 5))
    n_ant = data.draw(st.integers(2, 4))
    labels = [data.draw(st.lists(st.integers(0, k - 1), min_size=n, max_size=n)) for _ in range(n_ant)]
    conf = [data.draw(st.lists(st.sampled_from([0.1, 0.5, 0.9, 1.0]), min_size=n, max_size=n)) for _ in range(n_ant)]
    base = preds(labels, conf)
    perm = data.draw(st.permutations(range(n_ant)))
    _, fused = majority_vote(base)
    _, again = majority_vote([base[i] for i in perm])
    assert fused.tolist() == again.tolist()
    counts = np.array([[sum(l[w] == c for l in labels) for c in range(k)] for w in range(n)])
    assert all(counts[w, fused[w]] == counts[w].max() for w in range(n))


# ---------------------------------------------------------------------------
# confusion matrix and metrics


def test_perfect_predictions():
    cm = confusion_matrix([0, 1, 2, 2], [0, 1, 2, 2], 3)
    assert np.array_equal(cm.counts, np.diag([1, 1, 2]))
    m = metrics_from_confusion(cm)
    assert m.accuracy == m.macro_precision == m.macro_recall == m.macro_f1 == 100.0


def test_walking_row_reproduces_reference_format():
    # 89 walking windows, 63 correct: 70.79 %
    truth = [WALK] * 89
    pred = [WALK] * 63 + [RUN] * 16 + [4] * 10
    cm = confusion_matrix(truth, pred, 5)
    assert f"{cm.per_class_accuracy()[WALK]:.2f}" == "70.79"


def test_confusion_total_and_rows(rng):
    for _ in range(10):
        n = int(rng.integers(1, 300))
        t, p = rng.integers(0, 5, n), rng.integers(0, 5, n)
        cm = confusion_matrix(t, p, 5)
        assert cm.total == n
        assert cm.counts.sum(axis=1).tolist() == np.bincount(t, minlength=5).tolist()


def test_confusion_rejects_bad_labels():
    with pytest.raises(InputError):
        confusion_matrix([0, 5], [0, 1], 5)
    with pytest.raises(InputError):
        confusion_matrix([0, 1], [0, -1], 5)
    with pytest.raises(InputError):
        confusion_matrix([0, 1], [0], 5)


def test_symmetric_two_class_case():
    m = metrics_from_confusion(ConfusionMatrix(np.array([[8, 2], [2, 8]])))
    for v in (m.accuracy, m.macro_precision, m.macro_recall, m.macro_f1):
        assert v == pytest.approx(80.0, abs=1e-12)


def test_macro_f1_matches_elementwise_oracle(rng):
    for _ in range(20):
        counts = rng.integers(0, 30, (5, 5))
        counts[np.diag_indices(5)] += 1
        m = metrics_from_confusion(ConfusionMatrix(counts))
        f1s = []
        for k in range(5):
            tp = counts[k, k]
            fp = sum(counts[j, k] for j in range(5) if j != k)
            fn = sum(counts[k, j] for j in range(5) if j != k)
            p, r = tp / (tp + fp), tp / (tp + fn)
            f1s.append(2 * p * r / (p + r))
        assert abs(m.macro_f1 - 100.0 * sum(f1s) / 5) < 1e-12
        assert abs(m.accuracy - 100.0 * np.trace(counts) / counts.sum()) < 1e-12


def test_unpredicted_class_is_flagged():
    m = metrics_from_confusion(ConfusionMatrix(np.array([[5, 0, 0], [0, 5, 0], [3, 2, 0]])))
    assert m.zero_prediction_classes == [2]
    assert m.per_class_precision[2] == 0.0 and m.per_class_f1[2] == 0.0


def test_empty_matrix_rejected():
    with pytest.raises(InputError):
        metrics_from_confusion(ConfusionMatrix(np.zeros((3, 3), dtype=int)))


@settings(max_examples=80, deadline=None)
@given(st.lists(st.lists(st.integers(0, 50), min_size=4, max_size=4), min_size=4, max_size=4))
def test_metric_ranges_and_harmonic_mean(rows):
    counts = np.array(rows)
    if counts.sum() == 0:
        return
    m = metrics_from_confusion(ConfusionMatrix(counts))
    for v in [m.accuracy, m.macro_precision, m.macro_recall, m.macro_f1, *m.per_class_precision,
              *m.per_class_recall, *m.per_class_f1]:
        assert 0.0 <= v <= 100.0 + 1e-9
    for p, r, f in zip(m.per_class_precision, m.per_class_recall, m.per_class_f1):
        expected = 0.0 if p + r == 0 else 2 * p * r / (p + r)
        assert f == pytest.approx(expected, abs=1e-9)


# ---------------------------------------------------------------------------
# ROC / AUC


def test_perfect_ranking_passes_through_top_left():
    curve = roc_curve([0.9, 0.8, 0.3, 0.1], [1, 1, 0, 0])
    assert (0.0, 1.0) in [(f, t) for f, t, _ in curve]
    assert auc(curve) == 1.0


def test_inverted_ranking_has_zero_auc():
    assert auc(roc_curve([0.2, 0.8], [1, 0])) == 0.0


def test_all_equal_scores_give_half():
    assert auc(roc_curve([0.4] * 6, [1, 0, 1, 0, 0, 1])) == 0.5


def test_curve_anchors_and_length():
    curve = roc_curve([0.1, 0.4, 0.4, 0.9], [0, 1, 0, 1])
    assert curve[0][:2] == (0.0, 0.0) and curve[-1][:2] == (1.0, 1.0)
    assert len(curve) == 3 + 2


def test_single_class_truth_is_degenerate():
    with pytest.raises(DegenerateProblemError):
        roc_curve([0.1, 0.2], [1, 1])


def test_auc_matches_pairwise_oracle_on_50_sets(rng):
    for _ in range(50):
        n = int(rng.integers(2, 51))
        scores = np.round(rng.random(n), 1)  # rounding creates ties
        truth = rng.integers(0, 2, n)
        truth[:2] = [0, 1]
        assert abs(auc(roc_curve(scores, truth)) - pairwise_auc(scores, truth)) <= 1e-12


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.integers(-500, 500), st.booleans()), min_size=2, max_size=200))
def test_roc_properties(pairs):
    # a 0.01 grid keeps 2s+1 strictly monotone in floating point
    scores = np.array([s / 100 for s, _ in pairs])
    truth = np.array([t for _, t in pairs])
    if truth.all() or not truth.any():
        return
    curve = roc_curve(scores, truth)
    fpr = [p[0] for p in curve]
    tpr = [p[1] for p in curve]
    assert all(np.diff(fpr) >= 0) and all(np.diff(tpr) >= 0)
    assert abs(auc(curve) - pairwise_auc(scores.tolist(), truth.tolist())) <= 1e-12
    shifted = roc_curve(2 * scores + 1, truth)
    assert [(f, t) for f, t, _ in shifted] == [(f, t) for f, t, _ in curve]


def test_one_vs_rest_skips_absent_classes(rng):
    scores = rng.random((20, 4))
    truth = np.array([0, 1, 3] * 6 + [0, 1])
    curves, areas = one_vs_rest_roc(scores, truth, 4)
    assert sorted(curves) == ["0", "1", "3"] and set(areas) == set(curves)


# ---------------------------------------------------------------------------
# export


def _report(rng):
    t = rng.integers(0, 3, 40)
    p = np.where(rng.random(40) < 0.7, t, rng.integers(0, 3, 40))
    m = metrics_from_confusion(confusion_matrix(t, p, 3))
    m.class_names = ["a", "b", "c"]
    m.roc, m.auc = one_vs_rest_roc(rng.random((40, 3)), t, 3)
    m.epoch_seconds = {"0": [0.5, 0.25], "1": [0.125, 0.75]}
    m.extra = {"mode": "unit"}
    return m, t


def test_export_roundtrip_is_exact(tmp_path, rng):
    m, _ = _report(rng)
    report_export(m, tmp_path)
    assert load_report(tmp_path) == m


def test_export_csv_structure(tmp_path, rng):
    m, t = _report(rng)
    written = report_export(m, tmp_path)
    with open(written["confusion"], newline="") as fh:
        rows = list(csv.reader(fh))
    assert sum(int(c) for row in rows[1:] for c in row[1:]) == len(t)
    for k, curve in m.roc.items():
        with open(tmp_path / f"roc_class_{k}.csv", newline="") as fh:
            body = list(csv.reader(fh))[1:]
        scores_seen = {row[2] for row in body[1:-1]}
        assert len(body) == len(scores_seen) + 2 == len(curve)
    with open(written["timing"], newline="") as fh:
        assert len(list(csv.reader(fh))) == 1 + 4


def test_export_to_unwritable_path(tmp_path, rng):
    m, _ = _report(rng)
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(OSError):
        report_export(m, blocker / "sub")


def test_load_rejects_unknown_schema(tmp_path, rng):
    m, _ = _report(rng)
    report_export(m, tmp_path)
    path = tmp_path / "report.json"
    path.write_text(path.read_text().replace('"schema_version": 1', '"schema_version": 99'))
    with pytest.raises(InputError):
        load_report(tmp_path)


def test_hand_computed_auc_with_tie():
    # positives {0.2, 0.7} vs negatives {0.1, 0.2}: 3 wins and one tie out of 4 pairs
    scores, truth = [0.1, 0.2, 0.2, 0.7], [0, 1, 0, 1]
    assert pairwise_auc(scores, truth) == 0.875
    assert auc(roc_curve(scores, truth)) == 0.875
