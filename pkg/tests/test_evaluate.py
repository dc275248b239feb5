"""Classification rules and the accuracy matrix."""

from __future__ import annotations

import numpy as np
import pytest

from radcil.data import SyntheticSpec, generate_synthetic, split_tasks
from radcil.errors import FormatError, MetricError, NormalizationError, StateError
from radcil.evaluate import (
    AccuracyMatrix,
    accuracy,
    evaluate_step,
    head_classify,
    l2_normalize,
    nme_classify,
)
from radcil.model import FrozenExtractor, IncrementalModel, PrototypeStore
from radcil.nn import FeatureExtractor, Head, HeadSet


def _identity_extractor(d=2):
    return FeatureExtractor([np.eye(d)], [np.zeros(d)])


def _proto_store(vectors):
    store = PrototypeStore()
    for c, v in vectors.items():
        store.vectors[c] = np.asarray(v, dtype=np.float64)
        store.provenance[c] = (0, "x")
    return store


def _head_model(heads, classes):
    model = IncrementalModel(_identity_extractor(), HeadSet(heads))
    model.classes_per_head = classes
    model.trained_tasks = len(heads)
    return model


# --- nearest class mean ------------------------------------------------------


def test_nme_picks_nearest_prototype():
    store = _proto_store({0: [1.0, 0.0], 1: [0.0, 1.0]})
    pred = nme_classify(_identity_extractor(), store, np.array([[1.0, 0.0], [0.0, 2.0]]))
    assert pred.tolist() == [0, 1]


def test_nme_tie_breaks_to_lowest_class():
    store = _proto_store({0: [1.0, 0.0], 1: [0.0, 1.0]})
    pred = nme_classify(_identity_extractor(), store, np.array([[1.0, 1.0]]))
    assert pred.tolist() == [0]


def test_nme_scale_invariant():
    store = _proto_store({0: [1.0, 0.2], 1: [-0.3, 1.0]})
    x = np.array([[0.9, 0.1], [-0.2, 0.8]])
    base = nme_classify(_identity_extractor(), store, x)
    assert np.array_equal(nme_classify(_identity_extractor(), store, 10.0 * x), base)
    scaled = _proto_store({0: [5.0, 1.0], 1: [-1.5, 5.0]})
    assert np.array_equal(nme_classify(_identity_extractor(), store, x), base)
    assert np.array_equal(nme_classify(_identity_extractor(), scaled, x), base)


def test_nme_through_frozen_extractor():
    ext = _identity_extractor()
    store = _proto_store({0: [1.0, 0.0], 1: [0.0, 1.0]})
    x = np.array([[0.7, 0.1]])
    assert np.array_equal(
        nme_classify(FrozenExtractor(ext), store, x), nme_classify(ext, store, x)
    )


def test_nme_rejects_degenerate_inputs():
    with pytest.raises(StateError):
        nme_classify(_identity_extractor(), PrototypeStore(), np.ones((1, 2)))
    store = _proto_store({0: [1.0, 0.0]})
    with pytest.raises(NormalizationError):
        nme_classify(_identity_extractor(), store, np.zeros((1, 2)))
    with pytest.raises(NormalizationError):
        l2_normalize(np.zeros((1, 3)))


# --- head argmax ---------------------------------------------------------------


def test_head_classify_single_head():
    head = Head(np.array([[2.0, -1.0], [0.0, 0.0]]), np.zeros(2), n_classes=2, rot_factor=1)
    model = _head_model([head], [[0, 1]])
    assert head_classify(model, np.array([[1.0, 0.0]])).tolist() == [0]


def test_head_classify_ignores_rotated_slots():
    w = np.zeros((2, 8))
    w[0, 0], w[0, 1] = 0.5, -0.5
    head = Head(w.copy(), np.zeros(8), n_classes=2, rot_factor=4)
    model = _head_model([head], [[0, 1]])
    x = np.array([[1.0, 0.0]])
    base = head_classify(model, x)
    head.w[:, 2:] = 99.0  # rotation-only slots
    head.b[2:] = 99.0
    assert np.array_equal(head_classify(model, x), base)


def test_head_classify_maps_to_global_ids():
    h0 = Head(np.array([[0.1, 0.2], [0.0, 0.0]]), np.zeros(2), 2, 1)
    h1 = Head(np.array([[5.0], [0.0]]), np.zeros(1), 1, 1)
    model = _head_model([h0, h1], [[4, 7], [2]])
    assert head_classify(model, np.array([[1.0, 0.0]])).tolist() == [2]


def test_head_classify_tie_prefers_lowest_global_id():
    h0 = Head(np.array([[1.0, 0.5], [0.0, 0.0]]), np.zeros(2), 2, 1)
    h1 = Head(np.array([[1.0], [0.0]]), np.zeros(1), 1, 1)
    model = _head_model([h0, h1], [[4, 7], [2]])
    assert head_classify(model, np.array([[1.0, 0.0]])).tolist() == [2]


def test_head_classify_outputs_only_seen_classes():
    model = IncrementalModel.create([6, 5], seed=11)
    model.trained_tasks = 1
    from radcil.model import append_head

    append_head(model, [3, 9], rot_factor=4, seed=11)
    append_head(model, [1], rot_factor=1, seed=11)
    pred = head_classify(model, np.random.default_rng(4).normal(size=(50, 6)))
    assert set(pred.tolist()) <= {1, 3, 9}


def test_head_classify_requires_heads():
    with pytest.raises(StateError):
        head_classify(IncrementalModel.create([4, 3], seed=1), np.zeros((1, 4)))


# --- accuracy --------------------------------------------------------------------


def test_accuracy_values():
    truth = np.array([0, 1, 1, 0])
    assert accuracy(truth.copy(), truth) == 1.0
    assert accuracy(np.array([0, 1]), np.array([0, 0])) == 0.5


def test_accuracy_of_cycling_stub_is_one_over_k():
    # deterministic stand-in for a uniform guesser: prediction cycles classes
    k = 4
    truth = np.repeat(np.arange(k), k)
    pred = np.tile(np.arange(k), k)
    assert accuracy(pred, truth) == 1.0 / k


def test_accuracy_rejects_bad_shapes():
    with pytest.raises(MetricError):
        accuracy(np.zeros(3), np.zeros(4))
    with pytest.raises(MetricError):
        accuracy(np.zeros(0), np.zeros(0))


# --- accuracy matrix ---------------------------------------------------------------


def _full_matrix():
    m = AccuracyMatrix(3)
    values = {(0, 0): 1 / 3, (1, 0): 0.5, (1, 1): 0.75, (2, 0): 0.25, (2, 1): 0.5, (2, 2): 1.0}
    for (i, j), v in values.items():
        m.record(i, j, v)
    return m, values


def test_matrix_triangular_shape():
    m, values = _full_matrix()
    assert m.is_complete()
    assert len(values) == 6
    assert m.row(1) == [0.5, 0.75]


def test_matrix_rejects_bad_cells():
    m = AccuracyMatrix(3)
    with pytest.raises(MetricError):
        m.record(0, 1, 0.5)
    with pytest.raises(MetricError):
        m.record(3, 0, 0.5)
    with pytest.raises(MetricError):
        m.record(1, 0, 1.5)
    with pytest.raises(MetricError):
        m.get(0, 0)


def test_matrix_completed_rows_prefix():
    m = AccuracyMatrix(3)
    m.record(0, 0, 0.9)
    m.record(1, 1, 0.8)
    assert m.completed_rows() == 1
    assert not m.is_complete()
    m.record(1, 0, 0.7)
    assert m.completed_rows() == 2


def test_matrix_csv_roundtrip_lossless(tmp_path):
    m, values = _full_matrix()
    path = tmp_path / "matrix.csv"
    m.save_csv(path)
    loaded = AccuracyMatrix.from_csv(path)
    for (i, j), v in values.items():
        assert loaded.get(i, j) == v
    header = path.read_text().splitlines()[0]
    assert header == "after_task,task_0,task_1,task_2"


@pytest.mark.parametrize(
    "text,match",
    [
        ("task_0\n", "header"),
        ("after_task,task_0,task_1\n0,0.5,0.9\n", "above the diagonal"),
        ("after_task,task_0,task_1\n0,oops,\n", "non-numeric"),
        ("after_task,task_0,task_1\nzero,0.5,\n", "non-integer step"),
        ("after_task,task_0,task_1\n0,0.5\n", "fields"),
    ],
)
def test_matrix_csv_rejects_malformed(tmp_path, text, match):
    path = tmp_path / "bad.csv"
    path.write_text(text)
    with pytest.raises(FormatError, match=match):
        AccuracyMatrix.from_csv(path)


def test_evaluate_step_records_row():
    ds = generate_synthetic(SyntheticSpec(n_classes=4, side=2, samples_per_class=10))
    stream = split_tasks(ds, 2, 1, seed=5)
    matrix = AccuracyMatrix(2, heldout_sizes=stream.heldout_sizes())
    target = stream.tasks[0].class_ids[0]
    row = evaluate_step(lambda x: np.full(len(x), target), stream.tasks, 1, matrix)
    assert len(row) == 2
    expected0 = float(np.mean(stream.tasks[0].heldout_y == target))
    assert matrix.get(1, 0) == expected0
    assert matrix.get(1, 1) == 0.0  # target class not in task 1
