import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ausekit.errors import InputError
from ausekit.metrics import ClassConfig, ConfusionMatrix, FrameRecord, confusion_matrix, iou_per_class, miou


def test_confusion_identity():
    cm = confusion_matrix([0, 1], [0, 1], ClassConfig(2))
    assert cm.counts.tolist() == [[1, 0], [0, 1]]
    assert cm.ignored == 0


def test_confusion_single_error():
    cm = confusion_matrix([1, 1], [0, 1], ClassConfig(2))
    assert cm.counts.tolist() == [[0, 1], [0, 1]]


def test_confusion_ignore():
    cm = confusion_matrix([0], [255], ClassConfig(2, ignore_ids={255}))
    assert cm.counts.sum() == 0
    assert cm.ignored == 1
    assert cm.total == 1


def test_confusion_rejects_bad_ids():
    with pytest.raises(InputError, match="frame 'f7'.*index 2"):
        confusion_matrix([0, 1, 5], [0, 1, 1], ClassConfig(2), frame_id="f7")
    with pytest.raises(InputError, match="index 1"):
        confusion_matrix([0, 0], [0, 9], ClassConfig(2), frame_id="f7")
    with pytest.raises(InputError):
        confusion_matrix([0, 1], [0], ClassConfig(2))


def test_iou_examples():
    iou, present = iou_per_class(ConfusionMatrix(np.array([[1, 0], [0, 1]])))
    assert iou.tolist() == [1.0, 1.0] and present.all()
    iou, present = iou_per_class(ConfusionMatrix(np.array([[0, 1], [0, 1]])))
    assert iou.tolist() == [0.0, 0.5]


def test_iou_absent_class():
    iou, present = iou_per_class(ConfusionMatrix(np.array([[2, 0, 0], [0, 0, 0], [0, 0, 1]])))
    assert iou[1] == 1.0 and not present[1]
    assert present[0] and present[2]


def test_miou_examples():
    assert miou([1.0, 1.0], [True, True]) == 1.0
    assert miou([0.0, 0.5], [True, True]) == 0.25
    assert miou([0.3, 1.0], [True, False]) == 0.3
    assert miou([1.0, 1.0], [False, False]) == 1.0


def test_class_config_validation():
    with pytest.raises(InputError):
        ClassConfig(1)
    with pytest.raises(InputError):
        ClassConfig(3, names=["a", "b"])
    with pytest.raises(InputError):
        ClassConfig(2, frequencies=[0.5, 1.5])
    assert ClassConfig(3).names == ["class_0", "class_1", "class_2"]


def test_frame_record_checks():
    f = FrameRecord("a", np.zeros((2, 3), int), np.zeros((2, 3), int))
    assert f.shape == (2, 3) and f.num_points == 6
    with pytest.raises(InputError):
        FrameRecord("a", np.zeros(5, int), np.zeros(6, int))
    with pytest.raises(InputError, match="non-finite"):
        FrameRecord("a", np.zeros(3, int), np.zeros(3, int), uncertainty=[0.1, np.nan, 0.2])


ids = st.lists(st.tuples(st.integers(0, 3), st.integers(0, 4)), min_size=0, max_size=60)


@given(ids, st.integers(0, 60))
def test_merge_is_partition_invariant(points, cut):
    config = ClassConfig(4, ignore_ids={4})
    pred = np.array([p for p, _ in points], dtype=int)
    label = np.array([g for _, g in points], dtype=int)
    whole = confusion_matrix(pred, label, config)
    a = confusion_matrix(pred[:cut], label[:cut], config)
    b = confusion_matrix(pred[cut:], label[cut:], config)
    assert a + b == whole
    assert b + a == whole
    assert whole.total == len(points)


@given(ids)
def test_iou_bounds_and_perfection(points):
    config = ClassConfig(4, ignore_ids={4})
    pred = np.array([p for p, _ in points], dtype=int)
    label = np.array([g for _, g in points], dtype=int)
    cm = confusion_matrix(pred, label, config)
    iou, present = iou_per_class(cm)
    tp, fp, fn = cm.tp_fp_fn()
    assert ((iou >= 0) & (iou <= 1)).all()
    for c in range(4):
        if present[c]:
            assert (iou[c] == 1.0) == (fp[c] == 0 and fn[c] == 0)


@settings(max_examples=50)
@given(st.lists(st.tuples(st.floats(0, 1), st.booleans()), min_size=1, max_size=10), st.randoms())
def test_miou_permutation_invariant(entries, rnd):
    ious = [e[0] for e in entries]
    flags = [e[1] for e in entries]
    perm = list(range(len(entries)))
    rnd.shuffle(perm)
    assert miou(ious, flags) == pytest.approx(miou([ious[i] for i in perm], [flags[i] for i in perm]), abs=1e-15)
