import itertools
from functools import lru_cache

import numpy as np
import pytest

ACCEPTANCE_RESULTS = []


def brute_iou(pred, label, c, keep):
    """IoU_c recomputed from scratch over the points where ``keep`` is true."""
    tp = fp = fn = 0
    for p, g, k in zip(pred, label, keep):
        if not k:
            continue
        if p == c and g == c:
            tp += 1
        elif p == c:
            fp += 1
        elif g == c:
            fn += 1
    denom = tp + fp + fn
    return 1.0 if denom == 0 else tp / denom


def brute_curve(pred, label, ranking, c, K):
    """Reference sparsification curve: drop the first floor(k*N/K) ranked points, recount."""
    n = len(label)
    out = []
    for k in range(K):
        m = (k * n) // K
        keep = [True] * n
        for i in ranking[:m]:
            keep[i] = False
        out.append(brute_iou(pred, label, c, keep))
    return np.array(out)


@lru_cache(maxsize=None)
def _best_by_counts(types: tuple, m: int) -> float:
    best = -1.0
    n = len(types)
    for removed in itertools.combinations(range(n), m):
        gone = set(removed)
        tp = sum(1 for i, t in enumerate(types) if t == "tp" and i not in gone)
        err = sum(1 for i, t in enumerate(types) if t == "err" and i not in gone)
        v = 1.0 if tp + err == 0 else tp / (tp + err)
        best = max(best, v)
    return best


def brute_max_curve(pred, label, c, K):
    """Best achievable IoU_c at every step, by enumerating every removed subset."""
    types = []
    for p, g in zip(pred, label):
        if p == c and g == c:
            types.append("tp")
        elif p == c or g == c:
            types.append("err")
        else:
            types.append("by")
    # IoU of a subset depends only on which types survive, so a sorted key is enough
    key = tuple(sorted(types))
    n = len(types)
    return np.array([_best_by_counts(key, (k * n) // K) for k in range(K)])


def record(criterion: str, passed: bool, detail: str = ""):
    ACCEPTANCE_RESULTS.append((criterion, passed, detail))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed, detail in ACCEPTANCE_RESULTS:
        terminalreporter.write_line(f"[{'PASS' if passed else 'FAIL'}] {name}  {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
