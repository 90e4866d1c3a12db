import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from mvanet.errors import MetricsError
from mvanet.metrics import MetricsReport, compute_all, e_curve, f_curve, image_scores
from mvanet import _kernels


def _case(seed, size=4, p=0.4):
    rng = np.random.default_rng(seed)
    pred = rng.random((size, size))
    gt = rng.random((size, size)) < p
    return pred, gt


@pytest.mark.parametrize("seed", range(6))
def test_matches_brute_force_oracle(seed):
    pred, gt = _case(seed)
    if not gt.any():
        gt[0, 0] = True
    report = compute_all([pred], [gt])
    ref = oracles.all_metrics([pred], [gt])
    for key, value in ref.items():
        assert getattr(report, key) == pytest.approx(value, abs=1e-6), key


def test_dataset_oracle_over_several_images():
    cases = [_case(s) for s in range(10, 14)]
    cases[0][1][:] = False  # empty ground truth
    cases[1][1][:] = True  # full ground truth
    preds, gts = zip(*cases)
    report = compute_all(list(preds), list(gts))
    ref = oracles.all_metrics(preds, gts)
    for key, value in ref.items():
        assert getattr(report, key) == pytest.approx(value, abs=1e-6), key


def test_perfect_prediction():
    _, gt = _case(1, 16)
    r = compute_all([gt.astype(float)], [gt])
    assert (r.f_max, r.mae) == (1.0, 0.0)
    # the eps guards in the denominators leave round-off at the 1e-16 level
    for value in (r.s_measure, r.e_measure, r.f_weighted):
        assert value == pytest.approx(1.0, abs=1e-12)


def test_constant_half_on_full_gt():
    r = compute_all([np.full((8, 8), 0.5)], [np.ones((8, 8))])
    assert r.mae == 0.5


def test_input_validation():
    with pytest.raises(MetricsError, match="binary"):
        compute_all([np.zeros((4, 4))], [np.full((4, 4), 0.5)])
    with pytest.raises(MetricsError, match="no predictions"):
        compute_all([], [])
    with pytest.raises(MetricsError, match="ground truths"):
        compute_all([np.zeros((4, 4))], [])
    with pytest.raises(MetricsError, match="differ in shape"):
        compute_all([np.zeros((4, 4))], [np.zeros((4, 5))])
    with pytest.raises(MetricsError, match=r"\[0, 1\]"):
        compute_all([np.full((4, 4), 1.5)], [np.zeros((4, 4))])


def test_accepts_batched_tensor_shapes():
    import torch

    pred = torch.rand(1, 1, 8, 8)
    gt = (torch.rand(1, 1, 8, 8) > 0.5).float()
    assert compute_all([pred], [gt]).images_evaluated == 1


def test_threshold_sweep_exhaustive_on_integer_levels():
    rng = np.random.default_rng(0)
    pred = rng.integers(0, 256, (6, 6)) / 255.0
    gt = rng.random((6, 6)) < 0.5
    r = compute_all([pred], [gt])
    # every distinct binarization pred >= v for v in the data's own levels
    best = max(oracles.f_measure_at(pred, gt, v) for v in np.unique(pred))
    assert r.f_max == pytest.approx(best, abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**16), flips=st.integers(1, 8))
def test_flipping_toward_error_never_helps(seed, flips):
    rng = np.random.default_rng(seed)
    gt = rng.random((6, 6)) < 0.5
    gt[0, 0] = True
    pred = gt.astype(float)
    worse = pred.copy()
    idx = rng.choice(36, size=flips, replace=False)
    worse.flat[idx] = 1.0 - worse.flat[idx]
    a, b = compute_all([pred], [gt]), compute_all([worse], [gt])
    assert b.f_max <= a.f_max and b.mae >= a.mae


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2**16))
def test_permutation_invariance(seed):
    rng = np.random.default_rng(seed)
    preds = [rng.random((8, 8)) for _ in range(4)]
    gts = [rng.random((8, 8)) < 0.3 for _ in range(4)]
    order = rng.permutation(4)
    a = compute_all(preds, gts)
    b = compute_all([preds[i] for i in order], [gts[i] for i in order])
    for key, value in a.as_dict().items():
        assert getattr(b, key) == pytest.approx(value, abs=1e-12)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**16), p=st.floats(0, 1))
def test_fields_in_unit_interval(seed, p):
    rng = np.random.default_rng(seed)
    r = compute_all([rng.random((10, 10))], [rng.random((10, 10)) < p])
    for key in ("f_max", "f_weighted", "s_measure", "e_measure", "mae"):
        assert 0.0 <= getattr(r, key) <= 1.0


def test_empty_ground_truth_conventions():
    pred = np.full((4, 4), 0.25)
    s = image_scores(pred, np.zeros((4, 4)))
    assert s["s_measure"] == pytest.approx(0.75)
    assert s["f_weighted"] == 0.0
    assert np.all(s["f_curve"] == 0)


def test_curves_from_counts():
    tp = np.array([4, 2, 0])
    fp = np.array([4, 0, 0])
    f = f_curve(tp, fp, 4)
    assert f[2] == 0.0 and f[1] == pytest.approx(1.3 * 0.5 / (0.3 + 0.5))
    e = e_curve(np.array([0]), np.array([3]), 0, 16)
    assert e[0] == pytest.approx(13 / 16)


def test_report_files_roundtrip(tmp_path):
    r = MetricsReport(0.9, 0.8, 0.7, 0.6, 0.05, 3, 12.5)
    r.write_kv(tmp_path / "r.txt")
    r.write_table(tmp_path / "r.tsv")
    assert MetricsReport.read_kv(tmp_path / "r.txt") == r
    header, row = (tmp_path / "r.tsv").read_text().splitlines()
    assert header.split("\t")[0] == "f_max" and row.split("\t")[-2] == "3"


def test_nearest_foreground_tie_rule():
    gt = np.zeros((3, 3), bool)
    gt[0, 0] = gt[0, 2] = gt[2, 0] = True
    dist, iy, ix = _kernels.nearest_foreground(gt)
    # centre is equidistant from three pixels; smallest column, then smallest row
    assert (iy[1, 1], ix[1, 1]) == (0, 0)
    assert dist[1, 1] == pytest.approx(np.sqrt(2))
