import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from irispad.errors import DegenerateDistributions, EmptyClass, MetricsError
from irispad.evalmetrics import (
    SENTINEL_EPS, ScoreSet, dprime, eer, eer_threshold, fnmr_at_fmr, format_roc_csv, pad_rates,
    pad_table, read_decision_csv, read_score_csv, recognition_table, roc,
)
from oracles import dprime_oracle, eer_oracle, fnmr_at_fmr_oracle, roc_oracle, sweep_thresholds

# counts behind the published fusion row: 37/582 attacks missed, 24/582 bona fides rejected
FUSION_ROW = {"attacks": 582, "apcer_errors": 37, "bonafide": 582, "bpcer_errors": 24}

scores = st.lists(st.floats(0, 1, allow_nan=False).map(lambda v: round(v, 3)), min_size=2, max_size=25)


def _eps(s):
    return SENTINEL_EPS * max(1.0, max(abs(v) for v in list(s.genuine) + list(s.imposter)))


def test_dprime_examples():
    assert dprime(ScoreSet([1, 2, 3], [1, 2, 3])) == 0.0
    assert dprime(ScoreSet([-1, 1], [0, 2])) == 1.0
    assert dprime(ScoreSet([1, 1], [2, 2])) == math.inf
    with pytest.raises(DegenerateDistributions):
        dprime(ScoreSet([1, 1], [1, 1]))
    with pytest.raises(MetricsError):
        dprime(ScoreSet([1], [1, 2]))


def test_dprime_sampling_oracle():
    rng = np.random.default_rng(0)
    s = ScoreSet(rng.normal(0.2, 0.05, 10_000), rng.normal(0.47, 0.02, 10_000))
    closed = 0.27 / math.sqrt((0.05**2 + 0.02**2) / 2)
    assert abs(dprime(s) - closed) < 0.05


@given(scores, scores, st.floats(0.1, 10), st.floats(-5, 5))
def test_dprime_affine_invariance(g, i, a, b):
    s = ScoreSet(g, i)
    t = ScoreSet([a * v + b for v in g], [a * v + b for v in i])
    try:
        d = dprime(s)
    except DegenerateDistributions:
        return
    if math.isinf(d) or np.var(t.genuine) + np.var(t.imposter) < 1e-20:
        return
    assert dprime(t) == pytest.approx(d, rel=1e-9, abs=1e-9)


def test_roc_examples():
    sep = roc(ScoreSet([0.1, 0.2], [0.6, 0.7]))
    assert any(f == 0 and n == 0 for _, f, n in sep)
    same = ScoreSet([0.1, 0.3, 0.5], [0.1, 0.3, 0.5])
    for _, f, n in roc(same):
        assert f == pytest.approx(1 - n)


def test_roc_handcrafted_oracle():
    g, i = [0.1, 0.25, 0.4], [0.25, 0.5, 0.6]
    s = ScoreSet(g, i)
    assert roc(s) == roc_oracle(g, i, sweep_thresholds(g, i, _eps(s)))


@given(scores, scores)
def test_roc_monotone(g, i):
    pts = roc(ScoreSet(g, i))
    thr = [t for t, _, _ in pts]
    assert thr == sorted(thr)
    assert all(a[1] <= b[1] and a[2] >= b[2] for a, b in zip(pts, pts[1:]))


def test_eer_examples():
    assert eer(ScoreSet([0.1, 0.2], [0.6, 0.7])) == 0.0
    assert eer(ScoreSet([0.3, 0.4, 0.5], [0.3, 0.4, 0.5])) == 0.5
    g = [0.1, 0.22, 0.3, 0.41, 0.55]
    i = [0.2, 0.38, 0.5, 0.62, 0.7]
    s = ScoreSet(g, i)
    assert eer(s) == eer_oracle(g, i, _eps(s))


@given(scores)
def test_eer_bounded_for_identical_inputs(g):
    assert 0.0 <= eer(ScoreSet(g, g)) <= 0.5


@given(scores, scores)
def test_eer_zero_iff_separable(g, i):
    separable = max(g) < min(i)
    assert (eer(ScoreSet(g, i)) == 0.0) == separable


def test_fnmr_at_fmr_examples():
    assert fnmr_at_fmr(ScoreSet([0.1, 0.2], [0.6, 0.7]), 0.01) == 0.0
    assert fnmr_at_fmr(ScoreSet([0.4, 0.4], [0.4, 0.4]), 0.01) == 1.0
    with pytest.raises(ValueError):
        fnmr_at_fmr(ScoreSet([0.1, 0.2], [0.3, 0.4]), 0.0)


def test_pad_rates_examples():
    assert pad_rates(["live"] * 4, ["attack"] * 4) == pad_rates(["live"], ["attack"])
    r = pad_rates(["live"] * 5, ["attack"] * 5)
    assert (r.accuracy, r.apcer, r.bpcer) == (1.0, 0.0, 0.0)
    r = pad_rates(["live"] * 6, ["live"] * 6)
    assert (r.accuracy, r.apcer, r.bpcer) == (0.5, 1.0, 0.0)
    with pytest.raises(EmptyClass):
        pad_rates([], ["attack"])


def test_fusion_row_counts():
    t = FUSION_ROW
    bona = ["attack"] * t["bpcer_errors"] + ["live"] * (t["bonafide"] - t["bpcer_errors"])
    att = ["live"] * t["apcer_errors"] + ["attack"] * (t["attacks"] - t["apcer_errors"])
    r = pad_rates(bona, att)
    assert (round(100 * r.accuracy, 2), round(100 * r.apcer, 2), round(100 * r.bpcer, 2)) == (94.76, 6.36, 4.12)
    assert pad_table([("OSPAD-fusion", r)]).splitlines()[1].split() == ["OSPAD-fusion", "94.76", "6.36", "4.12"]


@given(st.lists(st.booleans(), min_size=1, max_size=40), st.lists(st.booleans(), min_size=1, max_size=40))
def test_pad_rates_accuracy_identity(bona_err, att_err):
    bona = ["attack" if e else "live" for e in bona_err]
    att = ["live" if e else "attack" for e in att_err]
    r = pad_rates(bona, att)
    na, nb = len(att), len(bona)
    assert r.accuracy == pytest.approx(1 - (r.apcer * na + r.bpcer * nb) / (na + nb), abs=1e-15)


@pytest.mark.parametrize("seed", range(20))
def test_randomized_metric_oracles(seed):
    rng = np.random.default_rng(seed)
    ng, ni = rng.integers(2, 26, 2)
    g = list(np.round(rng.normal(0.3, 0.1, ng), 2))
    i = list(np.round(rng.normal(0.45, 0.1, ni), 2))
    s = ScoreSet(g, i)
    eps = _eps(s)
    assert dprime(s) == dprime_oracle(g, i)
    assert eer(s) == eer_oracle(g, i, eps)
    assert fnmr_at_fmr(s, 0.1) == fnmr_at_fmr_oracle(g, i, 0.1, eps)


def test_eer_threshold_balances_errors():
    bona = [0.1, 0.2, 0.3, 0.35]
    att = [0.32, 0.5, 0.6, 0.7]
    t = eer_threshold(bona, att)
    apcer = np.mean([a < t for a in att])
    bpcer = np.mean([b >= t for b in bona])
    assert abs(apcer - bpcer) <= 0.25


def test_csv_readers_and_outputs(tmp_path):
    (tmp_path / "s.csv").write_text("label,score\ngenuine,0.1\nimposter,0.5\ngenuine,0.2\nimposter,0.45\n")
    raw = read_score_csv(tmp_path / "s.csv", "recognition")
    assert raw == {"genuine": [0.1, 0.2], "imposter": [0.5, 0.45]}
    with pytest.raises(MetricsError):
        read_score_csv(tmp_path / "s.csv", "pad")
    (tmp_path / "d.csv").write_text("bonafide,live\nattack,attack\nattack,live\n")
    assert read_decision_csv(tmp_path / "d.csv") == {"bonafide": ["live"], "attack": ["attack", "live"]}
    (tmp_path / "bad.csv").write_text("bonafide,maybe\n")
    with pytest.raises(MetricsError):
        read_decision_csv(tmp_path / "bad.csv")
    s = ScoreSet(raw["genuine"], raw["imposter"])
    table = recognition_table(s)
    assert table.splitlines()[0].split()[0] == "d'"
    assert format_roc_csv(roc(s)).splitlines()[0] == "threshold,fmr,fnmr"
