"""Recognition and PAD error metrics.

Orientation is fixed throughout: recognition scores are distances (lower
means a better match) and PAD scores are attack likelihoods (higher means
more attack-like).
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateDistributions, EmptyClass, MetricsError, UnreachableOperatingPoint

SENTINEL_EPS = 1e-6


@dataclass
class ScoreSet:
    genuine: np.ndarray
    imposter: np.ndarray

    def __post_init__(self):
        self.genuine = np.asarray(self.genuine, dtype=np.float64).ravel()
        self.imposter = np.asarray(self.imposter, dtype=np.float64).ravel()


@dataclass
class PadRates:
    accuracy: float
    apcer: float
    bpcer: float


def _mean_var(x) -> tuple:
    # exactly rounded sums keep d' independent of score order
    values = x.tolist()
    m = math.fsum(values) / len(values)
    return m, math.fsum((v - m) ** 2 for v in values) / len(values)


def dprime(s: ScoreSet) -> float:
    """Decidability ``|mu1 - mu2| / sqrt((var1 + var2) / 2)``, population variances."""
    if len(s.genuine) < 2 or len(s.imposter) < 2:
        raise MetricsError("d' needs at least two scores per class")
    mu1, v1 = _mean_var(s.genuine)
    mu2, v2 = _mean_var(s.imposter)
    spread = math.sqrt((v1 + v2) / 2.0)
    if spread == 0.0:
        if mu1 == mu2:
            raise DegenerateDistributions("both classes are the same constant")
        return math.inf
    return float(abs(mu1 - mu2) / spread)


def roc(s: ScoreSet):
    """``(threshold, FMR, FNMR)`` triples in ascending threshold order.

    A comparison is accepted when its score is ``<= threshold``. Thresholds
    are every distinct score plus a sentinel below the minimum (reject all)
    and above the maximum (accept all).
    """
    if len(s.genuine) == 0 or len(s.imposter) == 0:
        raise EmptyClass("ROC needs both genuine and imposter scores")
    scores = np.unique(np.concatenate([s.genuine, s.imposter]))
    eps = SENTINEL_EPS * max(1.0, float(np.abs(scores).max()))
    thresholds = np.concatenate([[scores[0] - eps], scores, [scores[-1] + eps]])
    imp = np.sort(s.imposter)
    gen = np.sort(s.genuine)
    fmr = np.searchsorted(imp, thresholds, side="right") / len(imp)
    fnmr = (len(gen) - np.searchsorted(gen, thresholds, side="right")) / len(gen)
    return list(zip(thresholds.tolist(), fmr.tolist(), fnmr.tolist()))


def _crossing(points):
    """EER from ``(FMR, FNMR)`` pairs in ascending threshold order.

    Takes the threshold where ``|FMR - FNMR|`` is smallest (the lowest such
    threshold on ties) and returns ``(FMR + FNMR) / 2`` there.
    """
    if not points:
        raise MetricsError("empty ROC")
    gaps = [abs(f - n) for f, n in points]
    f, n = points[gaps.index(min(gaps))]
    return (f + n) / 2.0


def eer(s: ScoreSet) -> float:
    return float(_crossing([(f, n) for _, f, n in roc(s)]))


def fnmr_at_fmr(s: ScoreSet, target_fmr: float) -> float:
    if not 0.0 < target_fmr < 1.0:
        raise ValueError("target FMR must lie strictly between 0 and 1")
    ok = [n for _, f, n in roc(s) if f <= target_fmr]
    if not ok:
        raise UnreachableOperatingPoint(f"no threshold reaches FMR <= {target_fmr}")
    return float(min(ok))


def eer_threshold(bona_fide_scores, attack_scores) -> float:
    """PAD threshold (attack iff score >= t) balancing APCER and BPCER.

    Candidate thresholds are the distinct scores plus one above the
    maximum; the one minimizing ``|APCER - BPCER|`` wins, ties going to the
    smaller threshold.
    """
    bona = np.asarray(bona_fide_scores, dtype=np.float64)
    att = np.asarray(attack_scores, dtype=np.float64)
    if len(bona) == 0 or len(att) == 0:
        raise EmptyClass("calibration needs both classes")
    cands = np.unique(np.concatenate([bona, att]))
    cands = np.concatenate([cands, [cands[-1] + SENTINEL_EPS * max(1.0, abs(cands[-1]))]])
    apcer = np.array([(att < t).mean() for t in cands])
    bpcer = np.array([(bona >= t).mean() for t in cands])
    gap = np.abs(apcer - bpcer)
    best = np.flatnonzero(gap == gap.min())
    # midpoint between the chosen score and the next lower distinct score
    i = int(best[0])
    if i == 0:
        return float(cands[0])
    return float((cands[i - 1] + cands[i]) / 2.0)


def pad_rates(bona_fide_decisions, attack_decisions) -> PadRates:
    """Rates from hard decisions; each entry is ``"attack"`` or ``"live"``.

    APCER counts attacks called live, BPCER bona fides called attack.
    """
    bona = [d == "attack" for d in bona_fide_decisions]
    att = [d == "attack" for d in attack_decisions]
    if not bona or not att:
        raise EmptyClass("PAD rates need both bona fide and attack samples")
    bona_err = sum(bona)
    att_err = len(att) - sum(att)
    total = len(bona) + len(att)
    return PadRates(accuracy=(total - bona_err - att_err) / total,
                    apcer=att_err / len(att), bpcer=bona_err / len(bona))


# ---------------------------------------------------------------------------
# CSV input and table output

RECOGNITION_LABELS = ("genuine", "imposter")
PAD_LABELS = ("bonafide", "attack")


def read_label_csv(path, labels):
    """Read ``label,value`` rows into a dict keyed by label.

    A header row whose first field is ``label`` is skipped.
    """
    out = {k: [] for k in labels}
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row or (lineno == 1 and row[0].strip().lower() == "label"):
                continue
            if len(row) != 2:
                raise MetricsError(f"{path}:{lineno}: expected 'label,value'")
            label, value = row[0].strip(), row[1].strip()
            if label not in out:
                raise MetricsError(f"{path}:{lineno}: label {label!r} not in {labels}")
            out[label].append(value)
    return out


def read_score_csv(path, orientation: str = "recognition"):
    labels = RECOGNITION_LABELS if orientation == "recognition" else PAD_LABELS
    raw = read_label_csv(path, labels)
    try:
        return {k: [float(v) for v in vals] for k, vals in raw.items()}
    except ValueError as exc:
        raise MetricsError(f"{path}: {exc}") from exc


def read_decision_csv(path):
    raw = read_label_csv(path, PAD_LABELS)
    for vals in raw.values():
        bad = [v for v in vals if v not in ("live", "attack")]
        if bad:
            raise MetricsError(f"{path}: decision {bad[0]!r} is not live/attack")
    return raw


def _pct(x: float) -> str:
    return "inf" if math.isinf(x) else f"{100.0 * x:.2f}"


def recognition_table(s: ScoreSet, target_fmr: float = 0.01) -> str:
    """Aligned d' / EER / FNMR@FMR summary."""
    rows = [("d'", "EER (%)", f"FNMR (%) @FMR={100 * target_fmr:g}%"),
            (f"{dprime(s):.3f}", _pct(eer(s)), _pct(fnmr_at_fmr(s, target_fmr)))]
    return _align(rows)


def pad_table(rows) -> str:
    """Accuracy / APCER / BPCER per method; ``rows`` is ``[(name, PadRates)]``."""
    table = [("Method", "Accuracy (%)", "APCER (%)", "BPCER (%)")]
    for name, r in rows:
        table.append((name, _pct(r.accuracy), _pct(r.apcer), _pct(r.bpcer)))
    return _align(table)


def _align(rows) -> str:
    widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
    lines = ["  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in rows]
    return "\n".join(lines) + "\n"


def format_roc_csv(points) -> str:
    lines = ["threshold,fmr,fnmr"]
    lines += [f"{t!r},{f!r},{n!r}" for t, f, n in points]
    return "\n".join(lines) + "\n"
