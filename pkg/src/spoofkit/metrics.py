"""Detection metrics: EER, minDCF, actDCF and Cllr.

Conventions: higher scores mean bona fide, bona fide is the target class.
For a threshold ``t`` a bona fide trial is missed when its score is below
``t`` and a spoof trial is a false alarm when its score is at or above ``t``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import EmptyClass, SemanticsMismatch


@dataclass(frozen=True)
class CostParams:
    """Detection cost triple.

    Attributes:
      p_target: Prior of the bona fide class.
      c_miss: Cost of rejecting a bona fide trial.
      c_fa: Cost of accepting a spoof trial.
    """

    p_target: float = 0.05
    c_miss: float = 1.0
    c_fa: float = 10.0

    def __post_init__(self):
        if not 0.0 < self.p_target < 1.0:
            raise ValueError(f"p_target must be in (0, 1), got {self.p_target}")
        if not (self.c_miss > 0 and self.c_fa > 0):
            raise ValueError("c_miss and c_fa must be positive")

    @property
    def normalizer(self) -> float:
        return min(self.p_target * self.c_miss, (1.0 - self.p_target) * self.c_fa)

    @property
    def effective_prior(self) -> float:
        """Single prior equivalent to the cost triple."""
        a = self.p_target * self.c_miss
        return a / (a + (1.0 - self.p_target) * self.c_fa)

    def dcf(self, p_miss, p_fa):
        """Normalized detection cost."""
        raw = self.c_miss * self.p_target * p_miss + self.c_fa * (1.0 - self.p_target) * p_fa
        return raw / self.normalizer


@dataclass(frozen=True)
class DetCurve:
    """Operating points ordered by increasing threshold.

    The first point has threshold -inf (p_miss=0, p_fa=1) and the last +inf
    (p_miss=1, p_fa=0); interior thresholds are midpoints between
    consecutive distinct scores.
    """

    thresholds: np.ndarray
    p_miss: np.ndarray
    p_fa: np.ndarray

    def __len__(self):
        return len(self.thresholds)


def _check(bona, spoof) -> tuple[np.ndarray, np.ndarray]:
    bona = np.asarray(bona, dtype=float).ravel()
    spoof = np.asarray(spoof, dtype=float).ravel()
    if bona.size == 0:
        raise EmptyClass("bonafide")
    if spoof.size == 0:
        raise EmptyClass("spoof")
    if not (np.all(np.isfinite(bona)) and np.all(np.isfinite(spoof))):
        raise ValueError("scores must be finite")
    return bona, spoof


def _require_llr(semantics):
    if semantics != "llr":
        raise SemanticsMismatch("llr", semantics)


def det_curve(bona, spoof) -> DetCurve:
    """Compute all distinct operating points of a score set."""
    bona, spoof = _check(bona, spoof)
    uniq = np.unique(np.concatenate([bona, spoof]))
    bona_sorted = np.sort(bona)
    spoof_sorted = np.sort(spoof)
    # below the midpoint after uniq[k] are exactly the scores <= uniq[k]
    n_bona_le = np.searchsorted(bona_sorted, uniq, side="right")
    n_spoof_le = np.searchsorted(spoof_sorted, uniq, side="right")
    p_miss = np.concatenate([[0.0], n_bona_le / bona.size])
    # exact integer counts so rates match act_dcf bit for bit
    p_fa = np.concatenate([[1.0], (spoof.size - n_spoof_le) / spoof.size])
    mids = (uniq[:-1] + uniq[1:]) / 2.0
    thresholds = np.concatenate([[-np.inf], mids, [np.inf]])
    return DetCurve(thresholds, p_miss, p_fa)


def _interp_threshold(t0, t1, alpha):
    if not np.isfinite(t0):
        return float(t1)
    if not np.isfinite(t1):
        return float(t0)
    return float(t0 + alpha * (t1 - t0))


def eer_from_curve(curve: DetCurve) -> tuple[float, float]:
    diff = curve.p_miss - curve.p_fa
    # diff is nondecreasing, -1 at the first point and +1 at the last
    i = int(np.argmax(diff >= 0))
    if diff[i] == 0:
        return float(curve.p_miss[i]), float(curve.thresholds[i])
    d0, d1 = diff[i - 1], diff[i]
    alpha = d0 / (d0 - d1)
    value = curve.p_miss[i - 1] + alpha * (curve.p_miss[i] - curve.p_miss[i - 1])
    return float(value), _interp_threshold(curve.thresholds[i - 1], curve.thresholds[i], alpha)


def eer(bona, spoof) -> tuple[float, float]:
    """Equal error rate.

    The crossing of p_miss and p_fa is located by linear interpolation
    between the adjacent operating points of :func:`det_curve`.

    Returns:
      (eer, threshold)
    """
    return eer_from_curve(det_curve(bona, spoof))


def min_dcf(bona, spoof, cost: CostParams = CostParams()) -> tuple[float, float]:
    """Minimum normalized DCF over all thresholds, including accept-all and reject-all.

    Returns:
      (min_dcf, threshold)
    """
    curve = det_curve(bona, spoof)
    dcfs = cost.dcf(curve.p_miss, curve.p_fa)
    i = int(np.argmin(dcfs))
    return float(dcfs[i]), float(curve.thresholds[i])


def bayes_threshold(cost: CostParams = CostParams()) -> float:
    """LLR threshold minimizing expected cost: accept bona fide iff llr >= t."""
    return math.log(((1.0 - cost.p_target) * cost.c_fa) / (cost.p_target * cost.c_miss))


def act_dcf(bona_llr, spoof_llr, cost: CostParams = CostParams(), semantics: str = "llr") -> float:
    """Normalized DCF of hard decisions taken at the Bayes threshold."""
    _require_llr(semantics)
    bona, spoof = _check(bona_llr, spoof_llr)
    t = bayes_threshold(cost)
    p_miss = np.count_nonzero(bona < t) / bona.size
    p_fa = np.count_nonzero(spoof >= t) / spoof.size
    return float(cost.dcf(p_miss, p_fa))


def cllr(bona_llr, spoof_llr, semantics: str = "llr") -> float:
    """Cost of log-likelihood ratio, in bits."""
    _require_llr(semantics)
    bona, spoof = _check(bona_llr, spoof_llr)
    c_bona = np.mean(np.logaddexp(0.0, -bona))
    c_spoof = np.mean(np.logaddexp(0.0, spoof))
    return float(0.5 * (c_bona + c_spoof) / math.log(2.0))


METRICS = ("eer", "mindcf", "actdcf", "cllr")


def compute_metrics(bona, spoof, names=METRICS, cost: CostParams = CostParams(),
                    semantics: str = "raw") -> dict[str, float]:
    """Evaluate a list of metrics, returning an ordered name -> value mapping."""
    out: dict[str, float] = {}
    for name in names:
        if name == "eer":
            out["eer"], out["eer_threshold"] = eer(bona, spoof)
        elif name == "mindcf":
            out["mindcf"], out["mindcf_threshold"] = min_dcf(bona, spoof, cost)
        elif name == "actdcf":
            out["actdcf"] = act_dcf(bona, spoof, cost, semantics)
        elif name == "cllr":
            out["cllr"] = cllr(bona, spoof, semantics)
        else:
            raise ValueError(f"unknown metric {name!r}")
    return out
