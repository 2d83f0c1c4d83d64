"""Score calibration and fusion.

Affine calibration is trained by prior-weighted logistic regression; LR
fusion is the same model with several input scores per trial. Average
fusion operates on min-max normalized scores and its output is not an LLR.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .corpus import BONAFIDE, SPOOF, ScoreSet, _fmt
from .errors import (
    DegenerateRange,
    EmptyClass,
    EmptyInput,
    IdSetMismatch,
    MalformedLine,
    NoConvergence,
    WidthMismatch,
)

logger = logging.getLogger(__name__)

POSTERIOR_EPS = 1e-12


def logit(p):
    return np.log(p) - np.log1p(-p)


def posterior_to_llr(p, train_prior: float = 0.5, eps: float = POSTERIOR_EPS):
    """Convert bona fide posteriors to LLRs by removing the training prior log-odds.

    Posteriors are clamped to ``[eps, 1 - eps]`` first.

    Returns:
      (llr, n_clamped); ``llr`` is a float for scalar input, an array otherwise.
    """
    if not 0.0 < train_prior < 1.0:
        raise ValueError(f"train_prior must be in (0, 1), got {train_prior}")
    arr = np.asarray(p, dtype=float)
    clamped = np.clip(arr, eps, 1.0 - eps)
    n_clamped = int(np.count_nonzero(clamped != arr))
    llr = logit(clamped) - math.log(train_prior / (1.0 - train_prior))
    if arr.ndim == 0:
        return float(llr), n_clamped
    return llr, n_clamped


def _label_mask(labels) -> np.ndarray:
    """True for bona fide. Accepts booleans/0-1 ints or 'bonafide'/'spoof' strings."""
    labels = np.asarray(labels)
    if labels.dtype.kind in "USO":
        bad = ~np.isin(labels, [BONAFIDE, SPOOF])
        if bad.any():
            raise ValueError(f"unknown label {labels[bad][0]!r}")
        return labels == BONAFIDE
    return labels.astype(bool)


# ---------------------------------------------------------------------------
# logistic regression


def affine_objective(theta, scores, is_bona, prior, hessian=True, targets=None):
    """Prior-weighted cross-entropy of an affine calibration.

    Args:
      theta: Parameters ``[w_1 .. w_K, b]``.
      scores: N x K score matrix.
      is_bona: Boolean mask of bona fide rows.
      prior: Effective bona fide prior.
      hessian: Also return the Hessian.
      targets: Optional soft bona fide targets in [0, 1] per row
        (default: 1 for bona fide rows, 0 for spoof rows).

    Returns:
      (value, gradient[, hessian]) with respect to ``theta``.
    """
    theta = np.asarray(theta, dtype=float)
    x = np.column_stack([scores, np.ones(len(scores))])
    tau = math.log(prior / (1.0 - prior))
    z = x @ theta + tau
    n_bona = np.count_nonzero(is_bona)
    n_spoof = len(is_bona) - n_bona
    weight = np.where(is_bona, prior / n_bona, (1.0 - prior) / n_spoof)
    y = is_bona.astype(float) if targets is None else np.asarray(targets, dtype=float)
    loss = y * np.logaddexp(0.0, -z) + (1.0 - y) * np.logaddexp(0.0, z)
    value = float(np.sum(weight * loss))
    sig = np.exp(-np.logaddexp(0.0, -z))  # sigmoid(z)
    grad = x.T @ (weight * (sig - y))
    if not hessian:
        return value, grad
    curv = weight * sig * (1.0 - sig)
    hess = (x * curv[:, None]).T @ x
    return value, grad, hess


def platt_targets(is_bona) -> np.ndarray:
    """Smoothed targets (N+ + 1)/(N+ + 2) and 1/(N- + 2).

    Keeps the optimum finite when the development scores are separable.
    """
    n_bona = np.count_nonzero(is_bona)
    n_spoof = len(is_bona) - n_bona
    return np.where(is_bona, (n_bona + 1.0) / (n_bona + 2.0), 1.0 / (n_spoof + 2.0))


@dataclass(frozen=True)
class AffineCalibrator:
    """Affine map ``s -> w.s + b`` producing LLRs.

    ``converged``/``grad_norm``/``n_iter`` describe the training run and are
    not serialized.
    """

    weights: np.ndarray
    bias: float
    prior: float = 0.5
    converged: bool = True
    grad_norm: float = 0.0
    n_iter: int = 0

    def __post_init__(self):
        w = np.atleast_1d(np.asarray(self.weights, dtype=float)).copy()
        if w.ndim != 1 or w.size == 0 or not np.all(np.isfinite(w)):
            raise ValueError("weights must be a non-empty finite vector")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "bias", float(self.bias))

    @property
    def n_inputs(self) -> int:
        return self.weights.size

    def __call__(self, scores):
        return apply_affine(self, scores)

    def __eq__(self, other):
        if not isinstance(other, AffineCalibrator):
            return NotImplemented
        return (np.array_equal(self.weights, other.weights) and self.bias == other.bias
                and self.prior == other.prior)

    __hash__ = None


def train_affine(scores, labels, prior: float = 0.5, tol: float = 1e-8,
                 max_iter: int = 100, smooth_targets: bool = False) -> AffineCalibrator:
    """Fit an affine calibration/fusion by damped Newton with backtracking.

    Args:
      scores: N-vector (calibration) or N x K matrix (fusion) of dev scores.
      labels: N labels, see :func:`_label_mask`.
      prior: Effective bona fide prior the output LLRs are calibrated for.
      tol: Stop when the gradient infinity-norm drops below this.
      max_iter: Maximum number of Newton steps.
      smooth_targets: Train on :func:`platt_targets` instead of hard labels.

    Returns:
      The fitted calibrator. If ``max_iter`` is reached first a
      :class:`NoConvergence` warning is issued and the best iterate returned.
    """
    s = np.asarray(scores, dtype=float)
    if s.ndim == 1:
        s = s[:, None]
    if s.ndim != 2 or s.shape[1] == 0:
        raise ValueError("scores must be an N x K matrix with K >= 1")
    if not np.all(np.isfinite(s)):
        raise ValueError("scores must be finite")
    is_bona = _label_mask(labels)
    if len(is_bona) != len(s):
        raise ValueError(f"{len(s)} score rows but {len(is_bona)} labels")
    if not is_bona.any():
        raise EmptyClass(BONAFIDE)
    if is_bona.all():
        raise EmptyClass(SPOOF)
    if not 0.0 < prior < 1.0:
        raise ValueError(f"prior must be in (0, 1), got {prior}")

    targets = platt_targets(is_bona) if smooth_targets else None
    theta = np.zeros(s.shape[1] + 1)
    theta[:-1] = 1.0 if s.shape[1] == 1 else 1.0 / s.shape[1]
    value, grad, hess = affine_objective(theta, s, is_bona, prior, targets=targets)
    n_iter = 0
    while np.max(np.abs(grad)) >= tol and n_iter < max_iter:
        n_iter += 1
        # lstsq gives the minimum-norm step when columns are collinear
        step = np.linalg.lstsq(hess, -grad, rcond=None)[0]
        slope = float(grad @ step)
        if slope >= 0:
            step, slope = -grad, -float(grad @ grad)
        alpha = 1.0
        while True:
            cand = theta + alpha * step
            cand_value, cand_grad, cand_hess = affine_objective(cand, s, is_bona, prior,
                                                                   targets=targets)
            if cand_value <= value + 1e-4 * alpha * slope or alpha < 1e-10:
                break
            alpha *= 0.5
        if cand_value > value:
            break
        theta, value, grad, hess = cand, cand_value, cand_grad, cand_hess
    grad_norm = float(np.max(np.abs(grad)))
    converged = grad_norm < tol
    if not converged:
        warnings.warn(NoConvergence(grad_norm, n_iter), stacklevel=2)
    return AffineCalibrator(theta[:-1], theta[-1], prior, converged, grad_norm, n_iter)


def apply_affine(cal: AffineCalibrator, scores):
    """Apply a calibrator to a K-vector (one trial) or an N x K matrix.

    A 1-D input to a K=1 calibrator is treated as N trials.
    """
    s = np.asarray(scores, dtype=float)
    k = cal.n_inputs
    if s.ndim == 0:
        s = s.reshape(1)
    if s.ndim == 1:
        if k == 1:
            return s * cal.weights[0] + cal.bias
        if s.size != k:
            raise WidthMismatch(k, s.size)
        return float(s @ cal.weights + cal.bias)
    if s.shape[1] != k:
        raise WidthMismatch(k, s.shape[1])
    return s @ cal.weights + cal.bias


def apply_affine_scores(cal: AffineCalibrator, score_sets: list[ScoreSet]) -> ScoreSet:
    """Apply a calibrator to K aligned score sets, giving an LLR score set."""
    ids = _common_ids(score_sets)
    mat = np.array([[ss[u] for ss in score_sets] for u in ids], dtype=float).reshape(len(ids), -1)
    if mat.shape[1] != cal.n_inputs:
        raise WidthMismatch(cal.n_inputs, mat.shape[1])
    out = apply_affine(cal, mat)
    return ScoreSet(dict(zip(ids, map(float, out))), "llr")


def serialize_calibrator(cal: AffineCalibrator) -> str:
    return (
        "weights " + " ".join(_fmt(w) for w in cal.weights) + "\n"
        f"bias {_fmt(cal.bias)}\n"
        f"prior {_fmt(cal.prior)}\n"
    )


def parse_calibrator(text: str) -> AffineCalibrator:
    fields: dict[str, list[str]] = {}
    for line_no, line in enumerate(text.splitlines(), start=1):
        parts = line.split()
        if not parts or parts[0].startswith("#"):
            continue
        if parts[0] not in ("weights", "bias", "prior") or parts[0] in fields or len(parts) < 2:
            raise MalformedLine(line_no, line)
        fields[parts[0]] = parts[1:]
    if not fields:
        raise EmptyInput("calibrator file")
    if set(fields) != {"weights", "bias", "prior"} or len(fields["bias"]) != 1 \
            or len(fields["prior"]) != 1:
        raise MalformedLine(0, "calibrator file needs 'weights', 'bias' and 'prior' lines")
    try:
        return AffineCalibrator(
            np.array([float(w) for w in fields["weights"]]),
            float(fields["bias"][0]),
            float(fields["prior"][0]),
        )
    except ValueError as exc:
        raise MalformedLine(0, str(exc)) from None


# ---------------------------------------------------------------------------
# min-max normalization and average fusion


@dataclass(frozen=True)
class MinMaxNormalizer:
    low: float
    high: float

    def __post_init__(self):
        if not self.high > self.low:
            raise DegenerateRange(self.low)

    def __call__(self, scores):
        return minmax_apply(self, scores)


def minmax_fit(dev) -> MinMaxNormalizer:
    """Estimate the normalization range on development scores."""
    values = dev.values() if isinstance(dev, ScoreSet) else np.asarray(dev, dtype=float).ravel()
    if values.size == 0:
        raise EmptyInput("development scores")
    lo, hi = float(np.min(values)), float(np.max(values))
    if hi == lo:
        raise DegenerateRange(lo)
    return MinMaxNormalizer(lo, hi)


def minmax_apply(norm: MinMaxNormalizer, scores):
    """Map scores to [0, 1] with the dev range, clamping out-of-range values."""
    if isinstance(scores, ScoreSet):
        vals = minmax_apply(norm, scores.values())
        return ScoreSet(dict(zip(scores.ids(), map(float, vals))), "raw")
    out = np.clip((np.asarray(scores, dtype=float) - norm.low) / (norm.high - norm.low), 0.0, 1.0)
    return float(out) if out.ndim == 0 else out


def _common_ids(score_sets: list[ScoreSet]) -> list[str]:
    if not score_sets:
        raise EmptyInput("score set list")
    ids = set(score_sets[0].entries)
    for i, ss in enumerate(score_sets[1:], start=1):
        if set(ss.entries) != ids:
            diff = sorted(ids.symmetric_difference(ss.entries))
            raise IdSetMismatch(f"system {i} differs on {diff[0]}")
    return score_sets[0].ids()


def average_fuse(score_sets: list[ScoreSet]) -> ScoreSet:
    """Equal-weight mean of normalized score sets (output semantics: raw)."""
    ids = _common_ids(score_sets)
    for ss in score_sets:
        vals = ss.values()
        if vals.min() < 0.0 or vals.max() > 1.0:
            raise ValueError("average fusion expects scores normalized to [0, 1]")
    fused = {u: float(np.mean([ss[u] for ss in score_sets])) for u in ids}
    return ScoreSet(fused, "raw")


def fit_average_fusion(dev_sets: list[ScoreSet]) -> list[MinMaxNormalizer]:
    return [minmax_fit(ss) for ss in dev_sets]


def apply_average_fusion(norms: list[MinMaxNormalizer], eval_sets: list[ScoreSet]) -> ScoreSet:
    if len(norms) != len(eval_sets):
        raise WidthMismatch(len(norms), len(eval_sets))
    return average_fuse([minmax_apply(n, ss) for n, ss in zip(norms, eval_sets)])


def stack_for_training(score_sets: list[ScoreSet], key) -> tuple[np.ndarray, np.ndarray, list[str]]:
    """Align K dev score sets with a key into (N x K matrix, bona mask, ids).

    Utterances absent from the key are dropped.
    """
    ids = [u for u in _common_ids(score_sets) if u in key]
    mat = np.array([[ss[u] for ss in score_sets] for u in ids], dtype=float).reshape(len(ids), -1)
    is_bona = np.array([key[u] == BONAFIDE for u in ids], dtype=bool)
    return mat, is_bona, ids
