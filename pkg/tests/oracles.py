"""Independent reference implementations used by the tests.

These are deliberately naive: exact rational arithmetic, explicit loops and
grid searches. They share no code with the package.
"""

from __future__ import annotations

import math
from fractions import Fraction

import numpy as np


def sweep_thresholds(bona, spoof):
    """Midpoints of sorted unique pooled scores plus +-inf."""
    uniq = sorted(set(float(x) for x in bona) | set(float(x) for x in spoof))
    mids = [(a + b) / 2.0 for a, b in zip(uniq, uniq[1:])]
    return [-math.inf] + mids + [math.inf]


def error_rates(bona, spoof, t):
    """Exact (p_miss, p_fa) at threshold t: miss is bona < t, false alarm is spoof >= t."""
    miss = sum(1 for b in bona if b < t)
    fa = sum(1 for s in spoof if s >= t)
    return Fraction(miss, len(bona)), Fraction(fa, len(spoof))


def brute_eer(bona, spoof) -> float:
    points = [error_rates(bona, spoof, t) for t in sweep_thresholds(bona, spoof)]
    for (m0, f0), (m1, f1) in zip(points, points[1:]):
        if m0 == f0:
            return float(m0)
        if (m0 - f0) < 0 <= (m1 - f1):
            # segment intersection with the diagonal, exact
            a = (f0 - m0) / ((m1 - m0) - (f1 - f0))
            return float(m0 + a * (m1 - m0))
    m, f = points[-1]
    assert m == f
    return float(m)


def brute_min_dcf(bona, spoof, p, c_miss, c_fa) -> float:
    p, c_miss, c_fa = Fraction(p), Fraction(c_miss), Fraction(c_fa)
    norm = min(p * c_miss, (1 - p) * c_fa)
    best = None
    for t in sweep_thresholds(bona, spoof):
        m, f = error_rates(bona, spoof, t)
        v = (c_miss * p * m + c_fa * (1 - p) * f) / norm
        best = v if best is None or v < best else best
    return float(best)


def direct_cllr(bona, spoof) -> float:
    cb = sum(math.log2(1.0 + math.exp(-s)) for s in bona) / len(bona)
    cs = sum(math.log2(1.0 + math.exp(s)) for s in spoof) / len(spoof)
    return 0.5 * (cb + cs)


def weighted_xent(w, b, x, is_bona, prior):
    """Prior-weighted logistic cross-entropy, written out term by term."""
    tau = math.log(prior / (1.0 - prior))
    z = np.atleast_2d(x).reshape(len(is_bona), -1) @ np.atleast_1d(w) + b + tau
    bona_terms = [math.log1p(math.exp(-v)) if v > -30 else -v for v in z[is_bona]]
    spoof_terms = [math.log1p(math.exp(v)) if v < 30 else v for v in z[~is_bona]]
    return prior * np.mean(bona_terms) + (1.0 - prior) * np.mean(spoof_terms)


def grid_search_affine(x, is_bona, prior, w_range, b_range, n=101, rounds=8):
    """Coarse-to-fine grid search over (w, b) for a single input column."""
    x = np.asarray(x, dtype=float).ravel()
    tau = math.log(prior / (1.0 - prior))
    (w_lo, w_hi), (b_lo, b_hi) = w_range, b_range
    best = None
    for _ in range(rounds):
        ws = np.linspace(w_lo, w_hi, n)
        bs = np.linspace(b_lo, b_hi, n)
        z = ws[:, None, None] * x[None, None, :] + bs[None, :, None] + tau
        loss = (prior * np.logaddexp(0, -z[..., is_bona]).mean(axis=-1)
                + (1 - prior) * np.logaddexp(0, z[..., ~is_bona]).mean(axis=-1))
        i, j = np.unravel_index(np.argmin(loss), loss.shape)
        best = (float(loss[i, j]), float(ws[i]), float(bs[j]))
        dw, db = (w_hi - w_lo) / (n - 1) * 2, (b_hi - b_lo) / (n - 1) * 2
        w_lo, w_hi = best[1] - dw, best[1] + dw
        b_lo, b_hi = best[2] - db, best[2] + db
    return best


def rcq_reference(values, types):
    """RCQ by plain Python accumulation over (value, type) pairs."""
    total = sum(values) / len(values)
    out = {}
    for t in sorted(set(types)):
        sel = [v for v, ty in zip(values, types) if ty == t]
        out[t] = 100.0 * (sum(sel) / len(sel) - total) / total
    return out
