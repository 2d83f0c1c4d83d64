"""Score and contribution analyses: DET export, histograms, segment types and RCQ."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from .corpus import SPOOF, FrameScoreSet, SegmentAnnotationSet, _fmt
from .errors import (
    DuplicateUtterance,
    EmptyClass,
    EmptyInput,
    MalformedLine,
    ResolutionMismatch,
    ZeroGlobalMean,
)
from .localize import (
    TIME_EPS,
    align_frames,
    frame_bounds,
    frame_mask,
    label_overlap,
)
from .metrics import det_curve, eer_from_curve

PROB_CLAMP = 1e-6

BONAFIDE_SPEECH = "bonafide-speech"
SPOOFED_SPEECH = "spoofed-speech"
CONCATENATED = "concatenated-part"
BONAFIDE_NONSPEECH = "bonafide-nonspeech"
SPOOFED_NONSPEECH = "spoofed-nonspeech"
SEGMENT_TYPES = (BONAFIDE_SPEECH, SPOOFED_SPEECH, CONCATENATED, BONAFIDE_NONSPEECH,
                 SPOOFED_NONSPEECH)


def probit(p):
    return norm.ppf(np.clip(p, PROB_CLAMP, 1.0 - PROB_CLAMP))


def det_points(bona, spoof) -> np.ndarray:
    """DET polyline in probit space.

    Returns:
      (M, 2) array of ``(probit(p_fa), probit(p_miss))`` ordered by
      increasing threshold, with the EER operating point inserted.
    """
    curve = det_curve(bona, spoof)
    value, _ = eer_from_curve(curve)
    p_miss, p_fa = curve.p_miss, curve.p_fa
    i = int(np.argmax(p_miss - p_fa >= 0))
    if p_miss[i] != p_fa[i]:
        p_miss = np.insert(p_miss, i, value)
        p_fa = np.insert(p_fa, i, value)
    return np.column_stack([probit(p_fa), probit(p_miss)])


def serialize_det(points: np.ndarray) -> str:
    return "".join(f"{_fmt(a)} {_fmt(b)}\n" for a, b in points)


def score_histogram(bona, spoof, n_bins: int = 20) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-class counts over shared equal-width bins spanning the pooled range.

    When all scores are equal every score falls into bin 0.

    Returns:
      (edges, bona_counts, spoof_counts)
    """
    if n_bins < 1:
        raise ValueError("n_bins must be >= 1")
    bona = np.asarray(bona, dtype=float).ravel()
    spoof = np.asarray(spoof, dtype=float).ravel()
    if bona.size == 0:
        raise EmptyClass("bonafide")
    if spoof.size == 0:
        raise EmptyClass("spoof")
    pooled = np.concatenate([bona, spoof])
    lo, hi = float(pooled.min()), float(pooled.max())
    edges = np.linspace(lo, hi, n_bins + 1)

    def counts(x):
        if hi == lo:
            idx = np.zeros(x.size, dtype=int)
        else:
            idx = np.clip(np.floor((x - lo) / (hi - lo) * n_bins).astype(int), 0, n_bins - 1)
        return np.bincount(idx, minlength=n_bins)

    return edges, counts(bona), counts(spoof)


# ---------------------------------------------------------------------------
# segment types and RCQ


@dataclass(frozen=True)
class SegmentTypeLabels:
    resolution: float
    types: dict[str, np.ndarray]  # per utterance: array of type names

    def __iter__(self):
        return iter(self.types)

    def __getitem__(self, utt_id):
        return self.types[utt_id]

    def counts(self) -> dict[str, int]:
        allt = np.concatenate(list(self.types.values()))
        return {t: int(np.count_nonzero(allt == t)) for t in SEGMENT_TYPES}


def concatenation_mask(annot: SegmentAnnotationSet, utt_id: str, window: float,
                       resolution: float) -> np.ndarray:
    """Frames overlapping ``[t - window, t + window)`` for any label transition ``t``."""
    starts, ends = frame_bounds(annot.duration(utt_id), resolution)
    mask = np.zeros(starts.size, dtype=bool)
    for t in annot.transitions(utt_id):
        lo, hi = t - window, t + window
        mask |= (np.minimum(ends, hi) - np.maximum(starts, lo)) > TIME_EPS
    return mask


def segment_type_labels(spoof_annot: SegmentAnnotationSet, speech_annot: SegmentAnnotationSet,
                        boundary_window: float = 0.1, resolution: float = 0.02) -> SegmentTypeLabels:
    """Assign each frame one of :data:`SEGMENT_TYPES`.

    Frames near a bona fide/spoof transition are concatenated parts; the rest
    are typed by whether more than half of the frame is spoofed and whether
    more than half is speech.
    """
    types = {}
    for utt in spoof_annot:
        if utt not in speech_annot.utterances:
            raise EmptyInput(f"speech annotation for {utt}")
        concat = concatenation_mask(spoof_annot, utt, boundary_window, resolution)
        is_spoof = frame_mask(spoof_annot, utt, SPOOF, resolution, 0.5)
        is_speech = _speech_mask(speech_annot, utt, resolution, concat.size)
        t = np.where(is_spoof,
                     np.where(is_speech, SPOOFED_SPEECH, SPOOFED_NONSPEECH),
                     np.where(is_speech, BONAFIDE_SPEECH, BONAFIDE_NONSPEECH)).astype(object)
        t[concat] = CONCATENATED
        types[utt] = t
    return SegmentTypeLabels(resolution, types)


def _speech_mask(speech_annot, utt, resolution, n):
    starts, ends = frame_bounds(speech_annot.duration(utt), resolution)
    overlap = label_overlap(speech_annot, utt, "speech", starts, ends)
    mask = overlap > 0.5 * (ends - starts) + TIME_EPS
    # annotations may disagree on duration by round-off; pad with nonspeech
    if mask.size < n:
        mask = np.pad(mask, (0, n - mask.size))
    return mask[:n]


def rcq(maps: FrameScoreSet, types: SegmentTypeLabels) -> dict[str, float | None]:
    """Relative contribution per segment type, in percent of the global mean.

    Frames are pooled over utterances. Types without frames map to None.
    """
    if not math.isclose(maps.resolution, types.resolution, rel_tol=1e-9):
        raise ResolutionMismatch(maps.resolution, types.resolution)
    values, labels = [], []
    for utt in sorted(types.types):
        if utt not in maps.scores:
            raise EmptyInput(f"contribution map for {utt}")
        m, t, _ = align_frames(utt, maps[utt], types[utt])
        values.append(m)
        labels.append(t)
    values = np.concatenate(values)
    labels = np.concatenate(labels)
    global_mean = float(values.mean())
    if abs(global_mean) <= 1e-12:
        raise ZeroGlobalMean()
    out: dict[str, float | None] = {}
    for t in SEGMENT_TYPES:
        sel = labels == t
        out[t] = 100.0 * (float(values[sel].mean()) - global_mean) / global_mean if sel.any() else None
    return out


def serialize_rcq(result: dict[str, float | None]) -> str:
    lines = []
    for t in SEGMENT_TYPES:
        v = result.get(t)
        lines.append(f"{t} absent\n" if v is None else f"{t} {v:.6f}%\n")
    return "".join(lines)


# ---------------------------------------------------------------------------
# 2-D embedding passthrough


def parse_embeddings(text: str) -> dict[str, tuple[float, float]]:
    """Validate an externally produced ``<utt-id> <x> <y>`` embedding file."""
    out = {}
    for line_no, line in enumerate(text.splitlines(), start=1):
        parts = line.split()
        if not parts or parts[0].startswith("#"):
            continue
        if len(parts) != 3:
            raise MalformedLine(line_no, line)
        try:
            x, y = float(parts[1]), float(parts[2])
        except ValueError:
            raise MalformedLine(line_no, line) from None
        if not (math.isfinite(x) and math.isfinite(y)):
            raise MalformedLine(line_no, line)
        if parts[0] in out:
            raise DuplicateUtterance(parts[0])
        out[parts[0]] = (x, y)
    if not out:
        raise EmptyInput("embedding file")
    return out


def serialize_embeddings(emb: dict[str, tuple[float, float]]) -> str:
    return "".join(f"{u} {_fmt(x)} {_fmt(y)}\n" for u, (x, y) in sorted(emb.items()))
