"""Frame-level (point-based) localization evaluation."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from .corpus import BONAFIDE, SPOOF, FrameScoreSet, SegmentAnnotationSet
from .errors import EmptyClass, FrameCountMismatch, IdSetMismatch, ResolutionMismatch
from .metrics import eer

logger = logging.getLogger(__name__)

DEFAULT_RESOLUTION = 0.02
MAX_FRAME_MISMATCH = 2
# overlaps/coverages below this many seconds are float round-off
TIME_EPS = 1e-9


def frame_count(duration: float, resolution: float) -> int:
    """ceil(duration / resolution), ignoring a final frame of round-off width."""
    if resolution <= 0:
        raise ValueError("resolution must be positive")
    n = math.ceil(duration / resolution)
    while n > 1 and (n - 1) * resolution >= duration - TIME_EPS:
        n -= 1
    while n * resolution < duration - TIME_EPS:
        n += 1
    return max(n, 1)


def frame_bounds(duration: float, resolution: float) -> tuple[np.ndarray, np.ndarray]:
    n = frame_count(duration, resolution)
    k = np.arange(n)
    starts = k * resolution
    ends = np.minimum((k + 1) * resolution, duration)
    return starts, ends


def label_overlap(annot: SegmentAnnotationSet, utt_id: str, label: str,
                  starts: np.ndarray, ends: np.ndarray) -> np.ndarray:
    """Seconds of each frame covered by segments carrying ``label``."""
    overlap = np.zeros(starts.size)
    for seg in annot[utt_id]:
        if seg.label == label:
            overlap += np.clip(np.minimum(ends, seg.end) - np.maximum(starts, seg.start), 0.0, None)
    overlap[overlap <= TIME_EPS] = 0.0
    return overlap


def frame_mask(annot: SegmentAnnotationSet, utt_id: str, label: str, resolution: float,
               threshold: float = 0.0) -> np.ndarray:
    """True where the fraction of the frame covered by ``label`` exceeds ``threshold``."""
    starts, ends = frame_bounds(annot.duration(utt_id), resolution)
    cover = ends - starts
    overlap = label_overlap(annot, utt_id, label, starts, ends)
    return (overlap > 0) & (overlap > (threshold + TIME_EPS) * cover)


@dataclass(frozen=True)
class FrameLabelSet:
    """Per-utterance frame labels; True marks a spoof frame."""

    resolution: float
    spoof: dict[str, np.ndarray]

    def __len__(self):
        return len(self.spoof)

    def __iter__(self):
        return iter(self.spoof)

    def __getitem__(self, utt_id: str) -> np.ndarray:
        return self.spoof[utt_id]

    def labels(self, utt_id: str) -> list[str]:
        return [SPOOF if s else BONAFIDE for s in self.spoof[utt_id]]

    def n_frames(self) -> int:
        return sum(v.size for v in self.spoof.values())


def expand_frame_labels(annot: SegmentAnnotationSet, resolution: float = DEFAULT_RESOLUTION,
                        threshold: float = 0.0) -> FrameLabelSet:
    """Label frame ``k`` (covering ``[k r, (k+1) r)``) spoof if its spoofed share exceeds ``threshold``.

    The final partial frame is judged on its actual coverage.
    """
    if not 0.0 <= threshold < 1.0:
        raise ValueError("threshold must be in [0, 1)")
    return FrameLabelSet(
        resolution,
        {u: frame_mask(annot, u, SPOOF, resolution, threshold) for u in annot},
    )


def _check_resolution(a: float, b: float):
    if not math.isclose(a, b, rel_tol=1e-9, abs_tol=0.0):
        raise ResolutionMismatch(a, b)


def align_frames(utt_id: str, a: np.ndarray, b: np.ndarray,
                 tolerance: int = MAX_FRAME_MISMATCH) -> tuple[np.ndarray, np.ndarray, int]:
    """Truncate two per-frame vectors to the shorter length.

    Returns:
      (a, b, number of dropped frames)
    """
    diff = abs(a.size - b.size)
    if diff > tolerance:
        raise FrameCountMismatch(utt_id, a.size, b.size)
    n = min(a.size, b.size)
    return a[:n], b[:n], diff


@dataclass(frozen=True)
class LocalizationResult:
    eer: float
    threshold: float
    n_frames: int
    n_truncated: int = 0
    n_utterances: int = 0
    n_skipped: int = 0


def _matched_ids(scores: FrameScoreSet, labels: FrameLabelSet) -> list[str]:
    if set(scores.scores) != set(labels.spoof):
        diff = sorted(set(scores.scores).symmetric_difference(labels.spoof))
        raise IdSetMismatch(f"frame scores and labels differ on {diff[0]}")
    return sorted(scores.scores)


def pooled_point_eer(scores: FrameScoreSet, labels: FrameLabelSet,
                     per_utterance: bool = False) -> LocalizationResult:
    """Point-based EER over frame predictions.

    By default all frames of all utterances are pooled into a single EER.
    With ``per_utterance`` the EER is averaged over utterances that contain
    both classes (others are counted in ``n_skipped``).
    """
    _check_resolution(scores.resolution, labels.resolution)
    bona, spoof = [], []
    per_utt = []
    n_truncated = n_skipped = 0
    ids = _matched_ids(scores, labels)
    for utt in ids:
        s, lab, dropped = align_frames(utt, scores[utt], labels[utt])
        n_truncated += dropped
        if per_utterance:
            if lab.all() or not lab.any():
                n_skipped += 1
                continue
            per_utt.append(eer(s[~lab], s[lab]))
        bona.append(s[~lab])
        spoof.append(s[lab])
    if n_truncated:
        logger.info("truncated %d frames to reconcile frame counts", n_truncated)
    bona = np.concatenate(bona)
    spoof = np.concatenate(spoof)
    n = bona.size + spoof.size
    if per_utterance:
        if not per_utt:
            raise EmptyClass("spoof" if bona.size else "bonafide")
        values = np.array(per_utt)
        return LocalizationResult(float(values[:, 0].mean()), float(np.median(values[:, 1])),
                                  n, n_truncated, len(per_utt), n_skipped)
    value, thr = eer(bona, spoof)
    return LocalizationResult(value, thr, n, n_truncated, len(ids), 0)
