"""Protocol keys, score files, segment annotations and frame-score files.

All formats are line oriented UTF-8 text. Fields are separated by one or
more spaces/tabs, blank lines are skipped and lines starting with ``#`` are
comments (except the ``#resolution`` header of frame-score files).

Formats::

    key file           <utt-id> <bonafide|spoof>
    score file         <utt-id> <score>
    segment file       <utt-id> <start_sec> <end_sec> <label>
    frame-score file   #resolution <sec>
                       <utt-id> <s1> <s2> ... <sN>
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator, NamedTuple

import numpy as np

from .errors import (
    BadLabel,
    CoverageGap,
    DuplicateUtterance,
    EmptyClass,
    EmptyInput,
    EndBeforeStart,
    MalformedLine,
    MissingInKey,
    NonFiniteScore,
    OverlappingSegments,
    ResolutionMismatch,
    ScoreRangeError,
)

logger = logging.getLogger(__name__)

BONAFIDE = "bonafide"
SPOOF = "spoof"
CLASS_LABELS = (BONAFIDE, SPOOF)
SPEECH_LABELS = ("speech", "nonspeech")
SCORE_SEMANTICS = ("raw", "posterior", "llr")

# absorbs float round-off in annotation boundaries
GAP_TOLERANCE = 1e-6


def _fmt(x: float) -> str:
    return repr(float(x))


def _data_lines(text: str) -> Iterator[tuple[int, list[str]]]:
    """Yield (1-based line number, fields) for every non-blank, non-comment line."""
    for line_no, line in enumerate(text.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        yield line_no, stripped.split()


def _parse_float(token: str, line_no: int, line: list[str]) -> float:
    try:
        value = float(token)
    except ValueError:
        raise MalformedLine(line_no, " ".join(line)) from None
    if not math.isfinite(value):
        raise NonFiniteScore(line_no)
    return value


# ---------------------------------------------------------------------------
# Trial keys


@dataclass(frozen=True)
class TrialKey:
    """Utterance-level ground truth, in file order."""

    entries: dict[str, str]

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, utt_id: str) -> bool:
        return utt_id in self.entries

    def __getitem__(self, utt_id: str) -> str:
        return self.entries[utt_id]

    def ids(self, label: str | None = None) -> list[str]:
        if label is None:
            return list(self.entries)
        return [u for u, lab in self.entries.items() if lab == label]

    def count(self, label: str) -> int:
        return sum(1 for lab in self.entries.values() if lab == label)

    def require_both_classes(self) -> None:
        for label in CLASS_LABELS:
            if self.count(label) == 0:
                raise EmptyClass(label)


def parse_key(text: str) -> TrialKey:
    entries: dict[str, str] = {}
    for line_no, fields in _data_lines(text):
        if len(fields) != 2:
            raise MalformedLine(line_no, " ".join(fields))
        utt, label = fields
        if label not in CLASS_LABELS:
            raise BadLabel(line_no, label)
        if utt in entries:
            raise DuplicateUtterance(utt)
        entries[utt] = label
    if not entries:
        raise EmptyInput("key file")
    return TrialKey(entries)


def serialize_key(key: TrialKey) -> str:
    return "".join(f"{u} {lab}\n" for u, lab in key.entries.items())


# ---------------------------------------------------------------------------
# Score sets


@dataclass(frozen=True)
class ScoreSet:
    """Per-utterance detector scores; higher means more bona fide."""

    entries: dict[str, float]
    semantics: str = "raw"

    def __post_init__(self):
        if self.semantics not in SCORE_SEMANTICS:
            raise ValueError(f"unknown score semantics {self.semantics!r}")
        for utt, s in self.entries.items():
            if not math.isfinite(s):
                raise NonFiniteScore(0)
            if self.semantics == "posterior" and not 0.0 <= s <= 1.0:
                raise ScoreRangeError(utt, s)

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, utt_id: str) -> bool:
        return utt_id in self.entries

    def __getitem__(self, utt_id: str) -> float:
        return self.entries[utt_id]

    def ids(self) -> list[str]:
        return list(self.entries)

    def values(self) -> np.ndarray:
        return np.fromiter(self.entries.values(), dtype=float, count=len(self.entries))

    def sorted(self) -> "ScoreSet":
        """Copy with entries in lexicographic utterance-id order."""
        return ScoreSet({u: self.entries[u] for u in sorted(self.entries)}, self.semantics)


def parse_scores(text: str, semantics: str = "raw") -> ScoreSet:
    entries: dict[str, float] = {}
    for line_no, fields in _data_lines(text):
        if len(fields) != 2:
            raise MalformedLine(line_no, " ".join(fields))
        utt, token = fields
        value = _parse_float(token, line_no, fields)
        if utt in entries:
            raise DuplicateUtterance(utt)
        if semantics == "posterior" and not 0.0 <= value <= 1.0:
            raise ScoreRangeError(utt, value)
        entries[utt] = value
    if not entries:
        raise EmptyInput("score file")
    return ScoreSet(entries, semantics)


def serialize_scores(scores: ScoreSet) -> str:
    return "".join(f"{u} {_fmt(s)}\n" for u, s in scores.entries.items())


def join_scores_with_key(
    scores: ScoreSet, key: TrialKey, strict: bool = True
) -> tuple[np.ndarray, np.ndarray]:
    """Split scores into bona fide and spoof vectors using the key.

    Args:
      scores: Scores to partition.
      key: Ground truth labels.
      strict: If True every scored utterance must appear in the key;
        otherwise unknown utterances are dropped with a warning.

    Returns:
      (bona_scores, spoof_scores), each in key order.
    """
    missing = [u for u in scores.entries if u not in key.entries]
    if missing:
        if strict:
            raise MissingInKey(missing[0])
        logger.warning("dropping %d scored utterances absent from key", len(missing))
    bona, spoof = [], []
    for utt, label in key.entries.items():
        if utt in scores.entries:
            (bona if label == BONAFIDE else spoof).append(scores.entries[utt])
    if not bona:
        raise EmptyClass(BONAFIDE)
    if not spoof:
        raise EmptyClass(SPOOF)
    return np.asarray(bona, dtype=float), np.asarray(spoof, dtype=float)


# ---------------------------------------------------------------------------
# Segment annotations


class Segment(NamedTuple):
    start: float
    end: float
    label: str


@dataclass(frozen=True)
class SegmentAnnotationSet:
    """Time-stamped labelled regions that tile each utterance from 0 to its end."""

    utterances: dict[str, tuple[Segment, ...]]
    labels: tuple[str, ...] = CLASS_LABELS

    def __len__(self) -> int:
        return len(self.utterances)

    def __getitem__(self, utt_id: str) -> tuple[Segment, ...]:
        return self.utterances[utt_id]

    def __iter__(self):
        return iter(self.utterances)

    def duration(self, utt_id: str) -> float:
        return self.utterances[utt_id][-1].end

    @property
    def durations(self) -> dict[str, float]:
        return {u: segs[-1].end for u, segs in self.utterances.items()}

    def label_duration(self, utt_id: str, label: str) -> float:
        return sum(s.end - s.start for s in self.utterances[utt_id] if s.label == label)

    def transitions(self, utt_id: str) -> list[float]:
        """Times where the label changes between consecutive segments."""
        segs = self.utterances[utt_id]
        return [b.start for a, b in zip(segs, segs[1:]) if a.label != b.label]


def validate_segments(utt_id: str, segs: Iterable[Segment]) -> tuple[Segment, ...]:
    """Sort one utterance's segments and check overlap/coverage invariants."""
    ordered = tuple(sorted(segs, key=lambda s: (s.start, s.end)))
    if ordered[0].start > GAP_TOLERANCE:
        raise CoverageGap(utt_id, 0.0)
    for prev, cur in zip(ordered, ordered[1:]):
        if cur.start < prev.end - GAP_TOLERANCE:
            raise OverlappingSegments(utt_id)
        if cur.start > prev.end + GAP_TOLERANCE:
            raise CoverageGap(utt_id, prev.end)
    return ordered


def parse_segments(text: str, labels: tuple[str, ...] = CLASS_LABELS) -> SegmentAnnotationSet:
    """Parse a segment file.

    ``labels`` is the closed label vocabulary: bona fide/spoof by default,
    :data:`SPEECH_LABELS` for speech activity annotations.
    """
    grouped: dict[str, list[Segment]] = {}
    for line_no, fields in _data_lines(text):
        if len(fields) != 4:
            raise MalformedLine(line_no, " ".join(fields))
        utt, t0, t1, label = fields
        try:
            start, end = float(t0), float(t1)
        except ValueError:
            raise MalformedLine(line_no, " ".join(fields)) from None
        if not (math.isfinite(start) and math.isfinite(end)) or start < 0:
            raise MalformedLine(line_no, " ".join(fields))
        if end <= start:
            raise EndBeforeStart(line_no)
        if label not in labels:
            raise BadLabel(line_no, label)
        grouped.setdefault(utt, []).append(Segment(start, end, label))
    if not grouped:
        raise EmptyInput("segment file")
    return SegmentAnnotationSet(
        {u: validate_segments(u, segs) for u, segs in grouped.items()}, tuple(labels)
    )


def serialize_segments(annot: SegmentAnnotationSet) -> str:
    return "".join(
        f"{u} {_fmt(s.start)} {_fmt(s.end)} {s.label}\n"
        for u, segs in annot.utterances.items()
        for s in segs
    )


def make_segments(utterances: dict[str, Iterable[tuple[float, float, str]]],
                  labels: tuple[str, ...] = CLASS_LABELS) -> SegmentAnnotationSet:
    """Build a validated annotation set from plain tuples."""
    return SegmentAnnotationSet(
        {u: validate_segments(u, [Segment(*s) for s in segs]) for u, segs in utterances.items()},
        tuple(labels),
    )


def utterance_key(annot: SegmentAnnotationSet) -> TrialKey:
    """Utterance label is spoof iff any segment is spoofed."""
    return TrialKey({
        u: SPOOF if any(s.label == SPOOF for s in segs) else BONAFIDE
        for u, segs in annot.utterances.items()
    })


# ---------------------------------------------------------------------------
# Frame scores


@dataclass(frozen=True)
class FrameScoreSet:
    """Per-frame scores at a uniform frame step (also used for contribution maps)."""

    resolution: float
    scores: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        if not (self.resolution > 0 and math.isfinite(self.resolution)):
            raise ValueError(f"resolution must be positive, got {self.resolution!r}")
        frozen = {}
        for utt, vec in self.scores.items():
            vec = np.array(vec, dtype=float)
            if vec.ndim != 1 or vec.size == 0:
                raise EmptyInput(f"frame vector of {utt}")
            if not np.all(np.isfinite(vec)):
                raise NonFiniteScore(0)
            vec.setflags(write=False)
            frozen[utt] = vec
        object.__setattr__(self, "scores", frozen)

    def __len__(self) -> int:
        return len(self.scores)

    def __getitem__(self, utt_id: str) -> np.ndarray:
        return self.scores[utt_id]

    def __iter__(self):
        return iter(self.scores)


def parse_frame_scores(text: str) -> FrameScoreSet:
    resolution = None
    scores: dict[str, np.ndarray] = {}
    for line_no, line in enumerate(text.splitlines(), start=1):
        fields = line.split()
        if not fields:
            continue
        if fields[0] == "#resolution":
            if len(fields) != 2:
                raise MalformedLine(line_no, line)
            value = _parse_float(fields[1], line_no, fields)
            if value <= 0:
                raise MalformedLine(line_no, line)
            if resolution is not None and value != resolution:
                raise ResolutionMismatch(resolution, value)
            resolution = value
            continue
        if fields[0].startswith("#"):
            continue
        if resolution is None:
            raise MalformedLine(line_no, "frame-score file must start with '#resolution <sec>'")
        if len(fields) < 2:
            raise MalformedLine(line_no, line)
        utt = fields[0]
        if utt in scores:
            raise DuplicateUtterance(utt)
        scores[utt] = np.array([_parse_float(t, line_no, fields) for t in fields[1:]])
    if not scores:
        raise EmptyInput("frame-score file")
    return FrameScoreSet(resolution, scores)


def serialize_frame_scores(frames: FrameScoreSet) -> str:
    lines = [f"#resolution {_fmt(frames.resolution)}\n"]
    for utt, vec in frames.scores.items():
        lines.append(utt + " " + " ".join(_fmt(v) for v in vec) + "\n")
    return "".join(lines)


# ---------------------------------------------------------------------------
# file helpers


def read_text(path) -> str:
    with open(path, encoding="utf-8") as f:
        return f.read()


def read_key(path) -> TrialKey:
    return parse_key(read_text(path))


def read_scores(path, semantics: str = "raw") -> ScoreSet:
    return parse_scores(read_text(path), semantics)


def read_segments(path, labels: tuple[str, ...] = CLASS_LABELS) -> SegmentAnnotationSet:
    return parse_segments(read_text(path), labels)


def read_frame_scores(path) -> FrameScoreSet:
    return parse_frame_scores(read_text(path))
