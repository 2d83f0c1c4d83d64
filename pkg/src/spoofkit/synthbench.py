"""Desk-scale synthetic benchmark.

A seeded generator produces bona fide, fully fake and partially fake
utterances from two signal recipes that differ in spectral tilt (plus a
narrowband component for fakes). A toy detector scores LFCC frames with an
affine model; averaging the frame scores gives the utterance score and
skipping the average gives frame scores for localization.
"""

from __future__ import annotations

import logging
import math
import os
from dataclasses import asdict, dataclass, field, fields

import numpy as np
from scipy.signal import lfilter

from . import calib
from .augment import derive_seed
from .corpus import (
    BONAFIDE,
    SPOOF,
    FrameScoreSet,
    ScoreSet,
    SegmentAnnotationSet,
    TrialKey,
    SPEECH_LABELS,
    join_scores_with_key,
    make_segments,
    serialize_key,
    serialize_segments,
)
from .dsp import FeatureConfig, Waveform, cepstral_features, encode_wav
from .io_utils import atomic_write_bytes, atomic_write_text
from .errors import EmptyClass, MalformedLine
from .analysis import CONCATENATED, rcq, segment_type_labels
from .localize import DEFAULT_RESOLUTION, expand_frame_labels, frame_count, pooled_point_eer
from .metrics import cllr, eer

logger = logging.getLogger(__name__)

SPLITS = ("train", "dev", "eval")


@dataclass(frozen=True)
class SynthConfig:
    seed: int = 0
    n_utterances: int = 200
    sample_rate: int = 16000
    min_duration: float = 1.0
    max_duration: float = 3.0
    frac_bonafide: float = 0.4
    frac_fake: float = 0.3
    frac_partial: float = 0.3
    min_splices: int = 1
    max_splices: int = 3
    min_splice_duration: float = 0.5
    max_splice_duration: float = 1.0
    f0_low: float = 90.0
    f0_high: float = 250.0
    n_harmonics: int = 10
    bonafide_tilt: float = 0.95
    fake_tilt: float = 0.6
    tilt_jitter: float = 0.02
    narrowband_low: float = 3000.0
    narrowband_high: float = 6000.0
    narrowband_level: float = 0.6
    min_level: float = 0.05
    max_level: float = 0.2

    def __post_init__(self):
        total = self.frac_bonafide + self.frac_fake + self.frac_partial
        if not math.isclose(total, 1.0, abs_tol=1e-9):
            raise ValueError(f"class fractions must sum to 1, got {total}")
        if min(self.frac_bonafide, self.frac_fake, self.frac_partial) < 0:
            raise ValueError("class fractions must be non-negative")
        if not 0 < self.min_duration <= self.max_duration:
            raise ValueError("durations must be positive and ordered")
        if not 0 < self.min_splice_duration <= self.max_splice_duration:
            raise ValueError("splice durations must be positive and ordered")
        if not 0 <= self.min_splices <= self.max_splices:
            raise ValueError("splice counts must be ordered")
        if self.n_utterances < 1:
            raise ValueError("n_utterances must be >= 1")


def parse_synth_config(values: dict[str, str]) -> SynthConfig:
    """Build a config from string values, rejecting unknown keys."""
    types = {f.name: f.type for f in fields(SynthConfig)}
    kwargs = {}
    for k, v in values.items():
        if k not in types:
            raise MalformedLine(0, f"unknown synth option {k!r}")
        kwargs[k] = int(v) if types[k] in ("int", int) else float(v)
    return SynthConfig(**kwargs)


@dataclass(frozen=True)
class SynthCorpus:
    config: SynthConfig
    waveforms: dict[str, Waveform]
    key: TrialKey
    segments: SegmentAnnotationSet
    kinds: dict[str, str] = field(default_factory=dict)  # bonafide / fake / partial

    def split(self, name: str) -> list[str]:
        return split_ids(list(self.waveforms), name)

    def speech_segments(self) -> SegmentAnnotationSet:
        """Speech-activity annotation; synthetic signals are speech throughout."""
        return make_segments(
            {u: [(0.0, self.segments.duration(u), "speech")] for u in self.segments},
            SPEECH_LABELS,
        )


def split_ids(ids: list[str], name: str) -> list[str]:
    """Deterministic 60/20/20 train/dev/eval split by utterance index."""
    n = len(ids)
    a, b = int(round(0.6 * n)), int(round(0.8 * n))
    bounds = {"train": (0, a), "dev": (a, b), "eval": (b, n)}
    if name not in bounds:
        raise ValueError(f"unknown split {name!r}; expected one of {SPLITS}")
    lo, hi = bounds[name]
    return ids[lo:hi]


def _render(rng: np.random.Generator, n: int, fs: int, fake: bool, cfg: SynthConfig) -> np.ndarray:
    """One segment of the bona fide or fake recipe, unit RMS."""
    tilt = (cfg.fake_tilt if fake else cfg.bonafide_tilt) + rng.uniform(-1, 1) * cfg.tilt_jitter
    noise = lfilter([1.0], [1.0, -tilt], rng.standard_normal(n))
    noise /= np.sqrt(np.mean(noise ** 2))
    t = np.arange(n) / fs
    f0 = rng.uniform(cfg.f0_low, cfg.f0_high)
    vibrato = 1.0 + 0.02 * np.sin(2 * np.pi * rng.uniform(3, 6) * t)
    phase = 2 * np.pi * np.cumsum(f0 * vibrato) / fs
    harm = np.zeros(n)
    for k in range(1, cfg.n_harmonics + 1):
        if k * f0 >= fs / 2:
            break
        harm += np.sin(k * phase + rng.uniform(0, 2 * np.pi)) / k
    harm /= np.sqrt(np.mean(harm ** 2))
    x = harm + noise
    if fake:
        f_nb = rng.uniform(cfg.narrowband_low, cfg.narrowband_high)
        x += cfg.narrowband_level * np.sqrt(2) * np.sin(2 * np.pi * f_nb * t + rng.uniform(0, 2 * np.pi))
    return x / np.sqrt(np.mean(x ** 2))


def _splice_intervals(rng, n: int, fs: int, cfg: SynthConfig) -> list[tuple[int, int]]:
    """Non-overlapping sample intervals that are replaced by fake content."""
    count = int(rng.integers(cfg.min_splices, cfg.max_splices + 1))
    intervals: list[tuple[int, int]] = []
    for _ in range(count):
        for _attempt in range(20):
            length = int(round(rng.uniform(cfg.min_splice_duration, cfg.max_splice_duration) * fs))
            length = min(length, n - 1)
            start = int(rng.integers(0, n - length + 1))
            end = start + length
            if all(end <= a or start >= b for a, b in intervals):
                intervals.append((start, end))
                break
    return sorted(intervals)


def generate_utterance(utt_id: str, kind: str, cfg: SynthConfig):
    """Render one utterance; returns (waveform, [(start_sec, end_sec, label), ...])."""
    rng = np.random.default_rng(derive_seed(cfg.seed, utt_id))
    fs = cfg.sample_rate
    n = int(round(rng.uniform(cfg.min_duration, cfg.max_duration) * fs))
    level = rng.uniform(cfg.min_level, cfg.max_level)
    x = _render(rng, n, fs, kind == "fake", cfg)
    label = SPOOF if kind == "fake" else BONAFIDE
    bounds = [(0, n, label)]
    if kind == "partial":
        intervals = _splice_intervals(rng, n, fs, cfg)
        bounds = []
        pos = 0
        for a, b in intervals:
            x[a:b] = _render(rng, b - a, fs, True, cfg)
            if a > pos:
                bounds.append((pos, a, BONAFIDE))
            bounds.append((a, b, SPOOF))
            pos = b
        if pos < n:
            bounds.append((pos, n, BONAFIDE))
    x = np.clip(level * x, -1.0, 1.0)
    # quantize like the stored PCM16 so in-memory and on-disk corpora agree
    x = np.round(x * 32768.0).clip(-32768, 32767) / 32768.0
    segs = [(a / fs, b / fs, lab) for a, b, lab in bounds]
    return Waveform(x, fs), segs


def utterance_kinds(cfg: SynthConfig) -> list[str]:
    n = cfg.n_utterances
    n_bona = int(round(cfg.frac_bonafide * n))
    n_fake = int(round(cfg.frac_fake * n))
    n_bona = min(n_bona, n)
    n_fake = min(n_fake, n - n_bona)
    kinds = ["bonafide"] * n_bona + ["fake"] * n_fake + ["partial"] * (n - n_bona - n_fake)
    np.random.default_rng(cfg.seed).shuffle(kinds)
    return kinds


def generate_corpus(cfg: SynthConfig = SynthConfig()) -> SynthCorpus:
    """Deterministic synthetic corpus; utterance label is spoof iff any segment is spoofed."""
    waves, segs, key, kinds = {}, {}, {}, {}
    for i, kind in enumerate(utterance_kinds(cfg)):
        utt = f"synth_{i:04d}"
        waves[utt], segs[utt] = generate_utterance(utt, kind, cfg)
        key[utt] = SPOOF if any(lab == SPOOF for _, _, lab in segs[utt]) else BONAFIDE
        kinds[utt] = kind
    return SynthCorpus(cfg, waves, TrialKey(key), make_segments(segs), kinds)


def write_corpus(corpus: SynthCorpus, out_dir) -> None:
    """Materialize WAVs plus key, segment, speech and manifest files."""
    wav_dir = os.path.join(out_dir, "wav")
    os.makedirs(wav_dir, exist_ok=True)
    manifest = []
    for utt, w in corpus.waveforms.items():
        path = os.path.join(wav_dir, f"{utt}.wav")
        atomic_write_bytes(path, encode_wav(w))
        manifest.append(f"{utt} wav/{utt}.wav\n")
    atomic_write_text(os.path.join(out_dir, "key.txt"), serialize_key(corpus.key))
    atomic_write_text(os.path.join(out_dir, "segments.txt"), serialize_segments(corpus.segments))
    atomic_write_text(os.path.join(out_dir, "speech.txt"), serialize_segments(corpus.speech_segments()))
    atomic_write_text(os.path.join(out_dir, "wav.scp"), "".join(manifest))
    for name in SPLITS:
        atomic_write_text(os.path.join(out_dir, f"{name}.lst"),
                          "".join(f"{u}\n" for u in corpus.split(name)))


# ---------------------------------------------------------------------------
# toy detector


@dataclass(frozen=True)
class ToyDetector:
    calibrator: calib.AffineCalibrator
    features: FeatureConfig = FeatureConfig()
    pooling: str = "mean"  # "mean" (utterance) or "none" (frame)

    @property
    def dim(self) -> int:
        return self.calibrator.n_inputs


def frame_features(w: Waveform, cfg: FeatureConfig) -> np.ndarray:
    return cepstral_features(w, "lfcc", cfg=cfg).frames


def frame_training_set(waveforms: dict[str, Waveform], segments: SegmentAnnotationSet,
                       ids: list[str], cfg: FeatureConfig) -> tuple[np.ndarray, np.ndarray]:
    """Stack LFCC frames of ``ids`` with frame-level bona fide labels."""
    feats, labels = [], []
    for utt in ids:
        f = frame_features(waveforms[utt], cfg)
        one = make_segments({utt: [tuple(s) for s in segments[utt]]})
        spoof = expand_frame_labels(one, cfg.frame_shift, 0.0)[utt]
        n = min(len(f), spoof.size)
        feats.append(f[:n])
        labels.append(~spoof[:n])
    return np.vstack(feats), np.concatenate(labels)


def train_toy_detector(waveforms: dict[str, Waveform], segments: SegmentAnnotationSet,
                       ids: list[str] | None = None, cfg: FeatureConfig = FeatureConfig(),
                       prior: float = 0.5, shuffle_seed: int | None = None) -> ToyDetector:
    """Fit the frame-level affine model on LFCC frames of the given utterances.

    ``shuffle_seed`` permutes the frame labels (chance-level control).
    """
    ids = list(waveforms) if ids is None else ids
    x, is_bona = frame_training_set(waveforms, segments, ids, cfg)
    if shuffle_seed is not None:
        is_bona = np.random.default_rng(shuffle_seed).permutation(is_bona)
    if is_bona.all():
        raise EmptyClass(SPOOF)
    if not is_bona.any():
        raise EmptyClass(BONAFIDE)
    cal = calib.train_affine(x, is_bona, prior=prior)
    return ToyDetector(cal, cfg)


def nearest_frames(n_src: int, frame_shift: float, frame_len: float, n_out: int,
                   resolution: float) -> np.ndarray:
    """Source frame index whose centre is nearest each output frame centre."""
    centers = (np.arange(n_out) + 0.5) * resolution
    idx = np.round((centers - frame_len / 2.0) / frame_shift).astype(int)
    return np.clip(idx, 0, n_src - 1)


def score_frames(d: ToyDetector, w: Waveform, resolution: float | None = None) -> np.ndarray:
    """Per-frame scores with pooling removed.

    Without ``resolution`` the scores are at the LFCC frame rate; otherwise
    they are mapped to ``ceil(duration / resolution)`` frames by nearest frame.
    """
    raw = calib.apply_affine(d.calibrator, frame_features(w, d.features))
    if resolution is None:
        return raw
    n_out = frame_count(w.duration, resolution)
    return raw[nearest_frames(raw.size, d.features.frame_shift, d.features.frame_len, n_out,
                              resolution)]


def score_utterance(d: ToyDetector, w: Waveform, mode: str = "pooled",
                    resolution: float | None = None):
    """``pooled``: mean of frame scores; ``frame``: the frame-score vector."""
    if mode == "pooled":
        return float(np.mean(score_frames(d, w)))
    if mode == "frame":
        return score_frames(d, w, resolution)
    raise ValueError(f"unknown scoring mode {mode!r}")


def serialize_detector(d: ToyDetector) -> str:
    lines = [calib.serialize_calibrator(d.calibrator)]
    for name, value in asdict(d.features).items():
        lines.append(f"feature.{name} {value}\n")
    lines.append(f"pooling {d.pooling}\n")
    return "".join(lines)


def parse_detector(text: str) -> ToyDetector:
    cal_lines, feat = [], {}
    pooling = "mean"
    types = {f.name: f for f in fields(FeatureConfig)}
    for line_no, line in enumerate(text.splitlines(), start=1):
        parts = line.split()
        if not parts:
            continue
        if parts[0].startswith("feature."):
            name = parts[0][len("feature."):]
            if name not in types or len(parts) != 2:
                raise MalformedLine(line_no, line)
            feat[name] = _coerce_feature(name, parts[1])
        elif parts[0] == "pooling":
            pooling = parts[1]
        else:
            cal_lines.append(line)
    return ToyDetector(calib.parse_calibrator("\n".join(cal_lines)), FeatureConfig(**feat), pooling)


def _coerce_feature(name: str, token: str):
    if token == "None":
        return None
    if name == "window":
        return token
    if name in ("n_filters", "n_ceps"):
        return int(token)
    return float(token)


# ---------------------------------------------------------------------------
# end to end


def frame_score_set(d: ToyDetector, waveforms: dict[str, Waveform], ids: list[str],
                    resolution: float = DEFAULT_RESOLUTION) -> FrameScoreSet:
    return FrameScoreSet(resolution, {u: score_utterance(d, waveforms[u], "frame", resolution)
                                      for u in sorted(ids)})


def utterance_scores(d: ToyDetector, waveforms: dict[str, Waveform], ids: list[str]) -> ScoreSet:
    return ScoreSet({u: score_utterance(d, waveforms[u]) for u in sorted(ids)}, "raw")


def gradient_maps(frames: FrameScoreSet) -> FrameScoreSet:
    """|d score / d frame| per utterance, a stand-in contribution map."""
    return FrameScoreSet(frames.resolution, {
        u: np.abs(np.gradient(v)) if v.size > 1 else np.zeros(1) for u, v in frames.scores.items()
    })


@dataclass(frozen=True)
class BenchmarkResult:
    utterance_eer: float
    point_eer: float
    frame_train_eer: float
    cllr_raw: float
    cllr_calibrated: float
    rcq: dict
    n_eval_frames: int

    @property
    def concatenated_rcq_is_max(self) -> bool:
        present = {t: v for t, v in self.rcq.items() if v is not None}
        return max(present, key=present.get) == CONCATENATED


def run_benchmark(cfg: SynthConfig = SynthConfig(), feature_cfg: FeatureConfig = FeatureConfig(),
                  resolution: float = DEFAULT_RESOLUTION, corpus: SynthCorpus | None = None,
                  boundary_window: float = 0.1) -> BenchmarkResult:
    """generate -> featurize -> train (train split) -> score (eval split) -> metrics.

    Utterance scores are calibrated on the dev split (prior 0.5, smoothed
    targets since 40 dev trials are often separable) and Cllr is reported on
    eval before and after. RCQ uses |frame-score gradient| maps of the eval
    partial fakes.
    """
    corpus = corpus or generate_corpus(cfg)
    train, dev, ev = (corpus.split(s) for s in SPLITS)
    det = train_toy_detector(corpus.waveforms, corpus.segments, train, feature_cfg)

    x, is_bona = frame_training_set(corpus.waveforms, corpus.segments, train, feature_cfg)
    train_scores = calib.apply_affine(det.calibrator, x)
    frame_train_eer, _ = eer(train_scores[is_bona], train_scores[~is_bona])

    eval_scores = utterance_scores(det, corpus.waveforms, ev)
    bona, spoof = join_scores_with_key(eval_scores, TrialKey({u: corpus.key[u] for u in ev}))
    utt_eer, _ = eer(bona, spoof)

    dev_scores = utterance_scores(det, corpus.waveforms, dev)
    mat, dev_bona, _ = calib.stack_for_training([dev_scores], TrialKey({u: corpus.key[u] for u in dev}))
    cal = calib.train_affine(mat, dev_bona, prior=0.5, smooth_targets=True)

    frames = frame_score_set(det, corpus.waveforms, ev, resolution)
    ev_segments = make_segments({u: [tuple(s) for s in corpus.segments[u]] for u in ev})
    loc = pooled_point_eer(frames, expand_frame_labels(ev_segments, resolution))

    partial = [u for u in ev if corpus.kinds[u] == "partial"]
    part_segments = make_segments({u: [tuple(s) for s in corpus.segments[u]] for u in partial})
    speech = make_segments({u: [(0.0, part_segments.duration(u), "speech")] for u in partial},
                           SPEECH_LABELS)
    types = segment_type_labels(part_segments, speech, boundary_window, resolution)
    maps = gradient_maps(FrameScoreSet(resolution, {u: frames[u] for u in partial}))
    return BenchmarkResult(
        utterance_eer=utt_eer,
        point_eer=loc.eer,
        frame_train_eer=frame_train_eer,
        cllr_raw=cllr(bona, spoof),
        cllr_calibrated=cllr(cal(bona), cal(spoof)),
        rcq=rcq(maps, types),
        n_eval_frames=loc.n_frames,
    )
