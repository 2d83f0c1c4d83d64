"""Audio I/O, resampling, spectral analysis and cepstral features."""

from __future__ import annotations

import io
import math
import struct
from dataclasses import dataclass, field, replace
from fractions import Fraction

import numpy as np
from scipy.fft import dct
from scipy.signal import firwin, resample_poly

from .errors import CorruptHeader, EmptyInput, MalformedLine, UnsupportedFormat


@dataclass(frozen=True)
class Waveform:
    """Mono audio.

    Attributes:
      samples: Float samples, nominally in [-1, 1].
      sample_rate: Sampling rate in Hz.
      n_clipped: Number of samples clipped to [-1, 1] by toolkit
        operations that produced this waveform (cumulative along a chain).
    """

    samples: np.ndarray
    sample_rate: int
    n_clipped: int = 0

    def __post_init__(self):
        x = np.asarray(self.samples, dtype=float)
        if x.ndim != 1:
            raise ValueError("waveform samples must be 1-D")
        if x.size == 0:
            raise EmptyInput("waveform")
        if int(self.sample_rate) <= 0:
            raise ValueError(f"sample rate must be positive, got {self.sample_rate}")
        object.__setattr__(self, "samples", x)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    def __len__(self):
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate

    def with_samples(self, samples, extra_clipped: int = 0) -> "Waveform":
        return replace(self, samples=samples, n_clipped=self.n_clipped + extra_clipped)


def clip_unit(x: np.ndarray) -> tuple[np.ndarray, int]:
    """Clip to [-1, 1]; returns the clipped copy and the number of clipped samples."""
    over = np.abs(x) > 1.0
    n = int(np.count_nonzero(over))
    if n == 0:
        return x, 0
    return np.clip(x, -1.0, 1.0), n


# ---------------------------------------------------------------------------
# WAV PCM16 mono


def _read_chunks(data: bytes):
    if len(data) < 12 or data[:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise CorruptHeader("missing RIFF/WAVE signature")
    pos = 12
    while pos + 8 <= len(data):
        cid = data[pos:pos + 4]
        (size,) = struct.unpack("<I", data[pos + 4:pos + 8])
        body = data[pos + 8:pos + 8 + size]
        if len(body) < size:
            raise CorruptHeader(f"chunk {cid!r} truncated")
        yield cid, body
        pos += 8 + size + (size & 1)


def decode_wav(data: bytes) -> Waveform:
    fmt = None
    pcm = None
    for cid, body in _read_chunks(data):
        if cid == b"fmt ":
            if len(body) < 16:
                raise CorruptHeader("fmt chunk too short")
            fmt = struct.unpack("<HHIIHH", body[:16])
            if fmt[0] == 0xFFFE and len(body) >= 26:
                # WAVE_FORMAT_EXTENSIBLE: the subformat GUID starts with the format tag
                (sub,) = struct.unpack("<H", body[24:26])
                fmt = (sub,) + fmt[1:]
        elif cid == b"data":
            pcm = body
    if fmt is None:
        raise CorruptHeader("no fmt chunk")
    if pcm is None:
        raise CorruptHeader("no data chunk")
    tag, channels, rate, _byte_rate, block_align, bits = fmt
    if tag != 1:
        raise UnsupportedFormat(f"format tag {tag} (only integer PCM is supported)")
    if channels != 1:
        raise UnsupportedFormat(f"{channels} channels (only mono is supported)")
    if bits != 16:
        raise UnsupportedFormat(f"{bits}-bit samples (only 16-bit is supported)")
    if block_align != 2 or rate == 0:
        raise CorruptHeader("inconsistent fmt fields")
    if len(pcm) % 2:
        raise CorruptHeader("odd data chunk length")
    if not pcm:
        raise EmptyInput("wav data chunk")
    ints = np.frombuffer(pcm, dtype="<i2")
    return Waveform(ints.astype(float) / 32768.0, rate)


def encode_wav(w: Waveform) -> bytes:
    """Encode as canonical 44-byte-header PCM16 mono WAV (samples clipped)."""
    ints = np.clip(np.round(w.samples * 32768.0), -32768, 32767).astype("<i2")
    pcm = ints.tobytes()
    header = struct.pack(
        "<4sI4s4sIHHIIHH4sI",
        b"RIFF", 36 + len(pcm), b"WAVE",
        b"fmt ", 16, 1, 1, w.sample_rate, w.sample_rate * 2, 2, 16,
        b"data", len(pcm),
    )
    return header + pcm


def load_audio(path) -> Waveform:
    with open(path, "rb") as f:
        return decode_wav(f.read())


def save_audio(path, w: Waveform) -> None:
    with open(path, "wb") as f:
        f.write(encode_wav(w))


# ---------------------------------------------------------------------------
# resampling


def _round_half_up(x: Fraction) -> int:
    return math.floor(x + Fraction(1, 2))


def resample_ratio(x: np.ndarray, up: int, down: int, taps: int = 64,
                   beta: float = 8.0) -> np.ndarray:
    """Polyphase resampling by ``up/down`` with a Kaiser-windowed sinc.

    ``taps`` is the filter length per polyphase branch. The output has
    ``round(len(x) * up / down)`` samples.
    """
    g = math.gcd(up, down)
    up, down = up // g, down // g
    n_out = _round_half_up(Fraction(len(x) * up, down))
    if up == down:
        return np.array(x, dtype=float)
    max_rate = max(up, down)
    h = firwin(taps * max_rate + 1, 1.0 / max_rate, window=("kaiser", beta))
    y = resample_poly(np.asarray(x, dtype=float), up, down, window=h)
    if y.size >= n_out:
        return y[:n_out]
    return np.pad(y, (0, n_out - y.size))


def resample(w: Waveform, target_rate: int, taps: int = 64) -> Waveform:
    """Resample to ``target_rate`` Hz (output clipped to [-1, 1])."""
    target_rate = int(target_rate)
    if target_rate < 1000:
        raise ValueError(f"target rate must be >= 1000 Hz, got {target_rate}")
    if target_rate == w.sample_rate:
        return w
    y = resample_ratio(w.samples, target_rate, w.sample_rate, taps)
    y, n = clip_unit(y)
    return Waveform(y, target_rate, w.n_clipped + n)


# ---------------------------------------------------------------------------
# framing and features

WINDOWS = ("hamming", "hann", "rect")


def _window(name: str, n: int) -> np.ndarray:
    if name == "hamming":
        return np.hamming(n)
    if name == "hann":
        return np.hanning(n)
    if name == "rect":
        return np.ones(n)
    raise ValueError(f"unknown window {name!r}; expected one of {WINDOWS}")


def next_pow2(n: int) -> int:
    return 1 << max(0, (int(n) - 1).bit_length())


def num_frames(n_samples: int, frame_len: int, shift: int) -> int:
    if n_samples <= frame_len:
        return 1
    return 1 + (n_samples - frame_len) // shift


def frame_signal(x: np.ndarray, frame_len: int, shift: int) -> np.ndarray:
    """Slice into overlapping frames; inputs shorter than a frame are zero-padded."""
    if x.size == 0:
        raise EmptyInput("signal")
    if x.size < frame_len:
        x = np.pad(x, (0, frame_len - x.size))
    t = num_frames(x.size, frame_len, shift)
    idx = np.arange(frame_len)[None, :] + shift * np.arange(t)[:, None]
    return x[idx]


@dataclass(frozen=True)
class FeatureConfig:
    """Framing and filterbank settings (defaults: common anti-spoofing LFCC)."""

    frame_len: float = 0.025
    frame_shift: float = 0.01
    window: str = "hamming"
    n_filters: int = 20
    n_ceps: int = 20
    log_floor: float = 1e-10
    preemphasis: float | None = None
    low_freq: float = 0.0
    high_freq: float | None = None

    def frame_samples(self, sample_rate: int) -> tuple[int, int]:
        frame_len = int(round(self.frame_len * sample_rate))
        shift = int(round(self.frame_shift * sample_rate))
        if not frame_len >= shift > 0:
            raise ValueError("need frame_len >= frame_shift > 0")
        return frame_len, shift


def spectrogram(w: Waveform, frame_len: float = 0.025, frame_shift: float = 0.01,
                window: str = "hamming", preemphasis: float | None = None) -> np.ndarray:
    """Power spectrum |FFT|^2 of windowed frames, shape (T, nfft/2 + 1)."""
    cfg = FeatureConfig(frame_len=frame_len, frame_shift=frame_shift, window=window)
    n_len, n_shift = cfg.frame_samples(w.sample_rate)
    x = w.samples
    if preemphasis:
        x = np.append(x[0], x[1:] - preemphasis * x[:-1])
    frames = frame_signal(x, n_len, n_shift) * _window(window, n_len)
    nfft = next_pow2(n_len)
    return np.abs(np.fft.rfft(frames, nfft)) ** 2


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=float) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=float) / 2595.0) - 1.0)


def triangular_filterbank(edges_hz: np.ndarray, nfft: int, sample_rate: int) -> np.ndarray:
    """Triangles with feet at edges[j], edges[j+2] and peak at edges[j+1].

    Returns:
      (n_filters, nfft/2 + 1) weight matrix.
    """
    freqs = np.arange(nfft // 2 + 1) * sample_rate / nfft
    lo, mid, hi = edges_hz[:-2, None], edges_hz[1:-1, None], edges_hz[2:, None]
    rise = (freqs - lo) / (mid - lo)
    fall = (hi - freqs) / (hi - mid)
    return np.maximum(0.0, np.minimum(rise, fall))


def linear_filter_edges(n_filters: int, sample_rate: int, low=0.0, high=None) -> np.ndarray:
    high = sample_rate / 2 if high is None else high
    return np.linspace(low, high, n_filters + 2)


def mel_filter_edges(n_filters: int, sample_rate: int, low=0.0, high=None) -> np.ndarray:
    high = sample_rate / 2 if high is None else high
    return mel_to_hz(np.linspace(hz_to_mel(low), hz_to_mel(high), n_filters + 2))


@dataclass(frozen=True)
class FeatureMatrix:
    frames: np.ndarray
    frame_shift: float
    frame_length: float
    kind: str
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        f = np.asarray(self.frames, dtype=float)
        if f.ndim != 2 or f.shape[0] < 1 or f.shape[1] < 1:
            raise ValueError(f"feature matrix must be T x D with T, D >= 1, got {f.shape}")
        if not np.all(np.isfinite(f)):
            raise ValueError("feature matrix contains non-finite values")
        object.__setattr__(self, "frames", f)

    @property
    def shape(self):
        return self.frames.shape

    def with_frames(self, frames, kind=None) -> "FeatureMatrix":
        return replace(self, frames=frames, kind=kind or self.kind)


def filterbank_energies(w: Waveform, kind: str, cfg: FeatureConfig = FeatureConfig()) -> np.ndarray:
    """Filterbank energies before the log, shape (T, n_filters)."""
    power = spectrogram(w, cfg.frame_len, cfg.frame_shift, cfg.window, cfg.preemphasis)
    nfft = 2 * (power.shape[1] - 1)
    if kind == "lfcc":
        edges = linear_filter_edges(cfg.n_filters, w.sample_rate, cfg.low_freq, cfg.high_freq)
    elif kind == "fbank":
        edges = mel_filter_edges(cfg.n_filters, w.sample_rate, cfg.low_freq, cfg.high_freq)
    else:
        raise ValueError(f"unknown feature kind {kind!r}")
    return power @ triangular_filterbank(edges, nfft, w.sample_rate).T


def cepstral_features(w: Waveform, kind: str = "lfcc", n_filters: int | None = None,
                      n_ceps: int | None = None, cfg: FeatureConfig = FeatureConfig()) -> FeatureMatrix:
    """LFCC or log mel filterbank features.

    LFCC is the orthonormal DCT-II of log linear-filterbank energies, keeping
    ``n_ceps`` coefficients. Fbank is the log mel-filterbank energies
    (``n_ceps`` unused).
    """
    if n_filters is not None or n_ceps is not None:
        cfg = replace(cfg, n_filters=n_filters or cfg.n_filters, n_ceps=n_ceps or cfg.n_ceps)
    if not cfg.n_filters >= cfg.n_ceps >= 1:
        raise ValueError("need n_filters >= n_ceps >= 1")
    logfb = np.log(filterbank_energies(w, kind, cfg) + cfg.log_floor)
    if kind == "lfcc":
        feats = dct(logfb, type=2, axis=1, norm="ortho")[:, :cfg.n_ceps]
    else:
        feats = logfb
    return FeatureMatrix(feats, cfg.frame_shift, cfg.frame_len, kind)


def _delta(x: np.ndarray, width: int) -> np.ndarray:
    t = x.shape[0]
    padded = np.pad(x, ((width, width), (0, 0)), mode="edge")
    num = np.zeros_like(x)
    for n in range(1, width + 1):
        num += n * (padded[width + n:width + n + t] - padded[width - n:width - n + t])
    return num / (2.0 * sum(n * n for n in range(1, width + 1)))


def add_deltas(f: FeatureMatrix, order: int = 2, width: int = 2) -> FeatureMatrix:
    """Append regression deltas (and delta-deltas for order 2), edge-replicated."""
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    if width < 1:
        raise ValueError("window width must be >= 1")
    blocks = [f.frames]
    for _ in range(order):
        blocks.append(_delta(blocks[-1], width))
    return f.with_frames(np.hstack(blocks), kind=f"{f.kind}+deltas")


# ---------------------------------------------------------------------------
# feature matrix text format (Kaldi text-ark style)


def serialize_features(feats: dict[str, FeatureMatrix]) -> str:
    out = io.StringIO()
    for utt, fm in feats.items():
        out.write(f"{utt} [\n")
        for row in fm.frames:
            out.write("  " + " ".join(repr(float(v)) for v in row) + "\n")
        out.write("]\n")
    return out.getvalue()


def parse_features(text: str, frame_shift: float = 0.01, frame_length: float = 0.025,
                   kind: str = "unknown") -> dict[str, FeatureMatrix]:
    feats: dict[str, FeatureMatrix] = {}
    utt, rows = None, []
    for line_no, line in enumerate(text.splitlines(), start=1):
        parts = line.split()
        if not parts:
            continue
        if utt is None:
            if len(parts) != 2 or parts[1] != "[":
                raise MalformedLine(line_no, line)
            utt, rows = parts[0], []
        elif parts == ["]"]:
            feats[utt] = FeatureMatrix(np.array(rows), frame_shift, frame_length, kind)
            utt = None
        else:
            try:
                rows.append([float(v) for v in parts])
            except ValueError:
                raise MalformedLine(line_no, line) from None
    if utt is not None:
        raise MalformedLine(0, f"unterminated matrix for {utt}")
    if not feats:
        raise EmptyInput("feature file")
    return feats
