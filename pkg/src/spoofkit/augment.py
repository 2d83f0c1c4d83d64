"""Seeded waveform and feature augmentation.

Every stochastic function takes an explicit seed (or ``numpy.random.Generator``)
so results are a pure function of (input, params, seed).
"""

from __future__ import annotations

import hashlib
import logging
import math
import shlex
import subprocess
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.signal import firwin2, lfilter
from scipy.signal import convolve as sp_convolve

from .dsp import FeatureMatrix, Waveform, clip_unit, decode_wav, encode_wav, resample_ratio
from .errors import SampleRateMismatch, ZeroPowerNoise

logger = logging.getLogger(__name__)

RAWBOOST_ALGORITHMS = ("convolutive", "impulsive", "stationary")


def derive_seed(global_seed: int, utt_id: str) -> int:
    """Per-file seed independent of worker scheduling."""
    digest = hashlib.sha256(f"{global_seed}:{utt_id}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def power(x: np.ndarray) -> float:
    return float(np.mean(np.square(x)))


# ---------------------------------------------------------------------------
# RawBoost


def _ordered(name, pair):
    lo, hi = pair
    if lo > hi:
        raise ValueError(f"{name}: range ({lo}, {hi}) is not ordered")


@dataclass(frozen=True)
class RawBoostParams:
    """RawBoost configuration.

    ``algorithm`` is one of ``convolutive``, ``impulsive``, ``stationary`` or
    a tuple of them applied in series. Ranges are inclusive ``(lo, hi)``
    pairs; counts are integers. Frequencies are in Hz; ``center_hz[1]`` is
    capped at ``fs/2 - 1000`` when applied.
    """

    algorithm: str | tuple[str, ...] = "convolutive"
    n_notch: tuple[int, int] = (1, 5)
    center_hz: tuple[float, float] = (20.0, 8000.0)
    bandwidth_hz: tuple[float, float] = (100.0, 1000.0)
    gain_db: tuple[float, float] = (-20.0, 20.0)
    n_orders: int = 1  # nonlinearity: branches x, x^3, x^5, ...
    fir_taps: tuple[int, int] = (11, 101)
    impulse_prob: float = 0.1
    impulse_gain: float = 2.0
    snr_db: tuple[float, float] = (10.0, 40.0)
    noise_n_notch: tuple[int, int] = (1, 5)
    seed: int = 0

    def __post_init__(self):
        for name in ("n_notch", "center_hz", "bandwidth_hz", "gain_db", "fir_taps", "snr_db",
                     "noise_n_notch"):
            _ordered(name, getattr(self, name))
        if not 0.0 <= self.impulse_prob <= 1.0:
            raise ValueError("impulse_prob must be in [0, 1]")
        if self.n_orders < 1:
            raise ValueError("n_orders must be >= 1")
        for alg in self.chain:
            if alg not in RAWBOOST_ALGORITHMS:
                raise ValueError(f"unknown RawBoost algorithm {alg!r}")

    @property
    def chain(self) -> tuple[str, ...]:
        if isinstance(self.algorithm, str):
            return tuple(a.strip() for a in self.algorithm.split(",") if a.strip())
        return tuple(self.algorithm)


def _multiband_fir(rng, p: RawBoostParams, fs: int, n_bands_range) -> np.ndarray | None:
    """Random FIR with gain 1 outside and a random gain inside each band.

    Returns None when zero bands are drawn (identity filter).
    """
    n_bands = int(rng.integers(n_bands_range[0], n_bands_range[1] + 1))
    if n_bands == 0:
        return None
    nyq = fs / 2.0
    c_hi = min(p.center_hz[1], nyq - 1000.0)
    c_lo = min(p.center_hz[0], c_hi)
    n_taps = int(rng.integers(p.fir_taps[0], p.fir_taps[1] + 1)) | 1
    grid = np.linspace(0.0, nyq, 513)
    response = np.ones_like(grid)
    for _ in range(n_bands):
        center = rng.uniform(c_lo, c_hi)
        width = rng.uniform(*p.bandwidth_hz)
        gain = 10.0 ** (rng.uniform(*p.gain_db) / 20.0)
        inside = np.abs(grid - center) <= width / 2.0
        response[inside] *= gain
    return firwin2(n_taps, grid / nyq, response)


def _convolutive(x, fs, p, rng):
    y = np.zeros_like(x)
    applied = False
    for i in range(p.n_orders):
        h = _multiband_fir(rng, p, fs, p.n_notch)
        if h is None:
            continue
        applied = True
        branch = x ** (2 * i + 1)
        y += lfilter(h, [1.0], branch)
    return y if applied else x


def _impulsive(x, fs, p, rng):
    n = int(round(p.impulse_prob * x.size))
    if n == 0:
        return x
    pos = rng.choice(x.size, size=n, replace=False)
    f_r = (2.0 * rng.random(n) - 1.0) * (2.0 * rng.random(n) - 1.0)
    y = x.copy()
    y[pos] += p.impulse_gain * x[pos] * f_r
    return y


def colored_noise(rng, n: int, fs: int, p: RawBoostParams) -> np.ndarray:
    noise = rng.standard_normal(n)
    h = _multiband_fir(rng, p, fs, p.noise_n_notch)
    if h is not None:
        noise = lfilter(h, [1.0], noise)
    return noise


def _stationary(x, fs, p, rng):
    snr = rng.uniform(*p.snr_db) if np.isfinite(p.snr_db[0]) else p.snr_db[0]
    if snr == math.inf:
        return x
    noise = colored_noise(rng, x.size, fs, p)
    p_noise = power(noise)
    p_sig = power(x)
    if p_noise == 0.0 or p_sig == 0.0:
        return x
    return x + noise * math.sqrt(p_sig / (p_noise * 10.0 ** (snr / 10.0)))


_ALGORITHMS = {"convolutive": _convolutive, "impulsive": _impulsive, "stationary": _stationary}


def _peak_limit(x: np.ndarray) -> np.ndarray:
    peak = np.max(np.abs(x))
    return x / peak if peak > 1.0 else x


def rawboost(w: Waveform, p: RawBoostParams, seed=None) -> Waveform:
    """Apply RawBoost algorithm(s) in series.

    Each stage's output is peak-normalized only if it exceeds 1, so
    degenerate parameters are exact no-ops.
    """
    rng = _rng(p.seed if seed is None else seed)
    x = w.samples
    for alg in p.chain:
        x = _peak_limit(_ALGORITHMS[alg](x, w.sample_rate, p, rng))
    return w.with_samples(x)


# ---------------------------------------------------------------------------
# additive noise, reverberation, speed


def fit_length(noise: np.ndarray, n: int) -> np.ndarray:
    """Loop or crop ``noise`` to exactly ``n`` samples."""
    if noise.size >= n:
        return noise[:n]
    reps = -(-n // noise.size)
    return np.tile(noise, reps)[:n]


def snr_scale(signal: np.ndarray, noise: np.ndarray, snr_db: float) -> float:
    """Factor applied to ``noise`` so that the mix has the requested SNR.

    Signal power is measured over nonzero samples (leading/trailing digital
    silence does not dilute it); noise power over the whole vector.
    """
    p_noise = power(noise)
    if p_noise == 0.0:
        raise ZeroPowerNoise()
    active = signal[signal != 0.0]
    if active.size == 0:
        return 0.0
    return math.sqrt(power(active) / (p_noise * 10.0 ** (snr_db / 10.0)))


def mix_at_snr(w: Waveform, noise: Waveform, snr_db: float) -> Waveform:
    """Add noise at ``snr_db`` dB (``math.inf`` leaves the signal untouched)."""
    if noise.sample_rate != w.sample_rate:
        raise SampleRateMismatch(w.sample_rate, noise.sample_rate)
    n = fit_length(noise.samples, len(w))
    if power(n) == 0.0:
        raise ZeroPowerNoise()
    if snr_db == math.inf:
        return w
    scale = snr_scale(w.samples, n, snr_db)
    y, clipped = clip_unit(w.samples + scale * n)
    if clipped:
        logger.debug("mix_at_snr clipped %d samples", clipped)
    return w.with_samples(y, clipped)


def convolve_rir(w: Waveform, rir: Waveform) -> Waveform:
    """Reverberate with an impulse response, keeping length and peak level."""
    if rir.sample_rate != w.sample_rate:
        raise SampleRateMismatch(w.sample_rate, rir.sample_rate)
    y = sp_convolve(w.samples, rir.samples, mode="full")[:len(w)]
    in_peak = np.max(np.abs(w.samples))
    out_peak = np.max(np.abs(y))
    if out_peak > 0 and out_peak != in_peak:
        y = y * (in_peak / out_peak)
    return w.with_samples(y)


def speed_perturb(w: Waveform, factor: float, taps: int = 64) -> Waveform:
    """Kaldi-style speed change: resample so duration scales by 1/factor.

    Pitch moves with speed; the sample-rate tag is unchanged and the output
    has ``round(len / factor)`` samples.
    """
    if not 0.5 < factor < 2.0:
        raise ValueError(f"speed factor must be in (0.5, 2.0), got {factor}")
    if factor == 1.0:
        return w
    ratio = Fraction(factor).limit_denominator(100)
    y = resample_ratio(w.samples, ratio.denominator, ratio.numerator, taps)
    n_out = math.floor(Fraction(len(w)) / Fraction(factor) + Fraction(1, 2))
    y = y[:n_out] if y.size >= n_out else np.pad(y, (0, n_out - y.size))
    y, clipped = clip_unit(y)
    return w.with_samples(y, clipped)


# ---------------------------------------------------------------------------
# SpecAugment


@dataclass(frozen=True)
class SpecAugmentParams:
    max_time_mask_width: int = 0
    n_time_masks: int = 0
    max_freq_mask_width: int = 0
    n_freq_masks: int = 0
    seed: int = 0
    min_time_mask_width: int = 0
    min_freq_mask_width: int = 0

    def __post_init__(self):
        for name, value in vars(self).items():
            if name != "seed" and value < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.min_time_mask_width > self.max_time_mask_width or \
                self.min_freq_mask_width > self.max_freq_mask_width:
            raise ValueError("mask width range is not ordered")


def spec_augment(f: FeatureMatrix, p: SpecAugmentParams, seed=None) -> FeatureMatrix:
    """Time and frequency masking; masked entries take the per-dimension utterance mean."""
    rng = _rng(p.seed if seed is None else seed)
    x = f.frames
    if p.n_time_masks == 0 and p.n_freq_masks == 0:
        return f
    mean = x.mean(axis=0)
    out = x.copy()
    t, d = x.shape
    for _ in range(p.n_time_masks):
        width = min(int(rng.integers(p.min_time_mask_width, p.max_time_mask_width + 1)), t)
        start = int(rng.integers(0, t - width + 1))
        out[start:start + width, :] = mean
    for _ in range(p.n_freq_masks):
        width = min(int(rng.integers(p.min_freq_mask_width, p.max_freq_mask_width + 1)), d)
        start = int(rng.integers(0, d - width + 1))
        out[:, start:start + width] = mean[start:start + width]
    return f.with_frames(out)


# ---------------------------------------------------------------------------
# codecs


def mulaw_compress(x, mu: float = 255.0):
    return np.sign(x) * np.log1p(mu * np.abs(x)) / np.log1p(mu)


def mulaw_expand(y, mu: float = 255.0):
    return np.sign(y) * np.expm1(np.abs(y) * np.log1p(mu)) / mu


def mulaw_step(bits: int) -> float:
    """Quantizer step in the companded domain."""
    return 2.0 / (1 << bits)


def mulaw_error_bound(mu: float = 255.0, bits: int = 8) -> float:
    """Largest possible |out - in| of :func:`mulaw_codec` for inputs in [-1, 1].

    The widest expanded cell is the top one, of companded width one full
    step (the positive side has one level fewer than the negative side).
    """
    return float(1.0 - mulaw_expand(1.0 - mulaw_step(bits), mu))


def mulaw_codec(w: Waveform, mu: float = 255.0, bits: int = 8) -> Waveform:
    """Mu-law compand, mid-tread quantize to 2**bits levels, expand."""
    if mu <= 0:
        raise ValueError("mu must be positive")
    if not 2 <= bits <= 16:
        raise ValueError("bits must be in [2, 16]")
    x, clipped = clip_unit(w.samples)
    step = mulaw_step(bits)
    half = 1 << (bits - 1)
    q = np.clip(np.round(mulaw_compress(x, mu) / step), -half, half - 1)
    return w.with_samples(mulaw_expand(q * step, mu), clipped)


def external_codec(w: Waveform, command: str, timeout: float | None = 600) -> Waveform:
    """Run a user command that reads a WAV on stdin and writes a WAV to stdout.

    Output length is forced back to the input length (codec delay/padding is
    cropped or zero-filled); a resampled result is rejected.
    """
    proc = subprocess.run(shlex.split(command), input=encode_wav(w), stdout=subprocess.PIPE,
                          stderr=subprocess.PIPE, timeout=timeout, check=True)
    out = decode_wav(proc.stdout)
    if out.sample_rate != w.sample_rate:
        raise SampleRateMismatch(w.sample_rate, out.sample_rate)
    return w.with_samples(fit_length(out.samples, len(w)) if len(out) >= len(w)
                          else np.pad(out.samples, (0, len(w) - len(out))))


# ---------------------------------------------------------------------------
# augmentation chains


@dataclass(frozen=True)
class AugmentStep:
    name: str
    params: dict = field(default_factory=dict)


AUGMENT_STEPS = ("rawboost", "noise", "rir", "speed", "mulaw", "codec_cmd")


def apply_chain(w: Waveform, steps: list[AugmentStep], seed: int,
                noises: list[Waveform] = (), rirs: list[Waveform] = ()) -> tuple[Waveform, list[dict]]:
    """Run augmentation steps in order with one generator seeded by ``seed``.

    Returns:
      (augmented waveform, provenance records, one per step)
    """
    rng = np.random.default_rng(seed)
    record = []
    for step in steps:
        prm = dict(step.params)
        info = {"step": step.name}
        if step.name == "rawboost":
            sub = int(rng.integers(2 ** 63))
            w = rawboost(w, RawBoostParams(**prm), seed=sub)
            info["seed"] = sub
        elif step.name == "noise":
            if not noises:
                raise ValueError("noise step needs a noise list")
            lo, hi = prm.get("snr_db", (0.0, 15.0))
            idx = int(rng.integers(len(noises)))
            snr = float(rng.uniform(lo, hi))
            w = mix_at_snr(w, noises[idx], snr)
            info.update(noise_index=idx, snr_db=snr)
        elif step.name == "rir":
            if not rirs:
                raise ValueError("rir step needs an RIR list")
            idx = int(rng.integers(len(rirs)))
            w = convolve_rir(w, rirs[idx])
            info["rir_index"] = idx
        elif step.name == "speed":
            factors = prm.get("factors", (0.9, 1.0, 1.1))
            factor = float(factors[int(rng.integers(len(factors)))])
            w = speed_perturb(w, factor)
            info["factor"] = factor
        elif step.name == "mulaw":
            w = mulaw_codec(w, prm.get("mu", 255.0), int(prm.get("bits", 8)))
            info.update(mu=prm.get("mu", 255.0), bits=int(prm.get("bits", 8)))
        elif step.name == "codec_cmd":
            w = external_codec(w, prm["command"])
            info["command"] = prm["command"]
        else:
            raise ValueError(f"unknown augmentation step {step.name!r}")
        record.append(info)
    return w, record
