import math
import sys
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from spoofkit.augment import (
    AugmentStep,
    RawBoostParams,
    SpecAugmentParams,
    apply_chain,
    convolve_rir,
    derive_seed,
    external_codec,
    mix_at_snr,
    mulaw_codec,
    mulaw_error_bound,
    power,
    rawboost,
    snr_scale,
    spec_augment,
    speed_perturb,
)
from spoofkit.dsp import FeatureMatrix, Waveform
from spoofkit.errors import SampleRateMismatch, ZeroPowerNoise

FS = 16000
IDENTITY = RawBoostParams(algorithm="convolutive,impulsive,stationary", n_notch=(0, 0),
                          impulse_prob=0.0, snr_db=(math.inf, math.inf))


def speechy(seed=0, n=FS, amp=0.3):
    rng = np.random.default_rng(seed)
    t = np.arange(n) / FS
    x = amp * np.sin(2 * np.pi * 220 * t) * (0.6 + 0.4 * np.sin(2 * np.pi * 3 * t))
    return Waveform(x + 0.01 * rng.standard_normal(n), FS)


def snr_db(signal, noise):
    return 10 * math.log10(power(signal) / power(noise))


# --- RawBoost -----------------------------------------------------------

@pytest.mark.parametrize("seed", range(5))
def test_stationary_hits_target_snr(seed):
    w = speechy(seed, amp=0.1)
    p = RawBoostParams(algorithm="stationary", snr_db=(10.0, 10.0))
    out = rawboost(w, p, seed=seed)
    assert abs(snr_db(w.samples, out.samples - w.samples) - 10.0) <= 0.5


def test_identity_rawboost_is_bit_exact():
    w = speechy()
    out = rawboost(w, IDENTITY, seed=3)
    assert out.samples.tobytes() == w.samples.tobytes()


@pytest.mark.parametrize("alg", ["convolutive", "impulsive", "stationary",
                                 "convolutive,impulsive,stationary"])
def test_rawboost_determinism_and_shape(alg):
    w = speechy()
    p = RawBoostParams(algorithm=alg, n_orders=3)
    a, b = rawboost(w, p, seed=11), rawboost(w, p, seed=11)
    assert a.samples.tobytes() == b.samples.tobytes()
    assert not np.array_equal(a.samples, rawboost(w, p, seed=12).samples)
    assert len(a) == len(w) and a.sample_rate == FS
    assert np.max(np.abs(a.samples)) <= 1.0


def test_rawboost_param_validation():
    with pytest.raises(ValueError):
        RawBoostParams(gain_db=(5, -5))
    with pytest.raises(ValueError):
        RawBoostParams(impulse_prob=1.5)
    with pytest.raises(ValueError):
        RawBoostParams(algorithm="reverb")


# --- noise / rir / speed ------------------------------------------------

@settings(max_examples=100, deadline=None)
@given(st.floats(-20, 40), st.integers(0, 2 ** 32 - 1), st.integers(100, 3000))
def test_mix_at_snr_exact(target, seed, n_noise):
    rng = np.random.default_rng(seed)
    sig = Waveform(0.01 * rng.standard_normal(2000), FS)
    noise = Waveform(rng.uniform(-1, 1, n_noise), FS)
    out = mix_at_snr(sig, noise, target)
    assert out.n_clipped == 0
    added = out.samples - sig.samples
    assert abs(snr_db(sig.samples, added) - target) <= 1e-9


def test_mix_examples():
    w = speechy()
    assert mix_at_snr(w, speechy(1), math.inf) is w
    ones = np.ones(100)
    assert snr_scale(ones, ones, 0.0) == 1.0
    with pytest.raises(ZeroPowerNoise):
        mix_at_snr(w, Waveform(np.zeros(10), FS), 5.0)
    with pytest.raises(SampleRateMismatch):
        mix_at_snr(w, Waveform(np.ones(10), 8000), 5.0)


def test_mix_ignores_digital_silence():
    x = np.r_[np.zeros(500), np.full(500, 0.1)]
    noise = np.ones(1000)
    assert snr_scale(x, noise, 0.0) == pytest.approx(0.1)


def test_mix_clips_and_reports():
    w = Waveform(np.full(100, 0.9), FS)
    out = mix_at_snr(w, Waveform(np.ones(100), FS), -10.0)
    assert out.n_clipped == 100
    assert np.max(np.abs(out.samples)) <= 1.0


def test_rir_examples():
    w = speechy()
    delta = Waveform(np.r_[1.0, np.zeros(50)], FS)
    np.testing.assert_array_equal(convolve_rir(w, delta).samples, w.samples)
    k = 37
    shifted = Waveform(np.r_[np.zeros(k), 1.0], FS)
    out = convolve_rir(w, shifted).samples
    np.testing.assert_allclose(out[k:], w.samples[:-k] * np.max(np.abs(w.samples))
                               / np.max(np.abs(w.samples[:-k])), atol=1e-12)
    assert not out[:k].any()
    rir = Waveform(np.exp(-np.arange(800) / 100.0) * np.random.default_rng(0).normal(size=800), FS)
    rev = convolve_rir(w, rir)
    assert np.isfinite(power(rev.samples))
    assert np.max(np.abs(rev.samples)) == pytest.approx(np.max(np.abs(w.samples)))


@pytest.mark.parametrize("n,factor,expected", [(16000, 1.1, 14545), (16000, 0.9, 17778)])
def test_speed_lengths(n, factor, expected):
    assert len(speed_perturb(Waveform(np.zeros(n), FS), factor)) == expected


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 6000), st.floats(0.55, 1.95))
def test_speed_length_rule(n, factor):
    out = speed_perturb(Waveform(np.zeros(n), FS), factor)
    # round half up on the exact quotient
    assert len(out) == math.floor(Fraction(n) / Fraction(factor) + Fraction(1, 2))
    assert out.sample_rate == FS


def test_speed_identity_and_range():
    w = speechy()
    assert speed_perturb(w, 1.0) is w
    with pytest.raises(ValueError):
        speed_perturb(w, 2.5)


# --- SpecAugment --------------------------------------------------------

def feats(t=100, d=20, seed=0):
    return FeatureMatrix(np.random.default_rng(seed).normal(size=(t, d)), 0.01, 0.025, "lfcc")


def test_specaugment_identity():
    f = feats()
    assert spec_augment(f, SpecAugmentParams()).frames is f.frames


def test_specaugment_forced_width():
    f = feats()
    p = SpecAugmentParams(max_time_mask_width=5, min_time_mask_width=5, n_time_masks=1, seed=4)
    out = spec_augment(f, p).frames
    masked = np.all(out == f.frames.mean(axis=0), axis=1)
    assert masked.sum() == 5
    idx = np.flatnonzero(masked)
    assert idx[-1] - idx[0] == 4


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 30), st.integers(0, 3), st.integers(0, 10), st.integers(0, 3),
       st.integers(0, 1000))
def test_specaugment_never_increases_deviation(tw, nt, fw, nf, seed):
    f = feats(seed=seed)
    p = SpecAugmentParams(tw, nt, fw, nf, seed)
    out = spec_augment(f, p)
    mean = f.frames.mean(axis=0)
    assert np.abs(out.frames - mean).sum() <= np.abs(f.frames - mean).sum() + 1e-9
    again = spec_augment(f, p)
    assert np.array_equal(out.frames, again.frames)


# --- codecs -------------------------------------------------------------

def test_mulaw_examples():
    zero = Waveform(np.zeros(100), FS)
    assert not mulaw_codec(zero).samples.any()
    rng = np.random.default_rng(0)
    x = rng.uniform(-1, 1, 100_000)
    out = mulaw_codec(Waveform(x, FS), bits=8).samples
    assert np.max(np.abs(out - x)) <= mulaw_error_bound(255.0, 8)
    fine = mulaw_codec(Waveform(x, FS), bits=16).samples
    assert np.max(np.abs(fine - x)) < 1e-3


def test_mulaw_bound_is_tight():
    x = np.linspace(-1, 1, 200_001)
    err = np.max(np.abs(mulaw_codec(Waveform(x, FS), bits=8).samples - x))
    assert err == pytest.approx(mulaw_error_bound(255.0, 8), rel=1e-3)


def test_external_codec_identity_command():
    w = Waveform(np.round(speechy().samples * 32768) / 32768, FS)
    cmd = f"{sys.executable} -c \"import sys; sys.stdout.buffer.write(sys.stdin.buffer.read())\""
    out = external_codec(w, cmd)
    np.testing.assert_array_equal(out.samples, w.samples)


# --- chains -------------------------------------------------------------

def test_derived_seed_depends_on_both_inputs():
    assert derive_seed(0, "a") == derive_seed(0, "a")
    assert derive_seed(0, "a") != derive_seed(1, "a")
    assert derive_seed(0, "a") != derive_seed(0, "b")


def test_chain_composes_and_is_deterministic():
    w = speechy()
    steps = [AugmentStep("rawboost", {"algorithm": "convolutive,impulsive,stationary"}),
             AugmentStep("speed", {"factors": (0.9, 1.1)}),
             AugmentStep("noise", {"snr_db": (5.0, 5.0)}),
             AugmentStep("rir"),
             AugmentStep("mulaw", {"bits": 8})]
    noises = [speechy(9)]
    rirs = [Waveform(np.r_[1.0, 0.3, 0.1], FS)]
    a, rec = apply_chain(w, steps, 5, noises, rirs)
    b, rec2 = apply_chain(w, steps, 5, noises, rirs)
    assert a.samples.tobytes() == b.samples.tobytes() and rec == rec2
    assert [r["step"] for r in rec] == ["rawboost", "speed", "noise", "rir", "mulaw"]
    assert a.sample_rate == FS
    assert rec[2]["snr_db"] == 5.0
