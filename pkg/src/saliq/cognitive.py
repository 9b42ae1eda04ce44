"""Cognitive effect metrics: streaming, informational masking, speech likeness.

These three measures capture cognitive phenomena that modulate how salient
a given distortion dimension is:

* ``epn`` (perceptual streaming): how much of the disturbance energy falls
  in time-frequency regions where the reference is weak, i.e. where the
  disturbance is heard as a separate auditory event rather than blending
  with the signal.
* ``pdev`` (informational masking): temporal complexity of the reference
  excitation surface, squashed with a saturating map because the masking
  effect saturates.
* ``prob_speech``: probability that the reference is speech-like, from a
  logistic combination of syllabic-rate modulation energy, spectral flux,
  and pause rate computed on the reference alone so that distortions in
  the signal under test cannot flip the class.

The exact formulas are documented stand-ins chosen for their roles; all
outputs are normalized to [0,1] at this boundary so downstream logistic
midpoints can be searched on a fixed domain.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .audio_io import AudioPair
from .errors import EmptySegmentError
from .perceptual import EarModelConfig, FramePairSequence, analyze_frames

#: canonical order of the three cognitive effect metrics
CEM_NAMES = ("epn", "pdev", "prob_speech")

#: reference-weakness half-point, relative to mean band excitation
EPN_WEAK_THETA = 0.05
#: relative floor and clip range (log10 units re mean) for the excitation surface
PDEV_REL_FLOOR = 1e-3
PDEV_LOG_CLIP = 2.0
#: half-saturation constant of the pdev squashing map v / (v + v0)
PDEV_V0 = 0.25

#: block length for envelope features, seconds (1024 samples at 48 kHz)
_PS_BLOCK_SECONDS = 1024.0 / 48000.0
#: modulation bands, Hz: syllabic band vs full envelope band
_PS_SYLLABIC_BAND = (2.0, 8.0)
_PS_FULL_BAND = (0.5, 24.0)
#: pause threshold, relative to mean block energy
_PS_PAUSE_REL = 10.0 ** (-2.5)
#: logistic coefficients: bias, modulation ratio, spectral flux, pause rate.
#: Calibrated once on the bundled synthetic speech/music corpus (seed sweep)
#: and frozen; see compute_prob_speech. Deliberately shallow: atypical
#: excerpts land mid-scale instead of saturating, leaving it to downstream
#: weighting to decide how hard to gate on class.
_PS_COEF = (-2.0, 1.0, 4.0, 8.5)


@dataclass(frozen=True)
class CemRecord:
    """Per-excerpt cognitive effect metrics, each in [0,1]."""

    epn: float
    pdev: float
    prob_speech: float

    def __post_init__(self):
        for name in CEM_NAMES:
            v = getattr(self, name)
            if not (np.isfinite(v) and 0.0 <= v <= 1.0):
                raise ValueError(f"{name} out of range: {v!r}")

    def as_dict(self) -> dict[str, float]:
        return {name: float(getattr(self, name)) for name in CEM_NAMES}

    def values(self) -> np.ndarray:
        return np.array([getattr(self, name) for name in CEM_NAMES], dtype=np.float64)


def _as_channels(frames) -> list[FramePairSequence]:
    if isinstance(frames, FramePairSequence):
        return [frames]
    frames = list(frames)
    if not frames:
        raise EmptySegmentError("no frame sequences given")
    return frames


def _epn_channel(ch: FramePairSequence) -> float:
    raw = ch.raw_ref
    level = float(raw.mean())
    if level <= 0.0:
        # silent reference: any disturbance is trivially a separate stream
        total = float(ch.err_band.sum())
        return 1.0 if total > 0.0 else 0.0
    weakness = EPN_WEAK_THETA / (EPN_WEAK_THETA + raw / level)
    total = float(ch.err_band.sum())
    if total <= 0.0:
        return 0.0
    return float((ch.err_band * weakness).sum() / total)


def compute_epn(frames) -> float:
    """Perceptual-streaming measure in [0,1].

    Fraction of the disturbance energy that falls where the reference
    excitation is weak relative to its own mean level; a disturbance
    co-varying with the reference scores low, a tone or noise burst in an
    otherwise empty region scores near 1. Identity input scores exactly 0.
    Channels are averaged.
    """
    vals = [_epn_channel(ch) for ch in _as_channels(frames)]
    return float(np.clip(np.mean(vals), 0.0, 1.0))


def _pdev_channel(ch: FramePairSequence) -> float:
    raw = ch.raw_ref
    level = float(raw.mean())
    if level <= 0.0:
        return 0.0
    surface = np.log10(raw / level + PDEV_REL_FLOOR)
    surface = np.clip(surface, -PDEV_LOG_CLIP, PDEV_LOG_CLIP)
    dev = np.abs(surface - surface.mean(axis=0)).mean()
    return float(dev / (dev + PDEV_V0))


def compute_pdev(frames) -> float:
    """Informational-masking measure in [0,1].

    Mean absolute temporal deviation of the gain-normalized log excitation
    surface of the reference, averaged over bands and squashed with
    v / (v + v0) to reflect saturation of the masking effect. Stationary
    input scores 0; the measure is invariant to global gain changes of the
    reference because the surface is normalized by its own mean excitation.
    Channels are averaged.
    """
    vals = [_pdev_channel(ch) for ch in _as_channels(frames)]
    return float(np.clip(np.mean(vals), 0.0, 1.0))


def _block_envelope(x: np.ndarray, sample_rate: int) -> np.ndarray:
    block = max(1, int(round(_PS_BLOCK_SECONDS * sample_rate)))
    n = len(x) // block
    if n == 0:
        return np.zeros(0)
    return (x[: n * block].reshape(n, block) ** 2).sum(axis=1)


def _speech_features(x: np.ndarray, sample_rate: int):
    env = _block_envelope(x, sample_rate)
    mean_env = float(env.mean()) if len(env) else 0.0
    if len(env) < 16 or mean_env <= 0.0:
        return None
    block = max(1, int(round(_PS_BLOCK_SECONDS * sample_rate)))
    rate = sample_rate / block

    # syllabic-rate modulation energy ratio on the log envelope
    log_env = np.log10(env / mean_env + PDEV_REL_FLOOR)
    log_env = log_env - log_env.mean()
    spec = np.abs(np.fft.rfft(log_env * np.hanning(len(log_env)))) ** 2
    freqs = np.fft.rfftfreq(len(log_env), d=1.0 / rate)
    lo, hi = _PS_SYLLABIC_BAND
    flo, fhi = _PS_FULL_BAND
    syllabic = float(spec[(freqs >= lo) & (freqs <= hi)].sum())
    full = float(spec[(freqs >= flo) & (freqs <= fhi)].sum())
    mod_ratio = syllabic / full if full > 0.0 else 0.0

    # mean normalized spectral flux over short-time magnitude spectra
    frame, hop = 2048, 1024
    nfr = (len(x) - frame) // hop + 1 if len(x) >= frame else 0
    if nfr >= 2:
        idx = np.arange(frame)[None, :] + hop * np.arange(nfr)[:, None]
        mags = np.abs(np.fft.rfft(x[idx] * np.hanning(frame), axis=1))
        mags /= mags.sum(axis=1, keepdims=True) + 1e-30
        flux = float(np.abs(np.diff(mags, axis=0)).sum(axis=1).mean())
    else:
        flux = 0.0

    # fraction of blocks far below the mean level (voiced-pause rate)
    pause = float(np.mean(env < _PS_PAUSE_REL * mean_env))
    return mod_ratio, flux, pause


def compute_prob_speech(pair: AudioPair) -> float:
    """Probability in [0,1] that the reference signal is speech-like.

    Logistic combination of three reference-only features: the share of
    envelope modulation energy in the 2-8 Hz syllabic band, the mean
    normalized spectral flux, and the rate of near-silent pauses. Digital
    silence returns exactly 0.5 (no evidence either way). Coefficients are
    fixed constants, calibrated once on the bundled synthetic corpus.
    """
    mono = pair.reference.mean(axis=0)
    feats = _speech_features(mono, pair.sample_rate)
    if feats is None:
        return 0.5
    b0, b1, b2, b3 = _PS_COEF
    z = b0 + b1 * feats[0] + b2 * feats[1] + b3 * feats[2]
    return float(1.0 / (1.0 + np.exp(-np.clip(z, -500.0, 500.0))))


def compute_cem(
    pair: AudioPair,
    frames=None,
    config: EarModelConfig | None = None,
) -> CemRecord:
    """Compute all three cognitive effect metrics for an excerpt."""
    if frames is None:
        frames = analyze_frames(pair, config)
    return CemRecord(
        epn=compute_epn(frames),
        pdev=compute_pdev(frames),
        prob_speech=compute_prob_speech(pair),
    )
