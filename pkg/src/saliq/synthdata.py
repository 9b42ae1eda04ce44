"""Synthetic listening-test generator, treatments, and dataset manifests.

Real listening-test databases are proprietary, so desk-scale validation
runs on generated ones: reference signals of two classes (speech-like
4-Hz amplitude-modulated harmonic complexes with pauses, music-like
slowly-breathing chord pads), controlled degradations (lowpass, additive
shaped noise at a target SNR, amplitude-modulation disturbance), and MOS
drawn from a latent model in which added noise hurts speech-like signals
more and band limitation hurts music-like signals more. The hidden
weighting is emitted as ground truth so pipeline tests have an oracle;
disabling it (class_dependent=False) gives the null-hypothesis corpus.

Everything is deterministic: per-signal randomness is keyed by
(seed, signal index) and per-condition randomness by (seed, signal index,
treatment index), so parallel generation cannot change output.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.signal import fftconvolve, firwin

from .audio_io import write_wav
from .errors import (
    DuplicateConditionError,
    InvalidParametersError,
    InvalidSpecError,
    MissingFileError,
    SchemaError,
)

MANIFEST_SCHEMA_VERSION = 1

#: latent penalty scale constants (MOS points)
_NOISE_PEN_SLOPE = 1.3
_NOISE_PEN_REF_SNR = 42.0
_LP_PEN_PER_OCTAVE = 22.0
_LP_PEN_REF_HZ = 18000.0
_AM_PEN_SCALE = 40.0
#: class-dependent sensitivity of each degradation axis
CLASS_WEIGHTS = {
    "speech": {"noise": 1.3, "lowpass": 0.7, "am": 1.0},
    "music": {"noise": 0.5, "lowpass": 1.2, "am": 1.0},
}
#: content-vulnerability constants: noise annoyance grows with the pause
#: fraction (noise is naked in gaps). Band-limitation annoyance is
#: class-asymmetric: for music it grows with the removed energy on a log
#: scale (matching how level-domain measurements of the loss grow), for
#: speech it grows with how close the cutoff comes to the articulation
#: band, since high-band loss leaves intelligibility intact even when
#: the signal carries energy there.
_NOISE_VULN_BASE = 0.75
_NOISE_VULN_PAUSE = 1.2
_LP_VULN_LOG_REF = 2e-4
_LP_VULN_LOG_BASE = 0.3
_LP_VULN_LOG_SLOPE = 0.5
_LP_VULN_LO, _LP_VULN_HI = 0.3, 2.2
_SPEECH_LP_REF_HZ = 4000.0
_SPEECH_LP_EXPONENT = 1.3
_SPEECH_LP_VULN_LO, _SPEECH_LP_VULN_HI = 0.25, 1.6
#: per-signal sensitivity jitter range (class-independent)
_JITTER_LO, _JITTER_HI = 0.92, 1.08


@dataclass(frozen=True)
class TreatmentSpec:
    """One controlled degradation: lowpass, then AM, then additive noise."""

    treatment_id: str
    snr_db: float | None = None
    lowpass_hz: float | None = None
    mod_depth: float = 0.0
    description: str = ""

    def __post_init__(self):
        if self.snr_db is not None and not (np.isfinite(self.snr_db) and self.snr_db > 0):
            raise InvalidParametersError(f"snr_db must be positive finite, got {self.snr_db}")
        if self.lowpass_hz is not None and not (0 < self.lowpass_hz < 24000):
            raise InvalidParametersError(f"lowpass_hz must be in (0, 24000), got {self.lowpass_hz}")
        if not (0.0 <= self.mod_depth < 1.0):
            raise InvalidParametersError(f"mod_depth must be in [0, 1), got {self.mod_depth}")

    @property
    def is_identity(self) -> bool:
        return self.snr_db is None and self.lowpass_hz is None and self.mod_depth == 0.0


#: default training treatments (shape of a 7-treatment test)
TRAIN_TREATMENTS = (
    TreatmentSpec("t01_clean", description="hidden reference"),
    TreatmentSpec("t02_snr30", snr_db=30.0, description="noise, SNR 30 dB"),
    TreatmentSpec("t03_snr20", snr_db=20.0, description="noise, SNR 20 dB"),
    TreatmentSpec("t04_snr10", snr_db=10.0, description="noise, SNR 10 dB"),
    TreatmentSpec("t05_lp12k", lowpass_hz=12000.0, description="lowpass 12 kHz"),
    TreatmentSpec("t06_lp6k", lowpass_hz=6000.0, description="lowpass 6 kHz"),
    TreatmentSpec(
        "t07_lp9k_snr35", snr_db=35.0, lowpass_hz=9000.0,
        description="lowpass 9 kHz + noise, SNR 35 dB",
    ),
)

#: default validation treatments (shape of a 9-treatment test). The mix
#: deliberately stresses generalization: an axis never seen in training
#: (amplitude modulation, three depths), a combination never seen in
#: training, and severities beyond the training range on both trained
#: axes, plus in-range anchors.
VALIDATION_TREATMENTS = (
    TreatmentSpec("v01_clean", description="hidden reference"),
    TreatmentSpec(
        "v02_lp11k_snr22", lowpass_hz=11000.0, snr_db=22.0,
        description="lowpass 11 kHz + noise, SNR 22 dB",
    ),
    TreatmentSpec("v03_am30", mod_depth=0.30, description="8 Hz amplitude modulation, depth 0.3"),
    TreatmentSpec("v04_am40", mod_depth=0.40, description="8 Hz amplitude modulation, depth 0.4"),
    TreatmentSpec(
        "v05_lp10k_snr18", lowpass_hz=10000.0, snr_db=18.0,
        description="lowpass 10 kHz + noise, SNR 18 dB",
    ),
    TreatmentSpec("v06_snr15", snr_db=15.0, description="noise, SNR 15 dB"),
    TreatmentSpec("v07_snr5", snr_db=5.0, description="noise, SNR 5 dB"),
    TreatmentSpec("v08_lp8k", lowpass_hz=8000.0, description="lowpass 8 kHz"),
    TreatmentSpec("v09_lp4k", lowpass_hz=4000.0, description="lowpass 4 kHz"),
)


@dataclass(frozen=True)
class SyntheticSpec:
    """Recipe for one synthetic listening test."""

    n_signals: int = 24
    treatments: tuple[TreatmentSpec, ...] = TRAIN_TREATMENTS
    duration: float = 3.0
    sample_rate: int = 48000
    class_dependent: bool = True
    seed: int = 42
    listeners: int = 20
    observer_sigma: float = 5.0

    def __post_init__(self):
        object.__setattr__(self, "treatments", tuple(self.treatments))
        if self.n_signals < 8:
            raise InvalidSpecError(f"need at least 8 signals, got {self.n_signals}")
        if len(self.treatments) < 4:
            raise InvalidSpecError(f"need at least 4 treatments, got {len(self.treatments)}")
        ids = [t.treatment_id for t in self.treatments]
        if len(set(ids)) != len(ids):
            raise InvalidSpecError("duplicate treatment ids")
        if self.duration < 2.0:
            raise InvalidSpecError("signals must be at least one 2 s segment long")


def signal_class(index: int) -> str:
    """Deterministic class assignment: even indices speech, odd music."""
    return "speech" if index % 2 == 0 else "music"


def _smooth_gate(x: np.ndarray, sharpness: float = 6.0) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-sharpness * x))


def _bandpass_noise(
    rng: np.random.Generator, n: int, sample_rate: int, lo: float, hi: float
) -> np.ndarray:
    spec = np.fft.rfft(rng.standard_normal(n))
    f = np.fft.rfftfreq(n, d=1.0 / sample_rate)
    spec[(f < lo) | (f > hi)] = 0.0
    out = np.fft.irfft(spec, n=n)
    rms = np.sqrt(np.mean(out**2))
    return out / rms if rms > 0 else out


def synth_speech_like(rng: np.random.Generator, n: int, sample_rate: int) -> np.ndarray:
    """Harmonic complex with vibrato, syllabic 4-Hz gating, pauses, and
    fricative-like high-band noise in the gaps between voiced syllables.

    Bandwidth, fricative strength, and pause density vary widely from
    draw to draw so that different "talkers" suffer differently under the
    same degradation.
    """
    t = np.arange(n) / sample_rate
    f0 = rng.uniform(100.0, 240.0)
    vib_rate = rng.uniform(2.2, 3.2)
    vib_depth = rng.uniform(0.04, 0.09)
    inst_f0 = f0 * (1.0 + vib_depth * np.sin(2 * np.pi * vib_rate * t + rng.uniform(0, 2 * np.pi)))
    phase = 2 * np.pi * np.cumsum(inst_f0) / sample_rate
    n_harm = int(rng.integers(16, 41))
    x = np.zeros(n)
    for k in range(1, n_harm + 1):
        # formant-like emphasis plus a slow -6 dB/oct rolloff keeps energy to ~7 kHz
        fk = k * f0
        formant = np.exp(-0.5 * ((np.log(fk / rng.uniform(450, 900))) / 0.9) ** 2) + 0.25
        x += (formant / k) * np.sin(k * phase + rng.uniform(0, 2 * np.pi))
    syllable_rate = rng.uniform(3.4, 4.6)
    syl_phase = 2 * np.pi * syllable_rate * t + rng.uniform(0, 2 * np.pi)
    gate = (0.5 * (1.0 + np.sin(syl_phase))) ** rng.uniform(1.2, 1.8)
    pause_rate = rng.uniform(0.5, 0.9)
    pause_bias = rng.uniform(0.15, 0.75)
    pauses = _smooth_gate(np.sin(2 * np.pi * pause_rate * t + rng.uniform(0, 2 * np.pi)) + pause_bias)
    x *= gate * pauses
    # consonants: 3-7.5 kHz bursts where the voiced gate is low; kept soft so
    # the syllabic troughs survive in the log envelope
    fric = _bandpass_noise(rng, n, sample_rate, 3000.0, 7500.0)
    fric_gate = (0.5 * (1.0 - np.sin(syl_phase))) ** 3.5
    x += rng.uniform(0.03, 0.18) * fric * fric_gate * pauses
    peak = np.max(np.abs(x))
    return (0.35 / peak) * x if peak > 0 else x


def synth_music_like(rng: np.random.Generator, n: int, sample_rate: int) -> np.ndarray:
    """Sustained chord pad: detuned partial stacks, a soft high-frequency
    air layer, and only slow (sub-hertz) envelopes.

    Brightness varies from draw to draw, but the air layer keeps a floor
    of energy above 5 kHz so every pad loses something audible to a
    lowpass; without it the darkest draws are lowpass-immune and the
    class contrast in band-limiting sensitivity washes out.
    """
    t = np.arange(n) / sample_rate
    root = rng.uniform(140.0, 400.0)
    intervals = [1.0, rng.choice([1.2, 1.25]), 1.5, rng.choice([1.875, 2.0])]
    n_notes = int(rng.integers(3, 5))
    n_partials = int(rng.integers(10, 25))
    x = np.zeros(n)
    for note in range(n_notes):
        f_note = root * intervals[note % len(intervals)]
        detune = 1.0 + rng.normal(0, 0.0006)
        for k in range(1, n_partials + 1):
            fk = f_note * detune * k
            if fk > 13000.0:
                break
            amp = 1.0 / k ** rng.uniform(0.8, 1.2)
            x += amp * np.sin(2 * np.pi * fk * t + rng.uniform(0, 2 * np.pi))
    env_rate = rng.uniform(0.15, 0.45)
    env = 0.8 + 0.2 * np.sin(2 * np.pi * env_rate * t + rng.uniform(0, 2 * np.pi))
    # gentle shimmer, far below syllabic rates
    shimmer = 1.0 + 0.05 * np.sin(2 * np.pi * rng.uniform(0.8, 1.4) * t + rng.uniform(0, 2 * np.pi))
    x *= env * shimmer
    air = _bandpass_noise(rng, n, sample_rate, 5000.0, 14000.0)
    x += rng.uniform(0.05, 0.16) * np.max(np.abs(x)) * air * env / np.max(np.abs(air))
    peak = np.max(np.abs(x))
    return (0.35 / peak) * x if peak > 0 else x


def synth_reference(spec: SyntheticSpec, index: int) -> np.ndarray:
    """Reference signal for one slot, shaped (1, N); deterministic."""
    rng = np.random.default_rng((spec.seed, index))
    n = int(round(spec.duration * spec.sample_rate))
    if signal_class(index) == "speech":
        x = synth_speech_like(rng, n, spec.sample_rate)
    else:
        x = synth_music_like(rng, n, spec.sample_rate)
    return x.reshape(1, -1)


#: lowpass FIR length (odd, linear phase)
_LP_TAPS = 511
#: shaped-noise tilt: -3 dB/octave above this corner
_NOISE_TILT_CORNER = 500.0


def _shaped_noise(rng: np.random.Generator, n: int, sample_rate: int) -> np.ndarray:
    white = rng.standard_normal(n)
    spec = np.fft.rfft(white)
    f = np.fft.rfftfreq(n, d=1.0 / sample_rate)
    tilt = (1.0 + f / _NOISE_TILT_CORNER) ** -0.5
    return np.fft.irfft(spec * tilt, n=n)


def apply_treatment(
    reference: np.ndarray,
    treatment: TreatmentSpec,
    sample_rate: int,
    rng: np.random.Generator | None = None,
) -> np.ndarray:
    """Degrade a (C, N) reference: lowpass, then AM, then noise at SNR.

    The additive noise is normalized to the exact target power relative
    to the degraded signal, so the realized SNR equals the requested one
    by construction. The identity treatment returns a bit-identical copy.
    """
    x = np.asarray(reference, dtype=np.float64)
    if x.ndim != 2:
        raise InvalidParametersError("reference must be a (channels, samples) array")
    if treatment.is_identity:
        return x.copy()
    rng = rng or np.random.default_rng(0)
    out = x.copy()
    if treatment.lowpass_hz is not None:
        taps = firwin(_LP_TAPS, treatment.lowpass_hz, fs=sample_rate)
        out = np.stack([fftconvolve(ch, taps, mode="same") for ch in out])
    if treatment.mod_depth > 0.0:
        t = np.arange(out.shape[1]) / sample_rate
        out = out * (1.0 + treatment.mod_depth * np.sin(2 * np.pi * 8.0 * t))
    if treatment.snr_db is not None:
        power = float(np.mean(out**2))
        if power <= 0.0:
            raise InvalidParametersError("cannot set an SNR against a silent signal")
        target = power * 10.0 ** (-treatment.snr_db / 10.0)
        for c in range(out.shape[0]):
            noise = _shaped_noise(rng, out.shape[1], sample_rate)
            noise *= np.sqrt(target / np.mean(noise**2))
            out[c] = out[c] + noise
    return out


@dataclass(frozen=True)
class SignalProfile:
    """What the hidden observer knows about one reference signal."""

    signal_class: str
    pause_fraction: float
    #: cumulative spectrum: fraction of energy above each grid frequency
    freq_grid: np.ndarray
    fraction_above: np.ndarray
    jitter: dict

    def energy_above(self, cutoff_hz: float) -> float:
        return float(np.interp(cutoff_hz, self.freq_grid, self.fraction_above))


def _pause_fraction(x: np.ndarray, sample_rate: int) -> float:
    block = max(1, sample_rate // 50)
    n_blocks = len(x) // block
    env = np.sqrt(np.mean(x[: n_blocks * block].reshape(n_blocks, block) ** 2, axis=1))
    mean = env.mean()
    if mean <= 0:
        return 0.0
    return float(np.mean(env < 10.0 ** (-2.5 / 2.0) * mean))


def signal_profile(spec: SyntheticSpec, index: int, audio: np.ndarray) -> SignalProfile:
    """Measure the content properties driving the hidden vulnerability."""
    mono = audio.mean(axis=0)
    power = np.abs(np.fft.rfft(mono)) ** 2
    freqs = np.fft.rfftfreq(len(mono), d=1.0 / spec.sample_rate)
    total = power.sum()
    grid = np.linspace(1000.0, 20000.0, 96)
    above = np.array([power[freqs > g].sum() for g in grid]) / max(total, 1e-300)
    rng = np.random.default_rng((spec.seed, index, 10_001))
    jitter = {axis: rng.uniform(_JITTER_LO, _JITTER_HI) for axis in ("noise", "lowpass", "am")}
    return SignalProfile(
        signal_class=signal_class(index),
        pause_fraction=_pause_fraction(mono, spec.sample_rate),
        freq_grid=grid,
        fraction_above=above,
        jitter=jitter,
    )


def latent_mos(spec: SyntheticSpec, profile: SignalProfile, treatment: TreatmentSpec) -> float:
    """Hidden noiseless MOS: 100 minus weighted degradation penalties.

    Each penalty scales with the class weight and with what the signal
    actually stands to lose: noise annoyance grows with the pause
    fraction, band-limitation annoyance with the removed energy for
    music but with articulation-band proximity for speech. With
    class_dependent=False both the class weights and the content
    factors collapse to 1, leaving only the mild class-blind jitter
    (the null-hypothesis rule).
    """
    if spec.class_dependent:
        weights = CLASS_WEIGHTS[profile.signal_class]
        vuln_noise = _NOISE_VULN_BASE + _NOISE_VULN_PAUSE * profile.pause_fraction
    else:
        weights = {"noise": 1.0, "lowpass": 1.0, "am": 1.0}
        vuln_noise = 1.0
    total = 0.0
    if treatment.snr_db is not None:
        pen = _NOISE_PEN_SLOPE * max(0.0, _NOISE_PEN_REF_SNR - treatment.snr_db)
        total += weights["noise"] * vuln_noise * profile.jitter["noise"] * pen
    if treatment.lowpass_hz is not None:
        pen = _LP_PEN_PER_OCTAVE * max(0.0, np.log2(_LP_PEN_REF_HZ / treatment.lowpass_hz))
        if not spec.class_dependent:
            vuln_lp = 1.0
        elif profile.signal_class == "speech":
            vuln_lp = np.clip(
                (_SPEECH_LP_REF_HZ / treatment.lowpass_hz) ** _SPEECH_LP_EXPONENT,
                _SPEECH_LP_VULN_LO,
                _SPEECH_LP_VULN_HI,
            )
        else:
            vuln_lp = np.clip(
                _LP_VULN_LOG_BASE
                + _LP_VULN_LOG_SLOPE
                * np.log10(
                    profile.energy_above(treatment.lowpass_hz) / _LP_VULN_LOG_REF + 1.0
                ),
                _LP_VULN_LO,
                _LP_VULN_HI,
            )
        total += weights["lowpass"] * vuln_lp * profile.jitter["lowpass"] * pen
    total += weights["am"] * profile.jitter["am"] * _AM_PEN_SCALE * treatment.mod_depth
    return float(np.clip(100.0 - total, 0.0, 100.0))


@dataclass(frozen=True)
class ConditionRecord:
    """One streamed (signal, treatment) condition with its audio."""

    signal_id: str
    signal_index: int
    signal_class: str
    treatment: TreatmentSpec
    reference: np.ndarray
    sut: np.ndarray
    mos: float
    ci95: float
    latent: float


def _signal_id(index: int) -> str:
    return f"sig{index + 1:02d}_{signal_class(index)}"


def iter_conditions(spec: SyntheticSpec):
    """Stream every condition of the synthetic test, audio included.

    References are synthesized once per signal and shared across that
    signal's conditions. MOS is the clipped mean of simulated listener
    scores (latent value plus i.i.d. observer noise); ci95 is their 95%
    confidence half-width.
    """
    for j in range(spec.n_signals):
        ref = synth_reference(spec, j)
        profile = signal_profile(spec, j, ref)
        for i, treatment in enumerate(spec.treatments):
            rng = np.random.default_rng((spec.seed, j, i))
            sut = apply_treatment(ref, treatment, spec.sample_rate, rng)
            latent = latent_mos(spec, profile, treatment)
            scores = latent + spec.observer_sigma * rng.standard_normal(spec.listeners)
            scores = np.clip(scores, 0.0, 100.0)
            mos = float(np.clip(scores.mean(), 0.0, 100.0))
            ci95 = float(1.96 * scores.std(ddof=1) / np.sqrt(spec.listeners))
            yield ConditionRecord(
                signal_id=_signal_id(j),
                signal_index=j,
                signal_class=signal_class(j),
                treatment=treatment,
                reference=ref,
                sut=sut,
                mos=mos,
                ci95=ci95,
                latent=latent,
            )


def ground_truth(spec: SyntheticSpec) -> dict:
    """The hidden weighting behind the MOS, for oracle tests."""
    signals = {}
    for j in range(spec.n_signals):
        profile = signal_profile(spec, j, synth_reference(spec, j))
        signals[_signal_id(j)] = {
            "class": profile.signal_class,
            "pause_fraction": profile.pause_fraction,
            "jitter": {k: float(v) for k, v in profile.jitter.items()},
            "latent_mos": {
                t.treatment_id: latent_mos(spec, profile, t) for t in spec.treatments
            },
        }
    return {
        "class_dependent": spec.class_dependent,
        "class_weights": CLASS_WEIGHTS if spec.class_dependent else None,
        "signals": signals,
    }


# --- manifests ---------------------------------------------------------------


@dataclass(frozen=True)
class ManifestCondition:
    signal_id: str
    treatment_id: str
    sut_path: str
    mos: float
    ci95: float


@dataclass(frozen=True)
class DatasetManifest:
    """File-backed description of one listening test."""

    signals: tuple[tuple[str, str], ...]  # (signal id, reference path)
    treatments: tuple[tuple[str, str], ...]  # (treatment id, description)
    conditions: tuple[ManifestCondition, ...]
    root: str = "."
    ground_truth: dict | None = None

    def resolve(self, path: str) -> str:
        return os.path.normpath(os.path.join(self.root, path))


def manifest_to_dict(manifest: DatasetManifest) -> dict:
    doc = {
        "schema_version": MANIFEST_SCHEMA_VERSION,
        "signals": [{"id": s, "reference": p} for s, p in manifest.signals],
        "treatments": [{"id": t, "description": d} for t, d in manifest.treatments],
        "conditions": [
            {
                "signal": c.signal_id,
                "treatment": c.treatment_id,
                "sut": c.sut_path,
                "mos": c.mos,
                "ci95": c.ci95,
            }
            for c in manifest.conditions
        ],
    }
    if manifest.ground_truth is not None:
        doc["ground_truth"] = manifest.ground_truth
    return doc


def save_manifest(manifest: DatasetManifest, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest_to_dict(manifest), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _check_wav_header(path: str) -> None:
    try:
        with open(path, "rb") as fh:
            head = fh.read(12)
    except OSError as exc:
        raise MissingFileError(f"cannot open {path}: {exc}") from exc
    if len(head) < 12 or head[:4] != b"RIFF" or head[8:12] != b"WAVE":
        raise SchemaError(f"{path} is not a RIFF/WAVE file")


def load_manifest(path: str, check_audio: bool = True) -> DatasetManifest:
    """Parse and validate a manifest file.

    Audio paths are resolved relative to the manifest's directory and, by
    default, checked for existence and a decodable WAV header.
    """
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise MissingFileError(f"cannot open manifest {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise SchemaError(f"manifest {path} does not parse: {exc}") from exc
    if not isinstance(doc, dict):
        raise SchemaError("manifest root must be an object")
    version = doc.get("schema_version")
    if version != MANIFEST_SCHEMA_VERSION:
        raise SchemaError(f"unsupported schema_version {version!r}")
    root = os.path.dirname(os.path.abspath(path))

    try:
        signals = tuple((s["id"], s["reference"]) for s in doc["signals"])
        treatments = tuple((t["id"], t.get("description", "")) for t in doc["treatments"])
    except (KeyError, TypeError) as exc:
        raise SchemaError(f"malformed signals/treatments section: {exc}") from exc
    signal_ids = {s for s, _ in signals}
    treatment_ids = {t for t, _ in treatments}

    conditions = []
    seen = set()
    for row_no, row in enumerate(doc.get("conditions", []), start=1):
        try:
            cond = ManifestCondition(
                signal_id=row["signal"],
                treatment_id=row["treatment"],
                sut_path=row["sut"],
                mos=float(row["mos"]),
                ci95=float(row["ci95"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaError(f"condition row {row_no}: {exc}") from exc
        if not (0.0 <= cond.mos <= 100.0):
            raise SchemaError(f"condition row {row_no}: mos {cond.mos} outside [0, 100]")
        if cond.ci95 < 0.0:
            raise SchemaError(f"condition row {row_no}: ci95 {cond.ci95} negative")
        if cond.signal_id not in signal_ids:
            raise SchemaError(f"condition row {row_no}: unknown signal {cond.signal_id!r}")
        if cond.treatment_id not in treatment_ids:
            raise SchemaError(f"condition row {row_no}: unknown treatment {cond.treatment_id!r}")
        key = (cond.signal_id, cond.treatment_id)
        if key in seen:
            raise DuplicateConditionError(f"duplicate condition {key[0]}/{key[1]}")
        seen.add(key)
        conditions.append(cond)

    manifest = DatasetManifest(
        signals=signals,
        treatments=treatments,
        conditions=tuple(conditions),
        root=root,
        ground_truth=doc.get("ground_truth"),
    )
    if check_audio:
        for _, ref_path in manifest.signals:
            full = manifest.resolve(ref_path)
            if not os.path.exists(full):
                raise MissingFileError(f"reference audio missing: {full}")
            _check_wav_header(full)
        for cond in manifest.conditions:
            full = manifest.resolve(cond.sut_path)
            if not os.path.exists(full):
                raise MissingFileError(f"sut audio missing: {full}")
            _check_wav_header(full)
    return manifest


def generate_synthetic(spec: SyntheticSpec, out_dir: str) -> DatasetManifest:
    """Generate audio plus manifest on disk; returns the loaded-form manifest.

    Layout: <out_dir>/audio/*.wav and <out_dir>/manifest.json with paths
    relative to out_dir. Identical (spec, seed) produce bit-identical
    files.
    """
    audio_dir = os.path.join(out_dir, "audio")
    os.makedirs(audio_dir, exist_ok=True)
    signals: list[tuple[str, str]] = []
    conditions: list[ManifestCondition] = []
    written_refs: set[str] = set()
    for record in iter_conditions(spec):
        ref_rel = os.path.join("audio", f"{record.signal_id}_ref.wav")
        if record.signal_id not in written_refs:
            write_wav(os.path.join(out_dir, ref_rel), record.reference, spec.sample_rate)
            signals.append((record.signal_id, ref_rel))
            written_refs.add(record.signal_id)
        sut_rel = os.path.join(
            "audio", f"{record.signal_id}__{record.treatment.treatment_id}.wav"
        )
        write_wav(os.path.join(out_dir, sut_rel), record.sut, spec.sample_rate)
        conditions.append(
            ManifestCondition(
                signal_id=record.signal_id,
                treatment_id=record.treatment.treatment_id,
                sut_path=sut_rel,
                mos=record.mos,
                ci95=record.ci95,
            )
        )
    manifest = DatasetManifest(
        signals=tuple(signals),
        treatments=tuple((t.treatment_id, t.description) for t in spec.treatments),
        conditions=tuple(conditions),
        root=out_dir,
        ground_truth=ground_truth(spec),
    )
    save_manifest(manifest, os.path.join(out_dir, "manifest.json"))
    return manifest
