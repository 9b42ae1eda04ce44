"""Psychophysical front end and the six distortion metrics.

The front end is a deliberately simplified PEAQ-style ear model: short-time
spectra, outer/middle-ear weighting, critical-band grouping on a Bark grid,
first-order time-domain smearing, fixed-slope frequency spreading, an
additive internal-noise floor, and a compressive loudness map. It is not a
BS.1387-conformant implementation; each derived metric preserves the role
of its namesake (linear distortion, modulation disturbance, added noise,
missing components, harmonic error structure, noise-to-mask ratio) without
claiming bit-exact model output values.

All constants live in :class:`EarModelConfig` so they are inspectable and
testable. Computations are pure and deterministic for fixed input.
"""
from __future__ import annotations

import functools
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from .audio_io import AudioPair, SegmentPlan
from .errors import EmptySegmentError, TooShortError

#: canonical order of the six distortion metrics
DM_NAMES = (
    "lin_dist",
    "mod_diff",
    "noise_loudness",
    "missing_components",
    "ehs",
    "seg_nmr",
)


@dataclass(frozen=True)
class EarModelConfig:
    """All front-end and metric constants, with documented defaults."""

    sample_rate: int = 48000
    frame_size: int = 2048
    hop_size: int = 1024
    n_bands: int = 40
    band_f_min: float = 80.0
    band_f_max: float = 18000.0
    #: SPL assigned to a full-scale sinusoid (playback-level convention)
    listening_level_db: float = 92.0
    #: time-smearing constants, seconds (band-dependent, PEAQ-style)
    tau_min: float = 0.008
    tau_100: float = 0.030
    #: fixed frequency-spreading slopes, dB per Bark
    spread_lower_slope_db: float = 27.0
    spread_upper_slope_db: float = 15.0
    #: compressive loudness map N = scale * (E^nu - E_noise^nu)
    loudness_exponent: float = 0.23
    loudness_scale: float = 0.25
    #: modulation measure constants
    mod_envelope_exponent: float = 0.3
    mod_smooth_tau: float = 0.05
    mod_offset: float = 1.0
    #: noise-loudness partial-masking constants
    masking_excitation_weight: float = 0.5
    noise_loudness_exponent: float = 0.23
    #: NMR masking offset: max(offset_floor_db, offset_slope_per_bark * bark)
    nmr_offset_floor_db: float = 3.0
    nmr_offset_slope_db: float = 0.25
    #: lin_dist only evaluates bands the reference excites within this span
    #: of its loudest band, so it measures frequency response rather than
    #: additive disturbance in otherwise quiet bands
    lin_dist_active_span_db: float = 35.0
    #: coherent band gains are floored here before the dB transform, which
    #: bounds the penalty for a fully removed band
    lin_dist_gain_floor_db: float = 50.0
    #: per-band gain deviations below this are treated as inaudible and do
    #: not count toward lin_dist; estimator fluctuation under additive
    #: noise stays under this bound, real response shaping far exceeds it
    lin_dist_deadzone_db: float = 2.0
    #: linear ratio floor for the segmental NMR (-60 dB)
    nmr_floor_ratio: float = 1e-6
    #: harmonic-error-structure analysis constants
    ehs_max_freq: float = 9000.0
    ehs_max_lag: int = 128
    ehs_energy_floor: float = 1e-30


DEFAULT_EAR_CONFIG = EarModelConfig()


def bark_scale(f):
    """Zwicker critical-band rate (Bark) for frequency in Hz."""
    f = np.asarray(f, dtype=np.float64)
    return 13.0 * np.arctan(0.00076 * f) + 3.5 * np.arctan((f / 7500.0) ** 2)


class _EarTables:
    """Precomputed, config-derived tables shared across analyses."""

    def __init__(self, cfg: EarModelConfig):
        self.cfg = cfg
        n_bins = cfg.frame_size // 2 + 1
        self.freqs = np.linspace(0.0, cfg.sample_rate / 2.0, n_bins)
        self.window = np.hanning(cfg.frame_size)
        # scale such that a full-scale sine lands at listening_level_db
        wsum = float(np.sum(self.window))
        self.energy_scale = 10.0 ** (cfg.listening_level_db / 10.0) * 4.0 / wsum**2

        # outer/middle-ear weighting applied to power spectra
        fk = np.maximum(self.freqs, 1e-2) / 1000.0
        w_db = -0.6 * 3.64 * fk**-0.8 + 6.5 * np.exp(-0.6 * (fk - 3.3) ** 2) - 1e-3 * fk**3.6
        self.ome_power = 10.0 ** (w_db / 10.0)

        # Bark-uniform band edges and bin-grouping matrix
        edges_bark = np.linspace(
            float(bark_scale(cfg.band_f_min)),
            float(bark_scale(cfg.band_f_max)),
            cfg.n_bands + 1,
        )
        self.band_edges_bark = edges_bark
        self.band_centers_bark = 0.5 * (edges_bark[:-1] + edges_bark[1:])
        bin_bark = bark_scale(self.freqs)
        grouping = np.zeros((n_bins, cfg.n_bands))
        idx = np.searchsorted(edges_bark, bin_bark, side="right") - 1
        valid = (idx >= 0) & (idx < cfg.n_bands) & (self.freqs > 0)
        grouping[valid, idx[valid]] = 1.0
        self.grouping = grouping

        # band center frequencies (Hz) via inverse interpolation on the grid
        self.band_centers_hz = np.interp(self.band_centers_bark, bin_bark, self.freqs)

        # internal noise floor per band (energy units)
        self.internal_noise = 10.0 ** (0.4 * 0.364 * (self.band_centers_hz / 1000.0) ** -0.8)

        # time-smearing coefficient per band
        tau = cfg.tau_min + (100.0 / self.band_centers_hz) * (cfg.tau_100 - cfg.tau_min)
        self.alpha_time = np.exp(-cfg.hop_size / (cfg.sample_rate * tau))

        # fixed-slope spreading matrix, row-normalized so flat stays flat
        z = self.band_centers_bark
        dz = z[:, None] - z[None, :]  # receiver i minus source j
        spread = np.where(
            dz >= 0,
            10.0 ** (-np.abs(dz) * cfg.spread_upper_slope_db / 10.0),
            10.0 ** (-np.abs(dz) * cfg.spread_lower_slope_db / 10.0),
        )
        self.spread_norm = spread / np.sum(spread, axis=1, keepdims=True)

        # NMR masking offset per band (linear divisor)
        offset_db = np.maximum(
            cfg.nmr_offset_floor_db, cfg.nmr_offset_slope_db * self.band_centers_bark
        )
        self.masking_divisor = 10.0 ** (offset_db / 10.0)

        # EHS bin range and windows
        self.ehs_bins = int(np.searchsorted(self.freqs, cfg.ehs_max_freq))
        self.ehs_lag_window = np.hanning(cfg.ehs_max_lag)
        self.ehs_fft = 1 << int(np.ceil(np.log2(2 * self.ehs_bins)))
        self.ehs_spec_fft = 1 << int(np.ceil(np.log2(2 * cfg.ehs_max_lag)))

        self.alpha_mod = float(np.exp(-cfg.hop_size / (cfg.sample_rate * cfg.mod_smooth_tau)))
        self.env_rate = cfg.sample_rate / cfg.hop_size


@functools.lru_cache(maxsize=8)
def _tables(cfg: EarModelConfig) -> _EarTables:
    return _EarTables(cfg)


@dataclass(frozen=True)
class ExcitationFrame:
    """One analysis frame in the transformed psychophysical domain."""

    pitch_bands: np.ndarray  # excitation per critical band, dB
    loudness_bands: np.ndarray  # specific loudness per band, sone
    modulation_bands: np.ndarray  # dimensionless modulation measure
    frame_time: float


class FramePairSequence(Sequence):
    """Sequence of (reference, sut) excitation frames for one channel.

    Indexing yields ``(ExcitationFrame, ExcitationFrame)`` tuples. The
    underlying band arrays are kept whole for the metric computations:
    ``exc_*`` carry the final excitation (spread + internal noise),
    ``raw_*`` the homogeneous excitation before the internal-noise floor,
    ``err_band`` the band-grouped energy of the spectral difference,
    ``ehs_frames`` the per-frame harmonic-error-structure values, and
    ``band_cross``/``band_auto`` the coherent cross- and reference
    auto-spectrum per band for frequency-response estimation.
    """

    def __init__(
        self,
        config: EarModelConfig,
        frame_times: np.ndarray,
        exc_ref: np.ndarray,
        exc_sut: np.ndarray,
        raw_ref: np.ndarray,
        raw_sut: np.ndarray,
        loud_ref: np.ndarray,
        loud_sut: np.ndarray,
        mod_ref: np.ndarray,
        mod_sut: np.ndarray,
        err_band: np.ndarray,
        ehs_frames: np.ndarray,
        band_cross: np.ndarray,
        band_auto: np.ndarray,
    ):
        self.config = config
        self.frame_times = frame_times
        self.exc_ref = exc_ref
        self.exc_sut = exc_sut
        self.raw_ref = raw_ref
        self.raw_sut = raw_sut
        self.loud_ref = loud_ref
        self.loud_sut = loud_sut
        self.mod_ref = mod_ref
        self.mod_sut = mod_sut
        self.err_band = err_band
        self.ehs_frames = ehs_frames
        self.band_cross = band_cross
        self.band_auto = band_auto

    def __len__(self) -> int:
        return len(self.frame_times)

    def __getitem__(self, i):
        if isinstance(i, slice):
            return [self[j] for j in range(*i.indices(len(self)))]
        t = float(self.frame_times[i])
        ref = ExcitationFrame(
            10.0 * np.log10(self.exc_ref[i]), self.loud_ref[i], self.mod_ref[i], t
        )
        sut = ExcitationFrame(
            10.0 * np.log10(self.exc_sut[i]), self.loud_sut[i], self.mod_sut[i], t
        )
        return ref, sut


def _frame_signal(x: np.ndarray, frame: int, hop: int) -> np.ndarray:
    n = (len(x) - frame) // hop + 1
    view = np.lib.stride_tricks.sliding_window_view(x, frame)[::hop]
    return view[:n]


def _smear_time(bands: np.ndarray, alpha: np.ndarray) -> np.ndarray:
    """First-order lowpass along time, floored by the instantaneous energy."""
    out = np.empty_like(bands)
    state = bands[0]
    out[0] = state
    one_minus = 1.0 - alpha
    for t in range(1, len(bands)):
        state = alpha * state + one_minus * bands[t]
        out[t] = np.maximum(state, bands[t])
        state = out[t]
    return out


def _modulation(exc: np.ndarray, tables: _EarTables) -> np.ndarray:
    cfg = tables.cfg
    env = exc**cfg.mod_envelope_exponent
    der = np.zeros_like(env)
    der[1:] = np.abs(np.diff(env, axis=0)) * tables.env_rate
    a = tables.alpha_mod
    der_s = np.empty_like(der)
    env_s = np.empty_like(env)
    der_s[0] = der[0]
    env_s[0] = env[0]
    for t in range(1, len(env)):
        der_s[t] = a * der_s[t - 1] + (1.0 - a) * der[t]
        env_s[t] = a * env_s[t - 1] + (1.0 - a) * env[t]
    return der_s / (cfg.mod_offset + env_s)


def _ehs_per_frame(err_power: np.ndarray, tables: _EarTables) -> np.ndarray:
    """Peak of the spectrum of the error log-spectrum autocorrelation."""
    cfg = tables.cfg
    nb = tables.ehs_bins
    d = np.log(err_power[:, :nb] + cfg.ehs_energy_floor)
    d = d - d.mean(axis=1, keepdims=True)
    spec = np.fft.rfft(d, n=tables.ehs_fft, axis=1)
    acorr = np.fft.irfft(np.abs(spec) ** 2, n=tables.ehs_fft, axis=1)
    a0 = acorr[:, 0]
    lags = acorr[:, 1 : cfg.ehs_max_lag + 1]
    valid = a0 > cfg.ehs_energy_floor
    norm = np.where(valid, a0, 1.0)[:, None]
    r = (lags / norm) * tables.ehs_lag_window
    mag = np.abs(np.fft.rfft(r, n=tables.ehs_spec_fft, axis=1))
    peak = mag[:, 1:].max(axis=1) / (cfg.ehs_max_lag / 2.0)
    # a zero-error frame has no harmonic structure by definition
    err_energy = err_power.sum(axis=1)
    return np.where(valid & (err_energy > cfg.ehs_energy_floor), peak, 0.0)


def _analyze_channel(ref: np.ndarray, sut: np.ndarray, cfg: EarModelConfig) -> FramePairSequence:
    tables = _tables(cfg)
    if len(ref) < cfg.frame_size:
        raise TooShortError(
            f"{len(ref)} samples, need at least one {cfg.frame_size}-sample frame"
        )
    frames_ref = _frame_signal(ref, cfg.frame_size, cfg.hop_size) * tables.window
    frames_sut = _frame_signal(sut, cfg.frame_size, cfg.hop_size) * tables.window
    spec_ref = np.fft.rfft(frames_ref, axis=1)
    spec_sut = np.fft.rfft(frames_sut, axis=1)
    w = tables.energy_scale * tables.ome_power
    p_ref = (spec_ref.real**2 + spec_ref.imag**2) * w
    p_sut = (spec_sut.real**2 + spec_sut.imag**2) * w
    diff = spec_sut - spec_ref
    p_err = (diff.real**2 + diff.imag**2) * w

    bands_ref = p_ref @ tables.grouping
    bands_sut = p_sut @ tables.grouping
    err_band = p_err @ tables.grouping
    # coherent cross-spectrum per band: additive independent noise cancels
    # in expectation, so |cross/auto| estimates the frequency response alone.
    # The auto term goes through the same complex pipeline so that an
    # identical pair yields band gains of exactly 1.
    band_cross = (spec_ref.conj() * spec_sut * w) @ tables.grouping
    band_auto = ((spec_ref.conj() * spec_ref * w) @ tables.grouping).real

    sm_ref = _smear_time(bands_ref, tables.alpha_time)
    sm_sut = _smear_time(bands_sut, tables.alpha_time)
    raw_ref = sm_ref @ tables.spread_norm.T
    raw_sut = sm_sut @ tables.spread_norm.T
    exc_ref = raw_ref + tables.internal_noise
    exc_sut = raw_sut + tables.internal_noise

    nu = cfg.loudness_exponent
    noise_pow = tables.internal_noise**nu
    loud_ref = cfg.loudness_scale * (exc_ref**nu - noise_pow)
    loud_sut = cfg.loudness_scale * (exc_sut**nu - noise_pow)

    mod_ref = _modulation(exc_ref, tables)
    mod_sut = _modulation(exc_sut, tables)

    ehs_frames = _ehs_per_frame(p_err, tables)
    n = len(frames_ref)
    frame_times = np.arange(n) * (cfg.hop_size / cfg.sample_rate)
    return FramePairSequence(
        cfg, frame_times, exc_ref, exc_sut, raw_ref, raw_sut,
        loud_ref, loud_sut, mod_ref, mod_sut, err_band, ehs_frames,
        band_cross, band_auto,
    )


def analyze_frames(
    pair: AudioPair, config: EarModelConfig | None = None
) -> list[FramePairSequence]:
    """Transform an aligned pair into per-channel excitation frame sequences.

    Returns one :class:`FramePairSequence` per channel; mono input yields a
    single-element list. Stereo channels are analyzed independently so
    interchannel artifacts cannot mask each other.
    """
    cfg = config or DEFAULT_EAR_CONFIG
    if cfg.sample_rate != pair.sample_rate:
        cfg = EarModelConfig(**{**cfg.__dict__, "sample_rate": pair.sample_rate})
    return [
        _analyze_channel(pair.reference[c], pair.sut[c], cfg)
        for c in range(pair.channels)
    ]


@dataclass(frozen=True)
class DmRecord:
    """Six time-averaged distortion metrics plus their per-segment values.

    ``per_segment`` is shaped (segments, 6) with columns in DM_NAMES order;
    seg_nmr is stored in dB per segment. Excerpt-level averaging: linear
    mean over segments for lin_dist, noise_loudness, missing_components and
    ehs; RMS over segments for mod_diff; seg_nmr averages as dB of the RMS
    of the per-segment linear ratios.
    """

    lin_dist: float
    mod_diff: float
    noise_loudness: float
    missing_components: float
    ehs: float
    seg_nmr: float
    per_segment: np.ndarray

    def as_dict(self) -> dict[str, float]:
        return {name: float(getattr(self, name)) for name in DM_NAMES}

    def values(self) -> np.ndarray:
        return np.array([getattr(self, name) for name in DM_NAMES], dtype=np.float64)


def nmr_time_average(per_segment_db: np.ndarray) -> float:
    """Excerpt-level segmental NMR: dB of the RMS of per-segment ratios."""
    ratios = 10.0 ** (np.asarray(per_segment_db, dtype=np.float64) / 10.0)
    return float(10.0 * np.log10(np.sqrt(np.mean(ratios**2))))


def _segment_indices(frame_times: np.ndarray, plan: SegmentPlan) -> list[np.ndarray]:
    seg_idx = np.floor(frame_times / plan.segment_length).astype(int)
    groups = []
    for s in range(plan.segment_count):
        members = np.nonzero(seg_idx == s)[0]
        if len(members) == 0:
            raise EmptySegmentError(f"segment {s} contains no analysis frames")
        groups.append(members)
    return groups


def _compute_dm_channel(frames: FramePairSequence, plan: SegmentPlan) -> DmRecord:
    cfg = frames.config
    tables = _tables(cfg)
    groups = _segment_indices(frames.frame_times, plan)
    lam = cfg.masking_excitation_weight
    nl_nu = cfg.noise_loudness_exponent
    per_segment = np.zeros((len(groups), len(DM_NAMES)))

    for s, members in enumerate(groups):
        exc_r = frames.exc_ref[members]
        exc_s = frames.exc_sut[members]

        # linear distortions: spread of the coherent per-band frequency
        # response over the bands the reference actually excites. Centering
        # the dB gains removes overall level; the cross-spectrum estimator
        # keeps additive independent noise from registering as gain error.
        cross_sum = frames.band_cross[members].sum(axis=0)
        auto_sum = frames.band_auto[members].sum(axis=0)
        peak = float(auto_sum.max())
        if peak <= 0.0:
            # a silent reference segment carries no response information
            lin_dist = 0.0
        else:
            active = auto_sum >= peak * 10.0 ** (-cfg.lin_dist_active_span_db / 10.0)
            h = np.abs(cross_sum[active]) / auto_sum[active]
            h_db = 20.0 * np.log10(np.maximum(h, 10.0 ** (-cfg.lin_dist_gain_floor_db / 20.0)))
            dev = np.abs(h_db - h_db.mean())
            lin_dist = float(np.mean(np.maximum(dev - cfg.lin_dist_deadzone_db, 0.0)))

        # modulation disturbance: mean absolute modulation difference
        mod_diff = float(np.mean(np.abs(frames.mod_sut[members] - frames.mod_ref[members])))

        # added / missing components: partial loudness of the positive and
        # negative parts of the level-normalized excitation difference.
        # The formulas are exact mirror images so that swapping reference
        # and sut swaps the two metrics bit-exactly.
        level_r = float(exc_r.mean())
        level_s = float(exc_s.mean())
        norm_r = exc_r / level_r
        norm_s = exc_s / level_s
        floor_r = tables.internal_noise / level_r
        floor_s = tables.internal_noise / level_s
        added = np.maximum(0.0, norm_s - norm_r)
        missing = np.maximum(0.0, norm_r - norm_s)
        nl = float(np.mean(np.sum((1.0 + added / (lam * norm_r + floor_r)) ** nl_nu - 1.0, axis=1)))
        mc = float(np.mean(np.sum((1.0 + missing / (lam * norm_s + floor_s)) ** nl_nu - 1.0, axis=1)))

        # harmonic structure of the error
        ehs = float(np.mean(frames.ehs_frames[members]))

        # segmental noise-to-mask ratio
        threshold = exc_r / tables.masking_divisor
        ratio = float(np.mean(frames.err_band[members] / threshold))
        nmr_db = 10.0 * np.log10(max(ratio, cfg.nmr_floor_ratio))

        per_segment[s] = (lin_dist, mod_diff, nl, mc, ehs, nmr_db)

    return _aggregate_segments(per_segment)


def _aggregate_segments(per_segment: np.ndarray) -> DmRecord:
    """Apply the documented per-metric time averaging to a segment table."""
    return DmRecord(
        lin_dist=float(np.mean(per_segment[:, 0])),
        mod_diff=float(np.sqrt(np.mean(per_segment[:, 1] ** 2))),
        noise_loudness=float(np.mean(per_segment[:, 2])),
        missing_components=float(np.mean(per_segment[:, 3])),
        ehs=float(np.mean(per_segment[:, 4])),
        seg_nmr=nmr_time_average(per_segment[:, 5]),
        per_segment=per_segment,
    )


def compute_dm(
    frames: FramePairSequence | list[FramePairSequence], plan: SegmentPlan
) -> DmRecord:
    """Compute the six distortion metrics.

    Multi-channel input is reduced by averaging the per-segment metric
    tables across channels (seg_nmr in dB), then applying the documented
    time averaging, so the excerpt values always equal the documented
    aggregation of the returned ``per_segment`` table.
    """
    if isinstance(frames, FramePairSequence):
        frames = [frames]
    if not frames:
        raise EmptySegmentError("no frame sequences to analyze")
    records = [_compute_dm_channel(ch, plan) for ch in frames]
    if len(records) == 1:
        return records[0]
    per_segment = np.mean([r.per_segment for r in records], axis=0)
    return _aggregate_segments(per_segment)
