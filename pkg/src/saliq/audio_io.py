"""Loading, validation, alignment, and segmentation of reference/test pairs.

All audio is carried as float64 arrays shaped (channels, samples) in
[-1, 1] at a canonical 48 kHz rate. Alignment uses a single global
cross-correlation delay estimate; coding-style artifacts preserve global
timing, so no time-varying alignment is attempted.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.io import wavfile
from scipy.signal import fftconvolve, resample_poly

from .errors import (
    AlignmentFailureError,
    ChannelMismatchError,
    SampleRateMismatchError,
    TooShortError,
    UnreadableFileError,
)

CANONICAL_RATE = 48000

#: segment length used for time averaging of the distortion metrics, seconds
SEGMENT_SECONDS = 2.0


@dataclass(frozen=True)
class AudioPair:
    """Aligned reference / signal-under-test waveforms.

    reference, sut: float64 arrays shaped (channels, samples), |x| <= 1.
    delay_samples: the delay of sut relative to reference that was
    compensated during alignment (positive: sut arrived late).
    """

    reference: np.ndarray
    sut: np.ndarray
    sample_rate: int = CANONICAL_RATE
    delay_samples: int = 0

    def __post_init__(self):
        ref = _as_2d(self.reference)
        sut = _as_2d(self.sut)
        object.__setattr__(self, "reference", ref)
        object.__setattr__(self, "sut", sut)
        if ref.shape[0] != sut.shape[0]:
            raise ChannelMismatchError(
                f"reference has {ref.shape[0]} channels, sut has {sut.shape[0]}"
            )
        if ref.shape[1] != sut.shape[1]:
            raise ChannelMismatchError(
                f"aligned buffers must have equal length, got {ref.shape[1]} and {sut.shape[1]}"
            )

    @property
    def channels(self) -> int:
        return self.reference.shape[0]

    @property
    def n_samples(self) -> int:
        return self.reference.shape[1]

    @property
    def duration(self) -> float:
        return self.n_samples / self.sample_rate

    def channel(self, c: int) -> "AudioPair":
        """Mono view of one channel."""
        return AudioPair(
            self.reference[c : c + 1],
            self.sut[c : c + 1],
            self.sample_rate,
            self.delay_samples,
        )


@dataclass(frozen=True)
class SegmentPlan:
    """Non-overlapping analysis segments shared by reference and sut."""

    segment_length: float
    hop: float
    segment_count: int
    tail_policy: str
    sample_rate: int
    samples_per_segment: int

    def boundaries(self) -> list[tuple[float, float]]:
        return [
            (i * self.hop, i * self.hop + self.segment_length)
            for i in range(self.segment_count)
        ]


@dataclass(frozen=True)
class IngestOptions:
    resample: bool = False
    max_delay_ms: float = 250.0
    align_confidence_floor: float = 0.3
    target_rate: int = CANONICAL_RATE


def _as_2d(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[np.newaxis, :]
    if x.ndim != 2:
        raise ChannelMismatchError(f"expected 1-D or 2-D sample buffer, got ndim={x.ndim}")
    return x


def read_wav(path: str) -> tuple[np.ndarray, int]:
    """Read a PCM WAV file into a float64 (channels, samples) buffer.

    Accepts 16/24-bit integer and 32/64-bit float formats; 24-bit data
    arrives from scipy as int32.
    """
    try:
        rate, data = wavfile.read(path)
    except Exception as exc:
        raise UnreadableFileError(f"{path}: {exc}") from exc
    if data.ndim == 1:
        data = data[:, np.newaxis]
    data = data.T  # (channels, samples)
    if data.dtype == np.int16:
        out = data.astype(np.float64) / 32768.0
    elif data.dtype == np.int32:
        out = data.astype(np.float64) / 2147483648.0
    elif data.dtype in (np.float32, np.float64):
        out = data.astype(np.float64)
    elif data.dtype == np.uint8:
        out = (data.astype(np.float64) - 128.0) / 128.0
    else:
        raise UnreadableFileError(f"{path}: unsupported sample format {data.dtype}")
    return out, int(rate)


def write_wav(path: str, data: np.ndarray, sample_rate: int = CANONICAL_RATE) -> None:
    """Write a (channels, samples) float buffer as 16-bit PCM WAV."""
    data = _as_2d(data)
    clipped = np.clip(data, -1.0, 1.0)
    ints = np.round(clipped * 32767.0).astype(np.int16)
    wavfile.write(path, sample_rate, ints.T.copy())


def resample_to(x: np.ndarray, rate_in: int, rate_out: int) -> np.ndarray:
    """Polyphase windowed-sinc resampling (Kaiser-windowed kernel)."""
    if rate_in == rate_out:
        return x
    g = math.gcd(rate_in, rate_out)
    return resample_poly(x, rate_out // g, rate_in // g, axis=-1)


def estimate_delay(
    reference: np.ndarray,
    sut: np.ndarray,
    sample_rate: int,
    max_delay_ms: float = 250.0,
) -> tuple[int, float]:
    """Estimate the delay of sut relative to reference via cross-correlation.

    Returns (delay_samples, confidence). Positive delay means the sut
    content starts later than the reference. Confidence is the correlation
    peak normalized by the signal energies; silent inputs return (0, 1.0).
    """
    ref = _as_2d(reference).mean(axis=0)
    tst = _as_2d(sut).mean(axis=0)
    e_ref = float(np.dot(ref, ref))
    e_sut = float(np.dot(tst, tst))
    if e_ref == 0.0 and e_sut == 0.0:
        return 0, 1.0
    if e_ref == 0.0 or e_sut == 0.0:
        return 0, 0.0
    max_lag = int(round(max_delay_ms * 1e-3 * sample_rate))
    # full cross-correlation; lag k means sut is shifted k samples late
    corr = fftconvolve(tst, ref[::-1], mode="full")
    lags = np.arange(-(len(ref) - 1), len(tst))
    window = (lags >= -max_lag) & (lags <= max_lag)
    corr_w = corr[window]
    lags_w = lags[window]
    i = int(np.argmax(corr_w))
    confidence = float(corr_w[i] / math.sqrt(e_ref * e_sut))
    return int(lags_w[i]), confidence


def align(
    reference: np.ndarray,
    sut: np.ndarray,
    sample_rate: int,
    options: IngestOptions | None = None,
) -> tuple[np.ndarray, np.ndarray, int]:
    """Compensate the global delay between reference and sut.

    Trims the leading samples of the late signal and truncates both to
    the common overlapped length. Gain is left untouched: level errors
    are distortions and must stay measurable.
    """
    options = options or IngestOptions()
    ref = _as_2d(reference)
    tst = _as_2d(sut)
    if ref.shape[0] != tst.shape[0]:
        raise ChannelMismatchError(
            f"reference has {ref.shape[0]} channels, sut has {tst.shape[0]}"
        )
    delay, confidence = estimate_delay(ref, tst, sample_rate, options.max_delay_ms)
    if confidence < options.align_confidence_floor:
        raise AlignmentFailureError(
            f"correlation peak {confidence:.3f} below confidence floor "
            f"{options.align_confidence_floor}"
        )
    if delay > 0:
        tst = tst[:, delay:]
    elif delay < 0:
        ref = ref[:, -delay:]
    n = min(ref.shape[1], tst.shape[1])
    return ref[:, :n].copy(), tst[:, :n].copy(), delay


def load_pair(
    ref_path: str,
    sut_path: str,
    options: IngestOptions | None = None,
) -> AudioPair:
    """Load, resample, normalize, and align a reference/sut file pair."""
    options = options or IngestOptions()
    ref, rate_ref = read_wav(ref_path)
    tst, rate_sut = read_wav(sut_path)
    if rate_ref != rate_sut and not options.resample:
        raise SampleRateMismatchError(
            f"{rate_ref} Hz vs {rate_sut} Hz (pass resample=True to convert)"
        )
    if ref.shape[0] != tst.shape[0]:
        raise ChannelMismatchError(
            f"{ref_path} has {ref.shape[0]} channels, {sut_path} has {tst.shape[0]}"
        )
    target = options.target_rate
    if rate_ref != target:
        if not options.resample:
            raise SampleRateMismatchError(
                f"{rate_ref} Hz input, canonical rate is {target} Hz "
                "(pass resample=True to convert)"
            )
        ref = resample_to(ref, rate_ref, target)
    if rate_sut != target:
        if not options.resample:
            raise SampleRateMismatchError(
                f"{rate_sut} Hz input, canonical rate is {target} Hz "
                "(pass resample=True to convert)"
            )
        tst = resample_to(tst, rate_sut, target)
    # joint normalization preserves the ref/sut level relationship
    peak = max(float(np.max(np.abs(ref), initial=0.0)), float(np.max(np.abs(tst), initial=0.0)))
    if peak > 1.0:
        ref = ref / peak
        tst = tst / peak
    ref_a, tst_a, delay = align(ref, tst, target, options)
    return AudioPair(ref_a, tst_a, target, delay)


def segment(
    pair: AudioPair,
    segment_length: float = SEGMENT_SECONDS,
    tail_policy: str = "drop",
) -> SegmentPlan:
    """Plan non-overlapping fixed-length segments over the aligned region."""
    if tail_policy not in ("drop", "pad_zero"):
        raise ValueError(f"unknown tail_policy {tail_policy!r}")
    samples_per = int(round(segment_length * pair.sample_rate))
    if pair.n_samples < samples_per:
        raise TooShortError(
            f"{pair.duration:.3f} s of audio, need at least {segment_length} s"
        )
    if tail_policy == "drop":
        count = pair.n_samples // samples_per
    else:
        count = -(-pair.n_samples // samples_per)  # ceil
    return SegmentPlan(
        segment_length=segment_length,
        hop=segment_length,
        segment_count=int(count),
        tail_policy=tail_policy,
        sample_rate=pair.sample_rate,
        samples_per_segment=samples_per,
    )
