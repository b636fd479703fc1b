"""Gammatone filterbank front-end and the time-frequency energy matrix.

Each channel is a band-pass filter whose impulse response is a Gamma envelope
times a cosine carrier,

    h(t) = a * t^(n-1) * exp(-2*pi*B*t) * cos(2*pi*w*t + phi),   t >= 0,

realized as an FIR kernel truncated where the envelope has decayed
``ir_truncation_db`` below its peak. The decay factor B follows the
equivalent-rectangular-bandwidth rule

    B(w) = ((w / q_ear)^p + b_min^p)^(1/p)

and center frequencies are spaced uniformly on the matching ERB-rate scale,
so low channels are narrow and dense while high channels are wide and sparse.

The energy matrix ("gammatonegram") holds per-channel RMS energies over
half-overlapping frames of F samples: frame j covers samples
[j*F/2, j*F/2 + F - 1], giving floor(2(N-F)/F) + 1 frames for an N-sample
input. With ``normalize`` the matrix is divided by its global maximum, which
makes everything downstream invariant to the absolute input level.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.fft

from .audio_io import AudioClip
from .errors import DataError, ValidationError
from .parallel import chunk_bounds, map_chunked

GTG_MAGIC = b"GTGM"


@dataclass(frozen=True)
class FilterbankSpec:
    """Parameters that fully determine a Gammatone filterbank."""

    num_channels: int
    f_min: float
    f_max: float
    sample_rate: int
    order: int = 4
    q_ear: float = 9.26779
    b_min: float = 24.7
    p: float = 1.0
    ir_truncation_db: float = 60.0

    def __post_init__(self):
        if self.num_channels < 2:
            raise ValidationError("need at least 2 channels")
        if not 0 < self.f_min < self.f_max:
            raise ValidationError(f"need 0 < f_min < f_max, got {self.f_min}, {self.f_max}")
        if self.sample_rate <= 0:
            raise ValidationError("sample rate must be positive")
        if self.f_max > self.sample_rate / 2:
            raise ValidationError(
                f"f_max {self.f_max} Hz above Nyquist {self.sample_rate / 2} Hz"
            )
        if self.order < 1:
            raise ValidationError("filter order must be >= 1")
        if self.q_ear <= 0 or self.b_min <= 0 or self.p <= 0:
            raise ValidationError("q_ear, b_min and p must be positive")
        if self.ir_truncation_db <= 0:
            raise ValidationError("ir_truncation_db must be positive")


def erb_bandwidth(freq: float, spec: FilterbankSpec | None = None) -> float:
    """Equivalent rectangular bandwidth (Hz) at center frequency ``freq``."""
    if freq < 0:
        raise ValidationError("frequency must be nonnegative")
    q, b, p = (9.26779, 24.7, 1.0) if spec is None else (spec.q_ear, spec.b_min, spec.p)
    return float(((freq / q) ** p + b**p) ** (1.0 / p))


def _erb_rate(freq, q, b, p):
    # Integral of 1/B(f) from 0 to freq: the ERB-rate ("number of bands") scale.
    freq = np.asarray(freq, dtype=np.float64)
    if p == 1.0:
        return q * np.log1p(freq / (q * b))
    if p == 2.0:
        return q * np.arcsinh(freq / (q * b))
    grid = np.linspace(0.0, float(np.max(freq)), 200_001)
    inv = 1.0 / ((grid / q) ** p + b**p) ** (1.0 / p)
    cum = np.concatenate(([0.0], np.cumsum((inv[1:] + inv[:-1]) / 2 * np.diff(grid))))
    return np.interp(freq, grid, cum)


def _erb_rate_inverse(rate, q, b, p, f_hint):
    rate = np.asarray(rate, dtype=np.float64)
    if p == 1.0:
        return q * b * np.expm1(rate / q)
    if p == 2.0:
        return q * b * np.sinh(rate / q)
    grid = np.linspace(0.0, float(f_hint) * 1.01, 200_001)
    return np.interp(rate, _erb_rate(grid, q, b, p), grid)


def erb_space(spec: FilterbankSpec) -> np.ndarray:
    """Center frequencies spaced uniformly on the ERB-rate scale."""
    q, b, p = spec.q_ear, spec.b_min, spec.p
    lo, hi = _erb_rate(np.array([spec.f_min, spec.f_max]), q, b, p)
    rates = np.linspace(lo, hi, spec.num_channels)
    return _erb_rate_inverse(rates, q, b, p, spec.f_max)


@dataclass(frozen=True)
class GammatoneFilter:
    center_freq: float
    bandwidth: float
    gain: float
    phase: float
    impulse_response: np.ndarray

    def __post_init__(self):
        ir = np.asarray(self.impulse_response, dtype=np.float64)
        ir.flags.writeable = False
        object.__setattr__(self, "impulse_response", ir)


@dataclass(frozen=True)
class Filterbank:
    """Designed bank: defining parameters plus one FIR kernel per channel."""

    spec: FilterbankSpec
    filters: tuple

    def __len__(self):
        return len(self.filters)

    def __iter__(self):
        return iter(self.filters)

    def __getitem__(self, i):
        return self.filters[i]

    @property
    def center_freqs(self) -> np.ndarray:
        return np.array([f.center_freq for f in self.filters])


def _envelope_cutoff_s(bandwidth: float, order: int, trunc_db: float) -> float:
    # Find t_end after the envelope peak where t^(n-1) exp(-2 pi B t) has
    # fallen trunc_db below its maximum. Log-domain bisection; the envelope
    # is unimodal so the root beyond t_peak is unique.
    decay = 2.0 * math.pi * bandwidth
    if order == 1:
        return trunc_db * math.log(10.0) / 20.0 / decay
    m = order - 1
    t_peak = m / decay
    log_env = lambda t: m * math.log(t) - decay * t
    target = log_env(t_peak) - trunc_db * math.log(10.0) / 20.0
    hi = 2.0 * t_peak
    while log_env(hi) > target:
        hi *= 2.0
    lo = t_peak
    for _ in range(80):
        mid = (lo + hi) / 2.0
        if log_env(mid) > target:
            lo = mid
        else:
            hi = mid
    return hi


@lru_cache(maxsize=16)
def _design_cached(spec: FilterbankSpec) -> Filterbank:
    centers = erb_space(spec)
    rate = spec.sample_rate
    filters = []
    for w in centers:
        bw = erb_bandwidth(float(w), spec)
        t_end = _envelope_cutoff_s(bw, spec.order, spec.ir_truncation_db)
        length = max(int(math.ceil(t_end * rate)), 4)
        t = np.arange(length) / rate
        ir = t ** (spec.order - 1) * np.exp(-2.0 * math.pi * bw * t) * np.cos(
            2.0 * math.pi * w * t
        )
        nfft = 1 << max(17, (4 * length - 1).bit_length())
        peak = float(np.max(np.abs(np.fft.rfft(ir, nfft))))
        gain = 1.0 / peak
        filters.append(
            GammatoneFilter(
                center_freq=float(w),
                bandwidth=bw,
                gain=gain,
                phase=0.0,
                impulse_response=gain * ir,
            )
        )
    return Filterbank(spec=spec, filters=tuple(filters))


def design_filterbank(spec: FilterbankSpec) -> Filterbank:
    """Design the bank: ERB-spaced centers, unit peak frequency response."""
    return _design_cached(spec)


@lru_cache(maxsize=4)
def _transfer_functions(spec: FilterbankSpec, nfft: int) -> np.ndarray:
    """Stacked rfft of every channel kernel, zero-padded to nfft."""
    bank = _design_cached(spec)
    padded = np.zeros((len(bank), nfft))
    for i, filt in enumerate(bank):
        padded[i, : len(filt.impulse_response)] = filt.impulse_response
    transfers = scipy.fft.rfft(padded, n=nfft, axis=1)
    transfers.flags.writeable = False
    return transfers


def apply_filterbank(clip: AudioClip, bank: Filterbank, threads: int = 1) -> np.ndarray:
    """Convolve the clip with every channel kernel; rows are channels.

    Overlap-add with forward FFTs shared across channels; the block size is
    fixed by the kernel length, so the filter transfer functions are computed
    once per filterbank and reused across clips. Channels are split into
    contiguous groups, one per thread; every output sample is computed by the
    same expression regardless of the split, so results are bit-identical for
    any thread count. Output keeps the input length (the convolution tail is
    dropped).
    """
    if clip.sample_rate != bank.spec.sample_rate:
        raise ValidationError(
            f"clip rate {clip.sample_rate} != filterbank rate {bank.spec.sample_rate}; "
            "resample first"
        )
    x = clip.samples
    n = len(x)
    max_len = max(len(f.impulse_response) for f in bank.filters)
    nfft = 1 << max(12, (4 * max_len - 1).bit_length())
    transfers = _transfer_functions(bank.spec, nfft)
    step = nfft - (max_len - 1)
    starts = list(range(0, n, step))
    spectra = [scipy.fft.rfft(x[s : s + step], n=nfft) for s in starts]

    def channel_block(span):
        lo, hi = span
        rows = np.zeros((hi - lo, n))
        for start, spectrum in zip(starts, spectra):
            block = scipy.fft.irfft(transfers[lo:hi] * spectrum, n=nfft)
            stop = min(start + nfft, n)
            rows[:, start:stop] += block[:, : stop - start]
        return rows

    blocks = map_chunked(channel_block, chunk_bounds(len(bank), threads), threads)
    return np.vstack(blocks)


def frame_count(n_samples: int, frame_size: int) -> int:
    """Number of half-overlapping frames of ``frame_size`` in ``n_samples``."""
    if frame_size <= 0 or frame_size % 2:
        raise ValidationError("frame size must be a positive even number")
    if n_samples < frame_size:
        raise DataError(f"input of {n_samples} samples shorter than one frame ({frame_size})")
    return 2 * (n_samples - frame_size) // frame_size + 1


@dataclass(frozen=True)
class Gammatonegram:
    """Per-channel frame RMS energies with the front-end that produced them."""

    energies: np.ndarray  # (channels, frames), nonnegative
    frame_size: int
    spec: FilterbankSpec
    normalized: bool = True

    def __post_init__(self):
        e = np.asarray(self.energies, dtype=np.float64)
        if e.ndim != 2 or e.size == 0:
            raise ValidationError("energies must be a nonempty 2-D matrix")
        if np.any(e < 0):
            raise ValidationError("energies must be nonnegative")
        e.flags.writeable = False
        object.__setattr__(self, "energies", e)
        if self.frame_size <= 0 or self.frame_size % 2:
            raise ValidationError("frame size must be a positive even number")

    @property
    def num_channels(self) -> int:
        return self.energies.shape[0]

    @property
    def num_frames(self) -> int:
        return self.energies.shape[1]

    @property
    def hop(self) -> int:
        return self.frame_size // 2

    @property
    def frame_hop_s(self) -> float:
        return self.hop / self.spec.sample_rate

    def frame_start_s(self, j: int) -> float:
        return j * self.frame_hop_s


def gammatonegram(
    clip: AudioClip,
    spec: FilterbankSpec,
    frame_size: int,
    normalize: bool = True,
    threads: int = 1,
) -> Gammatonegram:
    """Filter the clip and reduce each channel to frame RMS energies."""
    n_frames = frame_count(len(clip.samples), frame_size)
    bank = design_filterbank(spec)
    filtered = apply_filterbank(clip, bank, threads=threads)
    hop = frame_size // 2

    def rms_block(span):
        lo, hi = span
        view = np.lib.stride_tricks.sliding_window_view(filtered[lo:hi], frame_size, axis=1)
        view = view[:, ::hop]
        # einsum reduces the strided view without materializing the squares
        return np.sqrt(np.einsum("ijk,ijk->ij", view, view) / frame_size)

    blocks = map_chunked(rms_block, chunk_bounds(len(filtered), threads), threads)
    energies = np.vstack(blocks)
    assert energies.shape[1] == n_frames
    if normalize:
        peak = energies.max()
        if peak > 0:
            energies = energies / peak
    return Gammatonegram(
        energies=energies, frame_size=frame_size, spec=spec, normalized=normalize
    )


@dataclass(frozen=True)
class Frontend:
    """Everything needed to turn a clip into a comparable energy matrix."""

    spec: FilterbankSpec
    frame_size: int
    normalize: bool = True

    def __post_init__(self):
        if self.frame_size <= 0 or self.frame_size % 2:
            raise ValidationError("frame size must be a positive even number")

    @property
    def frame_hop_s(self) -> float:
        return (self.frame_size // 2) / self.spec.sample_rate

    def analyze(self, clip: AudioClip, threads: int = 1) -> Gammatonegram:
        return gammatonegram(
            clip, self.spec, self.frame_size, normalize=self.normalize, threads=threads
        )

    def compatible_with(self, other: "Frontend") -> bool:
        # Channel count, frame size, and rate decide whether features computed
        # by the two front-ends can be compared at all.
        return (
            self.spec.num_channels == other.spec.num_channels
            and self.frame_size == other.frame_size
            and self.spec.sample_rate == other.spec.sample_rate
        )


def write_gammatonegram_csv(path, g: Gammatonegram) -> None:
    """Rows are channels low-to-high, columns frames."""
    np.savetxt(path, g.energies, delimiter=",", fmt="%.17g")


def write_gammatonegram_binary(path, g: Gammatonegram) -> None:
    """Little-endian binary: magic 'GTGM', u32 channels, frames, frame size,
    sample rate, then row-major float64 energies."""
    header = struct.pack(
        "<4sIIII",
        GTG_MAGIC,
        g.num_channels,
        g.num_frames,
        g.frame_size,
        g.spec.sample_rate,
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(g.energies.astype("<f8").tobytes(order="C"))


def read_gammatonegram_binary(path):
    """Read the binary form back as (energies, frame_size, sample_rate)."""
    with open(path, "rb") as fh:
        header = fh.read(20)
        if len(header) != 20 or header[:4] != GTG_MAGIC:
            raise DataError(f"{path}: not a gammatonegram binary file")
        _, channels, frames, frame_size, rate = struct.unpack("<4sIIII", header)
        payload = fh.read(channels * frames * 8)
    if len(payload) != channels * frames * 8:
        raise DataError(f"{path}: truncated gammatonegram payload")
    energies = np.frombuffer(payload, dtype="<f8").reshape(channels, frames)
    return energies, frame_size, rate
