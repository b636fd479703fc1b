"""WAV decoding, resampling, and ground-truth annotation files.

Clips are mono float64 in [-1, 1]. 16-bit PCM samples are mapped by division
by 32768, which makes an int16 write/read cycle bit-exact; stereo input is
averaged down to mono. Ground truth is UTF-8 CSV with the header
``label,start_s,end_s`` and ``.`` as decimal separator.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.io import wavfile

from .errors import DataError, ValidationError

INT16_SCALE = 32768.0

GROUND_TRUTH_HEADER = ("label", "start_s", "end_s")


@dataclass(frozen=True)
class AudioClip:
    """Immutable mono signal with its sample rate."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1 or samples.size == 0:
            raise ValidationError("clip must be a nonempty 1-D signal")
        if not np.all(np.isfinite(samples)):
            raise ValidationError("clip contains non-finite samples")
        if float(np.max(np.abs(samples))) > 1.0 + 1e-12:
            raise ValidationError("clip samples exceed [-1, 1]; normalize first")
        rate = int(self.sample_rate)
        if rate <= 0:
            raise ValidationError("sample rate must be a positive integer")
        samples.flags.writeable = False
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_rate", rate)

    @property
    def duration_s(self) -> float:
        return len(self.samples) / self.sample_rate

    def interval(self, start_s: float, end_s: float) -> "AudioClip":
        """Crop [start_s, end_s) to a new clip (bounds clamped to the signal)."""
        i0 = max(0, int(round(start_s * self.sample_rate)))
        i1 = min(len(self.samples), int(round(end_s * self.sample_rate)))
        if i1 <= i0:
            raise ValidationError(f"empty interval [{start_s}, {end_s}]")
        return AudioClip(self.samples[i0:i1].copy(), self.sample_rate)


@dataclass(frozen=True)
class GroundTruth:
    """Sorted, non-overlapping labeled intervals of one audio stream."""

    entries: tuple  # of (label: str, start_s: float, end_s: float)

    def __post_init__(self):
        entries = tuple(
            (str(label), float(start), float(end)) for label, start, end in self.entries
        )
        bad = [e for e in entries if not e[1] < e[2]]
        if bad:
            raise ValidationError(f"inverted or empty intervals: {bad}")
        entries = tuple(sorted(entries, key=lambda e: (e[1], e[2], e[0])))
        overlaps = [
            (a, b)
            for a, b in zip(entries, entries[1:])
            if b[1] < a[2] - 1e-9
        ]
        if overlaps:
            raise ValidationError(f"overlapping intervals: {overlaps}")
        object.__setattr__(self, "entries", entries)

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    @property
    def labels(self) -> tuple:
        return tuple(sorted({e[0] for e in self.entries}))


_PCM_SCALES = {
    np.dtype(np.int16): INT16_SCALE,
    np.dtype(np.int32): 2147483648.0,
    np.dtype(np.uint8): None,  # offset binary, handled separately
}


def read_wav(path) -> AudioClip:
    """Read a RIFF WAV file (PCM int or IEEE float) as a mono clip.

    Integer samples are scaled to [-1, 1] (int16 by 1/32768); stereo is
    averaged to mono; float files louder than full scale are peak-normalized.
    """
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", wavfile.WavFileWarning)
            rate, data = wavfile.read(path)
    except FileNotFoundError:
        raise
    except ValueError as exc:
        raise DataError(f"{path}: not a readable WAV file ({exc})") from exc
    if data.size == 0:
        raise DataError(f"{path}: empty WAV file")
    if data.ndim == 2 and data.shape[1] > 2:
        raise DataError(f"{path}: {data.shape[1]} channels unsupported (mono/stereo only)")

    dtype = data.dtype
    if dtype == np.uint8:
        samples = (data.astype(np.float64) - 128.0) / 128.0
    elif dtype in (np.dtype(np.int16), np.dtype(np.int32)):
        samples = data.astype(np.float64) / _PCM_SCALES[np.dtype(dtype)]
    elif dtype in (np.dtype(np.float32), np.dtype(np.float64)):
        samples = data.astype(np.float64)
        peak = float(np.max(np.abs(samples))) if samples.size else 0.0
        if peak > 1.0:
            samples = samples / peak
    else:
        raise DataError(f"{path}: unsupported sample format {dtype}")

    if samples.ndim == 2:
        samples = samples.mean(axis=1)
    return AudioClip(samples, int(rate))


def write_wav(path, clip: AudioClip, fmt: str = "int16") -> None:
    """Write a clip as 16-bit PCM (default) or IEEE float32 WAV."""
    if fmt == "int16":
        scaled = np.round(clip.samples * INT16_SCALE)
        data = np.clip(scaled, -32768, 32767).astype(np.int16)
    elif fmt == "float32":
        data = clip.samples.astype(np.float32)
    else:
        raise ValidationError(f"unsupported WAV format {fmt!r}")
    wavfile.write(path, clip.sample_rate, data)


def resample(clip: AudioClip, target_rate: int) -> AudioClip:
    """Linear-interpolation resampling; a no-op when the rates match.

    Deliberately low-fidelity but deterministic: downstream analysis uses
    coarse energy peaks, not fine spectral structure.
    """
    target_rate = int(target_rate)
    if target_rate <= 0:
        raise ValidationError("target rate must be positive")
    if target_rate == clip.sample_rate:
        return clip
    n_out = int(round(len(clip.samples) * target_rate / clip.sample_rate))
    n_out = max(n_out, 1)
    t_old = np.arange(len(clip.samples)) / clip.sample_rate
    t_new = np.arange(n_out) / target_rate
    out = np.interp(t_new, t_old, clip.samples)
    return AudioClip(out, target_rate)


def read_ground_truth(path) -> GroundTruth:
    """Parse and validate a ground-truth CSV, reporting all offending lines."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: missing header line") from None
        if tuple(h.strip() for h in header) != GROUND_TRUTH_HEADER:
            raise DataError(
                f"{path}: expected header {','.join(GROUND_TRUTH_HEADER)!r}, got {header}"
            )
        rows = []
        bad_lines = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 3:
                bad_lines.append(f"line {lineno}: expected 3 fields, got {len(row)}")
                continue
            label = row[0].strip()
            try:
                start, end = float(row[1]), float(row[2])
            except ValueError:
                bad_lines.append(f"line {lineno}: non-numeric interval {row[1:]}")
                continue
            if not start < end:
                bad_lines.append(f"line {lineno}: inverted interval {start} >= {end}")
                continue
            rows.append((label, start, end, lineno))
    rows.sort(key=lambda r: (r[1], r[2], r[0]))
    for a, b in zip(rows, rows[1:]):
        if b[1] < a[2] - 1e-9:
            bad_lines.append(f"lines {a[3]} and {b[3]}: overlapping intervals")
    if bad_lines:
        raise ValidationError(f"{path}: invalid ground truth: " + "; ".join(bad_lines))
    return GroundTruth(tuple((label, s, e) for label, s, e, _ in rows))


def write_ground_truth(path, truth: GroundTruth) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(GROUND_TRUTH_HEADER)
        for label, start, end in truth:
            writer.writerow([label, repr(float(start)), repr(float(end))])
