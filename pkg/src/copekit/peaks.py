"""Local energy maxima of the energy matrix: a sound's peak constellation.

A cell is a peak iff its energy is positive and strictly greater than all of
its 8-connected neighbors; border cells compare against in-bounds neighbors
only. Strictness means plateaus produce no peaks, so every peak is unique
within its neighborhood. Peak positions are unchanged by positive rescaling
of the matrix, which is what makes constellations robust to level changes.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import DataError, ValidationError


@dataclass(frozen=True)
class PeakConstellation:
    """Sparse peak set: parallel arrays (frame, channel, energy), sorted by (t, f)."""

    t: np.ndarray
    f: np.ndarray
    e: np.ndarray
    dims: tuple  # (channels, frames)
    frontend: object = None  # gammatone.Frontend when extracted from a real matrix

    def __post_init__(self):
        t = np.asarray(self.t, dtype=np.intp)
        f = np.asarray(self.f, dtype=np.intp)
        e = np.asarray(self.e, dtype=np.float64)
        if not (t.shape == f.shape == e.shape) or t.ndim != 1:
            raise ValidationError("t, f, e must be 1-D arrays of equal length")
        channels, frames = self.dims
        if len(t):
            if t.min() < 0 or t.max() >= frames or f.min() < 0 or f.max() >= channels:
                raise ValidationError("peak coordinates outside the matrix")
            if np.any(e <= 0):
                raise ValidationError("peak energies must be positive")
        order = np.lexsort((f, t))
        t, f, e = t[order], f[order], e[order]
        if len(t) > 1 and np.any((np.diff(t) == 0) & (np.diff(f) == 0)):
            raise ValidationError("duplicate peak positions")
        for arr in (t, f, e):
            arr.flags.writeable = False
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "f", f)
        object.__setattr__(self, "e", e)
        object.__setattr__(self, "dims", (int(channels), int(frames)))

    def __len__(self) -> int:
        return len(self.t)

    def to_map(self) -> np.ndarray:
        """Dense (channels, frames) matrix holding peak energies, zero elsewhere."""
        dense = np.zeros(self.dims)
        dense[self.f, self.t] = self.e
        return dense


def extract_peaks(matrix_or_gram) -> PeakConstellation:
    """Strict 8-neighbor maxima of an energy matrix (or Gammatonegram)."""
    frontend = None
    energies = getattr(matrix_or_gram, "energies", None)
    if energies is not None:
        from .gammatone import Frontend

        g = matrix_or_gram
        frontend = Frontend(spec=g.spec, frame_size=g.frame_size, normalize=g.normalized)
    else:
        energies = np.asarray(matrix_or_gram, dtype=np.float64)
    if energies.ndim != 2:
        raise ValidationError("expected a 2-D energy matrix")
    channels, frames = energies.shape

    padded = np.full((channels + 2, frames + 2), -np.inf)
    padded[1:-1, 1:-1] = energies
    mask = energies > 0
    for df in (-1, 0, 1):
        for dt in (-1, 0, 1):
            if df == 0 and dt == 0:
                continue
            mask &= energies > padded[1 + df : 1 + df + channels, 1 + dt : 1 + dt + frames]
    f_idx, t_idx = np.nonzero(mask)
    return PeakConstellation(
        t=t_idx,
        f=f_idx,
        e=energies[f_idx, t_idx],
        dims=(channels, frames),
        frontend=frontend,
    )


def reference_point(constellation: PeakConstellation):
    """Highest-energy peak; ties broken by smallest frame, then channel.

    Returns (t, f, e).
    """
    if len(constellation) == 0:
        raise DataError("constellation has no peaks")
    order = np.lexsort((constellation.f, constellation.t, -constellation.e))
    k = order[0]
    return int(constellation.t[k]), int(constellation.f[k]), float(constellation.e[k])


def write_constellation_csv(path, constellation: PeakConstellation) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t", "f", "e"])
        for t, f, e in zip(constellation.t, constellation.f, constellation.e):
            writer.writerow([int(t), int(f), repr(float(e))])
