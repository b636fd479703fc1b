"""Superimpose event clips onto backgrounds at a prescribed SNR.

The event is scaled so that, over its own time span, the ratio of scaled
event energy to background energy matches the target: given mean squared
amplitudes E_bg (background segment) and E_ev (event),

    alpha = sqrt(10^(snr_db / 10) * E_bg / E_ev).

Energies are measured over the event span only. The mixed signal is hard
peak-limited to [-1, 1] with a warning when limiting engages; silent
saturation would corrupt the realized SNR.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .audio_io import AudioClip, GroundTruth, read_wav, write_ground_truth, write_wav
from .errors import DataError, ValidationError

PLAN_HEADER = ("background", "event", "t0_s", "snr_db", "label", "seed")


def snr_scale(bg_energy: float, ev_energy: float, snr_db: float) -> float:
    """Amplitude factor that puts the event snr_db above the background."""
    if ev_energy <= 0:
        raise DataError("zero-energy event: SNR scaling undefined")
    if bg_energy <= 0:
        raise DataError("zero-energy background segment: SNR undefined")
    return math.sqrt(10.0 ** (snr_db / 10.0) * bg_energy / ev_energy)


def mix_at_snr(bg: AudioClip, ev: AudioClip, t0_s: float, snr_db: float, label: str):
    """Add the event into the background at t0_s; returns (clip, truth entry)."""
    if bg.sample_rate != ev.sample_rate:
        raise ValidationError("background and event sample rates differ; resample first")
    i0 = int(round(t0_s * bg.sample_rate))
    i1 = i0 + len(ev.samples)
    if i0 < 0 or i1 > len(bg.samples):
        raise ValidationError(
            f"event at {t0_s} s (+{ev.duration_s:.3f} s) does not fit the background"
        )
    segment = bg.samples[i0:i1]
    e_bg = float(np.mean(segment * segment))
    e_ev = float(np.mean(ev.samples * ev.samples))
    alpha = snr_scale(e_bg, e_ev, snr_db)

    mixed = bg.samples.copy()
    mixed[i0:i1] += alpha * ev.samples
    peak = float(np.max(np.abs(mixed)))
    if peak > 1.0:
        warnings.warn(
            f"mix peak {peak:.3f} exceeds full scale; hard-limiting to [-1, 1]",
            stacklevel=2,
        )
        np.clip(mixed, -1.0, 1.0, out=mixed)
    entry = (str(label), float(t0_s), float(t0_s) + ev.duration_s)
    return AudioClip(mixed, bg.sample_rate), entry


def measure_snr(mixed_segment, bg_segment) -> float:
    """Recover the event-to-background ratio from a mix and its background.

    Assumes additivity (uncorrelated event and background): the event energy
    is estimated as E_mixed - E_bg, so the result is approximate for
    correlated signals.
    """
    mixed = np.asarray(getattr(mixed_segment, "samples", mixed_segment), dtype=np.float64)
    bg = np.asarray(getattr(bg_segment, "samples", bg_segment), dtype=np.float64)
    if mixed.shape != bg.shape:
        raise ValidationError("segments must be aligned and of equal length")
    e_mixed = float(np.mean(mixed * mixed))
    e_bg = float(np.mean(bg * bg))
    if e_bg <= 0:
        raise DataError("background segment has no energy")
    e_ev = e_mixed - e_bg
    if e_ev <= 0:
        raise DataError("recovered event energy is not positive; cannot measure SNR")
    return 10.0 * math.log10(e_ev / e_bg)


@dataclass(frozen=True)
class MixEntry:
    event: str
    t0_s: float
    snr_db: float
    label: str


@dataclass(frozen=True)
class MixPlan:
    background: str
    entries: tuple
    seed: int = 0


def read_plan(path):
    """Read a plan CSV into MixPlans grouped by background, in file order."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty plan file") from None
        if tuple(h.strip() for h in header) != PLAN_HEADER:
            raise DataError(f"{path}: expected header {','.join(PLAN_HEADER)!r}")
        grouped: dict = {}
        seeds: dict = {}
        for row in reader:
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 6:
                raise DataError(f"{path}: bad plan row {row}")
            background, event, t0, snr, label, seed = row
            grouped.setdefault(background, []).append(
                MixEntry(event=event, t0_s=float(t0), snr_db=float(snr), label=label)
            )
            seeds[background] = int(seed)
    return [
        MixPlan(background=bg, entries=tuple(entries), seed=seeds[bg])
        for bg, entries in grouped.items()
    ]


def write_plan(path, plans) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(PLAN_HEADER)
        for plan in plans:
            for entry in plan.entries:
                writer.writerow(
                    [plan.background, entry.event, repr(entry.t0_s), repr(entry.snr_db),
                     entry.label, plan.seed]
                )


def execute_plan(plan: MixPlan, out_dir, loader=read_wav):
    """Mix every entry into the plan's background; write wav + truth CSV.

    Entries must not overlap in time. Returns (wav_path, truth_path).
    """
    events = {entry.event: loader(entry.event) for entry in plan.entries}
    spans = sorted((e.t0_s, e) for e in plan.entries)
    for (t0_a, a), (t0_b, _) in zip(spans, spans[1:]):
        if t0_b < t0_a + events[a.event].duration_s - 1e-9:
            raise ValidationError(
                f"plan events overlap: {a.event} at {t0_a} s runs past {t0_b} s"
            )
    clip = loader(plan.background)
    entries = []
    for entry in plan.entries:
        clip, truth_entry = mix_at_snr(
            clip, events[entry.event], entry.t0_s, entry.snr_db, entry.label
        )
        entries.append(truth_entry)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = Path(plan.background).stem
    wav_path = out_dir / f"{stem}_mixed.wav"
    truth_path = out_dir / f"{stem}_mixed.csv"
    write_wav(wav_path, clip)
    write_ground_truth(truth_path, GroundTruth(tuple(entries)))
    return wav_path, truth_path
