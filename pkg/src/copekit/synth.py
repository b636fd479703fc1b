"""Deterministic synthetic signals for demos and self-contained evaluation.

Three event families with distinct time-frequency layouts:

  * ``pips``    — a rising ladder of short tone bursts,
  * ``sweep``   — an amplitude-modulated descending exponential chirp,
  * ``stutter`` — a periodic train of band-limited noise bursts.

Per-instance parameters are jittered from a seeded generator so events of a
class share their peak layout without being identical. Backgrounds are white
noise or a babble-like sum of wandering, syllabically modulated voices.

``python -m copekit.synth OUT_DIR`` writes a small ready-to-run dataset
(prototype clips, a mixing plan, training/test scenes) for the CLI tutorial.
"""

from __future__ import annotations

import math
from pathlib import Path

import numpy as np

from .audio_io import AudioClip, GroundTruth, write_ground_truth, write_wav
from .mixer import MixEntry, MixPlan, mix_at_snr, write_plan

EVENT_CLASSES = ("pips", "sweep", "stutter")


def _taper(signal: np.ndarray, rate: int, edge_ms: float = 8.0) -> np.ndarray:
    edge = min(int(rate * edge_ms / 1000.0), len(signal) // 2)
    if edge > 0:
        ramp = 0.5 - 0.5 * np.cos(np.linspace(0.0, math.pi, edge))
        signal[:edge] *= ramp
        signal[-edge:] *= ramp[::-1]
    return signal


def tone(freq: float, duration_s: float, rate: int, amp: float = 0.8) -> np.ndarray:
    t = np.arange(int(duration_s * rate)) / rate
    return _taper(amp * np.sin(2.0 * math.pi * freq * t), rate)


def chirp(f0: float, f1: float, duration_s: float, rate: int, amp: float = 0.8) -> np.ndarray:
    """Exponential glide from f0 to f1."""
    n = int(duration_s * rate)
    t = np.arange(n) / rate
    k = (f1 / f0) ** (1.0 / duration_s)
    phase = 2.0 * math.pi * f0 * (k**t - 1.0) / math.log(k)
    return _taper(amp * np.sin(phase), rate)


def band_noise(lo: float, hi: float, duration_s: float, rate: int, rng, amp: float = 0.8):
    n = int(duration_s * rate)
    spectrum = np.fft.rfft(rng.standard_normal(n))
    freqs = np.fft.rfftfreq(n, 1.0 / rate)
    spectrum[(freqs < lo) | (freqs > hi)] = 0.0
    x = np.fft.irfft(spectrum, n)
    peak = np.max(np.abs(x))
    if peak > 0:
        x = amp * x / peak
    return _taper(x, rate)


def white_noise(duration_s: float, rate: int, rng, rms: float = 0.003) -> AudioClip:
    x = rng.standard_normal(int(duration_s * rate))
    x *= rms / np.sqrt(np.mean(x * x))
    return AudioClip(np.clip(x, -1.0, 1.0), rate)


def babble_noise(duration_s: float, rate: int, rng, rms: float = 0.003, voices: int = 8) -> AudioClip:
    """Speech-shaped hubbub: wandering tones with syllabic amplitude modulation."""
    n = int(duration_s * rate)
    t = np.arange(n) / rate
    x = np.zeros(n)
    for _ in range(voices):
        base = rng.uniform(120.0, 400.0)
        drift = rng.uniform(0.1, 0.5)
        wander = base * (1.0 + 0.3 * np.sin(2.0 * math.pi * drift * t + rng.uniform(0, 2 * math.pi)))
        phase = 2.0 * math.pi * np.cumsum(wander) / rate
        syllables = 0.5 + 0.5 * np.sin(
            2.0 * math.pi * rng.uniform(2.5, 5.0) * t + rng.uniform(0, 2 * math.pi)
        )
        for harmonic in (1, 2, 3):
            x += syllables * np.sin(harmonic * phase + rng.uniform(0, 2 * math.pi)) / harmonic
    x *= rms / np.sqrt(np.mean(x * x))
    return AudioClip(np.clip(x, -1.0, 1.0), rate)


def make_event(class_name: str, rate: int, rng) -> AudioClip:
    """One randomized instance of an event class, peak-normalized to 0.9.

    Events are kept under ~0.45 s so a 400 ms extractor support spans the
    whole peak layout.
    """
    if class_name == "pips":
        jitter = rng.uniform(0.94, 1.06)
        gap = np.zeros(int(rng.uniform(0.030, 0.040) * rate))
        parts = []
        for freq in (420.0, 840.0, 1680.0, 3360.0):
            parts.append(tone(freq * jitter, rng.uniform(0.06, 0.08), rate, amp=rng.uniform(0.7, 0.9)))
            parts.append(gap)
        x = np.concatenate(parts[:-1])
    elif class_name == "sweep":
        jitter = rng.uniform(0.92, 1.08)
        x = chirp(3200.0 * jitter, 340.0 * jitter, rng.uniform(0.40, 0.46), rate)
        t = np.arange(len(x)) / rate
        x *= 0.2 + 0.8 * (0.5 - 0.5 * np.cos(2.0 * math.pi * 10.0 * t))
    elif class_name == "stutter":
        jitter = rng.uniform(0.9, 1.1)
        burst_s = rng.uniform(0.040, 0.050)
        period = np.zeros(int(rng.uniform(0.032, 0.040) * rate))
        parts = []
        for _ in range(5):
            parts.append(band_noise(900.0 * jitter, 3800.0 * jitter, burst_s, rate, rng))
            parts.append(period)
        x = np.concatenate(parts[:-1])
    else:
        raise ValueError(f"unknown event class {class_name!r}")
    peak = np.max(np.abs(x))
    return AudioClip(0.9 * x / peak, rate)


def make_background(kind: str, duration_s: float, rate: int, rng, rms: float = 0.003) -> AudioClip:
    if kind == "white":
        return white_noise(duration_s, rate, rng, rms=rms)
    if kind == "babble":
        return babble_noise(duration_s, rate, rng, rms=rms)
    raise ValueError(f"unknown background kind {kind!r}")


def build_scene(events, snr_db: float, rate: int, rng, bg_kind: str, spacing_s: float = 3.5):
    """Mix labeled event clips onto one fresh background; returns a Scene pair.

    events: list of (AudioClip, label). Events are placed every ``spacing_s``
    seconds starting at 1 s.
    """
    duration = 1.0 + spacing_s * len(events) + 1.0
    bg = make_background(bg_kind, duration, rate, rng)
    clip = bg
    entries = []
    for k, (event, label) in enumerate(events):
        t0 = 1.0 + k * spacing_s
        clip, entry = mix_at_snr(clip, event, t0, snr_db, label)
        entries.append(entry)
    return clip, GroundTruth(tuple(entries))


def build_demo_dataset(out_dir, rate: int = 16000, seed: int = 0,
                       protos_per_class: int = 2, train_per_class: int = 6,
                       test_per_class: int = 4, snr_db: float = 20.0):
    """Write a miniature end-to-end dataset for the CLI tutorial.

    Layout under out_dir: prototypes/ (clean event wavs + protos.csv manifest),
    train/ and test/ (mixed scenes + ground truth + clips.csv manifests),
    plan.csv (the mixing plan that produced the test scene).
    """
    out_dir = Path(out_dir)
    rng = np.random.default_rng(seed)
    protos_dir = out_dir / "prototypes"
    train_dir = out_dir / "train"
    test_dir = out_dir / "test"
    events_dir = out_dir / "events"
    for d in (protos_dir, train_dir, test_dir, events_dir):
        d.mkdir(parents=True, exist_ok=True)

    manifest = []
    for cl in EVENT_CLASSES:
        for k in range(protos_per_class):
            clip = make_event(cl, rate, rng)
            path = protos_dir / f"{cl}_{k}.wav"
            write_wav(path, clip)
            manifest.append((str(path), cl))
    with open(protos_dir / "protos.csv", "w", encoding="utf-8") as fh:
        fh.write("path,label\n")
        for path, label in manifest:
            fh.write(f"{path},{label}\n")

    def write_scene(directory, name, events, bg_kind):
        clip, truth = build_scene(events, snr_db, rate, rng, bg_kind)
        wav_path = directory / f"{name}.wav"
        truth_path = directory / f"{name}.csv"
        write_wav(wav_path, clip)
        write_ground_truth(truth_path, truth)
        return wav_path, truth_path

    train_events = [
        (make_event(cl, rate, rng), cl) for cl in EVENT_CLASSES for _ in range(train_per_class)
    ]
    rng.shuffle(train_events)
    train_wav, train_truth = write_scene(train_dir, "train_scene", train_events, "white")
    with open(train_dir / "scenes.csv", "w", encoding="utf-8") as fh:
        fh.write("wav,truth\n")
        fh.write(f"{train_wav},{train_truth}\n")

    # the test scene goes through a written plan so `copekit mix` has input
    test_events = [
        (make_event(cl, rate, rng), cl) for cl in EVENT_CLASSES for _ in range(test_per_class)
    ]
    rng.shuffle(test_events)
    bg = make_background("babble", 2.0 + 3.5 * len(test_events), rate, rng)
    bg_path = test_dir / "background.wav"
    write_wav(bg_path, bg)
    entries = []
    for k, (event, label) in enumerate(test_events):
        ev_path = events_dir / f"test_event_{k}.wav"
        write_wav(ev_path, event)
        entries.append(MixEntry(event=str(ev_path), t0_s=1.0 + 3.5 * k, snr_db=snr_db, label=label))
    plan = MixPlan(background=str(bg_path), entries=tuple(entries), seed=seed)
    write_plan(out_dir / "plan.csv", [plan])
    return out_dir


def main(argv=None) -> int:
    import argparse

    parser = argparse.ArgumentParser(description="Generate the synthetic tutorial dataset.")
    parser.add_argument("out_dir")
    parser.add_argument("--rate", type=int, default=16000)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--snr-db", type=float, default=20.0)
    args = parser.parse_args(argv)
    build_demo_dataset(args.out_dir, rate=args.rate, seed=args.seed, snr_db=args.snr_db)
    print(f"wrote tutorial dataset under {args.out_dir}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
