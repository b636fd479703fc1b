"""Shared builders for cross-validation style tests."""

from copekit import synth
from copekit.evaluation import Scene
from copekit.synth import build_scene, make_event


def make_folds(k, rng, events_per_scene=4):
    """Tiny synthetic folds: one scene per fold, all three event classes."""
    rate = 16000
    folds = []
    for fold_idx in range(k):
        events = [
            (make_event(cl, rate, rng), cl)
            for cl in synth.EVENT_CLASSES
            for _ in range(events_per_scene // 2 + 1)
        ]
        clip, truth = build_scene(events, 20.0, rate, rng, "white", spacing_s=3.5)
        folds.append([Scene(clip=clip, truth=truth, key=f"scene{fold_idx}")])
    return tuple(folds)
