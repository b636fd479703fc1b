"""Windowed detection protocol, event metrics, trade-off curves, cross-validation.

A time window of ``window_s`` seconds slides over the stream in steps of
``hop_s``; each window is classified from its pooled feature vector. Event
accounting is event-level:

  * detected (RR): at least one window overlapping the event decides its class;
  * misclassified (ER): no window decides correctly but at least one decides a
    wrong non-reject class (attributed to the first such window's class);
  * missed (MDR): every overlapping window rejects (or no window overlaps).

Non-reject decisions in windows overlapping no event are false positives; a
run of consecutive false-positive windows counts once, and the false positive
rate divides that collapsed count by the number of background-only windows.
"Overlap" means a strictly positive temporal intersection.

Precision/recall/F are event-level: TP = detected events, FN = missed +
misclassified events, FP = misclassified events + collapsed background
false positives.

Trade-off curves sweep an additive offset on the reject boundary: a window
rejects iff its best score falls below the threshold. Curve false-positive
rates are per-window (uncollapsed) so that the miss/false-positive trade-off
is monotone in the threshold by construction; the collapsed-run count remains
the reported operating-point metric above.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, replace

import numpy as np

from .audio_io import AudioClip, GroundTruth
from .classifier import MultiClassModel, decide_from_scores, train_ova
from .errors import ValidationError
from .features import configure_bank, vectors_for_intervals
from .peaks import extract_peaks

OVERLAP_EPS = 1e-9


@dataclass(frozen=True)
class DetectionRecord:
    index: int
    start_s: float
    end_s: float
    decision: object  # class label or None for reject
    scores: np.ndarray

    def __post_init__(self):
        scores = np.asarray(self.scores, dtype=np.float64)
        scores.flags.writeable = False
        object.__setattr__(self, "scores", scores)


def window_intervals(duration_s: float, window_s: float, hop_s: float):
    """Start/end times of every window fully inside [0, duration_s]."""
    if not window_s >= hop_s > 0:
        raise ValidationError("need window_s >= hop_s > 0")
    count = int(math.floor((duration_s - window_s) / hop_s + OVERLAP_EPS)) + 1
    if duration_s < window_s:
        count = 0
    return [(k * hop_s, k * hop_s + window_s) for k in range(count)]


def sliding_detection(
    stream: AudioClip,
    bank,
    model: MultiClassModel,
    window_s: float,
    hop_s: float,
    threads: int = 1,
):
    """Classify every sliding window of the stream; returns DetectionRecords."""
    intervals = window_intervals(stream.duration_s, window_s, hop_s)
    if not intervals:
        warnings.warn(
            f"stream of {stream.duration_s:.3f} s shorter than one {window_s} s window",
            stacklevel=2,
        )
        return []
    bank = list(bank)
    if len(bank) != model.dimension:
        raise ValidationError(
            f"bank size {len(bank)} does not match model dimension {model.dimension}"
        )
    frontend = bank[0].frontend
    g = frontend.analyze(stream, threads=threads)
    constellation = extract_peaks(g)
    vectors = vectors_for_intervals(constellation, bank, intervals, threads=threads)
    records = []
    for k, ((t0, t1), vec) in enumerate(zip(intervals, vectors)):
        s = np.array([m.score(vec.values) for m in model.models])
        records.append(
            DetectionRecord(
                index=k,
                start_s=t0,
                end_s=t1,
                decision=decide_from_scores(model.classes, s),
                scores=s,
            )
        )
    return records


@dataclass(frozen=True)
class MetricsReport:
    """Event-level counts; the rates are derived views of them."""

    classes: tuple
    confusion: np.ndarray  # rows: true class; columns: decided classes + reject
    fp_count: int  # collapsed background false-positive runs
    fp_windows: int  # uncollapsed background false-positive windows
    bg_windows: int
    n_windows: int

    def __post_init__(self):
        confusion = np.asarray(self.confusion, dtype=np.int64)
        m = len(self.classes)
        if confusion.shape != (m, m + 1):
            raise ValidationError(f"confusion must be {m}x{m + 1}")
        confusion.flags.writeable = False
        object.__setattr__(self, "confusion", confusion)

    @property
    def n_events(self) -> int:
        return int(self.confusion.sum())

    def _counts(self):
        m = len(self.classes)
        correct = int(np.trace(self.confusion[:, :m]))
        missed = int(self.confusion[:, m].sum())
        wrong = self.n_events - correct - missed
        return correct, wrong, missed

    @property
    def recognition_rate(self):
        correct, _, _ = self._counts()
        return correct / self.n_events if self.n_events else None

    @property
    def error_rate(self):
        _, wrong, _ = self._counts()
        return wrong / self.n_events if self.n_events else None

    @property
    def miss_rate(self):
        _, _, missed = self._counts()
        return missed / self.n_events if self.n_events else None

    @property
    def false_positive_rate(self):
        return self.fp_count / self.bg_windows if self.bg_windows else 0.0

    def per_class_rates(self):
        """Rows of (rr, er, mdr) per true class; rr + er + mdr = 1 per class."""
        m = len(self.classes)
        out = {}
        for i, cl in enumerate(self.classes):
            total = int(self.confusion[i].sum())
            if total == 0:
                out[cl] = None
                continue
            correct = int(self.confusion[i, i])
            missed = int(self.confusion[i, m])
            out[cl] = (
                correct / total,
                (total - correct - missed) / total,
                missed / total,
            )
        return out

    def _prf(self):
        correct, wrong, missed = self._counts()
        tp = correct
        fp = wrong + self.fp_count
        fn = missed + wrong
        precision = tp / (tp + fp) if tp + fp else None
        recall = tp / (tp + fn) if tp + fn else None
        if precision is None or recall is None or precision + recall == 0:
            return precision, recall, None
        return precision, recall, 2 * precision * recall / (precision + recall)

    @property
    def precision(self):
        return self._prf()[0]

    @property
    def recall(self):
        return self._prf()[1]

    @property
    def f_measure(self):
        return self._prf()[2]


def _overlapping(records, start_s, end_s):
    return [
        r
        for r in records
        if min(r.end_s, end_s) - max(r.start_s, start_s) > OVERLAP_EPS
    ]


def score_events(records, truth: GroundTruth, classes) -> MetricsReport:
    """Event-level accounting of a record list against its ground truth."""
    classes = tuple(classes)
    index = {cl: i for i, cl in enumerate(classes)}
    m = len(classes)
    unknown = sorted({label for label, _, _ in truth if label not in index})
    if unknown:
        raise ValidationError(f"ground-truth labels not in the class set: {unknown}")

    confusion = np.zeros((m, m + 1), dtype=np.int64)
    event_windows = set()
    for label, start, end in truth:
        over = _overlapping(records, start, end)
        event_windows.update(r.index for r in over)
        row = index[label]
        decisions = [r.decision for r in over]
        if label in decisions:
            confusion[row, index[label]] += 1
        else:
            wrong = next((d for d in decisions if d is not None), None)
            if wrong is None:
                confusion[row, m] += 1  # missed: every overlapping window rejected
            else:
                confusion[row, index[wrong]] += 1

    bg = [r for r in records if r.index not in event_windows]
    fp_flags = {r.index for r in bg if r.decision is not None}
    fp_runs = sum(1 for idx in fp_flags if idx - 1 not in fp_flags)
    return MetricsReport(
        classes=classes,
        confusion=confusion,
        fp_count=fp_runs,
        fp_windows=len(fp_flags),
        bg_windows=len(bg),
        n_windows=len(records),
    )


def merge_reports(reports) -> MetricsReport:
    """Sum event and window counts across streams (runs never span streams)."""
    reports = list(reports)
    if not reports:
        raise ValidationError("nothing to merge")
    classes = reports[0].classes
    if any(r.classes != classes for r in reports):
        raise ValidationError("reports disagree on the class set")
    return MetricsReport(
        classes=classes,
        confusion=sum(r.confusion for r in reports),
        fp_count=sum(r.fp_count for r in reports),
        fp_windows=sum(r.fp_windows for r in reports),
        bg_windows=sum(r.bg_windows for r in reports),
        n_windows=sum(r.n_windows for r in reports),
    )


def report_to_dict(report: MetricsReport) -> dict:
    per_class = {
        cl: None if rates is None else {"rr": rates[0], "er": rates[1], "mdr": rates[2]}
        for cl, rates in report.per_class_rates().items()
    }
    return {
        "classes": list(report.classes),
        "rates": {
            "rr": report.recognition_rate,
            "er": report.error_rate,
            "mdr": report.miss_rate,
            "fpr": report.false_positive_rate,
        },
        "per_class": per_class,
        "precision": report.precision,
        "recall": report.recall,
        "f_measure": report.f_measure,
        "confusion": report.confusion.tolist(),
        "counts": {
            "events": report.n_events,
            "windows": report.n_windows,
            "background_windows": report.bg_windows,
            "false_positive_runs": report.fp_count,
            "false_positive_windows": report.fp_windows,
        },
    }


def report_to_json(report: MetricsReport) -> str:
    return json.dumps(report_to_dict(report), indent=2, sort_keys=True, allow_nan=False)


def report_to_table(report: MetricsReport) -> str:
    lines = ["class        rr       er       mdr"]
    for cl, rates in report.per_class_rates().items():
        if rates is None:
            lines.append(f"{cl:<12} (no events)")
        else:
            lines.append(f"{cl:<12} {rates[0]:<8.4f} {rates[1]:<8.4f} {rates[2]:<8.4f}")
    rr = report.recognition_rate
    if rr is None:
        lines.append("overall      n/a (no events)")
    else:
        lines.append(
            f"{'overall':<12} {rr:<8.4f} {report.error_rate:<8.4f} {report.miss_rate:<8.4f}"
        )
    lines.append(f"fpr          {report.false_positive_rate:.4f} ({report.fp_count} runs"
                 f" / {report.bg_windows} background windows)")
    return "\n".join(lines)


@dataclass(frozen=True)
class CurvePoints:
    kind: str  # "det" or "roc"
    points: tuple  # of (threshold, x, y)

    def thresholds(self):
        return [p[0] for p in self.points]


def _redecide(record: DetectionRecord, classes, threshold: float):
    if len(record.scores) == 0 or float(np.max(record.scores)) < threshold:
        return None
    return classes[int(np.argmax(record.scores))]


def _curve_rates(records, truth, classes, threshold):
    shifted = [replace(r, decision=_redecide(r, classes, threshold)) for r in records]
    report = score_events(shifted, truth, classes)
    fpr = report.fp_windows / report.bg_windows if report.bg_windows else 0.0
    mdr = report.miss_rate if report.n_events else 0.0
    er = report.error_rate if report.n_events else 0.0
    return fpr, mdr, er


def det_curve(records, truth: GroundTruth, classes, thresholds) -> CurvePoints:
    """Miss rate vs per-window false-positive rate across reject thresholds."""
    thresholds = sorted(float(t) for t in thresholds)
    if len(thresholds) < 2:
        raise ValidationError("need at least 2 thresholds")
    points = []
    for theta in thresholds:
        fpr, mdr, _ = _curve_rates(records, truth, classes, theta)
        points.append((theta, fpr, mdr))
    return CurvePoints(kind="det", points=tuple(points))


def roc_curve(records, truth: GroundTruth, classes, thresholds) -> CurvePoints:
    """Detection rate (1 - mdr - er) vs per-window false-positive rate."""
    thresholds = sorted(float(t) for t in thresholds)
    if len(thresholds) < 2:
        raise ValidationError("need at least 2 thresholds")
    points = []
    for theta in thresholds:
        fpr, mdr, er = _curve_rates(records, truth, classes, theta)
        points.append((theta, fpr, 1.0 - mdr - er))
    return CurvePoints(kind="roc", points=tuple(points))


def write_curve_csv(path, curve: CurvePoints) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("threshold,x,y\n")
        for theta, x, y in curve.points:
            fh.write(f"{theta!r},{x!r},{y!r}\n")


def write_curve_svg(path, curve: CurvePoints, size: int = 480) -> None:
    """Minimal standalone SVG; log-log axes for the miss/false-positive curve."""
    margin, floor = 48, 1e-4
    log_axes = curve.kind == "det"

    def project(value):
        if log_axes:
            v = math.log10(max(value, floor))
            lo, hi = math.log10(floor), 0.0
        else:
            v, lo, hi = value, 0.0, 1.0
        return (v - lo) / (hi - lo)

    def to_px(x, y):
        px = margin + project(x) * (size - 2 * margin)
        py = size - margin - project(y) * (size - 2 * margin)
        return f"{px:.2f},{py:.2f}"

    pts = " ".join(to_px(x, y) for _, x, y in curve.points)
    ticks = []
    tick_values = [10.0**k for k in range(-4, 1)] if log_axes else [0.0, 0.25, 0.5, 0.75, 1.0]
    for tv in tick_values:
        tx = margin + project(tv) * (size - 2 * margin)
        ty = size - margin - project(tv) * (size - 2 * margin)
        label = f"{tv:g}"
        ticks.append(
            f'<line x1="{tx:.1f}" y1="{size - margin}" x2="{tx:.1f}" y2="{size - margin + 5}" stroke="black"/>'
            f'<text x="{tx:.1f}" y="{size - margin + 18}" font-size="10" text-anchor="middle">{label}</text>'
            f'<line x1="{margin - 5}" y1="{ty:.1f}" x2="{margin}" y2="{ty:.1f}" stroke="black"/>'
            f'<text x="{margin - 8}" y="{ty + 3:.1f}" font-size="10" text-anchor="end">{label}</text>'
        )
    xlabel = "false positive rate"
    ylabel = "miss rate" if curve.kind == "det" else "detection rate"
    svg = (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}">\n'
        f'<rect width="{size}" height="{size}" fill="white"/>\n'
        f'<rect x="{margin}" y="{margin}" width="{size - 2 * margin}" height="{size - 2 * margin}" '
        'fill="none" stroke="black"/>\n'
        + "\n".join(ticks)
        + f'\n<polyline points="{pts}" fill="none" stroke="crimson" stroke-width="1.5"/>\n'
        f'<text x="{size / 2}" y="{size - 8}" font-size="12" text-anchor="middle">{xlabel}</text>\n'
        f'<text x="14" y="{size / 2}" font-size="12" text-anchor="middle" '
        f'transform="rotate(-90 14 {size / 2})">{ylabel}</text>\n'
        "</svg>\n"
    )
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(svg)


def nb_variance(per_fold_values, n_test: int, n_train: int) -> float:
    """Cross-validation variance corrected for train/test overlap:
    (1/k + n_test/n_train) * unbiased sample variance."""
    values = np.asarray(list(per_fold_values), dtype=np.float64)
    if len(values) < 2:
        raise ValidationError("need at least 2 fold values")
    if n_test <= 0 or n_train <= 0:
        raise ValidationError("fold sizes must be positive")
    s2 = float(np.var(values, ddof=1))
    return (1.0 / len(values) + n_test / n_train) * s2


@dataclass(frozen=True)
class Scene:
    """One evaluation stream with its annotation."""

    clip: AudioClip
    truth: GroundTruth
    key: str = ""


@dataclass(frozen=True)
class CrossValidationResult:
    fold_reports: tuple
    aggregate: MetricsReport
    er_mean: float
    er_nb_std: float
    fpr_mean: float
    fpr_nb_std: float


def _scene_events(scenes):
    events = []
    for scene in scenes:
        for label, start, end in scene.truth:
            events.append((scene, label, start, end))
    return events


def background_windows(duration_s, truth, window_s, hop_s, cap: int = 40):
    """Sliding windows overlapping no event, evenly thinned to at most cap."""
    intervals = [
        (t0, t1)
        for t0, t1 in window_intervals(duration_s, window_s, hop_s)
        if all(min(t1, end) - max(t0, start) <= OVERLAP_EPS for _, start, end in truth)
    ]
    if len(intervals) > cap:
        idx = np.linspace(0, len(intervals) - 1, cap).round().astype(int)
        intervals = [intervals[i] for i in idx]
    return intervals


def _analyzed(scene: Scene, frontend, threads, cache):
    key = scene.key or f"@{id(scene.clip)}"
    if cache is not None and key in cache:
        return cache[key]
    g = frontend.analyze(scene.clip, threads=threads)
    constellation = extract_peaks(g)
    if cache is not None:
        cache[key] = (g, constellation)
    return g, constellation


def cross_validate(
    folds,
    config,
    protos_per_class: int = 2,
    threads: int = 1,
    cache: dict | None = None,
) -> CrossValidationResult:
    """Rotate over folds of Scenes: configure, train, evaluate, aggregate.

    For every rotation the extractor bank is configured on the first
    ``protos_per_class`` training events of each class (cropped from their
    streams), the classifier is trained on all training events, and the
    held-out fold is scored with the sliding-window protocol.
    """
    folds = [list(fold) for fold in folds]
    if len(folds) < 2:
        raise ValidationError("need at least 2 folds")
    frontend = config.frontend()
    classes = sorted(
        {label for fold in folds for scene in fold for label, _, _ in scene.truth}
    )
    fold_reports = []
    er_values, fpr_values = [], []
    n_test_events, n_train_events = [], []
    for held_out in range(len(folds)):
        train_scenes = [s for k, fold in enumerate(folds) if k != held_out for s in fold]
        test_scenes = folds[held_out]
        train_events = _scene_events(train_scenes)
        for cl in classes:
            if not any(label == cl for _, label, _, _ in train_events):
                raise ValidationError(f"fold rotation {held_out}: class {cl!r} missing in training")

        protos = []
        for cl in classes:
            of_class = [ev for ev in train_events if ev[1] == cl][:protos_per_class]
            for scene, label, start, end in of_class:
                protos.append((scene.clip.interval(start, end), label))
        bank = configure_bank(
            protos, frontend, config.cope.support_ms, config.cope.t1, config.cope.sigma0,
            threads=threads,
        )

        rows, labels, bg_rows = [], [], []
        for scene in train_scenes:
            _, constellation = _analyzed(scene, frontend, threads, cache)
            event_intervals = [(start, end) for _, start, end in scene.truth]
            bg_intervals = background_windows(
                scene.clip.duration_s, scene.truth, config.eval.window_s, config.eval.hop_s
            )
            vectors = vectors_for_intervals(
                constellation, bank, event_intervals + bg_intervals, threads=threads
            )
            for (label, _, _), vec in zip(scene.truth, vectors):
                rows.append(vec.values)
                labels.append(label)
            bg_rows.extend(vec.values for vec in vectors[len(event_intervals):])
        model = train_ova(
            np.vstack(rows),
            labels,
            c=config.svm.c,
            classes=classes,
            background=np.vstack(bg_rows) if bg_rows else None,
        )

        reports = []
        for scene in test_scenes:
            _, constellation = _analyzed(scene, frontend, threads, cache)
            intervals = window_intervals(scene.clip.duration_s, config.eval.window_s, config.eval.hop_s)
            vectors = vectors_for_intervals(constellation, bank, intervals, threads=threads)
            records = []
            for k, ((t0, t1), vec) in enumerate(zip(intervals, vectors)):
                s = np.array([m.score(vec.values) for m in model.models])
                records.append(
                    DetectionRecord(k, t0, t1, decide_from_scores(model.classes, s), s)
                )
            reports.append(score_events(records, scene.truth, classes))
        fold_report = merge_reports(reports)
        fold_reports.append(fold_report)
        er_values.append(fold_report.error_rate if fold_report.n_events else 0.0)
        fpr_values.append(fold_report.false_positive_rate)
        n_test_events.append(sum(len(s.truth) for s in test_scenes))
        n_train_events.append(len(train_events))

    aggregate = merge_reports(fold_reports)
    n_test = max(1, int(round(float(np.mean(n_test_events)))))
    n_train = max(1, int(round(float(np.mean(n_train_events)))))
    return CrossValidationResult(
        fold_reports=tuple(fold_reports),
        aggregate=aggregate,
        er_mean=float(np.mean(er_values)),
        er_nb_std=math.sqrt(nb_variance(er_values, n_test, n_train)),
        fpr_mean=float(np.mean(fpr_values)),
        fpr_nb_std=math.sqrt(nb_variance(fpr_values, n_test, n_train)),
    )
