"""One-vs-all linear soft-margin SVM with a reject rule.

Each binary scorer solves

    min_{w,b}  0.5*||w||^2 + c*J * sum_{pos} hinge_i + c * sum_{neg} hinge_i,
    hinge_i = max(0, 1 - y_i * (w . x_i + b)),   J = |N| / |P|,

so that errors on the outnumbered positive class weigh as much in total as
errors on the negatives. The solver is a deterministic dual coordinate
descent on the box-constrained dual with the equality constraint from the
unregularized bias: at every step the maximal-violating pair of coordinates
(deterministic index tie-break) takes an exact two-variable step, and
training stops when the relative duality gap drops below ``gap_tol`` or the
iteration cap (10000 + 100 * n_samples) is hit. The bias is the exact
minimizer of the primal objective given w, found by a breakpoint scan.

A multi-class model holds one scorer per class. A sample is assigned to the
highest-scoring class; when every score is strictly negative it falls into
the reject (background) class. Ties pick the lowest class index.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError, ValidationError
from .parallel import map_chunked

MODEL_MAGIC = "copekit svm v1"


@dataclass(frozen=True)
class LinearSvmModel:
    weights: np.ndarray
    bias: float
    class_id: str

    def __post_init__(self):
        weights = np.asarray(self.weights, dtype=np.float64)
        if weights.ndim != 1 or not np.all(np.isfinite(weights)) or not np.isfinite(self.bias):
            raise ValidationError("model weights and bias must be finite 1-D data")
        weights.flags.writeable = False
        object.__setattr__(self, "weights", weights)

    def score(self, v) -> float:
        return float(self.weights @ np.asarray(v, dtype=np.float64) + self.bias)


@dataclass(frozen=True)
class MultiClassModel:
    models: tuple
    classes: tuple
    c: float
    j_factors: tuple

    def __post_init__(self):
        if len(self.models) < 1 or len(self.models) != len(self.classes):
            raise ValidationError("need one binary model per class")
        dims = {len(m.weights) for m in self.models}
        if len(dims) != 1:
            raise ValidationError("inconsistent feature dimensions across classes")

    @property
    def dimension(self) -> int:
        return len(self.models[0].weights)

    def __len__(self) -> int:
        return len(self.models)


def _optimal_bias(w, X, y, costs):
    """Exact minimizer of the primal hinge term as a function of the bias.

    The objective is convex piecewise linear in b; the minimum sits at a
    breakpoint where the accumulated subgradient first becomes nonnegative.
    """
    margins = X @ w
    breakpoints = np.where(y > 0, 1.0 - margins, -(1.0 + margins))
    slope = -float(costs[y > 0].sum())
    order = np.argsort(breakpoints, kind="stable")
    b_star = float(breakpoints[order[0]])
    for idx in order:
        b_star = float(breakpoints[idx])
        slope += float(costs[idx])
        if slope >= 0:
            break
    return b_star


def _primal_objective(w, b, X, y, costs) -> float:
    hinge = np.maximum(0.0, 1.0 - y * (X @ w + b))
    return 0.5 * float(w @ w) + float(costs @ hinge)


def cost_factor(num_pos: int, num_neg: int) -> float:
    """Weight J on positive-class training errors: |N| / |P|."""
    if num_pos <= 0 or num_neg <= 0:
        raise ValidationError("both classes need at least one sample")
    return num_neg / num_pos


def train_binary(pos, neg, c: float = 1.0, gap_tol: float = 1e-4, max_iter: int | None = None):
    """Train one binary scorer on positive and negative feature rows.

    Deterministic: identical inputs produce bit-identical models.
    """
    pos = np.atleast_2d(np.asarray(pos, dtype=np.float64))
    neg = np.atleast_2d(np.asarray(neg, dtype=np.float64))
    if pos.size == 0 or neg.size == 0:
        raise ValidationError("both classes need at least one sample")
    if pos.shape[1] != neg.shape[1]:
        raise ValidationError("positive and negative samples disagree on dimension")
    if c <= 0:
        raise ValidationError("c must be positive")

    j_factor = cost_factor(pos.shape[0], neg.shape[0])
    X = np.vstack([pos, neg])
    y = np.concatenate([np.ones(len(pos)), -np.ones(len(neg))])
    costs = np.where(y > 0, c * j_factor, c)
    n = len(X)
    if max_iter is None:
        max_iter = 10_000 + 100 * n

    K = X @ X.T
    alpha = np.zeros(n)
    grad = -np.ones(n)  # gradient of 0.5 a'Qa - sum(a) at a = 0
    check_every = max(64, n)

    def current_primal_dual():
        w = (alpha * y) @ X
        b = _optimal_bias(w, X, y, costs)
        primal = _primal_objective(w, b, X, y, costs)
        dual = float(alpha.sum()) - 0.5 * float(w @ w)
        return w, b, primal, dual

    it = 0
    while it < max_iter:
        yg = -(y * grad)
        up = np.where(y > 0, alpha < costs, alpha > 0)
        low = np.where(y > 0, alpha > 0, alpha < costs)
        if not up.any() or not low.any():
            break
        up_scores = np.where(up, yg, -np.inf)
        low_scores = np.where(low, yg, np.inf)
        i = int(np.argmax(up_scores))
        j = int(np.argmin(low_scores))
        violation = up_scores[i] - low_scores[j]
        if violation <= 1e-12:
            break
        eta = max(K[i, i] + K[j, j] - 2.0 * K[i, j], 1e-12)
        delta = violation / eta
        delta = min(delta, costs[i] - alpha[i] if y[i] > 0 else alpha[i])
        delta = min(delta, alpha[j] if y[j] > 0 else costs[j] - alpha[j])
        if delta <= 0:
            break
        alpha[i] += y[i] * delta
        alpha[j] -= y[j] * delta
        grad += delta * y * (K[:, i] - K[:, j])
        it += 1
        if it % check_every == 0:
            _, _, primal, dual = current_primal_dual()
            if primal - dual <= gap_tol * max(1.0, abs(primal)):
                break

    w, b, _, _ = current_primal_dual()
    return LinearSvmModel(weights=w, bias=b, class_id="")


def train_ova(
    X, labels, c: float = 1.0, classes=None, background=None, threads: int = 1
) -> MultiClassModel:
    """One binary scorer per class (that class positive, the rest negative).

    ``background`` rows, when given, join the negative side of every scorer:
    the reject class has no scorer of its own, so background sounds are only
    ever rejected if each per-class boundary has seen them as negatives.
    """
    X = np.atleast_2d(np.asarray(X, dtype=np.float64))
    labels = [str(label) for label in labels]
    if len(labels) != len(X):
        raise ValidationError("one label per sample required")
    if classes is None:
        classes = tuple(sorted(set(labels)))
    else:
        classes = tuple(str(cl) for cl in classes)
    label_arr = np.array(labels)
    for cl in classes:
        if not np.any(label_arr == cl):
            raise ValidationError(f"class {cl!r} has no training samples")
    if background is not None and len(background):
        background = np.atleast_2d(np.asarray(background, dtype=np.float64))
        if background.shape[1] != X.shape[1]:
            raise ValidationError("background samples disagree on dimension")
    else:
        background = None

    def train_one(cl):
        mask = label_arr == cl
        neg = X[~mask] if background is None else np.vstack([X[~mask], background])
        model = train_binary(X[mask], neg, c=c)
        j_factor = cost_factor(int(mask.sum()), len(neg))
        return LinearSvmModel(weights=model.weights, bias=model.bias, class_id=cl), j_factor

    results = map_chunked(train_one, list(classes), threads)
    models = tuple(model for model, _ in results)
    j_factors = tuple(j for _, j in results)
    return MultiClassModel(models=models, classes=classes, c=float(c), j_factors=j_factors)


def scores(model: MultiClassModel, v) -> np.ndarray:
    v = np.asarray(getattr(v, "values", v), dtype=np.float64)
    if v.shape != (model.dimension,):
        raise ValidationError(
            f"feature vector of dimension {v.shape} does not match model ({model.dimension})"
        )
    return np.array([m.score(v) for m in model.models])


def decide(model: MultiClassModel, v):
    """Class label of the highest score, or None (reject) if all are negative."""
    s = scores(model, v)
    return decide_from_scores(model.classes, s)


def decide_from_scores(classes, s):
    s = np.asarray(s, dtype=np.float64)
    if np.all(s < 0):
        return None
    return classes[int(np.argmax(s))]


def save_model(path, model: MultiClassModel) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(MODEL_MAGIC + "\n")
        fh.write(f"c: {model.c!r}\n")
        fh.write(f"dimension: {model.dimension}\n")
        fh.write(f"classes: {len(model.classes)}\n")
        for m, j in zip(model.models, model.j_factors):
            weights = " ".join(repr(float(wi)) for wi in m.weights)
            fh.write(f"class\t{m.class_id}\t{j!r}\t{m.bias!r}\t{weights}\n")


def load_model(path) -> MultiClassModel:
    with open(path, encoding="utf-8") as fh:
        lines = [line.rstrip("\n") for line in fh if line.strip()]
    if not lines or lines[0] != MODEL_MAGIC:
        raise DataError(f"{path}: not a {MODEL_MAGIC!r} file")
    header = {}
    pos = 1
    while pos < len(lines) and not lines[pos].startswith("class\t"):
        key, _, value = lines[pos].partition(":")
        header[key.strip()] = value.strip()
        pos += 1
    try:
        c = float(header["c"])
        dim = int(header["dimension"])
        count = int(header["classes"])
    except (KeyError, ValueError) as exc:
        raise DataError(f"{path}: bad model header ({exc})") from exc
    models, classes, j_factors = [], [], []
    for line in lines[pos:]:
        fields = line.split("\t")
        if len(fields) != 5 or fields[0] != "class":
            raise DataError(f"{path}: bad class line {line!r}")
        label, j_text, bias_text, weight_text = fields[1:]
        weights = np.array([float(v) for v in weight_text.split()])
        if len(weights) != dim:
            raise DataError(f"{path}: class {label!r} has {len(weights)} weights, expected {dim}")
        models.append(LinearSvmModel(weights=weights, bias=float(bias_text), class_id=label))
        classes.append(label)
        j_factors.append(float(j_text))
    if len(models) != count:
        raise DataError(f"{path}: header promises {count} classes, found {len(models)}")
    return MultiClassModel(
        models=tuple(models), classes=tuple(classes), c=c, j_factors=tuple(j_factors)
    )
