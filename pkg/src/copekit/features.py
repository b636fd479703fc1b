"""Trainable combination-of-energy-peaks feature extractors.

An extractor is configured from a single prototype sound: the peaks of its
energy matrix are anchored to a reference point (the highest peak), and peaks
inside a time support around that reference whose energy reaches a fraction
``t1`` of the reference energy become model tuples (dt, f, e), with dt the
signed frame offset from the reference.

At application time each model tuple i contributes, for every frame t,

    s_i(t) = max_{|t'|,|f'| <= ceil(3*sigma')} psi(t + dt_i + t', f_i + f')
             * exp(-(t'^2 + f'^2) / (2*sigma'^2)),        sigma' = sigma0 / 2,

where psi is the peak map of the sound under analysis (peak energy at peaks,
zero elsewhere; positions outside the matrix contribute zero). The extractor
response is the geometric mean r(t) = (prod_i s_i(t))^(1/L): it is maximal
when the whole constellation is found at its expected layout and exactly zero
as soon as any single expected peak has no candidate inside its tolerance
window. A feature value over an interval is the max of r(t) over the frames
whose start time lies in that interval, and a feature vector stacks one such
value per extractor in the bank.

``sigma0`` trades selectivity for tolerance to peak displacement caused by
noise; the model energies e_i are stored for forward compatibility with
alternative peak-similarity functions psi but are unused by the default one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DataError, ValidationError
from .gammatone import FilterbankSpec, Frontend, Gammatonegram
from .parallel import map_chunked
from .peaks import PeakConstellation, extract_peaks, reference_point

BANK_MAGIC = "copekit bank v1"


def support_half_width_frames(support_ms: float, frame_hop_s: float) -> int:
    """Frames on each side of the reference covered by a support of support_ms."""
    hop_ms = frame_hop_s * 1000.0
    return int(math.ceil((support_ms / 2.0) / hop_ms))


def tolerance_half_width(sigma0: float) -> int:
    """Integer half-width of the Gaussian search window, ceil(3 * sigma0/2)."""
    return int(math.ceil(3.0 * sigma0 / 2.0))


@dataclass(frozen=True)
class CopeExtractor:
    """Configured model: tuple offsets/channels/energies around a reference."""

    dts: np.ndarray
    fs: np.ndarray
    es: np.ndarray
    support_ms: float
    t1: float
    sigma0: float
    label: str
    frontend: Frontend

    def __post_init__(self):
        dts = np.asarray(self.dts, dtype=np.intp)
        fs = np.asarray(self.fs, dtype=np.intp)
        es = np.asarray(self.es, dtype=np.float64)
        if not (dts.shape == fs.shape == es.shape) or dts.ndim != 1 or len(dts) == 0:
            raise ValidationError("extractor needs at least one (dt, f, e) tuple")
        if not np.any(dts == 0):
            raise ValidationError("no tuple at dt=0: missing reference point")
        half = support_half_width_frames(self.support_ms, self.frontend.frame_hop_s)
        if np.max(np.abs(dts)) > half:
            raise ValidationError(f"tuple offset outside the +-{half} frame support")
        if np.any(es <= 0):
            raise ValidationError("tuple energies must be positive")
        if np.min(es) < self.t1 * np.max(es) - 1e-12:
            raise ValidationError("tuple energy below t1 * reference energy")
        if np.any(fs < 0) or np.any(fs >= self.frontend.spec.num_channels):
            raise ValidationError("tuple channel outside the filterbank")
        if not 0 <= self.t1 < 1:
            raise ValidationError("t1 must be in [0, 1)")
        if self.sigma0 <= 0:
            raise ValidationError("sigma0 must be positive")
        if self.support_ms <= 0:
            raise ValidationError("support_ms must be positive")
        order = np.lexsort((fs, dts))
        dts, fs, es = dts[order], fs[order], es[order]
        for arr in (dts, fs, es):
            arr.flags.writeable = False
        object.__setattr__(self, "dts", dts)
        object.__setattr__(self, "fs", fs)
        object.__setattr__(self, "es", es)

    def __len__(self) -> int:
        return len(self.dts)

    @property
    def tuples(self):
        return [(int(dt), int(f), float(e)) for dt, f, e in zip(self.dts, self.fs, self.es)]


@dataclass(frozen=True)
class CopeResponse:
    """Per-frame response of one extractor to one sound."""

    values: np.ndarray
    extractor_label: str
    frame_hop_s: float

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class CopeFeatureVector:
    values: np.ndarray
    interval: tuple
    bank_id: str = ""

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return len(self.values)


def configure(
    g: Gammatonegram,
    support_ms: float,
    t1: float,
    sigma0: float,
    label: str,
) -> CopeExtractor:
    """Configure an extractor from a prototype energy matrix."""
    if support_ms <= 0:
        raise ValidationError("support_ms must be positive")
    if not 0 <= t1 < 1:
        raise ValidationError("t1 must be in [0, 1)")
    if sigma0 <= 0:
        raise ValidationError("sigma0 must be positive")
    constellation = extract_peaks(g)
    if len(constellation) == 0:
        raise DataError(f"prototype {label!r} yields no energy peaks")
    t_ref, _, e_ref = reference_point(constellation)
    frontend = Frontend(spec=g.spec, frame_size=g.frame_size, normalize=g.normalized)
    half = support_half_width_frames(support_ms, frontend.frame_hop_s)
    keep = (np.abs(constellation.t - t_ref) <= half) & (
        constellation.e >= t1 * e_ref - 1e-12
    )
    if not np.any(keep):
        raise DataError(f"prototype {label!r}: no peaks survive the support/t1 filters")
    return CopeExtractor(
        dts=constellation.t[keep] - t_ref,
        fs=constellation.f[keep],
        es=constellation.e[keep],
        support_ms=float(support_ms),
        t1=float(t1),
        sigma0=float(sigma0),
        label=str(label),
        frontend=frontend,
    )


def shifted_peak_response(
    constellation: PeakConstellation,
    tup,
    t: int,
    sigma0: float,
) -> float:
    """Direct evaluation of one tuple's weighted-peak search at frame t.

    Reference implementation: scans the whole (2w+1)^2 window explicitly.
    The vectorized path in bank_responses must agree with this exactly.
    """
    if sigma0 <= 0:
        raise ValidationError("sigma0 must be positive")
    dt_i, f_i = int(tup[0]), int(tup[1])
    sigma = sigma0 / 2.0
    w = tolerance_half_width(sigma0)
    dense = constellation.to_map()
    channels, frames = constellation.dims
    best = 0.0
    for dt in range(-w, w + 1):
        for df in range(-w, w + 1):
            tt = t + dt_i + dt
            ff = f_i + df
            if 0 <= tt < frames and 0 <= ff < channels:
                value = dense[ff, tt]
                if value > 0:
                    weight = math.exp(-(dt * dt + df * df) / (2.0 * sigma * sigma))
                    best = max(best, value * weight)
    return best


def _weighted_dilation(dense: np.ndarray, sigma0: float, pad_t: int) -> np.ndarray:
    """Gaussian-weighted max-dilation of the peak map.

    Output column (tau + pad_t) holds, for every channel, the best weighted
    peak within the tolerance window centered at frame tau; tau ranges over
    [-pad_t, frames-1+pad_t] so shifted lookups near the borders stay exact.
    The 2-D max factorizes into a time pass then a channel pass because the
    Gaussian weight is separable and all values are nonnegative.
    """
    channels, frames = dense.shape
    sigma = sigma0 / 2.0
    w = tolerance_half_width(sigma0)
    offsets = np.arange(-w, w + 1)
    weights = np.exp(-(offsets.astype(np.float64) ** 2) / (2.0 * sigma * sigma))
    width = frames + 2 * pad_t

    padded = np.zeros((channels, width + 2 * w))
    padded[:, w + pad_t : w + pad_t + frames] = dense
    time_pass = np.zeros((channels, width))
    for k, dt in enumerate(range(-w, w + 1)):
        np.maximum(time_pass, padded[:, w + dt : w + dt + width] * weights[k], out=time_pass)

    padded2 = np.zeros((channels + 2 * w, width))
    padded2[w : w + channels] = time_pass
    out = np.zeros_like(time_pass)
    for k, df in enumerate(range(-w, w + 1)):
        np.maximum(out, padded2[w + df : w + df + channels] * weights[k], out=out)
    return out


def _check_compat(constellation: PeakConstellation, extractor: CopeExtractor) -> None:
    fe = extractor.frontend
    if constellation.frontend is not None:
        if not fe.compatible_with(constellation.frontend):
            raise ValidationError(
                "constellation and extractor come from different front-ends "
                f"(channels/frame/rate {constellation.frontend.spec.num_channels}/"
                f"{constellation.frontend.frame_size}/{constellation.frontend.spec.sample_rate}"
                f" vs {fe.spec.num_channels}/{fe.frame_size}/{fe.spec.sample_rate})"
            )
    elif constellation.dims[0] != fe.spec.num_channels:
        raise ValidationError(
            f"constellation has {constellation.dims[0]} channels, extractor expects "
            f"{fe.spec.num_channels}"
        )


def bank_responses(
    constellation: PeakConstellation,
    bank,
    threads: int = 1,
    t2: float = 0.0,
) -> list:
    """Responses of every extractor in the bank to one constellation.

    The weighted dilation of the peak map is shared across extractors with the
    same sigma0, so cost grows with bank size only through the cheap gather
    and geometric-mean stages. t2 is a response threshold kept at 0 (pass
    everything through), matching the configured operating point.
    """
    bank = list(bank)
    if not bank:
        raise ValidationError("empty extractor bank")
    for ex in bank:
        _check_compat(constellation, ex)
    channels, frames = constellation.dims
    dense = constellation.to_map()
    pad_t = int(max(int(np.max(np.abs(ex.dts))) for ex in bank))

    dilations = {}
    for ex in bank:
        if ex.sigma0 not in dilations:
            dilations[ex.sigma0] = _weighted_dilation(dense, ex.sigma0, pad_t)

    base = np.arange(frames)

    def one_extractor(ex):
        dilated = dilations[ex.sigma0]
        gathered = dilated[ex.fs[:, None], base[None, :] + (ex.dts[:, None] + pad_t)]
        positive = np.all(gathered > 0, axis=0)
        r = np.zeros(frames)
        if np.any(positive):
            r[positive] = np.exp(np.mean(np.log(gathered[:, positive]), axis=0))
        if t2 > 0:
            r[r < t2] = 0.0
        return CopeResponse(
            values=r, extractor_label=ex.label, frame_hop_s=ex.frontend.frame_hop_s
        )

    return map_chunked(one_extractor, bank, threads)


def response(constellation: PeakConstellation, extractor: CopeExtractor) -> CopeResponse:
    """Response of a single extractor (see bank_responses)."""
    return bank_responses(constellation, [extractor])[0]


def _frame_range(frame_hop_s: float, n_frames: int, t_start: float, t_end: float):
    if not t_start < t_end:
        raise ValidationError(f"need T1 < T2, got [{t_start}, {t_end}]")
    j0 = max(0, int(math.ceil(t_start / frame_hop_s - 1e-9)))
    j1 = min(n_frames - 1, int(math.floor(t_end / frame_hop_s + 1e-9)))
    if j1 < j0:
        raise ValidationError(
            f"interval [{t_start}, {t_end}] s contains no frame start"
        )
    return j0, j1


def pooled_value(resp: CopeResponse, t_start: float, t_end: float) -> float:
    """Max of the response over frames whose start time lies in [T1, T2]."""
    j0, j1 = _frame_range(resp.frame_hop_s, len(resp), t_start, t_end)
    return float(np.max(resp.values[j0 : j1 + 1]))


def extract_vector(
    constellation: PeakConstellation,
    bank,
    t_start: float,
    t_end: float,
    threads: int = 1,
    bank_id: str = "",
) -> CopeFeatureVector:
    """One pooled value per bank extractor over [T1, T2], in bank order."""
    responses = bank_responses(constellation, bank, threads=threads)
    values = np.array([pooled_value(r, t_start, t_end) for r in responses])
    return CopeFeatureVector(values=values, interval=(float(t_start), float(t_end)), bank_id=bank_id)


def vectors_for_intervals(
    constellation: PeakConstellation,
    bank,
    intervals,
    threads: int = 1,
    bank_id: str = "",
) -> list:
    """Feature vectors for many intervals of the same sound.

    Responses are computed once; only the pooling differs per interval. This
    is what makes sliding-window analysis affordable.
    """
    responses = bank_responses(constellation, bank, threads=threads)
    vectors = []
    for t_start, t_end in intervals:
        values = np.array([pooled_value(r, t_start, t_end) for r in responses])
        vectors.append(
            CopeFeatureVector(values=values, interval=(float(t_start), float(t_end)), bank_id=bank_id)
        )
    return vectors


def extract_vector_from_clip(clip, bank, threads: int = 1) -> CopeFeatureVector:
    """Whole pipeline for one clip: filterbank, peaks, responses, pooling."""
    bank = list(bank)
    if not bank:
        raise ValidationError("empty extractor bank")
    frontend = bank[0].frontend
    g = frontend.analyze(clip, threads=threads)
    constellation = extract_peaks(g)
    return extract_vector(
        constellation, bank, 0.0, clip.duration_s, threads=threads
    )


def configure_bank(prototypes, frontend: Frontend, support_ms, t1, sigma0, threads: int = 1):
    """Configure one extractor per (clip, label) prototype, in input order.

    Raises one error naming every prototype that yields no peaks.
    """
    bank = []
    failures = []
    for index, (clip, label) in enumerate(prototypes):
        g = frontend.analyze(clip, threads=threads)
        try:
            bank.append(configure(g, support_ms, t1, sigma0, label))
        except DataError as exc:
            failures.append(f"prototype {index} ({label}): {exc}")
    if failures:
        raise DataError("bank configuration failed: " + "; ".join(failures))
    return bank


def _bank_header(bank) -> dict:
    first = bank[0]
    for ex in bank[1:]:
        if not ex.frontend.compatible_with(first.frontend) or (
            ex.sigma0,
            ex.t1,
            ex.support_ms,
        ) != (first.sigma0, first.t1, first.support_ms):
            raise ValidationError("bank extractors disagree on front-end or parameters")
    spec = first.frontend.spec
    return {
        "sample_rate": spec.sample_rate,
        "channels": spec.num_channels,
        "f_min": spec.f_min,
        "f_max": spec.f_max,
        "order": spec.order,
        "q_ear": spec.q_ear,
        "b_min": spec.b_min,
        "p": spec.p,
        "ir_truncation_db": spec.ir_truncation_db,
        "frame_size": first.frontend.frame_size,
        "normalize": first.frontend.normalize,
        "sigma0": first.sigma0,
        "t1": first.t1,
        "support_ms": first.support_ms,
    }


def save_bank(path, bank) -> None:
    """Versioned UTF-8 bank file: header, then per-extractor tuple blocks."""
    bank = list(bank)
    if not bank:
        raise ValidationError("refusing to save an empty bank")
    header = _bank_header(bank)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(BANK_MAGIC + "\n")
        for key, value in header.items():
            fh.write(f"{key}: {value!r}\n")
        fh.write(f"extractors: {len(bank)}\n")
        for ex in bank:
            fh.write(f"extractor\t{ex.label}\t{len(ex)}\n")
            for dt, f, e in ex.tuples:
                fh.write(f"{dt},{f},{e!r}\n")


def load_bank(path):
    """Load and re-validate a bank file (all extractor invariants re-checked)."""
    with open(path, encoding="utf-8") as fh:
        lines = [line.rstrip("\n") for line in fh]
    if not lines or lines[0] != BANK_MAGIC:
        raise DataError(f"{path}: not a {BANK_MAGIC!r} file")
    header = {}
    pos = 1
    while pos < len(lines) and not lines[pos].startswith("extractor\t"):
        key, _, value = lines[pos].partition(":")
        header[key.strip()] = value.strip()
        pos += 1
    try:
        spec = FilterbankSpec(
            num_channels=int(header["channels"]),
            f_min=float(header["f_min"]),
            f_max=float(header["f_max"]),
            sample_rate=int(header["sample_rate"]),
            order=int(header["order"]),
            q_ear=float(header["q_ear"]),
            b_min=float(header["b_min"]),
            p=float(header["p"]),
            ir_truncation_db=float(header["ir_truncation_db"]),
        )
        frontend = Frontend(
            spec=spec,
            frame_size=int(header["frame_size"]),
            normalize=header["normalize"] == "True",
        )
        sigma0 = float(header["sigma0"])
        t1 = float(header["t1"])
        support_ms = float(header["support_ms"])
        count = int(header["extractors"])
    except (KeyError, ValueError) as exc:
        raise DataError(f"{path}: bad bank header ({exc})") from exc

    bank = []
    while pos < len(lines):
        line = lines[pos]
        pos += 1
        if not line.strip():
            continue
        parts = line.split("\t")
        if parts[0] != "extractor" or len(parts) != 3:
            raise DataError(f"{path}: expected extractor block, got {line!r}")
        label, length = parts[1], int(parts[2])
        dts, fs, es = [], [], []
        for _ in range(length):
            if pos >= len(lines):
                raise DataError(f"{path}: truncated tuple list for {label!r}")
            fields = lines[pos].split(",")
            pos += 1
            if len(fields) != 3:
                raise DataError(f"{path}: bad tuple line {lines[pos - 1]!r}")
            dts.append(int(fields[0]))
            fs.append(int(fields[1]))
            es.append(float(fields[2]))
        try:
            bank.append(
                CopeExtractor(
                    dts=np.array(dts, dtype=np.intp),
                    fs=np.array(fs, dtype=np.intp),
                    es=np.array(es),
                    support_ms=support_ms,
                    t1=t1,
                    sigma0=sigma0,
                    label=label,
                    frontend=frontend,
                )
            )
        except ValidationError as exc:
            raise DataError(f"{path}: extractor {label!r} violates invariants: {exc}") from exc
    if len(bank) != count:
        raise DataError(f"{path}: header promises {count} extractors, found {len(bank)}")
    return bank
