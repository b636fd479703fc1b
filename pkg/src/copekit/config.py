"""Pipeline configuration: every paper-gap default lives here, overridable.

The JSON form round-trips losslessly and groups fields the way the pipeline
consumes them (frontend / cope / svm / eval / seed).
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, replace

from .errors import ValidationError
from .gammatone import FilterbankSpec, Frontend


@dataclass(frozen=True)
class FrontendParams:
    sample_rate: int = 32000
    channels: int = 64
    f_min: float = 100.0
    f_max: float | None = None  # None: 0.9 * Nyquist
    order: int = 4
    q_ear: float = 9.26779
    b_min: float = 24.7
    p: float = 1.0
    ir_truncation_db: float = 60.0
    frame_size: int = 1024
    normalize: bool = True

    @property
    def effective_f_max(self) -> float:
        return 0.45 * self.sample_rate if self.f_max is None else self.f_max


@dataclass(frozen=True)
class CopeParams:
    sigma0: float = 5.0
    t1: float = 0.25
    support_ms: float = 200.0


@dataclass(frozen=True)
class SvmParams:
    c: float = 1.0


@dataclass(frozen=True)
class EvalParams:
    window_s: float = 3.0
    hop_s: float = 0.5


@dataclass(frozen=True)
class PipelineConfig:
    frontend_params: FrontendParams = FrontendParams()
    cope: CopeParams = CopeParams()
    svm: SvmParams = SvmParams()
    eval: EvalParams = EvalParams()
    seed: int = 0

    def filterbank_spec(self) -> FilterbankSpec:
        fp = self.frontend_params
        return FilterbankSpec(
            num_channels=fp.channels,
            f_min=fp.f_min,
            f_max=fp.effective_f_max,
            sample_rate=fp.sample_rate,
            order=fp.order,
            q_ear=fp.q_ear,
            b_min=fp.b_min,
            p=fp.p,
            ir_truncation_db=fp.ir_truncation_db,
        )

    def frontend(self) -> Frontend:
        fp = self.frontend_params
        return Frontend(
            spec=self.filterbank_spec(),
            frame_size=fp.frame_size,
            normalize=fp.normalize,
        )

    def to_json(self) -> str:
        payload = {
            "frontend": asdict(self.frontend_params),
            "cope": asdict(self.cope),
            "svm": asdict(self.svm),
            "eval": asdict(self.eval),
            "seed": self.seed,
        }
        return json.dumps(payload, indent=2, sort_keys=True)

    @staticmethod
    def from_json(text: str) -> "PipelineConfig":
        try:
            payload = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"bad config JSON: {exc}") from exc
        try:
            return PipelineConfig(
                frontend_params=FrontendParams(**payload.get("frontend", {})),
                cope=CopeParams(**payload.get("cope", {})),
                svm=SvmParams(**payload.get("svm", {})),
                eval=EvalParams(**payload.get("eval", {})),
                seed=int(payload.get("seed", 0)),
            )
        except TypeError as exc:
            raise ValidationError(f"unknown config field: {exc}") from exc

    def override(self, **kwargs) -> "PipelineConfig":
        """Apply flat field overrides (fields of any sub-group by name)."""
        cfg = self
        for key, value in kwargs.items():
            if value is None:
                continue
            if hasattr(cfg.frontend_params, key):
                cfg = replace(cfg, frontend_params=replace(cfg.frontend_params, **{key: value}))
            elif hasattr(cfg.cope, key):
                cfg = replace(cfg, cope=replace(cfg.cope, **{key: value}))
            elif hasattr(cfg.svm, key):
                cfg = replace(cfg, svm=replace(cfg.svm, **{key: value}))
            elif hasattr(cfg.eval, key):
                cfg = replace(cfg, eval=replace(cfg.eval, **{key: value}))
            elif key == "seed":
                cfg = replace(cfg, seed=int(value))
            else:
                raise ValidationError(f"unknown config field {key!r}")
        return cfg


def load_config(path) -> PipelineConfig:
    with open(path, encoding="utf-8") as fh:
        return PipelineConfig.from_json(fh.read())


def save_config(path, config: PipelineConfig) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(config.to_json() + "\n")
