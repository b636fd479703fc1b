"""Trainable energy-peak feature extractors for sound event detection."""

from .audio_io import AudioClip, GroundTruth, read_ground_truth, read_wav, resample, write_wav
from .classifier import (
    LinearSvmModel,
    MultiClassModel,
    cost_factor,
    decide,
    load_model,
    save_model,
    train_binary,
    train_ova,
)
from .config import PipelineConfig
from .errors import CopekitError, DataError, ValidationError
from .evaluation import (
    CurvePoints,
    DetectionRecord,
    MetricsReport,
    Scene,
    cross_validate,
    det_curve,
    nb_variance,
    roc_curve,
    score_events,
    sliding_detection,
)
from .features import (
    CopeExtractor,
    CopeFeatureVector,
    CopeResponse,
    configure,
    configure_bank,
    extract_vector,
    extract_vector_from_clip,
    load_bank,
    pooled_value,
    response,
    save_bank,
    shifted_peak_response,
)
from .gammatone import (
    FilterbankSpec,
    Frontend,
    Gammatonegram,
    apply_filterbank,
    design_filterbank,
    erb_bandwidth,
    erb_space,
    gammatonegram,
)
from .mixer import MixEntry, MixPlan, measure_snr, mix_at_snr
from .peaks import PeakConstellation, extract_peaks, reference_point
from .sweep import SweepConfig, run_sweep

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
