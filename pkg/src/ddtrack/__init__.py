"""Direct position tracking of a moving transmitter from distributed OFDM CSI.

The package splits into scenario geometry (`scenario`), synthetic CSI
generation (`channel`), the window profile likelihood (`likelihood`), the
regularized particle filter (`tracker`), accuracy metrics (`metrics`), file
formats (`formats`), configuration (`config`), and the CLI (`cli`).
"""

from .channel import (
    AmplitudeModel,
    Blockage,
    CsiDataset,
    ImpairmentSchedule,
    Scatterer,
    synthesize_csi,
)
from .config import PipelineConfig, load_pipeline_config
from .errors import (
    ConfigError,
    DdtrackError,
    FilterDegeneracyError,
    FilterDivergenceError,
    FormatError,
    InvalidLayoutError,
    MetricError,
    SingularGeometryError,
)
from .likelihood import (
    LikelihoodResult,
    ObservationWindow,
    StateHypothesis,
    WindowEvaluator,
    profile_log_likelihood,
)
from .metrics import (
    MetricsConfig,
    RunMetrics,
    error_cdf,
    evaluate_run,
    pool_runs,
)
from .scenario import (
    AnchorSet,
    GroundTruthTrack,
    ScenarioConfig,
    build_anchor_set,
    generate_trajectory,
)
from .tracker import (
    FilterConfig,
    ParticleEnsemble,
    TrackEstimate,
    TransitionModel,
    run_filter,
)

__version__ = "0.1.0"

__all__ = [
    "AmplitudeModel",
    "AnchorSet",
    "Blockage",
    "ConfigError",
    "CsiDataset",
    "DdtrackError",
    "FilterConfig",
    "FilterDegeneracyError",
    "FilterDivergenceError",
    "FormatError",
    "GroundTruthTrack",
    "ImpairmentSchedule",
    "InvalidLayoutError",
    "LikelihoodResult",
    "MetricError",
    "MetricsConfig",
    "ObservationWindow",
    "ParticleEnsemble",
    "PipelineConfig",
    "RunMetrics",
    "Scatterer",
    "ScenarioConfig",
    "SingularGeometryError",
    "StateHypothesis",
    "TrackEstimate",
    "TransitionModel",
    "WindowEvaluator",
    "build_anchor_set",
    "error_cdf",
    "evaluate_run",
    "generate_trajectory",
    "load_pipeline_config",
    "pool_runs",
    "profile_log_likelihood",
    "run_filter",
    "synthesize_csi",
]
