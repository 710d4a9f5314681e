"""tinyhr: heart rate from short pulse frames, three ways.

Classical peak detection on a 12 Hz frame, a three-network pipeline
(upsampler, quality gate, regressor) on a 6 Hz frame, and a hybrid that
swaps the regressor for peak detection.  Includes the numpy network engine
the models are trained with, a seeded synthetic data generator and a
latency/accuracy benchmark.
"""

from .dsp import FilterSpec
from .errors import TinyHRError
from .models import TrainedBundle, load_bundle, save_bundle, train_bundle
from .pipelines import Pipeline, PipelineResult, run
from .signal import Frame, Label

__version__ = "0.1.0"

__all__ = [
    "FilterSpec",
    "Frame",
    "Label",
    "Pipeline",
    "PipelineResult",
    "TinyHRError",
    "TrainedBundle",
    "load_bundle",
    "run",
    "save_bundle",
    "train_bundle",
]
