"""Sub-Nyquist multi-tone and chirp estimation via Hankel matrix pencils."""
from .errors import NumericalError, SngemError, ValidationError
from .filters import FilterResponse, butterworth_hp1, ideal_differentiator
from .signal_model import (
    ChirpSpec,
    DualChannelRecord,
    MultiToneSpec,
    SamplingGrid,
    ToneComponent,
    make_record,
    table1_spec,
)
from .pencil import (
    EstimatorOptions,
    Fixed,
    LargestLogGap,
    RelThreshold,
    estimate_multitone,
)
from .chirp import ChirpWindow, LosScenario, estimate_chirp

__all__ = [
    "ChirpSpec", "ChirpWindow", "DualChannelRecord", "EstimatorOptions", "FilterResponse",
    "Fixed", "LargestLogGap", "LosScenario", "MultiToneSpec", "NumericalError",
    "RelThreshold", "SamplingGrid", "SngemError", "ToneComponent", "ValidationError",
    "butterworth_hp1", "estimate_chirp", "estimate_multitone", "ideal_differentiator",
    "make_record", "table1_spec",
]
__version__ = "0.1.0"
