"""Design, analysis and simulation of (k, k') stabilizing erasure codes for LTI feedback loops."""

__version__ = "0.1.0"

from .errors import (  # noqa: F401
    IllPosedLoop,
    InfeasibleDesign,
    MarginallyStable,
    StabcodeError,
    SynthesisError,
    UnstableSystem,
)
from .lti import LoopFilters, PlantModel, TransferFunction, closed_loop_maps, min_snr_for_stability  # noqa: F401
