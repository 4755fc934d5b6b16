"""H2 norms, gramians, balanced truncation and simulation of linear systems
with state, input and output delays."""

from .analysis import (GramianPair, IllPosedNormError, QuadratureConvergenceError, gramians,
                       h2_norm)
from .balancing import (BalancingError, BalancingInfo, InfoMismatchError, balanced_realization,
                        balanced_truncation, load_info, save_info, square_root_balancing)
from .core import (DelayedMatrixSum, QuadOptions, Rtds, RtdsError, load_rtds, make_rtds,
                   random_rtds, save_rtds)
from .freqresp import FreqResponse, SingularResolventError, freq_grid, transfer
from .quadrature import QuadratureError, evaluation_count
from .simulation import SimulationError, TimeResponse, settled_step_response, step_response

__version__ = "0.1.0"

__all__ = [
    "DelayedMatrixSum", "Rtds", "QuadOptions", "RtdsError", "make_rtds", "random_rtds",
    "load_rtds", "save_rtds",
    "FreqResponse", "SingularResolventError", "freq_grid", "transfer",
    "QuadratureError", "evaluation_count",
    "GramianPair", "IllPosedNormError", "QuadratureConvergenceError", "gramians", "h2_norm",
    "BalancingError", "BalancingInfo", "InfoMismatchError", "balanced_realization",
    "balanced_truncation", "load_info", "save_info", "square_root_balancing",
    "SimulationError", "TimeResponse", "step_response", "settled_step_response",
]
