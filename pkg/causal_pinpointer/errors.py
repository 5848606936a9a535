"""
Error types for Causal-Pinpointer

Library code raises these; only the CLI maps them to exit codes.
"""

from typing import Any, Dict, List, Optional


class CausalPinpointerError(Exception):
    """Base class for all library errors"""

    exit_code = 5


class InvalidArgumentError(CausalPinpointerError, ValueError):
    """Argument outside the documented domain"""

    exit_code = 2


class ConfigError(InvalidArgumentError):
    """Malformed configuration file or override"""


class DataFormatError(CausalPinpointerError, ValueError):
    """Unparseable CSV or JSON input"""

    exit_code = 3


class InvalidModelError(InvalidArgumentError):
    """Graph or parameters violate the model class"""


class InvalidSwapError(InvalidArgumentError):
    """Requested column swap is not admissible"""


class DegenerateDataError(CausalPinpointerError, ValueError):
    """Data without usable variation (e.g. a constant column)"""


class NumericError(CausalPinpointerError, ArithmeticError):
    """Non-finite values reached a numerical routine"""


class EstimationFailure(CausalPinpointerError):
    """Pairwise effect or cumulant estimation could not produce a result"""

    def __init__(self, message: str, diagnostics: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class IllConditionedSystemError(EstimationFailure):
    """Candidate effects too close for a stable power-matrix solve"""


class AlignmentError(CausalPinpointerError):
    """Candidate cumulant vectors could not be grouped consistently"""


class UnderdeterminedError(CausalPinpointerError):
    """Source cumulant system lacks full column rank"""

    exit_code = 4

    def __init__(self, message: str, iteration: Optional[int] = None, rank: Optional[int] = None,
                 unknowns: Optional[int] = None):
        super().__init__(message)
        self.iteration = iteration
        self.rank = rank
        self.unknowns = unknowns


class DiscoveryFailure(CausalPinpointerError):
    """The recursion could not identify a source"""

    def __init__(self, message: str, iteration: Optional[int] = None,
                 diagnostics: Optional[List[Dict[str, Any]]] = None):
        super().__init__(message)
        self.iteration = iteration
        self.diagnostics = diagnostics or []
