"""
Exception hierarchy shared by every MCPST package.

Library code raises these; the command-line layer catches ``MCPSTError``,
logs the message and exits nonzero.
"""


class MCPSTError(Exception):
    """Base class for all MCPST errors."""


class ConfigError(MCPSTError, ValueError):
    """Invalid or unknown configuration key/value."""


class GraphConstructionError(MCPSTError, ValueError):
    """Adjacency violates a TrafficNetwork invariant."""


class SpectralError(MCPSTError, ValueError):
    """Eigendecomposition request cannot be honoured."""


class ShapeError(MCPSTError, ValueError):
    """Tensor shapes do not align."""


class StabilityError(MCPSTError, ValueError):
    """Explicit diffusion step would be unstable on this graph."""


class NonFiniteError(MCPSTError, FloatingPointError):
    """NaN or Inf produced during a forward or backward pass."""

    def __init__(self, operation: str, detail: str = ""):
        self.operation = operation
        message = f"non-finite value first produced by '{operation}'"
        if detail:
            message = f"{message}: {detail}"
        super().__init__(message)


class DataFormatError(MCPSTError, ValueError):
    """Malformed series or adjacency file."""


class InsufficientDataError(MCPSTError, ValueError):
    """Not enough time steps or windows for the requested operation."""


class CheckpointError(MCPSTError, ValueError):
    """Model file is corrupt or incompatible."""
