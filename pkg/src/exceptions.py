# ============================================
# FILE: src/exceptions.py
# Error taxonomy shared by the simulator modules
# ============================================

from typing import Any, Optional


class QuantumCommError(Exception):
    """Root of every error raised by the simulator"""


class DimensionMismatch(QuantumCommError, ValueError):
    """Amplitude count, qubit count or operand sizes do not agree"""


class ZeroVector(QuantumCommError, ValueError):
    """A state vector with (numerically) zero norm"""


class BadTargets(QuantumCommError, ValueError):
    """Target qubit indices are repeated, out of range or of the wrong count"""


class IncompleteBasis(QuantumCommError, ValueError):
    """A measurement basis that is not a complete orthonormal set"""


class NotUnitary(QuantumCommError, ValueError):
    """Operator matrix fails U†U = I"""


class InconsistentOutcome(QuantumCommError):
    """Measurement outcomes have zero probability under every message"""


class CodebookMismatch(QuantumCommError):
    """A stored decode table disagrees with the one derived from the states"""


class ParseError(QuantumCommError, ValueError):
    """Channel-spec document could not be parsed"""

    def __init__(self, message: str, location: str = ""):
        self.location = location
        super().__init__(f"{location}: {message}" if location else message)


class ValidationFailed(QuantumCommError):
    """Channel spec parsed but does not yield a decodable codebook"""

    def __init__(self, message: str, report: Optional[Any] = None):
        self.report = report
        super().__init__(message)


class NoSiftedDecoys(QuantumCommError):
    """Decoys were sent but none survived sifting"""


class ZeroQubits(QuantumCommError, ValueError):
    """Efficiency requested for zero qubits"""


class BadArity(QuantumCommError, ValueError):
    """Entangled-unit size outside the supported range"""


class UnknownProtocol(QuantumCommError, ValueError):
    """Protocol name not recognised"""


class UsageError(QuantumCommError):
    """Command-line usage problem"""
