"""Exception hierarchy.

Every error carries an ``exit_code`` used by the command-line front end:
2 for rejected input, 3 for representability failures, 4 for failed
verification thresholds.
"""
from __future__ import annotations


class PulseforgeError(Exception):
    """Base class for all toolkit errors."""

    exit_code = 1


class InputError(PulseforgeError, ValueError):
    """Malformed or inconsistent input (bad grid, non-finite samples, ...)."""

    exit_code = 2


class RepresentabilityError(PulseforgeError, ValueError):
    """The prescribed observable cannot be produced by an admissible drive."""

    exit_code = 3


class VanishingDensityError(RepresentabilityError):
    """A site or grid density fell to the floor, so the inverse map breaks down."""


class SingularityError(RepresentabilityError):
    """A Bloch trajectory requires a divergent in-plane field."""


class AmbiguousBranchError(RepresentabilityError):
    """The sign of a link kinetic term cannot be read off the initial state."""


class ReconstructionMismatchError(PulseforgeError, RuntimeError):
    """Two independent evaluations of the same control signal disagree."""

    exit_code = 1


class VerificationError(PulseforgeError):
    """Forward propagation missed a verification threshold."""

    exit_code = 4
