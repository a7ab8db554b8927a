"""Inverse engineering of quantum driving fields from prescribed observables."""
from .errors import (
    AmbiguousBranchError,
    InputError,
    PulseforgeError,
    ReconstructionMismatchError,
    RepresentabilityError,
    SingularityError,
    VanishingDensityError,
    VerificationError,
)
from .kernels import BACKEND

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "AmbiguousBranchError",
    "InputError",
    "PulseforgeError",
    "ReconstructionMismatchError",
    "RepresentabilityError",
    "SingularityError",
    "VanishingDensityError",
    "VerificationError",
    "__version__",
]
