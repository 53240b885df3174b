"""Self-energy matrices and excitation dynamics of atom arrays in a 1-D field."""

from .model import (
    AtomArray,
    DispersionSpec,
    FormFactorSpec,
    Model,
    ValidationReport,
    coupling_matrix,
    model_from_dict,
    model_to_dict,
    preset,
    principal_sqrt,
    validate_hypotheses,
)

__version__ = "0.1.0"

__all__ = [
    "AtomArray",
    "DispersionSpec",
    "FormFactorSpec",
    "Model",
    "ValidationReport",
    "coupling_matrix",
    "model_from_dict",
    "model_to_dict",
    "preset",
    "principal_sqrt",
    "validate_hypotheses",
    "__version__",
]
