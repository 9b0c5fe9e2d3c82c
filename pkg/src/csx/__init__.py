"""Modified carrying simplices and dominance for competitive Kolmogorov maps."""

from csx.errors import (
    BracketError,
    BudgetExceeded,
    CsxError,
    DomainError,
    FormatError,
    HeightUndetermined,
    InverseFailed,
    ModelError,
    NoAxialFixedPoint,
    NotPlanar,
)
from csx.model import Family, ModelSpec

__version__ = "0.1.0"

__all__ = [
    "BracketError",
    "BudgetExceeded",
    "CsxError",
    "DomainError",
    "Family",
    "FormatError",
    "HeightUndetermined",
    "InverseFailed",
    "ModelError",
    "ModelSpec",
    "NoAxialFixedPoint",
    "NotPlanar",
    "__version__",
]
