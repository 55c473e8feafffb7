"""Ring-type blowup in radial nonlinear Schrodinger and heat equations."""

from .grid import EquationSpec, Family, FieldState, RadialGrid, RingLabError

__version__ = "0.1.0"

__all__ = ["EquationSpec", "Family", "FieldState", "RadialGrid", "RingLabError", "__version__"]
