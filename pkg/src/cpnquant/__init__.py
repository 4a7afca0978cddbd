"""Numerical Berezin-type quantization of CP^n on the affine chart U_0 = C^n."""

from .cpn_core import QuantizationConfig, SmoothField, poisson_bracket_fs
from .hilbert import BasisSpec

__version__ = "0.1.0"

__all__ = ["QuantizationConfig", "SmoothField", "BasisSpec", "poisson_bracket_fs", "__version__"]
