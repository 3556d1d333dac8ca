"""Piecewise-constant multi-channel CT reconstruction with the Potts prior."""
from .projector import Geometry, RayOperator, build_operator, operator_norm_sq
from .potts_core import AXIAL, NEAR_ISOTROPIC, DirectionSet, potts_1d
from .spectral_sim import SpectralModel, Phantom, Sinogram

__version__ = "0.1.0"
