"""Hermitian-Yang-Mills and Yang-Mills gradient flows on flat Kahler tori."""

__version__ = "0.1.0"

from .lattice import TorusLattice, make_torus, integrate, lp_norm, lambda_contract
from .fields import BundleModel, build_background, shift, covariant_deriv, \
    cocycle_check, project_holomorphic
from .curvature import chern_curvature, chern_numbers, integrability_residual, \
    kahler_identity_residual, CurvatureBundle
