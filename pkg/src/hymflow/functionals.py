"""Scalar functionals and endomorphism constructions.

phi_alpha, the Yang-Mills / Hermitian-Yang-Mills energies and their
(alpha, N) generalization, critical values of a type, degree of a
projection, the filtration projection Psi, approximate-critical deviation,
the sigma distance between metrics, and the trace-projection inequality.
"""

from dataclasses import dataclass

import numpy as np

from .lattice import frob_sq, integrate, lp_norm
from .fields import ENDO, adjoint
from . import fields as fl


def eig_desc(a):
    """Descending real eigenvalues of a hermitian matrix field.

    Closed form for ranks 1 and 2 (the per-point hot path); LAPACK for
    larger ranks.
    """
    a = np.asarray(a)
    r = a.shape[-1]
    if r == 1:
        return a[..., 0, 0].real[..., None]
    if r == 2:
        m = 0.5 * (a[..., 0, 0] + a[..., 1, 1]).real
        d = 0.5 * (a[..., 0, 0] - a[..., 1, 1]).real
        rad = np.sqrt(d * d + np.abs(a[..., 0, 1]) ** 2)
        return np.stack([m + rad, m - rad], axis=-1)
    return np.linalg.eigvalsh(a)[..., ::-1]


def _as_hermitian_eigs(a, tol=1e-9):
    """Eigenvalue moduli source for phi_alpha: accepts hermitian or
    skew-hermitian input and returns real eigenvalues (of a or of i*a)."""
    a = np.asarray(a, dtype=complex)
    scale = max(1.0, float(np.max(np.abs(a)))) if a.size else 1.0
    if np.max(np.abs(a - adjoint(a))) <= tol * scale:
        return eig_desc(a)
    if np.max(np.abs(a + adjoint(a))) <= tol * scale:
        return eig_desc(1j * a)
    raise ValueError("phi_alpha requires a hermitian or skew-hermitian argument")


def phi_alpha(a, alpha, lat=None):
    """Sum of |eigenvalue|^alpha, pointwise; integrated when lat is given."""
    if alpha < 1:
        raise ValueError(f"alpha must be >= 1, got {alpha}")
    lam = _as_hermitian_eigs(a)
    val = np.abs(lam) ** alpha
    val = val.sum(axis=-1)
    if lat is None:
        return val if val.ndim else float(val)
    return float(integrate(val, lat))


def phi_alpha_tuple(values, alpha):
    """phi_alpha of i*diag(values): sum of |values|^alpha."""
    if alpha < 1:
        raise ValueError(f"alpha must be >= 1, got {alpha}")
    return float(np.sum(np.abs(np.asarray(values, dtype=float)) ** alpha))


def ym(F):
    """Yang-Mills energy, the squared L^2 norm of the full curvature."""
    lat = F.lat
    dens = sum(frob_sq(F.f11[a, b]) for a in range(lat.n) for b in range(lat.n))
    if F.f20 is not None:
        dens = dens + sum(frob_sq(c) for c in F.f20) + sum(frob_sq(c) for c in F.f02)
    return float(integrate((4.0 / lat.kappa ** 2) * dens, lat))


def hym(F):
    """Hermitian-Yang-Mills energy, squared L^2 norm of Lambda(F)."""
    return float(integrate(frob_sq(F.i_lambda_f), F.lat))


def hym_alpha_N(F, alpha, N=0.0):
    """Generalized energy: integral of sum_i |lambda_i + N|^alpha over the
    eigenvalues lambda_i of the Hermitian-Einstein tensor i*Lambda(F)."""
    if alpha < 1:
        raise ValueError(f"alpha must be >= 1, got {alpha}")
    lam = eig_desc(F.i_lambda_f)
    dens = (np.abs(lam + N) ** alpha).sum(axis=-1)
    return float(integrate(dens, F.lat))


def hym_alpha_N_from_eigs(lam, alpha, N, lat):
    dens = (np.abs(lam + N) ** alpha).sum(axis=-1)
    return float(integrate(dens, lat))


def hym_of_type(mu, alpha=2.0, N=0.0):
    """Critical value 2*pi * phi_alpha(i(mu + N)) of a slope vector."""
    vals = np.asarray(getattr(mu, "values", mu), dtype=float)
    return 2 * np.pi * phi_alpha_tuple(vals + N, alpha)


def _check_projection(pi, tol=1e-8):
    pi = np.asarray(pi, dtype=complex)
    scale = max(1.0, float(np.max(np.abs(pi))))
    if np.max(np.abs(pi @ pi - pi)) > tol * scale or np.max(np.abs(pi - adjoint(pi))) > tol * scale:
        raise ValueError("input is not a hermitian projection (pi^2 = pi = pi^+)")
    return pi


def degree_of_projection(pi, model, h=None, F=None):
    """Degree formula (1/2pi) int [ tr(i Lambda F . pi) - |D'' pi|^2 ] dvol.

    `pi` is a hermitian projection field in the unitary frame of `F`; the
    (0,1) covariant derivative uses the unitary-frame connection of
    (model, h).  When F is omitted it is computed from (model, h).
    For the exact holomorphic block projection this returns the block's
    background degree.
    """
    from .curvature import chern_curvature, unitary_frame_connection
    lat = model.lat
    pi = _check_projection(pi)
    if h is None:
        h = np.broadcast_to(np.eye(model.rank, dtype=complex),
                            lat.shape + (model.rank, model.rank))
    if F is None:
        F = chern_curvature(model, h)
    a01 = unitary_frame_connection(model, h)
    dens = np.einsum("...ij,...ji->...", F.i_lambda_f, pi).real
    for a in range(lat.n):
        dpi = fl.cov_dbar_bg(pi, a, model, ENDO) + a01[a] @ pi - pi @ a01[a]
        dens = dens - (2.0 / lat.kappa) * frob_sq(dpi)
    return float(integrate(dens, lat)) / (2 * np.pi)


@dataclass(frozen=True)
class HNProjectionData:
    """Nested hermitian projections pi_1 < ... < pi_l = I with the slopes
    of the graded pieces."""

    projections: tuple      # increasing projection fields
    mus: tuple              # slope per graded piece, strictly decreasing

    def __post_init__(self):
        if len(self.projections) != len(self.mus):
            raise ValueError("one slope per graded piece required")


def hn_projection(data, tol=1e-10):
    """Psi = sum_i mu_i (pi_i - pi_{i-1}); pointwise spectrum {mu_i}."""
    prev = None
    psi = None
    for pi, mu in zip(data.projections, data.mus):
        pi = _check_projection(pi, tol=max(tol, 1e-10))
        if prev is not None:
            nest = np.max(np.abs(prev @ pi - prev))
            if nest > tol * max(1.0, float(np.max(np.abs(pi)))):
                raise ValueError(f"projections are not nested (residual {nest:.3e})")
        step = pi if prev is None else pi - prev
        psi = mu * step if psi is None else psi + mu * step
        prev = pi
    eye = np.eye(psi.shape[-1])
    if np.max(np.abs(prev - eye)) > 1e-8:
        raise ValueError("final projection must be the identity")
    return psi


def approx_critical_deviation(F, psi, p=2.0):
    """||i Lambda F - Psi||_{L^p}; a metric is an L^p-delta-approximate
    critical hermitian structure when this is <= delta."""
    if not (p == np.inf or p >= 1):
        raise ValueError(f"p must be >= 1 or inf, got {p}")
    diff = F.i_lambda_f - psi
    return lp_norm(diff, p, F.lat, check=False)


def sigma_distance(H, K):
    """C^0 distance field sigma(H,K) = tr(H^-1 K) + tr(K^-1 H) - 2 rank.

    Returns (pointwise field, sup).  Nonnegative, zero iff H = K.
    """
    H = np.asarray(H, dtype=complex)
    K = np.asarray(K, dtype=complex)
    if not (fl.is_positive(H) and fl.is_positive(K)):
        raise ValueError("sigma distance requires positive definite metrics")
    r = H.shape[-1]
    hk = np.linalg.solve(H, K)
    kh = np.linalg.solve(K, H)
    field = (np.einsum("...ii->...", hk) + np.einsum("...ii->...", kh)).real - 2 * r
    return field, float(np.max(field))


def trace_projection_bound(L, pi, tol=1e-10):
    """tr(L pi) <= sum of the top-r eigenvalues of hermitian L, r = rank(pi).

    Returns (lhs, rhs, ok)."""
    L = np.asarray(L, dtype=complex)
    pi = _check_projection(pi)
    lhs = float(np.einsum("ij,ji->", L, pi).real)
    r = int(round(np.trace(pi).real))
    lam = np.sort(np.linalg.eigvalsh(L))[::-1]
    rhs = float(lam[:r].sum())
    return lhs, rhs, lhs <= rhs + tol
