"""Curvature assembly, integrability and Kahler identity checks, Chern numbers.

Two equivalent representations are maintained:

* metric representation: the holomorphic structure dbar_bg + beta is fixed
  and the hermitian metric h varies; `chern_curvature` assembles the
  curvature of the Chern connection of (dbar_bg + beta, h) in complex
  components F_{a bbar}, F^{2,0}, F^{0,2};

* connection representation: a unitary connection is stored as its (0,1)
  perturbation a01 relative to the background (the (1,0) part is minus the
  adjoint); `curvature_real` assembles the real components F_{mu nu} used
  by the Yang-Mills flow and by D*F.

Sign and scale conventions are pinned by the constant-curvature line
bundle on the n=2 torus with i*Lambda(F) = mu: measured YM = pi*mu^2,
HYM = 2*pi*mu^2, topo = -pi*mu^2, which closes YM = HYM + topo.
"""

from dataclasses import dataclass

import numpy as np

from .lattice import TorusLattice, frob_sq, integrate
from . import fields as fl
from .fields import ENDO, adjoint, hermitize

REAL_PAIRS = {1: [(0, 1)], 2: [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]}
COMPLEX_PAIRS = {1: [], 2: [(0, 1)]}


@dataclass(frozen=True)
class CurvatureBundle:
    """Curvature data in a unitary frame (components skew-hermitian)."""

    lat: TorusLattice
    f11: np.ndarray                 # (n, n) + grid + (R, R), F_{a bbar}
    f20: np.ndarray | None          # (npairs,) + grid + (R, R)
    f02: np.ndarray | None
    i_lambda_f: np.ndarray          # hermitian Hermitian-Einstein tensor
    f02_residual: float = 0.0
    herm_residual: float = 0.0

    @property
    def lambda_f(self):
        return -1j * self.i_lambda_f

    @property
    def rank(self):
        return self.f11.shape[-1]


def curvature_from_components(lat, f11, f20=None, f02=None, enforce=True):
    """Package complex curvature components given in a unitary frame.

    A unitary connection has F_{a bbar}^+ = F_{b abar} and
    F^{0,2} = -(F^{2,0})^+ exactly; with `enforce` the components are
    projected onto that structure (the defect, pure discretization error,
    is recorded as herm_residual).  This makes the pointwise identities
    |F|^2 = |Lambda F|^2 (n=1) and the hermiticity of i*Lambda(F) exact.
    """
    f11 = np.asarray(f11, dtype=complex)
    n = lat.n
    herm = 0.0
    if enforce:
        sym = np.empty_like(f11)
        for a in range(n):
            for b in range(n):
                sym[a, b] = 0.5 * (f11[a, b] + adjoint(f11[b, a]))
        herm = float(np.max(np.abs(f11 - sym))) if f11.size else 0.0
        f11 = sym
    lam, _ = fl_lambda(f11, lat)
    k = 1j * lam
    res = 0.0
    if f02 is not None and np.size(f02):
        res = float(np.sqrt(integrate((4.0 / lat.kappa ** 2) * sum(frob_sq(c) for c in f02), lat)))
    return CurvatureBundle(lat=lat, f11=f11, f20=f20, f02=f02,
                           i_lambda_f=hermitize(k), f02_residual=res, herm_residual=herm)


def fl_lambda(f11, lat):
    from .lattice import lambda_contract
    return lambda_contract(f11, lat)


def constant_curvature_line_bundle(lat, mu, rank=1):
    """Synthetic Hermitian-Einstein configuration F = -i*(mu/n) * omega x I.

    Satisfies i*Lambda(F) = mu * I exactly; used to calibrate conventions.
    """
    from .lattice import kahler_form_components
    f11 = (-1j * mu / lat.n) * kahler_form_components(lat, rank)
    npair = len(COMPLEX_PAIRS[lat.n])
    zero = np.zeros((npair,) + lat.shape + (rank, rank), dtype=complex) if npair else None
    return curvature_from_components(lat, f11, zero, zero)


def chern_curvature(model, h):
    """Curvature of the Chern connection of (dbar_bg + beta, h).

    F_h = F_bg + the perturbation terms assembled with twist-aware
    stencils, then conjugated by h^(1/2) into the flat unitary frame.
    Raises on non-positive h.
    """
    unitary_frame = True
    lat, n, R = model.lat, model.lat.n, model.rank
    h = np.asarray(h, dtype=complex)
    if not fl.is_positive(h):
        raise ValueError("metric h is not positive definite")
    beta = model.beta
    hinv = fl.fast_inv(h)

    ap = np.empty((n,) + h.shape, dtype=complex)
    for a in range(n):
        ap[a] = hinv @ fl.cov_d_bg(h, a, model, ENDO)
        if beta is not None:
            ap[a] -= hinv @ adjoint(beta[a]) @ h

    f11 = np.zeros((n, n) + h.shape, dtype=complex)
    eyeblock = np.eye(R)
    beta_d10 = model.beta_d10()
    for a in range(n):
        f11[a, a] += (np.pi * model.charges[:, a]) * eyeblock   # exact background
    for a in range(n):
        for b in range(n):
            f11[a, b] -= fl.cov_dbar_bg(ap[a], b, model, ENDO)
            if beta is not None:
                f11[a, b] += beta_d10[a, b]
                f11[a, b] += ap[a] @ beta[b] - beta[b] @ ap[a]

    pairs = COMPLEX_PAIRS[n]
    f20 = f02 = None
    if pairs:
        f20 = np.empty((len(pairs),) + h.shape, dtype=complex)
        for i, (a, b) in enumerate(pairs):
            f20[i] = (fl.cov_d_bg(ap[b], a, model, ENDO)
                      - fl.cov_d_bg(ap[a], b, model, ENDO)
                      + ap[a] @ ap[b] - ap[b] @ ap[a])
        if beta is not None:
            f02 = model.beta_f02().copy()
        else:
            f02 = np.zeros((len(pairs),) + h.shape, dtype=complex)

    if unitary_frame:
        s = fl.sqrt_hermitian(h)
        si = fl.fast_inv(s)
        f11 = s[None, None] @ f11 @ si[None, None]
        if pairs:
            f20 = s[None] @ f20 @ si[None]
            f02 = s[None] @ f02 @ si[None]
    return curvature_from_components(lat, f11, f20, f02)


def hermitian_einstein_tensor(model, h):
    """i*Lambda(F_h) in the dbar-frame (h-self-adjoint, not hermitian)."""
    lat, n = model.lat, model.lat.n
    beta = model.beta
    hinv = fl.fast_inv(h)
    beta_d10 = model.beta_d10()
    k = np.zeros(h.shape, dtype=complex)
    eyeblock = np.eye(model.rank)
    for a in range(n):
        apa = hinv @ fl.cov_d_bg(h, a, model, ENDO)
        if beta is not None:
            apa -= hinv @ adjoint(beta[a]) @ h
        faa = (np.pi * model.charges[:, a]) * eyeblock - fl.cov_dbar_bg(apa, a, model, ENDO)
        if beta is not None:
            faa = faa + beta_d10[a, a] + apa @ beta[a] - beta[a] @ apa
        k += faa
    return (2.0 / lat.kappa) * k


def integrability_residual(F):
    """L^2 norm of the (0,2) curvature part; identically zero when n = 1."""
    return F.f02_residual


# ---------------------------------------------------------------------------
# Connection (unitary-frame) representation.

def unitary_frame_connection(model, h):
    """(0,1) perturbation of the h^(1/2)-frame unitary connection.

    a_abar = s D''_bg(s^{-1}) + s beta s^{-1} with s = h^(1/2); the (1,0)
    part is -adjoint.  For h = I, beta = 0 this vanishes.
    """
    lat, n = model.lat, model.lat.n
    s = fl.sqrt_hermitian(h)
    si = fl.fast_inv(s)
    out = np.empty((n,) + h.shape, dtype=complex)
    for a in range(n):
        out[a] = s @ fl.cov_dbar_bg(si, a, model, ENDO)
        if model.beta is not None:
            out[a] += s @ model.beta[a] @ si
    return out


def real_components_from_a01(a01):
    """Real skew-hermitian 1-form components from the (0,1) perturbation."""
    n = a01.shape[0]
    out = np.empty((2 * n,) + a01.shape[1:], dtype=complex)
    for a in range(n):
        out[2 * a] = a01[a] - adjoint(a01[a])
        out[2 * a + 1] = -1j * (a01[a] + adjoint(a01[a]))
    return out


def curvature_real(model, a01):
    """Real curvature components F_{mu nu} (upper pairs) of bg + a01."""
    lat = model.lat
    am = real_components_from_a01(a01)
    pairs = REAL_PAIRS[lat.n]
    R = model.rank
    out = np.empty((len(pairs),) + a01.shape[1:], dtype=complex)
    eyeblock = np.eye(R)
    for i, (mu, nu) in enumerate(pairs):
        f = (fl.cov_d_real(am[nu], mu, model, ENDO)
             - fl.cov_d_real(am[mu], nu, model, ENDO)
             + am[mu] @ am[nu] - am[nu] @ am[mu])
        if nu == mu + 1 and mu % 2 == 0:
            f = f + (-2j * np.pi * model.charges[:, mu // 2]) * eyeblock
        out[i] = f
    return out


def _pair_index(lat):
    pairs = REAL_PAIRS[lat.n]
    idx = {}
    for i, (mu, nu) in enumerate(pairs):
        idx[(mu, nu)] = (i, 1.0)
        idx[(nu, mu)] = (i, -1.0)
    return idx


def dstar_real(model, a01, fpairs):
    """Codifferential (D*F)_nu = -(1/kappa) sum_mu D_mu F_{mu nu}, with the
    full covariant derivative (background plus a01)."""
    lat = model.lat
    am = real_components_from_a01(a01)
    idx = _pair_index(lat)
    d = 2 * lat.n
    out = np.zeros((d,) + a01.shape[1:], dtype=complex)
    for nu in range(d):
        acc = np.zeros(a01.shape[1:], dtype=complex)
        for mu in range(d):
            if mu == nu:
                continue
            i, sgn = idx[(mu, nu)]
            fmunu = sgn * fpairs[i]
            acc += fl.cov_d_real(fmunu, mu, model, ENDO) + am[mu] @ fmunu - fmunu @ am[mu]
        out[nu] = -acc / lat.kappa
    return out


def i_lambda_from_real(fpairs, lat):
    """Hermitian-Einstein tensor from real components: (i/kappa) sum faces."""
    idx = _pair_index(lat)
    k = sum(fpairs[idx[(2 * a, 2 * a + 1)][0]] for a in range(lat.n))
    return (1j / lat.kappa) * k


def ym_energy_real(fpairs, lat):
    """Yang-Mills energy from real components."""
    dens = sum(frob_sq(f) for f in fpairs) / lat.kappa ** 2
    return float(integrate(dens, lat))


def topo_real(fpairs, lat):
    """Integral of tr(F ^ F) from real components (n = 2 only)."""
    if lat.n == 1:
        return 0.0
    idx = {p: i for i, p in enumerate(REAL_PAIRS[2])}
    t = (np.einsum("...ij,...ji->...", fpairs[idx[(0, 1)]], fpairs[idx[(2, 3)]])
         - np.einsum("...ij,...ji->...", fpairs[idx[(0, 2)]], fpairs[idx[(1, 3)]])
         + np.einsum("...ij,...ji->...", fpairs[idx[(0, 3)]], fpairs[idx[(1, 2)]]))
    return float(2.0 * t.real.mean())


def gauge_transform_a01(model, a01, g):
    """Action of a periodic unitary gauge field on the (0,1) perturbation."""
    n = model.lat.n
    gi = fl.fast_inv(g)
    out = np.empty_like(a01)
    for a in range(n):
        out[a] = g @ a01[a] @ gi + g @ fl.cov_dbar_bg(gi, a, model, ENDO)
    return out


# ---------------------------------------------------------------------------
# Kahler identity and wedge integrals.

def kahler_identity_residual(model, h):
    """L^2 size of D*F - i(D' - D'')(Lambda F), matching stencils.

    The left side uses the real-direction codifferential, the right side
    complex-direction derivatives of the contracted curvature; both sides
    use the same underlying 4th-order shifts, so the residual measures the
    discrete Bianchi defect and converges at stencil order.
    """
    lat = model.lat
    a01 = unitary_frame_connection(model, h)
    fpairs = curvature_real(model, a01)
    lhs = dstar_real(model, a01, fpairs)
    k = i_lambda_from_real(fpairs, lat)
    am = real_components_from_a01(a01)

    def dcov(f, mu):
        return fl.cov_d_real(f, mu, model, ENDO) + am[mu] @ f - f @ am[mu]

    d = 2 * lat.n
    rhs = np.empty_like(lhs)
    for a in range(lat.n):
        rhs[2 * a] = -1j * dcov(k, 2 * a + 1)
        rhs[2 * a + 1] = +1j * dcov(k, 2 * a)
    dens = sum(frob_sq(lhs[mu] - rhs[mu]) for mu in range(d)) / lat.kappa
    return float(np.sqrt(integrate(dens, lat)))


def wedge_integral(g11, h11, lat, g20=None, g02=None, h20=None, h02=None,
                   scalar=False):
    """Integral of tr(G ^ H) for 2-forms on the n=2 torus.

    With `scalar` the components are plain scalar fields; otherwise they
    carry trailing matrix axes and the pointwise trace of the product is
    taken.  The wedge integral is metric independent (plain mean over the
    unit cube)."""
    if lat.n != 2:
        raise ValueError("wedge integrals require n = 2")

    def trmul(x, y):
        if scalar:
            return x * y
        return np.einsum("...ij,...ji->...", x, y)

    pair = (trmul(g11[0, 0], h11[1, 1]) + trmul(g11[1, 1], h11[0, 0])
            - trmul(g11[0, 1], h11[1, 0]) - trmul(g11[1, 0], h11[0, 1]))
    if g20 is not None and h02 is not None:
        pair = pair - trmul(g20[0], h02[0]) - trmul(g02[0], h20[0])
    return complex(-4.0 * pair.mean())


def chern_numbers(F, lat):
    """(deg, c1_sq, topo): degree against omega, the c1^2 integral, and the
    topological term 4*pi^2*(2 c2 - c1^2) = integral of tr(F ^ F).

    deg = (1/2pi) * int tr(i Lambda F); c1_sq and topo vanish for n = 1.
    """
    tr_k = np.einsum("...ii->...", F.i_lambda_f).real
    deg = float(integrate(tr_k, lat)) / (2 * np.pi)
    if lat.n == 1:
        return deg, 0.0, 0.0
    trf11 = np.einsum("ab...ii->ab...", F.f11)
    trf20 = np.einsum("p...ii->p...", F.f20) if F.f20 is not None else None
    trf02 = np.einsum("p...ii->p...", F.f02) if F.f02 is not None else None
    c1sq = (-1.0 / (4 * np.pi ** 2)) * wedge_integral(
        trf11, trf11, lat, trf20, trf02, trf20, trf02, scalar=True).real
    topo = wedge_integral(F.f11, F.f11, lat, F.f20, F.f02, F.f20, F.f02).real
    return deg, c1sq, topo
