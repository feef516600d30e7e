"""Matrix fields on bundles with nonzero first Chern class, via twisted shifts.

A rank-R bundle is modeled as a sum of R line-bundle blocks.  Block k
carries integer charges m[k, a], one per complex factor a; its background
potential is the linear (Landau-gauge) one

    A_{2a+1} = -2*pi*i * m[k,a] * x_{2a}           (real components)
    A_a      = -pi * m[k,a] * x_{2a},  B_abar = +pi * m[k,a] * x_{2a}

with constant curvature F_{a abar} = pi * m[k,a], hence a Hermitian-
Einstein tensor i*Lambda(F) = (2*pi/kappa) * sum_a m[k,a] per block.

All stored fields are plain periodic numpy arrays; the non-periodicity of
the background sits in the transition (twist) factors

    g_{2a}(x) = exp(2*pi*i * diag(m[:,a]) * x_{2a+1}),    g_{2a+1} = 1,

applied when a shift wraps around the torus.  Sections transform by g,
endomorphisms by g . g^{-1}.  Array layout: grid axes first, matrix axes
(R, R) last; (0,1)-form fields carry a leading component axis of length n.
"""

import itertools
from dataclasses import dataclass, field as dfield

import numpy as np

from .lattice import TorusLattice, frob_sq, integrate

SECTION = "section"
ENDO = "endo"
SCALAR = "scalar"


def adjoint(a):
    return np.conj(np.swapaxes(a, -1, -2))


def hermitize(a):
    return 0.5 * (a + adjoint(a))


def fast_inv(m):
    """Batched matrix inverse, closed form for trailing 1x1 / 2x2 blocks."""
    r = m.shape[-1]
    if r == 1:
        return 1.0 / m
    if r == 2:
        det = m[..., 0, 0] * m[..., 1, 1] - m[..., 0, 1] * m[..., 1, 0]
        out = np.empty_like(m)
        out[..., 0, 0] = m[..., 1, 1]
        out[..., 1, 1] = m[..., 0, 0]
        out[..., 0, 1] = -m[..., 0, 1]
        out[..., 1, 0] = -m[..., 1, 0]
        out /= det[..., None, None]
        return out
    return np.linalg.inv(m)


@dataclass(frozen=True)
class BundleModel:
    """Split background bundle: line-bundle blocks plus an optional
    strictly upper-triangular (0,1) extension perturbation beta."""

    lat: TorusLattice
    charges: np.ndarray               # (R, n) integers
    beta: np.ndarray | None = None    # (n,) + grid + (R, R), strictly upper
    twist_phase: np.ndarray = dfield(init=False)   # (n, grid, R)

    def __post_init__(self):
        charges = np.asarray(self.charges, dtype=np.int64)
        if charges.ndim != 2 or charges.shape[1] != self.lat.n:
            raise ValueError(
                f"charges must have shape (rank, {self.lat.n}), got {charges.shape}")
        object.__setattr__(self, "charges", charges)
        if self.beta is not None:
            beta = np.asarray(self.beta, dtype=complex)
            want = (self.lat.n,) + self.lat.shape + (self.rank, self.rank)
            if beta.shape != want:
                raise ValueError(f"beta shape {beta.shape}, expected {want}")
            if np.max(np.abs(beta * (1 - _strict_upper_mask(self.rank)))) > 0:
                raise ValueError("beta must be strictly upper triangular")
            object.__setattr__(self, "beta", beta)
        x = np.arange(self.lat.grid) / self.lat.grid
        phases = np.exp(2j * np.pi * x[None, :, None] * charges.T[:, None, :])
        object.__setattr__(self, "twist_phase", phases)
        object.__setattr__(self, "_cache", {})

    @property
    def rank(self):
        return self.charges.shape[0]

    @property
    def block_slopes(self):
        """Per-block Hermitian-Einstein constants (= degrees, rank-1 blocks)."""
        return (2 * np.pi / self.lat.kappa) * self.charges.sum(axis=1)

    @property
    def slope(self):
        return float(self.block_slopes.mean())

    def with_beta(self, beta):
        return BundleModel(lat=self.lat, charges=self.charges, beta=beta)

    def wrap_phase_field(self, axis):
        """Twist factor for wrapping `axis`, as a (R,)-diag phase field
        broadcastable over the grid, or None when the wrap is trivial."""
        key = ("wrap", axis)
        if key not in self._cache:
            if axis % 2 == 1 or not np.any(self.charges[:, axis // 2]):
                self._cache[key] = None
            else:
                a = axis // 2
                shape = [1] * self.lat.ndim_real + [self.rank]
                shape[2 * a + 1] = self.lat.grid
                self._cache[key] = self.twist_phase[a].reshape(shape)
        return self._cache[key]

    def beta_d10(self):
        """Cached background (1,0) covariant derivatives of beta,
        shape (n, n) + grid + (R, R): entry [a, b] is D'_a beta_b.
        Constant along a flow (beta is part of the holomorphic structure)."""
        if self.beta is None:
            return None
        if "beta_d10" not in self._cache:
            n = self.lat.n
            arr = np.empty((n, n) + self.beta.shape[1:], dtype=complex)
            for a in range(n):
                for b in range(n):
                    arr[a, b] = cov_d_bg(self.beta[b], a, self, ENDO)
            self._cache["beta_d10"] = arr
        return self._cache["beta_d10"]

    def beta_f02(self):
        """Cached (0,2) curvature components of dbar_bg + beta (n=2)."""
        if self.beta is None or self.lat.n == 1:
            return None
        if "beta_f02" not in self._cache:
            b = self.beta
            f02 = (cov_dbar_bg(b[1], 0, self, ENDO) - cov_dbar_bg(b[0], 1, self, ENDO)
                   + b[0] @ b[1] - b[1] @ b[0])
            self._cache["beta_f02"] = f02[None]
        return self._cache["beta_f02"]

    def bg_potential_diag(self, axis):
        """Real component of the background potential on `axis`:
        A_{2a+1} = -2*pi*i * diag(m[:,a]) * x_{2a}; zero on even axes.
        Returned as a broadcastable (..., R) diagonal field, or None."""
        if axis % 2 == 0:
            return None
        a = axis // 2
        if not np.any(self.charges[:, a]):
            return None
        x = self.lat.coord(2 * a)
        return -2j * np.pi * self.charges[:, a] * x[..., None]


def _strict_upper_mask(rank):
    return np.triu(np.ones((rank, rank)), k=1)


def shift(f, axis, steps, model, cov=ENDO):
    """Translate a field by `steps` grid points along `axis`, twist-aware.

    steps in {-2,-1,1,2}; the wrapped slab picks up the transition factor
    according to the field's covariance type.
    """
    if steps == 0:
        return f
    if abs(steps) > 2:
        raise ValueError("shift supports |steps| <= 2")
    out = np.roll(f, -steps, axis=axis)
    if cov == SCALAR:
        return out
    ph = model.wrap_phase_field(axis)
    if ph is None:
        return out
    N = model.lat.grid
    sel = [slice(None)] * out.ndim
    if steps > 0:
        sel[axis] = slice(N - steps, N)
    else:
        sel[axis] = slice(0, -steps)
    sel = tuple(sel)
    block = out[sel]
    # slab-restricted twist factor (it never varies along `axis` itself)
    phs = [slice(None)] * ph.ndim
    phs[axis] = slice(0, 1)
    ph = ph[tuple(phs)]
    if steps < 0:
        ph = np.conj(ph)
    if cov == SECTION:
        out[sel] = ph * block if block.ndim == ph.ndim else ph[..., None] * block
    elif cov == ENDO:
        out[sel] = ph[..., :, None] * block * np.conj(ph)[..., None, :]
    else:
        raise ValueError(f"unknown covariance type {cov!r}")
    return out


def dstencil(f, axis, model, cov=ENDO):
    """4th-order central derivative along a real axis, twisted wrapping."""
    h = model.lat.spacing
    out = shift(f, axis, 1, model, cov)
    out -= shift(f, axis, -1, model, cov)
    out *= 8.0
    out += shift(f, axis, -2, model, cov)
    out -= shift(f, axis, 2, model, cov)
    out *= 1.0 / (12 * h)
    return out


def _bg_commutator(model, axis, f):
    """[A_bg_axis, f] for an endomorphism field (diagonal background)."""
    d = model.bg_potential_diag(axis)
    if d is None:
        return 0.0
    return d[..., :, None] * f - f * d[..., None, :]


def _bg_action(model, axis, f):
    """A_bg_axis . f for a section-type field."""
    d = model.bg_potential_diag(axis)
    if d is None:
        return 0.0
    return d * f if f.shape[-1] == model.rank else d[..., None] * f


def cov_d_real(f, axis, model, cov=ENDO):
    """Background covariant derivative along a real axis."""
    df = dstencil(f, axis, model, cov)
    if cov == ENDO:
        return df + _bg_commutator(model, axis, f)
    if cov == SECTION:
        return df + _bg_action(model, axis, f)
    return df


def cov_d_bg(f, a, model, cov=ENDO):
    """(1,0) background covariant derivative D'_a = (D_{2a} - i D_{2a+1})/2."""
    return 0.5 * (cov_d_real(f, 2 * a, model, cov) - 1j * cov_d_real(f, 2 * a + 1, model, cov))


def cov_dbar_bg(f, a, model, cov=ENDO):
    """(0,1) background covariant derivative D''_abar = (D_{2a} + i D_{2a+1})/2."""
    return 0.5 * (cov_d_real(f, 2 * a, model, cov) + 1j * cov_d_real(f, 2 * a + 1, model, cov))


def covariant_deriv(f, model, h=None, part="full", cov=ENDO):
    """Chern covariant derivative of a field for the holomorphic structure
    (dbar_bg + beta) and metric h (reference metric is the identity).

    part is "(0,1)", "(1,0)" or "full"; returns an array of shape
    (n,) + grid + (R,R) per part, the full case returning the pair
    (d10, d01).  The (1,0) part requires the metric h.
    """
    lat, n = model.lat, model.lat.n
    beta = model.beta
    d01 = np.empty((n,) + f.shape, dtype=complex)
    for a in range(n):
        d01[a] = cov_dbar_bg(f, a, model, cov)
        if beta is not None and cov == ENDO:
            d01[a] += beta[a] @ f - f @ beta[a]
        elif beta is not None and cov == SECTION:
            d01[a] += np.einsum("...ij,...j->...i", beta[a], f)
    if part == "(0,1)":
        return d01
    if h is None:
        raise ValueError("metric h required for the (1,0) covariant derivative")
    apert = chern_potential(model, h)
    d10 = np.empty((n,) + f.shape, dtype=complex)
    for a in range(n):
        d10[a] = cov_d_bg(f, a, model, cov)
        if cov == ENDO:
            d10[a] += apert[a] @ f - f @ apert[a]
        elif cov == SECTION:
            d10[a] += np.einsum("...ij,...j->...i", apert[a], f)
    if part == "(1,0)":
        return d10
    return d10, d01


def chern_potential(model, h):
    """(1,0) potential of the Chern connection of (dbar_bg + beta, h),
    relative to the background: A_a = h^{-1} D'_bg h - h^{-1} beta_a^+ h."""
    n = model.lat.n
    hinv = fast_inv(h)
    out = np.empty((n,) + h.shape, dtype=complex)
    for a in range(n):
        out[a] = hinv @ cov_d_bg(h, a, model, ENDO)
        if model.beta is not None:
            out[a] -= hinv @ adjoint(model.beta[a]) @ h
    return out


def cocycle_check(model):
    """Deviation of the stored twist factors from a genuine integer-flux
    cocycle: max over directions/blocks of non-unitarity, non-uniformity of
    the per-step phase, and non-integrality of the total flux phase."""
    res = 0.0
    N = model.lat.grid
    for a in range(model.lat.n):
        p = model.twist_phase[a]                       # (N, R)
        res = max(res, float(np.max(np.abs(np.abs(p) - 1.0))))
        r = np.roll(p, -1, axis=0) * np.conj(p)        # per-step ratio
        rbar = r.mean(axis=0)
        res = max(res, float(np.max(np.abs(r - rbar))))
        res = max(res, float(np.max(np.abs(rbar ** N - 1.0))))
    return res


def form01_l2_sq(b, model):
    """Squared L^2 norm of a (0,1)-form field, |b|^2 = (2/kappa) sum ||b_a||_F^2."""
    lat = model.lat
    dens = (2.0 / lat.kappa) * sum(frob_sq(b[a]) for a in range(lat.n))
    return float(integrate(dens, lat))


def _dbar_closure(b, model):
    """The quantity whose vanishing makes dbar_bg + beta integrable.

    n=2: antisymmetrized closure D''_0 b_1 - D''_1 b_0 + [b_0, b_1].
    n=1: there is no (0,2) component; the coefficient section itself is
    required to be holomorphic, D''_0 b_0.
    """
    if model.lat.n == 1:
        return cov_dbar_bg(b[0], 0, model, ENDO)[None]
    out = (cov_dbar_bg(b[1], 0, model, ENDO) - cov_dbar_bg(b[0], 1, model, ENDO)
           + b[0] @ b[1] - b[1] @ b[0])
    return out[None]


def shift_autocorrelation(f, model, cov=ENDO):
    """Minimum over axes of the normalized twisted nearest-neighbor
    correlation Re<shift(f), f>/||f||^2.

    Smooth sections score near +1; lattice doubler modes (sawtooth
    alternation, on which central-difference symbols also vanish) score
    near -1 along some axis.
    """
    nrm = float(np.sum(np.abs(f) ** 2))
    if nrm == 0.0:
        return 1.0
    worst = 1.0
    for mu in range(model.lat.ndim_real):
        corr = float(np.real(np.vdot(f, shift(f, mu, 1, model, cov)))) / nrm
        worst = min(worst, corr)
    return worst


def project_holomorphic(beta0, model, tol=1e-8, max_iter=4000):
    """Project a strictly upper-triangular (0,1) perturbation onto the
    smooth near-kernel of the closure operator by least squares.

    The discrete closure operator inherits spurious sawtooth (doubler)
    near-kernel modes from the central-difference stencils; candidates with
    negative twisted autocorrelation are rejected, leaving the genuine
    Gaussian-localized kernel sections.  The residual is the full-grid
    ||closure(beta)||_{L^2} of the returned field.

    Returns (beta, residual) with ||beta||_{L^2} = 1.  A residual above
    `tol` means no adequate extension perturbation exists in this direction
    (e.g. a negative-degree Hom block); the caller decides the fallback.
    """
    lat = model.lat
    mask = _strict_upper_mask(model.rank)
    b = np.asarray(beta0, dtype=complex) * mask
    nrm = np.sqrt(form01_l2_sq(b, model))
    if nrm == 0.0:
        return b, 0.0
    b = b / nrm

    def closure_norm_sq(v):
        c = _dbar_closure(v, model)
        return float(integrate((2.0 / lat.kappa) * frob_sq(c[0]), lat))

    res0 = float(np.sqrt(closure_norm_sq(b)))
    if res0 < 0.1 * tol:
        return b, res0

    dof = lat.n * lat.npoints * int(mask.sum())
    if dof <= 2304:
        beta, res = _kernel_project_dense(b, model, mask, closure_norm_sq)
    else:
        beta, res = _kernel_project_descent(b, model, mask, closure_norm_sq,
                                            tol=tol, max_iter=max_iter)
    if beta is None or shift_autocorrelation(beta, model) < 0.2:
        return b, res0          # only artifact modes available: report failure
    return beta, res


def _kernel_project_dense(b0, model, mask, closure_norm_sq):
    """Near-kernel projection via the dense normal matrix, with doubler
    modes filtered out of the kernel cluster."""
    lat = model.lat
    sel = mask.astype(bool)
    nup = int(sel.sum())
    n = lat.n

    def unflatten(v):
        out = np.zeros((n,) + lat.shape + (model.rank, model.rank), dtype=complex)
        out[..., sel] = v.reshape((n,) + lat.shape + (nup,))
        return out

    def flatten(f):
        return f[..., sel].reshape(-1)

    dof = n * lat.npoints * nup
    L = np.empty((dof, dof), dtype=complex)
    basis = np.zeros(dof, dtype=complex)
    for j in range(dof):
        basis[j] = 1.0
        L[:, j] = flatten(_dbar_closure(unflatten(basis), model))
        basis[j] = 0.0
    w, v = np.linalg.eigh(L.conj().T @ L)
    thresh = max(w[0] * 10.0, w[-1] * 1e-14)
    cluster = v[:, w <= thresh]
    if cluster.shape[1] == 0:
        return None, float(np.sqrt(w[0]))

    # the cluster may be degenerate and eigh returns arbitrary mixtures of
    # smooth kernel sections with sawtooth doubler modes; diagonalize the
    # grid shifts restricted to the cluster and keep the sector where all
    # axis correlations are near +1 (smooth), rejecting alternating ones
    naxes = lat.ndim_real
    m_shift = np.zeros((cluster.shape[1], cluster.shape[1]), dtype=complex)
    for mu in range(naxes):
        shifted = np.stack(
            [flatten(shift(unflatten(cluster[:, j]), mu, 1, model, ENDO))
             for j in range(cluster.shape[1])], axis=1)
        m_shift += cluster.conj().T @ shifted
    w2, u2 = np.linalg.eigh(0.5 * (m_shift + m_shift.conj().T))
    smooth = u2[:, w2 > 0.2 * naxes]
    if smooth.shape[1] == 0:
        return None, float(np.sqrt(w[0]))
    kern = cluster @ smooth
    coeff = kern.conj().T @ flatten(b0)
    vec = kern @ coeff
    if np.linalg.norm(vec) < 1e-12:
        vec = kern[:, 0]
    beta = unflatten(vec)
    beta /= np.sqrt(form01_l2_sq(beta, model))
    return beta, float(np.sqrt(closure_norm_sq(beta)))


def _kernel_project_descent(b, model, mask, closure_norm_sq, tol, max_iter):
    """Normalized gradient descent with momentum on ||closure(beta)||^2."""
    lat = model.lat

    def cov_d_bg_adj(c, a):
        # adjoint of cov_dbar_bg on endo fields is -cov_d_bg (skew-adjoint
        # stencils, real diagonal background): <D'' x, y> = -<x, D' y>
        return cov_d_bg(c, a, model, ENDO)

    def adjoint_comm(va, c):
        # slot derivative of the [b0, b1] term
        return adjoint(va) @ c - c @ adjoint(va)

    def grad(v):
        c = _dbar_closure(v, model)[0]
        g = np.zeros_like(v)
        if lat.n == 1:
            g[0] = -cov_d_bg_adj(c, 0)
        else:
            g[1] = -cov_d_bg_adj(c, 0) + adjoint_comm(v[0], c)
            g[0] = +cov_d_bg_adj(c, 1) - adjoint_comm(v[1], c)
        return g * mask

    # power-iteration estimate of the top curvature of the objective
    rng = np.random.default_rng(0)
    p = (rng.standard_normal(b.shape) + 1j * rng.standard_normal(b.shape)) * mask
    p /= np.linalg.norm(p)
    lam = 1.0
    for _ in range(25):
        q = grad(p)
        lam = max(np.linalg.norm(q), 1e-12)
        p = q / lam
    eta = 0.9 / lam

    vel = np.zeros_like(b)
    mom = 0.9
    for _ in range(max_iter):
        g = grad(b)
        vel = mom * vel - eta * g
        b = b + vel
        b = b / np.sqrt(form01_l2_sq(b, model))
        if closure_norm_sq(b) < (0.3 * tol) ** 2:
            break
    return b, float(np.sqrt(closure_norm_sq(b)))


def build_background(lat, charges, beta=None):
    """Assemble a BundleModel from per-block integer charge tuples."""
    charges = np.atleast_2d(np.asarray(charges, dtype=np.int64))
    model = BundleModel(lat=lat, charges=charges, beta=beta)
    res = cocycle_check(model)
    if res > 1e-12:
        raise ValueError(f"twist cocycle residual {res:.3e} exceeds 1e-12")
    return model


# ---------------------------------------------------------------------------
# Random smooth grid-independent fields (Fourier synthesis with a fixed seed
# gives the same continuum object at every resolution).  Entries joining
# blocks of different charge are dressed by a reference section of the Hom
# line bundle so they are smooth across the twisted seam.

def reference_section(lat, dvec):
    """Smooth quasi-periodic section of the line bundle with charges dvec:
    a Gaussian theta sum per complex factor,
        u(x1, x2) = sum_j exp(-pi (x1 + j)^2) exp(-2 pi i d j x2),
    satisfying u(x1+1, x2) = exp(2 pi i d x2) u(x1, x2)."""
    out = np.ones(lat.shape, dtype=complex)
    for a, d in enumerate(dvec):
        if d == 0:
            continue
        x1 = lat.coord(2 * a)
        x2 = lat.coord(2 * a + 1)
        u = np.zeros(np.broadcast_shapes(x1.shape, x2.shape), dtype=complex)
        for j in range(-5, 6):
            u = u + np.exp(-np.pi * (x1 + j) ** 2) * np.exp(-2j * np.pi * d * j * x2)
        out = out * u
    return out


def hom_dressing(model):
    """(R, R) grid field of reference sections, entry (k, l) carrying the
    twist of Hom(block_l, block_k); diagonal entries are 1."""
    R = model.rank
    lat = model.lat
    out = np.ones(lat.shape + (R, R), dtype=complex)
    for k in range(R):
        for l in range(R):
            d = model.charges[k] - model.charges[l]
            if np.any(d):
                out[..., k, l] = reference_section(lat, d)
    return out


def random_smooth_scalar(lat, seed, kmax=2, amp=1.0, decay=2.0):
    rng = np.random.default_rng(seed)
    f = np.zeros(lat.shape, dtype=complex)
    x = lat.coords()
    ranges = [range(-kmax, kmax + 1)] * lat.ndim_real
    for k in itertools.product(*ranges):
        if all(ki == 0 for ki in k):
            continue
        c = (rng.standard_normal() + 1j * rng.standard_normal()) / (1 + sum(ki ** 2 for ki in k)) ** decay
        phase = sum(ki * xi for ki, xi in zip(k, x))
        f = f + c * np.exp(2j * np.pi * phase)
    f = f + np.conj(f)          # real field
    m = float(np.max(np.abs(f)))
    return (amp / m) * f.real if m > 0 else f.real


def random_smooth_matrix(model, seed, kmax=1, amp=1.0, decay=2.0):
    """Complex endomorphism field, smooth as a bundle section: band-limited
    Fourier synthesis entrywise, dressed by the Hom reference sections."""
    lat, rank = model.lat, model.rank
    rng = np.random.default_rng(seed)
    f = np.zeros(lat.shape + (rank, rank), dtype=complex)
    x = lat.coords()
    for k in itertools.product(*([range(-kmax, kmax + 1)] * lat.ndim_real)):
        c = (rng.standard_normal((rank, rank)) + 1j * rng.standard_normal((rank, rank)))
        c /= (1 + sum(ki ** 2 for ki in k)) ** decay
        phase = sum(ki * xi for ki, xi in zip(k, x))
        f = f + np.exp(2j * np.pi * phase)[..., None, None] * c
    f = f * hom_dressing(model)
    m = float(np.max(np.abs(f)))
    return (amp / m) * f


def random_smooth_hermitian(model, seed, kmax=1, amp=1.0):
    f = random_smooth_matrix(model, seed, kmax=kmax, amp=1.0)
    f = hermitize(f)
    m = float(np.max(np.abs(f)))
    return (amp / m) * f


def expm_hermitian(u):
    """exp(u) for a hermitian matrix field, via batched eigendecomposition."""
    w, v = np.linalg.eigh(u)
    return np.einsum("...ik,...k,...jk->...ij", v, np.exp(w), np.conj(v))


def random_positive_metric(model, seed, kmax=1, amp=0.3, det_normalize=True):
    """Random smooth positive hermitian metric h = exp(u)."""
    u = random_smooth_hermitian(model, seed, kmax=kmax, amp=amp)
    h = expm_hermitian(u)
    if det_normalize:
        h = det_normalized(h, model.lat)
    return h


def random_unitary_gauge(model, seed, kmax=1, amp=0.3):
    """Random smooth unitary gauge section g = exp(i u)."""
    u = random_smooth_hermitian(model, seed, kmax=kmax, amp=amp)
    w, v = np.linalg.eigh(u)
    return np.einsum("...ik,...k,...jk->...ij", v, np.exp(1j * w), np.conj(v))


def random_upper_perturbation(model, seed, kmax=1, amp=1.0):
    """Random strictly upper-triangular (0,1) perturbation candidate with
    the correct twist covariance (input to project_holomorphic)."""
    lat = model.lat
    mask = _strict_upper_mask(model.rank)
    out = np.empty((lat.n,) + lat.shape + (model.rank, model.rank), dtype=complex)
    for a in range(lat.n):
        out[a] = random_smooth_matrix(model, seed + 101 * a, kmax=kmax, amp=amp) * mask
    return out


def log_det_mean(h, lat):
    sign, logdet = np.linalg.slogdet(h)
    return float(integrate(logdet.real, lat) / (2 * np.pi))


def det_normalized(h, lat):
    """Rescale h so the grid mean of log det h is zero."""
    r = h.shape[-1]
    return h * np.exp(-log_det_mean(h, lat) / r)


def sqrt_hermitian(h):
    """Positive square root of a positive hermitian matrix field."""
    if h.shape[-1] == 2:
        # closed form: sqrt(h) = (h + sqrt(det) I) / sqrt(tr + 2 sqrt(det))
        det = (h[..., 0, 0] * h[..., 1, 1] - h[..., 0, 1] * h[..., 1, 0]).real
        tr = (h[..., 0, 0] + h[..., 1, 1]).real
        s = np.sqrt(det)
        denom = np.sqrt(tr + 2 * s)
        out = h.copy()
        out[..., 0, 0] += s
        out[..., 1, 1] += s
        return out / denom[..., None, None]
    if h.shape[-1] == 1:
        return np.sqrt(h.real).astype(complex)
    w, v = np.linalg.eigh(h)
    if np.any(w <= 0):
        raise ValueError("matrix field is not positive definite")
    return np.einsum("...ik,...k,...jk->...ij", v, np.sqrt(w), np.conj(v))


def is_positive(h):
    """True when the hermitian field h is positive definite everywhere."""
    try:
        np.linalg.cholesky(h)
        return True
    except np.linalg.LinAlgError:
        return False
