"""Flat Kahler torus discretization.

The torus is the unit cube [0,1)^{2n} with opposite faces identified,
n = 1 or 2 the complex dimension.  Real axes come in pairs: axis 2*a and
axis 2*a+1 make up the complex coordinate z_a = x_{2a} + i*x_{2a+1}.

Kahler form and normalization
-----------------------------
omega = kappa * sum_a dx_{2a} ^ dx_{2a+1}, with kappa = (2*pi)^(1/n), so
that the Riemannian volume is vol(X) = kappa^n = 2*pi and the contraction
of omega with itself is Lambda(omega) = n.  All pointwise norms carry the
metric factors implied by g = kappa * delta:

    endomorphism a (normal):   |a|^2 = sum |eig_i|^2 = ||a||_F^2
    (0,1)-form  b:             |b|^2 = (2/kappa)   * sum_a ||b_a||_F^2
    mixed 1-form:              |a|^2 = (2/kappa)   * sum (1,0) and (0,1)
    2-form F:                  |F|^2 = (4/kappa^2) * sum of all components

Derivatives are 4th-order central differences; integration is the uniform
Riemann sum weighted so that integrate(1) = 2*pi exactly (spectrally exact
for smooth periodic integrands).
"""

from dataclasses import dataclass, field

import numpy as np

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class TorusLattice:
    """Discretized flat Kahler torus, immutable after construction."""

    n: int                      # complex dimension, 1 or 2
    grid: int                   # points per real direction (even, >= 8)
    kappa: float = field(init=False)
    weight: float = field(init=False)   # quadrature weight per grid point
    spacing: float = field(init=False)

    def __post_init__(self):
        if self.n not in (1, 2):
            raise ValueError(f"complex dimension must be 1 or 2, got {self.n}")
        if self.grid < 8 or self.grid % 2 != 0:
            raise ValueError(
                f"grid must be even and >= 8 for usable 4th-order stencils, got {self.grid}")
        object.__setattr__(self, "kappa", TWO_PI ** (1.0 / self.n))
        object.__setattr__(self, "weight", TWO_PI / self.grid ** (2 * self.n))
        object.__setattr__(self, "spacing", 1.0 / self.grid)

    @property
    def ndim_real(self):
        return 2 * self.n

    @property
    def shape(self):
        return (self.grid,) * (2 * self.n)

    @property
    def npoints(self):
        return self.grid ** (2 * self.n)

    def coord(self, axis):
        """Coordinate array along `axis`, broadcastable over the grid."""
        x = np.arange(self.grid) / self.grid
        shape = [1] * (2 * self.n)
        shape[axis] = self.grid
        return x.reshape(shape)

    def coords(self):
        return [self.coord(mu) for mu in range(2 * self.n)]


def make_torus(n, grid):
    """Build a TorusLattice with vol = 2*pi and Lambda(omega) = n."""
    return TorusLattice(n=n, grid=grid)


def _check_grid_shape(f, lat, extra=0):
    want = lat.shape
    got = f.shape[: 2 * lat.n] if extra else f.shape
    if tuple(got) != want:
        raise ValueError(f"field shape {f.shape} does not match grid {want}")


def integrate(f, lat):
    """Integral of a scalar grid field against the volume form, vol = 2*pi.

    Uniform-weight Riemann sum on the periodic grid; exact for trigonometric
    polynomials below the Nyquist frequency.
    """
    f = np.asarray(f)
    _check_grid_shape(f, lat)
    return lat.weight * f.sum()


def integrate_field(f, lat):
    """Integrate over the grid axes only, keeping trailing (matrix) axes."""
    f = np.asarray(f)
    _check_grid_shape(f, lat, extra=1)
    return lat.weight * f.sum(axis=tuple(range(2 * lat.n)))


def frob_sq(a):
    """Pointwise squared Frobenius norm over the trailing matrix axes."""
    return np.einsum("...ij,...ij->...", a, np.conj(a)).real


def hermitian_part_deviation(a):
    return float(np.max(np.abs(a - np.conj(np.swapaxes(a, -1, -2)))))


def skew_part_deviation(a):
    return float(np.max(np.abs(a + np.conj(np.swapaxes(a, -1, -2)))))


def pointwise_norm(a, check=True, tol=1e-10):
    """Pointwise norm |a| = (sum_i |eig_i|^2)^(1/2) of a (skew-)hermitian field.

    For normal matrices this equals the Frobenius norm, which is what is
    computed; `check` verifies the input is hermitian or skew-hermitian.
    """
    a = np.asarray(a)
    if check and a.shape[-1] > 0:
        scale = max(1.0, float(np.max(np.abs(a))))
        if min(hermitian_part_deviation(a), skew_part_deviation(a)) > tol * scale:
            raise ValueError("field is neither hermitian nor skew-hermitian")
    return np.sqrt(frob_sq(a))


def lp_norm(f, p, lat, check=True):
    """L^p norm of a (skew-)hermitian endomorphism field; p >= 1 or inf."""
    if not (p == np.inf or p >= 1):
        raise ValueError(f"p must be >= 1 or inf, got {p}")
    ptw = pointwise_norm(f, check=check)
    _check_grid_shape(ptw, lat)
    if p == np.inf:
        return float(np.max(ptw))
    return float(integrate(ptw ** p, lat) ** (1.0 / p))


def lambda_contract(f11, lat, f20=None, f02=None, off_type_tol=1e-10):
    """Contraction Lambda(G) of a (1,1)-form-valued field with the Kahler form.

    `f11` has shape (n, n) + grid + (R, R) holding the components G_{a bbar}
    in the dz^a ^ dzbar^b basis.  Components of type (2,0)/(0,2), if passed,
    are contracted as zero; their size is reported via a returned residual.

    Returns (Lambda(G), off_type_norm).  Note Lambda(omega x I) = n * I.
    """
    f11 = np.asarray(f11)
    n = lat.n
    if f11.shape[:2] != (n, n):
        raise ValueError(f"expected leading component axes ({n},{n}), got {f11.shape[:2]}")
    out = (-2j / lat.kappa) * sum(f11[a, a] for a in range(n))
    off = 0.0
    for g in (f20, f02):
        if g is not None and g.size:
            off = max(off, float(np.max(np.abs(g))))
    if off > off_type_tol:
        import warnings
        warnings.warn(f"non-(1,1) components of size {off:.3e} contracted as zero")
    return out, off


def kahler_form_components(lat, rank=1):
    """Components omega_{a bbar} = (i*kappa/2) delta_{ab}, tensored with I_R."""
    n, g = lat.n, lat.grid
    eye = np.eye(rank, dtype=complex)
    f11 = np.zeros((n, n) + lat.shape + (rank, rank), dtype=complex)
    for a in range(n):
        f11[a, a] = (0.5j * lat.kappa) * eye
    return f11


def scalar_dstencil(f, axis, lat):
    """4th-order central difference of a periodic scalar field along `axis`."""
    h = lat.spacing
    return (-np.roll(f, -2, axis=axis) + 8 * np.roll(f, -1, axis=axis)
            - 8 * np.roll(f, 1, axis=axis) + np.roll(f, 2, axis=axis)) / (12 * h)
