"""Exact combinatorics of Harder-Narasimhan types.

A type is a nonincreasing real R-tuple; equal-sum tuples carry the partial
order mu <= lam iff every leading partial sum of mu is <= that of lam.
Includes the block-checkpoint sufficiency criterion, the phi_alpha
monotonicity and separation properties, and extraction of a type from an
equilibrated spectrum field.
"""

from dataclasses import dataclass

import numpy as np

from .functionals import eig_desc, phi_alpha_tuple

PARTIAL_SUM_TOL = 1e-9


class NotEquilibratedError(RuntimeError):
    """Spectrum field varies in space beyond the clustering tolerance."""


@dataclass(frozen=True)
class SlopeVector:
    """Nonincreasing tuple of slopes with its partition into equal runs."""

    values: tuple
    partition: tuple    # cumulative ranks R_1 < ... < R_l = R

    def __post_init__(self):
        v = tuple(float(x) for x in self.values)
        if any(v[i] < v[i + 1] - PARTIAL_SUM_TOL for i in range(len(v) - 1)):
            raise ValueError(f"slope vector must be nonincreasing, got {v}")
        object.__setattr__(self, "values", v)
        p = tuple(int(x) for x in self.partition)
        if not p or p[-1] != len(v) or any(p[i] >= p[i + 1] for i in range(len(p) - 1)):
            raise ValueError(f"bad partition {p} for length {len(v)}")
        object.__setattr__(self, "partition", p)

    @classmethod
    def from_values(cls, values, tol=1e-9):
        v = [float(x) for x in values]
        part = []
        for i in range(1, len(v)):
            if abs(v[i] - v[i - 1]) > tol:
                part.append(i)
        part.append(len(v))
        return cls(values=tuple(v), partition=tuple(part))

    @property
    def rank(self):
        return len(self.values)

    def block_values(self):
        out, start = [], 0
        for end in self.partition:
            out.append((self.values[start], end - start))
            start = end
        return out


def _coerce(mu):
    if isinstance(mu, SlopeVector):
        return np.asarray(mu.values, dtype=float)
    v = np.asarray(mu, dtype=float)
    if np.any(v[:-1] < v[1:] - PARTIAL_SUM_TOL):
        raise ValueError(f"tuple must be nonincreasing, got {v}")
    return v


def leq(mu, lam, tol=PARTIAL_SUM_TOL):
    """Partial order on equal-sum nonincreasing tuples: all leading
    partial sums of mu are <= those of lam (within tol)."""
    m, l = _coerce(mu), _coerce(lam)
    if m.shape != l.shape:
        raise ValueError("tuples must have equal length")
    if abs(m.sum() - l.sum()) > tol * max(1.0, np.abs(m).sum()):
        raise ValueError(
            f"the order is defined only on equal-sum tuples ({m.sum()} vs {l.sum()})")
    return bool(np.all(np.cumsum(m) <= np.cumsum(l) + tol))


def shatz_sufficient(mu, lam, tol=PARTIAL_SUM_TOL):
    """Block-checkpoint comparison: when mu is constant on its partition
    blocks, checking the partial sums at the block endpoints suffices."""
    if not isinstance(mu, SlopeVector):
        mu = SlopeVector.from_values(mu)
    m = np.asarray(mu.values)
    start = 0
    for end in mu.partition:
        if np.ptp(m[start:end]) > tol:
            raise ValueError("mu must be constant on each partition block")
        start = end
    l = _coerce(lam)
    if abs(m.sum() - l.sum()) > tol * max(1.0, np.abs(m).sum()):
        raise ValueError("the order is defined only on equal-sum tuples")
    cm, cl = np.cumsum(m), np.cumsum(l)
    return bool(all(cm[k - 1] <= cl[k - 1] + tol for k in mu.partition))


def phi_monotone_check(mu, lam, alphas, tol=1e-12):
    """Verify phi_alpha(i mu) <= phi_alpha(i lam) for each alpha; requires
    mu <= lam in the partial order."""
    if not leq(mu, lam):
        raise ValueError("phi monotonicity requires mu <= lam")
    m, l = _coerce(mu), _coerce(lam)
    for a in alphas:
        if phi_alpha_tuple(m, a) > phi_alpha_tuple(l, a) + tol:
            return False
    return True


DEFAULT_ALPHA_GRID = tuple(np.arange(1.0, 3.0 + 1e-12, 0.25))


def distinguish_types(mu, lam, alpha_grid=DEFAULT_ALPHA_GRID, tol=1e-9):
    """Declare two nonnegative types equal iff phi_alpha agrees on the
    whole alpha grid.  Sound on exact equality; unequal types separate at
    some grid alpha (a finite-grid proxy for equality on a set with a
    limit point).  Negative entries must be shifted away by the caller."""
    m, l = _coerce(mu), _coerce(lam)
    if m.min() < 0 or l.min() < 0:
        raise ValueError("entries must be nonnegative; shift by N first")
    for a in alpha_grid:
        if abs(phi_alpha_tuple(m, a) - phi_alpha_tuple(l, a)) > tol:
            return False
    return True


def type_from_spectrum(i_lambda_f, cluster_tol=1e-3):
    """Extract the slope vector from an equilibrated Hermitian-Einstein
    tensor field: pointwise descending eigenvalues, spatially averaged,
    merged into blocks within cluster_tol.

    Raises NotEquilibratedError when any eigenvalue branch still varies in
    space by >= cluster_tol (the flow has not reached a critical point).
    """
    lam = eig_desc(i_lambda_f)
    flat = lam.reshape(-1, lam.shape[-1])
    means = flat.mean(axis=0)
    stds = flat.std(axis=0)
    if np.max(stds) >= cluster_tol:
        raise NotEquilibratedError(
            f"spectrum not equilibrated: spatial deviation {np.max(stds):.3e} "
            f">= cluster_tol {cluster_tol:.3e}")
    order = np.argsort(means)[::-1]
    means = means[order]
    part = []
    for i in range(1, len(means)):
        if means[i - 1] - means[i] > cluster_tol:
            part.append(i)
    part.append(len(means))
    # block-average merged values
    vals = means.copy()
    start = 0
    for end in part:
        vals[start:end] = vals[start:end].mean()
        start = end
    return SlopeVector(values=tuple(vals), partition=tuple(part))
