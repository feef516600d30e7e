"""Torus setup and convention calibration.

Builds the flat Kahler tori, checks the volume normalization and the
contraction of the Kahler form, and evaluates the energy and Chern numbers
of the constant-curvature line bundle that pins every sign convention:
YM = pi mu^2, HYM = 2 pi mu^2, topo = -pi mu^2, c1^2 = mu^2/(4 pi).
"""

import numpy as np

from hymflow.lattice import make_torus, integrate, lambda_contract, \
    kahler_form_components
from hymflow import curvature as cv
from hymflow import functionals as fn

for n, grid in ((1, 16), (2, 12)):
    lat = make_torus(n, grid)
    vol = integrate(np.ones(lat.shape), lat)
    lam, _ = lambda_contract(kahler_form_components(lat, 1), lat)
    print(f"n={n}: kappa = {lat.kappa:.6f}  vol = {vol:.6f} (2 pi = {2*np.pi:.6f})"
          f"  Lambda(omega) = {lam.ravel()[0].real:.1f}")

lat = make_torus(2, 12)
for mu in (1.0, -2.0):
    F = cv.constant_curvature_line_bundle(lat, mu)
    deg, c1sq, topo = cv.chern_numbers(F, lat)
    y, h = fn.ym(F), fn.hym(F)
    print(f"mu = {mu:+.1f}: deg = {deg:+.4f}  c1^2 = {c1sq:.6f} "
          f"(mu^2/4pi = {mu**2/(4*np.pi):.6f})")
    print(f"          YM = {y:.6f} (pi mu^2 = {np.pi*mu**2:.6f})  "
          f"HYM = {h:.6f}  topo = {topo:.6f}")
    print(f"          closure YM - HYM - topo = {y - h - topo:+.2e}")
