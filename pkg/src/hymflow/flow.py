"""Time integration of the Hermitian-Yang-Mills metric flow and the
Yang-Mills connection flow, with the full monitor battery.

The metric flow evolves a positive hermitian metric h over the fixed
holomorphic structure,

    dh/dt = -2 h (i Lambda F_h - mu I),   mu = slope of the bundle,

by classical RK4 with an adaptive step, re-hermitization of every stage,
determinant renormalization, and positivity enforced by step halving.
The connection flow evolves dA/dt = -D*F with the trace part projected
out.  In the h^(1/2) unitary frame the metric-flow velocity equals -D*F
exactly, so all gauge-invariant monitors are comparable between the two.

Per accepted step the monotone battery (ym, hym, the (alpha, N) family,
sup |Lambda F|) is checked within the slack

    slack = 1e-8 + 10 * dt * (2*pi / grid^4) * (1 + sup|Lambda F|^3),

which budgets the 4th-order spatial truncation of the discrete energy
identities; violations beyond slack first trigger step halving and then
abort the run.
"""

import time
from dataclasses import dataclass, field

import numpy as np

from .lattice import frob_sq, integrate
from . import fields as fl
from . import curvature as cv
from .fields import ENDO, hermitize
from .functionals import eig_desc, hym_alpha_N_from_eigs, hym_of_type
from .hn import type_from_spectrum

STATUS_CONVERGED = "converged"
STATUS_TMAX = "t_max"
STATUS_ABORTED = "aborted"


class PositivityError(RuntimeError):
    """Metric lost positivity and step halving did not recover it."""


class MonotonicityError(RuntimeError):
    """A monotone functional increased beyond the documented slack."""


@dataclass
class MetricState:
    h: np.ndarray
    t: float = 0.0

    def copy(self):
        return MetricState(h=self.h.copy(), t=self.t)


@dataclass
class FlowScenario:
    """Validated inputs of a single flow run."""

    model: "fl.BundleModel"
    h0: np.ndarray | None = None          # metric flow initial data
    a0: np.ndarray | None = None          # connection flow initial data
    stepper: str = "hym"                  # "hym" | "ym"
    dt0: float = 0.0                      # 0 = automatic
    grad_tol: float = 1e-5
    t_max: float = 50.0
    sample_stride: int = 10
    alpha_N: tuple = ((1.0, 0.0), (1.5, 0.0), (2.0, 0.0), (3.0, 0.0))
    snapshot_times: tuple = ()
    psi: "np.ndarray | None" = None     # filtration projection target for iLF
    name: str = "run"


@dataclass
class FlowTrace:
    """Sampled time series plus per-step battery bookkeeping."""

    columns: list
    rows: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)   # (t, a01 unitary frame)
    step_t: list = field(default_factory=list)
    step_values: list = field(default_factory=list)  # per-step battery tuples
    monotone_ok: bool = True
    worst_violation: float = 0.0
    status: str = STATUS_TMAX
    wall_time: float = 0.0

    def as_array(self):
        return np.asarray(self.rows, dtype=float)

    def column(self, name):
        return self.as_array()[:, self.columns.index(name)]


def stability_bound(lat):
    """Stencil bound entering the adaptive step rule dt = c/(1 + sup + S).

    The linearized flow is a heat equation with diffusivity 1/kappa; the
    composed first-derivative stencil has |symbol| <= 1.372 * grid, so the
    stiffest eigenvalue is 2n (1.372 grid)^2 / kappa ~ 3.77 n grid^2/kappa
    and the RK4 real-axis limit 2.785 gives dt_max ~ 0.74 kappa/(n grid^2).
    With c = 0.7 the rule runs at roughly half that.
    """
    return 1.9 * lat.n * lat.grid ** 2 / lat.kappa


def battery_slack(dt, sup_lf, lat):
    return 1e-8 + 10.0 * dt * (2 * np.pi / lat.grid ** 4) * (1.0 + sup_lf ** 3)


def unitary_tensor(model, h, k_dbar=None):
    """Hermitian-Einstein tensor conjugated into the h^(1/2) unitary frame."""
    if k_dbar is None:
        k_dbar = cv.hermitian_einstein_tensor(model, h)
    s = fl.sqrt_hermitian(h)
    si = np.linalg.inv(s)
    return hermitize(s @ k_dbar @ si)


def grad_norm_unitary(model, h, k_dbar=None):
    """||D (i Lambda F)||_{L^2} in the unitary frame (stopping criterion)."""
    lat = model.lat
    s_field = unitary_tensor(model, h, k_dbar)
    a01 = cv.unitary_frame_connection(model, h)
    am = cv.real_components_from_a01(a01)
    dens = 0.0
    for mu in range(2 * lat.n):
        d = fl.cov_d_real(s_field, mu, model, ENDO) + am[mu] @ s_field - s_field @ am[mu]
        dens = dens + frob_sq(d)
    return float(np.sqrt(integrate(dens / lat.kappa, lat)))


# ---------------------------------------------------------------------------
# Steppers.

def hym_flow_step(state, model, dt, mu=None):
    """One RK4 step of dh/dt = -2 h (i Lambda F_h - mu I).

    Stages are re-hermitized; the result is determinant-renormalized.
    Raises PositivityError when the stepped metric is not positive.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if mu is None:
        mu = model.slope
    lat = model.lat
    eye = np.eye(model.rank)

    def rhs(h):
        k = cv.hermitian_einstein_tensor(model, h)
        return hermitize(-2.0 * (h @ (k - mu * eye)))

    h0 = state.h
    k1 = rhs(h0)
    k2 = rhs(hermitize(h0 + 0.5 * dt * k1))
    k3 = rhs(hermitize(h0 + 0.5 * dt * k2))
    k4 = rhs(hermitize(h0 + dt * k3))
    h1 = hermitize(h0 + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4))
    if not fl.is_positive(h1):
        raise PositivityError(f"metric lost positivity at t={state.t + dt:.4f}")
    h1 = fl.det_normalized(h1, lat)
    return MetricState(h=h1, t=state.t + dt)


def ym_flow_rhs(model, a01):
    """-D*F in complex (0,1) components.

    The determinant sector is handled as in the metric flow: the spatial
    mean of tr(D*F) vanishes identically (a codifferential has no constant
    mode), so the trace zero mode of the connection is preserved exactly
    and determinants are preserved in the mean.
    """
    fpairs = cv.curvature_real(model, a01)
    ds = cv.dstar_real(model, a01, fpairs)
    n = model.lat.n
    out = np.empty_like(a01)
    for a in range(n):
        out[a] = -0.5 * (ds[2 * a] + 1j * ds[2 * a + 1])
    return out, fpairs, ds


def ym_flow_step(a01, model, dt):
    """One RK4 step of dA/dt = -D*F on the (0,1) perturbation."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    k1, _, _ = ym_flow_rhs(model, a01)
    k2, _, _ = ym_flow_rhs(model, a01 + 0.5 * dt * k1)
    k3, _, _ = ym_flow_rhs(model, a01 + 0.5 * dt * k2)
    k4, _, _ = ym_flow_rhs(model, a01 + dt * k3)
    return a01 + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)


# ---------------------------------------------------------------------------
# Full runs.

TRACE_BASE = ["t", "ym", "hym", "sup_lambdaF", "grad_l2", "dstar_l2",
              "deg", "topo", "sigma_sup", "dconn_l2", "psi_dev_l2", "psi_dev_sup"]


def trace_columns(scenario):
    cols = list(TRACE_BASE)
    for i, (a, N) in enumerate(scenario.alpha_N):
        cols.insert(3 + i, f"hym_a{a:g}_N{N:g}")
    return cols


def _psi_deviation(k_unitary, psi, lat):
    """(L^2, sup) pointwise-norm distances of the HE tensor from psi."""
    if psi is None:
        return np.nan, np.nan
    d = k_unitary - psi
    dens = frob_sq(d)
    return float(np.sqrt(integrate(dens, lat))), float(np.sqrt(dens.max()))


def _ym_energy_of(model, a01):
    return cv.ym_energy_real(cv.curvature_real(model, a01), model.lat)


def _metric_monitors(model, h, scenario):
    """Per-step monitor set for the metric flow (full curvature)."""
    from .functionals import ym as ym_fn, hym as hym_fn
    F = cv.chern_curvature(model, h)
    lat = model.lat
    eigs = eig_desc(F.i_lambda_f)
    ymv = ym_fn(F)
    hymv = hym_fn(F)
    sup = float(np.sqrt((eigs ** 2).sum(axis=-1).max()))
    extras = [hym_alpha_N_from_eigs(eigs, a, N, lat) for (a, N) in scenario.alpha_N]
    return F, ymv, hymv, sup, extras


def run(scenario):
    """Integrate a scenario to convergence (||D Lambda F|| < grad_tol),
    t_max, or an invariant violation.  Returns (trace, final_state)."""
    t_start = time.time()
    model = scenario.model
    lat = model.lat
    if scenario.stepper == "ym":
        return _run_ym(scenario, t_start)
    mu = model.slope
    state = MetricState(h=np.array(scenario.h0, dtype=complex), t=0.0)
    state.h = fl.det_normalized(hermitize(state.h), lat)
    if not fl.is_positive(state.h):
        raise PositivityError("initial metric is not positive definite")

    trace = FlowTrace(columns=trace_columns(scenario))
    sbound = stability_bound(lat)
    floor = hym_of_type(np.sort(model.block_slopes)[::-1], 2, 0)
    snap_due = sorted(scenario.snapshot_times)
    step = 0

    def sample(h, tnow, dconn, F, ymv, hymv, sup, extras):
        deg, _, topo = cv.chern_numbers(F, lat)
        g = grad_norm_unitary(model, h)
        dev2, devs = _psi_deviation(F.i_lambda_f, scenario.psi, lat)
        trace.rows.append([tnow, ymv, hymv] + extras
                          + [sup, g, g, deg, topo, np.nan, dconn, dev2, devs])
        return g

    F0, ym0, hym0, sup0, extra0 = _metric_monitors(model, state.h, scenario)
    sample(state.h, 0.0, 0.0, F0, ym0, hym0, sup0, extra0)
    prev = (ym0, hym0, sup0, extra0)
    a01_prev = cv.unitary_frame_connection(model, state.h)
    # snapshots follow the L^2-gradient (connection) path itself: the
    # h^(1/2) frame of the metric flow drifts from it by a time-dependent
    # real gauge, which the Cauchy estimate does not allow
    a_ym = a01_prev.copy() if snap_due else None
    if snap_due and snap_due[0] <= 0.0:
        trace.snapshots.append((0.0, a_ym.copy(), _ym_energy_of(model, a_ym)))
        snap_due.pop(0)
    trace.step_t.append(0.0)
    trace.step_values.append((ym0, hym0, sup0))

    dt = scenario.dt0 if scenario.dt0 > 0 else 0.7 / (1.0 + sup0 + sbound)
    status = STATUS_TMAX
    while state.t < scenario.t_max - 1e-12:
        dt_try = min(dt, scenario.t_max - state.t)
        accepted = False
        viol = 0.0
        for attempt in range(20):
            try:
                new_state = hym_flow_step(state, model, dt_try, mu=mu)
            except PositivityError:
                dt_try *= 0.5
                continue
            F, ym_v, hym_v, sup_v, extra_v = _metric_monitors(model, new_state.h, scenario)
            slack = battery_slack(dt_try, prev[2], lat)
            viol = max(ym_v - prev[0], hym_v - prev[1], sup_v - prev[2],
                       max((ev - pv) for ev, pv in zip(extra_v, prev[3])))
            if viol > slack:
                if attempt >= 11:
                    trace.monotone_ok = False
                    trace.worst_violation = max(trace.worst_violation, viol)
                    trace.status = STATUS_ABORTED
                    trace.wall_time = time.time() - t_start
                    raise MonotonicityError(
                        f"monotone battery violated by {viol:.3e} (slack {slack:.3e}) "
                        f"at t={state.t:.4f} even at dt={dt_try:.2e}")
                dt_try *= 0.5
                continue
            accepted = True
            break
        if not accepted:
            trace.status = STATUS_ABORTED
            trace.wall_time = time.time() - t_start
            raise PositivityError(f"no acceptable step at t={state.t:.4f}")

        trace.worst_violation = max(trace.worst_violation, viol)
        state = new_state
        step += 1
        trace.step_t.append(state.t)
        trace.step_values.append((ym_v, hym_v, sup_v))
        if hym_v < floor - 1e-6:
            trace.status = STATUS_ABORTED
            raise MonotonicityError(
                f"HYM dropped below the type floor: {hym_v:.8f} < {floor:.8f} - 1e-6")
        prev = (ym_v, hym_v, sup_v, extra_v)

        if a_ym is not None and snap_due:
            # the connection-flow companion exists for the Cauchy monitor;
            # it is stopped after the last requested snapshot (near an
            # unstable critical point the discrete connection flow drifts
            # off its stratum at late times)
            a_ym = ym_flow_step(a_ym, model, dt_try)
            while snap_due and state.t >= snap_due[0] - 1e-12:
                trace.snapshots.append((state.t, a_ym.copy(), _ym_energy_of(model, a_ym)))
                snap_due.pop(0)

        if step % scenario.sample_stride == 0 or state.t >= scenario.t_max - 1e-12:
            a01_now = cv.unitary_frame_connection(model, state.h)
            dconn = np.sqrt((4.0 / lat.kappa) * sum(
                float(integrate(frob_sq(a01_now[a] - a01_prev[a]), lat))
                for a in range(lat.n)))
            a01_prev = a01_now
            g = sample(state.h, state.t, dconn, F, ym_v, hym_v, sup_v, extra_v)
            if g < scenario.grad_tol:
                status = STATUS_CONVERGED
                break
        dt = 0.7 / (1.0 + prev[2] + sbound)

    trace.status = status
    trace.wall_time = time.time() - t_start
    return trace, state


def _run_ym(scenario, t_start):
    """Connection-flow variant of run()."""
    model = scenario.model
    lat = model.lat
    a01 = np.array(scenario.a0, dtype=complex)
    trace = FlowTrace(columns=trace_columns(scenario))
    sbound = stability_bound(lat)
    floor = hym_of_type(np.sort(model.block_slopes)[::-1], 2, 0)

    def monitors(a):
        fpairs = cv.curvature_real(model, a)
        k = hermitize(cv.i_lambda_from_real(fpairs, lat))
        eigs = eig_desc(k)
        ymv = cv.ym_energy_real(fpairs, lat)
        hymv = float(integrate((eigs ** 2).sum(axis=-1), lat))
        sup = float(np.sqrt((eigs ** 2).sum(axis=-1).max()))
        extras = [hym_alpha_N_from_eigs(eigs, al, N, lat) for (al, N) in scenario.alpha_N]
        deg = float(integrate(np.einsum("...ii->...", k).real, lat)) / (2 * np.pi)
        topo = cv.topo_real(fpairs, lat)
        return fpairs, k, eigs, ymv, hymv, sup, extras, deg, topo

    def grad_of(a, fpairs, k):
        am = cv.real_components_from_a01(a)
        dens = 0.0
        for mu in range(2 * lat.n):
            d = fl.cov_d_real(k, mu, model, ENDO) + am[mu] @ k - k @ am[mu]
            dens = dens + frob_sq(d)
        return float(np.sqrt(integrate(dens / lat.kappa, lat)))

    fpairs, k, eigs, ymv, hymv, sup, extras, deg, topo = monitors(a01)
    ds = cv.dstar_real(model, a01, fpairs)
    ds_l2 = float(np.sqrt(integrate(sum(frob_sq(d) for d in ds) / lat.kappa, lat)))
    g = grad_of(a01, fpairs, k)
    dev2, devs = _psi_deviation(hermitize(k), scenario.psi, lat)
    trace.rows.append([0.0, ymv, hymv] + extras
                      + [sup, g, ds_l2, deg, topo, np.nan, 0.0, dev2, devs])
    trace.step_t.append(0.0)
    trace.step_values.append((ymv, hymv, sup))
    prev = (ymv, hymv, sup, extras)
    snap_due = sorted(scenario.snapshot_times)
    if snap_due and snap_due[0] <= 0.0:
        trace.snapshots.append((0.0, a01.copy(), ymv))
        snap_due.pop(0)

    t = 0.0
    step = 0
    dt = scenario.dt0 if scenario.dt0 > 0 else 0.7 / (1.0 + sup + sbound)
    status = STATUS_TMAX
    while t < scenario.t_max - 1e-12:
        dt_try = min(dt, scenario.t_max - t)
        for attempt in range(20):
            a_new = ym_flow_step(a01, model, dt_try)
            fpairs, k, eigs, ymv, hymv, sup, extras, deg, topo = monitors(a_new)
            slack = battery_slack(dt_try, prev[2], lat)
            viol = max(ymv - prev[0], hymv - prev[1], sup - prev[2],
                       max((ev - pv) for ev, pv in zip(extras, prev[3])))
            if viol > slack:
                dt_try *= 0.5
                if attempt >= 11:
                    trace.monotone_ok = False
                    trace.status = STATUS_ABORTED
                    raise MonotonicityError(
                        f"energy increase {viol:.3e} beyond slack {slack:.3e} at t={t:.4f}")
                continue
            break
        trace.worst_violation = max(trace.worst_violation, viol)
        a01 = a_new
        t += dt_try
        step += 1
        trace.step_t.append(t)
        trace.step_values.append((ymv, hymv, sup))
        if hymv < floor - 1e-6:
            trace.status = STATUS_ABORTED
            raise MonotonicityError(f"HYM below type floor at t={t:.4f}")
        prev = (ymv, hymv, sup, extras)
        while snap_due and t >= snap_due[0] - 1e-12:
            trace.snapshots.append((t, a01.copy(), ymv))
            snap_due.pop(0)
        if step % scenario.sample_stride == 0 or t >= scenario.t_max - 1e-12:
            ds = cv.dstar_real(model, a01, fpairs)
            ds_l2 = float(np.sqrt(integrate(sum(frob_sq(d) for d in ds) / lat.kappa, lat)))
            g = grad_of(a01, fpairs, k)
            dev2, devs = _psi_deviation(hermitize(k), scenario.psi, lat)
            trace.rows.append([t, ymv, hymv] + extras
                              + [sup, g, ds_l2, deg, topo, np.nan, np.nan, dev2, devs])
            if g < scenario.grad_tol:
                status = STATUS_CONVERGED
                break
        dt = 0.7 / (1.0 + sup + sbound)

    trace.status = status if trace.status != STATUS_ABORTED else trace.status
    trace.wall_time = time.time() - t_start
    return trace, a01


def final_type(model, h, cluster_tol=1e-3):
    """Slope vector extracted from the equilibrated final metric."""
    s_field = unitary_tensor(model, h)
    return type_from_spectrum(s_field, cluster_tol=cluster_tol)


def cauchy_monitor(trace, lat, tol=1e-8):
    """Check ||D_{t'} - D_t||^2 <= (ym(t) - ym(t'))/2 + tol on every stored
    snapshot pair; returns (list of (t, t', dist2, bound), max violation)."""
    snaps = trace.snapshots
    if len(snaps) < 2:
        raise ValueError("need at least two stored snapshots")
    out = []
    worst = -np.inf
    for i in range(len(snaps)):
        for j in range(i + 1, len(snaps)):
            t0, a0, ym0 = snaps[i]
            t1, a1, ym1 = snaps[j]
            d2 = (4.0 / lat.kappa) * sum(
                float(integrate(frob_sq(a1[a] - a0[a]), lat)) for a in range(a0.shape[0]))
            bound = 0.5 * (ym0 - ym1)
            out.append((t0, t1, d2, bound))
            worst = max(worst, d2 - bound)
    return out, worst


def run_paired(scenario, h0_b, sigma_slack=None):
    """Two metric flows over the same holomorphic structure in lockstep;
    returns (times, sup sigma series, traceA, traceB, final states).

    The sup sigma series must be nonincreasing within the per-step slack.
    """
    from .functionals import sigma_distance
    model = scenario.model
    lat = model.lat
    mu = model.slope
    sa = MetricState(h=fl.det_normalized(hermitize(np.array(scenario.h0, dtype=complex)), lat))
    sb = MetricState(h=fl.det_normalized(hermitize(np.array(h0_b, dtype=complex)), lat))
    sbound = stability_bound(lat)
    times, sigmas = [0.0], [sigma_distance(sa.h, sb.h)[1]]
    t = 0.0
    step = 0
    worst = 0.0
    while t < scenario.t_max - 1e-12:
        ka = cv.hermitian_einstein_tensor(model, sa.h)
        kb = cv.hermitian_einstein_tensor(model, sb.h)
        supv = max(float(np.sqrt(frob_sq(ka).max())), float(np.sqrt(frob_sq(kb).max())))
        dt = min(0.7 / (1.0 + supv + sbound), scenario.t_max - t)
        sa = hym_flow_step(sa, model, dt, mu=mu)
        sb = hym_flow_step(sb, model, dt, mu=mu)
        t += dt
        step += 1
        if step % scenario.sample_stride == 0 or t >= scenario.t_max - 1e-12:
            s_now = sigma_distance(sa.h, sb.h)[1]
            slack = sigma_slack if sigma_slack is not None else battery_slack(
                dt * scenario.sample_stride, supv, lat)
            worst = max(worst, s_now - sigmas[-1])
            if s_now > sigmas[-1] + slack:
                raise MonotonicityError(
                    f"sup sigma increased by {s_now - sigmas[-1]:.3e} at t={t:.4f}")
            times.append(t)
            sigmas.append(s_now)
    return np.array(times), np.array(sigmas), sa, sb, worst
