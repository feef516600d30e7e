"""Scenario configuration, execution, reporting, and property-test driver.

Configs are TOML (key-value with nested tables).  Unknown keys are hard
errors; every default is echoed into the output manifest so a run is fully
reproducible from config + seed + package version.
"""

import json
import os
import sys
from dataclasses import dataclass, field

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:            # python < 3.11
    import tomli as tomllib

from . import __version__
from .lattice import make_torus, lp_norm
from . import fields as fl
from . import curvature as cv
from . import functionals as fn
from . import flow as fw
from . import hn
from .checkpoint import save_field, load_field, metric_meta, validate_metric_checkpoint


class ConfigError(ValueError):
    pass


_SCHEMA = {
    "name": str,
    "lattice": {"n": int, "grid": int},
    "bundle": {"rank": int, "charges": list, "extension_strength": float,
               "beta_seed": int},
    "initial_metric": {"recipe": str, "amplitude": float, "seed": int, "path": str},
    "initial_metric_b": {"recipe": str, "amplitude": float, "seed": int, "path": str},
    "flow": {"stepper": str, "dt0": float, "grad_tol": float, "t_max": float,
             "sample_stride": int},
    "monitors": {"alpha_N": list, "sigma_pair": bool, "snapshot_times": list,
                 "cluster_tol": float},
    "output": {"directory": str},
}

_DEFAULTS = {
    "bundle": {"extension_strength": 0.0, "beta_seed": 7},
    "initial_metric": {"recipe": "identity", "amplitude": 0.3, "seed": 11, "path": ""},
    "initial_metric_b": {"recipe": "identity", "amplitude": 0.3, "seed": 12, "path": ""},
    "flow": {"stepper": "hym", "dt0": 0.0, "grad_tol": 1e-5, "t_max": 50.0,
             "sample_stride": 10},
    "monitors": {"alpha_N": [[1.0, 0.0], [1.5, 0.0], [2.0, 0.0], [3.0, 0.0]],
                 "sigma_pair": False, "snapshot_times": [], "cluster_tol": 1e-3},
    "output": {"directory": ""},
}

INTEGRABILITY_TOL = 1e-6
COCYCLE_TOL = 1e-12


@dataclass
class ScenarioConfig:
    name: str
    lattice: dict
    bundle: dict
    initial_metric: dict
    flow: dict
    monitors: dict
    output: dict
    initial_metric_b: dict = field(default_factory=dict)

    def resolved(self):
        return {
            "name": self.name, "lattice": self.lattice, "bundle": self.bundle,
            "initial_metric": self.initial_metric,
            "initial_metric_b": self.initial_metric_b,
            "flow": self.flow, "monitors": self.monitors, "output": self.output,
            "version": __version__,
        }


def _check_keys(d, schema, path=""):
    for k, v in d.items():
        if k not in schema:
            raise ConfigError(f"unknown key {path}{k!r}")
        if isinstance(schema[k], dict):
            if not isinstance(v, dict):
                raise ConfigError(f"{path}{k} must be a table")
            _check_keys(v, schema[k], path=f"{path}{k}.")


def parse_config(text):
    """Parse and validate a TOML scenario document."""
    try:
        doc = tomllib.loads(text)
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"malformed config: {e}") from e
    _check_keys(doc, _SCHEMA)
    if "name" not in doc:
        raise ConfigError("missing required key 'name'")
    if "lattice" not in doc or "n" not in doc["lattice"] or "grid" not in doc["lattice"]:
        raise ConfigError("missing required table 'lattice' with n and grid")
    if "bundle" not in doc or "charges" not in doc["bundle"]:
        raise ConfigError("missing required table 'bundle' with charges")

    cfg = {}
    for section, defaults in _DEFAULTS.items():
        merged = dict(defaults)
        merged.update(doc.get(section, {}))
        cfg[section] = merged
    cfg["lattice"] = dict(doc["lattice"])
    cfg["name"] = doc["name"]

    n, grid = cfg["lattice"]["n"], cfg["lattice"]["grid"]
    try:
        make_torus(n, grid)
    except ValueError as e:
        raise ConfigError(f"lattice: {e}") from e

    charges = cfg["bundle"]["charges"]
    rank = cfg["bundle"].get("rank", len(charges))
    cfg["bundle"]["rank"] = rank
    arr = np.asarray(charges)
    if arr.ndim != 2 or arr.shape != (rank, n):
        raise ConfigError(
            f"bundle.charges must be a rank x n table of integers, got shape {arr.shape}")
    if np.any(arr != np.round(arr)):
        raise ConfigError("bundle.charges must be integers")

    for a, N in cfg["monitors"]["alpha_N"]:
        if a < 1:
            raise ConfigError(f"monitors.alpha_N: alpha must be >= 1, got {a}")
    if not cfg["monitors"]["alpha_N"]:
        raise ConfigError("monitors.alpha_N must be nonempty")
    if cfg["flow"]["stepper"] not in ("hym", "ym"):
        raise ConfigError(f"flow.stepper must be 'hym' or 'ym'")
    recipes = ("identity", "scalar_bump", "block_mixing", "block_scale", "checkpoint")
    for key in ("initial_metric", "initial_metric_b"):
        if cfg[key]["recipe"] not in recipes:
            raise ConfigError(f"{key}.recipe must be one of {recipes}")
    return ScenarioConfig(
        name=cfg["name"], lattice=cfg["lattice"], bundle=cfg["bundle"],
        initial_metric=cfg["initial_metric"], initial_metric_b=cfg["initial_metric_b"],
        flow=cfg["flow"], monitors=cfg["monitors"], output=cfg["output"])


def load_config(path):
    with open(path, "r", encoding="utf-8") as f:
        return parse_config(f.read())


# ---------------------------------------------------------------------------
# Scenario assembly.

def build_model(cfg):
    """Background + projected extension perturbation, gated on the cocycle
    and integrability residuals."""
    lat = make_torus(cfg.lattice["n"], cfg.lattice["grid"])
    model = fl.build_background(lat, cfg.bundle["charges"])
    beta_report = {"requested": cfg.bundle["extension_strength"], "residual": 0.0,
                   "used": 0.0}
    s = cfg.bundle["extension_strength"]
    if s != 0.0 and model.rank > 1:
        beta0 = fl.random_upper_perturbation(model, seed=cfg.bundle["beta_seed"])
        if lat.n == 2:
            # seed the search inside the exactly closed sector: profiles
            # constant along complex factors with no charge difference
            beta0 = _flatten_uncharged_factors(beta0, model)
        beta, res = fl.project_holomorphic(beta0, model, tol=1e-8)
        beta_report["residual"] = res
        # truncation-scale residuals (stencil order) mean a genuine kernel
        # section was found; order-one residuals mean none exists
        if res > 0.05:
            beta_report["used"] = 0.0   # no adequate extension; metric-only
        else:
            model = model.with_beta(s * beta)
            beta_report["used"] = s
    res_c = fl.cocycle_check(model)
    if res_c > COCYCLE_TOL:
        raise ConfigError(f"cocycle residual {res_c:.3e} exceeds {COCYCLE_TOL}")
    if lat.n == 2:
        eye = np.broadcast_to(np.eye(model.rank, dtype=complex),
                              lat.shape + (model.rank, model.rank))
        F = cv.chern_curvature(model, eye)
        if F.f02_residual > INTEGRABILITY_TOL:
            raise ConfigError(
                f"integrability residual {F.f02_residual:.3e} exceeds {INTEGRABILITY_TOL}")
    return model, beta_report


def _flatten_uncharged_factors(beta0, model):
    """Shape the n=2 seed so it is exactly closed when possible: per upper
    entry, keep only the component along the (single) charged factor and
    make it constant along the uncharged one; a fully uncharged entry is
    averaged to a constant.  Entries charged on both factors are left for
    the iterative projector."""
    out = beta0.copy()
    lat = model.lat
    for k in range(model.rank):
        for l in range(k + 1, model.rank):
            d = model.charges[k] - model.charges[l]
            charged = [a for a in range(lat.n) if d[a] != 0]
            if len(charged) == 2:
                continue
            for comp in range(lat.n):
                if charged and comp != charged[0]:
                    out[comp, ..., k, l] = 0.0
                    continue
                flat_axes = tuple(ax for a in range(lat.n) if a not in charged
                                  for ax in (2 * a, 2 * a + 1))
                if flat_axes:
                    out[comp, ..., k, l] = out[comp, ..., k, l].mean(
                        axis=flat_axes, keepdims=True)
    return out


def build_initial_metric(cfg, model, section):
    lat = model.lat
    R = model.rank
    params = section
    recipe = params["recipe"]
    if recipe == "identity":
        return np.broadcast_to(np.eye(R, dtype=complex), lat.shape + (R, R)).copy()
    if recipe == "scalar_bump":
        u = fl.random_smooth_scalar(lat, params["seed"], kmax=1, amp=params["amplitude"])
        h = np.zeros(lat.shape + (R, R), dtype=complex)
        idx = np.arange(R)
        h[..., idx, idx] = np.exp(u)[..., None]
        return fl.det_normalized(h, lat)
    if recipe == "block_mixing":
        return fl.random_positive_metric(model, params["seed"], kmax=1,
                                         amp=params["amplitude"])
    if recipe == "block_scale":
        # constant diagonal metric diag(e^a, e^-a, ...), det-normalized
        expo = params["amplitude"] * np.linspace(1.0, -1.0, R)
        h = np.zeros(lat.shape + (R, R), dtype=complex)
        idx = np.arange(R)
        h[..., idx, idx] = np.exp(expo)
        return fl.det_normalized(h, lat)
    if recipe == "checkpoint":
        arr, header = load_field(params["path"])
        validate_metric_checkpoint(arr, header, model)
        return arr
    raise ConfigError(f"unknown initial metric recipe {recipe!r}")


def make_flow_scenario(cfg, model):
    h0 = build_initial_metric(cfg, model, cfg.initial_metric)
    a0 = None
    if cfg.flow["stepper"] == "ym":
        a0 = cv.unitary_frame_connection(model, h0)
    # deviation target: the filtration projection built from the exact
    # block projections, Psi = diag of the background slopes
    psi = np.diag(model.block_slopes).astype(complex)
    return fw.FlowScenario(
        model=model, h0=h0, a0=a0, stepper=cfg.flow["stepper"],
        dt0=cfg.flow["dt0"], grad_tol=cfg.flow["grad_tol"],
        t_max=cfg.flow["t_max"], sample_stride=cfg.flow["sample_stride"],
        alpha_N=tuple((float(a), float(N)) for a, N in cfg.monitors["alpha_N"]),
        snapshot_times=tuple(cfg.monitors["snapshot_times"]),
        psi=psi, name=cfg.name)


# ---------------------------------------------------------------------------
# Execution and reporting.

def _write_trace_csv(path, trace):
    with open(path, "w", encoding="utf-8") as f:
        f.write(",".join(trace.columns) + "\n")
        for row in trace.rows:
            f.write(",".join(repr(float(x)) for x in row) + "\n")


def constructed_type(model):
    """Slope vector of the background blocks (the scenario's built type)."""
    vals = np.sort(model.block_slopes)[::-1]
    return hn.SlopeVector.from_values(vals)


def run_scenario(cfg, out_root=None):
    """Execute a scenario; write trace CSV, checkpoint, summary JSON.

    Returns (summary dict, exit code): 0 converged/ok, 2 invariant
    violation, 3 t_max reached without equilibration.
    """
    out_root = out_root or os.environ.get("HYMFLOW_OUT", "runs")
    outdir = cfg.output["directory"] or os.path.join(out_root, cfg.name)
    os.makedirs(outdir, exist_ok=True)
    with open(os.path.join(outdir, "manifest.json"), "w", encoding="utf-8") as f:
        json.dump(cfg.resolved(), f, indent=2, sort_keys=True)

    model, beta_report = build_model(cfg)
    scenario = make_flow_scenario(cfg, model)
    built = constructed_type(model)
    floor = fn.hym_of_type(built, 2, 0)

    sigma_series = None
    try:
        if cfg.monitors["sigma_pair"]:
            h0b = build_initial_metric(cfg, model, cfg.initial_metric_b)
            times, sigmas, sa, sb, worst_sigma = fw.run_paired(scenario, h0b)
            # a paired run reports the sigma series; the primary trace comes
            # from a fresh standalone run of the first metric
            trace, final_state = fw.run(scenario)
            sigma_series = {"t": times.tolist(), "sigma_sup": sigmas.tolist(),
                            "worst_increase": worst_sigma}
        else:
            trace, final_state = fw.run(scenario)
    except (fw.MonotonicityError, fw.PositivityError) as e:
        summary = {"name": cfg.name, "error": str(e), "monotone_ok": False,
                   "converged": False}
        with open(os.path.join(outdir, "summary.json"), "w", encoding="utf-8") as f:
            json.dump(summary, f, indent=2, sort_keys=True)
        return summary, 2

    _write_trace_csv(os.path.join(outdir, "trace.csv"), trace)

    if scenario.stepper == "hym":
        h_final = final_state.h
        save_field(os.path.join(outdir, "final_state.ckpt"), h_final,
                   metric_meta(model, kind="metric", t=final_state.t))
        try:
            extracted = fw.final_type(model, h_final,
                                      cluster_tol=cfg.monitors["cluster_tol"])
            final_type_list = list(extracted.values)
            equilibrated = True
        except hn.NotEquilibratedError:
            extracted = None
            final_type_list = None
            equilibrated = False
    else:
        save_field(os.path.join(outdir, "final_state.ckpt"), final_state,
                   metric_meta(model, kind="connection01"))
        k = fl.hermitize(cv.i_lambda_from_real(
            cv.curvature_real(model, final_state), model.lat))
        try:
            extracted = hn.type_from_spectrum(k, cluster_tol=cfg.monitors["cluster_tol"])
            final_type_list = list(extracted.values)
            equilibrated = True
        except hn.NotEquilibratedError:
            extracted = None
            final_type_list = None
            equilibrated = False

    arr = trace.as_array()
    hym_final = float(trace.column("hym")[-1])
    deg_drift = float(np.ptp(trace.column("deg")))
    topo_drift = float(np.ptp(trace.column("topo")))
    summary = {
        "name": cfg.name,
        "status": trace.status,
        "converged": trace.status == fw.STATUS_CONVERGED,
        "equilibrated": equilibrated,
        "final_type": final_type_list,
        "constructed_type": list(built.values),
        "type_leq_ok": (bool(hn.leq(built, extracted))
                        if extracted is not None and _sums_match(built, extracted)
                        else None),
        "hym_final": hym_final,
        "hym_floor": floor,
        "floor_ok": bool(np.all(np.array(trace.step_values)[:, 1] >= floor - 1e-6)),
        "monotone_ok": bool(trace.monotone_ok),
        "worst_violation": float(trace.worst_violation),
        "chern_drift": {"deg": deg_drift, "topo": topo_drift},
        "beta": beta_report,
        "grad_final": float(trace.column("grad_l2")[-1]),
        "wall_time": trace.wall_time,
        "steps": len(trace.step_t) - 1,
    }
    if sigma_series is not None:
        summary["sigma"] = {"final": sigma_series["sigma_sup"][-1],
                            "worst_increase": sigma_series["worst_increase"]}
        with open(os.path.join(outdir, "sigma.json"), "w", encoding="utf-8") as f:
            json.dump(sigma_series, f, indent=2)
    with open(os.path.join(outdir, "summary.json"), "w", encoding="utf-8") as f:
        json.dump(summary, f, indent=2, sort_keys=True)

    if not summary["monotone_ok"] or not summary["floor_ok"]:
        return summary, 2
    if not summary["converged"]:
        return summary, 3
    return summary, 0


def _sums_match(a, b, tol=1e-6):
    return abs(sum(a.values) - sum(b.values)) <= tol * max(1.0, abs(sum(a.values)))


# ---------------------------------------------------------------------------
# Randomized property suite.

def run_property_suite(seed=0, sizes=None, mutants=None, out=None):
    """Randomized invariant batteries; any counterexample is printed with
    its inputs and fails the suite.  `mutants` injects deliberate bugs to
    verify the suite catches them (e.g. {"leq": True})."""
    sizes = dict(sizes or {})
    counts = {
        "trace_bound": sizes.get("trace_bound", 10000),
        "leq_axioms": sizes.get("leq_axioms", 2000),
        "shatz": sizes.get("shatz", 10000),
        "phi_monotone": sizes.get("phi_monotone", 10000),
        "norm_equiv": sizes.get("norm_equiv", 1000),
        "sigma_symmetry": sizes.get("sigma_symmetry", 2000),
        "distinguish": sizes.get("distinguish", 2000),
    }
    mutants = mutants or {}
    rng = np.random.default_rng(seed)
    failures = []

    def leq_maybe_mutant(mu, lam):
        val = hn.leq(mu, lam)
        return (not val) if mutants.get("leq") else val

    # (1) trace-projection inequality, R <= 6
    for i in range(counts["trace_bound"]):
        r = int(rng.integers(2, 7))
        L = rng.standard_normal((r, r)) + 1j * rng.standard_normal((r, r))
        L = 0.5 * (L + L.conj().T)
        k = int(rng.integers(1, r + 1))
        q, _ = np.linalg.qr(rng.standard_normal((r, k)) + 1j * rng.standard_normal((r, k)))
        pi = q @ q.conj().T
        lhs, rhs, ok = fn.trace_projection_bound(L, pi)
        if not ok:
            failures.append(("trace_bound", i, {"L": L.tolist(), "rank": k,
                                                "lhs": lhs, "rhs": rhs}))
            break

    def random_type(r, total=None):
        v = np.sort(rng.normal(size=r))[::-1]
        if total is not None:
            v = v - v.mean() + total / r
        return v

    def comparable_pair(r):
        # lam dominates mu: repeated Robin Hood transfers flatten lam into mu
        lam = random_type(r)
        mu = lam.copy()
        for _ in range(int(rng.integers(1, 4))):
            i = int(rng.integers(0, r - 1))
            j = int(rng.integers(i + 1, r))
            eps = rng.uniform(0, (mu[i] - mu[j]) / 2 if mu[i] > mu[j] else 0)
            mu[i] -= eps
            mu[j] += eps
            mu = np.sort(mu)[::-1]
        return mu, lam

    # (2) partial order axioms
    for i in range(counts["leq_axioms"]):
        r = int(rng.integers(2, 6))
        mu, lam = comparable_pair(r)
        nu, _ = comparable_pair(r)
        nu = nu - nu.mean() + mu.mean()     # equal sums
        if not leq_maybe_mutant(mu, mu):
            failures.append(("leq_reflexive", i, {"mu": mu.tolist()}))
            break
        if not leq_maybe_mutant(mu, lam):
            failures.append(("leq_comparable", i, {"mu": mu.tolist(), "lam": lam.tolist()}))
            break
        if hn.leq(mu, lam) and hn.leq(lam, mu):
            if np.max(np.abs(mu - lam)) > 1e-7:
                failures.append(("leq_antisymmetric", i,
                                 {"mu": mu.tolist(), "lam": lam.tolist()}))
                break
        # transitivity on a constructed chain
        mid, top = comparable_pair(r)
        bot = mid.copy()
        for _ in range(2):
            i2 = int(rng.integers(0, r - 1))
            j2 = int(rng.integers(i2 + 1, r))
            eps = rng.uniform(0, max(0.0, (bot[i2] - bot[j2]) / 2))
            bot[i2] -= eps
            bot[j2] += eps
            bot = np.sort(bot)[::-1]
        if hn.leq(bot, mid) and hn.leq(mid, top) and not hn.leq(bot, top):
            failures.append(("leq_transitive", i, {"bot": bot.tolist(),
                                                   "mid": mid.tolist(),
                                                   "top": top.tolist()}))
            break

    # (3) block-checkpoint comparison agrees with the full partial order
    for i in range(counts["shatz"]):
        r = int(rng.integers(2, 7))
        nblocks = int(rng.integers(1, r + 1))
        cuts = np.sort(rng.choice(np.arange(1, r), size=nblocks - 1, replace=False)) \
            if nblocks > 1 else np.array([], dtype=int)
        part = list(cuts) + [r]
        blockvals = np.sort(rng.normal(size=len(part)))[::-1]
        mu = np.concatenate([np.full(end - start, v) for v, (start, end) in
                             zip(blockvals, zip([0] + part[:-1], part))])
        lam = random_type(r, total=mu.sum())
        sv = hn.SlopeVector(values=tuple(mu), partition=tuple(part))
        if hn.shatz_sufficient(sv, lam) != leq_maybe_mutant(mu, lam):
            failures.append(("shatz_equiv", i, {"mu": mu.tolist(), "part": part,
                                                "lam": lam.tolist()}))
            break

    # (4) phi_alpha monotone under the partial order
    alphas = (1.0, 1.5, 2.0, 3.0, 5.0)
    for i in range(counts["phi_monotone"]):
        r = int(rng.integers(2, 6))
        mu, lam = comparable_pair(r)
        if not hn.phi_monotone_check(mu, lam, alphas):
            failures.append(("phi_monotone", i, {"mu": mu.tolist(), "lam": lam.tolist()}))
            break

    # (5) norm equivalence of (int phi_alpha)^(1/alpha) and the L^alpha norm
    lat = make_torus(1, 12)
    for i in range(counts["norm_equiv"]):
        r = int(rng.integers(1, 5))
        model = fl.build_background(lat, [[0]] * r)
        a = fl.random_smooth_hermitian(model, seed=int(rng.integers(2 ** 31)),
                                       kmax=1, amp=float(rng.uniform(0.1, 3.0)))
        alpha = float(rng.choice([1.0, 1.5, 3.0]))
        num = fn.phi_alpha(a, alpha, lat) ** (1.0 / alpha)
        den = lp_norm(a, alpha, lat)
        ratio = num / den if den > 0 else 1.0
        if not (1.0 / r <= ratio <= r + 1e-9):
            failures.append(("norm_equiv", i, {"alpha": alpha, "rank": r, "ratio": ratio}))
            break

    # (6) sigma distance symmetry
    for i in range(counts["sigma_symmetry"]):
        r = int(rng.integers(1, 4))
        w = rng.standard_normal((r, r)) + 1j * rng.standard_normal((r, r))
        H = w @ w.conj().T + np.eye(r)
        w = rng.standard_normal((r, r)) + 1j * rng.standard_normal((r, r))
        K = w @ w.conj().T + np.eye(r)
        s1 = fn.sigma_distance(H[None], K[None])[1]
        s2 = fn.sigma_distance(K[None], H[None])[1]
        if abs(s1 - s2) > 1e-10 * max(1.0, s1):
            failures.append(("sigma_symmetry", i, {"H": H.tolist(), "K": K.tolist()}))
            break

    # (7) unequal nonnegative types separate on the alpha grid
    for i in range(counts["distinguish"]):
        r = int(rng.integers(2, 6))
        mu = np.sort(rng.uniform(0, 3, size=r))[::-1]
        lam = np.sort(rng.uniform(0, 3, size=r))[::-1]
        if np.max(np.abs(mu - lam)) < 1e-6:
            continue
        if hn.distinguish_types(mu, lam):
            failures.append(("distinguish", i, {"mu": mu.tolist(), "lam": lam.tolist()}))
            break

    if out is None:
        out = sys.stdout
    report = {"seed": seed, "counts": counts, "failures": failures,
              "passed": not failures}
    for name, i, data in failures:
        print(f"FAIL {name} case {i}: {json.dumps(data, default=str)[:400]}", file=out)
    print(("PASS" if report["passed"] else "FAIL")
          + f" property suite (seed={seed})", file=out)
    return report
