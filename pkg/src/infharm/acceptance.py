"""The acceptance suite: nine numbered checks with tolerances, seeds and time budgets.

Each check returns a :class:`Criterion`; ``run_all`` runs them in order.  Time budgets
count toward the verdict.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import flow, geometry, infinity_ops, psolver, variations
from .map_model import CATALOG_NAMES, CONFORMAL_SURFACES, Grid, catalog, jet, jet_fd, random_interior_points
from .tensor_core import contract

EPS = np.finfo(float).eps


@dataclass
class Criterion:
    number: int
    title: str
    passed: bool
    metrics: dict = field(default_factory=dict)
    seconds: float = 0.0
    budget: float = 0.0

    def line(self) -> str:
        verdict = "PASS" if self.passed else "FAIL"
        shown = ", ".join(f"{k}={_fmt(v)}" for k, v in self.metrics.items())
        return f"[{verdict}] {self.number}. {self.title} ({self.seconds:.2f}s / {self.budget:g}s) {shown}"

    def to_dict(self) -> dict:
        return {"number": self.number, "title": self.title, "passed": self.passed,
                "seconds": round(self.seconds, 3), "budget": self.budget,
                "metrics": {k: _plain(v) for k, v in self.metrics.items()}}


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.3e}"
    return str(v)


def _plain(v):
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (np.floating, float)):
        return float(v)
    if isinstance(v, (np.integer, int)):
        return int(v)
    return v


def _timed(number: int, title: str, budget: float):
    def wrap(fn: Callable[[int], tuple[bool, dict]]):
        def run(seed: int = 0) -> Criterion:
            t0 = time.perf_counter()
            ok, metrics = fn(seed)
            dt = time.perf_counter() - t0
            return Criterion(number, title, bool(ok and dt < budget), metrics, dt, budget)
        run.number = number
        run.title = title
        return run
    return wrap


@_timed(1, "infinity-harmonic catalog solutions on 41x41 interiors", 1.0)
def harmonic_solutions(seed: int = 0):
    maps = [catalog("affine"),
            catalog("affine", A=[[1.0, 2.0], [-0.5, 0.3], [0.7, -1.1]], b=[0.1, 0.2, 0.3]),
            catalog("rotation"), catalog("exp_diag")]
    worst = {}
    for m in maps:
        grid = Grid.over(m.box, 41)
        res = infinity_ops.residual(m, grid.nodes).norm("total")
        ph = infinity_ops.phase_map(m, grid)
        keep = grid.interior & ~ph.interface
        key = m.name if m.name not in worst else f"{m.name}_{m.N}x{m.n}"
        worst[key] = float(res[keep].max())
    top = max(worst.values())
    return top <= 1e-9, {"max_residual": top, **{f"{k}": v for k, v in worst.items()}}


def _patch(m, frac=0.25):
    lo, hi = m.lower, m.upper
    mid, half = 0.5 * (lo + hi), frac * (hi - lo) / 2
    return tuple(zip(mid - half, mid + half))


@_timed(2, "conformal identities and normal-derivative identity", 5.0)
def identity_suite(seed: int = 0):
    rng = np.random.default_rng(seed)
    d_jac = d_curv = div = 0.0
    for name in CONFORMAL_SURFACES:
        m = catalog(name)
        X = random_interior_points(m, 100, rng)
        d_jac = max(d_jac, float(geometry.jacobian_identity(m, X)[2].max()))
        d_curv = max(d_curv, float(geometry.curvature_identity(m, X)[2].max()))
        fr = variations.frame(m, Grid.over(_patch(m), 9))
        div = max(div, fr.divergence_residual)
    ok = d_jac <= 1e-8 and d_curv <= 1e-8 and div <= 1e-4
    return ok, {"jacobian_defect": d_jac, "curvature_defect": d_curv, "normal_divergence_residual": div}


@_timed(3, "mean curvature of catalog surfaces", 2.0)
def mean_curvature_suite(seed: int = 0):
    rng = np.random.default_rng(seed)
    out = {}
    for name in ("catenoid", "helicoid", "enneper"):
        m = catalog(name)
        out[name] = float(np.abs(geometry.mean_curvature(m, random_interior_points(m, 100, rng)).h_scal).max())
    for name, target in (("sphere_stereo", 1.0), ("cylinder", 0.5)):
        m = catalog(name)
        h = np.abs(geometry.mean_curvature(m, random_interior_points(m, 100, rng)).h_scal)
        out[f"{name}_dev"] = float(np.abs(h - target).max())
    minimal = max(out["catenoid"], out["helicoid"], out["enneper"])
    ok = minimal <= 1e-9 and out["sphere_stereo_dev"] <= 1e-6 and out["cylinder_dev"] <= 1e-6
    return ok, {"minimal_H": minimal, "sphere_dev": out["sphere_stereo_dev"], "cylinder_dev": out["cylinder_dev"]}


FLOW_DOMAINS = {"aronsson_43": ((1.2, 1.8), (1.2, 1.8)), "exp_diag": ((0.1, 0.9), (-0.9, -0.1))}


@_timed(4, "flow invariants and RK4 step halving", 5.0)
def flow_suite(seed: int = 0):
    rng = np.random.default_rng(seed)
    drift = aff = slope = 0.0
    halving_ok, worst_ratio = True, np.inf
    for name, D in FLOW_DOMAINS.items():
        m = catalog(name)
        lo, hi = np.array(D).T
        for _ in range(20):
            x = rng.uniform(lo + 0.05 * (hi - lo), hi - 0.05 * (hi - lo))
            xi = rng.normal(size=m.N)
            xi /= np.linalg.norm(xi)
            tr = flow.integrate(m, x, xi, D)
            s, r = flow.check_affinity(tr)
            drift = max(drift, tr.drift)
            aff = max(aff, r)
            slope = max(slope, abs(s - float(np.sum(m.gradient(x) ** 2))))
            hr = flow.step_halving(m, x, xi, D)
            halving_ok &= hr.passed(8.0)
            if hr.drift[1] > 1e-13:
                worst_ratio = min(worst_ratio, hr.drift[0] / hr.drift[1])
    ok = drift <= 1e-6 and aff <= 1e-6 and slope <= 1e-5 and halving_ok
    return ok, {"drift": drift, "affinity_residual": aff, "slope_error": slope,
                "halving_ok": halving_ok, "min_halving_ratio": worst_ratio}


@_timed(5, "gradient max/min principle on random sub-boxes", 10.0)
def extremum_suite(seed: int = 0):
    rng = np.random.default_rng(seed)
    fails = 0
    for name in ("aronsson_43", "exp_diag"):
        m = catalog(name)
        lo, hi = m.lower, m.upper
        for _ in range(50):
            a = rng.uniform(lo, hi, size=(2, m.n))
            box = tuple(zip(a.min(axis=0), np.maximum(a.max(axis=0), a.min(axis=0) + 0.05 * (hi - lo))))
            box = tuple((float(l), float(min(u, h))) for (l, u), h in zip(box, hi))
            rep = flow.extremum_scan(m, box)
            fails += not (rep.max_ok and rep.min_ok)
    control = flow.extremum_scan(catalog("bowl"), catalog("bowl").box)
    ok = fails == 0 and not control.min_ok
    return ok, {"violations": fails, "control_min_violation": not control.min_ok}


@_timed(6, "variational testers and variation formulas", 60.0)
def variation_suite(seed: int = 0):
    m_aff = catalog("affine", A=[[1.0, 2.0], [-0.5, 0.3], [0.7, -1.1]])
    r1 = [variations.rank_one_test(m_aff, variations.VariationConfig(((-0.8, 0.8),) * 2, 500, seed)),
          variations.rank_one_test(catalog("exp_diag"),
                                   variations.VariationConfig(((0.1, 0.5), (-0.5, -0.1)), 500, seed))]
    cat = catalog("catenoid")
    cfg = variations.VariationConfig(((-0.5, 0.5), (-1.0, 1.0)), 200, seed)
    na = [variations.normal_area_test(cat, cfg, p) for p in (2.0, 4.0, 8.0, np.inf)]
    sph = variations.normal_area_test(catalog("sphere_stereo"),
                                      variations.VariationConfig(((-0.3, 0.3),) * 2, 20, seed), 2.0)
    const_violation = any("ConstantProfile" in v["variation"] for v in sph.violations)
    rel, sec = first_variation_triples(seed)
    ok = (all(r.passed for r in r1) and all(r.passed for r in na) and not sph.passed
          and const_violation and rel <= 1e-4 and sec >= -1e-10)
    return ok, {"rank_one_pass": all(r.passed for r in r1), "catenoid_pass": all(r.passed for r in na),
                "sphere_fails": not sph.passed, "first_variation_rel": rel, "min_second_variation": sec}


VARIATION_PATCHES = (("catenoid", ((-0.5, 0.5), (-1.0, 1.0))), ("enneper", ((-0.5, 0.5), (-0.5, 0.5))),
                     ("sphere_stereo", ((-0.3, 0.3), (-0.3, 0.3))), ("helicoid", ((-0.5, 0.5), (-1.0, 1.0))))
FD_STEP = 1e-5
ROUNDING_FACTOR = 16.0


def first_variation_triples(seed: int = 0, count: int = 50) -> tuple[float, float]:
    """Worst relative gap between the first-variation formula and FD over ``count`` triples
    (map, profile, p), and the smallest second variation.

    A gap under ``ROUNDING_FACTOR`` times the FD rounding level ``eps E / step`` counts as 0:
    the difference quotient cannot resolve anything smaller.
    """
    rng = np.random.default_rng(seed)
    worst, smallest, k = 0.0, np.inf, 0
    while k < count:
        name, D = VARIATION_PATCHES[k % len(VARIATION_PATCHES)]
        m = catalog(name)
        p = float(rng.choice([2.0, 3.0, 4.0, 8.0]))
        h = variations._random_profile(rng, k, m.n, D)
        try:
            nu = variations.NormalField(m, tuple(rng.normal(size=m.N)))
            a = variations.first_variation(m, D, h, nu, p)
        except variations.DegenerateImmersionError:
            continue
        b = variations.first_variation_fd(m, D, h, nu, p, step=FD_STEP)
        floor = ROUNDING_FACTOR * EPS * variations.energy(m, D, h, nu, p, 0.0) / FD_STEP
        gap = abs(a - b)
        if gap > floor:
            worst = max(worst, gap / max(abs(a), abs(b)))
        smallest = min(smallest, variations.second_variation(m, D, h, nu, p))
        k += 1
    return worst, smallest


@_timed(7, "rigidity sweep over catalog surfaces", 5.0)
def rigidity_suite(seed: int = 0):
    reports = {}
    for name in CATALOG_NAMES:
        m = catalog(name)
        if (m.n, m.N) != (2, 3):
            continue
        reports[name] = geometry.rigidity_check(m, Grid.over(m.box, 41))
    counter = [n for n, r in reports.items() if not r.consistent]
    single = all(len(reports[n].failed_hypotheses()) == 1 for n in ("cylinder", "catenoid"))
    return not counter and single, {"surfaces": len(reports), "counter_examples": len(counter),
                                    "cylinder_catenoid_fail_one": single}


P_DOMAIN = ((1.2, 1.8), (1.2, 1.8))


@_timed(8, "p-continuation toward infinity-harmonicity", 120.0)
def continuation_suite(seed: int = 0):
    m = catalog("aronsson_43")
    grid = Grid.over(P_DOMAIN, 33)
    trace = psolver.continuation(psolver.boundary_from_map(m, grid), grid, psolver.default_schedule(128))
    first, last = trace.stages[0], trace.stages[-1]
    ratio_gap = abs(1.0 - last.ratio)
    drop = last.residual / first.residual
    ok = ratio_gap <= 0.02 and drop <= 0.25 and all(s.converged for s in trace.stages)
    return ok, {"norm_ratio_p128": last.ratio, "ratio_gap": ratio_gap, "residual_p2": first.residual,
                "residual_p128": last.residual, "residual_drop": drop}


def _contract_loop(S, T):
    k = T.ndim
    lead = S.shape[:S.ndim - k]
    out = np.zeros(lead)
    for a in np.ndindex(*lead) if lead else [()]:
        acc = 0.0
        for b in np.ndindex(*T.shape):
            acc += S[a + b] * T[b]
        out[a] = acc
    return out


@_timed(9, "contraction and jet oracles", 5.0)
def oracle_suite(seed: int = 0):
    rng = np.random.default_rng(seed)
    cgap = 0.0
    for _ in range(100):
        n, N = rng.integers(1, 4, size=2)
        kind = rng.integers(3)
        if kind == 0:
            S, T = rng.normal(size=(N, n)), rng.normal(size=(N, n))
        elif kind == 1:
            S, T = rng.normal(size=(N, n, n)), rng.normal(size=(n, n))
        else:
            S, T = rng.normal(size=(N, N, n, n)), rng.normal(size=(N, n, n))
        gap = np.abs(np.asarray(contract(S, T)) - _contract_loop(S, T)).max()
        cgap = max(cgap, float(gap))
    gg = hg = 0.0
    for name in CATALOG_NAMES:
        m = catalog(name)
        X = random_interior_points(m, 10, rng)
        js, jf = jet(m, X), jet_fd(m, X)
        gg = max(gg, float(np.abs(js.grad - jf.grad).max()))
        hg = max(hg, float(np.abs(js.hess - jf.hess).max()))
    ok = cgap <= 1e-12 and gg <= 1e-5 and hg <= 1e-3
    return ok, {"contraction_gap": cgap, "grad_gap": gg, "hess_gap": hg}


CRITERIA = (harmonic_solutions, identity_suite, mean_curvature_suite, flow_suite, extremum_suite,
            variation_suite, rigidity_suite, continuation_suite, oracle_suite)


def run_all(seed: int = 0, only=None) -> list[Criterion]:
    return [c(seed) for c in CRITERIA if only is None or c.number in only]
