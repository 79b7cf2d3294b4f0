"""Parametrized gradient flow and the gradient max/min principle scan.

For a unit direction ``xi`` the flow is

    gamma' = |Du|^2 / |xi^T Du|^2 * (xi^T Du)^T,

along which ``d/dt xi.u(gamma) = |Du|^2``; for a tangentially infinity-harmonic map
``|Du|`` is conserved, so ``t -> xi.u(gamma(t))`` is affine with slope ``|Du(x)|^2``.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np

from .map_model import Box, Grid, MapSpec, frobenius_sq
from .expr import DomainError

DEGENERACY_TOL = 1e-10
EXIT_TOL = 1e-10


class DegenerateDirectionError(ValueError):
    pass


class StiffnessError(RuntimeError):
    pass


@dataclass
class FlowTrajectory:
    xi: np.ndarray
    start: np.ndarray
    times: np.ndarray
    points: np.ndarray
    grad_norm: np.ndarray
    projected_value: np.ndarray
    exit_time: float | None
    exit_point: np.ndarray | None
    stop_reason: str = "exit"
    step: float = 0.0

    @property
    def drift(self) -> float:
        """``max |Du| - min |Du|`` along the samples."""
        return float(self.grad_norm.max() - self.grad_norm.min())

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        n = self.points.shape[1]
        w.writerow(["t"] + [f"gamma{i + 1}" for i in range(n)] + ["grad_norm", "xi_dot_u"])
        for t, x, g, v in zip(self.times, self.points, self.grad_norm, self.projected_value):
            w.writerow([repr(float(t))] + [repr(float(c)) for c in x] + [repr(float(g)), repr(float(v))])
        return buf.getvalue()


def _inside(x, box, tol=0.0):
    lo, hi = np.array(box).T
    return bool(np.all(x >= lo - tol) and np.all(x <= hi + tol))


def flow_field(m: MapSpec, xi: np.ndarray):
    def rhs(x):
        try:
            Du = m.gradient(x, check=False)
        except DomainError:
            return None, 0.0
        row = xi @ Du
        den = float(row @ row)
        if den < DEGENERACY_TOL ** 2:
            return None, np.sqrt(den)
        return float(frobenius_sq(Du)) / den * row, np.sqrt(den)

    return rhs


def _rk4(rhs, x, dt):
    k1, _ = rhs(x)
    if k1 is None:
        return None
    k2, _ = rhs(x + 0.5 * dt * k1)
    if k2 is None:
        return None
    k3, _ = rhs(x + 0.5 * dt * k2)
    if k3 is None:
        return None
    k4, _ = rhs(x + dt * k3)
    if k4 is None:
        return None
    return x + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def default_step(m: MapSpec, x) -> float:
    return min(0.01, 0.1 / float(frobenius_sq(m.gradient(x))))


def integrate(m: MapSpec, x, xi, D: Box, step: float | None = None, backward: bool = False,
              max_steps: int = 1_000_000, min_samples: int = 10,
              t_max: float | None = None) -> FlowTrajectory:
    """RK4 with fixed step until the path leaves ``D``; the exit time is found by
    bisecting the last step to ``1e-10``. ``backward=True`` integrates ``t <= 0``.

    ``t_max`` stops the path at ``|t| = t_max`` if it has not exited by then.
    Without an explicit ``step``, a path that exits with fewer than ``min_samples``
    samples is recomputed with a quarter of the step.
    """
    traj = _integrate(m, x, xi, D, step, backward, max_steps, t_max)
    if step is None:
        while len(traj.times) < min_samples and traj.stop_reason != "degenerate":
            traj = _integrate(m, x, xi, D, traj.step / 4.0, backward, max_steps, t_max)
    return traj


def _integrate(m, x, xi, D, step, backward, max_steps, t_max):
    x = np.asarray(x, dtype=float)
    xi = np.atleast_1d(np.asarray(xi, dtype=float))
    if abs(np.linalg.norm(xi) - 1.0) > 1e-12:
        raise ValueError("xi must be a unit vector")
    if not _inside(x, D):
        raise DomainError("start point outside D")
    rhs = flow_field(m, xi)
    v0, speed = rhs(x)
    if v0 is None:
        raise DegenerateDirectionError(f"|xi^T Du(x)| = {speed:.3e} is below {DEGENERACY_TOL}")
    dt = default_step(m, x) if step is None else float(step)
    if dt < 1e-12:
        raise StiffnessError(f"step {dt} underflows")
    sgn = -1.0 if backward else 1.0
    times, pts = [0.0], [x]
    reason, t_exit, x_exit = "max_steps", None, None
    t = 0.0
    for _ in range(max_steps):
        last = t_max is not None and t + dt >= t_max * (1.0 - 1e-12)
        h = t_max - t if last else dt
        nxt = _rk4(rhs, x, sgn * h)
        if nxt is None:
            reason = "degenerate"
            break
        if _inside(nxt, D):
            x, t = nxt, (t_max if last else t + dt)
            times.append(sgn * t)
            pts.append(x)
            if last:
                reason = "t_max"
                break
            continue
        lo_, hi_ = 0.0, h
        while hi_ - lo_ > EXIT_TOL:
            mid = 0.5 * (lo_ + hi_)
            y = _rk4(rhs, x, sgn * mid)
            if y is not None and _inside(y, D):
                lo_ = mid
            else:
                hi_ = mid
        y = _rk4(rhs, x, sgn * lo_)
        t_exit = sgn * (t + lo_)
        x_exit = y
        times.append(t_exit)
        pts.append(y)
        reason = "exit"
        break
    P = np.array(pts)
    G = m.gradient(P, check=False)
    vals = m.value(P, check=False) @ xi
    return FlowTrajectory(xi, np.asarray(pts[0]), np.array(times), P,
                          np.sqrt(frobenius_sq(G)), vals, t_exit, x_exit, reason, dt)


def check_affinity(traj: FlowTrajectory) -> tuple[float, float]:
    """Least-squares line through ``(t_i, xi.u(gamma(t_i)))``: ``(slope, max |residual|)``."""
    if len(traj.times) < 10:
        raise ValueError("need at least 10 samples for an affinity check")
    return _line_fit(traj.times, traj.projected_value)


def _line_fit(t, v):
    A = np.vstack([t, np.ones_like(t)]).T
    coef, *_ = np.linalg.lstsq(A, v, rcond=None)
    return float(coef[0]), float(np.abs(v - A @ coef).max())


@dataclass
class ScanReport:
    map: str
    box: Box
    sup_interior: float
    max_boundary: float
    inf_interior: float
    min_boundary: float
    tolerance: float
    max_ok: bool
    min_ok: bool
    extra: dict = field(default_factory=dict)

    def to_json(self) -> str:
        d = {k: getattr(self, k) for k in ("map", "sup_interior", "max_boundary", "inf_interior",
                                           "min_boundary", "tolerance", "max_ok", "min_ok")}
        d["box"] = [list(b) for b in self.box]
        d.update(self.extra)
        return json.dumps(d, indent=2, sort_keys=True)


def extremum_scan(m: MapSpec, D: Box, grid: Grid | None = None, resolution: int = 41) -> ScanReport:
    """Compare interior and boundary extremes of ``|Du|`` on a grid over ``D``.

    Tolerance is ``2 h max|D^2 u|`` (grid sampling of a Lipschitz quantity).
    """
    if grid is None:
        grid = Grid.over(D, resolution)
    X = grid.nodes
    G = np.sqrt(frobenius_sq(m.gradient(X)))
    H = m.hessian(X)
    tol = float(2.0 * grid.h * np.sqrt(np.einsum("...aij,...aij->...", H, H)).max())
    inner, bnd = G[grid.interior], G[grid.boundary]
    sup_i, inf_i = float(inner.max()), float(inner.min())
    max_b, min_b = float(bnd.max()), float(bnd.min())
    return ScanReport(m.name, tuple(grid.box), sup_i, max_b, inf_i, min_b, tol,
                      sup_i <= max_b + tol, inf_i >= min_b - tol)


FLOOR = 1e-10


@dataclass(frozen=True)
class HalvingReport:
    step: float
    drift: tuple[float, float]
    affinity: tuple[float, float]

    @staticmethod
    def _ok(pair, factor):
        coarse, fine = pair
        return fine <= FLOOR or coarse >= factor * fine

    def passed(self, factor: float = 8.0) -> bool:
        """Each deviation shrinks by ``factor`` or the finer run is already at the floor."""
        return self._ok(self.drift, factor) and self._ok(self.affinity, factor)


def step_halving(m: MapSpec, x, xi, D: Box, steps: int = 3) -> HalvingReport:
    """Drift and affinity residual over a common horizon, with ``steps`` and ``2 steps``.

    The horizon is half the exit time of a default-step run, so both runs stay inside ``D``.
    """
    ref = integrate(m, x, xi, D)
    horizon = 0.5 * abs(ref.times[-1])
    step = horizon / steps
    runs = [integrate(m, x, xi, D, step=s, t_max=horizon) for s in (step, step / 2.0)]
    aff = [_line_fit(r.times, r.projected_value)[1] for r in runs]
    return HalvingReport(step, (runs[0].drift, runs[1].drift), (aff[0], aff[1]))
