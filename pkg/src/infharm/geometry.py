"""Conformal geometry of parametrized surfaces in R^3.

Mean curvature is computed from the first and second fundamental forms
directly, so that the identity relating it to the normal part of the
infinity-Laplacian can be checked against two independent computations.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from .infinity_ops import residual_from_jet
from .map_model import Grid, MapSpec, frobenius_sq, jet, laplacian
from .tensor_core import DEFAULT_RANK_TOL, projectors_batch

CONFORMAL_TOL = 1e-8
CLASSIFY_TOL = 1e-7


class PreconditionError(ValueError):
    """Input violates a hypothesis; ``defect`` records by how much."""

    def __init__(self, message: str, defect: float | None = None):
        super().__init__(message if defect is None else f"{message} (defect {defect:.3e})")
        self.defect = defect


class DegenerateImmersionError(ValueError):
    pass


@dataclass(frozen=True)
class MetricData:
    g: np.ndarray
    det_g: np.ndarray
    jacobian: np.ndarray
    conformal_factor_sq: np.ndarray
    conformal_defect: np.ndarray
    is_conformal: np.ndarray


@dataclass(frozen=True)
class CurvatureData:
    normal: np.ndarray
    H: np.ndarray
    h_scal: np.ndarray


def _require_surface(m: MapSpec, need_r3: bool = False):
    if m.n != 2:
        raise ValueError(f"surface routines need n = 2, got n = {m.n}")
    if m.N < m.n:
        raise ValueError(f"surface routines need N >= n, got N = {m.N}")
    if need_r3 and m.N != 3:
        raise ValueError(f"mean curvature needs N = 3, got N = {m.N}")


def metric_from_grad(grad: np.ndarray) -> MetricData:
    g = np.einsum("...ai,...aj->...ij", grad, grad)
    det = g[..., 0, 0] * g[..., 1, 1] - g[..., 0, 1] ** 2
    tr = g[..., 0, 0] + g[..., 1, 1]
    f2 = tr / 2.0
    dev = g - f2[..., None, None] * np.eye(2)
    defect = np.sqrt(np.einsum("...ij,...ij->...", dev, dev))
    rel = defect / np.where(tr > 0, tr, 1.0)
    return MetricData(g, det, np.sqrt(np.maximum(det, 0.0)), f2, rel, rel <= CONFORMAL_TOL)


def metric(m: MapSpec, x) -> MetricData:
    """Induced metric ``Du^T Du``; conformal when ``|g - (tr g / 2) I| <= 1e-8 tr g``."""
    _require_surface(m)
    return metric_from_grad(m.gradient(x))


def curvature_from_jet(grad, hess, orientation: int = 1, degenerate: str = "raise") -> CurvatureData:
    """Normal and mean curvature from a batched jet.

    ``degenerate="zero"`` returns ``H = 0`` (and ``nu = 0``) where the Jacobian vanishes.
    """
    ux, uy = grad[..., :, 0], grad[..., :, 1]
    cr = np.cross(ux, uy)
    crn = np.linalg.norm(cr, axis=-1)
    bad = crn == 0.0
    if np.any(bad) and degenerate == "raise":
        raise DegenerateImmersionError("vanishing Jacobian: tangent vectors are parallel")
    safe = np.where(bad, 1.0, crn)
    nu = orientation * cr / safe[..., None]
    E = np.einsum("...a,...a->...", ux, ux)
    G = np.einsum("...a,...a->...", uy, uy)
    F = np.einsum("...a,...a->...", ux, uy)
    L = np.einsum("...a,...a->...", nu, hess[..., :, 0, 0])
    M = np.einsum("...a,...a->...", nu, hess[..., :, 0, 1])
    Nn = np.einsum("...a,...a->...", nu, hess[..., :, 1, 1])
    den = 2.0 * (E * G - F * F)
    h = np.where(bad, 0.0, (E * Nn + G * L - 2.0 * F * M) / np.where(bad, 1.0, den))
    return CurvatureData(nu, h[..., None] * nu, h)


def mean_curvature(m: MapSpec, x, orientation: int = 1) -> CurvatureData:
    """Unit normal, mean curvature vector and its signed scalar for ``n=2, N=3``."""
    _require_surface(m, need_r3=True)
    if orientation not in (1, -1):
        raise ValueError("orientation must be +1 or -1")
    j = jet(m, x)
    return curvature_from_jet(j.grad, j.hess, orientation)


def _check_conformal(md: MetricData):
    worst = float(np.max(md.conformal_defect))
    if worst > CONFORMAL_TOL:
        raise PreconditionError("map is not conformal here", worst)


def jacobian_identity(m: MapSpec, x):
    """``(|Du|^2 / 2, Ju, |difference|)`` for a conformal surface map."""
    _require_surface(m)
    grad = m.gradient(x)
    md = metric_from_grad(grad)
    _check_conformal(md)
    lhs = 0.5 * frobenius_sq(grad)
    rhs = md.jacobian
    return lhs, rhs, np.abs(lhs - rhs)


def curvature_identity(m: MapSpec, x, tau_rank: float = DEFAULT_RANK_TOL):
    """``(|Du|^2 [Du]^perp Lap u, 4 det(g) H, |difference|)``; rhs is 0 where det g = 0."""
    _require_surface(m, need_r3=True)
    j = jet(m, x)
    md = metric_from_grad(j.grad)
    _check_conformal(md)
    _, Pn, _ = projectors_batch(j.grad, tau_rank)
    lhs = frobenius_sq(j.grad)[..., None] * np.einsum("...ab,...b->...a", Pn, laplacian(j.hess))
    H = curvature_from_jet(j.grad, j.hess, degenerate="zero").H
    rhs = np.where((md.det_g > 0.0)[..., None], 4.0 * md.det_g[..., None] * H, 0.0)
    return lhs, rhs, np.linalg.norm(lhs - rhs, axis=-1)


def nonconformal_H(m: MapSpec, x, tol: float = 1e-8, tau_rank: float = DEFAULT_RANK_TOL):
    """Mean curvature of an equal-norm, normally infinity-harmonic surface map:
    ``-(u_x . u_y) [Du]^perp u_xy / Ju^2``."""
    _require_surface(m, need_r3=True)
    j = jet(m, x)
    ux, uy = j.grad[..., :, 0], j.grad[..., :, 1]
    nx, ny = np.linalg.norm(ux, axis=-1), np.linalg.norm(uy, axis=-1)
    eq = float(np.max(np.abs(nx - ny)))
    if eq > tol:
        raise PreconditionError("|D_x u| != |D_y u|", eq)
    _, Pn, _ = projectors_batch(j.grad, tau_rank)
    normal = frobenius_sq(j.grad)[..., None] * np.einsum("...ab,...b->...a", Pn, laplacian(j.hess))
    nd = float(np.max(np.linalg.norm(normal, axis=-1)))
    if nd > tol:
        raise PreconditionError("map is not normally infinity-harmonic", nd)
    md = metric_from_grad(j.grad)
    F = np.einsum("...a,...a->...", ux, uy)
    proj_xy = np.einsum("...ab,...b->...a", Pn, j.hess[..., :, 0, 1])
    return -(F / md.det_g)[..., None] * proj_xy


@dataclass(frozen=True)
class ClassificationReport:
    map: str
    grid: str
    conformal_defect: float
    minimal_defect: float
    flat_defect: float
    c: float
    verdict: str

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True)


def _grid_label(grid: Grid) -> str:
    return "x".join(str(r) for r in grid.resolution)


def classify_surface(m: MapSpec, grid: Grid, tol: float = CLASSIFY_TOL,
                     tau_rank: float = DEFAULT_RANK_TOL) -> ClassificationReport:
    """minimal / flat(c) / planar / none for an isothermal parametrization."""
    _require_surface(m)
    j = jet(m, grid.nodes)
    md = metric_from_grad(j.grad)
    conf = float(np.max(md.conformal_defect))
    if conf > CONFORMAL_TOL or np.any(md.conformal_factor_sq <= 0.0):
        raise PreconditionError("map is not isothermal on the grid", conf)
    _, Pn, _ = projectors_batch(j.grad, tau_rank)
    min_def = float(np.max(np.linalg.norm(np.einsum("...ab,...b->...a", Pn, laplacian(j.hess)), axis=-1)))
    gsq = frobenius_sq(j.grad)
    c2 = 0.25 * (gsq.max() + gsq.min())
    flat_def = float(np.max(np.abs(gsq - 2.0 * c2)))
    minimal, flat = min_def <= tol, flat_def <= tol
    if minimal and flat:
        verdict = "planar"
    elif minimal:
        verdict = "minimal"
    elif flat:
        verdict = "flat"
    else:
        verdict = "none"
    return ClassificationReport(m.name, _grid_label(grid), conf, min_def, flat_def,
                                float(np.sqrt(c2)), verdict)


def plane_fit_residual(points: np.ndarray) -> tuple[float, float]:
    """Max distance of points to their total-least-squares plane, and the point-cloud diameter."""
    P = np.asarray(points, dtype=float)
    P = P - P.mean(axis=0)
    _, _, Vt = np.linalg.svd(P, full_matrices=False)
    normal = Vt[-1]
    lo, hi = P.min(axis=0), P.max(axis=0)
    return float(np.max(np.abs(P @ normal))), float(np.linalg.norm(hi - lo))


@dataclass(frozen=True)
class RigidityReport:
    map: str
    conformal_defect: float
    tangential_residual: float
    normal_residual: float
    plane_residual: float
    diameter: float
    conformal: bool
    tangentially_harmonic: bool
    normally_harmonic: bool
    planar: bool
    status: str

    @property
    def harmonic(self) -> bool:
        return self.tangentially_harmonic and self.normally_harmonic

    @property
    def consistent(self) -> bool:
        """False only for a counter-example: conformal, harmonic and not planar."""
        return not (self.conformal and self.harmonic and not self.planar)

    def failed_hypotheses(self) -> list[str]:
        out = []
        if not self.conformal:
            out.append("conformal")
        if not self.harmonic:
            out.append("infinity-harmonic")
        return out

    def to_dict(self) -> dict:
        d = asdict(self)
        d["consistent"] = self.consistent
        return d


def rigidity_check(m: MapSpec, grid: Grid, tol: float = 1e-8, plane_tol: float = 1e-6,
                   tau_rank: float = DEFAULT_RANK_TOL) -> RigidityReport:
    """Test: conformal and infinity-harmonic on the grid implies an affine-plane image."""
    if m.n != 2 or m.N != 3:
        raise ValueError("rigidity check needs a surface map R^2 -> R^3")
    j = jet(m, grid.nodes)
    md = metric_from_grad(j.grad)
    res = residual_from_jet(j, tau_rank)
    conf = float(np.max(md.conformal_defect))
    tang = float(np.max(res.norm("tangential")))
    norm = float(np.max(res.norm("normal")))
    plane, diam = plane_fit_residual(j.value)
    conformal = conf <= tol
    t_ok, n_ok = tang <= tol, norm <= tol
    planar = plane <= plane_tol * diam
    if conformal and t_ok and n_ok:
        status = "planar" if planar else "counter-example"
    elif not conformal:
        status = "not conformal"
    else:
        status = "not infinity-harmonic"
    return RigidityReport(m.name, conf, tang, norm, plane, diam, conformal, t_ok, n_ok, planar, status)
