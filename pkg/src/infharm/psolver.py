"""Discrete p-energy minimization on rectangular grids, with continuation in p.

The energy of a grid map is ``sum_cells |G_c u|^p * area``, where ``G_c`` is the
bilinear (four-corner) gradient of cell ``c``.  Interior nodes are found by damped
Newton with Armijo backtracking; boundary nodes stay fixed.
"""

from __future__ import annotations

import csv
import io
import json
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .infinity_ops import residual_from_jet
from .map_model import Grid, Jet2, MapSpec

P_MIN, P_MAX = 2.0, 256.0
HESSIAN_MU = 1e-12
RESCALE_BELOW = 1e-2


class StepError(ArithmeticError):
    """Line search produced a non-finite energy."""


@dataclass
class DiscreteMap:
    grid: Grid
    values: np.ndarray
    p: float
    energy: float
    iterations: int
    converged: bool
    gradient_norm: float = 0.0
    history: list[float] = field(default_factory=list, repr=False)  # log-energies

    @property
    def N(self) -> int:
        return self.values.shape[1]


def _cell_operators(grid: Grid) -> tuple[sp.csr_matrix, sp.csr_matrix]:
    nx, ny = grid.shape
    hx, hy = grid.spacing
    idx = np.arange(nx * ny).reshape(nx, ny)
    c00, c10 = idx[:-1, :-1].ravel(), idx[1:, :-1].ravel()
    c01, c11 = idx[:-1, 1:].ravel(), idx[1:, 1:].ravel()
    nc = c00.size
    rows = np.tile(np.arange(nc), 4)
    cols = np.concatenate([c00, c10, c01, c11])
    wx = np.concatenate([-np.ones(nc), np.ones(nc), -np.ones(nc), np.ones(nc)]) / (2 * hx)
    wy = np.concatenate([-np.ones(nc), -np.ones(nc), np.ones(nc), np.ones(nc)]) / (2 * hy)
    shape = (nc, nx * ny)
    return (sp.csr_matrix((wx, (rows, cols)), shape=shape),
            sp.csr_matrix((wy, (rows, cols)), shape=shape))


class _Problem:
    """Energy, gradient and Hessian in the free (interior) unknowns."""

    def __init__(self, grid: Grid, boundary_values: np.ndarray, p: float):
        self.grid, self.p = grid, p
        self.N = boundary_values.shape[1]
        Gx, Gy = _cell_operators(grid)
        self.area = float(np.prod(grid.spacing))
        nn = grid.nodes.shape[0]
        self.free = np.flatnonzero(~grid.boundary)
        self.base = boundary_values.copy()
        self.base[self.free] = 0.0
        # B maps the stacked node vector (node-major, component-minor) to cell gradients
        # laid out as (cell, component, direction).
        eye = sp.identity(self.N, format="csr")
        Bx, By = sp.kron(Gx, eye), sp.kron(Gy, eye)
        nc = Gx.shape[0]
        B = sp.vstack([Bx, By]).tocsr()
        perm = np.arange(2 * nc * self.N).reshape(2, nc, self.N).transpose(1, 2, 0).ravel()
        self.B = B[perm]
        cols = (self.free[:, None] * self.N + np.arange(self.N)).ravel()
        self.Bf = self.B[:, cols].tocsc()
        self.offset = self.B @ self.base.ravel()
        self.nc = nc
        self.nn = nn

    def cell_gradients(self, z: np.ndarray) -> np.ndarray:
        return (self.Bf @ z + self.offset).reshape(self.nc, self.N, 2)

    def full(self, z: np.ndarray) -> np.ndarray:
        u = self.base.copy()
        u[self.free] = z.reshape(-1, self.N)
        return u

    def set_scale(self, z):
        """Normalize so that the objective is 1 at ``z``: gradients are divided by their
        largest cell norm, then the sum by its value."""
        g = self.cell_gradients(z)
        self.scale = float(np.sqrt(np.einsum("cad,cad->c", g, g)).max()) or 1.0
        self.weight = 1.0
        self.weight = 1.0 / (self.energy(z) or 1.0)

    def log_energy(self, E: float) -> float:
        """Natural log of the unnormalized energy, from the normalized value ``E``."""
        return float(np.log(E) - np.log(self.weight) + self.p * np.log(self.scale) + np.log(self.area))

    def energy(self, z) -> float:
        g = self.cell_gradients(z) / self.scale
        s2 = np.einsum("cad,cad->c", g, g)
        with np.errstate(over="ignore"):
            # an overflowing trial point is simply rejected by the line search
            return float(self.weight * np.sum(s2 ** (self.p / 2.0)))

    def derivatives(self, z):
        p, c = self.p, self.weight
        g = self.cell_gradients(z) / self.scale
        s2 = np.einsum("cad,cad->c", g, g)
        E = float(c * np.sum(s2 ** (p / 2.0)))
        w1 = p * s2 ** (p / 2.0 - 1.0)
        flat = g.reshape(self.nc, -1)
        grad = c / self.scale * (self.Bf.T @ (w1[:, None] * flat).ravel())
        r2 = s2 + HESSIAN_MU ** 2
        a = p * r2 ** (p / 2.0 - 1.0)
        b = p * (p - 2.0) * r2 ** (p / 2.0 - 2.0)
        k = flat.shape[1]
        blocks = a[:, None, None] * np.eye(k) + b[:, None, None] * flat[:, :, None] * flat[:, None, :]
        H = c / self.scale ** 2 * (self.Bf.T @ _block_diag(blocks) @ self.Bf)
        return E, grad, H.tocsc()


def _block_diag(blocks: np.ndarray) -> sp.csr_matrix:
    nc, k, _ = blocks.shape
    base = np.arange(nc)[:, None, None] * k
    rows = np.broadcast_to(base + np.arange(k)[None, :, None], blocks.shape).ravel()
    cols = np.broadcast_to(base + np.arange(k)[None, None, :], blocks.shape).ravel()
    return sp.csr_matrix((blocks.ravel(), (rows, cols)), shape=(nc * k, nc * k))


def _validate(boundary_values: np.ndarray, grid: Grid, p: float) -> np.ndarray:
    if not P_MIN <= p <= P_MAX:
        raise ValueError(f"p must lie in [{P_MIN:g}, {P_MAX:g}], got {p}")
    if len(grid.shape) != 2:
        raise ValueError("the p-solver works on two-dimensional grids")
    U = np.asarray(boundary_values, dtype=float)
    if U.ndim == 1:
        U = U[:, None]
    if U.shape[0] != grid.nodes.shape[0]:
        raise ValueError("need one value row per grid node")
    if not np.all(np.isfinite(U[grid.boundary])):
        raise ValueError("boundary data must be finite")
    return U


def coons_patch(grid: Grid, values: np.ndarray) -> np.ndarray:
    """Transfinite (bilinearly blended) interpolation of the boundary values."""
    nx, ny = grid.shape
    U = values.reshape(nx, ny, -1)
    s = np.linspace(0.0, 1.0, nx)[:, None, None]
    t = np.linspace(0.0, 1.0, ny)[None, :, None]
    L, R = U[:1, :, :], U[-1:, :, :]
    Bt, T = U[:, :1, :], U[:, -1:, :]
    corners = ((1 - s) * (1 - t) * U[0, 0] + s * (1 - t) * U[-1, 0]
               + (1 - s) * t * U[0, -1] + s * t * U[-1, -1])
    out = (1 - s) * L + s * R + (1 - t) * Bt + t * T - corners
    out = out.reshape(-1, U.shape[2])
    out[grid.boundary] = values[grid.boundary]
    return out


def _newton_direction(H: sp.csc_matrix, grad: np.ndarray) -> np.ndarray:
    """``-H^{-1} grad``, shifting the diagonal when ``H`` is singular (flat cells add nothing
    to the Hessian for ``p > 2``)."""
    diag = H.diagonal()
    shift = 0.0
    scale = float(np.abs(diag).max()) or 1.0
    for _ in range(8):
        A = H if shift == 0.0 else H + sp.identity(H.shape[0], format="csc") * shift
        with warnings.catch_warnings():
            warnings.simplefilter("error", spla.MatrixRankWarning)
            try:
                d = -spla.spsolve(A, grad)
                if np.all(np.isfinite(d)):
                    return d
            except (RuntimeError, spla.MatrixRankWarning):
                pass
        shift = 1e-10 * scale if shift == 0.0 else shift * 100.0
    return -grad


def solve_p(boundary_values, grid: Grid, p: float, init: np.ndarray | None = None,
            tol: float = 1e-9, max_iter: int = 500) -> DiscreteMap:
    """Minimize the discrete p-energy with the boundary rows of ``boundary_values`` fixed.

    Only boundary rows are read; ``init`` (defaults to a Coons patch) seeds the interior.
    Convergence: ``|grad| <= tol (1 + E)`` for the energy normalized to 1 at the current
    scale (cell gradients are divided by their largest norm, which keeps ``|G|^p`` in
    range for large ``p``); the scale is reset whenever ``E`` falls below 1e-2.
    ``history`` holds the log of the energy after every accepted step.
    """
    p = float(p)
    U = _validate(boundary_values, grid, p)
    prob = _Problem(grid, U, p)
    start = coons_patch(grid, U) if init is None else np.asarray(init, dtype=float).reshape(U.shape)
    z = start[prob.free].ravel().copy()
    prob.set_scale(z)

    E, grad, H = prob.derivatives(z)
    history = [prob.log_energy(E)]
    converged, it = False, 0
    gnorm = float(np.linalg.norm(grad))
    for it in range(1, max_iter + 1):
        if E < RESCALE_BELOW:
            prob.set_scale(z)
            E, grad, H = prob.derivatives(z)
            gnorm = float(np.linalg.norm(grad))
        if gnorm <= tol * (1.0 + E):
            converged = True
            it -= 1
            break
        d = _newton_direction(H, grad)
        slope = float(grad @ d)
        if not np.all(np.isfinite(d)) or slope >= 0.0:
            d, slope = -grad, -gnorm ** 2
        t, accepted = 1.0, False
        for _ in range(60):
            Et = prob.energy(z + t * d)
            if np.isnan(Et):
                raise StepError(f"non-finite energy in line search at p = {p}")
            if Et <= E + 1e-4 * t * slope:
                accepted = True
                break
            t *= 0.5
        if not accepted:
            # No decrease is representable: the iterate is at rounding level.
            converged = gnorm <= 1e-6 * (1.0 + E)
            break
        z = z + t * d
        E, grad, H = prob.derivatives(z)
        history.append(prob.log_energy(E))
        gnorm = float(np.linalg.norm(grad))
    else:
        converged = gnorm <= tol * (1.0 + E)

    u = prob.full(z)
    return DiscreteMap(grid, u, p, discrete_energy(grid, u, p), it, converged, gnorm, history)


def cell_gradients(grid: Grid, values: np.ndarray) -> np.ndarray:
    """Bilinear cell gradients, shape ``(cells, N, 2)``."""
    U = np.asarray(values, dtype=float)
    if U.ndim == 1:
        U = U[:, None]
    Gx, Gy = _cell_operators(grid)
    return np.stack([Gx @ U, Gy @ U], axis=-1)


def discrete_energy(grid: Grid, values: np.ndarray, p: float) -> float:
    """Unregularized ``sum |G_c u|^p * area``; may be ``inf`` for very large ``p``."""
    s = np.sqrt(np.einsum("cad,cad->c", *(2 * [cell_gradients(grid, values)])))
    with np.errstate(over="ignore"):
        return float(np.prod(grid.spacing) * np.sum(s ** p))


def lp_norms(grid: Grid, values: np.ndarray, p: float) -> tuple[float, float]:
    """``(mean-normalized L^p norm of |Du|, largest cell |Du|)``.

    Normalizing by the domain area makes the ratio of the two tend to 1 as ``p`` grows.
    """
    s = np.sqrt(np.einsum("cad,cad->c", *(2 * [cell_gradients(grid, values)])))
    m = float(s.max())
    if m == 0.0:
        return 0.0, 0.0
    return m * float(np.mean((s / m) ** p)) ** (1.0 / p), m


def infinity_residual_grid(grid: Grid, values: np.ndarray) -> np.ndarray:
    """Infinity-Laplacian from central-difference jets at interior nodes, shape ``(interior, N)``."""
    nx, ny = grid.shape
    hx, hy = grid.spacing
    U = np.asarray(values, dtype=float).reshape(nx, ny, -1)
    c = U[1:-1, 1:-1]
    ux = (U[2:, 1:-1] - U[:-2, 1:-1]) / (2 * hx)
    uy = (U[1:-1, 2:] - U[1:-1, :-2]) / (2 * hy)
    uxx = (U[2:, 1:-1] - 2 * c + U[:-2, 1:-1]) / hx ** 2
    uyy = (U[1:-1, 2:] - 2 * c + U[1:-1, :-2]) / hy ** 2
    uxy = (U[2:, 2:] - U[2:, :-2] - U[:-2, 2:] + U[:-2, :-2]) / (4 * hx * hy)
    grad = np.stack([ux, uy], axis=-1).reshape(-1, U.shape[2], 2)
    hess = np.stack([np.stack([uxx, uxy], -1), np.stack([uxy, uyy], -1)], -1).reshape(-1, U.shape[2], 2, 2)
    return residual_from_jet(Jet2(None, None, grad, hess)).total


@dataclass
class Stage:
    p: float
    energy: float
    lp_norm: float
    sup_norm: float
    residual: float
    iterations: int
    converged: bool

    @property
    def ratio(self) -> float:
        return self.lp_norm / self.sup_norm if self.sup_norm else 1.0


@dataclass
class ContinuationTrace:
    grid: str
    stages: list[Stage] = field(default_factory=list)
    solution: DiscreteMap | None = field(default=None, repr=False)

    def __post_init__(self):
        ps = [s.p for s in self.stages]
        if any(b <= a for a, b in zip(ps, ps[1:])):
            raise ValueError("p must be strictly increasing")

    def to_dict(self) -> dict:
        return {"grid": self.grid,
                "stages": [dict(vars(s), ratio=s.ratio) for s in self.stages]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def default_schedule(p_max: float = 128.0) -> list[float]:
    ps, p = [], 2.0
    while p <= p_max:
        ps.append(p)
        p *= 2.0
    return ps


def continuation(boundary_values, grid: Grid, schedule=None, warm: bool = True,
                 tol: float = 1e-9, max_iter: int = 500) -> ContinuationTrace:
    """Solve along an increasing ``p`` schedule, each stage seeded by the previous one."""
    ps = [float(p) for p in (schedule or default_schedule())]
    if any(b <= a for a, b in zip(ps, ps[1:])):
        raise ValueError("p schedule must be strictly increasing")
    U = _validate(boundary_values, grid, ps[0])
    stages, init, sol = [], None, None
    for p in ps:
        sol = solve_p(U, grid, p, init=init, tol=tol, max_iter=max_iter)
        lp, sup = lp_norms(grid, sol.values, p)
        res = float(np.linalg.norm(infinity_residual_grid(grid, sol.values), axis=-1).max())
        stages.append(Stage(p, sol.energy, lp, sup, res, sol.iterations, sol.converged))
        if warm:
            init = sol.values
    label = "x".join(str(r) for r in grid.resolution)
    return ContinuationTrace(label, stages, sol)


def boundary_from_map(m: MapSpec, grid: Grid) -> np.ndarray:
    """Node values with the map's trace on the boundary and NaN inside."""
    U = np.full((grid.nodes.shape[0], m.N), np.nan)
    U[grid.boundary] = m.value(grid.nodes[grid.boundary])
    return U


def boundary_from_csv(text: str, grid: Grid, tol: float = 1e-9) -> np.ndarray:
    """Read rows ``x, y, u1, ..., uN``; every boundary node of ``grid`` must be listed."""
    rows = [r for r in csv.reader(io.StringIO(text)) if r and not r[0].lstrip().startswith("#")]
    try:
        data = np.array([[float(v) for v in r] for r in rows])
    except ValueError:
        data = np.array([[float(v) for v in r] for r in rows[1:]])
    if data.ndim != 2 or data.shape[1] < 3:
        raise ValueError("boundary CSV needs columns x, y, u1[, u2, ...]")
    pts, vals = data[:, :2], data[:, 2:]
    U = np.full((grid.nodes.shape[0], vals.shape[1]), np.nan)
    for k in np.flatnonzero(grid.boundary):
        d = np.abs(pts - grid.nodes[k]).max(axis=1)
        j = int(np.argmin(d))
        if d[j] > tol:
            raise ValueError(f"boundary node {grid.nodes[k].tolist()} missing from CSV")
        U[k] = vals[j]
    return U

