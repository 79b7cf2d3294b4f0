"""Symbolic maps u: box in R^n -> R^N, their exact 2-jets, grids and the map catalog."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

from . import expr as ex
from .expr import DomainError, Expr

Box = tuple[tuple[float, float], ...]


class UnknownMapError(KeyError):
    """Unknown catalog entry."""


@dataclass(frozen=True)
class Jet2:
    """Point value, gradient ``(N, n)`` and Hessian ``(N, n, n)``.

    All fields may carry a leading batch axis when evaluated on many points.
    """

    point: np.ndarray
    value: np.ndarray
    grad: np.ndarray
    hess: np.ndarray


@dataclass(frozen=True)
class MapSpec:
    """A map given by one expression tree per target component on an axis box."""

    n: int
    N: int
    components: tuple[Expr, ...]
    box: Box
    name: str = "custom"

    def __post_init__(self):
        comps = tuple(ex.lift(c) for c in self.components)
        object.__setattr__(self, "components", comps)
        object.__setattr__(self, "box", tuple((float(a), float(b)) for a, b in self.box))
        if self.n < 1 or self.N < 1:
            raise ValueError("dimensions must be >= 1")
        if len(comps) != self.N:
            raise ValueError(f"expected {self.N} components, got {len(comps)}")
        if len(self.box) != self.n or any(a >= b for a, b in self.box):
            raise ValueError(f"box {self.box} is not a non-degenerate box in R^{self.n}")
        if max(c.max_var() for c in comps) >= self.n:
            raise ValueError("component uses a variable beyond the domain dimension")

    @cached_property
    def grad_exprs(self) -> tuple[tuple[Expr, ...], ...]:
        return tuple(tuple(c.diff(i) for i in range(self.n)) for c in self.components)

    @cached_property
    def hess_exprs(self) -> tuple[tuple[tuple[Expr, ...], ...], ...]:
        out = []
        for row in self.grad_exprs:
            H = [[None] * self.n for _ in range(self.n)]
            for i in range(self.n):
                for j in range(i, self.n):
                    H[i][j] = H[j][i] = row[i].diff(j)
            out.append(tuple(tuple(r) for r in H))
        return tuple(out)

    @property
    def lower(self) -> np.ndarray:
        return np.array([a for a, _ in self.box])

    @property
    def upper(self) -> np.ndarray:
        return np.array([b for _, b in self.box])

    def contains(self, X, tol: float = 1e-12) -> np.ndarray:
        X = np.asarray(X, dtype=float)
        return np.all((X >= self.lower - tol) & (X <= self.upper + tol), axis=-1)

    def _env(self, X, check):
        X = np.asarray(X, dtype=float)
        if X.shape[-1] != self.n:
            raise ValueError(f"points must have {self.n} coordinates, got shape {X.shape}")
        if check and not np.all(self.contains(X)):
            raise DomainError(f"point(s) outside the domain box {self.box}")
        return X, [X[..., i] for i in range(self.n)]

    @staticmethod
    def _eval(e: Expr, env) -> np.ndarray:
        with np.errstate(all="ignore"):
            v = e.evaluate(env)
        if not np.all(np.isfinite(v)):
            raise DomainError(f"non-finite value of {e.to_prefix()}")
        return v

    def value(self, X, check: bool = True) -> np.ndarray:
        X, env = self._env(X, check)
        return np.stack([self._eval(c, env) for c in self.components], axis=-1)

    def gradient(self, X, check: bool = True) -> np.ndarray:
        X, env = self._env(X, check)
        rows = [np.stack([self._eval(g, env) for g in row], axis=-1) for row in self.grad_exprs]
        return np.stack(rows, axis=-2)

    def hessian(self, X, check: bool = True) -> np.ndarray:
        X, env = self._env(X, check)
        blocks = []
        for H in self.hess_exprs:
            cache = {}
            rows = []
            for i in range(self.n):
                r = []
                for j in range(self.n):
                    key = (min(i, j), max(i, j))
                    if key not in cache:
                        cache[key] = self._eval(H[i][j], env)
                    r.append(cache[key])
                rows.append(np.stack(r, axis=-1))
            blocks.append(np.stack(rows, axis=-2))
        return np.stack(blocks, axis=-3)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "n": self.n,
            "N": self.N,
            "components": [c.to_prefix() for c in self.components],
            "box": [list(b) for b in self.box],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, d: dict) -> "MapSpec":
        try:
            comps = tuple(ex.parse(s) for s in d["components"])
            return cls(
                n=int(d["n"]),
                N=int(d["N"]),
                components=comps,
                box=tuple(tuple(b) for b in d["box"]),
                name=d.get("name", "custom"),
            )
        except KeyError as exc:
            raise ValueError(f"map document is missing field {exc}") from exc

    @classmethod
    def from_json(cls, text: str) -> "MapSpec":
        return cls.from_dict(json.loads(text))


def jet(m: MapSpec, x, check: bool = True) -> Jet2:
    """Exact symbolic 2-jet at a point ``(n,)`` or a batch of points ``(..., n)``."""
    x = np.asarray(x, dtype=float)
    return Jet2(x, m.value(x, check), m.gradient(x, check), m.hessian(x, check))


def fd_step(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return 1e-4 * (1.0 + np.linalg.norm(x, axis=-1))


def jet_fd(m: MapSpec, x) -> Jet2:
    """Central-difference 2-jet; an independent cross-check of :func:`jet`."""
    x = np.asarray(x, dtype=float)
    h = fd_step(x)
    hh = h[..., None]
    margin = np.minimum(x - m.lower, m.upper - x)
    if np.any(margin < 2.0 * hh):
        raise DomainError("jet_fd point is closer than 2 steps to the box boundary")
    E = np.eye(m.n)
    f = lambda y: m.value(y)  # noqa: E731
    u0 = f(x)
    grad = np.empty(x.shape[:-1] + (m.N, m.n))
    hess = np.empty(x.shape[:-1] + (m.N, m.n, m.n))
    plus = [f(x + hh * E[i]) for i in range(m.n)]
    minus = [f(x - hh * E[i]) for i in range(m.n)]
    h2 = (h * h)[..., None]
    for i in range(m.n):
        grad[..., :, i] = (plus[i] - minus[i]) / (2.0 * h[..., None])
        hess[..., :, i, i] = (plus[i] - 2.0 * u0 + minus[i]) / h2
        for j in range(i + 1, m.n):
            d = (
                f(x + hh * (E[i] + E[j]))
                - f(x + hh * (E[i] - E[j]))
                - f(x - hh * (E[i] - E[j]))
                + f(x - hh * (E[i] + E[j]))
            ) / (4.0 * h2)
            hess[..., :, i, j] = hess[..., :, j, i] = d
    return Jet2(x, u0, grad, hess)


@dataclass(frozen=True)
class Grid:
    """Uniform tensor grid over a box; nodes in C order (last axis fastest)."""

    box: Box
    resolution: tuple[int, ...]
    nodes: np.ndarray = field(repr=False)
    boundary: np.ndarray = field(repr=False)

    @classmethod
    def over(cls, box, resolution) -> "Grid":
        box = tuple((float(a), float(b)) for a, b in box)
        if isinstance(resolution, (int, np.integer)):
            resolution = (int(resolution),) * len(box)
        resolution = tuple(int(r) for r in resolution)
        if len(resolution) != len(box) or min(resolution) < 2:
            raise ValueError("need a resolution >= 2 for every axis")
        axes = [np.linspace(a, b, r) for (a, b), r in zip(box, resolution)]
        mesh = np.meshgrid(*axes, indexing="ij")
        nodes = np.stack([g.ravel() for g in mesh], axis=-1)
        idx = np.meshgrid(*[np.arange(r) for r in resolution], indexing="ij")
        bnd = np.zeros(nodes.shape[0], dtype=bool)
        for k, r in zip(idx, resolution):
            bnd |= (k.ravel() == 0) | (k.ravel() == r - 1)
        nodes.setflags(write=False)
        bnd.setflags(write=False)
        return cls(box, resolution, nodes, bnd)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.resolution

    @property
    def spacing(self) -> np.ndarray:
        return np.array([(b - a) / (r - 1) for (a, b), r in zip(self.box, self.resolution)])

    @property
    def h(self) -> float:
        return float(np.max(self.spacing))

    @property
    def interior(self) -> np.ndarray:
        return ~self.boundary

    def axes(self) -> list[np.ndarray]:
        return [np.linspace(a, b, r) for (a, b), r in zip(self.box, self.resolution)]

    def reshape(self, values: np.ndarray) -> np.ndarray:
        """Reshape a per-node array ``(m, ...)`` to ``(*resolution, ...)``."""
        return np.asarray(values).reshape(self.resolution + np.shape(values)[1:])


def parse_resolution(text: str) -> tuple[int, ...]:
    """``"41x41"`` -> ``(41, 41)``."""
    try:
        res = tuple(int(t) for t in text.lower().split("x"))
    except ValueError as exc:
        raise ValueError(f"bad grid spec {text!r}; expected e.g. 41x41") from exc
    if min(res) < 2:
        raise ValueError("grid resolution must be >= 2 per axis")
    return res


# catalog

def _affine(A=None, b=None, box=None) -> MapSpec:
    A = np.atleast_2d(np.eye(2) if A is None else np.asarray(A, dtype=float))
    N, n = A.shape
    b = np.zeros(N) if b is None else np.asarray(b, dtype=float)
    xs = ex.variables(n)
    comps = []
    for a in range(N):
        e: Expr = ex.Const(float(b[a]))
        for i in range(n):
            e = e + float(A[a, i]) * xs[i]
        comps.append(e)
    return MapSpec(n, N, tuple(comps), box or ((-1.0, 1.0),) * n, "affine")


def _exp_diag(box=None):
    x, y = ex.variables(2)
    return MapSpec(2, 2, (ex.cos(x) - ex.cos(y), ex.sin(x) - ex.sin(y)),
                   box or ((-1.0, 1.0), (-1.0, 1.0)), "exp_diag")


def _aronsson_43(box=None):
    x, y = ex.variables(2)
    k = ex.Const(4.0 / 3.0)
    return MapSpec(2, 1, (x ** k - y ** k,), box or ((1.0, 2.0), (1.0, 2.0)), "aronsson_43")


def _catenoid(box=None):
    s, t = ex.variables(2)
    return MapSpec(2, 3, (ex.cosh(s) * ex.cos(t), ex.cosh(s) * ex.sin(t), s),
                   box or ((-1.0, 1.0), (-3.0, 3.0)), "catenoid")


def _helicoid(box=None):
    s, t = ex.variables(2)
    return MapSpec(2, 3, (ex.sinh(s) * ex.cos(t), ex.sinh(s) * ex.sin(t), t),
                   box or ((-1.0, 1.0), (-3.0, 3.0)), "helicoid")


def _enneper(box=None, shear: float = 0.0):
    a, b = ex.variables(2)
    if shear:
        # equal-norm, non-orthogonal reparametrization (x, y) = (a + c b, c a + b)
        x, y = a + shear * b, shear * a + b
        name = "enneper_sheared"
    else:
        x, y = a, b
        name = "enneper"
    return MapSpec(
        2, 3,
        (x - x ** 3 / 3.0 + x * y ** 2, -y + y ** 3 / 3.0 - x ** 2 * y, x ** 2 - y ** 2),
        box or ((-1.0, 1.0), (-1.0, 1.0)), name,
    )


def _sphere_stereo(box=None):
    x, y = ex.variables(2)
    d = 1.0 + x ** 2 + y ** 2
    return MapSpec(2, 3, (2.0 * x / d, 2.0 * y / d, (x ** 2 + y ** 2 - 1.0) / d),
                   box or ((-1.0, 1.0), (-1.0, 1.0)), "sphere_stereo")


def _curve_affine(a=(1.0, 2.0, 0.5), b=(0.0, 1.0, 0.0), box=None):
    (t,) = ex.variables(1)
    comps = tuple(float(bi) + float(ai) * t for ai, bi in zip(a, b))
    return MapSpec(1, len(comps), comps, box or ((-1.0, 1.0),), "curve_affine")


def _curve_circle(box=None):
    (t,) = ex.variables(1)
    return MapSpec(1, 2, (ex.cos(t), ex.sin(t)), box or ((-3.0, 3.0),), "curve_circle")


def _plane(box=None):
    x, y = ex.variables(2)
    return MapSpec(2, 3, (x, y, ex.Const(0.0)), box or ((-1.0, 1.0), (-1.0, 1.0)), "plane")


def _cylinder(box=None):
    x, y = ex.variables(2)
    return MapSpec(2, 3, (ex.cos(x), ex.sin(x), y), box or ((-1.0, 1.0), (-1.0, 1.0)), "cylinder")


def _bowl(box=None):
    x, y = ex.variables(2)
    return MapSpec(2, 1, (x ** 2 + y ** 2,), box or ((-1.0, 1.0), (-1.0, 1.0)), "bowl")


def _fold(box=None):
    x, y = ex.variables(2)
    return MapSpec(2, 2, (x ** 2, y), box or ((0.2, 1.0), (-1.0, 1.0)), "fold")


def _quadratic(box=None):
    x, y = ex.variables(2)
    return MapSpec(2, 2, (x ** 2, x * y), box or ((-1.0, 1.0), (-1.0, 1.0)), "quadratic")


def _rotation(angle: float = 0.5, box=None):
    c, s = np.cos(angle), np.sin(angle)
    m = _affine(np.array([[c, -s], [s, c]]), box=box)
    return MapSpec(m.n, m.N, m.components, m.box, "rotation")


_CATALOG = {
    "affine": _affine,
    "exp_diag": _exp_diag,
    "aronsson_43": _aronsson_43,
    "catenoid": _catenoid,
    "helicoid": _helicoid,
    "enneper": _enneper,
    "sphere_stereo": _sphere_stereo,
    "curve_affine": _curve_affine,
    "curve_circle": _curve_circle,
    # auxiliary maps used as controls and counter-examples
    "plane": _plane,
    "cylinder": _cylinder,
    "bowl": _bowl,
    "fold": _fold,
    "quadratic": _quadratic,
    "rotation": _rotation,
    "enneper_sheared": lambda shear=0.3, box=None: _enneper(box, shear),
}

CATALOG_NAMES = tuple(_CATALOG)
SURFACE_NAMES = ("catenoid", "helicoid", "enneper", "sphere_stereo", "plane", "cylinder")
CONFORMAL_SURFACES = ("catenoid", "helicoid", "enneper", "sphere_stereo")


def catalog(name: str, **params) -> MapSpec:
    """Return a named map with its default (full-rank where possible) box.

    ``affine`` accepts ``A`` and ``b``; every entry accepts ``box``.
    """
    try:
        factory = _CATALOG[name]
    except KeyError:
        raise UnknownMapError(f"unknown catalog map {name!r}; known: {', '.join(_CATALOG)}") from None
    return factory(**params)


def load_map(source: str) -> MapSpec:
    """A catalog name or a path to a JSON map document."""
    if source in _CATALOG:
        return catalog(source)
    with open(source, encoding="utf-8") as fh:
        return MapSpec.from_json(fh.read())


def random_interior_points(m: MapSpec, count: int, rng: np.random.Generator,
                           margin: float = 0.05) -> np.ndarray:
    """Uniform points in the box shrunk by ``margin`` times each side length."""
    lo, hi = m.lower, m.upper
    pad = margin * (hi - lo)
    return rng.uniform(lo + pad, hi - pad, size=(count, m.n))


def frobenius_sq(M: np.ndarray) -> np.ndarray:
    return np.einsum("...ai,...ai->...", M, M)


def laplacian(hess: np.ndarray) -> np.ndarray:
    return np.einsum("...aii->...a", hess)


def as_points(x: Sequence[float] | np.ndarray, n: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[-1:] != (n,):
        raise ValueError(f"expected points with {n} coordinates, got shape {x.shape}")
    return x
