"""Empirical minimality testers for the supremal (and L^p) gradient functional.

Two families of perturbations are sampled:

* rank-one variations ``u + g xi``: a scalar bump ``g`` vanishing on the
  boundary of a subdomain, times a fixed unit direction ``xi``;
* normal free variations ``u + delta h nu``: an arbitrary profile ``h`` (not
  vanishing on the boundary) times a unit normal field ``nu``.

A test cannot prove minimality; it reports the worst observed change of the
norm against a discretization floor.
"""

from __future__ import annotations

import csv
import io
import json
from collections import deque
from dataclasses import dataclass, field
from typing import Protocol

import numpy as np

from .map_model import Box, Grid, MapSpec, frobenius_sq, jet, laplacian
from .tensor_core import DEFAULT_RANK_TOL, projectors_batch, svd_small, numerical_rank


class ConfigError(ValueError):
    pass


class FrameError(ValueError):
    pass


class DegenerateImmersionError(ValueError):
    pass


@dataclass(frozen=True)
class VariationConfig:
    """Region ``domain`` (compactly inside the map box) from which subdomains are drawn."""

    domain: Box
    n_variations: int = 100
    seed: int = 0
    amplitudes: tuple[float, ...] = (0.05, 0.2, 0.5, 0.9)
    resolution: int = 41

    def __post_init__(self):
        object.__setattr__(self, "domain", tuple((float(a), float(b)) for a, b in self.domain))
        if any(a >= b for a, b in self.domain):
            raise ConfigError(f"degenerate domain {self.domain}")
        if self.n_variations < 1 or self.resolution < 5:
            raise ConfigError("need n_variations >= 1 and resolution >= 5")

    def check_inside(self, m: MapSpec):
        lo, hi = np.array(self.domain).T
        if len(self.domain) != m.n or np.any(lo <= m.lower) or np.any(hi >= m.upper):
            raise ConfigError(f"domain {self.domain} is not compactly inside the box {m.box}")


@dataclass
class VariationReport:
    test: str
    map: str
    p: float
    base_norm: float
    norms: list[float] = field(default_factory=list)
    base_norms: list[float] = field(default_factory=list)
    margins: list[float] = field(default_factory=list)
    tolerances: list[float] = field(default_factory=list)
    labels: list[str] = field(default_factory=list)
    seed: int = 0

    @property
    def worst_margin(self) -> float:
        return float(min(self.margins))

    @property
    def violations(self) -> list[dict]:
        return [
            {"index": k, "variation": lab, "margin": mg, "tolerance": tol}
            for k, (lab, mg, tol) in enumerate(zip(self.labels, self.margins, self.tolerances))
            if mg < -tol
        ]

    @property
    def passed(self) -> bool:
        return not self.violations

    def summary(self) -> dict:
        return {
            "test": self.test,
            "map": self.map,
            "p": "inf" if np.isinf(self.p) else self.p,
            "seed": self.seed,
            "base_norm": self.base_norm,
            "count": len(self.margins),
            "worst_margin": self.worst_margin,
            "violations": self.violations,
            "passed": self.passed,
        }

    def to_json(self) -> str:
        return json.dumps(self.summary(), indent=2, sort_keys=True)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["index", "variation", "base_norm", "varied_norm", "margin", "tolerance"])
        for k, row in enumerate(zip(self.labels, self.base_norms, self.norms, self.margins, self.tolerances)):
            w.writerow([k, row[0]] + [repr(float(v)) for v in row[1:]])
        return buf.getvalue()


# sampling helpers

def _ball_nodes(center, radius, resolution):
    """Cube-grid nodes inside a closed ball (center is a node) plus near-boundary
    nodes projected radially onto the sphere."""
    n = len(center)
    r = resolution | 1
    ax = np.linspace(-radius, radius, r)
    h = ax[1] - ax[0]
    pts = np.stack([g.ravel() for g in np.meshgrid(*([ax] * n), indexing="ij")], axis=-1)
    d = np.linalg.norm(pts, axis=-1)
    inside = pts[d <= radius]
    shell = pts[(d > radius) & (d <= radius + h * np.sqrt(n))]
    shell = shell * (radius / np.linalg.norm(shell, axis=-1))[:, None]
    return center + np.vstack([inside, shell]), h


def _box_grid(box, resolution):
    # 12k + 1 nodes per axis put every critical point of sin(k pi s), k | 6, on a node
    r = 12 * max(1, int(np.ceil((resolution - 1) / 12))) + 1
    return Grid.over(box, r)


def _random_subbox(rng, domain, min_frac=0.3):
    lo, hi = np.array(domain).T
    size = (hi - lo) * rng.uniform(min_frac, 1.0, size=lo.shape)
    a = lo + (hi - lo - size) * rng.uniform(0.0, 1.0, size=lo.shape)
    return tuple(zip(a, a + size))


def _unit_vector(rng, N):
    v = rng.normal(size=N)
    return v / np.linalg.norm(v)


def _hess_norm(H):
    return np.sqrt(np.einsum("...aij,...aij->...", H, H))


# bumps vanishing on the subdomain boundary


def paraboloid_bump(X, center, radius, delta):
    """``g = delta/2 (r^2 - |z - c|^2)`` on the ball: value, gradient, Hessian."""
    d = X - center
    g = 0.5 * delta * (radius ** 2 - np.einsum("...i,...i->...", d, d))
    Dg = -delta * d
    D2g = np.broadcast_to(-delta * np.eye(X.shape[-1]), X.shape[:-1] + (X.shape[-1],) * 2)
    return g, Dg, D2g


def sine_bump(X, box, modes, delta):
    """``delta L/(k pi) prod_i sin(k_i pi (z_i - a_i) / L_i)``, zero on the box boundary."""
    lo, hi = np.array(box).T
    L = hi - lo
    k = np.asarray(modes, dtype=float)
    w = k * np.pi / L
    s = np.sin(w * (X - lo))
    c = np.cos(w * (X - lo))
    amp = delta / np.max(w)
    n = X.shape[-1]
    g = amp * np.prod(s, axis=-1)
    Dg = np.empty(X.shape)
    D2g = np.empty(X.shape + (n,))
    for i in range(n):
        others = np.prod(np.delete(s, i, axis=-1), axis=-1) if n > 1 else 1.0
        Dg[..., i] = amp * w[i] * c[..., i] * others
        for j in range(n):
            if i == j:
                D2g[..., i, i] = -amp * w[i] ** 2 * np.prod(s, axis=-1)
            else:
                rest = np.prod(np.delete(s, [i, j], axis=-1), axis=-1) if n > 2 else 1.0
                D2g[..., i, j] = amp * w[i] * w[j] * c[..., i] * c[..., j] * rest
    return g, Dg, D2g


def rank_one_test(m: MapSpec, cfg: VariationConfig) -> VariationReport:
    """Sample ``u + g xi`` on random sub-balls / sub-boxes and compare grid sup-norms of the gradient.

    PASS iff every margin ``sup|D(u+g xi)| - sup|Du|`` is at least
    ``-2 h max|D^2(u + g xi)|`` on the sample grid of that variation.
    """
    cfg.check_inside(m)
    rng = np.random.default_rng(cfg.seed)
    base_grid = Grid.over(cfg.domain, cfg.resolution)
    base = float(np.sqrt(frobenius_sq(m.gradient(base_grid.nodes)).max()))
    rep = VariationReport("rank_one", m.name, np.inf, base, seed=cfg.seed)
    lo, hi = np.array(cfg.domain).T
    for k in range(cfg.n_variations):
        xi = _unit_vector(rng, m.N)
        delta = float(rng.choice(cfg.amplitudes))
        if k % 2 == 0:
            center = rng.uniform(lo, hi)
            rmax = float(np.min(np.minimum(center - lo, hi - center)))
            if rmax <= 1e-3 * float(np.min(hi - lo)):
                center = 0.5 * (lo + hi)
                rmax = 0.5 * float(np.min(hi - lo))
            radius = rmax * rng.uniform(0.3, 1.0)
            X, h = _ball_nodes(center, radius, cfg.resolution)
            _, Dg, D2g = paraboloid_bump(X, center, radius, delta)
            label = f"paraboloid(c={np.round(center, 4).tolist()}, r={radius:.4g}, delta={delta})"
        else:
            box = _random_subbox(rng, cfg.domain)
            grid = _box_grid(box, cfg.resolution)
            X, h = grid.nodes, grid.h
            modes = rng.integers(1, 4, size=m.n)
            _, Dg, D2g = sine_bump(X, box, modes, delta)
            label = f"sine(box={np.round(box, 4).tolist()}, k={modes.tolist()}, delta={delta})"
        j = jet(m, X)
        Dw = j.grad + xi[:, None] * Dg[..., None, :]
        D2w = j.hess + xi[:, None, None] * D2g[..., None, :, :]
        b = float(np.sqrt(frobenius_sq(j.grad).max()))
        v = float(np.sqrt(frobenius_sq(Dw).max()))
        rep.labels.append(label + f" xi={np.round(xi, 4).tolist()}")
        rep.base_norms.append(b)
        rep.norms.append(v)
        rep.margins.append(v - b)
        rep.tolerances.append(float(2.0 * h * _hess_norm(D2w).max()))
    return rep


# normal fields and free profiles


class Profile(Protocol):
    def value(self, X) -> np.ndarray: ...
    def grad(self, X) -> np.ndarray: ...


@dataclass(frozen=True)
class ConstantProfile:
    c: float

    def value(self, X):
        return np.full(X.shape[:-1], self.c)

    def grad(self, X):
        return np.zeros(X.shape)


@dataclass(frozen=True)
class LinearProfile:
    a: tuple[float, ...]
    c: float = 0.0

    def value(self, X):
        return X @ np.asarray(self.a) + self.c

    def grad(self, X):
        return np.broadcast_to(np.asarray(self.a, dtype=float), X.shape)


@dataclass(frozen=True)
class CosineProfile:
    """``amp * prod_i cos(k_i pi (z_i - a_i) / L_i)`` over a box (free at the boundary)."""

    modes: tuple[int, ...]
    box: Box
    amp: float = 1.0

    def _parts(self, X):
        lo, hi = np.array(self.box).T
        w = np.asarray(self.modes, dtype=float) * np.pi / (hi - lo)
        return w, np.cos(w * (X - lo)), np.sin(w * (X - lo))

    def value(self, X):
        _, c, _ = self._parts(X)
        return self.amp * np.prod(c, axis=-1)

    def grad(self, X):
        w, c, s = self._parts(X)
        out = np.empty(X.shape)
        for i in range(X.shape[-1]):
            others = np.prod(np.delete(c, i, axis=-1), axis=-1) if X.shape[-1] > 1 else 1.0
            out[..., i] = -self.amp * w[i] * s[..., i] * others
        return out


@dataclass(frozen=True)
class NormalField:
    """Unit normal field ``nu = P c / |P c|`` with ``P = [Du]^perp`` and a fixed ``c``.

    The derivative is exact: ``D_k P`` follows from ``P = I - Du g^{-1} Du^T``.
    """

    map: MapSpec
    reference: tuple[float, ...]

    def __call__(self, X):
        return self.evaluate(X)[0]

    def evaluate(self, X):
        """Return ``(nu, Dnu)`` with shapes ``(..., N)`` and ``(..., N, n)``."""
        j = jet(self.map, X)
        Du, D2u = j.grad, j.hess
        g = np.einsum("...ai,...aj->...ij", Du, Du)
        if np.any(np.linalg.det(g) <= 0.0):
            raise DegenerateImmersionError("Du is not injective at some sample point")
        gi = np.linalg.inv(g)
        B = Du @ gi  # (..., N, n)
        P = np.eye(self.map.N) - B @ np.swapaxes(Du, -1, -2)
        c = np.asarray(self.reference, dtype=float)
        v = P @ c
        nv = np.linalg.norm(v, axis=-1)
        if np.any(nv < 1e-10):
            raise DegenerateImmersionError("reference vector is tangent at some sample point")
        nu = v / nv[..., None]
        Dnu = np.empty(Du.shape)
        I = np.eye(self.map.N)
        for k in range(self.map.n):
            A = D2u[..., :, :, k]
            At = np.swapaxes(A, -1, -2)
            dg = At @ Du + np.swapaxes(Du, -1, -2) @ A
            dPt = A @ gi @ np.swapaxes(Du, -1, -2) + B @ At - B @ dg @ np.swapaxes(B, -1, -2)
            dv = -(dPt @ c)
            proj = I - np.einsum("...a,...b->...ab", nu, nu)
            Dnu[..., :, k] = np.einsum("...ab,...b->...a", proj, dv) / nv[..., None]
        return nu, Dnu


def _trapezoid_weights(grid: Grid) -> np.ndarray:
    ws = []
    for (a, b), r in zip(grid.box, grid.resolution):
        w = np.full(r, (b - a) / (r - 1))
        w[0] *= 0.5
        w[-1] *= 0.5
        ws.append(w)
    W = ws[0]
    for w in ws[1:]:
        W = np.multiply.outer(W, w)
    return W.ravel()


def _varied_gradient(m, X, h: Profile, nu_field: NormalField, eps):
    j = jet(m, X)
    nu, Dnu = nu_field.evaluate(X)
    Dhnu = nu[..., :, None] * h.grad(X)[..., None, :] + h.value(X)[..., None, None] * Dnu
    return j, nu, Dhnu, j.grad + eps * Dhnu


def _lp_norm(values, weights, p):
    """``(sum w |v|^p)^(1/p)`` computed with the max factored out."""
    if np.isinf(p):
        return float(values.max())
    s = float(values.max())
    if s == 0.0:
        return 0.0
    return s * float(np.sum(weights * (values / s) ** p)) ** (1.0 / p)


def energy(m: MapSpec, D: Box, h: Profile, nu_field: NormalField, p: float, eps: float,
           resolution: int = 41) -> float:
    """Trapezoid value of ``int_D |D(u + eps h nu)|^p``."""
    grid = Grid.over(D, resolution)
    _, _, _, Dw = _varied_gradient(m, grid.nodes, h, nu_field, eps)
    return float(np.sum(_trapezoid_weights(grid) * frobenius_sq(Dw) ** (p / 2.0)))


def first_variation(m: MapSpec, D: Box, h: Profile, nu_field: NormalField, p: float,
                    resolution: int = 41) -> float:
    """``-p int_D |Du|^(p-2) (nu . Lap u) h`` by trapezoid quadrature."""
    if not (2.0 <= p < np.inf):
        raise ValueError("first_variation needs a finite p >= 2")
    grid = Grid.over(D, resolution)
    X = grid.nodes
    j = jet(m, X)
    nu = nu_field(X)
    integrand = frobenius_sq(j.grad) ** ((p - 2.0) / 2.0) * np.einsum("...a,...a->...", nu, laplacian(j.hess)) * h.value(X)
    return float(-p * np.sum(_trapezoid_weights(grid) * integrand))


def first_variation_scale(m: MapSpec, D: Box, h: Profile, nu_field: NormalField, p: float,
                          resolution: int = 41) -> float:
    """``p int_D |Du|^(p-2) |Du : D(h nu)|``, the size of the first variation before
    cancellation; the natural yardstick when the variation itself is zero."""
    grid = Grid.over(D, resolution)
    j, _, Dhnu, _ = _varied_gradient(m, grid.nodes, h, nu_field, 0.0)
    inner = np.abs(np.einsum("...ai,...ai->...", j.grad, Dhnu))
    return float(p * np.sum(_trapezoid_weights(grid) * frobenius_sq(j.grad) ** ((p - 2.0) / 2.0) * inner))


def first_variation_fd(m, D, h, nu_field, p, resolution=41, step=1e-5) -> float:
    """Centered difference of :func:`energy` in ``eps`` at 0."""
    return (energy(m, D, h, nu_field, p, step, resolution) - energy(m, D, h, nu_field, p, -step, resolution)) / (2 * step)


def second_variation(m: MapSpec, D: Box, h: Profile, nu_field: NormalField, p: float, eps: float = 0.0,
                     resolution: int = 41) -> float:
    if p < 2.0:
        raise ValueError("second_variation needs p >= 2")
    grid = Grid.over(D, resolution)
    _, _, Dhnu, Dw = _varied_gradient(m, grid.nodes, h, nu_field, eps)
    wsq = frobenius_sq(Dw)
    term = wsq ** ((p - 2.0) / 2.0) * frobenius_sq(Dhnu)
    if p != 2.0:
        inner = np.einsum("...ai,...ai->...", Dw, Dhnu)
        term = term + (p - 2.0) * wsq ** ((p - 4.0) / 2.0) * inner ** 2
    return float(p * np.sum(_trapezoid_weights(grid) * term))


def second_variation_fd(m, D, h, nu_field, p, eps=0.0, resolution=41, step=1e-4) -> float:
    e = lambda t: energy(m, D, h, nu_field, p, t, resolution)  # noqa: E731
    return (e(eps + step) - 2.0 * e(eps) + e(eps - step)) / step ** 2


def _random_profile(rng, k, n, box):
    kind = k % 4
    if kind in (0, 1):
        # constants first: the sign-of-the-normal-Laplacian profile is the discriminating one
        return ConstantProfile(1.0 if kind == 0 else -1.0)
    if kind == 2:
        return LinearProfile(tuple(rng.normal(size=n)), float(rng.normal()))
    return CosineProfile(tuple(int(v) for v in rng.integers(1, 4, size=n)), box, float(rng.choice([-1.0, 1.0])))


def normal_area_test(m: MapSpec, cfg: VariationConfig, p: float = np.inf,
                     tol: float = 1e-9, reference=None) -> VariationReport:
    """Sample free normal variations ``u + delta h nu`` on random sub-boxes.

    For finite ``p`` norms are trapezoid L^p norms, for ``p = inf`` grid maxima. PASS iff
    every margin is at least ``-tol * (1 + base)``; base and varied norms share the grid.
    """
    cfg.check_inside(m)
    if m.n > m.N:
        raise DegenerateImmersionError("normal variations need an immersion (n <= N)")
    if m.n == m.N:
        raise DegenerateImmersionError("a local diffeomorphism has no normal directions")
    p = float(p)
    if p < 2.0:
        raise ValueError("p must lie in [2, inf]")
    rng = np.random.default_rng(cfg.seed)
    full = Grid.over(cfg.domain, cfg.resolution)
    base = _lp_norm(np.sqrt(frobenius_sq(m.gradient(full.nodes))), _trapezoid_weights(full), p)
    rep = VariationReport("normal_area", m.name, p, base, seed=cfg.seed)
    for k in range(cfg.n_variations):
        box = cfg.domain if k < 2 else _random_subbox(rng, cfg.domain)
        grid = Grid.over(box, cfg.resolution)
        W = _trapezoid_weights(grid)
        h = _random_profile(rng, k, m.n, box)
        ref = np.asarray(reference, dtype=float) if reference is not None else rng.normal(size=m.N)
        field_ = NormalField(m, tuple(ref))
        delta = float(rng.choice(cfg.amplitudes))
        j, nu, Dhnu, Dw = _varied_gradient(m, grid.nodes, h, field_, delta)
        b = _lp_norm(np.sqrt(frobenius_sq(j.grad)), W, p)
        v = _lp_norm(np.sqrt(frobenius_sq(Dw)), W, p)
        rep.labels.append(f"{h!r} delta={delta} box={np.round(box, 4).tolist()}")
        rep.base_norms.append(b)
        rep.norms.append(v)
        rep.margins.append(v - b)
        rep.tolerances.append(tol * (1.0 + b))
    return rep


# discrete normal frames


@dataclass(frozen=True)
class NormalFrame:
    """Orthonormal basis of the normal space at every grid node, aligned between neighbours.

    ``derivative[k, :, c, i]`` is the central difference (tiny step, re-aligned) of
    frame vector ``c`` along axis ``i`` at node ``k``.
    """

    grid: Grid
    basis: np.ndarray
    derivative: np.ndarray
    tangency_residual: float
    divergence_residual: float

    def min_neighbour_alignment(self) -> float:
        B = self.grid.reshape(self.basis)
        worst = np.inf
        for ax in range(B.ndim - 2):
            a = np.take(B, range(B.shape[ax] - 1), axis=ax)
            b = np.take(B, range(1, B.shape[ax]), axis=ax)
            d = np.einsum("...ac,...ac->...c", a, b)
            worst = min(worst, float(d.min()))
        return worst


def _null_basis(grad, tau):
    N = grad.shape[-2]
    _, sigma, _ = svd_small(grad)
    rank = np.asarray(numerical_rank(sigma, tau))
    if np.any(rank != rank.flat[0]):
        raise FrameError("rank of Du changes over the patch")
    r = int(rank.flat[0])
    _, Pn, _ = projectors_batch(grad, tau)
    _, vecs = np.linalg.eigh(Pn)
    return vecs[..., :, r:], N - r


def _align(B, ref):
    """Rotate the columns of ``B`` (within their span) to best match ``ref``."""
    M = np.swapaxes(B, -1, -2) @ ref
    U, _, Vt = np.linalg.svd(M)
    return B @ (U @ Vt)


def frame(m: MapSpec, grid: Grid, tau_rank: float = DEFAULT_RANK_TOL, step: float = 1e-5) -> NormalFrame:
    """Normal frame on a grid by null-space extraction and spanning-tree alignment."""
    X = grid.nodes
    j = jet(m, X)
    if m.n >= m.N:
        raise FrameError("normal frame needs an immersion with n < N")
    basis, codim = _null_basis(j.grad, tau_rank)
    if codim == 0:
        raise FrameError("map has no normal directions on this patch")
    basis = basis.copy()
    shape = grid.resolution
    seen = np.zeros(len(X), dtype=bool)
    seen[0] = True
    queue = deque([0])
    strides = np.array([int(np.prod(shape[i + 1:])) for i in range(len(shape))])
    while queue:
        k = queue.popleft()
        idx = np.array(np.unravel_index(k, shape))
        for ax in range(len(shape)):
            for d in (-1, 1):
                t = idx[ax] + d
                if 0 <= t < shape[ax]:
                    nb = k + d * strides[ax]
                    if not seen[nb]:
                        basis[nb] = _align(basis[nb], basis[k])
                        seen[nb] = True
                        queue.append(nb)
    fr = NormalFrame(grid, basis, np.empty(0), 0.0, 0.0)
    if fr.min_neighbour_alignment() <= 0.0:
        raise FrameError("cannot align the normal frame; shrink the patch")
    # derivative by re-aligned central differences
    deriv = np.empty(basis.shape + (m.n,))
    hstep = step * (1.0 + np.linalg.norm(X, axis=-1))
    for i in range(m.n):
        e = np.zeros(m.n)
        e[i] = 1.0
        off = hstep[:, None] * e
        Bp = _align(_null_basis(m.gradient(X + off, check=False), tau_rank)[0], basis)
        Bm = _align(_null_basis(m.gradient(X - off, check=False), tau_rank)[0], basis)
        deriv[..., i] = (Bp - Bm) / (2.0 * hstep[:, None, None])
    # D nu^T Du = -nu^T D^2 u  and its trace  D nu : Du = -nu^T Lap u
    tang = np.einsum("kaci,kaj->kcij", deriv, j.grad) + np.einsum("kac,kaij->kcij", basis, j.hess)
    div = np.einsum("kaci,kai->kc", deriv, j.grad) + np.einsum("kac,ka->kc", basis, laplacian(j.hess))
    return NormalFrame(grid, basis, deriv, float(np.abs(tang).max()), float(np.abs(div).max()))
