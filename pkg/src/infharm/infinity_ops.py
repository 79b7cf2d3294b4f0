"""The vector infinity-Laplacian, its tangential/normal split, rank phases and eikonal defect."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .map_model import Grid, Jet2, MapSpec, frobenius_sq, jet, laplacian
from .tensor_core import DEFAULT_RANK_TOL, projectors_batch, svd_small, numerical_rank


@dataclass(frozen=True)
class InfinityResidual:
    """Residual parts at one point (or a batch; fields then carry a leading axis).

    ``tangential = Du (x) Du : D^2u``, ``normal = |Du|^2 [Du]^perp Lap(u)``,
    ``total = tangential + normal``.
    """

    tangential: np.ndarray
    normal: np.ndarray
    total: np.ndarray
    grad_norm_sq: np.ndarray
    rank: np.ndarray

    def norm(self, part: str = "total") -> np.ndarray:
        return np.linalg.norm(getattr(self, part), axis=-1)


def tangential_part(grad: np.ndarray, hess: np.ndarray) -> np.ndarray:
    """``D_i u_a D_j u_b D^2_ij u_b`` for batched jets."""
    return np.einsum("...ai,...bj,...bij->...a", grad, grad, hess)


def eikonal_from_jet(grad: np.ndarray, hess: np.ndarray) -> np.ndarray:
    """``D(|Du|^2 / 2)_i = D_j u_a D^2_ji u_a``."""
    return np.einsum("...aj,...aji->...i", grad, hess)


def residual_from_jet(j: Jet2, tau_rank: float = DEFAULT_RANK_TOL) -> InfinityResidual:
    grad, hess = j.grad, j.hess
    tang = tangential_part(grad, hess)
    gsq = frobenius_sq(grad)
    _, Pn, rank = projectors_batch(grad, tau_rank)
    normal = gsq[..., None] * np.einsum("...ab,...b->...a", Pn, laplacian(hess))
    if grad.shape[-2] == 1:
        normal = np.zeros_like(normal)
    return InfinityResidual(tang, normal, tang + normal, gsq, rank)


def residual(m: MapSpec, x, tau_rank: float = DEFAULT_RANK_TOL) -> InfinityResidual:
    """Evaluate the infinity-Laplacian at a point ``(n,)`` or points ``(k, n)``."""
    return residual_from_jet(jet(m, x), tau_rank)


def eikonal_defect(m: MapSpec, x) -> np.ndarray:
    """Gradient of ``|Du|^2 / 2``; vanishes exactly where an immersion is
    tangentially infinity-harmonic."""
    j = jet(m, x)
    return eikonal_from_jet(j.grad, j.hess)


@dataclass(frozen=True)
class PhaseMap:
    grid: Grid
    rank: np.ndarray
    interface: np.ndarray

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        n = self.grid.nodes.shape[1]
        w.writerow([f"x{i + 1}" for i in range(n)] + ["rank", "interface_flag"])
        for x, r, f in zip(self.grid.nodes, self.rank, self.interface):
            w.writerow([repr(float(v)) for v in x] + [int(r), int(f)])
        return buf.getvalue()


def interface_mask(grid: Grid, rank: np.ndarray) -> np.ndarray:
    """Nodes having an axis neighbour of different rank."""
    R = grid.reshape(rank)
    mask = np.zeros(R.shape, dtype=bool)
    for ax in range(R.ndim):
        diff = np.diff(R, axis=ax) != 0
        lo = [slice(None)] * R.ndim
        hi = [slice(None)] * R.ndim
        lo[ax] = slice(0, -1)
        hi[ax] = slice(1, None)
        mask[tuple(lo)] |= diff
        mask[tuple(hi)] |= diff
    return mask.ravel()


def phase_map(m: MapSpec, grid: Grid, tau_rank: float = DEFAULT_RANK_TOL) -> PhaseMap:
    grad = m.gradient(grid.nodes)
    _, sigma, _ = svd_small(grad)
    rank = np.asarray(numerical_rank(sigma, tau_rank))
    return PhaseMap(grid, rank, interface_mask(grid, rank))
