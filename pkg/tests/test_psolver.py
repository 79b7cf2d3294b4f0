import numpy as np
import pytest

from infharm import psolver as ps
from infharm.map_model import Grid, catalog

SQ = ((-1.0, 1.0), (-1.0, 1.0))


def harmonic(X):
    return (np.exp(X[:, 0]) * np.cos(X[:, 1]))[:, None]


def test_p2_harmonic_data_converges_at_second_order():
    errs = []
    for r in (9, 17):
        g = Grid.over(SQ, r)
        U = harmonic(g.nodes)
        errs.append(np.abs(ps.solve_p(U, g, 2).values - U).max())
    assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.15)


@pytest.mark.parametrize("p", [2, 6, 40])
def test_affine_data_is_reproduced(p):
    g = Grid.over(SQ, 9)
    A = np.column_stack([2 * g.nodes[:, 0] - g.nodes[:, 1] + 1, 0.5 * g.nodes[:, 1]])
    assert np.abs(ps.solve_p(A, g, p).values - A).max() <= 1e-12
    noisy = A + np.random.default_rng(0).normal(scale=0.1, size=A.shape)
    sol = ps.solve_p(A, g, p, init=noisy)
    assert np.abs(sol.values - A).max() <= 1e-8
    assert sol.converged


def test_flat_initial_guess_is_handled():
    g = Grid.over(SQ, 9)
    A = (2 * g.nodes[:, 0] - g.nodes[:, 1])[:, None]
    for p in (8, 40):
        sol = ps.solve_p(A, g, p, init=np.zeros_like(A))
        assert sol.converged
        assert np.abs(sol.values - A).max() <= 1e-6
    # a stalled run must not claim convergence
    sol = ps.solve_p(A, g, 128, init=np.zeros_like(A))
    assert not sol.converged or np.abs(sol.values - A).max() <= 1e-6


def test_boundary_is_untouched_and_energy_decreases():
    g = Grid.over(SQ, 11)
    U = harmonic(g.nodes)
    sol = ps.solve_p(U, g, 6, init=np.zeros_like(U))
    assert np.array_equal(sol.values[g.boundary], U[g.boundary])
    h = np.array(sol.history)
    assert np.all(np.diff(h) <= 1e-12)
    assert len(h) == sol.iterations + 1


def test_discrete_maximum_principle_at_p2():
    g = Grid.over(SQ, 13)
    U = np.sin(3 * g.nodes[:, :1]) + g.nodes[:, 1:] ** 3
    sol = ps.solve_p(U, g, 2)
    lo, hi = U[g.boundary].min(), U[g.boundary].max()
    assert sol.values.min() >= lo - 1e-12 and sol.values.max() <= hi + 1e-12


@pytest.mark.parametrize("p", [2, 5])
def test_constant_shift_invariance(p):
    g = Grid.over(SQ, 11)
    U = harmonic(g.nodes)
    a = ps.solve_p(U, g, p).values
    b = ps.solve_p(U + 3.25, g, p).values - 3.25
    assert np.abs(a - b).max() <= 1e-9


def test_p16_reduces_the_infinity_residual():
    m = catalog("aronsson_43")
    g = Grid.over(((1.2, 1.8), (1.2, 1.8)), 33)
    B = ps.boundary_from_map(m, g)
    r2, r16 = (np.abs(ps.infinity_residual_grid(g, ps.solve_p(B, g, p).values)).max() for p in (2, 16))
    assert r16 <= r2 / 2


def test_warm_start_is_no_worse_than_cold_start():
    m = catalog("exp_diag")
    g = Grid.over(((0.1, 0.9), (-0.9, -0.1)), 17)
    B = ps.boundary_from_map(m, g)
    warm = ps.continuation(B, g, [2, 8, 32])
    cold = ps.continuation(B, g, [2, 8, 32], warm=False)
    assert warm.stages[-1].residual <= cold.stages[-1].residual * (1 + 1e-6)


def test_trace_json_and_monotone_norm_ratio():
    m = catalog("aronsson_43")
    g = Grid.over(((1.2, 1.8), (1.2, 1.8)), 17)
    tr = ps.continuation(ps.boundary_from_map(m, g), g, ps.default_schedule(64))
    ratios = [s.ratio for s in tr.stages]
    assert all(b >= a - 1e-12 for a, b in zip(ratios, ratios[1:]))
    assert all(r <= 1.0 for r in ratios)
    d = tr.to_dict()
    assert [s["p"] for s in d["stages"]] == [2, 4, 8, 16, 32, 64]


def test_affine_continuation_is_exact():
    g = Grid.over(SQ, 9)
    A = (g.nodes @ [1.0, -2.0])[:, None]
    tr = ps.continuation(A, g, [2, 16, 128])
    assert max(s.residual for s in tr.stages) <= 1e-9


def test_lp_norm_limits():
    g = Grid.over(SQ, 9)
    U = (g.nodes[:, 0] ** 2)[:, None]
    lp, sup = ps.lp_norms(g, U, 256)
    assert lp <= sup
    assert ps.lp_norms(g, U, 2)[0] < lp


def test_input_validation():
    g = Grid.over(SQ, 5)
    U = np.zeros((25, 1))
    with pytest.raises(ValueError):
        ps.solve_p(U, g, 1.5)
    with pytest.raises(ValueError):
        ps.solve_p(U, g, 300)
    bad = U.copy()
    bad[0] = np.nan
    with pytest.raises(ValueError):
        ps.solve_p(bad, g, 2)
    with pytest.raises(ValueError):
        ps.continuation(U, g, [4, 2])


def test_boundary_csv():
    g = Grid.over(((0.0, 1.0), (0.0, 1.0)), 5)
    rows = ["x,y,u"] + [f"{x},{y},{x + 2 * y}" for x, y in g.nodes[g.boundary]]
    B = ps.boundary_from_csv("\n".join(rows), g)
    sol = ps.solve_p(B, g, 4)
    assert np.allclose(sol.values[:, 0], g.nodes @ [1.0, 2.0])
    with pytest.raises(ValueError):
        ps.boundary_from_csv("\n".join(rows[:-1]), g)
