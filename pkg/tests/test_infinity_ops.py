import math

import numpy as np
import pytest

from infharm.infinity_ops import eikonal_defect, phase_map, residual
from infharm.map_model import Grid, catalog


def test_affine_residual_vanishes():
    m = catalog("affine", A=[[1.0, 2.0], [0.0, 1.0], [3.0, -1.0]])
    r = residual(m, [0.2, -0.4])
    assert np.abs(r.total).max() == 0.0
    assert r.rank == 2


def test_exp_diag_residual_vanishes_off_diagonal():
    r = residual(catalog("exp_diag"), [0.5, 0.2])
    assert r.norm("total") <= 1e-12
    assert r.rank == 2


def test_catenoid_is_not_tangentially_harmonic():
    # oracle: Du.D(|Du|^2/2) with |Du|^2 = 2 cosh^2 s gives magnitude 2 cosh^2 s sinh s
    r = residual(catalog("catenoid"), [0.3, 1.0])
    want = 2 * math.cosh(0.3) ** 2 * math.sinh(0.3)
    assert r.norm("tangential") == pytest.approx(want, rel=1e-12)
    assert np.allclose(eikonal_defect(catalog("catenoid"), [0.3, 1.0]), [math.sinh(0.6), 0.0])


def test_scalar_maps_have_no_normal_part():
    r = residual(catalog("aronsson_43"), [[1.3, 1.7], [1.5, 1.1]])
    assert np.all(r.normal == 0.0)
    assert np.abs(r.total).max() <= 1e-12


def test_bowl_residual_matches_closed_form():
    # u = x^2 + y^2: Du Du : D^2u = (2x, 2y) . 2 I . (2x, 2y) = 8 |x|^2
    r = residual(catalog("bowl"), [0.3, -0.4])
    assert r.total[0] == pytest.approx(8 * 0.25)


def test_phase_map_finds_the_diagonal_interface():
    m = catalog("exp_diag")
    g = Grid.over(m.box, 11)
    ph = phase_map(m, g)
    diag = np.isclose(g.nodes[:, 0], g.nodes[:, 1])
    assert np.all(ph.rank[diag] == 1)
    assert np.all(ph.rank[~diag] == 2)
    assert np.all(ph.interface[diag])
    lines = ph.to_csv().splitlines()
    assert lines[0] == "x1,x2,rank,interface_flag"
    assert len(lines) == 122
