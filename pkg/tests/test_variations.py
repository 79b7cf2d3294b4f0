import json

import numpy as np
import pytest

from infharm import variations as var
from infharm.map_model import Grid, catalog

CAT_BOX = ((-0.5, 0.5), (-1.0, 1.0))


def test_rank_one_passes_on_affine_and_exp_diag():
    m = catalog("affine", A=[[2.0, 0.5], [-1.0, 1.0]])
    assert var.rank_one_test(m, var.VariationConfig(((-0.8, 0.8),) * 2, 60)).passed
    rep = var.rank_one_test(catalog("exp_diag"), var.VariationConfig(((0.1, 0.5), (-0.5, -0.1)), 60))
    assert rep.passed
    assert rep.worst_margin >= -1e-9


def test_rank_one_detects_non_minimizer():
    rep = var.rank_one_test(catalog("fold"), var.VariationConfig(((0.4, 0.8), (-0.5, 0.5)), 60))
    assert not rep.passed
    assert rep.violations


def test_reports_are_deterministic_and_serializable():
    cfg = var.VariationConfig(((0.1, 0.5), (-0.5, -0.1)), 12, seed=5)
    a = var.rank_one_test(catalog("exp_diag"), cfg)
    b = var.rank_one_test(catalog("exp_diag"), cfg)
    assert a.to_json() == b.to_json() and a.to_csv() == b.to_csv()
    assert json.loads(a.to_json())["seed"] == 5
    assert len(a.to_csv().splitlines()) == 13


def test_config_validation():
    with pytest.raises(var.ConfigError):
        var.VariationConfig(((0.5, 0.1), (0.0, 1.0)))
    with pytest.raises(var.ConfigError):
        var.rank_one_test(catalog("exp_diag"), var.VariationConfig(((-1.0, 0.5), (-0.5, 0.5))))


@pytest.mark.parametrize("p", [2.0, 8.0, np.inf])
def test_normal_area_passes_on_catenoid(p):
    assert var.normal_area_test(catalog("catenoid"), var.VariationConfig(CAT_BOX, 30), p).passed


def test_normal_area_fails_on_sphere_with_constant_profile():
    rep = var.normal_area_test(catalog("sphere_stereo"), var.VariationConfig(((-0.3, 0.3),) * 2, 4), 2.0)
    assert not rep.passed
    assert any("ConstantProfile" in v["variation"] for v in rep.violations)


def test_normal_area_rejects_submersions():
    with pytest.raises(var.DegenerateImmersionError):
        var.normal_area_test(catalog("exp_diag"), var.VariationConfig(((0.1, 0.5), (-0.5, -0.1)), 2))


def test_normal_field_derivative_matches_difference_quotient():
    m = catalog("enneper")
    nf = var.NormalField(m, (0.2, -0.3, 0.9))
    x = np.array([0.2, -0.1])
    nu, Dnu = nf.evaluate(x)
    assert np.linalg.norm(nu) == pytest.approx(1.0)
    assert np.abs(nu @ m.gradient(x)).max() <= 1e-12
    h = 1e-6
    for k in range(2):
        e = np.zeros(2)
        e[k] = h
        fd = (nf(x + e) - nf(x - e)) / (2 * h)
        assert np.allclose(Dnu[:, k], fd, atol=1e-7)


@pytest.mark.parametrize("profile", [var.ConstantProfile(1.0), var.LinearProfile((1.0, -0.5), 0.2),
                                     var.CosineProfile((1, 2), ((-0.3, 0.3),) * 2)])
@pytest.mark.parametrize("p", [2.0, 3.5])
def test_first_and_second_variation_against_difference_quotients(profile, p):
    m = catalog("sphere_stereo")
    D = ((-0.3, 0.3),) * 2
    nf = var.NormalField(m, (0.1, 0.2, 1.0))
    a, b = var.first_variation(m, D, profile, nf, p), var.first_variation_fd(m, D, profile, nf, p)
    assert abs(a - b) <= 1e-4 * max(abs(a), abs(b), 1e-6)
    s, sf = var.second_variation(m, D, profile, nf, p), var.second_variation_fd(m, D, profile, nf, p)
    assert s >= -1e-10
    assert s == pytest.approx(sf, rel=1e-4)


def test_first_variation_vanishes_on_minimal_surfaces():
    m = catalog("catenoid")
    nf = var.NormalField(m, (1.0, 0.0, 0.0))
    assert abs(var.first_variation(m, CAT_BOX, var.ConstantProfile(1.0), nf, 4.0)) <= 1e-12


def test_normal_frame_identities():
    m = catalog("catenoid")
    fr = var.frame(m, Grid.over(((-0.2, 0.2), (-0.5, 0.5)), 7))
    assert fr.basis.shape == (49, 3, 1)
    assert fr.min_neighbour_alignment() > 0.9
    assert fr.tangency_residual <= 1e-4
    assert fr.divergence_residual <= 1e-4
    with pytest.raises(var.FrameError):
        var.frame(catalog("exp_diag"), Grid.over(((0.1, 0.5), (-0.5, -0.1)), 5))
