import json

import numpy as np
import pytest

from infharm import geometry as geo
from infharm.map_model import CATALOG_NAMES, Grid, catalog, random_interior_points

rng = np.random.default_rng(7)


@pytest.mark.parametrize("name", ["catenoid", "helicoid", "enneper"])
def test_minimal_surfaces_have_zero_mean_curvature(name):
    m = catalog(name)
    X = random_interior_points(m, 50, rng)
    assert np.abs(geo.mean_curvature(m, X).H).max() <= 1e-9


@pytest.mark.parametrize("name,want", [("sphere_stereo", 1.0), ("cylinder", 0.5), ("plane", 0.0)])
def test_mean_curvature_oracles(name, want):
    m = catalog(name)
    h = geo.mean_curvature(m, random_interior_points(m, 50, rng)).h_scal
    assert np.abs(np.abs(h) - want).max() <= 1e-6


def test_orientation_flips_sign():
    m = catalog("sphere_stereo")
    a = geo.mean_curvature(m, [0.1, 0.2]).h_scal
    b = geo.mean_curvature(m, [0.1, 0.2], orientation=-1).h_scal
    assert a == pytest.approx(-b)


@pytest.mark.parametrize("name", ["catenoid", "helicoid", "enneper", "sphere_stereo"])
def test_conformal_identities(name):
    m = catalog(name)
    X = random_interior_points(m, 40, rng)
    assert geo.jacobian_identity(m, X)[2].max() <= 1e-8
    assert geo.curvature_identity(m, X)[2].max() <= 1e-8


def test_identities_require_conformality():
    with pytest.raises(geo.PreconditionError) as info:
        geo.jacobian_identity(catalog("enneper_sheared"), [0.1, 0.1])
    assert info.value.defect > 1e-3


def test_degenerate_immersion():
    m = catalog("affine", A=[[1.0, 1.0], [1.0, 1.0], [0.0, 0.0]])
    with pytest.raises(geo.DegenerateImmersionError):
        geo.mean_curvature(m, [0.0, 0.0])


def test_nonconformal_mean_curvature_of_sheared_enneper():
    m = catalog("enneper_sheared")
    X = random_interior_points(m, 20, rng)
    assert np.abs(geo.nonconformal_H(m, X)).max() <= 1e-8
    with pytest.raises(geo.PreconditionError):
        geo.nonconformal_H(catalog("cylinder"), [0.1, 0.2])


@pytest.mark.parametrize("name,verdict", [("catenoid", "minimal"), ("enneper", "minimal"),
                                          ("cylinder", "flat"), ("plane", "planar"),
                                          ("sphere_stereo", "none")])
def test_classification(name, verdict):
    m = catalog(name)
    rep = geo.classify_surface(m, Grid.over(m.box, 21))
    assert rep.verdict == verdict
    assert json.loads(rep.to_json())["verdict"] == verdict


def test_cylinder_flat_constant():
    rep = geo.classify_surface(catalog("cylinder"), Grid.over(catalog("cylinder").box, 21))
    assert rep.c == pytest.approx(1.0)


def test_classification_rejects_non_isothermal():
    with pytest.raises(geo.PreconditionError):
        geo.classify_surface(catalog("exp_diag"), Grid.over(((0.1, 0.5), (-0.5, -0.1)), 9))


def test_plane_fit():
    P = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0.0]])
    dist, diam = geo.plane_fit_residual(P)
    assert dist == pytest.approx(0.0, abs=1e-15)
    assert diam == pytest.approx(np.sqrt(2))


def test_rigidity_sweep():
    reports = {n: geo.rigidity_check(catalog(n), Grid.over(catalog(n).box, 21))
               for n in CATALOG_NAMES if (catalog(n).n, catalog(n).N) == (2, 3)}
    assert all(r.consistent for r in reports.values())
    assert reports["plane"].status == "planar"
    assert reports["cylinder"].failed_hypotheses() == ["infinity-harmonic"]
    assert reports["cylinder"].tangentially_harmonic and not reports["cylinder"].normally_harmonic
    assert reports["catenoid"].failed_hypotheses() == ["infinity-harmonic"]
    assert reports["enneper_sheared"].status == "not conformal"
