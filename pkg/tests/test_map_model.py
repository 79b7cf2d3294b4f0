import numpy as np
import pytest

from infharm.expr import DomainError
from infharm.map_model import (CATALOG_NAMES, Grid, MapSpec, UnknownMapError, catalog, jet, jet_fd,
                               load_map, parse_resolution, random_interior_points)


@pytest.mark.parametrize("name", CATALOG_NAMES)
def test_symbolic_jets_match_finite_differences(name):
    m = catalog(name)
    X = random_interior_points(m, 8, np.random.default_rng(0))
    js, jf = jet(m, X), jet_fd(m, X)
    assert np.abs(js.grad - jf.grad).max() <= 1e-5
    assert np.abs(js.hess - jf.hess).max() <= 1e-3
    assert np.array_equal(js.hess, np.swapaxes(js.hess, -1, -2))


def test_json_roundtrip_preserves_values(tmp_path):
    m = catalog("catenoid")
    again = MapSpec.from_json(m.to_json())
    X = random_interior_points(m, 5, np.random.default_rng(2))
    assert np.allclose(again.value(X), m.value(X))
    path = tmp_path / "cat.json"
    path.write_text(m.to_json())
    assert load_map(str(path)).n == 2


def test_missing_field_in_document():
    with pytest.raises(ValueError):
        MapSpec.from_dict({"n": 2, "N": 1, "box": [[0, 1], [0, 1]]})


def test_unknown_name():
    with pytest.raises(UnknownMapError):
        catalog("torus")


def test_domain_checks():
    m = catalog("aronsson_43")
    with pytest.raises(DomainError):
        m.value([0.5, 1.5])
    with pytest.raises(DomainError):
        jet_fd(m, [1.0 + 1e-5, 1.5])


def test_grid_layout():
    g = Grid.over(((0.0, 1.0), (0.0, 2.0)), (3, 5))
    assert g.nodes.shape == (15, 2)
    assert np.allclose(g.spacing, [0.5, 0.5])
    assert g.boundary.sum() == 15 - 3
    assert np.allclose(g.reshape(g.nodes)[1, 2], [0.5, 1.0])
    with pytest.raises(ValueError):
        Grid.over(((0, 1),), (1,))


def test_parse_resolution():
    assert parse_resolution("41x41") == (41, 41)
    assert parse_resolution("9") == (9,)
    for bad in ("41x", "ax3", "1x5"):
        with pytest.raises(ValueError):
            parse_resolution(bad)


def test_exp_diag_gradient_norm_is_constant():
    m = catalog("exp_diag")
    X = random_interior_points(m, 50, np.random.default_rng(3))
    assert np.allclose(np.sum(m.gradient(X) ** 2, axis=(-1, -2)), 2.0)
