import numpy as np
import pytest

from pgupdate.errors import ConfigError
from pgupdate.variogram import Structure, VariogramModel, covariance_matrix, rotation_matrix


def test_gamma_zero_at_origin(sph_model):
    assert sph_model.gamma([0.0, 0.0, 0.0]) == 0.0
    with_nugget = VariogramModel(0.3, (Structure("exponential", 0.7, (5.0, 5.0, 5.0)),))
    assert with_nugget.gamma([0.0, 0.0, 0.0]) == 0.0


def test_spherical_half_range_closed_form(sph_model):
    # 1.5 * 0.5 - 0.5 * 0.125 = 0.6875
    assert sph_model.gamma([5.0, 0.0, 0.0]) == pytest.approx(0.6875, abs=1e-12)
    assert sph_model.covariance([5.0, 0.0, 0.0]) == pytest.approx(0.3125, abs=1e-12)


def test_spherical_beyond_range_hits_sill(sph_model):
    assert sph_model.gamma([20.0, 0.0, 0.0]) == pytest.approx(1.0)
    assert sph_model.covariance([20.0, 0.0, 0.0]) == pytest.approx(0.0)


def test_covariance_at_origin_is_total_sill():
    m = VariogramModel(0.2, (Structure("gaussian", 0.8, (7.0, 7.0, 7.0)),))
    assert m.covariance([0.0, 0.0, 0.0]) == pytest.approx(1.0)
    assert m.total_sill == pytest.approx(1.0)


def test_practical_range_convention():
    # both kinds reach 1 - exp(-3) = 95.02% of the sill at the stated range
    for kind in ("exponential", "gaussian"):
        m = VariogramModel(0.0, (Structure(kind, 1.0, (10.0, 10.0, 10.0)),))
        assert m.gamma([10.0, 0.0, 0.0]) == pytest.approx(1.0 - np.exp(-3.0), abs=1e-12)
        assert m.gamma([10.0, 0.0, 0.0]) == pytest.approx(0.95, abs=1e-3)


def test_symmetry_random_lags():
    m = VariogramModel(
        0.1,
        (
            Structure("spherical", 0.5, (12.0, 6.0, 3.0), (30.0, 10.0, 5.0)),
            Structure("exponential", 0.4, (20.0, 20.0, 20.0)),
        ),
    )
    rng = np.random.default_rng(11)
    h = rng.normal(scale=8.0, size=(64, 3))
    assert np.allclose(m.gamma(h), m.gamma(-h))
    assert np.allclose(m.covariance(h), m.covariance(-h))
    assert np.all(np.abs(m.covariance(h)) <= m.total_sill + 1e-12)


def test_anisotropy_transform_invertible():
    s = Structure("spherical", 1.0, (10.0, 5.0, 2.0), (40.0, 20.0, 60.0))
    assert abs(np.linalg.det(s._transform)) > 0
    r = rotation_matrix((40.0, 20.0, 60.0))
    assert np.allclose(r @ r.T, np.eye(3), atol=1e-12)


def test_anisotropic_range_direction():
    s = Structure("spherical", 1.0, (10.0, 5.0, 5.0))
    m = VariogramModel(0.0, (s,))
    # range along x is 10: at lag 10 the sill is reached, at lag 5 not
    assert m.gamma([10.0, 0.0, 0.0]) == pytest.approx(1.0)
    assert m.gamma([0.0, 5.0, 0.0]) == pytest.approx(1.0)
    assert m.gamma([5.0, 0.0, 0.0]) < 1.0


@pytest.mark.parametrize("kind", ["spherical", "exponential", "gaussian"])
def test_covariance_matrices_psd(kind):
    # smallest eigenvalue >= -1e-8 after the kriging jitter policy
    from pgupdate.kriging import JITTER

    m = VariogramModel(0.0, (Structure(kind, 1.0, (12.0, 8.0, 4.0), (15.0, 0.0, 0.0)),))
    rng = np.random.default_rng(5)
    pts = rng.uniform(0, 50, size=(200, 3))
    cov = covariance_matrix(m, pts)
    cov[np.diag_indices_from(cov)] += JITTER * m.total_sill
    eigmin = np.linalg.eigvalsh(cov).min()
    assert eigmin >= -1e-8


def test_structure_validation():
    with pytest.raises(ConfigError):
        Structure("cubic", 1.0, (1.0, 1.0, 1.0))
    with pytest.raises(ConfigError):
        Structure("spherical", -1.0, (1.0, 1.0, 1.0))
    with pytest.raises(ConfigError):
        Structure("spherical", 1.0, (1.0, 0.0, 1.0))
    with pytest.raises(ConfigError):
        VariogramModel(-0.1, (Structure("spherical", 1.0, (1.0, 1.0, 1.0)),))
