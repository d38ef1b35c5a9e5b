import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy.special import gamma, zetac

from choquard.spectral_core import (
    Field,
    dilate,
    field_from_bytes,
    field_to_csv,
    frac_laplacian,
    gagliardo_seminorm,
    gaussian,
    hls_ratio,
    laplacian_constant,
    make_grid,
    origin_weight,
    read_field,
    riesz_constant,
    riesz_convolve,
    riesz_convolve_free,
    spectral_constants,
    tail_mass,
    write_field,
)
from choquard.utils import BoxTooSmallError, DomainError
from tests.conftest import gaussian_values, grid_1d, grid_2d

grid_pi = make_grid(1, np.pi, 64)


def test_make_grid_rejects_invalid_parameters():
    with pytest.raises(DomainError):
        make_grid(4, 1.0, 64)
    with pytest.raises(DomainError):
        make_grid(1, 0.0, 64)
    with pytest.raises(DomainError):
        make_grid(1, 1.0, 100)
    with pytest.raises(DomainError):
        make_grid(2, 1.0, 4)


def test_grid_geometry():
    grid = make_grid(2, 4.0, 16)
    assert grid.h == 0.5
    assert grid.shape == (16, 16)
    assert grid.cell_volume == 0.25
    assert grid.axis()[0] == -4.0
    assert grid.axis()[8] == 0.0


def test_field_rejects_wrong_size_and_nan():
    with pytest.raises(DomainError):
        Field(grid_1d, np.zeros(10))
    values = np.zeros(grid_1d.P)
    values[3] = np.nan
    with pytest.raises(DomainError):
        Field(grid_1d, values)


def test_constants():
    assert_allclose(laplacian_constant(1, 0.5), 1 / np.pi, rtol=1e-14)
    assert_allclose(riesz_constant(3, 2.0), 1 / (4 * np.pi), rtol=1e-14)
    constants = spectral_constants(3, 0.5, 2.0)
    assert constants.dict() == {"C_Ns": laplacian_constant(3, 0.5), "C_Nalpha": riesz_constant(3, 2.0)}
    with pytest.raises(DomainError):
        spectral_constants(3, 1.0, 2.0)
    with pytest.raises(DomainError):
        spectral_constants(1, 0.5, 1.0)


def test_frac_laplacian_of_a_fourier_mode():
    x = grid_pi.axis()
    u = Field(grid_pi, np.cos(3 * x))
    for s in (0.2, 0.5, 0.9):
        assert_allclose(frac_laplacian(u, s).values, 3 ** (2 * s) * np.cos(3 * x), atol=1e-12)


def test_frac_laplacian_kills_constants():
    u = Field(grid_2d, np.full(grid_2d.shape, 2.5))
    assert_allclose(frac_laplacian(u, 0.3).values, 0.0, atol=1e-12)


def test_frac_laplacian_rejects_order():
    u = Field(grid_pi, np.cos(grid_pi.axis()))
    with pytest.raises(DomainError):
        frac_laplacian(u, 1.0)


def test_gagliardo_seminorm_of_a_fourier_mode():
    u = Field(grid_pi, np.cos(3 * grid_pi.axis()))
    assert_allclose(gagliardo_seminorm(u, 0.4), np.pi * 9 ** 0.4, rtol=1e-12)


def test_gagliardo_seminorm_matches_pairing():
    u = Field(grid_2d, gaussian_values(grid_2d))
    s = 0.35
    assert_allclose(gagliardo_seminorm(u, s), u.inner(frac_laplacian(u, s).values, u.values), rtol=1e-12)


def test_periodic_riesz_of_a_fourier_mode():
    x = grid_pi.axis()
    u = Field(grid_pi, np.sin(2 * x))
    assert_allclose(riesz_convolve(u, 0.5).values, 2 ** -0.5 * np.sin(2 * x), atol=1e-12)


def test_origin_weight_one_dimension():
    h = 0.1
    assert_allclose(origin_weight(1, 0.5, h), -2 * (zetac(0.5) + 1) * h ** 0.5, rtol=1e-14)
    assert origin_weight(2, 1.0, h) > 0


def test_free_riesz_of_gaussian_at_origin():
    alpha = 0.5
    g = Field(grid_1d, gaussian_values(grid_1d))
    potential = riesz_convolve_free(g, alpha)
    exact = gamma((1 - alpha) / 2) * 2 ** (-alpha / 2) / np.sqrt(np.pi)
    assert_allclose(potential.values[grid_1d.P // 2], exact, rtol=1e-3)


def test_free_riesz_is_symmetric_and_positive():
    g1 = Field(grid_2d, gaussian_values(grid_2d))
    g2 = Field(grid_2d, gaussian_values(grid_2d, width=0.7, shift=1.5))
    alpha = 1.2
    left = g1.inner(riesz_convolve_free(g1, alpha).values, g2.values)
    right = g1.inner(g1.values, riesz_convolve_free(g2, alpha).values)
    assert_allclose(left, right, rtol=1e-10)
    assert g1.inner(riesz_convolve_free(g1, alpha).values, g1.values) > 0
    assert hls_ratio(g1, alpha) > 0


def test_hls_ratio_of_zero():
    assert hls_ratio(Field(grid_1d, np.zeros(grid_1d.P)), 0.5) == 0.0


def test_tail_mass():
    u = gaussian(grid_1d)
    assert tail_mass(u) < 1e-12
    assert tail_mass(Field(grid_1d, np.zeros(grid_1d.P))) == 0.0


def test_dilate_gaussian():
    grid = make_grid(1, 10.0, 512)
    u = gaussian(grid)
    for method, atol in (("fourier", 1e-8), ("linear", 1e-3)):
        assert_allclose(dilate(u, 1.2, method=method).values, gaussian(grid, width=1.2).values, atol=atol)


def test_dilate_identity_copies():
    u = gaussian(grid_1d)
    v = dilate(u, 1.0)
    assert v is not u
    assert_allclose(v.values, u.values)


def test_dilate_errors():
    u = gaussian(make_grid(1, 4.0, 64))
    with pytest.raises(BoxTooSmallError):
        dilate(u, 3.0)
    with pytest.raises(DomainError):
        dilate(u, 0.0)
    with pytest.raises(DomainError):
        dilate(u, 1.5, method="cubic")


def test_field_file(tmpdir):
    u = gaussian(grid_2d, amplitude=2.0)
    path = write_field(u, tmpdir / "u.bin")
    v = read_field(path)
    assert v.grid == u.grid
    assert np.array_equal(v.values, u.values)


def test_truncated_field_data():
    with pytest.raises(DomainError):
        field_from_bytes(b"\x00" * 10)


def test_field_to_csv():
    u = gaussian(make_grid(1, 2.0, 8))
    lines = field_to_csv(u).splitlines()
    assert lines[0] == "x,value"
    assert len(lines) == 9
    assert lines[5].startswith("0,1")
    with pytest.raises(DomainError):
        field_to_csv(gaussian(grid_2d))
