from dataclasses import replace

import numpy as np
import pytest
from numpy.testing import assert_allclose

from choquard.functionals import FunctionalContext
from choquard.minimax_paths import (
    PathSpec,
    annuli_floor_check,
    annuli_path,
    asymptotic_scan,
    bump,
    c_sigma0,
    collar_excess,
    estimate_a_n,
    estimate_m_k,
    fiber_grid,
    interaction_floor,
    mass_levels,
    path_point,
    path_table,
    sample_polyhedron,
    scan_csv,
    simple_path,
    theta_root_bound,
    theta_star,
)
from choquard.radial_riesz import Annulus, RadialProfile, annuli_thickness, annulus_interaction
from choquard.spectral_core import Field, make_grid
from choquard.utils import DomainError, PathError
from tests.conftest import ctx_1d, ctx_3d, odd_power_18

grid_path = make_grid(1, 8.0, 128)
spec_1d = PathSpec(n=1, N=1, alpha=0.5, grid=grid_path)
spec_radial = PathSpec(n=1, radial_box=16.0, radial_count=255)
spec_annuli = PathSpec(n=2, variant="annuli", R=4.0)


@pytest.mark.parametrize("n,resolution,count", [(1, 8, 2), (2, 8, 32), (2, 4, 16), (3, 8, 386)])
def test_sample_polyhedron_counts(n, resolution, count):
    samples = sample_polyhedron(n, resolution)
    assert samples.shape == (count, n)
    assert np.all(np.max(np.abs(samples), axis=1) == 1.0)


def test_sample_polyhedron_is_symmetric_and_nested():
    samples = sample_polyhedron(3)
    as_set = {tuple(t) for t in samples}
    assert all(tuple(-t) in as_set for t in samples)
    assert all((*t, 0.0) in as_set for t in sample_polyhedron(2))
    with pytest.raises(DomainError):
        sample_polyhedron(2, 3)
    with pytest.raises(DomainError):
        sample_polyhedron(0)


def test_fiber_grid():
    h = fiber_grid(8, 4)
    assert h[0] == 0.0 and h[-1] == 1.0
    assert np.all(np.diff(h) > 0)
    assert_allclose(h[1], 2.0 ** -4)


def test_bump():
    r = np.array([0.0, 2.0, 2.5, 3.0, 4.0])
    values = bump(r, 3.0, 1.0)
    assert values[3] == 1.0
    assert values[0] == values[1] == values[4] == 0.0
    assert 0 < values[2] < 1


def test_path_spec_validation():
    with pytest.raises(PathError):
        PathSpec(n=0)
    with pytest.raises(PathError):
        PathSpec(n=1, variant="spiral")
    with pytest.raises(PathError):
        PathSpec(n=1, sigma0=0.0)
    with pytest.raises(PathError):
        PathSpec(n=1, resolution=5)
    with pytest.raises(PathError):
        PathSpec(n=2, bumps=((0.0, 2.0), (3.0, 2.0)))
    with pytest.raises(PathError):
        PathSpec(n=1, N=1, alpha=0.5)
    with pytest.raises(PathError):
        PathSpec(n=3, grid=make_grid(3, 4.0, 16))
    with pytest.raises(PathError):
        PathSpec(n=1, variant="annuli", R=1.5)
    with pytest.raises(PathError):
        PathSpec(n=2, variant="annuli", R=2.0, eps=1.0)


def test_default_bumps():
    assert PathSpec(n=3).bump_list == ((0.0, 1.0), (3.0, 1.0), (6.0, 1.0))


def test_simple_path_on_a_grid():
    u = simple_path((1.0, -1.0), replace(spec_1d, n=2))
    assert isinstance(u, Field)
    x = grid_path.axis()
    assert_allclose(u.values[np.isclose(x, 0.0)], 1.0)
    assert_allclose(u.values[np.isclose(np.abs(x), 3.0)], -1.0)
    with pytest.raises(PathError):
        simple_path((0.5, 0.5), replace(spec_1d, n=2))
    with pytest.raises(PathError):
        simple_path((1.0,), replace(spec_1d, n=2))


def test_simple_path_radial():
    u = path_point((-1.0,), replace(spec_radial, sigma0=2.0))
    assert isinstance(u, RadialProfile)
    assert u.uniform
    assert_allclose(np.min(u.values), -2.0, rtol=1e-2)


def test_annuli_path():
    u = annuli_path((1.0, -0.5), spec_annuli)
    assert not u.core
    assert_allclose(np.max(u.values), 1.0)
    assert_allclose(np.min(u.values), -1.0)
    assert u.values[0] == 0.0
    assert_allclose(u.nodes[0], 4 - 0.125 - 0.01)
    only_first = annuli_path((1.0, 0.0), spec_annuli)
    assert only_first.nodes[-1] < 5.0
    with pytest.raises(PathError):
        annuli_path((1.0,), replace(spec_radial, n=1))


def test_collar_excess():
    h = annuli_thickness(4.0, 3, 2.0)
    eps = spec_annuli.eps
    # each collar adds half its volume
    expected = 4 * np.pi * eps * (16 + h ** 2)
    assert_allclose(collar_excess((1.0, 0.0), spec_annuli), expected, rtol=1e-2)


def test_path_table_checks_context():
    with pytest.raises(PathError):
        path_table(spec_radial, ctx_1d)


def test_theta_root_bound():
    # 1 + x - 2 x^3 vanishes at x = 1
    assert_allclose(theta_root_bound(1.0, 2.0, ctx_3d), 1.0, rtol=1e-12)
    with pytest.raises(DomainError):
        theta_root_bound(0.0, 1.0, ctx_3d)


def test_theta_star():
    table = path_table(spec_1d, ctx_1d)
    assert table.D_floor > 0
    assert np.isnan(table.A_estimate)
    star = theta_star(0.0, spec_1d, ctx_1d, table)
    assert star.max_boundary_J < 0
    assert star.D_floor == table.D_floor
    assert star.theta <= 2 * star.root_bound


def test_estimate_a_n():
    ctx = ctx_1d.with_mass(1.0)
    est = estimate_a_n(0.0, spec_1d, ctx)
    assert est.a_n_upper > 0
    assert_allclose(est.m_k_estimate, 2 * est.a_n_upper)
    assert_allclose(est.b_n_m_upper, est.a_n_upper - 0.5)
    assert est.B_m == est.b_n_m_upper
    assert np.isfinite(est.E_m_upper)
    assert np.isnan(est.A_estimate)
    t, h = est.maximizer
    assert max(abs(x) for x in t) == 1.0
    assert 0 < h < 1
    assert np.isnan(estimate_a_n(0.0, spec_1d, ctx_1d).B_m)


def test_a_n_upper_grows_with_n_and_lambda():
    spec_2 = replace(spec_1d, n=2)
    a_1 = estimate_a_n(0.0, spec_1d, ctx_1d).a_n_upper
    a_2 = estimate_a_n(0.0, spec_2, ctx_1d).a_n_upper
    assert a_2 >= a_1 * (1 - 1e-12)
    table = path_table(spec_1d, ctx_1d)
    levels = [estimate_a_n(lam, spec_1d, ctx_1d, table).a_n_upper for lam in (-1.0, 0.0, 1.0)]
    assert levels[0] < levels[1] < levels[2]


def test_estimate_m_k_and_mass_levels():
    grid = [-1.0, 0.0, 1.0]
    m_1 = estimate_m_k(1, grid, spec_1d, ctx_1d)
    assert m_1 > 0
    levels = mass_levels(grid, spec_1d, ctx_1d.with_mass(m_1 / 2))
    assert_allclose(levels.m_1, m_1)
    expected = min(estimate_a_n(lam, spec_1d, ctx_1d).a_n_upper - np.exp(lam) * m_1 / 4 for lam in grid)
    assert_allclose(levels.B_m, expected)
    with pytest.raises(DomainError):
        mass_levels(grid, spec_1d, ctx_1d)


def test_scan_csv():
    report = asymptotic_scan(1, [0.5, -0.5], spec_1d, ctx_1d)
    assert [row.lam for row in report.rows] == [-0.5, 0.5]
    lines = scan_csv(report.rows).splitlines()
    assert lines[0] == "lambda,n,a_n_upper,ratio,theta_star,D_floor,A_estimate"
    assert len(lines) == 3
    assert_allclose(report.rows[0].ratio, report.rows[0].a_n_upper / np.exp(-0.5))


def test_interaction_floor_single_annulus():
    R = 4.0
    annulus = Annulus(R, annuli_thickness(R, 3, 2.0))
    assert_allclose(interaction_floor(1, R, 3, 2.0), annulus_interaction(annulus, annulus, 3, 2.0))


def test_annuli_only_checks():
    with pytest.raises(PathError):
        annuli_floor_check(spec_radial, ctx_3d, [1e-2])
    with pytest.raises(PathError):
        c_sigma0(spec_radial, ctx_3d, 0.5)


@pytest.mark.slow
def test_annuli_floor_check():
    ctx = FunctionalContext(N=3, s=0.5, alpha=2.0, lam=0.0, nonlinearity=odd_power_18)
    report = annuli_floor_check(spec_annuli, ctx, [1e-2, 1e-3])
    assert report.applicable
    assert_allclose(report.M, 1.0)
    assert report.A_estimate > 0
    assert report.min_ratio >= 0.4 * report.A_estimate
    assert len(report.per_sigma) == 2


@pytest.mark.slow
def test_c_sigma0_is_positive():
    ctx = FunctionalContext(N=3, s=0.5, alpha=2.0, lam=0.0, nonlinearity=odd_power_18)
    assert c_sigma0(spec_annuli, ctx, 0.5) > 0


@pytest.mark.slow
def test_subcritical_scaling_of_a_1():
    report = asymptotic_scan(1, [-6.0, 0.0, 6.0], spec_radial, ctx_3d)
    low, mid, high = (row.ratio for row in report.rows)
    assert low <= 0.1 * mid
    assert high >= 10 * mid


@pytest.mark.slow
def test_radial_theta_star_and_monotone_levels():
    table = path_table(spec_radial, ctx_3d)
    star = theta_star(0.0, spec_radial, ctx_3d, table)
    assert star.max_boundary_J < 0
    assert star.theta <= 2 * star.root_bound
    a_1 = estimate_a_n(0.0, spec_radial, ctx_3d, table).a_n_upper
    a_2 = estimate_a_n(0.0, replace(spec_radial, n=2), ctx_3d).a_n_upper
    assert a_2 >= a_1 * (1 - 1e-12)


def test_empty_lambda_grid():
    with pytest.raises(DomainError):
        estimate_m_k(1, [], spec_1d, ctx_1d)
    with pytest.raises(DomainError):
        mass_levels([], spec_1d, ctx_1d.with_mass(1.0))
    with pytest.raises(DomainError):
        asymptotic_scan(1, [], spec_1d, ctx_1d)


@pytest.mark.slow
def test_m_k_nondecreasing_in_k():
    grid = [-1.0, 0.0, 1.0]
    levels = [estimate_m_k(k, grid, spec_1d, ctx_1d) for k in (1, 2, 3)]
    assert levels[0] > 0
    assert levels[1] >= levels[0] * (1 - 1e-12)
    assert levels[2] >= levels[1] * (1 - 1e-12)


@pytest.mark.slow
def test_m_1_vanishes_as_lambda_grid_extends_left():
    # p = 2 lies below p_m = 2.3, so a_1(lambda) / e^lambda -> 0 as lambda -> -infinity
    levels = [estimate_m_k(1, np.arange(lam_min, 0.5), spec_1d, ctx_1d) for lam_min in (-2.0, -4.0, -8.0)]
    assert levels[0] > levels[1] > levels[2] > 0
    assert levels[2] <= 0.2 * levels[0]
