import numpy as np
import pytest
from numpy.testing import assert_allclose

from choquard.functionals import (
    EnergyBreakdown,
    FunctionalContext,
    J_value,
    base_integrals,
    breakdown_from_integrals,
    classify_pohozaev,
    dilation_root,
    evaluate,
    fiber_J,
    grad_J,
    grad_norm,
    pohozaev_residual,
    pohozaev_terms,
    scaling_profile,
)
from choquard.radial_riesz import uniform_profile
from choquard.spectral_core import Field, dilate, gaussian
from choquard.utils import DomainError, HypothesisError
from tests.conftest import ctx_1d, ctx_3d, gaussian_values, grid_1d, power_18

radial_u = uniform_profile(3, 16.0, 255, lambda r: np.exp(-r ** 2 / 2))


def test_context_validation():
    with pytest.raises(DomainError):
        FunctionalContext(N=4, s=0.5, alpha=2.0, lam=0.0, nonlinearity=power_18)
    with pytest.raises(DomainError):
        FunctionalContext(N=3, s=1.2, alpha=2.0, lam=0.0, nonlinearity=power_18)
    with pytest.raises(DomainError):
        ctx_3d.with_mass(-1.0)
    assert_allclose(ctx_3d.with_lambda(np.log(2.0)).mu, 2.0)
    assert ctx_3d.with_mass(1.5).m == 1.5


def test_dilation_root_closed_form():
    # P(theta) = theta^2 + 3/2 theta^3 - 5/2 theta^5 vanishes at theta = 1
    assert_allclose(dilation_root(1.0, 1.0, 1.0, ctx_3d), 1.0, rtol=1e-12)


@pytest.mark.parametrize("a,b,d", [(2.0, 0.5, 0.1), (0.3, 4.0, 7.0), (1e-3, 1e-3, 10.0)])
def test_dilation_root_zero_of_fiber(a, b, d):
    theta = dilation_root(a, b, d, ctx_3d)
    t1, t2, t3 = pohozaev_terms(a, b, d, ctx_3d)
    P = t1 * theta ** 2 + t2 * theta ** 3 - t3 * theta ** 5
    assert abs(P) <= 1e-9 * (t1 * theta ** 2 + t2 * theta ** 3)
    # the fiber is decreasing past the root
    assert fiber_J(a, b, d, 1.1 * theta, ctx_3d) < fiber_J(a, b, d, theta, ctx_3d)


def test_dilation_root_needs_positive_D():
    with pytest.raises(HypothesisError):
        dilation_root(1.0, 1.0, 0.0, ctx_3d)


def test_breakdown_identities():
    a, b, d = 1.7, 0.4, 2.3
    ctx = ctx_3d.with_lambda(0.3).with_mass(2.0)
    e = breakdown_from_integrals(a, b, d, ctx)
    N, s, alpha, mu = ctx.N, ctx.s, ctx.alpha, ctx.mu
    assert_allclose(e.J, a / 2 + mu * b / 2 - d / 2)
    assert_allclose(e.I_m, e.J - mu * 2.0 / 2)
    assert_allclose(e.L, a / 2 - d / 2)
    assert_allclose(
        e.J - e.P / (N + alpha),
        (alpha + 2 * s) / (2 * (N + alpha)) * a + alpha / (2 * (N + alpha)) * mu * b,
    )


def test_pohozaev_is_fiber_derivative():
    a, b, d = 1.2, 0.8, 0.5
    e = breakdown_from_integrals(a, b, d, ctx_3d)
    step = 1e-6
    derivative = (fiber_J(a, b, d, 1 + step, ctx_3d) - fiber_J(a, b, d, 1 - step, ctx_3d)) / (2 * step)
    assert_allclose(derivative, e.P, rtol=1e-8)


def test_evaluate_spectral():
    u = Field(grid_1d, gaussian_values(grid_1d))
    e = evaluate(u, ctx_1d)
    assert e.backend == "spectral"
    assert np.isnan(e.I_m)
    assert e.D_value > 0
    assert_allclose(e.J, J_value(u, ctx_1d))
    assert_allclose(e.mass2, np.sqrt(np.pi), rtol=1e-10)
    assert len(e.csv_row().split(",")) == 9
    assert EnergyBreakdown.csv_header().split(",")[2] == "D"
    assert not np.isnan(evaluate(u, ctx_1d.with_mass(1.0)).I_m)


def test_evaluate_radial():
    e = evaluate(radial_u, ctx_3d)
    assert e.backend == "radial"
    assert_allclose(e.mass2, np.pi ** 1.5, rtol=1e-6)
    assert e.D_value > 0


def test_dimension_mismatch():
    u = Field(grid_1d, gaussian_values(grid_1d))
    with pytest.raises(DomainError):
        evaluate(u, ctx_3d)


def _directional_derivative(u, v, ctx, eps=1e-5):
    plus = J_value(u.replace(u.values + eps * v), ctx)
    minus = J_value(u.replace(u.values - eps * v), ctx)
    return (plus - minus) / (2 * eps)


def test_grad_J_spectral_matches_finite_differences():
    u = Field(grid_1d, gaussian_values(grid_1d))
    v = gaussian_values(grid_1d, width=0.6, shift=1.0)
    gradient = grad_J(u, ctx_1d)
    assert_allclose(u.inner(gradient.values, v), _directional_derivative(u, v, ctx_1d), rtol=1e-6)


def test_grad_J_radial_matches_finite_differences():
    v = np.exp(-(radial_u.nodes - 2.0) ** 2)
    gradient = grad_J(radial_u, ctx_3d)
    assert_allclose(radial_u.inner(gradient.values, v), _directional_derivative(radial_u, v, ctx_3d), rtol=1e-5)


def test_grad_norm_of_zero_field():
    u = Field(grid_1d, np.zeros(grid_1d.P))
    gradient = grad_J(u, ctx_1d)
    assert grad_norm(u, gradient) == 0.0


def test_scaling_profile_matches_dilated_field():
    u = gaussian(grid_1d)
    for theta, value in scaling_profile(u, ctx_1d, [0.8, 1.0, 1.3]):
        assert_allclose(value, J_value(dilate(u, theta), ctx_1d), rtol=1e-3)


def test_pohozaev_residual_of_zero():
    u = Field(grid_1d, np.zeros(grid_1d.P))
    assert pohozaev_residual(u, ctx_1d) == (0.0, 0.0)


def test_classify_pohozaev():
    u = gaussian(grid_1d)
    assert classify_pohozaev(u, ctx_1d) == "interior"
    assert classify_pohozaev(u.replace(1e-3 * u.values), ctx_1d) == "interior"
    assert classify_pohozaev(u.replace(1e2 * u.values), ctx_1d) == "exterior"
    assert classify_pohozaev(u.replace(np.zeros(grid_1d.P)), ctx_1d) == "interior"
    # with F = u^2 / 2, D(t u) = t^4 D(u): the amplitude t* lands on the Pohozaev set
    t1, t2, t3 = pohozaev_terms(*base_integrals(u, ctx_1d), ctx_1d)
    t_star = np.sqrt((t1 + t2) / t3)
    on_set = u.replace(t_star * u.values)
    assert classify_pohozaev(on_set, ctx_1d) == "mountain"
    assert max(pohozaev_residual(on_set, ctx_1d)) < 1e-10
    with pytest.raises(DomainError):
        classify_pohozaev(u, ctx_1d, tol=0.0)
