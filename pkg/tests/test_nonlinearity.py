import numpy as np
import pytest
from numpy.testing import assert_allclose

from choquard.nonlinearity import (
    CATALOG,
    Nonlinearity,
    check_growth,
    competing,
    detect_parity,
    evaluate_nonlinearity,
    exponent_set,
    lower_bound_constant,
    make_nonlinearity,
    odd_power,
    oscillating,
    power,
    quotient_sup,
    table,
)
from choquard.utils import DomainError, HypothesisError, NonlinearityError
from tests.conftest import odd_power_18, power_18

exps_3d = exponent_set(3, 0.5, 2.0)


def test_exponent_set():
    assert_allclose((exps_3d.q, exps_3d.p_m, exps_3d.p_star), (5 / 3, 2.0, 2.5))
    assert exponent_set(1, 0.5, 0.5).p_star == np.inf
    assert exps_3d.dict()["p_m"] == 2.0
    with pytest.raises(DomainError):
        exponent_set(3, 0.0, 2.0)


def test_nonlinearity_checks_definition():
    with pytest.raises(NonlinearityError):
        Nonlinearity(F=lambda x: x ** 2 + 1, f=lambda x: 2 * x, parity="even", sigma0=1.0, delta0=1.0, name="shifted")
    with pytest.raises(NonlinearityError):
        Nonlinearity(F=lambda x: x ** 2, f=lambda x: 3 * x, parity="even", sigma0=1.0, delta0=1.0, name="wrong")
    with pytest.raises(NonlinearityError):
        Nonlinearity(F=lambda x: x ** 2, f=lambda x: 2 * x, parity="neither", sigma0=1.0, delta0=1.0, name="p")
    with pytest.raises(NonlinearityError):
        Nonlinearity(F=lambda x: -x ** 2, f=lambda x: -2 * x, parity="even", sigma0=1.0, delta0=1.0, name="neg")


@pytest.mark.parametrize("name,params", [
    ("power", {"p": 1.8}),
    ("odd_power", {"p": 2.2}),
    ("saturable", {}),
    ("odd_saturable", {}),
    ("cooperative", {"p": 1.8, "q": 2.2}),
    ("competing", {"p": 1.8, "q": 2.4, "nu": 2.0}),
    ("oscillating", {"beta": 2.0, "c": 3.0}),
    ("oscillating", {"beta": 2.0, "parity": "even"}),
    ("two_power_oscillating", {"beta1": 1.8, "beta2": 2.2}),
])
def test_catalog_entries(name, params):
    F = make_nonlinearity(name, params)
    assert F.name == name
    assert float(F.F(np.array(F.sigma0))) > 0
    assert detect_parity(F) == F.parity
    assert evaluate_nonlinearity(F, 0.0) == (0.0, 0.0)


def test_catalog_names():
    assert sorted(CATALOG) == sorted([
        "power", "odd_power", "saturable", "odd_saturable", "cooperative", "competing",
        "oscillating", "two_power_oscillating", "table",
    ])


def test_make_nonlinearity_errors():
    with pytest.raises(NonlinearityError):
        make_nonlinearity("cubic")
    with pytest.raises(NonlinearityError):
        make_nonlinearity("power", {"q": 2.0})
    with pytest.raises(NonlinearityError):
        make_nonlinearity("power", {"p": 1.0})
    with pytest.raises(NonlinearityError):
        competing(2.0, 1.5)
    with pytest.raises(NonlinearityError):
        oscillating(2.0, c=0.5)


def test_power_values():
    value, deriv = evaluate_nonlinearity(power(3.0), -2.0)
    assert_allclose((value, deriv), (8 / 3, -4.0))
    value, deriv = evaluate_nonlinearity(odd_power(3.0), -2.0)
    assert_allclose((value, deriv), (-8 / 3, 4.0))


def test_competing_sigma0_below_root():
    F = competing(2.0, 3.0, 1.0)
    root = 1.5
    assert_allclose(F.sigma0, root / 2)
    assert_allclose(float(F.F(np.array(root))), 0.0, atol=1e-14)


def test_evaluate_errors():
    with pytest.raises(DomainError):
        evaluate_nonlinearity(power_18, np.inf)
    with pytest.raises(NonlinearityError):
        power_18.eval(np.array([1.0, 1e300]))


def test_table_nonlinearity():
    sigma = [-1.0, 0.0, 1.0, 2.0]
    cubic = table(sigma, [-1.0, 0.0, 1.0, 8.0], [3.0, 0.0, 3.0, 12.0], sigma0=1.0)
    assert cubic.parity == "odd"
    assert_allclose(cubic.F(np.array([0.5])), [0.125])
    assert_allclose(cubic.f(np.array([0.5])), [0.75])
    square = table(sigma, [1.0, 0.0, 1.0, 4.0], [-2.0, 0.0, 2.0, 4.0], sigma0=1.0)
    assert square.parity == "even"
    lopsided = table(sigma, [2.0, 0.0, 1.0, 4.0], [-2.0, 0.0, 2.0, 4.0], sigma0=1.0)
    assert lopsided.parity == "none"


def test_normalized_keeps_positive_sigma0():
    F = Nonlinearity(F=lambda x: x ** 3, f=lambda x: 3 * x ** 2, parity="odd", sigma0=1.0, delta0=1.0, name="cube")
    assert F.normalized() is F


def test_growth_of_subcritical_power():
    report = check_growth(power_18, exps_3d)
    assert report.passed
    assert set(report.conditions) == {"F1", "F2", "F3", "F4", "F5"}
    assert_allclose(report.conditions["F2"].detail["small_exponent"], 1.8, atol=1e-6)
    assert_allclose(report.conditions["F3"].detail["large_exponent"], 1.8, atol=1e-6)
    assert report.dict()["passed"]


def test_growth_of_supercritical_power_fails_without_raising():
    report = check_growth(power(3.0), exps_3d)
    assert not report.passed
    assert not report.conditions["F3"].passed
    assert report.conditions["F4"].passed
    assert report.conditions["F5"].passed


def test_growth_constrained_regime():
    report = check_growth(odd_power_18, exps_3d, regime="constrained")
    assert set(report.conditions) == {"F1", "CF2", "CF3", "CF4", "F4", "F5"}
    assert report.passed
    assert_allclose(report.conditions["CF4"].detail["quotient_sup"], 1.0)
    mass_critical = check_growth(power(2.0), exps_3d, regime="constrained")
    assert not mass_critical.conditions["CF4"].passed
    with pytest.raises(DomainError):
        check_growth(power_18, exps_3d, regime="free")


def test_growth_reports_missing_parity():
    lopsided = table([-1.0, 0.0, 1.0, 2.0], [2.0, 0.0, 1.0, 4.0], [-2.0, 0.0, 2.0, 4.0], sigma0=1.0)
    report = check_growth(lopsided, exps_3d)
    assert not report.conditions["F5"].passed


def test_quotient_sup():
    assert_allclose(quotient_sup(odd_power_18), 1.0)
    M = quotient_sup(oscillating(2.0, c=3.0))
    assert 1.0 < M <= 2.0 + 1e-9


def test_quotient_sup_of_offset_two():
    # 2 + sin(1/sigma) swings between 1 and 3
    F = make_nonlinearity("oscillating", {"beta": 2.0, "c": 2.0})
    assert F.params["c"] == 2.0
    M = quotient_sup(F)
    assert 2.5 < M <= 3.0 + 1e-9
    assert make_nonlinearity("oscillating", {"beta": 2.0}).params["c"] == 3.0


def test_quotient_sup_unbounded():
    F = make_nonlinearity("two_power_oscillating", {"beta1": 1.8, "beta2": 2.2})
    assert quotient_sup(F) == np.inf


def test_quotient_sup_sign_change():
    F = Nonlinearity(F=lambda x: x ** 3 - x, f=lambda x: 3 * x ** 2 - 1, parity="odd", sigma0=2.0, delta0=2.0,
                     name="cubic")
    with pytest.raises(HypothesisError):
        quotient_sup(F)


def test_lower_bound_constant():
    assert_allclose(lower_bound_constant(power(2.0), 0.5, 2.0), 0.5)
    assert_allclose(lower_bound_constant(power_18, 0.5, 2.0), 0.5 ** -0.2 / 1.8, rtol=1e-12)
