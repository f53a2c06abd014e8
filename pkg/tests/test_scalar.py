import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ddae_theta.errors import ConfigError, PoleError
from ddae_theta.scalar import (
    PRESETS,
    GrowthMatrix,
    ScalarTestDde,
    ScanRule,
    ThetaParams,
    growth_function,
    growth_matrix,
    parse_rule,
    spectral_radius,
    spectral_radius_grid,
    stability_raster,
    stable_step_limit,
)

thetas = st.floats(0.0, 1.0)
coef = st.floats(-20.0, 20.0)
steps = st.floats(1e-3, 2.0)


@st.composite
def complex_numbers(draw, bound=10.0):
    return complex(draw(st.floats(-bound, bound)), draw(st.floats(-bound, bound)))


def test_growth_function_known_values():
    assert growth_function(ThetaParams(0.5, 1.0), -2.0) == 0.0
    assert growth_function(ThetaParams(0.0, 1.0), -1.0) == pytest.approx(0.5)
    # theta = 1 is explicit Euler
    assert growth_function(ThetaParams(1.0, 1.0), -3.0) == pytest.approx(-2.0)


def test_growth_function_pole():
    with pytest.raises(PoleError):
        growth_function(ThetaParams(0.0, 1.0), 1.0)


def test_theta_params_validation():
    with pytest.raises(ConfigError):
        ThetaParams(1.5, 0.1)
    with pytest.raises(ConfigError):
        ThetaParams(0.5, 0.0)
    with pytest.raises(ConfigError):
        ThetaParams(float("nan"), 0.1)


def test_growth_matrix_entries_trapezoidal():
    p = ThetaParams(0.5, 0.1)
    gm = growth_matrix(p, ScalarTestDde(-1.0, 2.0))
    d = 1 + 0.05
    assert gm.entries[0, 0] == pytest.approx((1 - 0.05 + 0.1) / d)
    assert gm.entries[0, 1] == pytest.approx(0.1 / d)


def test_boundary_point_unit_modulus():
    m = growth_matrix(ThetaParams(0.5, 1.0), ScalarTestDde(0.0, -2.0))
    ev = np.sort_complex(m.eigenvalues())
    np.testing.assert_allclose(ev, [-1j, 1j], atol=1e-15)
    assert abs(spectral_radius(m) - 1.0) <= 1e-12


@given(thetas, complex_numbers(), complex_numbers(), steps)
def test_closed_form_matches_general_eigensolver(theta, a, b, h):
    p = ThetaParams(theta, h)
    if abs(1 - a * h * (1 - theta)) < 1e-6:
        return
    gm = growth_matrix(p, ScalarTestDde(a, b))
    ref = np.linalg.eigvals(gm.entries)
    got = gm.eigenvalues()
    scale = max(1.0, np.abs(ref).max())
    for z in got:
        assert np.min(np.abs(ref - z)) <= 1e-9 * scale


@given(thetas, complex_numbers())
def test_b_zero_reduces_to_growth_function(theta, ah):
    p = ThetaParams(theta, 1.0)
    if abs(1 - ah * (1 - theta)) < 1e-3:
        return
    rho = spectral_radius(growth_matrix(p, ScalarTestDde(ah, 0.0)))
    g = abs(growth_function(p, ah))
    assert rho == pytest.approx(g, rel=1e-12, abs=1e-12)


@given(thetas, complex_numbers(), complex_numbers(), steps, st.integers(1, 6))
def test_companion_subdiagonal_structure(theta, a, b, h, k):
    if abs(1 - a * h * (1 - theta)) < 1e-6:
        return
    m = growth_matrix(ThetaParams(theta, h), ScalarTestDde(a, b), lag_steps=k).entries
    assert np.array_equal(m[1:, :-1], np.eye(k))
    assert np.all(m[1:, -1] == 0)
    if k == 1:
        assert np.array_equal(m[1], [1, 0])


@given(complex_numbers(5.0))
def test_explicit_euler_region_for_pure_delay(bh):
    rho = spectral_radius_grid(0.0, 0.0, bh)
    assert rho == pytest.approx(abs(1 + bh), rel=1e-12, abs=1e-14)


def test_pole_cells_are_unstable():
    rho = spectral_radius_grid(0.0, np.array([1.0, -1.0]), np.array([0.0, 0.0]))
    assert np.isinf(rho[0]) and rho[1] < 1


def test_trapezoidal_a_stability_raster():
    r = stability_raster(resolution=(101, 61), theta=0.5, scan="b-eq-0")
    re = r.grid().real
    band = np.abs(re) > 1e-6
    assert np.array_equal(r.stable_mask[band], (re < 0)[band])


def test_explicit_euler_disk_raster():
    r = stability_raster(resolution=(121, 121), theta=0.0, scan="a-eq-0")
    w = r.grid()
    expected = np.abs(1 + w) < 1
    away = np.abs(np.abs(1 + w) - 1) > 1e-9
    assert np.array_equal(r.stable_mask[away], expected[away])


def test_region_area_shrinks_with_ratio():
    areas = [
        stability_raster(resolution=(200, 200), theta=0.5, scan=ScanRule("a", ratio)).stable_mask.sum()
        for ratio in (0.0, 0.15, 0.85, 1.0)
    ]
    assert all(x > y for x, y in zip(areas, areas[1:]))


@pytest.mark.parametrize("a", [-0.5, -1.0, -4.0])
def test_step_limit_non_increasing_in_ratio(a):
    limits = [stable_step_limit(0.5, a, ratio, h_max=50.0, n=4001) for ratio in (0.0, 0.15, 0.85, 1.0)]
    assert all(x >= y for x, y in zip(limits, limits[1:]))


def test_step_limit_finite_when_delay_dominates():
    # b = -2a with a < 0 gives an unstable exact equation, so TM must fail for some h
    assert stable_step_limit(0.5, -1.0, -2.0, h_max=50.0) < 50.0


@pytest.mark.parametrize(
    "text, scanned, alpha",
    [("b=0.15a", "a", 0.15), ("a=1.1*b", "b", 1.1), ("b = -2 a", "a", -2.0), ("b-eq-a", "a", 1.0)],
)
def test_parse_rule(text, scanned, alpha):
    rule = parse_rule(text)
    assert (rule.scanned, rule.alpha) == (scanned, alpha)


@pytest.mark.parametrize("text", ["b=0.1b", "c=2a", "b=xa", ""])
def test_parse_rule_rejects(text):
    with pytest.raises(ConfigError):
        parse_rule(text)


def test_presets_cover_named_rules():
    assert set(PRESETS) == {"b-eq-0", "a-eq-0", "b-eq-a", "a-eq-1.1b", "b-eq-0.15a", "a-eq-0.85b"}
    assert PRESETS["a-eq-0.85b"].coefficients(2.0) == (1.7, 2.0)


@pytest.mark.parametrize(
    "kwargs",
    [dict(bounds=(1, -1, -1, 1)), dict(bounds=(-1, 1, 1, 1)), dict(resolution=(1, 10)),
     dict(theta=2.0), dict(bounds=(-np.inf, 1, -1, 1))],
)
def test_raster_config_errors(kwargs):
    with pytest.raises(ConfigError):
        stability_raster(**kwargs)


def test_raster_layout():
    r = stability_raster(bounds=(-2, 1, -1, 3), resolution=(4, 5))
    assert r.values.shape == (5, 4)
    assert r.re[0] == -2 and r.re[-1] == 1 and r.im[-1] == 3
    np.testing.assert_allclose(r.values, spectral_radius_grid(0.5, r.grid(), 0.0))


def test_growth_matrix_rejects_non_square():
    with pytest.raises(ConfigError):
        GrowthMatrix(np.zeros((2, 3)))


@settings(max_examples=50)
@given(st.floats(-3, -0.01), st.floats(0.01, 3))
def test_l_stability_limit_of_backward_euler(a, h):
    # theta = 0 damps stiff modes: |R| < 1 and R -> 0 as ah -> -inf
    p = ThetaParams(0.0, h)
    assert abs(growth_function(p, a * h)) < 1
    assert abs(growth_function(p, -1e8)) < 1e-7
