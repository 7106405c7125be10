import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from kahlerlab.core import (
    Form11Field,
    GridChart,
    MetricField,
    PositivityError,
    ResolutionWarning,
    ScalarField,
    closedness_defect,
    curvature_tensor,
    ddbar,
    first_chern_form,
    integrate,
    log_ma_density,
    ma_density,
    metric_laplacian,
    positivity_margin,
    ricci_form,
    volume,
)

PI2 = np.pi**2


def cosx(chart, amp=1.0, axis=0):
    return ScalarField.real(chart, chart.full(amp * np.cos(2 * np.pi * chart.axis_values(axis))))


def random_trig(chart, seed, modes=3, amp=0.1):
    rng = np.random.default_rng(seed)
    vals = np.zeros(chart.shape)
    for _ in range(modes):
        arg = rng.uniform(0, 2 * np.pi)
        for a, ax in enumerate(chart.axes):
            arg = arg + 2 * np.pi * rng.integers(-2, 3) * chart.axis_values(a) / (ax.hi - ax.lo)
        vals = vals + rng.normal() * np.cos(arg)
    return ScalarField.real(chart, amp * vals / max(np.abs(vals).max(), 1e-300))


def fd4_second(u, h, axis):
    """Fourth-order central second difference on a periodic axis."""
    r = lambda k: np.roll(u, k, axis=axis)  # noqa: E731
    return (-r(2) + 16 * r(1) - 30 * u + 16 * r(-1) - r(-2)) / (12 * h * h)


def fd4_first(u, h, axis):
    r = lambda k: np.roll(u, k, axis=axis)  # noqa: E731
    return (r(2) - 8 * r(1) + 8 * r(-1) - r(-2)) / (12 * h)


# -- ddbar ----------------------------------------------------------------


def test_ddbar_of_constant_is_zero(torus2):
    assert np.max(np.abs(ddbar(ScalarField.constant(torus2, 3.0)).coeffs)) < 1e-12


def test_ddbar_cosine_matches_closed_form_and_fd_oracle():
    chart = GridChart.torus(1, 512)
    h = ddbar(cosx(chart)).coeffs[..., 0, 0]
    x = chart.axis_values(0) * np.ones(chart.shape)
    exact = -PI2 * np.cos(2 * np.pi * x)
    assert np.max(np.abs(h - exact)) < 1e-9
    # independent second-order finite-difference oracle
    u = np.cos(2 * np.pi * x)
    dx = chart.axes[0].spacing
    fd = (np.roll(u, -1, 0) - 2 * u + np.roll(u, 1, 0)) / dx**2 / 4
    assert np.max(np.abs(h.real - fd)) < 1e-3 * PI2


def test_ddbar_of_norm_squared_on_patch_is_identity():
    chart = GridChart.patch(1, 16, 0.5)
    z = chart.coordinate(0)
    h = ddbar(ScalarField.real(chart, chart.full(np.abs(z) ** 2))).coeffs
    np.testing.assert_allclose(h[..., 0, 0], 1.0, atol=1e-10)


@given(st.integers(0, 10_000))
def test_ddbar_output_hermitian_and_exact(seed):
    chart = GridChart.torus(2, 12)
    h = ddbar(random_trig(chart, seed))
    assert h.hermitian_defect() == 0.0
    w = chart.quadrature_weights
    scale = max(np.max(np.abs(h.coeffs)), 1.0)
    for a in range(2):
        for b in range(2):
            assert abs(np.sum(h.coeffs[..., a, b] * w)) < 1e-10 * scale


@given(st.integers(0, 10_000), st.floats(-3, 3))
def test_ddbar_is_linear(seed, t):
    chart = GridChart.torus(1, 16)
    u = random_trig(chart, seed)
    v = random_trig(chart, seed + 1)
    lhs = ddbar(u + t * v).coeffs
    rhs = ddbar(u).coeffs + t * ddbar(v).coeffs
    assert np.max(np.abs(lhs - rhs)) < 1e-10


def test_ddbar_converges_under_refinement_on_bounded_axes():
    errors = []
    for n in (12, 24):
        chart = GridChart.patch(1, n, 0.5)
        z = chart.coordinate(0)
        u = np.exp(z.real) * np.cos(2 * z.imag)
        # u_{z zbar} = (u_xx + u_yy) / 4 = -3/4 u
        h = ddbar(ScalarField.real(chart, chart.full(u))).coeffs[..., 0, 0].real
        errors.append(np.max(np.abs(h + 0.75 * u)))
    assert errors[1] < errors[0] / 4


def test_unresolved_field_warns():
    chart = GridChart.torus(1, 16)
    x = chart.axis_values(0)
    noisy = ScalarField.real(chart, chart.full(np.cos(2 * np.pi * 7 * x)))
    with warnings.catch_warnings(record=True) as rec:
        warnings.simplefilter("always")
        ddbar(noisy)
    assert any(issubclass(w.category, ResolutionWarning) for w in rec)


def test_closedness_of_exact_forms():
    chart = GridChart.torus(2, 16)
    assert closedness_defect(ddbar(random_trig(chart, 7))) < 1e-8


# -- Ricci and Chern forms ------------------------------------------------


def conformal(chart, amp=0.3):
    hx = amp * np.cos(2 * np.pi * chart.axis_values(0)) * np.ones(chart.shape)
    return MetricField(chart, np.exp(hx)[..., None, None] * np.ones((1, 1))), hx


def test_ricci_of_flat_is_zero(torus2):
    assert np.max(np.abs(ricci_form(MetricField.identity(torus2)).coeffs)) < 1e-12


def test_ricci_of_conformal_metric():
    chart = GridChart.torus(1, 64)
    g, hx = conformal(chart)
    ric = ricci_form(g).coeffs[..., 0, 0]
    np.testing.assert_allclose(ric.real, PI2 * hx, atol=1e-10)


def fubini_study_patch(n=1, res=24, half_width=0.5):
    chart = GridChart.patch(n, res, half_width, 0.1 + 0.2j)
    z = chart.coordinate(0)
    g = chart.full((1 + np.abs(z) ** 2) ** -2)[..., None, None] * np.ones((1, 1))
    return chart, MetricField(chart, g)


def test_ricci_of_fubini_study_is_twice_metric():
    _, g = fubini_study_patch(res=64)
    np.testing.assert_allclose(ricci_form(g).coeffs, 2 * g.coeffs, atol=1e-8)


def test_first_chern_form_integrates_to_zero_on_torus():
    chart = GridChart.torus(1, 64)
    g, _ = conformal(chart)
    c1 = first_chern_form(g)
    assert abs(np.sum(c1.trace() * chart.quadrature_weights)) < 1e-12


def test_first_chern_positive_on_fubini_study():
    _, g = fubini_study_patch()
    assert first_chern_form(g).trace().min() > 0


@given(st.floats(1e-3, 1e3))
def test_ricci_scale_invariance(c):
    chart = GridChart.torus(1, 32)
    g, _ = conformal(chart)
    a = ricci_form(g).coeffs
    b = ricci_form(g.scaled(c).as_metric()).coeffs
    # log c enters log det before differentiation, so roundoff grows with |log c|
    assert np.max(np.abs(a - b)) < 1e-12 * (1.0 + abs(np.log(c))) * np.max(np.abs(a))


# -- Monge-Ampère density and Laplacian -----------------------------------


def test_density_of_zero_potential(torus2):
    assert np.all(ma_density(MetricField.identity(torus2), ScalarField.constant(torus2)).values == 1.0)


@given(st.integers(0, 10_000))
def test_density_is_one_plus_laplacian_in_dimension_one(seed):
    chart = GridChart.torus(1, 24)
    g, _ = conformal(chart, 0.2)
    u = random_trig(chart, seed, amp=0.01)
    d = ma_density(g, u).values
    np.testing.assert_allclose(d, 1 + metric_laplacian(g, u).values, atol=1e-12)


def test_density_in_dimension_two_matches_fd_determinant():
    chart = GridChart.torus(2, (128, 8, 128, 8))
    x1, x2 = chart.axis_values(0), chart.axis_values(2)
    u = 0.01 * np.cos(2 * np.pi * x1) * np.cos(2 * np.pi * x2) * np.ones(chart.shape)
    d = ma_density(MetricField.identity(chart), ScalarField.real(chart, u)).values
    h = chart.axes[0].spacing
    a = fd4_second(u, h, 0) / 4
    dd = fd4_second(u, h, 2) / 4
    b = fd4_first(fd4_first(u, h, 0), h, 2) / 4
    oracle = (1 + a) * (1 + dd) - b**2
    assert np.max(np.abs(d - oracle)) < 1e-6


def test_laplacian_examples():
    chart = GridChart.torus(1, 32)
    g = MetricField.identity(chart)
    assert np.max(np.abs(metric_laplacian(g, ScalarField.constant(chart, 2.0)).values)) < 1e-12
    lap = metric_laplacian(g, cosx(chart)).values
    np.testing.assert_allclose(lap, -PI2 * np.cos(2 * np.pi * chart.axis_values(0)) * np.ones(chart.shape), atol=1e-10)


def test_linearization_converges_first_order():
    chart = GridChart.torus(2, 12)
    g = MetricField(chart, np.array([[1.2, 0.1j], [-0.1j, 0.9]]))
    v = random_trig(chart, 3, amp=1.0)
    lap = metric_laplacian(g, v).values
    ts = np.array([1e-2, 1e-3, 1e-4])
    errs = [np.max(np.abs(log_ma_density(g, t * v).values / t - lap)) for t in ts]
    slope = np.polyfit(np.log(ts), np.log(errs), 1)[0]
    assert slope >= 0.9


@given(st.integers(0, 10_000))
def test_cohomology_conservation(seed):
    chart = GridChart.torus(2, 12)
    g = MetricField.identity(chart)
    u = random_trig(chart, seed, amp=0.005)
    assert abs(integrate(ma_density(g, u), g) - volume(g)) < 1e-8 * volume(g)


def test_non_admissible_potential_raises(torus1):
    with pytest.raises(PositivityError) as err:
        ma_density(MetricField.identity(torus1), cosx(torus1, 1.0))
    assert err.value.margin_field.values.min() < 0


# -- integration and margins ----------------------------------------------


def test_integration_examples():
    t1 = GridChart.torus(1, 32)
    g1 = MetricField.identity(t1)
    assert integrate(ScalarField.constant(t1, 1.0), g1) == pytest.approx(1.0, abs=1e-14)
    assert abs(integrate(cosx(t1), g1)) < 1e-12
    t2 = GridChart.torus(2, 16)
    f = np.cos(2 * np.pi * t2.axis_values(0)) ** 2 * np.cos(2 * np.pi * t2.axis_values(3)) ** 2
    assert integrate(ScalarField.real(t2, t2.full(f)), MetricField.identity(t2)) == pytest.approx(0.25, abs=1e-14)


def test_positivity_margin_examples(torus2):
    assert np.all(positivity_margin(Form11Field(torus2, np.eye(2))).values == pytest.approx(1.0))
    c = np.broadcast_to(np.eye(2, dtype=complex), torus2.shape + (2, 2)).copy()
    c[1, 2, 3, 4] = np.diag([2.0, -1.0])
    m = positivity_margin(Form11Field(torus2, c)).values
    assert m[1, 2, 3, 4] == pytest.approx(-1.0)


# -- curvature ------------------------------------------------------------


def test_curvature_of_flat_metric(torus2):
    assert np.max(np.abs(curvature_tensor(MetricField.identity(torus2)).components)) < 1e-12


def test_cylinder_is_flat(annulus):
    # the cylinder metric |dz|^2 / |z|^2 has constant w-frame coefficient
    g = MetricField(annulus, np.ones((1, 1)))
    assert curvature_tensor(g).norm.values.max() < 1e-6


def test_fubini_study_curvature_norm_constant():
    _, g = fubini_study_patch(res=32)
    norm = curvature_tensor(g).norm.values
    assert np.ptp(norm) < 1e-4 * norm.mean()


def test_kahler_symmetries_and_trace_compatibility():
    chart = GridChart.torus(2, (128, 8, 128, 8))
    x1, x2 = chart.axis_values(0), chart.axis_values(2)
    # depends on the finely resolved axes only, but still couples z_1 and z_2
    u = 0.01 * np.cos(2 * np.pi * x1) * np.cos(2 * np.pi * x2) + 0.005 * np.sin(2 * np.pi * (x1 - 2 * x2))
    g = (MetricField.identity(chart) + ddbar(ScalarField.real(chart, chart.full(u)))).as_metric()
    curv = curvature_tensor(g)
    assert curv.symmetry_defect() < 1e-10
    ric = ricci_form(g).coeffs
    traced = curv.ricci_trace(g)
    assert np.max(np.abs(traced - ric)) < 1e-6 * max(1.0, np.max(np.abs(ric)))
