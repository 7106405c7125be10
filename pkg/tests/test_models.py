import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from kahlerlab.core import Form11Field, GridChart, MetricField, ScalarField, closedness_defect
from kahlerlab.models import (
    DivisorModel,
    FiberWeight,
    LogExpansion,
    LogTerm,
    ModelError,
    ModelPositivityError,
    completeness_profile,
    curvature_decay_profile,
    decay_fit,
    euclidean_reference,
    eta_phi,
    evaluate_expansion,
    f_phi,
    model_constant,
    mixed_discriminant,
    omega_phi,
    omega_phi_semiample,
    semiample_expansion,
    top_power_defect,
    volume_growth_profile,
)

FS = FiberWeight("fubini-study", 1.0)
QUAD = FiberWeight("quadratic", 0.7)


def centre(chart):
    return (slice(None), slice(None), chart.shape[2] // 2, chart.shape[3] // 2)


@pytest.fixture(scope="module")
def fs_model(product_small):
    return DivisorModel(product_small, weight=FS)


def test_model_constants():
    assert model_constant(1) == 0.5
    assert model_constant(2) == pytest.approx(2**1.5 / 3)


def test_cylinder_closed_form(annulus):
    g = omega_phi(DivisorModel(annulus))
    gz = g.to_z_frame().coeffs[..., 0, 0].real
    r = annulus.full(annulus.radius())
    np.testing.assert_allclose(gz * r**2, 1.0, atol=1e-8)


def product_closed_form(model, shift=0.0):
    """Radial and fiber coefficients at the fiber centre, where the weight is critical."""
    chart = model.chart
    lval = -2.0 * chart.axes[0].nodes + shift
    return (2 * lval) ** -0.5, model.weight.lam * (2 * lval) ** 0.5


@pytest.mark.parametrize("shift", [0.0, 0.4, -0.3])
def test_product_closed_form_and_constant_shift(product_small, shift):
    phi = None if shift == 0.0 else ScalarField.constant(product_small, shift)
    model = DivisorModel(product_small, weight=QUAD, phi=phi)
    g = omega_phi(model).coeffs[centre(product_small)][:-8]  # outer rows use one-sided stencils
    radial, fiber = product_closed_form(model, shift)
    shape = g.shape[:2]
    np.testing.assert_allclose(g[..., 0, 0].real, np.broadcast_to(radial[:-8, None], shape), rtol=1e-8)
    np.testing.assert_allclose(g[..., 1, 1].real, np.broadcast_to(fiber[:-8, None], shape), rtol=1e-8)
    assert np.max(np.abs(g[..., 0, 1])) < 1e-8


def test_fiber_coefficient_grows_like_square_root_of_log(fs_model):
    g = omega_phi(fs_model)
    fib = g.coeffs[centre(fs_model.chart)][..., 1, 1].real
    lval = -2 * fs_model.chart.axes[0].nodes
    slope = np.polyfit(np.log(lval), np.log(fib[:, 0]), 1)[0]
    assert slope == pytest.approx(0.5, abs=1e-6)
    assert g.margin > 0


def test_flat_fiber_is_degenerate(product_small):
    with pytest.raises(ModelPositivityError):
        omega_phi(DivisorModel(product_small))


def test_positivity_error_reports_radius():
    chart = GridChart.product(2, (64, 8, 9, 9), 1e-4, 0.5, fiber_extent=0.1)
    # phi = -16 |z_2|^2 r^2 overwhelms the unit fiber curvature once 16 r^2 > 1
    z2 = chart.coordinate(1)
    phi = ScalarField.real(chart, chart.full(-16.0 * np.abs(z2) ** 2 * chart.radius() ** 2))
    with pytest.raises(ModelPositivityError) as err:
        omega_phi(DivisorModel(chart, weight=FS, phi=phi))
    assert err.value.radial_margin.shape == (64,)
    assert 0.2 < err.value.delta <= 0.25


def test_rescaling_covariance(product_small):
    x = product_small.axis_values(2) * np.ones(product_small.shape)
    base = DivisorModel(product_small, weight=FS, phi=ScalarField.real(product_small, 0.1 * x))
    shifted = DivisorModel(product_small, weight=FS, phi=ScalarField.real(product_small, 0.1 * x + 0.25))
    # |S|_phi with phi -> phi + c equals e^{-c/2} |S|_phi: the log norm shifts by c exactly
    np.testing.assert_allclose(shifted.log_norm(), base.log_norm() + 0.25, rtol=1e-15)


def test_model_invariants(product_small):
    with pytest.raises(ModelError):
        DivisorModel(product_small, phi=ScalarField.constant(product_small, -30.0))
    varying = np.zeros(product_small.shape + (2, 2))
    varying[..., 1, 1] = 1.0 + product_small.axis_values(0) * 0.01
    with pytest.raises(ModelError):
        DivisorModel(product_small, k=1, omega_F=Form11Field(product_small, varying))
    with pytest.raises(ModelError):
        DivisorModel(product_small, k=3)
    assert DivisorModel(product_small, k=1).flags
    assert not DivisorModel(product_small).flags
    with pytest.raises(ModelError):
        DivisorModel(GridChart.torus(1, 8))


# -- semi-ample -----------------------------------------------------------


def test_semiample_reduces_to_ample(fs_model):
    a = omega_phi(fs_model).coeffs
    b = omega_phi_semiample(fs_model).coeffs
    np.testing.assert_array_equal(a, b)
    np.testing.assert_array_equal(eta_phi(fs_model).coeffs, a)


def test_semiample_two_term_identity():
    chart = GridChart.product(2, (256, 16, 9, 9), 1e-6, 0.5, fiber_extent=0.1)
    for k in (1, 2):
        model = DivisorModel(chart, k=k, weight=FS)
        form = omega_phi_semiample(model)
        assert form.diagnostics["expansion_defect"] < 1e-6
        assert np.max(np.abs(form.coeffs - semiample_expansion(model).coeffs)) < 1e-6 * np.max(np.abs(form.coeffs))


def test_rank_one_spectrum():
    chart = GridChart.product(2, (64, 16, 9, 9), 1e-6, 0.5, fiber_extent=0.1)
    ev = omega_phi_semiample(DivisorModel(chart, k=1)).diagnostics["eigenvalues"]
    ev = ev / np.max(np.abs(ev), axis=-1, keepdims=True)
    ev = np.sort(np.abs(ev), axis=-1)
    assert np.max(ev[..., 0]) < 1e-8
    assert np.min(ev[..., 1]) == pytest.approx(1.0)


def test_eta_top_power_identity_and_constant():
    chart = GridChart.product(2, (128, 16, 9, 9), 1e-6, 0.5, fiber_extent=0.1)
    res = top_power_defect(DivisorModel(chart, k=1))
    assert res["defect"] < 1e-6
    assert res["constant"] == 2.0
    assert res["nodes"] > 0


def test_eta_scales_with_fiber_form():
    chart = GridChart.product(2, (32, 8, 9, 9), 1e-4, 0.5, fiber_extent=0.1)
    det = []
    for t in (1.0, 3.0):
        fib = np.zeros((2, 2))
        fib[1, 1] = t
        det.append(eta_phi(DivisorModel(chart, k=1, omega_F=Form11Field(chart, fib))).determinant().real)
    np.testing.assert_allclose(det[1], 3.0 * det[0], rtol=1e-9)


@given(st.integers(0, 1000))
def test_mixed_discriminant_of_equal_arguments_is_determinant(seed):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
    a = a @ a.conj().T
    assert mixed_discriminant([a, a, a]) == pytest.approx(np.linalg.det(a), rel=1e-9)


def test_semiample_form_closed_but_eta_not(product_small):
    model = DivisorModel(product_small, k=1, weight=FS)
    assert closedness_defect(omega_phi_semiample(model)) < 1e-8
    # the fiber term L omega_F has d(L omega_F) = dL ^ omega_F, which does not vanish
    assert closedness_defect(eta_phi(model)) > 1e-2


# -- f_phi ----------------------------------------------------------------


def test_f_phi_with_euclidean_reference_is_minus_psi(annulus):
    psi = ScalarField.real(annulus, annulus.full(0.3 * np.cos(annulus.axis_values(1)) * annulus.radius()))
    model = DivisorModel(annulus, reference=euclidean_reference(annulus), Psi=psi)
    np.testing.assert_allclose(f_phi(model, subtract_limit=False).values, -psi.values, atol=1e-8)


def test_f_phi_with_self_reference_vanishes(annulus):
    base = DivisorModel(annulus)
    g = omega_phi(base)
    psi = ScalarField.real(annulus, base.log_norm())
    model = DivisorModel(annulus, reference=g, Psi=psi)
    assert np.max(np.abs(f_phi(model, subtract_limit=False).values)) < 1e-12


def test_f_phi_difference_identity(product_small):
    phi2 = ScalarField.real(product_small, product_small.full(2 * np.real(0.3 * product_small.section())))
    m1 = DivisorModel(product_small, weight=FS)
    m2 = DivisorModel(product_small, weight=FS, phi=phi2)
    diff = f_phi(m1, subtract_limit=False).values - f_phi(m2, subtract_limit=False).values
    expected = -np.log(omega_phi(m1).determinant().real / omega_phi(m2).determinant().real)
    np.testing.assert_allclose(diff, expected, atol=1e-10)


def test_matched_f_phi_tends_to_constant(fs_model):
    f = f_phi(fs_model)
    assert np.max(np.abs(f.values[:20])) < 1e-4


# -- expansions and fits --------------------------------------------------


def test_expansion_examples(annulus):
    model = DivisorModel(annulus)
    assert evaluate_expansion(LogExpansion(), model).sup() == 0.0
    s = annulus.full(annulus.section())
    one = evaluate_expansion(LogExpansion.single(1, 0), model)
    np.testing.assert_allclose(one.values, 2 * s.real, atol=1e-15)
    fit = decay_fit(one, model)
    assert fit.a == pytest.approx(1.0, abs=0.05)
    u1 = 0.3 - 0.2j
    first_order = evaluate_expansion(LogExpansion((LogTerm(1, 0, 0, u1),)), model)
    np.testing.assert_allclose(first_order.values, (s * u1 + np.conj(s * u1)).real, atol=1e-15)
    with pytest.raises(ModelError):
        LogTerm(0, 0)


def test_decay_fit_examples(annulus):
    model = DivisorModel(annulus)
    norm = model.norm()
    fit = decay_fit(ScalarField.real(annulus, norm**0.5), model)
    assert fit.a == pytest.approx(0.5, abs=0.02) and fit.b == pytest.approx(0.0, abs=0.02)
    fit = decay_fit(ScalarField.real(annulus, (2 * model.log_norm()) ** -0.5), model)
    assert fit.a == pytest.approx(0.0, abs=0.05) and fit.b == pytest.approx(-0.5, abs=0.05)
    fit = decay_fit(ScalarField.real(annulus, (2 * model.log_norm()) ** -1.0), model)
    assert fit.b == pytest.approx(-1.0, abs=0.05)


@given(st.floats(0.0, 3.0), st.floats(-2.0, 2.0))
def test_decay_fit_recovers_exponents(annulus, a, b):
    model = DivisorModel(annulus)
    vals = model.norm() ** a * model.log_norm() ** b * (1 + 0.1 * np.cos(annulus.axis_values(1)))
    fit = decay_fit(ScalarField.real(annulus, vals), model)
    assert abs(fit.a - a) < 0.02 and abs(fit.b - b) < 0.05


def test_mismatched_model_has_nonzero_limit(product_small):
    # reference potential missing the fiber Hessian correction
    psi = ScalarField.real(product_small, product_small.full(FS.psi(product_small)))
    model = DivisorModel(product_small, weight=FS, Psi=psi)
    f = f_phi(model, subtract_limit=False)
    fit = decay_fit(f, model)
    assert abs(fit.a) < 0.05 and abs(fit.b) < 0.05
    assert np.exp(fit.c) > 1e-3


def test_cylinder_curvature_is_identically_zero(annulus):
    fit, norm = curvature_decay_profile(DivisorModel(annulus))
    assert fit.status == "identically-zero"
    assert norm.values.max() < 1e-6


# -- completeness and volume ---------------------------------------------


@pytest.fixture(scope="module")
def growth_chart():
    return GridChart.product(2, (256, 16, 9, 9), 1e-6, 0.5, fiber_extent=0.1)


def test_completeness_and_volume_controls(growth_chart):
    cyl_chart = GridChart.annulus((256, 16), 1e-6, 0.5)
    cyl = DivisorModel(cyl_chart)
    g = omega_phi(cyl)
    prof = completeness_profile(g, cyl)
    assert prof.status == "divergent" and prof.exponent == pytest.approx(1.0, abs=0.05)
    assert volume_growth_profile(g, cyl).alpha == pytest.approx(1.0, abs=0.1)
    eucl = euclidean_reference(cyl_chart)
    assert completeness_profile(eucl, cyl).status == "bounded"
    assert volume_growth_profile(eucl, cyl).status == "bounded"


def test_model_completeness_exponent(growth_chart):
    model = DivisorModel(growth_chart, weight=FS)
    g = omega_phi(model)
    assert completeness_profile(g, model).exponent == pytest.approx(0.75, abs=0.05)
    assert volume_growth_profile(g, model).alpha <= 2.1
    assert completeness_profile(euclidean_reference(growth_chart), model).status == "bounded"


def test_model_closedness(fs_model):
    assert closedness_defect(omega_phi(fs_model)) < 1e-8
