import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from kahlerlab.barrier import (
    BarrierSpec,
    barrier_excess,
    barrier_lhs,
    barrier_potential,
    barrier_rhs,
    decay_bound_check,
    dominance_crossover,
    rhs_terms,
    verify_barrier,
)
from kahlerlab.core import GridChart, ScalarField
from kahlerlab.models import DivisorModel, FiberWeight, LogExpansion, evaluate_expansion, omega_phi
from kahlerlab.models.profiles import decay_fit

FS = FiberWeight("fubini-study", 1.0)


@pytest.fixture(scope="module")
def model():
    chart = GridChart.product(2, (256, 32, 9, 9), 1e-5, 0.2, fiber_extent=0.1)
    phi = ScalarField.real(chart, chart.full(2.0 * np.real(0.5 * chart.section())))
    return DivisorModel(chart, weight=FS, phi=phi)


@pytest.fixture(scope="module")
def omega(model):
    return omega_phi(model)


@pytest.fixture(scope="module")
def disc_model():
    return DivisorModel(GridChart.annulus((128, 16), 1e-6, 0.5))


def test_spec_validation(model):
    with pytest.raises(ValueError):
        BarrierSpec(1.0, 0, 0, 1, model)
    with pytest.raises(ValueError):
        BarrierSpec(1.0, 1, 0, -1, model)


def test_zero_amplitude_potential_and_density(model, omega):
    spec = BarrierSpec(0.0, 1, 1, 1, model)
    assert np.all(barrier_potential(spec).values == 0.0)
    np.testing.assert_allclose(barrier_lhs(spec, omega).values, 1.0, atol=1e-14)


def test_linear_potential_without_log(model):
    spec = BarrierSpec(1e-3, 1, 0, 0, model)
    expected = 2e-3 * np.real(model.section())
    np.testing.assert_allclose(barrier_potential(spec).values, np.broadcast_to(expected, model.chart.shape), atol=1e-18)


def test_potential_decay_exponents(model):
    fit = decay_fit(barrier_potential(BarrierSpec(1e-3, 1, 1, 1, model)), model)
    assert abs(fit.a - 2.0) < 0.05
    assert abs(fit.b - 1.0) < 0.05


def test_density_linear_in_amplitude(model, omega):
    spec = BarrierSpec(1e-3, 1, 1, 1, model)
    ex = [barrier_excess(spec.with_amplitude(c), omega).values for c in (1e-3, 5e-4, 2.5e-4)]
    d1 = np.abs(ex[0] - 2 * ex[1]).max()
    d2 = np.abs(ex[1] - 2 * ex[2]).max()
    assert 3.5 < d1 / d2 < 4.5


def test_printed_constant_vanishes_when_k_equals_n(model):
    terms = rhs_terms(BarrierSpec(1.0, 1, 0, 2, model), "printed")
    assert np.all(terms["constant"] == 0.0)


def test_printed_middle_term_real_when_symmetric(model):
    terms = rhs_terms(BarrierSpec(1.0, 2, 2, 1, model), "printed")
    assert not np.iscomplexobj(terms["linear"])
    rhs = barrier_rhs(BarrierSpec(1.0, 2, 1, 1, model), "printed")
    assert np.iscomplexobj(rhs.values)


def test_derived_bracket_matches_hand_expansion(model):
    spec = BarrierSpec(2.0, 1, 1, 1, model)
    x = 2.0 * model.log_norm()
    p = 2.0 * np.abs(model.section()) ** 2
    expected = 2.0 * x ** (1 - 1.5) * p * (x**2 - 4.0 * x + 2.0)
    terms = rhs_terms(spec, "derived")
    np.testing.assert_allclose(terms["quadratic"] + terms["linear"] + terms["constant"], expected, rtol=1e-12)


def test_dominance_crossover_radius():
    m0 = DivisorModel(GridChart.product(2, (128, 16, 9, 9), 1e-5, 0.5, fiber_extent=0.1), weight=FS)
    spec = BarrierSpec(1e-3, 1, 1, 1, m0)
    # ij X^2 = nk(i+j) X + nk(nk-1) at X = 2 + sqrt(6), X = -4 log r on the fiber centre
    r_star = np.exp(-(2.0 + np.sqrt(6.0)) / 4.0)
    spacing = np.diff(m0.chart.axes[0].nodes).max()
    got = dominance_crossover(spec)
    assert got <= r_star
    assert np.log(r_star) - np.log(got) <= spacing
    assert dominance_crossover(spec, "printed") is None


def test_verify_zero_amplitude(model):
    rep = verify_barrier(BarrierSpec(0.0, 1, 1, 1, model))
    assert rep.passed
    assert rep.fit.status == "identically-zero"


def test_verify_order_and_mutation(model):
    good = verify_barrier(BarrierSpec(1e-3, 1, 1, 1, model))
    assert good.passed and good.order >= 2.85
    bad = verify_barrier(BarrierSpec(1e-3, 1, 1, 1, model), drop_constant=True)
    assert bad.status == "fail" and bad.order < 2.5


def test_verify_order_monotone_in_degree(model):
    low = verify_barrier(BarrierSpec(1e-3, 1, 1, 1, model))
    high = verify_barrier(BarrierSpec(1e-3, 2, 1, 1, model))
    assert abs((high.order - low.order) - 1.0) <= 0.2


def test_verify_fiber_dependent_theta(model):
    chart = model.chart
    theta = ScalarField.complex(chart, chart.full(1.0 + 0.5 * chart.coordinate(1)))
    rep = verify_barrier(BarrierSpec(1e-3, 1, 1, 1, model, theta))
    assert rep.passed and rep.order >= 2.85


def test_printed_expansion_is_not_first_order(model):
    rep = verify_barrier(BarrierSpec(1e-3, 1, 1, 1, model), variant="printed")
    assert not rep.passed


@pytest.mark.parametrize("m", [1, 2, 3])
def test_decay_bound_examples(disc_model, m):
    chart = disc_model.chart
    norm = disc_model.norm()
    above = ScalarField.real(chart, chart.full(norm ** (m + 2)))
    below = ScalarField.real(chart, chart.full(norm**m))
    assert decay_bound_check(above, m, disc_model).passed
    assert not decay_bound_check(below, m, disc_model).passed
    exact = evaluate_expansion(LogExpansion.single(m + 1, 0), disc_model)
    res = decay_bound_check(exact, m, disc_model)
    assert res.passed
    assert res.constant == pytest.approx(2.0, rel=1e-3)


def test_decay_bound_rejects_bad_order(disc_model):
    with pytest.raises(ValueError):
        decay_bound_check(ScalarField.constant(disc_model.chart), 0, disc_model)


@given(t=st.floats(1e-3, 1e3), m=st.integers(1, 3))
def test_decay_constant_scales_linearly(disc_model, t, m):
    chart = disc_model.chart
    u = ScalarField.real(chart, chart.full(disc_model.norm() ** (m + 2)))
    base = decay_bound_check(u, m, disc_model)
    scaled = decay_bound_check(ScalarField.real(chart, t * u.values), m, disc_model)
    assert scaled.constant == pytest.approx(t * base.constant, rel=1e-13)
    assert scaled.passed == base.passed
