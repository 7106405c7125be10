import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from kahlerlab.core import ChartError, GridChart
from kahlerlab.core.charts import MIN_RESOLUTION, fd_matrix, fornberg_weights, gregory_weights


def test_fornberg_central_second_derivative():
    w = fornberg_weights(0.0, np.array([-1.0, 0.0, 1.0]), 2)
    np.testing.assert_allclose(w[:, 2], [1.0, -2.0, 1.0])
    np.testing.assert_allclose(w[:, 1], [-0.5, 0.0, 0.5])


@given(st.integers(0, 8), st.integers(1, 2))
def test_fd_matrix_exact_on_polynomials(degree, order):
    x = np.linspace(-1.0, 2.0, 21)
    d = fd_matrix(x, order)
    p = np.polynomial.Polynomial(np.arange(1.0, degree + 2.0))
    np.testing.assert_allclose(d @ p(x), p.deriv(order)(x), atol=1e-7 * (1 + abs(p.deriv(order)(x)).max()))


@given(st.integers(0, 3))
def test_gregory_weights_exact_on_low_degree(degree):
    n = 33
    x = np.linspace(0.0, 2.0, n)
    w = gregory_weights(n, x[1] - x[0])
    assert np.dot(w, x**degree) == pytest.approx(2.0 ** (degree + 1) / (degree + 1), rel=1e-12)


def test_periodic_quadrature_integrates_trig_exactly(torus1):
    x = torus1.axis_values(0)
    f = np.cos(2 * np.pi * x) ** 2 * np.ones(torus1.shape)
    assert np.sum(f * torus1.quadrature_weights) == pytest.approx(0.5, abs=1e-14)


def test_real_dimension_and_node_count():
    c = GridChart.torus(2, (8, 10, 12, 14))
    assert c.real_dim == 4
    assert c.size == 8 * 10 * 12 * 14
    assert c.shape == (8, 10, 12, 14)


def test_resolution_floor():
    with pytest.raises(ChartError):
        GridChart.torus(1, MIN_RESOLUTION - 1)


@pytest.mark.parametrize("r_min, r_max", [(0.1, 1.0), (0.0, 0.5), (0.5, 0.1)])
def test_radial_window_rejected(r_min, r_max):
    with pytest.raises(ChartError):
        GridChart.annulus((16, 16), r_min, r_max)


@pytest.mark.parametrize(
    "chart",
    [
        GridChart.torus(2, (8, 8, 12, 12), 2.0),
        GridChart.annulus((16, 8), 1e-3, 0.5),
        GridChart.product(2, (16, 8, 9, 9), 1e-3, 0.5, fiber="torus", fiber_extent=0.3),
        GridChart.patch(1, 12, 0.25, 0.5 + 0.5j),
    ],
)
def test_dict_round_trip(chart):
    again = GridChart.from_dict(chart.to_dict())
    assert again.axes == chart.axes and again.kind == chart.kind


def test_log_polar_section_and_radius(annulus):
    s = annulus.section()
    np.testing.assert_allclose(np.abs(s), np.broadcast_to(annulus.radius(), s.shape), rtol=1e-14)
    assert annulus.is_log_polar and not annulus.is_compact


def test_radial_window_is_inner_half(annulus):
    idx = annulus.radial_window(0.5)
    t = -annulus.axes[0].nodes
    assert t[idx].min() >= t.min() + 0.5 * (t.max() - t.min()) - 1e-9
    assert idx.max() < annulus.shape[0] - 8


def test_check_same_detects_mismatch(torus1):
    with pytest.raises(ChartError):
        torus1.check_same(GridChart.torus(1, 16))
