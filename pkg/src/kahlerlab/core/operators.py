"""Differential operators on sampled Kähler data.

Every operator is a pure function of immutable fields.  Coefficients follow
the convention of :mod:`kahlerlab.core.fields`: ``ddbar(phi)`` holds
``d^2 phi / dz_a dzbar_b`` so that ``(sqrt(-1)/2pi) ddbar(phi)`` is the form.
"""

from __future__ import annotations

import warnings

import numpy as np

from . import linalg
from .calculus import (
    SLAB_NODES,
    _restrict,
    complex_hessian,
    dz,
    hessian_from_jet,
    radial_slabs,
    real_jet,
    spectral_tail,
)
from .charts import FD_STENCIL, GridChart
from .fields import (
    MARGIN_FLOOR,
    CurvatureField,
    DegenerateMetricError,
    FieldError,
    Form11Field,
    MetricField,
    ScalarField,
)

__all__ = [
    "ResolutionWarning",
    "PositivityError",
    "TAIL_THRESHOLD",
    "ddbar",
    "ricci_form",
    "first_chern_form",
    "ma_density",
    "ma_excess",
    "log_ma_density",
    "metric_laplacian",
    "integrate",
    "volume",
    "positivity_margin",
    "curvature_tensor",
    "curvature_norm",
    "potential_curvature_norm",
    "closedness_defect",
]

TAIL_THRESHOLD = 1e-10


class ResolutionWarning(UserWarning):
    """A field carries noticeable energy in its highest resolved modes."""


class PositivityError(DegenerateMetricError):
    """``omega + ddbar(u)`` lost positivity; ``margin_field`` holds the per-node minimum eigenvalue."""

    def __init__(self, message, margin_field: ScalarField, node=None, margin=None):
        super().__init__(message, node=node, margin=margin)
        self.margin_field = margin_field


def ddbar(phi: ScalarField, require_real: bool = True) -> Form11Field:
    """Complex Hessian of a potential.

    Parameters
    ----------
    phi : ScalarField
        Potential sampled on its chart.
    require_real : bool
        Reject complex-tagged input (the result of a real potential is Hermitian).

    Returns
    -------
    Form11Field
        Hermitian for real ``phi``.  ``diagnostics["spectral_tail"]`` records the
        fraction of spectral energy in the top modes; a :class:`ResolutionWarning`
        is issued when it exceeds ``TAIL_THRESHOLD``.
    """
    if require_real and not phi.is_real:
        raise FieldError("ddbar needs a real potential; pass require_real=False for complex input")
    tail = spectral_tail(phi.values, phi.chart)
    if tail > TAIL_THRESHOLD:
        warnings.warn(
            f"potential is under-resolved: spectral tail {tail:.2e}", ResolutionWarning, stacklevel=2
        )
    h = complex_hessian(phi.values, phi.chart)
    return Form11Field(phi.chart, h, hermitian=phi.is_real, diagnostics={"spectral_tail": tail})


def _log_det(g: MetricField) -> ScalarField:
    dt = g.determinant()
    if not np.all(dt > np.finfo(float).tiny):
        worst = np.unravel_index(int(np.argmin(dt)), g.chart.shape)
        raise DegenerateMetricError(
            f"metric determinant underflows at node {worst}", node=worst, margin=g.margin
        )
    return ScalarField.real(g.chart, np.log(dt))


def ricci_form(g: MetricField) -> Form11Field:
    """``-ddbar log det g``."""
    rho = ddbar(_log_det(g))
    return Form11Field(g.chart, -rho.coeffs, diagnostics=rho.diagnostics)


def first_chern_form(g: MetricField) -> Form11Field:
    """Trace of the curvature form of the canonical connection on ``det T``.

    In the (sqrt(-1)/2pi) coefficient convention this is exactly the Ricci form.
    """
    return ricci_form(g)


def _perturbed(omega: MetricField, u: ScalarField) -> tuple[np.ndarray, np.ndarray]:
    omega.chart.check_same(u.chart)
    h = ddbar(u).coeffs
    total = omega.coeffs + h
    lam = linalg.min_eigenvalue(total)
    worst = int(np.argmin(lam))
    margin = float(lam.flat[worst])
    if not margin > MARGIN_FLOOR:
        node = np.unravel_index(worst, omega.chart.shape)
        raise PositivityError(
            f"omega + ddbar(u) is not positive: minimum eigenvalue {margin:.3e} at node {node}",
            ScalarField.real(omega.chart, lam),
            node=node,
            margin=margin,
        )
    return h, lam


def ma_excess(omega: MetricField, u: ScalarField) -> ScalarField:
    """``det(g + ddbar u) / det(g) - 1`` evaluated without cancellation."""
    h, _ = _perturbed(omega, u)
    return ScalarField.real(omega.chart, linalg.relative_det_excess(omega.coeffs, h))


def ma_density(omega: MetricField, u: ScalarField) -> ScalarField:
    """Monge-Ampère density ``(omega + ddbar u)^n / omega^n``."""
    return ScalarField.real(omega.chart, 1.0 + ma_excess(omega, u).values)


def log_ma_density(omega: MetricField, u: ScalarField) -> ScalarField:
    return ScalarField.real(omega.chart, np.log1p(ma_excess(omega, u).values))


def metric_laplacian(g: MetricField, v: ScalarField) -> ScalarField:
    """``g^{a bbar} v_{a bbar}`` in the coefficient normalization of :func:`ddbar`."""
    g.chart.check_same(v.chart)
    h = ddbar(v, require_real=False).coeffs
    lap = linalg.trace_product(linalg.inv(g.coeffs), h)
    return ScalarField(g.chart, lap if not v.is_real else lap.real, v.parity)


def integrate(f: ScalarField, g: MetricField) -> float:
    """``int f omega_g^n`` with the chart's product quadrature.

    The measure is ``det(g) dV`` on the coordinate axes; the constant
    ``n!/pi^n`` relating it to ``omega^n`` is dropped throughout so that the
    flat identity metric integrates 1 to the coordinate volume.
    """
    if not f.is_real:
        raise FieldError("integrate needs a real field")
    g.chart.check_same(f.chart)
    w = f.chart.quadrature_weights
    return float(np.sum(f.values * g.determinant() * w))


def volume(g: MetricField) -> float:
    return float(np.sum(g.determinant() * g.chart.quadrature_weights))


def positivity_margin(h: Form11Field) -> ScalarField:
    """Per-node minimum eigenvalue; its global minimum is the margin."""
    return ScalarField.real(h.chart, linalg.min_eigenvalue(h.coeffs))


# -- curvature ------------------------------------------------------------


def _curvature_block(gc: np.ndarray, chart: GridChart, rows=None) -> tuple[np.ndarray, np.ndarray]:
    """Curvature components (component-major) and the metric on the output rows of a slab.

    ``gc`` holds metric coefficients on ``rows[1]`` (or the whole chart).  Only
    the components ``g_{i jbar}`` with ``i <= j`` are differentiated; the rest
    follow from Hermitian symmetry.
    """
    n = chart.n
    g_out = _restrict(gc, rows)
    ginv = linalg.inv(g_out)
    nodes = g_out.shape[:-2]
    dg = np.empty((n, n, n) + nodes, dtype=complex)  # dg[k, i, j] = d_k g_{i jbar}
    dgb = np.empty((n, n, n) + nodes, dtype=complex)  # dgb[l, i, j] = dbar_l g_{i jbar}
    hess = np.empty((n, n) + nodes + (n, n), dtype=complex)
    for i in range(n):
        for j in range(i, n):
            comp = np.ascontiguousarray(gc[..., i, j].real if i == j else gc[..., i, j])
            first, second = real_jet(comp, chart, rows)
            hess[i, j] = hessian_from_jet(second, n)
            for k in range(n):
                dg[k, i, j] = 0.5 * (first[2 * k] - 1j * first[2 * k + 1])
                dgb[k, i, j] = 0.5 * (first[2 * k] + 1j * first[2 * k + 1])
            if j != i:
                hess[j, i] = np.conj(np.swapaxes(hess[i, j], -1, -2))
                dg[:, j, i] = np.conj(dgb[:, i, j])
                dgb[:, j, i] = np.conj(dg[:, i, j])
    r = np.empty((n, n, n, n) + nodes, dtype=complex)
    for i in range(n):
        for j in range(n):
            for k in range(n):
                for l in range(n):
                    acc = -hess[i, j][..., k, l]
                    for p in range(n):
                        for q in range(n):
                            acc = acc + ginv[..., q, p] * dg[k, i, q] * dgb[l, p, j]
                    r[i, j, k, l] = acc
    return r, g_out


def _to_frame(t: np.ndarray, frame: np.ndarray, pos: int, conj: bool) -> np.ndarray:
    n = frame.shape[-1]
    moved = np.moveaxis(t, pos, 0)
    out = np.zeros_like(moved)
    for new in range(n):
        for old in range(n):
            coef = frame[..., old, new]
            out[new] += (np.conj(coef) if conj else coef) * moved[old]
    return np.moveaxis(out, 0, pos)


def _norm_sq(r: np.ndarray, g: np.ndarray) -> np.ndarray:
    """``sum |R|^2`` in a unitary frame of ``g``; ``r`` is component-major."""
    v = np.conj(linalg.whitening(g))
    for pos, conj in ((0, False), (1, True), (2, False), (3, True)):
        r = _to_frame(r, v, pos, conj)
    return np.sum(r.real**2 + r.imag**2, axis=(0, 1, 2, 3))


def _node_major(r: np.ndarray) -> np.ndarray:
    return np.moveaxis(r, (0, 1, 2, 3), (-4, -3, -2, -1))


def curvature_tensor(g: MetricField) -> CurvatureField:
    """Kähler curvature ``R_{i jbar k lbar}`` and its pointwise norm.

    ``R = -d_k dbar_l g_{i jbar} + g^{p qbar} d_k g_{i qbar} dbar_l g_{p jbar}``;
    the norm uses four inverse metrics, in the coefficient normalization.
    Memory grows like ``n^4`` per node; use :func:`curvature_norm` on large grids.
    """
    r, _ = _curvature_block(np.asarray(g.coeffs), g.chart)
    norm = ScalarField.real(g.chart, np.sqrt(_norm_sq(r, g.coeffs)))
    return CurvatureField(g.chart, _node_major(r), norm)


def curvature_norm(g: MetricField, max_nodes: int = SLAB_NODES) -> ScalarField:
    """Pointwise ``|R|_g``, chunked over radial slabs on large non-compact charts."""
    chart = g.chart
    if chart.axes[0].periodic or chart.size <= max_nodes:
        return curvature_tensor(g).norm
    out = np.empty(chart.shape)
    for out_rows, in_rows in radial_slabs(chart, max_nodes):
        r, g_out = _curvature_block(g.coeffs[in_rows], chart, rows=(out_rows, in_rows))
        out[out_rows] = np.sqrt(_norm_sq(r, g_out))
    return ScalarField.real(chart, out)


def potential_curvature_norm(
    potential: np.ndarray, chart: GridChart, max_nodes: int = SLAB_NODES // 4
) -> tuple[ScalarField, ScalarField]:
    """``|R|`` and the positivity margin of ``ddbar(potential)`` without storing the metric.

    Works slab by slab along the radial axis: the metric is formed on a slab
    widened by one stencil halo, the curvature on the slab itself.  Values
    agree exactly with the unchunked computation.
    """
    if chart.axes[0].periodic:
        g = MetricField(chart, complex_hessian(potential, chart))
        return curvature_norm(g), ScalarField.real(chart, g.min_eigenvalue)
    nr = chart.shape[0]
    halo = FD_STENCIL - 1
    norm = np.empty(chart.shape)
    margin = np.empty(chart.shape)
    for out_rows, mid_rows in radial_slabs(chart, max_nodes):
        in_rows = slice(max(0, mid_rows.start - halo), min(nr, mid_rows.stop + halo))
        gc = complex_hessian(potential[in_rows], chart, rows=(mid_rows, in_rows))
        gc = linalg.hermitian_part(gc)
        r, g_out = _curvature_block(gc, chart, rows=(out_rows, mid_rows))
        lam = linalg.min_eigenvalue(g_out)
        if not lam.min() > MARGIN_FLOOR:
            worst = np.unravel_index(int(np.argmin(lam)), lam.shape)
            node = (worst[0] + out_rows.start,) + tuple(worst[1:])
            raise DegenerateMetricError(
                f"metric is not positive definite at node {node}", node=node, margin=float(lam.min())
            )
        norm[out_rows] = np.sqrt(_norm_sq(r, g_out))
        margin[out_rows] = lam
    return ScalarField.real(chart, norm), ScalarField.real(chart, margin)


def closedness_defect(h: Form11Field, margin: int = FD_STENCIL // 2) -> float:
    """Relative size of ``d_k h_{i jbar} - d_i h_{k jbar}`` (zero for a closed form).

    Nodes within ``margin`` of the end of a bounded axis are skipped: their
    one-sided stencils carry weights large enough that rounding, not the form,
    dominates the third derivatives there.  The residual is scaled by the
    largest first derivative of any coefficient.
    """
    n, chart = h.n, h.chart
    if n == 1:
        return 0.0
    inner = tuple(slice(None) if ax.periodic else slice(margin, ax.size - margin) for ax in chart.axes)
    worst = 0.0
    scale = 1e-300
    for j in range(n):
        for i in range(n):
            for k in range(i + 1, n):
                a = dz(np.ascontiguousarray(h.coeffs[..., i, j]), chart, k)[inner]
                b = dz(np.ascontiguousarray(h.coeffs[..., k, j]), chart, i)[inner]
                scale = max(scale, float(np.max(np.abs(a))), float(np.max(np.abs(b))))
                worst = max(worst, float(np.max(np.abs(a - b))))
    return worst / scale
