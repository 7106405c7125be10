"""Differentiation on chart grids.

Periodic axes: trigonometric (FFT) differentiation with the Nyquist mode of
odd derivatives removed; second derivatives along a periodic axis are the
square of the first-derivative multiplier so that discrete integration by
parts is exact.  Bounded axes: 9-point finite differences.
"""

from __future__ import annotations

import numpy as np

from .charts import FD_STENCIL, GridChart

__all__ = [
    "derivative",
    "dz",
    "dzbar",
    "complex_hessian",
    "real_jet",
    "hessian_from_jet",
    "radial_slabs",
    "spectral_tail",
    "torus_multipliers",
    "hessian_symbols",
]


def _fd_apply(mat: np.ndarray, values: np.ndarray, axis: int) -> np.ndarray:
    moved = np.moveaxis(values, axis, -1)
    out = moved @ mat.T
    return np.moveaxis(out, -1, axis)


def _fd_apply_rows(mat: np.ndarray, values: np.ndarray, rows: slice, cols: slice) -> np.ndarray:
    """Apply rows ``rows`` of ``mat`` to a slab of ``values`` holding columns ``cols`` on axis 0."""
    sub = mat[rows, cols]
    return np.tensordot(sub, values, axes=([1], [0]))


def _spectral(values: np.ndarray, mult: np.ndarray, axis: int, real: bool, n: int) -> np.ndarray:
    shape = [1] * values.ndim
    shape[axis] = mult.size
    mult = mult.reshape(shape)
    if real:
        spec = np.fft.rfft(values, axis=axis)
        return np.fft.irfft(spec * mult, n=n, axis=axis)
    spec = np.fft.fft(values, axis=axis)
    return np.fft.ifft(spec * mult, axis=axis)


def derivative(values: np.ndarray, chart: GridChart, axis: int, order: int = 1, rows=None) -> np.ndarray:
    """Partial derivative of nodal ``values`` along real ``axis``.

    ``rows`` = ``(out_rows, in_rows)`` slices restrict an axis-0 finite-difference
    derivative to a radial slab; ``values`` then holds only ``in_rows``.
    """
    ax = chart.axes[axis]
    real = not np.iscomplexobj(values)
    if ax.periodic:
        mult = ax.rwavenumbers if real else ax.wavenumbers
        return _spectral(values, mult**order, axis, real, ax.size)
    mat = ax.d1 if order == 1 else ax.d2 if order == 2 else np.linalg.matrix_power(ax.d1, order)
    if rows is not None:
        if axis != 0:
            raise ValueError("row slabs are only supported on axis 0")
        return _fd_apply_rows(mat, values, rows[0], rows[1])
    return _fd_apply(mat, values, axis)


def _restrict(values: np.ndarray, rows) -> np.ndarray:
    """Select output rows from slab data for derivatives that are local along axis 0."""
    if rows is None:
        return values
    out_rows, in_rows = rows
    start = out_rows.start - in_rows.start
    return values[start : start + (out_rows.stop - out_rows.start)]


def _first(values, chart, a, rows):
    if a == 0:
        return derivative(values, chart, 0, 1, rows=rows)
    return _restrict(derivative(values, chart, a, 1), rows)


def dz(values: np.ndarray, chart: GridChart, j: int, rows=None) -> np.ndarray:
    """``d/dz_j = (d/da_j - i d/db_j) / 2``."""
    return 0.5 * (_first(values, chart, 2 * j, rows) - 1j * _first(values, chart, 2 * j + 1, rows))


def dzbar(values: np.ndarray, chart: GridChart, j: int, rows=None) -> np.ndarray:
    return 0.5 * (_first(values, chart, 2 * j, rows) + 1j * _first(values, chart, 2 * j + 1, rows))


SLAB_NODES = 1 << 20


def radial_slabs(chart: GridChart, max_nodes: int = SLAB_NODES):
    """Yield ``(out_rows, in_rows)`` slab pairs covering axis 0 of a bounded-radial chart.

    ``in_rows`` extends ``out_rows`` by the finite-difference halo so that the
    restricted derivatives agree exactly with the full-grid ones.
    """
    nr = chart.shape[0]
    per_row = chart.size // nr
    block = max(1, max_nodes // per_row)
    halo = FD_STENCIL - 1
    for i0 in range(0, nr, block):
        i1 = min(nr, i0 + block)
        yield slice(i0, i1), slice(max(0, i0 - halo), min(nr, i1 + halo))


def real_jet(values: np.ndarray, chart: GridChart, rows=None) -> tuple[list, dict]:
    """First and second real partial derivatives on the output rows.

    Returns ``(first, second)`` where ``first[a]`` is ``d values / dx_a`` and
    ``second[p, q]`` (``p <= q``) the mixed second derivative.
    """
    d = chart.real_dim
    full = {a: derivative(values, chart, a, 1) for a in range(1, d)}
    first = [derivative(values, chart, 0, 1, rows=rows)] + [_restrict(full[a], rows) for a in range(1, d)]
    second = {}
    for p in range(d):
        for q in range(p, d):
            if p == q:
                val = derivative(values, chart, p, 2, rows=rows if p == 0 else None)
                second[p, q] = val if p == 0 else _restrict(val, rows)
            elif p == 0:
                second[p, q] = derivative(full[q], chart, 0, 1, rows=rows)
            else:
                second[p, q] = _restrict(derivative(full[p], chart, q, 1), rows)
    return first, second


def hessian_from_jet(second: dict, n: int) -> np.ndarray:
    """Assemble ``d^2 / dz_a dzbar_b`` from real second derivatives."""

    def s(p, q):
        return second[(p, q) if p <= q else (q, p)]

    hess = np.empty(second[0, 0].shape + (n, n), dtype=complex)
    for a in range(n):
        xa, ya = 2 * a, 2 * a + 1
        for b in range(n):
            xb, yb = 2 * b, 2 * b + 1
            re = s(xa, xb) + s(ya, yb)
            im = s(xa, yb) - s(ya, xb)
            hess[..., a, b] = 0.25 * (re + 1j * im)
    return hess


def complex_hessian(values: np.ndarray, chart: GridChart, rows=None) -> np.ndarray:
    """Coefficients ``d^2 values / dz_a dzbar_b`` stacked in trailing ``(n, n)`` axes."""
    n = chart.n
    if rows is None and chart.is_compact and not np.iscomplexobj(values):
        return _torus_hessian(values, chart)
    if rows is None and not chart.axes[0].periodic and chart.size > SLAB_NODES:
        out = np.empty(chart.shape + (n, n), dtype=complex)
        for out_rows, in_rows in radial_slabs(chart):
            out[out_rows] = complex_hessian(values[in_rows], chart, rows=(out_rows, in_rows))
        return out
    _, second = real_jet(values, chart, rows)
    return hessian_from_jet(second, n)


def torus_multipliers(chart: GridChart) -> list[np.ndarray]:
    """Broadcastable ``i k`` multipliers for an ``rfftn`` over all axes of a compact chart."""
    d = chart.real_dim
    mult = []
    for a, ax in enumerate(chart.axes):
        k = ax.rwavenumbers if a == d - 1 else ax.wavenumbers
        sh = [1] * d
        sh[a] = k.size
        mult.append(k.reshape(sh))
    return mult


def hessian_symbols(mult: list[np.ndarray], n: int) -> dict:
    """Fourier symbols of ``Re`` and ``Im`` of ``d^2 / dz_a dzbar_b`` for ``a <= b``."""
    sym = {}
    for a in range(n):
        xa, ya = mult[2 * a], mult[2 * a + 1]
        for b in range(a, n):
            xb, yb = mult[2 * b], mult[2 * b + 1]
            re = 0.25 * (xa * xb + ya * yb)
            im = 0.25 * (xa * yb - ya * xb) if a != b else None
            sym[a, b] = (re, im)
    return sym


def _torus_hessian(values: np.ndarray, chart: GridChart) -> np.ndarray:
    n = chart.n
    shape = chart.shape
    axes = tuple(range(chart.real_dim))
    spec = np.fft.rfftn(values, axes=axes)
    sym = hessian_symbols(torus_multipliers(chart), n)
    hess = np.empty(shape + (n, n), dtype=complex)
    for (a, b), (re_sym, im_sym) in sym.items():
        re = np.fft.irfftn(spec * re_sym, s=shape, axes=axes)
        if im_sym is None:
            hess[..., a, a] = re
            continue
        im = np.fft.irfftn(spec * im_sym, s=shape, axes=axes)
        hess[..., a, b] = re + 1j * im
        hess[..., b, a] = re - 1j * im
    return hess


def spectral_tail(values: np.ndarray, chart: GridChart) -> float:
    """Fraction of spectral energy in the top quarter of modes along periodic axes.

    Returns 0 when the chart has no periodic axis.  Large values mean the
    field is under-resolved.
    """
    periodic = [a for a, ax in enumerate(chart.axes) if ax.periodic]
    if not periodic:
        return 0.0
    spec = np.abs(np.fft.fftn(values, axes=periodic)) ** 2
    total = spec.sum()
    if total == 0.0:
        return 0.0
    mask = np.zeros(spec.shape, dtype=bool)
    for a in periodic:
        ax = chart.axes[a]
        k = np.abs(np.fft.fftfreq(ax.size)) * ax.size
        sh = [1] * values.ndim
        sh[a] = ax.size
        mask |= (k >= 3 * ax.size / 8).reshape(sh)
    return float(spec[mask].sum() / total)
