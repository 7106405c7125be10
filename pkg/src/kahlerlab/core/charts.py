"""Discretized coordinate charts.

A chart is a uniform tensor grid over ``2n`` real axes, grouped in pairs
``(a_j, b_j)`` that carry the holomorphic coordinate ``z_j = a_j + i b_j``.
Periodic axes are differentiated spectrally; bounded axes use high-order
finite differences.

On log-polar charts the first pair is ``(s, theta)`` with ``s = log|z_1|``, so
the native holomorphic coordinate is ``w = log z_1`` and every stored
coefficient on such a chart is expressed in the ``w`` frame.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

__all__ = [
    "Axis",
    "GridChart",
    "ChartError",
    "fornberg_weights",
    "fd_matrix",
    "gregory_weights",
    "MIN_RESOLUTION",
]

MIN_RESOLUTION = 8
FD_STENCIL = 9

CHART_KINDS = ("torus", "annulus", "product", "patch")


class ChartError(ValueError):
    """Raised for invalid chart geometry or mismatched charts."""


def fornberg_weights(z: float, x: np.ndarray, m: int) -> np.ndarray:
    """Finite-difference weights at ``z`` for derivatives ``0..m`` on nodes ``x``.

    Returns an array of shape ``(len(x), m + 1)``; column ``k`` holds the
    weights of the ``k``-th derivative.  Fornberg's recursion.
    """
    x = np.asarray(x, dtype=float)
    npts = x.size
    c = np.zeros((npts, m + 1))
    c1 = 1.0
    c4 = x[0] - z
    c[0, 0] = 1.0
    for i in range(1, npts):
        mn = min(i, m)
        c2 = 1.0
        c5 = c4
        c4 = x[i] - z
        for j in range(i):
            c3 = x[i] - x[j]
            c2 *= c3
            if j == i - 1:
                for k in range(mn, 0, -1):
                    c[i, k] = c1 * (k * c[i - 1, k - 1] - c5 * c[i - 1, k]) / c2
                c[i, 0] = -c1 * c5 * c[i - 1, 0] / c2
            for k in range(mn, 0, -1):
                c[j, k] = (c4 * c[j, k] - k * c[j, k - 1]) / c3
            c[j, 0] = c4 * c[j, 0] / c3
        c1 = c2
    return c


def fd_matrix(x: np.ndarray, order: int, width: int = FD_STENCIL) -> np.ndarray:
    """Dense differentiation matrix on the nodes ``x``.

    Interior rows use centred stencils of ``width`` points; rows near the ends
    shift the stencil inward (one-sided), keeping the width fixed.
    """
    x = np.asarray(x, dtype=float)
    npts = x.size
    width = min(width, npts)
    half = width // 2
    mat = np.zeros((npts, npts))
    for i in range(npts):
        lo = min(max(i - half, 0), npts - width)
        idx = np.arange(lo, lo + width)
        mat[i, idx] = fornberg_weights(x[i], x[idx], order)[:, order]
    return mat


def gregory_weights(npts: int, h: float) -> np.ndarray:
    """Fourth-order end-corrected trapezoid weights on a uniform grid."""
    if npts < 8:
        w = np.full(npts, h)
        w[0] = w[-1] = 0.5 * h
        return w
    w = np.ones(npts)
    w[:3] = w[-3:][::-1] = [3.0 / 8.0, 7.0 / 6.0, 23.0 / 24.0]
    return h * w


@dataclass(frozen=True)
class Axis:
    """One real axis of a chart."""

    name: str
    size: int
    lo: float
    hi: float
    periodic: bool

    @cached_property
    def nodes(self) -> np.ndarray:
        if self.periodic:
            return self.lo + (self.hi - self.lo) * np.arange(self.size) / self.size
        return np.linspace(self.lo, self.hi, self.size)

    @property
    def spacing(self) -> float:
        if self.periodic:
            return (self.hi - self.lo) / self.size
        return (self.hi - self.lo) / (self.size - 1)

    @cached_property
    def weights(self) -> np.ndarray:
        if self.periodic:
            return np.full(self.size, self.spacing)
        return gregory_weights(self.size, self.spacing)

    @cached_property
    def wavenumbers(self) -> np.ndarray:
        """Angular wavenumbers ``i k`` with the Nyquist mode zeroed (periodic axes)."""
        k = 2.0 * np.pi * np.fft.fftfreq(self.size, d=self.spacing)
        if self.size % 2 == 0:
            k[self.size // 2] = 0.0
        return 1j * k

    @cached_property
    def rwavenumbers(self) -> np.ndarray:
        k = 2.0 * np.pi * np.fft.rfftfreq(self.size, d=self.spacing)
        if self.size % 2 == 0:
            k[-1] = 0.0
        return 1j * k

    @cached_property
    def d1(self) -> np.ndarray:
        return fd_matrix(self.nodes, 1)

    @cached_property
    def d2(self) -> np.ndarray:
        # The square of d1 rather than a native second-derivative stencil, so that
        # all discrete derivatives commute and ddbar-exact forms are exactly closed.
        return self.d1 @ self.d1

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "size": self.size,
            "lo": self.lo,
            "hi": self.hi,
            "periodic": self.periodic,
        }


@dataclass(frozen=True)
class GridChart:
    """A discretized coordinate chart of complex dimension ``n``.

    Use the constructors :meth:`torus`, :meth:`annulus`, :meth:`product` and
    :meth:`patch` rather than building axes by hand.
    """

    kind: str
    n: int
    axes: tuple[Axis, ...]
    geometry: dict = field(default_factory=dict, compare=False, hash=False)

    def __post_init__(self):
        if self.kind not in CHART_KINDS:
            raise ChartError(f"unknown chart kind {self.kind!r}")
        if self.n < 1:
            raise ChartError("complex dimension must be positive")
        if len(self.axes) != 2 * self.n:
            raise ChartError(
                f"chart of complex dimension {self.n} needs {2 * self.n} real axes, "
                f"got {len(self.axes)}"
            )
        for ax in self.axes:
            if ax.size < MIN_RESOLUTION:
                raise ChartError(
                    f"axis {ax.name!r} has {ax.size} nodes; at least {MIN_RESOLUTION} required"
                )
            if not ax.hi > ax.lo:
                raise ChartError(f"axis {ax.name!r} has empty extent")
        if self.is_log_polar:
            r_max = float(np.exp(self.axes[0].hi))
            if not r_max < 1.0:
                raise ChartError(f"r_max = {r_max} must lie strictly below 1")

    # -- constructors -----------------------------------------------------

    @classmethod
    def torus(cls, n: int, resolution: int | Sequence[int], periods: float | Sequence[float] = 1.0):
        res = _expand(resolution, 2 * n, "resolution")
        per = _expand(periods, 2 * n, "periods")
        axes = []
        for j in range(n):
            axes.append(Axis(f"x{j + 1}", int(res[2 * j]), 0.0, float(per[2 * j]), True))
            axes.append(Axis(f"y{j + 1}", int(res[2 * j + 1]), 0.0, float(per[2 * j + 1]), True))
        return cls("torus", n, tuple(axes), {"periods": [float(p) for p in per]})

    @classmethod
    def annulus(cls, resolution: Sequence[int], r_min: float, r_max: float):
        nr, nt = (int(v) for v in resolution)
        _check_radii(r_min, r_max)
        axes = (
            Axis("s", nr, float(np.log(r_min)), float(np.log(r_max)), False),
            Axis("theta", nt, 0.0, 2.0 * np.pi, True),
        )
        return cls("annulus", 1, axes, {"r_min": float(r_min), "r_max": float(r_max)})

    @classmethod
    def product(
        cls,
        n: int,
        resolution: Sequence[int],
        r_min: float,
        r_max: float,
        fiber: str = "patch",
        fiber_extent: float = 0.5,
    ):
        """Log-polar disc transverse to the divisor times an ``(n-1)``-dimensional fiber.

        ``fiber="torus"`` makes the fiber axes periodic with period ``fiber_extent``;
        ``fiber="patch"`` makes them bounded intervals ``[-fiber_extent, fiber_extent]``.
        """
        if n < 2:
            raise ChartError("product charts need n >= 2; use annulus for n = 1")
        res = [int(v) for v in resolution]
        if len(res) == 3:
            res = [res[0], res[1]] + [res[2]] * (2 * (n - 1))
        if len(res) != 2 * n:
            raise ChartError(f"product chart needs {2 * n} resolutions, got {len(res)}")
        _check_radii(r_min, r_max)
        if fiber not in ("patch", "torus"):
            raise ChartError(f"unknown fiber kind {fiber!r}")
        axes = [
            Axis("s", res[0], float(np.log(r_min)), float(np.log(r_max)), False),
            Axis("theta", res[1], 0.0, 2.0 * np.pi, True),
        ]
        for j in range(1, n):
            for part, size in zip("xy", res[2 * j : 2 * j + 2]):
                if fiber == "torus":
                    axes.append(Axis(f"{part}{j + 1}", size, 0.0, float(fiber_extent), True))
                else:
                    axes.append(
                        Axis(f"{part}{j + 1}", size, -float(fiber_extent), float(fiber_extent), False)
                    )
        geometry = {
            "r_min": float(r_min),
            "r_max": float(r_max),
            "fiber": fiber,
            "fiber_extent": float(fiber_extent),
        }
        return cls("product", n, tuple(axes), geometry)

    @classmethod
    def patch(cls, n: int, resolution: int | Sequence[int], half_width: float = 0.5, center=0.0):
        res = _expand(resolution, 2 * n, "resolution")
        ctr = np.broadcast_to(np.asarray(center, dtype=complex), (n,))
        axes = []
        for j in range(n):
            c = ctr[j]
            axes.append(Axis(f"x{j + 1}", int(res[2 * j]), c.real - half_width, c.real + half_width, False))
            axes.append(Axis(f"y{j + 1}", int(res[2 * j + 1]), c.imag - half_width, c.imag + half_width, False))
        geometry = {"half_width": float(half_width), "center": [[float(c.real), float(c.imag)] for c in ctr]}
        return cls("patch", n, tuple(axes), geometry)

    @classmethod
    def from_dict(cls, data: dict) -> "GridChart":
        kind = data["kind"]
        geo = data.get("geometry", {})
        res = data["resolution"]
        n = int(data["n"])
        if kind == "torus":
            return cls.torus(n, res, geo.get("periods", 1.0))
        if kind == "annulus":
            return cls.annulus(res, geo["r_min"], geo["r_max"])
        if kind == "product":
            return cls.product(
                n, res, geo["r_min"], geo["r_max"], geo.get("fiber", "patch"), geo.get("fiber_extent", 0.5)
            )
        if kind == "patch":
            center = [complex(a, b) for a, b in geo.get("center", [[0.0, 0.0]] * n)]
            return cls.patch(n, res, geo.get("half_width", 0.5), center)
        raise ChartError(f"unknown chart kind {kind!r}")

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "n": self.n,
            "resolution": list(self.shape),
            "geometry": dict(self.geometry),
        }

    # -- grid data --------------------------------------------------------

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(ax.size for ax in self.axes)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def real_dim(self) -> int:
        return len(self.axes)

    @property
    def is_log_polar(self) -> bool:
        return self.kind in ("annulus", "product")

    @property
    def is_compact(self) -> bool:
        return all(ax.periodic for ax in self.axes)

    def axis_values(self, a: int) -> np.ndarray:
        """Node values of real axis ``a`` shaped to broadcast against the grid."""
        shape = [1] * self.real_dim
        shape[a] = self.axes[a].size
        return self.axes[a].nodes.reshape(shape)

    def coordinate(self, j: int) -> np.ndarray:
        """Native holomorphic coordinate ``j`` (broadcastable array)."""
        return self.axis_values(2 * j) + 1j * self.axis_values(2 * j + 1)

    def full(self, arr) -> np.ndarray:
        return np.broadcast_to(arr, self.shape)

    def radius(self) -> np.ndarray:
        """``|z_1|`` on log-polar charts (broadcastable along the radial axis)."""
        self._require_log_polar()
        return np.exp(self.axis_values(0))

    def section(self) -> np.ndarray:
        """The defining section ``z_1 = exp(w)`` in the standard trivialization."""
        self._require_log_polar()
        return np.exp(self.axis_values(0) + 1j * self.axis_values(1))

    def fiber_coordinates(self) -> list[np.ndarray]:
        """Fiber coordinates ``z_2..z_n`` of a product chart."""
        return [self.coordinate(j) for j in range(1, self.n)]

    @cached_property
    def quadrature_weights(self) -> np.ndarray:
        """Tensor-product quadrature weights for the coordinate Lebesgue measure."""
        w = np.ones(self.shape)
        for a, ax in enumerate(self.axes):
            shape = [1] * self.real_dim
            shape[a] = ax.size
            w = w * ax.weights.reshape(shape)
        return w

    @property
    def coordinate_volume(self) -> float:
        return float(np.prod([ax.weights.sum() for ax in self.axes]))

    def radial_window(self, fraction: float = 0.5, margin: int = FD_STENCIL - 1) -> np.ndarray:
        """Indices of the inner ``fraction`` of the radial axis in ``-log r``.

        The outermost ``margin`` nodes at each end are excluded so the window
        stays strictly inside the chart (away from one-sided stencils).
        """
        self._require_log_polar()
        s = self.axes[0].nodes
        t = -s
        cut = t.min() + (1.0 - fraction) * (t.max() - t.min())
        idx = np.nonzero(t >= cut - 1e-12)[0]
        lo, hi = margin, s.size - margin
        idx = idx[(idx >= lo) & (idx < hi)]
        if idx.size < 4:
            raise ChartError("radial window too small for fitting")
        return idx

    def _require_log_polar(self):
        if not self.is_log_polar:
            raise ChartError(f"operation needs a log-polar chart, got {self.kind!r}")

    def check_same(self, other: "GridChart"):
        if other is self:
            return
        if self.kind != other.kind or self.n != other.n or self.axes != other.axes:
            raise ChartError("fields live on different charts")


def _expand(value, count: int, label: str) -> list:
    arr = np.atleast_1d(np.asarray(value))
    if arr.size == 1:
        return [arr.item()] * count
    if arr.size != count:
        raise ChartError(f"{label} must have 1 or {count} entries, got {arr.size}")
    return arr.tolist()


def _check_radii(r_min: float, r_max: float):
    if not 0.0 < r_min < r_max < 1.0:
        raise ChartError(f"radial window must satisfy 0 < r_min < r_max < 1, got ({r_min}, {r_max})")
