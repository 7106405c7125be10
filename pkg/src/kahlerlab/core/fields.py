"""Sampled fields on a chart.

Coefficient convention: a :class:`Form11Field` with coefficients ``h`` stands
for the form ``(sqrt(-1)/2pi) sum h_{a b} dz^a ^ dzbar^b``.  The Riemannian
metric of a positive form is ``METRIC_TENSOR_SCALE * Re(h_{ab} dz^a dzbar^b)``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import linalg
from .charts import GridChart

__all__ = [
    "METRIC_TENSOR_SCALE",
    "MARGIN_FLOOR",
    "FieldError",
    "DegenerateMetricError",
    "ScalarField",
    "Form11Field",
    "MetricField",
    "CurvatureField",
    "write_field",
    "read_field",
]

METRIC_TENSOR_SCALE = 1.0 / np.pi
MARGIN_FLOOR = 1e-10


class FieldError(ValueError):
    pass


class DegenerateMetricError(FieldError):
    """A metric failed positive definiteness; carries the worst node."""

    def __init__(self, message: str, node=None, margin=None):
        super().__init__(message)
        self.node = node
        self.margin = margin


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class ScalarField:
    chart: GridChart
    values: np.ndarray
    parity: str = "real"

    def __post_init__(self):
        if self.parity not in ("real", "complex"):
            raise FieldError(f"unknown parity {self.parity!r}")
        vals = np.asarray(self.values)
        if vals.shape != self.chart.shape:
            try:
                vals = np.broadcast_to(vals, self.chart.shape)
            except ValueError:
                raise FieldError(
                    f"field has shape {vals.shape}, chart has {self.chart.shape}"
                ) from None
        if self.parity == "real":
            if np.iscomplexobj(vals):
                if np.any(vals.imag != 0):
                    raise FieldError("real-tagged field has non-zero imaginary part")
                vals = vals.real
            vals = np.array(vals, dtype=float)
        else:
            vals = np.array(vals, dtype=complex)
        object.__setattr__(self, "values", _frozen(vals))

    @classmethod
    def real(cls, chart: GridChart, values) -> "ScalarField":
        return cls(chart, values, "real")

    @classmethod
    def complex(cls, chart: GridChart, values) -> "ScalarField":
        return cls(chart, values, "complex")

    @classmethod
    def constant(cls, chart: GridChart, value: float = 0.0) -> "ScalarField":
        return cls(chart, np.full(chart.shape, value, dtype=float))

    @property
    def is_real(self) -> bool:
        return self.parity == "real"

    def with_values(self, values) -> "ScalarField":
        parity = "complex" if np.iscomplexobj(values) and np.any(np.imag(values) != 0) else "real"
        return ScalarField(self.chart, np.real_if_close(values) if parity == "real" else values, parity)

    def __add__(self, other):
        return self.with_values(self.values + _vals(other, self.chart))

    __radd__ = __add__

    def __sub__(self, other):
        return self.with_values(self.values - _vals(other, self.chart))

    def __rsub__(self, other):
        return self.with_values(_vals(other, self.chart) - self.values)

    def __mul__(self, other):
        return self.with_values(self.values * _vals(other, self.chart))

    __rmul__ = __mul__

    def __neg__(self):
        return self.with_values(-self.values)

    def sup(self) -> float:
        return float(np.max(np.abs(self.values)))


def _vals(other, chart):
    if isinstance(other, ScalarField):
        chart.check_same(other.chart)
        return other.values
    return other


@dataclass(frozen=True, eq=False)
class Form11Field:
    """Per-node ``(n, n)`` complex coefficient matrices of a (1,1)-form."""

    chart: GridChart
    coeffs: np.ndarray
    hermitian: bool = True
    diagnostics: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=complex)
        n = self.chart.n
        expected = self.chart.shape + (n, n)
        if c.shape != expected:
            try:
                c = np.broadcast_to(c, expected)
            except ValueError:
                raise FieldError(f"coefficients have shape {c.shape}, expected {expected}") from None
        c = linalg.hermitian_part(c) if self.hermitian else np.array(c)
        object.__setattr__(self, "coeffs", _frozen(np.ascontiguousarray(c)))

    @property
    def n(self) -> int:
        return self.chart.n

    def component(self, a: int, b: int) -> np.ndarray:
        return self.coeffs[..., a, b]

    def hermitian_defect(self) -> float:
        c = self.coeffs
        return float(np.max(np.abs(c - np.conj(np.swapaxes(c, -1, -2)))))

    def determinant(self) -> np.ndarray:
        return linalg.det(self.coeffs)

    def trace(self) -> np.ndarray:
        return np.einsum("...aa->...", self.coeffs).real

    def eigenvalues(self) -> np.ndarray:
        return linalg.eigenvalues(self.coeffs)

    def __add__(self, other: "Form11Field") -> "Form11Field":
        self.chart.check_same(other.chart)
        return Form11Field(self.chart, self.coeffs + other.coeffs, self.hermitian and other.hermitian)

    def __sub__(self, other: "Form11Field") -> "Form11Field":
        self.chart.check_same(other.chart)
        return Form11Field(self.chart, self.coeffs - other.coeffs, self.hermitian and other.hermitian)

    def scaled(self, factor) -> "Form11Field":
        f = np.asarray(factor)
        if f.ndim:
            f = f[..., None, None]
        return Form11Field(self.chart, self.coeffs * f, self.hermitian)

    def as_metric(self) -> "MetricField":
        return MetricField(self.chart, self.coeffs)

    def to_z_frame(self) -> "Form11Field":
        """Re-express log-polar (``w = log z_1``) coefficients in the ``z_1`` frame."""
        if not self.chart.is_log_polar:
            return self
        z1 = self.chart.full(self.chart.section())
        jac = np.ones(self.chart.shape + (self.n,), dtype=complex)
        jac[..., 0] = 1.0 / z1
        c = self.coeffs * jac[..., :, None] * np.conj(jac[..., None, :])
        return Form11Field(self.chart, c, self.hermitian)


def _z_frame_coeffs(chart: GridChart, coeffs: np.ndarray) -> np.ndarray:
    """Coefficients in the ``z_1`` frame on log-polar charts (unchanged elsewhere)."""
    if not chart.is_log_polar:
        return coeffs
    inv_r = chart.full(1.0 / chart.radius())
    scale = np.ones(chart.shape + (chart.n,))
    scale[..., 0] = inv_r
    return coeffs * scale[..., :, None] * scale[..., None, :]


class MetricField(Form11Field):
    """A positive definite Form11Field; the minimum eigenvalue is cached.

    On log-polar charts the eigenvalues are those of the ``z_1``-frame
    coefficients, so the positivity floor refers to the metric itself rather
    than to its ``w = log z_1`` representation.
    """

    def __init__(self, chart: GridChart, coeffs, floor: float = MARGIN_FLOOR):
        super().__init__(chart, coeffs, True)
        lam = linalg.min_eigenvalue(_z_frame_coeffs(chart, self.coeffs))
        object.__setattr__(self, "min_eigenvalue", _frozen(lam))
        worst = int(np.argmin(lam))
        margin = float(lam.flat[worst])
        if not margin > floor:
            node = np.unravel_index(worst, chart.shape)
            raise DegenerateMetricError(
                f"metric is not positive definite: minimum eigenvalue {margin:.3e} at node {node}",
                node=node,
                margin=margin,
            )

    @property
    def margin(self) -> float:
        return float(self.min_eigenvalue.min())

    @classmethod
    def identity(cls, chart: GridChart, scale: float = 1.0) -> "MetricField":
        return cls(chart, scale * np.eye(chart.n, dtype=complex))


@dataclass(frozen=True, eq=False)
class CurvatureField:
    """Components ``R[a, b, c, d] = R_{a bbar c dbar}`` per node and the pointwise norm."""

    chart: GridChart
    components: np.ndarray
    norm: ScalarField

    def symmetry_defect(self) -> float:
        r = self.components
        d1 = np.abs(r - np.swapaxes(r, -4, -2))  # R_{i j k l} = R_{k j i l}
        d2 = np.abs(r - np.swapaxes(r, -3, -1))  # R_{i j k l} = R_{i l k j}
        conj = np.conj(np.transpose(r, tuple(range(r.ndim - 4)) + (r.ndim - 3, r.ndim - 4, r.ndim - 1, r.ndim - 2)))
        d3 = np.abs(r - conj)
        scale = max(float(np.max(np.abs(r))), 1e-300)
        return float(max(d1.max(), d2.max(), d3.max()) / scale)

    def ricci_trace(self, g: MetricField) -> np.ndarray:
        """``g^{a bbar} R_{a bbar c dbar}`` as per-node ``(n, n)`` matrices."""
        ginv = linalg.inv(g.coeffs)
        return np.einsum("...ba,...abcd->...cd", ginv, self.components)


# -- serialization --------------------------------------------------------


def _header(fld) -> dict:
    head = fld.chart.to_dict()
    if isinstance(fld, ScalarField):
        head.update(field="scalar", parity=fld.parity)
    elif isinstance(fld, MetricField):
        head.update(field="metric", parity="complex")
    elif isinstance(fld, Form11Field):
        head.update(field="form11", parity="complex", hermitian=fld.hermitian)
    else:
        raise FieldError(f"cannot serialize {type(fld).__name__}")
    return head


def write_field(path, fld) -> None:
    """Write a JSON header line followed by little-endian float64 data in row-major order."""
    head = _header(fld)
    data = fld.values if isinstance(fld, ScalarField) else fld.coeffs
    if np.iscomplexobj(data):
        data = np.stack([data.real, data.imag], axis=-1)
    raw = np.ascontiguousarray(data, dtype="<f8").tobytes()
    with open(Path(path), "wb") as fh:
        fh.write(json.dumps(head, sort_keys=True).encode() + b"\n")
        fh.write(raw)


def read_field(path):
    with open(Path(path), "rb") as fh:
        head = json.loads(fh.readline())
        raw = fh.read()
    chart = GridChart.from_dict(head)
    data = np.frombuffer(raw, dtype="<f8")
    kind = head["field"]
    if kind == "scalar":
        if head["parity"] == "complex":
            arr = data.reshape(chart.shape + (2,))
            return ScalarField.complex(chart, arr[..., 0] + 1j * arr[..., 1])
        return ScalarField.real(chart, data.reshape(chart.shape).copy())
    arr = data.reshape(chart.shape + (chart.n, chart.n, 2))
    coeffs = arr[..., 0] + 1j * arr[..., 1]
    if kind == "metric":
        return MetricField(chart, coeffs)
    return Form11Field(chart, coeffs, head.get("hermitian", True))
