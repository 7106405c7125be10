"""Explicit model metrics near a divisor.

On a log-polar chart the divisor is ``{z_1 = 0}``; coefficients are stored in
the frame of ``w = log z_1`` (see :meth:`Form11Field.to_z_frame`).  The section
``S = z_1`` has norm ``|S|^2 = |z_1|^2 e^{-psi}`` with ``psi`` a weight on the
fiber, and the rescaled norm ``|S|_phi = e^{-phi/2} |S|``.  Throughout,
``L = -log |S|_phi^2``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from math import comb

import numpy as np

from ..core import linalg
from ..core.calculus import complex_hessian, dz
from ..core.charts import GridChart
from ..core.fields import FieldError, Form11Field, MetricField, ScalarField

__all__ = [
    "ModelError",
    "ModelPositivityError",
    "FiberWeight",
    "DivisorModel",
    "LogTerm",
    "LogExpansion",
    "model_constant",
    "model_potential",
    "omega_phi",
    "omega_phi_semiample",
    "semiample_expansion",
    "eta_phi",
    "mixed_discriminant",
    "top_power_defect",
    "f_phi",
    "evaluate_expansion",
    "euclidean_reference",
]


class ModelError(FieldError):
    pass


class ModelPositivityError(ModelError):
    """The model form is not positive on the chart; ``delta`` is the largest admissible radius."""

    def __init__(self, message: str, delta: float | None, radial_margin: np.ndarray):
        super().__init__(message)
        self.delta = delta
        self.radial_margin = radial_margin


@dataclass(frozen=True)
class FiberWeight:
    """Closed-form weight ``psi`` on the fiber coordinates ``z' = (z_2, ..., z_n)``.

    ``kind`` is ``"flat"`` (``psi = 0``), ``"quadratic"`` (``lam |z'|^2``) or
    ``"fubini-study"`` (``lam log(1 + |z'|^2)``).
    """

    kind: str = "flat"
    lam: float = 1.0

    def __post_init__(self):
        if self.kind not in ("flat", "quadratic", "fubini-study"):
            raise ModelError(f"unknown fiber weight {self.kind!r}")
        if self.kind != "flat" and not self.lam > 0:
            raise ModelError("weight scale must be positive")

    def _rho(self, chart: GridChart):
        rho = 0.0
        for zj in chart.fiber_coordinates():
            rho = rho + np.abs(zj) ** 2
        return rho

    def psi(self, chart: GridChart):
        if self.kind == "flat" or chart.n == 1:
            return 0.0
        rho = self._rho(chart)
        if self.kind == "quadratic":
            return self.lam * rho
        return self.lam * np.log1p(rho)

    def log_hessian_det(self, chart: GridChart):
        """``log det (d^2 psi / dz'_a dzbar'_b)``; ``-inf`` marks a degenerate weight."""
        m = chart.n - 1
        if m == 0:
            return 0.0
        if self.kind == "flat":
            return -np.inf
        if self.kind == "quadratic":
            return m * np.log(self.lam)
        return m * np.log(self.lam) - (m + 1) * np.log1p(self._rho(chart))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "lam": self.lam}


def euclidean_reference(chart: GridChart) -> MetricField:
    """The flat metric ``sum |dz_j|^2`` written in the ``(w, z')`` frame."""
    r2 = np.abs(chart.full(chart.section())) ** 2
    coeffs = np.zeros(chart.shape + (chart.n, chart.n), dtype=complex)
    coeffs[..., 0, 0] = r2
    for j in range(1, chart.n):
        coeffs[..., j, j] = 1.0
    return MetricField(chart, coeffs)


@dataclass(frozen=True, eq=False)
class DivisorModel:
    """Everything needed to evaluate the model forms near the divisor.

    Parameters
    ----------
    chart : GridChart
        Annulus (``n = 1``) or product chart.
    k : int, optional
        Rank of the curvature of the line bundle; ``k = n`` is the ample case.
    weight : FiberWeight
        Fiber weight ``psi`` of the section norm.
    phi : ScalarField, optional
        Rescaling weight; ``|S|_phi = e^{-phi/2} |S|``.  Defaults to zero.
    omega_F : Form11Field, optional
        Fiber form for the semi-ample case, extended constantly in the radial
        direction.
    reference : MetricField, optional
        Reference form ``omega'``; the flat metric by default.
    Psi : ScalarField, optional
        Reference potential; by default the one matching ``omega'`` so that
        ``f_phi`` tends to a constant at the divisor.
    """

    chart: GridChart
    k: int | None = None
    weight: FiberWeight = field(default_factory=FiberWeight)
    phi: ScalarField | None = None
    omega_F: Form11Field | None = None
    reference: MetricField | None = None
    Psi: ScalarField | None = None
    flags: tuple = ()

    def __post_init__(self):
        chart = self.chart
        if not chart.is_log_polar:
            raise ModelError("divisor models live on annulus or product charts")
        n = chart.n
        k = n if self.k is None else int(self.k)
        object.__setattr__(self, "k", k)
        if not 1 <= k <= n:
            raise ModelError(f"rank k must satisfy 1 <= k <= n, got k={k}, n={n}")
        flags = list(self.flags)
        if k < n and not k < n - 1:
            flags.append("k outside the stated range 0 <= k < n-1 of the constant-rank condition")
        object.__setattr__(self, "flags", tuple(flags))
        if self.phi is not None:
            chart.check_same(self.phi.chart)
            if not self.phi.is_real:
                raise ModelError("weight phi must be real")
        if self.omega_F is not None:
            chart.check_same(self.omega_F.chart)
            c = self.omega_F.coeffs
            if np.max(np.abs(c - c[:1])) > 1e-12 * max(1.0, float(np.max(np.abs(c)))):
                raise ModelError("fiber form must be identical on every radial slice")
        if self.reference is not None:
            chart.check_same(self.reference.chart)
        if self.Psi is not None:
            chart.check_same(self.Psi.chart)
        if not np.all(self.log_norm() > 0):
            raise ModelError("|S|_phi must stay below 1 on the chart")

    @property
    def n(self) -> int:
        return self.chart.n

    @property
    def ample(self) -> bool:
        return self.k == self.n

    def phi_values(self):
        return 0.0 if self.phi is None else self.phi.values

    def log_norm(self) -> np.ndarray:
        """``L = -log |S|_phi^2`` on every node."""
        s = self.chart.axis_values(0)
        return self.chart.full(-2.0 * s + self.weight.psi(self.chart) + self.phi_values())

    def norm(self) -> np.ndarray:
        """``|S|_phi``."""
        return np.exp(-0.5 * self.log_norm())

    def section(self) -> np.ndarray:
        return self.chart.section()

    def reference_metric(self) -> MetricField:
        return self.reference if self.reference is not None else euclidean_reference(self.chart)

    def reference_potential(self) -> ScalarField:
        """``Psi``; the default cancels the fiber density of the flat reference."""
        if self.Psi is not None:
            return self.Psi
        if self.reference is not None:
            return ScalarField.constant(self.chart, 0.0)
        psi = self.weight.psi(self.chart)
        logdet = self.weight.log_hessian_det(self.chart)
        if np.any(np.isneginf(logdet)):
            return ScalarField.constant(self.chart, 0.0)
        return ScalarField.real(self.chart, self.chart.full(psi - logdet))

    def fiber_form(self) -> Form11Field:
        if self.omega_F is not None:
            return self.omega_F
        n = self.n
        coeffs = np.zeros((n, n), dtype=complex)
        for j in range(self.k, n):
            coeffs[j, j] = 1.0
        return Form11Field(self.chart, coeffs)


def model_constant(k: int) -> float:
    """``k^{1 + 1/k} / (k + 1)``."""
    return k ** (1.0 + 1.0 / k) / (k + 1.0)


def model_potential(model: DivisorModel, k: int | None = None) -> np.ndarray:
    """``c_k L^{(k+1)/k}``, whose complex Hessian is the model form."""
    k = model.k if k is None else k
    return model_constant(k) * model.log_norm() ** ((k + 1.0) / k)


def _radial_margin(coeffs: np.ndarray) -> np.ndarray:
    lam = linalg.min_eigenvalue(coeffs)
    return lam.reshape(lam.shape[0], -1).min(axis=1)


def _positive_metric(model: DivisorModel, coeffs: np.ndarray, label: str) -> MetricField:
    margin = _radial_margin(coeffs)
    if np.all(margin > 1e-10):
        return MetricField(model.chart, coeffs)
    radii = np.exp(model.chart.axes[0].nodes)
    bad = np.nonzero(~(margin > 1e-10))[0]
    first_bad = int(bad[0])
    delta = float(radii[first_bad - 1]) if first_bad > 0 else None
    raise ModelPositivityError(
        f"{label} is not positive definite beyond r = {delta}; minimum margin {margin.min():.3e}",
        delta,
        margin,
    )


def omega_phi(model: DivisorModel) -> MetricField:
    """``c_n ddbar L^{(n+1)/n}`` for the ample case."""
    if not model.ample:
        raise ModelError("omega_phi is the ample case (k = n); use omega_phi_semiample")
    coeffs = complex_hessian(model_potential(model), model.chart)
    return _positive_metric(model, linalg.hermitian_part(coeffs), "omega_phi")


def semiample_expansion(model: DivisorModel, k: int | None = None) -> Form11Field:
    """``(kL)^{1/k} ddbar L + (kL)^{(1-k)/k} dL ^ dbar L`` (the two-term form of the model)."""
    k = model.k if k is None else k
    chart = model.chart
    lvals = np.ascontiguousarray(model.log_norm())
    curv = complex_hessian(lvals, chart)
    grad = np.stack([dz(lvals, chart, a) for a in range(model.n)], axis=-1)
    outer = grad[..., :, None] * np.conj(grad[..., None, :])
    kl = k * lvals
    coeffs = kl[..., None, None] ** (1.0 / k) * curv + kl[..., None, None] ** ((1.0 - k) / k) * outer
    return Form11Field(chart, coeffs)


def omega_phi_semiample(model: DivisorModel, tol: float = 1e-6) -> Form11Field:
    """``c_k ddbar L^{(k+1)/k}`` together with its two-term consistency check.

    ``diagnostics`` records the relative discrepancy between the direct
    evaluation and :func:`semiample_expansion`, and the sorted eigenvalue
    spectrum extremes.  A discrepancy above ``tol`` raises :class:`ModelError`.
    """
    chart = model.chart
    direct = Form11Field(chart, complex_hessian(model_potential(model), chart))
    expanded = semiample_expansion(model)
    scale = max(float(np.max(np.abs(direct.coeffs))), 1e-300)
    defect = float(np.max(np.abs(direct.coeffs - expanded.coeffs))) / scale
    if defect > tol:
        raise ModelError(f"direct and expanded model forms disagree: relative defect {defect:.3e}")
    eig = linalg.eigenvalues(direct.coeffs) if model.n > 1 else direct.coeffs.real[..., 0]
    direct.diagnostics.update(expansion_defect=defect, eigenvalues=eig)
    return direct


def eta_phi(model: DivisorModel) -> MetricField:
    """``omega_phi + (kL)^{1/k} omega_F``; equal to ``omega_phi`` when ``k = n``."""
    if model.ample:
        return omega_phi(model)
    form = omega_phi_semiample(model)
    weight = (model.k * model.log_norm()) ** (1.0 / model.k)
    coeffs = form.coeffs + weight[..., None, None] * model.fiber_form().coeffs
    return _positive_metric(model, np.asarray(coeffs), "eta_phi")


def mixed_discriminant(mats: list[np.ndarray]) -> np.ndarray:
    """Mixed discriminant ``D(A_1, ..., A_n)``, normalized so ``D(A, ..., A) = det A``.

    Inclusion-exclusion: ``n! D = sum_S (-1)^{n-|S|} det(sum_{i in S} A_i)``.
    """
    n = len(mats)
    total = 0.0
    for size in range(1, n + 1):
        sign = (-1.0) ** (n - size)
        for subset in combinations(range(n), size):
            acc = sum(mats[i] for i in subset)
            total = total + sign * linalg.det(acc)
    return total / float(np.prod(np.arange(1, n + 1)))


def top_power_defect(model: DivisorModel, min_margin: float = 1e-3) -> dict:
    """Check ``eta^n = C(k,n) omega_phi^k ^ ((kL)^{1/k} omega_F)^{n-k}`` node-wise.

    Returns the relative defect over nodes whose margin exceeds ``min_margin``
    together with the binomial constant used.
    """
    n, k = model.n, model.k
    eta = eta_phi(model)
    if model.ample:
        return {"defect": 0.0, "constant": 1.0, "nodes": model.chart.size}
    form = np.asarray(omega_phi_semiample(model).coeffs)
    weight = (k * model.log_norm()) ** (1.0 / k)
    fib = np.asarray(model.fiber_form().coeffs) * weight[..., None, None]
    lhs = eta.determinant()
    const = float(comb(n, k))
    rhs = const * mixed_discriminant([form] * k + [fib] * (n - k))
    mask = eta.min_eigenvalue > min_margin
    rel = np.abs(lhs - rhs)[mask] / np.abs(lhs)[mask]
    return {"defect": float(rel.max()) if rel.size else 0.0, "constant": const, "nodes": int(mask.sum())}


def f_phi(model: DivisorModel, subtract_limit: bool = True) -> ScalarField:
    """``-log |S|^2 - log(form^n / omega'^n) - Psi`` with ``form`` = ``omega_phi`` or ``eta_phi``.

    With ``subtract_limit`` the angular mean on the innermost radius is removed
    so that the field tends to zero at the divisor.
    """
    form = eta_phi(model)
    ref = model.reference_metric()
    neg_log_s2 = model.log_norm() - model.phi_values()
    vals = neg_log_s2 - (np.log(form.determinant()) - np.log(ref.determinant())) - model.reference_potential().values
    if subtract_limit:
        vals = vals - vals[0].mean()
    return ScalarField.real(model.chart, vals)


@dataclass(frozen=True, eq=False)
class LogTerm:
    """``(S^i Sbar^j theta + conj) L^ell`` with ``theta`` a complex constant or field."""

    i: int
    j: int
    ell: int = 0
    theta: complex | np.ndarray = 1.0

    def __post_init__(self):
        if self.i < 0 or self.j < 0 or self.i + self.j < 1:
            raise ModelError("expansion terms need i, j >= 0 and i + j >= 1")
        if self.ell < 0:
            raise ModelError("log power must be non-negative")


@dataclass(frozen=True, eq=False)
class LogExpansion:
    terms: tuple[LogTerm, ...] = ()

    @classmethod
    def single(cls, i: int, j: int, ell: int = 0, theta=1.0) -> "LogExpansion":
        return cls((LogTerm(i, j, ell, theta),))


def evaluate_expansion(expansion: LogExpansion, model: DivisorModel) -> ScalarField:
    """Pointwise sum ``sum 2 Re(S^i Sbar^j theta) L^ell``."""
    chart = model.chart
    total = np.zeros(chart.shape)
    if not expansion.terms:
        return ScalarField.real(chart, total)
    s = model.section()
    lvals = model.log_norm()
    for term in expansion.terms:
        theta = term.theta.values if isinstance(term.theta, ScalarField) else term.theta
        mono = s**term.i * np.conj(s) ** term.j * theta
        total = total + 2.0 * mono.real * lvals**term.ell
    return ScalarField.real(chart, total)
