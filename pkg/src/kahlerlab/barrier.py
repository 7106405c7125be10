"""Barrier-function expansion and the decay-bound check near the divisor.

The barrier potential is ``C (S^i Sbar^j theta + conj) X^k`` with
``X = -n log |S|_m^2``, where ``|.|_m`` is realized by the model norm
``|.|_phi``.  Its Monge-Ampère density against the model metric is compared
with a closed-form first-order expansion; the remainder should vanish to
order ``|S|^{i+j+1}``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core.fields import ScalarField
from .core.operators import PositivityError, _perturbed, ma_excess
from .models.metrics import DivisorModel, omega_phi
from .models.profiles import DecayFit, decay_fit

__all__ = [
    "BarrierSpec",
    "BarrierReport",
    "DecayBoundResult",
    "ORDER_SLACK",
    "barrier_potential",
    "barrier_lhs",
    "barrier_excess",
    "barrier_rhs",
    "rhs_terms",
    "dominance_crossover",
    "admissible_amplitude",
    "verify_barrier",
    "decay_bound_check",
]

ORDER_SLACK = 0.15
MIN_MARGIN = 1e-6
RHS_VARIANTS = ("printed", "derived")


@dataclass(frozen=True, eq=False)
class BarrierSpec:
    """Parameters ``(C, i, j, k, theta)`` of a barrier on a model chart.

    ``theta`` is a complex constant or a complex ScalarField on the chart.
    """

    C: float
    i: int
    j: int
    k: int
    model: DivisorModel
    theta: complex | ScalarField = 1.0

    def __post_init__(self):
        if self.i < 0 or self.j < 0 or self.i + self.j < 1:
            raise ValueError("barrier orders need i, j >= 0 and i + j >= 1")
        if self.k < 0:
            raise ValueError("log power k must be non-negative")
        if isinstance(self.theta, ScalarField):
            self.model.chart.check_same(self.theta.chart)

    @property
    def n(self) -> int:
        return self.model.n

    def with_amplitude(self, C: float) -> "BarrierSpec":
        return BarrierSpec(C, self.i, self.j, self.k, self.model, self.theta)

    def theta_values(self):
        return self.theta.values if isinstance(self.theta, ScalarField) else self.theta

    def monomial(self) -> np.ndarray:
        """``S^i Sbar^j theta``."""
        s = self.model.section()
        return s**self.i * np.conj(s) ** self.j * self.theta_values()

    def log_variable(self) -> np.ndarray:
        """``X = -n log |S|_m^2``."""
        return self.n * self.model.log_norm()

    def to_dict(self) -> dict:
        theta = self.theta_values()
        out = {"C": self.C, "i": self.i, "j": self.j, "k": self.k}
        if np.ndim(theta) == 0:
            out["theta"] = [float(np.real(theta)), float(np.imag(theta))]
        return out


def barrier_potential(spec: BarrierSpec) -> ScalarField:
    """``C (S^i Sbar^j theta + conj) X^k`` as a real field."""
    chart = spec.model.chart
    vals = spec.C * 2.0 * spec.monomial().real * spec.log_variable() ** spec.k
    return ScalarField.real(chart, chart.full(vals))


def barrier_excess(spec: BarrierSpec, omega=None) -> ScalarField:
    """Density minus one, evaluated without cancellation."""
    omega = omega_phi(spec.model) if omega is None else omega
    return ma_excess(omega, barrier_potential(spec))


def barrier_lhs(spec: BarrierSpec, omega=None) -> ScalarField:
    """Monge-Ampère density of the barrier against the model metric."""
    ex = barrier_excess(spec, omega)
    return ScalarField.real(ex.chart, 1.0 + ex.values)


def rhs_terms(spec: BarrierSpec, variant: str = "derived") -> dict:
    """The three terms of the expansion bracket, each multiplied by ``C X^{k-(n+1)/n}``.

    ``"printed"``: ``ij X^2 P``, ``-X [a S^i Sbar^j theta + b conj]`` with
    ``a = k(i+j) + j(n-1)``, ``b = k(i+j) + i(n-1)``, and the bare constant
    ``k(k-n)``.

    ``"derived"``: the first-order expansion at points where the fiber weight
    is critical, ``P [ij X^2 - nk(i+j) X + nk(nk-1)]`` with ``P = 2 Re(S^i Sbar^j theta)``.
    """
    if variant not in RHS_VARIANTS:
        raise ValueError(f"unknown expansion variant {variant!r}")
    i, j, k, n = spec.i, spec.j, spec.k, spec.n
    x = spec.log_variable()
    mono = spec.monomial()
    p = 2.0 * mono.real
    pref = spec.C * x ** (k - (n + 1.0) / n)
    if variant == "printed":
        a = k * (i + j) + j * (n - 1)
        b = k * (i + j) + i * (n - 1)
        middle = -x * (a * mono + b * np.conj(mono))
        if i == j:
            middle = middle.real
        return {
            "quadratic": pref * i * j * x**2 * p,
            "linear": pref * middle,
            "constant": pref * float(k * (k - n)),
        }
    return {
        "quadratic": pref * i * j * x**2 * p,
        "linear": -pref * n * k * (i + j) * x * p,
        "constant": pref * n * k * (n * k - 1.0) * p,
    }


def _expansion_excess(spec: BarrierSpec, variant: str, drop_constant: bool) -> np.ndarray:
    terms = rhs_terms(spec, variant)
    total = terms["quadratic"] + terms["linear"] + (0.0 if drop_constant else terms["constant"])
    if np.iscomplexobj(total) and not np.any(np.imag(total) != 0):
        total = total.real
    return total


def barrier_rhs(spec: BarrierSpec, variant: str = "printed", drop_constant: bool = False) -> ScalarField:
    """``1 + C X^{k-(n+1)/n} {bracket}`` with no remainder term.

    ``drop_constant`` removes the constant bracket term (negative control).
    """
    chart = spec.model.chart
    vals = chart.full(1.0 + _expansion_excess(spec, variant, drop_constant))
    if np.iscomplexobj(vals) and np.any(vals.imag != 0):
        return ScalarField.complex(chart, vals)
    return ScalarField.real(chart, np.real(vals))


def dominance_crossover(spec: BarrierSpec, variant: str = "derived") -> float | None:
    """Largest radius below which the ``ij X^2`` term dominates the other two.

    Evaluated on the angular maximum at the fiber centre; ``None`` when the
    quadratic term never dominates on the chart.
    """
    terms = rhs_terms(spec, variant)
    sl = _centre_slice(spec.model)
    q = _ray_max(np.abs(np.broadcast_to(terms["quadratic"], spec.model.chart.shape)[sl]))
    rest = _ray_max(
        np.abs(np.broadcast_to(terms["linear"], spec.model.chart.shape)[sl])
        + np.abs(np.broadcast_to(terms["constant"], spec.model.chart.shape)[sl])
    )
    dom = q > rest
    radii = np.exp(spec.model.chart.axes[0].nodes)
    if not dom[0]:
        return None
    last = int(np.argmin(dom)) - 1 if not dom.all() else dom.size - 1
    return float(radii[last])


def admissible_amplitude(spec: BarrierSpec, omega=None, max_halvings: int = 40) -> tuple[BarrierSpec, int]:
    """Halve ``C`` until ``omega + ddbar(barrier)`` keeps a margin above ``1e-6``.

    Returns the admissible spec and the number of halvings applied.
    """
    omega = omega_phi(spec.model) if omega is None else omega
    for halvings in range(max_halvings + 1):
        try:
            _, lam = _perturbed(omega, barrier_potential(spec))
        except PositivityError:
            lam = None
        if lam is not None and lam.min() > MIN_MARGIN:
            return spec, halvings
        spec = spec.with_amplitude(0.5 * spec.C)
    raise PositivityError(
        "barrier amplitude could not be made admissible", ScalarField.constant(spec.model.chart)
    )


def _centre_slice(model: DivisorModel) -> tuple:
    """All radii and angles, fiber coordinates at the node nearest the fiber centre."""
    idx = [slice(None), slice(None)]
    for ax in model.chart.axes[2:]:
        if ax.periodic:
            idx.append(slice(0, 1))
        else:
            c = int(np.argmin(np.abs(ax.nodes - 0.5 * (ax.lo + ax.hi))))
            idx.append(slice(c, c + 1))
    return tuple(idx)


def _ray_max(values: np.ndarray) -> np.ndarray:
    return values.reshape(values.shape[0], -1).max(axis=1)


@dataclass
class BarrierReport:
    """Per-radius residual between density and expansion, and the fitted order."""

    radii: np.ndarray
    residual: np.ndarray
    fit: DecayFit
    expected_order: int
    status: str
    amplitude: float
    variant: str
    halvings: int = 0
    extra: dict = field(default_factory=dict)

    @property
    def order(self) -> float:
        return self.fit.a

    @property
    def passed(self) -> bool:
        return self.status == "pass"

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "order": self.fit.a,
            "log_power": self.fit.b,
            "fit_residual": self.fit.residual,
            "expected_order": self.expected_order,
            "amplitude": self.amplitude,
            "variant": self.variant,
            "halvings": self.halvings,
            "window": list(self.fit.window),
        }


def verify_barrier(
    spec: BarrierSpec,
    variant: str = "derived",
    drop_constant: bool = False,
    fraction: float = 0.5,
    max_fit_residual: float = 0.25,
) -> BarrierReport:
    """Fit the order of ``|density - expansion|`` toward the divisor.

    The residual is taken on the fiber-centre slice (where the expansion is
    exact to first order) as the angular maximum per radius.  Passes iff the
    fitted power order is at least ``i + j + 1 - 0.15``; a fit residual above
    ``max_fit_residual`` makes the result ``"inconclusive"``.
    """
    model = spec.model
    chart = model.chart
    expected = spec.i + spec.j + 1
    radii = np.exp(chart.axes[0].nodes)
    omega = omega_phi(model)
    halvings = 0
    if spec.C != 0.0:
        spec, halvings = admissible_amplitude(spec, omega)
    if spec.C == 0.0:
        fit = DecayFit(np.inf, 0.0, -np.inf, 0.0, (float(radii[0]), float(radii[-1])), "identically-zero")
        return BarrierReport(radii, np.zeros(radii.size), fit, expected, "pass", 0.0, variant)
    excess = barrier_excess(spec, omega).values
    expansion = spec.model.chart.full(_expansion_excess(spec, variant, drop_constant))
    diff = np.abs(excess - expansion)
    sl = _centre_slice(model)
    masked = np.zeros(chart.shape)
    masked[sl] = diff[sl]
    fit = decay_fit(masked, model, fraction)
    if fit.status != "ok" or fit.residual > max_fit_residual:
        status = "inconclusive"
    elif fit.a >= expected - ORDER_SLACK:
        status = "pass"
    else:
        status = "fail"
    return BarrierReport(radii, _ray_max(masked), fit, expected, status, spec.C, variant, halvings)


@dataclass
class DecayBoundResult:
    """Outcome of the maximum-principle decay bound ``|u| <= C |S|^{m+1}``."""

    ratio: ScalarField
    constant: float
    band_edges: np.ndarray
    band_maxima: np.ndarray
    passed: bool

    def to_dict(self) -> dict:
        return {
            "constant": self.constant,
            "band_edges": self.band_edges.tolist(),
            "band_maxima": self.band_maxima.tolist(),
            "passed": self.passed,
        }


def decay_bound_check(u: ScalarField, m: int, model: DivisorModel, slack: float = 1e-6) -> DecayBoundResult:
    """Check ``|u| <= C* |S|^{m+1}`` with ``C*`` stable toward the divisor.

    The ratio ``q = |u| / |S|^{m+1}`` is maximized over dyadic bands in
    ``-log r``; the check passes iff every band maximum is finite and they do
    not increase (beyond a relative ``slack``) as the bands approach the divisor.
    """
    if m < 1:
        raise ValueError("m must be a positive integer")
    chart = model.chart
    model.chart.check_same(u.chart)
    ratio = np.abs(u.values) / model.norm() ** (m + 1)
    per_radius = _ray_max(ratio)
    t = -chart.axes[0].nodes
    edges = [float(t.min())]
    while edges[-1] * 2.0 < t.max():
        edges.append(edges[-1] * 2.0)
    edges.append(float(t.max()))
    band_max = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        sel = (t >= lo) & (t <= hi)
        band_max.append(per_radius[sel].max() if sel.any() else np.nan)
    band_max = np.array(band_max)
    finite = bool(np.all(np.isfinite(band_max)))
    stable = bool(np.all(band_max[1:] <= band_max[:-1] * (1.0 + slack) + 1e-300))
    return DecayBoundResult(
        ScalarField.real(chart, ratio),
        float(np.max(per_radius)),
        np.array(edges),
        band_max,
        finite and stable,
    )
