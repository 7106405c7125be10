"""Asymptotic diagnostics of model metrics: decay fits, radial length, volume growth."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_simpson
from scipy.optimize import curve_fit

from ..core.fields import MetricField, ScalarField
from ..core.operators import potential_curvature_norm
from .metrics import DivisorModel, ModelError, model_potential

__all__ = [
    "DecayFit",
    "RadialProfile",
    "decay_fit",
    "radial_maxima",
    "curvature_decay_profile",
    "completeness_profile",
    "volume_growth_profile",
]

ZERO_LEVEL = 1e-6


@dataclass
class DecayFit:
    """``log max|field| = c + a log|S| + b log(-log|S|^2)`` over a radial window."""

    a: float
    b: float
    c: float
    residual: float
    window: tuple[float, float]
    status: str = "ok"
    excluded: list = field(default_factory=list)
    radii: np.ndarray | None = None
    values: np.ndarray | None = None

    def to_dict(self) -> dict:
        return {
            "a": self.a,
            "b": self.b,
            "c": self.c,
            "residual": self.residual,
            "window": list(self.window),
            "status": self.status,
            "excluded": list(self.excluded),
        }


def radial_maxima(values: np.ndarray, model: DivisorModel) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-radius maximum of ``|values|`` with ``|S|`` and ``L`` at the maximizing node."""
    nr = values.shape[0]
    flat = np.abs(values).reshape(nr, -1)
    idx = np.argmax(flat, axis=1)
    lvals = np.broadcast_to(model.log_norm(), values.shape).reshape(nr, -1)
    lmax = lvals[np.arange(nr), idx]
    return flat[np.arange(nr), idx], np.exp(-0.5 * lmax), lmax


def decay_fit(
    fld: ScalarField | np.ndarray,
    model: DivisorModel,
    fraction: float = 0.5,
    log_power: bool = True,
    zero_level: float = 0.0,
) -> DecayFit:
    """Fit power and log-power decay exponents toward the divisor.

    Parameters
    ----------
    fld : ScalarField or ndarray
        Field on the model chart (or its values).
    model : DivisorModel
        Supplies ``|S|`` and ``L = -log|S|^2``.
    fraction : float
        Inner fraction of the chart in ``-log r`` used for the fit.
    log_power : bool
        Fit ``b`` as well; when False, ``b`` is fixed at 0.
    zero_level : float
        A field whose windowed maximum is at most this level is reported as
        ``"identically-zero"`` without fitting.
    """
    values = fld.values if isinstance(fld, ScalarField) else np.asarray(fld)
    chart = model.chart
    window = chart.radial_window(fraction)
    amp, snorm, lvals = radial_maxima(values, model)
    radii = np.exp(chart.axes[0].nodes)
    bounds = (float(radii[window].min()), float(radii[window].max()))
    if amp[window].max() <= zero_level:
        return DecayFit(0.0, 0.0, -np.inf, 0.0, bounds, "identically-zero", [], radii, amp)
    keep = window[amp[window] > 0]
    excluded = [float(radii[i]) for i in window if not amp[i] > 0]
    if keep.size < 4:
        return DecayFit(np.nan, np.nan, np.nan, np.inf, bounds, "insufficient-data", excluded, radii, amp)
    cols = [np.ones(keep.size), np.log(snorm[keep])]
    if log_power:
        cols.append(np.log(lvals[keep]))
    design = np.stack(cols, axis=1)
    target = np.log(amp[keep])
    coef, *_ = np.linalg.lstsq(design, target, rcond=None)
    resid = target - design @ coef
    rms = float(np.sqrt(np.mean(resid**2)))
    b = float(coef[2]) if log_power else 0.0
    return DecayFit(float(coef[1]), b, float(coef[0]), rms, bounds, "ok", excluded, radii, amp)


def curvature_decay_profile(
    model: DivisorModel, fraction: float = 0.5, max_residual: float = 1e-2
) -> tuple[DecayFit, ScalarField]:
    """Decay fit of ``|R|`` for ``omega_phi``; returns the fit and the norm field.

    The metric is never materialized on the whole chart: curvature and margin
    are computed slab by slab from the potential.  A flat metric is flagged
    ``"identically-zero"``; a poor fit is flagged ``"inconclusive"``.
    """
    if not model.ample:
        raise ModelError("curvature profiles are defined for the ample model")
    norm, margin = potential_curvature_norm(model_potential(model), model.chart)
    fit = decay_fit(norm, model, fraction, zero_level=ZERO_LEVEL)
    if fit.status == "ok" and fit.residual > max_residual:
        fit.status = "inconclusive"
    return fit, norm


@dataclass
class RadialProfile:
    """Radial distance ``R(r)`` and a fitted growth law."""

    radii: np.ndarray
    lengths: np.ndarray
    exponent: float
    amplitude: float
    offset: float
    status: str
    volumes: np.ndarray | None = None
    alpha: float | None = None
    fit_residual: float = 0.0

    def to_dict(self) -> dict:
        out = {
            "exponent": self.exponent,
            "amplitude": self.amplitude,
            "offset": self.offset,
            "status": self.status,
            "fit_residual": self.fit_residual,
        }
        if self.alpha is not None:
            out["alpha"] = self.alpha
        return out


def _centre_index(model: DivisorModel) -> tuple:
    """Angle 0 and the node nearest the fiber centre."""
    idx = [0]
    for ax in model.chart.axes[2:]:
        idx.append(int(np.argmin(np.abs(ax.nodes - 0.5 * (ax.lo + ax.hi))) if not ax.periodic else 0))
    return tuple(idx)


def _radial_length(g: MetricField, model: DivisorModel) -> tuple[np.ndarray, np.ndarray]:
    """Length from the outer edge inward along the ray at angle 0 through the fiber centre.

    The line element along ``s = log r`` is ``sqrt(h_{w wbar} / pi) ds``.
    """
    chart = g.chart
    h = np.asarray(g.coeffs[(slice(None),) + _centre_index(model) + (0, 0)]).real
    s = chart.axes[0].nodes
    density = np.sqrt(h / np.pi)
    outward = cumulative_simpson(density[::-1], x=-s[::-1], initial=0.0)
    return np.exp(s), outward[::-1]


def _power_law(t, a, b, p):
    return a + b * t**p


def completeness_profile(g: MetricField, model: DivisorModel, fraction: float = 0.5) -> RadialProfile:
    """Radial length ``R(r) = int_r^{r_max} |d/dr|_g dr`` and the law ``R ~ A + B (-log r)^p``.

    The profile is ``"bounded"`` (incomplete) when the length gained over the
    inner window is below 1% of the total, ``"divergent"`` otherwise.
    """
    g.chart.check_same(model.chart)
    radii, lengths = _radial_length(g, model)
    window = model.chart.radial_window(fraction)
    gain = lengths[window].max() - lengths[window].min()
    if gain < 1e-2 * lengths.max():
        return RadialProfile(radii, lengths, 0.0, 0.0, float(lengths.max()), "bounded")
    t = -np.log(radii[window])
    y = lengths[window]
    slope = np.polyfit(np.log(t), np.log(np.maximum(y, 1e-300)), 1)[0]
    p0 = (0.0, float(y[-1] / t[-1] ** slope) if t[-1] > 0 else 1.0, float(slope))
    popt, _ = curve_fit(_power_law, t, y, p0=p0, maxfev=20000)
    resid = float(np.sqrt(np.mean((_power_law(t, *popt) - y) ** 2)) / max(abs(y).max(), 1e-300))
    return RadialProfile(radii, lengths, float(popt[2]), float(popt[1]), float(popt[0]), "divergent", fit_residual=resid)


def volume_growth_profile(g: MetricField, model: DivisorModel, fraction: float = 0.5) -> RadialProfile:
    """Volume of the region ``{r(R) <= |z_1| <= r_max}`` against its radial extent ``R``.

    Fits ``Vol ~ R^alpha`` by log-log regression over the inner window.  A
    volume that stops growing (less than 1% gain over the window) is flagged
    ``"bounded"`` with ``alpha = 0``.
    """
    chart = g.chart
    chart.check_same(model.chart)
    radii, lengths = _radial_length(g, model)
    dens = g.determinant() * chart.quadrature_weights
    per_row = dens.reshape(chart.shape[0], -1).sum(axis=1) / chart.axes[0].weights
    s = chart.axes[0].nodes
    vols = cumulative_simpson(per_row[::-1], x=-s[::-1], initial=0.0)[::-1]
    window = chart.radial_window(fraction)
    gain = vols[window].max() - vols[window].min()
    if gain < 1e-2 * vols.max():
        return RadialProfile(radii, lengths, 0.0, 0.0, 0.0, "bounded", volumes=vols, alpha=0.0)
    x = np.log(lengths[window])
    y = np.log(vols[window])
    coef = np.polyfit(x, y, 1)
    resid = float(np.sqrt(np.mean((np.polyval(coef, x) - y) ** 2)))
    return RadialProfile(
        radii, lengths, float(coef[0]), float(np.exp(coef[1])), 0.0, "growing", vols, float(coef[0]), resid
    )
