"""Experiment runners, one per configuration kind.

Every runner returns an :class:`Outcome`: the pass flag, a JSON-ready report,
CSV curves and fields to serialize.  Runners read their parameters through
:class:`Params` so the defaults they fill in are echoed in the manifest.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from ..barrier import BarrierSpec, decay_bound_check, dominance_crossover, verify_barrier
from ..core import (
    GridChart,
    MetricField,
    ScalarField,
    closedness_defect,
    curvature_tensor,
    integrate,
    ma_density,
    volume,
)
from ..models import (
    DivisorModel,
    FiberWeight,
    LogExpansion,
    LogTerm,
    completeness_profile,
    curvature_decay_profile,
    euclidean_reference,
    evaluate_expansion,
    omega_phi,
    omega_phi_semiample,
    top_power_defect,
    volume_growth_profile,
)
from ..solver import (
    CalabiProblem,
    SolverConfig,
    flat_torus_oracle,
    normalize_source,
    solve_calabi,
    solve_perturbed,
)
from .config import ConfigError, ExperimentConfig

__all__ = ["Outcome", "Params", "run_experiment", "synthetic_source", "build_model", "RUNNERS"]


@dataclass
class Outcome:
    passed: bool
    report: dict
    headline: dict
    curves: dict = field(default_factory=dict)
    fields: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)


class Params:
    """Payload reader that records every value it hands out, defaults included."""

    def __init__(self, payload: dict):
        self._payload = dict(payload)
        self.resolved: dict = {}

    def get(self, key: str, default=None):
        value = self._payload.get(key, default)
        self.resolved[key] = value
        return value

    def require(self, key: str):
        if key not in self._payload:
            raise ConfigError(f"missing required field 'payload.{key}'")
        return self.get(key)


# -- inputs ---------------------------------------------------------------


def synthetic_source(chart: GridChart, spec: dict, seed: int) -> ScalarField:
    """Source term on a torus chart.

    ``{"kind": "cosine", "amplitude": a, "modes": [m_1, ...]}`` gives
    ``a prod_j cos(2 pi m_j x_j / P_j)`` over the real parts ``x_j``.
    ``{"kind": "random-modes", "amplitude": a, "count": N, "max_mode": K}``
    draws ``N`` Fourier modes from ``seed``, normalized to sup norm ``a``.
    """
    kind = spec.get("kind", "cosine")
    amp = float(spec.get("amplitude", 0.1))
    axes = chart.axes
    if kind == "cosine":
        modes = spec.get("modes", [1] * chart.n)
        if len(modes) != chart.n:
            raise ConfigError(f"'modes' needs {chart.n} entries")
        vals = np.ones(chart.shape)
        for j, m in enumerate(modes):
            x = chart.axis_values(2 * j)
            vals = vals * np.cos(2.0 * np.pi * m * x / (axes[2 * j].hi - axes[2 * j].lo))
        return ScalarField.real(chart, amp * vals)
    if kind == "random-modes":
        rng = np.random.default_rng(seed)
        count = int(spec.get("count", 4))
        kmax = int(spec.get("max_mode", 2))
        vals = np.zeros(chart.shape)
        for _ in range(count):
            phase = rng.uniform(0.0, 2.0 * np.pi)
            arg = phase
            for a, ax in enumerate(axes):
                m = int(rng.integers(-kmax, kmax + 1))
                arg = arg + 2.0 * np.pi * m * chart.axis_values(a) / (ax.hi - ax.lo)
            vals = vals + rng.normal() * np.cos(arg)
        vals = vals - vals.mean()
        peak = np.max(np.abs(vals))
        return ScalarField.real(chart, amp * vals / peak if peak > 0 else vals)
    raise ConfigError(f"unknown source kind {kind!r}")


def build_model(chart: GridChart, spec: dict) -> DivisorModel:
    """``{"weight": {"kind", "lam"}, "k": int, "phi": {"kind": "section", "c": c}}``."""
    weight = spec.get("weight", {})
    fw = FiberWeight(weight.get("kind", "flat"), float(weight.get("lam", 1.0)))
    phi = None
    phi_spec = spec.get("phi")
    if phi_spec:
        if phi_spec.get("kind", "section") != "section":
            raise ConfigError(f"unknown phi kind {phi_spec.get('kind')!r}")
        c = complex(*phi_spec.get("c", [0.5, 0.0])) if isinstance(phi_spec.get("c"), list) else complex(phi_spec.get("c", 0.5))
        phi = ScalarField.real(chart, chart.full(2.0 * np.real(c * chart.section())))
    return DivisorModel(chart, k=spec.get("k"), weight=fw, phi=phi)


def _theta(chart: GridChart, spec):
    """``[re, im]`` constant, or ``{"fiber": [[re, im], ...]}`` for ``sum_m c_m z_2^m``."""
    if spec is None:
        return 1.0
    if isinstance(spec, (int, float)):
        return complex(spec)
    if isinstance(spec, list):
        return complex(spec[0], spec[1])
    if isinstance(spec, dict) and "fiber" in spec:
        if chart.n < 2:
            raise ConfigError("fiber-dependent theta needs a product chart")
        z2 = chart.coordinate(1)
        vals = sum(complex(*c) * z2**m for m, c in enumerate(spec["fiber"]))
        return ScalarField.complex(chart, chart.full(vals))
    raise ConfigError("theta must be a number, [re, im] or {'fiber': [[re, im], ...]}")


def _solver_config(p: Params) -> SolverConfig:
    overrides = p.get("solver", {})
    cfg = SolverConfig.from_dict(overrides)
    p.resolved["solver"] = cfg.to_dict()
    return cfg


# -- runners --------------------------------------------------------------


def _run_solve_calabi(cfg: ExperimentConfig, chart: GridChart, p: Params) -> Outcome:
    source = synthetic_source(chart, p.require("source"), cfg.seed)
    max_residual = float(p.get("max_residual", 1e-8))
    max_conservation = float(p.get("max_conservation", 1e-8))
    want_oracle = bool(p.get("oracle", chart.n == 1))
    solver_cfg = _solver_config(p)
    omega = MetricField.identity(chart)
    t0 = time.perf_counter()
    rep = solve_calabi(CalabiProblem(omega, source), solver_cfg)
    seconds = time.perf_counter() - t0
    dens = ma_density(omega, rep.u)
    vol = volume(omega)
    conservation = abs(integrate(dens, omega) - vol) / vol
    report = rep.to_dict()
    report["conservation"] = conservation
    checks = [rep.success, rep.residual < max_residual, conservation < max_conservation]
    if want_oracle:
        err = float(np.max(np.abs(rep.u.values - flat_torus_oracle(source).values)))
        report["oracle_error"] = err
        checks.append(err < max_residual)
    history = rep.residual_history
    return Outcome(
        all(checks),
        report,
        {"metric": "residual", "value": rep.residual},
        curves={"residual_history": (["iteration", "residual"], list(enumerate(history)))},
        fields={"u": rep.u, "source": source},
        timings={"solve": seconds},
    )


def _run_solve_perturbed(cfg: ExperimentConfig, chart: GridChart, p: Params) -> Outcome:
    raw = synthetic_source(chart, p.require("source"), cfg.seed)
    epsilons = sorted((float(e) for e in p.require("epsilons")), reverse=True)
    solver_cfg = _solver_config(p)
    omega = MetricField.identity(chart)
    f, _ = normalize_source(raw, omega)
    timings = {}
    t0 = time.perf_counter()
    base = solve_calabi(CalabiProblem(omega, f, 0.0), solver_cfg)
    timings["unperturbed"] = time.perf_counter() - t0
    # the limit of u_eps is the solution normalized by int u e^f omega^n = 0
    weight = ScalarField.real(chart, np.exp(f.values))
    u0 = base.u - integrate(base.u * weight, omega) / integrate(weight, omega)
    rows, distances, bounds_ok = [], [], []
    bound = float(np.max(-f.values))
    for eps in epsilons:
        t0 = time.perf_counter()
        rep = solve_perturbed(omega, f, eps, solver_cfg)
        timings[f"eps={eps:g}"] = time.perf_counter() - t0
        sup_u = float(rep.u.values.max())
        dist = float(np.max(np.abs(rep.u.values - u0.values)))
        ok = sup_u <= bound / eps + 1e-8
        rows.append({"epsilon": eps, "sup_u": sup_u, "bound": bound / eps, "distance": dist,
                     "residual": rep.residual, "max_principle": ok})
        distances.append(dist)
        bounds_ok.append(ok)
    monotone = all(b < a for a, b in zip(distances, distances[1:]))
    report = {"runs": rows, "monotone": monotone, "unperturbed_residual": base.residual}
    return Outcome(
        all(bounds_ok) and monotone,
        report,
        {"metric": "distance_at_min_eps", "value": distances[-1]},
        curves={"perturbed": (["epsilon", "sup_u", "bound", "distance"],
                              [(r["epsilon"], r["sup_u"], r["bound"], r["distance"]) for r in rows])},
        fields={"u0": u0},
        timings=timings,
    )


def _run_model_metric(cfg: ExperimentConfig, chart: GridChart, p: Params) -> Outcome:
    model = build_model(chart, p.get("model", {}))
    tol = float(p.get("tolerance", 1e-8))
    curvature_tol = float(p.get("curvature_tolerance", 1e-6))
    report: dict = {"flags": list(model.flags)}
    checks = []
    t0 = time.perf_counter()
    if model.ample:
        g = omega_phi(model)
        report["margin"] = g.margin
        if chart.n > 1:
            report["closedness_defect"] = closedness_defect(g)
            checks.append(report["closedness_defect"] < tol)
        if chart.n == 1 and model.phi is None:
            gz = g.to_z_frame()
            r = chart.full(chart.radius())
            err = float(np.max(np.abs(gz.coeffs[..., 0, 0].real * r**2 - 1.0)))
            curv = float(curvature_tensor(g).norm.values.max())
            report.update(closed_form_error=err, curvature_sup=curv)
            checks += [err < tol, curv < curvature_tol]
        fields = {"omega_phi": g}
    else:
        form = omega_phi_semiample(model, tol=float(p.get("identity_tolerance", 1e-6)))
        top = top_power_defect(model)
        report.update(
            expansion_defect=form.diagnostics["expansion_defect"],
            top_power_defect=top["defect"],
            top_power_constant=top["constant"],
        )
        itol = float(p.get("identity_tolerance", 1e-6))
        checks += [form.diagnostics["expansion_defect"] < itol, top["defect"] < itol]
        fields = {"omega_phi": form}
    report["checks"] = len(checks)
    key = "closed_form_error" if "closed_form_error" in report else (
        "top_power_defect" if "top_power_defect" in report else "closedness_defect")
    return Outcome(all(checks), report, {"metric": key, "value": report.get(key, 0.0)},
                   fields=fields, timings={"model": time.perf_counter() - t0})


def _run_barrier(cfg: ExperimentConfig, chart: GridChart, p: Params) -> Outcome:
    model = build_model(chart, p.get("model", {}))
    spec = BarrierSpec(
        float(p.get("C", 1e-3)),
        int(p.require("i")),
        int(p.require("j")),
        int(p.require("k")),
        model,
        _theta(chart, p.get("theta")),
    )
    variant = p.get("variant", "derived")
    expect = p.get("expect", "pass")
    t0 = time.perf_counter()
    rep = verify_barrier(spec, variant, bool(p.get("drop_constant", False)), float(p.get("fraction", 0.5)))
    report = rep.to_dict()
    report["crossover_radius"] = dominance_crossover(spec.with_amplitude(rep.amplitude))
    report["expect"] = expect
    return Outcome(
        rep.status == expect,
        report,
        {"metric": "order", "value": rep.order, "claimed": rep.expected_order},
        curves={"residual": (["radius", "residual"], list(zip(rep.radii, rep.residual)))},
        timings={"verify": time.perf_counter() - t0},
    )


def _decay_field(model: DivisorModel, spec: dict) -> ScalarField:
    kind = spec.get("kind")
    chart = model.chart
    if kind == "norm-power":
        vals = float(spec.get("scale", 1.0)) * model.norm() ** float(spec["power"])
        return ScalarField.real(chart, chart.full(vals))
    if kind == "expansion":
        terms = tuple(LogTerm(*t[:3]) for t in spec["terms"])
        return evaluate_expansion(LogExpansion(terms), model) * float(spec.get("scale", 1.0))
    raise ConfigError(f"unknown decay field kind {kind!r}")


def _run_decay(cfg: ExperimentConfig, chart: GridChart, p: Params) -> Outcome:
    model = build_model(chart, p.get("model", {}))
    m = int(p.require("m"))
    u = _decay_field(model, p.require("field"))
    expect = p.get("expect", "pass")
    res = decay_bound_check(u, m, model)
    report = res.to_dict()
    report["expect"] = expect
    outcome = "pass" if res.passed else "fail"
    mids = 0.5 * (res.band_edges[:-1] + res.band_edges[1:])
    return Outcome(
        outcome == expect,
        report,
        {"metric": "constant", "value": res.constant},
        curves={"bands": (["minus_log_r", "band_max"], list(zip(mids, res.band_maxima)))},
    )


def _run_curvature_profile(cfg: ExperimentConfig, chart: GridChart, p: Params) -> Outcome:
    model = build_model(chart, p.get("model", {}))
    claimed_b = float(p.get("expect_b", -1.0 / chart.n))
    claimed_a = float(p.get("expect_a", 0.0))
    tol_b = float(p.get("tolerance_b", 0.1))
    tol_a = float(p.get("tolerance_a", 0.05))
    t0 = time.perf_counter()
    fit, norm = curvature_decay_profile(model, float(p.get("fraction", 0.5)))
    report = fit.to_dict()
    report.update(expect_a=claimed_a, expect_b=claimed_b)
    ok = fit.status == "ok" and abs(fit.b - claimed_b) <= tol_b and abs(fit.a - claimed_a) <= tol_a
    return Outcome(
        ok,
        report,
        {"metric": "log_power", "value": fit.b, "claimed": claimed_b},
        curves={"curvature": (["radius", "max_norm"], list(zip(fit.radii, fit.values)))},
        fields={"curvature_norm": norm},
        timings={"profile": time.perf_counter() - t0},
    )


def _run_growth_profile(cfg: ExperimentConfig, chart: GridChart, p: Params) -> Outcome:
    model = build_model(chart, p.get("model", {}))
    metric = p.get("metric", "model")
    if metric == "model":
        g = omega_phi(model)
    elif metric == "euclidean":
        g = euclidean_reference(chart)
    else:
        raise ConfigError(f"unknown metric {metric!r}; expected 'model' or 'euclidean'")
    fraction = float(p.get("fraction", 0.5))
    comp = completeness_profile(g, model, fraction)
    vol = volume_growth_profile(g, model, fraction)
    report = {"completeness": comp.to_dict(), "volume": vol.to_dict()}
    checks = []
    expect_p = p.get("expect_exponent")
    if expect_p is not None:
        checks.append(comp.status == "divergent" and abs(comp.exponent - float(expect_p)) <= float(p.get("tolerance", 0.05)))
    if p.get("expect_bounded") is not None:
        checks.append((comp.status == "bounded") == bool(p.get("expect_bounded")))
    if p.get("max_alpha") is not None:
        checks.append(vol.alpha is not None and vol.alpha <= float(p.get("max_alpha")))
    expect_alpha = p.get("expect_alpha")
    if expect_alpha is not None:
        checks.append(abs(vol.alpha - float(expect_alpha)) <= float(p.get("alpha_tolerance", 0.1)))
    rows = list(zip(comp.radii, comp.lengths, vol.volumes))
    return Outcome(
        all(checks),
        report,
        {"metric": "length_exponent", "value": comp.exponent, "claimed": expect_p},
        curves={"growth": (["radius", "length", "volume"], rows)},
    )


RUNNERS = {
    "solve-calabi": _run_solve_calabi,
    "solve-perturbed": _run_solve_perturbed,
    "model-metric": _run_model_metric,
    "barrier": _run_barrier,
    "decay": _run_decay,
    "curvature-profile": _run_curvature_profile,
    "growth-profile": _run_growth_profile,
}


def run_experiment(cfg: ExperimentConfig) -> tuple[Outcome, dict]:
    """Run one configuration; returns the outcome and the resolved config."""
    chart = GridChart.from_dict(cfg.chart)
    params = Params(cfg.payload)
    outcome = RUNNERS[cfg.kind](cfg, chart, params)
    resolved = cfg.to_dict()
    resolved["chart"] = chart.to_dict()
    resolved["payload"] = params.resolved
    return outcome, resolved
