"""Scenario runs and parameter studies behind the command-line interface."""

from __future__ import annotations

import io
import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import scipy.stats

from .config import ScenarioConfig, build_lindbladian, initial_density_matrix, model_params
from .errors import FloquetLindbladError, TruncationError
from .floquet import (
    FloquetGenerator,
    floquet_generator_exact,
    lindbladian_fourier,
    magnus_generator,
    micromotion_fourier,
    micromotion_ode,
    steady_state_block,
    stroboscopic_evolve,
    _GL_NODES,
    _auto_truncation,
    _magnus_terms,
)
from .models import (
    Model1Params,
    Model2Params,
    model1_lindbladian,
    model1_magnus_analytic,
    model2_lindbladian,
    model2_magnus_analytic,
)
from .propagation import PeriodicLindbladian, evolve_state, monodromy, propagators_on_grid
from .superop import (
    SIGMA_X,
    SIGMA_Y,
    SIGMA_Z,
    DensityMatrix,
    devectorize,
    expectation,
    hermitize,
    state_fidelity,
    trace_distance,
    vectorize,
)

__all__ = [
    "RunReport",
    "run_scenario",
    "ScalingTable",
    "scaling_study",
    "DeviationTable",
    "deviation_study",
    "ConvergenceTable",
    "convergence_study",
    "build_generator",
    "CSV_COLUMNS",
]

log = logging.getLogger(__name__)

CSV_COLUMNS = ("time", "method", "sx", "sy", "sz", "trace_distance_vs_exact", "fidelity_vs_exact", "is_stroboscopic")


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


# --------------------------------------------------------------------------
# generators by method name
# --------------------------------------------------------------------------


def build_generator(method: str, L: PeriodicLindbladian, *, t0: float = 0.0, params=None,
                    tol: float = 1e-10) -> FloquetGenerator:
    """Effective generator for a method label from :data:`floquet_lindblad.config.METHODS`."""
    if method == "exact-log":
        return floquet_generator_exact(L, t0, tol=tol)
    if method.startswith("magnus"):
        return magnus_generator(L, int(method[-1]), t0=t0)
    if method.startswith("analytic"):
        order = int(method[-1])
        if t0 != 0.0:
            raise FloquetLindbladError("analytic generators are anchored at t0 = 0")
        if isinstance(params, Model1Params):
            return model1_magnus_analytic(params, order)
        if isinstance(params, Model2Params):
            return model2_magnus_analytic(params, order)
        raise FloquetLindbladError("analytic generators exist only for model1 and model2")
    raise ValueError(f"no generator for method {method!r}")


# --------------------------------------------------------------------------
# scenario runs
# --------------------------------------------------------------------------


@dataclass
class RunReport:
    """Per-method expectation series on a shared time grid plus deviations from ``exact``."""

    config: dict
    times: np.ndarray
    is_stroboscopic: np.ndarray
    bloch: dict = field(default_factory=dict)
    trace_distance: dict = field(default_factory=dict)
    fidelity: dict = field(default_factory=dict)
    residuals: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)
    errors: dict = field(default_factory=dict)
    wall_time: dict = field(default_factory=dict)

    @property
    def methods(self) -> list[str]:
        return list(self.bloch)

    @property
    def ok(self) -> bool:
        return not self.errors

    def stroboscopic_table(self) -> dict:
        """``{method: (periods, trace_distance, fidelity)}`` at stroboscopic times."""
        idx = np.flatnonzero(self.is_stroboscopic)
        return {m: (np.arange(idx.size), self.trace_distance[m][idx], self.fidelity[m][idx])
                for m in self.methods if m in self.trace_distance}

    def max_stroboscopic_deviation(self, method: str) -> float:
        _, td, _ = self.stroboscopic_table()[method]
        return float(np.max(td))

    def rows(self):
        for m in self.methods:
            sx, sy, sz = self.bloch[m].T
            td = self.trace_distance.get(m, np.full(self.times.size, np.nan))
            fid = self.fidelity.get(m, np.full(self.times.size, np.nan))
            for i, t in enumerate(self.times):
                yield (t, m, sx[i], sy[i], sz[i], td[i], fid[i], int(self.is_stroboscopic[i]))

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write(",".join(CSV_COLUMNS) + "\n")
        for t, m, sx, sy, sz, td, fid, strob in self.rows():
            buf.write(",".join([_fmt(t), m, _fmt(sx), _fmt(sy), _fmt(sz), _fmt(td), _fmt(fid), str(strob)]) + "\n")
        return buf.getvalue()

    def to_json(self) -> str:
        from . import __version__

        meta = {
            "config": self.config,
            "version": __version__,
            "residuals": self.residuals,
            "warnings": self.warnings,
            "errors": self.errors,
            "wall_time": self.wall_time,
        }
        rows = [dict(zip(CSV_COLUMNS, (float(r[0]), r[1], *map(_json_float, r[2:7]), r[7]))) for r in self.rows()]
        return json.dumps({"meta": meta, "columns": list(CSV_COLUMNS), "rows": rows}, indent=1, sort_keys=True)

    def write(self, path: str | Path, fmt: str = "csv") -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        text = self.to_csv() if fmt == "csv" else self.to_json()
        with open(path, "w", newline="\n") as fh:
            fh.write(text)
        return path


def _json_float(x):
    x = float(x)
    return None if math.isnan(x) else x


def _bloch_rows(states) -> np.ndarray:
    return np.array([[expectation(o, s) for o in (SIGMA_X, SIGMA_Y, SIGMA_Z)] for s in states])


def run_scenario(config: ScenarioConfig) -> RunReport:
    """Exact trajectory plus each requested approximate generator on one time grid.

    Approximate states are ``K(t mod T) exp(L_F (t - t0)) rho0`` where
    ``K(tau) = V(t0 + tau, t0) exp(-L_F tau)``; at stroboscopic times this is
    ``exp(L_F k T) rho0``. Numerical failures are recorded per method.
    """
    L = build_lindbladian(config)
    params = model_params(config) if config.model in ("model1", "model2") else None
    T = L.period
    ppp = config.points_per_period
    n_pts = config.n_periods * ppp + 1
    k = np.arange(n_pts)
    times = config.t0 + k * T / ppp
    strob = (k % ppp) == 0
    rho0 = initial_density_matrix(config.initial_state, L.dim)
    report = RunReport(config.to_dict(), times, strob)

    exact_states = None
    start = time.perf_counter()
    try:
        exact_states = np.stack([s.data for s in evolve_state(L, rho0, times, tol=config.tol)])
    except FloquetLindbladError as exc:
        report.errors["exact"] = str(exc)
    report.wall_time["exact"] = time.perf_counter() - start

    if "exact" in config.methods and exact_states is not None:
        report.bloch["exact"] = _bloch_rows(exact_states)
        report.trace_distance["exact"] = np.zeros(n_pts)
        report.fidelity["exact"] = np.ones(n_pts)

    taus = np.arange(ppp) * T / ppp
    for method in config.methods:
        if method == "exact":
            continue
        start = time.perf_counter()
        try:
            gen = build_generator(method, L, t0=config.t0, params=params, tol=config.tol)
            K = np.stack([k_.data for k_ in micromotion_ode(L, gen, taus, tol=config.tol)])
            strobo = stroboscopic_evolve(gen, rho0, config.n_periods)
            if strobo.trace_warning:
                report.warnings.append(f"{method}: trace drift {strobo.max_trace_drift:.3e}")
            if strobo.positivity_warning:
                report.warnings.append(f"{method}: state left the positive cone (min eigenvalue "
                                       f"{strobo.min_eigenvalue:.3e})")
            v0 = vectorize(rho0.data).astype(complex)
            states = np.empty((n_pts, L.dim, L.dim), dtype=complex)
            for i in range(n_pts):
                states[i] = hermitize(devectorize(K[i % ppp] @ gen.propagator(times[i] - config.t0) @ v0, L.dim))
            report.bloch[method] = _bloch_rows(states)
            if exact_states is not None:
                report.trace_distance[method] = np.array(
                    [trace_distance(a, b, validate=False) for a, b in zip(states, exact_states)])
                report.fidelity[method] = np.array(
                    [state_fidelity(a, b, validate=False) for a, b in zip(states, exact_states)])
            if "quad_difference" in gen.info:
                report.residuals[f"{method}.quadrature"] = gen.info["quad_difference"]
        except FloquetLindbladError as exc:
            log.warning("method %s failed: %s", method, exc)
            report.errors[method] = str(exc)
        report.wall_time[method] = time.perf_counter() - start

    try:
        series = lindbladian_fourier(L, _auto_truncation(L, config.t0), t0=config.t0)
        ss = steady_state_block(series, max(config.truncation, 2 * series.truncation + 4))
        report.residuals["steady_state"] = ss.residual
        report.residuals["lindbladian_fourier"] = series.residual
    except FloquetLindbladError as exc:
        report.warnings.append(f"steady state: {exc}")
    return report


# --------------------------------------------------------------------------
# studies
# --------------------------------------------------------------------------


def _lindbladian_for(model: str, params: dict) -> tuple[PeriodicLindbladian, object]:
    if model == "model1":
        p = Model1Params(**params)
        return model1_lindbladian(p), p
    if model == "model2":
        p = Model2Params(**params)
        return model2_lindbladian(p), p
    raise ValueError(f"unknown model {model!r}")


@dataclass
class ScalingTable:
    """Micromotion amplitude per drive frequency with a log-log fit."""

    omegas: np.ndarray
    amplitudes: np.ndarray
    slope: float
    slope_stderr: float
    confidence_width: float
    intercept: float
    failures: dict = field(default_factory=dict)

    def to_csv(self) -> str:
        lines = ["omega,amplitude"]
        lines += [f"{_fmt(w)},{_fmt(a)}" for w, a in zip(self.omegas, self.amplitudes)]
        lines.append(f"# slope={_fmt(self.slope)} stderr={_fmt(self.slope_stderr)} "
                     f"ci95={_fmt(self.confidence_width)}")
        return "\n".join(lines) + "\n"


def micromotion_amplitude(L: PeriodicLindbladian, rho0: DensityMatrix, n_periods: int, *, samples: int = 64,
                          tol: float = 1e-10) -> float:
    """Max over one period of the trace distance between ``rho(nT + tau)`` and the
    linear interpolation of ``rho(nT)`` and ``rho((n + 1)T)``."""
    T = L.period
    taus = np.linspace(0.0, T, samples + 1)
    V = propagators_on_grid(L, taus, t_start=0.0, tol=tol)
    M = V[-1]
    v = np.linalg.matrix_power(M, n_periods) @ vectorize(rho0.data).astype(complex)
    d = rho0.dim
    a = hermitize(devectorize(v, d))
    b = hermitize(devectorize(M @ v, d))
    amp = 0.0
    for tau, V_t in zip(taus, V):
        exact = hermitize(devectorize(V_t @ v, d))
        base = (1 - tau / T) * a + (tau / T) * b
        amp = max(amp, trace_distance(exact, base, validate=False))
    return amp


def _settle_periods(gamma: float, period: float, settle: float = 60.0) -> int:
    if gamma <= 0:
        return 0
    return int(math.ceil(settle / gamma / period))


def scaling_study(model: str, params: dict, omega_list: Sequence[float], n_periods: int | None = None, *,
                  rho0: DensityMatrix | None = None, samples: int = 64, tol: float = 1e-10) -> ScalingTable:
    """Micromotion amplitude versus drive frequency in the steady regime.

    ``n_periods`` is the number of periods to settle before measuring; by
    default enough periods to cover ``60 / gamma``.

    Raises
    ------
    FloquetLindbladError
        If fewer than three frequencies give a valid amplitude.
    """
    if len(omega_list) < 3:
        raise ValueError("scaling_study needs at least three frequencies")
    rho0 = rho0 or DensityMatrix.excited()
    omegas, amps, failures = [], [], {}
    for w in omega_list:
        try:
            L, p = _lindbladian_for(model, {**params, "omega": float(w)})
            n = n_periods if n_periods is not None else _settle_periods(p.gamma, L.period)
            amps.append(micromotion_amplitude(L, rho0, n, samples=samples, tol=tol))
            omegas.append(float(w))
        except FloquetLindbladError as exc:
            failures[float(w)] = str(exc)
    if len(omegas) < 3:
        raise FloquetLindbladError(f"only {len(omegas)} valid points in scaling study: {failures}")
    omegas = np.array(omegas)
    amps = np.array(amps)
    if np.all(amps > 0):
        fit = scipy.stats.linregress(np.log(omegas), np.log(amps))
        slope, stderr, intercept = fit.slope, fit.stderr, fit.intercept
        width = float(scipy.stats.t.ppf(0.975, len(omegas) - 2) * stderr) if len(omegas) > 2 else math.inf
    else:
        slope = stderr = intercept = width = math.nan
    return ScalingTable(omegas, amps, float(slope), float(stderr), width, float(intercept), failures)


@dataclass
class DeviationTable:
    """Maximum stroboscopic trace distance between exact and approximate evolution."""

    parameter: str
    values: np.ndarray
    max_deviation: np.ndarray
    per_period: np.ndarray
    method: str

    def to_csv(self) -> str:
        lines = [f"{self.parameter},max_trace_distance"]
        lines += [f"{_fmt(v)},{_fmt(d)}" for v, d in zip(self.values, self.max_deviation)]
        return "\n".join(lines) + "\n"


def stroboscopic_deviation(L: PeriodicLindbladian, gen: FloquetGenerator, rho0: DensityMatrix, n_periods: int, *,
                           tol: float = 1e-10) -> np.ndarray:
    """Trace distance between exact and ``gen`` states at ``k T``, ``k = 0..n``."""
    M = monodromy(L, gen.t0, tol=tol).data
    approx = stroboscopic_evolve(gen, rho0, n_periods).states
    v = vectorize(rho0.data).astype(complex)
    out = np.empty(n_periods + 1)
    for k in range(n_periods + 1):
        out[k] = trace_distance(hermitize(devectorize(v, rho0.dim)), approx[k], validate=False)
        v = M @ v
    return out


def deviation_study(model: str, params: dict, vary: str, values: Sequence[float], *, method: str = "magnus1",
                    n_periods: int = 10, rho0: DensityMatrix | None = None, tol: float = 1e-10) -> DeviationTable:
    """Max stroboscopic deviation of ``method`` while one parameter is varied."""
    rho0 = rho0 or DensityMatrix.excited()
    maxima, rows = [], []
    for v in values:
        L, p = _lindbladian_for(model, {**params, vary: float(v)})
        gen = build_generator(method, L, params=p, tol=tol)
        dev = stroboscopic_deviation(L, gen, rho0, n_periods, tol=tol)
        rows.append(dev)
        maxima.append(float(dev.max()))
    return DeviationTable(vary, np.array(values, dtype=float), np.array(maxima), np.array(rows), method)


@dataclass
class ConvergenceTable:
    """Residual and change per truncation (or quadrature) level."""

    kind: str
    levels: list
    residuals: list
    differences: list
    flags: list

    def to_csv(self) -> str:
        lines = ["level,residual,difference,flag"]
        for lv, r, d, f in zip(self.levels, self.residuals, self.differences, self.flags):
            lines.append(f"{lv},{_fmt(r)},{_fmt(d)},{f}")
        return "\n".join(lines) + "\n"


def convergence_study(config: ScenarioConfig, levels: Sequence[int], kind: str = "steady", *,
                      samples: int = 32) -> ConvergenceTable:
    """Truncation audit.

    ``kind``:

    ``"steady"``
        steady-state block residual vs harmonic cutoff ``M``;
        ``difference`` is the max change of ``rho(t)`` from the previous level.
    ``"micromotion"``
        harmonic-balance ``K_m`` vs cutoff; ``difference`` is the max
        deviation from the propagated ``K(t)`` on ``samples`` times.
    ``"magnus"``
        order-2 Magnus generator vs number of outer quadrature nodes
        (rounded down to whole 16-node panels).

    Levels whose generator series cannot be represented at that cutoff are
    flagged ``insufficient truncation``.
    """
    levels = list(levels)
    if any(b <= a for a, b in zip(levels, levels[1:])):
        raise ValueError("levels must be ascending")
    L = build_lindbladian(config)
    T = L.period
    ts = config.t0 + np.arange(samples) * T / samples
    residuals, diffs, flags = [], [], []
    prev = None
    gen = None
    K_ode = None
    for lv in levels:
        try:
            if kind == "steady":
                ss = steady_state_block(lindbladian_fourier(L, lv, t0=config.t0), lv)
                value = ss(ts)
                residual = ss.residual
            elif kind == "micromotion":
                if gen is None:
                    gen = floquet_generator_exact(L, config.t0, tol=config.tol)
                    K_ode = np.stack([k.data for k in micromotion_ode(L, gen, ts - config.t0, tol=config.tol)])
                K = micromotion_fourier(lindbladian_fourier(L, lv, t0=config.t0), gen, lv)
                value = K(ts - config.t0)
                residual = float(np.max(np.abs(value - K_ode)))
            elif kind == "magnus":
                panels = max(1, lv // _GL_NODES)
                value = sum(_magnus_terms(L, config.t0, panels, 2)) / T
                residual = float("nan")
            else:
                raise ValueError(f"unknown convergence kind {kind!r}")
        except TruncationError as exc:
            residuals.append(exc.residual)
            diffs.append(float("nan"))
            flags.append("insufficient truncation")
            continue
        diffs.append(float(np.max(np.abs(value - prev))) if prev is not None else float("nan"))
        residuals.append(residual)
        flags.append("")
        prev = value
    return ConvergenceTable(kind, levels, residuals, diffs, flags)
