"""Floquet decomposition of periodic Lindblad dynamics.

For a generator with period ``T`` the propagator factorizes as::

    V(t2, t1) = K(t2 - t0) exp(L_F (t2 - t1)) J(t1 - t0)

with ``exp(L_F T) = V(t0 + T, t0)`` and T-periodic maps ``K`` (micromotion)
and ``J`` (defect). This module computes ``L_F`` exactly (matrix logarithm of
the monodromy) and by the Magnus series up to second order, ``K``/``J`` by
direct propagation and by harmonic balance, and the periodic steady state
from the truncated Fourier block system.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import (
    BranchCutError,
    ConvergenceError,
    DegenerateSteadyStateError,
    FloquetLindbladError,
    GaugeAmbiguityError,
    IllConditionedPropagatorError,
    TruncationError,
)
from .propagation import (
    DEFAULT_TOL,
    PeriodicLindbladian,
    matrix_exp,
    matrix_log_principal,
    monodromy,
    ordered_exponential,
    propagators_on_grid,
    steps_for_tolerance,
)
from .superop import (
    DensityMatrix,
    Observable,
    Superoperator,
    _as_matrix,
    devectorize,
    hamiltonian_superop,
    hermitize,
    trace_distance,
    vectorize,
)

__all__ = [
    "FloquetGenerator",
    "FourierSeriesSuperop",
    "SteadyStateSeries",
    "FloquetDecomposition",
    "StroboscopicTrajectory",
    "DefectSamples",
    "ClosedSystemReduction",
    "floquet_generator_exact",
    "align_branch",
    "lindbladian_fourier",
    "magnus_generator",
    "micromotion_ode",
    "micromotion_fourier",
    "defect_fourier",
    "defect_map",
    "factorized_propagator",
    "floquet_decompose",
    "steady_state_block",
    "stroboscopic_evolve",
    "closed_system_reduce",
]

log = logging.getLogger(__name__)


# --------------------------------------------------------------------------
# result types
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class FloquetGenerator:
    """A time-independent generator ``L_F[t0]`` for a period ``T``.

    ``method`` is one of ``"exact-log"``, ``"magnus"`` or ``"analytic"``.
    For series methods ``terms`` holds the individual orders
    ``L_F^(0), L_F^(1), ...`` whose sum is ``generator``.
    """

    generator: Superoperator
    period: float
    t0: float = 0.0
    method: str = "exact-log"
    order: int | None = None
    terms: tuple = ()
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        if not isinstance(self.generator, Superoperator):
            object.__setattr__(self, "generator", Superoperator(self.generator))

    @property
    def data(self) -> np.ndarray:
        return self.generator.data

    @property
    def dim(self) -> int:
        return self.generator.dim

    @property
    def omega(self) -> float:
        return 2 * math.pi / self.period

    @property
    def label(self) -> str:
        if self.method == "exact-log":
            return "exact-log"
        return f"{self.method}{self.order}"

    def propagator(self, t: float) -> np.ndarray:
        """``exp(L_F t)``."""
        return matrix_exp(self.data * t)

    def increment(self, order: int) -> np.ndarray:
        """The single-order term ``L_F^(order)``."""
        return np.asarray(self.terms[order])


@dataclass(frozen=True, eq=False)
class FourierSeriesSuperop:
    """Truncated Fourier series ``F(t) = sum_{|m|<=M} C_m exp(i w m t)``.

    The time variable is measured from the anchor ``t0``. ``residual`` is the
    reconstruction or equation residual of whichever routine produced the
    coefficients.
    """

    coefficients: np.ndarray
    base_frequency: float
    truncation: int
    residual: float = 0.0
    t0: float = 0.0

    def __post_init__(self):
        c = np.array(self.coefficients, dtype=complex)
        if c.ndim != 3 or c.shape[0] != 2 * self.truncation + 1:
            raise ValueError(f"coefficient stack {c.shape} inconsistent with truncation {self.truncation}")
        c.setflags(write=False)
        object.__setattr__(self, "coefficients", c)

    @property
    def period(self) -> float:
        return 2 * math.pi / self.base_frequency

    @property
    def harmonics(self) -> np.ndarray:
        return np.arange(-self.truncation, self.truncation + 1)

    def coefficient(self, m: int) -> np.ndarray:
        if abs(m) > self.truncation:
            return np.zeros(self.coefficients.shape[1:], dtype=complex)
        return self.coefficients[m + self.truncation]

    def __call__(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        phases = np.exp(1j * self.base_frequency * np.multiply.outer(t, self.harmonics))
        return np.tensordot(phases, self.coefficients, axes=([-1], [0]))

    def harmonic_content(self, tol: float = 1e-12) -> int:
        """Largest ``|m|`` whose coefficient exceeds ``tol`` (relative to the largest)."""
        norms = np.max(np.abs(self.coefficients), axis=(1, 2))
        cut = tol * max(1.0, float(norms.max()))
        nonzero = np.abs(self.harmonics[norms > cut])
        return int(nonzero.max()) if nonzero.size else 0


@dataclass(frozen=True, eq=False)
class SteadyStateSeries:
    """Fourier coefficients ``rho_m`` of the asymptotic periodic state.

    ``symmetry_defect`` is ``max |rho_{-m} - rho_m^dag|`` before the
    coefficients were symmetrized, a health indicator for the solver.
    """

    rho_m: np.ndarray
    base_frequency: float
    residual: float
    truncation: int
    symmetry_defect: float = 0.0
    singular_values: tuple = ()
    t0: float = 0.0

    def coefficient(self, m: int) -> np.ndarray:
        if abs(m) > self.truncation:
            return np.zeros(self.rho_m.shape[1:], dtype=complex)
        return self.rho_m[m + self.truncation]

    def __call__(self, t) -> np.ndarray:
        """``rho(t)`` reconstructed from the series (``t`` absolute)."""
        t = np.asarray(t, dtype=float) - self.t0
        harm = np.arange(-self.truncation, self.truncation + 1)
        phases = np.exp(1j * self.base_frequency * np.multiply.outer(t, harm))
        rho = np.tensordot(phases, self.rho_m, axes=([-1], [0]))
        return 0.5 * (rho + np.swapaxes(rho.conj(), -1, -2))

    def state(self, t: float) -> DensityMatrix:
        return DensityMatrix(self(t), validate=False)


@dataclass(frozen=True, eq=False)
class FloquetDecomposition:
    """Effective generator plus micromotion (and optionally defect) series."""

    generator: FloquetGenerator
    micromotion: FourierSeriesSuperop
    defect: FourierSeriesSuperop | None = None

    def micromotion_at(self, t: float) -> np.ndarray:
        return self.micromotion(t - self.generator.t0)

    def defect_at(self, t: float) -> np.ndarray:
        if self.defect is None:
            raise ValueError("decomposition was built without the defect series")
        return self.defect(t - self.generator.t0)

    def propagator(self, t2: float, t1: float) -> np.ndarray:
        """``K(t2 - t0) exp(L_F (t2 - t1)) J(t1 - t0)`` from the series."""
        return self.micromotion_at(t2) @ self.generator.propagator(t2 - t1) @ self.defect_at(t1)


@dataclass(frozen=True, eq=False)
class DefectSamples:
    """``J(t)`` on a grid with the condition numbers of the inverted propagators."""

    times: np.ndarray
    maps: tuple
    condition_numbers: np.ndarray

    def __iter__(self):
        return iter(self.maps)

    def __getitem__(self, i):
        return self.maps[i]

    def __len__(self):
        return len(self.maps)


@dataclass(frozen=True, eq=False)
class StroboscopicTrajectory:
    """States ``exp(L_F k T) rho0`` for ``k = 0..n``.

    Truncated-Magnus generators need not be completely positive, so the
    states are kept as raw Hermitian arrays; ``trace_warning`` and
    ``positivity_warning`` flag departures from the state space.
    """

    times: np.ndarray
    states: np.ndarray
    max_trace_drift: float
    min_eigenvalue: float
    trace_warning: bool
    positivity_warning: bool


@dataclass(frozen=True, eq=False)
class ClosedSystemReduction:
    """Comparison of Liouville-space and Hilbert-space Floquet data."""

    floquet_hamiltonian: Observable
    liouville_generator: FloquetGenerator
    one_period_mismatch: float
    generator_gap: float
    gauge_difference: bool
    micromotion_error: float
    trajectory_error: float

    @property
    def consistent(self) -> bool:
        return self.one_period_mismatch <= 1e-9 and self.micromotion_error <= 1e-8 and self.trajectory_error <= 1e-9


# --------------------------------------------------------------------------
# exact generator
# --------------------------------------------------------------------------


def floquet_generator_exact(L: PeriodicLindbladian, t0: float = 0.0, *, reference=None,
                            tol: float = DEFAULT_TOL, scheme: str = "magnus4") -> FloquetGenerator:
    """``L_F[t0] = log(V(t0 + T, t0)) / T`` on the principal branch.

    If ``reference`` (a generator or matrix) is given, the result is moved to
    the element of the logarithm set closest to it, see :func:`align_branch`.
    """
    mono = monodromy(L, t0, tol=tol, scheme=scheme)
    try:
        log_m = matrix_log_principal(mono.data)
    except BranchCutError as exc:
        raise BranchCutError(exc.eigenvalue, t0=t0) from exc
    gen = FloquetGenerator(
        Superoperator(log_m / L.period),
        L.period,
        t0,
        "exact-log",
        info={"monodromy": mono.data, "steps": mono.steps},
    )
    if reference is not None:
        gen = align_branch(gen, reference)
    return gen


def align_branch(gen: FloquetGenerator, reference, *, max_condition: float = 1e10) -> FloquetGenerator:
    """Shift eigenvalues of ``gen`` by multiples of ``2 pi i / T`` toward ``reference``.

    Every result satisfies ``exp(L_F T) == exp(gen T)``, so it is another
    member of the set of valid effective generators. The shift for each
    eigenvector is chosen from the diagonal of ``reference`` in the
    eigenbasis of ``gen``.
    """
    ref = _as_matrix(getattr(reference, "generator", reference))
    G = gen.data
    T = gen.period
    lam, S = np.linalg.eig(G)
    cond = np.linalg.cond(S)
    if cond > max_condition:
        raise FloquetLindbladError(f"generator eigenbasis too ill conditioned for branch alignment ({cond:.2e})")
    S_inv = np.linalg.inv(S)
    ref_diag = np.einsum("ij,jk,ki->i", S_inv, ref, S)
    k = np.round((ref_diag - lam).imag * T / (2 * math.pi))
    if not np.any(k):
        return gen
    aligned = (S * (lam + 2j * math.pi * k / T)) @ S_inv
    info = dict(gen.info)
    info["branch_shifts"] = tuple(int(x) for x in k)
    return FloquetGenerator(Superoperator(aligned), T, gen.t0, gen.method, gen.order, gen.terms, info)


# --------------------------------------------------------------------------
# Fourier coefficients of the generator
# --------------------------------------------------------------------------


def lindbladian_fourier(L: PeriodicLindbladian, M: int, quad_points: int | None = None, *, t0: float = 0.0,
                        residual_tol: float = 1e-8, max_points: int = 2**14) -> FourierSeriesSuperop:
    """Coefficients ``L_m = (1/T) int_0^T L(t0 + t) exp(-i w m t) dt``, ``|m| <= M``.

    Uses the trapezoidal rule on ``quad_points`` uniform nodes (default
    ``max(4M + 4, 64)``), which is spectrally accurate for smooth periodic
    generators. The reconstruction is checked at the staggered midpoints;
    the node count doubles while the residual exceeds ``residual_tol``.

    Raises
    ------
    TruncationError
        If the residual stays above ``residual_tol``, which happens when
        ``M`` is below the harmonic content of ``L``.
    """
    M = int(M)
    if M < 0:
        raise ValueError("M must be non-negative")
    N = int(quad_points) if quad_points is not None else max(4 * M + 4, 64)
    if N < 4 * M + 4:
        raise ValueError(f"quad_points={N} must be at least 4M+4={4 * M + 4}")
    T = L.period
    w = L.omega
    harm = np.arange(-M, M + 1)
    previous = math.inf
    while True:
        ts = np.arange(N) * T / N
        samples = L.sample(t0 + ts)
        phases = np.exp(-1j * w * np.multiply.outer(harm, ts)) / N
        coeffs = np.tensordot(phases, samples, axes=([1], [0]))
        mid = ts + 0.5 * T / N
        recon = np.tensordot(np.exp(1j * w * np.multiply.outer(mid, harm)), coeffs, axes=([1], [0]))
        residual = float(np.max(np.abs(recon - L.sample(t0 + mid))))
        if residual <= residual_tol:
            return FourierSeriesSuperop(coeffs, w, M, residual, t0)
        if N >= max_points or residual > 0.5 * previous:
            raise TruncationError(residual)
        previous = residual
        N *= 2


# --------------------------------------------------------------------------
# Magnus expansion
# --------------------------------------------------------------------------

_GL_NODES = 16


def _commutator(a, b):
    return np.matmul(a, b) - np.matmul(b, a)


def _magnus_terms(L: PeriodicLindbladian, t0: float, panels: int, order: int) -> list[np.ndarray]:
    """Magnus terms ``Omega_1..Omega_{order+1}`` over ``[t0, t0 + T]``.

    Composite Gauss-Legendre quadrature. The running integral
    ``C(t) = int_{t0}^t L`` is assembled from completed panels plus a
    Gauss rule on the partial panel, so the double and triple simplex
    integrals reduce to single integrals:

        Omega_2 = 1/2 int [L, C]
        Omega_3 = 1/6 int ([R, [L, C]] + [C, [L, R]]),   R = Omega_1 - C
    """
    T = L.period
    x, wts = np.polynomial.legendre.leggauss(_GL_NODES)
    u = 0.5 * (x + 1.0)
    wu = 0.5 * wts
    hp = T / panels
    starts = t0 + hp * np.arange(panels)
    outer_t = starts[:, None] + hp * u[None, :]
    D = L.superdim
    L_out = L.sample(outer_t.ravel()).reshape(panels, _GL_NODES, D, D)
    panel_int = hp * np.einsum("q,pqij->pij", wu, L_out)
    omega1 = panel_int.sum(axis=0)
    terms = [omega1]
    if order == 0:
        return terms
    before = np.concatenate([np.zeros((1, D, D), dtype=complex), np.cumsum(panel_int, axis=0)[:-1]])
    inner_t = starts[:, None, None] + hp * u[None, :, None] * u[None, None, :]
    L_in = L.sample(inner_t.ravel()).reshape(panels, _GL_NODES, _GL_NODES, D, D)
    partial = np.einsum("j,k,pjkab->pjab", hp * u, wu, L_in)
    C = (before[:, None] + partial).reshape(-1, D, D)
    Lf = L_out.reshape(-1, D, D)
    w_flat = np.tile(hp * wu, panels)
    terms.append(0.5 * np.einsum("n,nij->ij", w_flat, _commutator(Lf, C)))
    if order == 1:
        return terms
    R = omega1[None] - C
    integrand = _commutator(R, _commutator(Lf, C)) + _commutator(C, _commutator(Lf, R))
    terms.append(np.einsum("n,nij->ij", w_flat, integrand) / 6.0)
    return terms


def magnus_generator(L: PeriodicLindbladian, order: int, quad_points: int = 128, *, t0: float = 0.0,
                     tol: float = 1e-9, max_points: int = 2**14) -> FloquetGenerator:
    """Magnus approximation ``L_F ~ sum_{n <= order} L_F^(n)`` with ``L_F^(n) = Omega_{n+1} / T``.

    ``quad_points`` is the initial number of outer Gauss nodes (16 per
    panel); it doubles until the summed generator changes by less than
    ``tol`` in max norm.

    Orders above 2 are not implemented.
    """
    if order not in (0, 1, 2):
        raise ValueError(f"Magnus order must be 0, 1 or 2, got {order}")
    panels = max(1, int(quad_points) // _GL_NODES)
    T = L.period
    prev = None
    while True:
        terms = [om / T for om in _magnus_terms(L, t0, panels, order)]
        total = sum(terms)
        if prev is not None:
            diff = float(np.max(np.abs(total - prev)))
            if diff < tol:
                break
            if panels * _GL_NODES >= max_points:
                raise ConvergenceError("Magnus quadrature did not converge", difference=diff,
                                       steps=panels * _GL_NODES)
        prev = total
        panels *= 2
    return FloquetGenerator(
        Superoperator(total), T, t0, "magnus", order, tuple(terms),
        info={"quad_points": panels * _GL_NODES, "quad_difference": diff},
    )


# --------------------------------------------------------------------------
# micromotion and defect maps
# --------------------------------------------------------------------------


def _generator_matrix(gen) -> np.ndarray:
    return _as_matrix(getattr(gen, "generator", gen))


def micromotion_ode(L: PeriodicLindbladian, gen: FloquetGenerator, t_grid, *, tol: float = DEFAULT_TOL,
                    scheme: str = "magnus4") -> list[Superoperator]:
    """``K(t) = V(t0 + t, t0) exp(-L_F t)`` on an ascending grid of ``t >= 0``.

    This is the solution of ``dK/dt = L(t + t0) K - K L_F`` with ``K(0) = 1``.
    """
    taus = np.asarray(t_grid, dtype=float).ravel()
    if taus.size and taus[0] < 0:
        raise ValueError("micromotion times are measured from t0 and must be >= 0")
    G = _generator_matrix(gen)
    t0 = getattr(gen, "t0", 0.0)
    props = propagators_on_grid(L, t0 + taus, t_start=t0, tol=tol, scheme=scheme)
    back = matrix_exp(-np.multiply.outer(taus, G))
    return [Superoperator(p @ b) for p, b in zip(props, back)]


def defect_map(L: PeriodicLindbladian, gen: FloquetGenerator, t_grid, *, tol: float = DEFAULT_TOL,
               scheme: str = "magnus4", max_condition: float = 1e12) -> DefectSamples:
    """``J(t) = exp(L_F t) V(t0, t0 + t)`` on an ascending grid of ``t >= 0``.

    ``V(t0, t0 + t)`` is the inverse of the forward propagator.

    Raises
    ------
    IllConditionedPropagatorError
        If a forward propagator has condition number above ``max_condition``.
    """
    taus = np.asarray(t_grid, dtype=float).ravel()
    if taus.size and taus[0] < 0:
        raise ValueError("defect times are measured from t0 and must be >= 0")
    G = _generator_matrix(gen)
    t0 = getattr(gen, "t0", 0.0)
    props = propagators_on_grid(L, t0 + taus, t_start=t0, tol=tol, scheme=scheme)
    conds = np.linalg.cond(props) if taus.size else np.zeros(0)
    worst = float(np.max(conds, initial=0.0))
    if worst > max_condition:
        raise IllConditionedPropagatorError(worst)
    fwd = matrix_exp(np.multiply.outer(taus, G))
    maps = tuple(Superoperator(f @ np.linalg.inv(p)) for f, p in zip(fwd, props))
    return DefectSamples(taus, maps, conds)


def factorized_propagator(L: PeriodicLindbladian, gen: FloquetGenerator, t2: float, t1: float, *,
                          tol: float = DEFAULT_TOL, scheme: str = "magnus4") -> np.ndarray:
    """``K(d2) exp(L_F (t2 - t1)) J(d1)`` with ``d_i = (t_i - t0) mod T``.

    Equals ``V(t2, t1)`` when ``gen`` is an exact-log generator.
    """
    T = gen.period
    d2 = (t2 - gen.t0) % T
    d1 = (t1 - gen.t0) % T
    K = micromotion_ode(L, gen, [d2], tol=tol, scheme=scheme)[0].data
    J = defect_map(L, gen, [d1], tol=tol, scheme=scheme)[0].data
    return K @ gen.propagator(t2 - t1) @ J


def _harmonic_balance(L_series: FourierSeriesSuperop, G: np.ndarray, M: int, side: str,
                      rank_tol: float = 1e-13) -> FourierSeriesSuperop:
    """Solve the truncated Fourier equations for ``K_m`` (side="left") or ``J_m`` ("right").

    K:  i w m K_m = sum_n L_n K_{m-n} - K_m G
    J:  i w m J_m = G J_m - sum_n J_{m-n} L_n
    with the anchoring constraint ``sum_m X_m = 1``.
    """
    D = G.shape[0]
    w = L_series.base_frequency
    eye_D = np.eye(D)
    eye_big = np.eye(D * D)
    nb = 2 * M + 1
    A = np.zeros((nb * D * D, nb * D * D), dtype=complex)
    for i, m in enumerate(range(-M, M + 1)):
        rows = slice(i * D * D, (i + 1) * D * D)
        for j, mp in enumerate(range(-M, M + 1)):
            Ln = L_series.coefficient(m - mp)
            if side == "left":
                block = np.kron(eye_D, Ln)
            else:
                block = -np.kron(Ln.T, eye_D)
            if i == j:
                if side == "left":
                    block = block - np.kron(G.T, eye_D) - 1j * w * m * eye_big
                else:
                    block = block + np.kron(eye_D, G) - 1j * w * m * eye_big
            A[rows, j * D * D:(j + 1) * D * D] = block
    weight = max(1.0, float(np.max(np.abs(A))))
    C = weight * np.tile(eye_big, (1, nb))
    rhs = np.concatenate([np.zeros(nb * D * D, dtype=complex), weight * eye_D.reshape(-1, order="F")])
    system = np.vstack([A, C])
    sv = np.linalg.svd(system, compute_uv=False)
    if sv[-1] <= rank_tol * sv[0]:
        raise GaugeAmbiguityError(
            f"micromotion gauge ambiguity: singular value ratio {sv[-1] / sv[0]:.3e}"
        )
    x, *_ = np.linalg.lstsq(system, rhs, rcond=None)
    residual = float(np.max(np.abs(A @ x)))
    coeffs = np.stack([devectorize(x[i * D * D:(i + 1) * D * D], D) for i in range(nb)])
    return FourierSeriesSuperop(coeffs, w, M, residual, L_series.t0)


def micromotion_fourier(L_series: FourierSeriesSuperop, gen: FloquetGenerator, M: int) -> FourierSeriesSuperop:
    """Harmonic-balance solution for the micromotion coefficients ``K_m``, ``|m| <= M``.

    Solves the truncated equations ``i w m K_m = sum_n L_n K_{m-n} - K_m L_F``
    together with ``sum_m K_m = 1`` (so ``K(0) = 1``) as one weighted least
    squares problem. ``residual`` is the max-norm equation residual.

    Raises
    ------
    GaugeAmbiguityError
        If the bordered system is rank deficient.
    """
    if hasattr(gen, "period") and not math.isclose(gen.period, L_series.period, rel_tol=1e-12):
        raise ValueError("generator and Fourier series have different periods")
    return _harmonic_balance(L_series, _generator_matrix(gen), int(M), "left")


def defect_fourier(L_series: FourierSeriesSuperop, gen: FloquetGenerator, M: int) -> FourierSeriesSuperop:
    """Harmonic-balance coefficients ``J_m`` of the defect map, anchored by ``J(0) = 1``."""
    if hasattr(gen, "period") and not math.isclose(gen.period, L_series.period, rel_tol=1e-12):
        raise ValueError("generator and Fourier series have different periods")
    return _harmonic_balance(L_series, _generator_matrix(gen), int(M), "right")


def floquet_decompose(L: PeriodicLindbladian, M: int = 8, *, t0: float = 0.0, generator: FloquetGenerator | None = None,
                      series_truncation: int | None = None, with_defect: bool = False) -> FloquetDecomposition:
    """Build the full decomposition: exact generator (unless given) and ``K_m`` (and ``J_m``)."""
    gen = generator if generator is not None else floquet_generator_exact(L, t0)
    L_series = lindbladian_fourier(L, series_truncation if series_truncation is not None else _auto_truncation(L, t0),
                                   t0=gen.t0)
    K = micromotion_fourier(L_series, gen, M)
    J = defect_fourier(L_series, gen, M) if with_defect else None
    return FloquetDecomposition(gen, K, J)


def _auto_truncation(L: PeriodicLindbladian, t0: float = 0.0, limit: int = 64) -> int:
    """Harmonic content of ``L`` estimated from a generous trapezoidal transform."""
    probe = lindbladian_fourier(L, limit, 4 * limit + 4, t0=t0, residual_tol=math.inf)
    return probe.harmonic_content()


# --------------------------------------------------------------------------
# steady state
# --------------------------------------------------------------------------


def steady_state_block(L_series: FourierSeriesSuperop, M: int | None = None, *,
                       separation: float = 1e3) -> SteadyStateSeries:
    """Periodic steady state from the truncated block system.

    Solves ``i w m rho_m = sum_n L_n(rho_{m-n})`` for ``|m| <= M``: the
    block matrix has diagonal blocks ``L_0 - i w m`` and off-diagonal blocks
    ``L_{m - m'}``. The null direction is the right singular vector of the
    smallest singular value; it is normalized to ``Tr rho_0 = 1`` and
    symmetrized with ``rho_{-m} = rho_m^dag``.

    The stored residual is ``||B_ext v|| / ||v||`` where ``B_ext`` also keeps
    the rows ``M < |m| <= M + K`` (``K`` the series truncation) that the
    truncated coefficients feed into, so it measures truncation error as
    well as solver error.

    ``M`` defaults to twice the harmonic content of the series plus 4.

    Raises
    ------
    DegenerateSteadyStateError
        If the two smallest singular values are not separated by ``separation``.
    """
    if M is None:
        M = 2 * L_series.harmonic_content() + 4
    M = int(M)
    D = L_series.coefficients.shape[1]
    d = int(round(math.sqrt(D)))
    w = L_series.base_frequency
    nb = 2 * M + 1
    B = np.zeros((nb * D, nb * D), dtype=complex)
    for i, m in enumerate(range(-M, M + 1)):
        for j, mp in enumerate(range(-M, M + 1)):
            block = L_series.coefficient(m - mp)
            if i == j:
                block = block - 1j * w * m * np.eye(D)
            B[i * D:(i + 1) * D, j * D:(j + 1) * D] = block
    _, sv, vh = np.linalg.svd(B)
    floor = np.finfo(float).eps * sv[0] * B.shape[0]
    if sv.size > 1 and sv[-2] < separation * max(sv[-1], floor):
        raise DegenerateSteadyStateError(sv[-2:])
    v = vh[-1].conj()
    rho = np.stack([devectorize(v[i * D:(i + 1) * D], d) for i in range(nb)])
    tr0 = np.trace(rho[M])
    if abs(tr0) < 1e-14:
        raise FloquetLindbladError("steady-state null vector has vanishing trace")
    rho = rho / tr0
    mirrored = np.conj(np.swapaxes(rho[::-1], -1, -2))
    symmetry_defect = float(np.max(np.abs(rho - mirrored)))
    rho = 0.5 * (rho + mirrored)
    vec = np.concatenate([vectorize(r) for r in rho])
    residual = _series_residual(L_series, rho) / float(np.linalg.norm(vec))
    return SteadyStateSeries(rho, w, residual, M, symmetry_defect, tuple(float(s) for s in sv[-2:]), L_series.t0)


def _series_residual(L_series: FourierSeriesSuperop, rho: np.ndarray) -> float:
    """``|| i w m rho_m - sum_n L_n rho_{m-n} ||`` over all ``m`` the truncated series couples to."""
    M = (rho.shape[0] - 1) // 2
    K = L_series.truncation
    d = rho.shape[1]
    vecs = np.stack([vectorize(r) for r in rho])
    total = 0.0
    for m in range(-M - K, M + K + 1):
        acc = np.zeros(d * d, dtype=complex)
        for mp in range(max(-M, m - K), min(M, m + K) + 1):
            acc += L_series.coefficient(m - mp) @ vecs[mp + M]
        if abs(m) <= M:
            acc -= 1j * L_series.base_frequency * m * vecs[m + M]
        total += float(np.vdot(acc, acc).real)
    return math.sqrt(total)


# --------------------------------------------------------------------------
# stroboscopic evolution
# --------------------------------------------------------------------------


def stroboscopic_evolve(gen: FloquetGenerator, rho0, n_periods: int, *,
                        trace_tol: float = 1e-8, psd_tol: float = 1e-10) -> StroboscopicTrajectory:
    """States ``exp(L_F k T) rho0`` at ``t0 + k T`` for ``k = 0..n_periods``.

    Departures from trace one or positivity are flagged on the result rather
    than raised or projected away.
    """
    if n_periods < 0:
        raise ValueError("n_periods must be >= 0")
    rho = _as_matrix(rho0) if isinstance(rho0, DensityMatrix) else DensityMatrix(rho0).data
    d = rho.shape[0]
    step = gen.propagator(gen.period)
    v = vectorize(rho).astype(complex)
    states = [hermitize(rho)]
    for _ in range(n_periods):
        v = step @ v
        states.append(hermitize(devectorize(v, d)))
    states = np.stack(states)
    drift = float(np.max(np.abs(np.trace(states, axis1=1, axis2=2) - 1)))
    min_eig = float(np.min(np.linalg.eigvalsh(states)))
    times = gen.t0 + gen.period * np.arange(n_periods + 1)
    return StroboscopicTrajectory(times, states, drift, min_eig, drift > trace_tol, min_eig < -psd_tol)


# --------------------------------------------------------------------------
# closed systems
# --------------------------------------------------------------------------


def closed_system_reduce(hamiltonian_at: Callable[[float], np.ndarray], period: float, *, t0: float = 0.0,
                         sample_times: Sequence[float] | None = None, states: Sequence | None = None,
                         tol: float = DEFAULT_TOL) -> ClosedSystemReduction:
    """Check the open-system machinery against Hilbert-space Floquet theory for ``L = -i[H(t), .]``.

    Computes ``H_F = (i/T) log U(t0 + T, t0)`` from the unitary propagator
    and ``L_F`` from the Liouvillian independently, then compares

    * ``exp(L_F T)`` with ``exp(-i [H_F, .] T)`` (``one_period_mismatch``),
    * ``K(t) rho`` with ``P(t) rho P(t)^dag``, ``P(t) = U(t) exp(i H_F t)``
      (``micromotion_error``, with ``L_F`` moved to the branch of ``H_F``),
    * ``V(t, t0) rho`` with ``U(t) rho U(t)^dag`` (``trajectory_error``,
      trace distance).

    A generator mismatch whose one-period exponentials agree is a log-branch
    gauge difference and is reported, not raised.
    """
    T = float(period)

    def h_stack(ts):
        return np.stack([np.asarray(hamiltonian_at(float(t)), dtype=complex) for t in np.ravel(ts)])

    d = h_stack([t0]).shape[1]
    L = PeriodicLindbladian(lambda t: hamiltonian_superop(h_stack([t])[0]), T, "closed",
                            batch_at=lambda ts: -1j * _batched_commutator_superop(h_stack(ts)))
    u_sample = lambda ts: -1j * h_stack(ts)  # noqa: E731
    U_T, _ = steps_for_tolerance(u_sample, t0, t0 + T, tol=tol, initial_steps=8)
    try:
        HF = 1j * matrix_log_principal(U_T) / T
    except BranchCutError as exc:
        raise BranchCutError(exc.eigenvalue, "log branch ambiguity in Hilbert-space propagator", t0=t0) from exc
    HF = hermitize(HF)
    hf_superop = hamiltonian_superop(HF)
    gen = floquet_generator_exact(L, t0, tol=tol)
    mismatch = float(np.max(np.abs(matrix_exp(gen.data * T) - matrix_exp(hf_superop * T))))
    gap = float(np.max(np.abs(gen.data - hf_superop)))
    aligned = align_branch(gen, hf_superop)

    if sample_times is None:
        sample_times = np.linspace(0.0, T, 9)
    taus = np.sort(np.asarray(sample_times, dtype=float))
    if states is None:
        rng = np.random.default_rng(0)
        states = [_random_state(d, rng) for _ in range(3)]
    states = [_as_matrix(s) for s in states]

    K = micromotion_ode(L, aligned, taus, tol=tol)
    V = propagators_on_grid(L, t0 + taus, t_start=t0, tol=tol)
    n_steps = 8
    micro_err = 0.0
    traj_err = 0.0
    U = np.eye(d, dtype=complex)
    t_prev = 0.0
    for tau, K_t, V_t in zip(taus, K, V):
        if tau > t_prev:
            _, n_steps = steps_for_tolerance(u_sample, t0 + t_prev, t0 + tau, tol=tol, initial_steps=n_steps // 2)
            U = ordered_exponential(u_sample, t0 + t_prev, t0 + tau, n_steps) @ U
            t_prev = tau
        P = U @ matrix_exp(1j * HF * tau)
        for rho in states:
            k_rho = K_t.apply(rho)
            micro_err = max(micro_err, float(np.max(np.abs(k_rho - P @ rho @ P.conj().T))))
            v_rho = hermitize(devectorize(V_t @ vectorize(rho), d))
            traj_err = max(traj_err, trace_distance(v_rho, U @ rho @ U.conj().T, validate=False))
    return ClosedSystemReduction(
        Observable(HF), gen, mismatch, gap, bool(gap > 1e-8 and mismatch <= 1e-9), micro_err, traj_err
    )


def _batched_commutator_superop(hs: np.ndarray) -> np.ndarray:
    d = hs.shape[-1]
    eye = np.eye(d)
    left = np.einsum("ab,nij->naibj", eye, hs).reshape(hs.shape[0], d * d, d * d)
    right = np.einsum("nji,ab->nibja", hs, eye).reshape(hs.shape[0], d * d, d * d)
    return left - right


def _random_state(d: int, rng: np.random.Generator) -> np.ndarray:
    g = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    rho = g @ g.conj().T
    return rho / np.trace(rho)
