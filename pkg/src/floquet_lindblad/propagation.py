"""Time-ordered propagation of periodic Lindblad generators.

The propagator ``V(t2, t1)`` is built as an ordered product of exact
exponentials of frozen generators, later times acting on the left. Two
single-step rules are available:

``"midpoint"``
    ``exp(h L(t + h/2))``, second order.
``"magnus4"`` (default)
    Two-point Gauss-Legendre Magnus step
    ``exp(h/2 (A1 + A2) + sqrt(3) h^2 / 12 [A2, A1])``, fourth order.

Both are products of exponentials of trace-annihilating matrices, so the
trace is preserved to rounding at every step. Adaptive calls double the step
count until two successive products agree to ``tol`` in max norm.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.linalg

from .errors import (
    BranchCutError,
    ConvergenceError,
    DimensionError,
    FloquetLindbladError,
    IntegrationAccuracyError,
    SingularMonodromyError,
)
from .superop import (
    DensityMatrix,
    Superoperator,
    _as_matrix,
    check_density_matrix,
    devectorize,
    hermitize,
    trace_defect,
)

__all__ = [
    "matrix_exp",
    "matrix_log_principal",
    "PeriodicLindbladian",
    "PropagatorMap",
    "ordered_exponential",
    "propagate",
    "monodromy",
    "evolve_state",
    "propagators_on_grid",
    "steps_for_tolerance",
]

log = logging.getLogger(__name__)

DEFAULT_TOL = 1e-10
MAX_STEPS = 2**20
_CHUNK = 2**13
_SCHEMES = ("midpoint", "magnus4")


# --------------------------------------------------------------------------
# dense kernels
# --------------------------------------------------------------------------


def matrix_exp(a) -> np.ndarray:
    """Matrix exponential (scaling and squaring with Pade approximant).

    Accepts a single square matrix or a stack ``(..., n, n)``. Relative
    accuracy is close to machine precision for the small dense matrices used
    here; the documented target is 1e-12.
    """
    a = np.asarray(_as_matrix(a), dtype=complex)
    if a.ndim < 2 or a.shape[-1] != a.shape[-2]:
        raise DimensionError(f"matrix_exp needs square matrices, got {a.shape}")
    return scipy.linalg.expm(a)


def matrix_log_principal(a, *, branch_tol: float = 1e-10, singular_tol: float = 1e-14,
                         check_tol: float = 1e-10) -> np.ndarray:
    """Principal matrix logarithm, refusing ambiguous or singular input.

    The eigenvalues of the result have imaginary parts in ``(-pi, pi]``.

    Raises
    ------
    SingularMonodromyError
        If an eigenvalue is below ``singular_tol`` relative to the largest.
    BranchCutError
        If an eigenvalue ``mu`` has ``Re mu < 0`` and
        ``|Im mu| <= branch_tol * |mu|``; the principal branch is then not
        well defined.
    """
    a = np.asarray(_as_matrix(a), dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionError(f"matrix_log_principal needs a square matrix, got {a.shape}")
    mu = np.linalg.eigvals(a)
    scale = max(np.max(np.abs(mu)), 1e-300)
    small = np.min(np.abs(mu))
    if small <= singular_tol * scale:
        raise SingularMonodromyError(
            f"singular monodromy (|eigenvalue| {small:.3e} vs scale {scale:.3e})", min_abs_eigenvalue=float(small)
        )
    on_cut = (mu.real < 0) & (np.abs(mu.imag) <= branch_tol * np.abs(mu))
    if np.any(on_cut):
        raise BranchCutError(mu[on_cut][0])
    result = scipy.linalg.logm(a)
    if np.ndim(result) == 0:  # pragma: no cover - scipy < 1.9 returned (logm, err)
        result = result[0]
    result = np.asarray(result, dtype=complex)
    back = scipy.linalg.expm(result)
    err = np.max(np.abs(back - a)) / max(np.max(np.abs(a)), 1.0)
    if err > check_tol:
        raise FloquetLindbladError(f"matrix logarithm failed round-trip check (relative error {err:.3e})")
    return result


# --------------------------------------------------------------------------
# periodic generators
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class PeriodicLindbladian:
    """A generator ``t -> L(t)`` with declared period ``T``.

    ``generator_at(t)`` returns the ``d^2 x d^2`` matrix at one time. An
    optional ``batch_at(ts)`` returning an ``(n, d^2, d^2)`` stack is used by
    the integrators and quadratures when present.

    Periodicity and trace annihilation are checked on 16 sample times at
    construction unless ``check=False``.
    """

    generator_at: Callable[[float], np.ndarray]
    period: float
    label: str = ""
    batch_at: Callable[[np.ndarray], np.ndarray] | None = field(default=None, repr=False)
    check: bool = field(default=True, repr=False)

    def __post_init__(self):
        if not self.period > 0:
            raise ValueError(f"period must be positive, got {self.period}")
        object.__setattr__(self, "period", float(self.period))
        if self.check:
            self._validate()

    def _validate(self, n_samples: int = 16, tol: float = 1e-12):
        # irrational offset so samples avoid special phases
        ts = (np.arange(n_samples) + 0.3819660112501051) * self.period / n_samples
        a = self.sample(ts)
        b = self.sample(ts + self.period)
        scale = max(1.0, float(np.max(np.abs(a))))
        gap = float(np.max(np.abs(a - b)))
        if gap > tol * scale:
            raise ValueError(f"generator '{self.label}' is not {self.period}-periodic (deviation {gap:.3e})")
        for m in a:
            tdef = trace_defect(m)
            if tdef > 1e-10:
                raise ValueError(f"generator '{self.label}' is not trace preserving (defect {tdef:.3e})")

    def __call__(self, t: float) -> np.ndarray:
        return np.asarray(self.generator_at(float(t)), dtype=complex)

    def at(self, t: float) -> Superoperator:
        return Superoperator(self(t))

    def sample(self, ts) -> np.ndarray:
        ts = np.asarray(ts, dtype=float).ravel()
        if self.batch_at is not None:
            return np.asarray(self.batch_at(ts), dtype=complex)
        if ts.size == 0:
            d2 = self(0.0).shape[0]
            return np.zeros((0, d2, d2), dtype=complex)
        return np.stack([self(t) for t in ts])

    @property
    def omega(self) -> float:
        return 2 * math.pi / self.period

    @property
    def dim(self) -> int:
        return int(round(math.sqrt(self(0.0).shape[0])))

    @property
    def superdim(self) -> int:
        return self(0.0).shape[0]

    def with_period(self, period: float, label: str | None = None) -> "PeriodicLindbladian":
        """Same generator with a different declared period (checked)."""
        return PeriodicLindbladian(self.generator_at, period, label or self.label, batch_at=self.batch_at)

    @classmethod
    def constant(cls, generator, period: float = 1.0, label: str = "constant") -> "PeriodicLindbladian":
        g = np.array(_as_matrix(generator), dtype=complex)
        g.setflags(write=False)
        return cls(lambda t: g, period, label, batch_at=lambda ts: np.broadcast_to(g, (len(ts),) + g.shape))

    @classmethod
    def from_terms(cls, terms: Sequence[tuple], period: float, label: str = "") -> "PeriodicLindbladian":
        """Build ``L(t) = sum_k f_k(t) S_k`` from ``(f_k, S_k)`` pairs.

        Each ``f_k`` is a scalar or a numpy-vectorized callable of time.
        """
        coefs = []
        mats = []
        for f, s in terms:
            mats.append(np.asarray(_as_matrix(s), dtype=complex))
            coefs.append(f)
        stack = np.stack(mats)
        stack.setflags(write=False)

        def _coef_matrix(ts: np.ndarray) -> np.ndarray:
            out = np.empty((len(coefs), ts.size), dtype=complex)
            for k, f in enumerate(coefs):
                out[k] = f(ts) if callable(f) else f
            return out

        def batch_at(ts):
            ts = np.asarray(ts, dtype=float).ravel()
            return np.einsum("kn,kij->nij", _coef_matrix(ts), stack)

        def generator_at(t):
            return batch_at(np.array([t]))[0]

        return cls(generator_at, period, label, batch_at=batch_at)


@dataclass(frozen=True, eq=False)
class PropagatorMap:
    """The superoperator ``V(t_end, t_start)``."""

    map: Superoperator
    t_start: float
    t_end: float
    steps: int = 0
    scheme: str = "magnus4"

    @property
    def data(self) -> np.ndarray:
        return self.map.data

    def apply(self, rho) -> np.ndarray:
        return self.map.apply(rho)


# --------------------------------------------------------------------------
# integrators
# --------------------------------------------------------------------------


def _product(mats: np.ndarray) -> np.ndarray:
    """``mats[-1] @ ... @ mats[0]`` by pairwise reduction."""
    while mats.shape[0] > 1:
        if mats.shape[0] % 2:
            tail = mats[-1:]
            mats = mats[:-1]
        else:
            tail = None
        mats = np.matmul(mats[1::2], mats[0::2])
        if tail is not None:
            mats = np.concatenate([mats, tail])
    return mats[0]


_GL_C1 = 0.5 - math.sqrt(3.0) / 6.0
_GL_C2 = 0.5 + math.sqrt(3.0) / 6.0


def _step_exponents(sample: Callable[[np.ndarray], np.ndarray], starts: np.ndarray, h: float,
                    scheme: str) -> np.ndarray:
    if scheme == "midpoint":
        return h * sample(starts + 0.5 * h)
    if scheme == "magnus4":
        a1 = sample(starts + _GL_C1 * h)
        a2 = sample(starts + _GL_C2 * h)
        comm = np.matmul(a2, a1) - np.matmul(a1, a2)
        return 0.5 * h * (a1 + a2) + (math.sqrt(3.0) / 12.0) * h * h * comm
    raise ValueError(f"unknown scheme {scheme!r}; expected one of {_SCHEMES}")


def ordered_exponential(sample: Callable[[np.ndarray], np.ndarray], t1: float, t2: float, steps: int,
                        scheme: str = "magnus4") -> np.ndarray:
    """Fixed-step ordered exponential of a batched matrix-valued function.

    ``sample(ts)`` must return a stack ``(len(ts), n, n)``. Works for
    superoperator generators and for Hilbert-space ``-i H(t)`` alike.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    if t2 < t1:
        raise ValueError(f"t2={t2} precedes t1={t1}")
    h = (t2 - t1) / steps
    result = None
    for lo in range(0, steps, _CHUNK):
        hi = min(steps, lo + _CHUNK)
        starts = t1 + h * np.arange(lo, hi)
        block = _product(matrix_exp(_step_exponents(sample, starts, h, scheme)))
        result = block if result is None else block @ result
    return result


def steps_for_tolerance(sample: Callable[[np.ndarray], np.ndarray], t1: float, t2: float, *,
                        tol: float = DEFAULT_TOL, scheme: str = "magnus4", initial_steps: int = 4,
                        max_steps: int = MAX_STEPS) -> tuple[np.ndarray, int]:
    """Double the step count until successive products differ by < ``tol``.

    Returns the finer product and its step count.
    """
    n = max(1, int(initial_steps))
    coarse = ordered_exponential(sample, t1, t2, n, scheme)
    while True:
        fine = ordered_exponential(sample, t1, t2, 2 * n, scheme)
        diff = float(np.max(np.abs(fine - coarse)))
        if diff < tol:
            log.debug("propagation [%g, %g] converged at %d steps (diff %.2e)", t1, t2, 2 * n, diff)
            return fine, 2 * n
        if 2 * n >= max_steps:
            raise ConvergenceError("propagation did not converge at step ceiling", difference=diff, steps=2 * n)
        n *= 2
        coarse = fine


def _initial_steps(span: float, period: float) -> int:
    return max(2, int(math.ceil(8.0 * span / period)))


def propagate(L: PeriodicLindbladian, t1: float, t2: float, steps: int | None = None, *,
              tol: float = DEFAULT_TOL, scheme: str = "magnus4", max_steps: int = MAX_STEPS) -> PropagatorMap:
    """Propagator ``V(t2, t1)`` of ``d rho/dt = L(t) rho``.

    With ``steps`` given the step count is fixed; otherwise it is chosen by
    step doubling to the tolerance ``tol`` (max-norm difference between
    successive refinements), failing with :class:`ConvergenceError` at
    ``max_steps``.
    """
    t1 = float(t1)
    t2 = float(t2)
    if t2 < t1:
        raise ValueError(f"t2={t2} precedes t1={t1}")
    if t2 == t1:
        return PropagatorMap(Superoperator.identity(L.dim), t1, t2, 0, scheme)
    if steps is not None:
        data = ordered_exponential(L.sample, t1, t2, int(steps), scheme)
        used = int(steps)
    else:
        data, used = steps_for_tolerance(L.sample, t1, t2, tol=tol, scheme=scheme,
                                         initial_steps=_initial_steps(t2 - t1, L.period), max_steps=max_steps)
    return PropagatorMap(Superoperator(data), t1, t2, used, scheme)


def monodromy(L: PeriodicLindbladian, t0: float = 0.0, *, steps: int | None = None, tol: float = DEFAULT_TOL,
              scheme: str = "magnus4") -> PropagatorMap:
    """One-period propagator ``V(t0 + T, t0)``."""
    return propagate(L, t0, t0 + L.period, steps, tol=tol, scheme=scheme)


def propagators_on_grid(L: PeriodicLindbladian, t_grid, t_start: float | None = None, *,
                        tol: float = DEFAULT_TOL, scheme: str = "magnus4") -> np.ndarray:
    """Stack of ``V(t_i, t_start)`` for an ascending grid (``t_start`` defaults to ``t_grid[0]``).

    The step size is fixed once by step doubling over one period from
    ``t_start``; gaps longer than a period reuse the monodromy anchored at
    the gap start.
    """
    grid = np.asarray(t_grid, dtype=float).ravel()
    if grid.size and np.any(np.diff(grid) < 0):
        raise ValueError("t_grid must be ascending")
    start = float(grid[0]) if t_start is None and grid.size else float(t_start or 0.0)
    if grid.size and grid[0] < start:
        raise ValueError(f"grid starts at {grid[0]} before t_start={start}")
    D = L.superdim
    out = np.empty((grid.size, D, D), dtype=complex)
    if grid.size == 0:
        return out
    T = L.period
    _, per_period = steps_for_tolerance(L.sample, start, start + T, tol=tol, scheme=scheme, initial_steps=8)
    h = T / per_period
    current = np.eye(D, dtype=complex)
    t_prev = start
    for i, b in enumerate(grid):
        gap = b - t_prev
        if gap > 0:
            n_full = int(gap // T) if gap >= T else 0
            if n_full:
                mono = ordered_exponential(L.sample, t_prev, t_prev + T, per_period, scheme)
                current = np.linalg.matrix_power(mono, n_full) @ current
            rest = gap - n_full * T
            if rest > 0:
                n = max(1, int(math.ceil(rest / h - 1e-9)))
                current = ordered_exponential(L.sample, t_prev, t_prev + rest, n, scheme) @ current
        out[i] = current
        t_prev = b
    return out


def evolve_state(L: PeriodicLindbladian, rho0, t_grid, *, tol: float = DEFAULT_TOL, scheme: str = "magnus4",
                 trace_tol: float = 1e-8) -> list[DensityMatrix]:
    """States ``V(t, t_grid[0]) rho0`` at every time of an ascending grid.

    ``rho0`` is the state at ``t_grid[0]`` (normally the anchor time 0).
    Outputs are re-Hermitized and trace checked.

    Raises
    ------
    IntegrationAccuracyError
        If ``|Tr rho(t) - 1|`` exceeds ``trace_tol`` anywhere.
    """
    grid = np.asarray(t_grid, dtype=float).ravel()
    if grid.size == 0:
        return []
    rho = rho0 if isinstance(rho0, DensityMatrix) else DensityMatrix(rho0)
    d = rho.dim
    if d * d != L.superdim:
        raise DimensionError(f"state dim {d} does not match generator dim {L.dim}")
    if grid.size == 1:
        return [rho]
    props = propagators_on_grid(L, grid, tol=tol, scheme=scheme)
    vecs = props @ rho.vec().astype(complex)
    out = [rho]
    for t, v in zip(grid[1:], vecs[1:]):
        m = devectorize(v, d)
        drift = abs(np.trace(m) - 1)
        if drift > trace_tol:
            raise IntegrationAccuracyError(f"integration accuracy loss: trace drift {drift:.3e} at t={t}")
        m = hermitize(m)
        check_density_matrix(m, trace_tol=trace_tol)
        out.append(DensityMatrix(m, validate=False))
    return out
