"""Density matrices, superoperators and Lindblad generators.

Conventions used throughout the package:

* ``hbar = 1``; all rates and frequencies share one inverse-time unit.
* Operators are vectorized by **column stacking**, so that
  ``vec(A @ rho @ B) == kron(B.T, A) @ vec(rho)``.
* The two-level basis is ordered ``(|e>, |g>)``: index 0 is the excited
  state with ``sigma_z = +1`` and ``sigma_plus = |e><g|``.
* The dissipator of a jump operator ``A`` with rate ``gamma`` is
  ``gamma * (2 A rho A^dag - {A^dag A, rho})``. Note the factor 2: a rate
  ``gamma`` here corresponds to ``2 gamma`` in the common GKSL convention
  with a ``1/2`` on the anticommutator.
"""

from __future__ import annotations

from dataclasses import dataclass, field
import numpy as np

from .errors import DimensionError, StateValidationError

__all__ = [
    "SIGMA_X",
    "SIGMA_Y",
    "SIGMA_Z",
    "SIGMA_PLUS",
    "SIGMA_MINUS",
    "IDENTITY2",
    "DensityMatrix",
    "Observable",
    "Superoperator",
    "LindbladTerms",
    "vectorize",
    "devectorize",
    "left_multiplication",
    "right_multiplication",
    "sandwich",
    "commutator_superop",
    "hamiltonian_superop",
    "dissipator_superop",
    "lindblad_superop",
    "trace_covector",
    "trace_defect",
    "expectation",
    "trace_distance",
    "state_fidelity",
    "hermitize",
    "bloch_vector",
    "check_density_matrix",
]

HERMITIAN_TOL = 1e-12
TRACE_TOL = 1e-12
PSD_TOL = 1e-10
GENERATOR_TRACE_TOL = 1e-10

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
SIGMA_PLUS = np.array([[0, 1], [0, 0]], dtype=complex)
SIGMA_MINUS = np.array([[0, 0], [1, 0]], dtype=complex)
IDENTITY2 = np.eye(2, dtype=complex)

for _m in (SIGMA_X, SIGMA_Y, SIGMA_Z, SIGMA_PLUS, SIGMA_MINUS, IDENTITY2):
    _m.setflags(write=False)


def _frozen(a) -> np.ndarray:
    arr = np.array(a, dtype=complex, copy=True)
    arr.setflags(write=False)
    return arr


def _square(a, name: str = "matrix") -> np.ndarray:
    arr = np.asarray(a)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise DimensionError(f"{name} must be square, got shape {arr.shape}")
    return arr


def _as_matrix(x) -> np.ndarray:
    """Unwrap DensityMatrix/Observable/Superoperator or pass arrays through."""
    return np.asarray(getattr(x, "data", x))


# --------------------------------------------------------------------------
# value types
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """A d x d Hermitian, unit-trace, positive semidefinite matrix.

    Validation runs on construction unless ``validate=False`` is passed; the
    stored array is read-only.
    """

    data: np.ndarray
    validate: bool = field(default=True, repr=False)

    def __post_init__(self):
        arr = _frozen(_square(self.data, "density matrix"))
        object.__setattr__(self, "data", arr)
        if self.validate:
            check_density_matrix(arr)

    @property
    def dim(self) -> int:
        return self.data.shape[0]

    def vec(self) -> np.ndarray:
        return vectorize(self.data)

    @classmethod
    def excited(cls) -> "DensityMatrix":
        return cls(np.diag([1.0, 0.0]))

    @classmethod
    def ground(cls) -> "DensityMatrix":
        return cls(np.diag([0.0, 1.0]))

    @classmethod
    def maximally_mixed(cls, dim: int = 2) -> "DensityMatrix":
        return cls(np.eye(dim) / dim)

    @classmethod
    def from_bloch(cls, x: float, y: float, z: float) -> "DensityMatrix":
        if x * x + y * y + z * z > 1 + 1e-12:
            raise StateValidationError(f"Bloch vector ({x}, {y}, {z}) has norm > 1")
        return cls(0.5 * (IDENTITY2 + x * SIGMA_X + y * SIGMA_Y + z * SIGMA_Z))

    @classmethod
    def pure(cls, psi) -> "DensityMatrix":
        psi = np.asarray(psi, dtype=complex).ravel()
        psi = psi / np.linalg.norm(psi)
        return cls(np.outer(psi, psi.conj()))


@dataclass(frozen=True, eq=False)
class Observable:
    """A Hermitian d x d matrix."""

    data: np.ndarray

    def __post_init__(self):
        arr = _frozen(_square(self.data, "observable"))
        if np.max(np.abs(arr - arr.conj().T), initial=0.0) > HERMITIAN_TOL:
            raise StateValidationError("observable is not Hermitian")
        object.__setattr__(self, "data", arr)

    @property
    def dim(self) -> int:
        return self.data.shape[0]


@dataclass(frozen=True, eq=False)
class Superoperator:
    """Linear map on d x d matrices stored as a d^2 x d^2 matrix.

    Composition ``S1 @ S2`` is "apply S2 first". Applying to a
    :class:`DensityMatrix` or to a plain matrix returns a plain ndarray,
    since intermediate results need not be valid states.
    """

    data: np.ndarray
    dim: int | None = None

    def __post_init__(self):
        arr = _frozen(_square(self.data, "superoperator"))
        d = int(round(np.sqrt(arr.shape[0])))
        if d * d != arr.shape[0]:
            raise DimensionError(f"superoperator size {arr.shape[0]} is not a perfect square")
        if self.dim is not None and self.dim != d:
            raise DimensionError(f"declared dim {self.dim} inconsistent with size {arr.shape[0]}")
        object.__setattr__(self, "data", arr)
        object.__setattr__(self, "dim", d)

    def __matmul__(self, other):
        if isinstance(other, Superoperator):
            if other.dim != self.dim:
                raise DimensionError("superoperator dimensions differ")
            return Superoperator(self.data @ other.data)
        return NotImplemented

    def __add__(self, other):
        if isinstance(other, Superoperator):
            return Superoperator(self.data + other.data)
        return NotImplemented

    def __sub__(self, other):
        if isinstance(other, Superoperator):
            return Superoperator(self.data - other.data)
        return NotImplemented

    def __mul__(self, scalar):
        if np.isscalar(scalar):
            return Superoperator(self.data * scalar)
        return NotImplemented

    __rmul__ = __mul__

    def __neg__(self):
        return Superoperator(-self.data)

    def apply(self, rho) -> np.ndarray:
        """Return ``S(rho)`` as a d x d array."""
        m = _as_matrix(rho)
        if m.shape != (self.dim, self.dim):
            raise DimensionError(f"operand shape {m.shape} does not match dim {self.dim}")
        return devectorize(self.data @ vectorize(m), self.dim)

    def trace_defect(self) -> float:
        """Max-norm of ``vec(I)^dag @ data``; zero for a trace-preserving generator."""
        return trace_defect(self.data)

    def is_trace_annihilating(self, tol: float = GENERATOR_TRACE_TOL) -> bool:
        return self.trace_defect() <= tol

    @classmethod
    def identity(cls, dim: int) -> "Superoperator":
        return cls(np.eye(dim * dim))


@dataclass(frozen=True, eq=False)
class LindbladTerms:
    """Hamiltonian plus ``(jump operator, rate)`` pairs.

    Rates follow the factor-2 convention of :func:`dissipator_superop`.
    """

    hamiltonian: np.ndarray
    jumps: tuple = ()

    def __post_init__(self):
        h = _as_matrix(self.hamiltonian)
        h = Observable(h).data
        d = h.shape[0]
        jumps = []
        for op, rate in self.jumps:
            a = _square(_as_matrix(op), "jump operator")
            if a.shape != (d, d):
                raise DimensionError(f"jump operator shape {a.shape} does not match dim {d}")
            rate = float(rate)
            if rate < 0:
                raise ValueError(f"negative rate {rate}")
            jumps.append((_frozen(a), rate))
        object.__setattr__(self, "hamiltonian", h)
        object.__setattr__(self, "jumps", tuple(jumps))

    @property
    def dim(self) -> int:
        return self.hamiltonian.shape[0]


# --------------------------------------------------------------------------
# vectorization
# --------------------------------------------------------------------------


def vectorize(m) -> np.ndarray:
    """Column-stack a d x d matrix into a length d^2 vector."""
    m = _square(_as_matrix(m))
    return m.reshape(-1, order="F")


def devectorize(v, dim: int | None = None) -> np.ndarray:
    """Inverse of :func:`vectorize`."""
    v = np.asarray(v)
    if v.ndim != 1:
        raise DimensionError(f"expected a 1-d vector, got shape {v.shape}")
    if dim is None:
        dim = int(round(np.sqrt(v.size)))
    if dim * dim != v.size:
        raise DimensionError(f"vector of length {v.size} cannot be reshaped to {dim}x{dim}")
    return v.reshape(dim, dim, order="F")


def left_multiplication(a) -> np.ndarray:
    """Matrix of ``rho -> a @ rho``."""
    a = _square(_as_matrix(a))
    return np.kron(np.eye(a.shape[0]), a)


def right_multiplication(b) -> np.ndarray:
    """Matrix of ``rho -> rho @ b``."""
    b = _square(_as_matrix(b))
    return np.kron(b.T, np.eye(b.shape[0]))


def sandwich(a, b) -> np.ndarray:
    """Matrix of ``rho -> a @ rho @ b``."""
    return np.kron(_as_matrix(b).T, _as_matrix(a))


def commutator_superop(h) -> np.ndarray:
    """Matrix of ``rho -> [h, rho]``."""
    return left_multiplication(h) - right_multiplication(h)


def hamiltonian_superop(h) -> np.ndarray:
    """Matrix of ``rho -> -i [h, rho]``."""
    return -1j * commutator_superop(h)


def dissipator_superop(a, rate: float = 1.0) -> np.ndarray:
    """Matrix of ``rho -> rate * (2 a rho a^dag - {a^dag a, rho})``."""
    a = _square(_as_matrix(a))
    ada = a.conj().T @ a
    return rate * (2.0 * sandwich(a, a.conj().T) - left_multiplication(ada) - right_multiplication(ada))


def lindblad_superop(terms: LindbladTerms) -> Superoperator:
    """Generator ``-i[H, .] + sum_j gamma_j (2 A_j . A_j^dag - {A_j^dag A_j, .})``."""
    data = hamiltonian_superop(terms.hamiltonian)
    for op, rate in terms.jumps:
        data = data + dissipator_superop(op, rate)
    return Superoperator(data)


def trace_covector(dim: int) -> np.ndarray:
    """``vec(I)^dag`` for d x d operators."""
    return np.eye(dim).reshape(-1, order="F").astype(complex)


def trace_defect(s) -> float:
    s = _as_matrix(s)
    d = int(round(np.sqrt(s.shape[-1])))
    return float(np.max(np.abs(trace_covector(d) @ s), initial=0.0))


# --------------------------------------------------------------------------
# states and metrics
# --------------------------------------------------------------------------


def check_density_matrix(rho, *, herm_tol: float = HERMITIAN_TOL, trace_tol: float = TRACE_TOL,
                         psd_tol: float = PSD_TOL) -> None:
    """Raise :class:`StateValidationError` unless ``rho`` is a density matrix."""
    rho = _square(_as_matrix(rho), "density matrix")
    herm = np.max(np.abs(rho - rho.conj().T), initial=0.0)
    if herm > herm_tol:
        raise StateValidationError(f"not Hermitian (max deviation {herm:.3e})")
    tr = np.trace(rho)
    if abs(tr - 1) > trace_tol:
        raise StateValidationError(f"trace {tr!r} differs from 1")
    lam = np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))
    if lam[0] < -psd_tol:
        raise StateValidationError(f"not positive semidefinite (smallest eigenvalue {lam[0]:.3e})")


def _state(x, validate: bool) -> np.ndarray:
    if isinstance(x, DensityMatrix):
        return x.data
    m = _square(np.asarray(x), "density matrix")
    if validate:
        check_density_matrix(m)
    return m


def expectation(obs, rho, *, imag_tol: float = 1e-10) -> float:
    """``Tr(obs @ rho)`` with the imaginary part checked and discarded."""
    o = _as_matrix(obs)
    r = _as_matrix(rho)
    if o.shape != r.shape:
        raise DimensionError(f"observable {o.shape} and state {r.shape} differ")
    val = np.trace(o @ r)
    if abs(val.imag) > imag_tol:
        raise StateValidationError(f"expectation has imaginary part {val.imag:.3e}")
    return float(val.real)


def trace_distance(rho1, rho2, *, validate: bool = True) -> float:
    """``0.5 * ||rho1 - rho2||_1``."""
    a = _state(rho1, validate)
    b = _state(rho2, validate)
    if a.shape != b.shape:
        raise DimensionError("states have different dimensions")
    diff = a - b
    lam = np.linalg.eigvalsh(0.5 * (diff + diff.conj().T))
    return float(0.5 * np.sum(np.abs(lam)))


def _psd_sqrt(m: np.ndarray) -> np.ndarray:
    lam, vecs = np.linalg.eigh(0.5 * (m + m.conj().T))
    return (vecs * np.sqrt(np.clip(lam, 0.0, None))) @ vecs.conj().T


def state_fidelity(rho1, rho2, *, validate: bool = True) -> float:
    """Uhlmann root fidelity ``Tr sqrt(sqrt(rho1) rho2 sqrt(rho1))``.

    With ``validate=False`` tiny negative eigenvalues are clipped, which is
    what the report code uses for approximate (possibly non-positive) states.
    """
    a = _state(rho1, validate)
    b = _state(rho2, validate)
    if a.shape != b.shape:
        raise DimensionError("states have different dimensions")
    s = _psd_sqrt(a)
    lam = np.linalg.eigvalsh(s @ b @ s)
    return float(np.clip(np.sum(np.sqrt(np.clip(lam, 0.0, None))), 0.0, 1.0))


def hermitize(m) -> np.ndarray:
    m = np.asarray(m)
    return 0.5 * (m + m.conj().T)


def bloch_vector(rho) -> tuple[float, float, float]:
    r = _as_matrix(rho)
    return tuple(expectation(o, r) for o in (SIGMA_X, SIGMA_Y, SIGMA_Z))

