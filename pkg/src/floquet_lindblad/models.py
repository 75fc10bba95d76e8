"""The two driven dissipative qubit models and their analytic Magnus terms.

Model 1 has a static Hamiltonian ``Omega sigma_z`` and a rotating jump
operator ``A(t) = cos(w t) sigma_+ + sin(w t) sigma_-``. Model 2 is a spin
in a field ``B(t)`` precessing on a cone about the axis ``(theta, phi)``
with opening angle ``beta``, damped by ``sigma_-``.

Both use the factor-2 dissipator convention of :mod:`floquet_lindblad.superop`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import GeometryInconsistencyError
from .floquet import FloquetGenerator
from .propagation import PeriodicLindbladian
from .superop import (
    SIGMA_MINUS,
    SIGMA_PLUS,
    SIGMA_X,
    SIGMA_Y,
    SIGMA_Z,
    Observable,
    Superoperator,
    commutator_superop,
    dissipator_superop,
    hamiltonian_superop,
    left_multiplication,
    right_multiplication,
    sandwich,
    trace_defect,
)

__all__ = [
    "Model1Params",
    "Model2Params",
    "GeometryCoefficients",
    "model1_lindbladian",
    "model1_magnus_analytic",
    "model2_field",
    "model2_hamiltonian",
    "model2_lindbladian",
    "model2_geometry",
    "model2_magnus_analytic",
    "double_bar_average",
]

_PAULIS = (SIGMA_X, SIGMA_Y, SIGMA_Z)


@dataclass(frozen=True)
class Model1Params:
    """Parameters of the rotating-jump-operator model.

    The generator repeats after ``pi / omega``, but the declared Floquet
    period is ``2 pi / omega`` unless ``half_period`` is set.
    """

    omega_z: float = 1.0
    gamma: float = 0.2
    omega: float = 2.0
    half_period: bool = False

    def __post_init__(self):
        if not self.omega > 0:
            raise ValueError(f"omega must be positive, got {self.omega}")
        if self.gamma < 0:
            raise ValueError(f"gamma must be non-negative, got {self.gamma}")

    @property
    def period(self) -> float:
        T = 2 * math.pi / self.omega
        return T / 2 if self.half_period else T


@dataclass(frozen=True)
class Model2Params:
    """Parameters of the precessing-field model (angles in radians)."""

    alpha: float = 1.0
    gamma: float = 0.2
    omega: float = 5.0
    theta: float = math.pi / 4
    phi: float = math.pi / 4
    beta: float = math.pi / 2

    def __post_init__(self):
        if not self.omega > 0:
            raise ValueError(f"omega must be positive, got {self.omega}")
        if self.gamma < 0:
            raise ValueError(f"gamma must be non-negative, got {self.gamma}")
        if not 0 <= self.theta < 2 * math.pi:
            raise ValueError(f"theta must lie in [0, 2pi), got {self.theta}")
        if not 0 <= self.phi <= math.pi:
            raise ValueError(f"phi must lie in [0, pi], got {self.phi}")
        if not 0 <= self.beta <= math.pi / 2:
            raise ValueError(f"beta must lie in [0, pi/2], got {self.beta}")
        frame = _frame(self)
        gram = frame @ frame.T
        if np.max(np.abs(gram - np.eye(3))) > 1e-12:  # pragma: no cover - guards the frame algebra
            raise ValueError("field frame is not orthonormal")

    @property
    def period(self) -> float:
        return 2 * math.pi / self.omega


@dataclass(frozen=True, eq=False)
class GeometryCoefficients:
    """Closed-form drive averages entering the first-order model-2 generator.

    ``quadrature_gap`` is the largest difference between the closed forms
    and their defining double integrals.
    """

    M: np.ndarray
    N: np.ndarray
    h_bar_avg: Observable
    quadrature_gap: float = 0.0


# --------------------------------------------------------------------------
# model 1
# --------------------------------------------------------------------------


def _model1_pieces(p: Model1Params):
    ham = hamiltonian_superop(p.omega_z * SIGMA_Z)
    d_plus = dissipator_superop(SIGMA_PLUS, p.gamma)
    d_minus = dissipator_superop(SIGMA_MINUS, p.gamma)
    # D(c s+ + s s-) = c^2 D(s+) + s^2 D(s-) + c s X
    cross = dissipator_superop(SIGMA_PLUS + SIGMA_MINUS, p.gamma) - d_plus - d_minus
    return ham, d_plus, d_minus, cross


def model1_lindbladian(p: Model1Params) -> PeriodicLindbladian:
    """``L(t) = -i[Omega s_z, .] + gamma (2 A . A^dag - {A^dag A, .})``, ``A(t) = cos(wt) s+ + sin(wt) s-``."""
    ham, d_plus, d_minus, cross = _model1_pieces(p)
    w = p.omega
    terms = [
        (1.0, ham),
        (lambda t: np.cos(w * t) ** 2, d_plus),
        (lambda t: np.sin(w * t) ** 2, d_minus),
        (lambda t: np.cos(w * t) * np.sin(w * t), cross),
    ]
    label = f"model1(Omega={p.omega_z}, gamma={p.gamma}, omega={p.omega})"
    return PeriodicLindbladian.from_terms(terms, p.period, label)


def model1_magnus_analytic(p: Model1Params, order: int = 1) -> FloquetGenerator:
    """Closed-form high-frequency generator of model 1.

    order 0: ``-i[Omega s_z, .] + gamma (s+ . s- + s- . s+ - 1)``
    order 1 adds ``2 i gamma (Omega / w) (s- . s- - s+ . s+)``.
    """
    if order not in (0, 1):
        raise ValueError(f"analytic order must be 0 or 1, got {order}")
    g = p.gamma
    zeroth = hamiltonian_superop(p.omega_z * SIGMA_Z) + g * (
        sandwich(SIGMA_PLUS, SIGMA_MINUS) + sandwich(SIGMA_MINUS, SIGMA_PLUS) - np.eye(4)
    )
    terms = [zeroth]
    if order == 1:
        terms.append(2j * g * (p.omega_z / p.omega) * (sandwich(SIGMA_MINUS, SIGMA_MINUS) - sandwich(SIGMA_PLUS, SIGMA_PLUS)))
    total = sum(terms)
    return FloquetGenerator(Superoperator(total), p.period, 0.0, "analytic", order, tuple(terms))


# --------------------------------------------------------------------------
# model 2
# --------------------------------------------------------------------------


def _frame(p: Model2Params) -> np.ndarray:
    """Rows: cone axis, sin-rotating vector, cos-rotating vector."""
    st, ct = math.sin(p.theta), math.cos(p.theta)
    sp, cp = math.sin(p.phi), math.cos(p.phi)
    return np.array([
        [ct * sp, st * sp, cp],
        [ct * cp, st * cp, -sp],
        [st, -ct, 0.0],
    ])


def model2_field(p: Model2Params, t) -> np.ndarray:
    """Unit field ``B(t) = cos(beta) n + sin(beta) (sin(wt) e1 + cos(wt) e2)``; shape ``(..., 3)``."""
    t = np.asarray(t, dtype=float)
    axis, e1, e2 = _frame(p)
    sb, cb = math.sin(p.beta), math.cos(p.beta)
    wt = p.omega * t[..., None]
    return cb * axis + sb * (np.sin(wt) * e1 + np.cos(wt) * e2)


def model2_hamiltonian(p: Model2Params, t) -> np.ndarray:
    """``H(t) = (alpha/2) B(t) . sigma``; shape ``(..., 2, 2)``."""
    B = model2_field(p, t)
    return 0.5 * p.alpha * np.einsum("...k,kij->...ij", B, np.stack(_PAULIS))


def model2_lindbladian(p: Model2Params) -> PeriodicLindbladian:
    """``L(t) = -i[H(t), .] + gamma (2 s- . s+ - {s+ s-, .})``."""
    pieces = [hamiltonian_superop(0.5 * p.alpha * s) for s in _PAULIS]
    diss = dissipator_superop(SIGMA_MINUS, p.gamma)
    terms = [(lambda t, k=k: model2_field(p, t)[..., k], pieces[k]) for k in range(3)]
    terms.append((1.0, diss))
    label = (f"model2(alpha={p.alpha}, gamma={p.gamma}, omega={p.omega}, theta={p.theta:.6g}, "
             f"phi={p.phi:.6g}, beta={p.beta:.6g})")
    return PeriodicLindbladian.from_terms(terms, p.period, label)


def double_bar_average(f, period: float, *, panels: int = 8, nodes: int = 20) -> float:
    """``1/(2T) int_0^T dt1 int_0^t1 dt2 f(t1, t2)`` by nested composite Gauss-Legendre.

    ``f`` must accept broadcastable arrays ``(t1, t2)``.
    """
    x, w = np.polynomial.legendre.leggauss(nodes)
    u = 0.5 * (x + 1)
    wu = 0.5 * w
    hp = period / panels
    t1 = (hp * np.arange(panels)[:, None] + hp * u[None, :]).ravel()
    w1 = np.tile(hp * wu, panels)
    # inner integral over [0, t1] split at the same panel edges
    total = 0.0
    for t, wt in zip(t1, w1):
        k = int(t // hp)
        edges = np.append(hp * np.arange(k + 1), t)
        lo, hi = edges[:-1], edges[1:]
        t2 = (lo[:, None] + (hi - lo)[:, None] * u[None, :]).ravel()
        w2 = ((hi - lo)[:, None] * wu[None, :]).ravel()
        total += wt * np.sum(w2 * f(t, t2))
    return total / (2 * period)


def _geometry_closed_form(p: Model2Params) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    sb, cb = math.sin(p.beta), math.cos(p.beta)
    st, ct = math.sin(p.theta), math.cos(p.theta)
    sp, cp = math.sin(p.phi), math.cos(p.phi)
    w = p.omega
    M = np.array([
        sb * (sb * ct * sp + 2 * cb * st) / (2 * w),
        sb * (sb * st * sp - 2 * cb * ct) / (2 * w),
        cp * sb**2 / (2 * w),
    ])
    N = np.array([-ct * cp * sb / w, -st * cp * sb / w])
    h_bar = 0.5 * p.alpha * cb * (cp * SIGMA_Z + sp * (ct * SIGMA_X + st * SIGMA_Y))
    return M, N, h_bar


def _geometry_quadrature(p: Model2Params) -> tuple[np.ndarray, np.ndarray]:
    T = p.period

    def comp(k):
        return lambda t: model2_field(p, t)[..., k]

    Bx, By, Bz = comp(0), comp(1), comp(2)

    def cross(a, b):
        # a(t2) b(t1) - a(t1) b(t2)
        return lambda t1, t2: a(t2) * b(t1) - a(t1) * b(t2)

    M = np.array([
        double_bar_average(cross(By, Bz), T),
        double_bar_average(cross(Bz, Bx), T),
        double_bar_average(cross(Bx, By), T),
    ])
    N = np.array([
        double_bar_average(lambda t1, t2: Bx(t1) - Bx(t2), T),
        double_bar_average(lambda t1, t2: By(t1) - By(t2), T),
    ])
    return M, N


def model2_geometry(p: Model2Params, *, check: bool = True, check_tol: float = 1e-7) -> GeometryCoefficients:
    """Closed-form ``M``, ``N`` and the time-averaged Hamiltonian.

    With ``check=True`` the closed forms are compared with their defining
    double integrals computed by quadrature.

    Raises
    ------
    GeometryInconsistencyError
        If closed form and quadrature differ by more than ``check_tol``.
    """
    M, N, h_bar = _geometry_closed_form(p)
    gap = 0.0
    if check:
        Mq, Nq = _geometry_quadrature(p)
        gap = float(max(np.max(np.abs(M - Mq)), np.max(np.abs(N - Nq))))
        if gap > check_tol:
            raise GeometryInconsistencyError(f"geometry formula inconsistency: closed form vs quadrature gap {gap:.3e}")
    return GeometryCoefficients(M, N, Observable(h_bar), gap)


def model2_magnus_analytic(p: Model2Params, order: int = 1, *, geometry: GeometryCoefficients | None = None) -> FloquetGenerator:
    """Closed-form high-frequency generator of model 2.

    order 0: ``-i[H_avg, .] + D``
    order 1 adds::

        (i/2) alpha^2 [M . sigma, .]
        + (i/2) alpha gamma (Nx + i Ny) (2 s- . s_z + {., s-})
        - (i/2) alpha gamma (Nx - i Ny) (2 s_z . s+ + {., s+})
    """
    if order not in (0, 1):
        raise ValueError(f"analytic order must be 0 or 1, got {order}")
    geo = geometry if geometry is not None else model2_geometry(p, check=False)
    zeroth = hamiltonian_superop(geo.h_bar_avg.data) + dissipator_superop(SIGMA_MINUS, p.gamma)
    terms = [zeroth]
    if order == 1:
        a, g = p.alpha, p.gamma
        Mx, My, Mz = geo.M
        Nx, Ny = geo.N
        m_sigma = Mx * SIGMA_X + My * SIGMA_Y + Mz * SIGMA_Z
        anti_minus = left_multiplication(SIGMA_MINUS) + right_multiplication(SIGMA_MINUS)
        anti_plus = left_multiplication(SIGMA_PLUS) + right_multiplication(SIGMA_PLUS)
        first = (
            0.5j * a**2 * commutator_superop(m_sigma)
            + 0.5j * a * g * (Nx + 1j * Ny) * (2 * sandwich(SIGMA_MINUS, SIGMA_Z) + anti_minus)
            - 0.5j * a * g * (Nx - 1j * Ny) * (2 * sandwich(SIGMA_Z, SIGMA_PLUS) + anti_plus)
        )
        terms.append(first)
    total = sum(terms)
    defect = trace_defect(total)
    if defect > 1e-12:
        raise ValueError(f"analytic model-2 generator is not trace annihilating (defect {defect:.3e})")
    return FloquetGenerator(Superoperator(total), p.period, 0.0, "analytic", order, tuple(terms))

