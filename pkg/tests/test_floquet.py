import numpy as np
import pytest
from scipy.integrate import quad_vec
from scipy.linalg import expm, null_space

from floquet_lindblad import (
    SIGMA_MINUS,
    SIGMA_PLUS,
    SIGMA_Z,
    DensityMatrix,
    LindbladTerms,
    Model1Params,
    Model2Params,
    PeriodicLindbladian,
    align_branch,
    closed_system_reduce,
    defect_fourier,
    defect_map,
    evolve_state,
    factorized_propagator,
    floquet_decompose,
    floquet_generator_exact,
    lindblad_superop,
    lindbladian_fourier,
    magnus_generator,
    micromotion_fourier,
    micromotion_ode,
    model1_lindbladian,
    model1_magnus_analytic,
    model2_hamiltonian,
    model2_lindbladian,
    monodromy,
    propagate,
    steady_state_block,
    stroboscopic_evolve,
    trace_distance,
)
from floquet_lindblad.errors import (
    BranchCutError,
    ConvergenceError,
    DegenerateSteadyStateError,
    IllConditionedPropagatorError,
    TruncationError,
)
from floquet_lindblad.superop import hamiltonian_superop, sandwich, trace_covector

from conftest import random_terms

MODEL1 = Model1Params(omega_z=1.0, gamma=0.2, omega=2.0)


def model1(**kw):
    return model1_lindbladian(Model1Params(**{"omega_z": 1.0, "gamma": 0.2, "omega": 2.0, **kw}))


def maxabs(a):
    return float(np.max(np.abs(a)))


# exact generator


def test_exact_generator_of_constant_generator(rng):
    L = lindblad_superop(random_terms(rng)).data
    T = 1.0 / np.max(np.abs(np.linalg.eigvals(L)))
    gen = floquet_generator_exact(PeriodicLindbladian.constant(L, T))
    assert maxabs(gen.data - L) < 1e-11


def test_exact_generator_reproduces_monodromy():
    L = model1()
    gen = floquet_generator_exact(L)
    assert maxabs(expm(gen.data * L.period) - monodromy(L).data) < 1e-10
    assert gen.method == "exact-log"
    assert maxabs(trace_covector(2) @ gen.data) < 1e-9


def test_exact_generator_is_contractive():
    gen = floquet_generator_exact(model1(omega=3.0))
    assert np.all(np.linalg.eigvals(gen.data).real <= 1e-12)


def test_closed_system_generator_has_imaginary_spectrum():
    gen = floquet_generator_exact(model2_lindbladian(Model2Params(gamma=0.0, omega=5.0, beta=0.7)))
    assert np.max(np.abs(np.linalg.eigvals(gen.data).real)) < 1e-10


def test_branch_cut_error_carries_anchor():
    # exp(-i[h sz, .] T) has eigenvalue -1 when 2 h T = pi
    L = PeriodicLindbladian.constant(hamiltonian_superop(0.5 * np.pi * SIGMA_Z), 1.0)
    with pytest.raises(BranchCutError, match="branch") as info:
        floquet_generator_exact(L, 0.25)
    assert info.value.t0 == 0.25
    assert info.value.eigenvalue.real == pytest.approx(-1.0)


def test_branch_alignment_keeps_exponential():
    L = model1(omega=3.0)
    principal = floquet_generator_exact(L)
    ref = magnus_generator(L, 2)
    aligned = align_branch(principal, ref)
    T = L.period
    assert maxabs(expm(aligned.data * T) - expm(principal.data * T)) < 1e-10
    assert maxabs(aligned.data - ref.data) < maxabs(principal.data - ref.data)


@pytest.mark.parametrize("omega", [3.0, 4.0, 6.0, 10.0])
def test_magnus_series_consistency(omega):
    L = model1(omega=omega)
    m0, m2 = magnus_generator(L, 0), magnus_generator(L, 2)
    exact = floquet_generator_exact(L, reference=m2)
    assert maxabs(m2.data - exact.data) <= maxabs(m0.data - exact.data)


# Fourier coefficients


def test_fourier_of_constant_generator(rng):
    L = lindblad_superop(random_terms(rng)).data
    series = lindbladian_fourier(PeriodicLindbladian.constant(L, 2.0), 4)
    np.testing.assert_allclose(series.coefficient(0), L, atol=1e-14)
    assert max(maxabs(series.coefficient(m)) for m in range(-4, 5) if m) < 1e-14
    assert series.harmonic_content() == 0


def test_model1_harmonic_content():
    series = lindbladian_fourier(model1(), 6)
    for m in range(-6, 7):
        size = maxabs(series.coefficient(m))
        if m in (-2, 0, 2):
            assert size > 1e-3
        else:
            assert size < 1e-12


def test_model2_hamiltonian_harmonics():
    p = Model2Params(gamma=0.0, omega=3.0, beta=np.pi / 3)
    series = lindbladian_fourier(model2_lindbladian(p), 4)
    assert series.harmonic_content() == 1
    t = 0.37
    np.testing.assert_allclose(series(t), model2_lindbladian(p)(t), atol=1e-12)


def test_fourier_rejects_insufficient_truncation():
    with pytest.raises(TruncationError, match="insufficient truncation"):
        lindbladian_fourier(model1(), 1)


def test_fourier_quadrature_floor():
    with pytest.raises(ValueError):
        lindbladian_fourier(model1(), 4, quad_points=8)


# Magnus expansion


def test_magnus_of_constant_generator(rng):
    L = lindblad_superop(random_terms(rng)).data
    P = PeriodicLindbladian.constant(L, 1.7)
    for order in (0, 1, 2):
        assert maxabs(magnus_generator(P, order).data - L) < 1e-13


def test_magnus_order0_matches_closed_form():
    p = MODEL1
    L0 = (hamiltonian_superop(p.omega_z * SIGMA_Z)
          + p.gamma * (sandwich(SIGMA_PLUS, SIGMA_MINUS) + sandwich(SIGMA_MINUS, SIGMA_PLUS) - np.eye(4)))
    assert maxabs(magnus_generator(model1_lindbladian(p), 0).data - L0) < 1e-9


def test_magnus_order1_increment_matches_closed_form():
    p = MODEL1
    L1 = 2j * p.gamma * p.omega_z / p.omega * (sandwich(SIGMA_MINUS, SIGMA_MINUS) - sandwich(SIGMA_PLUS, SIGMA_PLUS))
    gen = magnus_generator(model1_lindbladian(p), 1)
    assert maxabs(gen.increment(1) - L1) < 1e-9


def _brute_force_magnus(L, order, n=48):
    """Nested Gauss-Legendre integrals straight from the iterated-commutator definition."""
    T = L.period
    x, w = np.polynomial.legendre.leggauss(n)

    def nodes(a, b):
        return 0.5 * (b - a) * x + 0.5 * (a + b), 0.5 * (b - a) * w

    def comm(a, b):
        return a @ b - b @ a

    t1s, w1s = nodes(0.0, T)
    total = np.zeros((4, 4), dtype=complex)
    for t1, w1 in zip(t1s, w1s):
        L1 = L(t1)
        t2s, w2s = nodes(0.0, t1)
        for t2, w2 in zip(t2s, w2s):
            L2 = L(t2)
            if order == 1:
                total += w1 * w2 * comm(L1, L2) / 2
                continue
            t3s, w3s = nodes(0.0, t2)
            for t3, w3 in zip(t3s, w3s):
                L3 = L(t3)
                total += w1 * w2 * w3 * (comm(L1, comm(L2, L3)) + comm(L3, comm(L2, L1))) / 6
    return total / T


@pytest.mark.parametrize("order", [1, 2])
def test_magnus_terms_match_brute_force(order):
    L = model1(omega=3.0)
    gen = magnus_generator(L, 2)
    assert maxabs(gen.increment(order) - _brute_force_magnus(L, order, n=24)) < 1e-9


def test_magnus_terms_annihilate_trace():
    gen = magnus_generator(model2_lindbladian(Model2Params(omega=2.0)), 2)
    for term in gen.terms:
        assert maxabs(trace_covector(2) @ term) < 1e-12


def test_magnus_rejects_high_order():
    with pytest.raises(ValueError):
        magnus_generator(model1(), 3)


def test_magnus_reports_non_convergence():
    with pytest.raises(ConvergenceError) as info:
        magnus_generator(model1(omega=0.5), 2, quad_points=16, tol=1e-16, max_points=64)
    assert info.value.difference > 0


# micromotion and defect maps


def test_micromotion_endpoints_and_periodicity():
    L = model1(omega=3.0)
    gen = floquet_generator_exact(L)
    T = L.period
    taus = np.linspace(0, 2 * T, 33)
    K = micromotion_ode(L, gen, taus)
    assert maxabs(K[0].data - np.eye(4)) < 1e-15
    assert maxabs(K[16].data - np.eye(4)) < 1e-9
    for a, b in zip(K[:17], K[16:]):
        assert maxabs(a.data - b.data) < 1e-9


def test_micromotion_ode_residual():
    L = model1(omega=3.0)
    gen = floquet_generator_exact(L)
    h = 1e-4
    for t in (0.3, 0.9, 1.6):
        Km, K0, Kp = (k.data for k in micromotion_ode(L, gen, [t - h, t, t + h], tol=1e-13))
        lhs = (Kp - Km) / (2 * h)
        assert maxabs(lhs - (L(t) @ K0 - K0 @ gen.data)) < 1e-6


def test_micromotion_fourier_of_constant_generator(rng):
    L = lindblad_superop(random_terms(rng)).data
    P = PeriodicLindbladian.constant(L, 1.0)
    K = micromotion_fourier(lindbladian_fourier(P, 2), floquet_generator_exact(P), 4)
    np.testing.assert_allclose(K.coefficient(0), np.eye(4), atol=1e-12)
    assert max(maxabs(K.coefficient(m)) for m in range(-4, 5) if m) < 1e-12


def test_micromotion_fourier_matches_ode():
    L = model1(omega=3.0)
    gen = floquet_generator_exact(L)
    K = micromotion_fourier(lindbladian_fourier(L, 2), gen, 8)
    taus = np.linspace(0, L.period, 32, endpoint=False)
    ode = np.stack([k.data for k in micromotion_ode(L, gen, taus)])
    assert maxabs(K(taus) - ode) < 1e-6
    assert maxabs(K(0.0) - np.eye(4)) < 1e-10


def _micromotion_remainder(omega):
    L = model1(omega=omega)
    gen = floquet_generator_exact(L, reference=magnus_generator(L, 2))
    L0 = magnus_generator(L, 0).data
    taus = np.linspace(0, L.period, 17)
    worst = 0.0
    for t, K in zip(taus, micromotion_ode(L, gen, taus)):
        integral = quad_vec(L, 0, t, epsabs=1e-13)[0] if t > 0 else 0
        worst = max(worst, maxabs(K.data - np.eye(4) - (integral - t * L0)))
    return worst


def test_micromotion_first_order_remainder_is_second_order():
    ratio = _micromotion_remainder(16.0) / _micromotion_remainder(32.0)
    assert ratio == pytest.approx(4.0, rel=0.25)


def test_defect_map_endpoints():
    L = model1()
    gen = floquet_generator_exact(L)
    J = defect_map(L, gen, [0.0, L.period])
    assert maxabs(J[0].data - np.eye(4)) < 1e-15
    assert maxabs(J[1].data - np.eye(4)) < 1e-9
    assert len(J) == 2 and J.condition_numbers[0] == pytest.approx(1.0)


def test_defect_map_refuses_ill_conditioned_inverse():
    L = model1(gamma=5.0)
    with pytest.raises(IllConditionedPropagatorError, match="non-invertible"):
        defect_map(L, floquet_generator_exact(L), [0.5 * L.period], max_condition=10.0)


@pytest.mark.parametrize("which", ["model1", "model2"])
def test_factorization(which):
    L = model1() if which == "model1" else model2_lindbladian(Model2Params(omega=5.0))
    gen = floquet_generator_exact(L)
    T = L.period
    t1, t2 = 0.3 * T, 3.7 * T
    direct = propagate(L, t1, t2).data
    assert maxabs(factorized_propagator(L, gen, t2, t1) - direct) < 1e-8


def test_defect_fourier_matches_defect_map():
    L = model1(omega=3.0)
    gen = floquet_generator_exact(L)
    J = defect_fourier(lindbladian_fourier(L, 2), gen, 8)
    taus = np.linspace(0, L.period, 8, endpoint=False)
    ode = np.stack(list(m.data for m in defect_map(L, gen, taus)))
    assert maxabs(J(taus) - ode) < 1e-6


def test_floquet_decompose_propagator():
    L = model1(omega=3.0)
    dec = floquet_decompose(L, 10, with_defect=True)
    T = L.period
    assert maxabs(dec.propagator(2.4 * T, 0.6 * T) - propagate(L, 0.6 * T, 2.4 * T).data) < 1e-6
    assert maxabs(dec.micromotion_at(T) - np.eye(4)) < 1e-8


# steady state


def test_steady_state_zeroth_order_model1():
    p = MODEL1
    P = PeriodicLindbladian.constant(model1_magnus_analytic(p, 0).data, p.period)
    ss = steady_state_block(lindbladian_fourier(P, 0), 0)
    np.testing.assert_allclose(ss.coefficient(0), np.eye(2) / 2, atol=1e-12)


def test_steady_state_of_constant_generator(rng):
    L = lindblad_superop(random_terms(rng)).data
    ss = steady_state_block(lindbladian_fourier(PeriodicLindbladian.constant(L, 1.0), 0), 3)
    ns = null_space(L)[:, 0].reshape(2, 2, order="F")
    np.testing.assert_allclose(ss.coefficient(0), ns / np.trace(ns), atol=1e-10)


def test_steady_state_series_invariants():
    ss = steady_state_block(lindbladian_fourier(model1(), 2), 10)
    assert ss.symmetry_defect < 1e-6
    assert abs(np.trace(ss.coefficient(0)) - 1) < 1e-10
    for m in range(1, 11):
        assert abs(np.trace(ss.coefficient(m))) < 1e-10
        assert maxabs(ss.coefficient(-m) - ss.coefficient(m).conj().T) < 1e-10


def test_steady_state_matches_long_time_propagation():
    L = model1()
    ss = steady_state_block(lindbladian_fourier(L, 2), 10)
    assert ss.residual < 1e-8
    T = L.period
    n = int(np.ceil(60 / 0.2 / T))
    ts = n * T + np.linspace(0, T, 9)
    V = np.linalg.matrix_power(monodromy(L).data, n)
    start = (V @ DensityMatrix.excited().vec()).reshape(2, 2, order="F")
    states = evolve_state(L, start, ts - n * T)
    for t, s in zip(ts, states):
        assert trace_distance(ss(t), s, validate=False) < 1e-3


def test_steady_state_residual_decreases_with_truncation():
    p = Model2Params(omega=2.0, gamma=0.2, beta=np.pi / 3)
    series = lindbladian_fourier(model2_lindbladian(p), 2)
    res = [steady_state_block(series, M).residual for M in (2, 4, 6, 8, 10)]
    for a, b in zip(res, res[1:]):
        assert b <= 1.1 * a + 1e-13


def test_steady_state_degenerate_space():
    # closed dynamics: every diagonal state is stationary
    P = PeriodicLindbladian.constant(hamiltonian_superop(SIGMA_Z), 1.0)
    with pytest.raises(DegenerateSteadyStateError, match="degenerate steady space"):
        steady_state_block(lindbladian_fourier(P, 0), 2)


# stroboscopic evolution


def test_stroboscopic_zero_periods():
    traj = stroboscopic_evolve(floquet_generator_exact(model1()), DensityMatrix.excited(), 0)
    assert traj.states.shape == (1, 2, 2)
    np.testing.assert_array_equal(traj.states[0], DensityMatrix.excited().data)


def test_stroboscopic_exact_matches_propagation():
    L = model1()
    gen = floquet_generator_exact(L)
    traj = stroboscopic_evolve(gen, DensityMatrix.excited(), 6)
    exact = evolve_state(L, DensityMatrix.excited(), L.period * np.arange(7))
    for a, b in zip(traj.states, exact):
        assert maxabs(a - b.data) < 1e-9
    assert not traj.trace_warning and not traj.positivity_warning


def test_stroboscopic_magnus_tracks_exact_at_high_frequency():
    L = model1(omega=3.0)
    approx = stroboscopic_evolve(magnus_generator(L, 1), DensityMatrix.excited(), 10)
    exact = stroboscopic_evolve(floquet_generator_exact(L), DensityMatrix.excited(), 10)
    sz_a = np.real(approx.states[:, 0, 0] - approx.states[:, 1, 1])
    sz_e = np.real(exact.states[:, 0, 0] - exact.states[:, 1, 1])
    assert np.max(np.abs(sz_a - sz_e)) < 0.01


def test_stroboscopic_flags_non_physical_generator():
    bad = model1_magnus_analytic(MODEL1, 0)
    scaled = type(bad)(bad.generator * -1.0, bad.period, bad.t0, bad.method, bad.order, bad.terms, bad.info)
    traj = stroboscopic_evolve(scaled, DensityMatrix.excited(), 3)
    assert traj.positivity_warning


# closed systems


def test_closed_constant_hamiltonian():
    H = 0.4 * SIGMA_Z + 0.2 * np.array([[0, 1], [1, 0]])
    red = closed_system_reduce(lambda t: H, 2.0)
    np.testing.assert_allclose(red.floquet_hamiltonian.data, H, atol=1e-10)
    assert red.consistent


def test_closed_static_field_model2():
    p = Model2Params(gamma=0.0, alpha=1.0, omega=5.0, theta=0.3, phi=1.1, beta=0.0)
    red = closed_system_reduce(lambda t: model2_hamiltonian(p, t), p.period)
    axis = np.array([np.sin(p.phi) * np.cos(p.theta), np.sin(p.phi) * np.sin(p.theta), np.cos(p.phi)])
    sig = [np.array([[0, 1], [1, 0]]), np.array([[0, -1j], [1j, 0]]), SIGMA_Z]
    expected = 0.5 * p.alpha * sum(a * s for a, s in zip(axis, sig))
    np.testing.assert_allclose(red.floquet_hamiltonian.data, expected, atol=1e-9)


def test_closed_generic_model2():
    p = Model2Params(gamma=0.0, alpha=1.0, omega=5.0, theta=0.7, phi=1.2, beta=0.9)
    red = closed_system_reduce(lambda t: model2_hamiltonian(p, t), p.period,
                               sample_times=np.linspace(0, p.period, 11))
    assert red.trajectory_error < 1e-9
    assert red.one_period_mismatch < 1e-9
    assert red.micromotion_error < 1e-8
    assert red.consistent


def test_lindblad_terms_constant_model():
    L = lindblad_superop(LindbladTerms(SIGMA_Z, [(SIGMA_MINUS, 0.1)]))
    gen = floquet_generator_exact(PeriodicLindbladian.constant(L, 1.0))
    assert maxabs(gen.data - L.data) < 1e-11
