import numpy as np
import pytest
from hypothesis import settings

from floquet_lindblad import LindbladTerms, PeriodicLindbladian
from floquet_lindblad.superop import (
    hamiltonian_superop,
    left_multiplication,
    right_multiplication,
    sandwich,
)

settings.register_profile("default", deadline=None, max_examples=25, derandomize=True)
settings.load_profile("default")


def random_matrix(rng, d=2):
    return rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))


def random_hermitian(rng, d=2):
    a = random_matrix(rng, d)
    return 0.5 * (a + a.conj().T)


def random_state(rng, d=2):
    a = random_matrix(rng, d)
    rho = a @ a.conj().T
    return rho / np.trace(rho)


def random_terms(rng, d=2, n_jumps=2):
    jumps = [(random_matrix(rng, d), float(rng.uniform(0.05, 0.5))) for _ in range(n_jumps)]
    return LindbladTerms(random_hermitian(rng, d), jumps)


def random_periodic_lindbladian(rng, d=2, harmonics=2, rate=0.2):
    """Smooth random generator whose Hamiltonian and jump operator carry ``harmonics`` Fourier modes."""
    omega = float(rng.uniform(1.0, 4.0))
    phases = rng.uniform(0, 2 * np.pi, size=harmonics)
    h_terms = [(1.0, hamiltonian_superop(random_hermitian(rng, d)))]
    for k in range(harmonics):
        h_terms.append((lambda t, k=k: np.cos((k + 1) * omega * t + phases[k]), hamiltonian_superop(random_hermitian(rng, d))))
    # jump a(t) = sum_i f_i(t) a_i; the dissipator is quadratic in the f_i
    fs = [lambda t: np.ones_like(t)] + [lambda t, k=k: np.sin((k + 1) * omega * t) for k in range(harmonics)]
    ops = [0.5 * random_matrix(rng, d)] + [0.3 * random_matrix(rng, d) for _ in range(harmonics)]
    d_terms = []
    for i, (fi, ai) in enumerate(zip(fs, ops)):
        for j, (fj, aj) in enumerate(zip(fs, ops)):
            prod = aj.conj().T @ ai
            s = rate * (2 * sandwich(ai, aj.conj().T) - left_multiplication(prod) - right_multiplication(prod))
            d_terms.append((lambda t, fi=fi, fj=fj: fi(t) * fj(t), s))
    return PeriodicLindbladian.from_terms(h_terms + d_terms, 2 * np.pi / omega, label="random")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = getattr(config, "_acceptance_lines", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
