"""Floquet theory for periodically driven Lindblad master equations."""

from .config import ScenarioConfig, load_config, parse_config
from .errors import *  # noqa: F401,F403
from .floquet import (
    ClosedSystemReduction,
    DefectSamples,
    FloquetDecomposition,
    FloquetGenerator,
    FourierSeriesSuperop,
    SteadyStateSeries,
    StroboscopicTrajectory,
    align_branch,
    closed_system_reduce,
    defect_fourier,
    defect_map,
    factorized_propagator,
    floquet_decompose,
    floquet_generator_exact,
    lindbladian_fourier,
    magnus_generator,
    micromotion_fourier,
    micromotion_ode,
    steady_state_block,
    stroboscopic_evolve,
)
from .models import (
    GeometryCoefficients,
    Model1Params,
    Model2Params,
    model1_lindbladian,
    model1_magnus_analytic,
    model2_field,
    model2_geometry,
    model2_hamiltonian,
    model2_lindbladian,
    model2_magnus_analytic,
)
from .propagation import (
    PeriodicLindbladian,
    PropagatorMap,
    evolve_state,
    matrix_exp,
    matrix_log_principal,
    monodromy,
    propagate,
    propagators_on_grid,
)
from .superop import (
    IDENTITY2,
    SIGMA_MINUS,
    SIGMA_PLUS,
    SIGMA_X,
    SIGMA_Y,
    SIGMA_Z,
    DensityMatrix,
    LindbladTerms,
    Observable,
    Superoperator,
    devectorize,
    expectation,
    lindblad_superop,
    state_fidelity,
    trace_distance,
    vectorize,
)
from .study import (
    RunReport,
    convergence_study,
    deviation_study,
    run_scenario,
    scaling_study,
)

__version__ = "0.1.0"
