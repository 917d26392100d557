"""Fourier analysis on qubit matrix spaces, Gaussian random operators and
strategy transfer for two-player binary games."""

__version__ = "0.1.0"

from .correlation import (
    BipartiteState,
    NoisyEprState,
    depolarized_epr,
    epr_pair,
    markov_superoperator,
    maximal_correlation,
)
from .errors import (
    ArgumentError,
    CapacityError,
    DomainError,
    PreconditionError,
    QFourierError,
    SingularityError,
    StochasticFailure,
    UnsupportedStateError,
)
from .fourier import FourierExpansion, StandardBasis, fourier_expand, pauli_basis, reconstruct
from .games import BinaryGame, Strategy, chsh, classical_value, evaluate_transfer, optimize_strategy
from .gaussian import GaussianPolynomial, RandomOperator, ReducedFunction
from .operators import DensityOperator, HermitianOperator, MeasurementOperator
from .pipeline import Caps, PipelineParams, PipelineResult, run_pipeline
from .zeta import ZetaProfile, round_to_measurement, trace_zeta, zeta_scalar
