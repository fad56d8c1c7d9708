"""Optimal unambiguous discrimination of two coherent states, as a simulator.

The package builds the displaced two-detector receiver whose inconclusive
probability saturates the quantum bound |<alpha1|alpha2>|, verifies it two
independent ways, samples its click statistics, and runs the time-multiplexed
fiber key-distribution protocol built on it.
"""

__version__ = "0.1.0"

from .discrimination import (
    OUTCOME_ORDER,
    Outcome,
    OptimalityReport,
    PovmSet,
    ReceiverConfig,
    closed_form_probabilities,
    inconclusive_rate,
    optimality_check,
    outcome_probabilities,
    povm_analytic,
    povm_ancilla,
)
from .hilbert import (
    NumericalGuardError,
    TruncatedOperator,
    TruncatedState,
    beam_splitter_unitary,
    coherent_state,
    default_dim,
    displacement_operator,
    expectation,
    normally_ordered_exponential,
    normally_ordered_gaussian,
    overlap,
    tensor,
    vacuum_expectation,
    vacuum_state,
)
from .montecarlo import RngStream, TrialTally, run_trials, sample_outcome
from .multiplex import (
    BalanceReport,
    DetectorAmplitudes,
    KeyReport,
    MultiplexConfig,
    MultiplexDerived,
    PulsePair,
    WindowedClicks,
    alice_emit,
    balance_check,
    click_probabilities,
    derived_constants,
    propagate_bob,
    quantum_bound,
    round_inconclusive_probability,
    run_protocol,
)
