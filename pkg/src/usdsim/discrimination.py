"""Unambiguous discrimination of two coherent states.

The receiver splits the incoming pulse on a 50:50 beam splitter, displaces
each output so that one of the two candidate states interferes destructively
at each photodetector, and reads the two click bits.  A click pattern then
either identifies the sent state with certainty or is inconclusive; the
inconclusive probability saturates the quantum lower bound |<alpha1|alpha2>|.

This module builds the measurement's POVM two independent ways:

  * ``povm_analytic`` - directly on the signal mode, from normally ordered
    Gaussian operators Q_i = :exp(-(a^dag - alpha_i*)(a - alpha_i)/2): ;
  * ``povm_ancilla``  - brute force on the two-mode space: coherent
    projectors on both beam-splitter outputs, conjugated back through the
    beam splitter and reduced by a vacuum expectation over the unused port.

The two constructions serve as oracles for each other and must agree in max
norm (hilbert.CROSS_ORACLE_TOL) at adequate truncation.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .hilbert import (
    ADEQUACY_MIN_NORM,
    STRUCTURAL_TOL,
    NumericalGuardError,
    TruncatedOperator,
    beam_splitter_unitary,
    check_dim,
    coherent_state,
    expectation,
    identity,
    normally_ordered_exponential,
    normally_ordered_gaussian,
    overlap,
    tensor,
)

logger = logging.getLogger(__name__)

# Eigenvalues in [-EIGENVALUE_CLAMP, 0) count as roundoff zeros; anything more
# negative marks a construction bug rather than floating-point dust.
EIGENVALUE_CLAMP = 1e-10

# Probability clamps larger than this are logged instead of silently absorbed.
PROBABILITY_CLAMP_LOG = 1e-10

# Two-mode workspaces beyond this per-mode dimension are refused (dim^2 x dim^2
# intermediates stop being desk-scale).
MAX_ANCILLA_DIM = 64


class Outcome(Enum):
    """Joint click pattern (d1, d2) of the two photodetectors.

    Bit 0 means no photons were registered, bit 1 at least one.  A click on
    D2 alone identifies the first state, a click on D1 alone the second; no
    clicks is inconclusive and both clicking never happens under the ideal
    model.
    """

    INCONCLUSIVE = (0, 0)
    CONCLUSIVE_1 = (0, 1)
    CONCLUSIVE_2 = (1, 0)
    ANOMALOUS = (1, 1)

    @property
    def d1(self) -> int:
        return self.value[0]

    @property
    def d2(self) -> int:
        return self.value[1]

    @staticmethod
    def classify(d1: int, d2: int) -> "Outcome":
        return Outcome((int(d1), int(d2)))

    @property
    def label(self) -> str:
        return f"{self.d1}{self.d2}"


#: Fixed outcome ordering (00, 01, 10, 11) used by samplers and writers.
OUTCOME_ORDER: tuple[Outcome, ...] = (
    Outcome.INCONCLUSIVE,
    Outcome.CONCLUSIVE_1,
    Outcome.CONCLUSIVE_2,
    Outcome.ANOMALOUS,
)


@dataclass(frozen=True)
class ReceiverConfig:
    """Receiver parameters: the candidate pair, truncation, and efficiency.

    The displaced-detection amplitudes are always beta_i = alpha_i / sqrt(2);
    they are derived, never set independently.
    """

    alpha1: complex
    alpha2: complex
    dim: int
    eta: float = 1.0

    def __post_init__(self):
        a1, a2 = complex(self.alpha1), complex(self.alpha2)
        for a in (a1, a2):
            if not (math.isfinite(a.real) and math.isfinite(a.imag)):
                raise ValueError(f"amplitude must be finite, got {a!r}")
        if a1 == a2:
            raise ValueError("alpha1 == alpha2: identical states are not discriminable")
        check_dim(self.dim)
        if not 0.0 <= float(self.eta) <= 1.0:
            raise ValueError(f"detector efficiency must lie in [0, 1], got {self.eta}")
        object.__setattr__(self, "alpha1", a1)
        object.__setattr__(self, "alpha2", a2)
        object.__setattr__(self, "eta", float(self.eta))

    @property
    def beta1(self) -> complex:
        return self.alpha1 / math.sqrt(2.0)

    @property
    def beta2(self) -> complex:
        return self.alpha2 / math.sqrt(2.0)


@dataclass(frozen=True, eq=False)
class PovmSet:
    """The four positive operators of the receiver, keyed by outcome."""

    elements: dict[Outcome, TruncatedOperator]
    construction: str  # "analytic" | "ancilla"
    dim: int

    def __getitem__(self, outcome: Outcome) -> TruncatedOperator:
        return self.elements[outcome]

    def completeness_residual(self) -> float:
        total = sum(op.matrix for op in self.elements.values())
        return float(np.max(np.abs(total - np.eye(self.dim))))

    def min_eigenvalue(self) -> float:
        return min(op.min_eigenvalue() for op in self.elements.values())

    def max_hermiticity_defect(self) -> float:
        return max(op.hermiticity_defect() for op in self.elements.values())


def _validate_povm(povm: PovmSet) -> PovmSet:
    herm = povm.max_hermiticity_defect()
    if herm > STRUCTURAL_TOL:
        raise NumericalGuardError(
            f"hermiticity guard: POVM defect {herm:.3e} exceeds {STRUCTURAL_TOL:.1e}"
        )
    residual = povm.completeness_residual()
    if residual > STRUCTURAL_TOL:
        raise NumericalGuardError(
            f"completeness guard: residual {residual:.3e} exceeds {STRUCTURAL_TOL:.1e}"
        )
    min_eig = povm.min_eigenvalue()
    if min_eig < -EIGENVALUE_CLAMP:
        raise NumericalGuardError(
            f"positivity guard: eigenvalue {min_eig:.3e} below -{EIGENVALUE_CLAMP:.1e}"
        )
    return povm


def _check_adequacy(cfg: ReceiverConfig) -> None:
    for name, alpha in (("alpha1", cfg.alpha1), ("alpha2", cfg.alpha2)):
        achieved = coherent_state(alpha, cfg.dim).norm
        if achieved < ADEQUACY_MIN_NORM:
            raise NumericalGuardError(
                f"truncation adequacy guard: coherent state for {name} reaches "
                f"norm {achieved:.12f} < {ADEQUACY_MIN_NORM:.12f} at dim={cfg.dim}"
            )


def _q_operator(alpha: complex, dim: int, weight: float = 0.5) -> TruncatedOperator:
    """:exp(-weight (a^dag - alpha*)(a - alpha)): on the signal mode."""
    return normally_ordered_gaussian(weight, alpha, dim)


def _q_product(alpha1: complex, alpha2: complex, dim: int) -> TruncatedOperator:
    """Normally ordered product :Q1 Q2: assembled from the merged exponent.

    Normal symbols multiply, so the product's exponent is the sum of the two
    Gaussian exponents; the Fock matrix follows from the same exact triangular
    assembly used for a single Gaussian.
    """
    mu = 0.5 * (alpha1 + alpha2)
    const = -0.5 * (abs(alpha1) ** 2 + abs(alpha2) ** 2)
    return normally_ordered_exponential(mu, np.conj(mu), -1.0, const, dim)


def povm_analytic(cfg: ReceiverConfig) -> PovmSet:
    """Closed-form POVM on the signal mode.

    With Q_i = :exp(-(a^dag - alpha_i*)(a - alpha_i)/2): the four elements are

        A_00 = :Q1 Q2:                      (no clicks, inconclusive)
        A_01 = :Q1: - :Q1 Q2:               (D2 clicked, state 1)
        A_10 = :Q2: - :Q1 Q2:               (D1 clicked, state 2)
        A_11 = I - :Q1: - :Q2: + :Q1 Q2:    (both clicked, never occurs)
    """
    _check_adequacy(cfg)
    dim = cfg.dim
    q1 = _q_operator(cfg.alpha1, dim)
    q2 = _q_operator(cfg.alpha2, dim)
    q12 = _q_product(cfg.alpha1, cfg.alpha2, dim)
    eye = identity(dim)
    elements = {
        Outcome.INCONCLUSIVE: q12,
        Outcome.CONCLUSIVE_1: q1 - q12,
        Outcome.CONCLUSIVE_2: q2 - q12,
        Outcome.ANOMALOUS: eye - q1 - q2 + q12,
    }
    return _validate_povm(PovmSet(elements, "analytic", dim))


def ancilla_projections(cfg: ReceiverConfig) -> dict[Outcome, TruncatedOperator]:
    """The four two-mode projections measured behind the beam splitter.

    Mode 1 carries the first output (displaced detection at beta1), mode 2
    the second.  The four products of |beta_i><beta_i| and their complements
    form a complete projective measurement on the two-mode space.
    """
    dim = cfg.dim
    p1 = normally_ordered_gaussian(1.0, cfg.beta1, dim)
    p2 = normally_ordered_gaussian(1.0, cfg.beta2, dim)
    eye = identity(dim)
    return {
        Outcome.INCONCLUSIVE: tensor(p1, p2),
        Outcome.CONCLUSIVE_1: tensor(p1, eye - p2),
        Outcome.CONCLUSIVE_2: tensor(eye - p1, p2),
        Outcome.ANOMALOUS: tensor(eye - p1, eye - p2),
    }


def povm_ancilla(cfg: ReceiverConfig, max_dim: int = MAX_ANCILLA_DIM) -> PovmSet:
    """Brute-force POVM through the explicit two-mode ancilla construction.

    Each two-mode projection B is expressed in the (signal, vacuum-port)
    modes by conjugation with the 50:50 beam-splitter unitary U and reduced
    by the vacuum expectation over the unused port:

        A[m, n] = <m, 0| U^dag B U |n, 0> = (U|m,0>)^dag B (U|n,0>).

    Only the vacuum-sector columns W = U[:, n*dim] enter the reduction, so
    the conjugation is evaluated as W^dag B W without materializing the full
    dim^2 x dim^2 conjugate; the tests check this against the literal
    conjugate-then-reduce path.
    """
    _check_adequacy(cfg)
    dim = cfg.dim
    if dim > max_dim:
        raise NumericalGuardError(
            f"two-mode workspace guard: dim={dim} exceeds the configured cap {max_dim}"
        )
    w = _vacuum_port_columns(dim)
    elements = {}
    for outcome, proj in ancilla_projections(cfg).items():
        reduced = w.conj().T @ proj.matrix @ w
        elements[outcome] = TruncatedOperator(dim, 1, reduced)
    return _validate_povm(PovmSet(elements, "ancilla", dim))


_VACUUM_COLUMN_CACHE: dict[int, np.ndarray] = {}


def _vacuum_port_columns(dim: int) -> np.ndarray:
    """Columns U |n, 0> of the 50:50 beam-splitter unitary (dim^2 x dim)."""
    w = _VACUUM_COLUMN_CACHE.get(dim)
    if w is None:
        u = beam_splitter_unitary(0.5, dim)
        w = u.matrix[:, ::dim].copy()
        _VACUUM_COLUMN_CACHE[dim] = w
    return w


def outcome_probabilities(
    cfg: ReceiverConfig,
    sent: complex,
    povm: PovmSet,
) -> dict[Outcome, float]:
    """Outcome distribution for a coherent input of amplitude ``sent``.

    At unit efficiency these are the POVM expectations <sent|A_kl|sent>.
    Detector inefficiency scales every field amplitude reaching a detector by
    sqrt(eta), which for coherent light raises each no-click probability to
    the power eta; the distribution is rebuilt from the two no-click
    marginals, keeping the exact zeros exact.
    """
    if povm.dim != cfg.dim:
        raise ValueError(f"POVM dim {povm.dim} does not match config dim {cfg.dim}")
    state = coherent_state(sent, cfg.dim).state
    raw = {}
    for outcome in OUTCOME_ORDER:
        value = expectation(povm[outcome], state)
        if abs(value.imag) > 1e-10:
            logger.warning(
                "imaginary residue %.3e in <%s> expectation exceeds 1e-10",
                value.imag,
                outcome.label,
            )
        raw[outcome] = _clamp_probability(value.real, outcome)

    if cfg.eta == 1.0:
        probs = dict(raw)
    else:
        # no-click marginals for each detector, then eta-scaled products
        q1 = min(raw[Outcome.INCONCLUSIVE] + raw[Outcome.CONCLUSIVE_1], 1.0)
        q2 = min(raw[Outcome.INCONCLUSIVE] + raw[Outcome.CONCLUSIVE_2], 1.0)
        q1e = q1**cfg.eta
        q2e = q2**cfg.eta
        probs = {
            Outcome.INCONCLUSIVE: q1e * q2e,
            Outcome.CONCLUSIVE_1: q1e * (1.0 - q2e),
            Outcome.CONCLUSIVE_2: (1.0 - q1e) * q2e,
            Outcome.ANOMALOUS: (1.0 - q1e) * (1.0 - q2e),
        }

    total = sum(probs.values())
    if abs(total - 1.0) > STRUCTURAL_TOL:
        raise NumericalGuardError(
            f"probability normalization guard: outcome probabilities sum to "
            f"{total!r}, off by more than {STRUCTURAL_TOL:.1e}"
        )
    return {o: p / total for o, p in probs.items()}


def _clamp_probability(p: float, outcome: Outcome) -> float:
    clamped = min(max(p, 0.0), 1.0)
    if abs(clamped - p) > PROBABILITY_CLAMP_LOG:
        logger.warning(
            "clamped probability of outcome %s by %.3e", outcome.label, abs(clamped - p)
        )
    return clamped


def closed_form_probabilities(cfg: ReceiverConfig, sent: complex) -> dict[Outcome, float]:
    """Outcome distribution from the closed forms alone (no truncation).

    For a coherent input the no-click probability of detector i is
    exp(-eta |sent - alpha_i|^2 / 2) and the detectors are independent.
    """
    sent = complex(sent)
    q1 = math.exp(-0.5 * cfg.eta * abs(sent - cfg.alpha1) ** 2)
    q2 = math.exp(-0.5 * cfg.eta * abs(sent - cfg.alpha2) ** 2)
    return {
        Outcome.INCONCLUSIVE: q1 * q2,
        Outcome.CONCLUSIVE_1: q1 * (1.0 - q2),
        Outcome.CONCLUSIVE_2: (1.0 - q1) * q2,
        Outcome.ANOMALOUS: (1.0 - q1) * (1.0 - q2),
    }


def inconclusive_rate(alpha1: complex, alpha2: complex) -> float:
    """Closed-form inconclusive probability exp(-|alpha1 - alpha2|^2 / 2).

    This equals the state overlap |<alpha1|alpha2>|, the lowest inconclusive
    rate any measurement can reach on this pair.
    """
    a1, a2 = complex(alpha1), complex(alpha2)
    for a in (a1, a2):
        if not (math.isfinite(a.real) and math.isfinite(a.imag)):
            raise ValueError(f"amplitude must be finite, got {a!r}")
    return math.exp(-0.5 * abs(a1 - a2) ** 2)


@dataclass(frozen=True)
class OptimalityReport:
    """Numeric inconclusive probability against the quantum lower bound."""

    numeric_inconclusive: float
    quantum_bound: float
    gap: float
    eta: float
    dim: int


def optimality_check(cfg: ReceiverConfig, povm: PovmSet) -> OptimalityReport:
    """Compare the receiver's inconclusive probability with the quantum bound.

    The bound |<alpha1|alpha2>| is evaluated from the truncated coherent-state
    vectors themselves, independently of the closed form and of the POVM.  At
    eta = 1 and adequate truncation the gap is zero to cross-oracle accuracy;
    any eta < 1 leaves the bound unattained.
    """
    p1 = outcome_probabilities(cfg, cfg.alpha1, povm)[Outcome.INCONCLUSIVE]
    p2 = outcome_probabilities(cfg, cfg.alpha2, povm)[Outcome.INCONCLUSIVE]
    numeric = 0.5 * (p1 + p2)
    s1 = coherent_state(cfg.alpha1, cfg.dim).state
    s2 = coherent_state(cfg.alpha2, cfg.dim).state
    bound = abs(overlap(s1, s2))
    return OptimalityReport(
        numeric_inconclusive=numeric,
        quantum_bound=bound,
        gap=numeric - bound,
        eta=cfg.eta,
        dim=cfg.dim,
    )
