"""Seeded sampling of detector outcomes and tally statistics.

Outcomes are drawn by inverse CDF over the fixed ordering (00, 01, 10, 11).
Probability mass below ``SUB_TOLERANCE_MASS`` is zeroed and the distribution
renormalized before sampling, so outcomes the model forbids (the exact zeros
of the ideal receiver) never appear as roundoff dust in a tally.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy import stats

from .discrimination import (
    OUTCOME_ORDER,
    Outcome,
    PovmSet,
    ReceiverConfig,
    outcome_probabilities,
    povm_analytic,
)

#: Counter-based generator backing every stream; recorded in run metadata.
RNG_ALGORITHM = "philox4x64"

#: Probability mass below this is treated as an exact zero before sampling.
SUB_TOLERANCE_MASS = 1e-9

_DISTRIBUTION_SUM_TOL = 1e-9


@dataclass(frozen=True)
class RngStream:
    """Reproducible, splittable random stream.

    Identical (seed, stream_id) pairs reproduce identical draws bit for bit;
    distinct stream_ids key statistically independent Philox streams.
    """

    seed: int
    stream_id: int = 0

    def __post_init__(self):
        for name, value in (("seed", self.seed), ("stream_id", self.stream_id)):
            if not isinstance(value, (int, np.integer)):
                raise ValueError(f"{name} must be an integer, got {value!r}")
            if not 0 <= int(value) < 2**64:
                raise ValueError(f"{name} must fit in 64 bits, got {value}")

    def generator(self) -> np.random.Generator:
        key = np.array([self.seed, self.stream_id], dtype=np.uint64)
        return np.random.Generator(np.random.Philox(key=key))

    def substream(self, offset: int) -> "RngStream":
        return RngStream(self.seed, self.stream_id + int(offset))


@dataclass(frozen=True)
class TrialTally:
    """Outcome counts for a batch of trials."""

    counts: dict[Outcome, int]
    n_trials: int

    def __post_init__(self):
        counts = {o: int(self.counts.get(o, 0)) for o in OUTCOME_ORDER}
        if any(c < 0 for c in counts.values()):
            raise ValueError("counts must be non-negative")
        if sum(counts.values()) != self.n_trials:
            raise ValueError(
                f"counts sum to {sum(counts.values())}, expected n_trials={self.n_trials}"
            )
        object.__setattr__(self, "counts", counts)

    def frequency(self, outcome: Outcome) -> float:
        if self.n_trials == 0:
            return 0.0
        return self.counts[outcome] / self.n_trials

    def merge(self, other: "TrialTally") -> "TrialTally":
        merged = {o: self.counts[o] + other.counts[o] for o in OUTCOME_ORDER}
        return TrialTally(merged, self.n_trials + other.n_trials)

    def __add__(self, other):
        if not isinstance(other, TrialTally):
            return NotImplemented
        return self.merge(other)


def clean_distribution(dist) -> np.ndarray:
    """Validate a 4-outcome distribution and zero sub-tolerance mass.

    Accepts a mapping keyed by Outcome or a sequence in the fixed ordering.
    """
    if isinstance(dist, Mapping):
        probs = np.array([float(dist[o]) for o in OUTCOME_ORDER])
    else:
        probs = np.asarray(dist, dtype=float).reshape(-1)
        if probs.size != len(OUTCOME_ORDER):
            raise ValueError(
                f"distribution must have {len(OUTCOME_ORDER)} entries, got {probs.size}"
            )
    if not np.all(np.isfinite(probs)):
        raise ValueError("distribution contains non-finite probabilities")
    if np.any(probs < -SUB_TOLERANCE_MASS):
        raise ValueError(f"distribution contains negative probability: {probs}")
    if abs(probs.sum() - 1.0) > _DISTRIBUTION_SUM_TOL:
        raise ValueError(f"distribution sums to {probs.sum()!r}, expected 1")
    probs = np.where(probs < SUB_TOLERANCE_MASS, 0.0, probs)
    return probs / probs.sum()


def sample_outcome(dist, rng: "np.random.Generator | RngStream") -> Outcome:
    """Draw one outcome by inverse CDF over the fixed ordering.

    ``rng`` is normally a live generator; passing an RngStream draws from a
    fresh generator at that stream's initial state (a one-shot draw).
    """
    if isinstance(rng, RngStream):
        rng = rng.generator()
    probs = clean_distribution(dist)
    cum = np.cumsum(probs)
    idx = int(np.searchsorted(cum, rng.random(), side="right"))
    return OUTCOME_ORDER[min(idx, len(OUTCOME_ORDER) - 1)]


def sample_outcome_indices(dist, n: int, rng: np.random.Generator) -> np.ndarray:
    """Vectorized inverse-CDF draw; returns indices into OUTCOME_ORDER."""
    probs = clean_distribution(dist)
    cum = np.cumsum(probs)
    idx = np.searchsorted(cum, rng.random(n), side="right")
    return np.minimum(idx, len(OUTCOME_ORDER) - 1)


def run_trials(
    cfg: ReceiverConfig,
    sent_sequence: Sequence[int] | Iterable[int],
    rng: RngStream,
    povm: PovmSet | None = None,
) -> dict[int, TrialTally]:
    """Simulate a sequence of sent states (1 or 2) and tally per sent value.

    One uniform draw is consumed per trial in sequence order, so the result
    is deterministic in (seed, stream_id) and independent of how trials are
    grouped afterwards.
    """
    sent = np.asarray(list(sent_sequence), dtype=int)
    if sent.size == 0:
        raise ValueError("sent_sequence must be nonempty")
    if not np.all(np.isin(sent, (1, 2))):
        raise ValueError("sent_sequence entries must be 1 or 2")
    if povm is None:
        povm = povm_analytic(cfg)
    cum = {
        1: np.cumsum(clean_distribution(outcome_probabilities(cfg, cfg.alpha1, povm))),
        2: np.cumsum(clean_distribution(outcome_probabilities(cfg, cfg.alpha2, povm))),
    }
    u = rng.generator().random(sent.size)
    idx = np.empty(sent.size, dtype=int)
    for value in (1, 2):
        mask = sent == value
        if np.any(mask):
            idx[mask] = np.minimum(
                np.searchsorted(cum[value], u[mask], side="right"),
                len(OUTCOME_ORDER) - 1,
            )
    tallies = {}
    for value in (1, 2):
        mask = sent == value
        binned = np.bincount(idx[mask], minlength=len(OUTCOME_ORDER))
        tallies[value] = TrialTally(
            {o: int(binned[i]) for i, o in enumerate(OUTCOME_ORDER)},
            int(mask.sum()),
        )
    return tallies


def three_sigma_band(p: float, n: int) -> tuple[float, float]:
    """Binomial 3-sigma band around expected frequency p for n trials."""
    sigma = np.sqrt(max(p * (1.0 - p), 0.0) / n)
    return (p - 3.0 * sigma, p + 3.0 * sigma)


def chi_square_pvalue(tally: TrialTally, dist) -> float:
    """Goodness-of-fit p-value of a tally against an expected distribution.

    Categories the model forbids (zero expected mass) are excluded from the
    statistic; any observed count there is a model violation and yields 0.
    """
    probs = clean_distribution(dist)
    observed = np.array([tally.counts[o] for o in OUTCOME_ORDER])
    live = probs > 0.0
    if np.any(observed[~live] > 0):
        return 0.0
    expected = probs[live] * tally.n_trials
    result = stats.chisquare(observed[live], expected)
    return float(result.pvalue)
