"""Time-multiplexed key distribution over a single fiber.

Alice encodes each bit in a weak early pulse (bit 1: amplitude T*gamma after
two passes through her unbalanced splitters; bit 0: shutter closed, vacuum)
followed by a strong late reference pulse of amplitude (1-T)*gamma.  Bob's
unequal-path interferometer overlaps the early pulse routed through his long
arm with the late pulse routed through his short arm; inside that coincidence
window the network reduces to the displaced two-detector receiver:

  * D1 taps the long arm before recombination and sees only the signal, so a
    D1 click identifies bit 1;
  * D2 sits behind the recombining splitter where the attenuated reference
    cancels the bit-1 signal exactly, so a D2 click identifies bit 0.

Path convention (fixed; every splitter reflection is real, no phases):
signal transmits twice at Alice (amplitude T*gamma), reflects once into
Bob's long arm (sqrt(1-T)), is tapped to D1 with power 1-tau, and meets the
reference at the last splitter with another sqrt(1-T); the reference reflects
twice at Alice and is attenuated in Bob's short arm by the fixed ratio
-sqrt(tau) that enforces the destructive interference.  Balancing the two
click rates requires tau = 1/(2-T).
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .discrimination import OUTCOME_ORDER, Outcome
from .montecarlo import RngStream, clean_distribution

#: Alice's states become hard to tell from a plain attenuator beyond this.
WEAK_SPLITTING_LIMIT = 0.2


def bob_bs_transmission(splitter_transmission: float) -> float:
    """Power transmission 1/(2-T) of Bob's tap splitter that balances the
    two conclusive click rates; at T = 0 this is an exact 50:50 splitter."""
    t = float(splitter_transmission)
    if not 0.0 <= t < 1.0:
        raise ValueError(f"splitter transmission must lie in [0, 1), got {t}")
    return 1.0 / (2.0 - t)


@dataclass(frozen=True)
class MultiplexConfig:
    """Protocol parameters for the fiber scheme.

    ``splitter_transmission`` is the shared power transmission T of every
    unbalanced splitter; the regime of interest is T << 1 and a warning is
    emitted above WEAK_SPLITTING_LIMIT.  Bob's tap transmission is derived,
    never set independently.
    """

    gamma: complex
    splitter_transmission: float
    eta: float
    channel_transmission: float = 1.0
    rounds: int = 100_000
    seed: int = 0

    def __post_init__(self):
        g = complex(self.gamma)
        if not (math.isfinite(g.real) and math.isfinite(g.imag)):
            raise ValueError(f"gamma must be finite, got {g!r}")
        t = float(self.splitter_transmission)
        if not 0.0 < t < 1.0:
            raise ValueError(f"splitter transmission must lie in (0, 1), got {t}")
        if not 0.0 <= float(self.eta) <= 1.0:
            raise ValueError(f"detector efficiency must lie in [0, 1], got {self.eta}")
        c = float(self.channel_transmission)
        if not 0.0 < c <= 1.0:
            raise ValueError(f"channel transmission must lie in (0, 1], got {c}")
        if int(self.rounds) < 1:
            raise ValueError(f"rounds must be >= 1, got {self.rounds}")
        object.__setattr__(self, "gamma", g)
        object.__setattr__(self, "splitter_transmission", t)
        object.__setattr__(self, "eta", float(self.eta))
        object.__setattr__(self, "channel_transmission", c)
        object.__setattr__(self, "rounds", int(self.rounds))
        if self.outside_weak_splitting_regime:
            warnings.warn(
                f"splitter transmission T={t} exceeds {WEAK_SPLITTING_LIMIT}; "
                "the scheme is designed for T << 1",
                UserWarning,
                stacklevel=2,
            )

    @property
    def bob_bs_transmission(self) -> float:
        return bob_bs_transmission(self.splitter_transmission)

    @property
    def outside_weak_splitting_regime(self) -> bool:
        return self.splitter_transmission > WEAK_SPLITTING_LIMIT


@dataclass(frozen=True)
class PulsePair:
    """One emitted round: weak signal in the early slot, strong reference in
    the late slot."""

    signal_amplitude: complex
    auxiliary_amplitude: complex
    signal_slot: str = "early"
    auxiliary_slot: str = "late"


@dataclass(frozen=True)
class WindowedClicks:
    """Click bits of one round; only in-window events enter sifting."""

    d1: int
    d2: int
    in_window: bool = True


@dataclass(frozen=True)
class MultiplexDerived:
    """Derived constants of a configuration (unit channel transmission)."""

    alice_signal_amp: complex  # T * gamma
    alice_aux_amp: complex  # (1 - T) * gamma
    tau: float  # 1 / (2 - T)
    detector_mean_photons: float  # (1-T)^2 T^2 |gamma|^2 / (2-T)

    @property
    def state_overlap(self) -> float:
        """|<vacuum|signal>| = exp(-T^2 |gamma|^2 / 2)."""
        return math.exp(-0.5 * abs(self.alice_signal_amp) ** 2)

    def round_inconclusive_probability(self, eta: float) -> float:
        """exp(-eta * (1-T)^2 T^2 |gamma|^2 / (2-T))."""
        return math.exp(-eta * self.detector_mean_photons)


def derived_constants(cfg: MultiplexConfig) -> MultiplexDerived:
    t = cfg.splitter_transmission
    g2 = abs(cfg.gamma) ** 2
    return MultiplexDerived(
        alice_signal_amp=t * cfg.gamma,
        alice_aux_amp=(1.0 - t) * cfg.gamma,
        tau=cfg.bob_bs_transmission,
        detector_mean_photons=(1.0 - t) ** 2 * t * t * g2 / (2.0 - t),
    )


def alice_emit(bit: int, cfg: MultiplexConfig) -> PulsePair:
    """Alice's output for one bit: shutter closed (vacuum signal) for 0,
    the weak pulse T*gamma for 1; the reference pulse is bit-independent."""
    if bit not in (0, 1):
        raise ValueError(f"bit must be 0 or 1, got {bit}")
    t = cfg.splitter_transmission
    return PulsePair(
        signal_amplitude=bit * t * cfg.gamma,
        auxiliary_amplitude=(1.0 - t) * cfg.gamma,
    )


@dataclass(frozen=True)
class DetectorAmplitudes:
    """Coherent amplitudes at the two detectors inside the coincidence window."""

    amp_d1: complex
    amp_d2: complex


def propagate_bob(
    pulses: PulsePair,
    cfg: MultiplexConfig,
    tau: float | None = None,
) -> DetectorAmplitudes:
    """Exact in-window detector amplitudes for one emitted round.

    Both pulses ride the same fiber, so channel loss scales both by
    sqrt(channel_transmission) and the fixed attenuation ratio in Bob's short
    arm keeps the destructive interference at D2 exact: for bit 1 the signal
    contribution and the reference leak are the same floating-point product,
    so amp_d2 is exactly zero.
    """
    t = cfg.splitter_transmission
    tau = cfg.bob_bs_transmission if tau is None else float(tau)
    if not 0.0 < tau < 1.0:
        raise ValueError(f"tap transmission must lie in (0, 1), got {tau}")
    root_c = math.sqrt(cfg.channel_transmission)
    signal = pulses.signal_amplitude * root_c
    bit1_signal = t * cfg.gamma * root_c  # what the signal would be for bit 1
    leak = bit1_signal * (1.0 - t) * math.sqrt(tau)
    return DetectorAmplitudes(
        amp_d1=signal * math.sqrt(1.0 - t) * math.sqrt(1.0 - tau),
        amp_d2=signal * (1.0 - t) * math.sqrt(tau) - leak,
    )


def click_probabilities(amps: DetectorAmplitudes, eta: float) -> dict[Outcome, float]:
    """Joint click distribution for coherent light on two detectors.

    Each detector clicks independently with probability 1 - exp(-eta |amp|^2).
    """
    if not 0.0 <= float(eta) <= 1.0:
        raise ValueError(f"detector efficiency must lie in [0, 1], got {eta}")
    for amp in (amps.amp_d1, amps.amp_d2):
        a = complex(amp)
        if not (math.isfinite(a.real) and math.isfinite(a.imag)):
            raise ValueError(f"amplitude must be finite, got {a!r}")
    no1 = math.exp(-eta * abs(amps.amp_d1) ** 2)
    no2 = math.exp(-eta * abs(amps.amp_d2) ** 2)
    return {
        Outcome.INCONCLUSIVE: no1 * no2,
        Outcome.CONCLUSIVE_1: no1 * (1.0 - no2),
        Outcome.CONCLUSIVE_2: (1.0 - no1) * no2,
        Outcome.ANOMALOUS: (1.0 - no1) * (1.0 - no2),
    }


@dataclass(frozen=True)
class BalanceReport:
    """Click-power balance of the two conclusive events."""

    tau: float
    d1_mean_photons_bit1: float
    d2_mean_photons_bit0: float

    @property
    def imbalance(self) -> float:
        return self.d1_mean_photons_bit1 - self.d2_mean_photons_bit0


def balance_check(cfg: MultiplexConfig, tau: float | None = None) -> BalanceReport:
    """Compare the detected mean photon numbers of the two conclusive events.

    At the derived tap transmission tau = 1/(2-T) the two are equal; any
    overridden tau reports its imbalance.
    """
    amps1 = propagate_bob(alice_emit(1, cfg), cfg, tau=tau)
    amps0 = propagate_bob(alice_emit(0, cfg), cfg, tau=tau)
    return BalanceReport(
        tau=cfg.bob_bs_transmission if tau is None else float(tau),
        d1_mean_photons_bit1=abs(amps1.amp_d1) ** 2,
        d2_mean_photons_bit0=abs(amps0.amp_d2) ** 2,
    )


def round_inconclusive_probability(cfg: MultiplexConfig) -> float:
    """Closed-form per-round no-click probability, channel loss included."""
    rate = derived_constants(cfg).detector_mean_photons * cfg.channel_transmission
    return math.exp(-cfg.eta * rate)


def quantum_bound(cfg: MultiplexConfig) -> float:
    """Lowest inconclusive probability any receiver could reach on the pair
    of states arriving at Bob: exp(-c T^2 |gamma|^2 / 2)."""
    t = cfg.splitter_transmission
    return math.exp(
        -0.5 * cfg.channel_transmission * t * t * abs(cfg.gamma) ** 2
    )


def sample_round(bit: int, cfg: MultiplexConfig, rng: np.random.Generator) -> WindowedClicks:
    """Sample one round's in-window click pattern."""
    dist = click_probabilities(propagate_bob(alice_emit(bit, cfg), cfg), cfg.eta)
    probs = clean_distribution(dist)
    idx = int(np.searchsorted(np.cumsum(probs), rng.random(), side="right"))
    outcome = OUTCOME_ORDER[min(idx, len(OUTCOME_ORDER) - 1)]
    return WindowedClicks(d1=outcome.d1, d2=outcome.d2, in_window=True)


def _out_of_window_amplitudes(bit: int, cfg: MultiplexConfig) -> dict[str, complex]:
    """Amplitudes of the discarded (mistimed) pulses at the detectors.

    The early signal can cross Bob's short arm to D2, and the late reference
    can cross his long arm to both detectors; timing discipline keeps these
    out of the measurement window.
    """
    t = cfg.splitter_transmission
    tau = cfg.bob_bs_transmission
    root_c = math.sqrt(cfg.channel_transmission)
    pulses = alice_emit(bit, cfg)
    signal = pulses.signal_amplitude * root_c
    aux = pulses.auxiliary_amplitude * root_c
    attenuator = -math.sqrt(tau)  # fixed ratio of Bob's short arm
    return {
        "d2_early": signal * math.sqrt(t) * attenuator * math.sqrt(t),
        "d1_late": aux * math.sqrt(1.0 - t) * math.sqrt(1.0 - tau),
        "d2_late": aux * math.sqrt(1.0 - t) * math.sqrt(tau) * math.sqrt(1.0 - t),
    }


@dataclass(frozen=True, eq=False)
class KeyReport:
    """Result of a full protocol run."""

    rounds: int
    sent_bits: np.ndarray
    sifted_positions: np.ndarray
    sifted_bits: np.ndarray  # Bob's conclusive bits, aligned with positions
    sifted_key_rate: float
    bit_error_rate: float
    inconclusive_rate_empirical: float
    anomalous_count: int
    counts: dict[Outcome, int]
    out_of_window_clicks: dict[str, int] | None = None


def run_protocol(
    cfg: MultiplexConfig,
    rng: RngStream | None = None,
    out_of_window_diagnostics: bool = False,
) -> KeyReport:
    """Run the whole protocol: emit, propagate, detect, classify, sift.

    A D1 click reads bit 1, a D2 click bit 0; no clicks is inconclusive and
    double clicks are anomalous, counted and excluded.  Under the ideal model
    one detector amplitude is exactly zero every round, so the sifted key is
    error free and no anomalous events occur.

    Diagnostics of the mistimed (out-of-window) clicks are sampled from a
    separate substream so they never perturb the main outcome sequence.
    """
    if rng is None:
        rng = RngStream(cfg.seed)
    gen = rng.generator()
    bits = gen.integers(0, 2, size=cfg.rounds)
    u = gen.random(cfg.rounds)

    cums = {}
    for bit in (0, 1):
        dist = click_probabilities(propagate_bob(alice_emit(bit, cfg), cfg), cfg.eta)
        cums[bit] = np.cumsum(clean_distribution(dist))
    idx = np.empty(cfg.rounds, dtype=int)
    for bit in (0, 1):
        mask = bits == bit
        if np.any(mask):
            idx[mask] = np.minimum(
                np.searchsorted(cums[bit], u[mask], side="right"),
                len(OUTCOME_ORDER) - 1,
            )

    conclusive_1 = idx == OUTCOME_ORDER.index(Outcome.CONCLUSIVE_1)  # D2: bit 0
    conclusive_2 = idx == OUTCOME_ORDER.index(Outcome.CONCLUSIVE_2)  # D1: bit 1
    sifted_mask = conclusive_1 | conclusive_2
    sifted_positions = np.flatnonzero(sifted_mask)
    bob_bits = np.where(conclusive_2[sifted_mask], 1, 0)
    n_sifted = sifted_positions.size
    errors = int(np.count_nonzero(bob_bits != bits[sifted_positions]))

    binned = np.bincount(idx, minlength=len(OUTCOME_ORDER))
    counts = {o: int(binned[i]) for i, o in enumerate(OUTCOME_ORDER)}

    out_of_window = None
    if out_of_window_diagnostics:
        diag_gen = rng.substream(1).generator()
        out_of_window = {name: 0 for name in ("d2_early", "d1_late", "d2_late")}
        amps = {bit: _out_of_window_amplitudes(bit, cfg) for bit in (0, 1)}
        draws = diag_gen.random((cfg.rounds, 3))
        for j, name in enumerate(("d2_early", "d1_late", "d2_late")):
            p = np.array(
                [1.0 - math.exp(-cfg.eta * abs(amps[b][name]) ** 2) for b in (0, 1)]
            )
            out_of_window[name] = int(np.count_nonzero(draws[:, j] < p[bits]))

    return KeyReport(
        rounds=cfg.rounds,
        sent_bits=bits,
        sifted_positions=sifted_positions,
        sifted_bits=bob_bits,
        sifted_key_rate=n_sifted / cfg.rounds,
        bit_error_rate=errors / n_sifted if n_sifted else 0.0,
        inconclusive_rate_empirical=counts[Outcome.INCONCLUSIVE] / cfg.rounds,
        anomalous_count=counts[Outcome.ANOMALOUS],
        counts=counts,
        out_of_window_clicks=out_of_window,
    )
