import math
import warnings

import numpy as np
import pytest

from usdsim.discrimination import Outcome, inconclusive_rate
from usdsim.montecarlo import RngStream, three_sigma_band
from usdsim.multiplex import (
    MultiplexConfig,
    alice_emit,
    balance_check,
    bob_bs_transmission,
    click_probabilities,
    derived_constants,
    propagate_bob,
    quantum_bound,
    round_inconclusive_probability,
    run_protocol,
    sample_round,
)


def make_config(gamma=10.0, T=0.05, eta=1.0, channel=1.0, rounds=1000, seed=0):
    return MultiplexConfig(
        gamma=gamma,
        splitter_transmission=T,
        eta=eta,
        channel_transmission=channel,
        rounds=rounds,
        seed=seed,
    )


def network_amplitudes_bruteforce(bit, cfg, tau=None):
    """Independent amplitude propagation by literal 2x2 splitter products.

    Every splitter uses the matrix [[sqrt(t), sqrt(1-t)], [sqrt(1-t), -sqrt(t)]]
    on (transmitting input, reflecting input); the attenuation in Bob's short
    arm is solved from the destructive-interference condition at D2 instead of
    reusing the library's expression.
    """

    def splitter(t):
        rt, rr = math.sqrt(t), math.sqrt(1.0 - t)
        return np.array([[rt, rr], [rr, -rt]])

    t = cfg.splitter_transmission
    tau = cfg.bob_bs_transmission if tau is None else tau
    m_t = splitter(t)
    m_tau = splitter(tau)

    # Alice: split, shutter on the short path, recombine (different slots)
    short0, long0 = m_t @ np.array([cfg.gamma, 0.0])
    early = (m_t @ np.array([short0 * bit, 0.0]))[0]
    late = (m_t @ np.array([0.0, long0]))[0]

    root_c = math.sqrt(cfg.channel_transmission)
    early *= root_c
    late *= root_c

    # Bob: early signal into the long arm, late reference into the short arm;
    # the tap to D1 is the reflected output (power 1 - tau)
    long_arm = (m_t @ np.array([early, 0.0]))[1]
    to_d1 = (m_tau @ np.array([long_arm, 0.0]))[1]
    residual = (m_tau @ np.array([long_arm, 0.0]))[0]
    short_arm = (m_t @ np.array([late, 0.0]))[0]

    # attenuation solved so the bit-1 signal cancels at D2
    early_ref = t * cfg.gamma * root_c  # bit-1 early amplitude
    long_ref = (m_t @ np.array([early_ref, 0.0]))[1]
    residual_ref = (m_tau @ np.array([long_ref, 0.0]))[0]
    short_ref = (m_t @ np.array([late, 0.0]))[0]
    attenuation = -(m_t @ np.array([0.0, residual_ref]))[0] / (m_t @ np.array([short_ref, 0.0]))[0]

    d2 = (m_t @ np.array([short_arm * attenuation, residual]))[0]
    return to_d1, d2


class TestConfig:
    def test_tau_is_derived(self):
        cfg = make_config(T=0.05)
        assert cfg.bob_bs_transmission == 1.0 / (2.0 - 0.05)

    def test_limit_tap_is_balanced(self):
        assert bob_bs_transmission(0.0) == 0.5

    def test_weak_splitting_warning(self):
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            cfg = make_config(T=0.3)
        assert cfg.outside_weak_splitting_regime
        assert any("T=0.3" in str(w.message) for w in caught)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            cfg = make_config(T=0.2)
        assert not cfg.outside_weak_splitting_regime
        assert not caught

    def test_range_validation(self):
        for kwargs in (
            dict(T=0.0),
            dict(T=1.0),
            dict(eta=-0.1),
            dict(eta=1.1),
            dict(channel=0.0),
            dict(channel=1.5),
            dict(rounds=0),
            dict(gamma=float("inf")),
        ):
            with pytest.raises(ValueError):
                make_config(**kwargs)


class TestAliceEmit:
    def test_shutter_closed(self):
        pulses = alice_emit(0, make_config())
        assert pulses.signal_amplitude == 0.0
        assert pulses.signal_slot == "early" and pulses.auxiliary_slot == "late"

    def test_weak_pulse_and_overlap(self):
        cfg = make_config(gamma=10.0, T=0.05)
        pulses = alice_emit(1, cfg)
        assert pulses.signal_amplitude == pytest.approx(0.5)
        # overlap of the two emitted states with the vacuum alternative
        overlap = math.exp(-0.5 * abs(pulses.signal_amplitude) ** 2)
        assert overlap == pytest.approx(math.exp(-0.125), abs=1e-15)
        assert derived_constants(cfg).state_overlap == pytest.approx(overlap, abs=1e-15)

    def test_reference_pulse(self):
        pulses = alice_emit(1, make_config(gamma=10.0, T=0.05))
        assert pulses.auxiliary_amplitude == pytest.approx(9.5)

    def test_bad_bit(self):
        with pytest.raises(ValueError):
            alice_emit(2, make_config())


class TestPropagation:
    def test_bit_one_interferes_destructively_at_d2(self):
        cfg = make_config(gamma=10.0, T=0.05)
        amps = propagate_bob(alice_emit(1, cfg), cfg)
        assert amps.amp_d2 == 0.0  # exact cancellation, not approximate
        t = cfg.splitter_transmission
        want = (1.0 - t) ** 2 * t * t * abs(cfg.gamma) ** 2 / (2.0 - t)
        assert abs(amps.amp_d1) ** 2 == pytest.approx(want, abs=1e-12)
        # the algebraic identity behind it
        tau = cfg.bob_bs_transmission
        assert (1.0 - t) * (1.0 - tau) == pytest.approx((1.0 - t) ** 2 / (2.0 - t), abs=1e-15)

    def test_bit_zero_reference_leak_only(self):
        cfg = make_config(gamma=10.0, T=0.05)
        amps = propagate_bob(alice_emit(0, cfg), cfg)
        assert amps.amp_d1 == 0.0
        t, tau = cfg.splitter_transmission, cfg.bob_bs_transmission
        want = t * t * abs(cfg.gamma) ** 2 * (1.0 - t) ** 2 * tau
        assert abs(amps.amp_d2) ** 2 == pytest.approx(want, abs=1e-12)

    def test_vanishing_tap(self):
        cfg = make_config(gamma=10.0, T=1e-9)
        for bit in (0, 1):
            amps = propagate_bob(alice_emit(bit, cfg), cfg)
            assert abs(amps.amp_d1) < 1e-6 and abs(amps.amp_d2) < 1e-6

    def test_matches_bruteforce_network(self):
        rng = np.random.default_rng(17)
        for _ in range(12):
            cfg = make_config(
                gamma=complex(*rng.uniform(-8, 8, 2)),
                T=rng.uniform(0.005, 0.2),
                channel=rng.uniform(0.3, 1.0),
            )
            for bit in (0, 1):
                amps = propagate_bob(alice_emit(bit, cfg), cfg)
                d1, d2 = network_amplitudes_bruteforce(bit, cfg)
                assert abs(amps.amp_d1 - d1) <= 1e-12
                assert abs(amps.amp_d2 - d2) <= 1e-12

    def test_channel_scales_both_pulses(self):
        cfg = make_config(gamma=10.0, T=0.05, channel=0.5)
        amps1 = propagate_bob(alice_emit(1, cfg), cfg)
        assert amps1.amp_d2 == 0.0  # cancellation survives the loss
        full = propagate_bob(alice_emit(1, make_config(gamma=10.0, T=0.05)), make_config(gamma=10.0, T=0.05))
        assert abs(amps1.amp_d1) ** 2 == pytest.approx(0.5 * abs(full.amp_d1) ** 2, abs=1e-12)


class TestClickProbabilities:
    def test_no_field_no_click(self):
        from usdsim.multiplex import DetectorAmplitudes

        probs = click_probabilities(DetectorAmplitudes(0.0, 0.0), 1.0)
        assert probs[Outcome.INCONCLUSIVE] == 1.0

    def test_closed_form_rate(self):
        cfg = make_config(gamma=10.0, T=0.05, eta=1.0)
        amps = propagate_bob(alice_emit(1, cfg), cfg)
        probs = click_probabilities(amps, cfg.eta)
        want = math.exp(-(0.95**2) * 0.25 / 1.95)
        assert probs[Outcome.INCONCLUSIVE] == pytest.approx(want, abs=1e-12)
        assert sum(probs.values()) == pytest.approx(1.0, abs=1e-15)

    def test_eta_out_of_range(self):
        from usdsim.multiplex import DetectorAmplitudes

        with pytest.raises(ValueError):
            click_probabilities(DetectorAmplitudes(0.1, 0.0), 1.2)

    def test_quantum_limit_approach(self):
        # fixed signal strength |gamma| T: the inconclusive rate approaches
        # the bound exp(-T^2 |gamma|^2 / 2) monotonically as T shrinks
        strength = 0.5
        ratios = []
        for t in (0.1, 0.05, 0.01):
            cfg = make_config(gamma=strength / t, T=t, eta=1.0)
            ratios.append(round_inconclusive_probability(cfg) / quantum_bound(cfg))
        assert all(r >= 1.0 for r in ratios)
        assert ratios[0] >= ratios[1] >= ratios[2]
        assert ratios[2] == pytest.approx(1.0, abs=2e-3)


class TestBalance:
    @pytest.mark.parametrize("T", [0.01, 0.05, 0.1, 0.2])
    @pytest.mark.parametrize("gamma", [5.0, 10.0, 20.0])
    def test_derived_tap_balances_exactly(self, T, gamma):
        report = balance_check(make_config(gamma=gamma, T=T))
        assert abs(report.imbalance) <= 1e-12
        derived = derived_constants(make_config(gamma=gamma, T=T))
        assert report.d1_mean_photons_bit1 == pytest.approx(
            derived.detector_mean_photons, abs=1e-12
        )

    def test_override_reports_imbalance(self):
        report = balance_check(make_config(gamma=10.0, T=0.1), tau=0.5)
        assert report.tau == 0.5
        assert abs(report.imbalance) > 1e-3

    def test_monotone_in_eta_and_gamma(self):
        rates_eta = [
            round_inconclusive_probability(make_config(eta=e)) for e in np.linspace(0.1, 1.0, 10)
        ]
        assert all(a > b for a, b in zip(rates_eta, rates_eta[1:]))
        rates_gamma = [
            round_inconclusive_probability(make_config(gamma=g)) for g in np.linspace(1.0, 20.0, 10)
        ]
        assert all(a > b for a, b in zip(rates_gamma, rates_gamma[1:]))

    def test_consistency_with_receiver_bound(self):
        # the detector-level states of the two bits form an effective pair
        # whose unambiguous-discrimination bound is the round's no-click
        # probability: the fiber network realizes the two-detector receiver
        for T in (0.01, 0.05, 0.1):
            cfg = make_config(gamma=10.0, T=T, eta=1.0)
            amps1 = propagate_bob(alice_emit(1, cfg), cfg)
            amps0 = propagate_bob(alice_emit(0, cfg), cfg)
            separation = math.hypot(abs(amps1.amp_d1), abs(amps0.amp_d2))
            assert inconclusive_rate(0.0, separation) == pytest.approx(
                round_inconclusive_probability(cfg), abs=1e-10
            )


class TestProtocol:
    def test_blind_detectors_empty_key(self):
        report = run_protocol(make_config(eta=0.0, rounds=500))
        assert report.sifted_positions.size == 0
        assert report.inconclusive_rate_empirical == 1.0
        assert report.bit_error_rate == 0.0

    def test_ideal_run_statistics(self):
        cfg = make_config(gamma=10.0, T=0.05, eta=1.0, rounds=100_000, seed=99)
        report = run_protocol(cfg)
        assert report.bit_error_rate == 0.0
        assert report.anomalous_count == 0
        p = round_inconclusive_probability(cfg)
        lo, hi = three_sigma_band(p, cfg.rounds)
        assert lo <= report.inconclusive_rate_empirical <= hi
        assert report.sifted_positions.size == report.sifted_bits.size
        assert report.sifted_key_rate == pytest.approx(
            1.0 - report.inconclusive_rate_empirical, abs=1e-12
        )

    def test_sifted_bits_match_alice(self):
        report = run_protocol(make_config(rounds=20_000, seed=3))
        np.testing.assert_array_equal(
            report.sifted_bits, report.sent_bits[report.sifted_positions]
        )

    def test_reproducible(self):
        cfg = make_config(rounds=5000, seed=12)
        a, b = run_protocol(cfg), run_protocol(cfg)
        np.testing.assert_array_equal(a.sent_bits, b.sent_bits)
        np.testing.assert_array_equal(a.sifted_positions, b.sifted_positions)
        assert a.counts == b.counts

    def test_diagnostics_do_not_disturb_main_stream(self):
        cfg = make_config(rounds=5000, seed=12)
        plain = run_protocol(cfg)
        with_diag = run_protocol(cfg, out_of_window_diagnostics=True)
        assert plain.counts == with_diag.counts
        np.testing.assert_array_equal(plain.sent_bits, with_diag.sent_bits)
        # the mistimed reference pulse is bright: it clicks essentially always
        assert with_diag.out_of_window_clicks["d1_late"] >= 0.99 * cfg.rounds
        assert with_diag.out_of_window_clicks["d2_early"] <= cfg.rounds // 100

    def test_lossy_channel_still_error_free(self):
        cfg = make_config(gamma=10.0, T=0.05, eta=0.9, channel=0.6, rounds=50_000, seed=5)
        report = run_protocol(cfg)
        assert report.bit_error_rate == 0.0
        assert report.anomalous_count == 0
        p = round_inconclusive_probability(cfg)
        lo, hi = three_sigma_band(p, cfg.rounds)
        assert lo <= report.inconclusive_rate_empirical <= hi

    def test_sample_round(self):
        gen = RngStream(4).generator()
        clicks = sample_round(1, make_config(), gen)
        assert clicks.in_window
        assert clicks.d1 in (0, 1) and clicks.d2 in (0, 1)
