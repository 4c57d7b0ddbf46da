import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import brentq

from ramanmem import memsim, metrics, qstate, timetags
from ramanmem.config import RetrievalBoundWarning, ScenarioConfig

import oracles

seeds = st.integers(0, 2**32 - 1)
unit = st.floats(0, 1)
CHSH = metrics.ChshSettings()


def cfg(**changes) -> ScenarioConfig:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RetrievalBoundWarning)
        return ScenarioConfig().replace(**changes)


class TestPrepareState:
    def test_hybrid(self):
        rho = memsim.prepare_state(cfg(source__state_kind="hybrid"))
        k = np.array([1, 0, 0, 1]) / np.sqrt(2)
        assert np.allclose(rho.entries, np.outer(k, k))
        assert rho.labels == ("UH", "UV", "DH", "DV")

    def test_singlet_from_phase(self):
        rho = memsim.prepare_state(cfg(source__theta2=np.pi))
        assert metrics.fidelity(rho, qstate.bell_state("psi-")) == pytest.approx(1, abs=1e-12)

    def test_psi_plus(self):
        rho = memsim.prepare_state(cfg())
        psi = qstate.bell_state("psi+").amplitudes
        assert np.vdot(psi, rho.entries @ psi).real == pytest.approx(1)

    def test_entangled_fraction_is_werner(self):
        c = cfg(source__entangled_fraction=0.6)
        assert np.allclose(memsim.source_state(c), qstate.werner(0.6, qstate.bell_state("psi+")))


class TestApplyMemory:
    def test_identity_channel(self):
        rho = oracles.random_density(np.random.default_rng(0))
        out, surv = memsim.apply_memory(rho, cfg())
        assert np.allclose(out.entries, rho) and surv == 1.0

    def test_survival_chain(self):
        c = cfg(memory__efficiency=0.267, losses__filter_transmission=0.3, losses__fiber_coupling=0.5)
        assert memsim.survival(c) == pytest.approx(0.04005)

    @given(seeds, unit, unit, st.sampled_from(["two_photon", "hybrid"]))
    @settings(max_examples=60)
    def test_kraus_oracle_and_validity(self, seed, lam, gamma, kind):
        rho = oracles.random_density(np.random.default_rng(seed))
        c = cfg(source__state_kind=kind, memory__depolarizing=lam, memory__dephasing=gamma)
        out, _ = memsim.apply_memory(rho, c)
        expected = oracles.kraus_memory(rho, lam, gamma, memsim.stored_qubit(c))
        assert np.allclose(out.entries, expected, atol=1e-12)
        qstate.check_density(out.entries)

    @given(seeds, unit, unit, unit)
    def test_survival_independent_of_state(self, seed, e, f, g):
        c = cfg(memory__efficiency=e, losses__filter_transmission=f, losses__fiber_coupling=g)
        rho = oracles.random_density(np.random.default_rng(seed))
        _, surv = memsim.apply_memory(rho, c)
        assert surv == pytest.approx(e * f * g)

    def test_solve_depolarizing_for_fidelity_target(self):
        psi = qstate.bell_state("psi+")

        def fid(lam):
            out, _ = memsim.apply_memory(psi, cfg(memory__depolarizing=lam))
            return metrics.fidelity(out, psi) - 0.85

        lam = brentq(fid, 0, 1)
        # the depolarised Bell state has fidelity 1 - 3 lam / 4
        assert lam == pytest.approx(0.2, abs=1e-9)
        out = oracles.kraus_memory(qstate.as_matrix(psi), lam, 0, 0)
        assert np.real(np.vdot(psi.amplitudes, out @ psi.amplitudes)) == pytest.approx(0.85)

    def test_dephasing_scales_coherence(self):
        psi = qstate.as_matrix(qstate.bell_state("psi+"))
        out, _ = memsim.apply_memory(psi, cfg(memory__dephasing=0.3))
        assert out.entries[1, 2] == pytest.approx(0.7 * psi[1, 2])


class TestSimulateCounts:
    def test_zero_trials(self):
        t = memsim.simulate_counts(np.eye(4) / 4, CHSH.settings(), cfg(trials=0))
        assert np.all(t.counts == 0)

    @pytest.mark.parametrize("seed", range(5))
    def test_forbidden_outcome(self, seed):
        t = memsim.simulate_counts(qstate.bell_state("psi+"), [("H", "H")], cfg(trials=10**6, seed=seed))
        assert t.counts[0] == 0

    def test_singlet_chsh(self):
        c = cfg(trials=10**6, seed=11, source__theta2=np.pi)
        t = memsim.simulate_counts(memsim.prepare_state(c), CHSH.settings(), c)
        assert metrics.chsh_s(t) == pytest.approx(metrics.TSIRELSON, abs=0.01)

    def test_frame_sign_psi_plus(self):
        c = cfg(trials=1, analyzer_frame_sign=(1, -1))
        t = memsim.simulate_counts(memsim.prepare_state(c), CHSH.settings(), c, exact=True)
        assert metrics.chsh_s(t) == pytest.approx(metrics.TSIRELSON, abs=1e-12)

    def test_counts_capped_by_trials(self):
        c = cfg(trials=50, detectors__dark_rate=1e8, seed=3)
        t = memsim.simulate_counts(np.eye(4) / 4, CHSH.settings(), c)
        assert np.all(t.counts <= 50)

    def test_exact_mean_matches_sampling(self):
        c = cfg(trials=2000, detectors__efficiency=0.6, detectors__dark_rate=5e5, memory__efficiency=0.5)
        rho = oracles.random_density(np.random.default_rng(2))
        exact = memsim.simulate_counts(rho, CHSH.settings(), c, survival=0.5, exact=True).counts
        draws = np.array([
            memsim.simulate_counts(rho, CHSH.settings(), c.replace(seed=s), survival=0.5).counts
            for s in range(400)
        ])
        se = draws.std(axis=0, ddof=1) / np.sqrt(len(draws)) + 1e-9
        assert np.all(np.abs(draws.mean(axis=0) - exact) < 5 * se + 1e-6)

    @pytest.mark.parametrize("workers", [2, 4])
    def test_parallel_bit_identical(self, workers):
        c = cfg(trials=10**5, seed=99, detectors__dark_rate=1e4)
        rho = oracles.random_density(np.random.default_rng(1))
        serial = memsim.simulate_counts(rho, CHSH.settings(), c)
        parallel = memsim.simulate_counts(rho, CHSH.settings(), c, workers=workers)
        assert serial.to_text() == parallel.to_text()

    def test_seed_changes_output(self):
        rho = np.eye(4) / 4
        a = memsim.simulate_counts(rho, CHSH.settings(), cfg(trials=10**5, seed=1))
        b = memsim.simulate_counts(rho, CHSH.settings(), cfg(trials=10**5, seed=2))
        assert not np.array_equal(a.counts, b.counts)


def hybrid(**changes):
    base = dict(
        source__state_kind="hybrid", source__pair_rate=4e5, source__heralding_efficiency=0.1,
        source__path_split=0.48, memory__efficiency=0.2, losses__filter_transmission=0.3,
        losses__fiber_coupling=0.5, detectors__efficiency=0.6, detectors__dark_rate=100.0,
        trials=10**6, seed=4,
    )
    return cfg(**(base | changes))


class TestPathNumber:
    @given(unit, st.floats(0, 0.5), unit, unit, st.floats(0, 0.05))
    @settings(max_examples=60)
    def test_bruteforce_oracle(self, h, mu, s, eta, d):
        rate = mu / 10e-9
        dark = -math.log(1 - d) / 10e-9
        c = cfg(
            source__state_kind="hybrid", source__heralding_efficiency=h, source__pair_rate=rate,
            source__path_split=s, detectors__efficiency=eta, detectors__dark_rate=dark,
        )
        p = memsim.path_number_probabilities(c)
        # a zero pair rate means no source at all, so only dark clicks remain
        expected = oracles.path_number_bruteforce(h if rate > 0 else 0, mu, s, eta, d)
        assert np.allclose(p, expected, atol=1e-10)

    def test_balanced_symmetry(self):
        p = memsim.path_number_probabilities(hybrid(source__path_split=0.5, detectors__dark_rate=0.0))
        assert p[1] == pytest.approx(p[2], rel=1e-12)
        assert p[3] < 10 * p[1] * p[2] / p[0]

    def test_vacuum(self):
        c = hybrid(source__pair_rate=0.0, detectors__dark_rate=0.0)
        m = memsim.simulate_path_number(c, exact=True)
        assert (m.p00, m.p10, m.p01, m.p11) == (1, 0, 0, 0)
        assert metrics.path_concurrence(m) == 0

    def test_sampled_close_to_exact(self):
        c = hybrid()
        exact = memsim.path_number_probabilities(c)
        sampled = memsim.sample_path_counts(c) / c.trials
        se = np.sqrt(exact * (1 - exact) / c.trials)
        assert np.all(np.abs(sampled - exact) <= 5 * se + 1e-12)

    def test_concurrence_non_increasing_in_depolarizing(self):
        lams = np.linspace(0, 1, 6)
        cs = [
            metrics.path_concurrence(memsim.simulate_path_number(hybrid(memory__depolarizing=l), exact=True))
            for l in lams
        ]
        assert np.all(np.diff(cs) <= 1e-15)

    def test_sampled_concurrence_trend(self):
        # statistical version over a batch of seeds
        def mean_c(lam):
            return np.mean([
                metrics.path_concurrence(memsim.simulate_path_number(hybrid(memory__depolarizing=lam, seed=s)))
                for s in range(8)
            ])

        assert mean_c(0.0) > mean_c(0.5) > mean_c(1.0)

    def test_ideal_hybrid_fringe(self):
        c = hybrid(source__heralding_efficiency=1.0, source__pair_rate=1.0, detectors__dark_rate=0.0)
        fit = metrics.fit_fringe(memsim.path_fringe(c, exact=True))
        assert fit.visibility == pytest.approx(1, abs=1e-9)


class TestTimeTags:
    def pairs(self, **changes):
        base = dict(
            source__pair_rate=5e4, detectors__gate_ns=200.0, trials=2 * 10**6, seed=5,
            memory__efficiency=0.1, losses__filter_transmission=0.3, losses__fiber_coupling=0.5,
            detectors__efficiency=0.6, detectors__dark_rate=1e4, pulse__w_ns=6.3,
        )
        return cfg(**(base | changes))

    def test_g2_matches_analytic(self):
        # about 1000 true coincidences, so a 3 sigma band is about 10 %
        c = self.pairs(trials=3 * 10**7, memory__efficiency=0.5)
        tags = memsim.simulate_pair_tags(c)
        g2 = timetags.g2_cross(tags, "stokes", "antistokes", 10.0, memsim.duration_ns(c))
        assert g2 == pytest.approx(memsim.expected_pair_g2(c), rel=0.12)

    def test_g2_falls_with_noise(self):
        values = []
        for dark in (1e3, 1e4, 1e5):
            c = self.pairs(detectors__dark_rate=dark)
            values.append(timetags.g2_cross(memsim.simulate_pair_tags(c), "stokes", "antistokes", 10.0,
                                            memsim.duration_ns(c)))
        assert values[0] > values[1] > values[2] > 1

    def test_pair_tags_deterministic(self):
        c = self.pairs(trials=10**5)
        assert memsim.simulate_pair_tags(c).to_text() == memsim.simulate_pair_tags(c).to_text()

    def test_pulse_histogram_shape(self):
        c = self.pairs(pulse__y0=4.6, pulse__amplitude=492.9, pulse__tc_ns=47.5)
        tags = memsim.simulate_pulse_tags(c)
        centers, hist = timetags.delay_histogram(tags, "trigger", "antistokes", 1.0, 200.0)
        fit = timetags.fit_gaussian_pulse(centers, hist)
        assert fit.tc == pytest.approx(47.5, abs=0.3)
        assert fit.w == pytest.approx(6.3, rel=0.05)

    @pytest.mark.parametrize("kind, lo, hi", [("single", 0, 0), ("coherent", 0.9, 1.1), ("thermal", 1.3, 3)])
    def test_heralded_statistics(self, kind, lo, hi):
        tags = memsim.simulate_heralded_tags(kind, 200_000, 0.3, seed=1)
        alpha = timetags.alpha_heralded(tags, "trigger", "ch1", "ch2", 2.0)
        assert lo <= alpha <= hi
