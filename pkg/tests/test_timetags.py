import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ramanmem import timetags
from ramanmem.errors import ConvergenceError, DegenerateDataError, ValidationError
from ramanmem.timetags import TimeTagStream

import oracles

S1 = dict(y0=4.6, amplitude=492.9, tc=47.5, w=6.3)
seeds = st.integers(0, 2**32 - 1)


def poisson_stream(rng, rate_per_ns, duration):
    n = rng.poisson(rate_per_ns * duration)
    return np.unique(rng.uniform(0, duration, n))


class TestStream:
    def test_unsorted_rejected(self):
        with pytest.raises(ValidationError):
            TimeTagStream({"stokes": [2.0, 1.0]})

    def test_duplicate_rejected(self):
        with pytest.raises(ValidationError):
            TimeTagStream({"stokes": [1.0, 1.0]})

    def test_unknown_channel(self):
        with pytest.raises(ValidationError):
            TimeTagStream({"stokes": [1.0]})["antistokes"]

    def test_text_roundtrip(self, tmp_path):
        rng = np.random.default_rng(0)
        s = TimeTagStream({"stokes": np.sort(rng.uniform(0, 1e3, 50)), "antistokes": [0.1, 12.5]})
        s.write(tmp_path / "t.txt")
        text = (tmp_path / "t.txt").read_text()
        times = [float(line.split()[1]) for line in text.splitlines()]
        assert times == sorted(times)
        assert TimeTagStream.read(tmp_path / "t.txt") == s

    @pytest.mark.parametrize("text", ["stokes", "stokes x", "stokes 2\nstokes 1"])
    def test_bad_text(self, text):
        with pytest.raises(ValidationError):
            TimeTagStream.from_text(text)


class TestCoincidences:
    def test_identical_streams(self):
        t = np.arange(100.0) * 7
        s = TimeTagStream({"a": t, "b": t})
        assert timetags.coincidences(s, "a", "b", 0.1) == 100

    def test_disjoint(self):
        s = TimeTagStream({"a": np.arange(10.0), "b": np.arange(10.0) + 1e6})
        assert timetags.coincidences(s, "a", "b", 5.0) == 0

    def test_one_to_one(self):
        s = TimeTagStream({"a": [0.0], "b": [-1.0, 0.5, 1.0]})
        assert timetags.coincidences(s, "a", "b", 4.0) == 1

    def test_edge_inclusive(self):
        s = TimeTagStream({"a": [0.0], "b": [2.0]})
        assert timetags.coincidences(s, "a", "b", 4.0) == 1

    def test_accidental_rate(self):
        rng = np.random.default_rng(7)
        r, tau, total = 1e-3, 10.0, 1e8
        s = TimeTagStream({"a": poisson_stream(rng, r, total), "b": poisson_stream(rng, r, total)})
        mean = r * r * tau * total
        assert abs(timetags.coincidences(s, "a", "b", tau) - mean) <= 3 * np.sqrt(mean)

    @given(seeds, st.floats(0.5, 50))
    @settings(max_examples=40)
    def test_symmetric(self, seed, window):
        rng = np.random.default_rng(seed)
        s = TimeTagStream({"a": poisson_stream(rng, 0.01, 1e4), "b": poisson_stream(rng, 0.01, 1e4)})
        assert timetags.coincidences(s, "a", "b", window) == timetags.coincidences(s, "b", "a", window)

    def test_bad_window(self):
        s = TimeTagStream({"a": [0.0], "b": [0.0]})
        with pytest.raises(ValidationError):
            timetags.coincidences(s, "a", "b", 0.0)


class TestG2:
    def test_poisson_streams(self):
        rng = np.random.default_rng(11)
        total = 1e9
        s = TimeTagStream({"a": poisson_stream(rng, 1e-3, total), "b": poisson_stream(rng, 1e-3, total)})
        assert timetags.g2_cross(s, "a", "b", 10.0, total) == pytest.approx(1.0, abs=0.1)

    @given(seeds, st.floats(-1e6, 1e6))
    @settings(max_examples=30)
    def test_translation_invariant(self, seed, delta):
        rng = np.random.default_rng(seed)
        base = poisson_stream(rng, 0.01, 1e5)
        s = TimeTagStream({"a": base, "b": np.unique(base + rng.normal(0, 2, base.size))})
        g = timetags.g2_cross(s, "a", "b", 5.0, 1e5)
        assert timetags.g2_cross(s.shifted(delta), "a", "b", 5.0, 1e5) == g

    @pytest.mark.parametrize("channels", [{"a": [], "b": [1.0]}, {"a": [1.0], "b": []}])
    def test_empty(self, channels):
        with pytest.raises(ValidationError):
            timetags.g2_cross(TimeTagStream(channels), "a", "b", 1.0, 10.0)


class TestAlpha:
    def test_single_photon(self):
        trig = np.arange(10.0) * 100
        s = TimeTagStream({"t": trig, "1": trig[::2] + 0.1, "2": trig[1::2] + 0.1})
        assert timetags.alpha_heralded(s, "t", "1", "2", 1.0) == 0

    def test_poisson_factorisation(self):
        # independent clicks per trigger: N_T12 = N_T p1 p2, so alpha = 1
        rng = np.random.default_rng(2)
        trig = np.arange(200_000) * 100.0
        c1 = trig[rng.random(trig.size) < 0.2]
        c2 = trig[rng.random(trig.size) < 0.3] + 0.2
        s = TimeTagStream({"t": trig, "1": c1, "2": c2})
        assert timetags.alpha_heralded(s, "t", "1", "2", 2.0) == pytest.approx(1.0, abs=0.1)

    def test_no_triggers(self):
        with pytest.raises(ValidationError):
            timetags.alpha_heralded(TimeTagStream({"t": [], "1": [1.0], "2": [2.0]}), "t", "1", "2", 1.0)

    def test_silent_detector(self):
        s = TimeTagStream({"t": [0.0], "1": [0.0], "2": []})
        with pytest.raises(DegenerateDataError):
            timetags.alpha_heralded(s, "t", "1", "2", 1.0)


class TestHistogram:
    def test_delays(self):
        s = TimeTagStream({"t": [0.0, 100.0], "x": [5.2, 7.9, 105.5, 250.0]})
        centers, counts = timetags.delay_histogram(s, "t", "x", 1.0, 100.0)
        assert counts.sum() == 3
        assert counts[5] == 2 and counts[7] == 1
        assert centers[0] == 0.5

    def test_csv_roundtrip(self, tmp_path):
        c, n = np.arange(5) + 0.5, np.array([1, 0, 3, 2, 9])
        timetags.write_histogram(tmp_path / "h.csv", c, n)
        assert (tmp_path / "h.csv").read_text().splitlines()[0] == "bin_center_ns,count"
        back_c, back_n = timetags.read_histogram(tmp_path / "h.csv")
        assert np.array_equal(back_c, c) and np.array_equal(back_n, n)


class TestPulseFit:
    t = np.arange(0.0, 100.0) + 0.5

    def test_recovers_s1_curve(self):
        y = timetags.gaussian_pulse(self.t, **S1)
        fit = timetags.fit_gaussian_pulse(self.t, y)
        for k, v in S1.items():
            assert getattr(fit, k) == pytest.approx(v, rel=1e-6)
        assert fit.fwhm == pytest.approx(7.42, abs=0.005)

    @given(st.floats(-500, 500))
    @settings(max_examples=30)
    def test_shift_equivariant(self, delta):
        y = timetags.gaussian_pulse(self.t, **S1)
        a = timetags.fit_gaussian_pulse(self.t, y)
        b = timetags.fit_gaussian_pulse(self.t + delta, y)
        assert b.tc - a.tc == pytest.approx(delta, abs=1e-8)
        assert (b.y0, b.amplitude, b.w) == pytest.approx((a.y0, a.amplitude, a.w), abs=1e-8)

    @given(seeds)
    @settings(max_examples=25, deadline=None)
    def test_matches_curve_fit_on_noisy_data(self, seed):
        rng = np.random.default_rng(seed)
        y = rng.poisson(timetags.gaussian_pulse(self.t, **S1)).astype(float)
        fit = timetags.fit_gaussian_pulse(self.t, y)
        ref = oracles.curve_fit_pulse(self.t, y, p0=[5, 400, 45, 8])
        assert [fit.y0, fit.amplitude, fit.tc, fit.w] == pytest.approx(list(ref), rel=1e-4, abs=1e-4)

    def test_flat(self):
        with pytest.raises(DegenerateDataError):
            timetags.fit_gaussian_pulse(self.t, np.full(self.t.size, 3.0))

    def test_too_few_bins(self):
        with pytest.raises(ValidationError):
            timetags.fit_gaussian_pulse([1, 2, 3, 4], [0, 1, 0, 0])

    def test_iteration_limit(self):
        rng = np.random.default_rng(0)
        y = rng.poisson(timetags.gaussian_pulse(self.t, 4.6, 492.9, 47.1, 6.3)).astype(float)
        with pytest.raises(ConvergenceError):
            timetags.fit_gaussian_pulse(self.t, y, max_iter=1)
