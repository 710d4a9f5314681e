import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from oracles import detrend_ref, interior_maxima, ls_slope
from tinyhr.errors import DegenerateFrame, InvalidFactor, OutOfBand
from tinyhr.signal import (
    HIGH_LEN,
    LOW_LEN,
    Artifact,
    BeatShape,
    Frame,
    Label,
    SynthParams,
    baseline_correct,
    downsample,
    low_rate_view,
    normalize,
    preprocess,
    synth_frame,
    synth_waveform,
)

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


def frame(values, rate=12.0):
    return Frame(np.asarray(values, dtype=float), rate)


class TestFrame:
    def test_samples_are_read_only(self):
        f = frame([1.0, 2.0, 3.0])
        with pytest.raises(ValueError):
            f.samples[0] = 5.0

    def test_hr_truth_range(self):
        Frame(np.zeros(3), 12.0, Label.NORMAL, 30.0)
        Frame(np.zeros(3), 12.0, Label.NORMAL, 220.0)
        with pytest.raises(ValueError):
            Frame(np.zeros(3), 12.0, Label.NORMAL, 29.9)
        with pytest.raises(ValueError):
            Frame(np.zeros(3), 12.0, Label.NORMAL, 221.0)

    def test_rejects_two_dimensional_samples(self):
        with pytest.raises(DegenerateFrame):
            Frame(np.zeros((2, 3)), 12.0)

    def test_equality_is_by_value(self):
        assert frame([1, 2]) == frame([1, 2])
        assert frame([1, 2]) != frame([1, 3])
        assert frame([1, 2]) != frame([1, 2], rate=6.0)


class TestBaselineCorrect:
    def test_pure_line_becomes_zero(self):
        np.testing.assert_allclose(baseline_correct(frame([0, 1, 2, 3])).samples, 0.0, atol=1e-12)

    def test_constant_becomes_zero(self):
        np.testing.assert_allclose(baseline_correct(frame([1, 1, 1])).samples, 0.0, atol=1e-12)

    def test_sine_plus_ramp_has_no_residual_slope(self):
        t = np.arange(HIGH_LEN) / 12.0
        x = np.sin(2 * np.pi * 1.2 * t) + 0.5 * t
        y = baseline_correct(frame(x)).samples
        assert abs(ls_slope(list(y))) < 1e-9
        np.testing.assert_allclose(y, detrend_ref(list(x)), atol=1e-12)

    def test_too_short(self):
        with pytest.raises(DegenerateFrame):
            baseline_correct(frame([1.0]))

    @given(arrays(float, st.integers(2, 200), elements=finite))
    def test_is_a_projection(self, x):
        once = baseline_correct(frame(x))
        np.testing.assert_allclose(baseline_correct(once).samples, once.samples, atol=1e-9)

    @given(arrays(float, st.integers(2, 100), elements=finite))
    def test_matches_normal_equations(self, x):
        np.testing.assert_allclose(baseline_correct(frame(x)).samples, detrend_ref(list(x)), atol=1e-8)


class TestNormalize:
    @pytest.mark.parametrize(
        "x, expected",
        [([2, 4, 6], [0, 0.5, 1]), ([5, 5, 5], [0, 0, 0]), ([-1, 0, 3], [0, 0.25, 1])],
    )
    def test_examples(self, x, expected):
        np.testing.assert_allclose(normalize(frame(x)).samples, expected, atol=1e-15)

    @given(arrays(float, st.integers(1, 200), elements=finite))
    def test_range_and_idempotence(self, x):
        y = normalize(frame(x)).samples
        if np.ptp(x) == 0:
            np.testing.assert_array_equal(y, 0.0)
        else:
            assert abs(y.min()) < 1e-9 and abs(y.max() - 1) < 1e-9
        np.testing.assert_allclose(normalize(normalize(frame(x))).samples, y, atol=1e-12)


class TestDownsample:
    def test_keeps_every_other_sample(self):
        f = downsample(frame([10, 11, 12, 13, 14, 15]), 2)
        np.testing.assert_array_equal(f.samples, [10, 12, 14])
        assert f.rate_hz == 6.0

    def test_canonical_frame(self):
        f = downsample(frame(np.arange(HIGH_LEN)), 2)
        assert len(f) == LOW_LEN
        np.testing.assert_array_equal(f.samples, np.arange(0, HIGH_LEN, 2))

    def test_factor_one_is_identity(self):
        f = frame(np.arange(7.0))
        assert downsample(f, 1) == f

    @pytest.mark.parametrize("factor", [0, -1, 1.5])
    def test_bad_factor(self, factor):
        with pytest.raises(InvalidFactor):
            downsample(frame([1, 2, 3]), factor)

    @given(arrays(float, st.integers(1, 120), elements=finite), st.integers(1, 6), st.integers(1, 6))
    def test_composes(self, x, a, b):
        f = frame(x)
        once, twice = downsample(f, a * b), downsample(downsample(f, a), b)
        np.testing.assert_array_equal(once.samples, twice.samples)
        assert once.rate_hz == pytest.approx(twice.rate_hz, rel=1e-12)

    def test_low_rate_view_is_normalized_even_samples(self):
        x = np.sin(np.arange(HIGH_LEN) * 0.7) + np.arange(HIGH_LEN) * 0.01
        v = low_rate_view(frame(x))
        lo, hi = x[::2].min(), x[::2].max()
        np.testing.assert_allclose(v.samples, (x[::2] - lo) / (hi - lo))
        assert v.rate_hz == 6.0


def waveform_hr(params):
    """HR from a brute-force maxima scan of the 126 Hz noise-free waveform."""
    t, w = synth_waveform(params)
    peaks = interior_maxima(list(w))
    return 60.0 / ((t[peaks[-1]] - t[peaks[0]]) / (len(peaks) - 1)), len(peaks)


class TestSynth:
    def test_sixty_bpm_has_five_or_six_beats(self):
        for seed in range(20):
            for shape in BeatShape:
                _, count = waveform_hr(SynthParams(60.0, shape, seed=seed))
                assert count in (5, 6)

    def test_deterministic(self):
        p = SynthParams(77.0, BeatShape.HARMONIC_SUM, 0.25, 0.2, 0.05, Artifact.DRIFT, seed=9)
        a, b = synth_frame(p), synth_frame(p)
        assert a == b
        assert a.samples.tobytes() == b.samples.tobytes()

    def test_seed_changes_output(self):
        assert synth_frame(SynthParams(70.0, noise_sigma=0.1, seed=1)) != synth_frame(
            SynthParams(70.0, noise_sigma=0.1, seed=2)
        )

    @pytest.mark.parametrize("artifact", [a for a in Artifact if a is not Artifact.NONE])
    def test_any_artifact_is_abnormal(self, artifact):
        assert synth_frame(SynthParams(80.0, artifact=artifact, seed=3)).label is Label.ABNORMAL

    def test_noise_threshold(self):
        assert synth_frame(SynthParams(80.0, noise_sigma=0.15)).label is Label.NORMAL
        assert synth_frame(SynthParams(80.0, noise_sigma=0.16)).label is Label.ABNORMAL

    @pytest.mark.parametrize("hr", [39.99, 180.01, 0.0, 250.0])
    def test_out_of_band(self, hr):
        with pytest.raises(OutOfBand):
            SynthParams(hr)

    def test_frame_shape(self):
        f = synth_frame(SynthParams(120.0))
        assert len(f) == HIGH_LEN and f.rate_hz == 12.0

    def test_frame_samples_the_waveform(self):
        p = SynthParams(95.0, BeatShape.HARMONIC_SUM, baseline_wander_amp=0.2, seed=4)
        t, w = synth_waveform(p, rate_hz=12.0)
        np.testing.assert_allclose(synth_frame(p).samples, w, atol=1e-12)

    @settings(max_examples=60, deadline=None)
    @given(st.floats(40.0, 180.0), st.sampled_from(list(BeatShape)), st.integers(0, 2**32))
    def test_hr_truth_matches_brute_force_count(self, hr, shape, seed):
        p = SynthParams(hr, shape, seed=seed)
        est, _ = waveform_hr(p)
        assert abs(est - synth_frame(p).hr_truth) < 1.0
        assert abs(synth_frame(p).hr_truth - hr) < 1e-9

    def test_preprocess_is_detrend_then_minmax(self):
        f = synth_frame(SynthParams(70.0, baseline_wander_amp=0.3, noise_sigma=0.05, seed=5))
        np.testing.assert_array_equal(preprocess(f).samples, normalize(baseline_correct(f)).samples)
