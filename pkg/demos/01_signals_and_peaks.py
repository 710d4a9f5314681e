# 01_signals_and_peaks.py
# Walk one synthetic pulse frame through the classical heart-rate chain.
#
#   python demos/01_signals_and_peaks.py

import numpy as np

from tinyhr import dsp
from tinyhr.pipelines import run_sp
from tinyhr.signal import Artifact, BeatShape, SynthParams, low_rate_view, preprocess, synth_frame

np.set_printoptions(precision=3, suppress=True, linewidth=100)

# A frame is 69 samples at 12 Hz, a little under six seconds of signal.
# The generator places beats at a known rate, adds breathing wander and
# sensor noise, and records the true rate of the beats it placed.
params = SynthParams(hr_bpm=72.0, beat_shape=BeatShape.GAUSSIAN_PULSE,
                     baseline_wander_amp=0.3, noise_sigma=0.04, seed=7)
raw = synth_frame(params)
print("raw frame:", len(raw), "samples at", raw.rate_hz, "Hz, label", raw.label.name)
print("true heart rate: %.2f BPM" % raw.hr_truth)
print(raw.samples[:12], "...")

# Detrending removes the straight-line part of the wander and min-max
# scaling puts every frame in [0, 1].
frame = preprocess(raw)
print("\nafter detrend + min-max: min %.3f, max %.3f" % (frame.samples.min(), frame.samples.max()))

# The classical chain, one step at a time.
spec = dsp.FilterSpec()
x = dsp.median_filter(frame.samples, spec.median_window)
x = dsp.fir_filter(x, spec.fir_taps)
print("\nFIR taps (7-tap Hamming low-pass, 3 Hz cutoff):", np.round(spec.fir_taps, 4))

y = dsp.linear_interp(x, spec.interp_factor)
y = dsp.moving_average(y, spec.ma_window)
print("interpolated to %d samples at %.0f Hz and smoothed" % (len(y), 12.0 * spec.interp_factor))

peaks = dsp.detect_peaks(y, 120.0, spec.min_prominence, spec.min_distance_s)
print("peak positions (samples at 120 Hz):", np.round(peaks.positions, 2))
print("inter-beat intervals (s):", np.round(np.diff(peaks.times_s), 3))
print("estimate: %.2f BPM" % dsp.hr_from_peaks(peaks))

# The same thing through the pipeline wrapper, which also times each stage.
result = run_sp(frame)
print("\nrun_sp estimate: %.2f BPM" % result.estimate)
for stage, ns in result.stage_times.items():
    print("  %-15s %7.1f us" % (stage, ns / 1e3))

# Parabolic refinement gives the vertex of a parabola through three
# neighbouring samples, which is how peaks land between grid points.
print("\nparabolic_refine(1, 3, 2) = %.4f (vertex sits right of centre)" % dsp.parabolic_refine(1, 3, 2))

# An artifact makes the frame Abnormal.  The SP chain has no quality gate,
# so it still produces a number, and the number is often wrong.
bad = preprocess(synth_frame(SynthParams(72.0, artifact=Artifact.DROPOUT, seed=7)))
r = run_sp(bad)
print("\ndropout frame labelled", bad.label.name, "->", "rejected" if r.rejected else "%.1f BPM" % r.estimate)

# The ML and hybrid pipelines see only the even samples: 35 at 6 Hz.
low = low_rate_view(frame)
print("\nlow-rate view:", len(low), "samples at", low.rate_hz, "Hz")
