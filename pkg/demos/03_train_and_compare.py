# 03_train_and_compare.py
# Train the three networks on synthetic data and compare the three pipelines.
#
#   python demos/03_train_and_compare.py          # small, about half a minute
#   python demos/03_train_and_compare.py --full   # default configs, a few minutes

import sys
import time
from dataclasses import replace

from tinyhr import bench, models, pipelines
from tinyhr.data import Split, make_dataset

full = "--full" in sys.argv

# The default dataset has 5687 frames, a fifth of them abnormal.  The quick
# run uses fewer frames and epochs; the numbers are worse but the shape of
# the comparison is the same.
if full:
    ds, configs = make_dataset(seed=0), None
else:
    ds = make_dataset(1500, seed=0)
    configs = {
        "upsampler": replace(models.UPSAMPLER_CONFIG, epochs=600),
        "classifier": replace(models.CLASSIFIER_CONFIG, epochs=60),
        "regressor": replace(models.REGRESSOR_CONFIG, epochs=120),
    }
print("frames:", len(ds), "split sizes:", [len(ds.subset(s)) for s in Split])

t0 = time.perf_counter()
bundle = models.train_bundle(ds, configs, log=lambda msg: print(" ", msg))
print("trained in %.0f s" % (time.perf_counter() - t0))
for name, m in bundle.metrics.items():
    shown = {k: round(v, 4) if isinstance(v, float) else v for k, v in m.items()}
    print("  %-10s %s" % (name, shown))

# One frame through each pipeline.  ML and hybrid share the upsampler and
# the quality gate; only the last step differs.
frame = ds.subset(Split.TEST)[0]
print("\ntest frame 0: label %s, truth %.1f BPM" % (frame.label.name, frame.hr_truth))
for p in pipelines.Pipeline:
    r = pipelines.run(p, frame, bundle)
    out = "rejected (%s)" % r.reason.value if r.rejected else "%.1f BPM" % r.estimate
    print("  %-6s %-28s stages: %s" % (p.value, out, ", ".join(r.stage_times)))

# Whole test split: accuracy on accepted clean frames, acceptance, latency.
test = ds.subset(Split.TEST)
reports = {p.value: bench.bench_pipeline(p, test, bundle, repeats=10) for p in pipelines.Pipeline}
print()
for name, r in reports.items():
    print("%-6s MAE %.2f BPM over %d accepted of %d, mean latency %.1f us"
          % (name, r.mae_bpm, r.n_accepted, r.n_frames, r.mean_latency_ns / 1e3))

# Energy is only an estimate: mean latency times an assumed active power.
print()
print(bench.comparison_table(reports))
