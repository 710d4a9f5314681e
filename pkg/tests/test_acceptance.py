"""Acceptance suite: one test per criterion, each recording a PASS/FAIL line.

The lines are printed by each test and repeated in the terminal summary
under "acceptance criteria".  Criteria 6 to 11 use the session bundle
trained on the default 5687-frame dataset; criterion 11 trains a second
one from scratch.
"""

import time

import numpy as np
import pytest

from oracles import fir_ref, interp_ref, median_ref, moving_average_ref
from tinyhr import bench, dsp, models, nn, pipelines
from tinyhr.data import Split, make_dataset, save_csv
from tinyhr.errors import ModelFormatError
from tinyhr.nn import Activation, Loss, conv1d, dense
from tinyhr.pipelines import Pipeline, Reason

CNN_TRACE = [(1, 69), (5, 65), (5, 61), (305,), (1,)]


def test_01_parameter_counts(verdict):
    t0 = time.perf_counter()
    counts = (
        nn.param_count(models.build_upsampler()),
        nn.param_count(models.build_classifier()),
        nn.param_count(models.build_regressor("cnn")),
    )
    elapsed = time.perf_counter() - t0
    verdict(1, "parameter counts 5844/466/466", counts == (5844, 466, 466) and elapsed < 1,
            f"got {counts}, {elapsed:.3f} s")


def test_02_shapes(verdict):
    t0 = time.perf_counter()
    up = nn.forward_trace(models.build_upsampler(), np.zeros(35))
    cls = nn.forward_trace(models.build_classifier(), np.zeros(69))
    reg = nn.forward_trace(models.build_regressor(), np.zeros(69))
    elapsed = time.perf_counter() - t0
    ok = up[0] == (35,) and up[-1] == (69,) and cls == CNN_TRACE and reg == CNN_TRACE and elapsed < 1
    verdict(2, "layer shapes 35->69 and 69x1->65x5->61x5->305->1", ok, f"classifier trace {cls}")


@pytest.mark.slow
def test_03_size_budget(verdict, bundle):
    t0 = time.perf_counter()
    total = sum(len(nn.model_to_bytes(m)) for m in bundle.models().values())
    elapsed = time.perf_counter() - t0
    verdict(3, "serialized models under 40960 bytes", total < 40960 and elapsed < 1, f"{total} bytes")


def _random_case(rng, index):
    """One small network, input batch and target covering the requested kind/activation/loss."""
    kind = ("dense", "conv")[index % 2]
    act = (Activation.RELU, Activation.SINE, Activation.SIGMOID)[(index // 2) % 3]
    loss = (Loss.MSE, Loss.BCE)[(index // 6) % 2]
    head = Activation.SIGMOID if loss is Loss.BCE else act
    out = int(rng.integers(1, 4))
    if kind == "dense":
        n_in, hidden = int(rng.integers(2, 9)), int(rng.integers(2, 9))
        layers = [dense(n_in, hidden, act), dense(hidden, out, head)]
    else:
        c, o, k = (int(v) for v in rng.integers(1, 4, size=3))
        length = int(rng.integers(k + 1, 12))
        first = conv1d(c, o, k, length, act)
        layers = [first, dense(o * first.out_length, out, head)]
    model = nn.init_model(layers, int(rng.integers(2**31)))
    for b in model.biases:
        b[:] = rng.normal(scale=0.1, size=b.shape)
    # a batch of one would be ambiguous with a single (channels, length) sample
    batch = int(rng.integers(2, 5))
    x = rng.normal(size=(batch, model.input_size))
    y = rng.uniform(0.05, 0.95, size=(batch, out))
    return model, x, y, loss


def _central_differences(model, x, y, loss, h=1e-6):
    grads = []
    for p in model.params():
        g = np.zeros_like(p)
        for i in np.ndindex(p.shape):
            old = p[i]
            p[i] = old + h
            up = nn.loss_eval(loss, nn.forward(model, x), y)
            p[i] = old - h
            down = nn.loss_eval(loss, nn.forward(model, x), y)
            p[i] = old
            g[i] = (up - down) / (2 * h)
        grads.append(g)
    return np.concatenate([g.reshape(-1) for g in grads])


def test_04_gradients(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    worst = 0.0
    for index in range(100):
        model, x, y, loss = _random_case(rng, index)
        _, gw, gb = nn.backward(model, x, y, loss)
        analytic = np.concatenate([g.reshape(-1) for pair in zip(gw, gb) for g in pair])
        numeric = _central_differences(model, x, y, loss)
        scale = np.linalg.norm(analytic) + np.linalg.norm(numeric)
        rel = 0.0 if scale == 0 else np.linalg.norm(analytic - numeric) / scale
        worst = max(worst, rel)
    elapsed = time.perf_counter() - t0
    verdict(4, "analytic vs finite-difference gradients, 100 configurations", worst < 1e-4 and elapsed < 30,
            f"worst relative error {worst:.2e}, {elapsed:.1f} s")


def test_05_dsp_oracles(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(5)
    worst = 0.0
    for _ in range(500):
        n = int(rng.integers(3, 120))
        # unit-scale signals, like the normalized frames the filters see in practice
        x = rng.normal(size=n) if rng.random() < 0.5 else rng.uniform(0, 1, size=n)
        w = 2 * int(rng.integers(1, 10)) + 1
        taps = rng.normal(size=int(rng.integers(1, 10)))
        factor = int(rng.integers(1, 12))
        pairs = [
            (dsp.median_filter(x, w), median_ref(list(x), w)),
            (dsp.fir_filter(x, taps), fir_ref(list(x), list(taps))),
            (dsp.moving_average(x, w), moving_average_ref(list(x), w)),
            (dsp.linear_interp(x, factor), interp_ref(list(x), factor)),
        ]
        for got, ref in pairs:
            worst = max(worst, float(np.max(np.abs(got - np.asarray(ref)))))
    vertex_err = 0.0
    for _ in range(500):
        v, a, c = rng.uniform(-0.5, 0.5), rng.uniform(0.01, 50), rng.uniform(-50, 50)
        ys = [c - a * (t - v) ** 2 for t in (-1, 0, 1)]
        vertex_err = max(vertex_err, abs(dsp.parabolic_refine(*ys) - v))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-12 and vertex_err <= 1e-9 and elapsed < 30
    verdict(5, "DSP outputs match brute-force references", ok,
            f"max filter error {worst:.1e}, vertex error {vertex_err:.1e}, {elapsed:.1f} s")


@pytest.fixture(scope="module")
def test_reports(bundle, dataset):
    frames = dataset.subset(Split.TEST)
    return {p: bench.bench_pipeline(p, frames, bundle, repeats=10) for p in Pipeline}


@pytest.mark.slow
def test_06_end_to_end_accuracy(verdict, trained, test_reports):
    sp, ml, hy = (test_reports[p].mae_bpm for p in (Pipeline.SP, Pipeline.ML, Pipeline.HYBRID))
    train_s = sum(trained[1].values())
    ok = sp <= 2.0 and hy <= 4.0 and ml <= 6.0 and sp <= hy <= ml and train_s <= 15 * 60
    timing = f", training {train_s:.0f} s" if trained[1] else ", bundle loaded"
    verdict(6, "clean-frame MAE SP<=2, Hybrid<=4, ML<=6 and SP<=Hybrid<=ML", ok,
            f"SP {sp:.3f}, Hybrid {hy:.3f}, ML {ml:.3f} BPM{timing}")


@pytest.mark.slow
def test_07_upsampler_reconstruction(verdict, trained):
    bundle, stages = trained
    value = bundle.metrics["upsampler"]["test_rmse"]
    seconds = stages.get("upsampler", 0.0)
    verdict(7, "held-out upsampler RMSE <= 0.15", value <= 0.15 and seconds <= 300,
            f"RMSE {value:.4f}, {seconds:.0f} s")


@pytest.mark.slow
def test_08_classifier_quality(verdict, trained):
    bundle, stages = trained
    m = bundle.metrics["classifier"]
    seconds = stages.get("classifier", 0.0)
    ok = m["test_accuracy"] >= 0.90 and m["test_f1"] >= 0.70 and seconds <= 300
    verdict(8, "held-out classifier accuracy >= 0.90 and F1 >= 0.70", ok,
            f"accuracy {m['test_accuracy']:.3f}, F1 {m['test_f1']:.3f}, {seconds:.0f} s")


@pytest.mark.slow
def test_09_latency_ordering(verdict, test_reports):
    sp, ml, hy = (test_reports[p].mean_latency_ns for p in (Pipeline.SP, Pipeline.ML, Pipeline.HYBRID))
    ok = ml < hy < sp and sp >= 2 * ml
    verdict(9, "mean latency ML < Hybrid < SP with SP >= 2x ML", ok,
            f"ML {ml / 1e3:.1f} us, Hybrid {hy / 1e3:.1f} us, SP {sp / 1e3:.1f} us, ratio {sp / ml:.1f}")


@pytest.mark.slow
def test_10_gate_semantics(verdict, bundle, dataset):
    t0 = time.perf_counter()
    ml = pipelines.run_batch("ml", dataset.frames, bundle)
    hy = pipelines.run_batch("hybrid", dataset.frames, bundle)
    gated = [r for r in ml if r.reason is Reason.GATE]
    leaks = sum("regressor" in r.stage_times for r in gated)
    disagree = sum((a.reason is Reason.GATE) != (b.reason is Reason.GATE) for a, b in zip(ml, hy))
    elapsed = time.perf_counter() - t0
    ok = bool(gated) and leaks == 0 and disagree == 0 and elapsed < 60
    verdict(10, "gated frames never reach the regressor; ML and Hybrid gates agree", ok,
            f"{len(gated)} gated of {len(ml)}, {leaks} leaks, {disagree} disagreements")


@pytest.mark.slow
def test_11_determinism(verdict, bundle, dataset, tmp_path):
    t0 = time.perf_counter()
    again = make_dataset(seed=0)
    save_csv(dataset, tmp_path / "a.csv")
    save_csv(again, tmp_path / "b.csv")
    same_data = (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    second = models.train_bundle(again)
    same_weights = all(
        nn.model_to_bytes(getattr(bundle, n)) == nn.model_to_bytes(getattr(second, n)) for n in models.MODEL_FILES
    )
    frames = dataset.subset(Split.TEST)
    same_estimates = all(
        [r.estimate for r in pipelines.run_batch(p, frames, bundle)]
        == [r.estimate for r in pipelines.run_batch(p, frames, second)]
        for p in Pipeline
    )
    elapsed = time.perf_counter() - t0
    ok = same_data and same_weights and same_estimates and elapsed <= 15 * 60
    verdict(11, "two full runs give identical dataset files, weights and estimates", ok,
            f"data {same_data}, weights {same_weights}, estimates {same_estimates}, {elapsed:.0f} s")


@pytest.mark.slow
def test_12_model_format(verdict, bundle, tmp_path):
    t0 = time.perf_counter()
    rng = np.random.default_rng(12)
    identical, missed, checked = True, 0, 0
    for name, model in bundle.models().items():
        first = tmp_path / f"{name}.thr"
        second = tmp_path / f"{name}.again.thr"
        nn.save_model(model, first)
        nn.save_model(nn.load_model(first), second)
        identical &= first.read_bytes() == second.read_bytes()
        blob = first.read_bytes()
        # every position with a random non-zero flip, plus every flip value at a few positions
        cases = [(i, int(rng.integers(1, 256))) for i in range(len(blob))]
        cases += [(int(i), v) for i in rng.choice(len(blob), 8, replace=False) for v in range(1, 256)]
        for i, flip in cases:
            bad = bytearray(blob)
            bad[i] ^= flip
            checked += 1
            try:
                nn.model_from_bytes(bytes(bad))
                missed += 1
            except ModelFormatError:
                pass
    elapsed = time.perf_counter() - t0
    ok = identical and missed == 0 and elapsed < 10
    verdict(12, "save-load-save is byte-identical and every single-byte corruption is caught", ok,
            f"{checked} corruptions, {missed} missed, {elapsed:.1f} s")
