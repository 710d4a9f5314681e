# 02_tiny_networks.py
# The three networks, their sizes, a gradient check and the model file format.
#
#   python demos/02_tiny_networks.py

import io
import zlib

import numpy as np

from tinyhr import models, nn
from tinyhr.errors import ModelFormatError

np.set_printoptions(precision=4, suppress=True)

# Build the untrained networks and count their parameters.
up = models.build_upsampler()
cls = models.build_classifier()
reg = models.build_regressor("cnn")
fcn = models.build_regressor("fcn")
for name, m in [("upsampler", up), ("classifier", cls), ("regressor (cnn)", reg), ("regressor (fcn)", fcn)]:
    print("%-16s %5d parameters, %d -> %d" % (name, nn.param_count(m), m.input_size, m.output_size))

# An instrumented forward pass shows the shape after every layer.  Conv
# layers are valid cross-correlations, so each one trims kernel-1 samples.
print("\nclassifier shapes:", nn.forward_trace(cls, np.zeros(69)))

# Backpropagation against central finite differences on a tiny network.
rng = np.random.default_rng(0)
m = nn.init_model([nn.conv1d(1, 2, 3, 8, nn.Activation.SINE), nn.dense(12, 1, nn.Activation.SIGMOID)], seed=3)
x, y = rng.normal(size=(4, 8)), rng.uniform(size=(4, 1))
_, gw, gb = nn.backward(m, x, y, nn.Loss.BCE)

h = 1e-6
w = m.weights[0]
fd = np.zeros_like(w)
for i in np.ndindex(w.shape):
    old = w[i]
    w[i] = old + h
    up_loss = nn.loss_eval(nn.Loss.BCE, nn.forward(m, x), y)
    w[i] = old - h
    down_loss = nn.loss_eval(nn.Loss.BCE, nn.forward(m, x), y)
    w[i] = old
    fd[i] = (up_loss - down_loss) / (2 * h)
print("\nconv weight gradient, analytic:\n", gw[0][:, 0, :])
print("finite differences:\n", fd[:, 0, :])
print("max difference: %.2e" % np.abs(gw[0] - fd).max())

# One optimizer step by hand: SGD with lr 0.9 moves w=1 against g=0.5.
(w1,), _ = nn.optimizer_step([np.array([1.0])], [np.array([0.5])],
                             nn.TrainConfig(optimizer=nn.Optimizer.SGD, learning_rate=0.9))
print("\nSGD step: 1.0 - 0.9 * 0.5 =", w1[0])

# The model file: magic, version, layer table, float32 weights, CRC32.
blob = nn.model_to_bytes(cls)
print("\nclassifier file: %d bytes, magic %r, crc %08x" % (len(blob), blob[:4], zlib.crc32(blob[:-4])))
total = sum(len(nn.model_to_bytes(m)) for m in (up, cls, reg))
print("upsampler + classifier + regressor: %d bytes (budget 40960)" % total)

buf = io.BytesIO(blob)
back = nn.model_from_bytes(buf.getvalue())
print("round trip identical:", nn.model_to_bytes(back) == blob)

# Flip one bit anywhere and loading fails.
bad = bytearray(blob)
bad[200] ^= 0x04
try:
    nn.model_from_bytes(bytes(bad))
except ModelFormatError as exc:
    print("corrupted file rejected:", type(exc).__name__, "-", exc)
