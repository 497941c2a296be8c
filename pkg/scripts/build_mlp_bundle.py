"""Train the bundled 784-64-10 MLP on upscaled sklearn digits and quantize it.

Writes src/tdpim/data/mlp_784_64_10.tdt with signed 8-bit weight codes, the
hidden-layer requantization shift and 1000 held-out 8-bit samples.
Needs scikit-learn (the `bundle` extra); the package itself never imports it.
"""

from __future__ import annotations

import argparse
from pathlib import Path

import numpy as np
from sklearn.datasets import load_digits

from tdpim.archcfg import preset
from tdpim.netspec import bundled_network
from tdpim.tdcore import integer_reference, quantize_weights, requantize
from tdpim.tensorio import write_tensors

OUT = Path(__file__).resolve().parents[1] / "src" / "tdpim" / "data" / "mlp_784_64_10.tdt"


def load_images():
    d = load_digits()
    x = np.kron(d.images, np.ones((1, 3, 3)))        # 8x8 -> 24x24
    x = np.pad(x, ((0, 0), (2, 2), (2, 2)))           # -> 28x28
    x = np.round(x * 255.0 / 16.0).astype(np.int64)
    return x.reshape(len(x), -1), d.target


def train(x, y, hidden=64, epochs=60, lr=0.05, seed=0):
    rng = np.random.default_rng(seed)
    w1 = rng.normal(0, np.sqrt(2 / x.shape[1]), (x.shape[1], hidden))
    w2 = rng.normal(0, np.sqrt(2 / hidden), (hidden, 10))
    xf = x / 255.0
    onehot = np.eye(10)[y]
    for _ in range(epochs):
        for idx in np.array_split(rng.permutation(len(x)), len(x) // 32):
            h = np.maximum(xf[idx] @ w1, 0)
            z = h @ w2
            p = np.exp(z - z.max(1, keepdims=True))
            p /= p.sum(1, keepdims=True)
            g = (p - onehot[idx]) / len(idx)
            gw2 = h.T @ g
            gh = (g @ w2.T) * (h > 0)
            w2 -= lr * gw2
            w1 -= lr * (xf[idx].T @ gh)
    return w1, w2


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", type=Path, default=OUT)
    ap.add_argument("--samples", type=int, default=1000)
    args = ap.parse_args(argv)

    x, y = load_images()
    order = np.random.default_rng(1).permutation(len(x))
    test, tr = order[: args.samples], order[args.samples:]
    w1, w2 = train(x[tr], y[tr])

    net = bundled_network("mlp_784_64_10")
    cfg = preset("timely_8b")
    l1, l2 = net.layers
    q1 = quantize_weights(w1.T, l1, cfg)
    q2 = quantize_weights(w2.T, l2, cfg)
    hid = np.maximum(integer_reference(x[tr], q1.codes, l1), 0)
    # smallest shift that keeps 99.9% of hidden activations in 8 bits
    shift = 0
    while np.quantile(hid, 0.999) / (1 << shift) > 255:
        shift += 1
    h8 = requantize(hid, shift).reshape(len(tr), -1)
    acc_train = float(np.mean(integer_reference(h8, q2.codes, l2).reshape(len(tr), -1).argmax(1) == y[tr]))
    ht = requantize(np.maximum(integer_reference(x[test], q1.codes, l1), 0), shift).reshape(len(test), -1)
    acc_test = float(np.mean(integer_reference(ht, q2.codes, l2).reshape(len(test), -1).argmax(1) == y[test]))

    args.out.parent.mkdir(parents=True, exist_ok=True)
    write_tensors(
        args.out,
        {
            "fc1": q1.codes.astype(np.int16),
            "fc2": q2.codes.astype(np.int16),
            "inputs": x[test].astype(np.uint8),
            "labels": y[test].astype(np.uint8),
        },
        network="mlp_784_64_10",
        shifts={"fc1": shift},
        scales={"fc1": q1.scale, "fc2": q2.scale},
        source="sklearn digits, 8x8 upscaled 3x and padded to 28x28",
        integer_accuracy={"train": acc_train, "test": acc_test},
    )
    print(f"wrote {args.out}: shift={shift} train_acc={acc_train:.3f} test_acc={acc_test:.3f}")


if __name__ == "__main__":
    main()
