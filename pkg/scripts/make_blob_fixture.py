"""Regenerate tests/fixtures/blobs: a toy stand-in for the MNIST workflow.

10 Gaussian blobs in 20 dimensions, PCA to 10 components, and a small
Linear-ReLU-Linear-ReLU classifier trained here with plain numpy (training
is not part of the library).  Weights are rounded to 10 significand bits.
Also writes a patch spec: one confidently classified training row per
class in keep, and one low-margin '1' forced to '7' in change.

    python scripts/make_blob_fixture.py [outdir]
"""

import json
import sys
from fractions import Fraction
from pathlib import Path

import numpy as np

from smtnet.data import Dataset, pca_fit, project_dataset, save_csv, save_pca
from smtnet.network import Affine, Network, ReLU, forward, quantize_network, save_network

LABELS = ["1", "2", "3", "4", "5", "6", "7", "8", "9", "0"]
SEED = 7
DIM = 20
PER_CLASS_TRAIN = 40
PER_CLASS_HELDOUT = 15
HIDDEN = 12
NOISE = 2.0


def make_blobs(rng):
    centers = rng.normal(scale=1.6, size=(10, DIM))
    # pull '7' toward '1' so some '1' rows sit close to the 1/7 boundary
    centers[6] = centers[0] + 0.5 * (centers[6] - centers[0])
    n = PER_CLASS_TRAIN + PER_CLASS_HELDOUT
    X = np.concatenate([c + rng.normal(scale=NOISE, size=(n, DIM)) for c in centers])
    y = np.repeat(np.arange(10), n)
    X = np.round(X, 3)
    order = rng.permutation(len(y))
    X, y = X[order], y[order]
    heldout = np.zeros(len(y), dtype=bool)
    for c in range(10):
        heldout[np.flatnonzero(y == c)[:PER_CLASS_HELDOUT]] = True
    return X, y, heldout


def to_dataset(X, y):
    rows = tuple(tuple(Fraction(str(v)) for v in row) for row in X)
    return Dataset(rows, tuple(int(v) for v in y), tuple(LABELS))


def train(Z, y, rng, epochs=400, lr=0.05):
    """Full-batch softmax cross-entropy on the ReLU outputs.

    Gradients leak (slope 0.1) through inactive units so that no output
    dies during training; the exported network uses exact ReLUs.
    """
    W1 = rng.normal(scale=0.4, size=(HIDDEN, Z.shape[1]))
    b1 = np.zeros(HIDDEN) + 0.1
    W2 = rng.normal(scale=0.4, size=(10, HIDDEN))
    b2 = np.zeros(10) + 0.5
    Y = np.eye(10)[y]
    for _ in range(epochs):
        h_pre = Z @ W1.T + b1
        h = np.maximum(h_pre, 0)
        o_pre = h @ W2.T + b2
        o = np.maximum(o_pre, 0)
        p = np.exp(o - o.max(axis=1, keepdims=True))
        p /= p.sum(axis=1, keepdims=True)
        g_o = (p - Y) / len(y) * np.where(o_pre > 0, 1.0, 0.1)
        g_W2 = g_o.T @ h
        g_b2 = g_o.sum(axis=0)
        g_h = g_o @ W2 * np.where(h_pre > 0, 1.0, 0.1)
        g_W1 = g_h.T @ Z
        g_b1 = g_h.sum(axis=0)
        W1 -= lr * g_W1
        b1 -= lr * g_b1
        W2 -= lr * g_W2
        b2 -= lr * g_b2
    return W1, b1, W2, b2


def margin(net, x, c):
    y = forward(net, x)
    return y[c] - max(v for j, v in enumerate(y) if j != c)


def main(outdir):
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(SEED)
    X, y, heldout = make_blobs(rng)
    train_set = to_dataset(X[~heldout], y[~heldout])
    held_set = to_dataset(X[heldout], y[heldout])
    save_csv(train_set, outdir / "train.csv")
    save_csv(held_set, outdir / "heldout.csv")

    pca = pca_fit(train_set, 10)
    save_pca(pca, outdir / "pca.json")
    Z = project_dataset(pca, train_set)
    Zf = Z.as_array()
    W1, b1, W2, b2 = train(Zf, np.array(Z.labels), rng)
    net = Network(
        "blobs-10-12-10",
        [
            Affine([[Fraction(float(v)) for v in row] for row in W1], [Fraction(float(v)) for v in b1]),
            ReLU(),
            Affine([[Fraction(float(v)) for v in row] for row in W2], [Fraction(float(v)) for v in b2]),
            ReLU(),
        ],
        LABELS,
    )
    net = quantize_network(net, 10)
    save_network(net, outdir / "net.json")

    keep = []
    for c in range(10):
        rows = [i for i, l in enumerate(Z.labels) if l == c]
        best = max(rows, key=lambda i: margin(net, Z.features[i], c))
        keep.append({"row": best, "label": LABELS[c]})
    ones = [i for i, l in enumerate(Z.labels) if l == 0 and margin(net, Z.features[i], 0) > 0]
    # smallest gap between the '1' and '7' outputs among correctly classified '1's
    def gap(i):
        out = forward(net, Z.features[i])
        return out[0] - out[6]
    change_row = min(ones, key=gap)
    spec = {
        "network": "net.json",
        "dataset": "train.csv",
        "pca": "pca.json",
        "keep": keep,
        "change": [{"row": change_row, "label": "7"}],
        "bias_bound": "1/4",
        "minimize": False,
    }
    (outdir / "patch.json").write_text(json.dumps(spec, indent=1) + "\n")
    acc = np.mean([
        max(range(10), key=lambda j: forward(net, x)[j]) == l
        for x, l in zip(Z.features, Z.labels)
    ])
    print(f"train accuracy (approx tie-break) {acc:.3f}; change row {change_row}, gap {float(gap(change_row)):.4f}")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else Path(__file__).resolve().parents[1] / "tests/fixtures/blobs")
