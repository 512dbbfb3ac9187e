"""Independent oracles shared by the test modules."""

from fractions import Fraction

import numpy as np

from fedsim.nn import Layer, Model, RELU, SOFTMAX


def random_model(sizes, rng, scale=1.0):
    layers = []
    for i, (a, b) in enumerate(zip(sizes[:-1], sizes[1:])):
        act = SOFTMAX if i == len(sizes) - 2 else RELU
        layers.append(Layer(rng.normal(0, scale, (b, a)), rng.normal(0, scale, b), act))
    return Model(tuple(layers))


def loop_forward(model, x):
    """Straight-line forward pass with explicit loops, no vectorised numpy."""
    out = []
    for row in np.asarray(x, dtype=float):
        a = [float(v) for v in row]
        for layer in model.layers:
            z = []
            for j in range(layer.fan_out):
                s = float(layer.bias[j])
                for k in range(layer.fan_in):
                    s += float(layer.weights[j, k]) * a[k]
                z.append(s)
            if layer.activation == SOFTMAX:
                top = max(z)
                e = [np.exp(v - top) for v in z]
                total = sum(e)
                a = [v / total for v in e]
            else:
                a = [max(v, 0.0) for v in z]
        out.append(a)
    return np.array(out)


def direct_loss(probs, y):
    return -sum(np.log(max(probs[i][y[i]], 1e-12)) for i in range(len(y))) / len(y)


def hidden_preactivations(model, x):
    a, zs = x, []
    for layer in model.layers[:-1]:
        z = a @ layer.weights.T + layer.bias
        zs.append(z)
        a = np.maximum(z, 0)
    return zs


def finite_difference_grads(model, x, y, h=1e-5):
    """Central differences of the mean cross-entropy w.r.t. every parameter."""
    from fedsim.nn import flatten, forward, loss, unflatten

    theta = flatten(model)
    grads = np.empty_like(theta)
    for i in range(theta.size):
        up, down = theta.copy(), theta.copy()
        up[i] += h
        down[i] -= h
        lu = loss(forward(unflatten(up, model), x), y)
        ld = loss(forward(unflatten(down, model), x), y)
        grads[i] = (lu - ld) / (2 * h)
    return grads


def max_relative_error(a, b, floor=1e-8):
    a, b = np.asarray(a), np.asarray(b)
    return float(np.max(np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)))


def vector_relative_error(a, b):
    """||a - b|| / max(||a||, ||b||) over a whole gradient vector."""
    a, b = np.asarray(a), np.asarray(b)
    scale = max(np.linalg.norm(a), np.linalg.norm(b))
    return float(np.linalg.norm(a - b) / scale) if scale else 0.0


def rmsprop_unrolled(w, grads, lr=0.01, rho=0.9, eps=1e-7):
    v = 0.0
    for g in grads:
        v = rho * v + (1 - rho) * g * g
        w = w - lr * g / (v ** 0.5 + eps)
    return w, v


def gradient_trial(rng, max_sizes=(6, 5, 4, 3), max_batch=8, kink=1e-4):
    """Random net + batch whose hidden units all sit at least ``kink`` from the ReLU corner."""
    from fedsim.nn import backward, Batch, flatten

    while True:
        depth = rng.integers(2, len(max_sizes) + 1)
        sizes = [int(rng.integers(2, s + 1)) for s in max_sizes[:depth]]
        model = random_model(sizes, rng, scale=0.8)
        b = int(rng.integers(1, max_batch + 1))
        x = rng.normal(size=(b, sizes[0]))
        y = rng.integers(0, sizes[-1], size=b)
        if any(np.min(np.abs(z)) < kink for z in hidden_preactivations(model, x)):
            continue
        analytic = np.concatenate([p.ravel() for gw, gb in backward(model, Batch(x, y)) for p in (gw, gb)])
        numeric = finite_difference_grads(model, x, y)
        assert analytic.shape == flatten(model).shape
        return analytic, numeric


def counting_oracle(preds, truth, classes):
    """Per-class precision/recall/F1 and accuracy as exact rationals, by direct counting."""
    out = []
    for c in range(classes):
        tp = sum(1 for p, t in zip(preds, truth) if p == c and t == c)
        predicted = sum(1 for p in preds if p == c)
        actual = sum(1 for t in truth if t == c)
        p = Fraction(tp, predicted) if predicted else Fraction(0)
        r = Fraction(tp, actual) if actual else Fraction(0)
        f = 2 * p * r / (p + r) if p + r else Fraction(0)
        out.append((p, r, f))
    acc = Fraction(sum(1 for p, t in zip(preds, truth) if p == t), len(truth)) if truth else Fraction(0)
    return acc, out


# acceptance outcomes, printed by the terminal-summary hook in conftest
ACCEPTANCE_LINES: dict[int, str] = {}


def record_criterion(number, title, passed, detail):
    ACCEPTANCE_LINES[number] = f"[{'PASS' if passed else 'FAIL'}] {number:>2}. {title}: {detail}"
    return passed
