"""Central finite-difference checks for every registered operator."""

from dataclasses import dataclass

import numpy as np

from . import ops
from .tensor import GradTape, Tensor, backward, make_output

RTOL = 1e-4
ATOL = 1e-6
EPS = 1e-5


@dataclass
class CheckResult:
    name: str
    cases: int
    max_rel_error: float
    passed: bool


def rel_error(analytic, numeric, atol=ATOL):
    """Largest |a-n| / max(|a|, |n|, atol): relative error with an absolute floor."""
    a = np.asarray(analytic, dtype=np.float64).ravel()
    n = np.asarray(numeric, dtype=np.float64).ravel()
    rel = np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), atol)
    return float(rel.max()) if rel.size else 0.0


def _scalar(fn, arrays, proj):
    out = fn(*[Tensor(a) for a in arrays])
    return float((out.data * proj).sum())


def check_function(fn, arrays, rng, eps=EPS):
    """Compare analytic and numeric gradients of ``sum(fn(*arrays) * R)``.

    ``R`` is a fixed random projection so the whole Jacobian is exercised.
    Returns the largest relative error over all inputs and entries.
    """
    arrays = [np.array(a, dtype=np.float64) for a in arrays]
    probe = fn(*[Tensor(a) for a in arrays])
    proj = rng.standard_normal(probe.shape)
    params = [Tensor(a.copy(), requires_grad=True) for a in arrays]
    with GradTape() as tape:
        out = fn(*params)
        loss = ops.sum_all(_project(out, proj))
    grads = backward(tape, loss, params)
    worst = 0.0
    for k, p in enumerate(params):
        num = np.zeros_like(arrays[k])
        flat = arrays[k].reshape(-1)
        nflat = num.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            up = _scalar(fn, arrays, proj)
            flat[i] = orig - eps
            down = _scalar(fn, arrays, proj)
            flat[i] = orig
            nflat[i] = (up - down) / (2 * eps)
        worst = max(worst, rel_error(grads[p], num))
    return worst


def _project(out, proj):
    # elementwise product with a constant array, differentiable in ``out``
    def vjp(g):
        return (g * proj,)

    return make_output(out.data * proj, (out,), "project", vjp)


# -- random operator instances ----------------------------------------------


def _away_from_zero(rng, shape, gap=0.05):
    x = rng.uniform(gap, 1.0, size=shape)
    return x * rng.choice([-1.0, 1.0], size=shape)


def _distinct(rng, shape):
    # well-separated values so max-pool argmax is stable under perturbation
    n = int(np.prod(shape))
    return (rng.permutation(n).reshape(shape) / n) + 0.001 * rng.standard_normal(shape)


def _case_conv2d(rng):
    b, c, o = rng.integers(1, 3), rng.integers(1, 4), rng.integers(1, 4)
    k = int(rng.choice([1, 3]))
    dil = int(rng.integers(1, 3))
    stride = int(rng.integers(1, 3))
    pad = int(rng.integers(0, 3))
    h = int(rng.integers(dil * (k - 1) + 2, 8))
    x = rng.standard_normal((b, c, h, h))
    w = rng.standard_normal((o, c, k, k))
    bias = rng.standard_normal(o)
    return (lambda x, w, bb: ops.conv2d(x, w, bb, stride=stride, padding=pad, dilation=dil)), [x, w, bias]


def _case_folded(rng):
    b, c = rng.integers(1, 3), rng.integers(1, 3)
    o = 4 * int(rng.integers(1, 3))
    dil = int(rng.integers(1, 3))
    h = 2 * int(rng.integers(2, 4))
    x = rng.standard_normal((b, c, h, h))
    w = rng.standard_normal((o, 4 * c, 3, 3))
    bias = rng.standard_normal(o)
    return (lambda x, w, bb: ops.folded_atrous_conv(x, w, bb, dilation=dil)), [x, w, bias]


def _case_fold(rng):
    shape = (rng.integers(1, 3), rng.integers(1, 4), 2 * rng.integers(1, 4), 2 * rng.integers(1, 4))
    return ops.fold2x2, [rng.standard_normal(shape)]


def _case_unfold(rng):
    shape = (rng.integers(1, 3), 4 * rng.integers(1, 3), rng.integers(1, 4), rng.integers(1, 4))
    return ops.unfold2x2, [rng.standard_normal(shape)]


def _case_sigmoid(rng):
    return ops.sigmoid, [3 * rng.standard_normal((2, 2, 3, 3))]


def _case_relu(rng):
    return ops.relu, [_away_from_zero(rng, (2, 2, 3, 3))]


def _case_gap(rng):
    return ops.global_avg_pool, [rng.standard_normal((2, 3, rng.integers(1, 5), rng.integers(1, 5)))]


def _case_maxpool(rng):
    return ops.max_pool2x2, [_distinct(rng, (2, 2, 4, 6))]


def _case_upsample(rng):
    h, w = rng.integers(1, 5, size=2)
    th, tw = h + rng.integers(0, 5), w + rng.integers(0, 5)
    return (lambda x: ops.bilinear_upsample(x, int(th), int(tw))), [rng.standard_normal((2, 2, h, w))]


def _case_concat(rng):
    n = int(rng.integers(2, 4))
    arrays = [rng.standard_normal((2, int(rng.integers(1, 4)), 3, 3)) for _ in range(n)]
    return (lambda *xs: ops.concat_channels(xs)), arrays


def _case_add(rng):
    shape = (2, 3, 3, 2)
    return ops.add, [rng.standard_normal(shape), rng.standard_normal(shape)]


def _case_gate(rng):
    x = rng.standard_normal((3, 2, 3, 3))
    g = rng.uniform(0, 1, size=(3, 1, 1, 1))
    return ops.scale_by_gate, [x, g]


def _case_slice(rng):
    c = int(rng.integers(2, 5))
    start = int(rng.integers(0, c - 1))
    return (lambda x: ops.channel_slice(x, start, c)), [rng.standard_normal((2, c, 2, 2))]


def _case_bce(rng):
    y = (rng.random((2, 1, 4, 4)) < 0.5).astype(np.float64)
    p = rng.uniform(0.05, 0.95, size=y.shape)
    return (lambda p: ops.bce(p, y)), [p]


def _case_bce_logits(rng):
    y = (rng.random((2, 1, 4, 4)) < 0.5).astype(np.float64)
    return (lambda z: ops.bce(ops.sigmoid(z), y)), [2 * rng.standard_normal(y.shape)]


OP_CASES = {
    "conv2d": _case_conv2d,
    "folded_atrous_conv": _case_folded,
    "fold2x2": _case_fold,
    "unfold2x2": _case_unfold,
    "sigmoid": _case_sigmoid,
    "relu": _case_relu,
    "global_avg_pool": _case_gap,
    "max_pool2x2": _case_maxpool,
    "bilinear_upsample": _case_upsample,
    "concat_channels": _case_concat,
    "add": _case_add,
    "scale_by_gate": _case_gate,
    "channel_slice": _case_slice,
    "bce": _case_bce,
    "bce_of_sigmoid": _case_bce_logits,
}


def check_ops(cases=10, seed=0, rtol=RTOL, names=None):
    """Run ``cases`` random instances of each operator; one result per op."""
    results = []
    for name in names or OP_CASES:
        rng = np.random.default_rng([seed, len(name)] + [ord(ch) for ch in name])
        worst = 0.0
        for _ in range(cases):
            fn, arrays = OP_CASES[name](rng)
            worst = max(worst, check_function(fn, arrays, rng))
        results.append(CheckResult(name, cases, worst, worst < rtol))
    return results


# -- whole-model check ------------------------------------------------------


def _model_loss(model, x, y):
    from ..model.network import loss

    return loss(model.forward(x), y)[0]


MODEL_ATOL = 1e-8
# The loss is piecewise smooth (ReLU, max-pool) with kinks that can sit closer
# than 1e-5 apart in a narrow network. A step is trusted only when its forward
# and backward quotients agree and its central estimate is reproduced at the
# next smaller step; neither test looks at the analytic value.
MODEL_STEPS = (1e-5, 1e-6, 1e-7, 1e-8)
KINK_TOL = 1e-4


def generic_point(model, seed=0, scale=0.1):
    """Move a freshly initialised model off the ReLU kinks.

    Zero biases put dead units exactly at 0, where one-sided slopes differ
    and central differences see half the derivative. Small random biases
    and gate weights make every unit differentiable almost surely.
    """
    rng = np.random.default_rng(seed)
    for name, p in model.params.items():
        if name.endswith(".bias") or name.startswith("gate"):
            p.data = rng.uniform(-scale, scale, p.shape).astype(p.dtype)
    return model


def smooth_difference(f, shift, steps=MODEL_STEPS, atol=MODEL_ATOL, tol=KINK_TOL):
    """Central difference of ``f`` along a probe direction, avoiding kinks.

    ``shift(e)`` moves the parameters by ``e`` along the direction
    (``shift(0)`` restores them). Returns (estimate, step used); when no
    step passes both tests the smallest step is used.
    """
    def close(a, b):
        return abs(a - b) <= tol * max(abs(a), abs(b)) + atol

    f0 = f()
    prev = None
    for eps in steps:
        shift(eps)
        up = f()
        shift(-eps)
        down = f()
        shift(0)
        central = (up - down) / (2 * eps)
        smooth = close((up - f0) / eps, (f0 - down) / eps)
        if prev is not None and prev[2] and smooth and close(prev[0], central):
            return prev[0], prev[1]
        prev = (central, eps, smooth)
    return prev[0], prev[1]


def check_model(model, x, y, seed=0, coords=3, steps=MODEL_STEPS, atol=MODEL_ATOL):
    """Finite-difference check of the loss gradient for every parameter tensor.

    For each tensor, a random direction over all of its entries and
    ``coords`` single entries are probed with central differences.
    Returns {name: max relative error}.
    """
    rng = np.random.default_rng(seed)
    with GradTape() as tape:
        total = _model_loss(model, x, y)
    grads = backward(tape, total, model.parameters())

    def f():
        return float(_model_loss(model, x, y).data)

    errors = {}
    for name, p in model.params.items():
        g = grads[p]
        data = p.data
        probes = []
        v = rng.standard_normal(data.shape)
        v /= np.linalg.norm(v)
        probes.append((v, float((g * v).sum())))
        for _ in range(coords):
            e = np.zeros(data.shape)
            idx = tuple(int(rng.integers(s)) for s in data.shape)
            e[idx] = 1.0
            probes.append((e, float(g[idx])))
        worst = 0.0
        orig = data.copy()
        for direction, analytic in probes:
            def shift(eps, direction=direction):
                p.data = orig + eps * direction
            numeric, _ = smooth_difference(f, shift, steps, atol)
            worst = max(worst, rel_error(analytic, numeric, atol))
        p.data = orig
        errors[name] = worst
    return errors
