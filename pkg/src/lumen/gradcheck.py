"""Randomized gradient verification for every registered op kind.

Analytic gradients from the tape are compared against central finite
differences of a randomly projected scalar loss. Inputs for ops with kinks
(abs, leaky_relu, clamps) are sampled away from the kink so the comparison
is well-posed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T


@dataclass
class CheckResult:
    kind: str
    cases: int
    max_rel_err: float
    tol: float

    @property
    def passed(self):
        return self.max_rel_err <= self.tol


def _away_from(rng, shape, gap=0.2):
    x = rng.uniform(gap, 1.0, size=shape)
    return x * rng.choice([-1.0, 1.0], size=shape)


def _case(kind, rng):
    """Return (arrays, attrs, differentiable input indices) for one op kind."""
    if kind in ("add", "sub", "mul"):
        a = rng.standard_normal((3, 4))
        if rng.random() < 0.5:
            b = rng.standard_normal((3, 4))
        else:
            b = rng.standard_normal((1, 4))
        return [a, b], {}, (0, 1)
    if kind == "neg":
        return [rng.standard_normal((3, 4))], {}, (0,)
    if kind == "matmul":
        return [rng.standard_normal((3, 4)), rng.standard_normal((4, 5))], {}, (0, 1)
    if kind in ("tanh", "exp", "softplus"):
        return [rng.uniform(-1.5, 1.5, (3, 4))], {}, (0,)
    if kind == "leaky_relu":
        return [_away_from(rng, (3, 4))], {"slope": 0.1}, (0,)
    if kind == "abs":
        return [_away_from(rng, (3, 4))], {}, (0,)
    if kind == "sqrt":
        return [rng.uniform(0.5, 2.0, (3, 4))], {}, (0,)
    if kind in ("minimum", "maximum"):
        return [_away_from(rng, (3, 4))], {"value": 0.0}, (0,)
    if kind in ("sum", "mean"):
        axis = [None, 0, 1, (0, 1)][rng.integers(4)]
        return [rng.standard_normal((3, 4))], {"axis": axis, "keepdims": bool(rng.integers(2))}, (0,)
    if kind == "reshape":
        return [rng.standard_normal((3, 4))], {"shape": (2, 6)}, (0,)
    if kind == "transpose":
        return [rng.standard_normal((3, 4))], {}, (0,)
    if kind == "slice":
        axis = int(rng.integers(2))
        n = (4, 5)[axis]
        start = int(rng.integers(n - 1))
        length = int(rng.integers(1, n - start + 1))
        return [rng.standard_normal((4, 5))], {"axis": axis, "start": start, "length": length}, (0,)
    if kind == "concat":
        axis = int(rng.integers(2))
        shapes = [(3, 4), (3, 4)]
        return [rng.standard_normal(s) for s in shapes], {"axis": axis}, (0, 1)
    if kind == "conv2d":
        k = int(rng.choice([3, 4]))
        x = rng.standard_normal((5, 5, 2))
        w = rng.standard_normal((k, k, 2, 3)) / np.sqrt(2 * k * k)
        return [x, w], {}, (0, 1)
    if kind == "conv3d":
        x = rng.standard_normal((3, 4, 4, 2))
        w = rng.standard_normal((3, 3, 3, 2, 2)) / np.sqrt(2 * 27)
        return [x, w], {}, (0, 1)
    if kind == "upsample_nearest":
        return [rng.standard_normal((3, 4, 2))], {"axes": (0, 1)}, (0,)
    if kind == "upsample_bilinear":
        return [rng.standard_normal((4, 5, 2))], {"axes": (0, 1)}, (0,)
    raise T.TensorError(f"no gradient-check case for op kind {kind!r}")


def _loss_value(kind, arrays, attrs, proj):
    out = T.forward_op(kind, [T.Tensor(a) for a in arrays], attrs)
    return float((out.data * proj).sum())


def check_op(kind, rng, cases=20, h=1e-5, tol=1e-4):
    """Gradient-check one op kind over ``cases`` random instances."""
    worst = 0.0
    for _ in range(cases):
        arrays, attrs, diff_idx = _case(kind, rng)
        with T.Tape():
            tensors = [T.Tensor(a, requires_grad=(i in diff_idx)) for i, a in enumerate(arrays)]
            out = T.forward_op(kind, tensors, attrs)
            proj = rng.standard_normal(out.shape)
            loss = (out * T.Tensor(proj)).sum()
        T.backward(loss)
        for i in diff_idx:
            analytic = tensors[i].grad
            if analytic is None:
                analytic = np.zeros_like(arrays[i])
            numeric = np.zeros_like(arrays[i])
            flat = arrays[i].reshape(-1)
            nflat = numeric.reshape(-1)
            for j in range(flat.size):
                orig = flat[j]
                flat[j] = orig + h
                fp = _loss_value(kind, arrays, attrs, proj)
                flat[j] = orig - h
                fm = _loss_value(kind, arrays, attrs, proj)
                flat[j] = orig
                nflat[j] = (fp - fm) / (2 * h)
            scale = max(np.abs(analytic).max(), np.abs(numeric).max(), 1e-8)
            worst = max(worst, float(np.abs(analytic - numeric).max() / scale))
    return CheckResult(kind=kind, cases=cases, max_rel_err=worst, tol=tol)


def check_all(seed=0, cases=20, h=1e-5, tol=1e-4, kinds=None):
    """Run gradient checks for all (or the given) op kinds."""
    rng = np.random.default_rng(seed)
    results = []
    for kind in kinds or T.op_kinds():
        results.append(check_op(kind, rng, cases=cases, h=h, tol=tol))
    return results
