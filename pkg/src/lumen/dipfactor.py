"""Generic matrix factorization through a pair of untrained generators.

A matrix Z is factored into nonnegative factors T (h x q) and L (q x w),
each emitted by its own randomly initialized convolutional generator that
is optimized one-off against this single instance. The convolutional
structure biases the factors toward image-like spatial coherence, which is
the entire regularizer: there is no dataset and no pretraining.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .nets import NetworkSpec, build_network, factor_net_spec
from .optim import Adam
from .tensor import NumericalError, Tensor, TensorError


@dataclass
class LossSpec:
    """Gradient-domain L1 plus a small pointwise L1 term."""

    pointwise_weight: float = 0.05
    gradient_norm: str = "l1"

    def validate(self):
        if self.pointwise_weight < 0:
            raise TensorError("pointwise_weight must be nonnegative")
        if self.gradient_norm != "l1":
            raise TensorError("only the l1 gradient norm is supported")


@dataclass
class FactorizationConfig:
    inner_dim: int | None = None          # q; defaults to the full-rank choice min(h, w)
    loss: LossSpec = field(default_factory=LossSpec)
    iterations: int = 20000
    learning_rate: float = 0.001
    width: float = 1.0                    # channel multiplier for both generators
    seed: int = 0
    networks: tuple | None = None         # override (spec_t, spec_l); built per-shape if None


@dataclass
class FactorizationResult:
    t: np.ndarray
    l: np.ndarray
    loss_trace: np.ndarray
    scale: float                          # Z was divided by this before optimization


def loss_eval(x, y, spec: LossSpec):
    """d(x, y) = |forward differences of (x - y)| summed over both axes
    + pointwise_weight * |x - y|, all L1."""
    spec.validate()
    if not isinstance(x, Tensor):
        x = Tensor(x)
    if not isinstance(y, Tensor):
        y = Tensor(y)
    if x.shape != y.shape:
        raise TensorError(f"loss_eval shapes differ: {x.shape} vs {y.shape}")
    diff = x - y
    total = None
    for axis in range(2):
        if diff.shape[axis] > 1:
            term = T.l1(T.finite_diff(diff, axis))
            total = term if total is None else total + term
    pointwise = spec.pointwise_weight * T.l1(diff)
    return pointwise if total is None else total + pointwise


def dip_factorize(z, cfg: FactorizationConfig):
    """Factor z into nonnegative (t, l) generated by two one-off-trained nets."""
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 2:
        raise TensorError(f"expected a matrix, got {z.shape}")
    if not np.all(np.isfinite(z)):
        raise NumericalError("input matrix contains non-finite values")
    zmax = float(z.max())
    if zmax <= 0.0:
        raise TensorError("all-zero (or nonpositive) input has no meaningful "
                          "factorization; the exponential heads cannot emit 0")
    h, w = z.shape
    q = cfg.inner_dim if cfg.inner_dim is not None else min(h, w)
    if not 1 <= q <= min(h, w):
        raise TensorError(f"inner dim q={q} out of range for {h}x{w}")
    zn = z / zmax
    rng = np.random.default_rng(cfg.seed)
    if cfg.networks is not None:
        spec_t, spec_l = cfg.networks
    else:
        # each factor's aux map is the data mean over the axis it does not share
        spec_t = factor_net_spec((h, q), width=cfg.width, row_mean=zn.mean(axis=1)[:, None])
        spec_l = factor_net_spec((q, w), width=cfg.width, row_mean=zn.mean(axis=0)[None, :])
    net_t = build_network(spec_t, rng)
    net_l = build_network(spec_l, rng)
    opt = Adam(net_t.parameters() + net_l.parameters(), learning_rate=cfg.learning_rate)
    z_const = Tensor(zn)
    trace = np.empty(cfg.iterations)
    t_out = l_out = None
    for it in range(cfg.iterations):
        opt.zero_grad()
        with T.Tape():
            t_out = net_t.forward(rng).reshape(h, q)
            l_out = net_l.forward(rng).reshape(q, w)
            loss = loss_eval(t_out @ l_out, z_const, cfg.loss)
        value = loss.item()
        if not np.isfinite(value):
            raise NumericalError(f"non-finite factorization loss at iteration {it}")
        trace[it] = value
        T.backward(loss)
        opt.step()
    return FactorizationResult(t=t_out.data.copy(), l=l_out.data.copy(),
                               loss_trace=trace, scale=zmax)


# ---------------------------------------------------------------------------
# Bundled toy instances
# ---------------------------------------------------------------------------


def toy_curves_matrix(h, q, seed=0, n_curves=3):
    """Smooth faint curves: a few gaussian tubes along wandering paths."""
    rng = np.random.default_rng(seed)
    ys = np.arange(h)
    out = np.zeros((h, q))
    for _ in range(n_curves):
        knots = rng.uniform(0.15 * q, 0.85 * q, 4)
        path = np.interp(np.linspace(0, 3, h), np.arange(4), knots)
        width = rng.uniform(1.5, 3.5)
        amp = rng.uniform(0.4, 1.0)
        xs = np.arange(q)
        out += amp * np.exp(-((xs[None, :] - path[:, None]) ** 2) / (2 * width ** 2))
    out += 0.05
    return out / out.max()


def toy_video_matrix(q, w, seed=0):
    """Video-like matrix: one bright blob sweeping across a 1-D frame over time."""
    rng = np.random.default_rng(seed)
    pos = q * (0.5 + 0.35 * np.sin(np.linspace(0, 4 * np.pi, w) + rng.uniform(0, np.pi)))
    width = rng.uniform(1.0, 2.0)
    rows = np.arange(q)
    out = np.exp(-((rows[:, None] - pos[None, :]) ** 2) / (2 * width ** 2))
    out += 0.02
    return out / out.max()
