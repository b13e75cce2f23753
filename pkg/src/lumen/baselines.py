"""Classical factorization baselines the generator-based method is compared to.

All three consume and emit the same matrix shapes as the generator
pipeline, so recovered factors can be scored uniformly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .dipfactor import LossSpec, loss_eval
from .linalg import gradient_operator
from .optim import Adam
from .tensor import NumericalError, Tensor, TensorError


# ---------------------------------------------------------------------------
# Nonnegative matrix factorization, alternating least squares
# ---------------------------------------------------------------------------


def nmf_als(z, q, iterations=200, seed=0):
    """Alternating least squares with negative updates clamped to zero.

    Keeps the best factors seen; the returned error trace covers accepted
    iterations only and is non-increasing by construction.
    Returns (t, l, error_trace).
    """
    z = np.asarray(z, dtype=np.float64)
    if np.any(z < 0):
        raise TensorError("nmf_als expects a nonnegative matrix")
    h, w = z.shape
    rng = np.random.default_rng(seed)
    scale = np.sqrt(z.mean() / max(q, 1))
    t = rng.uniform(0.1, 1.0, (h, q)) * scale
    l = rng.uniform(0.1, 1.0, (q, w)) * scale
    best = (t, l)
    best_err = np.linalg.norm(z - t @ l)
    trace = [float(best_err)]
    for _ in range(iterations):
        l = np.clip(np.linalg.lstsq(t, z, rcond=None)[0], 0.0, None)
        t = np.clip(np.linalg.lstsq(l.T, z.T, rcond=None)[0].T, 0.0, None)
        err = np.linalg.norm(z - t @ l)
        if err <= best_err:
            best = (t.copy(), l.copy())
            best_err = err
            trace.append(float(err))
    return best[0], best[1], np.asarray(trace)


# ---------------------------------------------------------------------------
# Direct-entry optimization (the generator ablation)
# ---------------------------------------------------------------------------


def direct_entry_factorize(z, q, smooth_weight=0.01, iterations=2000,
                           learning_rate=0.01, pointwise_weight=0.05, seed=0):
    """Optimize matrix entries directly (no generator networks).

    Entries are reparameterized through softplus for nonnegativity and
    trained with Adam on the same gradient-domain loss plus an L1
    smoothness prior on both factors. Returns (t, l, loss_trace).
    """
    z = np.asarray(z, dtype=np.float64)
    h, w = z.shape
    zmax = float(z.max())
    if zmax <= 0:
        raise TensorError("cannot factorize a nonpositive matrix")
    zn = z / zmax
    rng = np.random.default_rng(seed)
    a = Tensor(rng.standard_normal((h, q)), requires_grad=True)
    b = Tensor(rng.standard_normal((q, w)), requires_grad=True)
    opt = Adam([a, b], learning_rate=learning_rate)
    spec = LossSpec(pointwise_weight=pointwise_weight)
    z_const = Tensor(zn)
    trace = np.empty(iterations)
    t_out = l_out = None
    for it in range(iterations):
        opt.zero_grad()
        with T.Tape():
            t_out = T.softplus(a)
            l_out = T.softplus(b)
            loss = loss_eval(t_out @ l_out, z_const, spec)
            sm = None
            for f, axis in ((t_out, 0), (t_out, 1), (l_out, 0), (l_out, 1)):
                if f.shape[axis] > 1:
                    term = T.l1(T.finite_diff(f, axis))
                    sm = term if sm is None else sm + term
            if sm is not None:
                loss = loss + smooth_weight * sm
        value = loss.item()
        if not np.isfinite(value):
            raise NumericalError(f"non-finite direct-entry loss at iteration {it}")
        trace[it] = value
        T.backward(loss)
        opt.step()
    return t_out.data.copy(), l_out.data.copy(), trace


# ---------------------------------------------------------------------------
# EM with a Gaussian transport posterior (marginalization baseline)
# ---------------------------------------------------------------------------


@dataclass
class EmResult:
    t_mean: np.ndarray
    t_var: np.ndarray
    l: np.ndarray
    rounds: int


def estimate_noise_var(z):
    """Noise variance from the temporal high-frequency residual of z."""
    z = np.asarray(z, dtype=np.float64)
    if z.shape[1] < 2:
        raise TensorError("need at least two frames to estimate noise")
    return max(float(np.mean(np.diff(z, axis=1) ** 2) / 2.0), 1e-12)


def levin_e_step(z, l, noise_var, prior_weight, grad_gram):
    """Posterior mean and per-entry variance of T's rows given L.

    Rows share the posterior precision P = L L^T / sigma^2 + prior_weight * G,
    so the diagonal covariance is one vector broadcast across rows.
    """
    n = l.shape[0]
    precision = l @ l.T / noise_var + prior_weight * grad_gram + 1e-9 * np.eye(n)
    cov = np.linalg.inv(precision)
    t_mean = (z @ l.T) @ cov / noise_var
    var_row = np.diag(cov).copy()
    t_var = np.broadcast_to(var_row, t_mean.shape).copy()
    return t_mean, t_var


def levin_m_step(z, t_mean, t_var, noise_var, prior_weight, grad_gram):
    """Best L given the transport distribution; the data term carries the
    E[T^T T] = T_mean^T T_mean + sum of row variances correction."""
    var_correction = np.diag(t_var.sum(axis=0))
    a = (t_mean.T @ t_mean + var_correction) / noise_var + prior_weight * grad_gram
    rhs = t_mean.T @ z / noise_var
    return np.linalg.solve(a, rhs)


def levin_em(z, q, prior_weight=1.0, em_rounds=30, hidden_shape=None,
             noise_var=None, seed=0, tol=1e-4):
    """Joint recovery by expectation-maximization with a diagonal Gaussian
    posterior over transport entries and spatial-gradient Gaussian priors.

    z: (m, t) observed matrix; q: hidden pixel count (square layout by
    default). Returns an EmResult.
    """
    z = np.asarray(z, dtype=np.float64)
    if hidden_shape is None:
        side = int(round(np.sqrt(q)))
        if side * side != q:
            raise TensorError(f"hidden layout is not square ({q}); pass hidden_shape")
        hidden_shape = (side, side)
    if noise_var is None:
        noise_var = estimate_noise_var(z)
    d = gradient_operator(hidden_shape)
    grad_gram = d.T @ d
    rng = np.random.default_rng(seed)
    l = rng.uniform(0.0, 1.0, (q, z.shape[1]))
    t_mean = t_var = None
    prev = None
    rounds = 0
    for rounds in range(1, em_rounds + 1):
        t_mean, t_var = levin_e_step(z, l, noise_var, prior_weight, grad_gram)
        l = levin_m_step(z, t_mean, t_var, noise_var, prior_weight, grad_gram)
        cur = np.concatenate([t_mean.ravel(), l.ravel()])
        if prev is not None:
            denom = max(float(np.linalg.norm(prev)), 1e-300)
            if float(np.linalg.norm(cur - prev)) / denom < tol:
                break
        prev = cur
    return EmResult(t_mean=t_mean, t_var=t_var, l=l, rounds=rounds)
