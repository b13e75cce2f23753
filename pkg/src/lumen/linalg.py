"""Truncated SVD by subspace iteration and gradient-penalized least squares."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import NumericalError, TensorError


@dataclass
class TruncatedSVD:
    """Rank-s factors of one matrix: a ~ u @ diag(sigma) @ v.T."""

    u: np.ndarray
    sigma: np.ndarray
    v: np.ndarray

    @property
    def rank(self):
        return self.sigma.shape[0]

    def reconstruct(self):
        return (self.u * self.sigma) @ self.v.T


def truncated_svd(a, s, oversample=8, max_iter=200, tol=1e-12, seed=0):
    """Top-s singular triplets via randomized subspace iteration.

    Deterministic for a given seed. The sign convention makes the
    largest-magnitude entry of each left singular vector positive.
    """
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise TensorError(f"expected a matrix, got shape {a.shape}")
    m, n = a.shape
    if not 1 <= s <= min(m, n):
        raise TensorError(f"rank s={s} out of range for {m}x{n}")
    k = min(s + oversample, min(m, n))
    rng = np.random.default_rng(seed)
    q = np.linalg.qr(rng.standard_normal((n, k)))[0]
    prev = None
    converged = False
    for _ in range(max_iter):
        uq = np.linalg.qr(a @ q)[0]
        z = a.T @ uq
        q = np.linalg.qr(z)[0]
        # Rayleigh-Ritz values on the current subspace; stable even when the
        # basis keeps rotating inside clustered singular value groups
        estimates = np.sqrt(np.clip(np.linalg.eigvalsh(z.T @ z), 0.0, None))[::-1][:s]
        if prev is not None and np.max(np.abs(estimates - prev)) <= tol * max(estimates[0], 1e-300):
            converged = True
            break
        prev = estimates
    if not converged:
        raise NumericalError(f"subspace iteration did not converge in {max_iter} iterations")
    # Rayleigh-Ritz on the s+oversample dimensional subspace
    b = uq.T @ a
    lam, w = np.linalg.eigh(b @ b.T)
    order = np.argsort(lam)[::-1][:s]
    sigma = np.sqrt(np.clip(lam[order], 0.0, None))
    u = uq @ w[:, order]
    v = a.T @ u
    safe = np.maximum(sigma, 1e-300)
    v /= safe
    flip = np.sign(u[np.argmax(np.abs(u), axis=0), np.arange(s)])
    flip[flip == 0] = 1.0
    u *= flip
    v *= flip
    return TruncatedSVD(u=u, sigma=sigma, v=v)


def gradient_operator(shape):
    """Stacked forward-difference operator over a 2-D grid, one row per adjacent pair."""
    i, j = shape
    n = i * j
    rows = []
    idx = np.arange(n).reshape(i, j)
    for a, b in zip(idx[:, :-1].ravel(), idx[:, 1:].ravel()):
        rows.append((a, b))
    for a, b in zip(idx[:-1, :].ravel(), idx[1:, :].ravel()):
        rows.append((a, b))
    d = np.zeros((len(rows), n))
    for r, (a, b) in enumerate(rows):
        d[r, a] = -1.0
        d[r, b] = 1.0
    return d


def ridge_solve(t, z, lam_grad, hidden_shape=None):
    """Minimize ||t @ L - z||^2 + lam_grad * ||D L||^2 over L.

    D is the finite-difference operator over the hidden image layout
    (square by default). Solved as a stacked least-squares problem so the
    normal equations are never formed explicitly.
    """
    t = np.asarray(t, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    if t.ndim != 2 or z.ndim != 2 or t.shape[0] != z.shape[0]:
        raise TensorError(f"incompatible shapes for solve: {t.shape} and {z.shape}")
    if lam_grad < 0:
        raise TensorError("lam_grad must be nonnegative")
    m, n = t.shape
    if lam_grad == 0.0:
        sol, _, rank, _ = np.linalg.lstsq(t, z, rcond=None)
        if rank < n:
            raise NumericalError(f"system is rank-deficient ({rank} < {n}) and lam_grad is 0")
        return sol
    if hidden_shape is None:
        side = int(round(np.sqrt(n)))
        if side * side != n:
            raise TensorError(f"hidden layout is not square ({n} pixels); pass hidden_shape")
        hidden_shape = (side, side)
    d = gradient_operator(hidden_shape)
    aug = np.vstack([t, np.sqrt(lam_grad) * d])
    rhs = np.vstack([z, np.zeros((d.shape[0], z.shape[1]))])
    sol, _, _, _ = np.linalg.lstsq(aug, rhs, rcond=None)
    return sol
