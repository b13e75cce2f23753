"""Hidden-video recovery when the transport matrix is known.

The reference point for the blind pipeline: subtract the black frame,
solve a gradient-penalized least-squares system per color channel, clamp
negatives. The gradient penalty weight is picked by a small log-spaced
grid searched with a row-holdout score on a subset of frames.
"""

from __future__ import annotations

import numpy as np

from .layout import matrix_to_video, transport_to_matrix, video_to_matrix
from .linalg import ridge_solve
from .tensor import TensorError

LAMBDA_GRID = tuple(float(x) for x in np.logspace(-5, -1, 5))


def pick_lambda(tmat, zmat, hidden_shape, grid=LAMBDA_GRID, max_frames=8, seed=0):
    """Choose the gradient weight by holding out a fifth of the observed pixels.

    Solves on the training rows only and scores the prediction residual on
    the held-out rows, over at most ``max_frames`` columns of z.
    """
    rng = np.random.default_rng(seed)
    m = tmat.shape[0]
    holdout = rng.choice(m, size=max(1, m // 5), replace=False)
    train = np.setdiff1d(np.arange(m), holdout)
    cols = np.linspace(0, zmat.shape[1] - 1, min(max_frames, zmat.shape[1])).astype(int)
    zsub = zmat[:, cols]
    best_lam, best_err = grid[0], np.inf
    for lam in grid:
        sol = ridge_solve(tmat[train], zsub[train], lam, hidden_shape)
        err = float(np.linalg.norm(tmat[holdout] @ sol - zsub[holdout]))
        if err < best_err:
            best_lam, best_err = lam, err
    return best_lam


def invert_known_transport(transport, observed, lam_grad=None, black_frame=None):
    """Recover the hidden video from Z and a known T.

    transport: (I, J, i, j, c); observed: (t, I, J, c);
    black_frame: (I, J, c) ambient image subtracted from every frame.
    lam_grad=None triggers the grid search. Returns (hidden (t, i, j, c),
    chosen lam_grad).
    """
    transport = np.asarray(transport, dtype=np.float64)
    observed = np.asarray(observed, dtype=np.float64)
    if transport.ndim != 5 or observed.ndim != 4:
        raise TensorError("expected transport (I,J,i,j,c) and observed (t,I,J,c)")
    I, J, i, j, c = transport.shape
    if observed.shape[1:] != (I, J, c):
        raise TensorError(f"observed {observed.shape} does not match transport {transport.shape}")
    if black_frame is not None:
        observed = observed - np.asarray(black_frame)[None, ...]
    tmats = transport_to_matrix(transport)
    zmats = video_to_matrix(observed)
    if lam_grad is None:
        lam_grad = pick_lambda(tmats[0], zmats[0], (i, j))
    if lam_grad < 0:
        raise TensorError("lam_grad must be nonnegative")
    sols = np.empty((c, i * j, observed.shape[0]))
    for ch in range(c):
        sols[ch] = ridge_solve(tmats[ch], zmats[ch], lam_grad, (i, j))
    hidden = matrix_to_video(np.clip(sols, 0.0, None), (i, j))
    return hidden, lam_grad
