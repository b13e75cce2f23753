"""Recovery metrics that respect the factorization's warp ambiguity.

Recovered hidden videos can come back rotated, flipped, shifted, and
rescaled relative to the ground truth, so scores are maximized over the
dihedral group, small integer shifts, and a closed-form global scale.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .tensor import TensorError


@dataclass(frozen=True)
class AlignmentTransform:
    """Dihedral element + integer shift + global scale, applied as
    shift(rot90^rotations(flip(x))) * scale."""

    rotations: int = 0        # quarter turns, counterclockwise
    flip: bool = False        # horizontal flip before rotating
    shift: tuple = (0, 0)     # (dy, dx) after rotating
    scale: float = 1.0

    def apply(self, video):
        x = np.asarray(video)
        if self.flip:
            x = x[:, :, ::-1]
        x = np.rot90(x, self.rotations, axes=(1, 2))
        dy, dx = self.shift
        out = np.zeros_like(x)
        h, w = x.shape[1:3]
        ys = slice(max(dy, 0), h + min(dy, 0))
        xs = slice(max(dx, 0), w + min(dx, 0))
        ys_src = slice(max(-dy, 0), h + min(-dy, 0))
        xs_src = slice(max(-dx, 0), w + min(-dx, 0))
        out[:, ys, xs] = x[:, ys_src, xs_src]
        return out * self.scale

    def apply_inverse(self, video):
        x = np.asarray(video) / self.scale
        dy, dx = self.shift
        h, w = x.shape[1:3]
        out = np.zeros_like(x)
        ys = slice(max(-dy, 0), h + min(-dy, 0))
        xs = slice(max(-dx, 0), w + min(-dx, 0))
        ys_src = slice(max(dy, 0), h + min(dy, 0))
        xs_src = slice(max(dx, 0), w + min(dx, 0))
        out[:, ys, xs] = x[:, ys_src, xs_src]
        out = np.rot90(out, -self.rotations, axes=(1, 2))
        if self.flip:
            out = out[:, :, ::-1]
        return out

    def valid_mask(self, shape):
        """Pixels of the transformed frame that carry source data (not shift fill)."""
        h, w = shape
        m = np.zeros((h, w), dtype=bool)
        dy, dx = self.shift
        m[max(dy, 0):h + min(dy, 0), max(dx, 0):w + min(dx, 0)] = True
        return m


def _as_video(x):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 2:
        x = x[None, :, :, None]
    elif x.ndim == 3:
        x = x[:, :, :, None]
    elif x.ndim != 4:
        raise TensorError(f"expected image or video, got shape {x.shape}")
    return x


def _zncc(a, b):
    a = a - a.mean()
    b = b - b.mean()
    denom = np.sqrt((a * a).sum() * (b * b).sum())
    if denom == 0.0:
        return None
    return float((a * b).sum() / denom)


def aligned_ncc(candidate, reference, radius=2):
    """Best mean per-frame zero-normalized cross-correlation over the
    dihedral transforms and integer shifts up to ``radius``.

    Returns (score in [-1, 1], best AlignmentTransform with its least-squares
    scale). Constant inputs score 0 with a warning.
    """
    cand = _as_video(candidate)
    ref = _as_video(reference)
    if cand.shape[0] != ref.shape[0] or cand.shape[3] != ref.shape[3]:
        raise TensorError(f"frame/channel counts differ: {cand.shape} vs {ref.shape}")
    h, w = ref.shape[1:3]
    best_score = None
    best_tf = None
    for flip in (False, True):
        base = cand[:, :, ::-1] if flip else cand
        for rot in range(4):
            x = np.rot90(base, rot, axes=(1, 2))
            if x.shape[1:3] != (h, w):
                continue
            for dy in range(-radius, radius + 1):
                for dx in range(-radius, radius + 1):
                    ys = slice(max(dy, 0), h + min(dy, 0))
                    xs = slice(max(dx, 0), w + min(dx, 0))
                    ys_src = slice(max(-dy, 0), h + min(-dy, 0))
                    xs_src = slice(max(-dx, 0), w + min(-dx, 0))
                    a = x[:, ys_src, xs_src]
                    b = ref[:, ys, xs]
                    scores = []
                    for f in range(a.shape[0]):
                        for c in range(a.shape[3]):
                            s = _zncc(a[f, :, :, c], b[f, :, :, c])
                            scores.append(0.0 if s is None else s)
                    score = float(np.mean(scores)) if scores else 0.0
                    if best_score is None or score > best_score:
                        denom = float((a * a).sum())
                        scale = float((a * b).sum() / denom) if denom > 0 else 1.0
                        best_score = score
                        best_tf = AlignmentTransform(rot, flip, (dy, dx), scale)
    if best_score == 0.0 and (np.ptp(cand) == 0.0 or np.ptp(ref) == 0.0):
        warnings.warn("aligned_ncc on constant input; score defined as 0", stacklevel=2)
    return best_score, best_tf


def psnr(a, b, peak=1.0):
    """Peak signal-to-noise ratio in dB; +inf for identical inputs."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise TensorError(f"psnr shapes differ: {a.shape} vs {b.shape}")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return float("inf")
    return 10.0 * np.log10(peak * peak / mse)


def total_variation(x, axes=None):
    """Sum of absolute forward differences along the spatial axes."""
    x = np.asarray(x, dtype=np.float64)
    if axes is None:
        axes = (0, 1) if x.ndim == 2 else (1, 2)
    tv = 0.0
    for a in axes:
        tv += float(np.abs(np.diff(x, axis=a)).sum())
    return tv
