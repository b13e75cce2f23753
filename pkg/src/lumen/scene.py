"""Synthetic scenes: fabricated transport matrices, hidden videos, observations.

The transport model is deliberately cheap 2.5-D: hidden pixels are small
area lights on a back plane, the observed scene is a textured Lambertian
wall facing them, and floating rectangle/disk occluders between the planes
carve shadows into the per-pixel response images. Inverse-square and double
cosine falloff give each response a smooth unimodal envelope; the occluders
supply the high-frequency shadow structure that keeps the transport matrix
well conditioned.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import TensorError


@dataclass(frozen=True)
class Occluder:
    kind: str                     # "rect" | "disk"
    center: tuple                 # (x, y) in scene units
    size: tuple | float           # rect half-extents or disk radius
    depth: float                  # fraction of the light-to-wall distance, in (0,1)
    albedo: float = 1.0           # opacity: 1 blocks fully

    def blocks(self, px, py):
        cx, cy = self.center
        if self.kind == "rect":
            sx, sy = self.size
            return (np.abs(px - cx) <= sx) & (np.abs(py - cy) <= sy)
        if self.kind == "disk":
            return (px - cx) ** 2 + (py - cy) ** 2 <= self.size ** 2
        raise TensorError(f"unknown occluder kind {self.kind!r}")


@dataclass
class SceneConfig:
    observed_shape: tuple = (24, 32)       # (I, J)
    hidden_shape: tuple = (8, 8)           # (i, j)
    occluders: tuple = ()
    ambient_level: float = 0.0
    noise_std: float = 0.002
    channels: int = 1
    wall_distance: float = 2.0
    texture_strength: float = 0.35
    brightness: float = 0.8                # peak of T @ ones, pre-ambient
    saturation: float = 1.0

    def validate(self):
        if self.channels not in (1, 3):
            raise TensorError("channels must be 1 or 3")
        if self.ambient_level < 0 or self.noise_std < 0:
            raise TensorError("ambient_level and noise_std must be nonnegative")
        for occ in self.occluders:
            if not 0.0 <= occ.albedo <= 1.0:
                raise TensorError("occluder albedo must lie in [0, 1]")
            if not 0.0 < occ.depth < 1.0:
                raise TensorError("occluder depth must lie strictly between the planes")


def random_occluders(rng, count=4):
    """A mixed bag of floating rectangles and disks between the planes."""
    occs = []
    for k in range(count):
        kind = "rect" if k % 2 == 0 else "disk"
        center = (rng.uniform(0.15, 0.85), rng.uniform(0.15, 0.85))
        depth = rng.uniform(0.35, 0.75)
        if kind == "rect":
            size = (rng.uniform(0.04, 0.14), rng.uniform(0.04, 0.14))
        else:
            size = rng.uniform(0.05, 0.12)
        occs.append(Occluder(kind, center, size, depth, albedo=1.0))
    return tuple(occs)


def _grid_points(shape):
    n0, n1 = shape
    ys = (np.arange(n0) + 0.5) / n0
    xs = (np.arange(n1) + 0.5) / n1
    gy, gx = np.meshgrid(ys, xs, indexing="ij")
    return gx, gy


def _wall_texture(cfg, rng):
    """Smooth per-channel albedo field in (0, 1], low-frequency cosine modes."""
    gx, gy = _grid_points(cfg.observed_shape)
    tex = np.zeros((*cfg.observed_shape, cfg.channels))
    for c in range(cfg.channels):
        f = np.zeros_like(gx)
        for _ in range(4):
            fx, fy = rng.uniform(0.5, 3.0, 2)
            ph = rng.uniform(0, 2 * np.pi, 2)
            f += rng.uniform(0.3, 1.0) * np.cos(2 * np.pi * fx * gx + ph[0]) \
                * np.cos(2 * np.pi * fy * gy + ph[1])
        f -= f.min()
        if f.max() > 0:
            f /= f.max()
        tex[..., c] = 1.0 - cfg.texture_strength * f
    return tex


def synth_transport(cfg: SceneConfig, seed=0):
    """Fabricate the ground-truth transport tensor, shape (I, J, i, j, channels)."""
    cfg.validate()
    rng = np.random.default_rng(seed)
    I, J = cfg.observed_shape
    i, j = cfg.hidden_shape
    tex = _wall_texture(cfg, rng)
    ox, oy = _grid_points((I, J))
    hx_all, hy_all = _grid_points((i, j))
    t = np.zeros((I, J, i, j, cfg.channels))
    d = cfg.wall_distance
    for a in range(i):
        for b in range(j):
            hx, hy = hx_all[a, b], hy_all[a, b]
            dx, dy = ox - hx, oy - hy
            r2 = dx * dx + dy * dy + d * d
            falloff = (d * d) / (r2 * r2)
            trans = np.ones_like(falloff)
            for occ in cfg.occluders:
                s = occ.depth
                px = hx + s * dx
                py = hy + s * dy
                trans = trans * np.where(occ.blocks(px, py), 1.0 - occ.albedo, 1.0)
            t[:, :, a, b, :] = (falloff * trans)[..., None] * tex
    full_on = t.sum(axis=(2, 3))
    peak = full_on.max()
    if peak > 0:
        t *= cfg.brightness / peak
    return t


# ---------------------------------------------------------------------------
# Hidden video scripts
# ---------------------------------------------------------------------------


@dataclass
class HiddenVideoScript:
    kind: str                       # moving_disks | two_blobs_waving | constant
    shape: tuple = (8, 8)           # (i, j)
    frames: int = 200
    n_entities: int = 2
    channels: int = 1
    colors: tuple = ()              # optional per-entity colors, each length `channels`

    def validate(self):
        if self.kind not in ("moving_disks", "two_blobs_waving", "constant"):
            raise TensorError(f"unknown script kind {self.kind!r}")
        if self.frames < 1:
            raise TensorError("frames must be positive")


def _render_disk(i, j, cy, cx, radius):
    ys, xs = np.meshgrid(np.arange(i) + 0.5, np.arange(j) + 0.5, indexing="ij")
    dist = np.sqrt((ys - cy) ** 2 + (xs - cx) ** 2)
    return np.clip(radius + 0.5 - dist, 0.0, 1.0)


def disk_trajectory(shape, frames, rng, max_step=1.0):
    """A circular or Lissajous path whose per-frame displacement stays <= max_step px."""
    i, j = shape
    margin = 0.3
    cy = rng.uniform(margin * i, (1 - margin) * i)
    cx = rng.uniform(margin * j, (1 - margin) * j)
    ry = rng.uniform(0.12, 0.27) * i
    rx = rng.uniform(0.12, 0.27) * j
    # displacement per frame ~ r * dphase; cap the phase speed accordingly
    max_r = max(rx, ry)
    dphase = min(2 * np.pi / frames * rng.integers(1, 4), max_step / max(max_r, 1e-9))
    phase0 = rng.uniform(0, 2 * np.pi)
    ratio = rng.choice([1.0, 2.0])
    tt = np.arange(frames) * dphase + phase0
    return cy + ry * np.sin(tt), cx + rx * np.cos(ratio * tt)


def synth_hidden_video(script: HiddenVideoScript, seed=0):
    """Render a script into frames (t, i, j, channels) with values in [0, 1]."""
    script.validate()
    rng = np.random.default_rng(seed)
    i, j = script.shape
    t = script.frames
    c = script.channels
    out = np.zeros((t, i, j, c))
    if script.kind == "constant":
        ys, xs = np.meshgrid(np.linspace(-1, 1, i), np.linspace(-1, 1, j), indexing="ij")
        blob = np.exp(-(ys ** 2 + xs ** 2) / 0.4)
        for ch in range(c):
            out[..., ch] = blob
        return out
    if script.kind == "moving_disks":
        radius = max(0.9, 0.11 * min(i, j))
        for k in range(script.n_entities):
            cys, cxs = disk_trajectory((i, j), t, rng)
            color = script.colors[k] if script.colors else (1.0,) * c
            for f in range(t):
                disk = _render_disk(i, j, cys[f], cxs[f], radius)
                for ch in range(c):
                    out[f, :, :, ch] = np.maximum(out[f, :, :, ch], color[ch] * disk)
        return out
    # two_blobs_waving: gaussian blobs oscillating horizontally in antiphase
    ys, xs = np.meshgrid(np.arange(i) + 0.5, np.arange(j) + 0.5, indexing="ij")
    amp = 0.22 * j
    speed = min(2 * np.pi / t * 2, 1.0 / max(amp, 1e-9))
    for k in range(2):
        cy = (0.3 + 0.4 * k) * i
        cx0 = 0.5 * j
        sign = 1.0 if k == 0 else -1.0
        color = script.colors[k] if script.colors else (1.0,) * c
        for f in range(t):
            cx = cx0 + sign * amp * np.sin(speed * f * max(amp, 1.0))
            blob = np.exp(-((ys - cy) ** 2 + (xs - cx) ** 2) / (0.1 * i * j / 8))
            for ch in range(c):
                out[f, :, :, ch] = np.maximum(out[f, :, :, ch], color[ch] * blob)
    return np.clip(out, 0.0, 1.0)


# ---------------------------------------------------------------------------
# Observation
# ---------------------------------------------------------------------------


def ambient_image(cfg: SceneConfig):
    """Per-pixel image added to every frame; what a black frame records, noise aside."""
    I, J = cfg.observed_shape
    return np.full((I, J, cfg.channels), cfg.ambient_level)


def observe(transport, hidden, cfg: SceneConfig, seed=0):
    """Form Z = T L + ambient + noise, clamped at saturation.

    Returns (observed (t, I, J, c), overexposure mask (I, J) marking pixels
    that met or exceeded the saturation level pre-clamp in any frame).
    """
    I, J, i, j, c = transport.shape
    if hidden.shape[1:] != (i, j, c):
        raise TensorError(f"hidden video {hidden.shape} does not match transport {transport.shape}")
    t = hidden.shape[0]
    rng = np.random.default_rng(seed)
    tmat = transport.reshape(I * J, i * j, c)
    lmat = hidden.reshape(t, i * j, c)
    z = np.empty((t, I * J, c))
    for ch in range(c):
        z[:, :, ch] = lmat[:, :, ch] @ tmat[:, :, ch].T
    z = z.reshape(t, I, J, c) + ambient_image(cfg)
    if cfg.noise_std > 0:
        z = z + rng.normal(0.0, cfg.noise_std, z.shape)
    mask = (z >= cfg.saturation).any(axis=(0, 3))
    z = np.clip(z, 0.0, cfg.saturation)
    return z, mask
