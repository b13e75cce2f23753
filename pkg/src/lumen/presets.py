"""Named desk-scale experiment presets and their config-file round-trip."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .blind import BlindConfig
from .dipfactor import FactorizationConfig, LossSpec
from .scene import HiddenVideoScript, SceneConfig, random_occluders
from .tensor import TensorError


@dataclass
class RunConfig:
    """Everything a run needs: scene, script, and solver settings."""

    scene: SceneConfig = field(default_factory=SceneConfig)
    script: HiddenVideoScript = field(default_factory=HiddenVideoScript)
    blind: BlindConfig = field(default_factory=BlindConfig)
    factorize: FactorizationConfig = field(default_factory=FactorizationConfig)
    invert_lam: float | None = None
    seed: int = 0
    occluder_count: int = 4
    preset: str = ""

    def occluders_for_seed(self):
        return random_occluders(np.random.default_rng(self.seed + 1000), self.occluder_count)


def desk_disks(seed=7):
    """Blind-pipeline scene: 24x32 observed, 8x8 hidden, 200 frames, grayscale."""
    scene = SceneConfig(observed_shape=(24, 32), hidden_shape=(8, 8),
                        ambient_level=0.05, noise_std=0.002, channels=1)
    script = HiddenVideoScript(kind="moving_disks", shape=(8, 8), frames=200,
                               n_entities=2, channels=1)
    blind = BlindConfig(svd_rank=16, hidden_shape=(8, 8), iterations=10000,
                        width=0.1875, seed=seed)
    cfg = RunConfig(scene=scene, script=script, blind=blind, seed=seed,
                    preset="desk-disks")
    cfg.scene.occluders = cfg.occluders_for_seed()
    return cfg


def desk_nonblind(seed=7):
    """Known-transport inversion scene: 48x48 observed, 16x16 hidden, 64 frames."""
    scene = SceneConfig(observed_shape=(48, 48), hidden_shape=(16, 16),
                        ambient_level=0.05, noise_std=0.002, channels=1)
    script = HiddenVideoScript(kind="moving_disks", shape=(16, 16), frames=64,
                               n_entities=2, channels=1)
    blind = BlindConfig(svd_rank=16, hidden_shape=(16, 16), iterations=10000,
                        width=0.1875, seed=seed)
    cfg = RunConfig(scene=scene, script=script, blind=blind, seed=seed,
                    preset="desk-nonblind")
    cfg.scene.occluders = cfg.occluders_for_seed()
    return cfg


def paper_scale(seed=0):
    """Full-scale color configuration; reachable but far beyond desk runtime."""
    scene = SceneConfig(observed_shape=(96, 128), hidden_shape=(16, 16),
                        ambient_level=0.05, noise_std=0.002, channels=3)
    script = HiddenVideoScript(kind="moving_disks", shape=(16, 16), frames=512,
                               n_entities=3, channels=3,
                               colors=((1.0, 0.3, 0.2), (0.2, 1.0, 0.4), (0.3, 0.4, 1.0)))
    blind = BlindConfig(svd_rank=32, hidden_shape=(16, 16), iterations=100_000,
                        width=1.0, seed=seed)
    cfg = RunConfig(scene=scene, script=script, blind=blind, seed=seed,
                    preset="paper-scale", occluder_count=6)
    cfg.scene.occluders = cfg.occluders_for_seed()
    return cfg


PRESETS = {
    "desk-disks": desk_disks,
    "desk-nonblind": desk_nonblind,
    "paper-scale": paper_scale,
}


def load_preset(name, seed=None):
    if name not in PRESETS:
        raise TensorError(f"unknown preset {name!r}; available: {sorted(PRESETS)}")
    cfg = PRESETS[name]() if seed is None else PRESETS[name](seed)
    return cfg
