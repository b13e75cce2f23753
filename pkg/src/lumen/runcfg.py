"""Text configs: key = value lines in one section per module, INI style."""

from __future__ import annotations

import configparser
import os

from .blind import BlindConfig
from .dipfactor import FactorizationConfig, LossSpec
from .presets import RunConfig, load_preset
from .scene import HiddenVideoScript, SceneConfig
from .tensor import TensorError


def _pair(text):
    a, _, b = text.partition("x")
    return int(a), int(b)


def dump_config(cfg: RunConfig) -> str:
    cp = configparser.ConfigParser()
    cp["run"] = {"seed": str(cfg.seed), "preset": cfg.preset}
    sc = cfg.scene
    cp["scene"] = {
        "observed": f"{sc.observed_shape[0]}x{sc.observed_shape[1]}",
        "hidden": f"{sc.hidden_shape[0]}x{sc.hidden_shape[1]}",
        "channels": str(sc.channels),
        "ambient_level": repr(sc.ambient_level),
        "noise_std": repr(sc.noise_std),
        "occluder_count": str(cfg.occluder_count),
    }
    sp = cfg.script
    cp["script"] = {
        "kind": sp.kind,
        "frames": str(sp.frames),
        "entities": str(sp.n_entities),
    }
    bl = cfg.blind
    cp["blind"] = {
        "svd_rank": str(bl.svd_rank),
        "iterations": str(bl.iterations),
        "learning_rate": repr(bl.learning_rate),
        "width": repr(bl.width),
        "data_l2": repr(bl.data_l2),
        "temporal_grad": repr(bl.temporal_grad),
        "nonneg_t": repr(bl.nonneg_t),
        "smooth_t": repr(bl.smooth_t),
        "color_sat": repr(bl.color_sat),
        "magnitude_q0": repr(bl.magnitude_q0),
        "fd_interval": f"{bl.fd_interval[0]}x{bl.fd_interval[1]}",
        "scale_init_ones": str(bl.scale_init_ones),
        "checkpoint_every": str(bl.checkpoint_every),
        "deterministic": str(bl.deterministic),
    }
    fz = cfg.factorize
    cp["factorize"] = {
        "iterations": str(fz.iterations),
        "learning_rate": repr(fz.learning_rate),
        "width": repr(fz.width),
        "pointwise_weight": repr(fz.loss.pointwise_weight),
    }
    if fz.inner_dim is not None:
        cp["factorize"]["inner_dim"] = str(fz.inner_dim)
    cp["invert"] = {}
    if cfg.invert_lam is not None:
        cp["invert"]["lam_grad"] = repr(cfg.invert_lam)
    lines = []
    for section in cp.sections():
        lines.append(f"[{section}]")
        for key, value in cp[section].items():
            lines.append(f"{key} = {value}")
        lines.append("")
    return "\n".join(lines)


def parse_config(text: str) -> RunConfig:
    cp = configparser.ConfigParser()
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise TensorError(f"malformed config: {exc}") from exc
    cfg = RunConfig()
    if cp.has_section("run"):
        cfg.seed = cp.getint("run", "seed", fallback=cfg.seed)
        cfg.preset = cp.get("run", "preset", fallback="")
    if cp.has_section("scene"):
        g = cp["scene"]
        cfg.scene = SceneConfig(
            observed_shape=_pair(g.get("observed", "24x32")),
            hidden_shape=_pair(g.get("hidden", "8x8")),
            channels=g.getint("channels", 1),
            ambient_level=g.getfloat("ambient_level", 0.0),
            noise_std=g.getfloat("noise_std", 0.002),
        )
        cfg.occluder_count = g.getint("occluder_count", 4)
    if cp.has_section("script"):
        g = cp["script"]
        cfg.script = HiddenVideoScript(
            kind=g.get("kind", "moving_disks"),
            shape=cfg.scene.hidden_shape,
            frames=g.getint("frames", 200),
            n_entities=g.getint("entities", 2),
            channels=cfg.scene.channels,
        )
    if cp.has_section("blind"):
        g = cp["blind"]
        cfg.blind = BlindConfig(
            svd_rank=g.getint("svd_rank", 16),
            hidden_shape=cfg.scene.hidden_shape,
            iterations=g.getint("iterations", 10000),
            learning_rate=g.getfloat("learning_rate", 0.00006),
            width=g.getfloat("width", 1.0),
            data_l2=g.getfloat("data_l2", 0.01),
            temporal_grad=g.getfloat("temporal_grad", 1.0),
            nonneg_t=g.getfloat("nonneg_t", 10.0),
            smooth_t=g.getfloat("smooth_t", 0.001),
            color_sat=g.getfloat("color_sat", 0.001),
            magnitude_q0=g.getfloat("magnitude_q0", 0.0001),
            fd_interval=_pair(g.get("fd_interval", "1x8")),
            scale_init_ones=g.getboolean("scale_init_ones", False),
            checkpoint_every=g.getint("checkpoint_every", 500),
            deterministic=g.getboolean("deterministic", True),
            seed=cfg.seed,
        )
    if cp.has_section("factorize"):
        g = cp["factorize"]
        cfg.factorize = FactorizationConfig(
            inner_dim=g.getint("inner_dim", fallback=None) if g.get("inner_dim", None) else None,
            iterations=g.getint("iterations", 20000),
            learning_rate=g.getfloat("learning_rate", 0.001),
            width=g.getfloat("width", 1.0),
            loss=LossSpec(pointwise_weight=g.getfloat("pointwise_weight", 0.05)),
            seed=cfg.seed,
        )
    if cp.has_section("invert") and cp["invert"].get("lam_grad", None):
        cfg.invert_lam = cp.getfloat("invert", "lam_grad")
    cfg.scene.occluders = cfg.occluders_for_seed()
    cfg.blind.seed = cfg.seed
    cfg.factorize.seed = cfg.seed
    return cfg


def load_config(path) -> RunConfig:
    if not os.path.exists(path):
        raise TensorError(f"config not found: {path}")
    with open(path) as fh:
        return parse_config(fh.read())


def resolve_config(config=None, preset=None, seed=None, overrides=()):
    """Preset or config file, then LUMEN_SEED, then explicit flags, then
    section.key=value overrides, in increasing precedence."""
    if preset:
        cfg = load_preset(preset)
    elif config:
        path = config
        if os.path.isdir(path):
            path = os.path.join(path, "config.resolved.ini")
        cfg = load_config(path)
    else:
        cfg = RunConfig()
    env_seed = os.environ.get("LUMEN_SEED")
    if env_seed is not None:
        seed = int(env_seed)
    if seed is not None:
        reseed(cfg, seed)
    if overrides:
        text = dump_config(cfg)
        cp = configparser.ConfigParser()
        cp.read_string(text)
        for item in overrides:
            key, _, value = item.partition("=")
            section, _, name = key.strip().partition(".")
            if not cp.has_section(section):
                cp.add_section(section)
            cp[section][name.strip()] = value.strip()
        out = []
        for section in cp.sections():
            out.append(f"[{section}]")
            out.extend(f"{k} = {v}" for k, v in cp[section].items())
            out.append("")
        cfg = parse_config("\n".join(out))
    return cfg


def reseed(cfg: RunConfig, seed: int):
    cfg.seed = seed
    cfg.blind.seed = seed
    cfg.factorize.seed = seed
    cfg.scene.occluders = cfg.occluders_for_seed()
    return cfg
