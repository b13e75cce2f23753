"""Blind recovery of the transport matrix and hidden video from Z alone.

The transport columns are constrained to the span of the observed video's
top singular vectors: a 2-D generator emits mixing weights Q over that
basis while a 3-D generator emits the hidden video, and both are optimized
jointly against a loss dominated by temporal-gradient agreement. A
precomputed mean image is added to every transport slice so the networks
only explain the residual motion.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .layout import matrix_to_transport, matrix_to_video, video_to_matrix
from .linalg import TruncatedSVD, truncated_svd
from .nets import build_network, mixing_net_spec, video_net_spec
from .optim import Adam
from .tensor import NumericalError, Tensor, TensorError


@dataclass
class BlindConfig:
    svd_rank: int = 32
    hidden_shape: tuple = (16, 16)
    iterations: int = 100_000
    learning_rate: float = 0.00006
    data_l2: float = 0.01
    temporal_grad: float = 1.0
    nonneg_t: float = 10.0
    smooth_t: float = 0.001
    color_sat: float = 0.001
    magnitude_q0: float = 0.0001
    fd_interval: tuple = (1, 8)
    seed: int = 0
    width: float = 1.0               # generator channel multiplier
    scale_init_ones: bool = False    # mixing scales start at 1 instead of sqrt(sigma)
    checkpoint_every: int = 500
    deterministic: bool = True       # kernels are sequential either way; kept for contract
    saturation: float = 1.0

    def validate(self, frames=None):
        weights = (self.data_l2, self.temporal_grad, self.nonneg_t,
                   self.smooth_t, self.color_sat, self.magnitude_q0)
        if any(w < 0 for w in weights):
            raise TensorError("loss weights must be nonnegative")
        lo, hi = self.fd_interval
        if lo < 1 or hi < lo:
            raise TensorError(f"bad fd_interval {self.fd_interval}")
        if frames is not None and hi > frames - 1:
            raise TensorError(f"fd_interval {self.fd_interval} exceeds t-1={frames - 1}")


@dataclass
class MixingWeights:
    """Learnable per-vector scales applied to the mixing network's output."""

    scales: Tensor              # (s * channels,), requires_grad
    s: int
    channels: int

    @classmethod
    def create(cls, svds, scale_init_ones=False):
        s = svds[0].rank
        init = np.concatenate([np.ones(s) if scale_init_ones else np.sqrt(svd.sigma)
                               for svd in svds])
        return cls(scales=Tensor(init, requires_grad=True), s=s, channels=len(svds))

    def from_net_output(self, raw):
        """Split the scaled (i, j, s*channels) map into per-channel Q of shape (s, i*j).

        Channel blocks are contiguous: channel ch owns columns [ch*s, (ch+1)*s).
        """
        i, j = raw.shape[0], raw.shape[1]
        scaled = raw * self.scales
        qs = []
        for ch in range(self.channels):
            block = T.narrow(scaled, 2, ch * self.s, self.s)
            qs.append(T.transpose(block.reshape(i * j, self.s)))
        return qs


def assemble_transport(svds, qs, mean_images, hidden_shape):
    """T[:, p] = U sqrt(Sigma) Q[:, p] + mean image, per channel.

    svds: one TruncatedSVD per channel; qs: (s, i*j) per channel;
    mean_images: (I, J, channels). Returns the (I, J, i, j, channels) tensor.
    """
    mean_images = np.asarray(mean_images, dtype=np.float64)
    I, J, c = mean_images.shape
    i, j = hidden_shape
    cols = np.empty((c, I * J, i * j))
    for ch in range(c):
        svd = svds[ch]
        q = np.asarray(qs[ch], dtype=np.float64)
        if q.shape != (svd.rank, i * j):
            raise TensorError(f"q shape {q.shape} does not match rank {svd.rank} x {i * j}")
        basis = svd.u * np.sqrt(svd.sigma)
        cols[ch] = basis @ q + mean_images[..., ch].reshape(-1, 1)
    return matrix_to_transport(cols, (I, J), hidden_shape)


def overexposure_mask(observed, saturation=1.0):
    """Pixels at or above the saturation level in any frame or channel."""
    observed = np.asarray(observed)
    return (observed >= saturation - 1e-12).any(axis=(0, 3))


def blind_loss(ts, ls, zs, mask, cfg: BlindConfig, rng=None, delta=None, q0s=None):
    """Total loss and per-term breakdown over per-channel matrix factors.

    ts: (I*J, i*j) per channel; ls: (i*j, t) per channel; zs: (I*J, t) per
    channel; mask: (I, J) bool, True = overexposed (excluded everywhere).
    The temporal finite-difference interval is ``delta`` when given,
    otherwise drawn uniformly from cfg.fd_interval using ``rng``. q0s are
    the per-channel first-basis-vector weight rows for the magnitude prior.
    """
    mask = np.asarray(mask, dtype=bool)
    I, J = mask.shape
    keep = (~mask).astype(np.float64)
    keep_row = Tensor(keep.reshape(I * J, 1))
    pair_i = Tensor((keep[1:, :] * keep[:-1, :]).reshape((I - 1) * J, 1))
    pair_j = Tensor((keep[:, 1:] * keep[:, :-1]).reshape(I * (J - 1), 1))
    if delta is None:
        if rng is None:
            raise TensorError("blind_loss needs either an explicit delta or an rng")
        delta = int(rng.integers(cfg.fd_interval[0], cfg.fd_interval[1] + 1))
    ts = [t if isinstance(t, Tensor) else Tensor(t) for t in ts]
    ls = [l if isinstance(l, Tensor) else Tensor(l) for l in ls]
    zs = [z if isinstance(z, Tensor) else Tensor(z) for z in zs]
    nchan = len(ts)

    data_sq = None
    temporal = None
    nonneg_sq = None
    smooth = None
    masked_ts = []
    for t_c, l_c, z_c in zip(ts, ls, zs):
        resid = (t_c @ l_c - z_c) * keep_row
        sq = (resid * resid).sum()
        data_sq = sq if data_sq is None else data_sq + sq
        tg = T.l1(T.finite_diff(resid, 1, delta))
        temporal = tg if temporal is None else temporal + tg
        t_masked = t_c * keep_row
        masked_ts.append(t_masked)
        neg = T.minimum(t_masked, 0.0)
        nsq = (neg * neg).sum()
        nonneg_sq = nsq if nonneg_sq is None else nonneg_sq + nsq
        timg = t_c.reshape(I, J, t_c.shape[1])
        sm_i = T.l1(T.finite_diff(timg, 0).reshape((I - 1) * J, t_c.shape[1]) * pair_i)
        sm_j = T.l1(T.finite_diff(timg, 1).reshape(I * (J - 1), t_c.shape[1]) * pair_j)
        sm = sm_i + sm_j
        smooth = sm if smooth is None else smooth + sm

    terms = {"delta": float(delta)}
    total = cfg.data_l2 * data_sq
    terms["data_l2"] = total.item()
    tgl = cfg.temporal_grad * temporal
    terms["temporal_grad"] = tgl.item()
    total = total + tgl
    nn = cfg.nonneg_t * T.sqrt(nonneg_sq + 1e-300)
    terms["nonneg_t"] = nn.item()
    total = total + nn
    sml = cfg.smooth_t * smooth
    terms["smooth_t"] = sml.item()
    total = total + sml
    if nchan > 1 and cfg.color_sat > 0:
        mean_t = masked_ts[0]
        for t_m in masked_ts[1:]:
            mean_t = mean_t + t_m
        mean_t = mean_t * (1.0 / nchan)
        sat = None
        for t_m in masked_ts:
            term = T.l1(t_m - mean_t)
            sat = term if sat is None else sat + term
        satl = cfg.color_sat * sat
        terms["color_sat"] = satl.item()
        total = total + satl
    else:
        terms["color_sat"] = 0.0
    if q0s is not None:
        mag = None
        for q0 in q0s:
            q0 = q0 if isinstance(q0, Tensor) else Tensor(q0)
            term = T.l1(q0)
            mag = term if mag is None else mag + term
        magl = cfg.magnitude_q0 * mag
        terms["magnitude_q0"] = magl.item()
        total = total + magl
    else:
        terms["magnitude_q0"] = 0.0
    terms["total"] = total.item()
    for name, value in terms.items():
        if not np.isfinite(value):
            raise NumericalError(f"non-finite blind loss term {name!r}")
    return total, terms


@dataclass
class BlindResult:
    transport: np.ndarray
    hidden: np.ndarray
    loss_trace: list
    checkpoints: list = field(default_factory=list)
    mask: np.ndarray | None = None
    svds: tuple = ()


def run_blind(observed, cfg: BlindConfig, progress=None):
    """Jointly optimize the mixing and hidden-video generators against Z.

    observed: (t, I, J, channels) video. Returns a BlindResult whose
    loss_trace holds one per-iteration dict of term values.
    """
    z = np.asarray(observed, dtype=np.float64)
    if z.ndim != 4:
        raise TensorError(f"expected observed video (t, I, J, c), got {z.shape}")
    if not np.all(np.isfinite(z)):
        raise NumericalError("observed video contains non-finite values")
    t_frames, I, J, c = z.shape
    i, j = cfg.hidden_shape
    s = cfg.svd_rank
    cfg.validate(frames=t_frames)
    rng = np.random.default_rng(cfg.seed)

    mask = overexposure_mask(z, cfg.saturation)
    keep_flat = (~mask).astype(np.float64).reshape(-1, 1)
    zmats = video_to_matrix(z)
    mean_images = z.mean(axis=0)
    svds = []
    basis = []
    mean_cols = []
    for ch in range(c):
        centered = (zmats[ch] - mean_images[..., ch].reshape(-1, 1)) * keep_flat
        svd = truncated_svd(centered, s, seed=cfg.seed + ch)
        svds.append(svd)
        basis.append(Tensor(svd.u * np.sqrt(svd.sigma)))
        mean_cols.append(Tensor(mean_images[..., ch].reshape(-1, 1)))

    net_l = build_network(video_net_spec(t_frames, i, j, channels=c, width=cfg.width), rng)
    net_q = build_network(mixing_net_spec(i, j, s, channels=c, width=cfg.width), rng)
    mixing = MixingWeights.create(svds, scale_init_ones=cfg.scale_init_ones)
    opt = Adam(net_l.parameters() + net_q.parameters() + [mixing.scales],
               learning_rate=cfg.learning_rate)
    z_consts = [Tensor(zmats[ch]) for ch in range(c)]

    trace = []
    checkpoints = []
    initial_total = None
    t_data = l_data = None
    for it in range(cfg.iterations):
        opt.zero_grad()
        with T.Tape():
            l_video = net_l.forward(rng)
            q_raw = net_q.forward(rng)
            qs = mixing.from_net_output(q_raw)
            ls = []
            ts = []
            q0s = []
            for ch in range(c):
                l_c = T.transpose(T.narrow(l_video, 3, ch, 1).reshape(t_frames, i * j))
                ls.append(l_c)
                t_c = basis[ch] @ qs[ch] + mean_cols[ch]
                ts.append(t_c)
                q0s.append(T.narrow(qs[ch], 0, 0, 1))
            total, terms = blind_loss(ts, ls, zs=z_consts, mask=mask, cfg=cfg,
                                      rng=rng, q0s=q0s)
        terms["iteration"] = it
        trace.append(terms)
        if initial_total is None:
            initial_total = terms["total"]
        elif terms["total"] > 1e6 * max(initial_total, 1e-300):
            raise NumericalError(
                f"blind optimization diverged at iteration {it}: "
                f"loss {terms['total']:.3e} vs initial {initial_total:.3e}")
        T.backward(total)
        opt.step()
        t_data = np.stack([t_c.data for t_c in ts])
        l_data = l_video.data
        if cfg.checkpoint_every and (it + 1) % cfg.checkpoint_every == 0:
            checkpoints.append((it + 1,
                                matrix_to_transport(t_data, (I, J), (i, j)),
                                l_data.copy()))
        if progress is not None:
            progress(it, terms)
    transport = matrix_to_transport(t_data, (I, J), (i, j))
    return BlindResult(transport=transport, hidden=l_data.copy(), loss_trace=trace,
                       checkpoints=checkpoints, mask=mask, svds=tuple(svds))
