"""Command-line surface tying simulation, solvers, baselines, and metrics together.

Exit codes: 0 success, 1 usage error (bad flags, malformed config, missing
files, occupied run directory), 2 numerical failure (divergence, non-finite
losses, failed convergence).
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import baselines as bl
from . import blind as blind_mod
from . import dipfactor as df
from . import images
from . import ltv
from . import metrics
from . import nonblind
from . import runcfg
from . import scene as scene_mod
from .gradcheck import check_all
from .layout import matrix_to_transport, matrix_to_video, transport_to_matrix, video_to_matrix
from .tensor import NumericalError, TensorError

EXIT_OK, EXIT_USAGE, EXIT_NUMERICAL = 0, 1, 2

LOSS_COLUMNS = ("iteration", "total", "data_l2", "temporal_grad", "nonneg_t",
                "smooth_t", "color_sat", "magnitude_q0", "delta")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _limit_threads():
    n = os.environ.get("LUMEN_THREADS")
    if not n:
        return
    try:
        import threadpoolctl

        threadpoolctl.threadpool_limits(int(n))
    except ImportError:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ[var] = n


def _prepare_outdir(path, force=False):
    if os.path.isdir(path) and os.listdir(path) and not force:
        raise UsageError(f"run directory {path!r} is not empty; run directories are "
                         "append-only, pick a new one or pass --force")
    os.makedirs(path, exist_ok=True)
    return path


def _require_file(path):
    if not os.path.isfile(path):
        raise UsageError(f"missing file: {path}")
    return path


def _no_clobber(path, force):
    if os.path.exists(path) and not force:
        raise UsageError(f"{path} already exists; pass --force to overwrite")
    return path


def write_loss_tsv(path, trace):
    with open(path, "w") as fh:
        fh.write("\t".join(LOSS_COLUMNS) + "\n")
        for row in trace:
            fh.write("\t".join(_fmt(row.get(col, 0.0)) for col in LOSS_COLUMNS) + "\n")


def _fmt(value):
    if isinstance(value, float) and value.is_integer() and abs(value) < 1e15:
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return f"{value:.17g}"


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_simulate(args):
    cfg = runcfg.resolve_config(args.config, args.preset, args.seed, args.set or ())
    out = _prepare_outdir(args.outdir, args.force)
    transport = scene_mod.synth_transport(cfg.scene, seed=cfg.seed)
    hidden = scene_mod.synth_hidden_video(cfg.script, seed=cfg.seed + 1)
    observed, mask = scene_mod.observe(transport, hidden, cfg.scene, seed=cfg.seed + 2)
    black = scene_mod.ambient_image(cfg.scene)
    ltv.write_ltv(os.path.join(out, "Z.ltv1"), observed)
    ltv.write_ltv(os.path.join(out, "T_gt.ltv1"), transport)
    ltv.write_ltv(os.path.join(out, "L_gt.ltv1"), hidden)
    ltv.write_ltv(os.path.join(out, "mask.ltv1"), mask[..., None].astype(np.float64), dtype="f32")
    ltv.write_ltv(os.path.join(out, "black.ltv1"), black)
    with open(os.path.join(out, "config.resolved.ini"), "w") as fh:
        fh.write(runcfg.dump_config(cfg))
    print(f"simulated {cfg.preset or 'custom'}: Z {observed.shape}, "
          f"T {transport.shape}, L {hidden.shape}, {int(mask.sum())} masked px -> {out}")
    return EXIT_OK


def _load_run(config_dir):
    if os.path.isdir(config_dir):
        cfg = runcfg.load_config(os.path.join(config_dir, "config.resolved.ini"))
        return cfg, config_dir
    raise UsageError(f"{config_dir!r} is not a run directory")


def cmd_invert(args):
    cfg, rundir = _load_run(args.config)
    if args.seed is not None:
        runcfg.reseed(cfg, args.seed)
    transport = ltv.read_ltv(_require_file(os.path.join(rundir, "T_gt.ltv1"))).astype(np.float64)
    observed = ltv.read_ltv(_require_file(os.path.join(rundir, "Z.ltv1"))).astype(np.float64)
    black_path = os.path.join(rundir, "black.ltv1")
    black = ltv.read_ltv(black_path).astype(np.float64) if os.path.isfile(black_path) else None
    lam = args.lam if args.lam is not None else cfg.invert_lam
    hidden, lam_used = nonblind.invert_known_transport(transport, observed, lam, black)
    out = args.outdir or rundir
    os.makedirs(out, exist_ok=True)
    dest = _no_clobber(os.path.join(out, "L_solved.ltv1"), args.force)
    ltv.write_ltv(dest, hidden)
    sheet = images.save_video_sheet(os.path.join(out, "L_solved_frames"), hidden)
    print(f"solved hidden video {hidden.shape} with lam_grad={lam_used:g} -> {dest}")
    print(f"frame sheet: {sheet}")
    gt_path = os.path.join(rundir, "L_gt.ltv1")
    if os.path.isfile(gt_path):
        gt = ltv.read_ltv(gt_path).astype(np.float64)
        print(f"psnr vs ground truth: {metrics.psnr(hidden, gt):.2f} dB")
    return EXIT_OK


def _toy_input(kind, seed):
    if kind == "curves":
        t0 = df.toy_curves_matrix(64, 64, seed=seed)
        l0 = df.toy_video_matrix(64, 64, seed=seed + 1)
        return t0 @ l0, t0, l0
    if kind == "rank1":
        rng = np.random.default_rng(seed)
        xs = np.linspace(0, 1, 64)
        u = 0.2 + np.exp(-((xs - rng.uniform(0.3, 0.7)) ** 2) / 0.02)
        v = 0.2 + np.exp(-((xs - rng.uniform(0.3, 0.7)) ** 2) / 0.05)
        return np.outer(u, v), u[:, None], v[None, :]
    raise UsageError(f"unknown toy {kind!r}; available: curves, rank1")


def cmd_factorize(args):
    cfg = runcfg.resolve_config(args.config, None, args.seed, args.set or ())
    fz = cfg.factorize
    if args.iters:
        fz.iterations = args.iters
    gt_t = gt_l = None
    if args.toy:
        z, gt_t, gt_l = _toy_input(args.toy, cfg.seed)
    elif args.input:
        z = ltv.read_ltv(_require_file(args.input)).astype(np.float64)
        if z.ndim == 3 and z.shape[-1] == 1:
            z = z[..., 0]
        if z.ndim != 2:
            raise UsageError(f"factorize expects a rank-2 matrix, got {z.shape}")
        if args.rank:
            fz.inner_dim = args.rank
    else:
        raise UsageError("factorize needs --toy or --input")
    if args.rank:
        fz.inner_dim = args.rank
    out = _prepare_outdir(args.outdir, args.force)
    result = df.dip_factorize(z, fz)
    ltv.write_ltv(os.path.join(out, "T.ltv1"), result.t[..., None])
    ltv.write_ltv(os.path.join(out, "L.ltv1"), result.l[..., None])
    trace = [{"iteration": i, "total": v} for i, v in enumerate(result.loss_trace)]
    write_loss_tsv(os.path.join(out, "loss.tsv"), trace)
    images.save_png(os.path.join(out, "T_factor"), result.t)
    images.save_png(os.path.join(out, "L_factor"), result.l)
    resid = np.abs(result.t @ result.l - z / result.scale).sum() / np.abs(z / result.scale).sum()
    print(f"factorized {z.shape} at q={fz.inner_dim or min(z.shape)}: "
          f"relative L1 residual {resid:.4f} after {fz.iterations} iterations")
    if gt_t is not None:
        score_t, _ = metrics.aligned_ncc(result.t, gt_t)
        score_l, _ = metrics.aligned_ncc(result.l, gt_l)
        print(f"aligned ncc: T {score_t:.3f}, L {score_l:.3f}")
    with open(os.path.join(out, "config.resolved.ini"), "w") as fh:
        fh.write(runcfg.dump_config(cfg))
    return EXIT_OK


def cmd_blind(args):
    cfg, rundir = _load_run(args.config)
    if args.seed is not None:
        runcfg.reseed(cfg, args.seed)
    if args.iters:
        cfg.blind.iterations = args.iters
    observed = ltv.read_ltv(_require_file(os.path.join(rundir, "Z.ltv1"))).astype(np.float64)
    out = args.outdir or rundir
    os.makedirs(out, exist_ok=True)
    for name in ("T.ltv1", "L.ltv1", "loss.tsv"):
        _no_clobber(os.path.join(out, name), args.force)

    def progress(it, terms):
        if (it + 1) % 500 == 0 or it == 0:
            print(f"  iter {it + 1:>6d}  total {terms['total']:.6g}", flush=True)

    result = blind_mod.run_blind(observed, cfg.blind,
                                 progress=progress if args.verbose else None)
    ltv.write_ltv(os.path.join(out, "T.ltv1"), result.transport)
    ltv.write_ltv(os.path.join(out, "L.ltv1"), result.hidden)
    write_loss_tsv(os.path.join(out, "loss.tsv"), result.loss_trace)
    sheet_t = images.save_transport_sheet(os.path.join(out, "T_columns"), result.transport)
    sheet_l = images.save_video_sheet(os.path.join(out, "L_frames"), result.hidden)
    first = result.loss_trace[0]["total"]
    last = result.loss_trace[-1]["total"]
    print(f"blind run finished: loss {first:.6g} -> {last:.6g} "
          f"({last / first:.3f}x) over {len(result.loss_trace)} iterations")
    print(f"sheets: {sheet_t}, {sheet_l}")
    gt_path = os.path.join(rundir, "L_gt.ltv1")
    if os.path.isfile(gt_path):
        gt = ltv.read_ltv(gt_path).astype(np.float64)
        score, tf = metrics.aligned_ncc(result.hidden, gt)
        print(f"aligned ncc vs ground truth: {score:.3f} ({tf})")
    return EXIT_OK


def cmd_baseline(args):
    cfg, rundir = _load_run(args.config)
    if args.seed is not None:
        runcfg.reseed(cfg, args.seed)
    observed = ltv.read_ltv(_require_file(os.path.join(rundir, "Z.ltv1"))).astype(np.float64)
    i, j = cfg.scene.hidden_shape
    q = i * j
    zmats = video_to_matrix(observed)
    c = zmats.shape[0]
    out = args.outdir or rundir
    os.makedirs(out, exist_ok=True)
    suffix = args.method.replace("-", "_")
    t_path = _no_clobber(os.path.join(out, f"T_{suffix}.ltv1"), args.force)
    l_path = _no_clobber(os.path.join(out, f"L_{suffix}.ltv1"), args.force)
    t_ch, l_ch = [], []
    for ch in range(c):
        z = zmats[ch]
        if args.method == "nmf":
            t_c, l_c, _ = bl.nmf_als(z, q, iterations=args.iters or 100, seed=cfg.seed)
        elif args.method == "direct":
            t_c, l_c, _ = bl.direct_entry_factorize(z, q, iterations=args.iters or 2000,
                                                    seed=cfg.seed)
        elif args.method == "levin-em":
            res = bl.levin_em(z, q, em_rounds=args.iters or 30, hidden_shape=(i, j),
                              seed=cfg.seed)
            t_c, l_c = res.t_mean, res.l
        else:
            raise UsageError(f"unknown method {args.method!r}")
        t_ch.append(t_c)
        l_ch.append(l_c)
    transport = matrix_to_transport(np.stack(t_ch), cfg.scene.observed_shape, (i, j))
    hidden = matrix_to_video(np.stack(l_ch), (i, j))
    ltv.write_ltv(t_path, transport)
    ltv.write_ltv(l_path, hidden)
    print(f"{args.method} baseline factors -> {t_path}, {l_path}")
    gt_path = os.path.join(rundir, "L_gt.ltv1")
    if os.path.isfile(gt_path):
        gt = ltv.read_ltv(gt_path).astype(np.float64)
        score, _ = metrics.aligned_ncc(hidden, gt)
        print(f"aligned ncc vs ground truth: {score:.3f}")
    return EXIT_OK


def cmd_eval(args):
    cand = ltv.read_ltv(_require_file(args.cand)).astype(np.float64)
    ref = ltv.read_ltv(_require_file(args.ref)).astype(np.float64)
    score, tf = metrics.aligned_ncc(cand, ref, radius=args.radius)
    print(f"aligned_ncc = {score:.6f}")
    print(f"transform: rot90x{tf.rotations} flip={tf.flip} shift={tf.shift} "
          f"scale={tf.scale:.6g}")
    if cand.ndim == ref.ndim and cand.shape == ref.shape:
        video = cand if cand.ndim == 4 else cand[None, ..., None] if cand.ndim == 2 \
            else cand[..., None]
        refv = ref if ref.ndim == 4 else ref[None, ..., None] if ref.ndim == 2 \
            else ref[..., None]
        aligned = tf.apply(video.reshape(video.shape[0], video.shape[1], video.shape[2], -1))
        valid = tf.valid_mask(video.shape[1:3])
        p = metrics.psnr(aligned[:, valid], refv.reshape(aligned.shape)[:, valid])
        print(f"psnr(after transform) = {p:.2f} dB")
    return EXIT_OK


def cmd_gradcheck(args):
    results = check_all(seed=args.seed or 0, cases=args.cases)
    failures = 0
    for r in results:
        status = "ok" if r.passed else "FAIL"
        print(f"{r.kind:20s} cases={r.cases}  max_rel_err={r.max_rel_err:.3e}  {status}")
        failures += not r.passed
    if failures:
        print(f"{failures} op kind(s) failed gradient checks")
        return EXIT_NUMERICAL
    print(f"all {len(results)} op kinds pass")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def build_parser():
    p = _Parser(prog="lumen", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, outdir_required=False):
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--set", action="append", metavar="SECTION.KEY=VALUE",
                        help="override a config value")
        sp.add_argument("--force", action="store_true",
                        help="allow writing into a non-empty run directory")
        sp.add_argument("-o", "--outdir", required=outdir_required, default=None)

    sp = sub.add_parser("simulate", help="fabricate a scene and its observation")
    sp.add_argument("--preset", default=None)
    sp.add_argument("-c", "--config", default=None)
    common(sp, outdir_required=True)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("invert", help="known-transport inversion of a run directory")
    sp.add_argument("-c", "--config", required=True, help="run directory")
    sp.add_argument("--lam", type=float, default=None)
    common(sp)
    sp.set_defaults(func=cmd_invert)

    sp = sub.add_parser("factorize", help="generator-based factorization of a matrix")
    sp.add_argument("-c", "--config", default=None)
    sp.add_argument("--input", default=None, help="rank-2 LTV1 matrix")
    sp.add_argument("--toy", default=None, help="bundled toy input: curves | rank1")
    sp.add_argument("--iters", type=int, default=None)
    sp.add_argument("--rank", type=int, default=None, help="inner dimension q")
    common(sp, outdir_required=True)
    sp.set_defaults(func=cmd_factorize)

    sp = sub.add_parser("blind", help="blind transport+video recovery on a run directory")
    sp.add_argument("-c", "--config", required=True, help="run directory")
    sp.add_argument("--iters", type=int, default=None)
    sp.add_argument("-v", "--verbose", action="store_true")
    common(sp)
    sp.set_defaults(func=cmd_blind)

    sp = sub.add_parser("baseline", help="classical factorization baselines")
    sp.add_argument("--method", required=True, choices=("nmf", "direct", "levin-em"))
    sp.add_argument("-c", "--config", required=True, help="run directory")
    sp.add_argument("--iters", type=int, default=None)
    common(sp)
    sp.set_defaults(func=cmd_baseline)

    sp = sub.add_parser("eval", help="alignment-aware comparison of two LTV1 files")
    sp.add_argument("--cand", required=True)
    sp.add_argument("--ref", required=True)
    sp.add_argument("--radius", type=int, default=2)
    sp.set_defaults(func=cmd_eval)

    sp = sub.add_parser("gradcheck", help="randomized gradient checks for every op kind")
    sp.add_argument("--cases", type=int, default=20)
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(func=cmd_gradcheck)
    return p


def cli_main(argv=None):
    _limit_threads()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"lumen: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except TensorError as exc:
        print(f"lumen: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as exc:
        print(f"lumen: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


def main():
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
