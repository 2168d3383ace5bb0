"""Command-line front end: train, sweep, generate, evaluate."""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import __version__, divergence, flow, nn, oracles, runio
from .datasets import sample_target


def _flow_configs(cfg, d, mode=None):
    fc = flow.FlowConfig(
        d=d,
        mode=mode or cfg["mode"],
        lam=float(cfg["lambda"]),
        T=float(cfg["T"]),
        K=int(cfg["K"]),
        M=int(cfg["M"]),
        n_outer=int(cfg["N_iter_U"]),
        lr=float(cfg["lr"]),
        widths_potential=runio.parse_widths(cfg["widths_U"]),
        widths_discriminator=runio.parse_widths(cfg["widths_phi"]),
        seed=int(cfg["seed"]),
    )
    dc = divergence.DivergenceConfig(
        f=cfg["f"],
        L=float(cfg["L"]),
        penalty_weight=float(cfg["penalty_weight"]),
        inner_iters=int(cfg["N_phi_iter"]),
        lr=float(cfg["lr"]),
    )
    return fc, dc


def _target_sampler(cfg):
    kind = cfg["target.kind"]
    params = runio.parse_target_params(cfg["target.params"])
    probe = sample_target(kind, 1, 0, **params)
    d = probe.shape[1]

    def sampler(n, seed):
        return sample_target(kind, n, seed, **params)

    return sampler, d, kind, params


def _run_one(cfg, out_dir, mode=None):
    sampler, d, _, _ = _target_sampler(cfg)
    fc, dc = _flow_configs(cfg, d, mode=mode)
    runio.ensure_dir(out_dir)
    resolved = dict(cfg)
    resolved["mode"] = fc.mode
    resolved["out_dir"] = out_dir
    runio.write_manifest(os.path.join(out_dir, "manifest.txt"), resolved, __version__)
    result = flow.train(sampler, fc, dc)
    runio.write_metrics(os.path.join(out_dir, "metrics.txt"), result.history)
    nn.save_checkpoint(os.path.join(out_dir, "potential.ckpt"), result.potential)
    nn.save_checkpoint(os.path.join(out_dir, "discriminator.ckpt"), result.discriminator)
    return result


def cmd_train(args):
    try:
        cfg = runio.resolve_config(args.config, args.override)
    except runio.ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 1
    result = _run_one(cfg, cfg["out_dir"])
    if result.blown_up:
        print(f"terminal cost blew up: mode={cfg['mode']} "
              f"iteration={result.stop_iteration}", file=sys.stderr)
        return 2
    print(f"run complete: {len(result.history)} iterations, "
          f"final dual estimate {result.history[-1].dual_estimate:.4g}")
    return 0


def cmd_sweep(args):
    try:
        cfg = runio.resolve_config(args.config, args.override)
    except runio.ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 1
    out_root = runio.ensure_dir(cfg["out_dir"])
    rows = []
    run_dirs = []
    for mode in flow.MODES:
        run_dir = os.path.join(out_root, mode)
        result = _run_one(cfg, run_dir, mode=mode)
        run_dirs.append(run_dir)
        tail = result.history[-min(50, len(result.history)):]
        rows.append((
            mode,
            "blown_up" if result.blown_up else "completed",
            len(result.history),
            float(np.mean([r.dual_estimate for r in tail])),
            float(np.mean([r.kinetic_energy for r in tail])),
            float(np.mean([r.hj_residual for r in tail])),
            float(np.mean([r.terminal_error for r in tail])),
        ))
    with open(os.path.join(out_root, "sweep_manifest.txt"), "w") as fh:
        fh.write("# mode run_dir\n")
        for mode, run_dir in zip(flow.MODES, run_dirs):
            fh.write(f"{mode} {run_dir}\n")
    table = ["mode status iters dual_estimate kinetic_energy hj_residual terminal_error"]
    for row in rows:
        table.append(f"{row[0]} {row[1]} {row[2]} {row[3]:.4g} {row[4]:.4g} "
                     f"{row[5]:.4g} {row[6]:.4g}")
    report = "\n".join(table)
    with open(os.path.join(out_root, "sweep_table.txt"), "w") as fh:
        fh.write(report + "\n")
    print(report)
    return 0


def cmd_generate(args):
    if not os.path.exists(args.checkpoint):
        print(f"no such checkpoint: {args.checkpoint}", file=sys.stderr)
        return 1
    manifest_path = args.manifest or os.path.join(
        os.path.dirname(args.checkpoint), "manifest.txt")
    if not os.path.exists(manifest_path):
        print(f"no such manifest: {manifest_path}", file=sys.stderr)
        return 1
    manifest = runio.read_manifest(manifest_path)
    params = nn.load_checkpoint(args.checkpoint)
    cfg = flow.FlowConfig(d=params.spec.in_dim,
                          mode=manifest.get("mode", "w1w2"),
                          lam=float(manifest["lambda"]),
                          T=float(manifest["T"]),
                          K=int(manifest["K"]))
    if args.n > 0:
        samples = flow.generate(params, args.n, args.K_gen, args.seed, cfg)
    else:
        samples = np.zeros((0, params.spec.in_dim))
    runio.write_samples(args.out, samples)
    print(f"wrote {args.n} samples to {args.out}")
    return 0


def cmd_evaluate(args):
    try:
        cfg = runio.resolve_config(args.config, args.override)
    except runio.ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 1
    samples = runio.read_samples(args.samples)
    sampler, d, kind, params = _target_sampler(cfg)
    if samples.shape[1] != d:
        print(f"dimension mismatch: samples have d={samples.shape[1]}, "
              f"target has d={d}", file=sys.stderr)
        return 1
    rng = np.random.default_rng(int(cfg["seed"]))
    n = min(len(samples), 256)
    idx = rng.choice(len(samples), size=n, replace=False)
    sub = samples[idx]
    target = sampler(n, int(cfg["seed"]) + 1)
    w1 = oracles.empirical_w1_exact(sub, target)
    baseline = oracles.empirical_w1_exact(
        sampler(n, int(cfg["seed"]) + 2), sampler(n, int(cfg["seed"]) + 3))
    big_target = sampler(max(4096, n), int(cfg["seed"]) + 4)
    mean_err = float(np.linalg.norm(samples.mean(axis=0) - big_target.mean(axis=0)))
    cov_err = float(np.max(np.abs(np.cov(samples.T) - np.cov(big_target.T))))
    lines = [
        f"samples = {args.samples}",
        f"n = {len(samples)} d = {samples.shape[1]}",
        f"w1_exact = {w1:.6g}",
        f"w1_self_baseline = {baseline:.6g}",
        f"mean_error = {mean_err:.6g}",
        f"cov_max_error = {cov_err:.6g}",
    ]
    if kind == "circle":
        r = float(params.get("r", 1.0))
        radii = np.linalg.norm(samples[:, :2], axis=1)
        lines.append(f"manifold_residual = {float(np.mean(np.abs(radii - r))):.6g}")
    report = "\n".join(lines)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(report + "\n")
    print(report)
    return 0


def build_parser():
    parser = argparse.ArgumentParser(prog="pgflow",
                                     description="Train and inspect proximal generative flows")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="run one training configuration")
    p_train.add_argument("config")
    p_train.add_argument("--override", action="append", default=[],
                         metavar="KEY=VALUE")
    p_train.set_defaults(func=cmd_train)

    p_sweep = sub.add_parser("sweep", help="run all four regularization modes")
    p_sweep.add_argument("config")
    p_sweep.add_argument("--override", action="append", default=[],
                         metavar="KEY=VALUE")
    p_sweep.set_defaults(func=cmd_sweep)

    p_gen = sub.add_parser("generate", help="sample from a trained checkpoint")
    p_gen.add_argument("checkpoint")
    p_gen.add_argument("--n", type=int, required=True)
    p_gen.add_argument("--K-gen", dest="K_gen", type=int, default=5)
    p_gen.add_argument("--seed", type=int, default=0)
    p_gen.add_argument("--out", required=True)
    p_gen.add_argument("--manifest", default=None)
    p_gen.set_defaults(func=cmd_generate)

    p_eval = sub.add_parser("evaluate", help="compare a sample file to a target")
    p_eval.add_argument("samples")
    p_eval.add_argument("config")
    p_eval.add_argument("--override", action="append", default=[],
                        metavar="KEY=VALUE")
    p_eval.add_argument("--out", default=None)
    p_eval.set_defaults(func=cmd_evaluate)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
