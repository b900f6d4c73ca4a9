"""Command-line entry point: ``airfl-dp <subcommand> [--config FILE] [--key value ...]``.

Every :class:`SystemConfig` field is also a flag (``--eps-tilde 0.2``);
flags override the config file.  Exit status follows the error class:
0 success, 2 configuration, 3 infeasibility, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import fields

import numpy as np

from . import aircomp, beamforming, experiment, fl, privacy, validation
from .channel import stream
from .config import SystemConfig, dump_config, load_config, parse_value
from .errors import AirFLError, ConfigError

ANALOGUE_NOTE = "desk-scale analogue on a synthetic task; not a numeric reproduction"


def _add_config_flags(parser):
    group = parser.add_argument_group("configuration")
    group.add_argument("--config", help="key = value configuration file")
    group.add_argument("--emit-config", action="store_true", help="print the resolved configuration and exit")
    for f in fields(SystemConfig):
        group.add_argument(f"--{f.name.replace('_', '-')}", dest=f"cfg_{f.name}", metavar="VALUE")
    parser.add_argument("--out", default=".", help="output directory (default: current directory)")


def _config_from_args(args):
    overrides = {}
    for f in fields(SystemConfig):
        raw = getattr(args, f"cfg_{f.name}")
        if raw is not None:
            overrides[f.name] = parse_value(f.name, raw)
    try:
        return load_config(args.config, overrides)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def _float_list(text):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"cannot parse value list {text!r}") from None


def _trial_link(cfg, trial=0):
    actives = [fl.sample_active_devices(cfg.n, cfg.r, stream(cfg.seed, trial, "select", t)) for t in range(cfg.T)]
    return experiment.plan_link(cfg.replace(scheme="airfl-dp"), trial, actives)


def cmd_simulate(cfg, args):
    results = experiment.run_experiment(cfg, jobs=args.jobs)
    paths = experiment.emit_plotdata(results, args.out)
    loss, se = experiment.mean_stderr([r.final_loss for r in results])
    print(f"# {ANALOGUE_NOTE}")
    print(f"scheme={cfg.scheme} trials={cfg.trials} final_loss={loss:.6g} stderr={se:.3g}")
    print(f"final_dp_eps={results[0].final_dp_eps:.6g} target_eps={cfg.epsilon:.6g}")
    if cfg.task != "quadratic":
        acc, _ = experiment.mean_stderr([r.test_accuracy for r in results])
        print(f"test_accuracy={acc:.4f}")
    for p in paths:
        print(f"wrote {p}")


def cmd_sweep(cfg, args):
    schemes = args.schemes.split(",") if args.schemes else None
    result = experiment.sweep(cfg, args.axis, _float_list(args.values), schemes, jobs=args.jobs)
    print(f"# {ANALOGUE_NOTE}")
    for row in result.rows:
        print(f"{args.axis}={row['axis_value']:g} {row['scheme']}: final_loss={row['final_loss_mean']:.6g} dp_eps={row['dp_eps']:.6g}")
    for p in experiment.write_sweep(result, args.out):
        print(f"wrote {p}")


def cmd_privacy_curve(cfg, args):
    chans, _, _, combiners, _ = _trial_link(cfg)
    datasets = fl.make_synthetic_task(cfg.task, cfg.d, cfg.n, stream(cfg.seed, 0, "data"), cfg.samples_per_device)
    L = cfg.L if cfg.L is not None else datasets[0].task.smoothness(
        np.concatenate([ds.X for ds in datasets]), np.concatenate([ds.y for ds in datasets])
    )
    rounds = []
    for ch, w in zip(chans, combiners):
        s = aircomp.channel_inversion_scaling(w, ch.H, cfg.clip, cfg.d, cfg.P)
        rounds.append(privacy.round_privacy(w, ch.H, s, cfg.eta, L, cfg.r, cfg.n))
    ledger = privacy.build_ledger(
        rounds,
        alpha=cfg.alpha_resolved,
        delta=cfg.delta,
        r=cfg.r,
        c=cfg.clip,
        sigma2=cfg.sigma2,
        Q=cfg.Q,
        D=cfg.D,
        n=cfg.n,
        eta=cfg.eta,
        c_delta=cfg.c_delta,
        convention=cfg.complex_noise_convention,
    )
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, "privacy_curve.csv")
    privacy.write_privacy_curve(ledger.curve, path)
    print(f"dp_eps={ledger.dp_eps:.6g} rdp_eps={ledger.rdp_eps:.6g} Phi={ledger.Phi:.6g} burn_in={ledger.burn_in_round}")
    print(f"wrote {path}")


def cmd_optimize(cfg, args):
    _, zf, alloc, _, perk = _trial_link(cfg)
    budget = beamforming.privacy_budget_A(
        cfg.epsilon, cfg.delta, cfg.c_delta_resolved, cfg.r, cfg.clip, cfg.sigma2, cfg.complex_noise_convention
    )
    os.makedirs(args.out, exist_ok=True)
    path = os.path.join(args.out, "allocation.csv")
    beamforming.write_allocation(zf, alloc, budget, path)
    print(f"perk={perk} scaled={alloc.scaled} mu_star={alloc.mu_star:.6g} A={budget.A:.6g} sum_inv_q2={alloc.sum_inv_q2:.6g}")
    print(f"wrote {path}")


def cmd_validate(cfg, args):
    results = validation.run_all(cfg.seed)
    for name, ok, detail in results:
        print(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")
    if not all(ok for _, ok, _ in results):
        return 4
    return 0


COMMANDS = {
    "simulate": cmd_simulate,
    "sweep": cmd_sweep,
    "privacy-curve": cmd_privacy_curve,
    "optimize": cmd_optimize,
    "validate": cmd_validate,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="airfl-dp", description="Differentially private over-the-air federated learning")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        _add_config_flags(p)
        if name in ("simulate", "sweep"):
            p.add_argument("--jobs", type=int, default=1, help="parallel trial workers")
        if name == "sweep":
            p.add_argument("--axis", required=True, choices=experiment.SWEEP_AXES)
            p.add_argument("--values", required=True, help="comma-separated axis values (snr in dB)")
            p.add_argument("--schemes", help="comma-separated schemes (default: the configured scheme)")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = _config_from_args(args)
        if args.emit_config:
            sys.stdout.write(dump_config(cfg))
            return 0
        return COMMANDS[args.command](cfg, args) or 0
    except AirFLError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
