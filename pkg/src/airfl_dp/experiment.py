"""Orchestration: one experiment = ``trials`` independent runs of one scheme.

Every random draw comes from :func:`channel.stream` keyed by
``(seed, trial, purpose, round, device)``, so schemes and sweep points run
with common random numbers: the same data, geometry, device selection,
mini-batches, channels and (unit-variance) receiver noise.
"""

from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import astuple, dataclass, field, fields

import numpy as np

from . import aircomp, beamforming, channel, fl, privacy
from .errors import ParameterError

ROUND_COLUMNS = ("trial", "t", "train_loss", "grad_norm_sq", "clip_fraction", "mse", "lambda_t", "w_norm", "phi_t", "dp_eps")
SWEEP_COLUMNS = ("axis_value", "scheme", "final_loss_mean", "final_loss_stderr", "dp_eps")
SWEEP_AXES = ("T", "eps", "snr")


@dataclass
class RoundMetrics:
    """Quantities after the global update of round ``t`` (loss is ``f(theta^(t+1))``)."""

    t: int
    train_loss: float
    grad_norm_sq: float
    clip_fraction: float
    mse: float = 0.0
    lambda_t: float = 0.0
    w_norm: float = 0.0
    phi_t: float = 0.0
    dp_eps: float = math.inf


@dataclass
class TrialResult:
    trial: int
    rounds: list
    thetas: np.ndarray  # (T+1) x d iterates, thetas[0] is the initial model
    test_accuracy: float = float("nan")
    scaled: bool = False
    perk: bool | None = None
    combiner_norms: np.ndarray = field(default_factory=lambda: np.zeros(0))
    privacy_rounds: list = field(default_factory=list)

    @property
    def final_loss(self):
        return self.rounds[-1].train_loss

    @property
    def final_dp_eps(self):
        return self.rounds[-1].dp_eps


def worst_case_path_loss(cfg):
    return channel.path_loss(cfg.r_max, cfg.carrier_freq)


def power_for_snr_db(cfg, snr_db):
    """Transmit power giving worst-case SNR ``P Lambda_min / sigma2`` of ``snr_db``."""
    return cfg.sigma2 * 10.0 ** (snr_db / 10.0) / worst_case_path_loss(cfg)


def plan_link(cfg, trial, actives):
    """Channels, ZF solutions, allocation and combiners for the whole horizon."""
    distances = channel.sample_distances(cfg.n, cfg.r_max, channel.stream(cfg.seed, trial, "geometry"))
    chans = [
        channel.sample_channel(t, cfg, channel.stream(cfg.seed, trial, "channel", t), distances).subset(actives[t])
        for t in range(cfg.T)
    ]
    zf = [beamforming.zf_combiner(ch.H, cfg.clip, cfg.d, cfg.P, round=t) for t, ch in enumerate(chans)]
    pi = np.array([z.pi for z in zf])
    perk = None
    if cfg.scheme == "airfl-dp":
        budget = beamforming.privacy_budget_A(
            cfg.epsilon, cfg.delta, cfg.c_delta_resolved, cfg.r, cfg.clip, cfg.sigma2, cfg.complex_noise_convention
        )
        perk = beamforming.perk_condition(zf, budget).perk
        solver = beamforming.solve_allocation if cfg.allocation == "offline" else beamforming.online_allocation
        alloc = solver(pi, budget.A)
    else:
        alloc = beamforming.AllocationSolution(pi, 0.0, False, 0)
    return chans, zf, alloc, beamforming.optimal_combiners(zf, alloc), perk


def run_trial(cfg, trial):
    datasets = fl.make_synthetic_task(
        cfg.task, cfg.d, cfg.n, channel.stream(cfg.seed, trial, "data"), cfg.samples_per_device
    )
    task = datasets[0].task
    rn, c = cfg.rn, cfg.clip
    actives = [fl.sample_active_devices(cfg.n, cfg.r, channel.stream(cfg.seed, trial, "select", t)) for t in range(cfg.T)]
    air = cfg.scheme.startswith("airfl")
    result = TrialResult(trial, [], np.zeros((cfg.T + 1, cfg.d)))
    if air:
        chans, zf, alloc, combiners, result.perk = plan_link(cfg, trial, actives)
        result.scaled = alloc.scaled
        result.combiner_norms = np.array([np.linalg.norm(w) for w in combiners])
        if cfg.L is not None:
            L = cfg.L
        else:
            L = task.smoothness(np.concatenate([ds.X for ds in datasets]), np.concatenate([ds.y for ds in datasets]))

    theta = np.zeros(cfg.d)
    for t in range(cfg.T):
        updates, factors = [], []
        for i in actives[t]:
            rng = channel.stream(cfg.seed, trial, "sgd", t, int(i))
            theta_q = fl.local_sgd(theta, datasets[i], cfg.Q, cfg.eta, cfg.batch, rng)
            delta = fl.model_diff(theta, theta_q, cfg.eta)
            factors.append(fl.clip_factor(delta, c))
            updates.append(delta if cfg.scheme == "vanilla" else fl.clip(delta, c))
        U = np.array(updates)
        row = dict(clip_fraction=float(np.mean(factors)))
        if not air:
            theta = fl.aggregate_noiseless(U, theta, cfg.eta, rn, cfg.D)
        else:
            H, w = chans[t].H, combiners[t]
            s = aircomp.channel_inversion_scaling(w, H, c, cfg.d, cfg.P)
            est = aircomp.air_aggregate(
                U, s, H, w, cfg.sigma2, channel.stream(cfg.seed, trial, "noise", t), cfg.complex_noise_convention
            )
            err = est.delta_hat - U.sum(axis=0)
            theta = aircomp.global_update_air(theta, est, cfg.eta, rn, cfg.D)
            rp = privacy.round_privacy(w, H, s, cfg.eta, L, cfg.r, cfg.n)
            result.privacy_rounds.append(rp)
            row.update(mse=float(err @ err), lambda_t=est.misalignment, w_norm=rp.w_norm, phi_t=rp.phi)
        result.thetas[t + 1] = theta
        g = fl.global_grad(datasets, theta)
        result.rounds.append(RoundMetrics(t, fl.global_loss(datasets, theta), float(g @ g), **row))

    if air and cfg.sigma2 > 0:
        curve = privacy.privacy_curve(
            result.privacy_rounds,
            alpha=cfg.alpha_resolved,
            delta=cfg.delta,
            r=cfg.r,
            c=c,
            sigma2=cfg.sigma2,
            Q=cfg.Q,
            D=cfg.D,
            n=cfg.n,
            eta=cfg.eta,
            c_delta=cfg.c_delta,
            convention=cfg.complex_noise_convention,
        )
        for m, point in zip(result.rounds, curve):
            m.dp_eps = point["dp_eps"]
    if task.test is not None:
        result.test_accuracy = task.accuracy(theta, *task.test)
    return result


def _run_trial_args(args):
    return run_trial(*args)


def run_experiment(cfg, jobs=1):
    """All trials of ``cfg``; trials are independent and may run in parallel."""
    work = [(cfg, k) for k in range(cfg.trials)]
    if jobs > 1 and cfg.trials > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(_run_trial_args, work))
    return [run_trial(cfg, k) for k in range(cfg.trials)]


def mean_stderr(values):
    values = np.asarray(values, dtype=float)
    mean = float(np.mean(values))
    if values.size < 2 or not np.all(np.isfinite(values)):
        return mean, float("nan")
    return mean, float(np.std(values, ddof=1) / math.sqrt(values.size))


def apply_axis(cfg, axis, value):
    if axis == "T":
        if value != int(value) or value < 1:
            raise ParameterError(f"T must be a positive integer, got {value}")
        return cfg.replace(T=int(value))
    if axis == "eps":
        return cfg.replace(eps_tilde=float(value))
    if axis == "snr":
        return cfg.replace(P=power_for_snr_db(cfg, float(value)))
    raise ParameterError(f"unknown sweep axis {axis!r}; expected one of {SWEEP_AXES}")


@dataclass
class SweepResult:
    axis: str
    rows: list
    runs: dict  # (axis_value, scheme) -> list[TrialResult]


def sweep(cfg, axis, values, schemes=None, jobs=1):
    """Run every ``(value, scheme)`` point and summarize the final round."""
    if len(values) == 0:
        raise ParameterError("sweep needs at least one value")
    schemes = list(schemes) if schemes else [cfg.scheme]
    rows, runs = [], {}
    for value in values:
        point = apply_axis(cfg, axis, value)
        for scheme in schemes:
            results = run_experiment(point.replace(scheme=scheme), jobs=jobs)
            runs[(value, scheme)] = results
            mean, se = mean_stderr([r.final_loss for r in results])
            rows.append(
                {
                    "axis_value": value,
                    "scheme": scheme,
                    "final_loss_mean": mean,
                    "final_loss_stderr": se,
                    "dp_eps": float(np.mean([r.final_dp_eps for r in results])),
                }
            )
    return SweepResult(axis, rows, runs)


def _fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def _writer(fh):
    return csv.writer(fh, lineterminator="\n")


METRIC_NAMES = tuple(f.name for f in fields(RoundMetrics) if f.name != "t")


def emit_plotdata(results, path):
    """Write ``rounds.csv`` (one row per trial and round) and ``rounds_summary.csv``.

    The summary holds, per round, the mean and standard error over trials
    (sample standard deviation over ``sqrt(trials)``) of every metric.
    """
    if not results:
        raise ParameterError("no metrics to write")
    os.makedirs(path, exist_ok=True)
    rounds_path = os.path.join(path, "rounds.csv")
    with open(rounds_path, "w", newline="") as fh:
        out = _writer(fh)
        out.writerow(ROUND_COLUMNS)
        for res in results:
            for m in res.rounds:
                out.writerow([_fmt(res.trial), *map(_fmt, astuple(m))])
    summary_path = os.path.join(path, "rounds_summary.csv")
    with open(summary_path, "w", newline="") as fh:
        out = _writer(fh)
        out.writerow(["t", *[f"{name}_{kind}" for name in METRIC_NAMES for kind in ("mean", "stderr")]])
        for t in range(len(results[0].rounds)):
            row = [t]
            for name in METRIC_NAMES:
                row.extend(mean_stderr([getattr(res.rounds[t], name) for res in results]))
            out.writerow([_fmt(x) for x in row])
    return [rounds_path, summary_path]


def write_sweep(result, path):
    """``sweep.csv`` with final-round summaries and ``sweep_rounds.csv`` per round."""
    if not result.rows:
        raise ParameterError("empty sweep")
    os.makedirs(path, exist_ok=True)
    final_path = os.path.join(path, "sweep.csv")
    with open(final_path, "w", newline="") as fh:
        out = _writer(fh)
        out.writerow(SWEEP_COLUMNS)
        for row in result.rows:
            out.writerow([_fmt(row[k]) for k in SWEEP_COLUMNS])
    rounds_path = os.path.join(path, "sweep_rounds.csv")
    with open(rounds_path, "w", newline="") as fh:
        out = _writer(fh)
        out.writerow(["axis_value", "scheme", *ROUND_COLUMNS])
        for (value, scheme), results in result.runs.items():
            for res in results:
                for m in res.rounds:
                    out.writerow([_fmt(value), scheme, _fmt(res.trial), *map(_fmt, astuple(m))])
    return [final_path, rounds_path]
