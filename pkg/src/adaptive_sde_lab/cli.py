"""Command-line surface: simulate / compare / phases / stationary / scaling /
schedulers / sweep-sigma / oracle.

Every subcommand reads one TOML config (see README for the schema), writes
CSV files into the output directory, and prints a short summary.  The
ADAPTIVE_SDE_LAB_OUT environment variable overrides --out.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from adaptive_sde_lab import analytics
from adaptive_sde_lab.harness import (
    ConfigError,
    ExperimentSpec,
    build_noise,
    compare_to_oracle,
    load_config,
    run_discrete,
    run_ensemble,
    run_sde,
    spec_from_config,
    weak_error,
    write_oracle_csv,
    write_phases_csv,
    write_stats_csv,
    write_weak_error_csv,
)
from adaptive_sde_lab.optimizers import ScalingRule, apply_scaling


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="adaptive-sde-lab", description=__doc__)
    sub = parser.add_subparsers(dest="command")
    commands = {
        "simulate": "run one engine (discrete if configured, else SDE)",
        "compare": "run optimizer and SDE engines and report the weak error",
        "phases": "phase timeline plus per-phase loss envelopes",
        "stationary": "long-run moments versus the stationary oracles",
        "scaling": "baseline versus rescaled configs under a scaling rule",
        "schedulers": "power-law scheduler sweep with convergence envelopes",
        "sweep-sigma": "noise-scale sweep of the asymptotic loss",
        "oracle": "print closed-form predictions for the config",
    }
    for name, help_text in commands.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="TOML experiment config")
        p.add_argument("--seed", type=int, default=None, help="master seed override")
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--runs", type=int, default=None, help="ensemble size override")
        p.add_argument("--format", choices=["csv"], default="csv")
        if name == "compare":
            p.add_argument("--against-baseline", action="store_true",
                           help="also run the Malladi-baseline SDE and compare both")
        if name == "scaling":
            p.add_argument("--rule", choices=["ours", "malladi", "linear-sgd"], default=None)
            p.add_argument("--delta", type=float, default=None)
        if name == "schedulers":
            p.add_argument("--exponents", type=float, nargs="*", default=None)
        if name == "sweep-sigma":
            p.add_argument("--sigmas", type=float, nargs="*", default=None)
    return parser


def _outdir(args) -> Path:
    out = os.environ.get("ADAPTIVE_SDE_LAB_OUT", args.out)
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _spec(args) -> ExperimentSpec:
    cfg = load_config(args.config)
    return spec_from_config(cfg, experiment_id=Path(args.config).stem,
                            seed=args.seed, runs=args.runs)


def _stationary_oracle(spec: ExperimentSpec):
    """Stationary moments for the configured family on a diagonal quadratic."""
    lam = spec.landscape.lambdas
    sig = spec.noise.sigma_diag(spec.x0)
    fam = spec.optimizer.family
    eta = spec.optimizer.eta
    if fam == "sgd":
        return analytics.sgd_stationary(lam, sig, eta, spec.x0)
    if fam == "signsgd":
        return analytics.signsgd_stationary(lam, sig, eta, spec.x0)
    if fam == "adam" and spec.optimizer.l2 > 0:
        return analytics.adaptive_stationary("adamw", lam + spec.optimizer.l2, sig, eta,
                                             theta=0.0, x0=spec.x0)
    return analytics.adaptive_stationary(fam, lam, sig, eta, theta=spec.optimizer.theta, x0=spec.x0)


def _asymptotic_bound(spec: ExperimentSpec, kappa=1.0, delta=1.0, xi=1.0) -> float:
    consts = spec.landscape.constants()
    mu, smoothness, l_tau = consts.require("mu", "smoothness", "trace_bound")
    sig = float(np.max(spec.noise.sigma_diag(spec.x0)))
    cfg = spec.optimizer
    if cfg.family == "sgd":
        return analytics.sgd_loss_bound(mu, l_tau, sig, cfg.eta, 0.0, kappa, delta).floor
    if cfg.family == "signsgd":
        return analytics.signsgd_loss_bound(3, mu, l_tau, sig, cfg.eta, 0.0).floor
    if cfg.family == "adam" and cfg.l2 > 0:
        return analytics.adaptive_asymptotic_loss("adam-l2", mu, smoothness, l_tau, sig,
                                                  cfg.eta, theta=cfg.l2)
    return analytics.adaptive_asymptotic_loss(cfg.family, mu, smoothness, l_tau, sig, cfg.eta,
                                              theta=cfg.theta, kappa=kappa, delta=delta, xi=xi)


def _emit_oracles(spec, stats, out) -> None:
    for name in spec.oracles:
        path = out / f"{spec.experiment_id}_oracle_{name.replace('-', '_')}.csv"
        if name == "stationary":
            oracle = _stationary_oracle(spec)
            write_oracle_csv(path, spec.experiment_id, stats.time,
                             oracle.asymptotic_loss(spec.landscape.lambdas),
                             state_mean=oracle.mean, state_cov=oracle.cov,
                             dim=spec.landscape.dim)
        elif name == "loss-bound":
            consts = spec.landscape.constants()
            mu, l_tau = consts.require("mu", "trace_bound")
            sig = float(np.max(spec.noise.sigma_diag(spec.x0)))
            s0 = float(spec.landscape.evaluate(spec.x0) - spec.landscape.minimum_value())
            if spec.optimizer.family == "sgd":
                curve = analytics.sgd_loss_bound(mu, l_tau, sig, spec.eta, s0)
            else:
                curve = analytics.signsgd_loss_bound(3, mu, l_tau, sig, spec.eta, s0,
                                                     d=spec.landscape.dim)
            write_oracle_csv(path, spec.experiment_id, stats.time, curve(stats.time))
        elif name == "quad-loss-curve":
            sig = spec.noise.sigma_diag(spec.x0)
            values = analytics.signsgd_quad_loss_curve(spec.landscape.lambdas, sig, spec.eta,
                                                       spec.x0, stats.time)
            write_oracle_csv(path, spec.experiment_id, stats.time, values)
        else:
            raise ConfigError(f"unknown oracle overlay {name!r}")
        print(f"oracle {name} -> {path}")


def cmd_simulate(args) -> int:
    spec = _spec(args)
    out = _outdir(args)
    if spec.optimizer is not None:
        stats = run_discrete(spec)
    else:
        stats = run_sde(spec)
    path = out / f"{spec.experiment_id}_{stats.engine}.csv"
    write_stats_csv(stats, path)
    _emit_oracles(spec, stats, out)
    print(f"{stats.engine}: {len(stats.step)} steps, final loss mean {stats.loss_mean[-1]:.6g}, "
          f"diverged {stats.diverged_count}/{stats.runs} -> {path}")
    return 0


def cmd_compare(args) -> int:
    spec = _spec(args)
    if spec.optimizer is None or spec.sde is None:
        raise ConfigError("compare requires both [optimizer] and [sde] tables")
    out = _outdir(args)
    results = run_ensemble(spec)
    discrete, sde = results["discrete"], results["sde"]
    write_stats_csv(discrete, out / f"{spec.experiment_id}_discrete.csv")
    write_stats_csv(sde, out / f"{spec.experiment_id}_sde.csv")
    report = weak_error(discrete, sde)
    write_weak_error_csv(report, out / f"{spec.experiment_id}_weak_error.csv")
    print(f"weak error (loss): max gap {report.max_gap:.6g} at step {report.max_gap_step}")
    if getattr(args, "against_baseline", False):
        base_spec = replace(spec, sde=replace(spec.sde, baseline="malladi"))
        base = run_sde(base_spec)
        write_stats_csv(base, out / f"{spec.experiment_id}_sde_malladi.csv")
        base_report = weak_error(discrete, base)
        write_weak_error_csv(base_report, out / f"{spec.experiment_id}_weak_error_malladi.csv")
        print(f"baseline weak error (loss): max gap {base_report.max_gap:.6g}; "
              f"ours {'<' if report.max_gap < base_report.max_gap else '>='} malladi")
    return 0


def cmd_phases(args) -> int:
    spec = _spec(args)
    if "phases" not in spec.observables:
        spec = replace(spec, observables=spec.observables + ("phases",))
    out = _outdir(args)
    stats = run_sde(spec) if spec.optimizer is None else run_discrete(spec)
    write_stats_csv(stats, out / f"{spec.experiment_id}_{stats.engine}.csv")
    write_phases_csv(stats, out / f"{spec.experiment_id}_phases.csv")
    consts = spec.landscape.constants()
    if consts.mu is not None:
        mu, l_tau = consts.require("mu", "trace_bound")
        sig = float(np.max(spec.noise.sigma_diag(spec.x0)))
        s0 = float(spec.landscape.evaluate(spec.x0) - spec.landscape.minimum_value())
        for phase in (1, 2, 3):
            curve = analytics.signsgd_loss_bound(phase, mu, l_tau, sig, spec.eta, s0,
                                                 d=spec.landscape.dim)
            write_oracle_csv(out / f"{spec.experiment_id}_phase{phase}_envelope.csv",
                             spec.experiment_id, stats.time, curve(stats.time))
    print(f"phase timeline written; initial majority {stats.phase_majority[0].tolist()}, "
          f"final {stats.phase_majority[-1].tolist()}")
    return 0


def cmd_stationary(args) -> int:
    spec = _spec(args)
    if spec.optimizer is None:
        raise ConfigError("stationary requires an [optimizer] table")
    out = _outdir(args)
    stats = run_discrete(spec)
    write_stats_csv(stats, out / f"{spec.experiment_id}_discrete.csv")
    oracle = _stationary_oracle(spec)
    write_oracle_csv(out / f"{spec.experiment_id}_stationary_oracle.csv", spec.experiment_id,
                     stats.time, oracle.asymptotic_loss(spec.landscape.lambdas),
                     state_mean=oracle.mean, state_cov=oracle.cov, dim=spec.landscape.dim)
    code = 0
    for i in range(spec.landscape.dim):
        cmp = compare_to_oracle(stats, float(oracle.cov[i]), tolerance=0.10, kind="point",
                                observable=f"cov_{i}")
        status = "PASS" if cmp.passed else "FAIL"
        print(f"cov_{i}{i}: {status} {cmp.message}")
        code |= 0 if cmp.passed else 1
    return code


def cmd_scaling(args) -> int:
    spec = _spec(args)
    if spec.optimizer is None:
        raise ConfigError("scaling requires an [optimizer] table")
    out = _outdir(args)
    cfg = load_config(args.config)
    scaling_cfg = cfg.get("scaling", {})
    rule_name = args.rule if args.rule is not None else scaling_cfg.get("rule", "ours")
    delta = args.delta if args.delta is not None else float(scaling_cfg.get("delta", 4.0))
    rule = ScalingRule(rule_name, delta)

    def rescaled_spec(rescale_theta: bool, tag: str) -> ExperimentSpec:
        new_opt = apply_scaling(spec.optimizer, rule, rescale_theta=rescale_theta)
        noise_cfg = dict(cfg.get("noise", {}))
        noise_cfg["batch"] = noise_cfg.get("batch", 1) * delta
        new_noise = build_noise(noise_cfg, spec.landscape)
        return replace(spec, optimizer=new_opt, noise=new_noise,
                       experiment_id=f"{spec.experiment_id}_{tag}")

    runs = [("baseline", spec)]
    runs.append(("rescaled", rescaled_spec(True, "rescaled")))
    if rule.rule == "ours" and spec.optimizer.theta > 0:
        runs.append(("theta_unrescaled", rescaled_spec(False, "theta_unrescaled")))
    plateaus = {}
    for tag, s in runs:
        stats = run_discrete(s)
        write_stats_csv(stats, out / f"{s.experiment_id}_discrete.csv")
        plateaus[tag] = stats.plateau()
        print(f"{tag}: plateau {plateaus[tag]:.6g}")
    if "rescaled" in plateaus:
        rel = abs(plateaus["rescaled"] - plateaus["baseline"]) / plateaus["baseline"]
        print(f"rescaled vs baseline: rel gap {rel:.3f}")
    return 0


def cmd_schedulers(args) -> int:
    spec = _spec(args)
    if spec.optimizer is None or spec.optimizer.family != "signsgd":
        raise ConfigError("schedulers requires a signsgd [optimizer] table")
    out = _outdir(args)
    cfg = load_config(args.config)
    exponents = args.exponents or cfg.get("schedulers", {}).get("exponents", [0.1, 0.5, 1.5])
    consts = spec.landscape.constants()
    mu, l_tau = consts.require("mu", "trace_bound")
    sig = float(np.max(spec.noise.sigma_diag(spec.x0)))
    for vartheta in exponents:
        s = replace(spec, optimizer=replace(spec.optimizer, scheduler_exponent=vartheta),
                    experiment_id=f"{spec.experiment_id}_vartheta{vartheta:g}")
        stats = run_discrete(s)
        write_stats_csv(stats, out / f"{s.experiment_id}_discrete.csv")
        verdict = analytics.scheduler_verdict(vartheta, mu, l_tau, sig, eta=spec.optimizer.eta)
        write_oracle_csv(out / f"{s.experiment_id}_envelope.csv", s.experiment_id,
                         stats.time, verdict.envelope(stats.step))
        print(f"vartheta={vartheta:g}: {'converges' if verdict.converges else 'violates-condition'} "
              f"({verdict.reason}); final loss {stats.loss_mean[-1]:.6g}")
    return 0


def cmd_sweep_sigma(args) -> int:
    spec = _spec(args)
    if spec.optimizer is None:
        raise ConfigError("sweep-sigma requires an [optimizer] table")
    out = _outdir(args)
    cfg = load_config(args.config)
    sigmas = args.sigmas or cfg.get("sweep", {}).get("sigmas", [0.01, 0.1, 1.0, 10.0, 100.0])
    plateaus, stderrs, envelopes = [], [], []
    for j, sigma in enumerate(sigmas):
        noise_cfg = dict(cfg.get("noise", {}))
        noise_cfg["sigma"] = sigma
        new_noise = build_noise(noise_cfg, spec.landscape)
        s = replace(spec, noise=new_noise, experiment_id=f"{spec.experiment_id}_sigma{j}")
        oracle = _stationary_oracle(replace(s, x0=spec.x0))
        s = replace(s, x0=np.sqrt(oracle.cov))  # start at the stationary scale
        stats = run_discrete(s)
        plateaus.append(stats.plateau())
        stderrs.append(stats.plateau_stderr())
        envelopes.append(_asymptotic_bound(s))
        print(f"sigma={sigma:g}: plateau {plateaus[-1]:.6g} envelope {envelopes[-1]:.6g}")
    slope = float(np.polyfit(np.log(sigmas), np.log(plateaus), 1)[0])
    print(f"log-log slope: {slope:.3f}")
    summary_path = out / f"{spec.experiment_id}_sigma_sweep.csv"
    # summary reuses the stats schema with time = sigma (documented in README)
    with open(summary_path, "w", newline="") as fh:
        fh.write("experiment_id,engine,step,time,loss_mean,loss_std,n_alive\n")
        for j, sigma in enumerate(sigmas):
            fh.write(f"{spec.experiment_id},discrete,{j},{sigma!r},{plateaus[j]!r},{stderrs[j]!r},{spec.runs}\n")
        for j, sigma in enumerate(sigmas):
            fh.write(f"{spec.experiment_id},oracle,{j},{sigma!r},{envelopes[j]!r},0.0,0\n")
    print(f"-> {summary_path}")
    return 0


def cmd_oracle(args) -> int:
    spec = _spec(args)
    if spec.optimizer is None:
        raise ConfigError("oracle requires an [optimizer] table")
    lam = spec.landscape.lambdas
    oracle = _stationary_oracle(spec)
    print(f"family = {spec.optimizer.family}")
    for i in range(spec.landscape.dim):
        print(f"stationary cov_{i}{i} = {oracle.cov[i]!r}")
    print(f"stationary loss = {oracle.asymptotic_loss(lam)!r}")
    consts = spec.landscape.constants()
    if consts.mu is not None:
        try:
            print(f"asymptotic loss bound = {_asymptotic_bound(spec)!r}")
        except ValueError:
            pass
    return 0


_COMMANDS = {
    "simulate": cmd_simulate,
    "compare": cmd_compare,
    "phases": cmd_phases,
    "stationary": cmd_stationary,
    "scaling": cmd_scaling,
    "schedulers": cmd_schedulers,
    "sweep-sigma": cmd_sweep_sigma,
    "oracle": cmd_oracle,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise ConfigError("missing subcommand (see --help)")
        return _COMMANDS[args.command](args)
    except (ConfigError, ValueError, RuntimeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
