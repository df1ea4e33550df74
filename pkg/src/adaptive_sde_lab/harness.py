"""Monte-Carlo ensemble runner, moment estimation, weak-error metric, CSV I/O.

Trajectory i of engine e draws from the generator seeded with
SeedSequence(master_seed, spawn_key=(e, i)), so discrete and SDE engines
consume independent streams and results are reproducible bit-for-bit.
Aggregation uses numpy's fixed-order pairwise summation on arrays whose
layout is independent of any scheduling, which keeps outputs byte-identical
across invocations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from adaptive_sde_lab import sde_models
from adaptive_sde_lab.landscapes import EmbeddedSaddle, Landscape, PowerLawQuadratic, QuadraticDiag
from adaptive_sde_lab.noise import (
    GaussianDiagNoise,
    NoiseModel,
    StateScaledNoise,
    StudentTNoise,
    ZeroNoise,
    child_rng,
)
from adaptive_sde_lab.optimizers import FAMILIES, OptimizerConfig, init_state, scheduler_value, step
from adaptive_sde_lab.sde_models import SdeSystem, phase_classify

DIVERGENCE_NORM = 1e12
NOISE_CHUNK = 1024  # fixed block size for pre-drawn noise; part of the determinism contract
OBSERVABLES = ("loss", "mean", "cov", "phases")


class ConfigError(ValueError):
    """Invalid experiment configuration."""


@dataclass(frozen=True)
class SdeSpec:
    family: str
    variant: str = "full"        # signsgd variants
    baseline: str = "ours"       # rmsprop/adam baselines
    dt: float | None = None      # defaults to optimizer eta
    steps: int | None = None     # defaults to run steps
    kappa: float = 1.0           # sgd speed factor


@dataclass(frozen=True)
class ExperimentSpec:
    landscape: Landscape
    noise: NoiseModel
    optimizer: OptimizerConfig | None
    sde: SdeSpec | None
    runs: int
    steps: int
    master_seed: int
    x0: np.ndarray
    observables: tuple = ("loss", "mean", "cov")
    oracles: tuple = ()   # analytic overlays to emit: stationary | loss-bound | quad-loss-curve
    experiment_id: str = "experiment"

    def __post_init__(self):
        if self.optimizer is None and self.sde is None:
            raise ConfigError("at least one of optimizer/sde must be present")
        if self.runs < 1:
            raise ConfigError("runs must be >= 1")
        if self.steps < 1:
            raise ConfigError("steps must be >= 1")
        x0 = np.asarray(self.x0, dtype=float)
        if x0.shape != (self.landscape.dim,):
            raise ConfigError(f"x0 must have length {self.landscape.dim}")
        object.__setattr__(self, "x0", x0)
        bad = [o for o in self.observables if o not in OBSERVABLES]
        if bad:
            raise ConfigError(f"unknown observables: {bad}")
        if self.optimizer is not None and self.sde is not None and self.sde.family != self.optimizer.family:
            raise ConfigError(
                f"sde.family {self.sde.family!r} does not match optimizer.family {self.optimizer.family!r}"
            )

    @property
    def eta(self) -> float:
        if self.optimizer is not None:
            return self.optimizer.eta
        if self.sde is not None and self.sde.dt is not None:
            return self.sde.dt
        raise ConfigError("no step size available")


@dataclass
class EnsembleStats:
    experiment_id: str
    engine: str                  # discrete | sde | oracle
    dt: float
    runs: int
    step: np.ndarray
    time: np.ndarray
    loss_mean: np.ndarray
    loss_std: np.ndarray
    n_alive: np.ndarray
    state_mean: np.ndarray       # (steps+1, d)
    state_cov: np.ndarray        # (steps+1, d) diagonal
    diverged_count: int = 0
    first_divergence_step: int | None = None
    full_cov: np.ndarray | None = None          # (steps+1, d, d) when d <= 8 and requested
    phase_hist: np.ndarray | None = None        # (steps+1, d, 3) counts
    phase_majority: np.ndarray | None = None    # (steps+1, d) labels
    loss_paths: np.ndarray | None = None        # (runs, steps+1) when requested

    @property
    def dim(self) -> int:
        return self.state_mean.shape[1]

    def plateau(self, window_frac: float = 0.2) -> float:
        """Mean loss over the trailing window (the asymptotic estimate)."""
        k0 = int((1.0 - window_frac) * (len(self.step) - 1))
        return float(self.loss_mean[k0:].mean())

    def plateau_stderr(self, window_frac: float = 0.2) -> float:
        k0 = int((1.0 - window_frac) * (len(self.step) - 1))
        se = self.loss_std[k0:] / np.sqrt(np.maximum(self.n_alive[k0:], 1))
        return float(se.mean())


def _alive_stats(values: np.ndarray, alive: np.ndarray):
    sub = values[alive]
    n = sub.shape[0]
    mean = sub.mean(axis=0)
    if n > 1:
        var = sub.var(axis=0, ddof=1)
    else:
        var = np.zeros_like(mean)
    return mean, var, n


class _StatsRecorder:
    def __init__(self, spec: ExperimentSpec, engine: str, dt: float, n_steps: int,
                 keep_loss_paths: bool):
        d = spec.landscape.dim
        n = n_steps + 1
        self.spec = spec
        self.engine = engine
        self.dt = dt
        self.loss_mean = np.empty(n)
        self.loss_std = np.empty(n)
        self.n_alive = np.empty(n, dtype=int)
        self.state_mean = np.empty((n, d))
        self.state_cov = np.empty((n, d))
        self.want_full_cov = "cov" in spec.observables and d <= 8
        self.full_cov = np.empty((n, d, d)) if self.want_full_cov else None
        self.want_phases = "phases" in spec.observables
        self.phase_hist = np.zeros((n, d, 3), dtype=int) if self.want_phases else None
        self.loss_paths = np.empty((spec.runs, n)) if keep_loss_paths else None

    def record(self, k: int, x: np.ndarray, alive: np.ndarray, first_div: np.ndarray):
        spec = self.spec
        if not alive.any():
            raise RuntimeError(
                f"all {spec.runs} trajectories diverged; first divergence at step {int(first_div.min())}"
            )
        with np.errstate(invalid="ignore", over="ignore"):
            loss = spec.landscape.evaluate(x)
        if self.loss_paths is not None:
            self.loss_paths[:, k] = loss
        lm, lv, n = _alive_stats(loss, alive)
        self.loss_mean[k] = lm
        self.loss_std[k] = math.sqrt(lv)
        self.n_alive[k] = n
        xm, xv, _ = _alive_stats(x, alive)
        self.state_mean[k] = xm
        self.state_cov[k] = xv
        if self.want_full_cov:
            sub = x[alive]
            if sub.shape[0] > 1:
                self.full_cov[k] = np.cov(sub.T, ddof=1).reshape(x.shape[1], x.shape[1])
            else:
                self.full_cov[k] = 0.0
        if self.want_phases:
            labels = phase_classify(x[alive], spec.landscape, spec.noise)
            for p in (1, 2, 3):
                self.phase_hist[k, :, p - 1] = (labels == p).sum(axis=0)

    def finish(self, first_div: np.ndarray, n_steps: int) -> EnsembleStats:
        diverged = first_div >= 0
        majority = None
        if self.want_phases:
            majority = np.argmax(self.phase_hist, axis=2) + 1
        return EnsembleStats(
            experiment_id=self.spec.experiment_id,
            engine=self.engine,
            dt=self.dt,
            runs=self.spec.runs,
            step=np.arange(n_steps + 1),
            time=self.dt * np.arange(n_steps + 1),
            loss_mean=self.loss_mean,
            loss_std=self.loss_std,
            n_alive=self.n_alive,
            state_mean=self.state_mean,
            state_cov=self.state_cov,
            diverged_count=int(diverged.sum()),
            first_divergence_step=int(first_div[diverged].min()) if diverged.any() else None,
            full_cov=self.full_cov,
            phase_hist=self.phase_hist,
            phase_majority=majority,
            loss_paths=self.loss_paths,
        )


def _noise_blocks(noise: NoiseModel, rngs, n: int):
    """Standard variates of shape (runs, n, d), one generator per trajectory."""
    out = np.empty((len(rngs), n, noise.dim))
    for i, rng in enumerate(rngs):
        out[i] = noise.standard_block(rng, n)
    return out


def _divergence_mask(x: np.ndarray) -> np.ndarray:
    with np.errstate(invalid="ignore", over="ignore"):
        bad = ~np.isfinite(x).all(axis=-1)
        norm = np.linalg.norm(np.where(np.isfinite(x), x, 0.0), axis=-1)
    return bad | (norm > DIVERGENCE_NORM)


def run_discrete(spec: ExperimentSpec, keep_loss_paths: bool = False) -> EnsembleStats:
    """Ensemble of exact discrete-optimizer trajectories."""
    if spec.optimizer is None:
        raise ConfigError("spec has no optimizer config")
    cfg = spec.optimizer
    runs, d = spec.runs, spec.landscape.dim
    rngs = [child_rng(spec.master_seed, 0, i) for i in range(runs)]
    state = init_state(np.tile(spec.x0, (runs, 1)))
    alive = np.ones(runs, dtype=bool)
    first_div = np.full(runs, -1, dtype=int)
    rec = _StatsRecorder(spec, "discrete", cfg.eta, spec.steps, keep_loss_paths)
    rec.record(0, state.x, alive, first_div)

    vector_noise = spec.noise.diagonal
    k = 0
    while k < spec.steps:
        block = min(NOISE_CHUNK, spec.steps - k)
        if vector_noise:
            std = _noise_blocks(spec.noise, rngs, block)
        for j in range(block):
            if vector_noise:
                z = spec.noise.scale_at(state.x) * std[:, j, :]
            else:
                z = np.stack([spec.noise.sample(state.x[i], rngs[i]) for i in range(runs)])
            with np.errstate(invalid="ignore", over="ignore"):
                g = spec.landscape.gradient(state.x) + z
            s_k = scheduler_value(cfg.scheduler_exponent, k)
            new = step(cfg, state, g, s_k)
            bad = _divergence_mask(new.x) | new.diverged
            newly = bad & alive
            first_div[newly] = k + 1
            alive &= ~bad
            keep = alive[:, None]
            state = replace(new,
                            x=np.where(keep, new.x, state.x),
                            m=np.where(keep, new.m, state.m),
                            v=np.where(keep, new.v, state.v),
                            diverged=~alive)
            k += 1
            rec.record(k, state.x, alive, first_div)
    return rec.finish(first_div, spec.steps)


def build_sde_system(spec: ExperimentSpec) -> SdeSystem:
    if spec.sde is None:
        raise ConfigError("spec has no sde table")
    s = spec.sde
    eta = spec.eta
    if s.family == "signsgd":
        return sde_models.build_signsgd_sde(spec.landscape, spec.noise, eta, s.variant)
    if s.family == "sgd":
        return sde_models.build_sgd_sde(spec.landscape, spec.noise, eta, s.kappa)
    cfg = spec.optimizer
    if s.family in ("rmsprop", "rmspropw"):
        beta = cfg.beta2 if cfg is not None else 0.999
        eps = cfg.epsilon if cfg is not None else 1e-8
        theta = cfg.theta if cfg is not None else 0.0
        return sde_models.build_rmsprop_sde(spec.landscape, spec.noise, eta, beta, eps, theta, s.baseline)
    if s.family in ("adam", "adamw"):
        b1 = cfg.beta1 if cfg is not None else 0.9
        b2 = cfg.beta2 if cfg is not None else 0.999
        eps = cfg.epsilon if cfg is not None else 1e-8
        theta = cfg.theta if cfg is not None else 0.0
        return sde_models.build_adam_sde(spec.landscape, spec.noise, eta, b1, b2, eps, theta, s.baseline)
    raise ConfigError(f"unknown sde family {s.family!r}")


def run_sde(spec: ExperimentSpec, system: SdeSystem | None = None,
            keep_loss_paths: bool = False) -> EnsembleStats:
    """Vectorized Euler-Maruyama ensemble of the spec's SDE."""
    if spec.sde is None:
        raise ConfigError("spec has no sde table")
    system = build_sde_system(spec) if system is None else system
    dt = spec.sde.dt if spec.sde.dt is not None else spec.eta
    n_steps = spec.sde.steps if spec.sde.steps is not None else spec.steps
    runs = spec.runs
    layout = system.layout
    rngs = [child_rng(spec.master_seed, 1, i) for i in range(runs)]
    x0 = np.tile(spec.x0, (runs, 1))
    v0 = system.suggested_v0(x0, dt) if (layout.has_v and system.suggested_v0 is not None) else None
    state = system.initial_state(x0, v0=v0)
    alive = np.ones(runs, dtype=bool)
    first_div = np.full(runs, -1, dtype=int)
    rec = _StatsRecorder(spec, "sde", dt, n_steps, keep_loss_paths)
    rec.record(0, state[..., layout.x], alive, first_div)

    sqrt_dt = math.sqrt(dt)
    k = 0
    while k < n_steps:
        block = min(NOISE_CHUNK, n_steps - k)
        std = np.empty((runs, block, layout.dim))
        for i, rng in enumerate(rngs):
            std[i] = rng.standard_normal((block, layout.dim))
        for j in range(block):
            t = k * dt
            with np.errstate(invalid="ignore", over="ignore"):
                nxt = state + dt * system.drift(t, state) \
                    + sqrt_dt * system.sqrt_eta * system.diffusion_diag(t, state) * std[:, j, :]
                if layout.has_v:
                    nxt[..., layout.v] = np.clip(nxt[..., layout.v], 0.0, None)
            bad = _divergence_mask(nxt[..., layout.x]) | ~np.isfinite(nxt).all(axis=-1)
            newly = bad & alive
            first_div[newly] = k + 1
            alive &= ~bad
            state = np.where(alive[:, None], nxt, state)
            k += 1
            rec.record(k, state[..., layout.x], alive, first_div)
    return rec.finish(first_div, n_steps)


def run_ensemble(spec: ExperimentSpec, keep_loss_paths: bool = False) -> dict:
    """Run every engine the spec declares; keys 'discrete' and/or 'sde'."""
    out = {}
    if spec.optimizer is not None:
        out["discrete"] = run_discrete(spec, keep_loss_paths)
    if spec.sde is not None:
        out["sde"] = run_sde(spec, keep_loss_paths=keep_loss_paths)
    return out


# -- weak-error metric -----------------------------------------------------------

@dataclass(frozen=True)
class WeakErrorReport:
    observable: str
    per_step_gap: np.ndarray
    mc_stderr: np.ndarray
    step: np.ndarray

    @property
    def max_gap(self) -> float:
        return float(self.per_step_gap.max())

    @property
    def max_gap_step(self) -> int:
        return int(self.per_step_gap.argmax())


def weak_error(stats_a: EnsembleStats, stats_b: EnsembleStats, observable: str = "loss") -> WeakErrorReport:
    """max_k |E g(x_k) - E g(X_k)| with per-step pooled Monte-Carlo stderr."""
    if len(stats_a.step) != len(stats_b.step):
        raise ValueError("step grids differ in length")
    if not math.isclose(stats_a.dt, stats_b.dt, rel_tol=1e-12):
        raise ValueError("step grids differ in spacing (dt mismatch)")
    if observable == "loss":
        ma, sa, mb, sb = stats_a.loss_mean, stats_a.loss_std, stats_b.loss_mean, stats_b.loss_std
    elif observable.startswith("mean_"):
        i = int(observable.split("_", 1)[1])
        ma, mb = stats_a.state_mean[:, i], stats_b.state_mean[:, i]
        sa, sb = np.sqrt(stats_a.state_cov[:, i]), np.sqrt(stats_b.state_cov[:, i])
    else:
        raise ValueError(f"unsupported observable {observable!r}")
    gap = np.abs(ma - mb)
    stderr = np.sqrt(sa**2 / np.maximum(stats_a.n_alive, 1) + sb**2 / np.maximum(stats_b.n_alive, 1))
    return WeakErrorReport(observable=observable, per_step_gap=gap, mc_stderr=stderr, step=stats_a.step.copy())


def bootstrap_max_gap_preference(loss_ref: np.ndarray, loss_a: np.ndarray, loss_b: np.ndarray,
                                 n_boot: int, rng: np.random.Generator) -> float:
    """Fraction of bootstrap resamples where maxGap(a, ref) < maxGap(b, ref).

    Trajectory-level resampling with a shared reference resample per
    iteration; loss arrays have shape (runs, steps+1).
    """
    def max_gap(ref_means, other):
        return np.abs(ref_means - other.mean(axis=0)).max()

    wins = 0
    for _ in range(n_boot):
        i_ref = rng.integers(0, loss_ref.shape[0], loss_ref.shape[0])
        i_a = rng.integers(0, loss_a.shape[0], loss_a.shape[0])
        i_b = rng.integers(0, loss_b.shape[0], loss_b.shape[0])
        ref_means = loss_ref[i_ref].mean(axis=0)
        if max_gap(ref_means, loss_a[i_a]) < max_gap(ref_means, loss_b[i_b]):
            wins += 1
    return wins / n_boot


# -- oracle comparison -------------------------------------------------------------

@dataclass(frozen=True)
class OracleComparison:
    kind: str
    passed: bool
    residuals: np.ndarray
    tolerance: float
    first_violation_step: int | None
    message: str


def compare_to_oracle(stats: EnsembleStats, oracle, tolerance: float, kind: str = "bound",
                      observable: str = "loss", window_frac: float = 0.2) -> OracleComparison:
    """Check ensemble statistics against a closed-form oracle curve.

    Bound oracles must dominate the statistic at every step (up to
    tolerance * |oracle|); point oracles must match the statistic averaged
    over the trailing window within relative tolerance.
    """
    if observable == "loss":
        values = stats.loss_mean
    elif observable.startswith("cov_"):
        values = stats.state_cov[:, int(observable.split("_", 1)[1])]
    elif observable.startswith("mean_"):
        values = stats.state_mean[:, int(observable.split("_", 1)[1])]
    else:
        raise ValueError(f"unsupported observable {observable!r}")
    oracle_vals = oracle(stats.time) if callable(oracle) else np.broadcast_to(np.asarray(oracle, dtype=float), values.shape)
    residuals = values - oracle_vals

    if kind == "bound":
        scale = np.abs(oracle_vals)
        bad = values > oracle_vals + tolerance * scale
        first = int(np.argmax(bad)) if bad.any() else None
        ok = not bad.any()
        msg = "within bound" if ok else f"bound violated first at step {first}"
    elif kind == "point":
        k0 = int((1.0 - window_frac) * (len(values) - 1))
        emp = float(values[k0:].mean())
        ora = float(oracle_vals[k0:].mean())
        rel = abs(emp - ora) / abs(ora) if ora != 0 else abs(emp - ora)
        ok = rel <= tolerance
        first = None if ok else k0
        msg = f"window mean {emp:.6g} vs oracle {ora:.6g} (rel err {rel:.3g})"
    else:
        raise ValueError("kind must be 'bound' or 'point'")
    return OracleComparison(kind=kind, passed=ok, residuals=residuals, tolerance=tolerance,
                            first_violation_step=first, message=msg)


# -- CSV persistence ---------------------------------------------------------------

MAX_PERSISTED_DIM = 16


def _fmt(x: float) -> str:
    return repr(float(x))


def stats_columns(dim: int) -> list:
    cols = ["experiment_id", "engine", "step", "time", "loss_mean", "loss_std", "n_alive"]
    if dim <= MAX_PERSISTED_DIM:
        cols += [f"mean_{i}" for i in range(dim)]
        cols += [f"cov_{i}{i}" for i in range(dim)]
    return cols


def write_stats_csv(stats: EnsembleStats, path):
    d = stats.dim
    cols = stats_columns(d)
    with open(path, "w", newline="") as fh:
        fh.write(",".join(cols) + "\n")
        for k in range(len(stats.step)):
            row = [stats.experiment_id, stats.engine, str(int(stats.step[k])), _fmt(stats.time[k]),
                   _fmt(stats.loss_mean[k]), _fmt(stats.loss_std[k]), str(int(stats.n_alive[k]))]
            if d <= MAX_PERSISTED_DIM:
                row += [_fmt(v) for v in stats.state_mean[k]]
                row += [_fmt(v) for v in stats.state_cov[k]]
            fh.write(",".join(row) + "\n")


def write_oracle_csv(path, experiment_id: str, time: np.ndarray, loss: np.ndarray,
                     state_mean: np.ndarray | None = None, state_cov: np.ndarray | None = None,
                     dim: int | None = None):
    """Analytic overlays in the stats schema, engine column set to 'oracle'."""
    time = np.asarray(time, dtype=float)
    loss = np.broadcast_to(np.asarray(loss, dtype=float), time.shape)
    if dim is None:
        dim = 0 if state_mean is None else np.asarray(state_mean).shape[-1]
    cols = stats_columns(dim) if dim else stats_columns(1)[:7]
    with open(path, "w", newline="") as fh:
        fh.write(",".join(cols) + "\n")
        for k in range(time.size):
            row = [experiment_id, "oracle", str(k), _fmt(time[k]), _fmt(loss[k]), _fmt(0.0), "0"]
            if dim and dim <= MAX_PERSISTED_DIM:
                mk = np.zeros(dim) if state_mean is None else np.broadcast_to(state_mean, (time.size, dim))[k]
                ck = np.zeros(dim) if state_cov is None else np.broadcast_to(state_cov, (time.size, dim))[k]
                row += [_fmt(v) for v in mk] + [_fmt(v) for v in ck]
            fh.write(",".join(row) + "\n")


def read_stats_csv(path) -> EnsembleStats:
    with open(path, newline="") as fh:
        header = fh.readline().strip().split(",")
        rows = [line.rstrip("\n").split(",") for line in fh if line.strip()]
    if not rows:
        raise ValueError(f"{path}: empty stats CSV")
    idx = {name: i for i, name in enumerate(header)}
    for required in ("experiment_id", "engine", "step", "time", "loss_mean", "loss_std", "n_alive"):
        if required not in idx:
            raise ValueError(f"{path}: missing column {required!r}")
    mean_cols = [c for c in header if c.startswith("mean_")]
    cov_cols = [c for c in header if c.startswith("cov_")]
    d = len(mean_cols)
    n = len(rows)

    def col(name, dtype=float):
        return np.array([dtype(r[idx[name]]) for r in rows])

    state_mean = np.column_stack([col(c) for c in mean_cols]) if d else np.zeros((n, 0))
    state_cov = np.column_stack([col(c) for c in cov_cols]) if d else np.zeros((n, 0))
    time = col("time")
    dt = float(time[1] - time[0]) if n > 1 else 0.0
    n_alive = col("n_alive", int)
    return EnsembleStats(
        experiment_id=rows[0][idx["experiment_id"]],
        engine=rows[0][idx["engine"]],
        dt=dt,
        runs=int(n_alive.max()) if n else 0,
        step=col("step", int),
        time=time,
        loss_mean=col("loss_mean"),
        loss_std=col("loss_std"),
        n_alive=n_alive,
        state_mean=state_mean,
        state_cov=state_cov,
    )


def write_weak_error_csv(report: WeakErrorReport, path):
    with open(path, "w", newline="") as fh:
        fh.write("observable,step,gap,mc_stderr\n")
        for k in range(len(report.step)):
            fh.write(f"{report.observable},{int(report.step[k])},{_fmt(report.per_step_gap[k])},{_fmt(report.mc_stderr[k])}\n")


def write_phases_csv(stats: EnsembleStats, path):
    """Phase-timeline schema: majority label and phase fractions per coordinate."""
    if stats.phase_hist is None:
        raise ValueError("stats carry no phase histogram; request the 'phases' observable")
    d = stats.dim
    cols = ["experiment_id", "engine", "step", "time"]
    for i in range(d):
        cols += [f"majority_{i}", f"p1_{i}", f"p2_{i}", f"p3_{i}"]
    with open(path, "w", newline="") as fh:
        fh.write(",".join(cols) + "\n")
        for k in range(len(stats.step)):
            total = max(int(stats.phase_hist[k, 0].sum()), 1)
            row = [stats.experiment_id, stats.engine, str(int(stats.step[k])), _fmt(stats.time[k])]
            for i in range(d):
                row.append(str(int(stats.phase_majority[k, i])))
                row += [_fmt(stats.phase_hist[k, i, p] / total) for p in range(3)]
            fh.write(",".join(row) + "\n")


# -- configuration loading -----------------------------------------------------------

def load_config(path) -> dict:
    import tomli

    try:
        with open(path, "rb") as fh:
            return tomli.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML in {path}: {exc}")


def build_landscape(cfg: dict) -> Landscape:
    kind = cfg.get("kind", "quadratic")
    if kind == "quadratic":
        return QuadraticDiag(cfg["lambdas"])
    if kind == "saddle":
        return EmbeddedSaddle(cfg["lambdas"], cfg.get("quartic", 1.0), cfg.get("cubic", 0.0))
    if kind == "powerlaw":
        return PowerLawQuadratic(cfg["v"], cfg["d"], cfg.get("alpha", 0.0),
                                 cfg.get("w"), cfg.get("b"))
    raise ConfigError(f"unknown landscape kind {kind!r}")


def build_noise(cfg: dict, landscape: Landscape) -> NoiseModel:
    kind = cfg.get("kind", "gaussian")
    sigma = cfg.get("sigma", 1.0)
    batch = cfg.get("batch", 1)
    if batch < 1:
        raise ConfigError("noise.batch must be >= 1")
    if kind == "gaussian":
        sig = np.atleast_1d(np.asarray(sigma, dtype=float)) / math.sqrt(batch)
        if np.all(sig == 0):
            return ZeroNoise(landscape.dim)
        return GaussianDiagNoise(sig, dim=landscape.dim)
    if kind == "student":
        scale = np.atleast_1d(np.asarray(sigma, dtype=float)) / math.sqrt(batch)
        return StudentTNoise(int(cfg.get("nu", 3)), scale, dim=landscape.dim)
    if kind in ("frozen-hessian", "loss-isotropic", "loss-hessian", "regression"):
        return StateScaledNoise(landscape, kind, float(np.atleast_1d(sigma)[0]), batch=batch,
                                anchor=cfg.get("anchor"))
    raise ConfigError(f"unknown noise kind {kind!r}")


def build_optimizer(cfg: dict) -> OptimizerConfig:
    if cfg.get("family") not in FAMILIES:
        raise ConfigError(f"unknown optimizer family {cfg.get('family')!r}")
    try:
        return OptimizerConfig(
            family=cfg["family"],
            eta=float(cfg["eta"]),
            beta1=float(cfg.get("beta1", 0.9)),
            beta2=float(cfg.get("beta2", 0.999)),
            theta=float(cfg.get("theta", 0.0)),
            epsilon=float(cfg.get("epsilon", 1e-8)),
            l2=float(cfg.get("l2", 0.0)),
            scheduler_exponent=float(cfg.get("scheduler_exponent", 0.0)),
        )
    except ValueError as exc:
        raise ConfigError(str(exc))


def spec_from_config(cfg: dict, experiment_id: str = "experiment",
                     seed: int | None = None, runs: int | None = None) -> ExperimentSpec:
    try:
        landscape = build_landscape(cfg["landscape"])
        noise = build_noise(cfg.get("noise", {}), landscape)
        optimizer = build_optimizer(cfg["optimizer"]) if "optimizer" in cfg else None
        sde = None
        if "sde" in cfg:
            s = cfg["sde"]
            sde = SdeSpec(
                family=s.get("family", optimizer.family if optimizer else "sgd"),
                variant=s.get("variant", "full"),
                baseline=s.get("baseline", "ours"),
                dt=float(s["dt"]) if "dt" in s else None,
                steps=int(s["steps"]) if "steps" in s else None,
                kappa=float(s.get("kappa", 1.0)),
            )
        run = cfg.get("run", {})
        return ExperimentSpec(
            landscape=landscape,
            noise=noise,
            optimizer=optimizer,
            sde=sde,
            runs=int(runs if runs is not None else run.get("runs", 500)),
            steps=int(run.get("steps", 1000)),
            master_seed=int(seed if seed is not None else run.get("seed", 0)),
            x0=np.asarray(run["x0"], dtype=float) if "x0" in run else np.zeros(landscape.dim),
            observables=tuple(run.get("observables", ["loss", "mean", "cov"])),
            oracles=tuple(run.get("oracles", [])),
            experiment_id=cfg.get("id", experiment_id),
        )
    except KeyError as exc:
        raise ConfigError(f"missing config key: {exc}")
