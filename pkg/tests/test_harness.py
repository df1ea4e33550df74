import math
from dataclasses import replace

import numpy as np
import pytest

from adaptive_sde_lab.harness import (
    ConfigError,
    ExperimentSpec,
    SdeSpec,
    build_noise,
    compare_to_oracle,
    read_stats_csv,
    run_discrete,
    run_ensemble,
    run_sde,
    spec_from_config,
    weak_error,
    write_stats_csv,
)
from adaptive_sde_lab.landscapes import QuadraticDiag
from adaptive_sde_lab.noise import GaussianDiagNoise, StudentTNoise, ZeroNoise
from adaptive_sde_lab.optimizers import OptimizerConfig


def make_spec(**kw):
    base = dict(
        landscape=QuadraticDiag([1.0, 2.0]),
        noise=GaussianDiagNoise([0.1, 0.1]),
        optimizer=OptimizerConfig("signsgd", eta=1e-3),
        sde=None,
        runs=100,
        steps=200,
        master_seed=0,
        x0=np.array([0.1, 0.1]),
    )
    base.update(kw)
    return ExperimentSpec(**base)


def test_noiseless_sgd_geometric_decay_exact():
    spec = make_spec(
        landscape=QuadraticDiag([1.0]),
        noise=ZeroNoise(1),
        optimizer=OptimizerConfig("sgd", eta=0.1),
        runs=1,
        steps=10,
        x0=np.array([0.7]),
    )
    stats = run_discrete(spec)
    ks = np.arange(11)
    np.testing.assert_allclose(stats.loss_mean, 0.5 * 0.9 ** (2 * ks) * 0.49, rtol=1e-13)
    # bit-exact against the float recursion in the same operation order
    x, expected = 0.7, []
    for _ in range(11):
        expected.append(0.5 * (1.0 * x**2))
        x = x - 0.1 * (1.0 * x)
    np.testing.assert_array_equal(stats.loss_mean, expected)
    np.testing.assert_array_equal(stats.n_alive, 1)


def test_determinism_bit_identical_csv(tmp_path):
    spec = make_spec(sde=SdeSpec(family="signsgd", variant="erf"), runs=40, steps=50)
    p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
    for p in (p1, p2):
        res = run_ensemble(spec)
        write_stats_csv(res["discrete"], p)
    assert p1.read_bytes() == p2.read_bytes()


def test_engines_use_independent_streams():
    spec = make_spec(sde=SdeSpec(family="signsgd", variant="erf"), runs=30, steps=30)
    res = run_ensemble(spec)
    assert not np.allclose(res["discrete"].loss_mean[1:], res["sde"].loss_mean[1:])


def test_csv_round_trip_exact(tmp_path):
    spec = make_spec(runs=25, steps=40)
    stats = run_discrete(spec)
    path = tmp_path / "stats.csv"
    write_stats_csv(stats, path)
    back = read_stats_csv(path)
    for name in ("step", "time", "loss_mean", "loss_std", "n_alive", "state_mean", "state_cov"):
        np.testing.assert_array_equal(getattr(back, name), getattr(stats, name))
    assert back.experiment_id == stats.experiment_id and back.engine == stats.engine


def test_loss_stderr_shrinks_like_inverse_sqrt_runs():
    stderrs = []
    for runs in (125, 500, 2000):
        spec = make_spec(runs=runs, steps=300, master_seed=3)
        stats = run_discrete(spec)
        stderrs.append(stats.loss_std[100:] .mean() / math.sqrt(runs))
    slope = np.polyfit(np.log([125, 500, 2000]), np.log(stderrs), 1)[0]
    assert slope == pytest.approx(-0.5, abs=0.1)


def test_family_mismatch_rejected_at_validation():
    with pytest.raises(ConfigError, match="does not match"):
        make_spec(sde=SdeSpec(family="adam"))


def test_all_diverged_raises_with_first_step():
    # eta * lambda > 2 makes the quadratic map expanding for every trajectory
    spec = make_spec(
        landscape=QuadraticDiag([1.0]),
        noise=GaussianDiagNoise([0.1], dim=1),
        optimizer=OptimizerConfig("sgd", eta=3.0),
        runs=8,
        steps=500,
        x0=np.array([1.0]),
    )
    with pytest.raises(RuntimeError, match="first divergence at step"):
        run_discrete(spec)


def test_partial_divergence_is_counted_not_fatal():
    # Cauchy kicks past the quartic stability radius |x| > sqrt(2 / (eta q))
    # blow individual SGD trajectories up to non-finite values while most
    # survive; diverged ones are excluded from moments but counted
    from adaptive_sde_lab.landscapes import EmbeddedSaddle

    spec = make_spec(
        landscape=EmbeddedSaddle([1.0, 1.0], quartic=1.0, cubic=0.0),
        noise=StudentTNoise(1, [0.5, 0.5]),
        optimizer=OptimizerConfig("sgd", eta=0.1),
        runs=50,
        steps=30,
        x0=np.array([0.0, 0.0]),
        master_seed=12,
    )
    stats = run_discrete(spec)
    assert 0 < stats.diverged_count < 50
    assert stats.first_divergence_step is not None
    assert stats.n_alive[-1] == 50 - stats.diverged_count
    assert np.all(np.isfinite(stats.loss_mean))


def test_weak_error_self_comparison_is_zero():
    spec = make_spec(runs=50, steps=60)
    stats = run_discrete(spec)
    rep = weak_error(stats, stats)
    assert rep.max_gap == 0.0


def test_weak_error_grid_mismatch_rejected():
    a = run_discrete(make_spec(runs=10, steps=30))
    b = run_discrete(make_spec(runs=10, steps=40))
    with pytest.raises(ValueError, match="grids"):
        weak_error(a, b)


def test_weak_error_calibration_matching_laws():
    # discrete SGD on a quadratic and its SDE integrated at dt = eta share
    # the same Gaussian law step by step, so the gap is pure Monte Carlo
    spec = make_spec(
        optimizer=OptimizerConfig("sgd", eta=1e-3),
        noise=GaussianDiagNoise([0.1, 0.1]),
        sde=SdeSpec(family="sgd"),
        runs=500,
        steps=3000,
        x0=np.array([0.05, 0.05]),
        master_seed=11,
    )
    res = run_ensemble(spec)
    rep = weak_error(res["discrete"], res["sde"])
    assert np.all(rep.per_step_gap <= 4.0 * np.maximum(rep.mc_stderr, 1e-300))


def test_weak_error_monotone_in_eta():
    # weak error of the loss observable between SignSGD and its erf SDE,
    # averaged over five 500-path replicate ensembles per eta (the replicate
    # mean tames the heavy right tail of max_k over Monte-Carlo noise)
    horizon = 1.2
    means = []
    for eta in (4e-3, 2e-3, 1e-3):
        gaps = []
        for seed in range(101, 106):
            spec = make_spec(
                optimizer=OptimizerConfig("signsgd", eta=eta),
                sde=SdeSpec(family="signsgd", variant="erf"),
                runs=500,
                steps=int(round(horizon / eta)),
                master_seed=seed,
                x0=np.array([0.3, 0.25]),
            )
            res = run_ensemble(spec)
            gaps.append(weak_error(res["discrete"], res["sde"]).max_gap)
        means.append(np.mean(gaps))
    assert means[0] > means[1] > means[2]


def test_compare_to_oracle_pass_and_fail_paths():
    spec = make_spec(runs=60, steps=100)
    stats = run_discrete(spec)
    same = compare_to_oracle(stats, stats.loss_mean, tolerance=0.0, kind="point")
    assert same.passed and np.all(same.residuals == 0.0)
    below = compare_to_oracle(stats, stats.loss_mean * 0.5, tolerance=0.1, kind="bound")
    assert not below.passed
    assert below.first_violation_step is not None
    above = compare_to_oracle(stats, stats.loss_mean * 2.0 + 1e-12, tolerance=0.0, kind="bound")
    assert above.passed


def test_phase_observable_recorded():
    spec = make_spec(observables=("loss", "mean", "cov", "phases"), runs=30, steps=50,
                     x0=np.array([2.0, 1.5]))
    stats = run_discrete(spec)
    assert stats.phase_hist is not None
    assert stats.phase_majority[0].tolist() == [1, 1]  # start deep in phase 1
    assert stats.phase_hist.sum(axis=2).max() == 30


def test_spec_from_config_round_trip(tmp_path):
    cfg_text = """
id = "demo"
[landscape]
kind = "quadratic"
lambdas = [1.0, 2.0]
[noise]
kind = "gaussian"
sigma = 0.1
[optimizer]
family = "signsgd"
eta = 1e-3
[sde]
family = "signsgd"
variant = "erf"
[run]
runs = 10
steps = 20
seed = 5
x0 = [0.1, 0.1]
"""
    path = tmp_path / "demo.toml"
    path.write_text(cfg_text)
    from adaptive_sde_lab.harness import load_config

    spec = spec_from_config(load_config(path))
    assert spec.experiment_id == "demo"
    assert spec.runs == 10 and spec.steps == 20 and spec.master_seed == 5
    assert spec.optimizer.eta == 1e-3
    assert spec.sde.variant == "erf"
    res = run_ensemble(spec)
    assert set(res) == {"discrete", "sde"}


def test_build_noise_batch_scaling():
    q = QuadraticDiag([1.0, 2.0])
    n = build_noise({"kind": "gaussian", "sigma": 0.2, "batch": 4}, q)
    np.testing.assert_allclose(n.sigmas, 0.1)
    t = build_noise({"kind": "student", "sigma": 0.2, "nu": 2, "batch": 4}, q)
    assert isinstance(t, StudentTNoise) and t.nu == 2
    np.testing.assert_allclose(t.scale, 0.1)


def test_student_noise_ensemble_runs():
    spec = make_spec(noise=StudentTNoise(2, [0.1, 0.1]), runs=50, steps=100)
    stats = run_discrete(spec)
    assert np.all(np.isfinite(stats.loss_mean))


def test_sde_only_spec_runs():
    spec = make_spec(optimizer=None, sde=SdeSpec(family="signsgd", variant="erf", dt=1e-3),
                     runs=20, steps=30)
    stats = run_sde(spec)
    assert stats.engine == "sde"
    assert len(stats.step) == 31
