"""SDE builders for every optimizer family plus the Euler-Maruyama integrator.

An ``SdeSystem`` carries time-dependent drift and per-coordinate diffusion
amplitudes over an augmented state [X | M | V] (M and V only for the
families that use them).  The scalar ``sqrt_eta`` from the weak-approximation
construction multiplies the diffusion at integration time.  Both fields
broadcast over leading batch axes, so ensembles integrate vectorized.

Noise models passed to the builders are the already batch-scaled laws
(batch size enters only through Sigma -> Sigma / B in the configs).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from adaptive_sde_lab.landscapes import Landscape
from adaptive_sde_lab.noise import GaussianDiagNoise, NoiseModel, StateScaledNoise, StudentTNoise

SIGNSGD_VARIANTS = ("full", "erf", "phase1-ode", "phase3", "student")


@dataclass(frozen=True)
class StateLayout:
    x_dim: int
    has_m: bool = False
    has_v: bool = False

    @property
    def dim(self) -> int:
        return self.x_dim * (1 + self.has_m + self.has_v)

    @property
    def x(self) -> slice:
        return slice(0, self.x_dim)

    @property
    def m(self) -> slice:
        if not self.has_m:
            raise ValueError("layout has no M block")
        return slice(self.x_dim, 2 * self.x_dim)

    @property
    def v(self) -> slice:
        if not self.has_v:
            raise ValueError("layout has no V block")
        start = self.x_dim * (1 + self.has_m)
        return slice(start, start + self.x_dim)


@dataclass(frozen=True)
class SdeSystem:
    layout: StateLayout
    drift: Callable                # (t, state) -> state-shaped array
    diffusion_diag: Callable       # (t, state) -> per-coordinate amplitudes
    sqrt_eta: float
    family: str
    landscape: Landscape
    # one relaxation step of the V target, (1 - exp(-rho dt)) * target(x0):
    # matches the discrete post-update v_1 in expectation and keeps the
    # preconditioner away from its t = 0 singularity
    suggested_v0: Callable | None = None

    def initial_state(self, x0, m0=None, v0=None) -> np.ndarray:
        x0 = np.asarray(x0, dtype=float)
        blocks = [x0]
        if self.layout.has_m:
            blocks.append(np.zeros_like(x0) if m0 is None else np.broadcast_to(np.asarray(m0, dtype=float), x0.shape))
        if self.layout.has_v:
            v0 = np.zeros_like(x0) if v0 is None else np.broadcast_to(np.asarray(v0, dtype=float), x0.shape)
            if np.any(v0 < 0):
                raise ValueError("V block must be initialized non-negative")
            blocks.append(v0)
        return np.concatenate(blocks, axis=-1)

    def loss(self, state) -> np.ndarray:
        return self.landscape.evaluate(np.asarray(state)[..., self.layout.x])


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    diverged_at: int | None = None


def euler_maruyama(system: SdeSystem, initial_state, dt: float, n_steps: int,
                   rng: np.random.Generator) -> Trajectory:
    """x_{k+1} = x_k + dt * b(x_k, k dt) + sqrt(dt) * sigma(x_k, k dt) * Z_k.

    One Gaussian increment per step over the full augmented state; the V
    block is floored at 0 after each step (the continuous dynamics keeps
    V >= 0, discretization may undershoot).  A non-finite state marks the
    trajectory diverged and freezes it for the remaining steps.
    """
    if dt <= 0:
        raise ValueError("dt must be > 0")
    state = np.asarray(initial_state, dtype=float)
    if state.shape[-1] != system.layout.dim:
        raise ValueError("initial state does not match the system layout")
    states = np.empty((n_steps + 1,) + state.shape)
    states[0] = state
    sqrt_dt = math.sqrt(dt)
    diverged_at = None
    for k in range(n_steps):
        z = rng.standard_normal(state.shape)
        if diverged_at is None:
            with np.errstate(invalid="ignore", over="ignore"):
                t = k * dt
                nxt = state + dt * system.drift(t, state) + sqrt_dt * system.sqrt_eta * system.diffusion_diag(t, state) * z
                if system.layout.has_v:
                    nxt[..., system.layout.v] = np.clip(nxt[..., system.layout.v], 0.0, None)
            if not np.all(np.isfinite(nxt)):
                diverged_at = k + 1
            else:
                state = nxt
        states[k + 1] = state
    return Trajectory(times=dt * np.arange(n_steps + 1), states=states, diverged_at=diverged_at)


# -- SignSGD -------------------------------------------------------------------

def _require_gaussian(noise: NoiseModel, variant: str):
    ok = isinstance(noise, GaussianDiagNoise) or (isinstance(noise, StateScaledNoise) and noise.diagonal)
    if not ok:
        raise ValueError(f"variant {variant!r} requires Gaussian (diagonal) noise, got {type(noise).__name__}")


def build_signsgd_sde(landscape: Landscape, noise: NoiseModel, eta: float,
                      variant: str = "full") -> SdeSystem:
    """SignSGD SDE over X only: drift is minus the per-coordinate sign drift
    1 - 2 P(grad + Z < 0); diffusion amplitude is sqrt(1 - drift^2).

    Variants: 'full' closes the drift for whatever law the noise model has;
    'erf' is the Gaussian closed form; 'student' the t_nu closed form;
    'phase1-ode' the saturated ODE -sign(grad); 'phase3' the small-signal
    linearization, with the radicand of its diffusion clamped at 0 outside
    the small-signal region.
    """
    if variant not in SIGNSGD_VARIANTS:
        raise ValueError(f"unknown SignSGD SDE variant {variant!r}")
    layout = StateLayout(x_dim=landscape.dim)
    sqrt_eta = math.sqrt(eta)

    if variant == "phase1-ode":
        def drift(t, s):
            return -np.sign(landscape.gradient(s))

        def diffusion(t, s):
            return np.zeros_like(np.asarray(s, dtype=float))

        return SdeSystem(layout, drift, diffusion, 0.0, "signsgd", landscape)

    if variant == "erf":
        _require_gaussian(noise, variant)
    elif variant == "student":
        if not isinstance(noise, StudentTNoise):
            raise ValueError("variant 'student' requires StudentTNoise")
    elif variant == "phase3":
        _require_gaussian(noise, variant)
    elif isinstance(noise, StateScaledNoise) and not noise.diagonal:
        raise ValueError("the full SDE supports coordinate-independent noise only")

    if variant == "phase3":
        def drift(t, s):
            u = landscape.gradient(s) / noise.sigma_diag(s)
            return -math.sqrt(2.0 / math.pi) * u

        def diffusion(t, s):
            u = landscape.gradient(s) / noise.sigma_diag(s)
            return np.sqrt(np.clip(1.0 - (2.0 / math.pi) * u**2, 0.0, None))

        return SdeSystem(layout, drift, diffusion, sqrt_eta, "signsgd", landscape)

    # full / erf / student: exact sign-drift closed form for the noise law
    def drift(t, s):
        g = landscape.gradient(s)
        return -noise.sign_drift(g, noise.scale_at(s))

    def diffusion(t, s):
        g = landscape.gradient(s)
        return noise.sign_diffusion(g, noise.scale_at(s))

    return SdeSystem(layout, drift, diffusion, sqrt_eta, "signsgd", landscape)


# -- SGD -----------------------------------------------------------------------

def build_sgd_sde(landscape: Landscape, noise: NoiseModel, eta: float,
                  kappa: float = 1.0) -> SdeSystem:
    """dX = -kappa grad f dt + kappa sqrt(eta) Sigma^(1/2) dW (Sigma batch-scaled)."""
    if kappa <= 0:
        raise ValueError("kappa must be > 0")
    if not noise.finite_variance:
        raise ValueError("the SGD SDE requires finite-variance noise")
    layout = StateLayout(x_dim=landscape.dim)

    def drift(t, s):
        return -kappa * landscape.gradient(s)

    def diffusion(t, s):
        return kappa * np.broadcast_to(noise.sigma_diag(s), np.asarray(s, dtype=float).shape).copy()

    return SdeSystem(layout, drift, diffusion, math.sqrt(eta), "sgd", landscape)


# -- RMSprop(W) ------------------------------------------------------------------

def build_rmsprop_sde(landscape: Landscape, noise: NoiseModel, eta: float, beta: float,
                      epsilon: float, decoupled_theta: float = 0.0,
                      baseline: str = "ours") -> SdeSystem:
    """RMSprop(W) SDE over (X, V) with rho = (1 - beta) / eta.

    X-drift -P^(-1) grad f - theta X with P = sqrt(V) + eps; X-diffusion
    P^(-1) Sigma^(1/2).  V relaxes toward grad^2 + diag Sigma (ours) or
    diag Sigma alone (the Malladi baseline).
    """
    if baseline not in ("ours", "malladi"):
        raise ValueError(f"unknown baseline {baseline!r}")
    if not 0.0 <= beta < 1.0:
        raise ValueError("beta must lie in [0, 1)")
    if not noise.finite_variance:
        raise ValueError("the RMSprop SDE requires finite-variance noise")
    rho = (1.0 - beta) / eta
    layout = StateLayout(x_dim=landscape.dim, has_v=True)

    def drift(t, s):
        s = np.asarray(s, dtype=float)
        x, v = s[..., layout.x], s[..., layout.v]
        g = landscape.gradient(x)
        p = np.sqrt(np.clip(v, 0.0, None)) + epsilon
        dx = -g / p - decoupled_theta * x
        target = noise.sigma_diag(x) ** 2 if baseline == "malladi" else g**2 + noise.sigma_diag(x) ** 2
        dv = rho * (target - v)
        return np.concatenate([dx, dv], axis=-1)

    def diffusion(t, s):
        s = np.asarray(s, dtype=float)
        x, v = s[..., layout.x], s[..., layout.v]
        p = np.sqrt(np.clip(v, 0.0, None)) + epsilon
        amp_x = noise.sigma_diag(x) / p
        return np.concatenate([amp_x, np.zeros_like(amp_x)], axis=-1)

    def suggested_v0(x0, dt):
        # the discrete v_1 in expectation, independent of the baseline: both
        # SDE variants start from the same state as the optimizer they model
        x0 = np.asarray(x0, dtype=float)
        target = noise.sigma_diag(x0) ** 2 + landscape.gradient(x0) ** 2
        return -math.expm1(-rho * dt) * target

    return SdeSystem(layout, drift, diffusion, math.sqrt(eta),
                     "rmspropw" if decoupled_theta > 0 else "rmsprop", landscape, suggested_v0)


# -- Adam(W) ---------------------------------------------------------------------

def build_adam_sde(landscape: Landscape, noise: NoiseModel, eta: float, beta1: float,
                   beta2: float, epsilon: float, decoupled_theta: float = 0.0,
                   baseline: str = "ours", t_floor: float | None = None) -> SdeSystem:
    """Adam(W) SDE over (X, M, V) with rho_i = (1 - beta_i) / eta.

    iota_i(t) = 1 - exp(-rho_i t) is evaluated at max(t, t_floor) with
    t_floor defaulting to eta (one Delta t at the default pace), which keeps
    iota_1 away from its t = 0 zero without picking an arbitrary burn-in.
    The Malladi baseline drops the eta rho_1 (grad - M) drift correction and
    the grad^2 term in the V relaxation.
    """
    if baseline not in ("ours", "malladi"):
        raise ValueError(f"unknown baseline {baseline!r}")
    for name, b in (("beta1", beta1), ("beta2", beta2)):
        if not 0.0 <= b < 1.0:
            raise ValueError(f"{name} must lie in [0, 1)")
    if not noise.finite_variance:
        raise ValueError("the Adam SDE requires finite-variance noise")
    rho1 = (1.0 - beta1) / eta
    rho2 = (1.0 - beta2) / eta
    t0 = eta if t_floor is None else t_floor
    layout = StateLayout(x_dim=landscape.dim, has_m=True, has_v=True)

    def drift(t, s):
        s = np.asarray(s, dtype=float)
        x, m, v = s[..., layout.x], s[..., layout.m], s[..., layout.v]
        g = landscape.gradient(x)
        te = max(t, t0)
        iota1 = -math.expm1(-rho1 * te)
        iota2 = -math.expm1(-rho2 * te)
        p = np.sqrt(np.clip(v, 0.0, None)) + epsilon * math.sqrt(iota2)
        numerator = m if baseline == "malladi" else m + eta * rho1 * (g - m)
        dx = -(math.sqrt(iota2) / iota1) * numerator / p - decoupled_theta * x
        dm = rho1 * (g - m)
        target = noise.sigma_diag(x) ** 2 if baseline == "malladi" else g**2 + noise.sigma_diag(x) ** 2
        dv = rho2 * (target - v)
        return np.concatenate([dx, dm, dv], axis=-1)

    def diffusion(t, s):
        s = np.asarray(s, dtype=float)
        x = s[..., layout.x]
        amp_m = rho1 * np.broadcast_to(noise.sigma_diag(x), x.shape).copy()
        zero = np.zeros_like(amp_m)
        return np.concatenate([zero, amp_m, zero], axis=-1)

    def suggested_v0(x0, dt):
        # the discrete v_1 in expectation; see the RMSprop builder note
        x0 = np.asarray(x0, dtype=float)
        target = noise.sigma_diag(x0) ** 2 + landscape.gradient(x0) ** 2
        return -math.expm1(-rho2 * dt) * target

    return SdeSystem(layout, drift, diffusion, math.sqrt(eta),
                     "adamw" if decoupled_theta > 0 else "adam", landscape, suggested_v0)


# -- phase classification --------------------------------------------------------

def signal_to_noise(x, landscape: Landscape, noise: NoiseModel) -> np.ndarray:
    """Per-coordinate Y = Sigma^(-1/2) grad f / sqrt(2); needs finite variance."""
    if not noise.finite_variance:
        raise ValueError("signal-to-noise ratio undefined for infinite-variance noise")
    x = np.asarray(x, dtype=float)
    return landscape.gradient(x) / noise.sigma_diag(x) / math.sqrt(2.0)


def phase_classify(x, landscape: Landscape, noise: NoiseModel) -> np.ndarray:
    """Label coordinates 1/2/3 by |Y|; ties |Y| = 3/2 -> 1 and |Y| = 1 -> 3."""
    y = np.abs(signal_to_noise(x, landscape, noise))
    labels = np.full(y.shape, 2, dtype=int)
    labels[y >= 1.5] = 1
    labels[y <= 1.0] = 3
    return labels
