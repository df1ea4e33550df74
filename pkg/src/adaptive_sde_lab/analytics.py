"""Closed-form oracle suite: bounds, stationary distributions, envelopes.

Everything here is a pure function of (curvature constants, noise scale,
hyperparameters).  Results tagged as bounds are envelopes (upper bounds),
never point predictions; the stationary moments and the quadratic-loss
curve are exact point oracles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from adaptive_sde_lab.noise import erf

SQRT_2_OVER_PI = math.sqrt(2.0 / math.pi)


# -- special-function plumbing -------------------------------------------------

def lambert_w(x, tol: float = 1e-14, max_iter: int = 80):
    """Principal-branch Lambert W via Halley iteration.

    Initial guess: log1p(x) clipped to the branch point for x near -1/e,
    which converges for every x >= -1/e where the principal branch lives.
    """
    x = np.asarray(x, dtype=float)
    if np.any(x < -1.0 / math.e - 1e-12):
        raise ValueError("lambert_w: argument below -1/e is off the principal branch")
    w = np.where(x > -0.3, np.log1p(np.clip(x, -0.999999, None)), -1.0 + np.sqrt(2.0 * np.clip(math.e * x + 1.0, 0.0, None)))
    w = np.where(x > math.e, np.log(np.clip(x, 1e-300, None)) - np.log(np.clip(np.log(np.clip(x, 1.001, None)), 1e-300, None)), w)
    for _ in range(max_iter):
        ew = np.exp(w)
        f = w * ew - x
        denom = ew * (w + 1.0) - (w + 2.0) * f / (2.0 * w + 2.0)
        step = np.where(np.abs(denom) > 0, f / np.where(denom == 0, 1.0, denom), 0.0)
        w = w - step
        if np.all(np.abs(step) <= tol * (1.0 + np.abs(w))):
            break
    return w if w.ndim else float(w)


# -- phase constants -----------------------------------------------------------

def lambert_w_exp(y):
    """W(exp(y)) without forming exp(y); stable for arbitrarily large y.

    For y beyond float range the branch solves w + log w = y by Newton from
    w = y - log y.
    """
    shape = np.shape(y)
    y = np.atleast_1d(np.asarray(y, dtype=float))
    out = np.empty_like(y)
    small = y < 700.0
    out[small] = lambert_w(np.exp(y[small]))
    if (~small).any():
        yy = y[~small]
        w = yy - np.log(yy)
        for _ in range(60):
            step = (w + np.log(w) - yy) * w / (w + 1.0)
            w = w - step
            if np.all(np.abs(step) <= 1e-13 * np.abs(w)):
                break
        out[~small] = w
    return out.reshape(shape)


@dataclass(frozen=True)
class PhaseConstants:
    """Secant/tangent constants sandwiching erf on the middle-phase band."""

    m: float
    q1: float
    q2: float
    q_hat: float
    tangent_point: float


def phase_constants() -> PhaseConstants:
    """Slope m and intercepts q1 (secant through x=1, 3/2) and q2 (tangent)."""
    e1, e15 = float(erf(1.0)), float(erf(1.5))
    m = (e15 - e1) / 0.5
    q1 = e1 - m
    # tangent point solves erf'(x) = m, i.e. (2/sqrt(pi)) exp(-x^2) = m
    lo, hi = 1.0, 1.5
    target = m * math.sqrt(math.pi) / 2.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if math.exp(-mid * mid) > target:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-13:
            break
    x_star = 0.5 * (lo + hi)
    q2 = float(erf(x_star)) - m * x_star
    return PhaseConstants(m=m, q1=q1, q2=q2, q_hat=max(q1, q2), tangent_point=x_star)


# -- loss-bound curves ---------------------------------------------------------

@dataclass(frozen=True)
class LossBoundCurve:
    """Closed-form loss envelope; evaluate with curve(t) on scalars or arrays."""

    form: str  # exponential-to-floor | quadratic-stopping | lambertw-envelope
    s0: float
    rate: float = 0.0
    floor: float = 0.0
    t_star: float | None = None   # quadratic-stopping only
    alpha: float | None = None    # lambertw-envelope only
    beta: float | None = None
    degenerate: bool = False      # lambertw with beta <= 0, floor clamped to 0
    clamped_floor: bool = False   # exponential floor clamped at 0

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if self.form == "exponential-to-floor":
            decay = np.exp(-self.rate * t)
            out = self.s0 * decay + self.floor * (1.0 - decay)
        elif self.form == "quadratic-stopping":
            residual = np.clip(2.0 * math.sqrt(self.s0) - math.sqrt(self.rate) * t, 0.0, None)
            out = 0.25 * residual**2
        elif self.form == "lambertw-envelope":
            if self.degenerate:
                out = np.zeros_like(t)
            else:
                # argument is (1 + z0) exp(z0 - u - 1) with z0 = sqrt(s0) a / b
                # and u = a^2 t / (2 b); evaluated through its logarithm
                a, b = self.alpha, self.beta
                z0 = math.sqrt(self.s0) * a / b
                y = math.log1p(z0) + z0 - (a * a) * t / (2.0 * b) - 1.0
                out = b * b * (lambert_w_exp(y) + 1.0) ** 2 / (a * a)
        else:
            raise ValueError(f"unknown curve form {self.form!r}")
        out = np.asarray(out)
        return out if out.ndim else float(out)


def signsgd_loss_bound(phase: int, mu: float, l_tau: float, sigma_max: float,
                       eta: float, s0: float, d: int | None = None) -> LossBoundCurve:
    """Per-phase SignSGD loss envelope on a mu-strongly-convex landscape.

    Phase 1 is the parabola stopping at t* = 2 sqrt(s0 / mu); phases 2 and 3
    decay exponentially at rate 2 mu Delta toward their noise floors.  The
    phase-2 floor can go negative when mu d q_hat^2 > l_tau; it is clamped
    at 0 and flagged.
    """
    if mu <= 0 or sigma_max <= 0:
        raise ValueError("mu and sigma_max must be > 0")
    if phase == 1:
        return LossBoundCurve(form="quadratic-stopping", s0=s0, rate=mu, t_star=2.0 * math.sqrt(s0 / mu))
    if phase == 2:
        if d is None:
            raise ValueError("phase 2 requires the dimension d")
        pc = phase_constants()
        delta = pc.m / (math.sqrt(2.0) * sigma_max) + eta * mu * pc.m**2 / (4.0 * sigma_max**2)
        raw_floor = 0.5 * eta * (l_tau - mu * d * pc.q_hat**2) / (2.0 * mu * delta)
        return LossBoundCurve(form="exponential-to-floor", s0=s0, rate=2.0 * mu * delta,
                              floor=max(raw_floor, 0.0), clamped_floor=raw_floor < 0.0)
    if phase == 3:
        delta = SQRT_2_OVER_PI / sigma_max + (eta / math.pi) * mu / sigma_max**2
        return LossBoundCurve(form="exponential-to-floor", s0=s0, rate=2.0 * mu * delta,
                              floor=0.5 * eta * l_tau / (2.0 * mu * delta))
    raise ValueError("phase must be 1, 2, or 3")


def sgd_loss_bound(mu: float, l_tau: float, sigma_max: float, eta: float, s0: float,
                   kappa: float = 1.0, delta: float = 1.0, batch: float = 1.0) -> LossBoundCurve:
    """SGD loss envelope, rescaled variant: rate 2 mu kappa, floor scaled by kappa/delta."""
    if mu <= 0:
        raise ValueError("mu must be > 0")
    floor = 0.5 * eta * l_tau * sigma_max**2 / (2.0 * mu * batch) * (kappa / delta)
    return LossBoundCurve(form="exponential-to-floor", s0=s0, rate=2.0 * mu * kappa, floor=floor)


def pl_smooth_loss_bound(phase: int, mu: float, smoothness: float, d: int,
                         sigma_max: float, eta: float, s0: float) -> LossBoundCurve:
    """Looser envelope under PL + L-smoothness only (floor eta L d / (4 mu Delta))."""
    if mu <= 0 or smoothness <= 0:
        raise ValueError("mu and L must be > 0")
    if phase == 2:
        delta = phase_constants().m / (math.sqrt(2.0) * sigma_max)
    elif phase == 3:
        delta = SQRT_2_OVER_PI / sigma_max
    else:
        raise ValueError("PL + smooth envelopes are stated for phases 2 and 3")
    return LossBoundCurve(form="exponential-to-floor", s0=s0, rate=2.0 * mu * delta,
                          floor=eta * smoothness * d / (4.0 * mu * delta))


# -- stationary distributions --------------------------------------------------

@dataclass(frozen=True)
class StationaryMoments:
    """Stationary mean/covariance plus the full transient curves."""

    mean: np.ndarray
    cov: np.ndarray
    transient_mean: Callable
    transient_cov: Callable

    def asymptotic_loss(self, lambdas) -> float:
        """E f(X_inf) = Tr(H Cov)/2 on the quadratic with H = diag(lambdas)."""
        return float(0.5 * np.sum(np.asarray(lambdas) * self.cov))


def _as_diag(h, sigma_diag):
    h = np.atleast_1d(np.asarray(h, dtype=float))
    s = np.atleast_1d(np.asarray(sigma_diag, dtype=float))
    if s.size == 1:
        s = np.full_like(h, s[0])
    if h.shape != s.shape:
        raise ValueError("H and Sigma diagonals must have matching length")
    if np.any(h <= 0) or np.any(s <= 0):
        raise ValueError("H and Sigma diagonals must be positive")
    return h, s


def signsgd_stationary(h_diag, sigma_diag, eta: float, x0=None) -> StationaryMoments:
    """Phase-3 SignSGD moments on the diagonal quadratic.

    Mean decays at rate sqrt(2/pi) lambda_i / sigma_i; the stationary
    covariance is (eta/2) (sqrt(2/pi) I + (eta/pi) H Sigma^(-1/2))^(-1)
    H^(-1) Sigma^(1/2).
    """
    h, s = _as_diag(h_diag, sigma_diag)
    x0 = np.zeros_like(h) if x0 is None else np.asarray(x0, dtype=float)
    a = SQRT_2_OVER_PI * h / s
    b = a + (eta / math.pi) * (h / s) ** 2
    cov_inf = 0.5 * eta * s / (h * (SQRT_2_OVER_PI + (eta / math.pi) * h / s))

    def transient_mean(t):
        t = np.asarray(t, dtype=float)[..., None]
        return np.exp(-a * t) * x0

    def transient_cov(t):
        t = np.asarray(t, dtype=float)[..., None]
        m_t = np.exp(-2.0 * b * t)
        return (m_t - np.exp(-2.0 * a * t)) * x0**2 + cov_inf * (1.0 - m_t)

    return StationaryMoments(mean=np.zeros_like(h), cov=cov_inf,
                             transient_mean=transient_mean, transient_cov=transient_cov)


def sgd_stationary(h_diag, sigma_diag, eta: float, x0=None) -> StationaryMoments:
    """SGD moments on the diagonal quadratic: Cov_inf = (eta/2) H^(-1) Sigma."""
    h, s = _as_diag(h_diag, sigma_diag)
    x0 = np.zeros_like(h) if x0 is None else np.asarray(x0, dtype=float)
    cov_inf = 0.5 * eta * s**2 / h

    def transient_mean(t):
        t = np.asarray(t, dtype=float)[..., None]
        return np.exp(-h * t) * x0

    def transient_cov(t):
        t = np.asarray(t, dtype=float)[..., None]
        return cov_inf * (1.0 - np.exp(-2.0 * h * t))

    return StationaryMoments(mean=np.zeros_like(h), cov=cov_inf,
                             transient_mean=transient_mean, transient_cov=transient_cov)


def adaptive_stationary(family: str, h_diag, sigma_diag, eta: float, theta: float = 0.0,
                        x0=None) -> StationaryMoments:
    """Stationary moments of RMSprop/Adam ((eta/2) Sigma^(1/2) H^(-1)) and of
    the decoupled-decay variants ((eta/2) (H Sigma^(-1/2) + theta I)^(-1))."""
    h, s = _as_diag(h_diag, sigma_diag)
    x0 = np.zeros_like(h) if x0 is None else np.asarray(x0, dtype=float)
    if family in ("rmsprop", "adam"):
        theta = 0.0
    elif family not in ("rmspropw", "adamw"):
        raise ValueError(f"unknown adaptive family {family!r}")
    rate = h / s + theta
    cov_inf = 0.5 * eta / rate

    def transient_mean(t):
        t = np.asarray(t, dtype=float)[..., None]
        return np.exp(-rate * t) * x0

    def transient_cov(t):
        t = np.asarray(t, dtype=float)[..., None]
        return cov_inf * (1.0 - np.exp(-2.0 * rate * t))

    return StationaryMoments(mean=np.zeros_like(h), cov=cov_inf,
                             transient_mean=transient_mean, transient_cov=transient_cov)


# -- exact quadratic-loss curve ------------------------------------------------

def signsgd_quad_loss_curve(h_diag, sigma_diag, eta: float, x0, t):
    """Exact phase-3 expected loss of SignSGD on the diagonal quadratic.

    Per coordinate: (lam x0^2 / 2) exp(-2 lam Delta t) + eta/(4 Delta)
    (1 - exp(-2 lam Delta t)) with Delta = sqrt(2/pi)/sigma + lam eta/(pi sigma^2).
    Valid in the small-signal regime; the caller owns that assumption.
    """
    h, s = _as_diag(h_diag, sigma_diag)
    x0 = np.asarray(x0, dtype=float)
    t = np.asarray(t, dtype=float)[..., None]
    delta = SQRT_2_OVER_PI / s + h * eta / (math.pi * s**2)
    decay = np.exp(-2.0 * h * delta * t)
    per_coord = 0.5 * h * x0**2 * decay + eta / (4.0 * delta) * (1.0 - decay)
    out = per_coord.sum(axis=-1)
    return out if out.ndim else float(out)


# -- schedulers ----------------------------------------------------------------

@dataclass(frozen=True)
class SchedulerVerdict:
    vartheta: float
    converges: bool
    reason: str
    envelope: Callable | None  # c * eta_t when curvature constants supplied


def scheduler_verdict(vartheta: float, mu: float | None = None, l_tau: float | None = None,
                      sigma_max: float | None = None, eta: float = 1.0) -> SchedulerVerdict:
    """Convergence verdict for the power-law scheduler (t+1)^(-vartheta).

    The step-size condition (divergent integral, vanishing steps) holds iff
    0 < vartheta <= 1.  With curvature constants the asymptotic envelope is
    (l_tau sigma_max / (4 mu)) sqrt(pi/2) * eta_t where eta_t is the full
    time-dependent step size eta * (t+1)^(-vartheta).
    """
    if vartheta == 0:
        verdict, reason = False, "step size does not vanish"
    elif vartheta > 1:
        verdict, reason = False, "step-size integral is finite"
    else:
        verdict, reason = True, "divergent integral with vanishing steps"
    envelope = None
    if mu is not None and l_tau is not None and sigma_max is not None:
        c = (l_tau * sigma_max / (4.0 * mu)) * math.sqrt(math.pi / 2.0)

        def envelope(t, c=c, eta=eta, vartheta=vartheta):
            t = np.asarray(t, dtype=float)
            return c * eta * (t + 1.0) ** (-vartheta)

    return SchedulerVerdict(vartheta=vartheta, converges=verdict, reason=reason, envelope=envelope)


# -- adaptive-family asymptotic bounds ------------------------------------------

def adaptive_asymptotic_loss(family: str, mu: float, smoothness: float, l_tau: float,
                             sigma: float, eta: float, batch: float = 1.0, theta: float = 0.0,
                             kappa: float = 1.0, delta: float = 1.0, xi: float = 1.0) -> float:
    """Family-specific closed-form asymptotic loss upper bound.

    adamw/rmspropw: eta l_tau sigma L / 2 * kappa / (2 mu sqrt(B delta) L
    + sigma xi theta (L + mu)); adam/rmsprop (theta = 0): eta sigma l_tau
    / (4 mu sqrt(B)) * kappa / sqrt(delta); adam-l2: eta l_tau sigma / 2
    * L / (2 mu L + theta (L + mu)).
    """
    if mu <= 0 or smoothness <= 0:
        raise ValueError("mu and L must be > 0")
    if family in ("adamw", "rmspropw"):
        num = eta * l_tau * sigma * smoothness / 2.0 * kappa
        den = 2.0 * mu * math.sqrt(batch * delta) * smoothness + sigma * xi * theta * (smoothness + mu)
        return num / den
    if family in ("adam", "rmsprop"):
        return eta * sigma * l_tau / (4.0 * mu * math.sqrt(batch)) * kappa / math.sqrt(delta)
    if family == "adam-l2":
        return (eta * l_tau * sigma / 2.0) * smoothness / (2.0 * mu * smoothness + theta * (smoothness + mu))
    raise ValueError(f"unknown family {family!r}")


# -- alternative noise-structure envelopes --------------------------------------

def alt_noise_loss_bound(kind: str, phase: int, mu: float, l_tau: float, sigma: float,
                         eta: float, s0: float, d: int | None = None,
                         smoothness: float | None = None, f_star: float | None = None,
                         lambda_max: float | None = None, batch: float = 1.0) -> LossBoundCurve:
    """Loss envelopes for the state-dependent noise structures.

    frozen-hessian keeps the exponential-to-floor form with rescaled Delta;
    the other kinds produce Lambert-W envelopes with limit beta^2/alpha^2.
    """
    if phase not in (2, 3):
        raise ValueError("alternative-noise envelopes are stated for phases 2 and 3")
    pc = phase_constants()
    if kind == "frozen-hessian":
        if f_star is None or lambda_max is None:
            raise ValueError("frozen-hessian requires f_star and lambda_max")
        root = math.sqrt(f_star) * sigma * math.sqrt(lambda_max)
        sq = f_star * sigma**2 * lambda_max
        if phase == 2:
            if d is None:
                raise ValueError("phase 2 requires the dimension d")
            delta = pc.m / (math.sqrt(2.0) * root) + eta * mu * pc.m**2 / (4.0 * sq)
            raw_floor = 0.5 * eta * (l_tau - mu * d * pc.q_hat**2) / (2.0 * mu * delta)
            return LossBoundCurve(form="exponential-to-floor", s0=s0, rate=2.0 * mu * delta,
                                  floor=max(raw_floor, 0.0), clamped_floor=raw_floor < 0.0)
        delta = SQRT_2_OVER_PI / root + (eta / math.pi) * mu / sq
        return LossBoundCurve(form="exponential-to-floor", s0=s0, rate=2.0 * mu * delta,
                              floor=0.5 * eta * l_tau / (2.0 * mu * delta))

    if kind == "loss-isotropic":
        if phase == 2:
            if d is None:
                raise ValueError("phase 2 requires the dimension d")
            beta = 0.5 * eta * (l_tau - mu * d * pc.q_hat**2 - pc.m**2 * mu**2 / sigma**2)
            alpha = math.sqrt(2.0) * pc.m * mu / sigma
        else:
            beta = eta * (l_tau / 2.0 - 2.0 * mu**2 / (math.pi * sigma**2))
            alpha = 2.0 * SQRT_2_OVER_PI * mu / sigma
    elif kind == "loss-hessian":
        if smoothness is None:
            raise ValueError("loss-hessian requires the smoothness constant L")
        if phase == 2:
            if d is None:
                raise ValueError("phase 2 requires the dimension d")
            beta = 0.5 * eta * (l_tau - mu * d * pc.q_hat**2 - pc.m**2 * mu**2 / (sigma**2 * smoothness))
            alpha = math.sqrt(2.0) * pc.m * mu / (math.sqrt(smoothness) * sigma)
        else:
            beta = eta * (l_tau / 2.0 - 2.0 * mu**2 / (math.pi * sigma**2 * smoothness))
            alpha = 2.0 * SQRT_2_OVER_PI * mu / (math.sqrt(smoothness) * sigma)
    elif kind == "regression":
        if smoothness is None:
            raise ValueError("regression requires the smoothness constant L")
        beta = 0.5 * eta * l_tau
        if phase == 2:
            alpha = pc.m * mu * math.sqrt(batch) / math.sqrt(2.0 * smoothness)
        else:
            alpha = SQRT_2_OVER_PI * mu * math.sqrt(batch) / math.sqrt(smoothness)
    else:
        raise ValueError(f"unknown alternative noise kind {kind!r}")

    if beta <= 0:
        return LossBoundCurve(form="lambertw-envelope", s0=s0, alpha=alpha, beta=beta,
                              floor=0.0, degenerate=True)
    return LossBoundCurve(form="lambertw-envelope", s0=s0, alpha=alpha, beta=beta,
                          floor=beta**2 / alpha**2)
