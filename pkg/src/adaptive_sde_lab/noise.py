"""Gradient-noise laws, their samplers, and sign-drift closed forms.

Every model describes the law of the additive gradient noise Z(x) in
``stochastic gradient = full gradient + Z(x)``.  The per-coordinate maps

    drift(g) = 1 - 2 P(g + Z_i < 0)        ("sign drift")
    diffusion(g) = sqrt(1 - drift(g)^2)

feed the SignSGD SDE builders.  For Gaussian noise the drift is
erf(g / (sqrt(2) sigma)); for Student-t noise it is 2 Xi_nu(g / sigma)
where Xi_nu(x) = F_nu(x) - 1/2 and F_nu is the t distribution function.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.special as sp
from scipy import integrate

from adaptive_sde_lab.landscapes import Landscape

STATE_SCALED_KINDS = ("frozen-hessian", "loss-isotropic", "loss-hessian", "regression")


def erf(x):
    """Gauss error function, vectorized, machine precision."""
    return sp.erf(x)


def _t_density(t: float, nu: int) -> float:
    c = math.exp(math.lgamma((nu + 1) / 2) - math.lgamma(nu / 2)) / math.sqrt(nu * math.pi)
    return c * (1.0 + t * t / nu) ** (-(nu + 1) / 2)


def student_xi(nu: int, x):
    """Xi_nu(x) = F_nu(x) - 1/2 for the standard Student t with nu dof.

    Closed forms for nu = 1 (arctan) and nu = 2; other integer nu fall back
    to adaptive quadrature of the t density (abs tol 1e-12).
    """
    if nu < 1 or int(nu) != nu:
        raise ValueError("degrees of freedom must be a positive integer")
    x = np.asarray(x, dtype=float)
    if nu == 1:
        out = np.arctan(x) / math.pi
    elif nu == 2:
        out = x / (2.0 * np.sqrt(2.0 + x * x))
    else:
        def one(xi):
            val, _ = integrate.quad(_t_density, 0.0, abs(xi), args=(int(nu),), epsabs=1e-12, epsrel=1e-12)
            return math.copysign(val, xi)

        out = np.vectorize(one)(x)
    return out if out.ndim else float(out)


def mix_seed(master_seed: int, *key: int) -> np.random.SeedSequence:
    """Stable child-stream derivation: SeedSequence(masterSeed, spawn_key=key).

    The mixing is numpy's documented SeedSequence construction, identical
    across platforms; trajectory i of engine e uses key (e, i).
    """
    return np.random.SeedSequence(entropy=master_seed, spawn_key=tuple(int(k) for k in key))


def child_rng(master_seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(mix_seed(master_seed, *key))


@dataclass(frozen=True)
class GaussianDiagNoise:
    """Z ~ N(0, diag(sigmas^2)) with constant per-coordinate scales."""

    sigmas: np.ndarray

    def __init__(self, sigmas, dim: int | None = None):
        sigmas = np.atleast_1d(np.asarray(sigmas, dtype=float))
        if sigmas.size == 1 and dim is not None:
            sigmas = np.full(dim, sigmas[0])
        if np.any(sigmas <= 0):
            raise ValueError("all noise scales must be > 0")
        object.__setattr__(self, "sigmas", sigmas)

    diagonal = True
    finite_variance = True

    @property
    def dim(self) -> int:
        return self.sigmas.size

    def sample(self, x, rng: np.random.Generator, size: int | None = None):
        shape = (self.dim,) if size is None else (size, self.dim)
        return self.sigmas * rng.standard_normal(shape)

    def standard_block(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return rng.standard_normal((n, self.dim))

    def scale_at(self, x) -> np.ndarray:
        return self.sigmas

    def covariance(self, x) -> np.ndarray:
        return np.diag(self.sigmas**2)

    def sigma_diag(self, x) -> np.ndarray:
        return self.sigmas

    def sign_drift(self, g, sigma=None):
        sigma = self.sigmas if sigma is None else sigma
        return erf(np.asarray(g) / (math.sqrt(2.0) * sigma))

    def sign_diffusion(self, g, sigma=None):
        return np.sqrt(1.0 - self.sign_drift(g, sigma) ** 2)


@dataclass(frozen=True)
class StudentTNoise:
    """Z = scale * T with T ~ t_nu(0, I) component-wise; nu = 2 has no variance."""

    nu: int
    scale: np.ndarray

    def __init__(self, nu: int, scale=1.0, dim: int | None = None):
        if nu < 1 or int(nu) != nu:
            raise ValueError("degrees of freedom must be a positive integer")
        scale = np.atleast_1d(np.asarray(scale, dtype=float))
        if scale.size == 1 and dim is not None:
            scale = np.full(dim, scale[0])
        if np.any(scale <= 0):
            raise ValueError("all noise scales must be > 0")
        object.__setattr__(self, "nu", int(nu))
        object.__setattr__(self, "scale", scale)

    diagonal = True

    @property
    def finite_variance(self) -> bool:
        return self.nu > 2

    @property
    def dim(self) -> int:
        return self.scale.size

    def sample(self, x, rng: np.random.Generator, size: int | None = None):
        return self.scale * self.standard_block(rng, size if size is not None else 1).reshape(
            (self.dim,) if size is None else (size, self.dim)
        )

    def standard_block(self, rng: np.random.Generator, n: int) -> np.ndarray:
        # Gaussian divided by sqrt(chi^2_nu / nu), the textbook construction
        z = rng.standard_normal((n, self.dim))
        chi2 = rng.chisquare(self.nu, (n, self.dim))
        return z / np.sqrt(chi2 / self.nu)

    def scale_at(self, x) -> np.ndarray:
        return self.scale

    def covariance(self, x) -> np.ndarray:
        if self.nu <= 2:
            raise ValueError(f"Student t with nu = {self.nu} has infinite variance")
        return np.diag(self.scale**2 * self.nu / (self.nu - 2.0))

    def sigma_diag(self, x) -> np.ndarray:
        return np.sqrt(np.diag(self.covariance(x)))

    def sign_drift(self, g, sigma=None):
        sigma = self.scale if sigma is None else sigma
        return 2.0 * student_xi(self.nu, np.asarray(g) / sigma)

    def sign_diffusion(self, g, sigma=None):
        return np.sqrt(1.0 - self.sign_drift(g, sigma) ** 2)


@dataclass(frozen=True)
class StateScaledNoise:
    """Gaussian noise whose covariance tracks the landscape state.

    kinds:
      frozen-hessian   Sigma = sigma^2 f(x*) H(x*)          (constant)
      loss-isotropic   Sigma = sigma^2 f(x) I
      loss-hessian     Sigma = sigma^2 f(x) H(x)
      regression       B Sigma = 2 f(phi) D + grad grad^T   (power-law least squares)
    """

    landscape: Landscape
    kind: str
    sigma: float
    batch: int = 1
    anchor: np.ndarray | None = None

    def __init__(self, landscape, kind: str, sigma: float = 1.0, batch: int = 1, anchor=None):
        if kind not in STATE_SCALED_KINDS:
            raise ValueError(f"unknown state-scaled noise kind {kind!r}")
        if sigma <= 0:
            raise ValueError("sigma must be > 0")
        if kind == "frozen-hessian":
            anchor = np.asarray(landscape.minimizer() if anchor is None else anchor, dtype=float)
        if kind == "regression" and not hasattr(landscape, "d_diag"):
            raise ValueError("regression noise requires the power-law least-squares landscape")
        object.__setattr__(self, "landscape", landscape)
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "sigma", float(sigma))
        object.__setattr__(self, "batch", int(batch))
        object.__setattr__(self, "anchor", anchor)

    finite_variance = True

    @property
    def diagonal(self) -> bool:
        return self.kind != "regression"

    @property
    def dim(self) -> int:
        return self.landscape.dim

    def standard_block(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return rng.standard_normal((n, self.dim))

    def _variance_diag(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.kind == "frozen-hessian":
            h = self.landscape.hessian_diag(self.anchor)
            f = self.landscape.evaluate(self.anchor)
            v = self.sigma**2 * f * h
            return np.broadcast_to(v, x.shape)
        f = self.landscape.evaluate(x)
        if np.any(f < 0):
            raise ValueError("state-scaled covariance undefined where f(x) < 0")
        if self.kind == "loss-isotropic":
            return self.sigma**2 * f[..., None] * np.ones_like(x)
        if self.kind == "loss-hessian":
            h = self.landscape.hessian_diag(x)
            v = self.sigma**2 * f[..., None] * h
            if np.any(v < 0):
                raise ValueError("loss-hessian covariance not PSD at this state")
            return v
        raise ValueError("regression noise has no diagonal covariance")

    def scale_at(self, x) -> np.ndarray:
        return np.sqrt(self._variance_diag(x) / self.batch)

    def covariance(self, x) -> np.ndarray:
        if self.kind != "regression":
            return np.diag(self._variance_diag(x) / self.batch)
        phi = np.asarray(x, dtype=float)
        d = self.landscape.d_diag
        f = 0.5 * np.sum(d * phi**2)
        g = d * phi
        return self.sigma**2 * (2.0 * f * np.diag(d) + np.outer(g, g)) / self.batch

    def sigma_diag(self, x) -> np.ndarray:
        if not self.diagonal:
            raise ValueError("regression noise covariance is not diagonal")
        return self.scale_at(x)

    def sample(self, x, rng: np.random.Generator, size: int | None = None):
        shape = (self.dim,) if size is None else (size, self.dim)
        z = rng.standard_normal(shape)
        if self.diagonal:
            return self.scale_at(x) * z
        # symmetric square root of the rank-1-plus-diagonal covariance
        cov = self.covariance(x)
        w, q = np.linalg.eigh(cov)
        root = q @ np.diag(np.sqrt(np.clip(w, 0.0, None))) @ q.T
        return z @ root.T

    def sign_drift(self, g, sigma):
        return erf(np.asarray(g) / (math.sqrt(2.0) * sigma))

    def sign_diffusion(self, g, sigma):
        return np.sqrt(1.0 - self.sign_drift(g, sigma) ** 2)


@dataclass(frozen=True)
class ZeroNoise:
    """Degenerate noiseless law; sign drift collapses to sign(g)."""

    dim: int

    diagonal = True
    finite_variance = True

    def sample(self, x, rng: np.random.Generator, size: int | None = None):
        return np.zeros((self.dim,) if size is None else (size, self.dim))

    def standard_block(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return np.zeros((n, self.dim))

    def scale_at(self, x) -> np.ndarray:
        return np.zeros(self.dim)

    def covariance(self, x) -> np.ndarray:
        return np.zeros((self.dim, self.dim))

    def sigma_diag(self, x) -> np.ndarray:
        return np.zeros(self.dim)

    def sign_drift(self, g, sigma=None):
        return np.sign(np.asarray(g, dtype=float))

    def sign_diffusion(self, g, sigma=None):
        return np.sqrt(1.0 - self.sign_drift(g) ** 2)


NoiseModel = GaussianDiagNoise | StudentTNoise | StateScaledNoise | ZeroNoise


def sample(noise: NoiseModel, x, rng: np.random.Generator, size: int | None = None):
    return noise.sample(x, rng, size)


def covariance(noise: NoiseModel, x) -> np.ndarray:
    return noise.covariance(x)


def sign_drift(noise: NoiseModel, g, sigma=None):
    return noise.sign_drift(g, sigma)


def sign_diffusion(noise: NoiseModel, g, sigma=None):
    return noise.sign_diffusion(g, sigma)


@dataclass(frozen=True)
class SignDriftSpec:
    """Per-coordinate drift/diffusion maps of the sign of a noisy gradient."""

    drift_fn: Callable
    diffusion_fn: Callable


def sign_drift_spec(noise: NoiseModel) -> SignDriftSpec:
    return SignDriftSpec(
        drift_fn=lambda g, sigma=None: noise.sign_drift(g, sigma),
        diffusion_fn=lambda g, sigma=None: noise.sign_diffusion(g, sigma),
    )
