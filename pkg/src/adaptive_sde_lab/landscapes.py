"""Analytic test objectives with closed-form gradients and curvature constants.

All landscapes are immutable after construction and evaluate on arrays of
shape ``(..., dim)`` so that a whole Monte-Carlo ensemble can be pushed
through in one call.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class CurvatureConstants:
    """Strong-convexity constant mu, smoothness L, and Hessian-trace bound."""

    mu: float | None
    smoothness: float | None
    trace_bound: float | None

    @property
    def available(self) -> dict:
        return {
            "mu": self.mu is not None,
            "smoothness": self.smoothness is not None,
            "trace_bound": self.trace_bound is not None,
        }

    def require(self, *names: str):
        missing = [n for n in names if getattr(self, n) is None]
        if missing:
            raise ValueError(f"curvature constants unavailable: {', '.join(missing)}")
        return tuple(getattr(self, n) for n in names)


def _check_dim(x, dim: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != dim:
        raise ValueError(f"dimension mismatch: landscape dim {dim}, point dim {x.shape[-1]}")
    return x


@dataclass(frozen=True)
class QuadraticDiag:
    """f(x) = 1/2 x^T H x with H = diag(lambdas)."""

    lambdas: np.ndarray

    def __init__(self, lambdas):
        lambdas = np.atleast_1d(np.asarray(lambdas, dtype=float))
        if lambdas.ndim != 1 or lambdas.size < 1:
            raise ValueError("lambdas must be a non-empty 1-D sequence")
        object.__setattr__(self, "lambdas", lambdas)

    @property
    def dim(self) -> int:
        return self.lambdas.size

    @property
    def is_convex(self) -> bool:
        return bool(np.all(self.lambdas > 0))

    def evaluate(self, x) -> np.ndarray:
        x = _check_dim(x, self.dim)
        return 0.5 * np.sum(self.lambdas * x**2, axis=-1)

    def gradient(self, x) -> np.ndarray:
        x = _check_dim(x, self.dim)
        return self.lambdas * x

    def hessian_diag(self, x) -> np.ndarray:
        x = _check_dim(x, self.dim)
        return np.broadcast_to(self.lambdas, x.shape).copy()

    def minimizer(self) -> np.ndarray:
        return np.zeros(self.dim)

    def minimum_value(self) -> float:
        return 0.0

    def constants(self) -> CurvatureConstants:
        if not self.is_convex:
            return CurvatureConstants(None, float(np.max(np.abs(self.lambdas))), None)
        return CurvatureConstants(
            mu=float(np.min(self.lambdas)),
            smoothness=float(np.max(self.lambdas)),
            trace_bound=float(np.sum(self.lambdas)),
        )


@dataclass(frozen=True)
class EmbeddedSaddle:
    """f(x) = 1/2 x^T H x + quartic/4 * sum x_i^4 - cubic/3 * sum x_i^3.

    The signed diagonal H embeds a saddle at the origin; the quartic term
    keeps the objective coercive so trajectories stay in a bounded basin.
    """

    lambdas: np.ndarray
    quartic: float
    cubic: float

    def __init__(self, lambdas, quartic: float, cubic: float):
        lambdas = np.atleast_1d(np.asarray(lambdas, dtype=float))
        if lambdas.ndim != 1 or lambdas.size < 1:
            raise ValueError("lambdas must be a non-empty 1-D sequence")
        if not quartic > 0:
            raise ValueError("quartic coefficient must be > 0 (coercivity)")
        object.__setattr__(self, "lambdas", lambdas)
        object.__setattr__(self, "quartic", float(quartic))
        object.__setattr__(self, "cubic", float(cubic))

    @property
    def dim(self) -> int:
        return self.lambdas.size

    def evaluate(self, x) -> np.ndarray:
        x = _check_dim(x, self.dim)
        quad = 0.5 * np.sum(self.lambdas * x**2, axis=-1)
        return quad + 0.25 * self.quartic * np.sum(x**4, axis=-1) - (self.cubic / 3.0) * np.sum(x**3, axis=-1)

    def gradient(self, x) -> np.ndarray:
        x = _check_dim(x, self.dim)
        return self.lambdas * x + self.quartic * x**3 - self.cubic * x**2

    def hessian_diag(self, x) -> np.ndarray:
        x = _check_dim(x, self.dim)
        return self.lambdas + 3.0 * self.quartic * x**2 - 2.0 * self.cubic * x

    def minimizer(self) -> np.ndarray:
        # separable: per coordinate pick the root of the cubic gradient with
        # the lowest objective value
        out = np.empty(self.dim)
        for i, lam in enumerate(self.lambdas):
            roots = np.roots([self.quartic, -self.cubic, lam, 0.0])
            real = np.real(roots[np.abs(np.imag(roots)) < 1e-12])
            one_d = EmbeddedSaddle([lam], self.quartic, self.cubic)
            vals = [one_d.evaluate(np.array([r])) for r in real]
            out[i] = real[int(np.argmin(vals))]
        return out

    def minimum_value(self) -> float:
        return float(self.evaluate(self.minimizer()))

    def constants(self) -> CurvatureConstants:
        # the Hessian is state-dependent and indefinite at the origin; bound
        # oracles must refuse this landscape
        return CurvatureConstants(None, None, None)


@dataclass(frozen=True)
class PowerLawQuadratic:
    """Least-squares objective f(theta) = 1/2 <D(W theta - b), W theta - b>.

    D = diag(j^(-2 alpha)) for j = 1..v sets a power-law spectrum on the
    residual phi = W theta - b.
    """

    v: int
    d: int
    alpha: float
    design_matrix: np.ndarray
    target: np.ndarray
    d_diag: np.ndarray = field(init=False)

    def __init__(self, v: int, d: int, alpha: float, design_matrix=None, target=None):
        if v < 1 or d < 1:
            raise ValueError("dimensions must be >= 1")
        if design_matrix is None:
            if v != d:
                raise ValueError("identity design requires v == d")
            design_matrix = np.eye(v)
        design_matrix = np.asarray(design_matrix, dtype=float)
        if design_matrix.shape != (v, d):
            raise ValueError(f"design matrix must be {v}x{d}, got {design_matrix.shape}")
        target = np.zeros(v) if target is None else np.asarray(target, dtype=float)
        if target.shape != (v,):
            raise ValueError(f"target must have length {v}")
        object.__setattr__(self, "v", int(v))
        object.__setattr__(self, "d", int(d))
        object.__setattr__(self, "alpha", float(alpha))
        object.__setattr__(self, "design_matrix", design_matrix)
        object.__setattr__(self, "target", target)
        object.__setattr__(self, "d_diag", np.arange(1, v + 1, dtype=float) ** (-2.0 * alpha))

    @property
    def dim(self) -> int:
        return self.d

    def residual(self, theta) -> np.ndarray:
        """phi = W theta - b, the state the reduced dynamics acts on."""
        theta = _check_dim(theta, self.d)
        return theta @ self.design_matrix.T - self.target

    def evaluate(self, theta) -> np.ndarray:
        phi = self.residual(theta)
        return 0.5 * np.sum(self.d_diag * phi**2, axis=-1)

    def gradient(self, theta) -> np.ndarray:
        phi = self.residual(theta)
        return (self.d_diag * phi) @ self.design_matrix

    def minimizer(self) -> np.ndarray:
        sqrt_d = np.sqrt(self.d_diag)
        theta, *_ = np.linalg.lstsq(sqrt_d[:, None] * self.design_matrix, sqrt_d * self.target, rcond=None)
        return theta

    def minimum_value(self) -> float:
        return float(self.evaluate(self.minimizer()))

    def reduced(self) -> QuadraticDiag:
        """The residual-space quadratic 1/2 phi^T D phi."""
        return QuadraticDiag(self.d_diag)

    def constants(self) -> CurvatureConstants:
        # constants of the residual-space Hessian D, the quantities the
        # power-law loss envelopes are stated in
        return CurvatureConstants(
            mu=float(self.d_diag.min()),
            smoothness=float(self.d_diag.max()),
            trace_bound=float(self.d_diag.sum()),
        )


Landscape = QuadraticDiag | EmbeddedSaddle | PowerLawQuadratic


def evaluate(landscape: Landscape, x) -> np.ndarray:
    return landscape.evaluate(x)


def gradient(landscape: Landscape, x) -> np.ndarray:
    return landscape.gradient(x)


def constants(landscape: Landscape) -> CurvatureConstants:
    return landscape.constants()
