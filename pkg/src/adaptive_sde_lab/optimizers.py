"""Exact discrete-time updates for SGD, SignSGD, RMSprop(W), Adam(W).

``step`` is a pure state-transition function; state arrays may carry any
leading batch shape, so a whole ensemble advances in one call.  Bias
corrections use the post-increment counter: the step producing m_{k+1}
divides by (1 - beta^{k+1}).  Decoupled weight decay subtracts
eta * scheduler * theta * x outside the preconditioner; coupled L2 adds
l2 * x to the gradient before any moment update.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

FAMILIES = ("sgd", "signsgd", "rmsprop", "rmspropw", "adam", "adamw")
_ADAPTIVE = ("rmsprop", "rmspropw", "adam", "adamw")


@dataclass(frozen=True)
class OptimizerConfig:
    family: str
    eta: float
    beta1: float = 0.9
    beta2: float = 0.999
    theta: float = 0.0
    epsilon: float = 1e-8
    l2: float = 0.0
    scheduler_exponent: float = 0.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown optimizer family {self.family!r}")
        if not self.eta > 0:
            raise ValueError("eta must be > 0")
        if self.family in _ADAPTIVE and not self.epsilon > 0:
            raise ValueError("epsilon must be > 0 for adaptive families")
        for name, b in (("beta1", self.beta1), ("beta2", self.beta2)):
            if not 0.0 <= b < 1.0:
                raise ValueError(f"{name} must lie in [0, 1)")
        if self.theta < 0 or self.l2 < 0:
            raise ValueError("theta and l2 must be >= 0")
        if self.theta > 0 and self.family not in ("rmspropw", "adamw"):
            raise ValueError("decoupled decay (theta) only applies to rmspropw/adamw")
        if self.l2 > 0 and self.theta > 0:
            raise ValueError("coupled l2 and decoupled theta are mutually exclusive")
        if self.scheduler_exponent < 0:
            raise ValueError("scheduler exponent must be >= 0")


@dataclass(frozen=True)
class OptimizerState:
    x: np.ndarray
    m: np.ndarray
    v: np.ndarray
    k: int
    diverged: np.ndarray


def init_state(x0) -> OptimizerState:
    x0 = np.asarray(x0, dtype=float)
    return OptimizerState(
        x=x0.copy(),
        m=np.zeros_like(x0),
        v=np.zeros_like(x0),
        k=0,
        diverged=np.zeros(x0.shape[:-1], dtype=bool),
    )


def scheduler_value(vartheta: float, t: int) -> float:
    """Power-law step-size multiplier (t + 1)^(-vartheta); 1 when vartheta = 0."""
    if vartheta < 0:
        raise ValueError("scheduler exponent must be >= 0")
    if vartheta == 0:
        return 1.0
    return float((t + 1.0) ** (-vartheta))


def step(config: OptimizerConfig, state: OptimizerState, grad, scheduler: float = 1.0) -> OptimizerState:
    """One exact update of the configured family.

    Non-finite gradients never raise; the affected trajectories are marked
    diverged and the harness freezes them.
    """
    g = np.asarray(grad, dtype=float)
    if g.shape != state.x.shape:
        raise ValueError(f"gradient shape {g.shape} does not match state shape {state.x.shape}")
    if not 0.0 < scheduler <= 1.0:
        raise ValueError("scheduler value must lie in (0, 1]")

    diverged = state.diverged | ~np.isfinite(g).all(axis=-1)
    if config.l2 > 0:
        g = g + config.l2 * state.x
    eta_t = config.eta * scheduler
    k1 = state.k + 1
    m, v = state.m, state.v

    with np.errstate(invalid="ignore", over="ignore"):
        if config.family == "sgd":
            x = state.x - eta_t * g
        elif config.family == "signsgd":
            x = state.x - eta_t * np.sign(g)
        elif config.family in ("rmsprop", "rmspropw"):
            v = config.beta2 * state.v + (1.0 - config.beta2) * g**2
            x = state.x - eta_t * g / (np.sqrt(v) + config.epsilon)
        else:  # adam / adamw
            m = config.beta1 * state.m + (1.0 - config.beta1) * g
            v = config.beta2 * state.v + (1.0 - config.beta2) * g**2
            m_hat = m / (1.0 - config.beta1**k1)
            v_hat = v / (1.0 - config.beta2**k1)
            x = state.x - eta_t * m_hat / (np.sqrt(v_hat) + config.epsilon)
        if config.family in ("rmspropw", "adamw") and config.theta > 0:
            x = x - eta_t * config.theta * state.x

    return OptimizerState(x=x, m=m, v=v, k=k1, diverged=diverged)


@dataclass(frozen=True)
class ScalingRule:
    """Batch-size rescaling transform: 'ours', 'malladi', or 'linear-sgd'."""

    rule: str
    delta: float

    def __post_init__(self):
        if self.rule not in ("ours", "malladi", "linear-sgd"):
            raise ValueError(f"unknown scaling rule {self.rule!r}")
        if not self.delta > 0:
            raise ValueError("delta must be > 0")


def apply_scaling(config: OptimizerConfig, rule: ScalingRule, rescale_theta: bool = True) -> OptimizerConfig:
    """Transform (eta, betas, theta) for a batch-size factor delta.

    ours:       eta *= sqrt(delta), beta_i -> 1 - sqrt(delta)(1 - beta_i),
                theta *= sqrt(delta); the batch itself scales as B -> delta B.
    malladi:    eta *= sqrt(delta), beta_i -> 1 - delta (1 - beta_i), theta kept.
    linear-sgd: eta *= delta (SGD only).

    delta < 1 inverts the corresponding upscaling exactly.
    """
    delta = rule.delta
    if rule.rule == "linear-sgd":
        if config.family != "sgd":
            raise ValueError("the linear scaling rule applies to SGD only")
        return replace(config, eta=config.eta * delta)

    factor = np.sqrt(delta) if rule.rule == "ours" else delta
    new = {
        "eta": config.eta * np.sqrt(delta),
        "beta1": 1.0 - factor * (1.0 - config.beta1),
        "beta2": 1.0 - factor * (1.0 - config.beta2),
    }
    for name in ("beta1", "beta2"):
        if not 0.0 <= new[name] < 1.0:
            raise ValueError(f"scaling rule drives {name} to {new[name]:.6g}, outside [0, 1)")
    if rule.rule == "ours" and rescale_theta:
        new["theta"] = config.theta * np.sqrt(delta)
    return replace(config, **new)


def batch_factor(rule: ScalingRule) -> float:
    """Factor multiplying the batch size B under the rule."""
    return rule.delta
