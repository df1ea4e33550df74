"""Adaptive-optimizer SDE laboratory.

Analytic landscapes, gradient-noise models, discrete optimizers
(SGD, SignSGD, RMSprop(W), Adam(W)), their continuous-time SDE weak
approximations, closed-form oracles, and a Monte-Carlo harness that
verifies the oracles against ensemble statistics.
"""

from adaptive_sde_lab import analytics, harness, landscapes, noise, optimizers, sde_models

__all__ = ["analytics", "harness", "landscapes", "noise", "optimizers", "sde_models"]

__version__ = "0.1.0"
