"""Parameter update rules: Adadelta for the CNN, plain SGD for the MLP.

Both steps mutate the parameter arrays in place and are deterministic
functions of (params, grads, state).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ShapeError


@dataclass
class AdadeltaState:
    """Decay-averaged squared gradients and squared updates.

    Accumulators are created lazily on the first step so one state object
    can be built before the parameter list exists.
    """

    rho: float = 0.95
    eps: float = 1e-6
    sq_grad: list[np.ndarray] = field(default_factory=list)
    sq_delta: list[np.ndarray] = field(default_factory=list)

    def __post_init__(self):
        if not 0.0 <= self.rho < 1.0:
            raise ValueError(f"rho must be in [0, 1), got {self.rho}")
        if self.eps <= 0.0:
            raise ValueError(f"eps must be positive, got {self.eps}")


@dataclass
class SgdState:
    learning_rate: float = 0.1

    def __post_init__(self):
        if self.learning_rate <= 0.0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")


def _check_parallel(params, grads) -> None:
    if len(params) != len(grads):
        raise ShapeError(f"{len(params)} params vs {len(grads)} grads")
    for i, (p, g) in enumerate(zip(params, grads)):
        if p.shape != g.shape:
            raise ShapeError(f"param {i}: shape {p.shape} vs grad {g.shape}")


def adadelta_step(params, grads, state: AdadeltaState) -> None:
    """One Adadelta update:

        E[g^2]  <- rho E[g^2] + (1-rho) g^2
        dx      <- -sqrt(E[dx^2] + eps) / sqrt(E[g^2] + eps) * g
        E[dx^2] <- rho E[dx^2] + (1-rho) dx^2
        x       <- x + dx
    """
    _check_parallel(params, grads)
    if not state.sq_grad:
        state.sq_grad = [np.zeros_like(p) for p in params]
        state.sq_delta = [np.zeros_like(p) for p in params]
    _check_parallel(params, state.sq_grad)
    rho, eps = state.rho, state.eps
    for p, g, eg2, ed2 in zip(params, grads, state.sq_grad, state.sq_delta):
        eg2 *= rho
        eg2 += (1.0 - rho) * g * g
        delta = -np.sqrt(ed2 + eps) / np.sqrt(eg2 + eps) * g
        ed2 *= rho
        ed2 += (1.0 - rho) * delta * delta
        p += delta


def sgd_step(params, grads, state: SgdState) -> None:
    """Plain gradient descent: x <- x - lr * g."""
    _check_parallel(params, grads)
    for p, g in zip(params, grads):
        p -= state.learning_rate * g
