"""AdaDelta over a dict of named numpy arrays."""

from __future__ import annotations

from typing import Dict

import numpy as np


class AdaDelta:
    """Zeiler's AdaDelta.  Per element:

        E[g^2]  <- rho E[g^2] + (1 - rho) g^2
        dx      =  -sqrt(E[dx^2] + eps) / sqrt(E[g^2] + eps) * g
        E[dx^2] <- rho E[dx^2] + (1 - rho) dx^2
    """

    def __init__(self, rho: float = 0.99, eps: float = 1e-7):
        self.rho = rho
        self.eps = eps
        self.acc_grad: Dict[str, np.ndarray] = {}
        self.acc_delta: Dict[str, np.ndarray] = {}

    def step(self, params: Dict[str, np.ndarray], grads: Dict[str, np.ndarray]) -> None:
        """Update `params` in place."""
        rho, eps = self.rho, self.eps
        for name, p in params.items():
            g = grads[name]
            if g.shape != p.shape:
                raise ValueError(f"gradient shape {g.shape} does not match {name} {p.shape}")
            if name not in self.acc_grad:
                self.acc_grad[name] = np.zeros_like(p)
                self.acc_delta[name] = np.zeros_like(p)
            eg = self.acc_grad[name]
            ex = self.acc_delta[name]
            eg *= rho
            eg += (1 - rho) * g * g
            dx = -np.sqrt(ex + eps) / np.sqrt(eg + eps) * g
            ex *= rho
            ex += (1 - rho) * dx * dx
            p += dx.astype(p.dtype, copy=False)


def adadelta_step(params, grads, state: AdaDelta = None) -> AdaDelta:
    state = state or AdaDelta()
    state.step(params, grads)
    return state
