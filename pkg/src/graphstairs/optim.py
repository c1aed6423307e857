"""AdamW with decoupled weight decay.

Updates are deterministic given identical inputs; parameters are iterated in
sorted-name order so checkpoint round-trips are bit-exact.
"""

from __future__ import annotations

from typing import Mapping

import numpy as np

from .autodiff import Tensor
from .errors import ContractError


class AdamW:
    def __init__(self, params: Mapping[str, Tensor], lr: float, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8, weight_decay: float = 0.01):
        if lr < 0:
            raise ContractError(f"learning rate must be >= 0, got {lr}")
        if not 0.0 <= beta1 < 1.0 or not 0.0 <= beta2 < 1.0:
            raise ContractError(f"betas must lie in [0, 1), got ({beta1}, {beta2})")
        if weight_decay < 0:
            raise ContractError(f"weight decay must be >= 0, got {weight_decay}")
        self.params = dict(params)
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.weight_decay = float(weight_decay)
        self.step_count = 0
        self.m = {name: np.zeros_like(p.value) for name, p in self.params.items()}
        self.v = {name: np.zeros_like(p.value) for name, p in self.params.items()}

    def step(self, grads: Mapping[Tensor, np.ndarray]) -> None:
        """One decoupled-weight-decay update; every managed parameter must
        have a gradient in `grads`."""
        missing = [name for name, p in self.params.items() if p not in grads]
        if missing:
            raise ContractError(f"missing gradients for parameters: {sorted(missing)}")
        self.step_count += 1
        t = self.step_count
        bc1 = 1.0 - self.beta1 ** t
        bc2 = 1.0 - self.beta2 ** t
        for name in sorted(self.params):
            p = self.params[name]
            g = grads[p]
            if g.shape != p.value.shape:
                raise ContractError(
                    f"gradient shape {g.shape} does not match parameter "
                    f"{name!r} of shape {p.value.shape}")
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            update = (m / bc1) / (np.sqrt(v / bc2) + self.eps)
            if self.weight_decay:
                p.value *= 1.0 - self.lr * self.weight_decay
            p.value -= self.lr * update

    def state_dict(self) -> dict:
        return {
            "step_count": self.step_count,
            "m": {k: v.copy() for k, v in self.m.items()},
            "v": {k: v.copy() for k, v in self.v.items()},
        }

    def load_state_dict(self, state: dict) -> None:
        if set(state["m"]) != set(self.params):
            raise ContractError("optimizer state does not match managed parameters")
        self.step_count = int(state["step_count"])
        self.m = {k: np.array(v, dtype=np.float64) for k, v in state["m"].items()}
        self.v = {k: np.array(v, dtype=np.float64) for k, v in state["v"].items()}
