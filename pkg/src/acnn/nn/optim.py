"""Adam with bias correction."""

from dataclasses import dataclass

import numpy as np

from ..errors import ContractViolation, InvalidArgument


@dataclass
class AdamConfig:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0

    def __post_init__(self):
        if self.lr <= 0 or not (0 < self.beta1 < 1) or not (0 < self.beta2 < 1) or self.eps <= 0:
            raise InvalidArgument(f"invalid Adam settings: {self}")


def adam_step(params, cfg):
    """Apply one Adam update to every parameter and consume their gradients.

    Gradients are cleared after the update so a second call without a fresh
    backward pass is rejected.
    """
    for p in params:
        if p.grad is None:
            raise ContractViolation(f"parameter {p.name!r} has no fresh gradient")
        if p.grad.shape != p.value.shape:
            raise ContractViolation(f"gradient shape {p.grad.shape} != {p.value.shape} for {p.name!r}")
    cfg.step += 1
    t = cfg.step
    c1 = 1.0 - cfg.beta1 ** t
    c2 = 1.0 - cfg.beta2 ** t
    for p in params:
        g = p.grad.astype(p.value.dtype, copy=False)
        p.m *= cfg.beta1
        p.m += (1 - cfg.beta1) * g
        p.v *= cfg.beta2
        p.v += (1 - cfg.beta2) * (g * g)
        p.value -= (cfg.lr * (p.m / c1) / (np.sqrt(p.v / c2) + cfg.eps)).astype(p.value.dtype)
        p.grad = None
    return params
