"""
NumHTML - Optimisers

Adam with bias correction and an exponential learning-rate decay schedule.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, Iterable, Mapping, Optional, Tuple

import numpy as np

from utils.exceptions import ContractError, DimensionError
from .tensor import Tensor

logger = logging.getLogger(__name__)


@dataclass
class AdamState:
    """First/second moment estimates per parameter name plus the step counter."""
    step: int = 0
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(
    params: Mapping[str, np.ndarray],
    grads: Mapping[str, np.ndarray],
    state: AdamState,
    lr: float,
    betas: Tuple[float, float] = (0.9, 0.999),
    eps: float = 1e-8,
) -> Dict[str, np.ndarray]:
    """
    Apply one bias-corrected Adam update.

    Args:
        params: Parameter arrays by name
        grads: Gradient arrays by name (names without a gradient are left unchanged)
        state: Moment estimates, updated in place
        lr: Learning rate for this step
        betas: Exponential decay rates of the moment estimates
        eps: Denominator stabiliser

    Returns:
        New parameter arrays by name
    """
    if lr <= 0:
        raise ContractError(f"learning rate must be positive, got {lr}")
    beta1, beta2 = betas
    state.step += 1
    correction1 = 1.0 - beta1 ** state.step
    correction2 = 1.0 - beta2 ** state.step

    updated = {}
    for name, value in params.items():
        grad = grads.get(name)
        if grad is None:
            updated[name] = value
            continue
        if grad.shape != value.shape:
            raise DimensionError(f"gradient for {name} has shape {grad.shape}, parameter {value.shape}")
        m = state.m.get(name)
        v = state.v.get(name)
        if m is None:
            m = np.zeros_like(value)
            v = np.zeros_like(value)
        m = beta1 * m + (1.0 - beta1) * grad
        v = beta2 * v + (1.0 - beta2) * grad * grad
        state.m[name] = m
        state.v[name] = v
        m_hat = m / correction1
        v_hat = v / correction2
        updated[name] = value - lr * m_hat / (np.sqrt(v_hat) + eps)
    return updated


class ExponentialDecay:
    """Learning rate multiplied by ``decay`` once per completed epoch."""

    def __init__(self, base_lr: float, decay: float = 0.95):
        self.base_lr = base_lr
        self.decay = decay

    def __call__(self, epoch: int) -> float:
        return self.base_lr * self.decay ** epoch


class Adam:
    """Adam over a dict of named parameter tensors, skipping frozen names."""

    def __init__(
        self,
        params: Mapping[str, Tensor],
        lr: float = 1e-3,
        betas: Tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
        frozen: Optional[Iterable[str]] = None,
    ):
        self.params = dict(params)
        self.lr = lr
        self.betas = betas
        self.eps = eps
        self.frozen = set(frozen or ())
        self.state = AdamState()
        if self.frozen:
            logger.info(f"Adam: {len(self.frozen)} frozen parameter tensors")

    def step(self, grads: Optional[Mapping[str, np.ndarray]] = None, lr: Optional[float] = None) -> None:
        """
        Update parameters in place.

        Args:
            grads: Gradients by name; defaults to each parameter's ``grad``
            lr: Learning rate override for this step (decay schedules)
        """
        if grads is None:
            grads = {name: p.grad for name, p in self.params.items() if p.grad is not None}
        grads = {name: g for name, g in grads.items() if name not in self.frozen}
        values = {name: p.data for name, p in self.params.items() if name not in self.frozen}
        updated = adam_step(values, grads, self.state, lr or self.lr, self.betas, self.eps)
        for name, value in updated.items():
            # in place so that references held by the model stay valid
            self.params[name].data[...] = value

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.zero_grad()
