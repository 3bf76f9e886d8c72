"""Bias-corrected Adam over named parameter maps."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError


@dataclass
class AdamState:
    step_count: int = 0
    first_moment: dict[str, np.ndarray] = field(default_factory=dict)
    second_moment: dict[str, np.ndarray] = field(default_factory=dict)
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps_adam: float = 1e-8

    def hyper(self) -> dict:
        return {"lr": self.lr, "beta1": self.beta1, "beta2": self.beta2, "eps_adam": self.eps_adam}


def adam_init(params: dict[str, np.ndarray], lr: float = 1e-4, beta1: float = 0.9, beta2: float = 0.999,
              eps_adam: float = 1e-8, names=None) -> AdamState:
    """Zero moments for ``names`` (default: every key of ``params``)."""
    names = list(params) if names is None else list(names)
    return AdamState(
        step_count=0,
        first_moment={k: np.zeros_like(params[k], dtype=np.float64) for k in names},
        second_moment={k: np.zeros_like(params[k], dtype=np.float64) for k in names},
        lr=lr,
        beta1=beta1,
        beta2=beta2,
        eps_adam=eps_adam,
    )


def adam_step(params: dict[str, np.ndarray], grads: dict[str, np.ndarray], state: AdamState):
    """One Adam update of every parameter tracked by ``state``.

    Returns ``(new_params, new_state)``; inputs are left untouched.  Keys of ``params``
    without optimizer moments (e.g. batch-norm buffers) pass through unchanged.
    """
    missing = [k for k in state.first_moment if k not in grads]
    if missing:
        raise ContractError(f"missing gradient for {missing[0]}")
    t = state.step_count + 1
    b1, b2 = state.beta1, state.beta2
    bc1 = 1.0 - b1**t
    bc2 = 1.0 - b2**t
    new_params = dict(params)
    m_new, v_new = {}, {}
    for k, m in state.first_moment.items():
        g = grads[k]
        if g.shape != params[k].shape:
            raise ContractError(f"gradient for {k} has shape {g.shape}, expected {params[k].shape}")
        m = b1 * m + (1.0 - b1) * g
        v = b2 * state.second_moment[k] + (1.0 - b2) * (g * g)
        new_params[k] = params[k] - state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps_adam)
        m_new[k], v_new[k] = m, v
    new_state = AdamState(t, m_new, v_new, state.lr, b1, b2, state.eps_adam)
    return new_params, new_state
