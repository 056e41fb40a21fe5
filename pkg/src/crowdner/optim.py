"""RMSprop with L2 weight decay over named parameters."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class RmsPropState:
    """Per-parameter accumulator of squared gradients."""

    decay: float = 0.9
    eps: float = 1e-8
    acc: dict = field(default_factory=dict)

    def accumulator(self, param):
        a = self.acc.get(param.name)
        if a is None:
            a = np.zeros_like(param.value)
            self.acc[param.name] = a
        return a


def rmsprop_step(params, state, lr, l2=0.0):
    """One update: g = grad + l2*value; acc = d*acc + (1-d)*g^2; v -= lr*g/sqrt(acc+eps).

    The whole step is validated before anything is written, so a
    non-finite update aborts without touching any parameter; gradients
    are zeroed after a successful step.
    """
    decay = state.decay
    staged = []
    for p in params:
        # non-finite intermediates are caught explicitly below
        with np.errstate(invalid="ignore", over="ignore"):
            g = p.grad + l2 * p.value if l2 != 0.0 else p.grad
            acc = decay * state.accumulator(p) + (1.0 - decay) * g * g
            update = lr * g / np.sqrt(acc + state.eps)
        if not np.all(np.isfinite(update)):
            raise FloatingPointError(f"non-finite update for parameter {p.name!r}")
        staged.append((p, acc, update))
    for p, acc, update in staged:
        state.acc[p.name] = acc
        p.value -= update
        p.zero_grad()
