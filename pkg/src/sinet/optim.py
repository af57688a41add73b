"""Adam with L2 weight decay folded into the gradient."""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DivergenceError


@dataclass(frozen=True)
class OptimConfig:
    lr: float = 7.5e-3
    weight_decay: float = 2e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.lr <= 0:
            raise ConfigError("lr must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ConfigError("betas must lie in [0, 1)")


@dataclass
class AdamState:
    step: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params, grads, state, cfg):
    """One bias-corrected Adam update, in place.

    ``params`` and ``grads`` map names to arrays.  Parameters with no gradient
    entry are left alone.  Returns ``(params, state)``.
    """
    state.step += 1
    t = state.step
    c1 = 1.0 - cfg.beta1 ** t
    c2 = 1.0 - cfg.beta2 ** t
    for name, p in params.items():
        g = grads.get(name)
        if g is None:
            continue
        if not np.all(np.isfinite(g)):
            raise DivergenceError(f"non-finite gradient for parameter {name!r} at step {t}")
        if cfg.weight_decay:
            g = g + cfg.weight_decay * p
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        v = state.v[name]
        m *= cfg.beta1
        m += (1 - cfg.beta1) * g
        v *= cfg.beta2
        v += (1 - cfg.beta2) * g * g
        p -= cfg.lr * (m / c1) / (np.sqrt(v / c2) + cfg.eps)
    return params, state


class Adam:
    """Adam over a list of ``(name, Tensor)`` pairs."""

    def __init__(self, named_params, cfg=OptimConfig()):
        self.named = list(named_params)
        self.cfg = cfg
        self.state = AdamState()

    def step(self):
        params = {n: p.data for n, p in self.named}
        grads = {n: p.grad for n, p in self.named if p.grad is not None}
        adam_step(params, grads, self.state, self.cfg)

    def zero_grad(self):
        for _, p in self.named:
            p.grad = None
