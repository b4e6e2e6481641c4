"""Adam with bias correction and a per-epoch exponential learning-rate decay."""

from dataclasses import dataclass, field

import numpy as np


@dataclass
class OptimizerState:
    lr: float = 1e-3
    decay: float = 0.95
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)

    def end_epoch(self):
        self.lr *= self.decay


def adam_step(params, grads, state):
    """Update ``params`` (numpy arrays or Tensors) in place.

    A ``None`` gradient counts as zero.  The step counter advances even when
    every gradient is zero.
    """
    arrays = [p if isinstance(p, np.ndarray) else p.data for p in params]
    if not state.m:
        state.m = [np.zeros_like(a) for a in arrays]
        state.v = [np.zeros_like(a) for a in arrays]
    if len(state.m) != len(arrays):
        raise ValueError("optimizer state was built for a different parameter list")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for a, g, m, v in zip(arrays, grads, state.m, state.v):
        if m.shape != a.shape:
            raise ValueError(f"moment buffer {m.shape} does not match parameter {a.shape}")
        if g is None:
            g = 0.0
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * np.square(g)
        a -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


class Adam:
    def __init__(self, params, lr=1e-3, decay=0.95, betas=(0.9, 0.999), eps=1e-8):
        self.params = list(params)
        self.state = OptimizerState(lr=lr, decay=decay, beta1=betas[0], beta2=betas[1], eps=eps)

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def step(self):
        adam_step(self.params, [p.grad for p in self.params], self.state)

    def end_epoch(self):
        self.state.end_epoch()

    @property
    def lr(self):
        return self.state.lr
