"""Adam optimizer and Glorot-uniform initialization."""

from dataclasses import dataclass, field

import numpy as np

from ..errors import InvalidArgument


@dataclass
class AdamState:
    """First/second moment estimates keyed by parameter name, plus step count."""

    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)


def adam_step(params, grads, state, lr=1e-3):
    """One bias-corrected Adam update, applied in place.

    ``params`` and ``grads`` map names to arrays. Updating in place keeps any
    array shared between layers (tied kernels) a single storage.
    """
    if lr <= 0:
        raise InvalidArgument(f"learning rate must be positive, got {lr}")
    for name, g in grads.items():
        if name not in params:
            raise InvalidArgument(f"gradient for unknown parameter {name!r}")
        if g.shape != params[name].shape:
            raise InvalidArgument(
                f"gradient shape {g.shape} does not match parameter {name!r} {params[name].shape}")
        if not np.all(np.isfinite(g)):
            raise InvalidArgument(f"non-finite gradient for parameter {name!r}")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    corr1 = 1.0 - b1 ** state.t
    corr2 = 1.0 - b2 ** state.t
    for name, g in grads.items():
        p = params[name]
        if name not in state.m:
            state.m[name] = np.zeros_like(p)
            state.v[name] = np.zeros_like(p)
        m, v = state.m[name], state.v[name]
        m *= b1
        m += (1 - b1) * g
        v *= b2
        v += (1 - b2) * g * g
        m_hat = m / corr1
        v_hat = v / corr2
        p -= (lr * m_hat / (np.sqrt(v_hat) + state.eps)).astype(p.dtype, copy=False)
    return params, state


def fans(shape):
    """(fan_in, fan_out) for dense ``(out, in)`` or conv ``(out, in, kh, kw)`` shapes."""
    if len(shape) == 2:
        return shape[1], shape[0]
    if len(shape) == 4:
        rf = shape[2] * shape[3]
        return shape[1] * rf, shape[0] * rf
    raise InvalidArgument(f"no fan definition for shape {shape}")


def xavier_bound(shape):
    fan_in, fan_out = fans(shape)
    return float(np.sqrt(6.0 / (fan_in + fan_out)))


def xavier_init(shape, seed, dtype=np.float32):
    """Glorot-uniform weights in ``[-L, L]``; rank-1 shapes (biases) are zeros."""
    shape = tuple(int(s) for s in shape)
    if len(shape) == 1:
        return np.zeros(shape, dtype=dtype)
    bound = xavier_bound(shape)
    rng = np.random.default_rng(seed)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)
