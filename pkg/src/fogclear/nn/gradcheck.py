"""Central finite-difference gradient checking."""

import numpy as np


def relative_error(analytic, numeric):
    return np.abs(analytic - numeric) / np.maximum(1.0, np.abs(analytic) + np.abs(numeric))


def numerical_grad(loss_fn, param, eps=1e-5):
    """Central differences of scalar ``loss_fn()`` w.r.t. every entry of ``param``.

    ``param`` is perturbed in place and restored, so ``loss_fn`` must read it
    through whatever structure owns it.
    """
    grad = np.zeros_like(param, dtype=np.float64)
    flat = param.reshape(-1)
    out = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        up = loss_fn()
        flat[i] = orig - eps
        down = loss_fn()
        flat[i] = orig
        out[i] = (up - down) / (2 * eps)
    return grad


def grad_check(loss_and_grads, params, eps=1e-5, loss_fn=None):
    """Max relative error between analytic and numeric gradients.

    ``loss_and_grads()`` returns ``(loss, grads)`` with ``grads`` keyed like
    ``params``. Relative error is ``|a - n| / max(1, |a| + |n|)``. Parameters
    should be float64. Returns 0.0 for an empty parameter set. A forward-only
    ``loss_fn`` may be given to skip the backward pass while probing.
    """
    _, analytic = loss_and_grads()
    if loss_fn is None:
        def loss_fn():
            return loss_and_grads()[0]
    worst = 0.0
    for name, p in params.items():
        numeric = numerical_grad(loss_fn, p, eps)
        err = relative_error(np.asarray(analytic[name], dtype=np.float64), numeric)
        if err.size:
            worst = max(worst, float(err.max()))
    return worst
