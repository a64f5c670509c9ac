"""Hand-written forward/backward kernels on NCHW numpy arrays.

Every convolution here is 3x3 with zero padding 1 and stride 1 or 2. Tensors
are plain ``numpy.ndarray`` objects of shape ``(n, c, h, w)``; float32 is the
training precision and float64 is used for gradient checks. All functions
return freshly allocated arrays.
"""

from dataclasses import dataclass

import numpy as np

from ..errors import InvalidArgument

KSIZE = 3
PAD = 1


@dataclass(eq=False)
class ConvParams:
    """Kernel ``(out_ch, in_ch, 3, 3)``, bias ``(out_ch,)`` and stride."""

    kernel: np.ndarray
    bias: np.ndarray
    stride: int = 1

    def __post_init__(self):
        if self.kernel.ndim != 4 or self.kernel.shape[2:] != (KSIZE, KSIZE):
            raise InvalidArgument(f"kernel must be (out, in, 3, 3), got {self.kernel.shape}")
        if self.bias.shape != (self.kernel.shape[0],):
            raise InvalidArgument(
                f"bias shape {self.bias.shape} does not match kernel {self.kernel.shape}")
        if self.stride not in (1, 2):
            raise InvalidArgument(f"stride must be 1 or 2, got {self.stride}")

    @property
    def out_ch(self):
        return self.kernel.shape[0]

    @property
    def in_ch(self):
        return self.kernel.shape[1]


def conv_output_size(size, stride):
    return (size + 2 * PAD - KSIZE) // stride + 1


def tconv_output_size(size, stride):
    # the output-size adjustment makes a stride-2 stage invert an even-sized conv exactly
    adjust = 1 if stride == 2 else 0
    return stride * (size - 1) - 2 * PAD + KSIZE + adjust


def _check4(x, name):
    if not isinstance(x, np.ndarray) or x.ndim != 4:
        shape = getattr(x, "shape", None)
        raise InvalidArgument(f"{name} must be a rank-4 (n, c, h, w) array, got shape {shape}")
    if min(x.shape) < 1:
        raise InvalidArgument(f"{name} has an empty extent: {x.shape}")


def _im2col(x, stride):
    """Patches of ``x`` as ``(n, in_ch*9, ho*wo)``, rows ordered (channel, dy, dx)."""
    n, c, h, w = x.shape
    ho, wo = conv_output_size(h, stride), conv_output_size(w, stride)
    xp = np.pad(x, ((0, 0), (0, 0), (PAD, PAD), (PAD, PAD)))
    cols = np.empty((n, c, KSIZE, KSIZE, ho, wo), dtype=x.dtype)
    for dy in range(KSIZE):
        for dx in range(KSIZE):
            cols[:, :, dy, dx] = xp[:, :, dy:dy + stride * (ho - 1) + 1:stride,
                                    dx:dx + stride * (wo - 1) + 1:stride]
    return cols.reshape(n, c * KSIZE * KSIZE, ho * wo)


def _col2im(cols, shape, stride):
    """Adjoint of :func:`_im2col`: scatter-add ``(n, c, 3, 3, ho, wo)`` patches."""
    n, c, h, w = shape
    ho, wo = cols.shape[-2:]
    xp = np.zeros((n, c, h + 2 * PAD, w + 2 * PAD), dtype=cols.dtype)
    for dy in range(KSIZE):
        for dx in range(KSIZE):
            xp[:, :, dy:dy + stride * (ho - 1) + 1:stride,
               dx:dx + stride * (wo - 1) + 1:stride] += cols[:, :, dy, dx]
    return xp[:, :, PAD:PAD + h, PAD:PAD + w]


def _conv_s1_shift(x, kernel):
    # One GEMM against all nine taps, then shifted accumulation. Avoids
    # materializing a 9x patch matrix when in_ch is large (the 66-channel stem).
    n, ci, h, w = x.shape
    co = kernel.shape[0]
    taps = kernel.transpose(2, 3, 0, 1).reshape(KSIZE * KSIZE * co, ci)
    y = np.matmul(taps, x.reshape(n, ci, h * w)).reshape(n, KSIZE, KSIZE, co, h, w)
    out = np.zeros((n, co, h + 2, w + 2), dtype=x.dtype)
    for dy in range(KSIZE):
        for dx in range(KSIZE):
            out[:, :, 2 - dy:2 - dy + h, 2 - dx:2 - dx + w] += y[:, dy, dx]
    return np.ascontiguousarray(out[:, :, 1:h + 1, 1:w + 1])


def _conv_nobias(x, kernel, stride):
    n, _, h, w = x.shape
    co = kernel.shape[0]
    if stride == 1:
        return _conv_s1_shift(x, kernel)
    ho, wo = conv_output_size(h, stride), conv_output_size(w, stride)
    out = np.matmul(kernel.reshape(co, -1), _im2col(x, stride))
    return out.reshape(n, co, ho, wo)


def _conv_input_grad(upstream, kernel, stride, in_shape):
    n, co, ho, wo = upstream.shape
    ci = kernel.shape[1]
    z = np.matmul(kernel.reshape(co, -1).T, upstream.reshape(n, co, ho * wo))
    return _col2im(z.reshape(n, ci, KSIZE, KSIZE, ho, wo), in_shape, stride)


def _conv_kernel_grad(x, upstream, stride):
    n, co, ho, wo = upstream.shape
    ci = x.shape[1]
    cols = _im2col(x, stride)
    grad = np.matmul(upstream.reshape(n, co, ho * wo), cols.transpose(0, 2, 1)).sum(axis=0)
    return grad.reshape(co, ci, KSIZE, KSIZE)


def conv2d_forward(x, params):
    """3x3 convolution with zero padding 1 and the params' stride."""
    _check4(x, "input")
    if x.shape[1] != params.in_ch:
        raise InvalidArgument(
            f"input shape {x.shape} does not match kernel shape {params.kernel.shape}")
    out = _conv_nobias(x, params.kernel, params.stride)
    out += params.bias[None, :, None, None]
    return out


def conv2d_backward(x, params, upstream, need_input_grad=True):
    """Gradients of :func:`conv2d_forward` w.r.t. input, kernel and bias.

    Returns ``(grad_input, grad_kernel, grad_bias)``; ``grad_input`` is None when
    ``need_input_grad`` is false (first layer of a network).
    """
    _check4(x, "input")
    _check4(upstream, "upstream")
    n, _, h, w = x.shape
    expected = (n, params.out_ch, conv_output_size(h, params.stride),
                conv_output_size(w, params.stride))
    if x.shape[1] != params.in_ch or upstream.shape != expected:
        raise InvalidArgument(
            f"upstream shape {upstream.shape} does not match forward output {expected} "
            f"for input {x.shape} and kernel {params.kernel.shape}")
    grad_bias = upstream.sum(axis=(0, 2, 3))
    grad_kernel = _conv_kernel_grad(x, upstream, params.stride)
    grad_input = None
    if need_input_grad:
        grad_input = _conv_input_grad(upstream, params.kernel, params.stride, x.shape)
    return grad_input, grad_kernel, grad_bias


def tconv2d_forward(x, params, bias=None):
    """Transpose convolution reusing ``params.kernel`` in the adjoint direction.

    Maps ``(n, out_ch, h, w)`` to ``(n, in_ch, H, W)``. ``params.bias`` belongs
    to the forward conv and is ignored; the separate decoder ``bias`` of length
    ``in_ch`` is added after accumulation.
    """
    _check4(x, "input")
    if x.shape[1] != params.out_ch:
        raise InvalidArgument(
            f"input shape {x.shape} does not match kernel shape {params.kernel.shape} "
            "in the transposed direction")
    n, _, h, w = x.shape
    s = params.stride
    out_shape = (n, params.in_ch, tconv_output_size(h, s), tconv_output_size(w, s))
    out = _conv_input_grad(x, params.kernel, s, out_shape)
    if bias is not None:
        if bias.shape != (params.in_ch,):
            raise InvalidArgument(f"decoder bias shape {bias.shape}, expected ({params.in_ch},)")
        out += bias[None, :, None, None]
    return out


def tconv2d_backward(x, params, upstream, need_input_grad=True):
    """Gradients of :func:`tconv2d_forward`: ``(grad_input, grad_kernel, grad_bias)``."""
    _check4(x, "input")
    _check4(upstream, "upstream")
    n, _, h, w = x.shape
    s = params.stride
    expected = (n, params.in_ch, tconv_output_size(h, s), tconv_output_size(w, s))
    if x.shape[1] != params.out_ch or upstream.shape != expected:
        raise InvalidArgument(
            f"upstream shape {upstream.shape} does not match transpose output {expected} "
            f"for input {x.shape} and kernel {params.kernel.shape}")
    grad_bias = upstream.sum(axis=(0, 2, 3))
    # roles of input and upstream swap relative to the forward conv
    grad_kernel = _conv_kernel_grad(upstream, x, s)
    grad_input = _conv_nobias(upstream, params.kernel, s) if need_input_grad else None
    return grad_input, grad_kernel, grad_bias


def relu(x):
    return np.maximum(x, 0)


def relu_grad(x, upstream):
    """Pass ``upstream`` where ``x > 0``; the subgradient at 0 is 0."""
    if x.shape != upstream.shape:
        raise InvalidArgument(f"shape mismatch: input {x.shape} vs upstream {upstream.shape}")
    return np.where(x > 0, upstream, 0).astype(upstream.dtype, copy=False)


def maxpool2(x):
    """2x2/stride-2 max pool. Returns ``(out, argmax)``; ties go to the first
    element of the window in row-major order."""
    _check4(x, "input")
    n, c, h, w = x.shape
    if h % 2 or w % 2:
        raise InvalidArgument(f"maxpool2 needs even height and width, got {x.shape}")
    win = x.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5)
    win = win.reshape(n, c, h // 2, w // 2, 4)
    idx = np.argmax(win, axis=-1)
    out = np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]
    return out, idx


def maxpool2_backward(upstream, idx, in_shape):
    n, c, h, w = in_shape
    if upstream.shape != (n, c, h // 2, w // 2) or idx.shape != upstream.shape:
        raise InvalidArgument(
            f"upstream {upstream.shape} / argmax {idx.shape} do not match input {in_shape}")
    win = np.zeros((n, c, h // 2, w // 2, 4), dtype=upstream.dtype)
    np.put_along_axis(win, idx[..., None], upstream[..., None], axis=-1)
    win = win.reshape(n, c, h // 2, w // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5)
    return win.reshape(n, c, h, w)


def mse_loss(pred, target):
    """Mean squared error over all elements and its gradient w.r.t. ``pred``."""
    if pred.shape != target.shape:
        raise InvalidArgument(f"shape mismatch: pred {pred.shape} vs target {target.shape}")
    diff = pred - target
    k = diff.size
    loss = float(np.sum(diff.astype(np.float64) ** 2) / k)
    return loss, (2.0 / k) * diff


def softmax(logits):
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_ce_loss(logits, labels):
    """Two-class softmax cross-entropy averaged over the batch.

    ``logits`` is ``(n, 2)``, ``labels`` holds class indices in {0, 1}.
    """
    logits = np.asarray(logits)
    labels = np.asarray(labels)
    if logits.ndim != 2 or logits.shape[1] != 2:
        raise InvalidArgument(f"logits must be (n, 2), got {logits.shape}")
    if labels.shape != (logits.shape[0],):
        raise InvalidArgument(f"labels shape {labels.shape} does not match logits {logits.shape}")
    if labels.size and (labels.min() < 0 or labels.max() > 1):
        raise InvalidArgument(f"labels must be 0 or 1, got values in [{labels.min()}, {labels.max()}]")
    n = logits.shape[0]
    z = logits - logits.max(axis=1, keepdims=True)
    log_norm = np.log(np.exp(z).sum(axis=1))
    rows = np.arange(n)
    loss = float(np.mean(log_norm - z[rows, labels]))
    grad = softmax(logits)
    grad[rows, labels] -= 1
    return loss, grad / n
