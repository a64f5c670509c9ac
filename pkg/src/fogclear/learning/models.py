"""Tied-weight convolutional encoder-decoder and the winner classifier.

Both networks are built from the kernels in :mod:`fogclear.nn` with explicit
forward caches and hand-written backward passes. Parameters are exposed as an
ordered ``name -> array`` dict (``named_tensors``) which is what the optimizer
and the checkpoint format operate on; a tied kernel appears once, under its
encoder name.
"""

from dataclasses import dataclass, field

import numpy as np

from ..errors import InvalidArgument
from ..gamestate import GRID, N_CHANNELS
from ..nn import (
    ConvParams,
    conv2d_backward,
    conv2d_forward,
    maxpool2,
    maxpool2_backward,
    relu,
    relu_grad,
    softmax,
    tconv2d_backward,
    tconv2d_forward,
    xavier_init,
)

# --- encoder-decoder -----------------------------------------------------


@dataclass(frozen=True)
class EncoderDecoderConfig:
    """Stem conv to ``base_filters`` then ``down_stages`` stride-2 convs.

    ``channels`` may be given explicitly; it must start at ``base_filters`` and
    double at every stride-2 stage.
    """

    base_filters: int = 32
    down_stages: int = 3
    in_channels: int = N_CHANNELS
    spatial: int = GRID
    channels: tuple = None

    def __post_init__(self):
        if self.base_filters < 1 or self.down_stages < 0:
            raise InvalidArgument("base_filters must be >= 1 and down_stages >= 0")
        if self.spatial % (2 ** self.down_stages):
            raise InvalidArgument(
                f"spatial size {self.spatial} is not divisible by 2**{self.down_stages}")
        chans = self.stage_channels()
        if chans[0] != self.base_filters or len(chans) != self.down_stages + 1:
            raise InvalidArgument(f"channels {chans} do not match base_filters/down_stages")
        for a, b in zip(chans, chans[1:]):
            if b != 2 * a:
                raise InvalidArgument(f"channels must double when spatial size halves, got {chans}")

    def stage_channels(self):
        if self.channels is not None:
            return tuple(self.channels)
        return tuple(self.base_filters * 2 ** i for i in range(self.down_stages + 1))

    def parameter_count(self):
        """Closed form: every encoder conv ``9*cin*cout + cout``, plus one
        decoder bias of length ``cin`` per stage (tied kernels counted once)."""
        chans = self.stage_channels()
        ins = (self.in_channels,) + chans[:-1]
        return sum(9 * ci * co + co + ci for ci, co in zip(ins, chans))


@dataclass(eq=False)
class DecoderStage:
    """Transpose stage that borrows its kernel from an encoder conv."""

    source: ConvParams
    bias: np.ndarray

    @property
    def kernel(self):
        return self.source.kernel

    @property
    def stride(self):
        return self.source.stride


@dataclass(eq=False)
class EncoderDecoderParams:
    config: EncoderDecoderConfig
    encoder: list
    decoder: list = field(default_factory=list)

    def named_tensors(self):
        out = {}
        for i, enc in enumerate(self.encoder):
            out[f"enc{i}.kernel"] = enc.kernel
            out[f"enc{i}.bias"] = enc.bias
        n = len(self.encoder)
        for j, dec in enumerate(self.decoder):
            out[f"dec{n - 1 - j}.bias"] = dec.bias
        return out

    def parameter_count(self):
        return sum(a.size for a in self.named_tensors().values())

    @property
    def dtype(self):
        return self.encoder[0].kernel.dtype


def _assemble_ed(config, tensors):
    n = config.down_stages + 1
    encoder = [ConvParams(tensors[f"enc{i}.kernel"], tensors[f"enc{i}.bias"], 1 if i == 0 else 2)
               for i in range(n)]
    # decoder runs deepest stage first
    decoder = [DecoderStage(encoder[i], tensors[f"dec{i}.bias"]) for i in reversed(range(n))]
    return EncoderDecoderParams(config, encoder, decoder)


def build_encoder_decoder(config=EncoderDecoderConfig(), seed=0, dtype=np.float32):
    chans = config.stage_channels()
    ins = (config.in_channels,) + chans[:-1]
    tensors = {}
    for i, (ci, co) in enumerate(zip(ins, chans)):
        tensors[f"enc{i}.kernel"] = xavier_init((co, ci, 3, 3), seed=[seed, i], dtype=dtype)
        tensors[f"enc{i}.bias"] = np.zeros(co, dtype)
        tensors[f"dec{i}.bias"] = np.zeros(ci, dtype)
    return _assemble_ed(config, tensors)


def ed_from_tensors(tensors, dtype=None):
    """Rebuild an encoder-decoder from ``named_tensors`` output, inferring the architecture."""
    n = 0
    while f"enc{n}.kernel" in tensors:
        n += 1
    if n == 0:
        raise InvalidArgument("no encoder kernels among tensors")
    expected = {f"{p}{i}.{s}" for i in range(n) for p, s in
                (("enc", "kernel"), ("enc", "bias"), ("dec", "bias"))}
    if set(tensors) != expected:
        raise InvalidArgument(f"unexpected tensor names: {sorted(set(tensors) ^ expected)}")
    chans = tuple(tensors[f"enc{i}.kernel"].shape[0] for i in range(n))
    config = EncoderDecoderConfig(base_filters=chans[0], down_stages=n - 1,
                                  in_channels=tensors["enc0.kernel"].shape[1], channels=chans)
    if dtype is not None:
        tensors = {k: np.asarray(v, dtype=dtype) for k, v in tensors.items()}
    return _assemble_ed(config, tensors)


def copy_ed(params):
    """Deep copy that keeps the kernel tying intact."""
    return _assemble_ed(params.config, {k: v.copy() for k, v in params.named_tensors().items()})


def _check_map_batch(x, channels, name="input"):
    if not isinstance(x, np.ndarray) or x.ndim != 4 or x.shape[1] != channels:
        raise InvalidArgument(
            f"{name} must be shaped (n, {channels}, h, w), got {getattr(x, 'shape', None)}")


def ed_forward_cached(params, x):
    _check_map_batch(x, params.config.in_channels)
    if x.shape[2] % 2 ** params.config.down_stages or x.shape[3] % 2 ** params.config.down_stages:
        raise InvalidArgument(
            f"spatial size {x.shape[2:]} must be divisible by 2**{params.config.down_stages}")
    x = x.astype(params.dtype, copy=False)
    enc_in, enc_pre = [], []
    h = x
    for conv in params.encoder:
        enc_in.append(h)
        z = conv2d_forward(h, conv)
        enc_pre.append(z)
        h = relu(z)
    dec_in, dec_pre = [], []
    last = len(params.decoder) - 1
    for j, stage in enumerate(params.decoder):
        dec_in.append(h)
        z = tconv2d_forward(h, stage.source, stage.bias)
        if j == last:
            z += x  # additive skip before the final ReLU
        dec_pre.append(z)
        h = relu(z)
    cache = (enc_in, enc_pre, dec_in, dec_pre)
    return h, cache


def ed_forward(params, x):
    """``ReLU(decode(encode(x)) + x)`` for a batch ``(n, 66, 32, 32)``."""
    return ed_forward_cached(params, x)[0]


def ed_backward(params, cache, grad_out):
    """Parameter gradients keyed like :meth:`EncoderDecoderParams.named_tensors`.

    Each tied kernel's gradient is the sum of its encoder and decoder uses.
    """
    enc_in, enc_pre, dec_in, dec_pre = cache
    n = len(params.encoder)
    grads = {}
    g = grad_out
    for j in reversed(range(len(params.decoder))):
        stage = params.decoder[j]
        i = n - 1 - j
        g = relu_grad(dec_pre[j], g)
        g, gk, gb = tconv2d_backward(dec_in[j], stage.source, g)
        grads[f"dec{i}.bias"] = gb
        grads[f"enc{i}.kernel"] = gk
    for i in reversed(range(n)):
        g = relu_grad(enc_pre[i], g)
        g, gk, gb = conv2d_backward(enc_in[i], params.encoder[i], g, need_input_grad=i > 0)
        grads[f"enc{i}.kernel"] += gk
        grads[f"enc{i}.bias"] = gb
    return grads


# --- classifier ------------------------------------------------------------

POOL_AFTER = (1, 3)  # zero-based conv indices followed by a 2x2 max pool


@dataclass(frozen=True)
class ClassifierConfig:
    widths: tuple = (16, 16, 32, 32, 64)
    in_channels: int = N_CHANNELS

    def __post_init__(self):
        if len(self.widths) != 5 or min(self.widths) < 1:
            raise InvalidArgument(f"classifier needs five positive conv widths, got {self.widths}")


@dataclass(eq=False)
class ClassifierParams:
    config: ClassifierConfig
    convs: list
    head_weight: np.ndarray  # (2, C): a 1x1 conv to two channels
    head_bias: np.ndarray

    def named_tensors(self):
        out = {}
        for i, conv in enumerate(self.convs):
            out[f"conv{i}.kernel"] = conv.kernel
            out[f"conv{i}.bias"] = conv.bias
        out["head.weight"] = self.head_weight
        out["head.bias"] = self.head_bias
        return out

    @property
    def dtype(self):
        return self.head_weight.dtype


def _assemble_clf(config, tensors):
    convs = [ConvParams(tensors[f"conv{i}.kernel"], tensors[f"conv{i}.bias"], 1) for i in range(5)]
    return ClassifierParams(config, convs, tensors["head.weight"], tensors["head.bias"])


def build_classifier(seed=0, config=ClassifierConfig(), dtype=np.float32):
    tensors = {}
    cin = config.in_channels
    for i, co in enumerate(config.widths):
        tensors[f"conv{i}.kernel"] = xavier_init((co, cin, 3, 3), seed=[seed, i], dtype=dtype)
        tensors[f"conv{i}.bias"] = np.zeros(co, dtype)
        cin = co
    tensors["head.weight"] = xavier_init((2, cin), seed=[seed, 5], dtype=dtype)
    tensors["head.bias"] = np.zeros(2, dtype)
    return _assemble_clf(config, tensors)


def clf_from_tensors(tensors, dtype=None):
    expected = {f"conv{i}.{s}" for i in range(5) for s in ("kernel", "bias")} | {"head.weight", "head.bias"}
    if set(tensors) != expected:
        raise InvalidArgument(f"unexpected tensor names: {sorted(set(tensors) ^ expected)}")
    widths = tuple(tensors[f"conv{i}.kernel"].shape[0] for i in range(5))
    config = ClassifierConfig(widths, tensors["conv0.kernel"].shape[1])
    if dtype is not None:
        tensors = {k: np.asarray(v, dtype=dtype) for k, v in tensors.items()}
    return _assemble_clf(config, tensors)


def copy_clf(params):
    return _assemble_clf(params.config, {k: v.copy() for k, v in params.named_tensors().items()})


def clf_features(params, x):
    """Penultimate feature map (after the fifth conv and its ReLU) plus the cache."""
    _check_map_batch(x, params.config.in_channels)
    if x.shape[2] % 4 or x.shape[3] % 4:
        raise InvalidArgument(f"spatial size {x.shape[2:]} must be divisible by 4")
    h = x.astype(params.dtype, copy=False)
    cache = []
    for i, conv in enumerate(params.convs):
        z = conv2d_forward(h, conv)
        a = relu(z)
        pool = None
        if i in POOL_AFTER:
            pre_shape = a.shape
            a, idx = maxpool2(a)
            pool = (idx, pre_shape)
        cache.append((h, z, pool))
        h = a
    return h, cache


def clf_logits_cached(params, x):
    feat, cache = clf_features(params, x)
    pooled = feat.mean(axis=(2, 3))
    logits = pooled @ params.head_weight.T + params.head_bias
    return logits, (cache, feat.shape, pooled)


def clf_logits(params, x):
    return clf_logits_cached(params, x)[0]


def clf_predict(params, fmap):
    """Win probabilities ``[P(A wins), P(B wins)]`` for one map or a batch."""
    fmap = np.asarray(fmap)
    single = fmap.ndim == 3
    if single:
        fmap = fmap[None]
    if fmap.shape[1:] != (params.config.in_channels, GRID, GRID):
        raise InvalidArgument(f"map must be shaped (66, 32, 32), got {fmap.shape[-3:]}")
    probs = softmax(clf_logits(params, fmap).astype(np.float64))
    return probs[0] if single else probs


def clf_backward(params, cache, grad_logits):
    conv_cache, feat_shape, pooled = cache
    grads = {"head.weight": grad_logits.T @ pooled, "head.bias": grad_logits.sum(axis=0)}
    g_pooled = grad_logits @ params.head_weight
    n, c, h, w = feat_shape
    g = np.broadcast_to((g_pooled / (h * w))[:, :, None, None], feat_shape).astype(pooled.dtype)
    for i in reversed(range(5)):
        h_in, z, pool = conv_cache[i]
        if pool is not None:
            idx, pre_shape = pool
            g = maxpool2_backward(g, idx, pre_shape)
        g = relu_grad(z, g)
        g, gk, gb = conv2d_backward(h_in, params.convs[i], g, need_input_grad=i > 0)
        grads[f"conv{i}.kernel"] = gk
        grads[f"conv{i}.bias"] = gb
    return grads
