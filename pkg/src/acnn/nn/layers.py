"""Layer objects that cache what their backward pass needs.

Every layer exposes ``forward(x, aux=None, train=False)`` and
``backward(grad) -> grad_input``. Static layers ignore ``aux``; adaptive
layers (see :mod:`acnn.adaptive`) consume it. Parameter gradients are
written into :class:`Param` objects, overwriting previous values.
"""

import numpy as np

from ..errors import ContractViolation, UninitializedStatistics
from . import functional as Fn


class Param:
    """A trainable tensor with its gradient and Adam moments."""

    def __init__(self, value, name=""):
        self.value = value
        self.name = name
        self.grad = None
        self.m = np.zeros_like(value)
        self.v = np.zeros_like(value)

    @property
    def size(self):
        return self.value.size

    def astype(self, dtype):
        self.value = self.value.astype(dtype)
        self.m = self.m.astype(dtype)
        self.v = self.v.astype(dtype)
        if self.grad is not None:
            self.grad = self.grad.astype(dtype)


class Layer:
    name = ""

    def params(self):
        return []

    def buffers(self):
        """Non-trainable state that must be persisted (e.g. running stats)."""
        return []

    def forward(self, x, aux=None, train=False):
        raise NotImplementedError

    def backward(self, grad):
        raise NotImplementedError

    def astype(self, dtype):
        for p in self.params():
            p.astype(dtype)
        return self

    def _cached(self, attr):
        value = getattr(self, attr, None)
        if value is None:
            raise ContractViolation(f"{type(self).__name__}.backward called without a cached forward")
        return value


def he_normal(rng, shape, fan_in, dtype=np.float32):
    return (rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)).astype(dtype)


class Conv2d(Layer):
    def __init__(self, in_channels, filters, kernel=(5, 5), padding="same", rng=None,
                 dtype=np.float32, name="conv"):
        rng = rng if rng is not None else np.random.default_rng(0)
        kh, kw = kernel
        fan_in = in_channels * kh * kw
        self.weight = Param(he_normal(rng, (filters, in_channels, kh, kw), fan_in, dtype), name + ".weight")
        self.bias = Param(np.zeros(filters, dtype=dtype), name + ".bias")
        self.padding = padding
        self.name = name
        self._x = None

    def params(self):
        return [self.weight, self.bias]

    def forward(self, x, aux=None, train=False):
        self._x = x
        if not train:
            self._cols = None
            return Fn.conv2d_forward(x, self.weight.value, self.bias.value, self.padding)
        out, self._cols = Fn.conv2d_forward(x, self.weight.value, self.bias.value, self.padding,
                                            return_cols=True)
        return out

    def backward(self, grad):
        cols, self._cols = getattr(self, "_cols", None), None
        gx, gw, gb = Fn.conv2d_backward(self._cached("_x"), self.weight.value, grad, self.padding, cols)
        self.weight.grad, self.bias.grad = gw, gb
        return gx


class Dense(Layer):
    def __init__(self, n_in, n_out, rng=None, dtype=np.float32, name="fc", init_scale=None):
        rng = rng if rng is not None else np.random.default_rng(0)
        std = np.sqrt(2.0 / n_in) if init_scale is None else init_scale
        self.weight = Param((rng.standard_normal((n_in, n_out)) * std).astype(dtype), name + ".weight")
        self.bias = Param(np.zeros(n_out, dtype=dtype), name + ".bias")
        self.name = name
        self._x = None

    def params(self):
        return [self.weight, self.bias]

    def forward(self, x, aux=None, train=False):
        self._x = x
        return Fn.dense_forward(x, self.weight.value, self.bias.value)

    def backward(self, grad):
        gx, gw, gb = Fn.dense_backward(self._cached("_x"), self.weight.value, grad)
        self.weight.grad, self.bias.grad = gw, gb
        return gx


class Activation(Layer):
    def __init__(self, kind="relu", slope=0.01):
        if kind not in Fn.ACTIVATIONS:
            raise ValueError(f"unknown activation {kind!r}")
        self.kind = kind
        self.slope = slope
        self.name = kind
        self._x = self._y = None

    def forward(self, x, aux=None, train=False):
        self._x = x
        self._y = Fn.activation_forward(x, self.kind, self.slope)
        return self._y

    def backward(self, grad):
        return Fn.activation_backward(self._cached("_x"), self._y, grad, self.kind, self.slope)


class MaxPool2(Layer):
    name = "pool"

    def __init__(self):
        self._idx = None
        self._x = None
        self._shape = None

    def forward(self, x, aux=None, train=False):
        self._shape = x.shape
        if train:
            out, self._idx = Fn.maxpool2_forward(x)
            self._x = None
            return out
        # inference: argmax indices are only built if a backward pass asks for them
        self._x, self._idx = x, None
        return Fn.maxpool2_forward(x, with_index=False)

    def backward(self, grad):
        if self._idx is None and self._x is not None:
            _, self._idx = Fn.maxpool2_forward(self._x)
        return Fn.maxpool2_backward(grad, self._cached("_idx"), self._shape)


class LRN(Layer):
    name = "lrn"

    def __init__(self, k=2.0, n=5, alpha=1e-4, beta=0.75):
        self.k, self.n, self.alpha, self.beta = k, n, alpha, beta
        self._x = self._denom = None

    def forward(self, x, aux=None, train=False):
        out, self._denom = Fn.lrn_forward(x, self.k, self.n, self.alpha, self.beta)
        self._x = x
        return out

    def backward(self, grad):
        return Fn.lrn_backward(self._cached("_x"), self._denom, grad, self.n, self.alpha, self.beta)


class BatchNorm2d(Layer):
    def __init__(self, channels, momentum=0.9, eps=1e-5, dtype=np.float32, name="bn"):
        self.gamma = Param(np.ones(channels, dtype=dtype), name + ".gamma")
        self.beta = Param(np.zeros(channels, dtype=dtype), name + ".beta")
        self.running_mean = None
        self.running_var = None
        self.momentum = momentum
        self.eps = eps
        self.name = name
        self.channels = channels
        self._cache = None
        self._train = False

    def params(self):
        return [self.gamma, self.beta]

    def buffers(self):
        return [("running_mean", (self.channels,)), ("running_var", (self.channels,))]

    def forward(self, x, aux=None, train=False):
        self._train = train
        if train:
            out, self._cache = Fn.batchnorm_forward(x, self.gamma.value, self.beta.value, self.eps)
            mean, var = self._cache[2], self._cache[3]
            if self.running_mean is None:
                self.running_mean, self.running_var = mean.copy(), var.copy()
            else:
                m = self.momentum
                self.running_mean = m * self.running_mean + (1 - m) * mean
                self.running_var = m * self.running_var + (1 - m) * var
            return out
        if self.running_mean is None:
            raise UninitializedStatistics("batch norm used for inference before any training step")
        self._cache = ("infer", x)
        return Fn.batchnorm_infer(x, self.gamma.value, self.beta.value,
                                  self.running_mean, self.running_var, self.eps)

    def backward(self, grad):
        cache = self._cached("_cache")
        if isinstance(cache[0], str):
            # inference mode: affine map with frozen statistics
            x = cache[1]
            inv = 1.0 / np.sqrt(self.running_var + self.eps)
            xhat = (x - self.running_mean[None, :, None, None]) * inv[None, :, None, None]
            self.gamma.grad = (grad * xhat).sum(axis=(0, 2, 3))
            self.beta.grad = grad.sum(axis=(0, 2, 3))
            return grad * (self.gamma.value * inv)[None, :, None, None]
        gx, gg, gb = Fn.batchnorm_backward(grad, self.gamma.value, cache)
        self.gamma.grad, self.beta.grad = gg, gb
        return gx

    def astype(self, dtype):
        super().astype(dtype)
        if self.running_mean is not None:
            self.running_mean = self.running_mean.astype(dtype)
            self.running_var = self.running_var.astype(dtype)
        return self


class Flatten(Layer):
    name = "flatten"

    def __init__(self):
        self._shape = None

    def forward(self, x, aux=None, train=False):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, grad):
        return grad.reshape(self._cached("_shape"))


class Sequential(Layer):
    def __init__(self, layers, name="seq"):
        self.layers = list(layers)
        self.name = name

    def params(self):
        return [p for layer in self.layers for p in layer.params()]

    def forward(self, x, aux=None, train=False):
        for layer in self.layers:
            x = layer.forward(x, aux, train)
        return x

    def backward(self, grad):
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        return grad

    def astype(self, dtype):
        for layer in self.layers:
            layer.astype(dtype)
        return self

    def __iter__(self):
        return iter(self.layers)
