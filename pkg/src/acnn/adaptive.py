"""Adaptive convolution: filters generated from side information.

A :class:`FilterManifoldNet` maps an auxiliary vector ``z`` to a flat vector
holding a full bank of convolution filters followed by their biases. An
:class:`AdaptiveConv2d` convolves its input with the bank generated for
each sample's ``z`` and applies an activation, so the layer computes
``h = f(x * g(z; w))`` and only ``w`` (the generator weights) is trained.
"""

import csv

import numpy as np

from .errors import ContractViolation, InvalidArgument
from .nn import functional as Fn
from .nn.layers import Activation, Dense, Layer, Sequential

DEFAULT_HIDDEN = (10, 40)


class FilterManifoldNet(Layer):
    """Fully connected generator ``aux -> [F*C*kh*kw weights, F biases]``.

    Hidden layers use tanh and grow toward the output; the output layer is
    linear. The flat layout is row-major over (F, C, kh, kw), then F biases.
    """

    def __init__(self, aux_dim, filter_shape, hidden=DEFAULT_HIDDEN, rng=None,
                 dtype=np.float32, name="fmn"):
        if aux_dim < 1:
            raise InvalidArgument("aux dimension must be positive")
        hidden = tuple(int(h) for h in hidden)
        if not hidden or any(h < 1 for h in hidden):
            raise InvalidArgument("hidden sizes must be positive")
        if any(b <= a for a, b in zip(hidden, hidden[1:])):
            raise InvalidArgument(f"hidden sizes must strictly increase, got {hidden}")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.aux_dim = aux_dim
        self.filter_shape = tuple(int(s) for s in filter_shape)
        self.hidden = hidden
        self.name = name
        F, C, kh, kw = self.filter_shape
        self.n_weights = F * C * kh * kw
        self.out_dim = self.n_weights + F

        layers = []
        n_in = aux_dim
        for i, h in enumerate(hidden):
            d = Dense(n_in, h, rng, dtype, name=f"{name}.fc{i + 1}", init_scale=1.0 / np.sqrt(n_in))
            d.bias.value[:] = rng.uniform(-0.5, 0.5, h)
            layers += [d, Activation("tanh")]
            n_in = h
        out = Dense(n_in, self.out_dim, rng, dtype, name=f"{name}.out")
        # generated filters should start at the scale of a He-initialised conv
        target = np.sqrt(2.0 / (C * kh * kw))
        w = rng.standard_normal((n_in, self.out_dim)) * (target * np.sqrt(2.0 / n_in))
        w[:, self.n_weights:] *= 0.1
        out.weight.value[:] = w
        out.bias.value[:] = rng.standard_normal(self.out_dim) * (0.1 * target)
        layers.append(out)
        self.net = Sequential(layers, name=name)

    def params(self):
        return self.net.params()

    @property
    def n_params(self):
        return sum(p.size for p in self.params())

    def forward(self, aux, extra=None, train=False):
        aux = np.asarray(aux)
        if aux.ndim != 2 or aux.shape[1] != self.aux_dim:
            raise InvalidArgument(f"aux must be [N, {self.aux_dim}], got shape {aux.shape}")
        dtype = self.params()[0].value.dtype
        return self.net.forward(aux.astype(dtype, copy=False), None, train)

    def backward(self, grad):
        return self.net.backward(grad)

    def split(self, flat):
        """Reshape flat ``[N, out_dim]`` output into ``(filters, biases)``."""
        N = flat.shape[0]
        F = self.filter_shape[0]
        return (flat[:, :self.n_weights].reshape((N,) + self.filter_shape),
                flat[:, self.n_weights:].reshape(N, F))

    def astype(self, dtype):
        self.net.astype(dtype)
        return self


def fmn_forward(fmn, aux):
    """Generate ``(filters, bias)`` for one aux vector ``[d]`` or a batch ``[N, d]``."""
    aux = np.asarray(aux)
    single = aux.ndim == 1
    if single:
        aux = aux[None, :]
    filters, bias = fmn.split(fmn.forward(aux))
    if single:
        return filters[0], bias[0]
    return filters, bias


class AdaptiveConv2d(Layer):
    """Convolution whose filter bank is produced by a filter-manifold network."""

    def __init__(self, in_channels, filters, kernel=(5, 5), aux_dim=1, hidden=DEFAULT_HIDDEN,
                 activation="relu", padding="same", slope=0.01, rng=None, dtype=np.float32,
                 name="aconv"):
        kh, kw = kernel
        self.fmn = FilterManifoldNet(aux_dim, (filters, in_channels, kh, kw), hidden, rng, dtype,
                                     name=name + ".fmn")
        self.act = Activation(activation, slope)
        self.padding = padding
        self.name = name
        self._cache = None

    def params(self):
        return self.fmn.params()

    def generate(self, aux):
        return fmn_forward(self.fmn, aux)

    def forward(self, x, aux=None, train=False):
        if aux is None:
            raise InvalidArgument(f"{self.name} needs an auxiliary input")
        aux = np.asarray(aux)
        if aux.ndim == 1:
            uniq, inverse = aux[None, :], None
        else:
            if aux.shape[0] != x.shape[0]:
                raise InvalidArgument("one aux row per sample required")
            uniq, inverse = np.unique(aux, axis=0, return_inverse=True)
            inverse = inverse.reshape(-1)
            if uniq.shape[0] == 1:
                inverse = None
        flat = self.fmn.forward(uniq, None, train)
        filters, bias = self.fmn.split(flat)
        if inverse is None:
            w, b = filters[0], bias[0]
        else:
            w, b = filters[inverse], bias[inverse]
        if train:
            pre, cols = Fn.conv2d_forward(x, w, b, self.padding, return_cols=True)
        else:
            pre, cols = Fn.conv2d_forward(x, w, b, self.padding), None
        self._cache = (x, w, inverse, uniq.shape[0], cols)
        return self.act.forward(pre)

    def backward(self, grad):
        if self._cache is None:
            raise ContractViolation(f"{self.name}.backward called without a cached forward")
        x, w, inverse, n_uniq, cols = self._cache
        self._cache = (x, w, inverse, n_uniq, None)
        gpre = self.act.backward(grad)
        gx, gw, gb = Fn.conv2d_backward(x, w, gpre, self.padding, cols)
        if inverse is None:
            gflat = np.concatenate([gw.reshape(1, -1), gb.reshape(1, -1)], axis=1)
        else:
            per = np.concatenate([gw.reshape(len(inverse), -1), gb.reshape(len(inverse), -1)], axis=1)
            gflat = np.zeros((n_uniq, per.shape[1]), dtype=per.dtype)
            np.add.at(gflat, inverse, per)
        self.fmn.backward(gflat)
        return gx

    def astype(self, dtype):
        self.fmn.astype(dtype)
        return self


def adaptive_conv_forward(layer, x, aux):
    return layer.forward(x, aux)


def adaptive_conv_backward(layer, grad_out):
    """Backpropagate through the cached forward; returns ``(grad_input, fmn_param_grads)``."""
    gx = layer.backward(grad_out)
    return gx, [p.grad for p in layer.params()]


def manifold_probe(layer, grid, normalizer=None):
    """Filter bank snapshots along a list of raw aux values.

    ``normalizer`` (a :class:`acnn.crowd.context.AuxNormalizer`) maps raw side
    information to the network's input scale when given.
    """
    grid = [np.atleast_1d(np.asarray(z, dtype=np.float64)) for z in grid]
    if not grid:
        raise InvalidArgument("probe grid must be nonempty")
    fmn = layer.fmn if isinstance(layer, AdaptiveConv2d) else layer
    out = []
    for z in grid:
        zin = normalizer.transform(z) if normalizer is not None else z
        w, b = fmn_forward(fmn, zin)
        out.append((w.copy(), b.copy()))
    return out


def probe_distances(snapshots):
    """L2 distance between successive filter snapshots."""
    flat = [np.concatenate([w.ravel(), b.ravel()]).astype(np.float64) for w, b in snapshots]
    return [float(np.linalg.norm(b - a)) for a, b in zip(flat, flat[1:])]


def write_probe_csv(path, grid, snapshots):
    """One row per aux value: aux components, flattened weights, then biases."""
    grid = [np.atleast_1d(np.asarray(z, dtype=np.float64)) for z in grid]
    d = grid[0].size
    w0, b0 = snapshots[0]
    header = ([f"aux{i}" for i in range(d)] + [f"w{i}" for i in range(w0.size)]
              + [f"b{i}" for i in range(b0.size)])
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for z, (w, b) in zip(grid, snapshots):
            writer.writerow([repr(float(v)) for v in z]
                            + [repr(float(v)) for v in w.ravel()]
                            + [repr(float(v)) for v in b.ravel()])
