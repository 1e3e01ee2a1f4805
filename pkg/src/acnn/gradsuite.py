"""Finite-difference gradient suites, one per layer family.

Each suite builds a small 64-bit instance, runs a central-difference check
and reports the worst relative error against its tolerance.
"""

from dataclasses import dataclass

import numpy as np

from .adaptive import AdaptiveConv2d
from .counting import CountingModel, LayerSpec, ModelSpec, multitask_step
from .nn import functional as Fn
from .nn.gradcheck import grad_check, rel_error
from .nn.layers import LRN, Activation, BatchNorm2d, Conv2d, Dense, Flatten, MaxPool2, Param, Sequential

TOL_DENSE = 1e-8
TOL_CONV = 1e-5
TOL_CHAIN = 1e-4
# one-sided slopes disagreeing by more than this fraction mark a non-differentiable point
KINK = 1e-2


@dataclass
class SuiteResult:
    name: str
    error: float
    tolerance: float

    @property
    def passed(self):
        return bool(self.error < self.tolerance)


class _Loss:
    """Random linear functional; keeps gradients well away from zero."""

    def __init__(self, rng, shape):
        self.c = rng.standard_normal(shape)

    def __call__(self, y):
        return float(np.sum(self.c * y)), self.c


def _sq(y):
    return float(0.5 * np.sum(y * y)), y


class _PerSampleConv:
    """Conv with explicit per-sample filter banks as trainable tensors."""

    def __init__(self, rng, n, f, c, k):
        self.w = Param(rng.standard_normal((n, f, c, k, k)), "w")
        self.b = Param(rng.standard_normal((n, f)), "b")

    def params(self):
        return [self.w, self.b]

    def forward(self, x, aux=None, train=False):
        self.x = x
        return Fn.conv2d_forward(x, self.w.value, self.b.value)

    def backward(self, g):
        gx, self.w.grad, self.b.grad = Fn.conv2d_backward(self.x, self.w.value, g)
        return gx


class _LossLayer:
    """Wraps ``loss(logits, target)`` so the checker sees a scalar output."""

    def __init__(self, fn, target):
        self.fn, self.target = fn, target

    def params(self):
        return []

    def forward(self, x, aux=None, train=False):
        self.loss, self.g = self.fn(x, self.target)
        return np.array(self.loss)

    def backward(self, g):
        return self.g * g


def _bounded(rng, shape, lo=0.5, hi=1.5, signed=True):
    """Magnitudes in [lo, hi]; keeps every gradient entry away from zero so the
    relative-error floor never divides roundoff by a vanishing gradient."""
    v = rng.uniform(lo, hi, shape)
    return v * rng.choice((-1.0, 1.0), shape) if signed else v


def suite_dense(rng):
    layer = Dense(6, 4, rng, dtype=np.float64)
    # one-signed operands: no cancellation in the weight/input gradient sums
    layer.weight.value[:] = _bounded(rng, layer.weight.value.shape, signed=False)
    layer.bias.value[:] = _bounded(rng, 4, signed=False)
    x = _bounded(rng, (5, 6), signed=False)
    target = layer.forward(x) - _bounded(rng, (5, 4), signed=False)
    return grad_check(layer, x, lambda y: Fn.loss_mse(y, target))


def suite_mse(rng):
    pred = rng.standard_normal((4, 3))
    target = pred - _bounded(rng, pred.shape)
    return grad_check(_LossLayer(Fn.loss_mse, target), pred, lambda y: (float(y), np.ones_like(y)))


def suite_softmax_xent(rng):
    # few classes and moderate logits keep every probability (and gradient entry) large
    return grad_check(_LossLayer(Fn.loss_softmax_xent, rng.integers(0, 3, 4)), rng.uniform(-0.5, 0.5, (4, 3)),
                      lambda y: (float(y), np.ones_like(y)))


def suite_activations(rng):
    x = rng.standard_normal((4, 5))
    x[np.abs(x) < 0.05] = 0.1  # keep kinks out of the difference stencil
    worst = 0.0
    for kind in Fn.ACTIVATIONS:
        worst = max(worst, grad_check(Activation(kind), x, _Loss(rng, x.shape)))
    return worst


def suite_conv(rng):
    layer = Conv2d(2, 3, (3, 3), rng=rng, dtype=np.float64)
    layer.bias.value[:] = rng.standard_normal(3)
    return grad_check(layer, rng.standard_normal((2, 2, 6, 5)), _sq)


def suite_conv_per_sample(rng):
    layer = _PerSampleConv(rng, 2, 3, 2, 3)
    return grad_check(layer, rng.standard_normal((2, 2, 5, 5)), _sq)


def suite_pool(rng):
    return grad_check(MaxPool2(), rng.standard_normal((2, 3, 5, 7)), _sq)


def suite_lrn(rng):
    return grad_check(LRN(k=2.0, n=5, alpha=0.5, beta=0.75), rng.standard_normal((2, 7, 3, 3)), _sq)


def suite_batchnorm(rng):
    bn = BatchNorm2d(3, dtype=np.float64)
    bn.gamma.value[:] = rng.uniform(0.5, 1.5, 3)
    x = rng.standard_normal((4, 3, 3, 3))
    return grad_check(bn, x, _Loss(rng, x.shape), train=True)


def suite_stack(rng):
    net = Sequential([
        Conv2d(1, 3, (3, 3), rng=rng, dtype=np.float64), Activation("relu"),
        LRN(k=2.0, n=3, alpha=0.5, beta=0.75), MaxPool2(),
        Conv2d(3, 2, (3, 3), rng=rng, dtype=np.float64), Flatten(),
    ])
    return grad_check(net, rng.standard_normal((2, 1, 6, 6)), _sq)


def suite_adaptive_chain(rng):
    layer = AdaptiveConv2d(2, 3, (3, 3), aux_dim=1, activation="tanh", rng=rng, dtype=np.float64)
    x = rng.standard_normal((3, 2, 7, 7))
    aux = np.array([[0.4], [-1.1], [0.4]])
    return grad_check(layer, x, _Loss(rng, (3, 3, 7, 7)), aux=aux)


def suite_adaptive_two_dim(rng):
    layer = AdaptiveConv2d(1, 2, (3, 1), aux_dim=2, activation="tanh", rng=rng, dtype=np.float64)
    x = rng.standard_normal((2, 1, 5, 5))
    return grad_check(layer, x, _Loss(rng, (2, 2, 5, 5)), aux=np.array([[0.3, -0.2], [1.0, 0.5]]))


def suite_counting_model(rng):
    """Small adaptive counting model under the full multi-task loss."""
    spec = ModelSpec("tiny", 9, "perspective",
                     (LayerSpec("adaptive_conv", 3, (3, 3)), LayerSpec("lrn"), LayerSpec("pool"),
                      LayerSpec("static_conv", 2, (3, 3)), LayerSpec("lrn"), LayerSpec("pool")),
                     regression=(6, 4, 1), classification=(5, 15), fmn_hidden=(2, 4))
    model = CountingModel(spec, seed=int(rng.integers(1 << 30)), dtype=np.float64)
    x = rng.standard_normal((4, 1, 9, 9))
    aux = np.array([[0.3], [-0.7], [0.3], [1.2]])
    density, classes = rng.uniform(0, 0.01, 4), rng.integers(0, 15, 4)

    def loss_at():
        return multitask_step(model, x, aux, density, classes, 0.1)[0]

    params = model.params()
    l0 = loss_at()
    analytic = [p.grad.copy() for p in params]
    h, worst = 1e-5, 0.0
    for p, ga in zip(params, analytic):
        flat = p.value.reshape(-1)
        for i in rng.choice(flat.size, min(flat.size, 6), replace=False):
            orig = flat[i]
            flat[i] = orig + h
            lp = loss_at()
            flat[i] = orig - h
            lm = loss_at()
            flat[i] = orig
            fwd, bwd = (lp - l0) / h, (l0 - lm) / h
            if abs(fwd - bwd) > KINK * max(abs(fwd), abs(bwd), 1e-8):
                continue  # a ReLU or max-pool switch lies inside the stencil
            num = (lp - lm) / (2 * h)
            worst = max(worst, float(rel_error(ga.reshape(-1)[i], num)))
    return worst


SUITES = (
    ("dense", suite_dense, TOL_DENSE),
    ("loss_mse", suite_mse, TOL_DENSE),
    ("loss_softmax_xent", suite_softmax_xent, TOL_DENSE),
    ("activations", suite_activations, TOL_CONV),
    ("conv", suite_conv, TOL_CONV),
    ("conv_per_sample", suite_conv_per_sample, TOL_CONV),
    ("maxpool", suite_pool, TOL_CONV),
    ("lrn", suite_lrn, TOL_CONV),
    ("batchnorm", suite_batchnorm, TOL_CONV),
    ("conv_lrn_pool_stack", suite_stack, TOL_CONV),
    ("adaptive_chain", suite_adaptive_chain, TOL_CHAIN),
    ("adaptive_chain_2d_aux", suite_adaptive_two_dim, TOL_CHAIN),
    ("counting_model", suite_counting_model, TOL_CHAIN),
)


def run_suites(names=None, seed=0):
    out = []
    for name, fn, tol in SUITES:
        if names is not None and name not in names:
            continue
        out.append(SuiteResult(name, float(fn(np.random.default_rng(seed))), tol))
    return out
