"""Central finite-difference gradient checker."""

import numpy as np

from ..errors import InvalidArgument, NumericError


def rel_error(a, n):
    """|a - n| / max(|a|, |n|, 1e-8), elementwise."""
    a = np.asarray(a, dtype=np.float64)
    n = np.asarray(n, dtype=np.float64)
    return np.abs(a - n) / np.maximum(np.maximum(np.abs(a), np.abs(n)), 1e-8)


def _indices(shape, limit, rng):
    total = int(np.prod(shape))
    if limit is None or total <= limit:
        flat = np.arange(total)
    else:
        flat = np.sort(rng.choice(total, size=limit, replace=False))
    return [np.unravel_index(i, shape) for i in flat]


def grad_errors(layer, x, loss_fn, aux=None, h=1e-5, max_per_tensor=None, seed=0, train=False):
    """Per-tensor maximum relative error between analytic and numeric gradients.

    ``layer`` follows the ``forward(x, aux, train)`` / ``backward(grad)``
    protocol and ``loss_fn(output) -> (loss, grad)``. Everything must be
    64-bit. ``max_per_tensor`` caps the number of probed entries per tensor
    (sampled with ``seed``) to keep big layers tractable.
    """
    if x.dtype != np.float64 or any(p.value.dtype != np.float64 for p in layer.params()):
        raise InvalidArgument("gradient checks require 64-bit tensors")
    rng = np.random.default_rng(seed)

    out = layer.forward(x, aux, train)
    _, g = loss_fn(out)
    gx = layer.backward(g)
    targets = [("input", x, gx)]
    for p in layer.params():
        targets.append((p.name or "param", p.value, p.grad.copy()))
    for name, _, grad in targets:
        if not np.all(np.isfinite(grad)):
            raise NumericError(f"non-finite analytic gradient for {name}")

    def loss_at():
        return loss_fn(layer.forward(x, aux, train))[0]

    errors = {}
    for name, tensor, grad in targets:
        worst = 0.0
        for idx in _indices(tensor.shape, max_per_tensor, rng):
            orig = tensor[idx]
            tensor[idx] = orig + h
            lp = loss_at()
            tensor[idx] = orig - h
            lm = loss_at()
            tensor[idx] = orig
            num = (lp - lm) / (2 * h)
            if not np.isfinite(num):
                raise NumericError(f"non-finite numeric gradient for {name}")
            worst = max(worst, float(rel_error(grad[idx], num)))
        key = name
        while key in errors:
            key += "'"
        errors[key] = worst
    # restore caches for the unperturbed point
    layer.forward(x, aux, train)
    return errors


def grad_check(layer, x, loss_fn, aux=None, h=1e-5, max_per_tensor=None, seed=0, train=False):
    """Maximum relative gradient error over every parameter and the input."""
    errs = grad_errors(layer, x, loss_fn, aux, h, max_per_tensor, seed, train)
    return max(errs.values())
