import numpy as np
import pytest

from acnn.adaptive import (
    AdaptiveConv2d, FilterManifoldNet, fmn_forward, manifold_probe, probe_distances,
    write_probe_csv,
)
from acnn.errors import ContractViolation, InvalidArgument
from acnn.nn import Activation, activation_forward, conv2d_backward, conv2d_forward, grad_check


def fmn_param_oracle(aux_dim, hidden, out):
    sizes = [aux_dim, *hidden, out]
    return sum((a + 1) * b for a, b in zip(sizes, sizes[1:]))


@pytest.mark.parametrize("shape,out_len,n_params", [
    ((32, 1, 5, 5), 832, 34_572),
    ((32, 32, 5, 5), 25_632, 1_051_372),
])
def test_fmn_output_and_parameter_counts(shape, out_len, n_params):
    fmn = FilterManifoldNet(1, shape)
    assert fmn.out_dim == out_len
    assert fmn.n_params == n_params == fmn_param_oracle(1, (10, 40), out_len)
    w, b = fmn_forward(fmn, np.array([0.3]))
    assert w.shape == shape and b.shape == (shape[0],)


def test_fmn_rejects_bad_config():
    with pytest.raises(InvalidArgument):
        FilterManifoldNet(1, (2, 1, 3, 3), hidden=(40, 10))
    fmn = FilterManifoldNet(2, (2, 1, 3, 3))
    with pytest.raises(InvalidArgument):
        fmn_forward(fmn, np.array([0.1]))


def test_zero_fmn_generates_zero_filters():
    layer = AdaptiveConv2d(2, 3, (3, 3), activation="sigmoid")
    for p in layer.params():
        p.value[:] = 0
    w, b = layer.generate(np.array([1.7]))
    assert not w.any() and not b.any()
    x = np.random.default_rng(0).standard_normal((2, 2, 5, 5)).astype(np.float32)
    out = layer.forward(x, np.array([0.4]))
    assert np.all(out == 0.5)


def test_flat_layout_weights_then_biases():
    fmn = FilterManifoldNet(1, (2, 3, 1, 1))
    flat = fmn.forward(np.array([[0.5]]))
    w, b = fmn_forward(fmn, np.array([0.5]))
    np.testing.assert_array_equal(w.ravel(), flat[0, :6])
    np.testing.assert_array_equal(b, flat[0, 6:])


def test_forward_is_exact_composition():
    rng = np.random.default_rng(1)
    layer = AdaptiveConv2d(3, 4, (5, 5), activation="relu", rng=rng)
    x = rng.standard_normal((2, 3, 9, 9)).astype(np.float32)
    z = np.array([0.7])
    w, b = fmn_forward(layer.fmn, z)
    expected = activation_forward(conv2d_forward(x, w, b, "same"), "relu")
    assert layer.forward(x, z).tobytes() == expected.tobytes()


def test_per_sample_aux_matches_single_calls():
    rng = np.random.default_rng(2)
    layer = AdaptiveConv2d(2, 3, (3, 3), rng=rng, dtype=np.float64)
    x = rng.standard_normal((3, 2, 6, 6))
    aux = np.array([[0.1], [-0.8], [0.1]])
    out = layer.forward(x, aux)
    for n in range(3):
        np.testing.assert_allclose(out[n:n + 1], layer.forward(x[n:n + 1], aux[n]), rtol=1e-12, atol=1e-14)


def test_distinct_aux_gives_distinct_filters():
    layer = AdaptiveConv2d(1, 8, (5, 5), rng=np.random.default_rng(3))
    w1, _ = layer.generate(np.array([-1.0]))
    w2, _ = layer.generate(np.array([1.0]))
    assert np.linalg.norm(w1 - w2) > 0


def test_backward_zero_grad_and_contract():
    layer = AdaptiveConv2d(1, 2, (3, 3), rng=np.random.default_rng(4))
    with pytest.raises(ContractViolation):
        layer.backward(np.zeros((1, 2, 4, 4)))
    x = np.ones((1, 1, 4, 4), dtype=np.float32)
    layer.forward(x, np.array([0.2]))
    gx = layer.backward(np.zeros((1, 2, 4, 4), dtype=np.float32))
    assert not gx.any()
    assert all(not p.grad.any() for p in layer.params())


def test_grad_input_matches_frozen_filter_backward():
    rng = np.random.default_rng(5)
    layer = AdaptiveConv2d(2, 3, (3, 3), activation="linear", rng=rng, dtype=np.float64)
    x = rng.standard_normal((2, 2, 5, 5))
    z = np.array([0.3])
    layer.forward(x, z)
    g = rng.standard_normal((2, 3, 5, 5))
    gx = layer.backward(g)
    w, _ = fmn_forward(layer.fmn, z)
    expected, _, _ = conv2d_backward(x, w, g, "same")
    assert gx.tobytes() == expected.tobytes()


@pytest.mark.parametrize("aux", [np.array([0.4]), np.array([[0.4], [-1.1]])])
def test_full_chain_gradient_into_fmn(aux):
    rng = np.random.default_rng(6)
    layer = AdaptiveConv2d(1, 2, (3, 3), activation="tanh", rng=rng, dtype=np.float64)
    x = rng.standard_normal((2, 1, 7, 7))
    target = rng.standard_normal((2, 2, 7, 7))

    def loss(y):
        d = y - target
        return float(0.5 * np.sum(d * d)), d

    assert grad_check(layer, x, loss, aux=aux) < 1e-4


def test_continuity_in_aux():
    layer = AdaptiveConv2d(4, 4, (5, 5), rng=np.random.default_rng(7))
    layer.astype(np.float64)
    z = np.array([0.25])
    base = np.concatenate([a.ravel() for a in layer.generate(z)])
    dists = []
    for delta in (1e-1, 1e-2, 1e-3):
        moved = np.concatenate([a.ravel() for a in layer.generate(z + delta)])
        dists.append(np.linalg.norm(moved - base))
    assert dists[0] > dists[1] > dists[2]
    assert dists[2] < 1e-2 * dists[0] * 1.5


def test_manifold_probe_grid(tmp_path):
    layer = AdaptiveConv2d(1, 3, (5, 5), rng=np.random.default_rng(8))
    grid = list(np.linspace(6.7, 21.4, 16))

    class Scale:
        def transform(self, z):
            return (np.asarray(z) - 14.0) / 4.0

    snaps = manifold_probe(layer, grid, Scale())
    assert len(snaps) == 16
    d = probe_distances(snaps)
    assert len(d) == 15 and all(np.isfinite(d)) and all(v > 0 for v in d)

    const = manifold_probe(layer, [3.0, 3.0, 3.0])
    assert all(s[0].tobytes() == const[0][0].tobytes() for s in const)
    assert probe_distances(const) == [0.0, 0.0]

    path = tmp_path / "probe.csv"
    write_probe_csv(path, grid, snaps)
    rows = path.read_text().splitlines()
    assert len(rows) == 17
    assert len(rows[0].split(",")) == 1 + 75 + 3
    with pytest.raises(InvalidArgument):
        manifold_probe(layer, [])


def test_initial_filter_scale_resembles_static_init():
    layer = AdaptiveConv2d(32, 32, (5, 5), rng=np.random.default_rng(9))
    w, _ = layer.generate(np.array([0.0]))
    he = np.sqrt(2.0 / (32 * 25))
    assert 0.2 * he < w.std() < 5 * he


def test_activation_kind_is_validated():
    with pytest.raises(ValueError):
        Activation("swish")
