from types import SimpleNamespace

import numpy as np
import pytest

from acnn.counting import (
    DENSITY_SCALE, SPECS, CountingModel, LayerSpec, ModelSpec, TrainConfig, count_params,
    eval_counting, format_param_table, get_spec, multitask_step, train_counting,
)
from acnn.crowd import GridSpec, sample_patches, synth_scene
from acnn.crowd.benchmark import DEFAULT_CONTEXTS, BenchmarkConfig, build_benchmark
from acnn.crowd.context import AuxNormalizer
from acnn.errors import ContractViolation, InvalidArgument

TABLE1_CNN = {"conv1": 1_664, "conv2": 102_464, "FC1": 2_654_720, "FC2": 41_553, "FC3": 82, "FC4": 419_985}
TABLE1_V3 = {"FMN1": 34_572, "conv1": 0, "FMN2": 1_051_372, "conv2": 0, "FC1": 1_327_616, "FC2": 41_553,
             "FC3": 82, "FC4": 210_033}


def test_flatten_sizes():
    assert CountingModel(get_spec("cnn64")).flat_dim == 9 * 9 * 64 == 5184
    assert CountingModel(get_spec("acnn-v3")).flat_dim == 9 * 9 * 32 == 2592
    assert CountingModel(get_spec("acnn-ah")).flat_dim == 2592


def test_fmn_output_lengths():
    v3 = CountingModel(get_spec("acnn-v3"))
    assert [l.fmn.out_dim for _, l, f in v3._conv_layers] == [832, 25_632]
    assert CountingModel(get_spec("acnn-v1"))._conv_layers[0][1].fmn.out_dim == 1_664
    assert CountingModel(get_spec("acnn-v2"))._conv_layers[1][1].fmn.out_dim == 48_030


@pytest.mark.parametrize("name,expected,total", [("cnn64", TABLE1_CNN, 3_221_780), ("acnn-v3", TABLE1_V3, 2_666_540)])
def test_table1_rows(name, expected, total):
    table = count_params(CountingModel(get_spec(name)))
    rows = dict(table.rows)
    for layer, n in expected.items():
        assert rows[layer] == n, layer
    assert rows["FC5"] == 81 * 15 + 15 == 1_230
    assert table.fc5_delta == 82
    assert table.table1_total == total
    assert table.total == total - 82


def test_param_parity_and_empty_model():
    cnn = count_params(CountingModel(get_spec("cnn64"))).total
    v3 = count_params(CountingModel(get_spec("acnn-v3"))).total
    assert abs(v3 - cnn) / cnn < 0.2
    assert count_params(None).total == 0
    bare = ModelSpec("bare", 33, "perspective", (), regression=(), classification=())
    assert count_params(CountingModel(bare)).total == 0


def test_param_table_text():
    text = format_param_table("acnn-v3", count_params(CountingModel(get_spec("acnn-v3"))))
    assert "total_fc5_16,2666540" in text and "FMN2,1051372" in text


def test_bad_specs_rejected():
    with pytest.raises(InvalidArgument):
        get_spec("cnn128")
    with pytest.raises(InvalidArgument):
        CountingModel(ModelSpec("x", 33, "perspective", (LayerSpec("static_conv", 0),)))
    with pytest.raises(InvalidArgument):
        CountingModel(ModelSpec("x", 33, "perspective", (LayerSpec("warp"),)))
    with pytest.raises(InvalidArgument):
        TrainConfig(lam=-0.1)


def test_spec_dict_round_trip():
    for spec in SPECS.values():
        assert ModelSpec.from_dict(spec.to_dict()) == spec


# --- multi-task gradient flow ----------------------------------------------------

def _tiny_spec():
    return ModelSpec("tiny", 33, "perspective",
                     (LayerSpec("adaptive_conv", 4), LayerSpec("lrn"), LayerSpec("pool"),
                      LayerSpec("static_conv", 4), LayerSpec("lrn"), LayerSpec("pool")),
                     regression=(16, 8, 1), classification=(8, 15))


def _batch(n=16, seed=0):
    scene = synth_scene(-40.0, 8.5, 25, seed)
    return sample_patches(scene.image, scene.density, scene.annotation, "perspective", None,
                          GridSpec(2, n), seed, scene.pmap)


def _fc_grads(lam):
    model = CountingModel(_tiny_spec(), seed=1)
    ps = _batch()
    model.normalizer = AuxNormalizer.fit("perspective", ps.aux)
    multitask_step(model, ps.patches, model.normalize_aux(ps.aux), ps.density, ps.count_class, lam)
    return [p.grad for l in model.cls_head.layers if hasattr(l, "weight") for p in (l.weight, l.bias)], ps


def test_lambda_zero_gives_zero_classifier_gradients():
    grads, _ = _fc_grads(0.0)
    assert all(not g.any() for g in grads)


def test_lambda_positive_gives_classifier_gradients():
    grads, ps = _fc_grads(0.1)
    assert len(set(ps.count_class.tolist())) > 1
    assert all(np.abs(g).sum() > 0 for g in grads)


# --- training ---------------------------------------------------------------------

def _train_tiny(seed, steps=6):
    model = CountingModel(_tiny_spec(), seed=seed)
    cfg = TrainConfig(epochs=3, batch_size=8, seed=seed, max_steps=steps, val_fraction=0.25)
    _, hist = train_counting(model, _batch(32, 3), cfg)
    return model, hist


def test_training_is_deterministic_per_seed():
    a, ha = _train_tiny(5)
    b, hb = _train_tiny(5)
    assert ha.train_loss == hb.train_loss and ha.val_mae == hb.val_mae
    for pa, pb in zip(a.params(), b.params()):
        assert pa.value.tobytes() == pb.value.tobytes()
    c, _ = _train_tiny(6)
    assert any(pa.value.tobytes() != pc.value.tobytes() for pa, pc in zip(a.params(), c.params()))


def test_training_rejects_empty_and_untrained_prediction():
    model = CountingModel(_tiny_spec())
    with pytest.raises(InvalidArgument):
        train_counting(model, _batch(4).subset(np.array([], dtype=int)), TrainConfig())
    with pytest.raises(ContractViolation):
        eval_counting(model, [synth_scene(-40.0, 8.5, 3, 0)])


def test_overfit_64_samples():
    """64 patches, 200 epochs of full-batch Adam on the adaptive model."""
    ps = _batch(64, 4)
    model = CountingModel(get_spec("acnn-v3"), seed=0)
    cfg = TrainConfig(epochs=200, batch_size=64, seed=0, val_fraction=0.0, patience=1000)
    _, hist = train_counting(model, ps, cfg)
    pred = model.predict_density(ps.patches, ps.aux)
    raw_mse = float(np.mean((pred - ps.density) ** 2))
    assert raw_mse < 1e-4
    # in the network's own units the fit must also be tight, not just small because densities are
    assert hist.train_mse[-1] < 0.05 * hist.train_mse[0]
    assert raw_mse < 0.05 * float(np.mean(ps.density ** 2))


# --- evaluation ---------------------------------------------------------------------

class DensityOracle:
    """Reads the density value at the patch centre; scenes carry their density as the image."""

    patch_size = 33
    aux_kind = "perspective"
    trained = True

    def predict_density(self, patches, aux):
        return patches[:, 0, 16, 16].astype(np.float64)


def _oracle_scenes(scenes):
    return [SimpleNamespace(image=s.density, density=s.density, context=s.context, pmap=s.pmap) for s in scenes]


def test_oracle_model_mae_near_zero_at_stride_four():
    bench = build_benchmark(BenchmarkConfig(train_per_context=1, test_per_context=1, seed=2))
    report = eval_counting(DensityOracle(), _oracle_scenes(bench.scenes("test")), stride=4)
    assert len(report.true) == len(DEFAULT_CONTEXTS)
    assert report.mae < 0.05


def test_region_counts_partition_the_full_count():
    scenes = _oracle_scenes([synth_scene(-40.0, 8.5, 20, s) for s in range(3)])
    rows, cols = scenes[0].image.shape
    r1 = np.zeros((rows, cols), bool)
    r1[:, : cols // 3] = True
    r2 = np.zeros((rows, cols), bool)
    r2[:, cols // 3: 2 * cols // 3] = True
    r3 = ~(r1 | r2)
    report = eval_counting(DensityOracle(), scenes, 4, regions={"R1": r1, "R2": r2, "R3": r3})
    for i in range(len(scenes)):
        pred_sum = sum(report.region_counts[k][0][i] for k in ("R1", "R2", "R3"))
        true_sum = sum(report.region_counts[k][1][i] for k in ("R1", "R2", "R3"))
        assert pred_sum == pytest.approx(report.predicted[i], rel=1e-12)
        assert true_sum == pytest.approx(report.true[i], rel=1e-12)


def test_density_scale_is_internal():
    model = CountingModel(_tiny_spec())
    ps = _batch(4)
    model.normalizer = AuxNormalizer.fit("perspective", ps.aux)
    raw, _ = model.forward(ps.patches, model.normalize_aux(ps.aux))
    np.testing.assert_allclose(model.predict_density(ps.patches, ps.aux), raw / DENSITY_SCALE, rtol=1e-6)


def test_anneal_requires_step_budget():
    with pytest.raises(InvalidArgument):
        TrainConfig(anneal=True)
    assert TrainConfig(anneal=True, max_steps=10).anneal
