import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from acnn.crowd import (
    N_CLASSES, Annotation, AuxNormalizer, GridSpec, SceneContext, blob_aspect, count_in_roi,
    evaluate_mae, make_density_map, predict_count, sample_patches, synth_scene,
)
from acnn.errors import ContractViolation, InvalidArgument
from acnn.geometry import PerspectiveMap

from oracles import gaussian_density_grid


def flat_pmap(value, shape):
    return PerspectiveMap(np.full(shape, float(value)))


# --- density maps ------------------------------------------------------------

def test_empty_annotation_gives_zero_map():
    dmap = make_density_map(Annotation(np.zeros((0, 2)), (20, 30)), flat_pmap(10, (20, 30)))
    assert dmap.shape == (20, 30) and not dmap.any()


def test_single_person_peak_matches_gaussian_constant():
    ann = Annotation([[50.0, 40.0]], (100, 80))
    dmap = make_density_map(ann, flat_pmap(10, (100, 80)))
    peak = 1 / (2 * np.pi * 2.0 * 5.0)
    assert peak == pytest.approx(0.01592, abs=1e-5)
    assert dmap[50, 40] == pytest.approx(peak, rel=1e-4)
    assert dmap.sum() == pytest.approx(1.0, abs=1e-12)


def test_density_matches_dense_oracle():
    rng = np.random.default_rng(0)
    pts = np.column_stack([rng.uniform(0, 39, 6), rng.uniform(0, 49, 6)])
    values = np.linspace(4, 12, 40)[:, None].repeat(50, axis=1)
    pmap = PerspectiveMap(values)
    dmap = make_density_map(Annotation(pts, (40, 50)), pmap)
    m = [values[int(np.floor(r + 0.5)), 0] for r, _ in pts]
    ref = gaussian_density_grid(pts, [v / 5 for v in m], [v / 2 for v in m], (40, 50), truncate=4.0)
    np.testing.assert_allclose(dmap, ref, atol=1e-12)
    full = gaussian_density_grid(pts, [v / 5 for v in m], [v / 2 for v in m], (40, 50))
    np.testing.assert_allclose(dmap, full, atol=1e-4)


@settings(max_examples=30, deadline=None)
@given(n=st.integers(0, 40), seed=st.integers(0, 10_000))
def test_density_conserves_count(n, seed):
    rng = np.random.default_rng(seed)
    pts = np.column_stack([rng.uniform(-0.5, 47.5, n), rng.uniform(-0.5, 63.5, n)])
    pmap = PerspectiveMap(rng.uniform(2, 30) * np.ones((48, 64)))
    dmap = make_density_map(Annotation(pts, (48, 64)), pmap)
    assert abs(dmap.sum() - n) < 1e-6
    assert np.all(dmap >= 0)


def test_density_rejects_bad_perspective_and_points():
    with pytest.raises(InvalidArgument):
        make_density_map(Annotation([[3.0, 3.0]], (8, 8)), flat_pmap(0.0, (8, 8)))
    with pytest.raises(InvalidArgument):
        Annotation([[9.0, 1.0]], (8, 8))


def test_count_in_roi_additivity():
    rng = np.random.default_rng(1)
    dmap = rng.random((10, 12))
    a = np.zeros((10, 12), bool)
    a[:4] = True
    b = np.zeros((10, 12), bool)
    b[6:, 3:] = True
    assert count_in_roi(dmap, np.ones_like(a)) == pytest.approx(dmap.sum())
    assert count_in_roi(dmap, np.zeros_like(a)) == 0
    assert count_in_roi(dmap, a) + count_in_roi(dmap, b) == pytest.approx(count_in_roi(dmap, a | b), rel=1e-15)
    with pytest.raises(InvalidArgument):
        count_in_roi(dmap, a[:5])


# --- side information ----------------------------------------------------------

def test_normalizer_keeps_training_values_in_bounds():
    v = np.array([[-10, 2.2], [-65, 16.0], [-30, 5.0], [-40, 9.0]])
    norm = AuxNormalizer.fit("angle_height", v)
    z = norm.transform(v)
    assert np.all(np.abs(z) <= 1.5 + 1e-12)
    again = AuxNormalizer.from_dict(norm.to_dict())
    np.testing.assert_array_equal(again.transform(v), z)
    with pytest.raises(InvalidArgument):
        SceneContext("angle_height", [1.0])


# --- simulator -------------------------------------------------------------------

def blob_moments(angle, height, point, seed=3):
    """Rendered blob extent via second moments of (scene - empty scene)."""
    with_person = synth_scene(angle, height, 1, seed, points=[point]).image.astype(np.float64)
    empty = synth_scene(angle, height, 0, seed).image.astype(np.float64)
    diff = np.clip(with_person - empty, 0, None)
    rows, cols = np.mgrid[0:diff.shape[0], 0:diff.shape[1]]
    w = diff / diff.sum()
    r0, c0 = (w * rows).sum(), (w * cols).sum()
    return np.sqrt((w * (rows - r0) ** 2).sum()), np.sqrt((w * (cols - c0) ** 2).sum())


def test_empty_scene_is_background_only():
    scene = synth_scene(-30.0, 6.0, 0, seed=1)
    assert scene.count == 0 and not scene.density.any()
    assert scene.image.dtype == np.float32 and 0 <= scene.image.min() and scene.image.max() <= 1


def test_lower_person_renders_larger():
    angle, height = -30.0, 6.0
    scene = synth_scene(angle, height, 0, 5)
    top, bottom = (20.0, 64.0), (80.0, 64.0)
    sv_top, _ = blob_moments(angle, height, top)
    sv_bot, _ = blob_moments(angle, height, bottom)
    m_ratio = scene.pmap.at(*bottom) / scene.pmap.at(*top)
    assert sv_bot > sv_top
    assert sv_bot / sv_top == pytest.approx(m_ratio, rel=0.10)


@pytest.mark.parametrize("angle,expected,tol", [(-65.0, 1.0, 0.1), (-10.0, 3.0, 0.3)])
def test_blob_aspect_ratio(angle, expected, tol):
    height = 16.0 if angle == -65.0 else 3.0
    sv, sh = blob_moments(angle, height, (48.0, 64.0))
    assert sv / sh == pytest.approx(expected, abs=tol)
    assert blob_aspect(angle) == pytest.approx(expected)


def test_synth_is_deterministic_and_validated():
    a = synth_scene(-40.0, 8.0, 12, seed=9)
    b = synth_scene(-40.0, 8.0, 12, seed=9)
    assert a.image.tobytes() == b.image.tobytes()
    np.testing.assert_array_equal(a.annotation.points, b.annotation.points)
    with pytest.raises(InvalidArgument):
        synth_scene(-70.0, 8.0, 3, 0)
    with pytest.raises(InvalidArgument):
        synth_scene(-30.0, 20.0, 3, 0)


# --- patches ---------------------------------------------------------------------

def test_patch_targets_and_classes():
    scene = synth_scene(-35.0, 8.0, 25, seed=2)
    dmap = scene.density
    ps = sample_patches(scene.image, dmap, scene.annotation, "perspective", None, GridSpec(8), 0,
                        pmap=scene.pmap)
    assert ps.patches.shape[1:] == (1, 33, 33)
    r, c = ps.centers[5]
    assert ps.density[5] == dmap[r, c]
    assert ps.aux[5, 0] == scene.pmap.values[r, c]
    assert ps.count_class.min() >= 0 and ps.count_class.max() < N_CLASSES
    np.testing.assert_array_equal(ps.patches[5, 0, 16], np.pad(scene.image, 16, mode="reflect")[r + 16, c:c + 33])


def test_empty_region_patch_is_class_zero():
    empty = synth_scene(-35.0, 8.0, 0, seed=2)
    ps = sample_patches(empty.image, empty.density, empty.annotation, "angle_height",
                        empty.context.values, GridSpec(16), 0)
    assert np.all(ps.density == 0) and np.all(ps.count_class == 0)
    assert np.all(ps.aux == [-35.0, 8.0])


def test_count_class_saturates_at_fourteen():
    pts = np.array([[16.0, 16.0]] * 20)
    ann = Annotation(pts, (33, 33))
    dmap = np.zeros((33, 33))
    ps = sample_patches(np.zeros((33, 33)), dmap, ann, "angle_height", [-30, 5], GridSpec(33), 0)
    assert ps.count_class.tolist() == [14]


def test_sampling_same_seed_same_samples():
    scene = synth_scene(-35.0, 8.0, 25, seed=2)
    spec = GridSpec(2, n_samples=50)
    a = sample_patches(scene.image, scene.density, scene.annotation, "perspective", None, spec, 11, scene.pmap)
    b = sample_patches(scene.image, scene.density, scene.annotation, "perspective", None, spec, 11, scene.pmap)
    np.testing.assert_array_equal(a.centers, b.centers)
    assert a.patches.tobytes() == b.patches.tobytes()
    with pytest.raises(InvalidArgument):
        sample_patches(scene.image, scene.density, scene.annotation, "perspective", None, GridSpec(0), 1, scene.pmap)


# --- counting --------------------------------------------------------------------

def test_mae():
    assert evaluate_mae([1, 2, 3], [1, 2, 3]) == 0
    assert evaluate_mae([2, 3, 4], [1, 2, 3]) == 1
    with pytest.raises(InvalidArgument):
        evaluate_mae([], [])


def _perfect_count(scene, stride, roi=None):
    dmap = scene.density

    class Model:
        patch_size = 33
        aux_kind = "angle_height"
        trained = True

        def predict_density(self, patches, aux):
            # predictions are consumed in lattice order, chunk by chunk
            return next(self.stream)

    roi_ = np.ones(dmap.shape, bool) if roi is None else roi
    centers = GridSpec(stride).centers(roi_)
    vals = dmap[centers[:, 0], centers[:, 1]]
    m = Model()
    m.stream = iter([vals[i:i + 256] for i in range(0, len(vals), 256)])
    return predict_count(m, scene.image, scene.context.values, scene.pmap, stride, roi)


def test_perfect_model_counts_exactly_at_stride_one():
    scene = synth_scene(-40.0, 6.0, 17, seed=4)
    assert abs(_perfect_count(scene, 1) - 17) < 1e-6


def test_perfect_model_stride_four_within_five_percent():
    for seed in range(5):
        scene = synth_scene(-40.0, 6.0, 20, seed=seed)
        assert abs(_perfect_count(scene, 4) - 20) < 0.05 * 20


def test_empty_roi_counts_zero_and_untrained_rejected():
    scene = synth_scene(-40.0, 6.0, 5, seed=4)
    assert _perfect_count(scene, 4, np.zeros(scene.image.shape, bool)) == 0

    class Untrained:
        patch_size = 33
        aux_kind = "angle_height"
        trained = False

    with pytest.raises(ContractViolation):
        predict_count(Untrained(), scene.image, scene.context.values, scene.pmap)
