"""
Tests for the synthetic world generator.
"""
import json
import math
from collections import Counter, defaultdict
from pathlib import Path

import numpy as np
import pytest

from ncdetect.core.exceptions import InfeasibleConfigError
from ncdetect.models.records import BasePrediction, Source
from ncdetect.schemas.config import load_pipeline_config
from ncdetect.schemas.world import WorldConfig
from ncdetect.services import feature_io
from ncdetect.services.postprocess import iou
from ncdetect.services.prototypes import compute_base_prototypes
from ncdetect.services.synthgen import (
    CLUTTER,
    CLUTTER_MAX_IOU,
    CROP_IOU_RANGE,
    DISCOVERY_IMAGES,
    TEST_IMAGES,
    class_counts,
    class_pmf,
    generate,
    sample_unit_directions,
    write_world,
)


def test_generation_is_deterministic(small_world_config):
    first = generate(small_world_config)
    second = generate(small_world_config)

    for name in ("base_gt", "discovery_rpn", "discovery_gt", "test_rpn", "test_gt_features"):
        a, b = getattr(first, name), getattr(second, name)
        assert len(a) == len(b)
        assert all(x.same_as(y) for x, y in zip(a, b))
    assert first.truth == second.truth
    np.testing.assert_array_equal(first.box_embeddings, second.box_embeddings)


def test_seed_changes_world(small_world_config):
    other = small_world_config.model_copy(update={"seed": 8})
    a, b = generate(small_world_config), generate(other)
    assert not np.array_equal(a.class_means, b.class_means)


def test_class_directions_are_separated(small_world_config):
    world = generate(small_world_config)
    means = world.class_means
    np.testing.assert_allclose(np.linalg.norm(means, axis=1), 1.0)

    cosines = means @ means.T
    off_diagonal = cosines[~np.eye(len(means), dtype=bool)]
    assert off_diagonal.max() <= math.cos(math.radians(small_world_config.min_angle_deg)) + 1e-12


def test_zero_noise_prototypes_equal_class_means(small_world_config):
    world = generate(small_world_config.model_copy(update={"sigma": 0.0}))
    for class_id, prototype in compute_base_prototypes(world.base_gt):
        np.testing.assert_allclose(prototype, world.class_means[class_id], atol=1e-12)


def test_infeasible_separation():
    config = WorldConfig(dim=2, n_base=5, n_novel=5, min_angle_deg=90.0, max_direction_attempts=500)
    with pytest.raises(InfeasibleConfigError) as excinfo:
        generate(config)
    assert excinfo.value.details["requested"] == 10


def test_sample_unit_directions_attempt_limit(rng):
    with pytest.raises(InfeasibleConfigError):
        sample_unit_directions(3, 2, 179.0, 50, rng)


def test_uniform_class_counts(small_world_config):
    world = generate(small_world_config)
    counts = Counter(r.gt_class for r in world.discovery_gt)
    assert set(counts.values()) == {small_world_config.samples_per_class}

    base_counts = Counter(r.gt_class for r in world.base_gt)
    assert sorted(base_counts) == list(range(small_world_config.n_base))


def test_long_tailed_counts_follow_zipf():
    config = WorldConfig(n_base=4, n_novel=6, samples_per_class=50, label_distribution="long_tailed", zipf_s=1.2)
    counts = class_counts(config)
    expected = class_pmf(config) * 500

    assert counts.sum() == 500
    assert np.all(np.abs(counts - expected) < 1.0)
    assert np.all(np.diff(counts) <= 0)


def test_image_id_blocks(small_world_config):
    world = generate(small_world_config)
    assert all(r.image_id < DISCOVERY_IMAGES for r in world.base_gt)
    assert all(DISCOVERY_IMAGES <= r.image_id < TEST_IMAGES for r in world.discovery_rpn)
    assert all(r.image_id >= TEST_IMAGES for r in world.test_rpn)
    assert len({a.image_id for a in world.test_annotations}) == small_world_config.test_images


def test_truth_and_base_head(small_world_config):
    world = generate(small_world_config)
    n_base = small_world_config.n_base

    assert len(world.truth["discovery_rpn"]) == len(world.discovery_rpn)
    assert len(world.truth["test_rpn"]) == len(world.test_rpn)
    for record, latent in zip(world.discovery_rpn, world.truth["discovery_rpn"]):
        assert record.source == Source.RPN
        assert 0.0 <= record.objectness <= 1.0
        if latent != CLUTTER and latent < n_base:
            assert record.base_pred == BasePrediction.of(latent)
        else:
            assert record.base_pred == BasePrediction.background()


def test_flipped_base_head(small_world_config):
    world = generate(small_world_config.model_copy(update={"flip_prob": 1.0}))
    n_base = small_world_config.n_base
    for record, latent in zip(world.test_rpn, world.truth["test_rpn"]):
        if latent != CLUTTER and latent < n_base:
            assert record.base_pred.is_background
        else:
            assert not record.base_pred.is_background


def test_background_clutter_is_placed_away_from_objects(small_world_config):
    world = generate(small_world_config.model_copy(update={"clutter_fraction": 0.3, "crop_fraction": 0.0}))
    objects = defaultdict(list)
    for record in world.discovery_gt:
        objects[record.image_id].append(record.box)

    clutter = [r for r, t in zip(world.discovery_rpn, world.truth["discovery_rpn"]) if t == CLUTTER]
    assert clutter
    for record in clutter:
        assert all(iou(record.box, box) <= CLUTTER_MAX_IOU for box in objects[record.image_id])


def test_background_modes_avoid_class_directions(small_world_config):
    config = small_world_config.model_copy(update={"clutter_fraction": 0.3, "crop_fraction": 0.0, "clutter_sigma": 0.0})
    world = generate(config)
    modes = world.background_means
    assert modes.shape == (config.clutter_modes, config.dim)
    assert np.max(modes @ world.class_means.T) <= math.cos(math.radians(config.min_angle_deg)) + 1e-12

    clutter = [r for r, t in zip(world.test_rpn, world.truth["test_rpn"]) if t == CLUTTER]
    assert clutter
    for record in clutter:
        assert np.min(np.linalg.norm(modes - record.feature, axis=1)) < 1e-12


def test_crops_overlap_an_object_of_their_class(small_world_config):
    config = small_world_config.model_copy(update={"clutter_fraction": 0.3, "crop_fraction": 1.0, "sigma": 0.0})
    world = generate(config)
    assert world.background_means.size == 0

    objects = defaultdict(list)
    for record in world.discovery_gt:
        objects[record.image_id].append(record)

    low, high = CROP_IOU_RANGE
    crops = [r for r, t in zip(world.discovery_rpn, world.truth["discovery_rpn"]) if t == CLUTTER]
    assert crops
    for crop in crops:
        assert crop.base_pred.is_background
        assert any(
            np.allclose(crop.feature, world.class_means[obj.gt_class])
            and low - 1e-9 <= iou(crop.box, obj.box) <= high + 1e-9
            for obj in objects[crop.image_id]
        )


def test_larger_sigma_spreads_classes(small_world_config):
    def within_class_inertia(sigma: float) -> float:
        world = generate(small_world_config.model_copy(update={"sigma": sigma}))
        by_class = defaultdict(list)
        for record in world.discovery_gt:
            by_class[record.gt_class].append(record.feature)
        return sum(float(np.sum((np.asarray(f) - np.mean(f, axis=0)) ** 2)) for f in by_class.values())

    assert within_class_inertia(0.02) < within_class_inertia(0.1)


def test_write_world(small_world, small_world_config):
    discovery = feature_io.read_feature_file(small_world.discovery_rpn)
    assert discovery and all(r.dim == small_world_config.dim for r in discovery)

    classes = feature_io.read_class_table(small_world.classes)
    assert [c.novel for c in classes] == [False] * 3 + [True] * 3

    indices, embeddings = feature_io.read_embedding_file(small_world.box_embeddings)
    assert indices.tolist() == list(range(len(discovery)))
    assert embeddings.shape[1] == small_world_config.embedding_dim
    assert len(feature_io.read_text_embeddings(small_world.text_embeddings)) == 6

    directory = Path(small_world.classes).parent
    truth = json.loads((directory / "truth.json").read_text())
    assert truth["novel_classes"] == [3, 4, 5]
    assert len(truth["discovery_rpn"]) == len(discovery)

    config = load_pipeline_config(directory / "config.yaml")
    assert config.paths == small_world
    assert config.world == small_world_config
    assert config.kmeans.seed == small_world_config.seed


def test_box_embeddings_sit_near_their_text(small_world_config):
    world = generate(small_world_config)
    for embedding, latent in zip(world.box_embeddings, world.truth["discovery_rpn"]):
        if latent == CLUTTER:
            continue
        distances = np.linalg.norm(world.text_embeddings - embedding, axis=1)
        assert int(np.argmin(distances)) == latent
