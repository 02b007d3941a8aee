# Copyright (c) 2025 Ryan Osterday. All rights reserved.
# See LICENSE file for details.

from typing import Final

import numpy as np
import pytest
from numpy.typing import NDArray

from conicpipe.core.config import EnsembleConfig
from conicpipe.core.errors import ConfigurationError, DimensionError, EmptyInputError
from conicpipe.processing.ensemble import ScaledPrediction, fuse, fuse_detailed, rescale_prediction
from conicpipe.tests.test_utilities import LabelMapFactory, block_upscale

BASE: Final[int] = 16
SCALES: Final[tuple[int, ...]] = (16, 32, 48, 64, 80)
CONFIG: Final[EnsembleConfig] = EnsembleConfig(base_size=BASE, scales=SCALES, min_votes=3)


def at_scale(instances: NDArray[np.integer], classes: NDArray[np.integer], scale: int) -> ScaledPrediction:
    """Prediction at scale built by block-repeating base-resolution maps"""
    factor = scale // BASE
    return ScaledPrediction(
        scale=scale,
        instances=block_upscale(instances.astype(np.int32), factor),
        classes=block_upscale(classes.astype(np.uint8), factor),
    )


def square(top: int, left: int, side: int = 4) -> NDArray[np.bool_]:
    mask = np.zeros((BASE, BASE), dtype=bool)
    mask[top : top + side, left : left + side] = True
    return mask


class TestRescalePrediction:
    """Nearest-neighbour return to base resolution"""


    def test_same_scale_is_identity(self, label_factory: LabelMapFactory) -> None:
        instances = label_factory.instance_map(size=BASE)
        pred = at_scale(instances, label_factory.class_map_for(instances), BASE)

        assert rescale_prediction(pred, BASE) is pred

    def test_aligned_block_halves(self) -> None:
        instances = np.zeros((32, 32), dtype=np.int32)
        instances[4:8, 6:10] = 9
        classes = (instances > 0).astype(np.uint8) * 3

        result = rescale_prediction(ScaledPrediction(scale=32, instances=instances, classes=classes), BASE)

        expected = np.zeros((BASE, BASE), dtype=np.int32)
        expected[2:4, 3:5] = 9
        np.testing.assert_array_equal(result.instances, expected)

    def test_values_subset_on_random_maps(self, label_factory: LabelMapFactory) -> None:
        for _ in range(20):
            instances = label_factory.instance_map(size=40, max_instances=12)
            pred = ScaledPrediction(scale=40, instances=instances, classes=label_factory.class_map_for(instances))

            result = rescale_prediction(pred, BASE)

            assert set(np.unique(result.instances)) <= set(np.unique(instances))

    def test_wrong_shape_rejected(self) -> None:
        with pytest.raises(DimensionError):
            ScaledPrediction(scale=32, instances=np.zeros((16, 16), dtype=np.int32),
                             classes=np.zeros((16, 16), dtype=np.uint8))


class TestFuse:
    """Cross-scale voting"""


    def test_unanimous_predictions_reproduce_input(self, label_factory: LabelMapFactory) -> None:
        for _ in range(10):
            instances = label_factory.instance_map(size=BASE)
            classes = label_factory.class_map_for(instances)
            preds = [at_scale(instances, classes, scale) for scale in SCALES]

            result = fuse_detailed(preds, CONFIG)

            np.testing.assert_array_equal(result.instances, instances)
            np.testing.assert_array_equal(result.classes, classes)
            assert all(fused.scale_votes == 5 for fused in result.provenance)

    def test_unanimous_input_keeps_non_sequential_ids(self) -> None:
        instances = np.zeros((BASE, BASE), dtype=np.int32)
        instances[square(1, 9)] = 5
        instances[square(10, 2)] = 9
        classes = (instances == 5).astype(np.uint8) * 2 + (instances == 9).astype(np.uint8) * 6
        preds = [at_scale(instances, classes, scale) for scale in SCALES]

        fused_instances, fused_classes = fuse(preds, CONFIG)

        np.testing.assert_array_equal(fused_instances, instances)
        np.testing.assert_array_equal(fused_classes, classes)

    def test_three_of_five_kept_two_of_five_dropped(self) -> None:
        kept, dropped = square(2, 2), square(9, 9)
        preds = []
        for position, scale in enumerate(SCALES):
            instances = np.zeros((BASE, BASE), dtype=np.int32)
            if position < 3:
                instances[kept] = 1
            if position >= 3:
                instances[dropped] = 2
            preds.append(at_scale(instances, (instances > 0).astype(np.uint8) * 2, scale))

        fused_instances, fused_classes = fuse(preds, CONFIG)

        np.testing.assert_array_equal(fused_instances, kept.astype(np.int32))
        np.testing.assert_array_equal(fused_classes, kept.astype(np.uint8) * 2)

    def test_plurality_class_with_tie_to_smallest(self) -> None:
        mask = square(5, 5)
        member_classes = (2, 2, 3, 3, 5)
        preds = [
            at_scale(mask.astype(np.int32), mask.astype(np.uint8) * c, scale)
            for c, scale in zip(member_classes, SCALES, strict=True)
        ]

        result = fuse_detailed(preds, CONFIG)

        assert [fused.nucleus_class for fused in result.provenance] == [2]

    def test_plurality_of_three(self) -> None:
        mask = square(5, 5)
        config = EnsembleConfig(base_size=BASE, scales=SCALES[:3], min_votes=2)
        preds = [
            at_scale(mask.astype(np.int32), mask.astype(np.uint8) * c, scale)
            for c, scale in zip((2, 2, 3), SCALES[:3], strict=True)
        ]

        _, classes = fuse(preds, config)

        assert set(np.unique(classes)) == {0, 2}

    def test_majority_mask(self) -> None:
        """A pixel belongs to the fused instance when at least 3 of the 5 members cover it"""
        base = square(4, 4)
        masks = []
        for extra in range(5):
            mask = base.copy()
            if extra < 3:
                mask[8, 4] = True  # covered by 3 members
            if extra < 2:
                mask[4, 8] = True  # covered by 2 members
            masks.append(mask)
        preds = [at_scale(m.astype(np.int32), m.astype(np.uint8), s) for m, s in zip(masks, SCALES, strict=True)]

        instances, _ = fuse(preds, CONFIG)

        assert instances[8, 4] == 1
        assert instances[4, 8] == 0
        assert np.count_nonzero(instances) == 17

    @pytest.mark.slow
    def test_order_invariance(self, label_factory: LabelMapFactory, rng: np.random.Generator) -> None:
        preds = []
        for scale in SCALES:
            instances = label_factory.perturbed(label_factory.instance_map(size=BASE), flips=4)
            preds.append(at_scale(instances, label_factory.class_map_for(instances), scale))

        reference = fuse_detailed(preds, CONFIG)
        for _ in range(100):
            shuffled = [preds[i] for i in rng.permutation(len(preds))]
            result = fuse_detailed(shuffled, CONFIG)

            np.testing.assert_array_equal(result.instances, reference.instances)
            np.testing.assert_array_equal(result.classes, reference.classes)
            assert result.provenance == reference.provenance

    def test_contested_source_id_gets_fresh_id(self) -> None:
        """Two clusters both made of id 5 instances: neither keeps 5"""
        config = EnsembleConfig(base_size=BASE, scales=SCALES, min_votes=2)
        preds = []
        for position, scale in enumerate(SCALES):
            instances = np.zeros((BASE, BASE), dtype=np.int32)
            if position < 2:
                instances[square(2, 2)] = 5
            elif position < 4:
                instances[square(9, 9)] = 5
            preds.append(at_scale(instances, (instances > 0).astype(np.uint8) * 4, scale))

        result = fuse_detailed(preds, config)

        assert result.instances[2, 2] == 1
        assert result.instances[9, 9] == 2
        assert [fused.instance_id for fused in result.provenance] == [1, 2]

    def test_fresh_ids_avoid_kept_ids(self) -> None:
        agreed, disputed = square(9, 9), square(1, 1)
        preds = []
        for position, scale in enumerate(SCALES):
            instances = np.zeros((BASE, BASE), dtype=np.int32)
            instances[agreed] = 1
            instances[disputed] = 2 + position
            preds.append(at_scale(instances, (instances > 0).astype(np.uint8), scale))

        fused_instances, _ = fuse(preds, CONFIG)

        assert fused_instances[9, 9] == 1
        assert fused_instances[1, 1] == 2

    def test_ids_unique_and_classes_consistent(self, label_factory: LabelMapFactory) -> None:
        instances = label_factory.instance_map(size=BASE, max_instances=10)
        classes = label_factory.class_map_for(instances)
        preds = [at_scale(label_factory.perturbed(instances), classes, scale) for scale in SCALES]

        result = fuse_detailed(preds, CONFIG)

        ids = [fused.instance_id for fused in result.provenance]
        assert len(set(ids)) == len(ids)
        assert set(np.unique(result.instances)) - {0} == set(ids)
        np.testing.assert_array_equal(result.instances > 0, result.classes > 0)

    def test_empty_predictions_give_empty_output(self) -> None:
        empty = np.zeros((BASE, BASE), dtype=np.int32)
        preds = [at_scale(empty, empty.astype(np.uint8), scale) for scale in SCALES]

        result = fuse_detailed(preds, CONFIG)

        assert not result.instances.any()
        assert result.provenance == ()

    def test_no_predictions(self) -> None:
        with pytest.raises(EmptyInputError):
            fuse([], CONFIG)

    def test_duplicate_scales(self) -> None:
        empty = np.zeros((BASE, BASE), dtype=np.int32)
        pred = at_scale(empty, empty.astype(np.uint8), BASE)

        with pytest.raises(ConfigurationError):
            fuse([pred, pred], CONFIG)

    def test_scale_outside_config(self) -> None:
        empty = np.zeros((BASE, BASE), dtype=np.int32)
        config = EnsembleConfig(base_size=BASE, scales=(32, 48), min_votes=1)

        with pytest.raises(ConfigurationError, match="not among the configured"):
            fuse([at_scale(empty, empty.astype(np.uint8), BASE)], config)
