from dataclasses import dataclass

import numpy as np
import pytest

from uavfed.metrics import (
    asr_targeted,
    asr_targeted_classwise,
    asr_untargeted,
    average_round_time,
    detection_rates,
    dropout_ratio,
)


class TestTargetedAsr:
    def test_reference_case(self):
        truth = np.array([5, 5, 5, 5, 1, 2, 3, 4, 0, 9])
        preds = np.array([3, 3, 5, 5, 1, 2, 3, 4, 0, 9])
        # 2 of 10 samples are attacked-class items predicted elsewhere
        assert asr_targeted(preds, truth, 5) == pytest.approx(0.2)
        # 2 of the 4 class-5 samples escaped
        assert asr_targeted_classwise(preds, truth, 5) == pytest.approx(0.5)

    def test_bounded_by_class_prevalence(self):
        truth = np.array([5, 5, 0, 1, 2, 3, 4, 6, 7, 8])
        preds = np.zeros(10, dtype=int)
        assert asr_targeted(preds, truth, 5) <= 0.2 + 1e-12

    def test_misclassified_other_classes_do_not_count(self):
        truth = np.array([5, 0, 1])
        preds = np.array([5, 9, 9])
        assert asr_targeted(preds, truth, 5) == 0.0
        assert asr_targeted_classwise(preds, truth, 5) == 0.0

    def test_input_validation(self):
        with pytest.raises(ValueError):
            asr_targeted(np.ones(3), np.ones(4), 5)
        with pytest.raises(ValueError):
            asr_targeted(np.array([]), np.array([]), 5)
        with pytest.raises(ValueError):
            asr_targeted_classwise(np.array([1]), np.array([1]), 5)


class TestUntargetedAsr:
    def test_relative_drop(self):
        assert asr_untargeted(0.8, 0.6) == pytest.approx(0.25)

    def test_symmetric_in_sign_of_change(self):
        assert asr_untargeted(0.8, 1.0) == pytest.approx(0.25)

    def test_requires_positive_reference(self):
        with pytest.raises(ValueError):
            asr_untargeted(0.0, 0.5)


class TestDetectionRates:
    def test_mixed_round(self):
        fp, fn = detection_rates(
            flagged={3, 7}, truly_malicious={7, 9}, evaluated_pool={1, 2, 3, 7, 9}
        )
        # honest = {1,2,3}; one flagged. malicious present = {7,9}; 9 escaped.
        assert fp == pytest.approx(1 / 3)
        assert fn == pytest.approx(1 / 2)

    def test_perfect_round(self):
        fp, fn = detection_rates({7}, {7}, {1, 7})
        assert fp == 0.0 and fn == 0.0

    def test_no_malicious_entrants_gives_none_fn(self):
        fp, fn = detection_rates(set(), {9}, {1, 2})
        assert fp == 0.0
        assert fn is None

    def test_all_malicious_pool_gives_none_fp(self):
        fp, fn = detection_rates({5}, {5, 6}, {5, 6})
        assert fp is None
        assert fn == pytest.approx(0.5)

    def test_flagged_outside_pool_rejected(self):
        with pytest.raises(ValueError):
            detection_rates({4}, {4}, {1, 2})


@dataclass
class FakeRound:
    dropouts: int
    selection_slots: int
    round_time_s: float
    canceled: bool = False


class TestRunAverages:
    def test_dropout_ratio_over_slots(self):
        logs = [FakeRound(1, 5, 10.0), FakeRound(0, 5, 12.0), FakeRound(2, 10, 11.0)]
        assert dropout_ratio(logs) == pytest.approx(3 / 20)

    def test_dropout_ratio_empty_run_rejected(self):
        with pytest.raises(ValueError):
            dropout_ratio([])

    def test_round_time_skips_canceled(self):
        logs = [FakeRound(0, 5, 10.0), FakeRound(0, 0, 3.0, canceled=True), FakeRound(0, 5, 20.0)]
        assert average_round_time(logs) == pytest.approx(15.0)

    def test_all_canceled_rejected(self):
        with pytest.raises(ValueError):
            average_round_time([FakeRound(0, 0, 1.0, canceled=True)])
