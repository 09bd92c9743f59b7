import numpy as np
import pytest

from uavfed.channel import ChannelParams, ComputeProfile, UavGeometry, training_time
from uavfed.clients import (
    COMPLETED,
    DROPPED_OUT,
    HONEST,
    MALICIOUS_TARGETED,
    MALICIOUS_UNTARGETED,
    MISSED_DEADLINE,
    STRAGGLER,
    BehaviorProfile,
    ClientRoundOutcome,
    RoundChannel,
    TrainingHyper,
    UavClient,
    client_times,
    flip_labels,
    poison_update,
    simulate_client_round,
)
from uavfed.data import LabeledDataset
from uavfed.model import WeightUpdate, init_model


def parent_dataset(seed=0, n=48, dim=6, classes=3):
    rng = np.random.default_rng(seed)
    return LabeledDataset(
        rng.normal(size=(n, dim)), rng.integers(0, classes, size=n), classes
    )


def make_client(profile, cid=3, gamma=1e8, shard=None):
    if shard is None:
        shard = np.arange(32)
    return UavClient(
        id=cid,
        shard=np.asarray(shard),
        compute=ComputeProfile(gamma, 7e4),
        geometry=UavGeometry(300.0, 60.0),
        profile=profile,
    )


HYPER = TrainingHyper(epochs=2, batch_size=16, lr=0.1)


def round_channel():
    return RoundChannel(ChannelParams(), bandwidth_hz=2e6)


class TestBehaviorProfile:
    def test_kind_specific_fields_enforced(self):
        BehaviorProfile(HONEST)
        BehaviorProfile("dropout", dropout_prob=0.5)
        BehaviorProfile(MALICIOUS_UNTARGETED, noise_sigma=1.0)
        BehaviorProfile(MALICIOUS_TARGETED, flip_src=5, flip_dst=3)
        with pytest.raises(ValueError):
            BehaviorProfile(HONEST, dropout_prob=0.5)
        with pytest.raises(ValueError):
            BehaviorProfile("dropout")
        with pytest.raises(ValueError):
            BehaviorProfile(MALICIOUS_TARGETED, flip_src=5)
        with pytest.raises(ValueError):
            BehaviorProfile(STRAGGLER, noise_sigma=1.0)
        with pytest.raises(ValueError):
            BehaviorProfile("gremlin")

    def test_range_checks(self):
        with pytest.raises(ValueError):
            BehaviorProfile("dropout", dropout_prob=1.5)
        with pytest.raises(ValueError):
            BehaviorProfile(MALICIOUS_UNTARGETED, noise_sigma=-2.0)


class TestLabelFlip:
    def test_relabels_only_source_class(self):
        ds = parent_dataset(classes=4)
        flipped = flip_labels(ds, 2, 0)
        assert not np.any(flipped.labels == 2)
        moved = ds.labels == 2
        np.testing.assert_array_equal(flipped.labels[moved], 0)
        np.testing.assert_array_equal(flipped.labels[~moved], ds.labels[~moved])

    def test_features_shared_labels_copied(self):
        ds = parent_dataset()
        flipped = flip_labels(ds, 1, 0)
        assert flipped.features is ds.features
        assert flipped.labels is not ds.labels

    def test_invalid_flip_rejected(self):
        ds = parent_dataset(classes=3)
        with pytest.raises(ValueError):
            flip_labels(ds, 1, 1)
        with pytest.raises(ValueError):
            flip_labels(ds, 5, 0)


class TestPoison:
    def test_deterministic_per_seed(self):
        up = WeightUpdate(np.ones(50), owner_id=1, sample_count=10)
        a = poison_update(up, 2.0, seed=42)
        b = poison_update(up, 2.0, seed=42)
        c = poison_update(up, 2.0, seed=43)
        np.testing.assert_array_equal(a.delta, b.delta)
        assert not np.array_equal(a.delta, c.delta)
        assert a.owner_id == 1 and a.sample_count == 10

    def test_zero_sigma_is_identity(self):
        up = WeightUpdate(np.arange(5.0), owner_id=0, sample_count=3)
        np.testing.assert_array_equal(poison_update(up, 0.0, seed=1).delta, up.delta)

    def test_negative_sigma_rejected(self):
        up = WeightUpdate(np.ones(5), owner_id=0, sample_count=3)
        with pytest.raises(ValueError):
            poison_update(up, -1.0, seed=1)


class TestClientTimes:
    def test_composition(self):
        client = make_client(BehaviorProfile(HONEST), gamma=1e7)
        t_train, t_up = client_times(client, HYPER, round_channel(), 1000, 4)
        assert t_train == pytest.approx(
            training_time(HYPER.epochs, 7e4, client.sample_count, 1e7)
        )
        assert t_up > 0

    def test_bigger_shard_trains_longer(self):
        fast = make_client(BehaviorProfile(HONEST), shard=np.arange(8))
        slow = make_client(BehaviorProfile(HONEST), shard=np.arange(40))
        ch = round_channel()
        assert client_times(slow, HYPER, ch, 1000, 4)[0] > client_times(fast, HYPER, ch, 1000, 4)[0]


class TestSimulateClientRound:
    def setup_method(self):
        self.data = parent_dataset()
        self.params = init_model((6, 5, 3), seed=0)

    def run(self, profile, deadline=1e9, seed=123, **kw):
        client = make_client(profile, **kw)
        return simulate_client_round(
            client, self.params, deadline, HYPER, round_channel(), self.data, seed
        )

    def test_honest_completion(self):
        out = self.run(BehaviorProfile(HONEST))
        assert out.status == COMPLETED
        assert out.update is not None and out.update.owner_id == 3
        assert out.update.sample_count == 32
        assert out.elapsed_s > 0

    def test_deterministic(self):
        a = self.run(BehaviorProfile(HONEST))
        b = self.run(BehaviorProfile(HONEST))
        np.testing.assert_array_equal(a.update.delta, b.update.delta)
        assert a.elapsed_s == b.elapsed_s

    def test_misses_tight_deadline_but_still_uploads(self):
        out = self.run(BehaviorProfile(HONEST), deadline=1e-6)
        assert out.status == MISSED_DEADLINE
        assert out.update is not None

    def test_dropout_is_silent(self):
        out = self.run(BehaviorProfile("dropout", dropout_prob=1.0))
        assert out.status == DROPPED_OUT
        assert out.update is None
        assert out.elapsed_s > 0

    def test_dropout_probability_zero_behaves_honest(self):
        out = self.run(BehaviorProfile("dropout", dropout_prob=0.0))
        assert out.status == COMPLETED

    def test_targeted_attacker_trains_on_flipped_labels(self):
        honest = self.run(BehaviorProfile(HONEST))
        labels_before = self.data.labels.copy()
        attacked = self.run(BehaviorProfile(MALICIOUS_TARGETED, flip_src=2, flip_dst=0))
        np.testing.assert_array_equal(self.data.labels, labels_before)
        assert not np.array_equal(attacked.update.delta, honest.update.delta)

    def test_untargeted_attacker_ships_noise(self):
        honest = self.run(BehaviorProfile(HONEST))
        attacked = self.run(BehaviorProfile(MALICIOUS_UNTARGETED, noise_sigma=300.0))
        honest_rms = np.sqrt(np.mean(honest.update.delta**2))
        attacked_rms = np.sqrt(np.mean(attacked.update.delta**2))
        assert attacked_rms > 50 * honest_rms

    def test_straggler_slow_clock_shows_in_elapsed(self):
        quick = self.run(BehaviorProfile(HONEST), gamma=1e8)
        slow = self.run(BehaviorProfile(STRAGGLER), gamma=1e5)
        assert slow.elapsed_s > 100 * quick.elapsed_s

    def test_nonpositive_deadline_rejected(self):
        with pytest.raises(ValueError):
            self.run(BehaviorProfile(HONEST), deadline=0.0)

    def test_diverging_training_reports_dropout_with_diagnostic(self):
        base = parent_dataset(seed=1)
        wild = LabeledDataset(base.features * 1e200, base.labels, base.num_classes)
        client = make_client(BehaviorProfile(HONEST))
        with np.errstate(all="ignore"):
            out = simulate_client_round(
                client, self.params, 1e9, HYPER, round_channel(), wild, 5
            )
        assert out.status == DROPPED_OUT
        assert out.update is None
        assert out.diagnostic


class TestOutcomeInvariant:
    def test_update_presence_must_match_status(self):
        up = WeightUpdate(np.ones(3), owner_id=0, sample_count=1)
        with pytest.raises(ValueError):
            ClientRoundOutcome(COMPLETED, None, 1.0, 5)
        with pytest.raises(ValueError):
            ClientRoundOutcome(DROPPED_OUT, up, 1.0, 5)
