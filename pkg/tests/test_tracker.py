"""Tracker front end: config parsing, stepping, and estimator dispatch."""

import numpy as np
import pytest

from builders import simple_models
from trajpmbm.association import AssociationConfig, PruneConfig, prune_density
from trajpmbm.estimation import extract_current_states, extract_trajectories
from trajpmbm.mixtures import empty_density
from trajpmbm.prediction import predict_all, predict_current
from trajpmbm.tracker import (
    PMBMTracker,
    TrackerConfig,
    run_tracker,
    tracker_config_from_dict,
)
from trajpmbm.update import update


def frames_for(seed=5, steps=12, n=6):
    rng = np.random.default_rng(seed)
    motion, meas, birth, clutter = simple_models(pd=0.9, ps=0.95, lam=1e-4, half=30.0)
    xs = [np.array([0.0, 0.0]), np.array([8.0, -6.0])]
    frames = []
    for _ in range(steps):
        xs = [motion.F @ x + rng.multivariate_normal(np.zeros(2), motion.Q) for x in xs]
        Z = [meas.H @ x + rng.multivariate_normal(np.zeros(2), meas.R) for x in xs if rng.random() < 0.9]
        frames.append(np.array(Z) if Z else np.zeros((0, 2)))
    return frames, motion, meas, birth, clutter


class TestConfig:
    def test_rejects_unknown_variant(self):
        with pytest.raises(ValueError, match="variant"):
            TrackerConfig(variant="smoother")

    def test_rejects_bad_threshold(self):
        with pytest.raises(ValueError, match="extract_threshold"):
            TrackerConfig(extract_threshold=1.5)

    def test_from_dict_maps_every_key(self):
        cfg = tracker_config_from_dict(
            {
                "variant": "current",
                "K": 7,
                "max_hypotheses": 33,
                "hypothesis_ratio": 1e-3,
                "gate_prob": 0.99,
                "new_track_floor_ratio": 1e-5,
                "alive_commit_threshold": 1e-9,
                "recycle_threshold": 1e-2,
                "recycle_to_undetected": True,
                "dead_track_threshold": 0.2,
                "max_undetected_components": 17,
                "undetected_weight_floor": 1e-6,
                "extract_threshold": 0.4,
            }
        )
        assert cfg.variant == "current"
        assert cfg.assoc.murty_k == 7
        assert cfg.assoc.max_hypotheses == 33
        assert cfg.assoc.gate_prob == 0.99
        assert cfg.assoc.new_track_floor_ratio == 1e-5
        assert cfg.assoc.alive_commit_threshold == 1e-9
        assert cfg.prune.hypothesis_ratio == 1e-3
        assert cfg.prune.max_hypotheses == 33
        assert cfg.prune.recycle_threshold == 1e-2
        assert cfg.prune.recycle_to_undetected is True
        assert cfg.prune.dead_track_threshold == 0.2
        assert cfg.prune.max_undetected_components == 17
        assert cfg.prune.undetected_weight_floor == 1e-6
        assert cfg.extract_threshold == 0.4

    def test_from_dict_null_disables_optional_floors(self):
        cfg = tracker_config_from_dict(
            {
                "gate_prob": None,
                "new_track_floor_ratio": None,
                "alive_commit_threshold": None,
                "dead_track_threshold": None,
            }
        )
        assert cfg.assoc.gate_prob is None
        assert cfg.assoc.new_track_floor_ratio is None
        assert cfg.assoc.alive_commit_threshold is None
        assert cfg.prune.dead_track_threshold is None

    def test_from_dict_rejects_unknown_key(self):
        with pytest.raises(ValueError, match="unknown tracker config keys"):
            tracker_config_from_dict({"murthy_k": 5})

    def test_from_dict_rejects_conflicting_k(self):
        with pytest.raises(ValueError, match="K and murty_k"):
            tracker_config_from_dict({"K": 3, "murty_k": 4})

    def test_k_alias(self):
        assert tracker_config_from_dict({"K": 9}).assoc.murty_k == 9
        assert tracker_config_from_dict({"murty_k": 9}).assoc.murty_k == 9

    def test_exact_flag(self):
        cfg = tracker_config_from_dict({"exact": True})
        assert cfg.assoc.gate_prob is None
        assert cfg.assoc.keep_all_leaves is True
        assert cfg.assoc.alive_commit_threshold is None
        assert cfg.assoc.child_stop_ratio is None


class TestStepping:
    @pytest.mark.parametrize("variant", ["current", "all"])
    def test_matches_direct_pipeline(self, variant):
        frames, motion, meas, birth, clutter = frames_for()
        cfg = TrackerConfig(variant=variant)
        tracker = PMBMTracker(motion, meas, birth, clutter, cfg)
        predict = predict_current if variant == "current" else predict_all
        d = empty_density()
        for k, Z in enumerate(frames):
            tracker.step(Z)
            d = predict(d, motion, birth, k)
            d = update(d, Z, meas, clutter, k, cfg.assoc)
            d = prune_density(d, cfg.prune, k=k)
            assert tracker.k == k
        assert [h.log_weight for h in tracker.density.hypotheses] == [
            h.log_weight for h in d.hypotheses
        ]
        got = tracker.current_states()
        want = extract_current_states(d, tracker.k, cfg.extract_threshold)
        assert [tid for tid, _ in got] == [tid for tid, _ in want]
        for (_, a), (_, b) in zip(got, want):
            np.testing.assert_array_equal(a, b)
        et, ed = tracker.trajectories(), extract_trajectories(d, cfg.extract_threshold)
        assert [e.track_id for e in et] == [e.track_id for e in ed]

    def test_two_targets_are_tracked(self):
        frames, motion, meas, birth, clutter = frames_for()
        result = run_tracker(frames, motion, meas, birth, clutter, TrackerConfig(variant="all"))
        assert len(result.step_states) == len(frames)
        assert len(result.step_times) == len(frames)
        assert len(result.step_states[-1]) == 2
        assert len(result.trajectories) >= 2
        for e in result.trajectories:
            n = e.trajectory.end_time - e.trajectory.birth_time + 1
            assert len(e.trajectory.states) == n
            assert 0.0 <= e.existence <= 1.0

    def test_filter_variant_runs_and_refuses_trajectories(self):
        frames, motion, meas, birth, clutter = frames_for()
        cfg = TrackerConfig(variant="filter")
        tracker = PMBMTracker(motion, meas, birth, clutter, cfg)
        for Z in frames:
            tracker.step(Z)
        assert len(tracker.current_states()) == 2
        with pytest.raises(ValueError, match="no trajectory history"):
            tracker.trajectories()
        result = run_tracker(frames, motion, meas, birth, clutter, cfg)
        assert result.trajectories == []

    def test_empty_frames_are_legal(self):
        _, motion, meas, birth, clutter = frames_for()
        frames = [np.zeros((0, 2))] * 4
        result = run_tracker(frames, motion, meas, birth, clutter, TrackerConfig(variant="all"))
        assert all(states == [] for states in result.step_states)


def junk_burst_frames():
    """One unsupported measurement whose track freezes between the recycle
    and dead-track thresholds: at distance ~6.7 from the birth mean the
    materialized existence is ~0.4, and after the alive mass collapses under
    repeated misses (pd 0.98) it can never move again, stuck near 0.007."""
    motion, meas, birth, clutter = simple_models(pd=0.98, ps=0.99, lam=1e-4, half=30.0)
    frames = [np.array([[6.7, 0.0]])] + [np.zeros((0, 2))] * 14
    return frames, motion, meas, birth, clutter


class TestDeadTrackPrune:
    def test_frozen_existence_clutter_track_is_dropped(self):
        frames, motion, meas, birth, clutter = junk_burst_frames()
        tracker = PMBMTracker(motion, meas, birth, clutter, TrackerConfig(variant="all"))
        for Z in frames:
            tracker.step(Z)
        assert len(tracker.density.tracks) == 0

    def test_disabled_rule_keeps_the_frozen_track(self):
        frames, motion, meas, birth, clutter = junk_burst_frames()
        cfg = tracker_config_from_dict({"variant": "all", "dead_track_threshold": None})
        tracker = PMBMTracker(motion, meas, birth, clutter, cfg)
        for Z in frames:
            tracker.step(Z)
        assert [t.track_id for t in tracker.density.tracks] == [(0, 0)]
        r = max(l.existence for l in tracker.density.tracks[0].leaves)
        assert cfg.prune.recycle_threshold < r < PruneConfig().dead_track_threshold

    def test_genuinely_dead_targets_survive_for_reporting(self):
        # a well-supported target that disappears keeps existence at one,
        # so the dead-track rule must not touch it
        rng = np.random.default_rng(3)
        motion, meas, birth, clutter = simple_models(pd=0.98, ps=0.99, lam=1e-4, half=30.0)
        x = np.array([1.0, -2.0])
        frames = []
        for _ in range(8):
            x = motion.F @ x + rng.multivariate_normal(np.zeros(2), motion.Q)
            frames.append(np.array([meas.H @ x + rng.multivariate_normal(np.zeros(2), meas.R)]))
        frames += [np.zeros((0, 2))] * 10
        tracker = PMBMTracker(motion, meas, birth, clutter, TrackerConfig(variant="all"))
        for Z in frames:
            tracker.step(Z)
        by_id = {t.track_id: max(l.existence for l in t.leaves) for t in tracker.density.tracks}
        assert by_id[(0, 0)] == pytest.approx(1.0, abs=1e-12)
        trajs = tracker.trajectories()
        assert [e.track_id for e in trajs] == [(0, 0)]
        assert trajs[0].trajectory.end_time < len(frames) - 1
