"""Marginalizing the trajectory posterior commutes with target-space filtering.

The trajectory tracker (information form, current-trajectories variant) and
the marginal PMBM filter (independent moment-form Kalman arithmetic) are run
in lockstep on the same measurement stream. After every update the
marginalized tracker posterior must equal the filter posterior leaf by leaf:
same tracks, same leaf tables, same hypothesis weights, same existence
probabilities, same mixture moments.
"""

import math

import numpy as np
import pytest

from builders import simple_models
from oracle_gauss import kf_loglik, kf_predict, kf_update
from trajpmbm.association import AssociationConfig, PruneConfig, prune_density
from trajpmbm.estimation import extract_current_states, marginalize_density
from trajpmbm.mixtures import GaussianComponent, empty_density
from trajpmbm.prediction import predict_current
from trajpmbm.targetfilter import (
    empty_target_density,
    extract_target_states,
    predict_filter,
    prune_target_density,
    update_filter,
)
from trajpmbm.update import update


def assert_marginal_equal(td, fd, k, atol_r=1e-9, atol_m=1e-8):
    md = marginalize_density(td, k)
    assert [t.track_id for t in md.tracks] == [t.track_id for t in fd.tracks]
    assert [h.leaf_index for h in md.hypotheses] == [h.leaf_index for h in fd.hypotheses]
    np.testing.assert_allclose(
        [h.log_weight for h in md.hypotheses],
        [h.log_weight for h in fd.hypotheses],
        atol=atol_r,
    )
    for t1, t2 in zip(md.tracks, fd.tracks):
        assert len(t1.leaves) == len(t2.leaves)
        for l1, l2 in zip(t1.leaves, t2.leaves):
            assert l1.assoc_history == l2.assoc_history
            if math.isinf(l1.log_weight) or math.isinf(l2.log_weight):
                assert l1.log_weight == l2.log_weight
            else:
                assert l1.log_weight == pytest.approx(l2.log_weight, abs=atol_r)
            assert l1.existence == pytest.approx(l2.existence, abs=atol_r)
            assert len(l1.components) == len(l2.components)
            for c1, c2 in zip(l1.components, l2.components):
                assert c1.weight == pytest.approx(c2.weight, abs=atol_r)
                np.testing.assert_allclose(c1.mean, c2.mean, atol=atol_m)
                np.testing.assert_allclose(c1.cov, c2.cov, atol=atol_m)
    assert len(md.undetected) == len(fd.undetected)
    for c1, c2 in zip(md.undetected, fd.undetected):
        assert c1.weight == pytest.approx(c2.weight, abs=atol_r)
        np.testing.assert_allclose(c1.mean, c2.mean, atol=atol_m)


def simulate_measurements(rng, meas, clutter, targets, pd):
    Z = []
    for x in targets:
        if rng.random() < pd:
            Z.append(meas.H @ x + rng.multivariate_normal(np.zeros(meas.meas_dim), meas.R))
    n_c = rng.poisson(clutter.expected_count)
    for _ in range(n_c):
        Z.append(rng.uniform(clutter.region[:, 0], clutter.region[:, 1]))
    if not Z:
        return np.zeros((0, meas.meas_dim))
    Z = np.array(Z)
    return Z[rng.permutation(len(Z))]


class TestCommutation:
    def test_fifty_step_lockstep(self):
        motion, meas, birth, clutter = simple_models(pd=0.9, ps=0.95, lam=2e-4, half=25.0)
        cfg = AssociationConfig(max_hypotheses=50, murty_k=10)
        prune_cfg = PruneConfig(
            hypothesis_ratio=1e-3, max_hypotheses=50,
            recycle_threshold=1e-3, max_undetected_components=20,
        )
        rng = np.random.default_rng(42)
        targets = [np.array([0.0, 0.0]), np.array([5.0, -3.0])]

        td, fd = empty_density(), empty_target_density()
        steps_with_tracks = 0
        for k in range(50):
            targets = [
                motion.F @ x + rng.multivariate_normal(np.zeros(2), motion.Q) for x in targets
            ]
            Z = simulate_measurements(rng, meas, clutter, targets, 0.9)
            td = update(predict_current(td, motion, birth, k), Z, meas, clutter, k, cfg)
            fd = update_filter(predict_filter(fd, motion, birth), Z, meas, clutter, k, cfg)
            assert_marginal_equal(td, fd, k)
            assert extract_current_states(td, k) is not None
            ids_t = [tid for tid, _ in extract_current_states(td, k)]
            ids_f = [tid for tid, _ in extract_target_states(fd)]
            assert ids_t == ids_f
            td = prune_density(td, prune_cfg)
            fd = prune_target_density(fd, prune_cfg)
            assert_marginal_equal(td, fd, k)
            if td.tracks:
                steps_with_tracks += 1
        assert steps_with_tracks >= 40  # the scenario really exercises tracks

    def test_low_detection_high_clutter_lockstep(self):
        motion, meas, birth, clutter = simple_models(pd=0.6, ps=0.9, lam=1e-3, half=20.0)
        cfg = AssociationConfig(max_hypotheses=30, murty_k=8)
        prune_cfg = PruneConfig(hypothesis_ratio=1e-3, max_hypotheses=30)
        rng = np.random.default_rng(7)
        targets = [np.array([1.0, 1.0])]
        td, fd = empty_density(), empty_target_density()
        for k in range(20):
            targets = [
                motion.F @ x + rng.multivariate_normal(np.zeros(2), motion.Q) for x in targets
            ]
            Z = simulate_measurements(rng, meas, clutter, targets, 0.6)
            td = update(predict_current(td, motion, birth, k), Z, meas, clutter, k, cfg)
            fd = update_filter(predict_filter(fd, motion, birth), Z, meas, clutter, k, cfg)
            assert_marginal_equal(td, fd, k)
            td = prune_density(td, prune_cfg)
            fd = prune_target_density(fd, prune_cfg)


class TestFilterPieces:
    def test_kf_update_matches_oracle(self):
        _, meas, _, _ = simple_models()
        rng = np.random.default_rng(3)
        from trajpmbm.targetfilter import _kf_update

        c = GaussianComponent(1.0, rng.standard_normal(2), np.array([[2.0, 0.3], [0.3, 1.0]]))
        z = rng.standard_normal(2)
        ll, post = _kf_update(c, meas, z)
        m_e, p_e = kf_update(c.mean, c.cov, meas.H, meas.R, z)
        np.testing.assert_allclose(post.mean, m_e, atol=1e-12)
        np.testing.assert_allclose(post.cov, p_e, atol=1e-12)
        assert ll == pytest.approx(kf_loglik(c.mean, c.cov, meas.H, meas.R, z), abs=1e-12)

    def test_predict_scales_existence_and_moments(self):
        motion, _, birth, _ = simple_models(ps=0.8)
        fd = empty_target_density()
        fd = predict_filter(fd, motion, birth)
        assert len(fd.undetected) == len(birth.components)
        from trajpmbm.targetfilter import TargetLeaf, TargetPMBM, TargetTrack

        leaf = TargetLeaf(0.0, 0.5, (GaussianComponent(1.0, np.ones(2), np.eye(2)),))
        d = TargetPMBM(
            fd.undetected, (TargetTrack((0, 0), (leaf,)),), fd.hypotheses[:0] + (fd.hypotheses[0],)
        )
        from trajpmbm.mixtures import GlobalHypothesis

        d = TargetPMBM(fd.undetected, d.tracks, (GlobalHypothesis(0.0, (0,)),))
        out = predict_filter(d, motion, birth)
        got = out.tracks[0].leaves[0]
        assert got.existence == pytest.approx(0.4, abs=1e-15)
        m_e, p_e = kf_predict(np.ones(2), np.eye(2), motion.F, motion.Q)
        np.testing.assert_allclose(got.components[0].mean, m_e, atol=1e-12)
        np.testing.assert_allclose(got.components[0].cov, p_e, atol=1e-12)
