"""Container types, mixture reductions, and density JSON round trips."""

import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from trajpmbm.gaussinfo import InfoGaussian, info_predict, info_update, marginal_last_step
from trajpmbm.mixtures import (
    BernoulliComponent,
    GaussianComponent,
    GlobalHypothesis,
    MixtureComponent,
    PMBMDensity,
    Track,
    Trajectory,
    TrajectoryMixture,
    check_valid,
    empty_density,
    live_mass,
    marginalize_to_target,
    moment_match,
    normalize_hypotheses,
    prune_mixture,
    scale_mixture,
)
from trajpmbm.models import (
    BirthModel,
    ClutterModel,
    MeasurementModel,
    MotionModel,
    constant_velocity_model,
    position_measurement_model,
)
from trajpmbm.serialize import density_from_dict, density_to_dict

import oracle_gauss as oracle


def make_seq(seed=0, steps=2, n=2):
    rng = np.random.default_rng(seed)
    g = InfoGaussian.from_moments(rng.standard_normal(n), np.eye(n))
    f = np.eye(n) + 0.1 * rng.standard_normal((n, n))
    qinv = np.eye(n)
    h = np.eye(1, n)
    for _ in range(steps):
        g = info_predict(g, f, qinv)
        g = info_update(g, h, np.eye(1), rng.standard_normal(1))
    return g


def comp(weight, birth, end, seed=0):
    return MixtureComponent(weight, birth, end, make_seq(seed=seed, steps=end - birth))


class TestTrajectory:
    def test_accessors(self):
        tr = Trajectory(2, 4, np.arange(6.0).reshape(3, 2))
        assert tr.length == 3
        assert tr.exists_at(2) and tr.exists_at(4) and not tr.exists_at(5)
        assert_allclose(tr.state_at(3), [2.0, 3.0])
        with pytest.raises(KeyError):
            tr.state_at(1)

    def test_validation(self):
        with pytest.raises(ValueError):
            Trajectory(3, 2, np.zeros((1, 2)))
        with pytest.raises(ValueError):
            Trajectory(0, 2, np.zeros((2, 2)))


class TestMixtureOps:
    def test_prune_density_renormalizes(self):
        mix = TrajectoryMixture((comp(0.7, 0, 2), comp(0.29, 1, 2, seed=1), comp(0.01, 0, 1, seed=2)))
        out = prune_mixture(mix, weight_threshold=0.05)
        assert len(out.components) == 2
        assert_allclose(out.weight_sum, 1.0, atol=1e-12)
        assert_allclose(out.components[0].weight, 0.7 / 0.99)

    def test_prune_intensity_keeps_scale(self):
        mix = TrajectoryMixture((comp(5.0, 0, 2), comp(0.001, 1, 2, seed=1)))
        out = prune_mixture(mix, weight_threshold=0.01, intensity=True)
        assert len(out.components) == 1
        assert_allclose(out.weight_sum, 5.0)

    def test_prune_cap_keeps_heaviest(self):
        mix = TrajectoryMixture(tuple(comp(w, 0, 2, seed=i) for i, w in enumerate([0.1, 0.5, 0.4])))
        out = prune_mixture(mix, max_components=2)
        assert sorted(c.weight for c in out.components) == pytest.approx([4 / 9, 5 / 9])

    def test_prune_all_of_density_errors(self):
        mix = TrajectoryMixture((comp(1.0, 0, 2),))
        with pytest.raises(ValueError):
            prune_mixture(mix, weight_threshold=2.0)

    def test_live_mass_counts_only_current_end(self):
        mix = TrajectoryMixture((comp(0.6, 0, 3), comp(0.3, 1, 3, seed=1), comp(0.1, 0, 2, seed=2)))
        assert live_mass(mix, 3) == pytest.approx(0.9)
        assert live_mass(mix, 2) == pytest.approx(0.1)

    def test_scale(self):
        mix = TrajectoryMixture((comp(0.5, 0, 2),))
        assert scale_mixture(mix, 0.2).weight_sum == pytest.approx(0.1)

    def test_moment_match_two_component_closed_form(self):
        comps = (
            GaussianComponent(0.5, [-1.0], [[1.0]]),
            GaussianComponent(0.5, [1.0], [[1.0]]),
        )
        m = moment_match(comps)
        assert m.weight == pytest.approx(1.0)
        assert_allclose(m.mean, [0.0])
        assert_allclose(m.cov, [[2.0]])

    @given(st.integers(0, 10**6))
    @settings(deadline=None, max_examples=30)
    def test_moment_match_preserves_mean_and_spread(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(1, 4))
        comps = tuple(
            GaussianComponent(float(w), rng.standard_normal(n), np.eye(n) * float(rng.uniform(0.5, 2)))
            for w in rng.uniform(0.1, 1.0, size=int(rng.integers(1, 5)))
        )
        m = moment_match(comps)
        total = sum(c.weight for c in comps)
        mean_ref = sum(c.weight * c.mean for c in comps) / total
        assert m.weight == pytest.approx(total)
        assert_allclose(m.mean, mean_ref, atol=1e-12)
        # matched covariance dominates the within-component part
        assert np.all(np.linalg.eigvalsh(m.cov) > 0)


class TestMarginalizeToTarget:
    def test_splits_alive_and_dead_mass(self):
        alive1, alive2, dead = comp(0.5, 0, 3), comp(0.2, 1, 3, seed=1), comp(0.3, 0, 2, seed=2)
        bern = BernoulliComponent(0.0, 0.8, TrajectoryMixture((alive1, alive2, dead)))
        tb = marginalize_to_target(bern, 3)
        assert tb.existence == pytest.approx(0.8 * 0.7)
        assert len(tb.components) == 2
        assert tb.components[0].weight == pytest.approx(0.5 / 0.7)
        mean_ref, cov_ref = marginal_last_step(alive1.seq)
        assert_allclose(tb.components[0].mean, mean_ref)
        assert_allclose(tb.components[0].cov, cov_ref)

    def test_all_dead_gives_zero_existence(self):
        bern = BernoulliComponent(0.0, 0.9, TrajectoryMixture((comp(1.0, 0, 2),)))
        tb = marginalize_to_target(bern, 5)
        assert tb.existence == 0.0 and tb.components == ()

    def test_collapse_moment_matches(self):
        bern = BernoulliComponent(
            0.0, 1.0, TrajectoryMixture((comp(0.5, 0, 3), comp(0.5, 1, 3, seed=1)))
        )
        exact = marginalize_to_target(bern, 3)
        collapsed = marginalize_to_target(bern, 3, collapse=True)
        assert len(collapsed.components) == 1
        matched = moment_match(exact.components)
        assert_allclose(collapsed.components[0].mean, matched.mean)
        assert_allclose(collapsed.components[0].cov, matched.cov)


def small_density():
    mix = TrajectoryMixture((comp(0.4, 0, 1), comp(0.25, 1, 1, seed=3)))
    leaf_a = BernoulliComponent(-0.2, 0.9, TrajectoryMixture((comp(1.0, 0, 1, seed=4),)), frozenset({(0, 0)}))
    leaf_b = BernoulliComponent(-1.5, 0.0, None, frozenset({(0, 0), (1, 1)}))
    leaf_c = BernoulliComponent(-math.inf, 1.0, None, frozenset({(1, 0)}))
    tracks = (Track((0, 0), (leaf_a, leaf_b)), Track((1, 0), (leaf_c,)))
    hyps = (GlobalHypothesis(np.log(0.75), (0, 0)), GlobalHypothesis(np.log(0.25), (1, 0)))
    return PMBMDensity(mix, tracks, hyps)


class TestDensityInvariants:
    def test_empty_density_is_valid(self):
        check_valid(empty_density())

    def test_small_density_valid_and_normalized(self):
        d = small_density()
        check_valid(d)
        d2 = normalize_hypotheses(d)
        assert_allclose([h.log_weight for h in d2.hypotheses], [h.log_weight for h in d.hypotheses])

    def test_bad_hypothesis_sum_rejected(self):
        d = small_density()
        bad = PMBMDensity(d.undetected, d.tracks, (GlobalHypothesis(-0.5, (0, 0)),))
        with pytest.raises(ValueError):
            check_valid(bad)

    def test_unnormalized_leaf_density_rejected(self):
        bad_leaf = BernoulliComponent(0.0, 0.5, TrajectoryMixture((comp(0.5, 0, 1),)))
        d = PMBMDensity(
            TrajectoryMixture(()), (Track((0, 0), (bad_leaf,)),), (GlobalHypothesis(0.0, (0,)),)
        )
        with pytest.raises(ValueError):
            check_valid(d)

    def test_duplicate_birth_end_keys_rejected(self):
        dup = TrajectoryMixture((comp(0.5, 0, 1), comp(0.5, 0, 1, seed=9)))
        leaf = BernoulliComponent(0.0, 0.5, dup)
        d = PMBMDensity(TrajectoryMixture(()), (Track((0, 0), (leaf,)),), (GlobalHypothesis(0.0, (0,)),))
        with pytest.raises(ValueError):
            check_valid(d)

    def test_positive_existence_requires_density(self):
        with pytest.raises(ValueError):
            BernoulliComponent(0.0, 0.5, None)
        # both degenerate escapes are allowed
        BernoulliComponent(-math.inf, 1.0, None)
        BernoulliComponent(0.0, 0.0, None)


class TestSerialization:
    def test_round_trip_is_exact(self):
        d = small_density()
        text = json.dumps(density_to_dict(d), allow_nan=False)
        d2 = density_from_dict(json.loads(text))
        assert len(d2.tracks) == len(d.tracks)
        for t1, t2 in zip(d.tracks, d2.tracks):
            assert t1.track_id == t2.track_id
            for l1, l2 in zip(t1.leaves, t2.leaves):
                assert l1.log_weight == l2.log_weight
                assert l1.existence == l2.existence
                assert l1.assoc_history == l2.assoc_history
                if l1.density is None:
                    assert l2.density is None
                    continue
                for c1, c2 in zip(l1.density.components, l2.density.components):
                    assert c1.weight == c2.weight and c1.key == c2.key
                    assert np.array_equal(c1.seq.y, c2.seq.y)
                    assert np.array_equal(c1.seq.diag, c2.seq.diag)
                    assert np.array_equal(c1.seq.offdiag, c2.seq.offdiag)
        for h1, h2 in zip(d.hypotheses, d2.hypotheses):
            assert h1.log_weight == h2.log_weight and h1.leaf_index == h2.leaf_index
        for c1, c2 in zip(d.undetected.components, d2.undetected.components):
            assert c1.weight == c2.weight
            assert np.array_equal(c1.seq.y, c2.seq.y)

    def test_minus_infinity_survives_strict_json(self):
        d = small_density()
        text = json.dumps(density_to_dict(d), allow_nan=False)
        assert "Infinity" not in text
        d2 = density_from_dict(json.loads(text))
        assert d2.tracks[1].leaves[0].log_weight == -math.inf

    def test_wrong_format_rejected(self):
        with pytest.raises(ValueError):
            density_from_dict({"format": "other", "version": 1})


class TestModels:
    def test_constant_velocity_moves_position(self):
        m = constant_velocity_model(dt=2.0, sigma_v=0.5, ps=0.9)
        assert_allclose(m.F @ np.array([1.0, 2.0, 3.0, 4.0]), [7.0, 10.0, 3.0, 4.0])
        assert m.ps == 0.9
        # strictly PD process noise: information form needs Q^-1
        assert np.all(np.linalg.eigvalsh(m.Q) > 0)
        assert_allclose(m.Qinv @ m.Q, np.eye(4), atol=1e-12)

    def test_singular_process_noise_rejected(self):
        with pytest.raises(ValueError):
            MotionModel(np.eye(2), np.array([[1.0, 1.0], [1.0, 1.0]]), 0.9)

    def test_position_measurement_picks_positions(self):
        mm = position_measurement_model(sigma_z=10.0, pd=0.5)
        assert_allclose(mm.H @ np.array([1.0, 2.0, 3.0, 4.0]), [1.0, 2.0])
        assert_allclose(mm.R, 100.0 * np.eye(2))

    def test_probability_bounds_enforced(self):
        with pytest.raises(ValueError):
            constant_velocity_model(ps=1.5)
        with pytest.raises(ValueError):
            position_measurement_model(pd=-0.1)

    def test_clutter_uniform_intensity(self):
        c = ClutterModel(2.5e-8, np.array([[-1000.0, 1000.0], [-1000.0, 1000.0]]))
        assert c.volume == pytest.approx(4e6)
        assert c.expected_count == pytest.approx(0.1)
        assert c.intensity([0.0, 0.0]) == 2.5e-8
        assert c.intensity([2000.0, 0.0]) == 0.0
        assert c.log_intensity([2000.0, 0.0]) == -math.inf

    def test_birth_intensity_round_trips_moments(self):
        birth = BirthModel((GaussianComponent(0.3, [1.0, 2.0], np.diag([4.0, 9.0])),))
        mix = birth.intensity_at(7)
        assert mix.weight_sum == pytest.approx(0.3)
        c = mix.components[0]
        assert c.key == (7, 7)
        mean, cov = marginal_last_step(c.seq)
        assert_allclose(mean, [1.0, 2.0], atol=1e-12)
        assert_allclose(cov, np.diag([4.0, 9.0]), atol=1e-12)
        assert birth.expected_births == pytest.approx(0.3)
