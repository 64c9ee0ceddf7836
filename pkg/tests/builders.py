"""Random model/density builders shared by the tracker test modules."""

from __future__ import annotations

import numpy as np

from trajpmbm.gaussinfo import InfoGaussian, info_predict
from trajpmbm.mixtures import (
    BernoulliComponent,
    GaussianComponent,
    GlobalHypothesis,
    MixtureComponent,
    PMBMDensity,
    Track,
    TrajectoryMixture,
)
from trajpmbm.models import (
    BirthModel,
    ClutterModel,
    MeasurementModel,
    MotionModel,
)


def random_spd(rng, n, scale=1.0):
    a = rng.standard_normal((n, n))
    return scale * (a @ a.T + n * np.eye(n))


def random_motion(rng, nx=2, ps=0.9):
    F = np.eye(nx) + 0.1 * rng.standard_normal((nx, nx))
    return MotionModel(F, random_spd(rng, nx, 0.3), ps)


def random_meas(rng, nx=2, nz=None, pd=0.9):
    nz = nx if nz is None else nz
    H = np.eye(nz, nx) + 0.05 * rng.standard_normal((nz, nx))
    return MeasurementModel(H, random_spd(rng, nz, 0.5), pd)


def random_seq(rng, motion, beta, eps):
    """InfoGaussian over x_beta..x_eps grown with the given motion model."""
    nx = motion.F.shape[0]
    g = InfoGaussian.from_moments(rng.standard_normal(nx), random_spd(rng, nx))
    for _ in range(eps - beta):
        g = info_predict(g, motion.F, motion.Qinv)
    return g


def random_mixture(rng, motion, k, n_comps, live_only=False):
    """Normalized mixture; components end at k (alive) or earlier (dead),
    with distinct (birth, end) keys."""
    keys = set()
    comps = []
    w = rng.dirichlet(np.ones(n_comps))
    for i in range(n_comps):
        while True:
            eps = k if (live_only or rng.random() < 0.6) else int(rng.integers(max(0, k - 2), k))
            beta = int(rng.integers(max(0, eps - 2), eps + 1))
            if (beta, eps) not in keys:
                keys.add((beta, eps))
                break
        comps.append(MixtureComponent(float(w[i]), beta, eps, random_seq(rng, motion, beta, eps)))
    return TrajectoryMixture(tuple(comps))


def random_density(rng, motion, k, n_tracks=2, leaves=2, n_hyps=3, live_only=False):
    """Valid PMBM posterior at time k with randomized structure."""
    tracks = []
    for i in range(n_tracks):
        lvs = []
        for a in range(leaves):
            mix = random_mixture(rng, motion, k, int(rng.integers(1, 3)), live_only)
            lvs.append(
                BernoulliComponent(
                    0.0, float(rng.uniform(0.05, 0.99)), mix, frozenset({(k - 1, i * leaves + a)})
                )
            )
        tracks.append(Track((0, i), tuple(lvs)))
    n_hyps = min(n_hyps, leaves**n_tracks)
    vecs = set()
    while len(vecs) < n_hyps:
        vecs.add(tuple(int(rng.integers(0, leaves)) for _ in range(n_tracks)))
    logw = np.log(rng.dirichlet(np.ones(n_hyps)))
    hyps = tuple(GlobalHypothesis(float(w), v) for w, v in zip(logw, sorted(vecs)))
    und = random_mixture(rng, motion, k, 2, live_only)
    return PMBMDensity(und, tuple(tracks), hyps)


def simple_models(nx=2, pd=0.9, ps=0.9, lam=1e-3, half=50.0):
    """Small position-only model set for end-to-end miniature scenarios."""
    F = 0.95 * np.eye(nx)
    Q = 0.3 * np.eye(nx)
    H = np.eye(nx)
    R = 0.5 * np.eye(nx)
    birth = BirthModel(
        (GaussianComponent(0.3, np.zeros(nx), 4.0 * np.eye(nx)),)
    )
    region = np.array([[-half, half]] * nx)
    clutter = ClutterModel(lam, region)
    return MotionModel(F, Q, ps), MeasurementModel(H, R, pd), birth, clutter
