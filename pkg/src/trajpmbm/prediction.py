"""Prediction step of the two trajectory trackers.

Two variants share one interface and differ only in how survival acts:

* current-trajectories: a dead object leaves the set entirely, so existence
  scales by the survival probability and every retained hypothesis is an
  extended, still-alive trajectory;
* all-trajectories: objects never leave the set; each still-alive mixture
  component splits into an ended copy (weight times 1 - ps, unchanged) and
  an extended copy (weight times ps), and existence is untouched.

Both variants keep track/hypothesis structure and weights exactly as they
were; only intensities, existence probabilities, and mixtures move.
"""

from __future__ import annotations

from dataclasses import replace

from .gaussinfo import info_predict
from .mixtures import (
    BernoulliComponent,
    MixtureComponent,
    PMBMDensity,
    Track,
    TrajectoryMixture,
)
from .models import BirthModel, MotionModel

__all__ = [
    "predict_current",
    "predict_all",
    "predict_mixture_current",
    "predict_mixture_all",
]


def _extend(c: MixtureComponent, motion: MotionModel) -> MixtureComponent:
    seq = info_predict(c.seq, motion.F, motion.Qinv)
    return MixtureComponent(c.weight, c.birth_time, c.end_time + 1, seq)


def predict_mixture_current(
    mix: TrajectoryMixture, motion: MotionModel, k: int, intensity: bool = False
) -> TrajectoryMixture:
    """Current-trajectories mixture prediction to time k.

    For an intensity, weights scale by ps (surviving mass) and sequences are
    extended. For a normalized density the ps factor cancels against its own
    normalization (it lives in the existence probability instead), so weights
    are unchanged. Every component must end at k-1: the current-trajectories
    recursion can produce nothing else, so anything older is a caller bug.
    """
    comps = []
    for c in mix.components:
        if c.end_time != k - 1:
            raise AssertionError(
                f"current-trajectories component ends at {c.end_time}, expected {k - 1}"
            )
        out = _extend(c, motion)
        if intensity:
            out = replace(out, weight=out.weight * motion.ps)
        comps.append(out)
    return TrajectoryMixture(tuple(comps))


def predict_mixture_all(
    mix: TrajectoryMixture, motion: MotionModel, k: int, intensity: bool = False
) -> TrajectoryMixture:
    """All-trajectories mixture prediction to time k: still-alive components
    split into an ended copy and an extended copy; already-ended components
    pass through untouched. Total mass is conserved exactly (density or
    intensity alike) because the split weights are (1 - ps) and ps."""
    del intensity  # same recursion either way; kept for interface symmetry
    comps = []
    for c in mix.components:
        if c.end_time > k - 1:
            raise AssertionError(f"component ends at {c.end_time}, after prediction source {k - 1}")
        if c.end_time < k - 1:
            comps.append(c)
            continue
        if motion.ps < 1.0:
            comps.append(replace(c, weight=c.weight * (1.0 - motion.ps)))
        if motion.ps > 0.0:
            ext = _extend(c, motion)
            comps.append(replace(ext, weight=c.weight * motion.ps))
    return TrajectoryMixture(tuple(comps))


def _predict_leaf_current(leaf: BernoulliComponent, motion: MotionModel, k: int) -> BernoulliComponent:
    if leaf.density is None:
        return leaf
    density = predict_mixture_current(leaf.density, motion, k)
    # survival acts on existence; the mixture stays normalized
    return replace(leaf, existence=leaf.existence * motion.ps, density=density)


def _predict_leaf_all(leaf: BernoulliComponent, motion: MotionModel, k: int) -> BernoulliComponent:
    if leaf.density is None:
        return leaf
    if all(c.end_time < k - 1 for c in leaf.density.components):
        return leaf  # every trajectory already ended; prediction is the identity
    return replace(leaf, density=predict_mixture_all(leaf.density, motion, k))


def _predict(d, motion, birth, k, leaf_fn, mix_fn) -> PMBMDensity:
    undetected = TrajectoryMixture(
        birth.intensity_at(k).components + mix_fn(d.undetected, motion, k, intensity=True).components
    )
    tracks = tuple(
        Track(t.track_id, tuple(leaf_fn(leaf, motion, k) for leaf in t.leaves)) for t in d.tracks
    )
    return PMBMDensity(undetected, tracks, d.hypotheses)


def predict_current(d: PMBMDensity, motion: MotionModel, birth: BirthModel, k: int) -> PMBMDensity:
    """Predict the current-trajectories posterior from time k-1 to time k:
    fresh birth intensity plus survival-thinned extension of the undetected
    intensity; per leaf, existence scales by ps and the trajectory density is
    extended one step. Track count, hypothesis weights, and mixture weights
    are all preserved exactly."""
    return _predict(d, motion, birth, k, _predict_leaf_current, predict_mixture_current)


def predict_all(d: PMBMDensity, motion: MotionModel, birth: BirthModel, k: int) -> PMBMDensity:
    """Predict the all-trajectories posterior from time k-1 to time k: birth
    plus the ended/extended split of every still-alive component, in the
    undetected intensity and in every Bernoulli mixture alike. Existence
    probabilities, track count, and hypothesis weights are preserved exactly."""
    return _predict(d, motion, birth, k, _predict_leaf_all, predict_mixture_all)
