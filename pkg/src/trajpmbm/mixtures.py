"""Container types for trajectory densities: mixtures, Bernoullis, PMBM.

Weight conventions, used consistently everywhere:

* mixture component weights are linear and, inside a normalized Bernoulli
  density, sum to one (within 1e-9);
* Bernoulli leaf weights and global hypothesis weights are natural logs; a
  global hypothesis weight equals, up to one common normalizing constant,
  the sum of its selected leaves' log weights.

A trajectory here is the triple (birth time, end time, state sequence); a
mixture component carries one information-form sequence density per
(birth, end) pair.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import logsumexp

from .gaussinfo import InfoGaussian, marginal_last_step

__all__ = [
    "Trajectory",
    "GaussianComponent",
    "MixtureComponent",
    "TrajectoryMixture",
    "BernoulliComponent",
    "Track",
    "GlobalHypothesis",
    "PMBMDensity",
    "TargetBernoulli",
    "empty_mixture",
    "empty_density",
    "prune_mixture",
    "live_mass",
    "scale_mixture",
    "normalize_hypotheses",
    "marginalize_to_target",
    "moment_match",
    "check_valid",
]

WEIGHT_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class Trajectory:
    """A finite state sequence alive from birth_time through end_time inclusive."""

    birth_time: int
    end_time: int
    states: np.ndarray  # (length, state_dim)

    def __post_init__(self):
        states = np.asarray(self.states, dtype=float)
        if states.ndim != 2:
            raise ValueError("states must be a (length, state_dim) array")
        if self.end_time < self.birth_time:
            raise ValueError("end_time must be >= birth_time")
        if states.shape[0] != self.length:
            raise ValueError("states length must equal end_time - birth_time + 1")
        object.__setattr__(self, "states", states)

    @property
    def length(self) -> int:
        return self.end_time - self.birth_time + 1

    def state_at(self, k: int) -> np.ndarray:
        if not self.birth_time <= k <= self.end_time:
            raise KeyError(f"time {k} outside [{self.birth_time}, {self.end_time}]")
        return self.states[k - self.birth_time]

    def exists_at(self, k: int) -> bool:
        return self.birth_time <= k <= self.end_time


@dataclass(frozen=True, eq=False)
class GaussianComponent:
    """One weighted single-time Gaussian (moment form)."""

    weight: float
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mean", np.asarray(self.mean, dtype=float).ravel())
        object.__setattr__(self, "cov", np.asarray(self.cov, dtype=float))


@dataclass(frozen=True, eq=False)
class MixtureComponent:
    """One weighted trajectory hypothesis: fixed (birth, end) plus a sequence density."""

    weight: float
    birth_time: int
    end_time: int
    seq: InfoGaussian

    def __post_init__(self):
        if self.weight < 0:
            raise ValueError("mixture weights must be nonnegative")
        if self.end_time < self.birth_time:
            raise ValueError("end_time must be >= birth_time")
        if self.seq.length != self.length:
            raise ValueError("sequence density length must match (birth, end) span")

    @property
    def length(self) -> int:
        return self.end_time - self.birth_time + 1

    @property
    def key(self) -> tuple[int, int]:
        return (self.birth_time, self.end_time)


@dataclass(frozen=True, eq=False)
class TrajectoryMixture:
    """Weighted sum of trajectory components; a density when weights sum to one,
    an intensity otherwise (undetected-object Poisson intensity)."""

    components: tuple[MixtureComponent, ...] = ()

    @property
    def weight_sum(self) -> float:
        return float(sum(c.weight for c in self.components))

    def is_normalized(self, tol: float = WEIGHT_TOL) -> bool:
        return abs(self.weight_sum - 1.0) <= tol


def empty_mixture() -> TrajectoryMixture:
    return TrajectoryMixture(())


def scale_mixture(mix: TrajectoryMixture, factor: float) -> TrajectoryMixture:
    if factor < 0:
        raise ValueError("scale factor must be nonnegative")
    return TrajectoryMixture(tuple(replace(c, weight=c.weight * factor) for c in mix.components))


def live_mass(mix: TrajectoryMixture, k: int) -> float:
    """Total weight of components whose trajectory is alive at time k."""
    return float(sum(c.weight for c in mix.components if c.end_time == k))


def prune_mixture(
    mix: TrajectoryMixture,
    weight_threshold: float = 0.0,
    max_components: int | None = None,
    intensity: bool = False,
) -> TrajectoryMixture:
    """Drop low-weight components and cap the count.

    Densities are renormalized afterwards; intensities are not (dropping
    Poisson mass is a deliberate approximation, not a renormalization).
    Pruning a normalized density down to nothing is an error.
    """
    comps = [c for c in mix.components if c.weight > weight_threshold]
    if max_components is not None and len(comps) > max_components:
        # stable: keep the heaviest set but preserve mixture order
        keep = sorted(range(len(comps)), key=lambda i: -comps[i].weight)[:max_components]
        comps = [comps[i] for i in sorted(keep)]
    if intensity:
        return TrajectoryMixture(tuple(comps))
    if not comps:
        raise ValueError("pruned a normalized mixture down to zero components")
    total = sum(c.weight for c in comps)
    return TrajectoryMixture(tuple(replace(c, weight=c.weight / total) for c in comps))


@dataclass(frozen=True, eq=False)
class BernoulliComponent:
    """Single-trajectory hypothesis: existence probability + trajectory density.

    ``log_weight`` is the hypothesis' accumulated (unnormalized) log weight.
    ``density`` may be None only for the degenerate cases existence == 0
    (nothing to describe) or log_weight == -inf (structural placeholder kept
    so hypothesis numbering stays aligned with the measurement index).
    ``assoc_history`` is the set of (time, measurement index) pairs this
    hypothesis has associated, which identifies the underlying track.
    """

    log_weight: float
    existence: float
    density: TrajectoryMixture | None
    assoc_history: frozenset[tuple[int, int]] = frozenset()

    def __post_init__(self):
        if not (0.0 <= self.existence <= 1.0 + WEIGHT_TOL):
            raise ValueError(f"existence {self.existence} outside [0, 1]")
        if self.density is None and self.existence > 0.0 and self.log_weight > -math.inf:
            raise ValueError("missing density on a hypothesis with positive existence")


@dataclass(frozen=True, eq=False)
class Track:
    """All single-trajectory hypotheses (leaves) that share a founding detection."""

    track_id: tuple[int, int]  # (time, measurement index) of the founding detection
    leaves: tuple[BernoulliComponent, ...]

    def __post_init__(self):
        if not self.leaves:
            raise ValueError("a track must have at least one leaf")


@dataclass(frozen=True, eq=False)
class GlobalHypothesis:
    """One joint association: a leaf choice per track plus a log weight."""

    log_weight: float
    leaf_index: tuple[int, ...]


@dataclass(frozen=True, eq=False)
class PMBMDensity:
    """Poisson (undetected) intensity plus a multi-Bernoulli mixture over tracks."""

    undetected: TrajectoryMixture = field(default_factory=empty_mixture)
    tracks: tuple[Track, ...] = ()
    hypotheses: tuple[GlobalHypothesis, ...] = (GlobalHypothesis(0.0, ()),)

    def leaf(self, hyp: GlobalHypothesis, track_idx: int) -> BernoulliComponent:
        return self.tracks[track_idx].leaves[hyp.leaf_index[track_idx]]

    def best_hypothesis(self) -> GlobalHypothesis:
        return max(self.hypotheses, key=lambda h: h.log_weight)


def empty_density() -> PMBMDensity:
    """The density of a scene known to contain nothing: no intensity, no tracks,
    one empty global hypothesis of weight one."""
    return PMBMDensity(empty_mixture(), (), (GlobalHypothesis(0.0, ()),))


def normalize_hypotheses(d: PMBMDensity) -> PMBMDensity:
    logs = np.array([h.log_weight for h in d.hypotheses])
    total = float(logsumexp(logs))
    if not np.isfinite(total):
        raise ValueError("cannot normalize: total hypothesis weight is zero")
    hyps = tuple(replace(h, log_weight=h.log_weight - total) for h in d.hypotheses)
    return replace(d, hypotheses=hyps)


def check_valid(d: PMBMDensity, tol: float = WEIGHT_TOL) -> None:
    """Assert the structural and weight-sum invariants of a normalized density."""
    if not d.hypotheses:
        raise ValueError("density has no global hypotheses")
    total = logsumexp([h.log_weight for h in d.hypotheses])
    if abs(total) > tol:
        raise ValueError(f"hypothesis weights sum to exp({total}), not 1")
    for h in d.hypotheses:
        if len(h.leaf_index) != len(d.tracks):
            raise ValueError("hypothesis length does not match track count")
        for t, li in zip(d.tracks, h.leaf_index):
            if not 0 <= li < len(t.leaves):
                raise ValueError("hypothesis points at a missing leaf")
    for c in d.undetected.components:
        if c.weight < 0:
            raise ValueError("negative intensity weight")
    for track in d.tracks:
        for leaf in track.leaves:
            if leaf.density is None:
                continue
            if leaf.existence > 0 and not leaf.density.is_normalized(tol):
                raise ValueError(
                    f"track {track.track_id}: density weights sum to "
                    f"{leaf.density.weight_sum}, not 1"
                )
            keys = [c.key for c in leaf.density.components]
            if len(keys) != len(set(keys)):
                raise ValueError(f"track {track.track_id}: duplicate (birth, end) keys")


@dataclass(frozen=True, eq=False)
class TargetBernoulli:
    """Bernoulli over a current target state: alive-now probability plus a
    single-time Gaussian mixture over where it is."""

    existence: float
    components: tuple[GaussianComponent, ...]


def moment_match(components: tuple[GaussianComponent, ...]) -> GaussianComponent:
    """Collapse a Gaussian mixture to its single matched-moments Gaussian."""
    if not components:
        raise ValueError("cannot moment-match an empty mixture")
    w = np.array([c.weight for c in components])
    total = float(w.sum())
    w = w / total
    means = np.stack([c.mean for c in components])
    mean = w @ means
    cov = np.zeros((means.shape[1], means.shape[1]))
    for wi, c, m in zip(w, components, means):
        diff = m - mean
        cov += wi * (c.cov + np.outer(diff, diff))
    return GaussianComponent(total, mean, 0.5 * (cov + cov.T))


def marginalize_to_target(bern: BernoulliComponent, k: int, collapse: bool = False) -> TargetBernoulli:
    """Reduce a trajectory Bernoulli to a Bernoulli over the time-k target state.

    The alive-now probability is existence times the mixture mass on
    components ending at k; the state density is the weight-renormalized
    mixture of those components' final-step marginals. Components that ended
    earlier describe objects no longer present and contribute only to the
    complement. Exact by default; ``collapse`` moment-matches the mixture.
    """
    if bern.density is None:
        # degenerate leaves (non-existing, or zero-weight placeholders whose
        # existence is structurally 1) keep their existence value
        return TargetBernoulli(bern.existence, ())
    alive = [c for c in bern.density.components if c.end_time == k]
    mass = float(sum(c.weight for c in alive))
    r = bern.existence * mass
    if r == 0.0 or not alive:
        return TargetBernoulli(0.0, ())
    comps = []
    for c in alive:
        mean, cov = marginal_last_step(c.seq)
        comps.append(GaussianComponent(c.weight / mass, mean, cov))
    if collapse and len(comps) > 1:
        matched = moment_match(tuple(comps))
        comps = [GaussianComponent(1.0, matched.mean, matched.cov)]
    return TargetBernoulli(r, tuple(comps))
