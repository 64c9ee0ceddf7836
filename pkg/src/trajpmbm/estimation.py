"""Estimate extraction and current-time marginalization of the posterior.

The canonical estimator reads the heaviest global hypothesis and reports,
for every selected leaf whose existence clears a threshold, the trajectory
of its heaviest mixture component with the mean sequence recovered through
the sparse information-form solve. Alternative estimators (expected
existence over hypotheses, per-track marginals) are deliberately out of
scope; the threshold is the only knob.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .gaussinfo import marginal_last_step, recover_mean
from .mixtures import GaussianComponent, PMBMDensity, Trajectory, marginalize_to_target
from .targetfilter import TargetLeaf, TargetPMBM, TargetTrack

__all__ = [
    "TrajectoryEstimate",
    "extract_trajectories",
    "extract_current_states",
    "marginalize_density",
]


@dataclass(frozen=True, eq=False)
class TrajectoryEstimate:
    """One reported trajectory with its provenance and existence probability."""

    track_id: tuple[int, int]
    existence: float
    trajectory: Trajectory


def extract_trajectories(d: PMBMDensity, r_threshold: float = 0.5) -> list[TrajectoryEstimate]:
    """Trajectories under the heaviest global hypothesis.

    For each track whose selected leaf has existence >= r_threshold, picks
    the leaf's heaviest mixture component, recovers its full mean sequence,
    and reports it with that component's (birth, end) interval. Output is
    sorted by track id; tracks below threshold produce nothing.
    """
    best = d.best_hypothesis()
    out = []
    for i, track in enumerate(d.tracks):
        leaf = track.leaves[best.leaf_index[i]]
        if leaf.existence < r_threshold or leaf.density is None:
            continue
        comp = max(leaf.density.components, key=lambda c: c.weight)
        states = recover_mean(comp.seq).reshape(comp.length, -1)
        out.append(
            TrajectoryEstimate(
                track.track_id,
                leaf.existence,
                Trajectory(comp.birth_time, comp.end_time, states),
            )
        )
    out.sort(key=lambda e: e.track_id)
    return out


def extract_current_states(
    d: PMBMDensity, k: int, r_threshold: float = 0.5
) -> list[tuple[tuple[int, int], np.ndarray]]:
    """Current-time point estimates under the heaviest hypothesis.

    A track is reported when its selected leaf's probability of being alive
    at k (existence times live mixture mass) clears the threshold; the state
    is the final-step marginal mean of the heaviest still-alive component.
    Cheap: touches only last-step marginals, never whole sequences.
    """
    best = d.best_hypothesis()
    out = []
    for i, track in enumerate(d.tracks):
        leaf = track.leaves[best.leaf_index[i]]
        if leaf.density is None:
            continue
        alive = [c for c in leaf.density.components if c.end_time == k]
        mass = sum(c.weight for c in alive)
        if not alive or leaf.existence * mass < r_threshold:
            continue
        comp = max(alive, key=lambda c: c.weight)
        mean, _ = marginal_last_step(comp.seq)
        out.append((track.track_id, mean))
    out.sort(key=lambda t: t[0])
    return out


def marginalize_density(d: PMBMDensity, k: int, collapse: bool = False) -> TargetPMBM:
    """Marginalize the trajectory posterior onto the time-k target state.

    Track and hypothesis structure and all weights carry over unchanged; each
    leaf becomes a target-space Bernoulli via its alive-at-k mass, and the
    undetected intensity keeps only still-alive components as current-state
    Gaussians. The result is a plain target PMBM comparable leaf-by-leaf with
    the marginal filter's output.
    """
    undetected = tuple(
        GaussianComponent(c.weight, *marginal_last_step(c.seq))
        for c in d.undetected.components
        if c.end_time == k
    )
    tracks = []
    for t in d.tracks:
        leaves = []
        for leaf in t.leaves:
            tb = marginalize_to_target(leaf, k, collapse=collapse)
            leaves.append(
                TargetLeaf(leaf.log_weight, tb.existence, tb.components, leaf.assoc_history)
            )
        tracks.append(TargetTrack(t.track_id, tuple(leaves)))
    return TargetPMBM(undetected, tuple(tracks), d.hypotheses)
