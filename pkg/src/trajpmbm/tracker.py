"""Stateful tracker front end: one object per Monte Carlo run.

Wraps the predict / update / prune functions of the chosen variant behind a
single ``step`` method and exposes the estimators, so batch drivers never
touch the density plumbing directly. Three variants share the interface:

* ``current``: multi-Bernoulli mixture over the trajectories alive now.
* ``all``: the same over every trajectory that ever existed.
* ``filter``: the marginal target filter; keeps no trajectory history.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .association import AssociationConfig, PruneConfig, prune_density
from .estimation import TrajectoryEstimate, extract_current_states, extract_trajectories
from .models import BirthModel, ClutterModel, MeasurementModel, MotionModel
from .prediction import predict_all, predict_current
from .targetfilter import (
    empty_target_density,
    extract_target_states,
    predict_filter,
    prune_target_density,
    update_filter,
)
from .mixtures import empty_density
from .update import update

__all__ = ["TrackerConfig", "PMBMTracker", "RunResult", "run_tracker", "tracker_config_from_dict"]

VARIANTS = ("current", "all", "filter")


@dataclass(frozen=True)
class TrackerConfig:
    variant: str = "all"
    assoc: AssociationConfig = field(default_factory=AssociationConfig)
    prune: PruneConfig = field(default_factory=PruneConfig)
    extract_threshold: float = 0.5

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")
        if not 0.0 <= self.extract_threshold <= 1.0:
            raise ValueError("extract_threshold must lie in [0, 1]")


def tracker_config_from_dict(d: dict) -> TrackerConfig:
    """Build a TrackerConfig from the 'tracker' config section.

    Recognized keys: variant, murty_k (alias K), max_hypotheses,
    hypothesis_ratio, gate_prob, new_track_floor_ratio, alive_commit_threshold,
    recycle_threshold, recycle_to_undetected, dead_track_threshold,
    max_undetected_components, undetected_weight_floor, extract_threshold,
    exact. Unknown keys are rejected.
    """
    known = {
        "variant",
        "K",
        "murty_k",
        "max_hypotheses",
        "hypothesis_ratio",
        "gate_prob",
        "new_track_floor_ratio",
        "alive_commit_threshold",
        "recycle_threshold",
        "recycle_to_undetected",
        "dead_track_threshold",
        "max_undetected_components",
        "undetected_weight_floor",
        "extract_threshold",
        "exact",
    }
    unknown = set(d) - known
    if unknown:
        raise ValueError(f"unknown tracker config keys: {sorted(unknown)}")
    if "K" in d and "murty_k" in d and d["K"] != d["murty_k"]:
        raise ValueError("tracker config sets both K and murty_k inconsistently")

    assoc = AssociationConfig.exact() if d.get("exact") else AssociationConfig()
    kw = {}
    k = d.get("murty_k", d.get("K"))
    if k is not None:
        kw["murty_k"] = int(k)
    if "max_hypotheses" in d:
        kw["max_hypotheses"] = int(d["max_hypotheses"])
    if "gate_prob" in d:
        kw["gate_prob"] = None if d["gate_prob"] is None else float(d["gate_prob"])
    if "new_track_floor_ratio" in d:
        v = d["new_track_floor_ratio"]
        kw["new_track_floor_ratio"] = None if v is None else float(v)
    if "alive_commit_threshold" in d:
        v = d["alive_commit_threshold"]
        kw["alive_commit_threshold"] = None if v is None else float(v)
    assoc = replace(assoc, **kw)

    prune = PruneConfig()
    kw = {}
    if "hypothesis_ratio" in d:
        kw["hypothesis_ratio"] = float(d["hypothesis_ratio"])
    if "max_hypotheses" in d:
        kw["max_hypotheses"] = int(d["max_hypotheses"])
    if "recycle_threshold" in d:
        kw["recycle_threshold"] = float(d["recycle_threshold"])
    if "recycle_to_undetected" in d:
        kw["recycle_to_undetected"] = bool(d["recycle_to_undetected"])
    if "dead_track_threshold" in d:
        v = d["dead_track_threshold"]
        kw["dead_track_threshold"] = None if v is None else float(v)
    if "max_undetected_components" in d:
        kw["max_undetected_components"] = int(d["max_undetected_components"])
    if "undetected_weight_floor" in d:
        kw["undetected_weight_floor"] = float(d["undetected_weight_floor"])
    prune = replace(prune, **kw)

    return TrackerConfig(
        variant=d.get("variant", "all"),
        assoc=assoc,
        prune=prune,
        extract_threshold=float(d.get("extract_threshold", 0.5)),
    )


class PMBMTracker:
    """Per-run tracker state machine: call ``step`` once per measurement frame."""

    def __init__(
        self,
        motion: MotionModel,
        meas: MeasurementModel,
        birth: BirthModel,
        clutter: ClutterModel,
        config: TrackerConfig = TrackerConfig(),
    ):
        self.motion = motion
        self.meas = meas
        self.birth = birth
        self.clutter = clutter
        self.config = config
        self.k: int = -1  # last processed step
        if config.variant == "filter":
            self.density = empty_target_density()
        else:
            self.density = empty_density()

    def step(self, Z: np.ndarray) -> None:
        """Advance one time step: predict, update with frame Z, prune."""
        k = self.k + 1
        c = self.config
        if c.variant == "filter":
            d = predict_filter(self.density, self.motion, self.birth)
            d = update_filter(d, Z, self.meas, self.clutter, k, c.assoc)
            self.density = prune_target_density(d, c.prune)
        else:
            predict = predict_current if c.variant == "current" else predict_all
            d = predict(self.density, self.motion, self.birth, k)
            d = update(d, Z, self.meas, self.clutter, k, c.assoc)
            self.density = prune_density(d, c.prune, k=k)
        self.k = k

    def current_states(self) -> list[tuple[tuple[int, int], np.ndarray]]:
        """Alive-target state estimates at the last processed step."""
        if self.config.variant == "filter":
            return extract_target_states(self.density, self.config.extract_threshold)
        return extract_current_states(self.density, self.k, self.config.extract_threshold)

    def trajectories(self) -> list[TrajectoryEstimate]:
        """Trajectory estimates from the most probable global hypothesis."""
        if self.config.variant == "filter":
            raise ValueError("the marginal filter keeps no trajectory history")
        return extract_trajectories(self.density, self.config.extract_threshold)


@dataclass(frozen=True)
class RunResult:
    """Everything a batch driver needs from one run."""

    step_states: list  # per step: list of (track_id, state) pairs
    trajectories: list  # final TrajectoryEstimates; empty for the filter
    step_times: list  # wall-clock seconds per step


def run_tracker(
    frames: list[np.ndarray],
    motion: MotionModel,
    meas: MeasurementModel,
    birth: BirthModel,
    clutter: ClutterModel,
    config: TrackerConfig = TrackerConfig(),
) -> RunResult:
    """Process a whole measurement sequence and collect per-step estimates."""
    tracker = PMBMTracker(motion, meas, birth, clutter, config)
    step_states = []
    step_times = []
    for Z in frames:
        t0 = time.perf_counter()
        tracker.step(Z)
        step_times.append(time.perf_counter() - t0)
        step_states.append(tracker.current_states())
    trajs = [] if config.variant == "filter" else tracker.trajectories()
    return RunResult(step_states, trajs, step_times)
