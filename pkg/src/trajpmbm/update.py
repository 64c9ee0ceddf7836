"""Measurement update of the PMBM trajectory posterior.

One update does four things, in order:

1. builds missed-detection and per-measurement detection children for every
   leaf any parent hypothesis references;
2. forms a per-measurement new-track Bernoulli from the undetected intensity
   plus clutter;
3. ranks joint associations across all parent hypotheses and keeps the best;
4. thins the undetected intensity by the detection probability on its
   still-alive components.

Child hypothesis weights are exact: parent weight times the product of the
selected leaves' weight ratios. Detection leaves always get existence one
and purely-alive densities (detection is impossible for an ended
trajectory); missed-detection leaves keep ended components untouched.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import logsumexp

from .association import (
    CLAMP_LOG,
    NEW_TRACK_COMPONENT_FLOOR,
    Assignment,
    AssignmentProblem,
    AssociationConfig,
    gate_distances,
    k_best_global,
)
from .gaussinfo import batch_predictive_loglik, info_update, predictive_likelihood
from .mixtures import (
    BernoulliComponent,
    GlobalHypothesis,
    MixtureComponent,
    PMBMDensity,
    Track,
    TrajectoryMixture,
    live_mass,
    normalize_hypotheses,
)
from .models import ClutterModel, MeasurementModel

__all__ = [
    "update",
    "mixture_miss_update",
    "mixture_detect_update",
]


def mixture_miss_update(
    mix: TrajectoryMixture, pd: float, k: int, alive_floor: float | None = None
) -> tuple[float, TrajectoryMixture | None]:
    """Missed-detection update of a normalized trajectory mixture at time k.

    Returns (nondetection mass, posterior): still-alive components (ending at
    k) are scaled by 1 - pd, ended components by 1, then renormalized. A zero
    mass (pd = 1 with everything alive) returns (0.0, None) and the caller
    takes the closed-form existence limit. With alive_floor set, still-alive
    components whose normalized posterior weight drops below it are removed
    (the mixture commits to the trajectory having ended).
    """
    lm = live_mass(mix, k)
    if lm == 0.0:
        # nothing alive: a miss is certain and the posterior is the prior
        return 1.0, mix
    mass = 1.0 - pd * lm
    if mass <= 0.0:
        return 0.0, None
    kept = []
    for c in mix.components:
        w = c.weight * (1.0 - pd) if c.end_time == k else c.weight
        if w > 0.0:
            kept.append((w, c))
    # normalize by the kept components' actual sum, not the closed-form mass:
    # rounding in the input weights would otherwise compound across repeated
    # missed detections (each miss amplifies the error by pd / (1 - pd))
    total = sum(w for w, _ in kept)
    if alive_floor is not None:
        floored = [
            (w, c) for w, c in kept if c.end_time != k or w / total >= alive_floor
        ]
        if floored and len(floored) < len(kept):
            kept = floored
            total = sum(w for w, _ in kept)
    comps = tuple(replace(c, weight=w / total) for w, c in kept)
    return mass, TrajectoryMixture(comps)


def mixture_detect_update(
    mix: TrajectoryMixture, meas: MeasurementModel, z: np.ndarray, k: int
) -> tuple[float, TrajectoryMixture | None]:
    """Detection update of a normalized trajectory mixture with measurement z.

    Returns (log likelihood, posterior). The likelihood is the detection
    evidence pd * sum of weighted predictive likelihoods over the still-alive
    components; ended components cannot produce measurements and are dropped
    from the posterior. No alive components means (log 0, None).
    """
    live = [c for c in mix.components if c.end_time == k and c.weight > 0.0]
    if not live or meas.pd == 0.0:
        return -math.inf, None
    logw = np.array(
        [math.log(c.weight) + predictive_likelihood(c.seq, meas.H, meas.R, z) for c in live]
    )
    total = float(logsumexp(logw)) + math.log(meas.pd)
    post_w = np.exp(logw - logsumexp(logw))
    comps = tuple(
        MixtureComponent(float(w), c.birth_time, c.end_time, info_update(c.seq, meas.H, meas.Rinv, z))
        for w, c in zip(post_w, live)
        if w > 0.0
    )
    return total, TrajectoryMixture(comps)


@dataclass
class _LeafExpansion:
    """All children of one parent leaf: the miss child plus detection children
    keyed by measurement index. Deltas are log weight ratios vs. the parent."""

    miss: BernoulliComponent
    miss_delta: float
    det: dict[int, tuple[BernoulliComponent, float]] = field(default_factory=dict)

    def det_leaf(self, j: int, hist_base: frozenset, k: int) -> BernoulliComponent:
        if j in self.det:
            return self.det[j][0]
        # structural placeholder: detection of a leaf with no alive mass
        return BernoulliComponent(-math.inf, 1.0, None, hist_base | {(k, j)})


def _expand_leaf(
    leaf: BernoulliComponent,
    Z: np.ndarray,
    meas: MeasurementModel,
    k: int,
    gamma: float,
    keep_all: bool,
    alive_floor: float | None = None,
) -> _LeafExpansion:
    hist = leaf.assoc_history
    if leaf.density is None:
        # non-existing or placeholder parent: miss child is itself, unchanged
        return _LeafExpansion(miss=leaf, miss_delta=0.0)
    mass, post = mixture_miss_update(leaf.density, meas.pd, k, alive_floor)
    r = leaf.existence
    denom = 1.0 - r * (1.0 - mass)
    if mass <= 0.0:
        if denom <= 0.0:  # r = 1 and certain detection: missing is impossible
            miss = BernoulliComponent(-math.inf, 1.0, None, hist)
            miss_delta = -math.inf
        else:
            miss = BernoulliComponent(leaf.log_weight + math.log(denom), 0.0, None, hist)
            miss_delta = math.log(denom)
    else:
        new_r = r * mass / denom
        miss = BernoulliComponent(leaf.log_weight + math.log(denom), new_r, post, hist)
        miss_delta = math.log(denom)

    exp = _LeafExpansion(miss=miss, miss_delta=miss_delta)
    if r <= 0.0 or leaf.log_weight == -math.inf:
        return exp
    live = [c for c in leaf.density.components if c.end_time == k and c.weight > 0.0]
    if not live or meas.pd == 0.0:
        return exp
    if keep_all:
        idx = np.arange(Z.shape[0])
    else:
        idx = np.nonzero(gate_distances(leaf, Z, meas) <= gamma)[0]
    if idx.size == 0:
        return exp
    # one innovation factorization per live component scores the whole frame
    Zg = Z[idx]
    logw = np.array([math.log(c.weight) for c in live])[:, None] + np.stack(
        [batch_predictive_loglik(c.seq, meas.H, meas.R, Zg) for c in live]
    )
    col_max = np.max(logw, axis=0)
    totals = col_max + np.log(np.sum(np.exp(logw - col_max), axis=0))
    post_w = np.exp(logw - totals)
    log_r_pd = math.log(r) + math.log(meas.pd)
    for gi, j in enumerate(idx.tolist()):
        comps = tuple(
            MixtureComponent(
                float(w), c.birth_time, c.end_time, info_update(c.seq, meas.H, meas.Rinv, Z[j])
            )
            for w, c in zip(post_w[:, gi], live)
            if w > 0.0
        )
        delta = log_r_pd + float(totals[gi])
        det = BernoulliComponent(leaf.log_weight + delta, 1.0, TrajectoryMixture(comps), hist | {(k, j)})
        exp.det[j] = (det, delta)
    return exp


@dataclass
class _NewTrack:
    """Per-measurement new-track data: the two leaves (when materialized) and
    the log weight its column contributes to a hypothesis."""

    log_weight: float
    detect_leaf: BernoulliComponent | None  # None when floored away entirely


def _build_new_tracks(
    Z: np.ndarray,
    undetected: TrajectoryMixture,
    meas: MeasurementModel,
    clutter: ClutterModel,
    k: int,
    floor_ratio: float | None,
    keep_all: bool,
) -> list[_NewTrack]:
    m = Z.shape[0]
    live = [c for c in undetected.components if c.end_time == k and c.weight > 0.0]
    if live and meas.pd > 0.0 and m:
        logterms = np.array([math.log(c.weight) + math.log(meas.pd) for c in live])[
            :, None
        ] + np.stack([batch_predictive_loglik(c.seq, meas.H, meas.R, Z) for c in live])
        col_max = np.max(logterms, axis=0)
        ppp = col_max + np.log(np.sum(np.exp(logterms - col_max), axis=0))
    else:
        logterms, ppp = None, np.full(m, -math.inf)

    out = []
    for j in range(m):
        lam_fa = clutter.intensity(Z[j])
        log_fa = math.log(lam_fa) if lam_fa > 0.0 else -math.inf
        log_w = float(np.logaddexp(log_fa, ppp[j]))
        floored = (
            floor_ratio is not None
            and lam_fa > 0.0
            and math.exp(ppp[j]) <= floor_ratio * lam_fa
        )
        if math.isinf(log_w) or (floored and not keep_all):
            out.append(_NewTrack(log_weight=log_w, detect_leaf=None))
            continue

        r = math.exp(ppp[j] - log_w)
        if logterms is None or r == 0.0:
            density = None
            r = 0.0
        else:
            post_w = np.exp(logterms[:, j] - ppp[j])
            # intensity components explaining a vanishing share of this
            # detection would only bloat the new leaf's mixture
            w_floor = 0.0 if keep_all else NEW_TRACK_COMPONENT_FLOOR
            sel = [(float(w), c) for w, c in zip(post_w, live) if w > w_floor]
            total = sum(w for w, _ in sel)
            comps = tuple(
                MixtureComponent(
                    w / total, c.birth_time, c.end_time, info_update(c.seq, meas.H, meas.Rinv, Z[j])
                )
                for w, c in sel
            )
            density = TrajectoryMixture(comps)
        leaf = BernoulliComponent(log_w, r, density, frozenset({(k, j)}))
        out.append(_NewTrack(log_weight=log_w, detect_leaf=leaf))
    return out


def _thin_undetected(mix: TrajectoryMixture, pd: float, k: int) -> TrajectoryMixture:
    comps = []
    for c in mix.components:
        w = c.weight * (1.0 - pd) if c.end_time == k else c.weight
        if w > 0.0:
            comps.append(replace(c, weight=w))
    return TrajectoryMixture(tuple(comps))


def update(
    d: PMBMDensity,
    Z,
    meas: MeasurementModel,
    clutter: ClutterModel,
    k: int,
    config: AssociationConfig = AssociationConfig(),
) -> PMBMDensity:
    """Update the predicted density at time k with the measurement list Z.

    Z is ordered; measurement j's identity in association histories and new
    track ids is (k, j). Returns the posterior with hypothesis weights
    normalized and sorted by descending weight; at most config.max_hypotheses
    hypotheses are kept (every feasible one in exact mode).
    """
    Z = np.asarray(Z, dtype=float).reshape(-1, meas.meas_dim)
    m = Z.shape[0]
    gamma = config.gate_threshold(meas.meas_dim)
    keep_all = config.keep_all_leaves

    # Children for every referenced (track, leaf) pair, computed once and
    # shared by all parents that select the same leaf.
    n_tracks = len(d.tracks)
    referenced: list[set[int]] = [set() for _ in range(n_tracks)]
    for h in d.hypotheses:
        for i, li in enumerate(h.leaf_index):
            referenced[i].add(li)
    if keep_all:
        referenced = [set(range(len(t.leaves))) for t in d.tracks]
    expansions: list[dict[int, _LeafExpansion]] = []
    for i, track in enumerate(d.tracks):
        expansions.append(
            {
                li: _expand_leaf(
                    track.leaves[li], Z, meas, k, gamma, keep_all, config.alive_commit_threshold
                )
                for li in sorted(referenced[i])
            }
        )

    new_tracks = _build_new_tracks(
        Z, d.undetected, meas, clutter, k, config.new_track_floor_ratio, keep_all
    )

    # One assignment problem per parent hypothesis.
    problems = []
    for pi, h in enumerate(d.hypotheses):
        cols_cost, col_keys, cache_keys = [], [], []
        fixed = h.log_weight
        for i in range(n_tracks):
            exp = expansions[i][h.leaf_index[i]]
            fixed += exp.miss_delta if exp.miss_delta > -math.inf else CLAMP_LOG
            if not exp.det:
                continue
            col = np.full(m, np.inf)
            for j, (_, delta) in exp.det.items():
                col[j] = -(delta - max(exp.miss_delta, CLAMP_LOG))
            cols_cost.append(col)
            col_keys.append(("track", i))
            cache_keys.append(("t", i, h.leaf_index[i]))
        for j in range(m):
            col = np.full(m, np.inf)
            col[j] = -max(new_tracks[j].log_weight, CLAMP_LOG)
            cols_cost.append(col)
            col_keys.append(("new", j))
            cache_keys.append(("n", j))
        cost = np.stack(cols_cost, axis=1) if cols_cost else np.zeros((m, 0))
        problems.append(
            AssignmentProblem(pi, fixed, cost, tuple(col_keys), tuple(cache_keys))
        )

    assignments = k_best_global(
        problems, config.max_hypotheses, config.murty_k, config.child_stop_ratio
    )
    if not assignments:
        raise RuntimeError("association produced no feasible hypothesis")

    return _assemble(d, assignments, expansions, new_tracks, meas, k, m, keep_all)


def _assemble(
    d: PMBMDensity,
    assignments: list[Assignment],
    expansions: list[dict[int, _LeafExpansion]],
    new_tracks: list[_NewTrack],
    meas: MeasurementModel,
    k: int,
    m: int,
    keep_all: bool,
) -> PMBMDensity:
    n_tracks = len(d.tracks)

    # Child leaf tables. Exact mode enumerates every child of every parent
    # leaf in (parent, miss, detections...) order so leaf counts follow the
    # (1 + m) law; otherwise only leaves some kept hypothesis uses survive.
    leaf_key_of: list[dict[tuple, int]] = []
    track_leaves: list[list[BernoulliComponent]] = []
    for i in range(n_tracks):
        keys: dict[tuple, int] = {}
        leaves: list[BernoulliComponent] = []
        if keep_all:
            for a in range(len(d.tracks[i].leaves)):
                exp = expansions[i][a]
                hist = d.tracks[i].leaves[a].assoc_history
                keys[(a, -1)] = len(leaves)
                leaves.append(exp.miss)
                for j in range(m):
                    keys[(a, j)] = len(leaves)
                    leaves.append(exp.det_leaf(j, hist, k))
        leaf_key_of.append(keys)
        track_leaves.append(leaves)

    new_track_leaf_tables: dict[int, list[BernoulliComponent]] = {}
    new_track_ids: list[int] = []  # measurement indices that become tracks
    for j, nt in enumerate(new_tracks):
        if nt.detect_leaf is not None:
            new_track_ids.append(j)
            non_exist = BernoulliComponent(0.0, 0.0, None, frozenset())
            new_track_leaf_tables[j] = [non_exist, nt.detect_leaf]

    def leaf_slot(i: int, parent_leaf: int, j: int) -> int:
        key = (parent_leaf, j)
        slot = leaf_key_of[i].get(key)
        if slot is None:
            exp = expansions[i][parent_leaf]
            if j < 0:
                leaf = exp.miss
            else:
                leaf = exp.det_leaf(j, d.tracks[i].leaves[parent_leaf].assoc_history, k)
            slot = len(track_leaves[i])
            leaf_key_of[i][key] = slot
            track_leaves[i].append(leaf)
        return slot

    hyp_weights: dict[tuple, float] = {}
    for a in assignments:
        parent = d.hypotheses[a.parent_index]
        assigned: dict[int, int] = {}
        new_used: set[int] = set()
        for j, colkey in enumerate(a.columns):
            if colkey[0] == "track":
                assigned[colkey[1]] = j
            else:
                new_used.add(j)
        vec = []
        for i in range(n_tracks):
            vec.append(leaf_slot(i, parent.leaf_index[i], assigned.get(i, -1)))
        for j in new_track_ids:
            vec.append(1 if j in new_used else 0)
        key = tuple(vec)
        if key in hyp_weights:
            hyp_weights[key] = float(np.logaddexp(hyp_weights[key], a.log_weight))
        else:
            hyp_weights[key] = a.log_weight

    tracks = []
    for i in range(n_tracks):
        tracks.append(Track(d.tracks[i].track_id, tuple(track_leaves[i])))
    for j in new_track_ids:
        tracks.append(Track((k, j), tuple(new_track_leaf_tables[j])))

    hyps = [GlobalHypothesis(w, key) for key, w in hyp_weights.items()]
    hyps.sort(key=lambda h: (-h.log_weight, h.leaf_index))
    posterior = PMBMDensity(
        _thin_undetected(d.undetected, meas.pd, k), tuple(tracks), tuple(hyps)
    )
    return normalize_hypotheses(posterior)
