"""Marginal PMBM filter over current target states.

This is the classic point-target PMBM filter: the same Poisson plus
multi-Bernoulli-mixture structure, but every density is a single-time
Gaussian mixture in moment form, propagated with ordinary Kalman recursions.
It serves two purposes: a standalone "filter" tracking variant, and the
second route of the marginalization consistency check (marginalizing the
trajectory posterior to the current time must agree with filtering the
marginals, leaf by leaf). For that reason the Bayes arithmetic here is
written independently of the information-form backend; only the generic
association machinery is shared, so both routes rank hypotheses identically.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.special import logsumexp

from .association import (
    CLAMP_LOG,
    NEW_TRACK_COMPONENT_FLOOR,
    AssignmentProblem,
    AssociationConfig,
    PruneConfig,
    k_best_global,
)
from .mixtures import GaussianComponent, GlobalHypothesis, normalize_hypotheses
from .models import BirthModel, ClutterModel, MeasurementModel, MotionModel

__all__ = [
    "TargetLeaf",
    "TargetTrack",
    "TargetPMBM",
    "empty_target_density",
    "predict_filter",
    "update_filter",
    "prune_target_density",
    "extract_target_states",
]

_LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True, eq=False)
class TargetLeaf:
    """Single-target hypothesis: existence plus a normalized Gaussian mixture
    over the current state (empty for the degenerate cases, mirroring the
    trajectory-side convention)."""

    log_weight: float
    existence: float
    components: tuple[GaussianComponent, ...]
    assoc_history: frozenset = frozenset()


@dataclass(frozen=True, eq=False)
class TargetTrack:
    track_id: tuple[int, int]
    leaves: tuple[TargetLeaf, ...]


@dataclass(frozen=True, eq=False)
class TargetPMBM:
    undetected: tuple[GaussianComponent, ...]
    tracks: tuple[TargetTrack, ...]
    hypotheses: tuple[GlobalHypothesis, ...]

    def best_hypothesis(self) -> GlobalHypothesis:
        return max(self.hypotheses, key=lambda h: h.log_weight)


def empty_target_density() -> TargetPMBM:
    return TargetPMBM((), (), (GlobalHypothesis(0.0, ()),))


def _kf_predict(c: GaussianComponent, motion: MotionModel) -> GaussianComponent:
    cov = motion.F @ c.cov @ motion.F.T + motion.Q
    return GaussianComponent(c.weight, motion.F @ c.mean, 0.5 * (cov + cov.T))


def _kf_update(c: GaussianComponent, meas: MeasurementModel, z: np.ndarray):
    """Moment-form update; returns (log likelihood, posterior component)."""
    s = meas.H @ c.cov @ meas.H.T + meas.R
    innov = z - meas.H @ c.mean
    chol = np.linalg.cholesky(s)
    alpha = np.linalg.solve(chol, innov)
    loglik = -0.5 * (len(z) * _LOG_2PI + 2.0 * float(np.sum(np.log(np.diag(chol)))) + float(alpha @ alpha))
    gain = np.linalg.solve(s.T, meas.H @ c.cov).T
    mean = c.mean + gain @ innov
    cov = c.cov - gain @ s @ gain.T
    return loglik, GaussianComponent(c.weight, mean, 0.5 * (cov + cov.T))


def predict_filter(d: TargetPMBM, motion: MotionModel, birth: BirthModel) -> TargetPMBM:
    """Standard PMBM prediction: birth joins the survival-thinned undetected
    intensity; existence scales by ps; densities propagate through the model."""
    undetected = tuple(birth.components) + tuple(
        replace(_kf_predict(c, motion), weight=c.weight * motion.ps) for c in d.undetected
    )
    tracks = tuple(
        TargetTrack(
            t.track_id,
            tuple(
                replace(
                    leaf,
                    existence=leaf.existence * motion.ps,
                    components=tuple(_kf_predict(c, motion) for c in leaf.components),
                )
                for leaf in t.leaves
            ),
        )
        for t in d.tracks
    )
    return TargetPMBM(undetected, tracks, d.hypotheses)


@dataclass
class _Expansion:
    miss: TargetLeaf
    miss_delta: float
    det: dict[int, tuple[TargetLeaf, float]]


def _expand(
    leaf: TargetLeaf,
    Z: np.ndarray,
    meas: MeasurementModel,
    k: int,
    gamma: float,
    keep_all: bool,
    alive_floor: float | None = None,
) -> _Expansion:
    hist = leaf.assoc_history
    r = leaf.existence
    if not leaf.components:
        return _Expansion(miss=leaf, miss_delta=0.0, det={})
    denom = 1.0 - r * meas.pd
    if denom <= 0.0:
        miss, miss_delta = TargetLeaf(-math.inf, 1.0, (), hist), -math.inf
    else:
        miss_comps = leaf.components if meas.pd < 1.0 else ()
        if alive_floor is not None and miss_comps:
            # same reduction the trajectory update applies on a miss
            kept = tuple(c for c in miss_comps if c.weight >= alive_floor)
            if kept and len(kept) < len(miss_comps):
                total = sum(c.weight for c in kept)
                miss_comps = tuple(replace(c, weight=c.weight / total) for c in kept)
        miss = TargetLeaf(
            leaf.log_weight + math.log(denom),
            r * (1.0 - meas.pd) / denom,
            miss_comps,
            hist,
        )
        miss_delta = math.log(denom)
    out = _Expansion(miss=miss, miss_delta=miss_delta, det={})
    if r <= 0.0 or leaf.log_weight == -math.inf or meas.pd == 0.0:
        return out
    best = max(leaf.components, key=lambda c: c.weight)
    s = meas.H @ best.cov @ meas.H.T + meas.R
    innov = Z - (meas.H @ best.mean)[None, :]
    d2 = np.einsum("ij,ji->i", innov, np.linalg.solve(s, innov.T))
    for j in range(Z.shape[0]):
        if not keep_all and d2[j] > gamma:
            continue
        pairs = [_kf_update(c, meas, Z[j]) for c in leaf.components]
        logw = np.array([math.log(c.weight) + ll for (ll, _), c in zip(pairs, leaf.components)])
        total = float(logsumexp(logw)) + math.log(meas.pd)
        post_w = np.exp(logw - logsumexp(logw))
        comps = tuple(
            replace(post, weight=float(w)) for w, (_, post) in zip(post_w, pairs) if w > 0.0
        )
        delta = math.log(r) + total
        out.det[j] = (TargetLeaf(leaf.log_weight + delta, 1.0, comps, hist | {(k, j)}), delta)
    return out


def update_filter(
    d: TargetPMBM,
    Z,
    meas: MeasurementModel,
    clutter: ClutterModel,
    k: int,
    config: AssociationConfig = AssociationConfig(),
) -> TargetPMBM:
    """Measurement update, structured identically to the trajectory update:
    shared ranked-assignment machinery over leaf weight ratios, so identical
    inputs give identical hypothesis enumeration in both filters."""
    Z = np.asarray(Z, dtype=float).reshape(-1, meas.meas_dim)
    m = Z.shape[0]
    gamma = config.gate_threshold(meas.meas_dim)
    keep_all = config.keep_all_leaves

    n_tracks = len(d.tracks)
    referenced: list[set[int]] = [set() for _ in range(n_tracks)]
    for h in d.hypotheses:
        for i, li in enumerate(h.leaf_index):
            referenced[i].add(li)
    if keep_all:
        referenced = [set(range(len(t.leaves))) for t in d.tracks]
    expansions = [
        {
            li: _expand(
                d.tracks[i].leaves[li], Z, meas, k, gamma, keep_all,
                config.alive_commit_threshold,
            )
            for li in sorted(referenced[i])
        }
        for i in range(n_tracks)
    ]

    # New-track weights from the undetected intensity plus clutter.
    new_tracks: list[tuple[float, TargetLeaf | None]] = []
    for j in range(m):
        lam_fa = clutter.intensity(Z[j])
        log_fa = math.log(lam_fa) if lam_fa > 0.0 else -math.inf
        if d.undetected and meas.pd > 0.0:
            pairs = [_kf_update(c, meas, Z[j]) for c in d.undetected]
            logterms = np.array(
                [math.log(c.weight) + math.log(meas.pd) + ll for (ll, _), c in zip(pairs, d.undetected)]
            )
            ppp = float(logsumexp(logterms))
        else:
            pairs, logterms, ppp = [], None, -math.inf
        log_w = float(np.logaddexp(log_fa, ppp))
        floored = (
            config.new_track_floor_ratio is not None
            and lam_fa > 0.0
            and math.exp(ppp) <= config.new_track_floor_ratio * lam_fa
        )
        if math.isinf(log_w) or (floored and not keep_all):
            new_tracks.append((log_w, None))
            continue
        r = math.exp(ppp - log_w)
        if logterms is None or r == 0.0:
            comps: tuple = ()
            r = 0.0
        else:
            post_w = np.exp(logterms - logsumexp(logterms))
            w_floor = 0.0 if keep_all else NEW_TRACK_COMPONENT_FLOOR
            sel = [(float(w), post) for w, (_, post) in zip(post_w, pairs) if w > w_floor]
            total = sum(w for w, _ in sel)
            comps = tuple(replace(post, weight=w / total) for w, post in sel)
        new_tracks.append((log_w, TargetLeaf(log_w, r, comps, frozenset({(k, j)}))))

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
            col[j] = -max(new_tracks[j][0], CLAMP_LOG)
            cols_cost.append(col)
            col_keys.append(("new", j))
            cache_keys.append(("n", j))
        cost = np.stack(cols_cost, axis=1) if cols_cost else np.zeros((m, 0))
        problems.append(AssignmentProblem(pi, fixed, cost, tuple(col_keys), tuple(cache_keys)))

    assignments = k_best_global(
        problems, config.max_hypotheses, config.murty_k, config.child_stop_ratio
    )
    if not assignments:
        raise RuntimeError("association produced no feasible hypothesis")

    # Assemble child leaf tables in the same canonical order as the
    # trajectory update: per parent leaf, miss then detections by j.
    leaf_key_of: list[dict[tuple, int]] = []
    track_leaves: list[list[TargetLeaf]] = []
    for i in range(n_tracks):
        keys: dict[tuple, int] = {}
        leaves: list[TargetLeaf] = []
        if keep_all:
            for a in range(len(d.tracks[i].leaves)):
                exp = expansions[i][a]
                hist = d.tracks[i].leaves[a].assoc_history
                keys[(a, -1)] = len(leaves)
                leaves.append(exp.miss)
                for j in range(m):
                    keys[(a, j)] = len(leaves)
                    if j in exp.det:
                        leaves.append(exp.det[j][0])
                    else:
                        leaves.append(TargetLeaf(-math.inf, 1.0, (), hist | {(k, j)}))
        leaf_key_of.append(keys)
        track_leaves.append(leaves)

    def leaf_slot(i: int, parent_leaf: int, j: int) -> int:
        key = (parent_leaf, j)
        slot = leaf_key_of[i].get(key)
        if slot is None:
            exp = expansions[i][parent_leaf]
            hist = d.tracks[i].leaves[parent_leaf].assoc_history
            if j < 0:
                leaf = exp.miss
            elif j in exp.det:
                leaf = exp.det[j][0]
            else:
                leaf = TargetLeaf(-math.inf, 1.0, (), hist | {(k, j)})
            slot = len(track_leaves[i])
            leaf_key_of[i][key] = slot
            track_leaves[i].append(leaf)
        return slot

    new_track_ids = [j for j in range(m) if new_tracks[j][1] is not None]
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
        vec = [leaf_slot(i, parent.leaf_index[i], assigned.get(i, -1)) for i in range(n_tracks)]
        vec += [1 if j in new_used else 0 for j in new_track_ids]
        key = tuple(vec)
        hyp_weights[key] = (
            float(np.logaddexp(hyp_weights[key], a.log_weight)) if key in hyp_weights else a.log_weight
        )

    tracks = [TargetTrack(d.tracks[i].track_id, tuple(track_leaves[i])) for i in range(n_tracks)]
    for j in new_track_ids:
        non_exist = TargetLeaf(0.0, 0.0, (), frozenset())
        tracks.append(TargetTrack((k, j), (non_exist, new_tracks[j][1])))

    hyps = [GlobalHypothesis(w, key) for key, w in hyp_weights.items()]
    hyps.sort(key=lambda h: (-h.log_weight, h.leaf_index))
    undetected = tuple(
        replace(c, weight=c.weight * (1.0 - meas.pd)) for c in d.undetected if c.weight * (1.0 - meas.pd) > 0.0
    )
    out = TargetPMBM(undetected, tuple(tracks), tuple(hyps))
    logs = [h.log_weight for h in out.hypotheses]
    total = float(logsumexp(logs))
    return replace(out, hypotheses=tuple(replace(h, log_weight=h.log_weight - total) for h in out.hypotheses))


def prune_target_density(d: TargetPMBM, config: PruneConfig = PruneConfig()) -> TargetPMBM:
    """Same reduction policy as the trajectory-side pruning: hypothesis
    threshold and cap, leaf garbage collection, low-existence track removal
    (optionally recycled into the undetected intensity), intensity cap."""
    hyps = sorted(d.hypotheses, key=lambda h: (-h.log_weight, h.leaf_index))
    cutoff = (
        hyps[0].log_weight + math.log(config.hypothesis_ratio)
        if config.hypothesis_ratio > 0
        else -math.inf
    )
    kept = [h for h in hyps if h.log_weight >= cutoff][: config.max_hypotheses]

    drop: set[int] = set()
    for i, track in enumerate(d.tracks):
        max_r = max(track.leaves[h.leaf_index[i]].existence for h in kept)
        if max_r < config.recycle_threshold:
            drop.add(i)
    recycled: list[GaussianComponent] = []
    if config.recycle_to_undetected and drop:
        log_ws = np.array([h.log_weight for h in kept])
        probs = np.exp(log_ws - logsumexp(log_ws))
        for i in drop:
            mass: dict[int, float] = {}
            for h, p in zip(kept, probs):
                mass[h.leaf_index[i]] = mass.get(h.leaf_index[i], 0.0) + float(p)
            for li, p in mass.items():
                leaf = d.tracks[i].leaves[li]
                for c in leaf.components:
                    recycled.append(replace(c, weight=c.weight * leaf.existence * p))

    keep_idx = [i for i in range(len(d.tracks)) if i not in drop]
    used: dict[int, list[int]] = {i: [] for i in keep_idx}
    for h in kept:
        for i in keep_idx:
            if h.leaf_index[i] not in used[i]:
                used[i].append(h.leaf_index[i])
    tracks, remap = [], {}
    for i in keep_idx:
        used[i].sort()
        remap[i] = {old: new for new, old in enumerate(used[i])}
        tracks.append(TargetTrack(d.tracks[i].track_id, tuple(d.tracks[i].leaves[o] for o in used[i])))
    merged: dict[tuple, float] = {}
    for h in kept:
        key = tuple(remap[i][h.leaf_index[i]] for i in keep_idx)
        merged[key] = float(np.logaddexp(merged[key], h.log_weight)) if key in merged else h.log_weight
    out_hyps = [GlobalHypothesis(w, key) for key, w in merged.items()]
    out_hyps.sort(key=lambda h: (-h.log_weight, h.leaf_index))
    total = float(logsumexp([h.log_weight for h in out_hyps]))
    out_hyps = tuple(replace(h, log_weight=h.log_weight - total) for h in out_hyps)

    undetected = list(d.undetected) + recycled
    undetected = [c for c in undetected if c.weight > config.undetected_weight_floor]
    if len(undetected) > config.max_undetected_components:
        keep = sorted(range(len(undetected)), key=lambda i: -undetected[i].weight)
        keep = keep[: config.max_undetected_components]
        undetected = [undetected[i] for i in sorted(keep)]
    return TargetPMBM(tuple(undetected), tuple(tracks), out_hyps)


def extract_target_states(d: TargetPMBM, r_threshold: float = 0.5):
    """Point estimates under the heaviest hypothesis: tracks whose selected
    leaf exists with probability >= threshold report their heaviest
    component's mean. Returns [(track_id, mean)] sorted by track id."""
    best = d.best_hypothesis()
    out = []
    for i, track in enumerate(d.tracks):
        leaf = track.leaves[best.leaf_index[i]]
        if leaf.existence >= r_threshold and leaf.components:
            comp = max(leaf.components, key=lambda c: c.weight)
            out.append((track.track_id, comp.mean))
    out.sort(key=lambda t: t[0])
    return out
