"""Data association: gating, ranked assignments, hypothesis management.

Each parent global hypothesis induces a 2-D assignment problem whose rows are
the time-k measurements and whose columns are (a) its selected leaf per
existing track and (b) one new-track/clutter pseudo-column per measurement,
so every row always has a feasible column. Entry costs are negative log
weight ratios against the all-missed baseline, making an assignment's cost
the negative log of the child hypothesis weight up to the parent-constant
``fixed_log_weight``.

The K globally best children are found with Murty's ranked-assignment
algorithm on top of an optimal 2-D solver, organized for scale: each problem
splits into connectivity components, each component's ranked stream is
memoized and shared between parents that select the same leaves, per-parent
children come from a lazy k-best product across components, and parents are
merged through one global lazy heap.
"""

from __future__ import annotations

import heapq
import itertools
import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.special import logsumexp
from scipy.stats import chi2

from .gaussinfo import marginal_last_step
from .mixtures import (
    BernoulliComponent,
    GlobalHypothesis,
    PMBMDensity,
    Track,
    TrajectoryMixture,
    prune_mixture,
)

__all__ = [
    "AssociationConfig",
    "PruneConfig",
    "AssignmentProblem",
    "Assignment",
    "gate",
    "gate_distances",
    "murty",
    "k_best_global",
    "prune_density",
    "NEW_TRACK_COMPONENT_FLOOR",
]

# Stand-in for forbidden entries inside the 2-D solver; any solution touching
# one is rejected as infeasible.
LARGE_COST = 1e15
# Finite stand-in for log(0) where a zero-weight option must stay
# representable in cost arithmetic; dominates every real log weight.
CLAMP_LOG = -1e9
# Posterior mixture components of a freshly materialized track below this
# weight are dropped at birth (they explain none of the detection but would
# be carried forever). Disabled in exact mode.
NEW_TRACK_COMPONENT_FLOOR = 1e-12


@dataclass(frozen=True)
class AssociationConfig:
    """Knobs of the update's hypothesis generation.

    max_hypotheses: global cap on child hypotheses per update (top K overall).
    murty_k: ranked assignments kept per parent hypothesis; None = unbounded.
    gate_prob: chi-square mass inside the ellipsoidal gate; None disables gating.
    new_track_floor_ratio: skip materializing a new track whose detected
        weight exceeds clutter alone by less than this relative margin;
        None keeps every new track.
    alive_commit_threshold: during a missed-detection update, drop still-alive
        mixture components whose posterior weight falls below this, committing
        the leaf to an ended trajectory once the alive share is negligible
        (roughly six consecutive misses at pd = 0.98). Keeps long-dead tracks
        out of gating and association entirely. None keeps every component.
    child_stop_ratio: stop enumerating child hypotheses once their weight
        falls below this fraction of the best child's. With the default equal
        to PruneConfig.hypothesis_ratio each skipped child is one the
        post-update prune would discard anyway, unless several duplicates
        below the cut would have merged above it; each skipped child weighs
        under ratio times the leader, so the approximation is at worst that
        ratio per duplicate. None keeps enumerating to max_hypotheses.
    keep_all_leaves: retain every generated leaf, including structural
        zero-weight placeholders, so each track's leaf count follows the
        exact (1 + m_k)-children-per-leaf law.
    """

    max_hypotheses: int = 200
    murty_k: int | None = 20
    gate_prob: float | None = 0.999
    new_track_floor_ratio: float | None = 1e-4
    alive_commit_threshold: float | None = 1e-10
    child_stop_ratio: float | None = 1e-4
    keep_all_leaves: bool = False

    def gate_threshold(self, meas_dim: int) -> float:
        if self.gate_prob is None:
            return math.inf
        return float(chi2.ppf(self.gate_prob, df=meas_dim))

    @classmethod
    def exact(cls, max_hypotheses: int = 1_000_000) -> "AssociationConfig":
        """No gating, no floors, no per-parent caps, all leaves retained."""
        return cls(
            max_hypotheses=max_hypotheses,
            murty_k=None,
            gate_prob=None,
            new_track_floor_ratio=None,
            alive_commit_threshold=None,
            child_stop_ratio=None,
            keep_all_leaves=True,
        )


@dataclass(frozen=True)
class PruneConfig:
    """Posterior reduction thresholds.

    hypothesis_ratio: drop global hypotheses lighter than this fraction of
        the heaviest one (never the heaviest itself).
    max_hypotheses: hard cap on surviving global hypotheses.
    recycle_threshold: drop tracks whose existence stays below this in every
        surviving hypothesis; with recycle_to_undetected their hypothesis-
        weighted live mixture mass is returned to the undetected intensity.
    dead_track_threshold: drop tracks with no still-alive component anywhere
        (existence frozen for good) whose existence stays below this in every
        surviving hypothesis. Such tracks can never be updated again nor
        clear a reporting threshold; without this rule the set-of-all-
        trajectories tracker accumulates them without bound. Needs the
        current time (prune_density's k argument); None disables.
    max_undetected_components / undetected_weight_floor: intensity caps.
    dead_component_threshold: optional floor on dead (already-ended) mixture
        components inside each Bernoulli; None keeps all dead components.
    """

    hypothesis_ratio: float = 1e-4
    max_hypotheses: int = 200
    recycle_threshold: float = 1e-3
    recycle_to_undetected: bool = False
    dead_track_threshold: float | None = 0.1
    max_undetected_components: int = 50
    undetected_weight_floor: float = 0.0
    dead_component_threshold: float | None = None


@dataclass(frozen=True, eq=False)
class AssignmentProblem:
    """One parent hypothesis' association problem.

    cost[j, c] is -log of the weight ratio for giving measurement j to column
    c versus leaving everything missed; np.inf marks gated-out pairs.
    column_keys describe columns as ("track", track_index) or ("new", j);
    cache_keys must identify a column's cost vector within one update step
    (they key the shared ranked-assignment streams across parents).
    """

    parent_index: int
    fixed_log_weight: float
    cost: np.ndarray
    column_keys: tuple
    cache_keys: tuple

    def __post_init__(self):
        m, n = self.cost.shape
        if len(self.column_keys) != n or len(self.cache_keys) != n:
            raise ValueError("column metadata does not match cost width")
        if m and not bool(np.all(np.any(np.isfinite(self.cost), axis=1))):
            raise ValueError("a measurement row has no feasible column")


@dataclass(frozen=True)
class Assignment:
    """One child hypothesis: its log weight and a column key per measurement."""

    log_weight: float
    parent_index: int
    columns: tuple


# -- gating --------------------------------------------------------------------


def gate_distances(b: BernoulliComponent, Z: np.ndarray, meas) -> np.ndarray:
    """Squared Mahalanobis innovation distance of each row of Z under the
    highest-weight component with the latest end time; +inf if empty."""
    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    out = np.full(Z.shape[0], np.inf)
    if b.density is None or not b.density.components:
        return out
    end = max(c.end_time for c in b.density.components)
    best = max((c for c in b.density.components if c.end_time == end), key=lambda c: c.weight)
    mean, cov = marginal_last_step(best.seq)
    s = meas.H @ cov @ meas.H.T + meas.R
    innov = Z - (meas.H @ mean)[None, :]
    sol = np.linalg.solve(s, innov.T)
    out[:] = np.einsum("ij,ji->i", innov, sol)
    return out


def gate(b: BernoulliComponent, z: np.ndarray, meas, gamma: float) -> bool:
    """True iff z lies inside the chi-square gate of the leaf's dominant live
    component. A leaf with no density gates out every measurement."""
    if gamma <= 0:
        raise ValueError("gate threshold must be positive")
    return bool(gate_distances(b, np.atleast_2d(z), meas)[0] <= gamma)


# -- Murty's ranked assignment ---------------------------------------------------


def _solve(matrix: np.ndarray):
    """Optimal complete row assignment; None when only forbidden edges remain."""
    work = np.where(np.isfinite(matrix), matrix, LARGE_COST)
    rows, cols = linear_sum_assignment(work)
    total = float(work[rows, cols].sum())
    if total >= LARGE_COST / 2:
        return None
    return total, tuple(int(c) for c in cols)


def murty(cost: np.ndarray):
    """Yield (total_cost, columns) for every complete row assignment of
    ``cost``, in nondecreasing cost order. np.inf entries are forbidden;
    rows must not outnumber columns. Deterministic: cost ties resolve in
    fixed partition order.
    """
    cost = np.asarray(cost, dtype=float)
    m, n = cost.shape
    if m > n:
        raise ValueError("more rows than columns: no complete assignment exists")
    if m == 0:
        yield 0.0, ()
        return

    counter = itertools.count()
    heap = []

    def push(fixed, fixed_cost, rows, cols, mat):
        if not rows:
            heapq.heappush(heap, (fixed_cost, next(counter), fixed, rows, cols, mat, ()))
            return
        solved = _solve(mat)
        if solved is not None:
            sub_cost, sol = solved
            heapq.heappush(
                heap, (fixed_cost + sub_cost, next(counter), fixed, rows, cols, mat, sol)
            )

    push((), 0.0, tuple(range(m)), tuple(range(n)), cost)
    while heap:
        total, _, fixed, rows, cols, mat, sol = heapq.heappop(heap)
        full = [-1] * m
        for r, c in fixed:
            full[r] = c
        for local_r, local_c in enumerate(sol):
            full[rows[local_r]] = cols[local_c]
        yield total, tuple(full)

        # Partition the remaining solution space: child t keeps this
        # solution's first t free-row pairs and forbids its (t+1)-th.
        cur_fixed = list(fixed)
        cur_cost = total - sum(mat[r, sol[r]] for r in range(len(rows)))
        cur_rows, cur_cols, cur_mat = list(rows), list(cols), mat
        for t in range(len(rows)):
            gcol = cols[sol[t]]
            lcol = cur_cols.index(gcol)
            child = cur_mat.copy()
            child[0, lcol] = np.inf
            push(tuple(cur_fixed), cur_cost, tuple(cur_rows), tuple(cur_cols), child)
            cur_fixed.append((cur_rows[0], gcol))
            cur_cost += cur_mat[0, lcol]
            cur_mat = np.delete(np.delete(cur_mat, 0, axis=0), lcol, axis=1)
            cur_rows.pop(0)
            cur_cols.pop(lcol)


class _Stream:
    """Memoized view of an ascending generator with random index access."""

    __slots__ = ("_gen", "_items", "_done")

    def __init__(self, gen):
        self._gen = gen
        self._items = []
        self._done = False

    def get(self, i: int):
        while not self._done and len(self._items) <= i:
            try:
                self._items.append(next(self._gen))
            except StopIteration:
                self._done = True
        return self._items[i] if i < len(self._items) else None


def _split_components(cost: np.ndarray):
    """Connected components of the rows/columns feasibility graph.

    Returns (rows, cols) index tuples; columns with no feasible entry are
    dropped (they can never be assigned).
    """
    m, n = cost.shape
    finite = np.isfinite(cost)
    parent = list(range(m))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    edge_c, edge_r = np.nonzero(finite.T)  # edges grouped by column
    counts = np.bincount(edge_c, minlength=n)
    col_rows = np.split(edge_r, np.cumsum(counts)[:-1])
    for rows in col_rows:
        for r in rows[1:]:
            ra, rb = find(int(rows[0])), find(int(r))
            if ra != rb:
                parent[max(ra, rb)] = min(ra, rb)
    groups = {}
    for r in range(m):
        groups.setdefault(find(r), []).append(r)
    col_groups: dict[int, list[int]] = {}
    for c in range(n):
        if counts[c]:
            col_groups.setdefault(find(int(col_rows[c][0])), []).append(c)
    return [(tuple(groups[root]), tuple(col_groups.get(root, ()))) for root in sorted(groups)]


def _product_stream(streams):
    """Lazy k-best over independent ascending streams: yields
    (total_cost, index_tuple) in nondecreasing total order.

    Each tuple is reached exactly once, from the parent obtained by
    decrementing its last nonzero coordinate, so children only ever advance
    coordinates at or after the one advanced last and no seen-set is needed.
    """
    first = [s.get(0) for s in streams]
    if any(f is None for f in first):
        return
    heap = [(sum(f[0] for f in first), 0, (0,) * len(streams))]
    while heap:
        total, low, idx = heapq.heappop(heap)
        yield total, idx
        for d in range(low, len(streams)):
            item = streams[d].get(idx[d] + 1)
            if item is None:
                continue
            prev = streams[d].get(idx[d])
            nxt = idx[:d] + (idx[d] + 1,) + idx[d + 1 :]
            heapq.heappush(heap, (total - prev[0] + item[0], d, nxt))


def _parent_children(problem: AssignmentProblem, cache: dict, cap: int | None):
    """Yield this parent's child hypotheses in descending weight order."""
    m = problem.cost.shape[0]
    if m == 0:
        yield Assignment(problem.fixed_log_weight, problem.parent_index, ())
        return
    comps = _split_components(problem.cost)
    streams, comp_meta = [], []
    for rows, cols in comps:
        key = (rows, tuple(problem.cache_keys[c] for c in cols))
        stream = cache.get(key)
        if stream is None:
            stream = _Stream(murty(problem.cost[np.ix_(rows, cols)]))
            cache[key] = stream
        streams.append(stream)
        comp_meta.append((rows, cols))
    count = 0
    for total, idx in _product_stream(streams):
        columns = [None] * m
        for (rows, cols), stream, i in zip(comp_meta, streams, idx):
            _, local = stream.get(i)
            for local_r, local_c in enumerate(local):
                columns[rows[local_r]] = problem.column_keys[cols[local_c]]
        yield Assignment(problem.fixed_log_weight - total, problem.parent_index, tuple(columns))
        count += 1
        if cap is not None and count >= cap:
            return


def k_best_global(
    problems: list[AssignmentProblem],
    K: int,
    per_parent_cap: int | None = None,
    stop_ratio: float | None = None,
) -> list[Assignment]:
    """The K highest-weight child hypotheses across all parents' problems.

    Every returned assignment is total (each measurement gets exactly one
    column, each track column used at most once). Results are sorted by
    descending weight with deterministic ties (parent index, then columns).
    Ranked streams are shared between parents through a per-call cache keyed
    on each subproblem's rows and column identities. stop_ratio truncates the
    enumeration once weights drop below that fraction of the best child's.
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    cache: dict = {}
    streams = [_Stream(_parent_children(p, cache, per_parent_cap)) for p in problems]
    heap = []
    for pi, s in enumerate(streams):
        item = s.get(0)
        if item is not None:
            heapq.heappush(heap, (-item.log_weight, pi, 0))
    log_stop = math.log(stop_ratio) if stop_ratio is not None else None
    out = []
    best = None
    while heap and len(out) < K:
        neg, pi, idx = heapq.heappop(heap)
        if best is None:
            best = -neg
        elif log_stop is not None and -neg < best + log_stop:
            break  # pops are descending; everything left prunes out anyway
        out.append(streams[pi].get(idx))
        nxt = streams[pi].get(idx + 1)
        if nxt is not None:
            heapq.heappush(heap, (-nxt.log_weight, pi, idx + 1))
    out.sort(key=lambda a: (-a.log_weight, a.parent_index, a.columns))
    return out


# -- posterior reduction ---------------------------------------------------------


def _merge_duplicate_hypotheses(hyps):
    merged: dict[tuple, float] = {}
    for h in hyps:
        key = h.leaf_index
        if key in merged:
            merged[key] = float(np.logaddexp(merged[key], h.log_weight))
        else:
            merged[key] = h.log_weight
    out = [GlobalHypothesis(w, k) for k, w in merged.items()]
    out.sort(key=lambda h: (-h.log_weight, h.leaf_index))
    return out


def prune_density(
    d: PMBMDensity, config: PruneConfig = PruneConfig(), k: int | None = None
) -> PMBMDensity:
    """Reduce a posterior: hypothesis thresholding and capping, leaf garbage
    collection, low-existence track removal (optionally recycling live mass
    into the undetected intensity), and intensity capping. The heaviest
    global hypothesis always survives. Weights are renormalized.

    ``k`` is the current time step; it is only needed for the dead-track
    rule (a component alive at k marks its track as still updatable) and
    omitting it skips that rule."""
    hyps = sorted(d.hypotheses, key=lambda h: (-h.log_weight, h.leaf_index))
    cutoff = hyps[0].log_weight + math.log(config.hypothesis_ratio) if config.hypothesis_ratio > 0 else -math.inf
    kept = [h for h in hyps if h.log_weight >= cutoff]
    kept = kept[: config.max_hypotheses]

    # Tracks whose existence is negligible under every surviving hypothesis
    # are removed entirely (their mass optionally recycled), as are tracks
    # that ended long ago with existence frozen below reporting relevance.
    recycled = []
    drop_tracks = set()
    for i, track in enumerate(d.tracks):
        refs = {h.leaf_index[i] for h in kept}
        max_r = max(track.leaves[li].existence for li in refs) if refs else 0.0
        if max_r < config.recycle_threshold:
            drop_tracks.add(i)
            continue
        if (
            config.dead_track_threshold is not None
            and k is not None
            and max_r < config.dead_track_threshold
        ):
            alive = any(
                c.end_time == k
                for li in refs
                if track.leaves[li].density is not None
                for c in track.leaves[li].density.components
            )
            if not alive:
                drop_tracks.add(i)
    if config.recycle_to_undetected and drop_tracks:
        log_ws = np.array([h.log_weight for h in kept])
        probs = np.exp(log_ws - logsumexp(log_ws))
        for i in drop_tracks:
            leaf_mass: dict[int, float] = {}
            for h, p in zip(kept, probs):
                leaf_mass[h.leaf_index[i]] = leaf_mass.get(h.leaf_index[i], 0.0) + float(p)
            for li, mass in leaf_mass.items():
                leaf = d.tracks[i].leaves[li]
                if leaf.density is None or leaf.existence == 0.0 or mass == 0.0:
                    continue
                for c in leaf.density.components:
                    recycled.append(replace(c, weight=c.weight * leaf.existence * mass))

    keep_idx = [i for i in range(len(d.tracks)) if i not in drop_tracks]

    # Leaf garbage collection: keep only leaves some hypothesis references.
    used: dict[int, list[int]] = {i: [] for i in keep_idx}
    for h in kept:
        for i in keep_idx:
            li = h.leaf_index[i]
            if li not in used[i]:
                used[i].append(li)
    tracks = []
    remap = {}
    for new_i, i in enumerate(keep_idx):
        used[i].sort()
        remap[i] = {old: new for new, old in enumerate(used[i])}
        leaves = tuple(_prune_leaf(d.tracks[i].leaves[old], config) for old in used[i])
        tracks.append(Track(d.tracks[i].track_id, leaves))
    new_hyps = [
        GlobalHypothesis(h.log_weight, tuple(remap[i][h.leaf_index[i]] for i in keep_idx))
        for h in kept
    ]
    new_hyps = _merge_duplicate_hypotheses(new_hyps)
    total = logsumexp([h.log_weight for h in new_hyps])
    new_hyps = tuple(replace(h, log_weight=h.log_weight - total) for h in new_hyps)

    undetected = d.undetected
    if recycled:
        undetected = TrajectoryMixture(undetected.components + tuple(recycled))
    undetected = prune_mixture(
        undetected,
        weight_threshold=config.undetected_weight_floor,
        max_components=config.max_undetected_components,
        intensity=True,
    )
    return PMBMDensity(undetected, tuple(tracks), new_hyps)


def _prune_leaf(leaf: BernoulliComponent, config: PruneConfig) -> BernoulliComponent:
    if config.dead_component_threshold is None or leaf.density is None:
        return leaf
    end = max(c.end_time for c in leaf.density.components)
    comps = [
        c
        for c in leaf.density.components
        if c.end_time == end or c.weight >= config.dead_component_threshold
    ]
    if len(comps) == len(leaf.density.components):
        return leaf
    total = sum(c.weight for c in comps)
    mix = TrajectoryMixture(tuple(replace(c, weight=c.weight / total) for c in comps))
    return replace(leaf, density=mix)
