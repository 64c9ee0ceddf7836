"""Evaluation metrics for sets of targets and sets of trajectories.

The target-set metric is the generalized optimal sub-pattern assignment
(GOSPA) distance in its alpha=2 form, whose p-th power decomposes into
localization, missed-target, and false-target costs. The trajectory-set
metric extends the same idea across a time window: an assignment between
true and estimated trajectories that is allowed to change over time, with
every change paying a switch penalty. It is computed exactly (integer
assignments) for small problems and as an LP relaxation beyond that; the
relaxed value is itself a metric.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence

import numpy as np
from scipy import sparse
from scipy.optimize import Bounds, LinearConstraint, linear_sum_assignment, linprog, milp

from .mixtures import Trajectory


@dataclass(frozen=True)
class GospaParams:
    """Cutoff c and order p. The cardinality-penalty form is fixed so that
    total^p = localization + (c^p/2) * (missed + false) counts."""

    c: float = 100.0
    p: float = 1.0

    def __post_init__(self):
        if self.c <= 0:
            raise ValueError("cutoff c must be positive")
        if self.p < 1:
            raise ValueError("order p must be at least 1")


@dataclass(frozen=True)
class TrajMetricParams:
    """Trajectory-metric parameters: cutoff c, order p, switch cost gamma.

    Problems where both sets have at most ``exact_max_size`` trajectories are
    solved with integer assignments; larger ones fall back to the LP
    relaxation.
    """

    c: float = 100.0
    p: float = 1.0
    gamma: float = 20.0
    exact_max_size: int = 6

    def __post_init__(self):
        if self.c <= 0:
            raise ValueError("cutoff c must be positive")
        if self.p < 1:
            raise ValueError("order p must be at least 1")
        if self.gamma < 0:
            raise ValueError("switch cost must be nonnegative")


class GospaResult(NamedTuple):
    total: float
    localization: float
    missed: float
    false: float


class TrajMetricResult(NamedTuple):
    total: float
    localization: float
    missed: float
    false: float
    switch: float


def _as_points(xs) -> np.ndarray:
    a = np.asarray(xs, dtype=float)
    if a.size == 0:
        return a.reshape(0, max(a.shape[-1] if a.ndim > 1 else 1, 1))
    if a.ndim == 1:
        a = a[None, :]
    return a


def gospa(truth, est, params: GospaParams = GospaParams()) -> GospaResult:
    """GOSPA distance between two finite sets of equal-dimension points.

    Returns the metric value and its decomposition in the p-th power domain:
    total**p == localization + missed + false. Matched pairs at distance >= c
    are counted as one missed and one false target, which costs the same as
    keeping the pair matched.
    """
    X, Y = _as_points(truth), _as_points(est)
    n, m = len(X), len(Y)
    cp = params.c**params.p
    loc = 0.0
    matched = 0
    if n and m:
        D = np.linalg.norm(X[:, None, :] - Y[None, :, :], axis=2)
        Dp = np.minimum(D, params.c) ** params.p
        # shifting by -c^p makes every entry <= 0, so the rectangular LSA
        # solves the optimal *partial* assignment: pairs at d >= c cost 0,
        # exactly as if left unmatched
        rows, cols = linear_sum_assignment(Dp - cp)
        for i, j in zip(rows, cols):
            if D[i, j] < params.c:
                loc += Dp[i, j]
                matched += 1
    missed = 0.5 * cp * (n - matched)
    false_ = 0.5 * cp * (m - matched)
    total = (loc + missed + false_) ** (1.0 / params.p)
    return GospaResult(total, loc, missed, false_)


def _state_at(tr: Trajectory, t: int) -> Optional[np.ndarray]:
    if tr.birth_time <= t <= tr.end_time:
        return np.asarray(tr.states[t - tr.birth_time], dtype=float)
    return None


def _step_costs(truth, est, t, c, p):
    """Per-step LP cost coefficients: real-pair matrix, dummy column for the
    truth side, dummy row for the estimate side."""
    n, m = len(truth), len(est)
    cp = c**p
    xs = [_state_at(tr, t) for tr in truth]
    ys = [_state_at(tr, t) for tr in est]
    base = np.zeros((n, m))
    for i, x in enumerate(xs):
        for j, y in enumerate(ys):
            if x is not None and y is not None:
                base[i, j] = min(float(np.linalg.norm(x - y)), c) ** p
            elif x is not None or y is not None:
                base[i, j] = 0.5 * cp
    to_dummy = np.array([0.5 * cp if x is not None else 0.0 for x in xs])
    from_dummy = np.array([0.5 * cp if y is not None else 0.0 for y in ys])
    return base, to_dummy, from_dummy


def _solve_assignment_lp(c_vec, A_eq, A_ub, n_w, exact):
    """Minimize c_vec @ x subject to A_eq x = 1, A_ub x <= 0, x in [0, 1].

    With exact=True the first n_w variables are required to be binary; an
    integral LP optimum is accepted directly since it attains the relaxation
    bound.
    """
    nv = len(c_vec)
    constraints = [LinearConstraint(A_eq, 1.0, 1.0)]
    if A_ub.shape[0]:
        constraints.append(LinearConstraint(A_ub, -np.inf, 0.0))
    res = linprog(
        c_vec,
        A_eq=A_eq,
        b_eq=np.ones(A_eq.shape[0]),
        A_ub=A_ub if A_ub.shape[0] else None,
        b_ub=np.zeros(A_ub.shape[0]) if A_ub.shape[0] else None,
        bounds=(0.0, 1.0),
        method="highs",
    )
    if not res.success:
        raise RuntimeError(f"assignment LP failed: {res.message}")
    x = res.x
    if not exact:
        return x
    w = x[:n_w]
    rounded = np.round(w)
    gap = abs(float(c_vec[:n_w] @ rounded) + float(c_vec[n_w:] @ x[n_w:]) - res.fun)
    if np.max(np.abs(w - rounded)) < 1e-7 and gap <= 1e-9 * (1.0 + abs(res.fun)):
        out = x.copy()
        out[:n_w] = rounded
        return out
    integrality = np.zeros(nv)
    integrality[:n_w] = 1
    res = milp(
        c=c_vec,
        constraints=constraints,
        integrality=integrality,
        bounds=Bounds(0.0, 1.0),
        options={"mip_rel_gap": 0.0},
    )
    if res.status != 0:
        raise RuntimeError(f"assignment MILP failed: {res.message}")
    out = res.x.copy()
    out[:n_w] = np.round(out[:n_w])
    return out


def traj_metric(
    truth: Sequence[Trajectory],
    est: Sequence[Trajectory],
    params: TrajMetricParams = TrajMetricParams(),
    window: Optional[tuple[int, int]] = None,
) -> TrajMetricResult:
    """Trajectory metric between two finite sets of trajectories.

    The optimization assigns every true trajectory to an estimated one (or to
    nothing) separately at each step of the window; per step, a matched pair
    where both exist costs min(distance, c)^p, a pair or unmatched trajectory
    with exactly one side present costs c^p/2, and co-absence is free.
    Changing the assignment between consecutive steps costs gamma^p/2 per
    changed pair. total**p == localization + missed + false + switch.

    The window defaults to the union of the trajectories' life spans;
    passing one evaluates the metric on that restriction instead.
    """
    truth, est = list(truth), list(est)
    if window is None:
        spans = [(tr.birth_time, tr.end_time) for tr in truth + est]
        if not spans:
            return TrajMetricResult(0.0, 0.0, 0.0, 0.0, 0.0)
        window = (min(b for b, _ in spans), max(e for _, e in spans))
    t0, t1 = window
    T = t1 - t0 + 1
    if T <= 0:
        raise ValueError("empty time window")
    n, m = len(truth), len(est)
    cp2 = 0.5 * params.c**params.p
    gp2 = 0.5 * params.gamma**params.p
    inv_p = 1.0 / params.p
    if n == 0 or m == 0:
        # nothing to assign: every existing trajectory-step is a miss / false
        missed = cp2 * sum(
            1 for tr in truth for t in range(t0, t1 + 1) if _state_at(tr, t) is not None
        )
        false_ = cp2 * sum(
            1 for tr in est for t in range(t0, t1 + 1) if _state_at(tr, t) is not None
        )
        return TrajMetricResult((missed + false_) ** inv_p, 0.0, missed, false_, 0.0)

    # variables: W_t (n+1)x(m+1) per step (dummy row/col absorb unassigned),
    # then one slack per consecutive-step real pair for the switch term
    V = (n + 1) * (m + 1)
    n_w = T * V
    n_e = max(T - 1, 0) * n * m
    c_vec = np.zeros(n_w + n_e)
    steps = []
    for t in range(T):
        base, to_dummy, from_dummy = _step_costs(truth, est, t0 + t, params.c, params.p)
        steps.append((base, to_dummy, from_dummy))
        off = t * V
        for i in range(n):
            c_vec[off + i * (m + 1) : off + i * (m + 1) + m] = base[i]
            c_vec[off + i * (m + 1) + m] = to_dummy[i]
        c_vec[off + n * (m + 1) : off + n * (m + 1) + m] = from_dummy
    c_vec[n_w:] = gp2

    eq_r, eq_c, eq_v = [], [], []
    row = 0
    for t in range(T):
        off = t * V
        for i in range(n):  # each true trajectory assigned somewhere (or dummy)
            for j in range(m + 1):
                eq_r.append(row), eq_c.append(off + i * (m + 1) + j), eq_v.append(1.0)
            row += 1
        for j in range(m):  # each estimate likewise
            for i in range(n + 1):
                eq_r.append(row), eq_c.append(off + i * (m + 1) + j), eq_v.append(1.0)
            row += 1
    A_eq = sparse.csr_matrix((eq_v, (eq_r, eq_c)), shape=(row, n_w + n_e))

    ub_r, ub_c, ub_v = [], [], []
    row = 0
    for t in range(T - 1):
        for i in range(n):
            for j in range(m):
                a = t * V + i * (m + 1) + j
                b = (t + 1) * V + i * (m + 1) + j
                e = n_w + t * n * m + i * m + j
                # W_{t+1} - W_t <= e and W_t - W_{t+1} <= e
                ub_r += [row, row, row, row + 1, row + 1, row + 1]
                ub_c += [b, a, e, a, b, e]
                ub_v += [1.0, -1.0, -1.0, 1.0, -1.0, -1.0]
                row += 2
    A_ub = sparse.csr_matrix((ub_v, (ub_r, ub_c)), shape=(row, n_w + n_e))

    exact = max(n, m) <= params.exact_max_size
    x = _solve_assignment_lp(c_vec, A_eq, A_ub, n_w, exact)
    W = x[:n_w].reshape(T, n + 1, m + 1)

    loc = missed = false_ = 0.0
    for t in range(T):
        base, to_dummy, from_dummy = steps[t]
        xs_exist = to_dummy > 0
        ys_exist = from_dummy > 0
        for i in range(n):
            for j in range(m):
                w = W[t, i, j]
                if w <= 0:
                    continue
                if xs_exist[i] and ys_exist[j]:
                    if base[i, j] < params.c**params.p:
                        loc += w * base[i, j]
                    else:  # matched beyond the cutoff: count as miss + false
                        missed += w * cp2
                        false_ += w * cp2
                elif xs_exist[i]:
                    missed += w * cp2
                elif ys_exist[j]:
                    false_ += w * cp2
        missed += float(W[t, :n, m] @ to_dummy)
        false_ += float(W[t, n, :m] @ from_dummy)
    switch = gp2 * float(np.sum(np.abs(np.diff(W[:, :n, :m], axis=0))))
    total = (loc + missed + false_ + switch) ** inv_p
    return TrajMetricResult(total, loc, missed, false_, switch)
