"""Marginalizing the trajectory posterior commutes with filtering.

Runs the current-trajectories tracker and the marginal target filter on
the same frames, with identical association settings, and reports how far
apart the two posteriors are after marginalizing the tracker onto the
current target state. The answer should be floating-point noise: the
filter is the tracker with the trajectory history integrated out, not an
approximation of it.

    python3 demos/filter_vs_tracker.py [--steps N] [--seed S]
"""

import argparse

import numpy as np

from trajpmbm import (
    AssociationConfig,
    PruneConfig,
    empty_density,
    empty_target_density,
    marginalize_density,
    predict_current,
    predict_filter,
    prune_density,
    prune_target_density,
    update,
    update_filter,
)
from trajpmbm.models import BirthModel, ClutterModel, MeasurementModel, MotionModel


def build_models():
    F = 0.95 * np.eye(2)
    Q = 0.3 * np.eye(2)
    H = np.eye(2)
    R = 0.5 * np.eye(2)
    motion = MotionModel(F, Q, ps=0.95)
    meas = MeasurementModel(H, R, pd=0.9)
    birth = BirthModel.single(0.3, np.zeros(2), 4.0 * np.eye(2))
    clutter = ClutterModel(2e-4, np.array([[-25.0, 25.0]] * 2))
    return motion, meas, birth, clutter


def frame(rng, meas, clutter, targets, pd):
    Z = [meas.H @ x + rng.multivariate_normal(np.zeros(2), meas.R)
         for x in targets if rng.random() < pd]
    for _ in range(rng.poisson(clutter.expected_count)):
        Z.append(rng.uniform(clutter.region[:, 0], clutter.region[:, 1]))
    return np.array(Z) if Z else np.zeros((0, 2))


def deviation(td, fd, k):
    """Largest existence / mean gap between marginalized tracker and filter."""
    md = marginalize_density(td, k)
    dr, dm = 0.0, 0.0
    for t1, t2 in zip(md.tracks, fd.tracks):
        for l1, l2 in zip(t1.leaves, t2.leaves):
            dr = max(dr, abs(l1.existence - l2.existence))
            for c1, c2 in zip(l1.components, l2.components):
                dm = max(dm, float(np.max(np.abs(c1.mean - c2.mean))))
    return dr, dm


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--steps", type=int, default=50)
    ap.add_argument("--seed", type=int, default=42)
    args = ap.parse_args()

    motion, meas, birth, clutter = build_models()
    cfg = AssociationConfig(max_hypotheses=50, murty_k=10)
    prune_cfg = PruneConfig(hypothesis_ratio=1e-3, max_hypotheses=50)
    rng = np.random.default_rng(args.seed)
    targets = [np.array([0.0, 0.0]), np.array([5.0, -3.0])]

    td, fd = empty_density(), empty_target_density()
    worst_r, worst_m = 0.0, 0.0
    print(f"{'step':>5} {'tracks':>7} {'hyps':>5} {'max |dr|':>10} {'max |dmean|':>12}")
    for k in range(args.steps):
        targets = [motion.F @ x + rng.multivariate_normal(np.zeros(2), motion.Q)
                   for x in targets]
        Z = frame(rng, meas, clutter, targets, meas.pd)
        td = update(predict_current(td, motion, birth, k), Z, meas, clutter, k, cfg)
        fd = update_filter(predict_filter(fd, motion, birth), Z, meas, clutter, k, cfg)
        dr, dm = deviation(td, fd, k)
        worst_r, worst_m = max(worst_r, dr), max(worst_m, dm)
        td = prune_density(td, prune_cfg)
        fd = prune_target_density(fd, prune_cfg)
        if k % 10 == 9:
            print(f"{k:>5} {len(td.tracks):>7} {len(td.hypotheses):>5} {dr:>10.2e} {dm:>12.2e}")

    print(f"\nworst over {args.steps} steps: existence {worst_r:.2e}, mean {worst_m:.2e}")
    print("the trajectory tracker carries the filter inside it exactly")


if __name__ == "__main__":
    main()
