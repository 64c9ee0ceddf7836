"""Scenario simulation: ground-truth trajectory sets and measurement frames.

Two scenario modes share one measurement pipeline:

* ``scripted``: births, deaths, and motion are deterministic (states follow
  x_{k+1} = F x_k exactly), so the truth is bit-identical across runs and
  suitable as metric ground truth. Only the sensor side is random.
* ``poisson``: the full generative model. Per step, birth count is Poisson
  with the birth intensity's total weight and birth states are drawn from
  the birth mixture; each live target survives with probability P_S and
  moves through N(Fx, Q).

Randomness uses ``numpy.random.default_rng(seed)`` (PCG64) and is consumed
in a fixed, documented order: first the whole truth pass (per step: survival
draws in creation order, then motion noise, then birth count, then birth
states), then the measurement pass (per step: detection draws in creation
order, then measurement noise, then clutter count, then clutter positions,
then one permutation of the frame). Identical (config, seed) therefore
reproduces identical output on a given numpy version.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .mixtures import GaussianComponent, Trajectory
from .models import (
    BirthModel,
    ClutterModel,
    MeasurementModel,
    MotionModel,
    constant_velocity_model,
    position_measurement_model,
)

__all__ = [
    "SimulationResult",
    "models_from_config",
    "validate_config",
    "simulate",
    "save_frames",
    "load_frames",
    "coalescence_config",
    "grid_config",
]


@dataclass(frozen=True)
class SimulationResult:
    truth: list[Trajectory]
    frames: list[np.ndarray]  # one (m_k, meas_dim) array per step

    @property
    def steps(self) -> int:
        return len(self.frames)


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise ValueError(msg)


def models_from_config(models: dict) -> tuple[MotionModel, MeasurementModel, BirthModel, ClutterModel]:
    """Build the four system models from the ``models`` config section.

    Motion is either {"type": "constant_velocity", dt, sigma_v, ps} or
    {"type": "linear", F, Q, ps}; measurement either {"type": "position",
    sigma_z, pd} or {"type": "linear", H, R, pd}. Birth components list
    weight/mean/cov (or cov_diag); clutter gives rate_density and region.
    """
    _require(isinstance(models, dict), "models section must be an object")
    for key in ("motion", "measurement", "birth", "clutter"):
        _require(key in models, f"models section is missing '{key}'")

    mo = models["motion"]
    kind = mo.get("type", "constant_velocity")
    if kind == "constant_velocity":
        motion = constant_velocity_model(
            dt=float(mo.get("dt", 1.0)),
            sigma_v=float(mo.get("sigma_v", 1.0)),
            ps=float(mo.get("ps", 0.99)),
        )
    elif kind == "linear":
        motion = MotionModel(np.asarray(mo["F"], float), np.asarray(mo["Q"], float), float(mo["ps"]))
    else:
        raise ValueError(f"unknown motion type {kind!r}")

    me = models["measurement"]
    kind = me.get("type", "position")
    if kind == "position":
        meas = position_measurement_model(
            sigma_z=float(me.get("sigma_z", 1.0)), pd=float(me.get("pd", 0.98))
        )
    elif kind == "linear":
        meas = MeasurementModel(np.asarray(me["H"], float), np.asarray(me["R"], float), float(me["pd"]))
    else:
        raise ValueError(f"unknown measurement type {kind!r}")
    _require(meas.state_dim == motion.state_dim, "measurement and motion state dims differ")

    bi = models["birth"]
    comps = []
    _require(bool(bi.get("components")), "birth model needs a components list")
    for c in bi["components"]:
        mean = np.asarray(c["mean"], float)
        if "cov" in c:
            cov = np.asarray(c["cov"], float)
        elif "cov_diag" in c:
            cov = np.diag(np.asarray(c["cov_diag"], float))
        else:
            raise ValueError("birth component needs 'cov' or 'cov_diag'")
        _require(mean.shape == (motion.state_dim,), "birth mean has wrong dimension")
        comps.append(GaussianComponent(float(c["weight"]), mean, cov))
    birth = BirthModel(tuple(comps))

    cl = models["clutter"]
    clutter = ClutterModel(float(cl["rate_density"]), np.asarray(cl["region"], float))
    _require(clutter.region.shape[0] == meas.meas_dim, "clutter region dim != measurement dim")
    return motion, meas, birth, clutter


def validate_config(cfg: dict) -> None:
    """Raise ValueError if the config cannot drive a simulation."""
    _require(isinstance(cfg, dict), "config must be a JSON object")
    _require("models" in cfg, "config is missing the 'models' section")
    _require("scenario" in cfg, "config is missing the 'scenario' section")
    motion, _, _, _ = models_from_config(cfg["models"])
    sc = cfg["scenario"]
    steps = sc.get("steps")
    _require(isinstance(steps, int) and steps > 0, "scenario.steps must be a positive integer")
    mode = sc.get("mode", "scripted")
    _require(mode in ("scripted", "poisson"), f"unknown scenario mode {mode!r}")
    if mode == "scripted":
        births = sc.get("births")
        _require(isinstance(births, list) and births, "scripted scenario needs a births list")
        for b in births:
            t = b.get("time")
            _require(isinstance(t, int) and 0 <= t < steps, "scripted birth time out of range")
            state = np.asarray(b["state"], float)
            _require(state.shape == (motion.state_dim,), "scripted birth state has wrong dimension")
            end = b.get("end_time")
            if end is not None:
                _require(isinstance(end, int) and t <= end < steps, "scripted end_time out of range")


def _simulate_truth_scripted(sc: dict, motion: MotionModel) -> list[Trajectory]:
    steps = sc["steps"]
    out = []
    for b in sc["births"]:
        t0 = b["time"]
        t1 = b.get("end_time")
        t1 = steps - 1 if t1 is None else t1
        x = np.asarray(b["state"], float)
        states = [x]
        for _ in range(t0, t1):
            states.append(motion.F @ states[-1])
        out.append(Trajectory(t0, t1, np.array(states)))
    return out


def _simulate_truth_poisson(sc: dict, motion: MotionModel, birth: BirthModel, rng) -> list[Trajectory]:
    steps = sc["steps"]
    weights = np.array([c.weight for c in birth.components])
    probs = weights / weights.sum() if weights.sum() > 0 else None
    live: list[list] = []  # [birth time, state list] for currently alive targets
    done: list[Trajectory] = []
    for k in range(steps):
        survivors = []
        for tr in live:  # survival then motion, in creation order
            if rng.random() < motion.ps:
                survivors.append(tr)
            else:
                done.append(Trajectory(tr[0], k - 1, np.array(tr[1])))
        for tr in survivors:
            tr[1].append(motion.F @ tr[1][-1] + rng.multivariate_normal(np.zeros(motion.state_dim), motion.Q))
        live = survivors
        n_birth = rng.poisson(birth.expected_births) if probs is not None else 0
        for _ in range(n_birth):
            c = birth.components[rng.choice(len(probs), p=probs)]
            live.append([k, [rng.multivariate_normal(c.mean, c.cov)]])
    done.extend(Trajectory(tr[0], steps - 1, np.array(tr[1])) for tr in live)
    done.sort(key=lambda tr: tr.birth_time)
    return done


def simulate(cfg: dict, seed: int) -> SimulationResult:
    """Generate ground truth and measurement frames for one Monte Carlo run."""
    validate_config(cfg)
    motion, meas, birth, clutter = models_from_config(cfg["models"])
    sc = cfg["scenario"]
    steps = sc["steps"]
    rng = np.random.default_rng(seed)

    if sc.get("mode", "scripted") == "scripted":
        truth = _simulate_truth_scripted(sc, motion)
    else:
        truth = _simulate_truth_poisson(sc, motion, birth, rng)

    lo, hi = clutter.region[:, 0], clutter.region[:, 1]
    frames = []
    for k in range(steps):
        zs = []
        for tr in truth:  # detections in creation order
            if tr.birth_time <= k <= tr.end_time and rng.random() < meas.pd:
                x = tr.states[k - tr.birth_time]
                zs.append(meas.H @ x + rng.multivariate_normal(np.zeros(meas.meas_dim), meas.R))
        for _ in range(rng.poisson(clutter.expected_count)):
            zs.append(rng.uniform(lo, hi))
        frame = np.array(zs) if zs else np.zeros((0, meas.meas_dim))
        frames.append(frame[rng.permutation(len(frame))])
    return SimulationResult(truth, frames)


def save_frames(frames: list[np.ndarray], path) -> None:
    """Write one JSON record per time step: {"k": step, "measurements": [...]}."""
    with open(path, "w") as fh:
        for k, Z in enumerate(frames):
            fh.write(json.dumps({"k": k, "measurements": np.asarray(Z).tolist()}) + "\n")


def load_frames(path) -> list[np.ndarray]:
    frames = {}
    with open(path) as fh:
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            zs = np.asarray(rec["measurements"], float)
            frames[rec["k"]] = zs if zs.size else zs.reshape(0, 0)
    return [frames[k] for k in sorted(frames)]


def coalescence_config() -> dict:
    """Three straight-line targets converging at mid-scenario, then separating.

    Model parameters: sigma_v = 0.5, R = 100 I, P_S = 0.99, P_D = 0.98,
    clutter density 2.5e-8 over [-1000, 1000]^2, and a single broad birth
    component centered in the region. The truth waypoints are representative
    of the coalescence geometry, chosen so all three targets pass near the
    origin at step 20 of 40.
    """
    steps = 40
    births = []
    # all three reach y = 0 at step 20; slightly different x speeds keep the
    # closest approach at ~10 units (one measurement sigma) instead of exact
    # coincidence
    for y0, vx in ((300.0, 35.0), (0.0, 35.5), (-300.0, 34.5)):
        births.append(
            {
                "time": 0,
                "state": [-700.0, y0, vx, -y0 / 20.0],
            }
        )
    return {
        "models": {
            "motion": {"type": "constant_velocity", "dt": 1.0, "sigma_v": 0.5, "ps": 0.99},
            "measurement": {"type": "position", "sigma_z": 10.0, "pd": 0.98},
            "birth": {
                "components": [
                    {
                        "weight": 0.3,
                        "mean": [0.0, 0.0, 0.0, 0.0],
                        "cov_diag": [250000.0, 250000.0, 400.0, 400.0],
                    }
                ]
            },
            "clutter": {
                "rate_density": 2.5e-8,
                "region": [[-1000.0, 1000.0], [-1000.0, 1000.0]],
            },
        },
        "scenario": {"mode": "scripted", "steps": steps, "births": births},
        "tracker": {"variant": "all"},
        "metrics": {"kind": "trajectory", "c": 100.0, "p": 1.0, "gamma": 20.0},
        "output": {},
    }


def grid_config(steps: int = 200, rows: int = 8, cols: int = 8, spacing: float = 600.0) -> dict:
    """Many well-separated targets for throughput runs: a rows x cols grid of
    constant-velocity targets born in the first few steps, all alive through
    the middle of the window."""
    births = []
    half_w = (cols - 1) * spacing / 2.0
    half_h = (rows - 1) * spacing / 2.0
    for i in range(rows):
        for j in range(cols):
            births.append(
                {
                    "time": (i * cols + j) % 5,
                    "state": [
                        -half_w + j * spacing,
                        -half_h + i * spacing,
                        4.0 if j % 2 == 0 else -4.0,
                        3.0 if i % 2 == 0 else -3.0,
                    ],
                }
            )
    lim = max(half_w, half_h) + 1500.0
    volume = (2 * lim) ** 2
    return {
        "models": {
            "motion": {"type": "constant_velocity", "dt": 1.0, "sigma_v": 0.3, "ps": 0.99},
            "measurement": {"type": "position", "sigma_z": 5.0, "pd": 0.98},
            "birth": {
                "components": [
                    {
                        "weight": 0.5,
                        "mean": [0.0, 0.0, 0.0, 0.0],
                        "cov_diag": [lim**2 / 4.0, lim**2 / 4.0, 25.0, 25.0],
                    }
                ]
            },
            "clutter": {"rate_density": 2.0 / volume, "region": [[-lim, lim], [-lim, lim]]},
        },
        "scenario": {"mode": "scripted", "steps": steps, "births": births},
        "tracker": {"variant": "all"},
        "metrics": {"kind": "gospa", "c": 100.0, "p": 1.0},
        "output": {},
    }
