"""Linear-Gaussian system models: motion, measurement, birth, clutter.

All models are time invariant. Probabilities of survival and detection are
state independent, which is what makes the closed-form existence and weight
updates in the trackers exact.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .gaussinfo import InfoGaussian
from .mixtures import GaussianComponent, MixtureComponent, TrajectoryMixture

__all__ = [
    "MotionModel",
    "MeasurementModel",
    "BirthModel",
    "ClutterModel",
    "constant_velocity_model",
    "position_measurement_model",
]


def _check_symmetric_pd(mat: np.ndarray, name: str) -> np.ndarray:
    mat = np.asarray(mat, dtype=float)
    if mat.ndim != 2 or mat.shape[0] != mat.shape[1]:
        raise ValueError(f"{name} must be square")
    if not np.allclose(mat, mat.T, rtol=1e-9, atol=1e-12):
        raise ValueError(f"{name} must be symmetric")
    try:
        np.linalg.cholesky(mat)
    except np.linalg.LinAlgError as exc:
        raise ValueError(f"{name} must be positive definite") from exc
    return 0.5 * (mat + mat.T)


def _inv_sym(mat: np.ndarray) -> np.ndarray:
    inv = np.linalg.inv(mat)
    return 0.5 * (inv + inv.T)


@dataclass(frozen=True, eq=False)
class MotionModel:
    """x_{k+1} = F x_k + w, w ~ N(0, Q), with survival probability ps.

    Q must be strictly positive definite: the sequence density stores Q^-1
    directly, so singular process noise is rejected at construction.
    """

    F: np.ndarray
    Q: np.ndarray
    ps: float
    Qinv: np.ndarray = field(init=False)

    def __post_init__(self):
        F = np.asarray(self.F, dtype=float)
        Q = _check_symmetric_pd(self.Q, "Q")
        if F.shape != Q.shape:
            raise ValueError("F and Q must have matching shapes")
        if not 0.0 <= self.ps <= 1.0:
            raise ValueError("survival probability must lie in [0, 1]")
        object.__setattr__(self, "F", F)
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "Qinv", _inv_sym(Q))

    @property
    def state_dim(self) -> int:
        return self.F.shape[0]


@dataclass(frozen=True, eq=False)
class MeasurementModel:
    """z = H x + v, v ~ N(0, R), with detection probability pd."""

    H: np.ndarray
    R: np.ndarray
    pd: float
    Rinv: np.ndarray = field(init=False)

    def __post_init__(self):
        H = np.asarray(self.H, dtype=float)
        R = _check_symmetric_pd(self.R, "R")
        if H.ndim != 2 or R.shape[0] != H.shape[0]:
            raise ValueError("H and R dimensions do not match")
        if not 0.0 <= self.pd <= 1.0:
            raise ValueError("detection probability must lie in [0, 1]")
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "Rinv", _inv_sym(R))

    @property
    def meas_dim(self) -> int:
        return self.H.shape[0]

    @property
    def state_dim(self) -> int:
        return self.H.shape[1]


@dataclass(frozen=True, eq=False)
class BirthModel:
    """Poisson birth intensity: a fixed weighted Gaussian mixture appearing
    fresh at every time step. Component weights are expected object counts,
    not probabilities, so they need not sum to one."""

    components: tuple[GaussianComponent, ...]

    def __post_init__(self):
        if not self.components:
            raise ValueError("birth model needs at least one component")
        for c in self.components:
            if c.weight < 0:
                raise ValueError("birth weights must be nonnegative")

    @property
    def expected_births(self) -> float:
        return float(sum(c.weight for c in self.components))

    def intensity_at(self, k: int) -> TrajectoryMixture:
        """The birth intensity as length-1 trajectory components born at time k."""
        comps = tuple(
            MixtureComponent(c.weight, k, k, InfoGaussian.from_moments(c.mean, c.cov))
            for c in self.components
        )
        return TrajectoryMixture(comps)


@dataclass(frozen=True, eq=False)
class ClutterModel:
    """Poisson clutter, uniform over an axis-aligned region.

    ``rate_density`` is the intensity per unit volume; the expected number of
    false alarms per scan is rate_density * volume(region).
    """

    rate_density: float
    region: np.ndarray  # (meas_dim, 2) [low, high] per axis

    def __post_init__(self):
        region = np.asarray(self.region, dtype=float)
        if region.ndim != 2 or region.shape[1] != 2:
            raise ValueError("region must be (meas_dim, 2) bounds")
        if np.any(region[:, 1] <= region[:, 0]):
            raise ValueError("region bounds must satisfy low < high")
        if self.rate_density < 0:
            raise ValueError("clutter rate density must be nonnegative")
        object.__setattr__(self, "region", region)

    @property
    def volume(self) -> float:
        return float(np.prod(self.region[:, 1] - self.region[:, 0]))

    @property
    def expected_count(self) -> float:
        return self.rate_density * self.volume

    def contains(self, z: np.ndarray) -> bool:
        z = np.asarray(z, dtype=float).ravel()
        return bool(np.all(z >= self.region[:, 0]) and np.all(z <= self.region[:, 1]))

    def intensity(self, z: np.ndarray) -> float:
        return self.rate_density if self.contains(z) else 0.0

    def log_intensity(self, z: np.ndarray) -> float:
        val = self.intensity(z)
        return float(np.log(val)) if val > 0 else -np.inf


def constant_velocity_model(dt: float = 1.0, sigma_v: float = 1.0, ps: float = 0.99) -> MotionModel:
    """Planar constant-velocity model, state [px, py, vx, vy].

    Process noise is the continuous white-noise-acceleration form, which is
    strictly positive definite for any dt > 0 and so valid in information
    form (the piecewise-constant variant is rank deficient and is not).
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    F = np.array(
        [
            [1.0, 0.0, dt, 0.0],
            [0.0, 1.0, 0.0, dt],
            [0.0, 0.0, 1.0, 0.0],
            [0.0, 0.0, 0.0, 1.0],
        ]
    )
    q_axis = sigma_v**2 * np.array([[dt**3 / 3.0, dt**2 / 2.0], [dt**2 / 2.0, dt]])
    Q = np.zeros((4, 4))
    Q[np.ix_([0, 2], [0, 2])] = q_axis
    Q[np.ix_([1, 3], [1, 3])] = q_axis
    return MotionModel(F, Q, ps)


def position_measurement_model(sigma_z: float = 1.0, pd: float = 0.98) -> MeasurementModel:
    """Position-only observation of the planar constant-velocity state."""
    H = np.array([[1.0, 0.0, 0.0, 0.0], [0.0, 1.0, 0.0, 0.0]])
    return MeasurementModel(H, (sigma_z**2) * np.eye(2), pd)
