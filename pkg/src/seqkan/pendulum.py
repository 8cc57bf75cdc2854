"""Variable-length pendulum trajectories, labels, and the three dataset splits.

Integration is semi-implicit Euler on the time index t = 1..n_steps:

    alpha_t = -(g / L_t) * sin(theta_{t-1})
    omega_t = omega_{t-1} + alpha_t * dt
    theta_t = theta_{t-1} + omega_t * dt

with L_t = 0.1 * 10 ** (5.88 * t / 1000) by default.
"""

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import ConfigError, DegenerateStepError

EPS = 1e-12
WINDOW = 10
SPLIT_SIZE = 200
DATASET_FORMAT = 1
RNG_ALGORITHM = "numpy.random.PCG64"


@dataclass
class GeneratorConfig:
    g: float = 9.81
    dt: float = 0.02
    theta0: float = 0.5
    omega0: float = 0.0
    n_steps: int = 420
    length_law: str = "exponential"  # or "constant"
    length: float = 0.1  # base length; the whole length for "constant"
    rate: float = 5.88e-3  # exponent per step, base 10
    seed: int = 0

    def __post_init__(self):
        if not self.dt > 0:
            raise ConfigError(f"dt must be positive, got {self.dt}")
        if self.n_steps < 1:
            raise ConfigError(f"n_steps must be positive, got {self.n_steps}")
        if self.length_law not in ("exponential", "constant"):
            raise ConfigError(f"unknown length_law {self.length_law!r}")
        if not self.length > 0:
            raise ConfigError("length must be positive")

    def length_at(self, t):
        if self.length_law == "constant":
            return self.length
        return self.length * 10.0 ** (self.rate * t)


class TrajectoryPoint(NamedTuple):
    t: int
    theta: float
    omega: float
    alpha: float
    L: float


@dataclass
class Trajectory:
    config: GeneratorConfig
    t: np.ndarray
    theta: np.ndarray
    omega: np.ndarray
    alpha: np.ndarray
    L: np.ndarray

    def __len__(self):
        return len(self.t)

    def __getitem__(self, i):
        return TrajectoryPoint(int(self.t[i]), float(self.theta[i]), float(self.omega[i]), float(self.alpha[i]), float(self.L[i]))

    def points(self):
        return [self[i] for i in range(len(self))]

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "theta", "omega", "alpha", "L"])
        for p in self.points():
            w.writerow([p.t] + [f"{v:.17g}" for v in p[1:]])
        return buf.getvalue()


def integrate(config):
    """Trajectory for t = 0..n_steps; index 0 holds the initial state."""
    n = config.n_steps
    theta = np.empty(n + 1)
    omega = np.empty(n + 1)
    alpha = np.empty(n + 1)
    L = np.empty(n + 1)
    theta[0], omega[0] = config.theta0, config.omega0
    L[0] = config.length_at(0)
    alpha[0] = -(config.g / L[0]) * math.sin(theta[0])
    for t in range(1, n + 1):
        L[t] = config.length_at(t)
        alpha[t] = -(config.g / L[t]) * math.sin(theta[t - 1])
        omega[t] = omega[t - 1] + alpha[t] * config.dt
        theta[t] = theta[t - 1] + omega[t] * config.dt
    return Trajectory(config, np.arange(n + 1), theta, omega, alpha, L)


def label_eq(theta, omega):
    return theta * omega >= 0


class EnergyTerms(NamedTuple):
    kinetic: float  # change in (sin(theta) * omega / d_omega)^2
    potential: float  # change in sin(2 theta) / d_omega

    @property
    def total(self):
        return self.kinetic + self.potential

    @property
    def label(self):
        return self.total >= 0


def energy_terms(p2, p1, p0, eps=EPS):
    """Both difference terms of the Energy-Increasing test at p0.

    ``p2, p1, p0`` are consecutive points ending at the labelled step; only
    their theta/omega fields are used, and unit time step is assumed.
    """
    dw0 = p0.omega - p1.omega
    dw1 = p1.omega - p2.omega
    if abs(dw0) <= eps or abs(dw1) <= eps:
        raise DegenerateStepError(f"|d_omega| <= {eps} at t={p0.t}")
    k0 = (math.sin(p0.theta) * p0.omega / dw0) ** 2
    k1 = (math.sin(p1.theta) * p1.omega / dw1) ** 2
    u0 = math.sin(2.0 * p0.theta) / dw0
    u1 = math.sin(2.0 * p1.theta) / dw1
    return EnergyTerms(k0 - k1, u0 - u1)


def label_energy(points, eps=EPS):
    p2, p1, p0 = points
    return energy_terms(p2, p1, p0, eps).label


def recover_length(theta, delta_omega, dt, g=9.81, eps=EPS):
    """String length implied by one velocity update.

    ``theta`` must be the displacement the acceleration was evaluated at,
    i.e. the pre-update one.
    """
    s = math.sin(theta)
    if abs(delta_omega) <= eps or s == 0.0:
        raise DegenerateStepError("cannot recover length from a zero displacement or velocity change")
    return -g * s / (delta_omega / dt)


@dataclass
class Datapoint:
    end_t: int
    window: np.ndarray  # (WINDOW, 2) of (theta, omega)
    label_energy: bool
    label_eq: bool

    def to_json(self):
        return json.dumps(
            {
                "end_t": self.end_t,
                "window": self.window.tolist(),
                "label_energy": int(self.label_energy),
                "label_eq": int(self.label_eq),
            }
        )

    @classmethod
    def from_json(cls, line):
        d = json.loads(line)
        return cls(d["end_t"], np.array(d["window"], dtype=np.float64), bool(d["label_energy"]), bool(d["label_eq"]))


@dataclass
class Dataset:
    name: str
    points: list = field(default_factory=list)
    shifts: list = field(default_factory=list)

    def __len__(self):
        return len(self.points)

    @property
    def X(self):
        return np.stack([d.window for d in self.points])

    @property
    def y_energy(self):
        return np.array([d.label_energy for d in self.points], dtype=np.float64)

    @property
    def y_eq(self):
        return np.array([d.label_eq for d in self.points], dtype=np.float64)

    @property
    def end_t(self):
        return np.array([d.end_t for d in self.points])

    def base_rates(self):
        return {"energy": float(self.y_energy.mean()), "eq": float(self.y_eq.mean())}

    def to_jsonl(self):
        return "".join(d.to_json() + "\n" for d in self.points)

    @classmethod
    def from_jsonl(cls, name, text):
        return cls(name, [Datapoint.from_json(line) for line in text.splitlines() if line.strip()])


def make_datapoint(traj, end_t, window=WINDOW):
    lo = end_t - window + 1
    w = np.stack([traj.theta[lo : end_t + 1], traj.omega[lo : end_t + 1]], axis=1)
    e = label_energy((traj[end_t - 2], traj[end_t - 1], traj[end_t]))
    q = bool(label_eq(traj.theta[end_t], traj.omega[end_t]))
    return Datapoint(int(end_t), w, bool(e), q)


def windows(traj, first_end, count, name, window=WINDOW):
    """``count`` sliding windows; a degenerate end step moves that window along by one."""
    ds = Dataset(name)
    end = first_end
    while len(ds) < count:
        if end >= len(traj):
            raise ConfigError(f"trajectory too short for the {name} split (needs t={end})")
        try:
            ds.points.append(make_datapoint(traj, end, window))
        except DegenerateStepError:
            ds.shifts.append(int(end))
        end += 1
    return ds


def required_steps():
    return 2 * SPLIT_SIZE + WINDOW - 1


def build_splits(config_train, config_interp):
    """Train / interpolation / extrapolation datasets and their trajectories."""
    need = required_steps()
    for cfg in (config_train, config_interp):
        if cfg.n_steps < need:
            raise ConfigError(f"n_steps={cfg.n_steps} is too short; the splits need at least {need}")
    traj_a = integrate(config_train)
    traj_b = integrate(config_interp)
    train = windows(traj_a, WINDOW, SPLIT_SIZE, "train")
    interp = windows(traj_b, WINDOW, SPLIT_SIZE, "interpolation")
    extrap = windows(traj_a, int(train.end_t[-1]) + 1, SPLIT_SIZE, "extrapolation")
    return (train, interp, extrap), (traj_a, traj_b)


@dataclass
class Normalizer:
    """Affine map of (theta, omega) to zero mean and unit variance on the train split."""

    mean: tuple
    std: tuple

    @classmethod
    def fit(cls, dataset):
        flat = dataset.X.reshape(-1, 2)
        return cls(tuple(float(v) for v in flat.mean(axis=0)), tuple(float(v) for v in flat.std(axis=0)))

    def __call__(self, X):
        return (np.asarray(X, dtype=np.float64) - np.array(self.mean)) / np.array(self.std)

    def to_dict(self):
        return {"mean": list(self.mean), "std": list(self.std)}

    @classmethod
    def from_dict(cls, d):
        return cls(tuple(d["mean"]), tuple(d["std"]))


def metadata(config_train, config_interp, splits, normalizer):
    return {
        "format_version": DATASET_FORMAT,
        "rng": RNG_ALGORITHM,
        "config_train": asdict(config_train),
        "config_interp": asdict(config_interp),
        "normalization": normalizer.to_dict(),
        "splits": {
            ds.name: {
                "count": len(ds),
                "end_t": [int(ds.end_t[0]), int(ds.end_t[-1])],
                "base_rates": ds.base_rates(),
                "shifted": ds.shifts,
            }
            for ds in splits
        },
        "reconstructed_defaults": ["dt", "theta0", "omega0", "g"],
    }
