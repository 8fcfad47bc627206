"""Variables, manifold retractions, noise models, and the factor-graph container."""

from __future__ import annotations

from collections import Counter
from enum import Enum
from typing import NamedTuple

import numpy as np

from ..geometry import Pose, RigCalibration, Rotation, so3_exp_matrix
from ..sensors import GRAVITY, ImuBias, NavState


class VariableKind(str, Enum):
    NAV_STATE = "NavState"
    LANDMARK = "Landmark"
    RIG_EXTRINSIC = "RigExtrinsic"


class Key(NamedTuple):
    kind: VariableKind
    index: int

    def __repr__(self):
        return f"{self.kind.value[0]}{self.index}"


def X(i: int) -> Key:
    return Key(VariableKind.NAV_STATE, int(i))


def L(j: int) -> Key:
    return Key(VariableKind.LANDMARK, int(j))


def C(p: int) -> Key:
    return Key(VariableKind.RIG_EXTRINSIC, int(p))


# tangent layouts: nav (dp, dtheta, dv, dbg, dba); extrinsic (dt, dphi); landmark (dx)
DIMS = {VariableKind.NAV_STATE: 15, VariableKind.LANDMARK: 3, VariableKind.RIG_EXTRINSIC: 6}


def _rot_retract(R: np.ndarray, dtheta) -> np.ndarray:
    return R @ so3_exp_matrix(dtheta)


def retract(kind: VariableKind, value, delta):
    """Right-perturbation update: translation in the local frame, rotation by ``R Exp(dtheta)``."""
    delta = np.asarray(delta, dtype=float)
    if kind is VariableKind.LANDMARK:
        return np.asarray(value, dtype=float) + delta
    if kind is VariableKind.RIG_EXTRINSIC:
        R = value.R
        return Pose(Rotation.from_matrix(_rot_retract(R, delta[3:6])), value.translation + R @ delta[0:3])
    R = value.R
    pose = Pose(Rotation.from_matrix(_rot_retract(R, delta[3:6])), value.position + R @ delta[0:3])
    bias = ImuBias(value.bias.gyro + delta[9:12], value.bias.accel + delta[12:15])
    return NavState(pose, value.velocity + delta[6:9], bias)


def local(kind: VariableKind, value, other) -> np.ndarray:
    """Inverse of :func:`retract`: the tangent vector taking ``value`` to ``other``."""
    if kind is VariableKind.LANDMARK:
        return np.asarray(other, dtype=float) - np.asarray(value, dtype=float)
    if kind is VariableKind.RIG_EXTRINSIC:
        R = value.R
        return np.concatenate(
            (R.T @ (other.translation - value.translation), Rotation.from_matrix(R.T @ other.R).log())
        )
    R = value.R
    return np.concatenate(
        (
            R.T @ (other.position - value.position),
            Rotation.from_matrix(R.T @ other.R).log(),
            other.velocity - value.velocity,
            other.bias.gyro - value.bias.gyro,
            other.bias.accel - value.bias.accel,
        )
    )


class Gaussian:
    """Whitening by a square-root information matrix ``W`` with ``W^T W = Sigma^-1``."""

    def __init__(self, sqrt_info):
        self.sqrt_info = np.atleast_2d(np.asarray(sqrt_info, dtype=float))
        self.is_diagonal = np.count_nonzero(self.sqrt_info - np.diag(np.diag(self.sqrt_info))) == 0

    @classmethod
    def from_sigmas(cls, sigmas) -> Gaussian:
        s = np.asarray(sigmas, dtype=float).reshape(-1)
        if np.any(s <= 0):
            raise ValueError("sigmas must be positive (use inf to drop a dimension)")
        with np.errstate(divide="ignore"):
            return cls(np.diag(1.0 / s))

    @classmethod
    def from_covariance(cls, cov) -> Gaussian:
        cov = np.asarray(cov, dtype=float)
        Lc = np.linalg.cholesky(cov)
        return cls(np.linalg.solve(Lc, np.eye(len(cov))))

    @property
    def dim(self) -> int:
        return self.sqrt_info.shape[0]

    def whiten(self, r):
        return self.sqrt_info @ r


class Huber:
    def __init__(self, delta: float = 1.345):
        if not delta > 0:
            raise ValueError("Huber threshold must be positive")
        self.delta = float(delta)

    def weight(self, e_norm):
        """IRLS weight w(|e|); the linearization scales by ``sqrt(w)``."""
        e_norm = np.asarray(e_norm, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(e_norm <= self.delta, 1.0, self.delta / e_norm)

    def cost(self, e_norm):
        e_norm = np.asarray(e_norm, dtype=float)
        return np.where(
            e_norm <= self.delta, 0.5 * e_norm**2, self.delta * e_norm - 0.5 * self.delta**2
        )

    def __repr__(self):
        return f"Huber({self.delta})"


class FactorGraph:
    """Variables with current estimates, measurement factors, and the gauge (frozen) configuration."""

    def __init__(self, rig: RigCalibration | None = None, gravity=GRAVITY):
        self.values: dict[Key, object] = {}
        self.factors: list = []
        self.frozen: dict[Key, np.ndarray] = {}
        self.rig = rig
        self.gravity = np.asarray(gravity, dtype=float)
        self.extrinsic_calibration: dict[Key, Pose] = {}
        self.extrinsic_priors: dict[Key, object] = {}

    def __contains__(self, key):
        return key in self.values

    def add_variable(self, key: Key, value, frozen: bool = False):
        if key in self.values:
            raise KeyError(f"variable {key!r} already exists")
        self.values[key] = value
        if frozen:
            self.freeze(key)
        return key

    def add_extrinsics(self, rig: RigCalibration | None = None):
        """Create one frozen RigExtrinsic variable per rig camera, at the calibration values."""
        rig = rig if rig is not None else self.rig
        self.rig = rig
        for p, cam in enumerate(rig.cameras):
            key = C(p)
            if key not in self.values:
                self.add_variable(key, cam.extrinsic, frozen=True)
            self.extrinsic_calibration[key] = cam.extrinsic

    def add_factor(self, factor):
        for k in factor.keys:
            if k not in self.values:
                raise KeyError(f"factor {factor.kind} references unknown variable {k!r}")
        self.factors.append(factor)
        return factor

    def remove_factor(self, factor):
        self.factors = [f for f in self.factors if f is not factor]

    def freeze(self, key: Key, dims=None):
        n = DIMS[key.kind]
        mask = self.frozen.get(key, np.zeros(n, dtype=bool)).copy()
        if dims is None:
            mask[:] = True
        else:
            mask[np.asarray(dims, dtype=int)] = True
        self.frozen[key] = mask

    def unfreeze(self, key: Key):
        self.frozen.pop(key, None)

    def is_frozen(self, key: Key) -> bool:
        m = self.frozen.get(key)
        return m is not None and bool(m.all())

    def free_dims(self, key: Key) -> np.ndarray:
        n = DIMS[key.kind]
        m = self.frozen.get(key)
        if m is None:
            return np.arange(n)
        return np.flatnonzero(~m)

    def keys(self, kind: VariableKind | None = None) -> list[Key]:
        ks = [k for k in self.values if kind is None or k.kind is kind]
        return sorted(ks, key=lambda k: (list(VariableKind).index(k.kind), k.index))

    def factor_census(self) -> dict[str, int]:
        return dict(sorted(Counter(f.kind for f in self.factors).items()))

    def copy(self) -> FactorGraph:
        g = FactorGraph(self.rig, self.gravity)
        g.values = dict(self.values)
        g.factors = list(self.factors)
        g.frozen = {k: m.copy() for k, m in self.frozen.items()}
        g.extrinsic_calibration = dict(self.extrinsic_calibration)
        g.extrinsic_priors = dict(self.extrinsic_priors)
        return g

    def total_cost(self, values=None) -> float:
        from .solver import evaluate_cost

        return evaluate_cost(self, self.values if values is None else values)[0]
