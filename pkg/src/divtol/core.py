"""Domain types, divergence metrics, and reward evaluation.

The central quantity is the divergence of an observed action vector ``a``
from a configured optimal action ``a*``:

    L2_SQUARED:  D(a) = sum_j (w_j * (a_j - a*_j))**2
    L1:          D(a) = sum_j |w_j * (a_j - a*_j)|

with optional nonnegative per-component weights ``w`` (all ones by default).
The objective reward of an action is ``-D(a)``; the subjective reward scales
that divergence by a group tolerance: an exposed animal (state 1) with
tolerance parameter ``theta_e`` receives ``-D * theta_e`` and a control
(state 0) receives ``-D * (1 - theta_e)``.  Everything downstream (the
pairwise objective, the simulation study, the CLI) is built on these
functions.

All values here are immutable after construction and the functions are pure,
so they are safe to share across concurrent workers.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

from .errors import InputError

__all__ = [
    "Norm",
    "Observation",
    "Dataset",
    "DivergenceSpec",
    "RewardModel",
    "ValidationReport",
    "divergence",
    "objective_reward",
    "subjective_reward",
    "dataset_divergences",
    "validate_dataset",
]


class Norm(Enum):
    """Supported divergence norms (weights apply inside the norm)."""

    L2_SQUARED = "l2"
    L1 = "l1"


def _as_action_array(value, name: str) -> np.ndarray:
    # owned copy: freezing a caller-supplied array in place would be a
    # surprising side effect
    arr = np.array(value, dtype=float, ndmin=1)
    if arr.ndim != 1:
        raise InputError(f"{name} must be a scalar or 1-D vector, got shape {arr.shape}")
    if arr.size == 0:
        raise InputError(f"{name} must have at least one component")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Observation:
    """One animal: an opaque id, a binary exposure state, and an action vector.

    ``state`` is 1 for exposed and 0 for control.  The action may be a scalar
    (stored as a length-1 vector) or a vector, e.g. per-bin mean press counts.
    """

    id: str
    state: int
    action: np.ndarray

    def __post_init__(self):
        if self.state not in (0, 1):
            raise InputError(f"state must be 0 or 1, got {self.state!r}")
        object.__setattr__(self, "state", int(self.state))
        object.__setattr__(self, "action", _as_action_array(self.action, "action"))

    @property
    def dimension(self) -> int:
        return self.action.shape[0]


@dataclass(frozen=True)
class Dataset:
    """A collection of observations with a declared action dimension."""

    observations: tuple[Observation, ...]
    dimension: int

    def __post_init__(self):
        obs = tuple(self.observations)
        if not obs:
            raise InputError("dataset must contain at least one observation")
        if not isinstance(self.dimension, int) or self.dimension < 1:
            raise InputError(f"dimension must be a positive integer, got {self.dimension!r}")
        object.__setattr__(self, "observations", obs)

    def __len__(self) -> int:
        return len(self.observations)

    @property
    def states(self) -> np.ndarray:
        """Exposure indicators as an int array of shape (n,)."""
        return np.array([o.state for o in self.observations], dtype=int)

    @property
    def actions(self) -> np.ndarray:
        """Action matrix of shape (n, dimension).

        Only meaningful on dimensionally consistent datasets; run
        :func:`validate_dataset` first if the source is untrusted.
        """
        return np.stack([o.action for o in self.observations])

    @classmethod
    def from_arrays(
        cls,
        actions: Iterable,
        states: Iterable[int],
        ids: Sequence[str] | None = None,
    ) -> "Dataset":
        """Build a dataset from parallel action/state sequences.

        Scalar actions become length-1 vectors; ids default to ``m0, m1, ...``.
        """
        acts = [_as_action_array(a, "action") for a in actions]
        sts = list(states)
        if len(acts) != len(sts):
            raise InputError("actions and states must have equal length")
        if ids is None:
            ids = [f"m{i}" for i in range(len(acts))]
        obs = tuple(Observation(i, s, a) for i, s, a in zip(ids, sts, acts))
        return cls(observations=obs, dimension=obs[0].dimension)


@dataclass(frozen=True)
class DivergenceSpec:
    """Fully defines the divergence: optimal action, norm, and weights.

    Weights rescale each component of ``a - a*`` before the norm is applied;
    they default to all ones so scalar experiments need no weight input.
    """

    optimal: np.ndarray
    norm: Norm = Norm.L2_SQUARED
    weights: np.ndarray | None = None

    def __post_init__(self):
        opt = _as_action_array(self.optimal, "optimal")
        if not np.all(np.isfinite(opt)):
            raise InputError("optimal action must be finite")
        object.__setattr__(self, "optimal", opt)
        if not isinstance(self.norm, Norm):
            raise InputError(f"norm must be a Norm member, got {self.norm!r}")
        if self.weights is not None:
            w = _as_action_array(self.weights, "weights")
            if not np.all(np.isfinite(w)):
                raise InputError("weights must be finite")
            if np.any(w < 0):
                raise InputError("weights must be nonnegative")
            if w.shape != opt.shape:
                raise InputError(
                    f"weights length {w.shape[0]} does not match optimal length {opt.shape[0]}"
                )
            object.__setattr__(self, "weights", w)

    @property
    def dimension(self) -> int:
        return self.optimal.shape[0]

    def effective_weights(self) -> np.ndarray:
        return self.weights if self.weights is not None else np.ones(self.dimension)


@dataclass(frozen=True)
class RewardModel:
    """The exposed group's tolerance parameter, constrained to [0, 1].

    The control group's tolerance is always the complement ``1 - theta_e``
    and is never stored separately.
    """

    theta_e: float

    def __post_init__(self):
        t = float(self.theta_e)
        if not np.isfinite(t) or not 0.0 <= t <= 1.0:
            raise InputError(f"theta_e must lie in [0, 1], got {self.theta_e!r}")
        object.__setattr__(self, "theta_e", t)

    @property
    def theta_c(self) -> float:
        return 1.0 - self.theta_e


def _weighted_residual(action, spec: DivergenceSpec) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(action, dtype=float))
    if arr.ndim != 1 or arr.shape != spec.optimal.shape:
        raise InputError(
            f"action length {arr.shape} does not match optimal length {spec.optimal.shape}"
        )
    if not np.all(np.isfinite(arr)):
        raise InputError("action must be finite")
    return spec.effective_weights() * (arr - spec.optimal)


def divergence(action, spec: DivergenceSpec) -> float:
    """Weighted divergence of an action from the optimal action.

    Nonnegative; zero exactly when every weighted component of ``a - a*``
    vanishes.
    """
    r = _weighted_residual(action, spec)
    if spec.norm is Norm.L2_SQUARED:
        return float(np.dot(r, r))
    return float(np.sum(np.abs(r)))


def objective_reward(action, spec: DivergenceSpec) -> float:
    """Group-free reward: the negated divergence from optimality."""
    return -divergence(action, spec)


def subjective_reward(model: RewardModel, obs: Observation, spec: DivergenceSpec) -> float:
    """Divergence scaled by the group tolerance.

    Exposed animals (state 1) are weighted by ``theta_e``, controls by
    ``1 - theta_e``; higher tolerance for divergence means a smaller weight,
    hence a reward closer to zero for the same divergence.
    """
    d = divergence(obs.action, spec)
    weight = model.theta_e if obs.state == 1 else model.theta_c
    return -d * weight


def dataset_divergences(ds: Dataset, spec: DivergenceSpec) -> np.ndarray:
    """Per-observation divergences as a float array of shape (n,).

    Vectorized equivalent of calling :func:`divergence` per observation.
    """
    if spec.dimension != ds.dimension:
        raise InputError(
            f"spec dimension {spec.dimension} does not match dataset dimension {ds.dimension}"
        )
    acts = ds.actions
    if acts.shape[1] != spec.dimension:
        raise InputError("observation dimension does not match spec dimension")
    if not np.all(np.isfinite(acts)):
        raise InputError("actions must be finite")
    resid = spec.effective_weights()[None, :] * (acts - spec.optimal[None, :])
    if spec.norm is Norm.L2_SQUARED:
        return np.einsum("ij,ij->i", resid, resid)
    return np.sum(np.abs(resid), axis=1)


@dataclass(frozen=True)
class ValidationReport:
    """Outcome of :func:`validate_dataset`: an empty report means estimable."""

    violations: tuple[str, ...] = field(default_factory=tuple)

    @property
    def ok(self) -> bool:
        return not self.violations


def validate_dataset(ds: Dataset) -> ValidationReport:
    """Report every violation of the dataset invariants.

    Checks, without raising: per-observation dimension against the declared
    dimension, finiteness of actions, a minimum of two observations, and the
    presence of both exposure groups.
    """
    violations: list[str] = []
    for o in ds.observations:
        if o.dimension != ds.dimension:
            violations.append(
                f"dimension mismatch: observation {o.id!r} has length {o.dimension}, "
                f"dataset declares {ds.dimension}"
            )
        if not np.all(np.isfinite(o.action)):
            violations.append(f"non-finite action: observation {o.id!r}")
    if len(ds) < 2:
        violations.append("fewer than two observations")
    states = {o.state for o in ds.observations}
    if 1 not in states:
        violations.append("missing exposed group")
    if 0 not in states:
        violations.append("missing control group")
    return ValidationReport(violations=tuple(violations))
