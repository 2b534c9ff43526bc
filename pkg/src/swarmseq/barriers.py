"""Finite-time convergence barrier algebra for single-integrator robots.

Every barrier here is a scalar field h over robot positions whose
superzero-level set is the constraint set: h >= 0 means satisfied. The
class-K rate gamma * sign(h) * |h|^rho gives finite-time convergence into
the set (not just asymptotic approach), with an explicit settling-time
bound, and forward invariance once inside.

Constraint rows are the single-robot linearizations used by the QP filter:
for single-integrator dynamics the admissibility condition
    dh/dt + rate(h) >= 0
restricted to robot i's input becomes  (dh/dx_i) . u_i >= -rate(h) / c,
where c = 2 splits a pairwise barrier between its two participants and
c = 1 keeps the full rate for single-robot barriers.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import Obstacle


@dataclass(frozen=True)
class FcbfParams:
    """Class-K rate parameters: exponent rho in [0, 1), gain gamma > 0."""

    rho: float = 0.5
    gamma: float = 1.0

    def __post_init__(self):
        if not (0.0 <= self.rho < 1.0):
            raise ValueError(f"rho must be in [0, 1), got {self.rho}")
        if self.gamma <= 0.0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")


def class_k(h, params):
    """Signed-power class-K rate: gamma * sign(h) * |h|^rho, with sign(0) = 0."""
    if h == 0.0:
        return 0.0
    return params.gamma * math.copysign(abs(h) ** params.rho, h)


def settling_time_bound(h0, params):
    """Upper bound on the time to reach h >= 0 from h0; zero if already inside."""
    if h0 >= 0.0:
        return 0.0
    return abs(h0) ** (1.0 - params.rho) / (params.gamma * (1.0 - params.rho))


def team_settling_bound(entries, params):
    """Worst settling bound over (edge, h0) entries; only violated ones count."""
    worst = 0.0
    for _, h0 in entries:
        if h0 < 0.0:
            worst = max(worst, settling_time_bound(h0, params))
    return worst


# --- barrier kinds ---------------------------------------------------------


@dataclass(frozen=True)
class Connectivity:
    """h = delta^2 - |x_i - x_j|^2: robots i and j within sensing range."""

    i: int
    j: int
    delta: float

    def __post_init__(self):
        if self.i == self.j:
            raise ValueError("connectivity barrier needs two distinct robots")

    @property
    def participants(self):
        return (self.i, self.j)


@dataclass(frozen=True)
class Collision:
    """h = |x_i - x_j|^2 - min_sep^2: robots i and j at least min_sep apart."""

    i: int
    j: int
    min_sep: float

    def __post_init__(self):
        if self.i == self.j:
            raise ValueError("collision barrier needs two distinct robots")

    @property
    def participants(self):
        return (self.i, self.j)


@dataclass(frozen=True)
class ObstacleAvoid:
    """h = (x_i - o)' P (x_i - o) - 1: robot i outside an ellipsoidal region."""

    i: int
    obstacle: Obstacle

    @property
    def participants(self):
        return (self.i,)


@dataclass(frozen=True)
class KeepWithin:
    """h = radius^2 - |x_i - center|^2: robot i inside a disc (anchor constraint)."""

    i: int
    center: tuple
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", (float(self.center[0]), float(self.center[1])))
        if self.radius <= 0:
            raise ValueError("keep-within radius must be positive")

    @property
    def participants(self):
        return (self.i,)


@dataclass(frozen=True)
class Custom:
    """Arbitrary single-robot barrier: fn(position) -> (h, gradient)."""

    label: str
    i: int
    fn: object = field(compare=False)

    @property
    def participants(self):
        return (self.i,)


def _position(states, idx):
    for s in states:
        if s.id == idx:
            return s.position
    raise IndexError(f"no state for robot {idx}")


def eval_barrier(kind, states):
    """Barrier value for the given kind at the given robot states."""
    if isinstance(kind, Connectivity):
        d = _position(states, kind.i) - _position(states, kind.j)
        return kind.delta**2 - float(d @ d)
    if isinstance(kind, Collision):
        d = _position(states, kind.i) - _position(states, kind.j)
        return float(d @ d) - kind.min_sep**2
    if isinstance(kind, ObstacleAvoid):
        v = _position(states, kind.i) - kind.obstacle.center
        return kind.obstacle.a * v[0] ** 2 + kind.obstacle.b * v[1] ** 2 - 1.0
    if isinstance(kind, KeepWithin):
        v = _position(states, kind.i) - np.asarray(kind.center)
        return kind.radius**2 - float(v @ v)
    if isinstance(kind, Custom):
        h, _ = kind.fn(_position(states, kind.i))
        return float(h)
    raise TypeError(f"unknown barrier kind {kind!r}")


def barrier_gradient(kind, states, robot):
    """dh/dx_robot for a participating robot."""
    if robot not in kind.participants:
        raise ValueError(f"robot {robot} does not participate in {kind!r}")
    if isinstance(kind, Connectivity):
        other = kind.j if robot == kind.i else kind.i
        return -2.0 * (_position(states, robot) - _position(states, other))
    if isinstance(kind, Collision):
        other = kind.j if robot == kind.i else kind.i
        return 2.0 * (_position(states, robot) - _position(states, other))
    if isinstance(kind, ObstacleAvoid):
        v = _position(states, robot) - kind.obstacle.center
        return 2.0 * np.array([kind.obstacle.a * v[0], kind.obstacle.b * v[1]])
    if isinstance(kind, KeepWithin):
        return -2.0 * (_position(states, robot) - np.asarray(kind.center))
    if isinstance(kind, Custom):
        _, g = kind.fn(_position(states, robot))
        return np.asarray(g, dtype=float).reshape(2)
    raise TypeError(f"unknown barrier kind {kind!r}")


def is_hard(kind):
    """Safety barriers are hard (never relaxed); connectivity and anchors are soft."""
    return isinstance(kind, (Collision, ObstacleAvoid))


@dataclass(frozen=True)
class ConstraintRow:
    """Affine inequality normal . u >= offset on one robot's control input."""

    robot: int
    normal: np.ndarray
    offset: float
    source: object
    hard: bool

    def __post_init__(self):
        normal = self.normal
        if not (
            isinstance(normal, np.ndarray) and normal.dtype == np.float64 and normal.shape == (2,)
        ):
            normal = np.asarray(normal, dtype=float).reshape(2)
            object.__setattr__(self, "normal", normal)
        if not (
            math.isfinite(normal[0]) and math.isfinite(normal[1]) and math.isfinite(self.offset)
        ):
            raise ValueError("constraint row has non-finite coefficients")

    def satisfied_by(self, u, tol=1e-9):
        return float(self.normal @ u) >= self.offset - tol


def constraint_row(kind, states, params, robot, share="half"):
    """Constraint row (dh/dx_robot) . u >= -rate(h)/c for one participant.

    share "half" (c = 2) is the distributed form for pairwise barriers, where
    the same condition is enforced once by each endpoint; "full" (c = 1) is
    the centralized form and the right choice for single-robot barriers,
    which appear only once across the team.
    """
    if share not in ("half", "full"):
        raise ValueError(f"share must be 'half' or 'full', got {share!r}")
    c = 2.0 if share == "half" else 1.0
    h = eval_barrier(kind, states)
    grad = barrier_gradient(kind, states, robot)
    return ConstraintRow(
        robot=robot,
        normal=grad,
        offset=-class_k(h, params) / c,
        source=kind,
        hard=is_hard(kind),
    )
