"""Deterministic 2D particle physics: discrete forces, damping, bounds.

Entities are circles in a square world of half-extent `bounds` (1.0 by
default, so the world is 2.0 wide). Agents accelerate in cardinal directions;
landmarks never move. Bodies overlap freely; overlap is detected, not
resolved.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import IntEnum
from typing import Optional, Sequence

import numpy as np

DT = 0.1
DAMPING = 0.25
DEFAULT_ACCEL = 5.0
WORLD_BOUND = 1.0


class DiscreteAction(IntEnum):
    STAY = 0
    UP = 1
    DOWN = 2
    LEFT = 3
    RIGHT = 4


N_ACTIONS = len(DiscreteAction)

# unit force direction per action, indexed by DiscreteAction value
ACTION_DIRECTIONS = np.array(
    [
        [0.0, 0.0],   # stay
        [0.0, 1.0],   # up
        [0.0, -1.0],  # down
        [-1.0, 0.0],  # left
        [1.0, 0.0],   # right
    ]
)


@dataclass
class Entity:
    position: np.ndarray
    velocity: np.ndarray
    size: float
    movable: bool = True
    max_speed: Optional[float] = None
    accel: float = DEFAULT_ACCEL

    def __post_init__(self):
        self.position = np.asarray(self.position, dtype=np.float64)
        self.velocity = np.asarray(self.velocity, dtype=np.float64)
        if self.position.shape != (2,) or self.velocity.shape != (2,):
            raise ValueError("position and velocity must be 2-vectors")
        if not np.all(np.isfinite(self.position)):
            raise ValueError("position must be finite")
        if self.size <= 0:
            raise ValueError("size must be positive")
        if self.max_speed is not None and self.max_speed <= 0:
            raise ValueError("max_speed must be positive when set")


@dataclass
class WorldState:
    """Agents (team first, then adversaries) plus immovable landmarks."""

    agents: list[Entity]
    landmarks: list[Entity]
    step_index: int = 0
    bounds: float = WORLD_BOUND
    goal_index: Optional[int] = None  # landmark index, for tasks with one goal

    @property
    def n_agents(self) -> int:
        return len(self.agents)

    @property
    def n_landmarks(self) -> int:
        return len(self.landmarks)


def step_kernel(pos, vel, forces, size, max_speed, bounds):
    """Advance movables one tick. Shapes (..., n, 2); size/max_speed (n,).

    Shared by the scalar `apply_actions` path and the batched rollout engine,
    so both produce identical floating-point results.
    """
    vel = vel * (1.0 - DAMPING) + forces * DT
    speed = np.sqrt((vel * vel).sum(axis=-1, keepdims=True))
    cap = max_speed[..., None]
    over = speed > cap
    safe_speed = np.where(over, speed, 1.0)
    vel = np.where(over, vel * (cap / safe_speed), vel)
    pos = pos + vel * DT
    limit = (bounds - size)[..., None]
    clamped = (pos > limit) | (pos < -limit)
    vel = np.where(clamped, 0.0, vel)
    pos = np.clip(pos, -limit, limit)
    return pos, vel


def apply_actions(state: WorldState, actions: Sequence[DiscreteAction]) -> WorldState:
    """Pure one-step transition for every agent; landmarks are untouched."""
    if len(actions) != state.n_agents:
        raise ValueError(f"expected {state.n_agents} actions, got {len(actions)}")
    n = state.n_agents
    pos = np.stack([a.position for a in state.agents])
    vel = np.stack([a.velocity for a in state.agents])
    size = np.array([a.size for a in state.agents])
    accel = np.array([a.accel for a in state.agents])
    max_speed = np.array(
        [np.inf if a.max_speed is None else a.max_speed for a in state.agents]
    )
    action_idx = np.array([int(a) for a in actions])
    forces = accel[:, None] * ACTION_DIRECTIONS[action_idx]
    new_pos, new_vel = step_kernel(pos, vel, forces, size, max_speed, state.bounds)

    new_agents = [
        replace(state.agents[i], position=new_pos[i], velocity=new_vel[i])
        for i in range(n)
    ]
    return WorldState(
        agents=new_agents,
        landmarks=state.landmarks,
        step_index=state.step_index + 1,
        bounds=state.bounds,
        goal_index=state.goal_index,
    )


def overlapping(a: Entity, b: Entity) -> bool:
    """True iff the two circles intersect (strict)."""
    d = float(np.linalg.norm(a.position - b.position))
    return d < a.size + b.size


def pairwise_distance(state: WorldState) -> np.ndarray:
    """Symmetric agent-center distance matrix with a zero diagonal."""
    pos = np.stack([a.position for a in state.agents])
    diff = pos[:, None, :] - pos[None, :, :]
    return np.sqrt((diff * diff).sum(axis=-1))
