"""Cost-map types, rescaling, masking, and the composed planner cost.

A correction produces a two-channel cost map (position cost in [0, 255],
categorical velocity directive) plus a binary mask. The mask doubles as the
constraint-vs-goal cue: an all-ones mask is a constraint, anything else is a
goal directive. The CostStack composes the task cost, always-on base cost,
the active language goal, and accumulated constraints into one scalar.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .world import Environment, GridSpec, RobotState, min_obstacle_distance

FIXED_HIGH_COST = 255.0  # rescale ceiling; also the off-mask wall for goal maps


@dataclass(frozen=True)
class VelocityCodes:
    """Categorical velocity-directive codes; a config constant so the mapping
    can be permuted without code changes."""

    speed_up: int = 0
    slow_down: int = 1
    unconstrained: int = 2


DEFAULT_VELOCITY_CODES = VelocityCodes()


class CorrectionKind(Enum):
    CONSTRAINT = "constraint"
    GOAL = "goal"


@dataclass(eq=False)
class CostMap:
    """Two-channel grid: continuous position cost and velocity directive."""

    position: np.ndarray  # float64 (res, res), values in [0, 255]
    velocity: np.ndarray  # uint8 (res, res), values in a VelocityCodes triple

    def __post_init__(self) -> None:
        if self.position.shape != self.velocity.shape:
            raise ValueError("position and velocity channels must share a shape")
        if not np.all(np.isfinite(self.position)):
            raise ValueError("position channel must be finite")
        if self.position.min() < 0.0 or self.position.max() > FIXED_HIGH_COST:
            raise ValueError("position channel must lie in [0, 255]")

    @property
    def shape(self) -> tuple[int, int]:
        return self.position.shape


@dataclass(eq=False)
class Mask:
    grid: np.ndarray  # uint8 (res, res), values in {0, 1}

    def __post_init__(self) -> None:
        if not np.isin(self.grid, (0, 1)).all():
            raise ValueError("mask must be binary")

    def is_all_ones(self) -> bool:
        return bool(np.all(self.grid == 1))

    @classmethod
    def ones(cls, shape: tuple[int, int]) -> "Mask":
        return cls(np.ones(shape, dtype=np.uint8))


@dataclass(eq=False)
class GroundedCorrection:
    """A grounded correction: (cost, mask, kind) plus goal metadata."""

    cost: CostMap
    mask: Mask
    kind: CorrectionKind
    source_text: str = ""
    goal_point: tuple[float, float] | None = None
    arc_length: float | None = None  # px along the grounded path (goal kind)

    def __post_init__(self) -> None:
        if self.mask.grid.shape != self.cost.shape:
            raise ValueError("mask shape must match cost map shape")
        if (self.kind is CorrectionKind.CONSTRAINT) != self.mask.is_all_ones():
            raise ValueError("kind must be CONSTRAINT exactly when the mask is all ones")
        if self.kind is CorrectionKind.GOAL and self.goal_point is None:
            raise ValueError("goal corrections carry a goal point")


def classify(mask: Mask) -> CorrectionKind:
    """All-ones mask signals a constraint; any masked-out cell signals a goal."""
    return CorrectionKind.CONSTRAINT if mask.is_all_ones() else CorrectionKind.GOAL


def rescale(raw: np.ndarray, lo: float = 0.0, hi: float = FIXED_HIGH_COST) -> np.ndarray:
    """Affine map sending min(raw) -> lo and max(raw) -> hi.

    A constant input has no argmin information, so it maps to all zeros.
    """
    raw = np.asarray(raw, dtype=np.float64)
    if not np.all(np.isfinite(raw)):
        raise ValueError("rescale input must be finite")
    mn = raw.min()
    mx = raw.max()
    if mx == mn:
        return np.zeros_like(raw)
    # normalize to [0, 1] first; a/a == 1.0 exactly, so endpoints land on lo/hi
    t = (raw - mn) / (mx - mn)
    return t * (hi - lo) + lo


def masked_cost(c: CostMap, m: Mask) -> CostMap:
    """Element-wise product on the position channel; velocity passes through."""
    if m.grid.shape != c.shape:
        raise ValueError("mask shape must match cost map shape")
    return CostMap(position=c.position * m.grid, velocity=c.velocity.copy())


def task_cost_at(goal: tuple[float, float], q: tuple[float, float]) -> float:
    """Euclidean distance to the goal, in pixels."""
    return math.hypot(q[0] - goal[0], q[1] - goal[1])


def velocity_penalty(directive: int, qdot: tuple[float, float],
                     w_v: float = 1.0, v_ref: float = 100.0,
                     codes: VelocityCodes = DEFAULT_VELOCITY_CODES) -> float:
    """Penalty for the robot's speed under one velocity directive."""
    if directive == codes.unconstrained:
        return 0.0
    speed = math.hypot(*qdot)
    if directive == codes.slow_down:
        return w_v * speed
    if directive == codes.speed_up:
        return w_v * max(0.0, v_ref - speed)
    raise ValueError(f"unknown velocity directive {directive}")


@dataclass(frozen=True)
class BaseCostConfig:
    """Always-on safety terms: stay in bounds, do not collide.

    The optional inflation ramp (off by default) adds a small linear cost for
    skimming closer than inflation_margin beyond the robot disc.
    """

    bounds_weight: float = 10.0
    collision_penalty: float = 5000.0
    robot_radius: float = 10.0
    inflation_margin: float = 20.0
    inflation_weight: float = 0.0


@dataclass(frozen=True)
class CostWeights:
    """Composition weights for the language-derived terms.

    velocity_weight must outweigh the planner's arrival incentive for
    "slower" to bite (break-even is dt * horizon / 2 = 1.5 at the defaults);
    constraint_weight amplifies constraint position maps, whose slope over a
    desk-scale world is shallow after [0, 255] rescaling.
    """

    velocity_weight: float = 2.0
    velocity_ref: float = 100.0
    constraint_weight: float = 3.0


def base_cost(state: RobotState, env: Environment, cfg: BaseCostConfig) -> float:
    """Out-of-bounds distance (weighted), collision penalty, inflation ramp."""
    qx, qy = state.q
    spec = env.spec
    bx = max(0.0 - qx, 0.0, qx - spec.world_width)
    by = max(0.0 - qy, 0.0, qy - spec.world_height)
    c = cfg.bounds_weight * math.hypot(bx, by)
    d = min_obstacle_distance(state.q, env)
    if d <= cfg.robot_radius:
        c += cfg.collision_penalty
    elif d < cfg.robot_radius + cfg.inflation_margin:
        c += cfg.inflation_weight * (cfg.robot_radius + cfg.inflation_margin - d)
    return c


def language_goal_cost_at(gc: GroundedCorrection, cell: tuple[int, int]) -> float:
    """Goal-map sample at a cell: map value inside the mask, the wall outside."""
    if gc.mask.grid[cell]:
        return float(gc.cost.position[cell])
    return FIXED_HIGH_COST


@dataclass
class CostStack:
    """The live composition the planner optimizes.

    Holds the task goal (Euclidean-distance cost), base-cost config, the
    active language goal if any, and the permanent constraint list. Mutated
    only by the controller tick; evaluation is read-only.
    """

    spec: GridSpec
    base: BaseCostConfig = BaseCostConfig()
    weights: CostWeights = CostWeights()
    codes: VelocityCodes = DEFAULT_VELOCITY_CODES
    task_goal: tuple[float, float] | None = None
    task_cost_active: bool = True
    active_language_goal: GroundedCorrection | None = None
    constraints: list[GroundedCorrection] = field(default_factory=list)
    _composed: dict | None = field(default=None, repr=False)

    def add_constraint(self, gc: GroundedCorrection) -> None:
        if gc.kind is not CorrectionKind.CONSTRAINT:
            raise ValueError("only constraint corrections join the constraint list")
        self.constraints.append(gc)
        self._composed = None

    def set_language_goal(self, gc: GroundedCorrection) -> None:
        if gc.kind is not CorrectionKind.GOAL:
            raise ValueError("active language goal must be a goal correction")
        self.active_language_goal = gc
        self._composed = None

    def clear_language_goal(self) -> None:
        self.active_language_goal = None
        self._composed = None

    def composed(self) -> dict:
        """Cached fold of the constraint list for vectorized evaluation.

        'cons_pos' sums all constraint position maps; 'eff_vel' folds the
        velocity directives with the most recent non-unconstrained one winning.
        """
        if self._composed is None:
            res = self.spec.grid_resolution
            cons_pos = np.zeros((res, res))
            eff_vel = np.full((res, res), self.codes.unconstrained, dtype=np.uint8)
            for gc in self.constraints:
                cons_pos += gc.cost.position
                vel = gc.cost.velocity
                active = vel != self.codes.unconstrained
                eff_vel[active] = vel[active]
            self._composed = {"cons_pos": cons_pos, "eff_vel": eff_vel}
        return self._composed


def evaluate_stack(stack: CostStack, state: RobotState, env: Environment) -> float:
    """Scalar composed cost at one state (reference implementation).

    Sums the task cost (if active), base cost, the active language-goal term
    (off-mask cells hit the fixed high cost), constraint position costs, and
    the velocity penalty of the strictest (most recent) active directive.
    """
    total = 0.0
    if stack.task_cost_active and stack.task_goal is not None:
        total += task_cost_at(stack.task_goal, state.q)
    total += base_cost(state, env, stack.base)

    cell = stack.spec.cell_of(state.q)
    if stack.active_language_goal is not None:
        total += language_goal_cost_at(stack.active_language_goal, cell)

    directive = stack.codes.unconstrained
    for gc in stack.constraints:
        total += stack.weights.constraint_weight * float(gc.cost.position[cell])
        d = int(gc.cost.velocity[cell])
        if d != stack.codes.unconstrained:
            directive = d
    total += velocity_penalty(directive, state.qdot,
                              stack.weights.velocity_weight,
                              stack.weights.velocity_ref, stack.codes)
    return total


def evaluate_stack_batch(stack: CostStack, Q: np.ndarray, V: np.ndarray,
                         env: Environment,
                         window: tuple[int, int, int, int] | None = None) -> np.ndarray:
    """Vectorized evaluate_stack over N states; Q and V are (N, 2) arrays.

    ``window`` optionally limits grid-lookup terms (language goal and
    constraints) to cells inside (y0, y1, x0, x1); cells outside count as
    unobserved and contribute nothing.
    """
    spec = stack.spec
    total = np.zeros(len(Q))
    if stack.task_cost_active and stack.task_goal is not None:
        total += np.hypot(Q[:, 0] - stack.task_goal[0], Q[:, 1] - stack.task_goal[1])

    bx = np.maximum(np.maximum(-Q[:, 0], Q[:, 0] - spec.world_width), 0.0)
    by = np.maximum(np.maximum(-Q[:, 1], Q[:, 1] - spec.world_height), 0.0)
    total += stack.base.bounds_weight * np.hypot(bx, by)
    rects = env.rects
    if len(rects):
        dmin = np.full(len(Q), np.inf)
        for x0, y0, x1, y1 in rects:
            dx = np.maximum(np.maximum(x0 - Q[:, 0], Q[:, 0] - x1), 0.0)
            dy = np.maximum(np.maximum(y0 - Q[:, 1], Q[:, 1] - y1), 0.0)
            dmin = np.minimum(dmin, np.hypot(dx, dy))
        r = stack.base.robot_radius
        total += np.where(dmin <= r, stack.base.collision_penalty, 0.0)
        ramp = stack.base.robot_radius + stack.base.inflation_margin - dmin
        total += np.where(dmin > r, stack.base.inflation_weight * np.maximum(ramp, 0.0), 0.0)

    res = spec.grid_resolution
    ix = np.clip((Q[:, 0] // spec.cell_width).astype(np.int64), 0, res - 1)
    iy = np.clip((Q[:, 1] // spec.cell_height).astype(np.int64), 0, res - 1)
    if window is None:
        observed = np.ones(len(Q), dtype=bool)
    else:
        y0, y1, x0, x1 = window
        observed = (iy >= y0) & (iy < y1) & (ix >= x0) & (ix < x1)

    if stack.active_language_goal is not None:
        gc = stack.active_language_goal
        on = gc.mask.grid[iy, ix].astype(bool)
        total += observed * np.where(on, gc.cost.position[iy, ix], FIXED_HIGH_COST)

    comp = stack.composed()
    if stack.constraints:
        total += (stack.weights.constraint_weight * observed) * comp["cons_pos"][iy, ix]
        d = np.where(observed, comp["eff_vel"][iy, ix], stack.codes.unconstrained)
        speed = np.hypot(V[:, 0], V[:, 1])
        w = stack.weights.velocity_weight
        total += np.where(d == stack.codes.slow_down, w * speed, 0.0)
        total += np.where(d == stack.codes.speed_up,
                          w * np.maximum(0.0, stack.weights.velocity_ref - speed), 0.0)
    return total


def compose_position_grid(stack: CostStack, env: Environment) -> np.ndarray:
    """Per-cell composed position cost (velocity terms excluded); for display."""
    spec = stack.spec
    X, Y = spec.cell_centers()
    grid = np.zeros(X.shape)
    if stack.task_cost_active and stack.task_goal is not None:
        grid += np.hypot(X - stack.task_goal[0], Y - stack.task_goal[1])
    if stack.active_language_goal is not None:
        gc = stack.active_language_goal
        grid += np.where(gc.mask.grid.astype(bool), gc.cost.position, FIXED_HIGH_COST)
    grid += stack.weights.constraint_weight * stack.composed()["cons_pos"]
    grid += stack.base.collision_penalty * (~env.traversable)
    return grid
