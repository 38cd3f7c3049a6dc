"""Sampling-based model-predictive planner and the grid shortest-path oracle.

The planner samples Gaussian acceleration sequences around a warm-started
mean, rolls them out through the double integrator, scores them against the
cost stack, and softmax-weights them into one command (an MPPI-style update).
The A* oracle over the inflated occupancy grid serves demo labeling,
grounding, and verification.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .costmap import CostStack, evaluate_stack, evaluate_stack_batch, base_cost  # noqa: F401
from .world import Environment, RobotState, collision

SQRT2 = math.sqrt(2.0)

# 8-connected neighborhood in a fixed order so searches are deterministic.
_NEIGHBORS = ((-1, 0), (1, 0), (0, -1), (0, 1), (-1, -1), (-1, 1), (1, -1), (1, 1))


class PathError(Exception):
    pass


@dataclass(frozen=True)
class PlannerConfig:
    particles: int = 500
    horizon: int = 30
    sampling_stddev: float = 60.0  # px/s^2
    temperature: float = 1.0
    a_max: float = 200.0           # px/s^2
    engine: str = "numba"          # "numba" | "numpy"
    window_cells: int | None = None  # observation window half-width; None = full grid

    def __post_init__(self) -> None:
        if self.particles < 1 or self.horizon < 1:
            raise ValueError("particles and horizon must be >= 1")
        if self.temperature <= 0:
            raise ValueError("temperature must be positive")


class Planner:
    """Receding-horizon sampler; deterministic given its injected random stream."""

    def __init__(self, cfg: PlannerConfig = PlannerConfig(),
                 rng: np.random.Generator | int | None = None):
        self.cfg = cfg
        self.rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
        self.mean = np.zeros((cfg.horizon, 2))

    def reset(self) -> None:
        self.mean = np.zeros((self.cfg.horizon, 2))

    def plan_step(self, state: RobotState, stack: CostStack,
                  env: Environment) -> tuple[float, float]:
        """One planning tick: returns the commanded acceleration."""
        cfg = self.cfg
        noise = self.rng.normal(0.0, cfg.sampling_stddev, (cfg.particles, cfg.horizon, 2))
        accels = np.empty_like(noise)
        window = self._window(state, stack)

        if cfg.engine == "numba":
            costs = self._costs_jit(noise, state, stack, env, window, accels)
        elif cfg.engine == "numpy":
            costs = self._costs_numpy(noise, state, stack, env, window, accels)
        else:
            raise ValueError(f"unknown planner engine {cfg.engine!r}")

        weights = np.exp(-(costs - costs.min()) / cfg.temperature)
        weights /= weights.sum()
        new_mean = np.einsum("k,ktd->td", weights, accels)

        a = new_mean[0]
        nrm = math.hypot(a[0], a[1])
        if nrm > cfg.a_max:
            a = a * (cfg.a_max / nrm)
        # Warm start: shift by one tick, zero-pad the tail.
        self.mean[:-1] = new_mean[1:]
        self.mean[-1] = 0.0
        return float(a[0]), float(a[1])

    def _window(self, state: RobotState, stack: CostStack) -> tuple[int, int, int, int] | None:
        k = self.cfg.window_cells
        if k is None:
            return None
        res = stack.spec.grid_resolution
        iy, ix = stack.spec.cell_of(state.q)
        return (max(iy - k, 0), min(iy + k + 1, res),
                max(ix - k, 0), min(ix + k + 1, res))

    def _costs_jit(self, noise, state, stack, env, window, accels) -> np.ndarray:
        from ._rollout import rollout_costs_jit

        spec = stack.spec
        comp = stack.composed()
        gc = stack.active_language_goal
        goal_active = stack.task_cost_active and stack.task_goal is not None
        goal = stack.task_goal if goal_active else (0.0, 0.0)
        res = spec.grid_resolution
        empty_f = np.zeros((1, 1))
        empty_u8 = np.zeros((1, 1), dtype=np.uint8)
        win = window if window is not None else (0, 0, 0, 0)
        return rollout_costs_jit(
            noise, self.mean, state.q[0], state.q[1], state.qdot[0], state.qdot[1],
            spec.dt, self.cfg.a_max,
            goal_active, goal[0], goal[1],
            env.rects, stack.base.bounds_weight, stack.base.collision_penalty,
            stack.base.robot_radius,
            stack.base.inflation_margin, stack.base.inflation_weight,
            float(spec.world_width), float(spec.world_height),
            spec.cell_width, spec.cell_height, res,
            gc is not None,
            gc.cost.position if gc is not None else empty_f,
            gc.mask.grid if gc is not None else empty_u8,
            255.0,
            bool(stack.constraints), comp["cons_pos"], comp["eff_vel"],
            stack.weights.constraint_weight,
            stack.codes.slow_down, stack.codes.speed_up,
            stack.weights.velocity_weight, stack.weights.velocity_ref,
            window is not None, win[0], win[1], win[2], win[3],
            accels,
        )

    def _costs_numpy(self, noise, state, stack, env, window, accels) -> np.ndarray:
        cfg = self.cfg
        A = self.mean[None] + noise
        norms = np.hypot(A[..., 0], A[..., 1])
        scale = np.where(norms > cfg.a_max, cfg.a_max / np.maximum(norms, 1e-300), 1.0)
        A = A * scale[..., None]
        accels[:] = A
        dt = stack.spec.dt
        V = np.asarray(state.qdot) + dt * np.cumsum(A, axis=1)
        Q = np.asarray(state.q) + dt * np.cumsum(V, axis=1)
        costs = evaluate_stack_batch(stack, Q.reshape(-1, 2), V.reshape(-1, 2),
                                     env, window=window)
        costs = costs.reshape(cfg.particles, cfg.horizon).sum(axis=1)
        # collision re-sampled at step midpoints so fast rollouts cannot
        # tunnel through a footprint corner between ticks
        rects = env.rects
        if len(rects):
            M = Q - V * (0.5 * dt)
            hit = np.zeros(M.shape[:2], dtype=bool)
            for x0, y0, x1, y1 in rects:
                dx = np.maximum(np.maximum(x0 - M[..., 0], M[..., 0] - x1), 0.0)
                dy = np.maximum(np.maximum(y0 - M[..., 1], M[..., 1] - y1), 0.0)
                hit |= dx * dx + dy * dy <= stack.base.robot_radius ** 2
            costs = costs + stack.base.collision_penalty * hit.sum(axis=1)
        return costs


def rollout_cost(seq: Iterable[RobotState | tuple[float, float]],
                 stack: CostStack, env: Environment) -> float:
    """Composed cost summed along a trajectory or point path."""
    total = 0.0
    for s in seq:
        if not isinstance(s, RobotState):
            s = RobotState(q=(float(s[0]), float(s[1])))
        total += evaluate_stack(stack, s, env)
    return total


def _octile(ay: int, ax: int, by: int, bx: int) -> float:
    dy = abs(ay - by)
    dx = abs(ax - bx)
    return max(dx, dy) + (SQRT2 - 1.0) * min(dx, dy)


def grid_shortest_path(traversable: np.ndarray, start: tuple[int, int],
                       goal: tuple[int, int]) -> list[tuple[int, int]] | None:
    """A* over free cells, 8-connected, diagonal cost sqrt(2), no corner cutting.

    Returns the cell sequence from start to goal, or None if disconnected.
    """
    if not traversable[start] or not traversable[goal]:
        return None
    if start == goal:
        return [start]
    res_y, res_x = traversable.shape
    g = np.full((res_y, res_x), np.inf)
    g[start] = 0.0
    parent = np.full((res_y, res_x, 2), -1, dtype=np.int32)
    closed = np.zeros((res_y, res_x), dtype=bool)
    counter = 0
    heap = [(_octile(*start, *goal), counter, start)]
    while heap:
        _, _, cur = heapq.heappop(heap)
        if closed[cur]:
            continue
        if cur == goal:
            break
        closed[cur] = True
        cy, cx = cur
        for dy, dx in _NEIGHBORS:
            ny, nx = cy + dy, cx + dx
            if not (0 <= ny < res_y and 0 <= nx < res_x):
                continue
            if not traversable[ny, nx] or closed[ny, nx]:
                continue
            if dy != 0 and dx != 0:
                if not (traversable[cy + dy, cx] and traversable[cy, cx + dx]):
                    continue
                step = SQRT2
            else:
                step = 1.0
            cand = g[cur] + step
            if cand < g[ny, nx]:
                g[ny, nx] = cand
                parent[ny, nx] = cur
                counter += 1
                heapq.heappush(heap, (cand + _octile(ny, nx, *goal), counter, (ny, nx)))
    if not np.isfinite(g[goal]):
        return None
    path = [goal]
    while path[-1] != start:
        py, px = parent[path[-1]]
        path.append((int(py), int(px)))
    path.reverse()
    return path


def _snap_to_traversable(traversable: np.ndarray, cell: tuple[int, int],
                         max_radius: int = 3) -> tuple[int, int] | None:
    """Nearest traversable cell within a small ring search; None if boxed in."""
    if traversable[cell]:
        return cell
    res_y, res_x = traversable.shape
    cy, cx = cell
    best = None
    best_d2 = None
    for r in range(1, max_radius + 1):
        for dy in range(-r, r + 1):
            for dx in range(-r, r + 1):
                if max(abs(dy), abs(dx)) != r:
                    continue
                ny, nx = cy + dy, cx + dx
                if 0 <= ny < res_y and 0 <= nx < res_x and traversable[ny, nx]:
                    d2 = dy * dy + dx * dx
                    if best_d2 is None or d2 < best_d2:
                        best, best_d2 = (ny, nx), d2
        if best is not None:
            return best
    return None


def shortest_path(env: Environment, a: tuple[float, float], b: tuple[float, float],
                  robot_radius: float | None = None) -> list[tuple[float, float]] | None:
    """Shortest collision-free path between two points, as cell centers.

    Endpoints are anchored to their cells (snapped to the nearest traversable
    cell when the continuous point is free but its cell center is inflated
    away). Raises PathError if either endpoint is itself in collision.
    """
    spec = env.spec
    r = robot_radius if robot_radius is not None else 10.0
    if collision(a, env, r) or collision(b, env, r):
        raise PathError("shortest_path endpoints must be collision-free")
    start = _snap_to_traversable(env.traversable, spec.cell_of(a))
    goal = _snap_to_traversable(env.traversable, spec.cell_of(b))
    if start is None or goal is None:
        return None
    cells = grid_shortest_path(env.traversable, start, goal)
    if cells is None:
        return None
    return [spec.cell_center(iy, ix) for iy, ix in cells]


def path_arc_length(points: Sequence[tuple[float, float]]) -> float:
    """Total polyline length in px."""
    return float(sum(math.hypot(q[0] - p[0], q[1] - p[1])
                     for p, q in zip(points, points[1:])))
