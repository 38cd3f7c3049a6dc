"""Desk-scale 2D world: object scenes, occupancy grids, and robot dynamics.

Positions are in pixels of a top-down world (default 2048 x 2048). Occupancy,
observations, and cost maps live on a coarser cell grid (default 256 x 256);
continuous positions map to cells by nearest cell center.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

ROBOT_RADIUS = 10.0  # px; the robot is modeled as a disc
ORIENTATIONS = (0, 90, 180, 270)


class WorldError(Exception):
    pass


class InvalidStateError(WorldError):
    pass


class GenerationError(WorldError):
    pass


@dataclass(frozen=True)
class GridSpec:
    """World extent in pixels plus the cell-grid discretization."""

    world_width: int = 2048
    world_height: int = 2048
    grid_resolution: int = 256
    dt: float = 0.1

    def __post_init__(self) -> None:
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.grid_resolution < 1:
            raise ValueError("grid_resolution must be >= 1")
        if (self.world_width % self.grid_resolution
                or self.world_height % self.grid_resolution):
            raise ValueError("world dimensions must be divisible by grid_resolution")

    @property
    def cell_width(self) -> float:
        return self.world_width / self.grid_resolution

    @property
    def cell_height(self) -> float:
        return self.world_height / self.grid_resolution

    def cell_of(self, p: tuple[float, float]) -> tuple[int, int]:
        """(iy, ix) of the cell whose center is nearest to p (clipped to the grid)."""
        res = self.grid_resolution
        ix = min(max(int(p[0] // self.cell_width), 0), res - 1)
        iy = min(max(int(p[1] // self.cell_height), 0), res - 1)
        return iy, ix

    def cell_center(self, iy: int, ix: int) -> tuple[float, float]:
        return (ix + 0.5) * self.cell_width, (iy + 0.5) * self.cell_height

    def cell_centers(self) -> tuple[np.ndarray, np.ndarray]:
        """Meshgrid (X, Y) of all cell-center coordinates, each (res, res)."""
        res = self.grid_resolution
        xs = (np.arange(res) + 0.5) * self.cell_width
        ys = (np.arange(res) + 0.5) * self.cell_height
        return np.meshgrid(xs, ys)


@dataclass(frozen=True)
class ObjectType:
    type_id: int
    name: str
    width: float   # px at orientation 0
    height: float
    color: str     # display hint only


# Four tabletop objects; footprints sized so that goals hugging an edge can
# put the greedy planner into a local minimum, but scenes stay navigable.
CATALOG: tuple[ObjectType, ...] = (
    ObjectType(0, "cheezit", 380.0, 300.0, "#c0392b"),
    ObjectType(1, "bleach", 220.0, 460.0, "#ecf0f1"),
    ObjectType(2, "spam", 340.0, 200.0, "#2471a3"),
    ObjectType(3, "mustard", 200.0, 360.0, "#f1c40f"),
)


def object_type(type_id: int) -> ObjectType:
    if not 0 <= type_id < len(CATALOG):
        raise ValueError(f"unknown object type id {type_id}")
    return CATALOG[type_id]


@dataclass(frozen=True)
class ObjectInstance:
    type_id: int
    center: tuple[float, float]
    orientation: int  # degrees, one of ORIENTATIONS

    def __post_init__(self) -> None:
        if self.orientation not in ORIENTATIONS:
            raise ValueError(f"orientation must be one of {ORIENTATIONS}")
        object_type(self.type_id)

    @property
    def footprint(self) -> tuple[float, float, float, float]:
        """Axis-aligned (x0, y0, x1, y1) after applying the orientation."""
        t = object_type(self.type_id)
        w, h = (t.width, t.height) if self.orientation in (0, 180) else (t.height, t.width)
        cx, cy = self.center
        return cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2


@dataclass(frozen=True)
class RobotState:
    """Position, velocity, acceleration in pixel units."""

    q: tuple[float, float]
    qdot: tuple[float, float] = (0.0, 0.0)
    qddot: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self) -> None:
        for v in (*self.q, *self.qdot, *self.qddot):
            if not math.isfinite(v):
                raise InvalidStateError("robot state components must be finite")

    @property
    def speed(self) -> float:
        return math.hypot(*self.qdot)


@dataclass(frozen=True)
class Task:
    start: tuple[float, float]
    goal: tuple[float, float]
    max_steps: int = 500


@dataclass(frozen=True)
class Environment:
    """An immutable scene: objects plus grids derived from their footprints.

    ``occupancy`` marks cells whose center lies inside a footprint;
    ``observation`` is the rasterized semantic image (one channel per catalog
    type plus a trailing free-space channel); ``traversable`` marks cells
    where the robot disc fits, i.e. the obstacle set inflated by its radius.
    """

    id: str
    rng_seed: int
    spec: GridSpec
    objects: tuple[ObjectInstance, ...]
    occupancy: np.ndarray = field(compare=False, repr=False)
    observation: np.ndarray = field(compare=False, repr=False)
    traversable: np.ndarray = field(compare=False, repr=False)
    obstacle_distance: np.ndarray = field(compare=False, repr=False)

    @property
    def rects(self) -> np.ndarray:
        """Footprints as an (n, 4) array of (x0, y0, x1, y1); may be empty."""
        if not self.objects:
            return np.zeros((0, 4))
        return np.array([o.footprint for o in self.objects])


def rect_distance(p: tuple[float, float], rect: tuple[float, float, float, float]) -> float:
    """Euclidean distance from a point to an axis-aligned rectangle (0 inside)."""
    x0, y0, x1, y1 = rect
    dx = max(x0 - p[0], 0.0, p[0] - x1)
    dy = max(y0 - p[1], 0.0, p[1] - y1)
    return math.hypot(dx, dy)


def min_obstacle_distance(p: tuple[float, float], env: Environment) -> float:
    if not env.objects:
        return math.inf
    return min(rect_distance(p, o.footprint) for o in env.objects)


def collision(q: tuple[float, float], env: Environment,
              robot_radius: float = ROBOT_RADIUS) -> bool:
    """True iff the robot disc at q intersects any object footprint."""
    return min_obstacle_distance(q, env) <= robot_radius


def _distance_field(spec: GridSpec, objects: tuple[ObjectInstance, ...]) -> np.ndarray:
    """Per-cell distance from the cell center to the nearest footprint."""
    X, Y = spec.cell_centers()
    dist = np.full(X.shape, np.inf)
    for o in objects:
        x0, y0, x1, y1 = o.footprint
        dx = np.maximum(np.maximum(x0 - X, X - x1), 0.0)
        dy = np.maximum(np.maximum(y0 - Y, Y - y1), 0.0)
        dist = np.minimum(dist, np.hypot(dx, dy))
    return dist


def make_environment(env_id: str, rng_seed: int, spec: GridSpec,
                     objects: tuple[ObjectInstance, ...],
                     robot_radius: float = ROBOT_RADIUS) -> Environment:
    """Build an Environment, computing all derived grids from the footprints."""
    for o in objects:
        x0, y0, x1, y1 = o.footprint
        if x0 < 0 or y0 < 0 or x1 > spec.world_width or y1 > spec.world_height:
            raise ValueError("object footprint extends outside world bounds")
    for i, a in enumerate(objects):
        for b in objects[i + 1:]:
            if _rects_overlap(a.footprint, b.footprint):
                raise ValueError("object footprints overlap")

    res = spec.grid_resolution
    dist = _distance_field(spec, objects)
    occupancy = (dist == 0.0).astype(np.uint8)

    n_types = len(CATALOG)
    observation = np.zeros((res, res, n_types + 1), dtype=np.uint8)
    X, Y = spec.cell_centers()
    claimed = np.zeros((res, res), dtype=bool)
    for o in objects:
        x0, y0, x1, y1 = o.footprint
        inside = (X >= x0) & (X <= x1) & (Y >= y0) & (Y <= y1) & ~claimed
        observation[..., o.type_id] |= inside.astype(np.uint8)
        claimed |= inside
    observation[..., n_types] = (~claimed).astype(np.uint8)

    return Environment(
        id=env_id,
        rng_seed=rng_seed,
        spec=spec,
        objects=tuple(objects),
        occupancy=occupancy,
        observation=observation,
        traversable=dist > robot_radius,
        obstacle_distance=dist,
    )


def _rects_overlap(a: tuple[float, float, float, float],
                   b: tuple[float, float, float, float]) -> bool:
    return a[0] < b[2] and b[0] < a[2] and a[1] < b[3] and b[1] < a[3]


def _rect_gap(a: tuple[float, float, float, float],
              b: tuple[float, float, float, float]) -> float:
    dx = max(a[0] - b[2], b[0] - a[2], 0.0)
    dy = max(a[1] - b[3], b[1] - a[3], 0.0)
    return math.hypot(dx, dy)


def generate_environment(seed: int, spec: GridSpec = GridSpec(),
                         n_objects: int = 2,
                         allow_duplicate_types: bool = False,
                         min_gap: float = 60.0,
                         max_attempts: int = 1000) -> Environment:
    """Sample a scene: object types, uniform positions, one of 4 orientations.

    Footprints keep at least min_gap between them so the robot can always
    pass between objects. Deterministic given (seed, spec); raises
    GenerationError if no placement is found within max_attempts.
    """
    rng = np.random.default_rng(seed)
    for _ in range(max_attempts):
        type_ids = rng.choice(len(CATALOG), size=n_objects,
                              replace=allow_duplicate_types)
        objects = []
        for tid in type_ids:
            t = CATALOG[int(tid)]
            orientation = int(rng.choice(ORIENTATIONS))
            w, h = (t.width, t.height) if orientation in (0, 180) else (t.height, t.width)
            cx = rng.uniform(w / 2, spec.world_width - w / 2)
            cy = rng.uniform(h / 2, spec.world_height - h / 2)
            objects.append(ObjectInstance(int(tid), (cx, cy), orientation))
        if all(_rect_gap(a.footprint, b.footprint) >= min_gap
               for i, a in enumerate(objects) for b in objects[i + 1:]):
            return make_environment(f"env-{seed}", seed, spec, tuple(objects))
    raise GenerationError(f"no valid placement after {max_attempts} attempts (seed={seed})")


def sample_starts(env: Environment, n: int = 10, seed: int = 0,
                  robot_radius: float = ROBOT_RADIUS,
                  max_attempts_per_point: int = 1000) -> list[tuple[float, float]]:
    """Sample n distinct collision-free start positions, uniform over the world.

    Each start additionally lands on a traversable cell so the path oracle can
    be anchored there.
    """
    if n == 0:
        return []
    rng = np.random.default_rng(seed)
    spec = env.spec
    points: list[tuple[float, float]] = []
    for _ in range(n * max_attempts_per_point):
        p = (rng.uniform(0, spec.world_width), rng.uniform(0, spec.world_height))
        if collision(p, env, robot_radius):
            continue
        if not env.traversable[spec.cell_of(p)]:
            continue
        if p in points:
            continue
        points.append(p)
        if len(points) == n:
            return points
    raise GenerationError(f"could not sample {n} collision-free starts in {env.id}")


def step_dynamics(state: RobotState, accel: tuple[float, float],
                  spec: GridSpec) -> RobotState:
    """Double-integrator step: velocity updates first, then position.

    q' = q + qdot' * dt with qdot' = qdot + accel * dt.
    """
    ax, ay = accel
    if not (math.isfinite(ax) and math.isfinite(ay)):
        raise InvalidStateError("acceleration must be finite")
    dt = spec.dt
    vx = state.qdot[0] + ax * dt
    vy = state.qdot[1] + ay * dt
    qx = state.q[0] + vx * dt
    qy = state.q[1] + vy * dt
    return RobotState(q=(qx, qy), qdot=(vx, vy), qddot=(ax, ay))


def rasterize_observation(env: Environment) -> np.ndarray:
    """Semantic image aligned with the occupancy grid (types + free channel)."""
    return env.observation
