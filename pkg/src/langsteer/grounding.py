"""Deterministic grounding of templated corrections to (cost, mask, kind).

This is the oracle counterpart of a learned grounder: it parses a correction,
resolves the referenced object, and emits exactly the supervision-style maps —
a path-shaped tube for goal directives, a radial falloff for stay-away, and a
categorical velocity map for speed directives.
"""

from __future__ import annotations

import hashlib
import json
import math
import re
from dataclasses import dataclass
from enum import Enum
from importlib import resources

import numpy as np
from scipy import ndimage

from . import costmap as cm
from .costmap import (CorrectionKind, CostMap, GroundedCorrection, Mask,
                      VelocityCodes, DEFAULT_VELOCITY_CODES, rescale)
from .planner import shortest_path
from .world import Environment, GridSpec, ObjectInstance, RobotState, collision, object_type

EDGE_OFFSET = 20.0            # px outward from a footprint edge midpoint
DIRECTIONAL_OFFSET = 150.0    # px hop for bare directional corrections
DIRECTIONAL_MARGIN = 20.0     # px clip inside world bounds
GOAL_COST_CEIL = 229.0        # on-path ceiling; keeps the 255 wall strictly maximal
TUBE_RADIUS_CELLS = 2.0
TUBE_LATERAL_COST = 12.0      # per cell of lateral distance from the path


class CorrectionError(Exception):
    pass


class ParseError(CorrectionError):
    def __init__(self, message: str, span: str = ""):
        super().__init__(message)
        self.span = span


class UnknownObjectError(CorrectionError):
    pass


class AmbiguousObjectError(CorrectionError):
    pass


class GroundingError(CorrectionError):
    pass


class Relation(Enum):
    ABOVE = "above"
    BELOW = "below"
    LEFT_OF = "left_of"
    RIGHT_OF = "right_of"
    STAY_AWAY = "stay_away"
    BEHIND = "behind"
    IN_FRONT_OF = "in_front_of"
    UP = "up"
    DOWN = "down"
    LEFT = "left"
    RIGHT = "right"
    FASTER = "faster"
    SLOWER = "slower"


SPATIAL_OBJECT = frozenset({Relation.ABOVE, Relation.BELOW, Relation.LEFT_OF,
                            Relation.RIGHT_OF, Relation.STAY_AWAY})
ROBOT_OBJECT = frozenset({Relation.BEHIND, Relation.IN_FRONT_OF})
DIRECTIONAL = frozenset({Relation.UP, Relation.DOWN, Relation.LEFT, Relation.RIGHT})
VELOCITY = frozenset({Relation.FASTER, Relation.SLOWER})
EDGE_RELATIONS = (Relation.ABOVE, Relation.BELOW, Relation.LEFT_OF, Relation.RIGHT_OF)
WAYPOINT_RELATIONS = EDGE_RELATIONS + (Relation.BEHIND, Relation.IN_FRONT_OF)

_DIRECTION_VECTORS = {
    Relation.UP: (0.0, -1.0),     # image convention: y grows downward
    Relation.DOWN: (0.0, 1.0),
    Relation.LEFT: (-1.0, 0.0),
    Relation.RIGHT: (1.0, 0.0),
}


def needs_object(relation: Relation) -> bool:
    return relation in SPATIAL_OBJECT or relation in ROBOT_OBJECT


@dataclass(frozen=True)
class Intent:
    relation: Relation
    object_ref: str | None = None

    def __post_init__(self) -> None:
        if needs_object(self.relation) and not self.object_ref:
            raise ValueError(f"{self.relation.name} requires an object reference")
        if not needs_object(self.relation) and self.object_ref:
            raise ValueError(f"{self.relation.name} does not take an object reference")


@dataclass(frozen=True)
class Lexicon:
    """Object synonyms and relation trigger phrases / templates."""

    synonyms: dict  # canonical key -> tuple of synonym phrases
    triggers: dict  # Relation -> tuple of trigger phrases
    templates: dict  # Relation -> tuple of template strings

    def __post_init__(self) -> None:
        seen: dict[str, str] = {}
        for key, syns in self.synonyms.items():
            for s in syns:
                if s in seen:
                    raise ValueError(f"synonym {s!r} shared by {seen[s]} and {key}")
                seen[s] = key

    def canonical(self, ref: str) -> str | None:
        if ref in self.synonyms:
            return ref
        for key, syns in self.synonyms.items():
            if ref in syns:
                return key
        return None

    def sha256(self) -> str:
        blob = json.dumps(
            {"synonyms": {k: list(v) for k, v in self.synonyms.items()},
             "triggers": {r.value: list(v) for r, v in self.triggers.items()},
             "templates": {r.value: list(v) for r, v in self.templates.items()}},
            sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


def load_lexicon(path: str | None = None) -> Lexicon:
    """Load the lexicon from a JSON file (packaged default when path is None)."""
    if path is None:
        raw = json.loads(resources.files("langsteer.data").joinpath("lexicon.json").read_text())
    else:
        with open(path) as f:
            raw = json.load(f)
    synonyms = {key: tuple(e["synonyms"]) for key, e in raw["objects"].items()}
    triggers = {Relation(name): tuple(e["triggers"]) for name, e in raw["relations"].items()}
    templates = {Relation(name): tuple(e["templates"]) for name, e in raw["relations"].items()}
    return Lexicon(synonyms=synonyms, triggers=triggers, templates=templates)


_DEFAULT_LEXICON: Lexicon | None = None


def default_lexicon() -> Lexicon:
    global _DEFAULT_LEXICON
    if _DEFAULT_LEXICON is None:
        _DEFAULT_LEXICON = load_lexicon()
    return _DEFAULT_LEXICON


_ARTICLES = re.compile(r"\b(the|a|an|of)\b")


def _normalize(text: str) -> str:
    text = text.lower()
    text = re.sub(r"[^a-z0-9\- ]+", " ", text)
    return re.sub(r"\s+", " ", text).strip()


def _find_phrase(text: str, phrase: str) -> int:
    """Index of a word-bounded phrase in text, or -1."""
    m = re.search(rf"\b{re.escape(phrase)}\b", text)
    return m.start() if m else -1


def parse(text: str, lexicon: Lexicon | None = None) -> Intent:
    """Parse a templated correction into an Intent; deterministic.

    Relation triggers match longest-first; the object reference is the longest
    known synonym in the text, falling back to the raw span after the trigger
    (so unknown objects surface in resolve_object, not here).
    """
    lexicon = lexicon or default_lexicon()
    norm = _normalize(text)
    if not norm:
        raise ParseError("empty correction", span=text)

    candidates = [(len(trig), trig, rel)
                  for rel, trigs in lexicon.triggers.items() for trig in trigs]
    candidates.sort(key=lambda c: (-c[0], c[1]))
    relation = None
    trig_end = 0
    for _, trig, rel in candidates:
        pos = _find_phrase(norm, trig)
        if pos >= 0:
            relation = rel
            trig_end = pos + len(trig)
            break
    if relation is None:
        raise ParseError(f"no relation trigger found in {text!r}", span=norm)

    if not needs_object(relation):
        return Intent(relation=relation)

    best = None
    for key, syns in lexicon.synonyms.items():
        for s in syns:
            if _find_phrase(norm, s) >= 0 and (best is None or len(s) > len(best[1])):
                best = (key, s)
    if best is not None:
        return Intent(relation=relation, object_ref=best[0])

    span = _ARTICLES.sub(" ", norm[trig_end:])
    span = re.sub(r"\s+", " ", span).strip()
    if not span:
        raise ParseError(f"missing object reference in {text!r}", span=norm[trig_end:])
    return Intent(relation=relation, object_ref=span)


def resolve_object(intent: Intent, env: Environment,
                   lexicon: Lexicon | None = None) -> ObjectInstance:
    """Unique scene object named by the intent's reference.

    Raises UnknownObjectError for references outside the lexicon or absent
    from the scene, AmbiguousObjectError when two instances share the type.
    """
    lexicon = lexicon or default_lexicon()
    if intent.object_ref is None:
        raise ValueError("intent carries no object reference")
    key = lexicon.canonical(intent.object_ref)
    if key is None:
        raise UnknownObjectError(f"unknown object {intent.object_ref!r}")
    matches = [o for o in env.objects if object_type(o.type_id).name == key]
    if not matches:
        raise UnknownObjectError(f"no {key} in this scene")
    if len(matches) > 1:
        raise AmbiguousObjectError(f"two instances of {key}; cannot tell them apart")
    return matches[0]


def _ray_rect_span(origin: tuple[float, float], direction: tuple[float, float],
                   rect: tuple[float, float, float, float]) -> tuple[float, float] | None:
    """(t_in, t_out) of a ray against an axis-aligned rect, or None if it misses."""
    t0, t1 = -math.inf, math.inf
    for o, d, lo, hi in ((origin[0], direction[0], rect[0], rect[2]),
                         (origin[1], direction[1], rect[1], rect[3])):
        if abs(d) < 1e-12:
            if o < lo or o > hi:
                return None
            continue
        ta, tb = (lo - o) / d, (hi - o) / d
        if ta > tb:
            ta, tb = tb, ta
        t0, t1 = max(t0, ta), min(t1, tb)
    if t0 > t1:
        return None
    return t0, t1


def _project_to_free(p: tuple[float, float], env: Environment) -> tuple[float, float]:
    """Nearest traversable cell center; identity when p is already free."""
    if not collision(p, env) and env.traversable[env.spec.cell_of(p)]:
        return p
    X, Y = env.spec.cell_centers()
    d2 = np.where(env.traversable, (X - p[0]) ** 2 + (Y - p[1]) ** 2, np.inf)
    iy, ix = np.unravel_index(int(np.argmin(d2)), d2.shape)
    return env.spec.cell_center(int(iy), int(ix))


def goal_point(relation: Relation, obj: ObjectInstance | None,
               robot_q: tuple[float, float], env: Environment) -> tuple[float, float]:
    """Target point implied by a goal-directed relation.

    Edge relations offset 20 px outward from the footprint edge midpoint;
    behind / in-front use the robot-to-object-center ray; bare directions hop
    150 px from the robot. Points that land in collision are projected to the
    nearest free cell center.
    """
    if relation in DIRECTIONAL:
        dx, dy = _DIRECTION_VECTORS[relation]
        spec = env.spec
        p = (robot_q[0] + DIRECTIONAL_OFFSET * dx, robot_q[1] + DIRECTIONAL_OFFSET * dy)
        p = (min(max(p[0], DIRECTIONAL_MARGIN), spec.world_width - DIRECTIONAL_MARGIN),
             min(max(p[1], DIRECTIONAL_MARGIN), spec.world_height - DIRECTIONAL_MARGIN))
        return _project_to_free(p, env)

    if obj is None:
        raise ValueError(f"{relation.name} requires an object")
    x0, y0, x1, y1 = obj.footprint
    if relation is Relation.ABOVE:
        p = ((x0 + x1) / 2, y0 - EDGE_OFFSET)
    elif relation is Relation.BELOW:
        p = ((x0 + x1) / 2, y1 + EDGE_OFFSET)
    elif relation is Relation.LEFT_OF:
        p = (x0 - EDGE_OFFSET, (y0 + y1) / 2)
    elif relation is Relation.RIGHT_OF:
        p = (x1 + EDGE_OFFSET, (y0 + y1) / 2)
    elif relation in ROBOT_OBJECT:
        cx, cy = obj.center
        d = math.hypot(cx - robot_q[0], cy - robot_q[1])
        if d < 1e-9:
            return _project_to_free(robot_q, env)
        direction = ((cx - robot_q[0]) / d, (cy - robot_q[1]) / d)
        span = _ray_rect_span(robot_q, direction, obj.footprint)
        if span is None:  # degenerate; aim at the center side nearest the robot
            span = (d, d)
        t = max(span[0] - EDGE_OFFSET, 0.0) if relation is Relation.IN_FRONT_OF \
            else span[1] + EDGE_OFFSET
        p = (robot_q[0] + direction[0] * t, robot_q[1] + direction[1] * t)
    else:
        raise ValueError(f"{relation.name} has no goal point")
    return _project_to_free(p, env)


def path_label(points, spec: GridSpec,
               codes: VelocityCodes = DEFAULT_VELOCITY_CODES) -> tuple[CostMap, Mask, float]:
    """Label a point path with remaining-arc-length costs and a tube mask.

    Cells visited by the path carry the remaining arc length to the endpoint
    (rescaled so the farthest cell reads GOAL_COST_CEIL and the terminal cell
    0); cells within TUBE_RADIUS_CELLS inherit the nearest path cell's value
    plus a small lateral climb; everything off the tube holds the fixed high
    cost. Returns (cost map, mask, total arc length in px).
    """
    pts = [(float(p[0]), float(p[1])) for p in points]
    if not pts:
        raise ValueError("path_label requires a nonempty path")
    res = spec.grid_resolution
    seg = [math.hypot(b[0] - a[0], b[1] - a[1]) for a, b in zip(pts, pts[1:])]
    total = float(sum(seg))
    remaining = [total]
    for s in seg:
        remaining.append(remaining[-1] - s)
    remaining[-1] = 0.0

    arc_val = np.full((res, res), np.inf)
    for p, rem in zip(pts, remaining):
        cell = spec.cell_of(p)
        if rem < arc_val[cell]:
            arc_val[cell] = rem
    on_path = np.isfinite(arc_val)

    dist, (ny, nx) = ndimage.distance_transform_edt(~on_path, return_indices=True)
    tube = dist <= TUBE_RADIUS_CELLS

    scaled = np.zeros((res, res))
    scaled[on_path] = rescale(arc_val[on_path], 0.0, GOAL_COST_CEIL)
    tube_vals = scaled[ny, nx] + TUBE_LATERAL_COST * dist
    position = np.where(tube, np.minimum(tube_vals, cm.FIXED_HIGH_COST), cm.FIXED_HIGH_COST)

    velocity = np.full((res, res), codes.unconstrained, dtype=np.uint8)
    return CostMap(position=position, velocity=velocity), Mask(tube.astype(np.uint8)), total


def ground(intent: Intent, env: Environment, state: RobotState,
           lexicon: Lexicon | None = None,
           codes: VelocityCodes = DEFAULT_VELOCITY_CODES,
           source_text: str = "") -> GroundedCorrection:
    """Ground an intent at the current state into a correction.

    Velocity and stay-away intents become all-ones-mask constraints; everything
    else becomes a goal tube along the shortest collision-free path to the
    relation's goal point. Raises GroundingError when no such path exists.
    """
    lexicon = lexicon or default_lexicon()
    spec = env.spec
    res = spec.grid_resolution

    if intent.relation in VELOCITY:
        code = codes.speed_up if intent.relation is Relation.FASTER else codes.slow_down
        cost = CostMap(position=np.zeros((res, res)),
                       velocity=np.full((res, res), code, dtype=np.uint8))
        return GroundedCorrection(cost=cost, mask=Mask.ones((res, res)),
                                  kind=CorrectionKind.CONSTRAINT, source_text=source_text)

    if intent.relation is Relation.STAY_AWAY:
        obj = resolve_object(intent, env, lexicon)
        X, Y = spec.cell_centers()
        raw = -np.hypot(X - obj.center[0], Y - obj.center[1])
        cost = CostMap(position=rescale(raw),
                       velocity=np.full((res, res), codes.unconstrained, dtype=np.uint8))
        return GroundedCorrection(cost=cost, mask=Mask.ones((res, res)),
                                  kind=CorrectionKind.CONSTRAINT, source_text=source_text)

    obj = resolve_object(intent, env, lexicon) if needs_object(intent.relation) else None
    target = goal_point(intent.relation, obj, state.q, env)
    path = shortest_path(env, state.q, target)
    if path is None:
        raise GroundingError(f"no collision-free path toward {intent.relation.value}")
    cost, mask, arc = path_label(path, spec, codes)
    return GroundedCorrection(cost=cost, mask=mask, kind=CorrectionKind.GOAL,
                              source_text=source_text, goal_point=target, arc_length=arc)


def classify(gc: GroundedCorrection) -> CorrectionKind:
    """Constraint iff the mask is all ones."""
    return cm.classify(gc.mask)


def render_instruction(relation: Relation, object_key: str | None = None,
                       lexicon: Lexicon | None = None,
                       template_index: int = 0, synonym_index: int = 0) -> str:
    """Render a templated instruction; indices pick among template/synonym variants."""
    lexicon = lexicon or default_lexicon()
    templates = lexicon.templates[relation]
    template = templates[template_index % len(templates)]
    if "{obj}" not in template:
        return template
    if object_key is None:
        raise ValueError(f"{relation.name} template needs an object")
    syns = lexicon.synonyms[object_key]
    return template.format(obj=syns[synonym_index % len(syns)])


def iter_template_product(lexicon: Lexicon | None = None):
    """Yield (text, intent) for every template x synonym x relation combination."""
    lexicon = lexicon or default_lexicon()
    for relation, templates in lexicon.templates.items():
        for ti in range(len(templates)):
            if needs_object(relation):
                for key, syns in lexicon.synonyms.items():
                    for si in range(len(syns)):
                        text = render_instruction(relation, key, lexicon, ti, si)
                        yield text, Intent(relation=relation, object_ref=key)
            else:
                yield render_instruction(relation, None, lexicon, ti), Intent(relation=relation)
