import math
from dataclasses import dataclass

import numpy as np
import pytest

from langsteer.costmap import CorrectionKind, FIXED_HIGH_COST
from langsteer.grounding import (AmbiguousObjectError, GOAL_COST_CEIL, Intent,
                                 ParseError, Relation, UnknownObjectError,
                                 classify, default_lexicon, goal_point, ground,
                                 iter_template_product, parse, path_label,
                                 render_instruction, resolve_object)
from langsteer.world import (GridSpec, ObjectInstance, RobotState,
                             make_environment, object_type)


@dataclass(frozen=True)
class StubObject:
    footprint: tuple
    center: tuple


def test_parse_spec_examples():
    assert parse("go to the left of the cheezit box") == Intent(Relation.LEFT_OF, "cheezit")
    assert parse("go slower") == Intent(Relation.SLOWER)
    assert parse("stay away from the mustard") == Intent(Relation.STAY_AWAY, "mustard")


def test_parse_unparseable():
    with pytest.raises(ParseError) as e:
        parse("flurb the wug")
    assert e.value.span


def test_parse_directional_vs_object_relation():
    assert parse("go left") == Intent(Relation.LEFT)
    assert parse("go left of the bleach") == Intent(Relation.LEFT_OF, "bleach")
    assert parse("speed up") == Intent(Relation.FASTER)
    assert parse("go up") == Intent(Relation.UP)


def test_parse_unknown_object_carries_span():
    intent = parse("go above the banana")
    assert intent.relation is Relation.ABOVE
    assert intent.object_ref == "banana"


def test_parse_roundtrip_over_full_template_product():
    lex = default_lexicon()
    n = 0
    for text, intent in iter_template_product(lex):
        assert parse(text, lex) == intent, text
        n += 1
    assert n > 100


def test_intent_invariants():
    with pytest.raises(ValueError):
        Intent(Relation.ABOVE)  # needs an object
    with pytest.raises(ValueError):
        Intent(Relation.FASTER, "spam")  # must not carry one


def test_resolve_object(env):
    present = {object_type(o.type_id).name for o in env.objects}
    key = next(iter(present))
    intent = Intent(Relation.STAY_AWAY, key)
    obj = resolve_object(intent, env)
    assert object_type(obj.type_id).name == key
    with pytest.raises(UnknownObjectError):
        resolve_object(Intent(Relation.STAY_AWAY, "banana"), env)
    absent = [t.name for t in (object_type(i) for i in range(4)) if t.name not in present]
    if absent:
        with pytest.raises(UnknownObjectError):
            resolve_object(Intent(Relation.STAY_AWAY, absent[0]), env)


def test_resolve_ambiguous(spec):
    twins = make_environment("twins", 0, spec, (
        ObjectInstance(2, (500.0, 500.0), 0),
        ObjectInstance(2, (1500.0, 1500.0), 0),
    ))
    with pytest.raises(AmbiguousObjectError):
        resolve_object(Intent(Relation.STAY_AWAY, "spam"), twins)


def test_goal_point_edge_arithmetic(empty_env):
    obj = StubObject(footprint=(100.0, 300.0, 200.0, 400.0), center=(150.0, 350.0))
    assert goal_point(Relation.LEFT_OF, obj, (0.0, 0.0), empty_env) == (80.0, 350.0)
    assert goal_point(Relation.RIGHT_OF, obj, (0.0, 0.0), empty_env) == (220.0, 350.0)
    assert goal_point(Relation.ABOVE, obj, (0.0, 0.0), empty_env) == (150.0, 280.0)
    assert goal_point(Relation.BELOW, obj, (0.0, 0.0), empty_env) == (150.0, 420.0)


def test_goal_point_ray_relations(empty_env):
    obj = StubObject(footprint=(1000.0, 900.0, 1200.0, 1100.0), center=(1100.0, 1000.0))
    robot = (500.0, 1000.0)  # directly left of the object
    front = goal_point(Relation.IN_FRONT_OF, obj, robot, empty_env)
    assert front == pytest.approx((980.0, 1000.0))
    assert robot[0] < front[0] < 1000.0
    behind = goal_point(Relation.BEHIND, obj, robot, empty_env)
    assert behind == pytest.approx((1220.0, 1000.0))


def test_goal_point_directional(empty_env):
    p = goal_point(Relation.UP, None, (1000.0, 1000.0), empty_env)
    assert p == (1000.0, 850.0)
    clipped = goal_point(Relation.LEFT, None, (50.0, 1000.0), empty_env)
    assert clipped[0] == 20.0


def test_goal_point_projects_out_of_collision(boxed_env):
    obj = boxed_env.objects[0]
    x0, y0, x1, y1 = obj.footprint
    stub = StubObject(footprint=(x0, y0, x1 + 60.0, y1), center=obj.center)
    # "left of" the widened stub lands inside the real footprint; must project free
    p = goal_point(Relation.LEFT_OF, stub, (0.0, 0.0), boxed_env)
    from langsteer.world import collision
    assert not collision(p, boxed_env)


def test_ground_velocity(env):
    state = RobotState(q=(100.0, 100.0))
    gc = ground(Intent(Relation.SLOWER), env, state)
    assert gc.kind is CorrectionKind.CONSTRAINT
    assert (gc.cost.velocity == 1).all()
    assert (gc.cost.position == 0).all()
    assert gc.mask.is_all_ones()
    faster = ground(Intent(Relation.FASTER), env, state)
    assert (faster.cost.velocity == 0).all()


def test_ground_stay_away(env):
    obj = env.objects[0]
    key = object_type(obj.type_id).name
    gc = ground(Intent(Relation.STAY_AWAY, key), env, RobotState(q=(100.0, 100.0)))
    assert gc.kind is CorrectionKind.CONSTRAINT
    assert gc.mask.is_all_ones()
    pos = gc.cost.position
    cy, cx = env.spec.cell_of(obj.center)
    assert pos[cy, cx] == pos.max() == 255.0
    # strictly decreasing in distance to the center
    X, Y = env.spec.cell_centers()
    d = np.hypot(X - obj.center[0], Y - obj.center[1]).ravel()
    v = pos.ravel()
    order = np.argsort(d)
    dv = np.diff(v[order])
    dd = np.diff(d[order])
    assert (dv[dd > 0] < 0).all()
    assert (np.abs(dv[dd == 0]) < 1e-9).all()


def _first_object_goal(env):
    obj = env.objects[0]
    return object_type(obj.type_id).name


def test_ground_goal_tube(env):
    key = _first_object_goal(env)
    state = RobotState(q=(60.0, 60.0))
    gc = ground(Intent(Relation.ABOVE, key), env, state, source_text="go above it")
    assert gc.kind is CorrectionKind.GOAL
    assert gc.goal_point is not None
    assert not gc.mask.is_all_ones()
    assert classify(gc) is CorrectionKind.GOAL
    pos = gc.cost.position

    # every off-mask cell sits at the fixed high cost; all values in range
    off = gc.mask.grid == 0
    assert (pos[off] == FIXED_HIGH_COST).all()
    assert pos.min() >= 0.0 and pos.max() <= 255.0

    # terminal cell holds the global minimum 0 and contains the goal point
    gy, gx = env.spec.cell_of(gc.goal_point)
    assert pos[gy, gx] == 0.0

    # mask forms a single connected tube containing robot and goal cells
    from scipy import ndimage
    labels, n = ndimage.label(gc.mask.grid, structure=np.ones((3, 3)))
    assert n == 1
    sy, sx = env.spec.cell_of(state.q)
    assert gc.mask.grid[sy, sx] == 1 and gc.mask.grid[gy, gx] == 1


def test_ground_goal_costs_decrease_along_path(env):
    from langsteer.planner import shortest_path
    key = _first_object_goal(env)
    state = RobotState(q=(60.0, 60.0))
    gc = ground(Intent(Relation.ABOVE, key), env, state)
    path = shortest_path(env, state.q, gc.goal_point)
    costs = [gc.cost.position[env.spec.cell_of(p)] for p in path]
    assert costs[-1] == 0.0
    assert all(a > b for a, b in zip(costs, costs[1:]))
    assert costs[0] == GOAL_COST_CEIL


def test_ground_deterministic(env):
    key = _first_object_goal(env)
    state = RobotState(q=(60.0, 60.0))
    a = ground(Intent(Relation.BELOW, key), env, state)
    b = ground(Intent(Relation.BELOW, key), env, state)
    assert np.array_equal(a.cost.position, b.cost.position)
    assert np.array_equal(a.mask.grid, b.mask.grid)
    assert a.goal_point == b.goal_point and a.arc_length == b.arc_length


def test_path_label_hand_example():
    spec = GridSpec()
    pts = [(100.0, 100.0), (110.0, 100.0), (130.0, 100.0)]  # segments 10 and 20 px
    cost, mask, arc = path_label(pts, spec)
    assert arc == 30.0
    c0 = cost.position[spec.cell_of(pts[0])]
    c1 = cost.position[spec.cell_of(pts[1])]
    c2 = cost.position[spec.cell_of(pts[2])]
    assert c0 == pytest.approx(229.0)
    assert c1 == pytest.approx(20.0 / 30.0 * 229.0)  # 152.67
    assert c2 == 0.0
    assert (cost.velocity == 2).all()
    assert mask.grid[spec.cell_of(pts[0])] == 1


def test_path_label_single_point():
    spec = GridSpec()
    cost, mask, arc = path_label([(512.0, 512.0)], spec)
    assert arc == 0.0
    assert cost.position[spec.cell_of((512.0, 512.0))] == 0.0
    assert mask.grid.sum() > 1  # tube inflation around the single cell


def test_render_instruction_variants():
    lex = default_lexicon()
    assert render_instruction(Relation.ABOVE, "cheezit", lex) == "go above the cheezit box"
    assert render_instruction(Relation.SLOWER, None, lex) == "go slower"
    alt = render_instruction(Relation.ABOVE, "cheezit", lex, template_index=1, synonym_index=1)
    assert "cheezit" in alt and alt != "go above the cheezit box"
