"""Session loop: accept corrections mid-run, maintain the cost stack, plan, step.

A correction is parsed and resolved when submitted, then grounded at the next
tick boundary against the then-current state. Constraints accumulate
permanently; a goal correction deactivates the task cost until its map cost at
the robot's cell drops below epsilon, at which point the task cost reactivates.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import grounding as gr
from .costmap import (BaseCostConfig, CorrectionKind, CostStack, CostWeights,
                      DEFAULT_VELOCITY_CODES, FIXED_HIGH_COST, VelocityCodes,
                      language_goal_cost_at)
from .grounding import (CorrectionError, Lexicon, default_lexicon,
                        needs_object, render_instruction)
from .planner import Planner, PlannerConfig, PathError, shortest_path
from .world import Environment, RobotState, Task, object_type, step_dynamics


class SessionStatus(Enum):
    RUNNING = "running"
    SUCCESS = "success"
    FAILURE = "failure"   # hit the tick budget
    ERROR = "error"       # reserved for unrecoverable session faults


@dataclass(frozen=True)
class ControllerConfig:
    goal_radius: float = 20.0        # px; success threshold
    stuck_window: int = 50           # ticks the scripted user looks back
    stuck_displacement: float = 15.0  # px; below this over the window = stuck
    keep_task_cost_during_language_goal: bool = False
    waypoint_tolerance: float = 40.0  # px; waypoint-to-oracle-path distance


@dataclass
class CorrectionRecord:
    text: str
    submitted_tick: int
    applied_tick: int | None = None
    kind: CorrectionKind | None = None
    error: str | None = None


@dataclass
class Session:
    env: Environment
    task: Task
    planner: Planner
    stack: CostStack
    state: RobotState
    cfg: ControllerConfig
    lexicon: Lexicon
    use_task_cost: bool
    tick_count: int = 0
    status: SessionStatus = SessionStatus.RUNNING
    trajectory: list[RobotState] = field(default_factory=list)
    pending: deque = field(default_factory=deque)
    corrections: list[CorrectionRecord] = field(default_factory=list)
    epsilon_cost: float = math.inf
    last_goal_point: tuple[float, float] | None = None
    reactivation_ticks: list[int] = field(default_factory=list)


def create_session(env: Environment, task: Task, seed: int = 0,
                   planner_cfg: PlannerConfig = PlannerConfig(),
                   base_cfg: BaseCostConfig = BaseCostConfig(),
                   weights: CostWeights = CostWeights(),
                   codes: VelocityCodes = DEFAULT_VELOCITY_CODES,
                   ctrl_cfg: ControllerConfig = ControllerConfig(),
                   lexicon: Lexicon | None = None,
                   use_task_cost: bool = True) -> Session:
    stack = CostStack(spec=env.spec, base=base_cfg, weights=weights, codes=codes,
                      task_goal=task.goal if use_task_cost else None)
    state = RobotState(q=task.start)
    return Session(env=env, task=task,
                   planner=Planner(planner_cfg, rng=np.random.default_rng(seed)),
                   stack=stack, state=state, cfg=ctrl_cfg,
                   lexicon=lexicon or default_lexicon(),
                   use_task_cost=use_task_cost,
                   trajectory=[state])


def submit_correction(session: Session, text: str) -> CorrectionRecord:
    """Parse and resolve now; enqueue for grounding at the next tick boundary.

    Parse and resolution errors raise CorrectionError and leave the session
    untouched.
    """
    if session.status is not SessionStatus.RUNNING:
        raise CorrectionError("session is not running")
    intent = gr.parse(text, session.lexicon)
    if needs_object(intent.relation):
        gr.resolve_object(intent, session.env, session.lexicon)
    record = CorrectionRecord(text=text, submitted_tick=session.tick_count)
    session.pending.append((record, intent))
    session.corrections.append(record)
    return record


def _drain_one(session: Session) -> None:
    if not session.pending:
        return
    record, intent = session.pending.popleft()
    try:
        gc = gr.ground(intent, session.env, session.state, session.lexicon,
                       session.stack.codes, source_text=record.text)
    except CorrectionError as e:
        record.error = str(e)
        return
    record.applied_tick = session.tick_count
    record.kind = gc.kind
    if gc.kind is CorrectionKind.CONSTRAINT:
        session.stack.add_constraint(gc)
    else:
        session.stack.set_language_goal(gc)
        session.stack.task_cost_active = session.cfg.keep_task_cost_during_language_goal
        session.last_goal_point = gc.goal_point
        arc = gc.arc_length or 0.0
        session.epsilon_cost = (FIXED_HIGH_COST * session.cfg.goal_radius / arc
                                if arc > 0 else math.inf)


def _maybe_reactivate(session: Session) -> None:
    gc = session.stack.active_language_goal
    if gc is None:
        return
    cell = session.stack.spec.cell_of(session.state.q)
    if language_goal_cost_at(gc, cell) < session.epsilon_cost:
        session.stack.clear_language_goal()
        session.stack.task_cost_active = True
        session.epsilon_cost = math.inf
        session.reactivation_ticks.append(session.tick_count)


def _success_target(session: Session) -> tuple[float, float] | None:
    if session.use_task_cost:
        return session.task.goal
    return session.last_goal_point


def tick(session: Session) -> SessionStatus:
    """One control tick: drain a correction, check epsilon, plan, step."""
    if session.status is not SessionStatus.RUNNING:
        return session.status
    _drain_one(session)
    _maybe_reactivate(session)
    accel = session.planner.plan_step(session.state, session.stack, session.env)
    session.state = step_dynamics(session.state, accel, session.env.spec)
    session.trajectory.append(session.state)
    session.tick_count += 1

    target = _success_target(session)
    if target is not None and math.hypot(session.state.q[0] - target[0],
                                         session.state.q[1] - target[1]) <= session.cfg.goal_radius:
        session.status = SessionStatus.SUCCESS
    elif session.tick_count >= session.task.max_steps:
        session.status = SessionStatus.FAILURE
    return session.status


@dataclass
class EpisodeResult:
    status: SessionStatus
    ticks: int
    trajectory: list[RobotState]
    corrections: list[CorrectionRecord]
    final_distance: float
    reactivation_ticks: list[int]


def run_episode(env: Environment, task: Task, correction_policy=None, seed: int = 0,
                planner_cfg: PlannerConfig = PlannerConfig(),
                base_cfg: BaseCostConfig = BaseCostConfig(),
                weights: CostWeights = CostWeights(),
                codes: VelocityCodes = DEFAULT_VELOCITY_CODES,
                ctrl_cfg: ControllerConfig = ControllerConfig(),
                lexicon: Lexicon | None = None,
                use_task_cost: bool = True) -> EpisodeResult:
    """Drive a session to a terminal status.

    ``correction_policy`` is called before every tick with the session and may
    return a correction string to submit (None to stay silent).
    """
    session = create_session(env, task, seed, planner_cfg, base_cfg, weights,
                             codes, ctrl_cfg, lexicon, use_task_cost)
    while session.status is SessionStatus.RUNNING:
        if correction_policy is not None:
            text = correction_policy(session)
            if text:
                try:
                    submit_correction(session, text)
                except CorrectionError:
                    pass  # policy offered something ungroundable; keep driving
        tick(session)
    target = _success_target(session)
    final_distance = (math.hypot(session.state.q[0] - target[0],
                                 session.state.q[1] - target[1])
                      if target is not None else math.inf)
    return EpisodeResult(status=session.status, ticks=session.tick_count,
                         trajectory=session.trajectory,
                         corrections=session.corrections,
                         final_distance=final_distance,
                         reactivation_ticks=session.reactivation_ticks)


class ScriptedUser:
    """Stands in for the human: fires a templated waypoint correction when stuck.

    When the robot has barely moved over the lookback window, compute the
    oracle path to the true goal and name the farthest waypoint along it that a
    template can express; fall back to a bare directional hop along the path's
    initial heading. Issues at most ``budget`` corrections per episode.
    """

    def __init__(self, budget: int = 1, lexicon: Lexicon | None = None):
        self.budget = budget
        self.lexicon = lexicon or default_lexicon()
        self.issued = 0
        self.last_issue_tick: int | None = None

    def __call__(self, session: Session) -> str | None:
        if session.status is not SessionStatus.RUNNING or self.issued >= self.budget:
            return None
        cfg = session.cfg
        t = session.tick_count
        if t < cfg.stuck_window:
            return None
        if self.last_issue_tick is not None and t - self.last_issue_tick < cfg.stuck_window:
            return None
        q = session.state.q
        then = session.trajectory[t - cfg.stuck_window].q
        if math.hypot(q[0] - then[0], q[1] - then[1]) >= cfg.stuck_displacement:
            return None
        goal = session.task.goal
        if math.hypot(q[0] - goal[0], q[1] - goal[1]) <= cfg.goal_radius:
            return None
        try:
            path = shortest_path(session.env, q, goal)
        except PathError:
            return None
        if path is None:
            return None
        text = self._choose_correction(session, path)
        if text is not None:
            self.issued += 1
            self.last_issue_tick = t
        return text

    def _choose_correction(self, session: Session, path) -> str | None:
        env = session.env
        pts = np.asarray(path)
        type_counts: dict[int, int] = {}
        for o in env.objects:
            type_counts[o.type_id] = type_counts.get(o.type_id, 0) + 1

        best: tuple[int, gr.Relation, str] | None = None
        for obj in env.objects:
            if type_counts[obj.type_id] > 1:
                continue  # the template could not single it out
            key = object_type(obj.type_id).name
            for rel in gr.WAYPOINT_RELATIONS:
                p = gr.goal_point(rel, obj, session.state.q, env)
                d = np.hypot(pts[:, 0] - p[0], pts[:, 1] - p[1])
                idx = int(np.argmin(d))
                if d[idx] <= session.cfg.waypoint_tolerance and idx > 0:
                    if best is None or idx > best[0]:
                        best = (idx, rel, key)
        if best is not None:
            return render_instruction(best[1], best[2], self.lexicon)

        # Directional fallback along the path's initial heading.
        arc = 0.0
        idx = len(path) - 1
        for i in range(1, len(path)):
            arc += math.hypot(path[i][0] - path[i - 1][0], path[i][1] - path[i - 1][1])
            if arc >= gr.DIRECTIONAL_OFFSET:
                idx = i
                break
        dx = path[idx][0] - path[0][0]
        dy = path[idx][1] - path[0][1]
        if dx == 0.0 and dy == 0.0:
            return None
        if abs(dx) >= abs(dy):
            rel = gr.Relation.RIGHT if dx > 0 else gr.Relation.LEFT
        else:
            rel = gr.Relation.DOWN if dy > 0 else gr.Relation.UP
        return render_instruction(rel, None, self.lexicon)
