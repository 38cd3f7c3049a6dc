"""Command-line entry: corpus generation, evaluation, episodes, grounding, server."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import dataset, evaluation
from .config import AppConfig, load_config
from .controller import (ScriptedUser, SessionStatus, create_session,
                         submit_correction, tick)
from .grounding import CorrectionError, ground, parse
from .world import RobotState, Task, generate_environment, sample_starts


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON config file overriding defaults")
    p.add_argument("--seed", type=int, default=0)


def _config(args) -> AppConfig:
    overrides = {}
    if getattr(args, "particles", None):
        overrides.setdefault("planner", {})["particles"] = args.particles
    if getattr(args, "horizon", None):
        overrides.setdefault("planner", {})["horizon"] = args.horizon
    return load_config(args.config, overrides)


def cmd_gen(args) -> int:
    cfg = _config(args)
    corpus = dataset.generate_corpus(
        n_envs=args.envs, seed=args.seed, starts_per_env=args.starts,
        planner_cfg=cfg.planner, base_cfg=cfg.base_cost, weights=cfg.weights,
        codes=cfg.codes, ctrl_cfg=cfg.controller, spec=cfg.grid,
        workers=args.workers)
    summary = {"envs": args.envs, "seed": args.seed, **corpus.stats}
    if args.out:
        dataset.serialize(corpus, args.out)
        summary["out"] = str(args.out)
    print(json.dumps(summary, indent=2, sort_keys=True))
    return 0


def _corpus_for_eval(args):
    if args.corpus:
        return dataset.deserialize(args.corpus)
    cfg = _config(args)
    return dataset.generate_corpus(
        n_envs=args.envs, seed=args.seed, starts_per_env=args.starts,
        planner_cfg=cfg.planner, base_cfg=cfg.base_cost, weights=cfg.weights,
        codes=cfg.codes, ctrl_cfg=cfg.controller, spec=cfg.grid,
        workers=args.workers)


def cmd_eval(args) -> int:
    corpus = _corpus_for_eval(args)
    ev = evaluation.EvalConfig()
    if args.which == "all":
        report = evaluation.run_all(corpus, ev, workers=args.workers)
        print(evaluation.format_report(report))
        if args.out:
            Path(args.out).write_text(report.to_json())
            print(f"\nreport written to {args.out}")
        return 0
    if args.which == "baseline":
        out = evaluation.eval_baseline(corpus, workers=args.workers)
    elif args.which == "rescue":
        out = {f"budget_{b}": evaluation.eval_rescue(corpus, b, args.workers)
               for b in (1, 2)}
    elif args.which == "goal":
        out = evaluation.eval_goal_as_language(corpus, ev, args.workers)
    else:
        out = evaluation.eval_constraints(corpus, ev, args.workers)
    print(json.dumps(out, indent=2, sort_keys=True))
    return 0


def _read_corrections(stream) -> list[tuple[int | None, str]]:
    """Lines are either '@TICK text' (submit at that tick) or bare text
    (submit when the robot looks stuck)."""
    scripted = []
    for line in stream:
        line = line.strip()
        if not line:
            continue
        if line.startswith("@"):
            tick_str, _, text = line[1:].partition(" ")
            scripted.append((int(tick_str), text.strip()))
        else:
            scripted.append((None, line))
    return scripted


def cmd_run(args) -> int:
    cfg = _config(args)
    env = generate_environment(args.env_seed, cfg.grid)
    if args.start:
        start = tuple(float(v) for v in args.start.split(","))
    else:
        start = sample_starts(env, 1, seed=args.seed)[0]
    if args.goal:
        goal = tuple(float(v) for v in args.goal.split(","))
    else:
        goals = dataset.enumerate_goals(env)
        if not goals:
            print("no valid goals in this environment", file=sys.stderr)
            return 1
        goal = goals[0][0]
    scripted = [] if sys.stdin.isatty() else _read_corrections(sys.stdin)

    session = create_session(env, Task(start=start, goal=goal,
                                       max_steps=args.max_steps),
                             seed=args.seed, planner_cfg=cfg.planner,
                             base_cfg=cfg.base_cost, weights=cfg.weights,
                             codes=cfg.codes, ctrl_cfg=cfg.controller)
    stuck_user = ScriptedUser(budget=0)  # reuse its stuck detector only
    pending = list(scripted)
    while session.status is SessionStatus.RUNNING:
        for i, (at_tick, text) in enumerate(list(pending)):
            fire = (at_tick is not None and session.tick_count >= at_tick)
            if at_tick is None and _looks_stuck(session):
                fire = True
            if fire:
                pending.pop(i)
                try:
                    submit_correction(session, text)
                    print(f"[tick {session.tick_count}] submitted: {text}")
                except CorrectionError as e:
                    print(f"[tick {session.tick_count}] rejected {text!r}: {e}")
                break
        tick(session)
    result = {
        "status": session.status.value,
        "ticks": session.tick_count,
        "final_q": list(session.state.q),
        "corrections": [{"text": r.text, "applied_tick": r.applied_tick,
                         "kind": r.kind.value if r.kind else None,
                         "error": r.error} for r in session.corrections],
    }
    print(json.dumps(result, indent=2, sort_keys=True))
    return 0 if session.status is SessionStatus.SUCCESS else 2


def _looks_stuck(session) -> bool:
    w = session.cfg.stuck_window
    if session.tick_count < w:
        return False
    q = session.state.q
    then = session.trajectory[session.tick_count - w].q
    return (q[0] - then[0]) ** 2 + (q[1] - then[1]) ** 2 < session.cfg.stuck_displacement ** 2


def cmd_ground(args) -> int:
    cfg = _config(args)
    env = generate_environment(args.env_seed, cfg.grid)
    if args.state:
        q = tuple(float(v) for v in args.state.split(","))
    else:
        q = sample_starts(env, 1, seed=args.seed)[0]
    try:
        intent = parse(args.instruction)
        gc = ground(intent, env, RobotState(q=q), codes=cfg.codes,
                    source_text=args.instruction)
    except CorrectionError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    pos = gc.cost.position
    iy, ix = np.unravel_index(int(np.argmax(pos)), pos.shape)
    out = {
        "instruction": args.instruction,
        "relation": intent.relation.value,
        "object": intent.object_ref,
        "kind": gc.kind.value,
        "robot_state": list(q),
        "goal_point": list(gc.goal_point) if gc.goal_point else None,
        "arc_length_px": gc.arc_length,
        "mask_cells": int(gc.mask.grid.sum()),
        "mask_all_ones": gc.mask.is_all_ones(),
        "cost_min": float(pos.min()),
        "cost_max": float(pos.max()),
        "argmax_cell": [int(iy), int(ix)],
        "argmax_cell_center": list(env.spec.cell_center(int(iy), int(ix))),
        "velocity_codes_present": sorted(int(v) for v in np.unique(gc.cost.velocity)),
    }
    for o in env.objects:
        out.setdefault("objects", []).append(
            {"type": o.type_id, "center": list(o.center),
             "center_cell": list(env.spec.cell_of(o.center))})
    print(json.dumps(out, indent=2, sort_keys=True))
    return 0


def cmd_serve(args) -> int:
    from .service import serve
    host, _, port = args.bind.rpartition(":")
    cfg = _config(args)
    serve(host or "127.0.0.1", int(port), cfg, rate_hz=args.rate)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="langsteer",
                                description="language-corrected 2D motion planning")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a corpus (envs, tasks, demos, hard set)")
    _add_common(g)
    g.add_argument("--envs", type=int, default=100)
    g.add_argument("--starts", type=int, default=10)
    g.add_argument("--out", help="directory to write the corpus")
    g.add_argument("--workers", type=int, default=None)
    g.set_defaults(fn=cmd_gen)

    e = sub.add_parser("eval", help="run the experiment tables")
    _add_common(e)
    e.add_argument("--corpus", help="corpus directory from `gen --out`")
    e.add_argument("--envs", type=int, default=100)
    e.add_argument("--starts", type=int, default=10)
    e.add_argument("--which", choices=("all", "baseline", "rescue", "goal",
                                       "constraints"), default="all")
    e.add_argument("--out", help="write the JSON report here")
    e.add_argument("--workers", type=int, default=None)
    e.set_defaults(fn=cmd_eval)

    r = sub.add_parser("run", help="single episode; corrections read from stdin")
    _add_common(r)
    r.add_argument("--env-seed", type=int, default=0)
    r.add_argument("--start", help="x,y in px")
    r.add_argument("--goal", help="x,y in px")
    r.add_argument("--max-steps", type=int, default=500)
    r.add_argument("--particles", type=int)
    r.add_argument("--horizon", type=int)
    r.set_defaults(fn=cmd_run)

    gr = sub.add_parser("ground", help="ground one instruction and print map stats")
    _add_common(gr)
    gr.add_argument("--env-seed", type=int, default=0)
    gr.add_argument("--instruction", required=True)
    gr.add_argument("--state", help="x,y in px")
    gr.set_defaults(fn=cmd_ground)

    s = sub.add_parser("serve", help="session server for the console")
    _add_common(s)
    s.add_argument("--bind", default="127.0.0.1:8750")
    s.add_argument("--rate", type=float, default=10.0)
    s.set_defaults(fn=cmd_serve)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.fn(args)


if __name__ == "__main__":
    sys.exit(main())
