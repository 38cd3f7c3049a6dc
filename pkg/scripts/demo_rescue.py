#!/usr/bin/env python3
"""Watch the scripted user rescue one stuck episode, tick by tick.

Finds the first hard task in a small corpus, replays it with a
single-correction budget, and logs the stuck detection, the emitted
waypoint instruction, the epsilon reactivation, and the outcome.

    python3 scripts/demo_rescue.py --envs 8
"""

import argparse

from langsteer.controller import (ScriptedUser, SessionStatus, create_session,
                                  submit_correction, tick)
from langsteer.dataset import episode_seed, generate_corpus
from langsteer.world import Task


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--envs", type=int, default=8)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--budget", type=int, default=1)
    ap.add_argument("--workers", type=int, default=None)
    args = ap.parse_args()

    corpus = generate_corpus(n_envs=args.envs, seed=args.seed, workers=args.workers)
    if not corpus.split.hard:
        print("no hard tasks mined; try more environments")
        return 1
    env_id, task_index = corpus.split.hard[0]
    t = corpus.envs[env_id].tasks[task_index]
    env = corpus.envs[env_id].env
    seed = episode_seed(corpus.seed, corpus.env_order.index(env_id), t.index)
    print(f"{env_id} task {t.index}: start {tuple(round(v) for v in t.start)} "
          f"-> goal {tuple(round(v) for v in t.goal)}  ({t.instruction!r})")

    session = create_session(env, Task(start=t.start, goal=t.goal), seed=seed,
                             planner_cfg=corpus.planner_cfg,
                             base_cfg=corpus.base_cfg, weights=corpus.weights,
                             codes=corpus.codes, ctrl_cfg=corpus.ctrl_cfg)
    user = ScriptedUser(budget=args.budget)
    reactivations = 0
    while session.status is SessionStatus.RUNNING:
        text = user(session)
        if text:
            submit_correction(session, text)
            q = tuple(round(v) for v in session.state.q)
            print(f"[tick {session.tick_count}] stuck at {q}; user says: {text!r}")
        tick(session)
        if len(session.reactivation_ticks) > reactivations:
            reactivations = len(session.reactivation_ticks)
            print(f"[tick {session.tick_count}] language goal reached; "
                  f"task cost reactivated")
        if session.tick_count % 100 == 0:
            q = tuple(round(v) for v in session.state.q)
            print(f"[tick {session.tick_count}] q={q} "
                  f"constraints={len(session.stack.constraints)} "
                  f"goal_mode={session.stack.active_language_goal is not None}")
    print(f"outcome: {session.status.value} after {session.tick_count} ticks")
    return 0 if session.status is SessionStatus.SUCCESS else 2


if __name__ == "__main__":
    raise SystemExit(main())
