#!/usr/bin/env python3
"""Mine a few environments where the bare planner fails and render them as
ASCII maps with the failed trajectory, the start (S), and the goal (G).

    python3 scripts/show_hard_scenes.py --envs 10 --limit 4
"""

import argparse

from langsteer.controller import run_episode
from langsteer.dataset import episode_seed, generate_corpus
from langsteer.world import Task, object_type


def ascii_scene(env, trajectory, start, goal, side=60):
    sx = env.spec.world_width / side
    sy = env.spec.world_height / side
    grid = [[" "] * side for _ in range(side)]
    for o in env.objects:
        x0, y0, x1, y1 = o.footprint
        for yy in range(max(int(y0 / sy), 0), min(int(y1 / sy) + 1, side)):
            for xx in range(max(int(x0 / sx), 0), min(int(x1 / sx) + 1, side)):
                grid[yy][xx] = "#"
    for s in trajectory:
        x, y = int(s.q[0] / sx), int(s.q[1] / sy)
        if 0 <= x < side and 0 <= y < side and grid[y][x] == " ":
            grid[y][x] = "."
    grid[int(start[1] / sy)][int(start[0] / sx)] = "S"
    grid[int(goal[1] / sy)][int(goal[0] / sx)] = "G"
    return "\n".join("".join(row).rstrip() for row in grid if "".join(row).strip())


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--envs", type=int, default=10)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--limit", type=int, default=4)
    ap.add_argument("--workers", type=int, default=None)
    args = ap.parse_args()

    corpus = generate_corpus(n_envs=args.envs, seed=args.seed, workers=args.workers)
    hard = list(corpus.split.hard)
    print(f"{len(hard)} hard tasks out of {corpus.stats['n_tasks']} "
          f"(failure rate {corpus.stats['failure_rate']:.3f})\n")
    shown = 0
    for env_id, task_index in hard:
        if shown >= args.limit:
            break
        t = corpus.envs[env_id].tasks[task_index]
        env = corpus.envs[env_id].env
        seed = episode_seed(corpus.seed, corpus.env_order.index(env_id), t.index)
        result = run_episode(env, Task(start=t.start, goal=t.goal), None, seed,
                             corpus.planner_cfg, corpus.base_cfg, corpus.weights,
                             corpus.codes, corpus.ctrl_cfg)
        names = ", ".join(object_type(o.type_id).name for o in env.objects)
        print(f"--- {env_id} task {t.index}: {t.instruction!r}  [{names}] "
              f"stuck after {result.ticks} ticks ---")
        print(ascii_scene(env, result.trajectory, t.start, t.goal))
        print()
        shown += 1
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
