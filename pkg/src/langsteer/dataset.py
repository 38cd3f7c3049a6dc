"""Corpus generation: scenes, tasks, baseline demos, hard-set mining, storage.

Every environment gets 10 sampled starts and one goal per valid object-edge
offset point, each goal paired with a templated instruction. The baseline
planner runs on every (start, goal) task; successes become demo records
labeled with remaining-arc-length costs, failures join the hard set.

On disk a corpus is a JSON manifest plus one binary record file per
environment; grids are stored row-major as unsigned bytes (cost channels) and
packed bits (masks), each blob behind a fixed 8-field header.
"""

from __future__ import annotations

import json
import math
import struct
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage

from .controller import ControllerConfig, run_episode
from .costmap import (BaseCostConfig, CostMap, CostWeights,
                      DEFAULT_VELOCITY_CODES, Mask, VelocityCodes)
from .grounding import (EDGE_RELATIONS, Intent, Relation, default_lexicon,
                        ground, path_label, render_instruction)
from .planner import PlannerConfig
from .world import (Environment, GridSpec, ObjectInstance, RobotState, Task,
                    collision, generate_environment, make_environment,
                    object_type, sample_starts)

FORMAT_VERSION = 1
_FILE_MAGIC = 0x4C53_4446  # "LSDF"
_BLOB_MAGIC = 0x4C53_4442  # "LSDB"
_HEADER = struct.Struct("<8I")

BLOB_POSITION = 0
BLOB_VELOCITY = 1
BLOB_MASK = 2
BLOB_TRAJECTORY = 3

ENC_U8 = 0
ENC_BITS = 1
ENC_F64 = 2

ORIGIN_DEMO = "demo"
ORIGIN_SPECIFIED = "specified"


class CorpusFormatError(Exception):
    pass


@dataclass
class TaskRecord:
    index: int
    start: tuple[float, float]
    goal: tuple[float, float]
    relation: str
    object_key: str
    instruction: str
    outcome: str = ""              # "success" | "failure"
    ticks: int = 0
    clearances: tuple[float, ...] = ()  # per scene object, min over the run


@dataclass
class DatasetRecord:
    cost: CostMap
    mask: Mask
    instruction: str
    observation_ref: str
    state: RobotState
    origin: str
    task_index: int | None = None


@dataclass
class EnvData:
    env: Environment
    starts: list[tuple[float, float]]
    tasks: list[TaskRecord]
    trajectories: dict = field(default_factory=dict)  # task index -> (n, 2) float64
    n_disconnected: int = 0


@dataclass(frozen=True)
class Split:
    train: tuple[str, ...]
    val: tuple[str, ...]
    test: tuple[str, ...]
    hard: tuple[tuple[str, int], ...]  # (env id, task index)


@dataclass
class Corpus:
    seed: int
    spec: GridSpec
    env_order: list[str]
    envs: dict[str, EnvData]
    split: Split
    planner_cfg: PlannerConfig
    base_cfg: BaseCostConfig
    weights: CostWeights
    ctrl_cfg: ControllerConfig
    codes: VelocityCodes
    lexicon_hash: str
    stats: dict

    def solvable_tasks(self):
        for env_id in self.env_order:
            for t in self.envs[env_id].tasks:
                if t.outcome == "success":
                    yield env_id, t

    def hard_tasks(self):
        for env_id, idx in self.split.hard:
            yield env_id, self.envs[env_id].tasks[idx]


def episode_seed(corpus_seed: int, env_index: int, task_index: int, purpose: int = 0) -> int:
    ss = np.random.SeedSequence((corpus_seed, env_index, task_index, purpose))
    return int(ss.generate_state(1)[0])


def label_demo(traj, goal: tuple[float, float], spec: GridSpec,
               codes: VelocityCodes = DEFAULT_VELOCITY_CODES,
               goal_radius: float = 20.0) -> tuple[CostMap, Mask]:
    """Label a demo trajectory with remaining-arc-length costs and a tube mask.

    The trajectory must be nonempty and end within the success radius of the
    goal it demonstrates.
    """
    pts = [(s.q[0], s.q[1]) if isinstance(s, RobotState) else (float(s[0]), float(s[1]))
           for s in traj]
    if not pts:
        raise ValueError("cannot label an empty trajectory")
    end = pts[-1]
    if math.hypot(end[0] - goal[0], end[1] - goal[1]) > goal_radius:
        raise ValueError("trajectory does not reach the goal it demonstrates")
    cost, mask, _ = path_label(pts, spec, codes)
    return cost, mask


def specified_map_records(env: Environment,
                          codes: VelocityCodes = DEFAULT_VELOCITY_CODES,
                          lexicon=None) -> list[DatasetRecord]:
    """Directly specified maps: one stay-away per object plus faster/slower."""
    lexicon = lexicon or default_lexicon()
    spec = env.spec
    state = RobotState(q=(spec.world_width / 2.0, spec.world_height / 2.0))
    records = []
    type_counts: dict[int, int] = {}
    for o in env.objects:
        type_counts[o.type_id] = type_counts.get(o.type_id, 0) + 1
    for o in env.objects:
        if type_counts[o.type_id] > 1:
            continue
        key = object_type(o.type_id).name
        text = render_instruction(Relation.STAY_AWAY, key, lexicon)
        gc = ground(Intent(Relation.STAY_AWAY, key), env, state, lexicon, codes, text)
        records.append(DatasetRecord(cost=gc.cost, mask=gc.mask, instruction=text,
                                     observation_ref=env.id, state=state,
                                     origin=ORIGIN_SPECIFIED))
    for rel in (Relation.FASTER, Relation.SLOWER):
        text = render_instruction(rel, None, lexicon)
        gc = ground(Intent(rel), env, state, lexicon, codes, text)
        records.append(DatasetRecord(cost=gc.cost, mask=gc.mask, instruction=text,
                                     observation_ref=env.id, state=state,
                                     origin=ORIGIN_SPECIFIED))
    return records


def iter_env_records(corpus: Corpus, env_id: str):
    """All records of one environment: specified maps first, then demos.

    Demo label grids are recomputed from the stored trajectories on the fly,
    keeping only one environment's grids in memory at a time.
    """
    data = corpus.envs[env_id]
    yield from specified_map_records(data.env, corpus.codes)
    for t in data.tasks:
        if t.outcome != "success":
            continue
        traj = data.trajectories[t.index]
        cost, mask = label_demo(traj, t.goal, corpus.spec, corpus.codes)
        yield DatasetRecord(cost=cost, mask=mask, instruction=t.instruction,
                            observation_ref=env_id, state=RobotState(q=t.start),
                            origin=ORIGIN_DEMO, task_index=t.index)


def enumerate_goals(env: Environment, lexicon=None, rng: np.random.Generator | None = None):
    """Valid edge-offset goals with templated instructions.

    A goal is valid when the offset point is inside the world, collision-free,
    and its cell is traversable. Objects whose type appears twice are skipped
    (no unambiguous template exists for them).
    """
    lexicon = lexicon or default_lexicon()
    rng = rng or np.random.default_rng(0)
    spec = env.spec
    type_counts: dict[int, int] = {}
    for o in env.objects:
        type_counts[o.type_id] = type_counts.get(o.type_id, 0) + 1
    goals = []
    for o in env.objects:
        if type_counts[o.type_id] > 1:
            continue
        key = object_type(o.type_id).name
        for rel in EDGE_RELATIONS:
            x0, y0, x1, y1 = o.footprint
            p = {Relation.ABOVE: ((x0 + x1) / 2, y0 - 20.0),
                 Relation.BELOW: ((x0 + x1) / 2, y1 + 20.0),
                 Relation.LEFT_OF: (x0 - 20.0, (y0 + y1) / 2),
                 Relation.RIGHT_OF: (x1 + 20.0, (y0 + y1) / 2)}[rel]
            if not (0 <= p[0] <= spec.world_width and 0 <= p[1] <= spec.world_height):
                continue
            if collision(p, env) or not env.traversable[spec.cell_of(p)]:
                continue
            text = render_instruction(rel, key, lexicon,
                                      template_index=int(rng.integers(0, 8)),
                                      synonym_index=int(rng.integers(0, 8)))
            goals.append((p, rel, key, text))
    return goals


def _build_env_tasks(corpus_seed: int, env_index: int, spec: GridSpec,
                     starts_per_env: int) -> EnvData:
    env_seed = corpus_seed * 1_000_000 + env_index
    env = generate_environment(env_seed, spec)
    starts = sample_starts(env, starts_per_env,
                           seed=episode_seed(corpus_seed, env_index, 0, purpose=1))
    goal_rng = np.random.default_rng(episode_seed(corpus_seed, env_index, 0, purpose=2))
    goals = enumerate_goals(env, rng=goal_rng)

    components, _ = ndimage.label(env.traversable)
    tasks = []
    n_disconnected = 0
    idx = 0
    for start in starts:
        start_comp = components[spec.cell_of(start)]
        for p, rel, key, text in goals:
            if components[spec.cell_of(p)] != start_comp:
                n_disconnected += 1
                continue
            tasks.append(TaskRecord(index=idx, start=start, goal=p,
                                    relation=rel.value, object_key=key,
                                    instruction=text))
            idx += 1
    return EnvData(env=env, starts=starts, tasks=tasks, n_disconnected=n_disconnected)


def _run_env_baseline(args) -> tuple[int, EnvData]:
    (corpus_seed, env_index, spec, starts_per_env,
     planner_cfg, base_cfg, weights, codes, ctrl_cfg) = args
    data = _build_env_tasks(corpus_seed, env_index, spec, starts_per_env)
    env = data.env
    rects = env.rects
    for t in data.tasks:
        seed = episode_seed(corpus_seed, env_index, t.index)
        result = run_episode(env, Task(start=t.start, goal=t.goal), None, seed,
                             planner_cfg, base_cfg, weights, codes, ctrl_cfg)
        t.outcome = "success" if result.status.value == "success" else "failure"
        t.ticks = result.ticks
        traj = np.array([s.q for s in result.trajectory])
        clear = []
        for x0, y0, x1, y1 in rects:
            dx = np.maximum(np.maximum(x0 - traj[:, 0], traj[:, 0] - x1), 0.0)
            dy = np.maximum(np.maximum(y0 - traj[:, 1], traj[:, 1] - y1), 0.0)
            clear.append(float(np.hypot(dx, dy).min()))
        t.clearances = tuple(clear)
        if t.outcome == "success":
            data.trajectories[t.index] = traj
    return env_index, data


def generate_corpus(n_envs: int = 100, seed: int = 0, starts_per_env: int = 10,
                    planner_cfg: PlannerConfig = PlannerConfig(),
                    base_cfg: BaseCostConfig = BaseCostConfig(),
                    weights: CostWeights = CostWeights(),
                    codes: VelocityCodes = DEFAULT_VELOCITY_CODES,
                    ctrl_cfg: ControllerConfig = ControllerConfig(),
                    spec: GridSpec = GridSpec(),
                    workers: int | None = None) -> Corpus:
    """Generate environments and tasks, run the baseline planner, mine failures.

    Deterministic given (n_envs, seed, configs); per-task seeds derive from the
    task identity so worker scheduling cannot change any outcome.
    """
    if n_envs < 1:
        raise ValueError("n_envs must be >= 1")
    jobs = [(seed, i, spec, starts_per_env, planner_cfg, base_cfg, weights,
             codes, ctrl_cfg) for i in range(n_envs)]
    results: dict[int, EnvData] = {}
    if workers is None or workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for env_index, data in pool.map(_run_env_baseline, jobs, chunksize=1):
                results[env_index] = data
    else:
        for job in jobs:
            env_index, data = _run_env_baseline(job)
            results[env_index] = data

    env_order = []
    envs: dict[str, EnvData] = {}
    hard: list[tuple[str, int]] = []
    n_tasks = n_success = n_disconnected = 0
    for i in range(n_envs):
        data = results[i]
        env_id = data.env.id
        env_order.append(env_id)
        envs[env_id] = data
        n_disconnected += data.n_disconnected
        for t in data.tasks:
            n_tasks += 1
            if t.outcome == "success":
                n_success += 1
            else:
                hard.append((env_id, t.index))

    shuffled = list(env_order)
    np.random.default_rng(np.random.SeedSequence((seed, 999))).shuffle(shuffled)
    n_train = int(0.7 * n_envs)
    n_val = int(0.15 * n_envs)
    split = Split(train=tuple(shuffled[:n_train]),
                  val=tuple(shuffled[n_train:n_train + n_val]),
                  test=tuple(shuffled[n_train + n_val:]),
                  hard=tuple(hard))
    stats = {
        "n_tasks": n_tasks,
        "n_success": n_success,
        "n_failure": n_tasks - n_success,
        "n_disconnected_skipped": n_disconnected,
        "failure_rate": (n_tasks - n_success) / n_tasks if n_tasks else 0.0,
    }
    return Corpus(seed=seed, spec=spec, env_order=env_order, envs=envs, split=split,
                  planner_cfg=planner_cfg, base_cfg=base_cfg, weights=weights,
                  ctrl_cfg=ctrl_cfg, codes=codes,
                  lexicon_hash=default_lexicon().sha256(), stats=stats)


def _write_blob(buf: bytearray, kind: int, grid: np.ndarray, encoding: int) -> None:
    if encoding == ENC_U8:
        payload = np.ascontiguousarray(grid, dtype=np.uint8).tobytes()
        rows, cols = grid.shape
    elif encoding == ENC_BITS:
        payload = np.packbits(grid.astype(np.uint8), axis=None).tobytes()
        rows, cols = grid.shape
    elif encoding == ENC_F64:
        arr = np.ascontiguousarray(grid, dtype=np.float64)
        payload = arr.tobytes()
        rows, cols = arr.shape
    else:
        raise ValueError(f"unknown encoding {encoding}")
    buf += _HEADER.pack(_BLOB_MAGIC, FORMAT_VERSION, kind, rows, cols,
                        encoding, len(payload), zlib.crc32(payload))
    buf += payload


def _read_blob(data: bytes, offset: int) -> tuple[np.ndarray, int, int]:
    if offset + _HEADER.size > len(data):
        raise CorpusFormatError("truncated blob header")
    magic, version, kind, rows, cols, encoding, n, crc = _HEADER.unpack_from(data, offset)
    if magic != _BLOB_MAGIC:
        raise CorpusFormatError("bad blob magic")
    if version != FORMAT_VERSION:
        raise CorpusFormatError(f"unsupported blob version {version}")
    offset += _HEADER.size
    payload = data[offset:offset + n]
    if len(payload) != n:
        raise CorpusFormatError("truncated blob payload")
    if zlib.crc32(payload) != crc:
        raise CorpusFormatError("blob checksum mismatch")
    if encoding == ENC_U8:
        grid = np.frombuffer(payload, dtype=np.uint8).reshape(rows, cols)
    elif encoding == ENC_BITS:
        bits = np.unpackbits(np.frombuffer(payload, dtype=np.uint8))
        grid = bits[:rows * cols].reshape(rows, cols)
    elif encoding == ENC_F64:
        grid = np.frombuffer(payload, dtype=np.float64).reshape(rows, cols)
    else:
        raise CorpusFormatError(f"unknown blob encoding {encoding}")
    return grid, kind, offset + n


def _record_meta(r: DatasetRecord) -> dict:
    return {"instruction": r.instruction, "origin": r.origin,
            "observation_ref": r.observation_ref, "task_index": r.task_index,
            "state": {"q": list(r.state.q), "qdot": list(r.state.qdot),
                      "qddot": list(r.state.qddot)}}


def serialize(corpus: Corpus, out_dir: str | Path) -> None:
    """Write manifest plus one record file per environment.

    Positions are quantized to integer cost units (unsigned bytes) on disk;
    masks pack to bits; demo trajectories are stored so labels can always be
    re-derived bit-exactly.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {
        "format": "langsteer-corpus",
        "version": FORMAT_VERSION,
        "seed": corpus.seed,
        "spec": asdict(corpus.spec),
        "planner": asdict(corpus.planner_cfg),
        "base_cost": asdict(corpus.base_cfg),
        "weights": asdict(corpus.weights),
        "codes": asdict(corpus.codes),
        "controller": asdict(corpus.ctrl_cfg),
        "lexicon_hash": corpus.lexicon_hash,
        "env_order": corpus.env_order,
        "split": {"train": list(corpus.split.train), "val": list(corpus.split.val),
                  "test": list(corpus.split.test),
                  "hard": [list(h) for h in corpus.split.hard]},
        "stats": corpus.stats,
        "env_files": {eid: f"records-{eid}.bin" for eid in corpus.env_order},
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))

    for env_id in corpus.env_order:
        data = corpus.envs[env_id]
        env = data.env
        records = list(iter_env_records(corpus, env_id))
        header = {
            "env": {"id": env.id, "rng_seed": env.rng_seed,
                    "spec": asdict(env.spec),
                    "objects": [{"type_id": o.type_id, "center": list(o.center),
                                 "orientation": o.orientation} for o in env.objects]},
            "starts": [list(s) for s in data.starts],
            "n_disconnected": data.n_disconnected,
            "tasks": [asdict(t) for t in data.tasks],
            "trajectory_tasks": sorted(data.trajectories.keys()),
            "records": [_record_meta(r) for r in records],
        }
        head = json.dumps(header, sort_keys=True).encode()
        buf = bytearray()
        buf += _HEADER.pack(_FILE_MAGIC, FORMAT_VERSION, len(head), 0, 0, 0, 0,
                            zlib.crc32(head))
        buf += head
        for idx in sorted(data.trajectories.keys()):
            _write_blob(buf, BLOB_TRAJECTORY, data.trajectories[idx], ENC_F64)
        for r in records:
            _write_blob(buf, BLOB_POSITION, np.rint(r.cost.position), ENC_U8)
            _write_blob(buf, BLOB_VELOCITY, r.cost.velocity, ENC_U8)
            _write_blob(buf, BLOB_MASK, r.mask.grid, ENC_BITS)
        (out / manifest["env_files"][env_id]).write_bytes(bytes(buf))


def _parse_env_file(path: Path) -> tuple[dict, list[tuple[np.ndarray, int]]]:
    data = path.read_bytes()
    if len(data) < _HEADER.size:
        raise CorpusFormatError(f"{path.name}: truncated file header")
    magic, version, n_head, *_rest, crc = _HEADER.unpack_from(data, 0)
    if magic != _FILE_MAGIC:
        raise CorpusFormatError(f"{path.name}: bad file magic")
    if version != FORMAT_VERSION:
        raise CorpusFormatError(f"{path.name}: unsupported version {version}")
    head = data[_HEADER.size:_HEADER.size + n_head]
    if len(head) != n_head or zlib.crc32(head) != crc:
        raise CorpusFormatError(f"{path.name}: corrupt header")
    header = json.loads(head)
    blobs = []
    offset = _HEADER.size + n_head
    while offset < len(data):
        grid, kind, offset = _read_blob(data, offset)
        blobs.append((grid, kind))
    return header, blobs


def read_env_records(dir_path: str | Path, env_id: str) -> list[DatasetRecord]:
    """Load one environment's records from disk (positions in cost units)."""
    out = Path(dir_path)
    manifest = json.loads((out / "manifest.json").read_text())
    header, blobs = _parse_env_file(out / manifest["env_files"][env_id])
    n_traj = len(header["trajectory_tasks"])
    grids = blobs[n_traj:]
    records = []
    for i, meta in enumerate(header["records"]):
        pos, kp = grids[3 * i]
        vel, kv = grids[3 * i + 1]
        mask, km = grids[3 * i + 2]
        if (kp, kv, km) != (BLOB_POSITION, BLOB_VELOCITY, BLOB_MASK):
            raise CorpusFormatError("record blobs out of order")
        st = meta["state"]
        records.append(DatasetRecord(
            cost=CostMap(position=pos.astype(np.float64), velocity=vel.copy()),
            mask=Mask(mask.astype(np.uint8)),
            instruction=meta["instruction"],
            observation_ref=meta["observation_ref"],
            state=RobotState(q=tuple(st["q"]), qdot=tuple(st["qdot"]),
                             qddot=tuple(st["qddot"])),
            origin=meta["origin"],
            task_index=meta["task_index"]))
    return records


def deserialize(dir_path: str | Path) -> Corpus:
    """Rebuild a corpus from disk; environments recompute their grids."""
    out = Path(dir_path)
    manifest_path = out / "manifest.json"
    if not manifest_path.exists():
        raise CorpusFormatError(f"no manifest in {out}")
    manifest = json.loads(manifest_path.read_text())
    if manifest.get("format") != "langsteer-corpus":
        raise CorpusFormatError("not a corpus directory")
    if manifest.get("version") != FORMAT_VERSION:
        raise CorpusFormatError(f"unsupported corpus version {manifest.get('version')}")

    spec = GridSpec(**manifest["spec"])
    envs: dict[str, EnvData] = {}
    for env_id in manifest["env_order"]:
        header, blobs = _parse_env_file(out / manifest["env_files"][env_id])
        e = header["env"]
        objects = tuple(ObjectInstance(o["type_id"], tuple(o["center"]), o["orientation"])
                        for o in e["objects"])
        env_spec = GridSpec(**e.get("spec", manifest["spec"]))
        env = make_environment(e["id"], e["rng_seed"], env_spec, objects)
        tasks = []
        for t in header["tasks"]:
            t = dict(t)
            t["start"] = tuple(t["start"])
            t["goal"] = tuple(t["goal"])
            t["clearances"] = tuple(t["clearances"])
            tasks.append(TaskRecord(**t))
        trajectories = {}
        traj_ids = header["trajectory_tasks"]
        for i, idx in enumerate(traj_ids):
            grid, kind = blobs[i]
            if kind != BLOB_TRAJECTORY:
                raise CorpusFormatError("expected trajectory blob")
            trajectories[idx] = grid
        envs[env_id] = EnvData(env=env, starts=[tuple(s) for s in header["starts"]],
                               tasks=tasks, trajectories=trajectories,
                               n_disconnected=header["n_disconnected"])

    split = Split(train=tuple(manifest["split"]["train"]),
                  val=tuple(manifest["split"]["val"]),
                  test=tuple(manifest["split"]["test"]),
                  hard=tuple((h[0], h[1]) for h in manifest["split"]["hard"]))
    return Corpus(seed=manifest["seed"], spec=spec,
                  env_order=list(manifest["env_order"]), envs=envs, split=split,
                  planner_cfg=PlannerConfig(**manifest["planner"]),
                  base_cfg=BaseCostConfig(**manifest["base_cost"]),
                  weights=CostWeights(**manifest["weights"]),
                  ctrl_cfg=ControllerConfig(**manifest["controller"]),
                  codes=VelocityCodes(**manifest["codes"]),
                  lexicon_hash=manifest["lexicon_hash"],
                  stats=manifest["stats"])
