"""Benchmark pipeline: suite generation, solver execution, gap reports.

Reports are deterministic: rows are ordered by (instance id, solver id)
whatever the worker count, and wall-clock timings go to a separate
timings sidecar so the main CSV/JSON artifacts are byte-stable.
"""

from __future__ import annotations

import json
import multiprocessing
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import env, graph, net
from .dispatch import RULES, run_rule_state
from .instance import (
    RNG_ALGORITHM,
    Instance,
    OpId,
    generate,
    lower_bound,
    parse_standard,
    parse_taillard,
    serialize,
)

MANIFEST_VERSION = 1
REPORT_HEADER = "instance,geometry,solver,makespan,bound,gap"
AGG_HEADER = "geometry,solver,count,mean_makespan,std_makespan,mean_gap"
PIVOT_HEADER = "ratio,solver,count,mean_gap"


class SolverError(ValueError):
    """Unresolvable solver identifier."""


def parse_geometry(token: str) -> tuple[int, int]:
    try:
        j, m = token.lower().split("x")
        j, m = int(j), int(m)
    except ValueError:
        raise ValueError(f"bad geometry {token!r}, expected JxM like 6x6") from None
    if j < 1 or m < 1:
        raise ValueError(f"bad geometry {token!r}")
    return j, m


def generate_suite(geometries, count_per_geometry, seed, dur_lo, dur_hi, out_dir):
    """Write count_per_geometry standard-format instances per geometry plus
    a manifest recording every generation seed."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for gi, token in enumerate(geometries):
        J, M = parse_geometry(token)
        for i in range(count_per_geometry):
            inst_seed = int(np.random.SeedSequence((seed, gi, i)).generate_state(1, dtype=np.uint64)[0])
            inst = generate(J, M, inst_seed, dur_lo, dur_hi)
            name = f"inst_{J}x{M}_{i:03d}.txt"
            (out_dir / name).write_text(serialize(inst), encoding="utf-8")
            entries.append(
                {"file": name, "geometry": f"{J}x{M}", "num_jobs": J, "num_machines": M, "seed": inst_seed}
            )
    manifest = {
        "format_version": MANIFEST_VERSION,
        "rng_algorithm": RNG_ALGORITHM,
        "seed": seed,
        "duration_range": [dur_lo, dur_hi],
        "count_per_geometry": count_per_geometry,
        "geometries": list(geometries),
        "instances": entries,
    }
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    return path


def load_manifest(path):
    path = Path(path)
    manifest = json.loads(path.read_text(encoding="utf-8"))
    if manifest.get("format_version") != MANIFEST_VERSION:
        raise ValueError(f"unsupported manifest format_version {manifest.get('format_version')!r}")
    return manifest, path.parent


def read_instance(path, fmt: str = "standard") -> Instance:
    text = Path(path).read_text(encoding="utf-8")
    if fmt == "taillard":
        return parse_taillard(text)
    return parse_standard(text)


# --- solvers -----------------------------------------------------------------


def solve_with_policy(
    inst: Instance,
    params: net.PolicyParams,
    greedy: bool = True,
    rng: np.random.Generator | None = None,
) -> env.ScheduleState:
    """Run one episode with a policy checkpoint on any geometry."""
    from .trainer import sample_action  # local import to avoid a cycle

    g = graph.build(inst)
    h = graph.horizon(inst)
    batch = net.GraphBatch.from_graphs([g])
    cfg = env.default_reward_config(inst)
    s = env.reset(inst)
    if not greedy and rng is None:
        rng = np.random.Generator(np.random.PCG64(0))
    for _ in range(inst.num_ops):
        x = graph.features(s, g, h)
        mask = env.eligible_actions(s)
        tr = net.forward(batch, x, params)
        _, probs = net.masked_log_softmax(tr.logits, mask, batch.op_ptr, batch.op_graph)
        a = int(np.argmax(probs)) if greedy else sample_action(probs, rng)
        env.step(s, OpId.from_flat(a, inst.num_machines), cfg, h)
    return s


@dataclass(frozen=True)
class Solver:
    """A named solver: a dispatching rule or a policy checkpoint."""

    solver_id: str
    rule_name: str | None = None
    checkpoint: str | None = None

    def run(self, inst: Instance, greedy: bool = True, seed: int = 0) -> env.ScheduleState:
        if self.rule_name is not None:
            return run_rule_state(inst, RULES[self.rule_name])
        params, _ = net.load_checkpoint(self.checkpoint)
        rng = None if greedy else np.random.Generator(np.random.PCG64(seed))
        return solve_with_policy(inst, params, greedy=greedy, rng=rng)


def resolve_solver(token: str) -> Solver:
    """Rule name (mwkr, mor, fdd_mwr) or a checkpoint path."""
    low = token.lower()
    if low in RULES:
        return Solver(solver_id=low, rule_name=low)
    path = Path(token)
    if path.is_file():
        net.load_checkpoint(path)  # validate early
        return Solver(solver_id=path.stem, checkpoint=str(path))
    raise SolverError(f"unknown solver {token!r}: not a rule name and not a checkpoint file")


# --- benchmark run -----------------------------------------------------------


@dataclass(frozen=True)
class BenchTask:
    instance_id: str
    geometry: str
    path: str
    solver_index: int
    bound: int


_WORKER_STATE: dict = {}


def _worker_init(solver_tokens):
    _WORKER_STATE["solvers"] = [resolve_solver(t) for t in solver_tokens]


def _run_task(args):
    task, greedy, seed = args
    solver = _WORKER_STATE["solvers"][task.solver_index]
    inst = read_instance(task.path)
    t0 = time.perf_counter()
    state = solver.run(inst, greedy=greedy, seed=seed)
    wall = time.perf_counter() - t0
    makespan = env.makespan(state)
    valid = env.validate_schedule(inst, state)
    return task, solver.solver_id, makespan, valid, wall


def run_bench(
    manifest_path,
    solver_tokens,
    bounds_source="computed-lb",
    out_prefix=None,
    workers: int = 0,
    greedy: bool = True,
    seed: int = 0,
):
    """Run every solver on every suite instance and write the report.

    bounds_source is "computed-lb" or a JSON file {instance_id: bound}.
    Returns (rows, aggregates, pivot, all_valid).
    """
    manifest, base = load_manifest(manifest_path)
    solvers = [resolve_solver(t) for t in solver_tokens]
    ids = [s.solver_id for s in solvers]
    if len(set(ids)) != len(ids):
        raise SolverError(f"duplicate solver ids: {ids}")

    ref_bounds = None
    bound_label = "computed-lb"
    if bounds_source != "computed-lb":
        ref_bounds = json.loads(Path(bounds_source).read_text(encoding="utf-8"))
        bound_label = f"file:{Path(bounds_source).name}"

    tasks = []
    for entry in manifest["instances"]:
        path = base / entry["file"]
        instance_id = Path(entry["file"]).stem
        inst = read_instance(path)
        if ref_bounds is not None:
            if instance_id not in ref_bounds:
                raise ValueError(f"bounds file has no entry for {instance_id}")
            bound = int(ref_bounds[instance_id])
        else:
            bound = lower_bound(inst)
        for si in range(len(solvers)):
            tasks.append(BenchTask(instance_id, entry["geometry"], str(path), si, bound))
    job_args = [(t, greedy, seed) for t in tasks]

    if workers and workers > 1:
        ctx = multiprocessing.get_context("spawn")
        with ctx.Pool(workers, initializer=_worker_init, initargs=(list(solver_tokens),)) as pool:
            results = pool.map(_run_task, job_args, chunksize=1)
    else:
        _worker_init(list(solver_tokens))
        results = [_run_task(a) for a in job_args]

    rows = []
    for task, solver_id, makespan, valid, wall in results:
        gap = (makespan - task.bound) / task.bound
        rows.append(
            {
                "instance": task.instance_id,
                "geometry": task.geometry,
                "solver": solver_id,
                "makespan": makespan,
                "bound": task.bound,
                "gap": gap,
                "valid": valid,
                "wall_time": wall,
            }
        )
    rows.sort(key=lambda r: (r["instance"], r["solver"]))
    all_valid = all(r["valid"] for r in rows)

    aggregates = _aggregate(rows)
    pivot = _ratio_pivot(rows)
    if out_prefix is not None:
        _write_report(Path(out_prefix), rows, aggregates, pivot, bound_label, all_valid)
    return rows, aggregates, pivot, all_valid


def _aggregate(rows):
    groups: dict[tuple[str, str], list] = {}
    for r in rows:
        groups.setdefault((r["geometry"], r["solver"]), []).append(r)
    out = []
    for (geometry, solver), rs in sorted(groups.items()):
        ms = np.array([r["makespan"] for r in rs], dtype=np.float64)
        gaps = np.array([r["gap"] for r in rs], dtype=np.float64)
        out.append(
            {
                "geometry": geometry,
                "solver": solver,
                "count": len(rs),
                "mean_makespan": float(ms.mean()),
                "std_makespan": float(ms.std()),
                "mean_gap": float(gaps.mean()),
            }
        )
    return out


def _ratio_pivot(rows):
    """Mean gap keyed by job-to-machine ratio, one row per distinct ratio
    and solver."""
    groups: dict[tuple[float, str], list] = {}
    for r in rows:
        j, m = parse_geometry(r["geometry"])
        groups.setdefault((j / m, r["solver"]), []).append(r["gap"])
    out = []
    for (ratio, solver), gaps in sorted(groups.items()):
        out.append(
            {
                "ratio": ratio,
                "solver": solver,
                "count": len(gaps),
                "mean_gap": float(np.mean(gaps)),
            }
        )
    return out


def _write_report(prefix: Path, rows, aggregates, pivot, bound_label, all_valid):
    prefix.parent.mkdir(parents=True, exist_ok=True)
    csv_lines = [REPORT_HEADER]
    for r in rows:
        line = f"{r['instance']},{r['geometry']},{r['solver']},{r['makespan']},{r['bound']},{r['gap']!r}"
        if not r["valid"]:
            line += ",FAILED"
        csv_lines.append(line)
    Path(f"{prefix}.csv").write_text("\n".join(csv_lines) + "\n", encoding="utf-8")

    agg_lines = [AGG_HEADER]
    for a in aggregates:
        agg_lines.append(
            f"{a['geometry']},{a['solver']},{a['count']},{a['mean_makespan']!r},"
            f"{a['std_makespan']!r},{a['mean_gap']!r}"
        )
    Path(f"{prefix}_aggregates.csv").write_text("\n".join(agg_lines) + "\n", encoding="utf-8")

    pivot_lines = [PIVOT_HEADER]
    for p in pivot:
        pivot_lines.append(f"{p['ratio']!r},{p['solver']},{p['count']},{p['mean_gap']!r}")
    Path(f"{prefix}_ratio_pivot.csv").write_text("\n".join(pivot_lines) + "\n", encoding="utf-8")

    timing_lines = ["instance,solver,wall_time"]
    for r in rows:
        timing_lines.append(f"{r['instance']},{r['solver']},{r['wall_time']!r}")
    Path(f"{prefix}_timings.csv").write_text("\n".join(timing_lines) + "\n", encoding="utf-8")

    obj = {
        "bound_source": bound_label,
        "all_valid": all_valid,
        "rows": [{k: v for k, v in r.items() if k != "wall_time"} for r in rows],
        "aggregates": aggregates,
        "ratio_pivot": pivot,
    }
    Path(f"{prefix}.json").write_text(json.dumps(obj, sort_keys=True, indent=2) + "\n", encoding="utf-8")
