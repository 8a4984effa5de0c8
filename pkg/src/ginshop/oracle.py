"""Exact optimal makespan for tiny instances.

Depth-first search over eligible dispatch sequences with branch-and-bound
pruning.  The search space is exactly the set of schedules the
constructive environment can reach (semi-active schedules), which contains
an optimal schedule for makespan minimization, so the returned value is
the true optimum.  Intended for instances up to roughly 4x4.
"""

from __future__ import annotations

from dataclasses import dataclass

from .instance import Instance, OpId


class BudgetExceeded(RuntimeError):
    """Search node budget exhausted; no optimum is claimed."""


@dataclass(frozen=True)
class OracleResult:
    optimum: int
    optimal_sequence: tuple[OpId, ...]
    explored: int


def optimal_makespan(inst: Instance, node_budget: int = 2_000_000) -> OracleResult:
    J, M = inst.num_jobs, inst.num_machines
    machine = [[int(v) for v in row] for row in inst.machine]
    duration = [[int(v) for v in row] for row in inst.duration]
    pref = [[int(v) for v in row] for row in inst.pref]
    total_by_machine = [0] * M
    for j in range(J):
        for k in range(M):
            total_by_machine[machine[j][k]] += duration[j][k]

    job_next = [0] * J
    job_done = [0] * J  # completion of the job's last scheduled op
    avail = [0] * M
    rem_m = list(total_by_machine)
    path: list[tuple[int, int]] = []

    best = float("inf")
    best_seq: tuple[tuple[int, int], ...] = ()
    explored = 0

    def dfs(scheduled: int, cur_max: int) -> None:
        nonlocal best, best_seq, explored
        if scheduled == J * M:
            if cur_max < best:
                best = cur_max
                best_seq = tuple(path)
            return
        lb = cur_max
        for j in range(J):
            b = job_done[j] + pref[j][M] - pref[j][job_next[j]]
            if b > lb:
                lb = b
        for m in range(M):
            b = avail[m] + rem_m[m]
            if b > lb:
                lb = b
        if lb >= best:
            return
        for j in range(J):
            k = job_next[j]
            if k >= M:
                continue
            explored += 1
            if explored > node_budget:
                raise BudgetExceeded(f"exceeded {node_budget} search nodes")
            m = machine[j][k]
            p = duration[j][k]
            start = job_done[j] if job_done[j] > avail[m] else avail[m]
            end = start + p
            saved = (job_done[j], avail[m])
            job_next[j] = k + 1
            job_done[j] = end
            avail[m] = end
            rem_m[m] -= p
            path.append((j, k))
            dfs(scheduled + 1, end if end > cur_max else cur_max)
            path.pop()
            rem_m[m] += p
            job_next[j] = k
            job_done[j], avail[m] = saved
        return

    dfs(0, 0)
    seq = tuple(OpId.of(j, k, M) for j, k in best_seq)
    return OracleResult(optimum=int(best), optimal_sequence=seq, explored=explored)
