"""Constructive scheduling environment.

One episode builds a schedule by dispatching one eligible operation per
step; dispatches are irrevocable and starts are semi-active (an operation
starts at the max of its job predecessor's completion and its machine's
availability).  The reward is a dense potential-difference shaping term
plus a terminal bonus proportional to lower-bound / makespan.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .instance import Instance, OpId, lower_bound


class IneligibleActionError(ValueError):
    """Raised when a dispatch violates the eligibility contract."""


class NotTerminalError(ValueError):
    """Raised by terminal-only queries on unfinished schedules."""


@dataclass(frozen=True)
class RewardConfig:
    """Scales of the two reward channels.

    lambda_shape multiplies the per-step spread reduction, lambda_term the
    terminal lower-bound/makespan ratio.  Both must be positive.
    """

    lambda_term: float = 10.0
    lambda_shape: float = 1.0

    def __post_init__(self):
        if self.lambda_term <= 0 or self.lambda_shape <= 0:
            raise ValueError("reward scales must be strictly positive")


def default_reward_config(inst: Instance) -> RewardConfig:
    """Default scales: terminal 10, shaping 1/lower_bound so the summed
    shaping signal is comparable across instance sizes."""
    return RewardConfig(lambda_term=10.0, lambda_shape=1.0 / lower_bound(inst))


class ScheduleState:
    """Mutable state of one episode.  Owned by a single thread; independent
    episodes can run in parallel, each with its own state."""

    __slots__ = (
        "inst",
        "start",
        "completion",
        "scheduled",
        "machine_avail",
        "job_next",
        "dispatched_count",
        "mch_done",
        "_clb",
        "_spread",
    )

    def __init__(self, inst: Instance):
        J, M = inst.num_jobs, inst.num_machines
        self.inst = inst
        self.start = np.full((J, M), -1, dtype=np.int64)
        self.completion = np.zeros((J, M), dtype=np.int64)
        self.scheduled = np.zeros((J, M), dtype=bool)
        self.machine_avail = np.zeros(M, dtype=np.int64)
        self.job_next = np.zeros(J, dtype=np.int64)
        self.dispatched_count = 0
        self.mch_done = np.zeros(M, dtype=np.int64)
        self._clb = np.zeros((J, M), dtype=np.int64)
        self._spread = 0.0
        _refresh(self)

    @property
    def terminal(self) -> bool:
        return self.dispatched_count == self.inst.num_ops


def _refresh(s: ScheduleState) -> None:
    inst = s.inst
    _kernels.clb_fill(
        inst.machine, inst.duration, inst.pref, s.completion, s.job_next, s.machine_avail, s._clb
    )
    s._spread = float(int(s._clb.max()) - s._clb.mean())


def reset(inst: Instance) -> ScheduleState:
    """Fresh state: nothing scheduled, all machines available at time 0."""
    return ScheduleState(inst)


def eligible_actions(s: ScheduleState) -> np.ndarray:
    """Boolean mask over flat op ids; true exactly for each unfinished
    job's next operation."""
    inst = s.inst
    mask = np.zeros(inst.num_ops, dtype=bool)
    active = s.job_next < inst.num_machines
    flat = np.arange(inst.num_jobs, dtype=np.int64) * inst.num_machines + s.job_next
    mask[flat[active]] = True
    return mask


def step(s: ScheduleState, a: OpId, cfg: RewardConfig, horizon: int):
    """Dispatch one eligible operation.

    Returns (state, reward, done).  The state is updated in place and
    returned for convenience.  `horizon` must be the instance lower bound
    (it feeds the terminal bonus); dispatching an ineligible op raises.
    """
    inst = s.inst
    j, k = a.job, a.step
    if not (0 <= j < inst.num_jobs) or k != s.job_next[j] or k >= inst.num_machines:
        raise IneligibleActionError(f"op (job {j}, step {k}) is not eligible")
    m = int(inst.machine[j, k])
    prev_c = int(s.completion[j, k - 1]) if k > 0 else 0
    avail = int(s.machine_avail[m])
    st = prev_c if prev_c > avail else avail
    c = st + int(inst.duration[j, k])
    s.start[j, k] = st
    s.completion[j, k] = c
    s.scheduled[j, k] = True
    s.machine_avail[m] = c
    s.job_next[j] += 1
    s.mch_done[m] += 1
    s.dispatched_count += 1

    before = s._spread
    _refresh(s)
    reward = cfg.lambda_shape * (before - s._spread)
    done = s.dispatched_count == inst.num_ops
    if done:
        reward += cfg.lambda_term * horizon / makespan(s)
    return s, reward, done


def clb(s: ScheduleState, o: OpId) -> int:
    """Earliest completion bound of one op: actual completion if scheduled,
    otherwise the no-future-contention recursion from the current state."""
    return int(s._clb[o.job, o.step])


def spread(s: ScheduleState) -> float:
    """Max minus mean of the completion lower bounds over all ops (>= 0)."""
    return s._spread


def makespan(s: ScheduleState) -> int:
    """Completion time of the last operation; terminal states only."""
    if not s.terminal:
        raise NotTerminalError("makespan of an unfinished schedule")
    return int(s.completion[:, -1].max())


def terminal_reward(s: ScheduleState, cfg: RewardConfig) -> float:
    """lambda_term * LB / C_max, in (0, lambda_term]."""
    if not s.terminal:
        raise NotTerminalError("terminal reward of an unfinished schedule")
    return cfg.lambda_term * lower_bound(s.inst) / makespan(s)


def validate_schedule(inst: Instance, s: ScheduleState) -> bool:
    """True iff the terminal schedule satisfies precedence and resource
    constraints and every completion equals start + duration."""
    if not s.terminal or not s.scheduled.all():
        return False
    if (s.start < 0).any():
        return False
    if not np.array_equal(s.completion, s.start + inst.duration):
        return False
    # precedence within each job
    if (s.start[:, 1:] < s.completion[:, :-1]).any():
        return False
    # disjoint intervals per machine
    for m in range(inst.num_machines):
        jj, kk = np.nonzero(inst.machine == m)
        order = np.argsort(s.start[jj, kk], kind="stable")
        st = s.start[jj, kk][order]
        en = s.completion[jj, kk][order]
        if (st[1:] < en[:-1]).any():
            return False
    return True


def is_semi_active(inst: Instance, s: ScheduleState) -> bool:
    """True iff no operation could start earlier given the same per-machine
    processing order: every start equals max(job predecessor completion,
    previous completion on its machine)."""
    if not s.terminal:
        return False
    for m in range(inst.num_machines):
        jj, kk = np.nonzero(inst.machine == m)
        order = np.argsort(s.start[jj, kk], kind="stable")
        jj, kk = jj[order], kk[order]
        prev_end = 0
        for j, k in zip(jj, kk):
            job_ready = int(s.completion[j, k - 1]) if k > 0 else 0
            if int(s.start[j, k]) != max(job_ready, prev_end):
                return False
            prev_end = int(s.completion[j, k])
    return True


def export_schedule(s: ScheduleState) -> list[dict]:
    """JSON-ready rows {job, step, machine, start, completion}, sorted by
    flat op id; enough to re-validate the schedule externally."""
    inst = s.inst
    rows = []
    for j in range(inst.num_jobs):
        for k in range(inst.num_machines):
            rows.append(
                {
                    "job": j,
                    "step": k,
                    "machine": int(inst.machine[j, k]),
                    "start": int(s.start[j, k]),
                    "completion": int(s.completion[j, k]),
                }
            )
    return rows
