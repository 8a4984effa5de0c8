"""Priority dispatching rule baselines, run in the same constructive
environment as the learned policy.

MWKR picks the eligible op whose job has the most remaining work, MOR the
most remaining operations; FDD/MWR minimizes the ratio of the op's flow
due date to the job's remaining work.  The flow due date is the time the
op would complete if the job flowed without further machine waiting: the
job's current ready time (completion of the op's predecessor, release 0
for first ops) plus the op's duration.  Ties break on the lowest flat op
id, so runs are deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import env
from .instance import Instance, OpId, lower_bound


@dataclass(frozen=True)
class Rule:
    name: str
    maximize: bool


MWKR = Rule("mwkr", True)
MOR = Rule("mor", True)
FDD_MWR = Rule("fdd_mwr", False)

RULES = {r.name: r for r in (MWKR, MOR, FDD_MWR)}


def priority(rule: Rule, s: env.ScheduleState, o: OpId) -> float:
    """Priority of an eligible op under a rule; see the module docstring
    for the three definitions."""
    inst = s.inst
    j, k = o.job, o.step
    remaining_work = int(inst.pref[j, inst.num_machines] - inst.pref[j, k])
    if rule is MWKR or rule.name == "mwkr":
        return float(remaining_work)
    if rule is MOR or rule.name == "mor":
        return float(inst.num_machines - k)
    ready = int(s.completion[j, k - 1]) if k > 0 else 0
    flow_due_date = ready + int(inst.duration[j, k])
    return flow_due_date / remaining_work


def _pick(rule: Rule, s: env.ScheduleState) -> OpId:
    inst = s.inst
    active = np.flatnonzero(s.job_next < inst.num_machines)
    fr = s.job_next[active]
    remaining = inst.pref[active, inst.num_machines] - inst.pref[active, fr]
    if rule.name == "mwkr":
        prio = remaining.astype(np.float64)
    elif rule.name == "mor":
        prio = (inst.num_machines - fr).astype(np.float64)
    else:
        ready = np.where(fr > 0, s.completion[active, np.maximum(fr - 1, 0)], 0)
        prio = (ready + inst.duration[active, fr]) / remaining
    best = np.argmax(prio) if rule.maximize else np.argmin(prio)
    # np.argmax/argmin take the first max/min; `active` is sorted by job,
    # so this is the lowest flat id among tied candidates
    j = int(active[best])
    return OpId.of(j, int(s.job_next[j]), inst.num_machines)


def run_rule(inst: Instance, rule: Rule):
    """Dispatch the whole instance with one rule.

    Returns (schedule export rows, makespan); the final state is available
    via run_rule_state when the caller needs to re-validate.
    """
    s = run_rule_state(inst, rule)
    return env.export_schedule(s), env.makespan(s)


def run_rule_state(inst: Instance, rule: Rule) -> env.ScheduleState:
    if rule.name not in RULES:
        raise ValueError(f"unknown rule {rule.name!r}")
    cfg = env.RewardConfig()
    h = lower_bound(inst)
    s = env.reset(inst)
    for _ in range(inst.num_ops):
        env.step(s, _pick(rule, s), cfg, h)
    return s
