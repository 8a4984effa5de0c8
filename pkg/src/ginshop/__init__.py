"""Constructive job-shop scheduling with a homogenized graph policy.

Modules: instance (problem data), env (scheduling MDP), graph (sparse
unified graph + features), net (GIN policy with hand-rolled gradients),
trainer (PPO), dispatch (priority-rule baselines), oracle (exact optimum
for tiny instances), bench/cli (benchmark harness).
"""

__version__ = "0.1.0"
