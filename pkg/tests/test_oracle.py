import itertools

import numpy as np
import pytest

from ginshop import env
from ginshop.instance import Instance, OpId, generate, lower_bound
from ginshop.oracle import BudgetExceeded, OracleResult, optimal_makespan


def enumerate_all_makespans(inst):
    """Brute force with no pruning: every interleaving of job sequences."""
    J, M = inst.num_jobs, inst.num_machines
    seq = []
    for j in range(J):
        seq += [j] * M
    results = []
    for perm in set(itertools.permutations(seq)):
        s = env.reset(inst)
        cfg = env.RewardConfig()
        nxt = [0] * J
        for j in perm:
            env.step(s, OpId.of(j, nxt[j], M), cfg, 1)
            nxt[j] += 1
        results.append(env.makespan(s))
    return results


def test_oracle_single_op(one_by_one):
    res = optimal_makespan(one_by_one)
    assert res.optimum == 5
    assert res.optimal_sequence == (OpId.of(0, 0, 1),)


def test_oracle_tiny2x2_matches_enumeration(tiny2x2):
    all_ms = enumerate_all_makespans(tiny2x2)
    assert len(all_ms) == 6
    assert sorted(all_ms) == [7, 7, 7, 7, 11, 11]
    res = optimal_makespan(tiny2x2)
    assert res.optimum == min(all_ms) == 7


def test_oracle_matches_enumeration_random_2x2_and_2x3():
    for seed in range(10):
        inst = generate(2, 2, seed, 1, 9)
        assert optimal_makespan(inst).optimum == min(enumerate_all_makespans(inst))
    for seed in range(4):
        inst = generate(2, 3, seed + 100, 1, 9)
        assert optimal_makespan(inst).optimum == min(enumerate_all_makespans(inst))


def test_oracle_sequence_replays_to_optimum():
    for seed in range(5):
        inst = generate(3, 3, seed, 1, 9)
        res = optimal_makespan(inst)
        s = env.reset(inst)
        cfg = env.RewardConfig()
        for o in res.optimal_sequence:
            env.step(s, o, cfg, 1)
        assert env.makespan(s) == res.optimum
        assert env.validate_schedule(inst, s)


def test_oracle_at_least_lower_bound():
    for seed in range(6):
        inst = generate(3, 3, seed + 10, 1, 20)
        res = optimal_makespan(inst)
        assert res.optimum >= lower_bound(inst)


def test_oracle_budget_exceeded():
    inst = generate(4, 4, 0, 1, 99)
    with pytest.raises(BudgetExceeded):
        optimal_makespan(inst, node_budget=10)


def test_oracle_explored_counted():
    res = optimal_makespan(generate(2, 2, 1, 1, 9))
    assert isinstance(res, OracleResult)
    assert res.explored > 0


def test_oracle_finds_known_optimum():
    # both jobs share one machine: optimum is the serial sum
    inst = Instance(2, 1, np.array([[0], [0]]), np.array([[4], [9]]))
    assert optimal_makespan(inst).optimum == 13
