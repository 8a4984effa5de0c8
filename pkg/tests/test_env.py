import numpy as np
import pytest

from ginshop import env
from ginshop.instance import OpId, generate, lower_bound
from ginshop.trainer import sample_action


def reference_clb(s, j, k):
    """Literal recursion from the definition, independent of the kernel:
    scheduled -> actual completion; frontier -> max(pred clb, machine
    avail) + p; deeper -> pred clb + p."""
    inst = s.inst
    if s.scheduled[j, k]:
        return int(s.completion[j, k])
    pred = reference_clb(s, j, k - 1) if k > 0 else 0
    if k == s.job_next[j]:
        base = max(pred, int(s.machine_avail[inst.machine[j, k]]))
    else:
        base = pred
    return base + int(inst.duration[j, k])


def play(inst, order, cfg=None, horizon=None):
    cfg = cfg or env.RewardConfig()
    horizon = horizon or lower_bound(inst)
    s = env.reset(inst)
    rewards = []
    for j, k in order:
        _, r, done = env.step(s, OpId.of(j, k, inst.num_machines), cfg, horizon)
        rewards.append(r)
    return s, rewards, done


def test_reset_empty(tiny2x2):
    s = env.reset(tiny2x2)
    assert s.dispatched_count == 0
    assert (s.machine_avail == 0).all()
    assert (s.job_next == 0).all()


def test_reset_eligible_first_ops():
    inst = generate(3, 3, 0)
    mask = env.eligible_actions(env.reset(inst))
    assert mask.sum() == 3
    assert mask[[0, 3, 6]].all()


def test_reset_1x1_single_action(one_by_one):
    assert env.eligible_actions(env.reset(one_by_one)).sum() == 1


def test_eligible_after_dispatch(tiny2x2):
    s = env.reset(tiny2x2)
    env.step(s, OpId.of(0, 0, 2), env.RewardConfig(), 7)
    mask = env.eligible_actions(s)
    assert mask.tolist() == [False, True, True, False]


def test_terminal_mask_empty(one_by_one):
    s, _, done = play(one_by_one, [(0, 0)])
    assert done and not env.eligible_actions(s).any()


def test_step_first_dispatch(tiny2x2):
    s = env.reset(tiny2x2)
    env.step(s, OpId.of(0, 0, 2), env.RewardConfig(), 7)
    assert s.start[0, 0] == 0 and s.completion[0, 0] == 3
    assert s.machine_avail[0] == 3


def test_step_hand_trajectory(tiny2x2):
    # dispatch O(0,0), O(1,0), O(0,1), O(1,1); hand-simulated with
    # S = max(C_pred, avail): starts (0,0,3,3), completions (3,2,5,7)
    s, _, done = play(tiny2x2, [(0, 0), (1, 0), (0, 1), (1, 1)])
    assert done
    assert s.start.tolist() == [[0, 3], [0, 3]]
    assert s.completion.tolist() == [[3, 5], [2, 7]]
    assert env.makespan(s) == 7


def test_step_worst_trajectory(tiny2x2):
    # dispatch both ops of job 0 first, then job 1: hand-simulated makespan 11
    s, _, _ = play(tiny2x2, [(0, 0), (0, 1), (1, 0), (1, 1)])
    assert env.makespan(s) == 11


def test_step_rejects_ineligible(tiny2x2):
    s = env.reset(tiny2x2)
    with pytest.raises(env.IneligibleActionError):
        env.step(s, OpId.of(0, 1, 2), env.RewardConfig(), 7)
    env.step(s, OpId.of(0, 0, 2), env.RewardConfig(), 7)
    with pytest.raises(env.IneligibleActionError):
        env.step(s, OpId.of(0, 0, 2), env.RewardConfig(), 7)


def test_clb_scheduled_is_completion(tiny2x2):
    s, _, _ = play(tiny2x2, [(0, 0), (1, 0), (0, 1), (1, 1)])
    for j in range(2):
        for k in range(2):
            assert env.clb(s, OpId.of(j, k, 2)) == s.completion[j, k]


def test_clb_at_reset_prefix_sums(tiny2x2):
    s = env.reset(tiny2x2)
    assert [env.clb(s, OpId.of(j, k, 2)) for j in range(2) for k in range(2)] == [3, 5, 2, 6]


def test_clb_after_dispatch_hand(tiny2x2):
    s = env.reset(tiny2x2)
    env.step(s, OpId.of(0, 0, 2), env.RewardConfig(), 7)
    # job0: O00 completed at 3; O01 frontier: max(3, avail m1=0)+2 = 5
    # job1: O10 frontier: max(0, avail m1=0)+2 = 2; O11 deeper: 2+4 = 6
    vals = [env.clb(s, OpId.of(j, k, 2)) for j in range(2) for k in range(2)]
    assert vals == [3, 5, 2, 6]


def test_clb_matches_reference_on_random_trajectories():
    rng = np.random.default_rng(0)
    for seed in range(6):
        inst = generate(4, 3, seed)
        cfg = env.RewardConfig()
        h = lower_bound(inst)
        s = env.reset(inst)
        for _ in range(inst.num_ops):
            for j in range(4):
                for k in range(3):
                    assert env.clb(s, OpId.of(j, k, 3)) == reference_clb(s, j, k)
            mask = env.eligible_actions(s)
            a = int(rng.choice(np.flatnonzero(mask)))
            env.step(s, OpId.from_flat(a, 3), cfg, h)


def test_spread_zero_single_op(one_by_one):
    s = env.reset(one_by_one)
    assert env.spread(s) == 0.0


def test_spread_hand_case(tiny2x2):
    #  clbs {3,5,2,6} -> max 6, mean 4
    assert env.spread(env.reset(tiny2x2)) == 2.0


def test_spread_job_relabel_invariant():
    inst = generate(4, 3, 5)
    perm = [2, 0, 3, 1]
    from ginshop.instance import Instance

    relabeled = Instance(4, 3, inst.machine[perm], inst.duration[perm])
    assert env.spread(env.reset(inst)) == env.spread(env.reset(relabeled))


def test_spread_nonnegative_along_trajectories():
    rng = np.random.default_rng(3)
    inst = generate(3, 4, 9)
    s = env.reset(inst)
    cfg = env.RewardConfig()
    h = lower_bound(inst)
    for _ in range(inst.num_ops):
        assert env.spread(s) >= 0.0
        a = int(rng.choice(np.flatnonzero(env.eligible_actions(s))))
        env.step(s, OpId.from_flat(a, 4), cfg, h)
    assert env.spread(s) >= 0.0


def test_shaping_telescopes(tiny2x2):
    cfg = env.RewardConfig(lambda_term=10.0, lambda_shape=0.25)
    s0 = env.reset(tiny2x2)
    spread0 = env.spread(s0)
    s, rewards, _ = play(tiny2x2, [(0, 0), (1, 0), (0, 1), (1, 1)], cfg=cfg)
    shaping_sum = sum(rewards) - env.terminal_reward(s, cfg)
    expected = cfg.lambda_shape * (spread0 - env.spread(s))
    assert abs(shaping_sum - expected) < 1e-12


def test_terminal_reward_ratios(tiny2x2, one_by_one):
    cfg = env.RewardConfig(lambda_term=10.0, lambda_shape=1.0)
    s, _, _ = play(one_by_one, [(0, 0)], cfg=cfg, horizon=5)
    assert env.terminal_reward(s, cfg) == pytest.approx(10.0)  # C_max = LB
    s, _, _ = play(tiny2x2, [(0, 0), (0, 1), (1, 0), (1, 1)], cfg=cfg)
    # LB 7, C_max 11
    assert env.terminal_reward(s, cfg) == pytest.approx(10.0 * 7 / 11)
    s, _, _ = play(tiny2x2, [(0, 0), (1, 0), (0, 1), (1, 1)], cfg=cfg)
    assert env.terminal_reward(s, cfg) == pytest.approx(10.0 * 7 / 7)


def test_terminal_reward_requires_terminal(tiny2x2):
    s = env.reset(tiny2x2)
    with pytest.raises(env.NotTerminalError):
        env.terminal_reward(s, env.RewardConfig())
    with pytest.raises(env.NotTerminalError):
        env.makespan(s)


def test_step_terminal_includes_bonus(one_by_one):
    cfg = env.RewardConfig(lambda_term=10.0, lambda_shape=1.0)
    s = env.reset(one_by_one)
    _, r, done = env.step(s, OpId.of(0, 0, 1), cfg, 5)
    assert done
    # spread stays 0 for a single op, so the whole reward is the bonus
    assert r == pytest.approx(10.0)


def test_makespan_equals_max_over_all_ops():
    rng = np.random.default_rng(1)
    inst = generate(4, 4, 2)
    cfg = env.RewardConfig()
    h = lower_bound(inst)
    s = env.reset(inst)
    for _ in range(inst.num_ops):
        a = int(rng.choice(np.flatnonzero(env.eligible_actions(s))))
        env.step(s, OpId.from_flat(a, 4), cfg, h)
    assert env.makespan(s) == s.completion.max()
    assert env.makespan(s) >= lower_bound(inst)


def test_every_trajectory_terminates_in_n_steps():
    rng = np.random.default_rng(7)
    inst = generate(5, 3, 4)
    cfg = env.RewardConfig()
    h = lower_bound(inst)
    for _ in range(5):
        s = env.reset(inst)
        done = False
        for t in range(inst.num_ops):
            mask = env.eligible_actions(s)
            assert mask.any(), f"dead-end at step {t}"
            a = int(rng.choice(np.flatnonzero(mask)))
            _, _, done = env.step(s, OpId.from_flat(a, 3), cfg, h)
        assert done


def test_validate_schedule_accepts_env_output(tiny2x2):
    s, _, _ = play(tiny2x2, [(1, 0), (0, 0), (1, 1), (0, 1)])
    assert env.validate_schedule(tiny2x2, s)
    assert env.is_semi_active(tiny2x2, s)


def test_validate_schedule_detects_precedence_violation(tiny2x2):
    s, _, _ = play(tiny2x2, [(0, 0), (1, 0), (0, 1), (1, 1)])
    s.start[0, 1] = 1  # starts before predecessor completes
    s.completion[0, 1] = 3
    assert not env.validate_schedule(tiny2x2, s)


def test_validate_schedule_detects_overlap(tiny2x2):
    s, _, _ = play(tiny2x2, [(0, 0), (1, 0), (0, 1), (1, 1)])
    # move job1's machine-0 op onto job0's machine-0 interval
    s.start[1, 1] = 1
    s.completion[1, 1] = 5
    assert not env.validate_schedule(tiny2x2, s)


def test_transition_deterministic(tiny2x2):
    a = play(tiny2x2, [(1, 0), (1, 1), (0, 0), (0, 1)])[0]
    b = play(tiny2x2, [(1, 0), (1, 1), (0, 0), (0, 1)])[0]
    assert np.array_equal(a.start, b.start)
    assert np.array_equal(a.completion, b.completion)


def test_export_schedule_sorted(tiny2x2):
    s, _, _ = play(tiny2x2, [(0, 0), (1, 0), (0, 1), (1, 1)])
    rows = env.export_schedule(s)
    assert [(r["job"], r["step"]) for r in rows] == [(0, 0), (0, 1), (1, 0), (1, 1)]
    assert rows[3] == {"job": 1, "step": 1, "machine": 0, "start": 3, "completion": 7}


def test_semi_active_along_random_policies():
    rng = np.random.default_rng(11)
    for seed in range(4):
        inst = generate(4, 4, seed + 20)
        cfg = env.RewardConfig()
        h = lower_bound(inst)
        s = env.reset(inst)
        for _ in range(inst.num_ops):
            probs = env.eligible_actions(s).astype(float)
            a = sample_action(probs / probs.sum(), rng)
            env.step(s, OpId.from_flat(a, 4), cfg, h)
        assert env.validate_schedule(inst, s)
        assert env.is_semi_active(inst, s)
