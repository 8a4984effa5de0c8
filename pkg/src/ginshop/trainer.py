"""PPO training loop: rollout collection, GAE, clipped-surrogate updates.

Rollouts use per-episode RNG streams derived from (seed, update, episode),
so runs are bit-reproducible.  Defaults follow the reference
hyperparameters: lr 3e-4 with linear decay, gamma = lambda = 1, clip 0.2,
entropy 0.01, batches of 4 full episodes.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import env, graph, net
from .instance import Instance, OpId, generate

_INSTANCE_STREAM = 0
_ACTION_STREAM = 1


class TrainingDiverged(RuntimeError):
    """Non-finite loss; carries the offending statistics."""


@dataclass
class TrainConfig:
    num_jobs: int = 6
    num_machines: int = 6
    dur_lo: int = 1
    dur_hi: int = 99
    seed: int = 0
    total_updates: int = 2000
    episodes_per_update: int = 4
    lr0: float = 3e-4
    gamma: float = 1.0
    gae_lambda: float = 1.0
    clip_eps: float = 0.2
    ent_coef: float = 0.01
    value_coef: float = 0.5
    update_epochs: int = 4
    num_minibatches: int = 4  # episode groups per epoch
    grad_clip_norm: float = 0.5
    lambda_term: float = 10.0
    lambda_shape: float | None = None  # None: 1 / horizon per instance
    shaping: bool = True
    checkpoint_interval: int = 0  # 0: final checkpoint only
    bidirectional_prec: bool = False

    @property
    def batch_transitions(self) -> int:
        return self.episodes_per_update * self.num_jobs * self.num_machines

    @property
    def geometry(self) -> str:
        return f"{self.num_jobs}x{self.num_machines}"

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), sort_keys=True, indent=2) + "\n"

    @staticmethod
    def from_dict(d: dict) -> "TrainConfig":
        names = {f.name for f in dataclasses.fields(TrainConfig)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        return TrainConfig(**d)


LOG_HEADER = "update,lr,mean_makespan,mean_return,policy_loss,value_loss,entropy,clip_frac"


@dataclass
class EpisodeRollout:
    inst: Instance
    graph: graph.UnifiedGraph
    horizon: int
    feats: np.ndarray  # (T, nodes, 5)
    masks: np.ndarray  # (T, N)
    actions: np.ndarray  # (T,) flat op ids
    logps: np.ndarray
    values: np.ndarray
    rewards: np.ndarray
    makespan: int
    advantages: np.ndarray | None = None
    returns: np.ndarray | None = None


@dataclass
class RolloutBuffer:
    episodes: list[EpisodeRollout] = field(default_factory=list)

    @property
    def num_transitions(self) -> int:
        return sum(len(ep.actions) for ep in self.episodes)


def _episode_rng(seed: int, update_index: int, episode_index: int, stream: int) -> np.random.Generator:
    ss = np.random.SeedSequence((seed, update_index, episode_index, stream))
    return np.random.Generator(np.random.PCG64(ss))


def _instance_seed(seed: int, update_index: int, episode_index: int) -> int:
    ss = np.random.SeedSequence((seed, update_index, episode_index, _INSTANCE_STREAM))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def default_sampler(cfg: TrainConfig):
    """Instance source for training: a fresh random instance of the
    configured geometry per (update, episode)."""

    def sample(update_index: int, episode_index: int) -> Instance:
        s = _instance_seed(cfg.seed, update_index, episode_index)
        return generate(cfg.num_jobs, cfg.num_machines, s, cfg.dur_lo, cfg.dur_hi)

    return sample


def sample_action(probs: np.ndarray, rng: np.random.Generator) -> int:
    """Inverse-CDF draw over a probability vector (zeros allowed)."""
    cum = np.cumsum(probs)
    u = rng.random() * cum[-1]
    idx = min(int(np.searchsorted(cum, u, side="right")), len(probs) - 1)
    if probs[idx] == 0.0:  # u rounded onto the tail of the cdf
        idx = int(np.flatnonzero(probs)[-1])
    return idx


def reward_config_for(cfg: TrainConfig, h: int) -> env.RewardConfig:
    lam = cfg.lambda_shape if cfg.lambda_shape is not None else 1.0 / h
    return env.RewardConfig(lambda_term=cfg.lambda_term, lambda_shape=lam)


def play_episode(params: net.PolicyParams, inst: Instance, cfg: TrainConfig, rng: np.random.Generator) -> EpisodeRollout:
    """Sample one full episode from the masked policy, recording every
    transition."""
    g = graph.build(inst, cfg.bidirectional_prec)
    h = graph.horizon(inst)
    rcfg = reward_config_for(cfg, h)
    batch = net.GraphBatch.from_graphs([g])
    state = env.reset(inst)
    T = inst.num_ops
    feats = np.zeros((T, g.num_nodes, net.FEATURE_DIM))
    masks = np.zeros((T, inst.num_ops), dtype=bool)
    actions = np.zeros(T, dtype=np.int64)
    logps = np.zeros(T)
    values = np.zeros(T)
    rewards = np.zeros(T)
    for t in range(T):
        x = graph.features(state, g, h)
        mask = env.eligible_actions(state)
        tr = net.forward(batch, x, params)
        logp, probs = net.masked_log_softmax(tr.logits, mask, batch.op_ptr, batch.op_graph)
        a = sample_action(probs, rng)
        feats[t] = x
        masks[t] = mask
        actions[t] = a
        logps[t] = logp[a]
        values[t] = tr.values[0]
        _, r, done = env.step(state, OpId.from_flat(a, inst.num_machines), rcfg, h)
        if not cfg.shaping:
            r = env.terminal_reward(state, rcfg) if done else 0.0
        rewards[t] = r
    return EpisodeRollout(
        inst=inst,
        graph=g,
        horizon=h,
        feats=feats,
        masks=masks,
        actions=actions,
        logps=logps,
        values=values,
        rewards=rewards,
        makespan=env.makespan(state),
    )


def collect_rollout(params: net.PolicyParams, sampler, cfg: TrainConfig, update_index: int = 0) -> RolloutBuffer:
    """episodes_per_update complete episodes (batch_transitions transitions)."""
    buf = RolloutBuffer()
    for ep in range(cfg.episodes_per_update):
        inst = sampler(update_index, ep)
        rng = _episode_rng(cfg.seed, update_index, ep, _ACTION_STREAM)
        buf.episodes.append(play_episode(params, inst, cfg, rng))
    return buf


def compute_gae(buf: RolloutBuffer, gamma: float, lam: float) -> None:
    """Per-episode advantages and returns; terminal bootstrap value is 0."""
    for ep in buf.episodes:
        T = len(ep.rewards)
        adv = np.zeros(T)
        last = 0.0
        for t in range(T - 1, -1, -1):
            next_v = ep.values[t + 1] if t + 1 < T else 0.0
            delta = ep.rewards[t] + gamma * next_v - ep.values[t]
            last = delta + gamma * lam * last
            adv[t] = last
        ep.advantages = adv
        ep.returns = adv + ep.values


def lr_at(update_index: int, cfg: TrainConfig) -> float:
    """Linear decay from lr0 to 0 over total_updates, floored at 0."""
    frac = 1.0 - update_index / cfg.total_updates
    return cfg.lr0 * max(frac, 0.0)


class Adam:
    """Standard Adam (beta1=0.9, beta2=0.999, eps=1e-8), one slot pair per
    named parameter tensor; updates parameters in place."""

    def __init__(self, params: net.PolicyParams, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.t = 0
        self.m = {name: np.zeros_like(a) for name, a in params.named_arrays()}
        self.v = {name: np.zeros_like(a) for name, a in params.named_arrays()}

    def step(self, params: net.PolicyParams, grads: dict[str, np.ndarray], lr: float) -> None:
        self.t += 1
        b1c = 1.0 - self.beta1**self.t
        b2c = 1.0 - self.beta2**self.t
        for name, a in params.named_arrays():
            gr = grads[name]
            m = self.m[name]
            v = self.v[name]
            m *= self.beta1
            m += (1.0 - self.beta1) * gr
            v *= self.beta2
            v += (1.0 - self.beta2) * gr * gr
            a -= lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)


def clip_grads(grads: dict[str, np.ndarray], max_norm: float) -> float:
    """Global-norm clipping in place; returns the pre-clip norm."""
    total = 0.0
    for gr in grads.values():
        total += float((gr * gr).sum())
    norm = float(np.sqrt(total))
    if max_norm > 0 and norm > max_norm:
        scale = max_norm / norm
        for gr in grads.values():
            gr *= scale
    return norm


def assemble_batch(buf: RolloutBuffer, episodes: list[EpisodeRollout] | None = None):
    """Flatten episodes into one disjoint-union forward batch.

    Returns (batch, x, masks, action_pos, logp_old, returns, advantages)
    where action_pos indexes into the batch-wide op rows.
    """
    if episodes is None:
        episodes = buf.episodes
    graphs = []
    for ep in episodes:
        graphs.extend([ep.graph] * len(ep.actions))
    batch = net.GraphBatch.from_graphs(graphs)
    x = np.concatenate([ep.feats.reshape(-1, net.FEATURE_DIM) for ep in episodes])
    masks = np.concatenate([ep.masks.ravel() for ep in episodes])
    actions = np.concatenate([ep.actions for ep in episodes])
    action_pos = batch.op_ptr[:-1] + actions
    logp_old = np.concatenate([ep.logps for ep in episodes])
    returns = np.concatenate([ep.returns for ep in episodes])
    advantages = np.concatenate([ep.advantages for ep in episodes])
    return batch, x, masks, action_pos, logp_old, returns, advantages


def ppo_loss(params: net.PolicyParams, assembled, cfg: TrainConfig, with_seeds: bool = True):
    """Clipped-surrogate loss over one assembled batch.

    Returns (loss, seeds, stats, trace) where seeds is (d_logits,
    d_values), the exact gradient of the loss with respect to the raw
    logits and values; None when with_seeds is false.
    """
    batch, x, masks, action_pos, logp_old, returns, adv = assembled
    B = batch.num_graphs
    tr = net.forward(batch, x, params)
    logp_all, probs = net.masked_log_softmax(tr.logits, masks, batch.op_ptr, batch.op_graph)
    logp = logp_all[action_pos]
    ratio = np.exp(logp - logp_old)
    surr1 = ratio * adv
    surr2 = np.clip(ratio, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps) * adv
    policy_loss = -np.minimum(surr1, surr2).mean()
    value_err = tr.values - returns
    value_loss = (value_err**2).mean()
    # entropy over the eligible support only (p log p with p = 0 excluded)
    pos = probs > 0.0
    plogp = np.zeros_like(probs)
    plogp[pos] = probs[pos] * logp_all[pos]
    ent_per_graph = -np.add.reduceat(plogp, batch.op_ptr[:-1])
    entropy = ent_per_graph.mean()
    loss = policy_loss + cfg.value_coef * value_loss - cfg.ent_coef * entropy
    stats = {
        "policy_loss": float(policy_loss),
        "value_loss": float(value_loss),
        "entropy": float(entropy),
        "clip_frac": float((np.abs(ratio - 1.0) > cfg.clip_eps).mean()),
        "approx_kl": float((logp_old - logp).mean()),
    }
    if not with_seeds:
        return float(loss), None, stats, tr

    use_unclipped = surr1 <= surr2
    d_logp_taken = np.where(use_unclipped, -adv * ratio, 0.0) / B
    d_logits = -probs * d_logp_taken[batch.op_graph]
    d_logits[action_pos] += d_logp_taken
    # entropy bonus: d(-c*H)/dl_v = c * p_v * (logp_v + H)
    ent_seed = np.zeros_like(probs)
    ent_seed[pos] = probs[pos] * (logp_all[pos] + ent_per_graph[batch.op_graph][pos])
    d_logits += (cfg.ent_coef / B) * ent_seed
    d_values = cfg.value_coef * 2.0 * value_err / B
    return float(loss), (d_logits, d_values), stats, tr


def normalize_advantages(advantages: np.ndarray) -> np.ndarray:
    """Batch standardization (mean 0, std 1, eps-guarded)."""
    return (advantages - advantages.mean()) / (advantages.std() + 1e-8)


def ppo_update(
    params: net.PolicyParams,
    buf: RolloutBuffer,
    cfg: TrainConfig,
    update_index: int,
    adam: Adam | None = None,
):
    """Clipped-surrogate update over the whole buffer, update_epochs times.

    Advantages are normalized per batch (shift/scale only).  Returns the
    updated params and averaged stats.
    """
    if adam is None:
        adam = Adam(params)
    # advantages are normalized over the whole batch, then the update walks
    # episode-group minibatches so each epoch takes several optimizer steps
    all_adv = normalize_advantages(np.concatenate([ep.advantages for ep in buf.episodes]))
    offset = 0
    for ep in buf.episodes:
        ep.advantages = all_adv[offset : offset + len(ep.actions)]
        offset += len(ep.actions)
    groups = np.array_split(np.arange(len(buf.episodes)), max(min(cfg.num_minibatches, len(buf.episodes)), 1))
    chunks = [assemble_batch(buf, [buf.episodes[i] for i in g]) for g in groups if len(g)]
    lr = lr_at(update_index, cfg)

    stats = {"policy_loss": 0.0, "value_loss": 0.0, "entropy": 0.0, "clip_frac": 0.0, "approx_kl": 0.0}
    steps = cfg.update_epochs * len(chunks)
    for _ in range(cfg.update_epochs):
        for chunk in chunks:
            loss, seeds, chunk_stats, tr = ppo_loss(params, chunk, cfg)
            if not np.isfinite(loss):
                raise TrainingDiverged(f"non-finite loss at update {update_index}: {chunk_stats}")
            grads = net.backward(tr, seeds[0], seeds[1], params)
            clip_grads(grads, cfg.grad_clip_norm)
            adam.step(params, grads, lr)
            for key in stats:
                stats[key] += chunk_stats[key] / steps
    return params, stats


def train(cfg: TrainConfig, out_dir, sampler=None, progress=None):
    """Full training run; writes train_log.csv and checkpoint.json under
    out_dir (plus periodic checkpoint_<n>.json when configured).  Fully
    reproducible for a fixed config."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if sampler is None:
        sampler = default_sampler(cfg)
    params = net.init_params(cfg.seed)
    adam = Adam(params)
    log_rows = [LOG_HEADER]

    def metadata(updates_done):
        return {
            "seed": cfg.seed,
            "geometry": cfg.geometry,
            "dur_lo": cfg.dur_lo,
            "dur_hi": cfg.dur_hi,
            "total_updates": cfg.total_updates,
            "updates_done": updates_done,
            "episodes": updates_done * cfg.episodes_per_update,
            "shaping": cfg.shaping,
        }

    for update in range(cfg.total_updates):
        buf = collect_rollout(params, sampler, cfg, update)
        compute_gae(buf, cfg.gamma, cfg.gae_lambda)
        mean_makespan = float(np.mean([ep.makespan for ep in buf.episodes]))
        mean_return = float(np.mean([ep.rewards.sum() for ep in buf.episodes]))
        params, stats = ppo_update(params, buf, cfg, update, adam)
        log_rows.append(
            f"{update},{lr_at(update, cfg)!r},{mean_makespan!r},{mean_return!r},"
            f"{stats['policy_loss']!r},{stats['value_loss']!r},{stats['entropy']!r},{stats['clip_frac']!r}"
        )
        if cfg.checkpoint_interval and (update + 1) % cfg.checkpoint_interval == 0:
            net.save_checkpoint(params, out_dir / f"checkpoint_{update + 1}.json", metadata(update + 1))
        if progress is not None:
            progress(update, mean_makespan, stats)

    (out_dir / "train_log.csv").write_text("\n".join(log_rows) + "\n", encoding="utf-8")
    net.save_checkpoint(params, out_dir / "checkpoint.json", metadata(cfg.total_updates))
    return params, log_rows
