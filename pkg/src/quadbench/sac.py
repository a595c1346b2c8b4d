"""Soft actor-critic on the hand-written MLPs, asymmetric arrangement.

The actor maps the flattened observation history to a squashed-Gaussian
policy over the 4-dim action (thrust increment + body rates). The critics
consume the privileged 21-dim state observation plus the action. Targets
are clipped double-Q with entropy bonus and a learned temperature. All
gradients are assembled analytically through the reparameterized sampling
path; nothing here depends on an autodiff framework.

Deployment uses ``act``: the deterministic action minus the deterministic
action at the perfect-hover observation, so equilibrium output is exactly
zero regardless of network bias.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .config import SacSettings as SacConfig
from .env import PolicyAction
from .errors import DivergedTrainingError, NotEnoughDataError, ShapeError
from .mlp import Adam, MlpParams, mlp_backward, mlp_forward, mlp_init, mlp_input_grad, soft_update

LOG_STD_MIN = -20.0
LOG_STD_MAX = 2.0
HIDDEN = 256
ACTION_DIM = 4
CRITIC_OBS_DIM = 21
_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


@dataclass
class ActorNet:
    """Trunk of three tanh layers; the final linear layer stacks the mean
    and log-std heads as its first/last four columns."""

    mlp: MlpParams
    action_scale: np.ndarray   # (4,), tanh output scaling

    @property
    def obs_dim(self) -> int:
        return self.mlp.weights[0].shape[0]

    def copy(self) -> "ActorNet":
        return ActorNet(self.mlp.copy(), self.action_scale.copy())


@dataclass
class CriticNet:
    heads: list                # one or two independent Q MlpParams

    def copy(self) -> "CriticNet":
        return CriticNet([h.copy() for h in self.heads])

    def parameters(self) -> list:
        out = []
        for h in self.heads:
            out.extend(h.parameters())
        return out


def make_actor(obs_dim: int, action_scale, rng: np.random.Generator,
               dtype=np.float32) -> ActorNet:
    net = mlp_init([obs_dim, HIDDEN, HIDDEN, HIDDEN, 2 * ACTION_DIM],
                   ["tanh", "tanh", "tanh", "linear"], rng, dtype=dtype)
    net.biases[-1][ACTION_DIM:] = -1.0  # start with moderate exploration noise
    return ActorNet(net, np.asarray(action_scale, dtype=float))


def make_critic(rng: np.random.Generator, twin: bool = True,
                obs_dim: int = CRITIC_OBS_DIM, dtype=np.float32) -> CriticNet:
    n = 2 if twin else 1
    heads = [mlp_init([obs_dim + ACTION_DIM, HIDDEN, HIDDEN, HIDDEN, 1],
                      ["relu", "relu", "relu", "linear"], rng, dtype=dtype)
             for _ in range(n)]
    return CriticNet(heads)


def _log1m_tanh2(z: np.ndarray) -> np.ndarray:
    """log(1 - tanh(z)^2), stable for large |z|."""
    return 2.0 * (math.log(2.0) - z - np.logaddexp(0.0, -2.0 * z))


def _dist(net: ActorNet, obs2d: np.ndarray):
    """Trunk forward; returns (mean, log_std raw, log_std clipped, cache)."""
    out, cache = mlp_forward(net.mlp, obs2d)
    mean = out[:, :ACTION_DIM]
    raw = out[:, ACTION_DIM:]
    return mean, raw, np.clip(raw, LOG_STD_MIN, LOG_STD_MAX), cache


def _logp(z: np.ndarray, eps: np.ndarray, log_std: np.ndarray,
          scale: np.ndarray) -> np.ndarray:
    """Log-density of the squashed, scaled action a = scale*tanh(z), per
    sample: Gaussian density of z minus log|da/dz|."""
    per_dim = -0.5 * eps * eps - log_std - _HALF_LOG_2PI \
        - np.log(scale)[None, :] - _log1m_tanh2(z)
    return per_dim.sum(axis=1)


def actor_forward(net: ActorNet, obs, mode: str = "deterministic",
                  rng: np.random.Generator = None):  # type: ignore[assignment]
    """Evaluate the policy on one observation.

    Args:
        mode: "deterministic" (tanh of the mean) or "sample" (reparameterized
            draw; requires rng).
    Returns:
        (action 4-vector, log-density of that action).
    """
    obs = np.asarray(obs)
    if obs.ndim != 1:
        raise ShapeError("actor_forward expects a single flat observation")
    mean, _, log_std, _ = _dist(net, obs[None, :])
    std = np.exp(log_std)
    if mode == "sample":
        if rng is None:
            raise ValueError("sample mode needs an rng")
        eps = rng.standard_normal((1, ACTION_DIM)).astype(mean.dtype)
    elif mode == "deterministic":
        eps = np.zeros((1, ACTION_DIM), dtype=mean.dtype)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    z = mean + std * eps
    pre = np.tanh(z)
    action = net.action_scale * pre[0]
    logp = float(_logp(z, eps, log_std, net.action_scale)[0])
    return action, logp


def act(net: ActorNet, obs, o0) -> PolicyAction:
    """Deployment action: deterministic output minus the output at the
    perfect-hover observation, clamped to the action bounds."""
    a, _ = actor_forward(net, obs, "deterministic")
    a0, _ = actor_forward(net, o0, "deterministic")
    u = np.clip(a - a0, -net.action_scale, net.action_scale)
    return PolicyAction.from_array(u)


def critic_forward(net: CriticNet, priv_obs, action):
    """Q estimates for one (observation, action); returns (q1, q2)."""
    x = np.concatenate([np.asarray(priv_obs, dtype=float),
                        np.asarray(action, dtype=float)])
    qs = [float(mlp_forward(h, x[None, :])[0][0, 0]) for h in net.heads]
    return (qs[0], qs[1]) if len(qs) == 2 else (qs[0], qs[0])


class ReplayBuffer:
    """Ring buffer of transitions with FIFO eviction and uniform sampling."""

    FIELDS = ("actor_obs", "critic_obs", "action", "reward",
              "next_actor_obs", "next_critic_obs", "done")

    def __init__(self, capacity: int, obs_dim: int,
                 critic_obs_dim: int = CRITIC_OBS_DIM, dtype=np.float32):
        self.capacity = int(capacity)
        self.obs_dim = obs_dim
        self.critic_obs_dim = critic_obs_dim
        self.dtype = dtype
        self.size = 0
        self._next = 0
        self._data = None  # allocated lazily, grown geometrically

    def _ensure(self, rows: int):
        rows = min(rows, self.capacity)
        dims = (self.obs_dim, self.critic_obs_dim, ACTION_DIM, 1,
                self.obs_dim, self.critic_obs_dim, 1)
        if self._data is None:
            self._data = [np.empty((rows, d), dtype=self.dtype) for d in dims]
        elif rows > self._data[0].shape[0]:
            self._data = [np.concatenate([a, np.empty((rows - a.shape[0], a.shape[1]),
                                                      dtype=self.dtype)])
                          for a in self._data]

    def __len__(self) -> int:
        return self.size

    def push(self, actor_obs, critic_obs, action, reward,
             next_actor_obs, next_critic_obs, done: float) -> None:
        if self._data is None or (self.size == self._data[0].shape[0]
                                  and self.size < self.capacity):
            self._ensure(max(4096, 2 * self.size))
        i = self._next
        row = (actor_obs, critic_obs, action, (reward,),
               next_actor_obs, next_critic_obs, (done,))
        for a, val in zip(self._data, row):
            a[i] = val
        self._next = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def sample(self, batch: int, rng: np.random.Generator) -> dict:
        """Uniform without replacement within the batch; deterministic per rng."""
        if self.size < batch:
            raise NotEnoughDataError(f"buffer holds {self.size} < batch {batch}")
        idx = rng.choice(self.size, size=batch, replace=False)
        out = {name: a[idx] for name, a in zip(self.FIELDS, self._data)}
        out["reward"] = out["reward"][:, 0]
        out["done"] = out["done"][:, 0]
        return out


def critic_targets(reward, done, q_next_min, logp_next, gamma: float, alpha: float):
    """Bellman target y = r + gamma (1-done) (min Q' - alpha log pi')."""
    return reward + gamma * (1.0 - done) * (q_next_min - alpha * logp_next)


class SacAgent:
    """Actor, twin critics with targets, temperature, and their optimizers."""

    def __init__(self, obs_dim: int, action_scale, cfg: SacConfig,
                 seed: int, dtype=np.float32):
        self.cfg = cfg
        rng = np.random.default_rng(seed)
        self.actor = make_actor(obs_dim, action_scale, rng, dtype=dtype)
        self.critic = make_critic(rng, twin=cfg.twin_critic, dtype=dtype)
        self.target = self.critic.copy()
        self.log_alpha = np.array(math.log(cfg.alpha_init), dtype=dtype)
        adam = dict(beta1=cfg.adam_beta1, beta2=cfg.adam_beta2, eps=cfg.adam_eps)
        self.actor_opt = Adam(self.actor.mlp.parameters(), cfg.lr, **adam)
        self.critic_opt = Adam(self.critic.parameters(), cfg.lr, **adam)
        self.alpha_opt = Adam([self.log_alpha.reshape(1)], cfg.lr, **adam)

    @property
    def alpha(self) -> float:
        return float(np.exp(self.log_alpha))

    def _sample_batch_actions(self, obs2d: np.ndarray, rng: np.random.Generator):
        """Reparameterized batch draw; returns everything the updates need."""
        mean, raw, log_std, cache = _dist(self.actor, obs2d)
        std = np.exp(log_std)
        eps = rng.standard_normal(mean.shape).astype(mean.dtype)
        z = mean + std * eps
        pre = np.tanh(z)
        actions = pre * self.actor.action_scale.astype(mean.dtype)
        logp = _logp(z, eps, log_std, self.actor.action_scale).astype(mean.dtype)
        return actions, logp, dict(raw=raw, log_std=log_std, std=std, eps=eps,
                                   pre=pre, cache=cache)

    def _q_heads(self, net: CriticNet, obs2d: np.ndarray, act2d: np.ndarray):
        x = np.concatenate([obs2d, act2d], axis=1)
        outs = [mlp_forward(h, x) for h in net.heads]
        qs = [o[0][:, 0] for o in outs]
        caches = [o[1] for o in outs]
        return qs, caches

    def update(self, buffer: ReplayBuffer, rng: np.random.Generator) -> dict:
        """One SAC step over a sampled batch; returns the three losses."""
        cfg = self.cfg
        batch = buffer.sample(cfg.batch, rng)
        B = cfg.batch
        alpha = self.alpha
        scale = self.actor.action_scale

        # Critic regression toward the entropy-regularized target. Optional
        # clipped smoothing noise on the bootstrap action counters value
        # spikes once the policy sharpens.
        a_next, logp_next, _ = self._sample_batch_actions(batch["next_actor_obs"], rng)
        if cfg.target_noise > 0.0:
            noise = rng.standard_normal(a_next.shape).astype(a_next.dtype)
            noise = np.clip(noise * cfg.target_noise, -2.0 * cfg.target_noise,
                            2.0 * cfg.target_noise) * scale.astype(a_next.dtype)
            a_next = np.clip(a_next + noise, -scale, scale).astype(a_next.dtype)
        q_next, _ = self._q_heads(self.target, batch["next_critic_obs"], a_next)
        q_next_min = np.minimum(*q_next) if len(q_next) == 2 else q_next[0]
        y = critic_targets(batch["reward"], batch["done"], q_next_min,
                           logp_next, cfg.gamma, alpha)

        qs, caches = self._q_heads(self.critic, batch["critic_obs"], batch["action"])
        critic_loss = 0.0
        grads = []
        for q, cache, head in zip(qs, caches, self.critic.heads):
            err = q - y
            critic_loss += float(np.mean(err * err))
            g, _ = mlp_backward(head, cache, (2.0 / B) * err[:, None])
            grads.extend(g)
        self.critic_opt.step(self.critic.parameters(), grads)

        # Actor: maximize E[min Q - alpha log pi] through the sampling path.
        a_new, logp_new, aux = self._sample_batch_actions(batch["actor_obs"], rng)
        q_new, q_caches = self._q_heads(self.critic, batch["critic_obs"], a_new)
        if len(q_new) == 2:
            pick1 = (q_new[0] <= q_new[1]).astype(a_new.dtype)[:, None]
            g1 = mlp_input_grad(self.critic.heads[0], q_caches[0], pick1)
            g2 = mlp_input_grad(self.critic.heads[1], q_caches[1], 1.0 - pick1)
            dq_da = (g1 + g2)[:, -ACTION_DIM:]
            q_min = np.minimum(q_new[0], q_new[1])
        else:
            dq_da = mlp_input_grad(self.critic.heads[0], q_caches[0],
                                   np.ones((B, 1), dtype=a_new.dtype))[:, -ACTION_DIM:]
            q_min = q_new[0]
        actor_loss = float(np.mean(alpha * logp_new - q_min))

        pre, eps, std = aux["pre"], aux["eps"], aux["std"]
        # dL/dz: entropy term pulls through the tanh correction, Q through a.
        g_mean = alpha * 2.0 * pre - dq_da * scale * (1.0 - pre * pre)
        g_logstd = g_mean * eps * std - alpha
        g_logstd *= (aux["raw"] > LOG_STD_MIN) & (aux["raw"] < LOG_STD_MAX)
        g_head = np.concatenate([g_mean, g_logstd], axis=1) / B
        a_grads, _ = mlp_backward(self.actor.mlp, aux["cache"], g_head)
        self.actor_opt.step(self.actor.mlp.parameters(), a_grads)

        # Temperature toward the entropy target. The target is conventional
        # for actions normalized to [-1, 1], so the scale-induced log-density
        # offset is removed before the comparison.
        logp_norm = logp_new + float(np.log(scale).sum())
        ent_err = float(np.mean(logp_norm)) + cfg.entropy_target
        alpha_loss = float(-self.log_alpha * ent_err)
        if cfg.learn_alpha:
            view = self.log_alpha.reshape(1)
            self.alpha_opt.step([view], [np.array([-ent_err], dtype=view.dtype)])

        for head, tgt in zip(self.critic.heads, self.target.heads):
            soft_update(tgt, head, cfg.tau)

        return {"critic_loss": critic_loss, "actor_loss": actor_loss,
                "alpha_loss": alpha_loss, "alpha": self.alpha}


@dataclass
class TrainSchedule:
    total_steps: int
    n_envs: int = 1
    eval_every: int = 5000


@dataclass
class EpisodeStat:
    episode: int
    steps: int               # global env steps at episode end
    cumulative_reward: float
    final_error: float       # |e| at the last step, m


def _episode_seed(seed: int, env_idx: int, episode: int) -> int:
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(env_idx, episode))
    return int(ss.generate_state(1)[0])


def train(env_factory, obs_config, sac_cfg: SacConfig, schedule: TrainSchedule,
          seed: int, checkpoint_path=None, obs_name: str = None):  # type: ignore[assignment]
    """Round-robin rollout collection with SAC updates after warmup.

    Args:
        env_factory: callable(index) -> HoverEnv, one per parallel slot.
        obs_config: the actor's ObsConfig (defines input width and o0).
    Returns:
        (actor, curve): the trained ActorNet and per-episode statistics.
    """
    from .env import perfect_hover_observation, step_width

    obs_dim = step_width(obs_config) * obs_config.H
    envs = [env_factory(i) for i in range(schedule.n_envs)]
    scale = envs[0].limits.action_scale()
    agent = SacAgent(obs_dim, scale, sac_cfg, seed)
    buffer = ReplayBuffer(sac_cfg.buffer_capacity, obs_dim)
    action_rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(1,)))
    update_rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(2,)))
    o0 = perfect_hover_observation(obs_config)

    episode_idx = [0] * schedule.n_envs
    obs = []
    critic_obs = []
    ep_reward = [0.0] * schedule.n_envs
    for i, env in enumerate(envs):
        obs.append(env.reset(_episode_seed(seed, i, 0)))
        critic_obs.append(env.critic_observation())
    curve: list = []
    n_episodes = 0

    def save(step):
        if checkpoint_path is not None:
            from .checkpoint import save_checkpoint
            save_checkpoint(checkpoint_path, agent, obs_name or "custom",
                            obs_config, sac_cfg, step)

    for gstep in range(schedule.total_steps):
        i = gstep % schedule.n_envs
        env = envs[i]
        if gstep < sac_cfg.warmup_steps:
            u = action_rng.uniform(-scale, scale)
        else:
            a, _ = actor_forward(agent.actor, obs[i], "sample", action_rng)
            a0, _ = actor_forward(agent.actor, o0, "deterministic")
            u = np.clip(a - a0, -scale, scale)
        next_obs, r, done, info = env.step(u)
        next_critic = env.critic_observation()
        crash = 1.0 if (done and info["cause"] == "out_of_bounds") else 0.0
        buffer.push(obs[i], critic_obs[i], u, r, next_obs, next_critic, crash)
        ep_reward[i] += r
        if done:
            n_episodes += 1
            curve.append(EpisodeStat(n_episodes, gstep + 1, ep_reward[i],
                                     info["e_norm"]))
            ep_reward[i] = 0.0
            episode_idx[i] += 1
            obs[i] = env.reset(_episode_seed(seed, i, episode_idx[i]))
            critic_obs[i] = env.critic_observation()
        else:
            obs[i] = next_obs
            critic_obs[i] = next_critic

        if gstep + 1 > sac_cfg.warmup_steps and len(buffer) >= sac_cfg.batch:
            for _ in range(sac_cfg.updates_per_step):
                losses = agent.update(buffer, update_rng)
                if not all(math.isfinite(v) for v in losses.values()):
                    save(gstep + 1)
                    raise DivergedTrainingError(
                        f"non-finite loss at step {gstep + 1}: {losses}")
        if schedule.eval_every and (gstep + 1) % schedule.eval_every == 0:
            save(gstep + 1)

    save(schedule.total_steps)
    return agent.actor, curve
