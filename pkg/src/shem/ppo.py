"""Clipped-surrogate actor-critic and the adversarial imitation training loop.

The policy is a diagonal Gaussian in an unbounded space followed by a tanh
squash and an affine map onto per-dimension bounds. Densities carry the
squash Jacobian so they are proper densities over the bounded action box,
which the discriminator needs at expert actions too.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .airl import (
    Normalizer,
    RewardNet,
    TrainingError,
    init_reward_net,
    reward_value,
    state_features,
    update_discriminator,
)
from .env import ACTION_DIM, STATE_DIM, Action, EnvConfig, HomeEnv
from .nn import AdamState, Approximator, adam_update, clip_grad_norm, init_approximator

log = logging.getLogger(__name__)

_LOG_2PI = math.log(2 * math.pi)
INSET = 1e-6


def _log_one_minus_tanh2(u):
    # log(1 - tanh(u)^2) without cancellation for large |u|
    return 2.0 * (math.log(2.0) - u - np.logaddexp(0.0, -2.0 * u))


@dataclass(frozen=True, eq=False)
class GaussianPolicy:
    mean_net: Approximator
    log_std: np.ndarray
    low: np.ndarray
    high: np.ndarray
    obs_norm: Normalizer | None = None
    debug: bool = False

    def __post_init__(self):
        for name in ("log_std", "low", "high"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        if not (self.log_std.shape == self.low.shape == self.high.shape == (self.mean_net.out_dim,)):
            raise ValueError("log_std, low, high must each have one entry per action dimension")
        if not np.all(self.low < self.high):
            raise ValueError("every bound needs low < high")

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.high + self.low)

    @property
    def half(self) -> np.ndarray:
        return 0.5 * (self.high - self.low)

    @property
    def params(self) -> np.ndarray:
        return np.concatenate([self.mean_net.params, self.log_std])

    def with_params(self, params) -> "GaussianPolicy":
        params = np.asarray(params, dtype=float)
        k = self.mean_net.params.size
        return replace(self, mean_net=self.mean_net.with_params(params[:k]), log_std=params[k:].copy())

    def inputs(self, S) -> np.ndarray:
        S = np.atleast_2d(np.asarray(S, dtype=float))
        F = state_features(S) if S.shape[1] == STATE_DIM else S
        return F if self.obs_norm is None else self.obs_norm(F)

    def mean(self, S) -> np.ndarray:
        return self.mean_net(self.inputs(S))

    def squash(self, U) -> np.ndarray:
        return self.center + self.half * np.tanh(U)

    def unsquash(self, A) -> np.ndarray:
        y = (np.asarray(A, dtype=float) - self.center) / self.half
        if self.debug and np.any(np.abs(y) >= 1 - INSET):
            log.debug("action on or outside the squash bounds; inset-clamped")
        return np.arctanh(np.clip(y, -1 + INSET, 1 - INSET))

    def logprob_raw(self, S, U, mu=None) -> np.ndarray:
        """Density of squashed actions given their pre-squash values ``U``."""
        U = np.atleast_2d(np.asarray(U, dtype=float))
        mu = self.mean(S) if mu is None else mu
        z = (U - mu) * np.exp(-self.log_std)
        gauss = -0.5 * z * z - self.log_std - 0.5 * _LOG_2PI
        jac = _log_one_minus_tanh2(U) + np.log(self.half)
        return np.sum(gauss - jac, axis=1)

    def logprob(self, S, A) -> np.ndarray:
        return self.logprob_raw(S, self.unsquash(np.atleast_2d(A)))

    def deterministic(self, S) -> np.ndarray:
        return self.squash(self.mean(S))

    def entropy(self) -> float:
        """Entropy of the pre-squash Gaussian (the squashed one has no closed form)."""
        return float(np.sum(self.log_std + 0.5 * (_LOG_2PI + 1.0)))

    def to_dict(self) -> dict:
        return {
            "mean_net": self.mean_net.to_dict(),
            "log_std": self.log_std.tolist(),
            "low": self.low.tolist(),
            "high": self.high.tolist(),
            "obs_norm": None if self.obs_norm is None else self.obs_norm.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GaussianPolicy":
        norm = None if d.get("obs_norm") is None else Normalizer.from_dict(d["obs_norm"])
        return cls(Approximator.from_dict(d["mean_net"]), d["log_std"], d["low"], d["high"], norm)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path) -> "GaussianPolicy":
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"policy snapshot not found: {path}")
        return cls.from_dict(json.loads(path.read_text()))


def policy_bounds(env_cfg: EnvConfig, margin: float = 0.05) -> tuple[np.ndarray, np.ndarray]:
    """Physical action box widened by ``margin`` of each range.

    The widening keeps saturated expert actions (full discharge, HVAC off)
    strictly inside the squash range; the environment projects the excess back.
    """
    lo = np.array([-env_cfg.d_max, 0.0])
    hi = np.array([env_cfg.c_max, env_cfg.h_max])
    pad = margin * (hi - lo)
    return lo - pad, hi + pad


def init_policy(env_cfg: EnvConfig, hidden=(64, 64), seed: int = 0, *, obs_norm: Normalizer | None = None,
                init_log_std: float = -1.0, margin: float = 0.05, in_dim: int = STATE_DIM + 1) -> GaussianPolicy:
    net = init_approximator((in_dim, *hidden, ACTION_DIM), "tanh", seed=seed)
    # small last layer: the initial mean sits near the box center
    p = net.params.copy()
    w_sl, _ = net.param_layout[-1]
    p[w_sl] *= 0.01
    lo, hi = policy_bounds(env_cfg, margin)
    return GaussianPolicy(net.with_params(p), np.full(ACTION_DIM, init_log_std), lo, hi, obs_norm)


def sample_action(policy: GaussianPolicy, state, rng: np.random.Generator):
    """One draw for a single state: ``(squashed action, log density, pre-squash u)``."""
    mu = policy.mean(state)
    u = mu + np.exp(policy.log_std) * rng.standard_normal(mu.shape)
    lp = policy.logprob_raw(None, u, mu=mu)
    a = policy.squash(u)
    return a[0], float(lp[0]), u[0]


def action_logprob(policy: GaussianPolicy, state, action) -> float:
    return float(policy.logprob(state, action)[0])


class PolicyController:
    """Deterministic squashed-mean controller for evaluation runs."""

    def __init__(self, policy: GaussianPolicy):
        self.policy = policy

    def reset(self):
        pass

    def act(self, env: HomeEnv) -> Action:
        a = self.policy.deterministic(env.state.as_array())[0]
        return Action(float(a[0]), float(a[1]))


# ---------------------------------------------------------------- rollouts

@dataclass
class RolloutBuffer:
    states: np.ndarray
    raw_actions: np.ndarray
    actions: np.ndarray        # squashed, as sampled
    executed: np.ndarray       # after the environment's projection
    next_states: np.ndarray
    logprobs: np.ndarray
    costs: np.ndarray          # (x1, x2, x3) per step, for logging
    dones: np.ndarray          # day boundary or trace end after this step
    rewards: np.ndarray | None = None
    values: np.ndarray | None = None
    next_values: np.ndarray | None = None
    gamma: float = 0.99
    gae_lambda: float = 0.95

    def __len__(self) -> int:
        return self.states.shape[0]


def _empty_buffer(gamma, lam) -> RolloutBuffer:
    z2 = np.zeros((0, ACTION_DIM))
    zs = np.zeros((0, STATE_DIM))
    return RolloutBuffer(zs, z2, z2, z2, zs, np.zeros(0), np.zeros((0, 3)), np.zeros(0, dtype=bool),
                         np.zeros(0), gamma=gamma, gae_lambda=lam)


def collect_rollout(env: HomeEnv, policy: GaussianPolicy, reward, steps: int, rng: np.random.Generator,
                    gamma: float = 0.99, gae_lambda: float = 0.95, slots_per_episode: int = 24) -> RolloutBuffer:
    """Run ``steps`` slots with stochastic actions, continuing from the env's state.

    ``reward`` is a :class:`RewardNet` (rewards from the learned shaped reward)
    or a callable ``(S, A, S2, costs) -> rewards``; either way it is applied
    after collection, with the reward held fixed. The env is reset to slot 0
    whenever it runs off the end of its trace.
    """
    if steps == 0:
        return _empty_buffer(gamma, gae_lambda)
    S = np.empty((steps, STATE_DIM))
    S2 = np.empty((steps, STATE_DIM))
    U = np.empty((steps, ACTION_DIM))
    A = np.empty((steps, ACTION_DIM))
    X = np.empty((steps, ACTION_DIM))
    LP = np.empty(steps)
    C = np.empty((steps, 3))
    D = np.zeros(steps, dtype=bool)
    for i in range(steps):
        if env.state is None or env.exhausted:
            env.reset(0, seed=int(rng.integers(2**31)))
        s = env.state.as_array()
        a, lp, u = sample_action(policy, s, rng)
        out = env.step(Action(float(a[0]), float(a[1])))
        S[i], U[i], A[i], LP[i] = s, u, a, lp
        X[i] = out.action.as_array()
        S2[i] = out.next_state.as_array()
        C[i] = (out.x1, out.x2, out.x3)
        D[i] = env.exhausted or env.slot % slots_per_episode == 0
    buf = RolloutBuffer(S, U, A, X, S2, LP, C, D, gamma=gamma, gae_lambda=gae_lambda)
    buf.rewards = compute_rewards(reward, buf)
    return buf


def compute_rewards(reward, buf: RolloutBuffer) -> np.ndarray:
    if isinstance(reward, RewardNet):
        return np.asarray(reward_value(reward, buf.states, buf.executed, buf.next_states), dtype=float)
    return np.asarray(reward(buf.states, buf.executed, buf.next_states, buf.costs), dtype=float)


def explicit_reward_fn(beta_t: float = 1.0):
    if beta_t < 0:
        raise ValueError("beta_t must be non-negative")

    def fn(S, A, S2, costs):
        return -(costs[:, 0] + costs[:, 1]) - beta_t * costs[:, 2]
    return fn


def gae_advantages(buffer: RolloutBuffer, normalize: bool = True):
    """``(advantages, returns)``; advantage recursion restarts after every ``done``.

    A ``done`` step is a truncation: its own TD error still bootstraps from the
    value of the next state. Returns are computed before normalization.
    """
    if buffer.values is None or buffer.next_values is None or buffer.rewards is None:
        raise ValueError("fill rewards, values and next_values before computing advantages")
    g, lam = buffer.gamma, buffer.gae_lambda
    n = len(buffer)
    delta = buffer.rewards + g * buffer.next_values - buffer.values
    adv = np.zeros(n)
    run = 0.0
    for t in range(n - 1, -1, -1):
        run = delta[t] + (0.0 if buffer.dones[t] or t == n - 1 else g * lam * run)
        adv[t] = run
    returns = adv + buffer.values
    if normalize and n > 1:
        adv = (adv - adv.mean()) / (adv.std() + 1e-8)
    return adv, returns


def fill_values(buffer: RolloutBuffer, policy: GaussianPolicy, value_net: Approximator) -> None:
    buffer.values = value_net(policy.inputs(buffer.states))[:, 0]
    buffer.next_values = value_net(policy.inputs(buffer.next_states))[:, 0]


# ---------------------------------------------------------------- PPO

@dataclass(frozen=True)
class PpoConfig:
    clip_eps: float = 0.2
    gae_lambda: float = 0.95
    epochs: int = 10
    minibatch: int = 64
    lr_policy: float = 3e-4
    lr_value: float = 1e-3
    steps_per_iter: int = 2048
    entropy_coef: float = 0.01
    N: int = 200
    gamma: float = 0.99
    max_grad_norm: float = 0.5
    hidden: tuple = (64, 64)
    init_log_std: float = -1.0
    min_log_std: float = -5.0
    action_margin: float = 0.05
    normalize_rewards: bool = True

    def __post_init__(self):
        if not 0 < self.clip_eps < 1:
            raise ValueError("clip_eps must lie in (0, 1)")
        if not 0 <= self.gae_lambda <= 1:
            raise ValueError("gae_lambda must lie in [0, 1]")
        if self.epochs < 1 or self.minibatch < 1 or self.steps_per_iter < 1 or self.N < 0:
            raise ValueError("epochs, minibatch, steps_per_iter >= 1 and N >= 0 required")
        object.__setattr__(self, "hidden", tuple(self.hidden))


@dataclass
class PpoState:
    policy: GaussianPolicy
    value_net: Approximator
    opt_policy: AdamState
    opt_value: AdamState


@dataclass(frozen=True)
class PpoStats:
    policy_loss: float
    value_loss: float
    approx_kl: float
    clip_fraction: float


def init_ppo_state(policy: GaussianPolicy, cfg: PpoConfig, seed: int = 0) -> PpoState:
    vnet = init_approximator((policy.mean_net.in_dim, *cfg.hidden, 1), "tanh", seed=seed + 7)
    return PpoState(policy, vnet, AdamState.fresh(policy.params.size, cfg.lr_policy),
                    AdamState.fresh(vnet.params.size, cfg.lr_value))


def policy_loss_and_grad(policy: GaussianPolicy, X, U, logp_old, adv, clip_eps: float, entropy_coef: float):
    """Clipped surrogate (minus entropy bonus) and its gradient w.r.t. ``policy.params``.

    ``X`` are already-normalized policy inputs.
    """
    mu = policy.mean_net(X)
    inv_std = np.exp(-policy.log_std)
    z = (U - mu) * inv_std
    logp = policy.logprob_raw(None, U, mu=mu)
    ratio = np.exp(logp - logp_old)
    clipped = np.clip(ratio, 1 - clip_eps, 1 + clip_eps)
    m = adv.size
    surr = np.minimum(ratio * adv, clipped * adv)
    loss = -float(surr.mean()) - entropy_coef * policy.entropy()
    # gradient flows only through rows where the unclipped term is the minimum
    flows = ~(((adv > 0) & (ratio > 1 + clip_eps)) | ((adv < 0) & (ratio < 1 - clip_eps)))
    dlogp = np.where(flows, -adv * ratio / m, 0.0)
    g_mean = policy.mean_net.grad_params(X, dlogp[:, None] * z * inv_std)
    g_log_std = (dlogp[:, None] * (z * z - 1.0)).sum(axis=0) - entropy_coef
    stats = (float(np.mean(logp_old - logp)), float(np.mean(np.abs(ratio - 1) > clip_eps)))
    return loss, np.concatenate([g_mean, g_log_std]), stats


def ppo_update(state: PpoState, buffer: RolloutBuffer, cfg: PpoConfig, rng: np.random.Generator):
    """``cfg.epochs`` shuffled minibatch sweeps; returns ``(state', PpoStats)``."""
    n = len(buffer)
    if n == 0:
        raise ValueError("empty rollout buffer")
    policy, vnet = state.policy, state.value_net
    adv, ret = gae_advantages(buffer)
    X = policy.inputs(buffer.states)
    U = buffer.raw_actions
    lp_old = buffer.logprobs
    opt_p, opt_v = state.opt_policy, state.opt_value
    pl, vl, kl, cf, k = 0.0, 0.0, 0.0, 0.0, 0
    for _ in range(cfg.epochs):
        order = rng.permutation(n)
        for i in range(0, n, cfg.minibatch):
            idx = order[i:i + cfg.minibatch]
            loss, grad, (kl_i, cf_i) = policy_loss_and_grad(policy, X[idx], U[idx], lp_old[idx], adv[idx],
                                                            cfg.clip_eps, cfg.entropy_coef)
            v = vnet(X[idx])[:, 0]
            err = v - ret[idx]
            v_loss = float(np.mean(err * err))
            if not (np.isfinite(loss) and np.isfinite(v_loss)):
                raise TrainingError(f"non-finite PPO loss (policy={loss}, value={v_loss})")
            params, opt_p = adam_update(policy.params, clip_grad_norm(grad, cfg.max_grad_norm), opt_p)
            k_mean = policy.mean_net.params.size
            params[k_mean:] = np.maximum(params[k_mean:], cfg.min_log_std)
            policy = policy.with_params(params)
            gv = vnet.grad_params(X[idx], (2.0 / idx.size) * err[:, None])
            vp, opt_v = adam_update(vnet.params, clip_grad_norm(gv, cfg.max_grad_norm), opt_v)
            vnet = vnet.with_params(vp)
            pl += loss
            vl += v_loss
            kl += kl_i
            cf += cf_i
            k += 1
    return PpoState(policy, vnet, opt_p, opt_v), PpoStats(pl / k, vl / k, kl / k, cf / k)


# ---------------------------------------------------------------- outer loop

@dataclass(frozen=True)
class AirlConfig:
    batch_size: int = 256        # rows per class in each discriminator batch
    disc_updates: int = 5
    lr: float = 1e-3
    hidden: tuple = (32, 32)
    gamma: float = 0.99
    max_grad_norm: float = 10.0

    def __post_init__(self):
        if self.batch_size < 1 or self.disc_updates < 0:
            raise ValueError("batch_size >= 1 and disc_updates >= 0 required")
        object.__setattr__(self, "hidden", tuple(self.hidden))


@dataclass(frozen=True)
class TrainConfig:
    ppo: PpoConfig = field(default_factory=PpoConfig)
    airl: AirlConfig = field(default_factory=AirlConfig)
    eval_every: int = 10
    snapshot_every: int = 0

    def to_dict(self) -> dict:
        return {"ppo": asdict(self.ppo), "airl": asdict(self.airl),
                "eval_every": self.eval_every, "snapshot_every": self.snapshot_every}

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {"ppo", "airl", "eval_every", "snapshot_every"}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ValueError(f"unknown training config key(s): {', '.join(unknown)}")
        for name, sub in (("ppo", PpoConfig), ("airl", AirlConfig)):
            bad = sorted(set(d.get(name, {})) - {f.name for f in fields(sub)})
            if bad:
                raise ValueError(f"unknown {name} config key(s): {', '.join(bad)}")
        return cls(PpoConfig(**d.get("ppo", {})), AirlConfig(**d.get("airl", {})),
                   int(d.get("eval_every", 10)), int(d.get("snapshot_every", 0)))


LOG_COLUMNS = ("iteration", "disc_loss", "mean_agent_score", "mean_expert_score", "mean_agent_reward",
               "policy_loss", "value_loss", "approx_kl", "clip_fraction", "rollout_cost", "eval_TEC", "eval_MTD")


def write_training_log(rows: list[dict], path) -> None:
    with Path(path).open("w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(LOG_COLUMNS)
        for r in rows:
            w.writerow([r.get(c, "") for c in LOG_COLUMNS])


class _RewardScaler:
    """Running std of discounted returns; rewards are divided by it for PPO only."""

    def __init__(self, gamma: float):
        self.gamma = gamma
        self.count, self.mean, self.m2 = 0, 0.0, 0.0
        self.ret = 0.0

    def __call__(self, rewards: np.ndarray, dones: np.ndarray) -> np.ndarray:
        for r, d in zip(rewards, dones):
            self.ret = self.gamma * self.ret + r
            self.count += 1
            delta = self.ret - self.mean
            self.mean += delta / self.count
            self.m2 += delta * (self.ret - self.mean)
            if d:
                self.ret = 0.0
        std = math.sqrt(self.m2 / self.count) if self.count > 1 else 1.0
        return rewards / max(std, 1e-6)


def _evaluate_policy(eval_env, policy):
    from .bench import evaluate

    m = evaluate(eval_env, PolicyController(policy))
    return m.tec, m.mtd


def _run_loop(env: HomeEnv, policy: GaussianPolicy, cfg: TrainConfig, rng: np.random.Generator, seed: int,
              reward_step, eval_env=None, snapshot_dir=None, on_row=None):
    pc = cfg.ppo
    state = init_ppo_state(policy, pc, seed)
    scaler = _RewardScaler(pc.gamma) if pc.normalize_rewards else None
    logs = []
    env.reset(0, seed=int(rng.integers(2**31)))
    for it in range(pc.N):
        t0 = time.perf_counter()
        buf = collect_rollout(env, state.policy, lambda *a: np.zeros(len(a[0])), pc.steps_per_iter, rng,
                              pc.gamma, pc.gae_lambda)
        row = {"iteration": it}
        row.update(reward_step(state.policy, buf, rng))
        raw_rewards = buf.rewards
        if scaler is not None:
            buf.rewards = scaler(raw_rewards, buf.dones)
        fill_values(buf, state.policy, state.value_net)
        state, st = ppo_update(state, buf, pc, rng)
        row.update(mean_agent_reward=float(raw_rewards.mean()), policy_loss=st.policy_loss,
                   value_loss=st.value_loss, approx_kl=st.approx_kl, clip_fraction=st.clip_fraction,
                   rollout_cost=float((buf.costs[:, 0] + buf.costs[:, 1]).mean()))
        if eval_env is not None and cfg.eval_every and ((it + 1) % cfg.eval_every == 0 or it == pc.N - 1):
            row["eval_TEC"], row["eval_MTD"] = _evaluate_policy(eval_env, state.policy)
        if snapshot_dir is not None and cfg.snapshot_every and (it + 1) % cfg.snapshot_every == 0:
            state.policy.save(Path(snapshot_dir) / f"policy_{it + 1:05d}.json")
        logs.append(row)
        if on_row is not None:
            on_row(row)
        log.debug("iter %d done in %.2fs: %s", it, time.perf_counter() - t0, row)
    return state.policy, logs


def train_hmpc_airl(env: HomeEnv, demos, cfgs: TrainConfig | None = None, seed: int = 0, *,
                    eval_env: HomeEnv | None = None, snapshot_dir=None, on_row=None, return_reward: bool = False):
    """Alternate discriminator and PPO phases for ``cfgs.ppo.N`` iterations.

    Each iteration collects ``steps_per_iter`` agent slots with the current
    policy, takes ``disc_updates`` discriminator steps on expert rows against
    agent rows drawn from that rollout, relabels the rollout with the updated
    reward, and runs one PPO update. Returns ``(policy, logs)`` (plus the
    reward net when ``return_reward``).
    """
    cfg = cfgs or TrainConfig()
    if len(demos) == 0:
        raise ValueError("no demonstrations")
    rng = np.random.default_rng(seed)
    Se, Ae, S2e = demos.arrays()
    obs_norm = Normalizer.fit(state_features(Se))
    act_norm = Normalizer.fit(Ae)
    policy = init_policy(env.cfg, cfg.ppo.hidden, seed, obs_norm=obs_norm, init_log_std=cfg.ppo.init_log_std,
                         margin=cfg.ppo.action_margin)
    ac = cfg.airl
    holder = {"rnet": init_reward_net(ac.hidden, ac.gamma, seed + 3, state_norm=obs_norm, action_norm=act_norm)}
    holder["opt"] = AdamState.fresh(holder["rnet"].params.size, ac.lr)

    def reward_step(pol, buf, rng):
        stats = None
        for _ in range(ac.disc_updates):
            ie = rng.integers(len(Se), size=ac.batch_size)
            ia = rng.integers(len(buf), size=ac.batch_size)
            holder["rnet"], holder["opt"], stats = update_discriminator(
                holder["rnet"], (Se[ie], Ae[ie], S2e[ie]), (buf.states[ia], buf.executed[ia], buf.next_states[ia]),
                pol, holder["opt"], ac.max_grad_norm)
        buf.rewards = compute_rewards(holder["rnet"], buf)
        if stats is None:
            return {}
        return {"disc_loss": stats.loss, "mean_agent_score": stats.agent_score,
                "mean_expert_score": stats.expert_score}

    policy, logs = _run_loop(env, policy, cfg, rng, seed, reward_step, eval_env, snapshot_dir, on_row)
    if return_reward:
        return policy, logs, holder["rnet"]
    return policy, logs


def _exploration_normalizer(env: HomeEnv, rng: np.random.Generator) -> Normalizer:
    # states seen under uniformly random actions over one pass of the trace
    env.reset(0, seed=int(rng.integers(2**31)))
    rows = []
    c = env.cfg
    while not env.exhausted:
        rows.append(env.state.as_array())
        env.step(Action(float(rng.uniform(-c.d_max, c.c_max)), float(rng.uniform(0, c.h_max))))
    return Normalizer.fit(state_features(np.array(rows)))


def train_explicit_ppo(env: HomeEnv, cfgs: TrainConfig | None = None, seed: int = 0, beta_t: float = 1.0, *,
                       eval_env: HomeEnv | None = None, snapshot_dir=None, on_row=None):
    """The same PPO learner on the hand-written cost-based reward."""
    cfg = cfgs or TrainConfig()
    rng = np.random.default_rng(seed)
    obs_norm = _exploration_normalizer(env, rng)
    policy = init_policy(env.cfg, cfg.ppo.hidden, seed, obs_norm=obs_norm, init_log_std=cfg.ppo.init_log_std,
                         margin=cfg.ppo.action_margin)
    fn = explicit_reward_fn(beta_t)

    def reward_step(pol, buf, rng):
        buf.rewards = compute_rewards(fn, buf)
        return {}

    return _run_loop(env, policy, cfg, rng, seed, reward_step, eval_env, snapshot_dir, on_row)
