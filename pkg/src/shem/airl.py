"""Adversarial reward learning: decomposed reward, discriminator, BCE updates.

The reward is ``r(s, a, s') = g(s, a) + gamma * h(s') - h(s)``; the
discriminator scores a transition as ``exp(r) / (exp(r) + pi(a|s))``, which is
evaluated as ``sigmoid(r - log pi)`` so large rewards never overflow.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .env import STATE_DIM, ACTION_DIM, Transition
from .nn import AdamState, Approximator, NumericError, ShapeError, adam_update, clip_grad_norm, init_approximator

FEATURE_DIM = STATE_DIM + 1  # hour becomes (sin, cos)


class TrainingError(RuntimeError):
    pass


def state_features(S) -> np.ndarray:
    """Raw state rows ``(p, l, E, T_out, T_in, u, hour)`` -> 8 features with a cyclic hour."""
    S = np.asarray(S, dtype=float)
    single = S.ndim == 1
    Sb = S[None, :] if single else S
    if Sb.shape[-1] != STATE_DIM:
        raise ShapeError(f"state rows must have {STATE_DIM} entries, got shape {S.shape}")
    ang = 2 * np.pi * Sb[:, 6] / 24.0
    F = np.column_stack([Sb[:, :6], np.sin(ang), np.cos(ang)])
    return F[0] if single else F


@dataclass(frozen=True, eq=False)
class Normalizer:
    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def fit(cls, X, min_std: float = 1e-6) -> "Normalizer":
        X = np.asarray(X, dtype=float)
        std = X.std(axis=0)
        return cls(X.mean(axis=0), np.where(std < min_std, 1.0, std))

    @classmethod
    def identity(cls, dim: int) -> "Normalizer":
        return cls(np.zeros(dim), np.ones(dim))

    def __call__(self, X) -> np.ndarray:
        return (np.asarray(X, dtype=float) - self.mean) / self.std

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Normalizer":
        return cls(np.array(d["mean"], dtype=float), np.array(d["std"], dtype=float))


@dataclass(frozen=True, eq=False)
class RewardNet:
    """``g`` sees normalized (features, action); ``h`` sees normalized features."""

    g_net: Approximator
    h_net: Approximator
    gamma: float = 0.99
    state_norm: Normalizer | None = None
    action_norm: Normalizer | None = None

    def __post_init__(self):
        if not 0 < self.gamma < 1:
            raise ValueError(f"gamma must lie in (0, 1), got {self.gamma}")
        if self.h_net.out_dim != 1 or self.g_net.out_dim != 1:
            raise ShapeError("g_net and h_net must be scalar-valued")
        if self.g_net.in_dim != self.h_net.in_dim + ACTION_DIM:
            raise ShapeError(
                f"g_net input {self.g_net.in_dim} != h_net input {self.h_net.in_dim} + action dim {ACTION_DIM}")

    @property
    def n_g(self) -> int:
        return self.g_net.params.size

    @property
    def params(self) -> np.ndarray:
        return np.concatenate([self.g_net.params, self.h_net.params])

    def with_params(self, params) -> "RewardNet":
        params = np.asarray(params, dtype=float)
        return replace(self, g_net=self.g_net.with_params(params[: self.n_g]),
                       h_net=self.h_net.with_params(params[self.n_g:]))

    def state_inputs(self, S) -> np.ndarray:
        """Raw states (7 columns) or ready features -> normalized h_net inputs."""
        S = np.atleast_2d(np.asarray(S, dtype=float))
        F = state_features(S) if S.shape[1] == STATE_DIM and self.h_net.in_dim == FEATURE_DIM else S
        if F.shape[1] != self.h_net.in_dim:
            raise ShapeError(f"state input dim {F.shape[1]} != h_net input {self.h_net.in_dim}")
        return F if self.state_norm is None else self.state_norm(F)

    def action_inputs(self, A) -> np.ndarray:
        A = np.atleast_2d(np.asarray(A, dtype=float))
        if A.shape[1] != ACTION_DIM:
            raise ShapeError(f"action dim {A.shape[1]} != {ACTION_DIM}")
        return A if self.action_norm is None else self.action_norm(A)


def init_reward_net(hidden=(32, 32), gamma: float = 0.99, seed: int = 0, *,
                    state_norm: Normalizer | None = None, action_norm: Normalizer | None = None,
                    state_dim: int = FEATURE_DIM) -> RewardNet:
    hidden = tuple(hidden)
    g = init_approximator((state_dim + ACTION_DIM, *hidden, 1), "tanh", seed=seed)
    h = init_approximator((state_dim, *hidden, 1), "tanh", seed=seed + 1)
    return RewardNet(g, h, gamma, state_norm, action_norm)


def _pieces(rnet: RewardNet, S, A, S2):
    Z = rnet.state_inputs(S)
    Z2 = rnet.state_inputs(S2)
    X = np.hstack([Z, rnet.action_inputs(A)])
    if not (Z.shape[0] == Z2.shape[0] == X.shape[0]):
        raise ShapeError("s, a, s' must have the same number of rows")
    return X, Z, Z2


def reward_value(rnet: RewardNet, s, a, s_next):
    """Shaped reward per row (scalar for a single transition)."""
    single = np.asarray(s).ndim == 1
    X, Z, Z2 = _pieces(rnet, s, a, s_next)
    r = rnet.g_net(X)[:, 0] + rnet.gamma * rnet.h_net(Z2)[:, 0] - rnet.h_net(Z)[:, 0]
    return float(r[0]) if single else r


def sigmoid(z):
    z = np.asarray(z, dtype=float)
    e = np.exp(-np.abs(z))
    return np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def score_from_logit(r, logpi):
    """``exp(r) / (exp(r) + exp(logpi))`` in the overflow-free sigmoid form."""
    return sigmoid(np.asarray(r, dtype=float) - np.asarray(logpi, dtype=float))


def discriminator_score(rnet: RewardNet, logpi, s, a, s_next):
    logpi = np.asarray(logpi, dtype=float)
    if not np.all(np.isfinite(logpi)):
        raise NumericError("log pi must be finite")
    d = score_from_logit(reward_value(rnet, s, a, s_next), logpi)
    return float(d) if np.ndim(d) == 0 else d


def bce_with_logits(z, labels) -> np.ndarray:
    """Per-row ``-d log sigmoid(z) - (1-d) log(1 - sigmoid(z))``."""
    z = np.asarray(z, dtype=float)
    d = np.asarray(labels, dtype=float)
    return np.maximum(z, 0.0) - z * d + np.log1p(np.exp(-np.abs(z)))


@dataclass
class LabeledBatch:
    transitions: list
    labels: list
    agent_logprobs: list  # log pi(a|s) under the current policy, for every row

    def __post_init__(self):
        n = len(self.transitions)
        if len(self.labels) != n or len(self.agent_logprobs) != n:
            raise ValueError("transitions, labels and agent_logprobs must have equal length")
        if any(d not in (0, 1) for d in self.labels):
            raise ValueError("labels must be 0 (agent) or 1 (expert)")

    def __len__(self) -> int:
        return len(self.transitions)

    def arrays(self):
        S = np.array([t.s.as_array() for t in self.transitions])
        A = np.array([t.a.as_array() for t in self.transitions])
        S2 = np.array([t.s_next.as_array() for t in self.transitions])
        return S, A, S2, np.asarray(self.labels, dtype=float), np.asarray(self.agent_logprobs, dtype=float)


def discriminator_loss(batch: LabeledBatch, rnet: RewardNet) -> float:
    if len(batch) == 0:
        raise ValueError("empty batch")
    S, A, S2, d, logpi = batch.arrays()
    return loss_from_arrays(rnet, S, A, S2, d, logpi)


def loss_from_arrays(rnet: RewardNet, S, A, S2, labels, logpi) -> float:
    z = reward_value(rnet, S, A, S2) - logpi
    return float(np.mean(bce_with_logits(z, labels)))


def loss_and_grad(rnet: RewardNet, S, A, S2, labels, logpi):
    """Mean BCE and its gradient w.r.t. ``rnet.params`` (log pi is a constant)."""
    X, Z, Z2 = _pieces(rnet, S, A, S2)
    gX = rnet.g_net(X)[:, 0]
    hZ, hZ2 = rnet.h_net(Z)[:, 0], rnet.h_net(Z2)[:, 0]
    z = gX + rnet.gamma * hZ2 - hZ - np.asarray(logpi, dtype=float)
    labels = np.asarray(labels, dtype=float)
    n = z.size
    loss = float(np.mean(bce_with_logits(z, labels)))
    dz = ((sigmoid(z) - labels) / n)[:, None]
    grad_g = rnet.g_net.grad_params(X, dz)
    grad_h = rnet.h_net.grad_params(Z2, rnet.gamma * dz) - rnet.h_net.grad_params(Z, dz)
    return loss, np.concatenate([grad_g, grad_h]), z


@dataclass(frozen=True)
class DiscStats:
    loss: float
    expert_score: float
    agent_score: float


def update_discriminator(rnet: RewardNet, expert_batch, agent_batch, policy, opt_state: AdamState,
                         max_grad_norm: float | None = 10.0):
    """One Adam step on the mixed expert (label 1) / agent (label 0) batch.

    ``expert_batch`` and ``agent_batch`` are ``(S, A, S2)`` raw-state arrays.
    ``policy.logprob(S, A)`` supplies log pi for every row, expert rows
    included; the policy itself is only read. Returns
    ``(rnet', opt_state', DiscStats)`` with the pre-step loss.
    """
    Se, Ae, S2e = (np.asarray(x, dtype=float) for x in expert_batch)
    Sa, Aa, S2a = (np.asarray(x, dtype=float) for x in agent_batch)
    if len(Se) == 0 or len(Sa) == 0:
        raise ValueError("expert and agent batches must be nonempty")
    S = np.vstack([Se, Sa])
    A = np.vstack([Ae, Aa])
    S2 = np.vstack([S2e, S2a])
    labels = np.concatenate([np.ones(len(Se)), np.zeros(len(Sa))])
    logpi = np.asarray(policy.logprob(S, A), dtype=float)
    loss, grad, z = loss_and_grad(rnet, S, A, S2, labels, logpi)
    if not np.isfinite(loss):
        raise TrainingError(f"non-finite discriminator loss (|params|={np.linalg.norm(rnet.params):.3g})")
    params, opt_state = adam_update(rnet.params, clip_grad_norm(grad, max_grad_norm), opt_state)
    d = sigmoid(z)
    stats = DiscStats(loss, float(d[: len(Se)].mean()), float(d[len(Se):].mean()))
    return rnet.with_params(params), opt_state, stats


class FixedLogProb:
    """Stand-in policy whose log density is a fixed function of the rows."""

    def __init__(self, fn):
        self.fn = fn

    def logprob(self, S, A):
        return self.fn(S, A)


DISC_LOG_COLUMNS = ("iteration", "disc_loss", "mean_agent_score", "mean_expert_score")


def append_disc_log(path, iteration: int, stats: DiscStats) -> None:
    path = Path(path)
    new = not path.exists()
    with path.open("a", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        if new:
            w.writerow(DISC_LOG_COLUMNS)
        w.writerow([iteration, repr(stats.loss), repr(stats.agent_score), repr(stats.expert_score)])


def transitions_to_arrays(transitions: list[Transition]):
    S = np.array([t.s.as_array() for t in transitions])
    A = np.array([t.a.as_array() for t in transitions])
    S2 = np.array([t.s_next.as_array() for t in transitions])
    return S, A, S2
