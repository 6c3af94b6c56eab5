"""Neural stand-in for the building's thermal response ``T_in' = F(T_in, T_out, h)``."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .env import Action, HomeEnv
from .nn import AdamState, Approximator, adam_update, init_approximator

log = logging.getLogger(__name__)

DEFAULT_ARCH = (3, 32, 32, 1)


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class ThermalSample:
    t_in: float
    t_out: float
    h: float
    t_in_next: float


def samples_to_arrays(samples) -> tuple[np.ndarray, np.ndarray]:
    X = np.array([[s.t_in, s.t_out, s.h] for s in samples], dtype=float)
    y = np.array([s.t_in_next for s in samples], dtype=float)
    return X, y


def collect_samples(env: HomeEnv, n: int, seed: int) -> list[ThermalSample]:
    """Random-excitation dataset; wraps to a fresh episode when the trace runs out."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    env.reset(0, seed=int(rng.integers(2**31)))
    out = []
    while len(out) < n:
        if env.exhausted:
            env.reset(0, seed=int(rng.integers(2**31)))
        s = env.state
        h = float(rng.uniform(0.0, env.cfg.h_max))
        e = float(rng.uniform(-env.cfg.d_max, env.cfg.c_max))
        res = env.step(Action(e, h))
        out.append(ThermalSample(s.t_in, s.t_out, res.action.h, res.next_state.t_in))
    return out


@dataclass(frozen=True, eq=False)
class SurrogateModel:
    net: Approximator
    x_mean: np.ndarray
    x_std: np.ndarray
    y_mean: float
    y_std: float

    def _inputs(self, t_in, t_out, h) -> np.ndarray:
        X = np.stack(np.broadcast_arrays(*(np.asarray(v, dtype=float) for v in (t_in, t_out, h))), axis=-1)
        return (X - self.x_mean) / self.x_std

    def predict(self, t_in, t_out, h):
        """Vectorized next indoor temperature."""
        Z = self._inputs(t_in, t_out, h)
        flat = Z.reshape(-1, 3)
        y = self.net.forward(flat)[:, 0] * self.y_std + self.y_mean
        return y.reshape(Z.shape[:-1]) if Z.ndim > 1 else float(y[0])

    def partials(self, t_in, t_out, h) -> np.ndarray:
        """``d T_in' / d (t_in, t_out, h)`` per row, chained through standardization."""
        Z = self._inputs(t_in, t_out, h)
        flat = Z.reshape(-1, 3)
        up = np.ones((flat.shape[0], 1))
        g = self.net.vjp_input(flat, up) * (self.y_std / self.x_std)
        return g.reshape(Z.shape) if Z.ndim > 1 else g[0]

    def save(self, path) -> None:
        extra = {
            "x_mean": self.x_mean.tolist(),
            "x_std": self.x_std.tolist(),
            "y_mean": self.y_mean,
            "y_std": self.y_std,
        }
        self.net.save(path, extra)

    @classmethod
    def load(cls, path) -> "SurrogateModel":
        net, extra = Approximator.load(path)
        return cls(net, np.array(extra["x_mean"]), np.array(extra["x_std"]), extra["y_mean"], extra["y_std"])


def surrogate_next(model: SurrogateModel, t_in: float, t_out: float, h: float) -> float:
    return float(model.predict(t_in, t_out, h))


def surrogate_grad_h(model: SurrogateModel, t_in: float, t_out: float, h: float) -> float:
    return float(model.partials(t_in, t_out, h)[2])


def train_surrogate(samples, arch=DEFAULT_ARCH, epochs: int = 300, seed: int = 0, *,
                    activation: str = "tanh", lr: float = 3e-3, batch_size: int = 128,
                    holdout: float = 0.2) -> tuple[SurrogateModel, float]:
    """Fit by minibatch Adam on standardized data; returns ``(model, holdout RMSE)``."""
    X, y = samples_to_arrays(samples)
    if len(y) < 2:
        raise ValueError("need at least 2 samples")
    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(y))
    n_hold = max(1, int(round(holdout * len(y))))
    hold, train = perm[:n_hold], perm[n_hold:]
    if train.size == 0:
        train = hold

    x_mean = X[train].mean(axis=0)
    x_std = X[train].std(axis=0)
    x_std[x_std < 1e-12] = 1.0
    y_mean = float(y[train].mean())
    y_std = float(y[train].std()) or 1.0
    Z = (X - x_mean) / x_std
    yz = (y - y_mean) / y_std

    arch = tuple(arch)
    if arch[0] != 3 or arch[-1] != 1:
        raise ValueError(f"surrogate architecture must map 3 -> 1, got {arch}")
    net = init_approximator(arch, activation, seed=seed)
    params = net.params
    opt = AdamState.fresh(params.size, learning_rate=lr)
    # cosine decay to 5% of the base rate helps reach the noise floor
    n_batches = max(1, int(np.ceil(train.size / batch_size)))
    total = max(1, epochs * n_batches)
    k = 0
    for epoch in range(epochs):
        order = rng.permutation(train)
        for i in range(n_batches):
            idx = order[i * batch_size:(i + 1) * batch_size]
            cur = net.with_params(params)
            err = cur.forward(Z[idx])[:, 0] - yz[idx]
            loss = float(np.mean(err * err))
            if not np.isfinite(loss):
                raise TrainingError(f"non-finite loss at epoch {epoch}, batch {i}: |params|={np.linalg.norm(params):.3g}")
            grad = cur.grad_params(Z[idx], (2.0 / idx.size) * err[:, None])
            opt = AdamState(opt.first_moment, opt.second_moment, opt.step_count,
                            lr * (0.05 + 0.95 * 0.5 * (1 + np.cos(np.pi * k / total))))
            params, opt = adam_update(params, grad, opt)
            k += 1
    model = SurrogateModel(net.with_params(params), x_mean, x_std, y_mean, y_std)
    pred = model.predict(X[hold, 0], X[hold, 1], X[hold, 2])
    rmse = float(np.sqrt(np.mean((pred - y[hold]) ** 2)))
    log.info("surrogate trained: arch=%s epochs=%d holdout rmse=%.4f", arch, epochs, rmse)
    return model, rmse
