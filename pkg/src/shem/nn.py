"""Dense feed-forward networks with hand-written backprop and an Adam optimizer.

Everything is float64 numpy. An :class:`Approximator` is a value: forward and
gradient calls never touch ``params``; training produces new instances through
:func:`adam_step`.

Parameter layout: for each layer ``i`` the weight matrix ``W_i`` of shape
``(out_i, in_i)`` in row-major order, followed by its bias ``b_i`` of length
``out_i``. Hidden layers apply their activation, the last layer is affine.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

ACTIVATIONS = ("tanh", "relu", "softplus")

FORMAT_TAG = "#shem-approx-v1"


class ShapeError(ValueError):
    pass


class ConfigError(ValueError):
    pass


class NumericError(ArithmeticError):
    pass


def _act(name: str, z: np.ndarray) -> np.ndarray:
    if name == "tanh":
        return np.tanh(z)
    if name == "relu":
        return np.maximum(z, 0.0)
    return np.logaddexp(0.0, z)


def _act_deriv(name: str, z: np.ndarray, a: np.ndarray) -> np.ndarray:
    if name == "tanh":
        return 1.0 - a * a
    if name == "relu":
        return (z > 0.0).astype(float)
    # softplus' = sigmoid
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def param_count(layer_sizes) -> int:
    return sum((n_in + 1) * n_out for n_in, n_out in zip(layer_sizes[:-1], layer_sizes[1:]))


def _layout(layer_sizes) -> list[tuple[slice, slice]]:
    out, pos = [], 0
    for n_in, n_out in zip(layer_sizes[:-1], layer_sizes[1:]):
        w = slice(pos, pos + n_in * n_out)
        pos += n_in * n_out
        b = slice(pos, pos + n_out)
        pos += n_out
        out.append((w, b))
    return out


@dataclass(frozen=True, eq=False)
class Approximator:
    layer_sizes: tuple[int, ...]
    activations: tuple[str, ...]
    params: np.ndarray
    param_layout: list[tuple[slice, slice]] = field(init=False, repr=False)

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.layer_sizes)
        _check_sizes(sizes)
        acts = tuple(self.activations)
        if len(acts) != len(sizes) - 2:
            raise ConfigError(f"need {len(sizes) - 2} hidden activations, got {len(acts)}")
        for a in acts:
            if a not in ACTIVATIONS:
                raise ConfigError(f"unknown activation {a!r}")
        params = np.asarray(self.params, dtype=np.float64)
        if params.shape != (param_count(sizes),):
            raise ShapeError(f"params length {params.size} != {param_count(sizes)}")
        object.__setattr__(self, "layer_sizes", sizes)
        object.__setattr__(self, "activations", acts)
        object.__setattr__(self, "params", params)
        object.__setattr__(self, "param_layout", _layout(sizes))

    @property
    def in_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def out_dim(self) -> int:
        return self.layer_sizes[-1]

    def weights(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        w, b = self.param_layout[i]
        n_in, n_out = self.layer_sizes[i], self.layer_sizes[i + 1]
        return self.params[w].reshape(n_out, n_in), self.params[b]

    def with_params(self, params: np.ndarray) -> "Approximator":
        return replace(self, params=np.array(params, dtype=np.float64))

    # -- evaluation -------------------------------------------------------

    def _as_batch(self, x) -> tuple[np.ndarray, bool]:
        x = np.asarray(x, dtype=np.float64)
        single = x.ndim == 1
        xb = x[None, :] if single else x
        if xb.ndim != 2 or xb.shape[1] != self.in_dim:
            raise ShapeError(f"expected input dim {self.in_dim}, got shape {x.shape}")
        return xb, single

    def _trace(self, xb: np.ndarray):
        """Forward pass keeping pre-activations and activations per layer."""
        acts = [xb]
        pres = []
        a = xb
        n_layers = len(self.layer_sizes) - 1
        for i in range(n_layers):
            W, b = self.weights(i)
            z = a @ W.T + b
            pres.append(z)
            a = _act(self.activations[i], z) if i < n_layers - 1 else z
            acts.append(a)
        return pres, acts

    def forward(self, x) -> np.ndarray:
        """Evaluate on a single input vector or a ``(batch, in_dim)`` array."""
        xb, single = self._as_batch(x)
        a = xb
        n_layers = len(self.layer_sizes) - 1
        for i in range(n_layers):
            W, b = self.weights(i)
            a = a @ W.T + b
            if i < n_layers - 1:
                a = _act(self.activations[i], a)
        return a[0] if single else a

    __call__ = forward

    def _backward(self, xb, upstream, want_params: bool):
        pres, acts = self._trace(xb)
        n_layers = len(self.layer_sizes) - 1
        grad = np.zeros_like(self.params) if want_params else None
        delta = upstream  # dL/dz for the last (affine) layer
        for i in reversed(range(n_layers)):
            W, _ = self.weights(i)
            if want_params:
                w_sl, b_sl = self.param_layout[i]
                grad[w_sl] = (delta.T @ acts[i]).ravel()
                grad[b_sl] = delta.sum(axis=0)
            delta = delta @ W
            if i > 0:
                delta = delta * _act_deriv(self.activations[i - 1], pres[i - 1], acts[i])
        return grad, delta

    def grad_input(self, x) -> np.ndarray:
        """Jacobian ``d forward / d x``: ``(out, in)`` or ``(batch, out, in)``."""
        xb, single = self._as_batch(x)
        pres, acts = self._trace(xb)
        n_layers = len(self.layer_sizes) - 1
        # J has shape (batch, out, width) and is pulled back layer by layer
        J = np.broadcast_to(np.eye(self.out_dim), (xb.shape[0], self.out_dim, self.out_dim))
        for i in reversed(range(n_layers)):
            W, _ = self.weights(i)
            J = J @ W
            if i > 0:
                J = J * _act_deriv(self.activations[i - 1], pres[i - 1], acts[i])[:, None, :]
        return J[0] if single else J

    def vjp_input(self, x, upstream) -> np.ndarray:
        """``upstream^T J`` per row, cheaper than the full jacobian."""
        xb, single = self._as_batch(x)
        up = self._check_upstream(upstream, xb.shape[0], single)
        _, delta = self._backward(xb, up, want_params=False)
        return delta[0] if single else delta

    def grad_params(self, x, upstream) -> np.ndarray:
        """Gradient of ``sum_rows upstream . forward(x)`` w.r.t. the flat params."""
        xb, single = self._as_batch(x)
        up = self._check_upstream(upstream, xb.shape[0], single)
        grad, _ = self._backward(xb, up, want_params=True)
        return grad

    def _check_upstream(self, upstream, n: int, single: bool) -> np.ndarray:
        up = np.asarray(upstream, dtype=np.float64)
        up = up[None, :] if (single and up.ndim == 1) else up
        if up.shape != (n, self.out_dim):
            raise ShapeError(f"upstream shape {up.shape} != {(n, self.out_dim)}")
        return up

    # -- serialization ----------------------------------------------------

    def to_text(self, extra: dict | None = None) -> str:
        header = {"layer_sizes": list(self.layer_sizes), "activations": list(self.activations)}
        if extra:
            header["extra"] = extra
        lines = [f"{FORMAT_TAG} {json.dumps(header, sort_keys=True)}"]
        lines += [repr(float(v)) for v in self.params]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> tuple["Approximator", dict]:
        lines = text.strip().splitlines()
        if not lines or not lines[0].startswith(FORMAT_TAG):
            raise ConfigError("not an approximator snapshot (bad header)")
        header = json.loads(lines[0][len(FORMAT_TAG):])
        params = np.array([float(v) for v in lines[1:]], dtype=np.float64)
        net = cls(tuple(header["layer_sizes"]), tuple(header["activations"]), params)
        return net, header.get("extra", {})

    def save(self, path, extra: dict | None = None) -> None:
        Path(path).write_text(self.to_text(extra))

    @classmethod
    def load(cls, path) -> tuple["Approximator", dict]:
        return cls.from_text(Path(path).read_text())

    def to_dict(self) -> dict:
        return {
            "layer_sizes": list(self.layer_sizes),
            "activations": list(self.activations),
            "params": self.params.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Approximator":
        return cls(tuple(d["layer_sizes"]), tuple(d["activations"]), np.array(d["params"]))


def _check_sizes(sizes) -> None:
    if len(sizes) < 2:
        raise ConfigError(f"need at least 2 layer sizes, got {list(sizes)}")
    if any(s <= 0 for s in sizes):
        raise ConfigError(f"layer sizes must be positive, got {list(sizes)}")


def init_approximator(layer_sizes, activation="tanh", seed: int = 0) -> Approximator:
    """Glorot-uniform weights, zero biases, fully determined by ``seed``.

    ``activation`` is either one name used for every hidden layer or a list
    with one name per hidden layer.
    """
    sizes = tuple(int(s) for s in layer_sizes)
    _check_sizes(sizes)
    n_hidden = len(sizes) - 2
    acts = (activation,) * n_hidden if isinstance(activation, str) else tuple(activation)
    rng = np.random.default_rng(seed)
    params = np.zeros(param_count(sizes))
    for (w_sl, _), n_in, n_out in zip(_layout(sizes), sizes[:-1], sizes[1:]):
        limit = np.sqrt(6.0 / (n_in + n_out))
        params[w_sl] = rng.uniform(-limit, limit, size=n_in * n_out)
    return Approximator(sizes, acts, params)


@dataclass(frozen=True)
class AdamState:
    first_moment: np.ndarray
    second_moment: np.ndarray
    step_count: int = 0
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    @classmethod
    def fresh(cls, n: int, learning_rate: float = 1e-3, **kw) -> "AdamState":
        return cls(np.zeros(n), np.zeros(n), 0, learning_rate, **kw)


def adam_update(params: np.ndarray, grad, state: AdamState) -> tuple[np.ndarray, AdamState]:
    """Bias-corrected Adam on a raw parameter vector."""
    grad = np.asarray(grad, dtype=np.float64)
    if grad.shape != params.shape or grad.shape != state.first_moment.shape:
        raise ShapeError(f"gradient shape {grad.shape} != params shape {params.shape}")
    if not np.all(np.isfinite(grad)):
        raise NumericError("non-finite gradient entries")
    t = state.step_count + 1
    m = state.beta1 * state.first_moment + (1.0 - state.beta1) * grad
    v = state.beta2 * state.second_moment + (1.0 - state.beta2) * grad * grad
    m_hat = m / (1.0 - state.beta1**t)
    v_hat = v / (1.0 - state.beta2**t)
    new = params - state.learning_rate * m_hat / (np.sqrt(v_hat) + state.epsilon)
    return new, replace(state, first_moment=m, second_moment=v, step_count=t)


def adam_step(approx: Approximator, grad, state: AdamState) -> tuple[Approximator, AdamState]:
    params, state = adam_update(approx.params, grad, state)
    return approx.with_params(params), state


def clip_grad_norm(grad: np.ndarray, max_norm: float | None) -> np.ndarray:
    if max_norm is None:
        return grad
    norm = float(np.linalg.norm(grad))
    if norm > max_norm:
        return grad * (max_norm / norm)
    return grad
