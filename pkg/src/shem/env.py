"""Slotted-time smart home: battery, cooling HVAC, PV, load, grid exchange.

State per slot is ``(p, l, E, T_out, T_in, u, hour)`` with ``u`` the buying
price. Actions ``(e, h)`` are projected onto the feasible set before use, so
every controller (expert, learned agent, baselines) sees identical physics.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

import numpy as np

from .nn import NumericError
from .traces import TraceSet

STATE_FIELDS = ("p", "l", "e_level", "t_out", "t_in", "u", "hour")
STATE_DIM = len(STATE_FIELDS)
ACTION_DIM = 2

_TOL = 1e-9


class EpisodeExhausted(Exception):
    """Raised when stepping beyond the end of the trace."""


class ContractViolation(AssertionError):
    pass


@dataclass(frozen=True)
class EnvConfig:
    e_min: float = 0.4
    e_max: float = 4.0
    c_max: float = 2.0
    d_max: float = 2.0
    eta_c: float = 0.95
    eta_d: float = 0.95
    h_max: float = 2.0
    k_e: float = 0.01
    t_low: float = 20.0
    t_upp: float = 24.0
    dt: float = 1.0
    thermal_eps: float = 0.7
    thermal_eta: float = 2.5
    thermal_a: float = 0.5
    noise_sigma: float = 0.05
    e0: float = 2.0
    t_in0: float = 24.0

    def __post_init__(self):
        problems = []
        if not self.e_min < self.e_max:
            problems.append("e_min < e_max")
        if not (0 < self.eta_c <= 1 and 0 < self.eta_d <= 1):
            problems.append("0 < eta_c, eta_d <= 1")
        if not (self.c_max > 0 and self.d_max > 0 and self.h_max > 0):
            problems.append("c_max, d_max, h_max > 0")
        if not self.t_low < self.t_upp:
            problems.append("t_low < t_upp")
        if not 0 < self.thermal_eps < 1:
            problems.append("0 < thermal_eps < 1")
        if not self.dt > 0:
            problems.append("dt > 0")
        if self.noise_sigma < 0:
            problems.append("noise_sigma >= 0")
        if not self.e_min <= self.e0 <= self.e_max:
            problems.append("e_min <= e0 <= e_max")
        if problems:
            raise ValueError("invalid EnvConfig: requires " + "; ".join(problems))

    @classmethod
    def from_dict(cls, d: dict) -> "EnvConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ValueError(f"unknown EnvConfig key(s): {', '.join(unknown)}")
        return cls(**{k: float(v) for k, v in d.items()})

    @classmethod
    def from_json(cls, path) -> "EnvConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class HomeState:
    p: float
    l: float
    e_level: float
    t_out: float
    t_in: float
    u: float
    hour: int

    def as_array(self) -> np.ndarray:
        return np.array([self.p, self.l, self.e_level, self.t_out, self.t_in, self.u, self.hour], dtype=float)

    @classmethod
    def from_array(cls, a) -> "HomeState":
        return cls(*(float(v) for v in a[:6]), int(round(a[6])))


@dataclass(frozen=True)
class Action:
    e: float
    h: float

    def as_array(self) -> np.ndarray:
        return np.array([self.e, self.h], dtype=float)


@dataclass(frozen=True)
class StepOutcome:
    next_state: HomeState
    action: Action
    x1: float
    x2: float
    x3: float
    grid_power: float


@dataclass(frozen=True)
class Transition:
    s: HomeState
    a: Action
    s_next: HomeState


def e_bounds(cfg: EnvConfig, e_level: float) -> tuple[float, float]:
    """Feasible ESS power interval at energy level ``e_level``."""
    hi = min(cfg.c_max, (cfg.e_max - e_level) / (cfg.eta_c * cfg.dt))
    lo = max(-cfg.d_max, (cfg.e_min - e_level) * cfg.eta_d / cfg.dt)
    return min(lo, 0.0), max(hi, 0.0)


def clip_action(cfg: EnvConfig, state: HomeState, raw: Action) -> Action:
    if not (math.isfinite(raw.e) and math.isfinite(raw.h)):
        raise NumericError(f"non-finite action {raw}")
    lo, hi = e_bounds(cfg, state.e_level)
    e = min(max(raw.e, lo), hi)
    h = min(max(raw.h, 0.0), cfg.h_max)
    return Action(e, h)


def ess_next(cfg: EnvConfig, e_level: float, e: float) -> float:
    if e > 0:
        nxt = e_level + cfg.eta_c * e * cfg.dt
    else:
        nxt = e_level + (e / cfg.eta_d) * cfg.dt
    if nxt < cfg.e_min - _TOL or nxt > cfg.e_max + _TOL:
        raise ContractViolation(f"ESS level {nxt} leaves [{cfg.e_min}, {cfg.e_max}] (e={e})")
    return min(max(nxt, cfg.e_min), cfg.e_max)


def thermal_next(cfg: EnvConfig, t_in: float, t_out: float, h: float, noise: float = 0.0) -> float:
    eps = cfg.thermal_eps
    return eps * t_in + (1.0 - eps) * (t_out - cfg.thermal_eta * h / cfg.thermal_a) + noise


def charge_level_values(env_cfg: EnvConfig, n_levels: int) -> np.ndarray:
    """``n_levels`` (odd) values from -d_max to c_max with 0 in the middle."""
    m = (n_levels - 1) // 2
    neg = np.linspace(-env_cfg.d_max, 0.0, m + 1)
    pos = np.linspace(0.0, env_cfg.c_max, m + 1)
    return np.concatenate([neg, pos[1:]])


def energy_increments(env_cfg: EnvConfig, levels: np.ndarray) -> np.ndarray:
    return np.where(levels > 0, env_cfg.eta_c * levels * env_cfg.dt, levels / env_cfg.eta_d * env_cfg.dt)


def grid_power(p: float, h: float, e: float, l: float) -> float:
    return h + e + l - p


def temperature_deviation(cfg: EnvConfig, t_in):
    return np.maximum(t_in - cfg.t_upp, 0.0) + np.maximum(cfg.t_low - t_in, 0.0)


def cost_components(cfg: EnvConfig, state: HomeState, action: Action, g: float, sell_price: float):
    """Return ``(x1, x2, x3)``: transaction cost, ESS aging, comfort deviation."""
    price = state.u if g > 0 else sell_price
    x1 = price * g * cfg.dt
    x2 = cfg.k_e * abs(action.e)
    x3 = float(temperature_deviation(cfg, state.t_in))
    return x1, x2, x3


class HomeEnv:
    """Single-owner mutable environment over a shared immutable trace."""

    def __init__(self, cfg: EnvConfig, traces: TraceSet):
        if abs(traces.slot_length_hours - cfg.dt) > 1e-12:
            raise ValueError(f"trace slot length {traces.slot_length_hours} h != cfg.dt {cfg.dt} h")
        self.cfg = cfg
        self.traces = traces
        self.state: HomeState | None = None
        self.slot = 0
        self._stop = 0
        self._rng = np.random.default_rng(0)

    def clone(self, traces: TraceSet | None = None) -> "HomeEnv":
        env = HomeEnv(self.cfg, self.traces if traces is None else traces)
        env.state, env.slot, env._stop = self.state, self.slot, self._stop
        env._rng = np.random.default_rng()
        env._rng.bit_generator.state = self._rng.bit_generator.state
        return env

    def with_config(self, **changes) -> "HomeEnv":
        return HomeEnv(replace(self.cfg, **changes), self.traces)

    def _exogenous(self, t: int, e_level: float, t_in: float) -> HomeState:
        # the state after the last slot reuses row 0 (wrap); hour follows t % 24
        buy, _, pv, load, t_out = self.traces.row(t % len(self.traces))
        return HomeState(pv, load, e_level, t_out, t_in, buy, t % 24)

    def reset(self, start_slot: int = 0, seed: int = 0, *, e0: float | None = None,
              t_in0: float | None = None, n_slots: int | None = None) -> HomeState:
        if not 0 <= start_slot < len(self.traces):
            raise IndexError(f"start_slot {start_slot} outside trace of length {len(self.traces)}")
        e0 = self.cfg.e0 if e0 is None else e0
        t_in0 = self.cfg.t_in0 if t_in0 is None else t_in0
        self.slot = start_slot
        self._stop = len(self.traces) if n_slots is None else min(len(self.traces), start_slot + n_slots)
        self._rng = np.random.default_rng(seed)
        self.state = self._exogenous(start_slot, e0, t_in0)
        return self.state

    @property
    def sell_price(self) -> float:
        return float(self.traces.sell_price[self.slot])

    @property
    def exhausted(self) -> bool:
        return self.slot >= self._stop

    def step(self, action: Action) -> StepOutcome:
        if self.state is None:
            raise RuntimeError("call reset() before step()")
        if self.exhausted:
            raise EpisodeExhausted(f"no slot left after {self.slot}")
        cfg, s = self.cfg, self.state
        a = clip_action(cfg, s, action)
        g = grid_power(s.p, a.h, a.e, s.l)
        x1, x2, x3 = cost_components(cfg, s, a, g, self.sell_price)
        noise = cfg.noise_sigma * self._rng.standard_normal()
        e_next = ess_next(cfg, s.e_level, a.e)
        t_next = thermal_next(cfg, s.t_in, s.t_out, a.h, noise)
        self.slot += 1
        self.state = self._exogenous(self.slot, e_next, t_next)
        return StepOutcome(self.state, a, x1, x2, x3, g)
