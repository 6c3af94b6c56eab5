"""Baselines, evaluation metrics, and the perfect-information reference."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .env import (
    Action,
    EnvConfig,
    HomeEnv,
    HomeState,
    charge_level_values,
    clip_action,
    energy_increments,
    thermal_next,
)
from .traces import TraceSet


@dataclass
class Metrics:
    tec: float
    mtd: float
    total_dev: float
    n_slots: int
    per_slot: dict | None = field(default=None, repr=False)

    def as_row(self) -> dict:
        return {"tec": self.tec, "mtd": self.mtd, "total_dev": self.total_dev}


PER_SLOT_COLUMNS = ("slot", "hour", "t_in", "t_out", "e_level", "e", "h", "grid_power", "x1", "x2", "x3")


def metrics_from_outcomes(records: list[dict]) -> Metrics:
    x1 = np.array([r["x1"] for r in records], dtype=float)
    x2 = np.array([r["x2"] for r in records], dtype=float)
    x3 = np.array([r["x3"] for r in records], dtype=float)
    n = len(records)
    per_slot = {c: np.array([r[c] for r in records]) for c in PER_SLOT_COLUMNS} if n else None
    total_dev = float(x3.sum())
    return Metrics(
        tec=float(x1.sum() + x2.sum()),
        mtd=total_dev / n if n else 0.0,
        total_dev=total_dev,
        n_slots=n,
        per_slot=per_slot,
    )


def write_timeseries(metrics: Metrics, path) -> None:
    with Path(path).open("w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(PER_SLOT_COLUMNS)
        cols = [metrics.per_slot[c] for c in PER_SLOT_COLUMNS]
        for row in zip(*cols):
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else int(v) for v in row])


# ---------------------------------------------------------------- controllers

class ZeroPolicy:
    def reset(self):
        pass

    def act(self, env: HomeEnv) -> Action:
        return Action(0.0, 0.0)


@dataclass(frozen=True)
class RuleConfig:
    hvac_on_threshold: float = 23.5
    hvac_off_threshold: float = 21.0
    price_low: float = 25.0   # percentile of the buying price
    price_high: float = 75.0

    def __post_init__(self):
        if not self.hvac_off_threshold < self.hvac_on_threshold:
            raise ValueError("hvac_off_threshold must be below hvac_on_threshold")
        if not 0 <= self.price_low < self.price_high <= 100:
            raise ValueError("need 0 <= price_low < price_high <= 100")


class RulePolicy:
    """Hysteresis cooling plus price/PV-triggered battery moves.

    Price thresholds are percentiles of the buying price over the trace the
    policy is attached to.
    """

    def __init__(self, env_cfg: EnvConfig, cfg: RuleConfig, traces: TraceSet):
        self.env_cfg = env_cfg
        self.cfg = cfg
        self.low_price = float(np.percentile(traces.buy_price, cfg.price_low))
        self.high_price = float(np.percentile(traces.buy_price, cfg.price_high))
        self._cooling = False

    def reset(self):
        self._cooling = False

    def decide(self, state: HomeState) -> Action:
        c, ec = self.cfg, self.env_cfg
        if state.t_in > c.hvac_on_threshold:
            self._cooling = True
        elif state.t_in < c.hvac_off_threshold:
            self._cooling = False
        h = ec.h_max if self._cooling else 0.0
        if state.u >= self.high_price:
            e = -ec.d_max
        elif state.u <= self.low_price or state.p > state.l + h:
            e = ec.c_max
        else:
            e = 0.0
        return clip_action(ec, state, Action(e, h))

    def act(self, env: HomeEnv) -> Action:
        return self.decide(env.state)


def rule_policy(env_cfg: EnvConfig, cfg: RuleConfig, traces: TraceSet, state: HomeState) -> Action:
    """Stateless one-shot evaluation of the rule (hysteresis starts off)."""
    return RulePolicy(env_cfg, cfg, traces).decide(state)


def explicit_reward(x1: float, x2: float, x3: float, beta_t: float = 1.0) -> float:
    if beta_t < 0:
        raise ValueError("beta_t must be non-negative")
    return -(x1 + x2) - beta_t * x3


class ScheduleController:
    """Replays a fixed action list slot by slot."""

    def __init__(self, actions):
        self.actions = list(actions)
        self._i = 0

    def reset(self):
        self._i = 0

    def act(self, env: HomeEnv) -> Action:
        a = self.actions[self._i]
        self._i += 1
        return a


def evaluate(env: HomeEnv, policy, traces: TraceSet | None = None, seed: int = 0, *,
             start_slot: int = 0, n_slots: int | None = None) -> Metrics:
    """Roll ``policy`` over the trace from ``start_slot`` and total the costs."""
    if traces is not None and traces is not env.traces:
        env = HomeEnv(env.cfg, traces)
    env.reset(start_slot, seed=seed, n_slots=n_slots)
    policy.reset()
    records = []
    while not env.exhausted:
        s, slot = env.state, env.slot
        out = env.step(policy.act(env))
        records.append({
            "slot": slot, "hour": s.hour, "t_in": s.t_in, "t_out": s.t_out, "e_level": s.e_level,
            "e": out.action.e, "h": out.action.h, "grid_power": out.grid_power,
            "x1": out.x1, "x2": out.x2, "x3": out.x3,
        })
    return metrics_from_outcomes(records)


# ---------------------------------------------------------------- perfect-information DP

@dataclass(frozen=True)
class DpGrids:
    e_levels: int = 9
    h_levels: int = 21
    e_cells: int = 72
    t_cell: float = 0.05
    t_range: tuple = (18.0, 27.0)
    comfort_weight: float = 1.0


class GridError(RuntimeError):
    pass


def dp_oracle(traces: TraceSet, env_cfg: EnvConfig, grids: DpGrids | None = None,
              start_slot: int = 0, n_slots: int | None = None):
    """Whole-horizon forward DP with perfect knowledge of every exogenous series.

    Minimizes ``sum(X1 + X2) + comfort_weight * sum(X3)`` over discrete battery
    and HVAC levels. States evolve by the exact noise-free dynamics; after
    each slot, states sharing an (energy cell, temperature cell) keep only the
    cheapest path. Returns the action list and the metrics of replaying it
    through a noise-free environment.
    """
    grids = grids or DpGrids()
    cfg = env_cfg
    stop = len(traces) if n_slots is None else min(len(traces), start_slot + n_slots)
    e_lev = charge_level_values(cfg, grids.e_levels)
    h_lev = np.linspace(0.0, cfg.h_max, grids.h_levels)
    dE = energy_increments(cfg, e_lev)
    EA, HA = np.meshgrid(e_lev, h_lev, indexing="ij")
    EA, HA, dEA = EA.ravel(), HA.ravel(), np.repeat(dE, h_lev.size)
    x2 = cfg.k_e * np.abs(EA)
    t_lo, t_hi = grids.t_range
    e_width = (cfg.e_max - cfg.e_min) / grids.e_cells

    E = np.array([cfg.e0])
    T = np.array([cfg.t_in0])
    J = np.array([0.0])
    parents, choices = [], []
    for t in range(start_slot, stop):
        buy, sell, pv, load, t_out = traces.row(t)
        x3 = np.maximum(T - cfg.t_upp, 0.0) + np.maximum(cfg.t_low - T, 0.0)
        g = HA + EA + load - pv
        slot_cost = np.where(g > 0, buy, sell) * g * cfg.dt + x2  # (A,)
        E2 = (E[:, None] + dEA[None, :])
        T2 = thermal_next(cfg, T[:, None], t_out, HA[None, :])
        J2 = J[:, None] + slot_cost[None, :] + grids.comfort_weight * x3[:, None]
        ok = (E2 >= cfg.e_min - 1e-9) & (E2 <= cfg.e_max + 1e-9) & (T2 >= t_lo) & (T2 <= t_hi)
        if not ok.any():
            raise GridError(f"slot {t}: no state survives the grid (t_range={grids.t_range}); widen the grid")
        par, act = np.nonzero(ok)
        E2, T2, J2 = E2[ok], T2[ok], J2[ok]
        key = (np.minimum(((E2 - cfg.e_min) / e_width).astype(np.int64), grids.e_cells - 1) * 100000
               + ((T2 - t_lo) / grids.t_cell).astype(np.int64))
        idx = np.lexsort((J2, key))
        first = np.ones(idx.size, dtype=bool)
        first[1:] = key[idx][1:] != key[idx][:-1]
        keep = idx[first]
        E, T, J = np.clip(E2[keep], cfg.e_min, cfg.e_max), T2[keep], J2[keep]
        parents.append(par[keep])
        choices.append(act[keep])
    i = int(np.argmin(J))
    seq = []
    for k in range(len(choices) - 1, -1, -1):
        seq.append(choices[k][i])
        i = parents[k][i]
    actions = [Action(float(EA[a]), float(HA[a])) for a in seq[::-1]]
    replay_env = HomeEnv(EnvConfig(**{**cfg.to_dict(), "noise_sigma": 0.0}), traces)
    metrics = evaluate(replay_env, ScheduleController(actions), start_slot=start_slot, n_slots=stop - start_slot)
    return actions, metrics
