"""Two-level receding-horizon expert.

The upper level picks HVAC power by projected (sub)gradient descent through
the thermal surrogate; the lower level dispatches the battery over a discrete
set of power levels by best-first branch-and-bound, with a forward dynamic
program kept alongside as an independent cross-check.
"""

from __future__ import annotations

import csv
import heapq
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .env import (
    STATE_FIELDS,
    Action,
    EnvConfig,
    HomeEnv,
    HomeState,
    Transition,
    charge_level_values,
    energy_increments,
    temperature_deviation,
)
from .nn import ConfigError, NumericError
from .surrogate import SurrogateModel

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class MpcConfig:
    horizon: int = 24
    gd_iters: int = 60
    gd_lr: float = 0.5
    max_halvings: int = 10
    active_tol: float = 0.02
    comfort_weight: float = 1.0
    energy_weight: float = 0.01
    charge_levels: int = 9
    expert_slots: int = 24 * 15

    def __post_init__(self):
        if self.horizon < 1:
            raise ConfigError("horizon must be >= 1")
        if self.charge_levels < 3 or self.charge_levels % 2 == 0:
            raise ConfigError("charge_levels must be odd and >= 3")
        if not self.gd_lr > 0:
            raise ConfigError("gd_lr must be positive")


# ---------------------------------------------------------------- upper level

def _unpack(net):
    return [net.weights(i) for i in range(len(net.layer_sizes) - 1)], net.activations


def _rollout(model: SurrogateModel, layers, acts, t_in0: float, t_out, h) -> np.ndarray:
    """Sequential surrogate rollout; returns temperatures t_0..t_H."""
    H = len(h)
    temps = np.empty(H + 1)
    temps[0] = t_in0
    xm, xs = model.x_mean, model.x_std
    x = np.empty(3)
    last = len(layers) - 1
    for k in range(H):
        x[0], x[1], x[2] = temps[k], t_out[k], h[k]
        a = (x - xm) / xs
        for i, (W, b) in enumerate(layers):
            a = W @ a + b
            if i < last:
                a = np.tanh(a) if acts[i] == "tanh" else (np.maximum(a, 0) if acts[i] == "relu" else np.logaddexp(0, a))
        temps[k + 1] = a[0] * model.y_std + model.y_mean
    return temps


def upper_objective(env_cfg: EnvConfig, cfg: MpcConfig, temps: np.ndarray, h: np.ndarray) -> float:
    return float(cfg.comfort_weight * temperature_deviation(env_cfg, temps[1:]).sum() + cfg.energy_weight * h.sum())


def _sensitivities(part: np.ndarray) -> np.ndarray:
    """``S[k, j] = d t_{k+1} / d h_j`` from per-step partials (lower triangular)."""
    H = part.shape[0]
    S = np.zeros((H, H))
    for k in range(H):
        if k > 0:
            S[k, :k] = part[k, 0] * S[k - 1, :k]
        S[k, k] = part[k, 2]
    return S


def _box_least_squares(b: np.ndarray, M: np.ndarray, lo: np.ndarray, hi: np.ndarray, sweeps: int = 30):
    """Coordinate descent for ``min |b + M theta|^2`` with ``lo <= theta <= hi``."""
    theta = np.zeros(M.shape[1])
    r = b.copy()
    norms = np.einsum("ij,ij->j", M, M)
    for _ in range(sweeps):
        delta = 0.0
        for i in range(theta.size):
            if norms[i] <= 0:
                continue
            new = min(max(theta[i] - (M[:, i] @ r) / norms[i], lo[i]), hi[i])
            if new != theta[i]:
                r += (new - theta[i]) * M[:, i]
                delta = max(delta, abs(new - theta[i]))
                theta[i] = new
        if delta < 1e-12:
            break
    return r


def upper_mpc(surrogate: SurrogateModel, env_cfg: EnvConfig, cfg: MpcConfig, t_in0: float, t_out_window,
              h_init=None, return_trace: bool = False):
    """HVAC plan minimizing comfort deviation plus a small energy pull.

    Projected steepest descent on the piecewise-smooth objective: slots whose
    predicted temperature sits within ``active_tol`` of a comfort bound
    contribute any hinge slope between 0 and the full weight, and the
    minimum-norm combination is used as the descent direction. Steps are
    normalized to ``gd_lr`` kW on the largest coordinate and halved on any
    objective increase (at most ``cfg.max_halvings`` times). When no step
    improves, the active band is narrowed tenfold and the search resumes,
    down to 1e-6 degC; only decreases are accepted, so the objective is
    non-increasing.
    """
    t_out = np.asarray(t_out_window, dtype=float)
    H = t_out.size
    h = np.zeros(H) if h_init is None else np.clip(np.asarray(h_init, dtype=float), 0.0, env_cfg.h_max)
    if H == 0:
        return (h, []) if return_trace else h
    layers, acts = _unpack(surrogate.net)
    w, tol = cfg.comfort_weight, cfg.active_tol
    min_tol = 1e-6
    temps = _rollout(surrogate, layers, acts, t_in0, t_out, h)
    J = upper_objective(env_cfg, cfg, temps, h)
    trace = [J]
    for _ in range(cfg.gd_iters):
        if not np.isfinite(J):
            raise NumericError(f"non-finite upper-MPC objective; iterate h={h.tolist()}")
        S = _sensitivities(surrogate.partials(temps[:-1], t_out, h))
        t = temps[1:]
        slope = w * ((t > env_cfg.t_upp + tol).astype(float) - (t < env_cfg.t_low - tol))
        near_upp = np.abs(t - env_cfg.t_upp) <= tol
        near_low = np.abs(t - env_cfg.t_low) <= tol
        grad = cfg.energy_weight + S.T @ slope
        active = np.flatnonzero(near_upp | near_low)
        # coordinates pinned at a box face drop out of the direction search
        free = ~(((h <= 0.0) & (grad > 0)) | ((h >= env_cfg.h_max) & (grad < 0)))
        if active.size:
            lo = np.where(near_upp[active], 0.0, -w)
            hi = np.where(near_upp[active], w, 0.0)
            g_free = _box_least_squares(grad[free], S[active][:, free].T, lo, hi)
            grad = np.zeros(H)
            grad[free] = g_free
        else:
            grad = np.where(free, grad, 0.0)
        scale = np.max(np.abs(grad))
        if scale < 1e-12:
            if tol <= min_tol:
                break
            tol = max(tol * 0.1, min_tol)
            continue
        direction = -grad / scale
        step = cfg.gd_lr
        accepted = False
        for _ in range(cfg.max_halvings + 1):
            h_try = np.clip(h + step * direction, 0.0, env_cfg.h_max)
            t_try = _rollout(surrogate, layers, acts, t_in0, t_out, h_try)
            J_try = upper_objective(env_cfg, cfg, t_try, h_try)
            if J_try < J:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            if tol <= min_tol:
                break
            tol = max(tol * 0.1, min_tol)
            continue
        h, temps, J = h_try, t_try, J_try
        trace.append(J)
    return (h, trace) if return_trace else h


# ---------------------------------------------------------------- lower level

def slot_costs(env_cfg: EnvConfig, levels, h, buy, sell, pv, load) -> np.ndarray:
    """``(H, L)`` table of X1 + X2 for every slot and power level."""
    g = (np.asarray(h) + np.asarray(load) - np.asarray(pv))[:, None] + levels[None, :]
    price = np.where(g > 0, np.asarray(buy)[:, None], np.asarray(sell)[:, None])
    return price * g * env_cfg.dt + env_cfg.k_e * np.abs(levels)[None, :]


def _check_inputs(env_cfg, h, windows, e0):
    H = len(h)
    for name, w in zip(("buy", "sell", "pv", "load"), windows):
        if len(w) != H:
            raise ValueError(f"{name} window length {len(w)} != horizon {H}")
    if not env_cfg.e_min - 1e-9 <= e0 <= env_cfg.e_max + 1e-9:
        raise ConfigError(f"initial ESS level {e0} outside [{env_cfg.e_min}, {env_cfg.e_max}]")


def sequence_cost(env_cfg: EnvConfig, e_seq, h, buy, sell, pv, load) -> float:
    e_seq = np.asarray(e_seq, dtype=float)
    g = np.asarray(h) + e_seq + np.asarray(load) - np.asarray(pv)
    price = np.where(g > 0, buy, sell)
    return float(np.sum(price * g * env_cfg.dt + env_cfg.k_e * np.abs(e_seq)))


def _relaxed_cost_to_go(env_cfg: EnvConfig, cost: np.ndarray, dE: np.ndarray, n_cells: int):
    """Optimistic cost-to-go on energy cells; shape ``(H + 1, n_cells)``.

    Each cell stands for an interval of energy levels and is allowed to
    continue from whichever of its levels is most favourable, so by induction
    the table never exceeds the true optimal cost-to-go of any level inside
    the cell. That makes it an admissible branch-and-bound bound.
    """
    H = cost.shape[0]
    edges = np.linspace(env_cfg.e_min, env_cfg.e_max, n_cells + 1)
    lo_c, hi_c = edges[:-1], edges[1:]
    reach = []
    for d in dE:
        lo_n = np.maximum(lo_c + d, env_cfg.e_min)
        hi_n = np.minimum(hi_c + d, env_cfg.e_max)
        mask = (lo_c[None, :] <= hi_n[:, None] + 1e-9) & (hi_c[None, :] >= lo_n[:, None] - 1e-9)
        mask &= (lo_n <= hi_n + 1e-9)[:, None]
        reach.append(mask)
    reach = np.stack(reach, axis=1)  # (cell, level, next cell)
    V = np.zeros((H + 1, n_cells))
    for k in range(H - 1, -1, -1):
        nxt = np.where(reach, V[k + 1][None, None, :], np.inf).min(axis=2)  # (cell, level)
        V[k] = (cost[k][None, :] + nxt).min(axis=1)
    return V


def lower_mpc_bnb(env_cfg: EnvConfig, cfg: MpcConfig, h, buy, sell, pv, load, e0: float,
                  return_stats: bool = False, n_cells: int = 48):
    """Optimal battery levels for fixed HVAC power, by best-first branch-and-bound.

    The lower bound of a node is its accumulated cost plus the larger of two
    admissible estimates of the remaining cost: the sum over remaining slots
    of the cheapest level ignoring the energy coupling, and the optimistic
    cell-aggregated cost-to-go of :func:`_relaxed_cost_to_go`. Nodes reaching
    an already-seen (depth, energy) pair at no lower cost are dominated and
    dropped. The all-idle plan seeds the incumbent. Children are generated in
    order of increasing ``|e|`` so ties keep the smaller power level.
    """
    h = np.asarray(h, dtype=float)
    windows = [np.asarray(w, dtype=float) for w in (buy, sell, pv, load)]
    _check_inputs(env_cfg, h, windows, e0)
    H = h.size
    if H == 0:
        return (np.zeros(0), {"nodes": 0}) if return_stats else np.zeros(0)
    levels = charge_level_values(env_cfg, cfg.charge_levels)
    dE = energy_increments(env_cfg, levels)
    cost = slot_costs(env_cfg, levels, h, *windows)
    suffix = np.concatenate([np.cumsum(cost.min(axis=1)[::-1])[::-1], [0.0]])
    if n_cells:
        V = np.maximum(_relaxed_cost_to_go(env_cfg, cost, dE, n_cells), suffix[:, None])
        width = (env_cfg.e_max - env_cfg.e_min) / n_cells
    else:
        V, width = suffix[:, None], np.inf
    order = np.array(sorted(range(levels.size), key=lambda j: (abs(levels[j]), j)))
    dE_o, cost_o = dE[order], cost[:, order]
    zero = int(np.flatnonzero(levels == 0.0)[0])
    lo, hi = env_cfg.e_min - 1e-9, env_cfg.e_max + 1e-9
    n_c = V.shape[1]

    def bound_rest(depth, E):
        idx = np.clip(((E - env_cfg.e_min) / width).astype(int), 0, n_c - 1) if n_c > 1 else 0
        return V[depth][idx]

    inc_cost = float(cost[:, zero].sum())
    inc_seq = (zero,) * H
    best = {}
    counter = 0
    root = float(np.atleast_1d(bound_rest(0, np.array([float(e0)])))[0])
    heap = [(root, 0, counter, 0.0, float(e0), ())]
    nodes = 0
    while heap:
        bound, neg_depth, _, g, E, seq = heapq.heappop(heap)
        if bound >= inc_cost - 1e-12:
            break
        depth = -neg_depth
        nodes += 1
        E2 = E + dE_o
        g2 = g + cost_o[depth]
        ok = (E2 >= lo) & (E2 <= hi)
        if depth + 1 == H:
            cand = np.flatnonzero(ok)
            j = cand[np.argmin(g2[cand])]
            if g2[j] < inc_cost:
                inc_cost, inc_seq = float(g2[j]), seq + (int(order[j]),)
            continue
        b2 = g2 + bound_rest(depth + 1, E2)
        for j in np.flatnonzero(ok & (b2 < inc_cost - 1e-12)):
            e2, c2 = float(E2[j]), float(g2[j])
            key = (depth + 1, round(e2, 9))
            seen = best.get(key)
            if seen is not None and seen <= c2:
                continue
            best[key] = c2
            counter += 1
            heapq.heappush(heap, (float(b2[j]), -(depth + 1), counter, c2, e2, seq + (int(order[j]),)))
    e = levels[list(inc_seq)]
    if return_stats:
        return e, {"nodes": nodes, "cost": inc_cost}
    return e


def lower_mpc_dp(env_cfg: EnvConfig, cfg: MpcConfig, h, buy, sell, pv, load, e0: float,
                 e_grid_points: int | None = None) -> np.ndarray:
    """Forward dynamic program over reachable energy levels.

    With ``e_grid_points=None`` reachable levels are kept exactly (merged only
    when equal to 1e-9), which makes the program exact. With a grid, levels
    that fall in the same cell of an ``e_grid_points``-node grid over
    ``[e_min, e_max]`` are merged, keeping the cheapest path into the cell.
    """
    h = np.asarray(h, dtype=float)
    windows = [np.asarray(w, dtype=float) for w in (buy, sell, pv, load)]
    _check_inputs(env_cfg, h, windows, e0)
    H = h.size
    if H == 0:
        return np.zeros(0)
    levels = charge_level_values(env_cfg, cfg.charge_levels)
    dE = energy_increments(env_cfg, levels)
    cost = slot_costs(env_cfg, levels, h, *windows)
    rank = np.empty(levels.size, dtype=int)
    rank[sorted(range(levels.size), key=lambda j: (abs(levels[j]), j))] = np.arange(levels.size)

    E = np.array([float(e0)])
    g = np.array([0.0])
    parents, choices = [], []
    for k in range(H):
        E2 = (E[:, None] + dE[None, :]).ravel()
        g2 = (g[:, None] + cost[k][None, :]).ravel()
        par = np.repeat(np.arange(E.size), levels.size)
        lev = np.tile(np.arange(levels.size), E.size)
        ok = (E2 >= env_cfg.e_min - 1e-9) & (E2 <= env_cfg.e_max + 1e-9)
        E2, g2, par, lev = E2[ok], g2[ok], par[ok], lev[ok]
        if e_grid_points is None:
            key = np.round(E2, 9)
        else:
            key = np.round((E2 - env_cfg.e_min) / (env_cfg.e_max - env_cfg.e_min) * (e_grid_points - 1))
        idx = np.lexsort((rank[lev], g2, key))
        first = np.ones(idx.size, dtype=bool)
        first[1:] = key[idx][1:] != key[idx][:-1]
        keep = idx[first]
        E, g = E2[keep], g2[keep]
        parents.append(par[keep])
        choices.append(lev[keep])
    i = int(np.lexsort((np.arange(g.size), g))[0])
    seq = []
    for k in range(H - 1, -1, -1):
        seq.append(choices[k][i])
        i = parents[k][i]
    return levels[np.array(seq[::-1])]


# ---------------------------------------------------------------- demonstrations

@dataclass
class DemoSet:
    transitions: list
    episodes: list  # episode id per transition

    def __len__(self) -> int:
        return len(self.transitions)

    def arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        S = np.array([t.s.as_array() for t in self.transitions])
        A = np.array([t.a.as_array() for t in self.transitions])
        S2 = np.array([t.s_next.as_array() for t in self.transitions])
        return S, A, S2

    def head(self, n: int) -> "DemoSet":
        return DemoSet(self.transitions[:n], self.episodes[:n])


DEMO_COLUMNS = (
    ["episode"]
    + [f"s_{f}" for f in STATE_FIELDS]
    + ["a_e", "a_h"]
    + [f"s2_{f}" for f in STATE_FIELDS]
)


def write_demos(demos: DemoSet, path) -> None:
    with Path(path).open("w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(DEMO_COLUMNS)
        for ep, t in zip(demos.episodes, demos.transitions):
            s, s2 = t.s.as_array(), t.s_next.as_array()
            w.writerow([ep, *(repr(float(v)) for v in s[:6]), int(s[6]), repr(t.a.e), repr(t.a.h),
                        *(repr(float(v)) for v in s2[:6]), int(s2[6])])


def read_demos(path) -> DemoSet:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"demonstration file not found: {path}")
    trans, eps = [], []
    with path.open(newline="") as f:
        reader = csv.DictReader(f)
        missing = [c for c in DEMO_COLUMNS if c not in (reader.fieldnames or [])]
        if missing:
            raise ValueError(f"{path}: missing column(s) {', '.join(missing)}")
        for row in reader:
            s = HomeState.from_array([float(row[f"s_{k}"]) for k in STATE_FIELDS])
            s2 = HomeState.from_array([float(row[f"s2_{k}"]) for k in STATE_FIELDS])
            trans.append(Transition(s, Action(float(row["a_e"]), float(row["a_h"])), s2))
            eps.append(int(row["episode"]))
    return DemoSet(trans, eps)


def hmpc_action(env: HomeEnv, surrogate: SurrogateModel, cfg: MpcConfig, h_init=None):
    """Solve both levels at the env's current slot; returns (Action, h plan)."""
    s, t, tr = env.state, env.slot, env.traces
    stop = min(len(tr), t + cfg.horizon)
    h_plan = upper_mpc(surrogate, env.cfg, cfg, s.t_in, tr.t_out[t:stop],
                       None if h_init is None else h_init[: stop - t])
    e_plan = lower_mpc_bnb(env.cfg, cfg, h_plan, tr.buy_price[t:stop], tr.sell_price[t:stop],
                           tr.pv[t:stop], tr.load[t:stop], s.e_level)
    return Action(float(e_plan[0]), float(h_plan[0])), h_plan


def generate_demonstrations(env: HomeEnv, surrogate: SurrogateModel, cfg: MpcConfig, seed: int = 0,
                            start_slot: int = 0, episode: int = 0) -> DemoSet:
    """Receding-horizon run over ``cfg.expert_slots`` slots from ``start_slot``.

    Within-horizon forecasts are the true trace values. Only the first planned
    action is applied; the next HVAC solve is warm-started from the shifted plan.
    """
    env.reset(start_slot, seed=seed)
    n = min(cfg.expert_slots, len(env.traces) - start_slot)
    trans, eps = [], []
    h_prev = None
    for _ in range(n):
        s = env.state
        a, h_plan = hmpc_action(env, surrogate, cfg, h_prev)
        out = env.step(a)
        trans.append(Transition(s, out.action, out.next_state))
        eps.append(episode)
        h_prev = np.append(h_plan[1:], h_plan[-1]) if h_plan.size > 1 else h_plan
    log.info("generated %d expert transitions", len(trans))
    return DemoSet(trans, eps)


class HmpcController:
    """Closed-loop HMPC as a policy object for evaluation runs."""

    def __init__(self, surrogate: SurrogateModel, cfg: MpcConfig):
        self.surrogate = surrogate
        self.cfg = cfg
        self._h_prev = None

    def reset(self):
        self._h_prev = None

    def act(self, env: HomeEnv) -> Action:
        a, h_plan = hmpc_action(env, self.surrogate, self.cfg, self._h_prev)
        self._h_prev = np.append(h_plan[1:], h_plan[-1]) if h_plan.size > 1 else h_plan
        return a
