import csv
import itertools

import numpy as np
import pytest

from shem.bench import (
    DpGrids,
    GridError,
    Metrics,
    RuleConfig,
    RulePolicy,
    ScheduleController,
    ZeroPolicy,
    dp_oracle,
    evaluate,
    explicit_reward,
    rule_policy,
    write_timeseries,
)
from shem.env import Action, EnvConfig, HomeEnv, HomeState, charge_level_values, clip_action, thermal_next
from shem.traces import synth_traces

CFG = EnvConfig()
NOISELESS = EnvConfig(noise_sigma=0.0)


@pytest.fixture(scope="module")
def traces():
    return synth_traces(0, 3)


def _state(traces, **kw):
    base = dict(p=0.0, l=1.0, e_level=2.2, t_out=28.0, t_in=22.0,
                u=float(np.percentile(traces.buy_price, 50)), hour=12)
    base.update(kw)
    return HomeState(**base)


def test_rule_all_triggers_off(traces):
    a = rule_policy(CFG, RuleConfig(), traces, _state(traces, t_in=15.0))
    assert (a.e, a.h) == (0.0, 0.0)


def test_rule_hysteresis_on_and_hold(traces):
    pol = RulePolicy(CFG, RuleConfig(), traces)
    assert pol.decide(_state(traces, t_in=CFG.t_upp + 1)).h == CFG.h_max
    # inside the band the previous decision holds
    assert pol.decide(_state(traces, t_in=22.0)).h == CFG.h_max
    assert pol.decide(_state(traces, t_in=20.5)).h == 0.0
    assert pol.decide(_state(traces, t_in=22.0)).h == 0.0


def test_rule_price_triggers(traces):
    s = _state(traces, u=float(np.percentile(traces.buy_price, 95)))
    a = rule_policy(CFG, RuleConfig(), traces, s)
    assert a.e == clip_action(CFG, s, Action(-CFG.d_max, 0.0)).e
    assert a.e == pytest.approx((CFG.e_min - 2.2) * CFG.eta_d)  # discharge capped by the energy floor
    low = rule_policy(CFG, RuleConfig(), traces, _state(traces, e_level=1.0, u=float(traces.buy_price.min())))
    assert low.e == CFG.c_max
    surplus = rule_policy(CFG, RuleConfig(), traces, _state(traces, e_level=1.0, p=3.0, l=0.5))
    assert surplus.e == CFG.c_max


def test_rule_config_validation():
    with pytest.raises(ValueError):
        RuleConfig(hvac_on_threshold=20.0, hvac_off_threshold=21.0)
    with pytest.raises(ValueError):
        RuleConfig(price_low=80.0, price_high=75.0)


def test_explicit_reward_examples():
    assert explicit_reward(0.2, 0.01, 0.0, 1.0) == pytest.approx(-0.21, abs=1e-15)
    assert explicit_reward(0, 0, 0) == 0
    assert explicit_reward(0.2, 0.01, 5.0, beta_t=0.0) == explicit_reward(0.2, 0.01, 0.0, beta_t=0.0)
    with pytest.raises(ValueError):
        explicit_reward(0, 0, 0, -0.5)


def _objective(traces, cfg, actions, start=0):
    e, t_in, total = cfg.e0, cfg.t_in0, 0.0
    for k, (ev, hv) in enumerate(actions):
        buy, sell, pv, load, t_out = traces.row(start + k)
        total += max(t_in - cfg.t_upp, 0.0) + max(cfg.t_low - t_in, 0.0)
        g = hv + ev + load - pv
        total += (buy if g > 0 else sell) * g * cfg.dt + cfg.k_e * abs(ev)
        e = e + (cfg.eta_c * ev if ev > 0 else ev / cfg.eta_d) * cfg.dt
        if e < cfg.e_min - 1e-9 or e > cfg.e_max + 1e-9:
            return np.inf
        t_in = thermal_next(cfg, t_in, t_out, hv)
    return total


FINE = dict(e_cells=10**6, t_cell=1e-4)


def test_dp_one_slot_is_per_slot_minimizer(traces):
    g = DpGrids(e_levels=5, h_levels=5, **FINE)
    actions, m = dp_oracle(traces, NOISELESS, g, start_slot=13, n_slots=1)
    es, hs = charge_level_values(NOISELESS, 5), np.linspace(0, NOISELESS.h_max, 5)
    best = min(_objective(traces, NOISELESS, [(e, h)], 13) for e in es for h in hs)
    assert len(actions) == 1 and m.tec + m.total_dev == pytest.approx(best, abs=1e-9)


@pytest.mark.parametrize("start", [0, 7, 17, 40])
def test_dp_matches_exhaustive_three_slots(traces, start):
    cfg = EnvConfig(noise_sigma=0.0, e0=0.9, t_in0=24.8)
    g = DpGrids(e_levels=3, h_levels=3, **FINE)
    _, m = dp_oracle(traces, cfg, g, start_slot=start, n_slots=3)
    choices = [(e, h) for e in charge_level_values(cfg, 3) for h in np.linspace(0, cfg.h_max, 3)]
    best = min(_objective(traces, cfg, seq, start) for seq in itertools.product(choices, repeat=3))
    assert m.tec + m.total_dev == pytest.approx(best, abs=1e-9)


def test_dp_action_grid_and_coarse_grid(traces):
    actions, m = dp_oracle(traces, NOISELESS, DpGrids(), n_slots=24)
    assert len(actions) == 24 and m.n_slots == 24
    lev = charge_level_values(NOISELESS, DpGrids().e_levels)
    assert all(np.any(np.isclose(a.e, lev)) for a in actions)
    with pytest.raises(GridError, match="widen"):
        dp_oracle(traces, NOISELESS, DpGrids(t_range=(10.0, 12.0)), n_slots=3)


def test_dp_bucketing_never_beats_exact(traces):
    cfg = EnvConfig(noise_sigma=0.0)
    exact = dp_oracle(traces, cfg, DpGrids(e_levels=3, h_levels=3, **FINE), start_slot=5, n_slots=4)[1]
    coarse = dp_oracle(traces, cfg, DpGrids(e_levels=3, h_levels=3, e_cells=4, t_cell=1.0), start_slot=5, n_slots=4)[1]
    assert coarse.tec + coarse.total_dev >= exact.tec + exact.total_dev - 1e-9


def test_zero_policy_passivity(traces):
    m = evaluate(HomeEnv(NOISELESS, traces), ZeroPolicy(), n_slots=48)
    assert np.all(m.per_slot["x2"] == 0.0)
    g = traces.load[:48] - traces.pv[:48]
    ref = np.where(g > 0, traces.buy_price[:48], traces.sell_price[:48]) * g
    assert m.tec == pytest.approx(ref.sum(), abs=1e-9)


def test_evaluate_deterministic_and_consistent(traces):
    env = HomeEnv(CFG, traces)
    pol = RulePolicy(CFG, RuleConfig(), traces)
    m1, m2 = evaluate(env, pol, seed=4), evaluate(env, pol, seed=4)
    assert m1.as_row() == m2.as_row()
    assert m1.total_dev == pytest.approx(m1.mtd * m1.n_slots, abs=1e-9)
    assert m1.total_dev == pytest.approx(float(np.sum(m1.per_slot["x3"])), abs=1e-9)
    assert m1.n_slots == len(traces) and np.isfinite(m1.tec)


def test_evaluate_other_traces_and_schedule(traces):
    other = synth_traces(5, 1)
    m = evaluate(HomeEnv(NOISELESS, traces), ZeroPolicy(), traces=other)
    assert m.n_slots == 24
    sched = ScheduleController([Action(0.5, 0.5)] * 3)
    m = evaluate(HomeEnv(NOISELESS, traces), sched, n_slots=3)
    assert np.allclose(m.per_slot["e"], 0.5) and np.allclose(m.per_slot["h"], 0.5)


def test_write_timeseries(tmp_path, traces):
    m = evaluate(HomeEnv(NOISELESS, traces), ZeroPolicy(), n_slots=5)
    p = tmp_path / "ts.csv"
    write_timeseries(m, p)
    rows = list(csv.DictReader(p.open()))
    assert len(rows) == 5 and float(rows[2]["x1"]) == m.per_slot["x1"][2]
    assert Metrics(1.0, 0.5, 2.0, 4).as_row() == {"tec": 1.0, "mtd": 0.5, "total_dev": 2.0}
