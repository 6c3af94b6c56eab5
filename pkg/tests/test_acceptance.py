"""Acceptance criteria; each test prints one PASS/FAIL line (also listed in the run summary)."""

import itertools
import math
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from shem.airl import (
    Normalizer,
    RewardNet,
    bce_with_logits,
    init_reward_net,
    reward_value,
    score_from_logit,
    state_features,
    update_discriminator,
)
from shem.bench import RuleConfig, RulePolicy, dp_oracle, evaluate
from shem.env import Action, EnvConfig, HomeEnv, charge_level_values, e_bounds, energy_increments
from shem.hmpc import HmpcController, MpcConfig, generate_demonstrations, lower_mpc_bnb, lower_mpc_dp, sequence_cost
from shem.nn import AdamState, init_approximator
from shem.ppo import PolicyController, TrainConfig, init_policy, train_hmpc_airl
from shem.surrogate import surrogate_grad_h, surrogate_next

CFG = EnvConfig()
NOISELESS = EnvConfig(noise_sigma=0.0)


def report(n, title, ok, detail, t0):
    line = f"criterion {n} {'PASS' if ok else 'FAIL'}: {title} | {detail} | {time.perf_counter() - t0:.1f}s"
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert ok, line


# ---------------------------------------------------------------- shared runs

@pytest.fixture(scope="module")
def eval_env(default_split):
    _, test = default_split
    return HomeEnv(NOISELESS, test)


@pytest.fixture(scope="module")
def rule_metrics(eval_env):
    return evaluate(eval_env, RulePolicy(NOISELESS, RuleConfig(), eval_env.traces))


@pytest.fixture(scope="module")
def demos60(default_split, trained_surrogate):
    train, _ = default_split
    model, _ = trained_surrogate
    # the 15-day set is the head of this run, so both variants share one expert trajectory
    return generate_demonstrations(HomeEnv(CFG, train), model, MpcConfig(expert_slots=24 * 60), seed=0)


def _train(default_split, demos, seed=0):
    train, _ = default_split
    pol, logs = train_hmpc_airl(HomeEnv(CFG, train), demos, TrainConfig(), seed=seed)
    return pol, logs


@pytest.fixture(scope="module")
def airl15(default_split, demos60):
    t0 = time.perf_counter()
    pol, logs = _train(default_split, demos60.head(24 * 15))
    return pol, logs, time.perf_counter() - t0


# ---------------------------------------------------------------- criteria

def test_c1_constraint_suite():
    t0 = time.perf_counter()
    rng = np.random.default_rng(0)
    from shem.traces import synth_traces

    tr = synth_traces(3, 10)
    env = HomeEnv(CFG, tr)
    worst_e, worst_a, min_x3, steps = 0.0, 0.0, np.inf, 0
    for ep in range(10_000):
        env.reset(int(rng.integers(len(tr))), seed=ep, e0=float(rng.uniform(CFG.e_min, CFG.e_max)),
                  t_in0=float(rng.uniform(15, 32)), n_slots=int(rng.integers(1, 25)))
        while not env.exhausted:
            s = env.state
            raw = Action(float(rng.uniform(-6, 6)), float(rng.uniform(-3, 5)))
            out = env.step(raw)
            lo, hi = e_bounds(CFG, s.e_level)
            a = out.action
            worst_a = max(worst_a, a.e - hi, lo - a.e, -a.h, a.h - CFG.h_max,
                          a.e - CFG.c_max, -CFG.d_max - a.e)
            E = out.next_state.e_level
            worst_e = max(worst_e, CFG.e_min - E, E - CFG.e_max)
            min_x3 = min(min_x3, out.x3)
            steps += 1
    elapsed = time.perf_counter() - t0
    ok = worst_e <= 1e-9 and worst_a <= 0.0 and min_x3 >= 0.0 and elapsed < 30
    report(1, "constraint suite", ok,
           f"10000 episodes / {steps} steps, max E violation {worst_e:.1e}, max action violation {worst_a:.1e}, "
           f"min x3 {min_x3:.3g}", t0)


def _rel(a, b):
    return abs(a - b) / max(1e-6, abs(a) + abs(b))


def test_c2_gradient_suite(trained_surrogate):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2)
    d, worst, probes = 1e-5, 0.0, 0
    for k in range(20):
        act = ("tanh", "softplus")[k % 2]
        net = init_approximator([5, 8, 6, 2], act, seed=k)
        x = rng.normal(size=5)
        J = net.grad_input(x)
        for j in range(5):
            e = np.zeros(5)
            e[j] = d
            fd = (net.forward(x + e) - net.forward(x - e)) / (2 * d)
            for o in range(2):
                worst = max(worst, _rel(J[o, j], fd[o]))
                probes += 1
        up = rng.normal(size=2)
        g = net.grad_params(x, up)
        for i in rng.choice(g.size, size=5, replace=False):
            e = np.zeros_like(net.params)
            e[i] = d
            fd = (up @ net.with_params(net.params + e).forward(x) - up @ net.with_params(net.params - e).forward(x)) / (2 * d)
            worst = max(worst, _rel(g[i], fd))
            probes += 1
    model, _ = trained_surrogate
    for _ in range(100):
        t_in, t_out, h = rng.uniform(20, 27), rng.uniform(22, 34), rng.uniform(0.05, 1.95)
        fd = (surrogate_next(model, t_in, t_out, h + d) - surrogate_next(model, t_in, t_out, h - d)) / (2 * d)
        worst = max(worst, _rel(surrogate_grad_h(model, t_in, t_out, h), fd))
        probes += 1
    elapsed = time.perf_counter() - t0
    report(2, "gradient suite", probes >= 200 and worst < 1e-4 and elapsed < 10,
           f"{probes} probes, worst rel err {worst:.2e}", t0)


def test_c3_unit_identities():
    t0 = time.perf_counter()
    rng = np.random.default_rng(3)
    r, logpi = rng.uniform(-20, 20, 1000), rng.uniform(-20, 5, 1000)
    direct = np.exp(r) / (np.exp(r) + np.exp(logpi))
    e_score = np.max(np.abs(score_from_logit(r, logpi) - direct))

    rnet = init_reward_net(seed=4)
    T = 30
    S = np.column_stack([rng.uniform(0, 1.5, T + 1), rng.uniform(0.3, 2, T + 1), rng.uniform(0.4, 4, T + 1),
                         rng.uniform(24, 32, T + 1), rng.uniform(20, 26, T + 1), rng.uniform(0.05, 0.3, T + 1),
                         np.arange(T + 1) % 24])
    A = rng.uniform(-2, 2, (T, 2))
    rs = reward_value(rnet, S[:-1], A, S[1:])
    disc = rnet.gamma ** np.arange(T)
    g = rnet.g_net(np.hstack([state_features(S[:-1]), A]))[:, 0]
    hS = rnet.h_net(state_features(S))[:, 0]
    e_tel = abs(disc @ rs - (disc @ g + rnet.gamma**T * hS[-1] - hS[0]))

    e_ln2 = max(abs(bce_with_logits(0.0, 1) - math.log(2)), abs(bce_with_logits(0.0, 0) - math.log(2)))
    e_ln4 = max(abs(bce_with_logits(-math.log(3), 1) - math.log(4)), abs(bce_with_logits(math.log(3), 0) - math.log(4)))
    ok = e_score <= 1e-12 and e_tel <= 1e-9 and e_ln2 <= 1e-9 and e_ln4 <= 1e-9
    report(3, "reward/score/BCE identities", ok,
           f"score err {e_score:.1e}, telescoping err {e_tel:.1e}, ln2 err {e_ln2:.1e}, ln4 err {e_ln4:.1e}", t0)


def _instance(rng, H):
    buy = rng.uniform(0.02, 0.4, H)
    return (rng.uniform(0, 2, H), buy, buy * rng.uniform(0.2, 1.0, H), rng.uniform(0, 2, H), rng.uniform(0, 2, H),
            float(rng.uniform(CFG.e_min, CFG.e_max)))


def _exhaustive(levels, inst):
    h, buy, sell, pv, load, e0 = inst
    dE = energy_increments(CFG, levels)
    best = np.inf
    for seq in itertools.product(range(levels.size), repeat=len(h)):
        E = e0 + np.cumsum(dE[list(seq)])
        if np.all(E >= CFG.e_min - 1e-9) and np.all(E <= CFG.e_max + 1e-9):
            best = min(best, sequence_cost(CFG, levels[list(seq)], h, buy, sell, pv, load))
    return best


def test_c4_branch_and_bound_optimality():
    t0 = time.perf_counter()
    rng = np.random.default_rng(4)
    worst_ex = 0.0
    for _ in range(100):
        H, L = int(rng.integers(1, 5)), int(rng.choice([3, 5]))
        inst = _instance(rng, H)
        e = lower_mpc_bnb(CFG, MpcConfig(charge_levels=L), *inst)
        worst_ex = max(worst_ex, abs(sequence_cost(CFG, e, *inst[:5]) - _exhaustive(charge_level_values(CFG, L), inst)))
    worst_dp = 0.0
    for _ in range(100):
        inst = _instance(rng, int(rng.integers(6, 16)))
        mc = MpcConfig()
        worst_dp = max(worst_dp, abs(sequence_cost(CFG, lower_mpc_bnb(CFG, mc, *inst), *inst[:5])
                                     - sequence_cost(CFG, lower_mpc_dp(CFG, mc, *inst), *inst[:5])))
    elapsed = time.perf_counter() - t0
    report(4, "branch-and-bound optimality", worst_ex <= 1e-9 and worst_dp <= 1e-6 and elapsed < 60,
           f"vs exhaustive max gap {worst_ex:.1e} (100), vs DP max gap {worst_dp:.1e} (100)", t0)


def test_c5_expert_quality(eval_env, rule_metrics, trained_surrogate):
    t0 = time.perf_counter()
    model, _ = trained_surrogate
    expert = evaluate(eval_env, HmpcController(model, MpcConfig()))
    _, dp = dp_oracle(eval_env.traces, NOISELESS)
    elapsed = time.perf_counter() - t0
    ok = expert.tec < rule_metrics.tec and expert.mtd <= 0.1 and dp.tec <= expert.tec and elapsed < 300
    report(5, "expert quality", ok,
           f"rule TEC {rule_metrics.tec:.3f}, expert TEC {expert.tec:.3f} MTD {expert.mtd:.4f}, "
           f"dp-oracle TEC {dp.tec:.3f} MTD {dp.mtd:.4f}", t0)


def test_c6_end_to_end_learning(default_split, demos60, airl15, eval_env, rule_metrics):
    t0 = time.perf_counter()
    pol, logs, train_time = airl15
    m = evaluate(eval_env, PolicyController(pol))
    pol2, logs2 = _train(default_split, demos60.head(24 * 15))
    same = np.array_equal(pol.params, pol2.params) and logs == logs2
    drop = 1 - m.tec / rule_metrics.tec
    ok = len(logs) >= 200 and drop >= 0.10 and m.mtd <= 0.5 and same and train_time < 1800
    report(6, "end-to-end learning (15-day demos)", ok,
           f"N={len(logs)}, TEC {m.tec:.3f} vs rule {rule_metrics.tec:.3f} ({100 * drop:.1f}% lower), "
           f"MTD {m.mtd:.4f}, rerun identical: {same}, train {train_time:.0f}s", t0)


def test_c7_data_efficiency(default_split, demos60, airl15, eval_env):
    t0 = time.perf_counter()
    pol15, _, _ = airl15
    pol60, _ = _train(default_split, demos60)
    tec15 = evaluate(eval_env, PolicyController(pol15)).tec
    tec60 = evaluate(eval_env, PolicyController(pol60)).tec
    gap = abs(tec15 - tec60) / abs(tec60)
    report(7, "15-day vs 60-day demos", gap <= 0.10,
           f"TEC 15-day {tec15:.3f}, 60-day {tec60:.3f}, gap {100 * gap:.1f}% (demos {len(demos60.head(360))}/{len(demos60)})", t0)


def test_c8_adversarial_equilibrium():
    t0 = time.perf_counter()
    rng = np.random.default_rng(8)
    n = 128
    S = np.column_stack([rng.uniform(0, 1.5, n), rng.uniform(0.3, 2, n), rng.uniform(0.4, 4, n),
                         rng.uniform(24, 32, n), rng.uniform(20, 26, n), rng.uniform(0.05, 0.3, n),
                         rng.integers(0, 24, n)])
    S2 = np.roll(S, -1, axis=0)
    norm = Normalizer.fit(state_features(S))
    pol = init_policy(CFG, (16, 16), seed=1, obs_norm=norm)
    A = pol.squash(pol.mean(S) + 0.3 * rng.standard_normal((n, 2)))
    rnet = init_reward_net(seed=3, state_norm=norm, action_norm=Normalizer.fit(A))
    opt = AdamState.fresh(rnet.params.size, 1e-3)
    batch = (S, A, S2)
    first = None
    for _ in range(500):
        rnet, opt, stats = update_discriminator(rnet, batch, batch, pol, opt)
        first = stats.loss if first is None else first
    report(8, "identical batches -> ln 2", abs(stats.loss - math.log(2)) <= 0.05,
           f"loss {first:.4f} -> {stats.loss:.4f} after 500 steps (ln 2 = {math.log(2):.4f})", t0)
