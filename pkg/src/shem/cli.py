"""Command-line front end: ``shem <command> [flags]``.

Every flag can also come from ``--config file.json``; keys are the flag names
with dashes or underscores. Explicit command-line flags win over the file.
Nested sections ``env``, ``mpc``, ``rule``, ``train``, ``dp`` configure the
corresponding dataclasses. Each command that writes results takes
``--run-dir`` and drops ``config.json`` (the resolved settings) there.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from dataclasses import fields
from pathlib import Path

from .bench import (
    DpGrids,
    Metrics,
    RuleConfig,
    RulePolicy,
    ZeroPolicy,
    dp_oracle,
    evaluate,
    write_timeseries,
)
from .env import EnvConfig, HomeEnv
from .hmpc import HmpcController, MpcConfig, generate_demonstrations, read_demos, write_demos
from .ppo import GaussianPolicy, PolicyController, TrainConfig, train_explicit_ppo, train_hmpc_airl, write_training_log
from .surrogate import SurrogateModel, collect_samples, train_surrogate
from .traces import load_csv, split, synth_traces, write_csv

log = logging.getLogger("shem")

SECTIONS = ("env", "mpc", "rule", "train", "dp")
COMPARE_ROWS = ("rule", "expert", "airl", "ppo-explicit", "dp-oracle")


class UsageError(Exception):
    pass


# ---------------------------------------------------------------- config plumbing

def _load_config(path) -> dict:
    if path is None:
        return {}
    p = Path(path)
    if not p.exists():
        raise UsageError(f"config file not found: {p}")
    try:
        cfg = json.loads(p.read_text())
    except json.JSONDecodeError as e:
        raise UsageError(f"{p}: invalid JSON ({e})") from None
    if not isinstance(cfg, dict):
        raise UsageError(f"{p}: top level must be an object")
    for name, cls in (("env", EnvConfig), ("mpc", MpcConfig), ("rule", RuleConfig), ("dp", DpGrids)):
        section = cfg.get(name, {})
        if not isinstance(section, dict):
            raise UsageError(f"{p}: section '{name}' must be an object")
        unknown = sorted(set(section) - {f.name for f in fields(cls)})
        if unknown:
            raise UsageError(f"{p}: unknown key(s) in '{name}': {', '.join(unknown)}")
    return cfg


def _env_cfg(conf: dict, **override) -> EnvConfig:
    return EnvConfig.from_dict({**conf.get("env", {}), **override})


def _mpc_cfg(conf: dict, **override) -> MpcConfig:
    return MpcConfig(**{**conf.get("mpc", {}), **override})


def _train_cfg(conf: dict, iterations=None) -> TrainConfig:
    d = json.loads(json.dumps(conf.get("train", {})))
    if iterations is not None:
        d.setdefault("ppo", {})["N"] = iterations
    return TrainConfig.from_dict(d)


def _traces(args):
    tr = load_csv(args.traces)
    return split(tr, args.train_days, args.test_days)


def _run_dir(args) -> Path:
    d = Path(args.run_dir)
    d.mkdir(parents=True, exist_ok=True)
    return d


def _write_config(run_dir: Path, args, conf: dict, extra: dict | None = None) -> None:
    flags = {k: v for k, v in vars(args).items() if k not in ("func", "config")}
    resolved = {"command": args.command, "flags": flags, **{s: conf.get(s, {}) for s in SECTIONS}}
    if extra:
        resolved.update(extra)
    (run_dir / "config.json").write_text(json.dumps(resolved, indent=2, default=str))


def write_metrics(rows: dict[str, Metrics], path) -> None:
    with Path(path).open("w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["policy", "tec", "mtd", "total_dev"])
        for name, m in rows.items():
            w.writerow([name, repr(m.tec), repr(m.mtd), repr(m.total_dev)])


def _eval_env(args, conf, test) -> HomeEnv:
    return HomeEnv(_env_cfg(conf, noise_sigma=args.eval_noise), test)


def _need(path, what: str) -> Path:
    if path is None:
        raise UsageError(f"--{what} is required")
    p = Path(path)
    if not p.exists():
        raise FileNotFoundError(f"{what} file not found: {p}")
    return p


# ---------------------------------------------------------------- commands

def cmd_synth(args, conf):
    tr = synth_traces(args.seed, args.days)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_csv(tr, out)
    print(f"wrote {len(tr)} slots to {out}")


def cmd_train_surrogate(args, conf):
    train, _ = _traces(args)
    env = HomeEnv(_env_cfg(conf), train)
    samples = collect_samples(env, args.samples, args.seed + 1)
    model, rmse = train_surrogate(samples, epochs=args.epochs, seed=args.seed)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    model.save(out)
    print(f"surrogate holdout rmse {rmse:.4f} degC -> {out}")


def cmd_gen_expert(args, conf):
    train, _ = _traces(args)
    model = SurrogateModel.load(_need(args.surrogate, "surrogate"))
    mpc = _mpc_cfg(conf, expert_slots=24 * args.expert_days)
    env = HomeEnv(_env_cfg(conf), train)
    t0 = time.perf_counter()
    demos = generate_demonstrations(env, model, mpc, seed=args.seed)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    write_demos(demos, out)
    print(f"{len(demos)} expert transitions in {time.perf_counter() - t0:.1f}s -> {out}")


def _train_common(args, conf, airl: bool):
    train, test = _traces(args)
    run = _run_dir(args)
    tcfg = _train_cfg(conf, args.iterations)
    env = HomeEnv(_env_cfg(conf), train)
    ev = _eval_env(args, conf, test)
    _write_config(run, args, conf, {"train_resolved": tcfg.to_dict()})
    if airl:
        demos = read_demos(_need(args.demos, "demos"))
        if args.expert_days is not None:
            demos = demos.head(24 * args.expert_days)
        policy, logs = train_hmpc_airl(env, demos, tcfg, seed=args.seed, eval_env=ev, snapshot_dir=run)
    else:
        policy, logs = train_explicit_ppo(env, tcfg, seed=args.seed, beta_t=args.beta_t, eval_env=ev,
                                          snapshot_dir=run)
    write_training_log(logs, run / "training_log.csv")
    policy.save(run / "policy.json")
    m = evaluate(ev, PolicyController(policy))
    name = "airl" if airl else "ppo-explicit"
    write_metrics({name: m}, run / "metrics.csv")
    write_timeseries(m, run / "timeseries.csv")
    print(f"{name}: tec={m.tec:.3f} mtd={m.mtd:.4f} -> {run}")
    return policy


def cmd_train(args, conf):
    _train_common(args, conf, airl=True)


def cmd_train_baseline(args, conf):
    _train_common(args, conf, airl=False)


def _controller(kind: str, args, conf, test):
    if kind == "rule":
        return RulePolicy(_env_cfg(conf), RuleConfig(**conf.get("rule", {})), test)
    if kind == "zero":
        return ZeroPolicy()
    if kind == "expert":
        return HmpcController(SurrogateModel.load(_need(args.surrogate, "surrogate")), _mpc_cfg(conf))
    return PolicyController(GaussianPolicy.load(_need(kind, "policy")))


def cmd_evaluate(args, conf):
    _, test = _traces(args)
    run = _run_dir(args)
    _write_config(run, args, conf)
    ev = _eval_env(args, conf, test)
    m = evaluate(ev, _controller(args.policy, args, conf, test), seed=args.seed)
    write_metrics({args.policy: m}, run / "metrics.csv")
    write_timeseries(m, run / "timeseries.csv")
    print(f"tec={m.tec:.3f} mtd={m.mtd:.4f} total_dev={m.total_dev:.3f}")


def cmd_compare(args, conf):
    _, test = _traces(args)
    run = _run_dir(args)
    _write_config(run, args, conf)
    ev = _eval_env(args, conf, test)
    rows: dict[str, Metrics] = {}
    rows["rule"] = evaluate(ev, _controller("rule", args, conf, test), seed=args.seed)
    rows["expert"] = evaluate(ev, _controller("expert", args, conf, test), seed=args.seed)
    for name, path in (("airl", args.airl_policy), ("ppo-explicit", args.ppo_policy)):
        rows[name] = evaluate(ev, _controller(path, args, conf, test), seed=args.seed)
    grids = DpGrids(**conf.get("dp", {}))
    _, rows["dp-oracle"] = dp_oracle(test, _env_cfg(conf, noise_sigma=0.0), grids)
    out = Path(args.out) if args.out else run / "compare.csv"
    write_metrics(rows, out)
    for name, m in rows.items():
        write_timeseries(m, run / f"timeseries_{name}.csv")
    for name, m in rows.items():
        print(f"{name:>13}: tec={m.tec:9.3f} mtd={m.mtd:.4f} total_dev={m.total_dev:9.3f}")
    print(f"dp-oracle comfort weight {grids.comfort_weight}; table -> {out}")


# ---------------------------------------------------------------- parser

def _add_data_flags(p):
    p.add_argument("--traces", required=True, help="trace CSV (slot,buy_price,sell_price,pv_kw,load_kw,t_out_c)")
    p.add_argument("--train-days", type=int, default=60)
    p.add_argument("--test-days", type=int, default=15)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="shem", description="Smart-home energy management: expert, imitation, baselines.")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    def cmd(name, func, help):
        p = sub.add_parser(name, help=help)
        p.add_argument("--config", help="JSON file with flag values and env/mpc/rule/train/dp sections")
        p.add_argument("--seed", type=int, default=0)
        p.set_defaults(func=func)
        return p

    p = cmd("synth", cmd_synth, "write synthetic traces")
    p.add_argument("--days", type=int, default=75)
    p.add_argument("--out", required=True)

    p = cmd("train-surrogate", cmd_train_surrogate, "fit the thermal surrogate on random-excitation data")
    _add_data_flags(p)
    p.add_argument("--samples", type=int, default=5000)
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--out", required=True)

    p = cmd("gen-expert", cmd_gen_expert, "run the two-level expert and write demonstrations")
    _add_data_flags(p)
    p.add_argument("--surrogate", required=True)
    p.add_argument("--expert-days", type=int, default=15)
    p.add_argument("--out", required=True)

    for name, func, help in (("train", cmd_train, "adversarial imitation from demonstrations"),
                             ("train-baseline", cmd_train_baseline, "PPO on the explicit cost reward")):
        p = cmd(name, func, help)
        _add_data_flags(p)
        p.add_argument("--run-dir", required=True)
        p.add_argument("--iterations", type=int, default=None, help="outer iterations N (overrides config)")
        p.add_argument("--eval-noise", type=float, default=0.0)
        if name == "train":
            p.add_argument("--demos", required=True)
            p.add_argument("--expert-days", type=int, default=None, help="use only the first K days of demos")
        else:
            p.add_argument("--beta-t", type=float, default=1.0)

    p = cmd("evaluate", cmd_evaluate, "evaluate one policy on the test split")
    _add_data_flags(p)
    p.add_argument("--policy", required=True, help="rule, zero, expert, or a policy snapshot JSON")
    p.add_argument("--surrogate", help="needed for --policy expert")
    p.add_argument("--run-dir", required=True)
    p.add_argument("--eval-noise", type=float, default=0.0)

    p = cmd("compare", cmd_compare, "evaluate all policies on the test split")
    _add_data_flags(p)
    p.add_argument("--surrogate", required=True)
    p.add_argument("--airl-policy", required=True)
    p.add_argument("--ppo-policy", required=True)
    p.add_argument("--run-dir", required=True)
    p.add_argument("--out", help="comparison CSV (default RUN_DIR/compare.csv)")
    p.add_argument("--eval-noise", type=float, default=0.0)
    return ap


def parse(argv) -> tuple[argparse.Namespace, dict]:
    ap = build_parser()
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    pre_args, rest = pre.parse_known_args(argv)
    command = next((a for a in rest if not a.startswith("-")), None)
    conf = _load_config(pre_args.config)
    subs = ap._subparsers._group_actions[0].choices
    if conf and command in subs:
        # file values become defaults, so explicit flags still win
        sub = subs[command]
        dests = {a.dest for a in sub._actions}
        flat = {k.replace("-", "_"): v for k, v in conf.items() if k not in SECTIONS}
        unknown = sorted(set(flat) - dests)
        if unknown:
            raise UsageError(f"unknown config key(s) for {command}: {', '.join(unknown)}")
        for a in sub._actions:
            if a.dest in flat:
                a.required = False
        sub.set_defaults(**flat)
    return ap.parse_args(argv), conf


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        args, conf = parse(argv)
    except UsageError as e:
        print(f"shem: error: {e}", file=sys.stderr)
        return 2
    except SystemExit as e:  # argparse usage errors
        return int(e.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        args.func(args, conf)
    except (UsageError, FileNotFoundError, ValueError, KeyError) as e:
        print(f"shem: error: {e}", file=sys.stderr)
        return 2
    except Exception as e:  # noqa: BLE001 - report and fail, never a traceback-free success
        print(f"shem: error: {type(e).__name__}: {e}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
