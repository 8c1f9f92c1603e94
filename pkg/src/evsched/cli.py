"""``scheduler`` command-line entry point.

Subcommands: ingest, synth, analyze, train, oracle, eval. Settings come from
an optional JSON config file (keys mirror :class:`RunConfig`); command-line
flags override file values.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from evsched import mlp
from evsched.data_ingest import GAP_POLICIES, SynthConfig, build_training_corpus, parse_meter_csv, synth_generate, write_meter_csv
from evsched.dqn import AgentConfig, DQNScheduler
from evsched.env import DEFAULT_WEIGHTS, BatteryConfig, EnvContext, Norms
from evsched.evalreport import evaluate, format_savings_table, write_schedules_csv
from evsched.oracle import dp_optimal
from evsched.profile_analysis import ProfileAnalyzer, profiles_from_dict
from evsched.tariff import TouSchedule, default_austin_2018

logger = logging.getLogger("evsched")


class CliError(Exception):
    pass


@dataclass
class RunConfig:
    data: str | None = None
    model: str | None = None
    report: str | None = None
    schedules: str | None = None
    profile: str | None = None
    stats: str | None = None
    battery: BatteryConfig = field(default_factory=BatteryConfig)
    agent: AgentConfig = field(default_factory=AgentConfig)
    tariff: list | None = None
    weights: tuple = DEFAULT_WEIGHTS
    split_fraction: float = 0.5
    min_ev_kw: float = 0.0
    active_kw: float = 0.1
    gap_policy: str = "reject"
    seed: int = 0

    def __post_init__(self):
        if len(self.weights) != 4 or any(w < 0 for w in self.weights):
            raise CliError(f"weights must be 4 non-negative numbers, got {self.weights}")
        if self.gap_policy not in GAP_POLICIES:
            raise CliError(f"gap_policy must be one of {GAP_POLICIES}")

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise CliError(f"unknown config key(s): {', '.join(sorted(unknown))}")
        data = dict(data)
        if "battery" in data:
            data["battery"] = BatteryConfig(**data["battery"])
        if "agent" in data:
            agent = dict(data["agent"])
            if "hidden_sizes" in agent:
                agent["hidden_sizes"] = tuple(agent["hidden_sizes"])
            data["agent"] = AgentConfig(**agent)
        if "weights" in data:
            data["weights"] = tuple(float(w) for w in data["weights"])
        return cls(**data)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["agent"] = self.agent.to_dict()
        d["weights"] = list(self.weights)
        return d

    def resolved_tariff(self) -> TouSchedule:
        return TouSchedule.from_config(self.tariff) if self.tariff else default_austin_2018()


def load_config(path) -> RunConfig:
    if path is None:
        return RunConfig()
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise CliError(f"config file not found: {path}") from None
    except (OSError, json.JSONDecodeError) as exc:
        raise CliError(f"cannot read config {path}: {exc}") from None
    try:
        return RunConfig.from_dict(data)
    except (TypeError, ValueError) as exc:
        raise CliError(f"invalid config {path}: {exc}") from None


def _require_file(path, what="input") -> Path:
    if path is None:
        raise CliError(f"no {what} path given")
    path = Path(path)
    if not path.is_file():
        raise CliError(f"{what} file not found: {path}")
    return path


def _dump_json(obj, path) -> None:
    Path(path).write_text(json.dumps(obj, indent=1, sort_keys=True, allow_nan=False) + "\n", encoding="utf-8")


def _load_episodes(cfg: RunConfig):
    path = _require_file(cfg.data, "data")
    return parse_meter_csv(path, cfg.gap_policy)


def _split(cfg: RunConfig, episodes):
    return build_training_corpus(episodes, cfg.min_ev_kw, cfg.split_fraction)


def _profiles(cfg: RunConfig, train_days):
    if cfg.profile:
        data = json.loads(_require_file(cfg.profile, "profile").read_text(encoding="utf-8"))
        return profiles_from_dict(data)
    analyzer = ProfileAnalyzer(cfg.active_kw, cfg.resolved_tariff()).fit(train_days)
    return analyzer.flex_, analyzer.costs_


def _context(cfg: RunConfig, flex, costs) -> EnvContext:
    return EnvContext(flex, costs, cfg.resolved_tariff(), cfg.battery, tuple(cfg.weights))


def cmd_ingest(cfg: RunConfig, args) -> None:
    episodes = _load_episodes(cfg)
    summary = {
        "days": len(episodes),
        "first_day": episodes[0].date.isoformat() if episodes else None,
        "last_day": episodes[-1].date.isoformat() if episodes else None,
        "dropped_days": [d.isoformat() for d in episodes.dropped_days],
        "zero_filled_slots": episodes.filled_slots,
        "days_with_ev": sum(ep.p_day_ev > cfg.min_ev_kw for ep in episodes),
        "gap_policy": cfg.gap_policy,
    }
    if args.out:
        write_meter_csv(episodes, args.out)
    print(json.dumps(summary, indent=1))


def cmd_synth(cfg: RunConfig, args) -> None:
    kwargs = {"seed": args.seed if args.seed is not None else cfg.seed, "n_days": args.days}
    if args.pv_peak is not None:
        kwargs["pv_peak_kw"] = args.pv_peak
    if args.load_scale is not None:
        kwargs["load_scale"] = args.load_scale
    if args.ev_range is not None:
        kwargs["ev_daily_kw_range"] = tuple(args.ev_range)
    try:
        synth = SynthConfig(**kwargs)
    except ValueError as exc:
        raise CliError(str(exc)) from None
    episodes = synth_generate(synth)
    write_meter_csv(episodes, args.out)
    print(f"wrote {len(episodes)} days to {args.out}")


def cmd_analyze(cfg: RunConfig, args) -> None:
    episodes = _load_episodes(cfg)
    days = _split(cfg, episodes)[0] if args.split == "train" else list(episodes)
    analyzer = ProfileAnalyzer(cfg.active_kw, cfg.resolved_tariff()).fit(days)
    doc = analyzer.to_dict()
    doc["config"] = cfg.to_dict()
    doc["days_used"] = args.split
    _dump_json(doc, args.out)
    print(f"wrote profile of {len(days)} days to {args.out}")


def cmd_train(cfg: RunConfig, args) -> None:
    if not cfg.model:
        raise CliError("no model output path given (--model-out)")
    train_days, _ = _split(cfg, _load_episodes(cfg))
    flex, costs = _profiles(cfg, train_days)
    ctx = _context(cfg, flex, costs)
    params = cfg.agent.to_dict()
    params["seed"] = cfg.seed
    params["hidden_sizes"] = tuple(params["hidden_sizes"])
    model = DQNScheduler(**params, battery=ctx.battery, tariff=ctx.tariff, weights=ctx.weights, flex=flex, costs=costs)
    model.fit(train_days)
    meta = {
        "config": cfg.to_dict(),
        "seed": cfg.seed,
        "norms": model.norms_.to_dict(),
        "profile": {"flexibility": flex.to_dict(), "cost": costs.to_dict()},
        "tariff": ctx.tariff.to_config(),
        "train_days": [ep.date.isoformat() for ep in train_days],
    }
    mlp.save(model.net_, cfg.model, extra=meta)
    if cfg.stats:
        with open(cfg.stats, "w", newline="", encoding="utf-8") as fh:
            fh.write(f"# config: {json.dumps(cfg.to_dict(), sort_keys=True)}\n")
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["epoch", "epsilon", "mean_loss", "mean_greedy_return"])
            for row in model.stats_.rows():
                writer.writerow([row[0], repr(row[1]), repr(row[2]), repr(row[3])])
    print(f"trained {len(model.stats_)} epochs on {len(train_days)} days; model written to {cfg.model}")


def cmd_oracle(cfg: RunConfig, args) -> None:
    episodes = [ep for ep in _load_episodes(cfg) if ep.p_day_ev > cfg.min_ev_kw]
    if not episodes:
        raise CliError("no days with EV charging in the data")
    if not cfg.profile:
        raise CliError("oracle needs --profile (see `scheduler analyze`)")
    flex, costs = _profiles(cfg, episodes)
    ctx = _context(cfg, flex, costs)
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"# config: {json.dumps(cfg.to_dict(), sort_keys=True)}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["date", "slot", "action", "ev_kw", "reward", "cost"])
        for ep in episodes:
            sol = dp_optimal(ep, ctx)
            for t, br in enumerate(sol.per_step):
                writer.writerow([ep.date.isoformat(), t, int(sol.actions[t]), repr(float(sol.ev_kw[t])),
                                 repr(br.total), repr(br.cost)])
    print(f"wrote optimal schedules for {len(episodes)} days to {args.out}")


def _load_model(cfg: RunConfig):
    path = _require_file(cfg.model, "model")
    try:
        net, meta = mlp.load(path)
    except (ValueError, KeyError, json.JSONDecodeError) as exc:
        raise CliError(f"cannot read model {path}: {exc}") from None
    return net, meta


def cmd_eval(cfg: RunConfig, args) -> None:
    net, meta = _load_model(cfg)
    _, test_days = _split(cfg, _load_episodes(cfg))
    if cfg.profile:
        flex, costs = _profiles(cfg, None)
    else:
        flex, costs = profiles_from_dict(meta["profile"])
    ctx = _context(cfg, flex, costs)
    model = DQNScheduler(battery=ctx.battery, tariff=ctx.tariff, weights=ctx.weights, flex=flex, costs=costs)
    model.net_, model.context_ = net, ctx
    model.norms_ = Norms(**meta["norms"])
    report = evaluate(model, test_days, ctx)
    doc = report.to_dict()
    doc["config"] = cfg.to_dict()
    doc["seed"] = cfg.seed
    doc["model_seed"] = meta.get("seed")
    if cfg.report:
        _dump_json(doc, cfg.report)
    if cfg.schedules:
        write_schedules_csv(report, cfg.schedules, ctx.tariff, f"config: {json.dumps(cfg.to_dict(), sort_keys=True)}")
    print(format_savings_table(report), end="")


COMMANDS = {
    "ingest": cmd_ingest,
    "synth": cmd_synth,
    "analyze": cmd_analyze,
    "train": cmd_train,
    "oracle": cmd_oracle,
    "eval": cmd_eval,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="scheduler", description="DQN EV-charging scheduler")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, data_flag="--data"):
        p.add_argument("--config", help="JSON run config; flags override its values")
        p.add_argument(data_flag, dest="data", help="meter CSV (timestamp,ev_kw,non_ev_kw,pv_kw)")
        p.add_argument("--gap-policy", choices=GAP_POLICIES, help="handling of days with missing slots")
        p.add_argument("--split-fraction", type=float, help="fraction of qualifying days used for training")
        p.add_argument("--seed", type=int, help="random seed")

    p = sub.add_parser("ingest", help="parse and validate a meter CSV")
    common(p, "--input")
    p.add_argument("--out", help="optionally re-write the parsed days as a clean CSV")

    p = sub.add_parser("synth", help="generate a synthetic household CSV")
    p.add_argument("--config", help="JSON run config")
    p.add_argument("--seed", type=int, help="random seed")
    p.add_argument("--days", type=int, required=True, help="number of days")
    p.add_argument("--out", required=True, help="output CSV path")
    p.add_argument("--pv-peak", type=float, help="PV peak power (kW)")
    p.add_argument("--load-scale", type=float, help="multiplier on the non-EV load profile")
    p.add_argument("--ev-range", type=float, nargs=2, metavar=("MIN", "MAX"), help="daily EV kW-sum range")

    p = sub.add_parser("analyze", help="compute flexibility and cost profiles")
    common(p, "--input")
    p.add_argument("--out", required=True, help="profile JSON path")
    p.add_argument("--split", choices=("train", "all"), default="train",
                   help="analyse only the training days (default) or every day")

    p = sub.add_parser("train", help="train the DQN scheduler")
    common(p)
    p.add_argument("--model-out", dest="model", help="model JSON path")
    p.add_argument("--stats-out", dest="stats", help="per-epoch stats CSV path")
    p.add_argument("--profile", help="profile JSON (default: computed from the training days)")
    p.add_argument("--epochs", type=int, help="training epochs")

    p = sub.add_parser("oracle", help="exact DP schedules for every day with EV charging")
    common(p)
    p.add_argument("--profile", help="profile JSON")
    p.add_argument("--out", required=True, help="schedule CSV path")

    p = sub.add_parser("eval", help="evaluate a trained model on the test days")
    common(p)
    p.add_argument("--model", help="model JSON path")
    p.add_argument("--profile", help="profile JSON (default: the one stored in the model)")
    p.add_argument("--report", help="report JSON path")
    p.add_argument("--schedules", help="schedule comparison CSV path")
    return parser


OVERRIDES = ("data", "gap_policy", "split_fraction", "seed", "model", "stats", "profile", "report", "schedules")


def resolve_config(args) -> RunConfig:
    cfg = load_config(getattr(args, "config", None))
    updates = {k: getattr(args, k) for k in OVERRIDES if getattr(args, k, None) is not None}
    if getattr(args, "epochs", None) is not None:
        agent = cfg.agent.to_dict()
        agent["epochs"] = args.epochs
        agent["hidden_sizes"] = tuple(agent["hidden_sizes"])
        updates["agent"] = AgentConfig(**agent)
    merged = {**{f.name: getattr(cfg, f.name) for f in fields(cfg)}, **updates}
    return RunConfig(**merged)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = resolve_config(args)
        COMMANDS[args.command](cfg, args)
    except CliError as exc:
        print(f"scheduler {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, OSError) as exc:
        print(f"scheduler {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
