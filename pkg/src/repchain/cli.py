"""Command-line entry point.

    repchain run      --scenario PATH --seed N --out DIR
    repchain figure1  --scenario PATH --seeds N --out DIR
    repchain validate --scenario PATH

Exit codes: 0 success, 1 configuration error, 2 runtime failure.
Shipped scenarios can be named without a path, e.g. ``--scenario figure1``.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence

from .config import ConfigError, Mode, ScenarioConfig, load_scenario
from .netsim import SimulationError, run, simulate
from .netsim.metrics import fmt

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2

FIGURE1_MODES = (Mode.CONSTANT, Mode.RANDOM, Mode.PROPOSED)


def shipped_scenarios() -> list[str]:
    root = resources.files("repchain") / "scenarios"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".toml"))


def resolve_scenario_path(name: str) -> Path:
    """A file path, or the name of a shipped scenario."""
    path = Path(name)
    if path.exists():
        return path
    shipped = resources.files("repchain") / "scenarios" / f"{path.stem}.toml"
    if path.suffix in ("", ".toml") and shipped.is_file():
        return Path(str(shipped))
    return path


def _load(name: str) -> ScenarioConfig:
    return load_scenario(resolve_scenario_path(name))


# --------------------------------------------------------------------------
# figure 1
# --------------------------------------------------------------------------


@dataclass
class Figure1Result:
    ticks: list[int]
    traces: dict[Mode, list[float]]  # seed-averaged malicious reputation per sampling tick
    onset: int

    def final(self, mode: Mode) -> float:
        return self.traces[mode][-1]

    @property
    def ordering_holds(self) -> bool:
        return self.final(Mode.PROPOSED) < self.final(Mode.RANDOM) < self.final(Mode.CONSTANT)

    def max_rise_after_onset(self) -> float:
        """Largest increase between consecutive post-onset samples of the proposed trace."""
        trace = [v for t, v in zip(self.ticks, self.traces[Mode.PROPOSED]) if t >= self.onset]
        return max((b - a for a, b in zip(trace, trace[1:])), default=0.0)

    def to_csv(self) -> str:
        lines = ["tick,constant,random,proposed"]
        for i, t in enumerate(self.ticks):
            lines.append(",".join([str(t)] + [fmt(self.traces[m][i]) for m in FIGURE1_MODES]))
        return "\n".join(lines) + "\n"


def figure1_experiment(scenario: ScenarioConfig, seeds: int) -> Figure1Result:
    """Run every mode over seeds 0..seeds-1 and average the malicious nodes' traces."""
    malicious = [n.node_id for n in scenario.malicious_nodes()]
    if not malicious:
        raise ConfigError(["domains: figure1 needs at least one non-honest node"])
    onset = min(n.onset for n in scenario.malicious_nodes())
    traces: dict[Mode, list[float]] = {}
    ticks: list[int] = []
    for mode in FIGURE1_MODES:
        variant = scenario.with_mode(mode)
        total: Optional[list[float]] = None
        for seed in range(seeds):
            log = run(variant, seed)
            by_tick: dict[int, list[float]] = {}
            for t, node, rep in log.rows:
                if node in malicious:
                    by_tick.setdefault(t, []).append(rep)
            ticks = sorted(by_tick)
            avg = [sum(by_tick[t]) / len(by_tick[t]) for t in ticks]
            total = avg if total is None else [a + b for a, b in zip(total, avg)]
        traces[mode] = [v / seeds for v in total]
    return Figure1Result(ticks, traces, onset)


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------


def cmd_run(args) -> int:
    scenario = _load(args.scenario)
    world = simulate(scenario, args.seed, log_events=args.events)
    failures = world.strict_failures()
    paths = world.metrics.write(args.out)
    if args.archive:
        for dom in world.domains:
            paths += dom.archive.export(Path(args.out) / f"archive_domain{dom.id}")
    for p in paths[:4]:
        print(f"wrote {p}")
    if failures:
        for f in failures[:10]:
            print(f"invariant violated: {f}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def cmd_figure1(args) -> int:
    scenario = _load(args.scenario)
    if args.seeds < 1:
        raise ConfigError(["--seeds: must be at least 1"])
    if args.seeds == 1:
        print("warning: a single seed makes the ordering check noisy", file=sys.stderr)
    result = figure1_experiment(scenario, args.seeds)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "figure1.csv").write_text(result.to_csv())
    finals = ", ".join(f"{m.value}={fmt(result.final(m))}" for m in FIGURE1_MODES)
    print(f"final malicious reputation ({args.seeds} seeds): {finals}")
    verdict = "PASS" if result.ordering_holds else "FAIL"
    print(f"{verdict}: proposed < random < constant at tick {result.ticks[-1]}")
    return EXIT_OK


def cmd_validate(args) -> int:
    scenario = _load(args.scenario)
    print(json.dumps(scenario.resolved(), indent=2, sort_keys=True))
    print(f"byzantine fraction: {scenario.byzantine_fraction:.3f}", file=sys.stderr)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="repchain", description="Reputation-consensus blockchain simulator.")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run one simulation and write CSV metrics")
    r.add_argument("--scenario", required=True, help=f"TOML file or shipped name ({', '.join(shipped_scenarios())})")
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--out", required=True)
    r.add_argument("--events", action="store_true", help="also write events.ndjson")
    r.add_argument("--archive", action="store_true", help="also export released headers")
    r.set_defaults(func=cmd_run)

    f = sub.add_parser("figure1", help="three-mode seed sweep of the malicious node's reputation")
    f.add_argument("--scenario", required=True)
    f.add_argument("--seeds", type=int, default=10)
    f.add_argument("--out", required=True)
    f.set_defaults(func=cmd_figure1)

    v = sub.add_parser("validate", help="parse and validate; print the resolved configuration")
    v.add_argument("--scenario", required=True)
    v.set_defaults(func=cmd_validate)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        for line in exc.errors:
            print(f"config error: {line}", file=sys.stderr)
        return EXIT_CONFIG
    except SimulationError as exc:
        print(f"runtime failure: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
