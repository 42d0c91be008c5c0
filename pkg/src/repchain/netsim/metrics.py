from __future__ import annotations

import csv
import io
import json
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

REPUTATION_HEADER = ("tick", "node_id", "reputation", "mode")


def fmt(x: float) -> str:
    return f"{x:.6f}"


@dataclass
class MetricsLog:
    mode: str
    rows: list[tuple[int, int, float]] = field(default_factory=list)
    counters: Counter = field(default_factory=Counter)
    events: Optional[list[dict]] = None
    final_reputation: dict[int, float] = field(default_factory=dict)
    isolated: list[int] = field(default_factory=list)
    names: dict[int, str] = field(default_factory=dict)

    def sample(self, tick: int, node: int, reputation: float) -> None:
        self.rows.append((tick, node, reputation))

    def count(self, key: str, n: int = 1) -> None:
        self.counters[key] += n

    def event(self, tick: int, kind: str, **data) -> None:
        if self.events is not None:
            self.events.append({"tick": tick, "kind": kind, **data})

    def series(self, node: int) -> list[tuple[int, float]]:
        return [(t, r) for t, n, r in self.rows if n == node]

    def ticks(self) -> list[int]:
        return sorted({t for t, _, _ in self.rows})

    # -- exports

    def reputation_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(REPUTATION_HEADER)
        for tick, node, rep in self.rows:
            w.writerow((tick, node, fmt(rep), self.mode))
        return buf.getvalue()

    def counters_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(("counter", "value"))
        for key in sorted(self.counters):
            w.writerow((key, self.counters[key]))
        return buf.getvalue()

    def summary_text(self) -> str:
        lines = [f"mode: {self.mode}", "final reputations:"]
        for node in sorted(self.final_reputation):
            name = self.names.get(node, "")
            lines.append(f"  {node:3d} {name:<16} {fmt(self.final_reputation[node])}")
        iso = ", ".join(f"{n} ({self.names.get(n, '?')})" for n in self.isolated) or "none"
        lines.append(f"isolated: {iso}")
        lines.append(f"forks: {self.counters.get('forks', 0)}")
        lines.append(f"unresolved forks: {self.counters.get('unresolved_forks', 0)}")
        lines.append(f"blocks accepted: {self.counters.get('blocks_accepted', 0)}")
        rejected = {k[len('blocks_rejected.'):]: v for k, v in self.counters.items() if k.startswith("blocks_rejected.")}
        lines.append("blocks rejected: " + (", ".join(f"{k}={v}" for k, v in sorted(rejected.items())) or "none"))
        return "\n".join(lines) + "\n"

    def events_ndjson(self) -> str:
        return "".join(json.dumps(e, sort_keys=True) + "\n" for e in (self.events or []))

    def write(self, out_dir: Union[str, Path]) -> list[Path]:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = [out / "reputation.csv", out / "counters.csv", out / "summary.txt"]
        paths[0].write_text(self.reputation_csv())
        paths[1].write_text(self.counters_csv())
        paths[2].write_text(self.summary_text())
        if self.events is not None:
            p = out / "events.ndjson"
            p.write_text(self.events_ndjson())
            paths.append(p)
        return paths
