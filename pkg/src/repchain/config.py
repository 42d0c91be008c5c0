"""Scenario files: TOML, validated with pydantic.

Validation errors are reported as ``path.to.field: message`` lines so the
CLI can point at the offending key without a traceback.
"""

from __future__ import annotations

import enum
from pathlib import Path
from typing import Optional, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .codec import TxType
from .consensus import ConsensusParams, Role
from .crypto import KeyPair
from .reputation import DEFAULT_WEIGHTS, WeightTable

try:  # Python >= 3.11
    import tomllib
except ModuleNotFoundError:  # pragma: no cover
    import tomli as tomllib


class Behavior(str, enum.Enum):
    HONEST = "honest"
    FALSE_INFO = "false_info"
    DROPPER = "dropper"
    SELECTIVE_FORWARDER = "selective_forwarder"
    COLLUDER = "colluder"
    FLOODER = "flooder"


class Mode(str, enum.Enum):
    CONSTANT = "constant"
    RANDOM = "random"
    PROPOSED = "proposed"


class ConfigError(ValueError):
    """Scenario failed to parse or validate; ``errors`` holds ``path: message`` lines."""

    def __init__(self, errors: list[str]):
        self.errors = errors
        super().__init__("\n".join(errors))


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class NodeSpec(_Strict):
    name: str = Field(min_length=1)
    role: Role
    behavior: Behavior = Behavior.HONEST
    onset: int = Field(default=0, ge=0, description="tick at which adversarial behaviour starts")
    group: Optional[int] = Field(default=None, description="collusion group id")
    rate: int = Field(default=1, ge=1, description="flood blocks per tick")
    fraction: float = Field(default=0.5, ge=0.0, le=1.0, description="share of messages a selective forwarder sends")

    @model_validator(mode="after")
    def _colluder_needs_group(self):
        if self.behavior is Behavior.COLLUDER and self.group is None:
            raise ValueError("colluder nodes need a 'group'")
        return self

    @property
    def node_id(self) -> int:
        return KeyPair.from_name(self.name).node_id

    @property
    def byzantine(self) -> bool:
        return self.behavior is not Behavior.HONEST


class ConsensusSpec(_Strict):
    T1: int = Field(ge=1)
    T2: int = Field(gt=0)
    T3: int = Field(gt=0)
    T4: float = Field(ge=0, le=100)
    n_candidates: int = Field(default=5, ge=1)
    k_exec: int = Field(default=3, ge=1)
    edge_preference: float = Field(default=3.0, gt=0)
    round_ticks: int = Field(default=1, ge=1)
    slot_timeout: int = Field(default=2, ge=1, description="extra ticks waited after a missed slot")

    @model_validator(mode="after")
    def _k_within_n(self):
        if self.k_exec > self.n_candidates:
            raise ValueError("k_exec must not exceed n_candidates")
        return self

    def params(self) -> ConsensusParams:
        return ConsensusParams(self.T1, self.T2, self.T3, self.T4, self.n_candidates, self.k_exec,
                               self.edge_preference, self.round_ticks)


class DosSpec(_Strict):
    initial_budget: float = Field(default=100.0, gt=0)
    cost_per_block: float = Field(default=5.0, gt=0)
    low_bound: float = Field(default=20.0, ge=0)
    refund: Optional[float] = Field(default=None, ge=0, description="defaults to cost_per_block")
    refund_interval: Optional[int] = Field(default=None, ge=1, description="ticks; defaults to round_ticks")


class TrafficSpec(_Strict):
    query_interval: int = Field(default=5, ge=1)
    update_interval: int = Field(default=20, ge=1)
    query_timeout: int = Field(default=3, ge=1)
    max_block_txs: int = Field(default=32, ge=1)


class DomainSpec(_Strict):
    id: int = Field(ge=0, le=255)
    nodes: list[NodeSpec] = Field(min_length=1)
    consensus: ConsensusSpec
    weights: dict[str, float] = Field(default_factory=lambda: {t.name: w for t, w in DEFAULT_WEIGHTS.items()})
    dos: DosSpec = Field(default_factory=DosSpec)
    traffic: TrafficSpec = Field(default_factory=TrafficSpec)
    release_interval: int = Field(default=64, ge=2, description="blocks between storage releases")

    @field_validator("weights")
    @classmethod
    def _weights_complete(cls, v: dict[str, float]):
        merged = {t.name: w for t, w in DEFAULT_WEIGHTS.items()}
        for key, w in v.items():
            if key not in merged:
                raise ValueError(f"unknown transaction type {key!r}; expected one of {', '.join(merged)}")
            if not w > 0:
                raise ValueError(f"weight for {key} must be positive")
            merged[key] = w
        return merged

    @model_validator(mode="after")
    def _one_cloud(self):
        clouds = [n for n in self.nodes if n.role is Role.CLOUD]
        if len(clouds) != 1:
            raise ValueError(f"domain {self.id} needs exactly one cloud node, found {len(clouds)}")
        if clouds[0].behavior is not Behavior.HONEST:
            raise ValueError(f"cloud node {clouds[0].name!r} must be honest")
        return self

    def weight_table(self) -> WeightTable:
        return WeightTable({TxType[k]: w for k, w in self.weights.items()})

    @property
    def cloud(self) -> NodeSpec:
        return next(n for n in self.nodes if n.role is Role.CLOUD)


class RelaySpec(_Strict):
    source: str
    target: str
    start: int = Field(default=10, ge=0)
    interval: int = Field(default=20, ge=1)
    count: int = Field(default=5, ge=1)


class ToggleSpec(_Strict):
    node: str
    at: int = Field(ge=0)


class GlobalSpec(_Strict):
    round_ticks: int = Field(default=5, ge=1)


class ScenarioConfig(_Strict):
    name: str = "scenario"
    horizon: int = Field(gt=0)
    mode: Mode = Mode.PROPOSED
    sampling_interval: int = Field(default=10, ge=1)
    random_step: float = Field(default=5.0, ge=0, description="max step of the random-mode walk")
    domains: list[DomainSpec] = Field(min_length=1)
    global_chain: GlobalSpec = Field(default_factory=GlobalSpec, alias="global")
    relays: list[RelaySpec] = Field(default_factory=list)
    toggles: list[ToggleSpec] = Field(default_factory=list)

    model_config = ConfigDict(extra="forbid", frozen=True, populate_by_name=True)

    @model_validator(mode="after")
    def _cross_checks(self):
        errors = []
        seen_domains: set[int] = set()
        for i, d in enumerate(self.domains):
            if d.id in seen_domains:
                errors.append(f"domains[{i}].id: duplicate domain id {d.id}")
            seen_domains.add(d.id)
        names: dict[str, str] = {}
        ids: dict[int, str] = {}
        for i, d in enumerate(self.domains):
            for j, n in enumerate(d.nodes):
                path = f"domains[{i}].nodes[{j}]"
                if n.name in names:
                    errors.append(f"{path}.name: duplicate node name {n.name!r} (also at {names[n.name]})")
                    continue
                names[n.name] = path
                nid = n.node_id
                if nid in ids:
                    errors.append(f"{path}.name: NodeId collision: {n.name!r} and {ids[nid]!r} both map to id {nid}")
                ids.setdefault(nid, n.name)
        domain_of = {n.name: d for d in self.domains for n in d.nodes}
        for k, r in enumerate(self.relays):
            for fld in ("source", "target"):
                if getattr(r, fld) not in domain_of:
                    errors.append(f"relays[{k}].{fld}: unknown node {getattr(r, fld)!r}")
            if r.source in domain_of and r.target in domain_of and domain_of[r.source].id == domain_of[r.target].id:
                errors.append(f"relays[{k}]: source and target are in the same domain")
        for k, t in enumerate(self.toggles):
            if t.node not in domain_of:
                errors.append(f"toggles[{k}].node: unknown node {t.node!r}")
            elif next(n for n in domain_of[t.node].nodes if n.name == t.node).role is Role.CLOUD:
                errors.append(f"toggles[{k}].node: cloud nodes cannot go offline")
        if errors:
            raise ValueError("\n".join(errors))
        return self

    # -- derived

    @property
    def byzantine_fraction(self) -> float:
        nodes = [n for d in self.domains for n in d.nodes]
        return sum(n.byzantine for n in nodes) / len(nodes)

    def malicious_nodes(self) -> list[NodeSpec]:
        return [n for d in self.domains for n in d.nodes if n.byzantine]

    def with_mode(self, mode: Union[Mode, str]) -> "ScenarioConfig":
        return self.model_copy(update={"mode": Mode(mode)})

    def resolved(self) -> dict:
        """Effective configuration with every default filled in."""
        return self.model_dump(mode="json", by_alias=True)


def _loc(loc: tuple) -> str:
    out = ""
    for part in loc:
        if isinstance(part, int):
            out += f"[{part}]"
        else:
            out += ("." if out else "") + str(part)
    return out


def format_validation_error(err: ValidationError) -> list[str]:
    lines = []
    for e in err.errors():
        msg = e["msg"]
        if msg.startswith("Value error, "):
            msg = msg[len("Value error, "):]
        where = _loc(tuple(p for p in e["loc"] if p not in ("function-after",)))
        for line in msg.split("\n"):
            lines.append(f"{where}: {line}" if where and not line.startswith(("domains", "relays", "toggles")) else line)
    return lines


def parse_scenario(data: dict) -> ScenarioConfig:
    try:
        return ScenarioConfig.model_validate(data)
    except ValidationError as err:
        raise ConfigError(format_validation_error(err)) from None


def load_scenario(path: Union[str, Path]) -> ScenarioConfig:
    p = Path(path)
    try:
        data = tomllib.loads(p.read_text())
    except FileNotFoundError:
        raise ConfigError([f"{p}: file not found"]) from None
    except tomllib.TOMLDecodeError as err:
        raise ConfigError([f"{p}: {err}"]) from None
    return parse_scenario(data)
