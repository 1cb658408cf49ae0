"""Scenario description and its JSON/YAML file format.

File keys (times in ns, capacities in bit/s)::

    nodes:  [{name, kind: host|switch}]
    links:  [{a, b, capacity_bps, delay_ns, buffer_bytes?}]
    flows:  [{src, dst, size_mss?, start_ns?, transport?: tcp|dctcp}]
    aqm:    {mode: fwd|rpm|rpm-port|none, node, egress, target_ns?, interval_ns?,
             register_size?, counter_max?, maxpacket?}
    routes: [{node, dst, via}]          # optional static overrides
    buffer_limit?, host_buffer_limit?, sim_duration_ns, seed?, mss?,
    sample_interval_ns?, start_jitter_ns?

A missing ``buffer_limit`` is derived so that a full switch buffer drains in
under 2 ms at the bottleneck rate (never less than one full-size packet).
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from enum import Enum
from pathlib import Path

from ..aqm import DEFAULT_INTERVAL, DEFAULT_TARGET
from ..endpoints import FlowSpec, Transport
from ..rpm import DEFAULT_COUNTER_MAX, DEFAULT_REGISTER_SIZE
from ..units import MS
from .packet import DEFAULT_MSS, HEADER_BYTES

__all__ = [
    "ConfigError",
    "AqmMode",
    "NodeSpec",
    "LinkSpec",
    "AqmSpec",
    "RouteSpec",
    "ScenarioConfig",
    "config_from_dict",
    "load_config",
    "save_config",
    "default_buffer_limit",
]

MAX_QUEUE_DELAY = 2 * MS
HOST_BUFFER = 16 * 1024 * 1024


class ConfigError(ValueError):
    pass


class AqmMode(str, Enum):
    NONE = "none"
    FWD = "fwd"
    RPM_PER_FLOW = "rpm"
    RPM_PER_PORT = "rpm-port"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        key = str(value).strip().lower().replace("_", "-")
        aliases = {"rpm-per-flow": "rpm", "rpm-flow": "rpm", "rpm-per-port": "rpm-port", "forward": "fwd"}
        key = aliases.get(key, key)
        try:
            return cls(key)
        except ValueError:
            raise ConfigError(f"unknown AQM mode {value!r}") from None


@dataclass
class NodeSpec:
    name: str
    kind: str = "host"


@dataclass
class LinkSpec:
    a: str
    b: str
    capacity_bps: int
    delay_ns: int = 0
    buffer_bytes: int | None = None


@dataclass
class AqmSpec:
    mode: AqmMode = AqmMode.NONE
    node: str | None = None
    egress: str | None = None
    target_ns: int = DEFAULT_TARGET
    interval_ns: int = DEFAULT_INTERVAL
    register_size: int = DEFAULT_REGISTER_SIZE
    counter_max: int = DEFAULT_COUNTER_MAX
    # backlog (bytes, after dequeue) at or below which CoDel treats the queue as good; 0 disables
    maxpacket: int = DEFAULT_MSS + HEADER_BYTES


@dataclass
class RouteSpec:
    node: str
    dst: str
    via: str


@dataclass
class ScenarioConfig:
    nodes: list
    links: list
    flows: list = field(default_factory=list)
    aqm: AqmSpec = field(default_factory=AqmSpec)
    routes: list = field(default_factory=list)
    buffer_limit: int | None = None
    host_buffer_limit: int = HOST_BUFFER
    sim_duration: int = 10_000 * MS
    rng_seed: int = 1
    mss: int = DEFAULT_MSS
    sample_interval: int = 100 * MS
    start_jitter: int = 0

    @property
    def aqm_mode(self):
        return self.aqm.mode

    def node(self, name):
        for n in self.nodes:
            if n.name == name:
                return n
        raise ConfigError(f"unknown node {name!r}")

    def validate(self):
        if not self.nodes:
            raise ConfigError("no nodes")
        names = [n.name for n in self.nodes]
        if len(set(names)) != len(names):
            raise ConfigError("duplicate node names")
        kinds = {n.name: n.kind for n in self.nodes}
        for n in self.nodes:
            if n.kind not in ("host", "switch"):
                raise ConfigError(f"node {n.name}: kind must be host or switch, got {n.kind!r}")
        pairs = set()
        for l in self.links:
            for end in (l.a, l.b):
                if end not in kinds:
                    raise ConfigError(f"link {l.a}-{l.b}: dangling node reference {end!r}")
            if l.a == l.b:
                raise ConfigError(f"link {l.a}-{l.b}: self loop")
            if not l.capacity_bps > 0:
                raise ConfigError(f"link {l.a}-{l.b}: non-positive capacity {l.capacity_bps}")
            if l.delay_ns < 0:
                raise ConfigError(f"link {l.a}-{l.b}: negative delay")
            if l.buffer_bytes is not None and l.buffer_bytes < 1:
                raise ConfigError(f"link {l.a}-{l.b}: buffer must be positive")
            pair = frozenset((l.a, l.b))
            if pair in pairs:
                raise ConfigError(f"duplicate link {l.a}-{l.b}")
            pairs.add(pair)
        for i, f in enumerate(self.flows):
            for end in (f.src, f.dst):
                if kinds.get(end) != "host":
                    raise ConfigError(f"flow {i}: {end!r} is not a host")
            if f.src == f.dst:
                raise ConfigError(f"flow {i}: src == dst")
        aqm = self.aqm
        if aqm.mode != AqmMode.NONE:
            if kinds.get(aqm.node) != "switch":
                raise ConfigError(f"aqm node {aqm.node!r} is not a switch")
            if frozenset((aqm.node, aqm.egress)) not in pairs:
                raise ConfigError(f"aqm egress {aqm.egress!r} is not a neighbour of {aqm.node!r}")
            if aqm.target_ns <= 0 or aqm.interval_ns <= 0:
                raise ConfigError("codel target and interval must be positive")
            rs = aqm.register_size
            if rs < 1 or rs & (rs - 1):
                raise ConfigError(f"register_size must be a power of two, got {rs}")
            if aqm.counter_max < 1:
                raise ConfigError("counter_max must be positive")
            if aqm.maxpacket < 0:
                raise ConfigError("maxpacket must be non-negative")
        for r in self.routes:
            for end in (r.node, r.dst, r.via):
                if end not in kinds:
                    raise ConfigError(f"route {r}: dangling node reference {end!r}")
            if frozenset((r.node, r.via)) not in pairs:
                raise ConfigError(f"route {r}: {r.via!r} is not adjacent to {r.node!r}")
        if self.sim_duration <= 0 or self.sample_interval <= 0:
            raise ConfigError("durations must be positive")
        if self.buffer_limit is not None and self.buffer_limit < 1:
            raise ConfigError("buffer_limit must be positive")
        if self.mss < 1:
            raise ConfigError("mss must be positive")
        return self

    def bottleneck_capacity(self):
        if self.aqm.mode != AqmMode.NONE:
            for l in self.links:
                if {l.a, l.b} == {self.aqm.node, self.aqm.egress}:
                    return l.capacity_bps
        kinds = {n.name: n.kind for n in self.nodes}
        caps = [l.capacity_bps for l in self.links if kinds[l.a] == "switch" and kinds[l.b] == "switch"]
        caps = caps or [l.capacity_bps for l in self.links]
        return min(caps) if caps else None

    def effective_buffer_limit(self):
        if self.buffer_limit is not None:
            return self.buffer_limit
        return default_buffer_limit(self.bottleneck_capacity(), self.mss)

    def to_dict(self):
        d = asdict(self)
        d["aqm"]["mode"] = self.aqm.mode.value
        for f in d["flows"]:
            f["transport"] = Transport(f["transport"]).value
        out = {
            "nodes": d["nodes"],
            "links": d["links"],
            "flows": [
                {"src": f["src"], "dst": f["dst"], "size_mss": f["size"], "start_ns": f["start"], "transport": f["transport"]}
                for f in d["flows"]
            ],
            "aqm": d["aqm"],
            "routes": d["routes"],
            "buffer_limit": self.buffer_limit,
            "host_buffer_limit": self.host_buffer_limit,
            "sim_duration_ns": self.sim_duration,
            "seed": self.rng_seed,
            "mss": self.mss,
            "sample_interval_ns": self.sample_interval,
            "start_jitter_ns": self.start_jitter,
        }
        return out


def default_buffer_limit(capacity_bps, mss=DEFAULT_MSS):
    """Largest byte budget that drains in strictly less than 2 ms, floored at one packet."""
    if capacity_bps is None:
        return HOST_BUFFER
    # largest byte count whose (rounded-up) serialization time stays below the bound
    budget = ((MAX_QUEUE_DELAY - 1) * capacity_bps) // (8 * 1_000_000_000)
    return max(int(budget), mss + HEADER_BYTES)


def _int(v, what):
    try:
        f = float(v)
    except (TypeError, ValueError):
        raise ConfigError(f"{what}: expected a number, got {v!r}") from None
    if f != int(f):
        raise ConfigError(f"{what}: expected an integer, got {v!r}")
    return int(f)


def config_from_dict(d):
    if not isinstance(d, dict):
        raise ConfigError("config must be a mapping")
    try:
        nodes = [NodeSpec(n["name"], n.get("kind", "host")) for n in d.get("nodes", [])]
        links = [
            LinkSpec(
                l["a"], l["b"],
                _int(l["capacity_bps"], "capacity_bps"),
                _int(l.get("delay_ns", 0), "delay_ns"),
                None if l.get("buffer_bytes") is None else _int(l["buffer_bytes"], "buffer_bytes"),
            )
            for l in d.get("links", [])
        ]
        flows = [
            FlowSpec(
                f["src"], f["dst"],
                None if f.get("size_mss") is None else _int(f["size_mss"], "size_mss"),
                _int(f.get("start_ns", 0), "start_ns"),
                Transport(str(f.get("transport", "tcp")).lower()),
            )
            for f in d.get("flows", [])
        ]
        a = d.get("aqm") or {}
        aqm = AqmSpec(
            mode=AqmMode.parse(a.get("mode", "none")),
            node=a.get("node"),
            egress=a.get("egress"),
            target_ns=_int(a.get("target_ns", DEFAULT_TARGET), "target_ns"),
            interval_ns=_int(a.get("interval_ns", DEFAULT_INTERVAL), "interval_ns"),
            register_size=_int(a.get("register_size", DEFAULT_REGISTER_SIZE), "register_size"),
            counter_max=_int(a.get("counter_max", DEFAULT_COUNTER_MAX), "counter_max"),
            maxpacket=_int(a.get("maxpacket", DEFAULT_MSS + HEADER_BYTES), "maxpacket"),
        )
        routes = [RouteSpec(r["node"], r["dst"], r["via"]) for r in d.get("routes", [])]
        cfg = ScenarioConfig(
            nodes=nodes,
            links=links,
            flows=flows,
            aqm=aqm,
            routes=routes,
            buffer_limit=None if d.get("buffer_limit") is None else _int(d["buffer_limit"], "buffer_limit"),
            host_buffer_limit=_int(d.get("host_buffer_limit", HOST_BUFFER), "host_buffer_limit"),
            sim_duration=_int(d.get("sim_duration_ns", 10_000 * MS), "sim_duration_ns"),
            rng_seed=_int(d.get("seed", 1), "seed"),
            mss=_int(d.get("mss", DEFAULT_MSS), "mss"),
            sample_interval=_int(d.get("sample_interval_ns", 100 * MS), "sample_interval_ns"),
            start_jitter=_int(d.get("start_jitter_ns", 0), "start_jitter_ns"),
        )
    except KeyError as exc:
        raise ConfigError(f"missing key {exc}") from None
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from None
    return cfg.validate()


def load_config(path):
    path = Path(path)
    text = path.read_text()
    if path.suffix in (".yaml", ".yml"):
        import yaml

        try:
            data = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: {exc}") from None
    else:
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
    return config_from_dict(data)


def save_config(cfg, path):
    Path(path).write_text(json.dumps(cfg.to_dict(), indent=2) + "\n")
