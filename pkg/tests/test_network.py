import json

import pytest
import yaml

from rpmsim.endpoints import FlowSpec, Transport
from rpmsim.rpm import FlowKey, check_path_symmetry
from rpmsim.sim.config import (
    AqmMode,
    AqmSpec,
    ConfigError,
    LinkSpec,
    NodeSpec,
    RouteSpec,
    ScenarioConfig,
    config_from_dict,
    default_buffer_limit,
    load_config,
    save_config,
)
from rpmsim.sim.network import build_topology, simulate
from rpmsim.sim.scenarios import dumbbell, fairness_scenario, single_path
from rpmsim.units import MS, serialization_ns


def test_default_topology_counts():
    cfg = dumbbell()
    net = build_topology(cfg)
    assert len(net.nodes) == 23
    assert len(cfg.links) == 22
    assert sum(1 for n in cfg.nodes if n.kind == "host") == 20
    caps = {frozenset((l.a, l.b)): l.capacity_bps for l in cfg.links}
    assert caps[frozenset(("S1", "R1"))] == 10 * caps[frozenset(("R1", "S2"))]


def test_small_dumbbell_counts():
    cfg = single_path()
    assert len(build_topology(cfg).nodes) == 3 and len(cfg.links) == 2


def test_empty_config_rejected():
    with pytest.raises(ConfigError, match="no nodes"):
        ScenarioConfig(nodes=[], links=[]).validate()


@pytest.mark.parametrize(
    "mutate, message",
    [
        (lambda c: c.links.append(LinkSpec("H1", "nowhere", 10)), "dangling"),
        (lambda c: setattr(c.links[0], "capacity_bps", 0), "non-positive capacity"),
        (lambda c: setattr(c.aqm, "register_size", 1000), "power of two"),
        (lambda c: c.flows.append(FlowSpec("H1", "S1")), "not a host"),
        (lambda c: c.routes.append(RouteSpec("H1", "H2", "H2")), "not adjacent"),
    ],
)
def test_invalid_configs(mutate, message):
    cfg = single_path(mode="rpm")
    mutate(cfg)
    with pytest.raises(ConfigError, match=message):
        cfg.validate()


def test_default_buffer_is_under_two_ms():
    cap = 10_000_000_000
    limit = default_buffer_limit(cap)
    assert serialization_ns(limit, cap) < 2 * MS <= serialization_ns(limit + 2, cap)
    assert default_buffer_limit(1_000_000) == 1500  # floored at one full packet


def test_config_file_roundtrip(tmp_path):
    cfg = fairness_scenario(2, "rpm", duration=500 * MS)
    path = tmp_path / "cfg.json"
    save_config(cfg, path)
    again = load_config(path)
    assert again.to_dict() == cfg.to_dict()
    ypath = tmp_path / "cfg.yaml"
    ypath.write_text(yaml.safe_dump(json.loads(path.read_text())))
    assert load_config(ypath).to_dict() == cfg.to_dict()


def test_config_errors_are_config_errors(tmp_path):
    with pytest.raises(ConfigError, match="missing key"):
        config_from_dict({"nodes": [{"kind": "host"}]})
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError):
        load_config(bad)
    with pytest.raises(ConfigError, match="unknown AQM mode"):
        config_from_dict({"nodes": [{"name": "a"}], "links": [], "aqm": {"mode": "red"}})


def test_no_flows_gives_empty_trace():
    tr = simulate(single_path(sim_duration=100 * MS))
    assert tr.flows == () and tr.events == () and tr.dispatched == 0


def test_single_flow_completion_matches_closed_form():
    delay, cap = 1 * MS, 10_000_000
    cfg = single_path(capacity_bps=cap, delay_ns=delay, sim_duration=1000 * MS)
    cfg.flows = [FlowSpec("H1", "H2", 10)]
    rec = simulate(cfg).flows[0]
    ctl, data = serialization_ns(40, cap), serialization_ns(1500, cap)
    handshake = 4 * (ctl + delay)
    # ten back-to-back segments through two equal-rate hops, then one ACK back
    last_data = handshake + 11 * data + 2 * delay
    expected = last_data + 2 * (ctl + delay)
    assert rec.completed_ns == expected
    assert rec.dropped_pkts == 0 and rec.signals == 0


def test_same_seed_same_trace():
    cfg = fairness_scenario(2, "rpm", duration=2000 * MS, seed=3, start_jitter=50 * MS)
    assert simulate(cfg) == simulate(fairness_scenario(2, "rpm", duration=2000 * MS, seed=3, start_jitter=50 * MS))


@pytest.mark.parametrize("mode", ["fwd", "rpm", "rpm-port"])
def test_packet_conservation(mode):
    # default (tiny) buffer so that tail drops happen too
    cfg = fairness_scenario(2, mode, duration=3000 * MS, start_jitter=20 * MS)
    tr = simulate(cfg)
    assert sum(f.dropped_pkts for f in tr.flows) > 0
    for f in tr.flows:
        assert f.sent_pkts == f.delivered_pkts + f.dropped_pkts + f.in_flight_pkts


def test_queue_samples_respect_buffer():
    cfg = fairness_scenario(3, "fwd", duration=3000 * MS, buffer_limit=20_000)
    cfg.sample_interval = 5 * MS
    tr = simulate(cfg)
    assert tr.queue_samples
    assert all(0 <= occ <= 20_000 for _, _, occ in tr.queue_samples)


def test_marking_modes_touch_the_right_bits():
    base = dict(duration=5000 * MS, buffer_limit=30_000)
    fwd = simulate(fairness_scenario(2, "fwd", **base))
    rpm = simulate(fairness_scenario(2, "rpm", **base))
    assert fwd.events_of("ce_mark") and not fwd.events_of("ece_mark")
    assert rpm.events_of("ece_mark") and not rpm.events_of("ce_mark")
    for f in rpm.flows:
        assert f.ece_marks <= f.signals


def test_dumbbell_routes_are_symmetric():
    net = build_topology(dumbbell(mode="rpm"))
    for i in range(1, 11):
        src, dst = net.ip_of[f"H{i}"], net.ip_of[f"H{i + 10}"]
        assert check_path_symmetry(net, FlowKey(src, dst, 6, 10000, 5001), "R1")


def test_single_switch_path_is_symmetric():
    net = build_topology(single_path(mode="rpm"))
    assert check_path_symmetry(net, FlowKey(net.ip_of["H1"], net.ip_of["H2"], 6, 1, 2), "S1")


def _two_path(mode):
    # H1 - S1 = (R1 | R2) = S2 - H2, return traffic pinned to R2
    nodes = [NodeSpec("H1"), NodeSpec("H2")] + [NodeSpec(n, "switch") for n in ("S1", "R1", "R2", "S2")]
    cap = 10_000_000
    links = [
        LinkSpec("H1", "S1", cap, MS),
        LinkSpec("S1", "R1", cap, MS),
        LinkSpec("R1", "S2", cap // 2, MS),
        LinkSpec("S1", "R2", cap, MS),
        LinkSpec("R2", "S2", cap, MS),
        LinkSpec("S2", "H2", cap, MS),
    ]
    routes = [RouteSpec("S1", "H2", "R1"), RouteSpec("S2", "H1", "R2")]
    return ScenarioConfig(
        nodes=nodes, links=links, routes=routes, aqm=AqmSpec(AqmMode.parse(mode), "R1", "S2"),
        flows=[FlowSpec("H1", "H2", None)], sim_duration=3000 * MS, buffer_limit=20_000,
    )


def test_asymmetric_return_path_is_detected():
    net = build_topology(_two_path("rpm"))
    assert net.route("H1", "H2") == ["H1", "S1", "R1", "S2", "H2"]
    assert net.route("H2", "H1") == ["H2", "S2", "R2", "S1", "H1"]
    key = FlowKey(net.ip_of["H1"], net.ip_of["H2"], 6, 10000, 5001)
    assert not check_path_symmetry(net, key, "R1")


def test_asymmetric_flow_falls_back_to_forward_marking():
    tr = simulate(_two_path("rpm"))
    assert tr.signals()
    assert len(tr.events_of("ce_mark")) == len(tr.signals())
    assert not tr.events_of("ece_mark")


def test_dctcp_flows_run_end_to_end():
    cfg = fairness_scenario(1, "rpm", duration=3000 * MS, transport=Transport.DCTCP, buffer_limit=30_000)
    tr = simulate(cfg)
    assert all(f.delivered_bytes > 0 for f in tr.flows)
