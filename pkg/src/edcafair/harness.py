"""Experiment runner: scenario schema, presets, metrics, CSV output.

A scenario is a JSON document with an AC table and a flow table (schema in
README). ``run_scenario`` executes it once per seed in one of three AP
modes: "off" (static default EDCA), "analytic" (one-shot parameter solve
from the flow table), or "adaptive" (beacon-driven controller).
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field, replace
from types import SimpleNamespace

from .adapt import AcController, AdaptationConfig, AdaptationManager
from .analytics import (InfeasibleError, PhyTiming, TrafficClassParams,
                        compute_ap_parameters)
from .sim import Simulator
from .traffic import TcpConn, UdpFlow

MODES = ("off", "analytic", "adaptive")


@dataclass
class AcSpec:
    name: str
    aifsn: int
    cw_min: int
    cw_max: int
    transport: str              # "udp" | "tcp" | "realtime"
    txop: int = 1
    retry_limit: int = 7
    adaptive: bool = True       # realtime ACs keep static parameters

    @property
    def m(self) -> int:
        ratio = (self.cw_max + 1) / (self.cw_min + 1)
        m = round(math.log2(ratio))
        if 2 ** m * (self.cw_min + 1) - 1 != self.cw_max:
            raise ValueError(f"cw_max {self.cw_max} not a doubling of "
                             f"cw_min {self.cw_min}")
        return m

    def station_tc(self) -> TrafficClassParams:
        return TrafficClassParams(aifsn=self.aifsn, cw_min=self.cw_min,
                                  m=self.m, retry_limit=self.retry_limit,
                                  n_txop=self.txop)


@dataclass
class FlowSpec:
    id: str
    direction: str              # "up" | "down"
    transport: str              # "udp" | "tcp"
    ac: str
    start_s: float = 0.0
    wired_delay_ms: float = 15.0
    payload_bytes: int = 1500
    rate_pps: float | None = None       # UDP only; None = saturated
    packets: int | None = None          # TCP only; None = bulk transfer
    on_off_s: tuple | None = None       # UDP only; (on, off) cycle


@dataclass
class ScenarioSpec:
    name: str
    horizon_s: float
    acs: list                   # AcSpec, highest priority first
    flows: list                 # FlowSpec
    buffer_packets: int = 200

    def __post_init__(self):
        names = {a.name for a in self.acs}
        for f in self.flows:
            if f.ac not in names:
                raise ValueError(f"flow {f.id} references unknown AC {f.ac}")
            if f.start_s >= self.horizon_s:
                raise ValueError(f"flow {f.id} starts after the horizon")

    def to_dict(self):
        return {
            "name": self.name,
            "horizon_s": self.horizon_s,
            "buffer_packets": self.buffer_packets,
            "acs": [asdict(a) for a in self.acs],
            "flows": [asdict(f) for f in self.flows],
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            name=d["name"],
            horizon_s=d["horizon_s"],
            buffer_packets=d.get("buffer_packets", 200),
            acs=[AcSpec(**a) for a in d["acs"]],
            flows=[FlowSpec(**{**f, "on_off_s": tuple(f["on_off_s"])
                               if f.get("on_off_s") else None})
                   for f in d["flows"]],
        )

    @classmethod
    def load(cls, path):
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def dump(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2)
            fh.write("\n")


@dataclass
class MetricsReport:
    scenario: str
    mode: str
    seeds: list
    horizon_s: float
    per_flow: list = field(default_factory=list)
    totals: dict = field(default_factory=dict)      # (transport, dir) -> bps
    jain: dict = field(default_factory=dict)        # (transport, dir) -> f
    intervals: list = field(default_factory=list)   # first seed's time series
    annotations: list = field(default_factory=list)


def jain_fairness_index(x) -> float:
    xs = list(x)
    if not xs or any(v < 0 for v in xs):
        raise ValueError("need a nonempty vector of nonnegative throughputs")
    total = sum(xs)
    if total == 0:
        raise ValueError("all-zero throughput vector")
    return total * total / (len(xs) * sum(v * v for v in xs))


def _flow_counts(spec: ScenarioSpec, ac: str):
    """Active flow counts per direction as the registry would see them.

    A TCP connection contributes one uplink and one downlink flow (data
    plus reverse ACK stream); UDP counts its data direction only.
    """
    n_u = n_d = 0
    for f in spec.flows:
        if f.ac != ac:
            continue
        if f.transport == "tcp":
            n_u += 1
            n_d += 1
        elif f.direction == "up":
            n_u += 1
        else:
            n_d += 1
    return n_u, n_d


def build_simulation(spec: ScenarioSpec, mode: str, seed: int,
                     phy: PhyTiming | None = None,
                     adaptation: AdaptationConfig | None = None) -> Simulator:
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}")
    phy = phy or PhyTiming()
    cfg = adaptation or AdaptationConfig()
    sim = Simulator(phy, spec.horizon_s, seed)
    annotations = []

    ap_by_ac = {}
    for prio, ac in enumerate(spec.acs):
        fractional = mode == "adaptive" or mode == "analytic"
        ap_by_ac[ac.name] = sim.add_ap_tc(
            ac.name, ac.aifsn, ac.cw_min, ac.m, ac.retry_limit,
            n_txop=ac.txop, fractional=fractional,
            capacity=spec.buffer_packets, priority=prio)

    for f in spec.flows:
        ac = next(a for a in spec.acs if a.name == f.ac)
        st = sim.add_station(f"{f.id}:sta", ac.name, ac.aifsn, ac.cw_min,
                             ac.m, ac.retry_limit,
                             capacity=spec.buffer_packets)
        delay_us = f.wired_delay_ms * 1e3
        if f.transport == "udp":
            flow = UdpFlow(f.id, f.direction, f.ac,
                           payload_bytes=f.payload_bytes,
                           rate_pps=f.rate_pps,
                           saturated=f.rate_pps is None,
                           wired_delay_us=delay_us,
                           start_us=f.start_s * 1e6,
                           on_off_us=tuple(v * 1e6 for v in f.on_off_s)
                           if f.on_off_s else None)
        else:
            flow = TcpConn(f.id, f.direction, f.ac,
                           payload_bytes=f.payload_bytes,
                           wired_delay_us=delay_us,
                           start_us=f.start_s * 1e6,
                           total_packets=f.packets)
        flow.station = st
        sim.register_flow(flow)

    if mode == "analytic":
        planned = [(ac,) + _flow_counts(spec, ac.name) for ac in spec.acs
                   if ac.adaptive]
        planned = [(ac, n_u, n_d) for ac, n_u, n_d in planned
                   if n_u > 0 and n_d > 0]
        ctx = [min(a.cw_min, ap_by_ac[a.name].cw_min)
               for a in spec.acs if not a.adaptive]
        # two passes so each plan sees the other ACs' planned CW/TXOP
        for _ in range(2):
            for ac, n_u, n_d in planned:
                bg = []
                for other, ou, od in planned:
                    if other is ac:
                        continue
                    if ou > 0:
                        bg.append(replace(other.station_tc(), population=ou))
                    if od > 0:
                        e = ap_by_ac[other.name]
                        bg.append(TrafficClassParams(
                            aifsn=e.aifsn, cw_min=max(1.0, e.cw_min),
                            m=e.m, retry_limit=e.retry_limit,
                            n_txop=e.n_txop, population=1))
                try:
                    plan = compute_ap_parameters(
                        ac.station_tc(), n_u, n_d / n_u,
                        ac_priority_context=ctx, background_tcs=bg)
                except InfeasibleError as exc:
                    annotations.append(f"{ac.name}: {exc}")
                    continue
                ent = ap_by_ac[ac.name]
                ent.set_cw(plan.cw_min)
                ent.n_txop = plan.n_txop
    elif mode == "adaptive":
        controllers = []
        higher = []
        for ac in spec.acs:
            if ac.adaptive:
                ctl = AcController(ac.name, ap_by_ac[ac.name],
                                   ac.station_tc(), ac.transport, cfg,
                                   fractional=True,
                                   higher_priority=list(higher))
                controllers.append(ctl)
                higher.append(ctl)
            else:
                higher.append(SimpleNamespace(station_tc=ac.station_tc(),
                                              entity=ap_by_ac[ac.name]))
        sim.controller = AdaptationManager(cfg, controllers)

    sim.build_annotations = annotations
    return sim


def run_scenario(spec: ScenarioSpec, mode: str, seeds=(1, 2, 3),
                 phy: PhyTiming | None = None,
                 adaptation: AdaptationConfig | None = None) -> MetricsReport:
    report = MetricsReport(spec.name, mode, list(seeds), spec.horizon_s)
    runs = []
    for seed in seeds:
        sim = build_simulation(spec, mode, seed, phy=phy,
                               adaptation=adaptation)
        report.annotations.extend(sim.build_annotations)
        runs.append(sim.run())
    if not runs:
        raise ValueError("need at least one seed")

    horizon = spec.horizon_s
    for f in spec.flows:
        bps = [r.flows[f.id].bytes_delivered * 8 / horizon for r in runs]
        mean_bps = sum(bps) / len(bps)
        spread = (max(bps) - min(bps)) if len(bps) > 1 else 0.0
        delays = []
        comps = []
        completed = 0
        for r in runs:
            s = r.flows[f.id]
            if s.delivered > 0:
                delays.append(s.delay_sum_us / s.delivered / 1e6)
            if s.completion_us is not None:
                comps.append((f.start_s * 1e6 + s.completion_us) / 1e6
                             - f.start_s)
                completed += 1
        report.per_flow.append({
            "flow_id": f.id,
            "direction": f.direction,
            "transport": f.transport,
            "ac": f.ac,
            "throughput_bps": mean_bps,
            "throughput_spread_bps": spread,
            "mean_delay_s": sum(delays) / len(delays) if delays else None,
            "completion_s": sum(comps) / len(comps) if comps else None,
            "completed_runs": completed,
            "runs": len(runs),
        })

    groups = {}
    for row in report.per_flow:
        groups.setdefault((row["transport"], row["direction"]),
                          []).append(row["throughput_bps"])
    for key, xs in sorted(groups.items()):
        report.totals[key] = sum(xs)
        if sum(xs) > 0:
            report.jain[key] = jain_fairness_index(xs)
    report.intervals = list(runs[0].intervals)
    for ann in {a["annotation"] for r in runs for a in r.intervals
                if a["annotation"] == "infeasible"}:
        report.annotations.append(f"controller: {ann}")
    return report


PER_FLOW_COLUMNS = ["record", "flow_id", "direction", "transport", "ac",
                    "throughput_bps", "mean_delay_s", "completion_s",
                    "t_s", "measured_U", "cw_min_ap", "n_txop_effective"]


def emit_csv(report: MetricsReport, path):
    """Per-flow rows followed by per-interval rows, fixed column order."""
    def fmt(v):
        if v is None:
            return ""
        if isinstance(v, float):
            return repr(v)
        return str(v)

    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(PER_FLOW_COLUMNS)
        for row in report.per_flow:
            w.writerow([fmt(v) for v in (
                "flow", row["flow_id"], row["direction"], row["transport"],
                row["ac"], row["throughput_bps"], row["mean_delay_s"],
                row["completion_s"], None, None, None, None)])
        for iv in report.intervals:
            eff = iv["n_txop"] * (2 if iv["txop_doubled"] else 1)
            w.writerow([fmt(v) for v in (
                "interval", None, None, None, iv["ac"], None, None, None,
                iv["t_s"], iv["measured_u"], iv["cw_min_ap"], eff)])


# -- presets ---------------------------------------------------------------

UDP_AC = AcSpec("udp", aifsn=2, cw_min=31, cw_max=511, transport="udp")
TCP_AC = AcSpec("tcp", aifsn=2, cw_min=63, cw_max=1023, transport="tcp")
VOICE_AC = AcSpec("voice", aifsn=2, cw_min=7, cw_max=15,
                  transport="realtime", adaptive=False)
VIDEO_AC = AcSpec("video", aifsn=2, cw_min=15, cw_max=31,
                  transport="realtime", adaptive=False)

UDP_RATE_PPS = 600.0        # 7.2 Mbps per flow: overloads the UDP AC
BASE_WIRED_DELAY_MS = 15.0  # one-way; 30 ms round trip on the wired side


def _scaled_count(scale: float, base: int = 10) -> int:
    return max(1, round(base * scale))


def _stagger_ms(index: int) -> float:
    # 24 ms round trip for the first connection, +4 ms per newer one
    return (24.0 + 4.0 * index) / 2.0


def experiment_preset(preset_id: int, scale: float = 1.0) -> ScenarioSpec:
    """Scenario generator for the seven benchmark experiments.

    ``scale`` multiplies flow counts (base 10 per type and direction) and
    the horizon.
    """
    if preset_id not in range(1, 8):
        raise ValueError("preset id must be 1..7")
    if scale <= 0:
        raise ValueError("scale must be positive")
    n = _scaled_count(scale)
    if preset_id in (1, 2):
        return _preset_simultaneous(preset_id, n, horizon=100 * scale,
                                    stagger=preset_id == 2)
    if preset_id in (3, 4):
        return _preset_staggered_starts(preset_id, n, horizon=300 * scale,
                                        arrival_cutoff=200 * scale,
                                        stagger=preset_id == 4)
    if preset_id in (5, 6):
        return _preset_short_flows(preset_id, n, horizon=450 * scale,
                                   arrival_cutoff=300 * scale,
                                   stagger=preset_id == 6)
    return _preset_qos(n, _scaled_count(scale, 10), horizon=100 * scale)


def _udp_flow(i, direction, start_s=0.0):
    return FlowSpec(f"udp-{direction}-{i}", direction, "udp", "udp",
                    start_s=start_s, rate_pps=UDP_RATE_PPS,
                    wired_delay_ms=BASE_WIRED_DELAY_MS)


def _tcp_flow(i, direction, start_s=0.0, stagger=False, packets=None):
    delay = _stagger_ms(i) if stagger else BASE_WIRED_DELAY_MS
    tag = "short-" if packets is not None else ""
    return FlowSpec(f"tcp-{tag}{direction}-{i}", direction, "tcp", "tcp",
                    start_s=start_s, wired_delay_ms=delay, packets=packets)


def _preset_simultaneous(pid, n, horizon, stagger):
    flows = []
    for i in range(n):
        flows.append(_udp_flow(i, "up"))
        flows.append(_udp_flow(i, "down"))
        flows.append(_tcp_flow(i, "up", stagger=stagger))
        flows.append(_tcp_flow(i, "down", stagger=stagger))
    return ScenarioSpec(f"experiment-{pid}", max(horizon, 20.0),
                        [UDP_AC, TCP_AC], flows)


def _arrival_times(first_s, n, cutoff_s):
    # one new flow of each type every 10 s until the cutoff
    return [first_s + 10.0 * i for i in range(n)
            if first_s + 10.0 * i <= cutoff_s]


def _preset_staggered_starts(pid, n, horizon, arrival_cutoff, stagger,
                             short_every_other=False):
    horizon = max(horizon, 60.0)
    flows = []
    for i, t in enumerate(_arrival_times(5.0, n, arrival_cutoff)):
        flows.append(_udp_flow(i, "down", start_s=t))
    for i, t in enumerate(_arrival_times(10.0, n, arrival_cutoff)):
        flows.append(_udp_flow(i, "up", start_s=t))
    for i, t in enumerate(_arrival_times(7.0, n, arrival_cutoff)):
        pk = 31 if short_every_other and i % 2 == 1 else None
        flows.append(_tcp_flow(i, "up", start_s=t, stagger=stagger,
                               packets=pk))
    for i, t in enumerate(_arrival_times(12.0, n, arrival_cutoff)):
        pk = 31 if short_every_other and i % 2 == 1 else None
        flows.append(_tcp_flow(i, "down", start_s=t, stagger=stagger,
                               packets=pk))
    return ScenarioSpec(f"experiment-{pid}", horizon,
                        [UDP_AC, TCP_AC], flows)


def _preset_short_flows(pid, n, horizon, arrival_cutoff, stagger):
    return _preset_staggered_starts(pid, n, horizon, arrival_cutoff,
                                    stagger, short_every_other=True)


def _preset_qos(n_data, n_rt, horizon):
    flows = []
    for i in range(n_rt):
        for direction in ("up", "down"):
            flows.append(FlowSpec(f"voice-{direction}-{i}", direction,
                                  "udp", "voice", payload_bytes=60,
                                  rate_pps=50.0,
                                  wired_delay_ms=BASE_WIRED_DELAY_MS))
            # on-off VBR matched to a 255 kbps mean, payload under 3112 B
            flows.append(FlowSpec(f"video-{direction}-{i}", direction,
                                  "udp", "video", payload_bytes=2419,
                                  rate_pps=26.4, on_off_s=(0.5, 0.5),
                                  wired_delay_ms=BASE_WIRED_DELAY_MS))
    for i in range(n_data):
        flows.append(_udp_flow(i, "up"))
        flows.append(_udp_flow(i, "down"))
        flows.append(_tcp_flow(i, "up"))
        flows.append(_tcp_flow(i, "down"))
    return ScenarioSpec("experiment-7", max(horizon, 20.0),
                        [VOICE_AC, VIDEO_AC, UDP_AC, TCP_AC], flows)
