"""AP-side dynamic parameter controller.

Every adaptation interval (beta beacon intervals) the AP counts active
uplink and downlink flows from MAC addresses, derives the target
downlink/uplink utilization ratio, and either re-solves the analytical
model (population changed) or nudges its own CW by one (UDP fine tuning).
TCP access categories never get CW fine tuning; they react to queue
pressure by doubling the TXOP packet budget instead.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from .analytics import InfeasibleError, TrafficClassParams, compute_ap_parameters

CW_ENCODE_MAX = 2 ** 15 - 1


@dataclass
class AdaptationConfig:
    beacon_interval_s: float = 0.1
    beta: int = 5
    alpha: float = 0.5
    queue_threshold: int = 50

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError("alpha must be in [0, 1]")
        if self.beta < 1 or self.queue_threshold < 0:
            raise ValueError("beta >= 1 and threshold >= 0 required")
        if self.beacon_interval_s <= 0:
            raise ValueError("beacon interval must be positive")

    @property
    def interval_s(self) -> float:
        return self.beta * self.beacon_interval_s


class FlowRegistry:
    """Active-flow estimate from unique MAC addresses per direction.

    An address silent for one full adaptation interval is evicted at that
    interval's close.
    """

    def __init__(self):
        self._up = set()
        self._down = set()
        self._prev_up = frozenset()
        self._prev_down = frozenset()

    def observe_up(self, addr):
        self._up.add(addr)

    def observe_down(self, addr):
        self._down.add(addr)

    def peek(self):
        """Counts of the interval in progress, without closing it."""
        return len(self._up), len(self._down)

    def close_interval(self):
        n_u, n_d = len(self._up), len(self._down)
        changed = (self._up != self._prev_up or self._down != self._prev_down)
        self._prev_up = frozenset(self._up)
        self._prev_down = frozenset(self._down)
        self._up = set()
        self._down = set()
        return n_u, n_d, changed


def update_flow_registry(registry: FlowRegistry, uplink_sources,
                         downlink_destinations):
    """Feed one interval's observed addresses and close it."""
    for a in uplink_sources:
        registry.observe_up(a)
    for a in downlink_destinations:
        registry.observe_down(a)
    return registry.close_interval()


def required_utilization(n_u: int, n_d: int) -> float:
    if n_u < 1:
        raise ValueError("need at least one uplink flow")
    return n_d / n_u


def fine_tune_delta(measured_ratio: float, u_r: float, alpha: float) -> int:
    """UDP CW step: -1 below the dead band, +1 above it, 0 inside."""
    if measured_ratio < (1.0 - alpha) * u_r:
        return -1
    if measured_ratio > (1.0 + alpha) * u_r:
        return 1
    return 0


def txop_pressure_control(queue_len: int, threshold: int,
                          analytic_txop: int) -> int:
    return 2 * analytic_txop if queue_len > threshold else analytic_txop


def encode_station_cw(cw) -> tuple[int, int]:
    """Smallest 4-bit exponent e with 2^e - 1 >= cw; returns (e, decoded)."""
    if cw < 0 or cw > CW_ENCODE_MAX:
        raise ValueError(f"cw must be in [0, {CW_ENCODE_MAX}]")
    e = 0
    while 2 ** e - 1 < cw:
        e += 1
    return e, 2 ** e - 1


def qos_guard(candidate_cw: float, realtime_cw_mins) -> bool:
    """Accept only if the data AC's CW does not undercut any realtime AC."""
    return all(candidate_cw >= c for c in realtime_cw_mins)


class AcController:
    """Adaptation state machine for one access category at the AP.

    ``entity`` is the AP's MAC queue for the AC; ``station_tc`` describes
    one uplink station of the AC (population is overridden per interval).
    """

    def __init__(self, ac, entity, station_tc: TrafficClassParams,
                 transport: str, config: AdaptationConfig,
                 fractional: bool = True, higher_priority=()):
        self.ac = ac
        self.entity = entity
        self.station_tc = station_tc
        self.transport = transport
        self.config = config
        self.fractional = fractional
        self.higher_priority = list(higher_priority)  # AcController refs
        self.registry = FlowRegistry()
        self.n_t_u = 0
        self.n_t_d = 0
        self.last_counts = None     # (n_u, n_d) behind the last recompute
        self.txop_floor = 1
        self.background = []        # peer-AC TCs, refreshed by the manager
        if transport == "tcp":
            entity.txop_pressure_th = config.queue_threshold

    def context_cws(self):
        return [min(c.station_tc.cw_min, c.entity.cw_min)
                for c in self.higher_priority]

    def count_success(self, direction, n):
        if direction == "up":
            self.n_t_u += n
        else:
            self.n_t_d += n

    def _recompute(self, n_u, n_d):
        u_r = required_utilization(n_u, n_d)
        plan = compute_ap_parameters(
            self.station_tc, n_u, u_r,
            ac_priority_context=self.context_cws(),
            min_n_txop=self.txop_floor,
            background_tcs=self.background)
        self.entity.set_cw(plan.cw_min if self.fractional
                           else plan.rounded_cw_min)
        self.entity.n_txop = plan.n_txop
        self.txop_floor = plan.n_txop
        self.last_counts = (n_u, n_d)
        return plan

    def tick(self, sim, t):
        n_u, n_d, changed = self.registry.close_interval()
        n_t_u, n_t_d = self.n_t_u, self.n_t_d
        self.n_t_u = 0
        self.n_t_d = 0
        annotation = ""
        recomputed = False
        if n_u > 0 and n_d > 0:
            ratio_changed = (
                self.last_counts is None
                or n_d * self.last_counts[0] != n_u * self.last_counts[1])
            if ratio_changed:
                try:
                    self._recompute(n_u, n_d)
                    recomputed = True
                except InfeasibleError:
                    annotation = "infeasible"
            elif self.transport == "udp" and n_t_u > 0:
                annotation = self._fine_tune(n_u, n_d, n_t_u, n_t_d)
        measured = (n_t_d / n_t_u) if n_t_u > 0 else None
        sim.trace.intervals.append({
            "t_s": t / 1e6,
            "ac": self.ac,
            "n_u": n_u,
            "n_d": n_d,
            "changed": changed,
            "u_r": (n_d / n_u) if n_u > 0 else None,
            "measured_u": measured,
            "cw_min_ap": self.entity.cw_min,
            "n_txop": self.entity.n_txop,
            "txop_doubled": self.entity.txop_doubled,
            "recomputed": recomputed,
            "annotation": annotation,
        })
        return recomputed

    def refresh_recompute(self):
        """Re-run the last recompute with updated peer-AC background."""
        if self.last_counts is None:
            return
        try:
            self._recompute(*self.last_counts)
        except InfeasibleError:
            pass

    def _fine_tune(self, n_u, n_d, n_t_u, n_t_d):
        u_r = required_utilization(n_u, n_d)
        delta = fine_tune_delta(n_t_d / n_t_u, u_r, self.config.alpha)
        if delta == 0:
            return ""
        candidate = self.entity.cw_min + delta
        if candidate < 1.0:
            return "floor"
        if delta < 0 and not qos_guard(candidate, self.context_cws()):
            # cannot lower CW without breaking AC ordering: buy airtime
            # with a bigger burst instead
            self.txop_floor = self.entity.n_txop * 2
            try:
                self._recompute(n_u, n_d)
                return "txop-doubled"
            except InfeasibleError:
                self.txop_floor = self.entity.n_txop
                return "infeasible"
        self.entity.set_cw(candidate)
        return f"fine{delta:+d}"

    def beacon_payload(self):
        e_min, _ = encode_station_cw(int(round(self.station_tc.cw_min)))
        e_max, _ = encode_station_cw(int(round(self.station_tc.cw_max)))
        return (self.ac, self.station_tc.aifsn, e_min, e_max,
                self.entity.n_txop)


@dataclass
class AdaptationManager:
    """Drives all AC controllers from the simulated beacon clock."""

    config: AdaptationConfig
    controllers: list = field(default_factory=list)  # highest priority first
    beacon_count: int = 0

    def __post_init__(self):
        self.by_ac = {c.ac: c for c in self.controllers}

    def attach(self, sim):
        sim.schedule(self.config.beacon_interval_s * 1e6, self._beacon)

    def _beacon(self, sim, t):
        self.beacon_count += 1
        for c in self.controllers:
            sim.trace.beacons.append((t / 1e6,) + c.beacon_payload())
        if self.beacon_count % self.config.beta == 0:
            peeks = {c.ac: c.registry.peek() for c in self.controllers}
            recomputed = []
            for c in self.controllers:
                c.background = self._background_for(c, peeks)
                if c.tick(sim, t):
                    recomputed.append(c)
            # controllers that re-solved did so against stale peer CWs;
            # one relaxation pass with the fresh values settles the round
            for c in recomputed:
                c.background = self._background_for(c, peeks)
                c.refresh_recompute()
        nxt = t + self.config.beacon_interval_s * 1e6
        if nxt <= sim.horizon_us:
            sim.schedule(nxt, self._beacon)

    def _background_for(self, ctl, peeks):
        """Saturated-contender picture of every other managed AC."""
        bg = []
        for p in self.controllers:
            if p is ctl:
                continue
            n_u, n_d = peeks[p.ac]
            if n_u > 0:
                bg.append(replace(p.station_tc, population=n_u))
            if n_d > 0:
                e = p.entity
                bg.append(TrafficClassParams(
                    aifsn=e.aifsn, cw_min=max(1.0, e.cw_min), m=e.m,
                    retry_limit=e.retry_limit, n_txop=e.n_txop,
                    population=1))
        return bg

    def observe_uplink(self, ac, src):
        c = self.by_ac.get(ac)
        if c is not None:
            c.registry.observe_up(src)

    def observe_downlink(self, ac, dst):
        c = self.by_ac.get(ac)
        if c is not None:
            c.registry.observe_down(dst)

    def count_success(self, ac, direction, n):
        c = self.by_ac.get(ac)
        if c is not None:
            c.count_success(direction, n)
