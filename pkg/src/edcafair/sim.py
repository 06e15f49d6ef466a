"""Slotted discrete-event simulator of an EDCA infrastructure BSS.

Contention advances in backoff-slot jumps: the loop computes the slot at
which the next entity fires, fast-forwards every AIFS/backoff counter, and
collapses the resulting busy period (frame burst, SIFS gaps, ACKs) into one
composite duration. The channel is ideal: no capture, no PHY errors, every
station hears every other. A run is strictly single threaded and fully
determined by (config, seed).
"""

from __future__ import annotations

import heapq
import math
import random
from dataclasses import dataclass, field

from .analytics import PhyTiming


class MacEntity:
    """One backoff process: a station's queue or one AC queue at the AP."""

    def __init__(self, name, ac, aifsn, cw_min, m, retry_limit, n_txop=1,
                 fractional=False, capacity=200, is_ap=False, priority=0):
        self.name = name
        self.ac = ac
        self.aifsn = aifsn
        self.cw_min = float(cw_min)
        self.m = m
        self.retry_limit = retry_limit
        self.n_txop = n_txop
        self.fractional = fractional
        self.capacity = capacity
        self.is_ap = is_ap
        self.priority = priority            # lower wins internal collisions
        self.txop_pressure_th = None        # packets; None disables doubling
        self.txop_doubled = False
        self.queue = []                     # FIFO via index; deque semantics
        self._head = 0
        self.aifs_wait = aifsn
        self.attempt = 1
        self.counter = 0
        # stats
        self.tx_success = 0
        self.tx_attempts = 0
        self.eligible_slots = 0
        self.retry_drops = 0

    # queue kept as list with head index: popleft-heavy, bounded size
    def qlen(self):
        return len(self.queue) - self._head

    def _popleft(self):
        f = self.queue[self._head]
        self._head += 1
        if self._head > 64 and self._head * 2 > len(self.queue):
            del self.queue[:self._head]
            self._head = 0
        return f

    def set_cw(self, cw_min):
        self.cw_min = max(1.0, float(cw_min))

    def window(self, attempt):
        return 2 ** min(attempt - 1, self.m) * (self.cw_min + 1) - 1

    def draw_backoff(self, rng):
        w = self.window(self.attempt)
        if self.fractional:
            lo = math.floor(w)
            wi = int(lo) + (1 if rng.random() < w - lo else 0)
        else:
            wi = int(round(w))
        return rng.randrange(wi + 1) if wi > 0 else 0

    def reset_contention(self, rng):
        self.attempt = 1
        self.aifs_wait = self.aifsn
        self.counter = self.draw_backoff(rng)

    def effective_txop(self):
        if (self.txop_pressure_th is not None
                and self.qlen() > self.txop_pressure_th):
            self.txop_doubled = True
            return 2 * self.n_txop
        self.txop_doubled = False
        return self.n_txop


@dataclass
class SimTrace:
    horizon_us: float
    seed: int
    idle_slots: int = 0
    busy_slots: int = 0
    collisions: int = 0
    successes: int = 0
    entity_stats: dict = field(default_factory=dict)
    flows: dict = field(default_factory=dict)       # flow_id -> FlowStats
    residual: dict = field(default_factory=dict)    # flow_id -> frames in queue
    intervals: list = field(default_factory=list)
    beacons: list = field(default_factory=list)


class Simulator:
    def __init__(self, phy: PhyTiming, horizon_s: float, seed: int):
        self.phy = phy
        self.horizon_us = horizon_s * 1e6
        self.seed = seed
        self.rng = random.Random(seed)
        self.now_us = 0.0
        self._events = []
        self._eseq = 0
        self.entities = []
        self.ap_entities = {}       # ac name -> MacEntity
        self.flows = {}
        self.controller = None      # AdaptationManager or None
        self.trace = SimTrace(self.horizon_us, seed)

    # -- construction ----------------------------------------------------

    def add_station(self, name, ac, aifsn, cw_min, m, retry_limit,
                    capacity=200):
        e = MacEntity(name, ac, aifsn, cw_min, m, retry_limit,
                      capacity=capacity)
        self.entities.append(e)
        return e

    def add_ap_tc(self, ac, aifsn, cw_min, m, retry_limit, n_txop=1,
                  fractional=False, capacity=200, priority=0):
        e = MacEntity(f"ap:{ac}", ac, aifsn, cw_min, m, retry_limit,
                      n_txop=n_txop, fractional=fractional,
                      capacity=capacity, is_ap=True, priority=priority)
        self.entities.append(e)
        self.ap_entities[ac] = e
        return e

    def register_flow(self, flow):
        self.flows[flow.flow_id] = flow
        self.trace.flows[flow.flow_id] = flow.stats

    # -- event plumbing --------------------------------------------------

    def schedule(self, t_us, fn, *args):
        self._eseq += 1
        heapq.heappush(self._events, (t_us, self._eseq, fn, args))

    # -- queueing --------------------------------------------------------

    def enqueue(self, entity, frame, t):
        """Offer a frame to a station queue (uplink side)."""
        self._enqueue(entity, frame, t)

    def ap_enqueue(self, ac, frame, t):
        """Offer a frame arriving from the wired side to the AP's AC queue."""
        if self.controller is not None:
            self.controller.observe_downlink(ac, frame.dst)
        self._enqueue(self.ap_entities[ac], frame, t)

    def _enqueue(self, entity, frame, t):
        flow = self.flows.get(frame.flow_id)
        if flow is not None:
            if frame.kind == "data":
                flow.stats.enqueued += 1
            else:
                flow.stats.ack_enqueued += 1
        if entity.qlen() >= entity.capacity:
            if flow is not None:
                flow.on_drop(self, frame, t)
            return False
        frame.enqueue_us = t
        was_empty = entity.qlen() == 0
        entity.queue.append(frame)
        if was_empty:
            entity.reset_contention(self.rng)
        return True

    # -- main loop -------------------------------------------------------

    def run(self) -> SimTrace:
        for flow in list(self.flows.values()):
            flow.start(self)
        if self.controller is not None:
            self.controller.attach(self)
        slot = self.phy.slot_time_us
        while True:
            # fire everything due
            while self._events and self._events[0][0] <= self.now_us + 1e-9:
                t, _, fn, args = heapq.heappop(self._events)
                # callbacks see their own timestamp even when the channel
                # was busy past it, so arrival processes stay undistorted
                fn(self, t, *args)
            if self.now_us >= self.horizon_us:
                break
            contenders = [e for e in self.entities if e.qlen() > 0]
            next_ev = self._events[0][0] if self._events else None
            if not contenders:
                if next_ev is None or next_ev > self.horizon_us:
                    break
                self.now_us = next_ev
                continue
            k_tx = min(e.aifs_wait + e.counter + 1 for e in contenders)
            if next_ev is not None and next_ev < self.now_us + k_tx * slot:
                k_ev = int(math.ceil((next_ev - self.now_us) / slot - 1e-9))
                if k_ev < k_tx:
                    if k_ev <= 0:
                        self.now_us = next_ev
                    else:
                        self._advance_slots(contenders, k_ev, firing=None)
                        self.trace.idle_slots += k_ev
                        self.now_us += k_ev * slot
                    continue
            tx = [e for e in contenders
                  if e.aifs_wait + e.counter + 1 == k_tx]
            self._advance_slots(contenders, k_tx, firing=set(map(id, tx)))
            self.trace.idle_slots += k_tx - 1
            self.trace.busy_slots += 1
            self.now_us += k_tx * slot
            busy = self._resolve(tx)
            self.now_us += busy + self.phy.sifs_us
            for e in self.entities:
                e.aifs_wait = e.aifsn

    # finalize
        for e in self.entities:
            self.trace.entity_stats[e.name] = {
                "ac": e.ac,
                "successes": e.tx_success,
                "attempts": e.tx_attempts,
                "eligible_slots": e.eligible_slots,
                "retry_drops": e.retry_drops,
                "cw_min": e.cw_min,
                "n_txop": e.n_txop,
            }
            for i in range(e._head, len(e.queue)):
                f = e.queue[i]
                self.trace.residual[f.flow_id] = (
                    self.trace.residual.get(f.flow_id, 0) + 1)
        return self.trace

    def _advance_slots(self, contenders, k, firing):
        for e in contenders:
            el = k - e.aifs_wait
            if el > 0:
                e.eligible_slots += el
            if firing is not None and id(e) in firing:
                continue
            if el > 0:
                e.counter -= el
            e.aifs_wait = max(0, e.aifs_wait - k)

    def _resolve(self, tx) -> float:
        """Resolve simultaneous firings; returns the busy-period airtime."""
        for e in tx:
            e.tx_attempts += 1
        physical = [e for e in tx if not e.is_ap]
        ap_ready = sorted((e for e in tx if e.is_ap), key=lambda e: e.priority)
        vlosers = []
        if ap_ready:
            physical.append(ap_ready[0])
            vlosers = ap_ready[1:]
        if len(physical) == 1:
            busy = self._success(physical[0])
        else:
            busy = self._collision(physical)
        for e in vlosers:
            self._collide(e)
        return busy

    def _success(self, e) -> float:
        phy = self.phy
        n = min(e.effective_txop(), e.qlen())
        frames = [e._popleft() for _ in range(n)]
        busy = sum(phy.data_airtime_us(f.payload_bytes) + phy.sifs_us
                   + phy.ack_airtime_us() for f in frames)
        busy += (n - 1) * phy.sifs_us
        e.tx_success += 1
        self.trace.successes += 1
        if self.controller is not None:
            direction = "down" if e.is_ap else "up"
            self.controller.count_success(e.ac, direction, n)
            if not e.is_ap:
                for f in frames:
                    self.controller.observe_uplink(e.ac, f.src)
        e.reset_contention(self.rng)
        t_end = self.now_us + busy
        for f in frames:
            flow = self.flows.get(f.flow_id)
            if flow is not None:
                flow.on_mac_delivery(self, f, t_end)
        return busy

    def _collision(self, physical) -> float:
        phy = self.phy
        busy = max(phy.data_airtime_us(e.queue[e._head].payload_bytes)
                   for e in physical) + phy.sifs_us + phy.ack_airtime_us()
        self.trace.collisions += 1
        for e in physical:
            self._collide(e)
        return busy

    def _collide(self, e):
        e.attempt += 1
        if e.attempt > e.retry_limit:
            f = e._popleft()
            e.retry_drops += 1
            e.attempt = 1
            flow = self.flows.get(f.flow_id)
            if flow is not None:
                flow.on_drop(self, f, self.now_us)
        e.aifs_wait = e.aifsn
        e.counter = e.draw_backoff(self.rng)
