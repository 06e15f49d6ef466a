"""Offered-load generators: CBR/saturated UDP and a simplified window TCP.

TCP here is timeout-driven with cumulative ACKs and go-back-N resume: slow
start doubles the window per RTT, congestion avoidance adds one packet per
RTT, a timeout halves ssthresh and restarts from a window of one. There is
no fast retransmit and no delayed ACK, so during slow start every received
ACK releases exactly two data packets.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

TCP_ACK_BYTES = 40


@dataclass
class Frame:
    flow_id: str
    src: str
    dst: str
    kind: str               # "data" | "ack"
    payload_bytes: int
    enqueue_us: float = 0.0
    seq: int = 0


@dataclass
class FlowStats:
    enqueued: int = 0
    delivered: int = 0
    dropped: int = 0
    bytes_delivered: int = 0        # transport payload, goodput for TCP
    delay_sum_us: float = 0.0
    ack_enqueued: int = 0
    ack_delivered: int = 0
    ack_dropped: int = 0
    timeouts: int = 0
    ss_data: int = 0                # data packets emitted during slow start
    ss_acks: int = 0                # new ACKs received during slow start
    completion_us: float | None = None


class UdpFlow:
    """One-way CBR (or saturated) UDP stream bound to an access category."""

    def __init__(self, flow_id, direction, ac, payload_bytes=1500,
                 rate_pps=None, saturated=False, wired_delay_us=0.0,
                 start_us=0.0, on_off_us=None):
        if not saturated and (rate_pps is None or rate_pps <= 0):
            raise ValueError("UDP flow needs a positive rate or saturated=True")
        self.flow_id = flow_id
        self.direction = direction
        self.transport = "udp"
        self.ac = ac
        self.payload_bytes = payload_bytes
        self.rate_pps = rate_pps
        self.saturated = saturated
        self.wired_delay_us = wired_delay_us
        self.start_us = start_us
        self.on_off_us = on_off_us      # (on, off) busy/silent cycle, or None
        self.station = None             # wireless endpoint, set by the harness
        self.stats = FlowStats()
        self._rng = None

    def start(self, sim):
        # flow-local RNG: arrival jitter stays identical across AP modes
        # and independent of MAC backoff draws
        self._rng = random.Random(f"{sim.seed}:{self.flow_id}")
        if self.saturated:
            for _ in range(2):
                self._emit(sim, self.start_us)
        else:
            first = self.start_us
            if self.direction == "down":
                first += self.wired_delay_us
            sim.schedule(first, self._arrival)

    def _next_gap_us(self, t):
        gap = 1e6 / self.rate_pps * self._rng.uniform(0.9, 1.1)
        if self.on_off_us is None:
            return gap
        on, off = self.on_off_us
        phase = (t + gap - self.start_us) % (on + off)
        if phase > on:
            return gap + (on + off) - phase
        return gap

    def _arrival(self, sim, t):
        self._emit(sim, t)
        sim.schedule(t + self._next_gap_us(t), self._arrival)

    def _frame(self):
        if self.direction == "up":
            src, dst = self.station.name, "ap"
        else:
            src, dst = f"{self.flow_id}:wired", self.station.name
        return Frame(self.flow_id, src, dst, "data", self.payload_bytes)

    def _emit(self, sim, t):
        frame = self._frame()
        if self.direction == "up":
            sim.enqueue(self.station, frame, t)
        else:
            sim.ap_enqueue(self.ac, frame, t)

    def on_mac_delivery(self, sim, frame, t):
        self.stats.delivered += 1
        self.stats.bytes_delivered += frame.payload_bytes
        self.stats.delay_sum_us += t - frame.enqueue_us
        if self.saturated:
            self._emit(sim, t)

    def on_drop(self, sim, frame, t):
        self.stats.dropped += 1
        if self.saturated:
            self._emit(sim, t)


class TcpConn:
    """Bidirectional TCP connection; the wireless end is one station.

    Uplink: station sends data, the wired peer returns cumulative ACKs that
    queue at the AP. Downlink: the wired peer's data queues at the AP and
    the station returns ACKs over the air.
    """

    def __init__(self, flow_id, direction, ac, payload_bytes=1500,
                 wired_delay_us=15000.0, start_us=0.0, total_packets=None,
                 init_ssthresh=64.0, base_rto_us=1_000_000.0,
                 rto_cap_us=8_000_000.0):
        self.flow_id = flow_id
        self.direction = direction
        self.transport = "tcp"
        self.ac = ac
        self.payload_bytes = payload_bytes
        self.wired_delay_us = wired_delay_us
        self.start_us = start_us
        self.total_packets = total_packets
        self.station = None
        self.stats = FlowStats()
        # sender
        self.cwnd = 1.0
        self.ssthresh = float(init_ssthresh)
        self.next_seq = 1
        self.high_ack = 0
        self.dup_acks = 0
        self.base_rto_us = base_rto_us
        self.rto_cap_us = rto_cap_us
        self.rto_us = base_rto_us
        self._rto_gen = 0
        self._rto_pending = False
        self.done = False
        # receiver
        self.rcv_expected = 0

    @property
    def in_slow_start(self):
        return self.cwnd < self.ssthresh

    def start(self, sim):
        sim.schedule(self.start_us, lambda s, t: self._pump(s, t))

    # -- sender side ----------------------------------------------------

    def _pump(self, sim, t):
        while not self.done:
            in_flight = self.next_seq - 1 - self.high_ack
            if in_flight >= int(self.cwnd):
                break
            if self.total_packets is not None and self.next_seq > self.total_packets:
                break
            self._emit_data(sim, t, self.next_seq)
            self.next_seq += 1
        if self.next_seq - 1 > self.high_ack and not self._rto_pending:
            self._arm_rto(sim, t)

    def _emit_data(self, sim, t, seq):
        if self.in_slow_start:
            self.stats.ss_data += 1
        if self.direction == "up":
            frame = Frame(self.flow_id, self.station.name, "ap", "data",
                          self.payload_bytes, seq=seq)
            sim.enqueue(self.station, frame, t)
        else:
            frame = Frame(self.flow_id, f"{self.flow_id}:wired",
                          self.station.name, "data", self.payload_bytes,
                          seq=seq)
            sim.schedule(t + self.wired_delay_us,
                         lambda s, ta, f=frame: s.ap_enqueue(self.ac, f, ta))

    def on_ack(self, sim, t, acknum):
        if self.done:
            return
        if acknum <= self.high_ack:
            self.dup_acks += 1
            return
        if self.in_slow_start:
            self.stats.ss_acks += 1
        self.high_ack = acknum
        if self.total_packets is not None and acknum >= self.total_packets:
            self.done = True
            self.stats.completion_us = t - self.start_us
            self._rto_gen += 1
            self._rto_pending = False
            return
        if self.in_slow_start:
            self.cwnd += 1.0
        else:
            self.cwnd += 1.0 / self.cwnd
        self.rto_us = self.base_rto_us
        self._arm_rto(sim, t)
        self._pump(sim, t)

    def on_timeout(self, sim, t):
        if self.done or self.next_seq - 1 <= self.high_ack:
            self._rto_pending = False
            return
        self.stats.timeouts += 1
        self.ssthresh = max(self.cwnd / 2.0, 2.0)
        self.cwnd = 1.0
        self.next_seq = self.high_ack + 1   # go-back-N: resend oldest unACKed
        self.rto_us = min(self.rto_us * 2.0, self.rto_cap_us)
        self._arm_rto(sim, t)
        self._pump(sim, t)

    def _arm_rto(self, sim, t):
        self._rto_gen += 1
        self._rto_pending = True
        gen = self._rto_gen
        sim.schedule(t + self.rto_us, lambda s, ta: self._rto_fire(s, ta, gen))

    def _rto_fire(self, sim, t, gen):
        if gen != self._rto_gen:
            return
        self._rto_pending = False
        self.on_timeout(sim, t)

    # -- receiver side --------------------------------------------------

    def _receive_data(self, sim, t, seq):
        if seq == self.rcv_expected + 1:
            self.rcv_expected = seq
            self.stats.bytes_delivered += self.payload_bytes
        self._emit_ack(sim, t, self.rcv_expected)

    def _emit_ack(self, sim, t, acknum):
        if self.direction == "up":
            # wired peer ACKs; the ACK re-enters the WLAN through the AP
            frame = Frame(self.flow_id, f"{self.flow_id}:wired",
                          self.station.name, "ack", TCP_ACK_BYTES, seq=acknum)
            sim.schedule(t + self.wired_delay_us,
                         lambda s, ta, f=frame: s.ap_enqueue(self.ac, f, ta))
        else:
            frame = Frame(self.flow_id, self.station.name, "ap", "ack",
                          TCP_ACK_BYTES, seq=acknum)
            sim.enqueue(self.station, frame, t)

    # -- MAC callbacks ---------------------------------------------------

    def on_mac_delivery(self, sim, frame, t):
        if frame.kind == "data":
            self.stats.delivered += 1
            self.stats.delay_sum_us += t - frame.enqueue_us
            if self.direction == "up":
                # AP relays to the wired peer
                sim.schedule(t + self.wired_delay_us,
                             lambda s, ta, q=frame.seq: self._receive_data(s, ta, q))
            else:
                self._receive_data(sim, t, frame.seq)
        else:
            self.stats.ack_delivered += 1
            if self.direction == "up":
                self.on_ack(sim, t, frame.seq)
            else:
                sim.schedule(t + self.wired_delay_us,
                             lambda s, ta, q=frame.seq: self.on_ack(s, ta, q))

    def on_drop(self, sim, frame, t):
        if frame.kind == "data":
            self.stats.dropped += 1
        else:
            self.stats.ack_dropped += 1
