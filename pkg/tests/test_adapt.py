"""Unit tests for the AP-side adaptation controller."""

import pytest

from edcafair.adapt import (
    AcController,
    AdaptationConfig,
    AdaptationManager,
    FlowRegistry,
    encode_station_cw,
    fine_tune_delta,
    qos_guard,
    required_utilization,
    txop_pressure_control,
    update_flow_registry,
)
from edcafair.analytics import PhyTiming, TrafficClassParams
from edcafair.sim import Simulator


class TestFlowRegistry:
    def test_empty_interval_evicts_everything(self):
        reg = FlowRegistry()
        reg.observe_up("a")
        reg.observe_down("b")
        reg.close_interval()
        assert reg.close_interval() == (0, 0, True)

    def test_new_uplink_source_counts_and_flags(self):
        reg = FlowRegistry()
        reg.observe_up("a")
        n_u, n_d, changed = reg.close_interval()
        assert (n_u, n_d, changed) == (1, 0, True)

    def test_static_population_converges(self):
        reg = FlowRegistry()
        flags = []
        for _ in range(5):
            reg.observe_up("a")
            reg.observe_up("b")
            reg.observe_down("c")
            flags.append(reg.close_interval()[2])
        assert flags[0] is True
        assert flags[1:] == [False] * 4

    def test_functional_wrapper(self):
        reg = FlowRegistry()
        assert update_flow_registry(reg, ["s1", "s2"], ["d1"]) == (2, 1, True)

    def test_peek_does_not_close(self):
        reg = FlowRegistry()
        reg.observe_up("a")
        assert reg.peek() == (1, 0)
        assert reg.peek() == (1, 0)


class TestPureRules:
    def test_required_utilization(self):
        assert required_utilization(10, 10) == 1.0
        assert required_utilization(4, 2) == 0.5
        assert required_utilization(3, 7) == pytest.approx(7 / 3)
        with pytest.raises(ValueError):
            required_utilization(0, 5)

    def test_fine_tune_dead_band(self):
        assert fine_tune_delta(0.4, 1.0, 0.5) == -1
        assert fine_tune_delta(1.2, 1.0, 0.5) == 0
        assert fine_tune_delta(1.6, 1.0, 0.5) == 1
        # band edges are inclusive
        assert fine_tune_delta(0.5, 1.0, 0.5) == 0
        assert fine_tune_delta(1.5, 1.0, 0.5) == 0
        # band scales with the target
        assert fine_tune_delta(0.9, 2.0, 0.5) == -1

    def test_txop_pressure(self):
        assert txop_pressure_control(60, 50, 2) == 4
        assert txop_pressure_control(10, 50, 2) == 2
        assert txop_pressure_control(50, 50, 2) == 2  # at threshold: normal

    def test_txop_toggles_exactly_at_crossings(self):
        trace = [(40, 2), (55, 4), (51, 4), (50, 2), (60, 4), (10, 2)]
        for qlen, expect in trace:
            assert txop_pressure_control(qlen, 50, 2) == expect

    def test_encode_station_cw(self):
        assert encode_station_cw(31) == (5, 31)
        assert encode_station_cw(100) == (7, 127)
        assert encode_station_cw(0) == (0, 0)
        assert encode_station_cw(2 ** 15 - 1) == (15, 32767)
        with pytest.raises(ValueError):
            encode_station_cw(2 ** 15)

    def test_qos_guard(self):
        assert qos_guard(20, [7]) is True
        assert qos_guard(5, [7]) is False
        assert qos_guard(5, []) is True

    def test_config_validation(self):
        with pytest.raises(ValueError):
            AdaptationConfig(alpha=1.5)
        with pytest.raises(ValueError):
            AdaptationConfig(beta=0)
        assert AdaptationConfig().interval_s == pytest.approx(0.5)


def make_controller(transport="udp", higher=()):
    sim = Simulator(PhyTiming(), 10.0, seed=1)
    entity = sim.add_ap_tc("be", 2, 31, 4, 7)
    tc = TrafficClassParams(2, 31, 4, 7)
    ctl = AcController("be", entity, tc, transport, AdaptationConfig(),
                       higher_priority=higher)
    return sim, entity, ctl


def feed(ctl, n_u, n_d):
    for i in range(n_u):
        ctl.registry.observe_up(f"s{i}")
    for i in range(n_d):
        ctl.registry.observe_down(f"d{i}")


class TestAcController:
    def test_population_change_recomputes_and_skips_fine_tune(self):
        sim, entity, ctl = make_controller()
        feed(ctl, 4, 4)
        ctl.count_success("up", 100)
        ctl.count_success("down", 10)  # far outside the dead band
        ctl.tick(sim, 5e5)
        row = sim.trace.intervals[-1]
        assert row["recomputed"] is True
        assert row["annotation"] == ""  # no fine-tune on the same tick
        assert entity.cw_min != 31.0

    def test_udp_fine_tune_increments(self):
        sim, entity, ctl = make_controller()
        feed(ctl, 4, 4)
        ctl.tick(sim, 5e5)
        cw = entity.cw_min
        feed(ctl, 4, 4)
        ctl.count_success("up", 100)
        ctl.count_success("down", 200)  # 2.0 > 1.5: AP is over-serving
        ctl.tick(sim, 1e6)
        assert entity.cw_min == pytest.approx(cw + 1)
        assert sim.trace.intervals[-1]["annotation"] == "fine+1"

    def test_udp_fine_tune_inside_band_is_noop(self):
        sim, entity, ctl = make_controller()
        feed(ctl, 4, 4)
        ctl.tick(sim, 5e5)
        cw = entity.cw_min
        feed(ctl, 4, 4)
        ctl.count_success("up", 100)
        ctl.count_success("down", 120)
        ctl.tick(sim, 1e6)
        assert entity.cw_min == cw

    def test_tcp_never_fine_tunes(self):
        sim, entity, ctl = make_controller(transport="tcp")
        assert entity.txop_pressure_th == 50
        feed(ctl, 4, 4)
        ctl.tick(sim, 5e5)
        cw = entity.cw_min
        feed(ctl, 4, 4)
        ctl.count_success("up", 100)
        ctl.count_success("down", 1)
        ctl.tick(sim, 1e6)
        assert entity.cw_min == cw
        assert all("fine" not in r["annotation"]
                   for r in sim.trace.intervals)

    def test_no_uplink_measurement_skips_fine_tune(self):
        sim, entity, ctl = make_controller()
        feed(ctl, 4, 4)
        ctl.tick(sim, 5e5)
        cw = entity.cw_min
        feed(ctl, 4, 4)
        ctl.count_success("down", 50)  # n_t_u = 0
        ctl.tick(sim, 1e6)
        assert entity.cw_min == cw

    def test_guard_rejection_doubles_txop(self):
        sim0 = Simulator(PhyTiming(), 10.0, seed=1)
        hi_entity = sim0.add_ap_tc("voice", 2, 7, 1, 7)
        hi = AcController("voice", hi_entity, TrafficClassParams(2, 7, 1, 7),
                          "udp", AdaptationConfig())
        sim, entity, ctl = make_controller(higher=[hi])
        feed(ctl, 8, 8)
        ctl.tick(sim, 5e5)
        entity.set_cw(7.0)  # sit exactly on the floor
        feed(ctl, 8, 8)
        ctl.count_success("up", 300)
        ctl.count_success("down", 10)  # wants a decrement
        ctl.tick(sim, 1e6)
        row = sim.trace.intervals[-1]
        assert row["annotation"] == "txop-doubled"
        assert entity.n_txop >= 2
        assert entity.cw_min >= 7.0

    def test_idles_without_downlink(self):
        sim, entity, ctl = make_controller()
        feed(ctl, 4, 0)
        ctl.tick(sim, 5e5)
        assert entity.cw_min == 31.0
        assert sim.trace.intervals[-1]["recomputed"] is False


class TestAdaptationManager:
    def test_beacon_cadence_and_payload(self):
        sim, entity, ctl = make_controller()
        mgr = AdaptationManager(AdaptationConfig(), [ctl])
        sim.controller = mgr
        # no traffic: run just drives the beacon clock
        sim.run()
        assert len(sim.trace.beacons) == 100
        # ticks only on every 5th beacon
        assert len(sim.trace.intervals) == 20
        t, ac, aifsn, e_min, e_max, txop = sim.trace.beacons[0]
        assert (ac, aifsn, e_min, e_max, txop) == ("be", 2, 5, 9, 1)
        # station-facing CWs are powers of two minus one by construction
        assert 2 ** e_min - 1 == 31 and 2 ** e_max - 1 == 511

    def test_observation_dispatch(self):
        sim, entity, ctl = make_controller()
        mgr = AdaptationManager(AdaptationConfig(), [ctl])
        mgr.observe_uplink("be", "s1")
        mgr.observe_downlink("be", "d1")
        mgr.observe_uplink("unknown-ac", "s2")  # silently ignored
        assert ctl.registry.peek() == (1, 1)
        mgr.count_success("be", "up", 3)
        assert ctl.n_t_u == 3
