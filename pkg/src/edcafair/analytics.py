"""Saturation fixed-point model for EDCA contention and the AP parameter search.

Two traffic classes (TCs) sharing one access category are the running case:
TC 0 holds the uplink stations, TC 1 the AP's downlink queue. All functions
accept an arbitrary number of TCs; slot indices count backoff slots after
the shortest AIFS has elapsed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

CW_CAP = 32767  # largest contention window the parameter search will accept
TXOP_CAP = 64   # largest per-access packet budget the search will try


class FixedPointError(RuntimeError):
    """The damped iteration did not reach the requested residual."""


class InfeasibleError(RuntimeError):
    """No AP parameter plan exists below the CW/TXOP caps."""


@dataclass(frozen=True)
class PhyTiming:
    """PHY/MAC timing constants (802.11g-style defaults, 54/6 Mbps)."""

    slot_time_us: float = 9.0
    sifs_us: float = 10.0
    data_rate_bps: float = 54e6
    basic_rate_bps: float = 6e6
    phy_header_us: float = 20.0
    mac_header_bytes: int = 28
    ack_bytes: int = 14

    def __post_init__(self):
        if min(self.slot_time_us, self.sifs_us, self.data_rate_bps,
               self.basic_rate_bps, self.phy_header_us) <= 0:
            raise ValueError("all timing fields must be positive")
        if self.basic_rate_bps > self.data_rate_bps:
            raise ValueError("basic rate must not exceed data rate")

    def data_airtime_us(self, payload_bytes: int) -> float:
        bits = (self.mac_header_bytes + payload_bytes) * 8
        return self.phy_header_us + bits / self.data_rate_bps * 1e6

    def ack_airtime_us(self) -> float:
        return self.phy_header_us + self.ack_bytes * 8 / self.basic_rate_bps * 1e6

    def aifs_us(self, aifsn: int) -> float:
        return self.sifs_us + aifsn * self.slot_time_us


@dataclass(frozen=True)
class TrafficClassParams:
    """EDCA knobs and population of one traffic class.

    ``cw_min`` may be fractional for the AP's TC; station TCs use integers.
    ``CW_max = 2^m (cw_min + 1) - 1`` and the window at attempt k (1-based)
    is ``2^min(k-1, m) (cw_min + 1) - 1``, so the first attempt uses cw_min.
    """

    aifsn: int
    cw_min: float
    m: int
    retry_limit: int
    n_txop: int = 1
    population: int = 1

    def __post_init__(self):
        if self.aifsn < 2:
            raise ValueError("aifsn must be >= 2")
        if self.cw_min < 1:
            raise ValueError("cw_min must be >= 1")
        if self.m < 0 or self.retry_limit < 1 or self.m >= self.retry_limit:
            raise ValueError("need 0 <= m < retry_limit")
        if self.n_txop < 1 or self.population < 1:
            raise ValueError("n_txop and population must be >= 1")

    @property
    def cw_max(self) -> float:
        return 2 ** self.m * (self.cw_min + 1) - 1

    def window(self, attempt: int) -> float:
        """Contention window for the attempt-th transmission try (1-based)."""
        return 2 ** min(attempt - 1, self.m) * (self.cw_min + 1) - 1


@dataclass
class FixedPointSolution:
    tau: np.ndarray
    p_c: np.ndarray
    e_tbo: np.ndarray
    b_prime: np.ndarray
    gamma: np.ndarray
    utilization: float | None
    converged: bool
    residual: float
    iterations: int


@dataclass
class ApParameterPlan:
    aifsn: int
    cw_min: float
    n_txop: int
    rounded_cw_min: int
    predicted_utilization: float


def aifs_offsets(tcs) -> list[int]:
    """Per-TC slot offsets d_i = AIFSN_i - AIFSN_min."""
    amin = min(tc.aifsn for tc in tcs)
    return [tc.aifsn - amin for tc in tcs]


def zone_index(n: int, tcs) -> int:
    """TC index whose contention zone governs backoff slot n (1-based).

    Among TCs whose offset allows counting in slot n (d <= n-1), the one
    with the largest offset wins; ties go to the highest TC index.
    """
    if n < 1:
        raise ValueError("slot index starts at 1")
    d = aifs_offsets(tcs)
    best = -1
    best_d = -1
    for i, di in enumerate(d):
        if di <= n - 1 and di >= best_d:
            best_d = di
            best = i
    return best


def zone_collision_prob(i: int, x: int, tau, tcs) -> float:
    """Conditional collision probability of TC i in TC x's contention zone."""
    d = aifs_offsets(tcs)
    if d[x] < d[i]:
        raise ValueError("zone must admit TC i (d_x >= d_i)")
    if tau[i] >= 1.0:
        raise ValueError("tau_i must be < 1")
    prod = 1.0
    for j, tc in enumerate(tcs):
        if d[j] <= d[x]:
            prod *= (1.0 - tau[j]) ** tc.population
    return 1.0 - prod / (1.0 - tau[i])


def zone_transmission_prob(x: int, tau, tcs) -> float:
    """Probability that at least one TC transmits in a zone-x backoff slot."""
    d = aifs_offsets(tcs)
    prod = 1.0
    for j, tc in enumerate(tcs):
        if d[j] <= d[x]:
            prod *= (1.0 - tau[j]) ** tc.population
    return 1.0 - prod


def chain_length(tcs) -> int:
    """Number of backoff slots in the occupancy chain: min over TCs of CW_max."""
    return max(1, int(math.floor(min(tc.cw_max for tc in tcs))))


def _slot_zones(tcs, w_min: int) -> np.ndarray:
    return np.array([zone_index(n, tcs) for n in range(1, w_min + 1)], dtype=int)


def slot_occupancy(tau, tcs) -> np.ndarray:
    """Steady-state occupancy of backoff slots 1..W_min after a busy period.

    Slot n+1 is reached from slot n with probability 1 - p_tr of slot n's
    zone; any transmission restarts the chain at slot 1; the chain is
    truncated at W_min = min_i CW_i,max.
    """
    if all(t <= 0.0 for t in tau):
        raise ValueError("degenerate chain: all transmission probabilities zero")
    w_min = chain_length(tcs)
    zones = _slot_zones(tcs, w_min)
    p_tr = np.array([zone_transmission_prob(x, tau, tcs) for x in range(len(tcs))])
    stay = 1.0 - p_tr[zones]
    unnorm = np.concatenate(([1.0], np.cumprod(stay[:-1])))
    return unnorm / unnorm.sum()


def avg_collision_prob(i: int, b_prime, zone_pc, tcs) -> float:
    """Occupancy-weighted average collision probability seen by TC i.

    ``zone_pc[x]`` is TC i's collision probability in TC x's zone; slots
    before TC i's AIFS elapses are excluded from the average.
    """
    d = aifs_offsets(tcs)
    w_min = len(b_prime)
    if d[i] >= w_min:
        raise ValueError("TC never reaches an eligible backoff slot")
    zones = _slot_zones(tcs, w_min)
    num = 0.0
    den = 0.0
    for n in range(d[i] + 1, w_min + 1):
        num += zone_pc[zones[n - 1]] * b_prime[n - 1]
        den += b_prime[n - 1]
    return num / den


def expected_backoff_slots(tc: TrafficClassParams, p_c: float) -> float:
    """Mean number of backoff slots per transmission attempt of one TC."""
    if not 0.0 <= p_c < 1.0:
        raise ValueError("p_c must be in [0, 1)")
    r = tc.retry_limit
    total = 0.0
    for k in range(1, r + 1):
        total += p_c ** (k - 1) * (1.0 - p_c) * tc.window(k) / 2.0
    return total / (1.0 - p_c ** r)


def tau_from_backoff(e_tbo: float) -> float:
    """Per-slot transmission probability from the mean backoff."""
    if e_tbo < 0:
        raise ValueError("expected backoff must be >= 0")
    return 1.0 / (e_tbo + 1.0)


def success_share(tau, tcs, b_prime) -> np.ndarray:
    """Per-TC aggregate probability of owning a successful transmission."""
    d = aifs_offsets(tcs)
    w_min = len(b_prime)
    k = len(tcs)
    gamma = np.zeros(k)
    for n in range(1, w_min + 1):
        ps = np.zeros(k)
        for i, tc in enumerate(tcs):
            if n < d[i] + 1:
                continue
            prod = 1.0
            for j, tcj in enumerate(tcs):
                if d[j] <= n - 1:
                    prod *= (1.0 - tau[j]) ** tcj.population
            ps[i] = tc.population * tau[i] / (1.0 - tau[i]) * prod
        tot = ps.sum()
        if tot > 0:
            gamma += b_prime[n - 1] * ps / tot
    return gamma


def utilization_ratio(gamma, tcs) -> float:
    """Downlink/uplink packet-utilization ratio (TC 1 over TC 0)."""
    if gamma[0] <= 0:
        raise ValueError("uplink share is zero")
    return gamma[1] * tcs[1].n_txop / (gamma[0] * tcs[0].n_txop)


def utilization_ratio_equal_aifs(tau, tcs) -> float:
    """Closed-form utilization ratio valid only when both TCs share one AIFS."""
    if tcs[0].aifsn != tcs[1].aifsn:
        raise ValueError("closed form requires equal AIFSN")
    n0, n1 = tcs[0].population, tcs[1].population
    num = n1 * tau[1] * (1.0 - tau[0]) * tcs[1].n_txop
    den = n0 * tau[0] * (1.0 - tau[1]) * tcs[0].n_txop
    return num / den


def _iteration_step(tau, tcs, d, zones, pops, slot_d):
    """One Picard step: tau -> (b', p_c, tau_new), fully vectorized over slots."""
    k = len(tcs)
    one_minus = (1.0 - tau) ** pops
    # product over TCs admitted to each zone (d_j <= d_x)
    zone_prod = np.array([np.prod(one_minus[d <= d[x]]) for x in range(k)])
    p_tr_zone = 1.0 - zone_prod
    stay = 1.0 - p_tr_zone[zones]
    unnorm = np.concatenate(([1.0], np.cumprod(stay[:-1])))
    b_prime = unnorm / unnorm.sum()

    p_c = np.empty(k)
    tau_new = np.empty(k)
    pc_zone_common = 1.0 - zone_prod[zones]  # 1 - prod, per slot
    for i, tc in enumerate(tcs):
        # p_c_{i,x} = 1 - zone_prod[x] / (1 - tau_i), per slot via zone map
        pc_slot = 1.0 - (1.0 - pc_zone_common) / (1.0 - tau[i])
        mask = slot_d >= d[i]
        den = b_prime[mask].sum()
        p_c[i] = float((pc_slot[mask] * b_prime[mask]).sum() / den)
        tau_new[i] = tau_from_backoff(expected_backoff_slots(tc, p_c[i]))
    return b_prime, p_c, tau_new


def solve_fixed_point(tcs, tol: float = 1e-10, max_iter: int = 10000,
                      damping: float = 0.5) -> FixedPointSolution:
    """Solve the coupled tau/p_c system by damped Picard iteration."""
    k = len(tcs)
    d = np.array(aifs_offsets(tcs))
    pops = np.array([tc.population for tc in tcs])
    w_min = chain_length(tcs)
    if int(d.max()) >= w_min:
        raise ValueError("chain too short for the largest AIFS offset")
    zones = _slot_zones(tcs, w_min)
    slot_d = d[zones]  # offset of the zone governing each slot

    tau = np.array([1.0 / (tc.cw_min / 2.0 + 1.0) for tc in tcs])
    residual = math.inf
    lam = damping
    it = 0
    converged = False
    for it in range(1, max_iter + 1):
        b_prime, p_c, tau_new = _iteration_step(tau, tcs, d, zones, pops, slot_d)
        new_residual = float(np.max(np.abs(tau - tau_new)))
        if new_residual > residual:
            lam = max(lam * 0.5, 1e-3)
        residual = new_residual
        tau = (1.0 - lam) * tau + lam * tau_new
        if residual < tol:
            converged = True
            break
    if not converged:
        raise FixedPointError(f"no convergence after {max_iter} iterations "
                              f"(residual {residual:.3e})")

    b_prime, p_c, tau_new = _iteration_step(tau, tcs, d, zones, pops, slot_d)
    e_tbo = np.array([expected_backoff_slots(tc, p_c[i])
                      for i, tc in enumerate(tcs)])
    gamma = success_share(tau, tcs, b_prime)
    util = utilization_ratio(gamma, tcs) if k >= 2 else None
    return FixedPointSolution(tau=tau, p_c=p_c, e_tbo=e_tbo, b_prime=b_prime,
                              gamma=gamma, utilization=util, converged=True,
                              residual=residual, iterations=it)


def cwmin_from_tau(tau: float, p_c: float, m: int, retry_limit: int) -> float:
    """Invert the backoff expectation: cw_min producing tau at collision rate p_c.

    The (1-2p) factors make p_c = 0.5 a removable singularity; it is handled
    by averaging evaluations at p_c +/- 1e-9.
    """
    if not 0.0 < tau < 1.0:
        raise ValueError("tau must be in (0, 1)")
    if not 0.0 <= p_c < 1.0:
        raise ValueError("p_c must be in [0, 1)")
    if m >= retry_limit:
        raise ValueError("need m < retry_limit")
    if abs(p_c - 0.5) < 1e-12:
        return 0.5 * (cwmin_from_tau(tau, 0.5 - 1e-9, m, retry_limit)
                      + cwmin_from_tau(tau, 0.5 + 1e-9, m, retry_limit))
    p, r = p_c, retry_limit
    num = (1.0 - p ** r) * (1.0 - 2.0 * p) * (1.0 - p)
    den = ((1.0 - p) ** 2 * (1.0 - (2.0 * p) ** (m + 1))
           + 2 ** m * p ** (m + 1) * (1.0 - 2.0 * p) * (1.0 - p)
           * (1.0 - p ** (r - m - 1)))
    cw = (2.0 - tau) / tau * num / den - 1.0
    if cw > CW_CAP:
        raise InfeasibleError(f"required cw_min {cw:.1f} exceeds cap {CW_CAP}")
    return cw


def solve_coupled_tau(station_tc: TrafficClassParams, n_uplink: int,
                      u_r: float, n_txop_ap: int,
                      tol: float = 1e-12, max_iter: int = 100000):
    """Joint tau_0/tau_1 solution with the equal-AIFS ratio constraint.

    tau_1 is eliminated through the closed-form ratio expression, leaving a
    scalar damped iteration on tau_0. Returns (tau_0, tau_1, p_c0, p_c1).
    """
    if u_r <= 0:
        raise ValueError("target utilization must be positive")
    n0 = n_uplink
    u_scaled = u_r * n0 * station_tc.n_txop / n_txop_ap
    tau0 = 1.0 / (station_tc.cw_min / 2.0 + 1.0)
    for _ in range(max_iter):
        a = u_scaled * tau0 / (1.0 - tau0)
        tau1 = a / (1.0 + a)
        p_c0 = 1.0 - (1.0 - tau0) ** (n0 - 1) * (1.0 - tau1)
        tau0_new = tau_from_backoff(expected_backoff_slots(station_tc, p_c0))
        if abs(tau0_new - tau0) < tol:
            tau0 = 0.5 * tau0 + 0.5 * tau0_new
            break
        tau0 = 0.5 * tau0 + 0.5 * tau0_new
    else:
        raise FixedPointError("coupled tau iteration did not converge")
    a = u_scaled * tau0 / (1.0 - tau0)
    tau1 = a / (1.0 + a)
    p_c0 = 1.0 - (1.0 - tau0) ** (n0 - 1) * (1.0 - tau1)
    p_c1 = 1.0 - (1.0 - tau0) ** n0
    return tau0, tau1, p_c0, p_c1


def _ratio_at_cw(station_tc, n_uplink, cw1, m1, r1, n_txop, background):
    """Achieved downlink/uplink ratio in the full multi-TC fixed point."""
    tcs = [replace(station_tc, population=n_uplink),
           TrafficClassParams(aifsn=station_tc.aifsn, cw_min=cw1, m=m1,
                              retry_limit=r1, n_txop=n_txop),
           *background]
    sol = solve_fixed_point(tcs, tol=1e-9)
    return utilization_ratio(sol.gamma, tcs)


def _refine_cw(station_tc, n_uplink, u_r, guess, m1, r1, n_txop, background,
               rel_tol=2e-3):
    """Bisect the AP cw_min against the full model including background TCs.

    The achieved ratio is monotone decreasing in cw_min; the closed-form
    two-TC value seeds the bracket.
    """
    def f(cw):
        return _ratio_at_cw(station_tc, n_uplink, cw, m1, r1, n_txop,
                            background)

    lo = max(1.0, guess / 8.0)
    hi = min(float(CW_CAP), max(guess * 8.0, 4.0))
    while f(lo) < u_r:
        if lo <= 1.0:
            return 1.0
        lo = max(1.0, lo / 4.0)
    while f(hi) > u_r:
        if hi >= CW_CAP:
            raise InfeasibleError(f"required cw_min exceeds cap {CW_CAP}")
        hi = min(float(CW_CAP), hi * 4.0)
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if f(mid) > u_r:
            lo = mid
        else:
            hi = mid
        if hi - lo < rel_tol * hi:
            break
    return 0.5 * (lo + hi)


def compute_ap_parameters(station_tc: TrafficClassParams, n_uplink: int,
                          u_r: float, ac_priority_context=(),
                          ap_m: int | None = None,
                          ap_retry_limit: int | None = None,
                          min_n_txop: int = 1,
                          background_tcs=()) -> ApParameterPlan:
    """AP-side EDCA parameters hitting a target downlink/uplink ratio.

    The AP's TC copies the station AIFSN; its TXOP budget starts at
    ``min_n_txop`` packets and doubles whenever the resulting cw_min would
    undercut a higher-priority AC in ``ac_priority_context``.
    ``background_tcs`` describes saturated contenders outside the balanced
    pair (other ACs' stations and AP queues); when given, the closed-form
    two-TC solution is refined against the full fixed point.
    """
    if u_r <= 0:
        raise ValueError("target utilization must be positive")
    if n_uplink < 1:
        raise ValueError("need at least one uplink station")
    m1 = station_tc.m if ap_m is None else ap_m
    r1 = station_tc.retry_limit if ap_retry_limit is None else ap_retry_limit
    floor = max([1.0, *ac_priority_context])
    n_txop = max(1, min_n_txop)
    last = None
    while n_txop <= TXOP_CAP:
        tau0, tau1, _, p_c1 = solve_coupled_tau(station_tc, n_uplink, u_r, n_txop)
        try:
            cw1 = cwmin_from_tau(tau1, p_c1, m1, r1)
        except InfeasibleError as exc:
            raise InfeasibleError(
                f"no feasible plan: {exc} (last candidate n_txop={n_txop})"
            ) from exc
        if background_tcs:
            cw1 = _refine_cw(station_tc, n_uplink, u_r, max(cw1, 1.0),
                             m1, r1, n_txop, list(background_tcs))
        last = (cw1, n_txop)
        if cw1 >= floor and cw1 >= 1.0:
            return ApParameterPlan(
                aifsn=station_tc.aifsn,
                cw_min=cw1,
                n_txop=n_txop,
                rounded_cw_min=max(1, int(round(cw1))),
                predicted_utilization=u_r,
            )
        n_txop *= 2
    raise InfeasibleError(
        f"no feasible plan below TXOP cap; last candidate cw_min={last[0]:.2f} "
        f"at n_txop={last[1]}"
    )
