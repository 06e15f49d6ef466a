"""Fast saturated-contention kernel for model validation sweeps.

Simulates only the access process (AIFS offsets, BEB stages, collisions);
busy periods collapse to a single event, so slot counts here are backoff
slots. Used where millions of slots are needed and frame/traffic detail
is irrelevant.
"""

from __future__ import annotations

import math

import numpy as np
from numba import njit


@njit(cache=True)
def _draw(cw_min, attempt, m, fractional):
    e = attempt - 1
    if e > m:
        e = m
    w = (2.0 ** e) * (cw_min + 1.0) - 1.0
    if fractional:
        lo = math.floor(w)
        wi = int(lo)
        if np.random.random() < w - lo:
            wi += 1
    else:
        wi = int(round(w))
    if wi <= 0:
        return 0
    return np.random.randint(0, wi + 1)


@njit(cache=True)
def _contend(d, cw_min, m, retry, fractional, n_slots, seed):
    np.random.seed(seed)
    n = d.size
    counter = np.empty(n, dtype=np.int64)
    attempt = np.ones(n, dtype=np.int64)
    for e in range(n):
        counter[e] = _draw(cw_min[e], 1, m[e], fractional[e])
    successes = np.zeros(n, dtype=np.int64)
    attempts = np.zeros(n, dtype=np.int64)
    eligible = np.zeros(n, dtype=np.int64)
    collisions = 0
    slots = 0
    while slots < n_slots:
        kmin = 1 << 60
        for e in range(n):
            f = d[e] + counter[e] + 1
            if f < kmin:
                kmin = f
        ntx = 0
        for e in range(n):
            if d[e] + counter[e] + 1 == kmin:
                ntx += 1
        slots += kmin
        for e in range(n):
            el = kmin - d[e]
            if el > 0:
                eligible[e] += el
            if d[e] + counter[e] + 1 == kmin:
                attempts[e] += 1
                if ntx == 1:
                    successes[e] += 1
                    attempt[e] = 1
                else:
                    attempt[e] += 1
                    if attempt[e] > retry[e]:
                        attempt[e] = 1  # frame dropped; saturated queue refills
                counter[e] = _draw(cw_min[e], attempt[e], m[e], fractional[e])
            else:
                if el > 0:
                    counter[e] -= el
        if ntx >= 2:
            collisions += 1
    return successes, attempts, eligible, collisions, slots


def saturated_contention(entities, n_slots: int, seed: int):
    """Run the access-only contention kernel.

    ``entities`` is a sequence of dicts with keys ``aifsn``, ``cw_min``,
    ``m``, ``retry_limit`` and optional ``fractional``. Returns per-entity
    arrays (successes, attempts, eligible_slots) plus collision and slot
    totals.
    """
    aifsn = np.array([e["aifsn"] for e in entities], dtype=np.int64)
    d = aifsn - aifsn.min()
    cw = np.array([float(e["cw_min"]) for e in entities])
    m = np.array([e["m"] for e in entities], dtype=np.int64)
    retry = np.array([e["retry_limit"] for e in entities], dtype=np.int64)
    frac = np.array([bool(e.get("fractional", False)) for e in entities])
    succ, att, elig, coll, slots = _contend(d, cw, m, retry, frac,
                                            n_slots, seed)
    return {
        "successes": succ,
        "attempts": att,
        "eligible_slots": elig,
        "collisions": coll,
        "slots": slots,
    }


def measured_tau(result) -> np.ndarray:
    elig = result["eligible_slots"].astype(float)
    return result["attempts"] / np.maximum(elig, 1.0)


def measured_success_share(result) -> np.ndarray:
    succ = result["successes"].astype(float)
    total = succ.sum()
    return succ / total if total > 0 else succ
