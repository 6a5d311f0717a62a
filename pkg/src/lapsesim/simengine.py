"""Slot-loop engine: sample, schedule, transmit, update, accumulate.

One trace is strictly sequential.  Independent seeds share no state, so
``run_traces`` advances any number of them in lockstep through vectorized
per-slot work; the per-seed results are bit-identical to running each seed
alone, which ``run_trace`` does as the single-seed case.

Within a slot the order is fixed: (a) the weight process advances (the
previously foreseen weight comes into force, a new next-slot weight is
drawn), (b) metrics are recorded on the pre-transmission state, (c) the
policy picks at most K users, (d) channels are realized for the scheduled
users only, (e) errors and ages advance.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import (
    STREAM_CHANNEL,
    STREAM_INCREMENT,
    STREAM_WEIGHT,
    SystemParams,
    substream,
)
from .policies import PolicyKind, index_evaluator, round_robin_set, top_k_stable
from .waterfill import StationaryPolicy

_CHANNEL_BUF = 8192


@dataclass(frozen=True)
class ThresholdRule:
    """Weight-dependent error thresholds: exceeding ``thresholds[w]`` in
    absolute value while weight ``w`` is in force counts as a violation."""

    thresholds: dict[float, float]

    def __post_init__(self):
        cleaned = {float(w): float(t) for w, t in self.thresholds.items()}
        if not cleaned:
            raise ValueError("threshold rule must not be empty")
        if any(t <= 0 for t in cleaned.values()):
            raise ValueError("thresholds must be positive")
        object.__setattr__(self, "thresholds", cleaned)

    def classes(self) -> tuple[float, ...]:
        return tuple(sorted(self.thresholds))


#: Thresholds used by the violation experiment: 15 while the weight is 1,
#: 5 while the weight is 9.
PAPER_THRESHOLDS = ThresholdRule({1.0: 15.0, 9.0: 5.0})


@dataclass
class MetricsAccumulator:
    """Running sums over one trace (or a merged set of traces)."""

    slots: int = 0
    lapse_sum: float = 0.0
    violation_counts: dict[float, int] = field(default_factory=dict)
    violation_opportunities: dict[float, int] = field(default_factory=dict)

    def __post_init__(self):
        if self.lapse_sum < 0:
            raise ValueError("lapse_sum must be nonnegative")
        for w, c in self.violation_counts.items():
            if c > self.violation_opportunities.get(w, 0):
                raise ValueError("violations exceed opportunities")


def merge_accumulators(accs) -> MetricsAccumulator:
    """Deterministic reduction of per-seed accumulators (summation)."""
    out = MetricsAccumulator()
    for acc in accs:
        out.slots += acc.slots
        out.lapse_sum += acc.lapse_sum
        for w, c in acc.violation_counts.items():
            out.violation_counts[w] = out.violation_counts.get(w, 0) + c
        for w, c in acc.violation_opportunities.items():
            out.violation_opportunities[w] = out.violation_opportunities.get(w, 0) + c
    return out


def avg_context_lapse(acc: MetricsAccumulator) -> float:
    """Time-average of the summed context-weighted squared error."""
    if acc.slots <= 0:
        raise ValueError("no slots recorded")
    return acc.lapse_sum / acc.slots


def violation_probability(acc: MetricsAccumulator) -> float:
    """Fraction of (user, slot) opportunities whose error exceeded the
    weight-dependent threshold."""
    total_opp = sum(acc.violation_opportunities.values())
    if total_opp <= 0:
        raise ValueError("no violation opportunities recorded")
    return sum(acc.violation_counts.values()) / total_opp


def _check_threshold_coverage(params: SystemParams, rule: ThresholdRule):
    known = set(rule.thresholds)
    for d in params.weight_dist:
        support = d.support()
        if support is None or any(float(v) not in known for v in support):
            raise ValueError(
                "threshold rule does not cover the weight distribution support"
            )


def run_traces(
    params: SystemParams,
    kind: PolicyKind,
    stationary: StationaryPolicy,
    slots: int,
    seeds,
    thresholds: ThresholdRule | None = None,
    chunk_slots: int = 4096,
) -> list[MetricsAccumulator]:
    """Run one trace per seed, advanced in lockstep; returns per-seed
    accumulators in seed order.

    Every stochastic process of trace ``seed`` draws from its own
    ``substream(seed, user, tag)``, and channel states are drawn only for
    scheduled users, so results do not depend on the batch composition or
    on ``chunk_slots``.
    """
    kind = PolicyKind(kind)
    if slots < 1:
        raise ValueError("slots must be >= 1")
    n = params.n_users
    k = min(params.n_channels, n)
    if stationary.pi.shape != (n,):
        raise ValueError("stationary policy length does not match params")
    if thresholds is not None:
        _check_threshold_coverage(params, thresholds)
    seeds = [int(s) for s in seeds]
    ns = len(seeds)
    if ns == 0:
        return []

    w_gen = [[substream(s, u, STREAM_WEIGHT) for u in range(n)] for s in seeds]
    a_gen = [[substream(s, u, STREAM_INCREMENT) for u in range(n)] for s in seeds]
    c_gen = [[substream(s, u, STREAM_CHANNEL) for u in range(n)] for s in seeds]

    evaluator = None
    if kind is not PolicyKind.ROUND_ROBIN:
        evaluator = index_evaluator(
            kind, p=params.p, pi=stationary.pi, w_mean=params.w_mean, a2=params.a2_moment
        )

    q = np.zeros((ns, n))
    aoi = np.zeros((ns, n), dtype=np.int64)
    rows = np.arange(ns)[:, None]
    p = params.p

    # weight in force at the first slot; the loop then always holds the
    # foreseen next-slot weight one draw ahead
    w_carry = np.empty((ns, n))
    for si in range(ns):
        for u in range(n):
            w_carry[si, u] = params.weight_dist[u].sample(w_gen[si][u])

    # channel uniforms, buffered per stream and consumed lazily
    c_buf = np.empty((ns, n, _CHANNEL_BUF))
    c_ptr = np.full((ns, n), _CHANNEL_BUF, dtype=np.int64)

    classes = thresholds.classes() if thresholds is not None else ()
    lapse_sums = np.zeros(ns)
    viol = {w: np.zeros(ns, dtype=np.int64) for w in classes}
    opp = {w: np.zeros(ns, dtype=np.int64) for w in classes}

    q_trace = np.empty((ns, chunk_slots, n))
    delivered = np.zeros((ns, n), dtype=bool)
    done = 0
    while done < slots:
        c = min(chunk_slots, slots - done)
        w_draws = np.empty((ns, c, n))
        a_draws = np.empty((ns, c, n))
        for si in range(ns):
            for u in range(n):
                w_draws[si, :, u] = params.weight_dist[u].sample(w_gen[si][u], c)
                a_draws[si, :, u] = params.increment_dist[u].sample(a_gen[si][u], c)

        for j in range(c):
            if thresholds is not None:
                q_trace[:, j, :] = q
            # lapse is summed slot by slot in a fixed per-trace order so the
            # result is independent of batching and chunk boundaries
            w_now_row = w_carry if j == 0 else w_draws[:, j - 1, :]
            lapse_sums += (w_now_row * q * q).sum(axis=1)
            if evaluator is None:
                sched = np.broadcast_to(round_robin_set(done + j, n, k), (ns, k))
            else:
                sched = top_k_stable(evaluator(q, aoi, w_draws[:, j, :]), k)

            ptr_g = c_ptr[rows, sched]
            if (ptr_g == _CHANNEL_BUF).any():
                for si, jj in np.argwhere(ptr_g == _CHANNEL_BUF):
                    u = sched[si, jj]
                    c_buf[si, u] = c_gen[si][u].random(_CHANNEL_BUF)
                    c_ptr[si, u] = 0
                ptr_g = c_ptr[rows, sched]
            ok = c_buf[rows, sched, ptr_g] < p[sched]
            c_ptr[rows, sched] = ptr_g + 1

            delivered[:] = False
            delivered[rows, sched] = ok
            q[delivered] = 0.0
            q += a_draws[:, j, :]
            aoi += 1
            aoi[delivered] = 1

        if thresholds is not None:
            w_now = np.concatenate([w_carry[:, None, :], w_draws[:, : c - 1, :]], axis=1)
            aq = np.abs(q_trace[:, :c, :])
            for wv in classes:
                mask = w_now == wv
                viol[wv] += (mask & (aq > thresholds.thresholds[wv])).sum(axis=(1, 2))
                opp[wv] += mask.sum(axis=(1, 2))
        w_carry = w_draws[:, c - 1, :].copy()
        done += c

    return [
        MetricsAccumulator(
            slots=slots,
            lapse_sum=float(lapse_sums[si]),
            violation_counts={w: int(viol[w][si]) for w in classes},
            violation_opportunities={w: int(opp[w][si]) for w in classes},
        )
        for si in range(ns)
    ]


def run_trace(
    params: SystemParams,
    kind: PolicyKind,
    stationary: StationaryPolicy,
    slots: int,
    seed: int,
    thresholds: ThresholdRule | None = None,
) -> MetricsAccumulator:
    """Single-seed trace; see :func:`run_traces`."""
    return run_traces(params, kind, stationary, slots, [seed], thresholds)[0]


# fixed results.csv schema; one row per (policy, seed)
CSV_COLUMNS = ("policy", "seed", "slots", "avg_context_lapse", "violation_probability", "bound")


def csv_row(kind: PolicyKind, seed: int, acc: MetricsAccumulator, bound: float) -> list:
    vp = ""
    if sum(acc.violation_opportunities.values()) > 0:
        vp = repr(violation_probability(acc))
    return [
        PolicyKind(kind).value,
        str(seed),
        str(acc.slots),
        repr(avg_context_lapse(acc)),
        vp,
        repr(float(bound)),
    ]
