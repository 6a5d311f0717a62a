"""The five scheduling policies behind one interface.

Index policies rank users by a per-user priority and grant the K largest;
ties break toward the lowest user index for reproducibility.  The
vectorized kernels broadcast over leading axes so the slot-loop engine can
evaluate many traces at once.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .core import ScheduleDecision, SystemParams, UserState
from .waterfill import StationaryPolicy


class PolicyKind(str, Enum):
    ROUND_ROBIN = "round_robin"
    AOI = "aoi_index"
    AOI_WEIGHT = "aoi_weight_index"
    LAPSE = "lapse_index"
    CONTEXT_LAPSE = "context_lapse_index"


POLICY_NAMES = tuple(k.value for k in PolicyKind)


@dataclass(frozen=True)
class PolicyInput:
    """Everything a policy may look at in one slot."""

    users: tuple[UserState, ...]
    params: SystemParams
    stationary: StationaryPolicy
    slot: int = 0

    def __post_init__(self):
        object.__setattr__(self, "users", tuple(self.users))
        if len(self.users) != self.params.n_users:
            raise ValueError("users length does not match params.n_users")
        if self.stationary.pi.shape != (self.params.n_users,):
            raise ValueError("stationary policy length does not match params")


# ---------------------------------------------------------------------------
# Index formulas.  The array kernels are the single source of truth; the
# scalar operations below delegate to them.
# ---------------------------------------------------------------------------


def _ctx_index(q_sq, w_next, p, pi, w_mean):
    # (E[w](1/(p pi) - 1) + w(t+1)) * p * Q^2
    return (w_mean * (1.0 / (p * pi) - 1.0) + w_next) * p * q_sq


def index_evaluator(kind: PolicyKind, *, p, pi, w_mean, a2):
    """Build ``f(q, aoi, w_next) -> priorities`` for an index policy.

    Per-user constants are folded in once so the slot loop pays only for
    the state-dependent arithmetic.  All arguments broadcast over leading
    axes, so one evaluator serves any number of parallel traces.
    """
    kind = PolicyKind(kind)
    if kind in (PolicyKind.CONTEXT_LAPSE, PolicyKind.AOI_WEIGHT, PolicyKind.LAPSE):
        if np.any(pi <= 0):
            raise ValueError(f"{kind.value} requires every pi_i > 0")
    if kind is PolicyKind.CONTEXT_LAPSE:
        c = w_mean * (1.0 / (p * pi) - 1.0)
        return lambda q, aoi, w_next: (c + w_next) * p * np.square(q)
    if kind is PolicyKind.LAPSE:
        c = w_mean / pi
        return lambda q, aoi, w_next: c * np.square(q)
    if kind is PolicyKind.AOI:
        return lambda q, aoi, w_next: p * (aoi * (aoi + 1))
    if kind is PolicyKind.AOI_WEIGHT:
        c = w_mean * (1.0 / (p * pi) - 1.0)
        ca = p * a2
        return lambda q, aoi, w_next: (c + w_next) * ca * aoi
    raise ValueError(f"{kind} is not an index policy")


def policy_indices(kind: PolicyKind, *, q, aoi, w_next, p, pi, w_mean, a2) -> np.ndarray:
    """Per-user priorities for an index policy; broadcasts over leading axes.

    ``q``, ``aoi``, ``w_next`` are state arrays; ``p``, ``pi``, ``w_mean``,
    ``a2`` are per-user parameter vectors.
    """
    fn = index_evaluator(kind, p=np.asarray(p, float), pi=np.asarray(pi, float),
                         w_mean=np.asarray(w_mean, float), a2=np.asarray(a2, float))
    return fn(np.asarray(q, float), np.asarray(aoi), np.asarray(w_next, float))


def index_context_lapse(user: UserState, p: float, pi: float, w_mean: float) -> float:
    """Drift-plus-penalty priority using the realized error and the
    foreseen next-slot weight."""
    if not p * pi > 0:
        raise ValueError("p * pi must be positive")
    return float(_ctx_index(user.q**2, user.weight_next, p, pi, w_mean))


def index_aoi(user: UserState, p: float) -> float:
    """Age-based priority p * aoi * (aoi + 1)."""
    return float(p * user.aoi * (user.aoi + 1))


def index_aoi_weight(user: UserState, p: float, pi: float, w_mean: float, a2: float) -> float:
    """Lapse-free variant: the context index with Q^2 replaced by its
    expected value aoi * E[A^2]."""
    if not p * pi > 0:
        raise ValueError("p * pi must be positive")
    if not w_mean > 0:
        raise ValueError("w_mean must be positive")
    return float(_ctx_index(user.aoi * a2, user.weight_next, p, pi, w_mean))


def index_lapse(user: UserState, pi: float, w_mean: float) -> float:
    """Weight-blind priority E[w] / pi * Q^2."""
    if not pi > 0:
        raise ValueError("pi must be positive")
    return float(w_mean / pi * user.q**2)


def index_drift_theta(user: UserState, p: float, theta: float) -> float:
    """Raw drift-minimizing priority (theta + w(t+1)) * p * Q^2 for a fixed
    per-user constant theta."""
    return float((theta + user.weight_next) * p * user.q**2)


def theta_from_stationary(w_mean, p, pi):
    """The constant theta_i = E[w_i](1 - p_i pi_i) / (p_i pi_i) that makes
    the raw drift priority coincide with the context index."""
    return w_mean * (1.0 - p * pi) / (p * pi)


# ---------------------------------------------------------------------------
# Selection
# ---------------------------------------------------------------------------


def top_k_stable(values: np.ndarray, k: int) -> np.ndarray:
    """Indices of the k largest entries along the last axis, ties broken
    toward the lowest index (stable sort on the negated values)."""
    order = np.argsort(-values, axis=-1, kind="stable")
    return order[..., :k]


def round_robin_set(slot: int, n_users: int, n_channels: int) -> np.ndarray:
    """Contiguous block of K users advancing by K each slot."""
    return (slot * n_channels + np.arange(n_channels)) % n_users


def select(kind: PolicyKind, inp: PolicyInput) -> ScheduleDecision:
    """Scheduled set for one slot (channel outcomes left unrealized)."""
    kind = PolicyKind(kind)
    params = inp.params
    k = min(params.n_channels, params.n_users)
    if kind is PolicyKind.ROUND_ROBIN:
        chosen = round_robin_set(inp.slot, params.n_users, k)
    else:
        idx = policy_indices(
            kind,
            q=np.array([u.q for u in inp.users]),
            aoi=np.array([u.aoi for u in inp.users]),
            w_next=np.array([u.weight_next for u in inp.users]),
            p=params.p,
            pi=inp.stationary.pi,
            w_mean=params.w_mean,
            a2=params.a2_moment,
        )
        chosen = top_k_stable(idx, k)
    return ScheduleDecision(scheduled=tuple(int(i) for i in chosen))
