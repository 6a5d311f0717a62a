"""Stationary scheduling probabilities via capped water-filling.

Minimizes sum_i d_i^2 / pi_i over the box-and-budget set
{0 < pi_i <= 1, sum pi_i <= K}.  The geometry: pour volume K into bars of
width d_i and unit capacity; the volume landing in bar i is pi_i.  At the
optimum every uncapped bar shares a common ratio d_i / pi_i (the water
level) and the budget is tight.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import SystemParams


@dataclass(frozen=True)
class BarSpec:
    """Bar geometry for the filling problem: per-user widths and the total
    water volume (channel budget)."""

    widths: np.ndarray
    budget: float

    def __post_init__(self):
        w = np.asarray(self.widths, dtype=float)
        if w.ndim != 1 or w.size == 0:
            raise ValueError("widths must be a nonempty 1-D sequence")
        if np.any(w <= 0):
            raise ValueError("every width must be positive")
        if not self.budget > 0:
            raise ValueError("budget must be positive")
        object.__setattr__(self, "widths", w)
        object.__setattr__(self, "budget", float(self.budget))


@dataclass(frozen=True)
class StationaryPolicy:
    """Per-user scheduling probabilities of a randomized stationary policy."""

    pi: np.ndarray

    def __post_init__(self):
        pi = np.asarray(self.pi, dtype=float)
        if pi.ndim != 1 or pi.size == 0:
            raise ValueError("pi must be a nonempty 1-D sequence")
        if np.any(pi <= 0) or np.any(pi > 1 + 1e-12):
            raise ValueError("every pi_i must lie in (0, 1]")
        object.__setattr__(self, "pi", np.minimum(pi, 1.0))


def closed_form_k1(widths) -> StationaryPolicy:
    """Single-channel solution: probabilities proportional to the widths."""
    w = np.asarray(widths, dtype=float)
    if w.size == 0:
        raise ValueError("widths must be nonempty")
    if np.any(w <= 0):
        raise ValueError("every width must be positive")
    return StationaryPolicy(pi=w / w.sum())


def waterfill(spec: BarSpec) -> StationaryPolicy:
    """Exact solution of the capped filling problem.

    Iterative cap method: solve the proportional split on the uncapped set,
    move every user whose share exceeds 1 into the cap set, repeat.  Each
    capping step is justified against the true optimum (a proportional
    share > 1 implies the bar is full at the optimum), so the method is
    exact and terminates in at most N rounds.
    """
    d = spec.widths
    n = d.size
    if spec.budget >= n:
        return StationaryPolicy(pi=np.ones(n))
    capped = np.zeros(n, dtype=bool)
    pi = np.empty(n)
    while True:
        remaining = spec.budget - capped.sum()
        free = ~capped
        pi[free] = d[free] * (remaining / d[free].sum())
        pi[capped] = 1.0
        violators = free & (pi > 1.0)
        if not violators.any():
            return StationaryPolicy(pi=pi)
        capped |= violators


def objective(spec: BarSpec, policy: StationaryPolicy) -> float:
    """Value of sum_i d_i^2 / pi_i for a candidate policy."""
    return float(np.sum(spec.widths**2 / policy.pi))


def water_level(spec: BarSpec, policy: StationaryPolicy) -> float:
    """Common d_i/pi_i ratio of the uncapped users; 0.0 if every bar is full."""
    uncapped = policy.pi < 1.0
    if not uncapped.any():
        return 0.0
    return float(np.max(spec.widths[uncapped] / policy.pi[uncapped]))


def bound_objective(params: SystemParams, policy: StationaryPolicy) -> float:
    """Guaranteed ceiling on the long-run average context-weighted squared
    error under the drift index policy tuned by ``policy``:
    sum_i E[w_i] * E[A_i^2] / (p_i * pi_i)."""
    pi = policy.pi
    if pi.shape != params.p.shape:
        raise ValueError("policy length does not match params")
    if np.any(pi <= 0):
        raise ValueError("every pi_i must be positive")
    return float(np.sum(params.w_mean * params.a2_moment / (params.p * pi)))


def widths_from_params(params: SystemParams) -> np.ndarray:
    """Bar widths d_i = sqrt(E[w_i] E[A_i^2] / p_i) for the bound minimizer."""
    return np.sqrt(params.w_mean * params.a2_moment / params.p)


def stationary_for_params(params: SystemParams) -> StationaryPolicy:
    """Bound-minimizing stationary policy for a configured system."""
    return waterfill(BarSpec(widths=widths_from_params(params), budget=params.n_channels))
