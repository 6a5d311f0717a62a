"""Domain types and per-slot stochastic state transitions.

Everything here is a pure value-level operation shared by the policies,
the slot-loop engine, and the cart-pole benchmark.  Randomness is always
drawn from an explicitly passed generator; see :func:`substream` for the
deterministic substream scheme.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# Stream tags for substream derivation, one per stochastic process.
STREAM_WEIGHT = 0
STREAM_INCREMENT = 1
STREAM_CHANNEL = 2
STREAM_DISTURBANCE = 3
STREAM_RESET = 4


def substream(seed: int, user: int = 0, tag: int = 0) -> np.random.Generator:
    """Deterministic per-(seed, user, process) random substream.

    Uses the counter-based Philox4x64 bit generator keyed through
    ``SeedSequence(seed, spawn_key=(user, tag))``, so independent streams
    never overlap and every draw is reproducible from the 64-bit seed alone.
    """
    if seed < 0:
        raise ValueError("seed must be a nonnegative 64-bit integer")
    ss = np.random.SeedSequence(seed, spawn_key=(user, tag))
    return np.random.Generator(np.random.Philox(ss))


# ---------------------------------------------------------------------------
# Distribution specs.  Only the three families used by the experiments are
# supported: Gaussian(sigma), two-point, point mass.
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Gaussian:
    """Zero-mean Gaussian with standard deviation ``sigma``.

    Sampling uses the generator's ziggurat standard-normal scaled by sigma.
    """

    sigma: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError("sigma must be positive")

    @property
    def mean(self) -> float:
        return 0.0

    @property
    def second_moment(self) -> float:
        return self.sigma**2

    @property
    def positive_support(self) -> bool:
        return False

    def support(self):
        return None  # unbounded

    def sample(self, rng: np.random.Generator, size=None):
        return rng.standard_normal(size) * self.sigma


@dataclass(frozen=True)
class TwoPoint:
    """Two-point distribution: value ``values[k]`` with probability ``probs[k]``.

    Sampled by one uniform draw compared against ``probs[0]``.
    """

    values: tuple[float, float]
    probs: tuple[float, float]

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        object.__setattr__(self, "probs", tuple(float(p) for p in self.probs))
        if len(self.values) != 2 or len(self.probs) != 2:
            raise ValueError("two-point spec needs exactly two values and two probs")
        if min(self.probs) < 0 or abs(sum(self.probs) - 1.0) > 1e-12:
            raise ValueError("probs must be nonnegative and sum to 1")

    @property
    def mean(self) -> float:
        return self.probs[0] * self.values[0] + self.probs[1] * self.values[1]

    @property
    def second_moment(self) -> float:
        return self.probs[0] * self.values[0] ** 2 + self.probs[1] * self.values[1] ** 2

    @property
    def positive_support(self) -> bool:
        return min(self.values) > 0

    def support(self):
        return self.values

    def sample(self, rng: np.random.Generator, size=None):
        u = rng.random(size)
        return np.where(u < self.probs[0], self.values[0], self.values[1])


@dataclass(frozen=True)
class PointMass:
    """Degenerate distribution at ``value``.  Consumes no random draws."""

    value: float

    @property
    def mean(self) -> float:
        return self.value

    @property
    def second_moment(self) -> float:
        return self.value**2

    @property
    def positive_support(self) -> bool:
        return self.value > 0

    def support(self):
        return (self.value,)

    def sample(self, rng: np.random.Generator, size=None):
        if size is None:
            return float(self.value)
        return np.full(size, self.value, dtype=float)


Distribution = Gaussian | TwoPoint | PointMass


def check_increment_dist(dist: Distribution) -> Distribution:
    """Increment processes must be zero-mean with finite variance."""
    if abs(dist.mean) > 1e-12:
        raise ValueError(f"increment distribution must have zero mean, got {dist.mean}")
    return dist


def check_weight_dist(dist: Distribution) -> Distribution:
    """Weight processes must have strictly positive support."""
    if not dist.positive_support:
        raise ValueError("weight distribution must have strictly positive support")
    return dist


def sample_increment(dist: Distribution, rng: np.random.Generator, size=None):
    """Draw an error increment from a zero-mean distribution spec."""
    check_increment_dist(dist)
    return dist.sample(rng, size)


def sample_weight(dist: Distribution, rng: np.random.Generator, size=None):
    """Draw a context weight from a positive-support distribution spec."""
    check_weight_dist(dist)
    return dist.sample(rng, size)


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------


@dataclass
class UserState:
    """One user's evolving state: error, age, and the weight pair.

    ``weight_next`` is the one-slot-ahead weight the scheduler is allowed
    to see; it becomes ``weight_now`` at the next slot.
    """

    q: float = 0.0
    aoi: int = 0
    weight_now: float = 1.0
    weight_next: float = 1.0

    def __post_init__(self):
        if self.aoi < 0:
            raise ValueError("aoi must be nonnegative")
        if not (self.weight_now > 0 and self.weight_next > 0):
            raise ValueError("weights must be positive")


@dataclass(frozen=True)
class SystemParams:
    """Static parameters of the multi-user update system.

    ``increment_dist`` / ``weight_dist`` accept either a single spec shared
    by all users or a sequence of one spec per user.  The per-user moment
    arrays ``a2_moment`` (E[A_i^2]) and ``w_mean`` (E[w_i]) are derived from
    the closed forms of the configured distributions at construction.
    """

    n_users: int
    n_channels: int
    p: np.ndarray
    increment_dist: tuple
    weight_dist: tuple
    a2_moment: np.ndarray = field(init=False)
    w_mean: np.ndarray = field(init=False)

    def __post_init__(self):
        n = self.n_users
        if n < 1:
            raise ValueError("n_users must be >= 1")
        if not 1 <= self.n_channels <= n:
            raise ValueError("n_channels must satisfy 1 <= K <= N")
        p = np.asarray(self.p, dtype=float)
        if p.shape != (n,):
            raise ValueError(f"p must have length {n}")
        if np.any(p <= 0) or np.any(p > 1):
            raise ValueError("every p_i must lie in (0, 1]")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "increment_dist", _per_user(self.increment_dist, n))
        object.__setattr__(self, "weight_dist", _per_user(self.weight_dist, n))
        for d in self.increment_dist:
            check_increment_dist(d)
        for d in self.weight_dist:
            check_weight_dist(d)
        object.__setattr__(
            self, "a2_moment", np.array([d.second_moment for d in self.increment_dist])
        )
        object.__setattr__(self, "w_mean", np.array([d.mean for d in self.weight_dist]))


def _per_user(dist, n):
    if isinstance(dist, (Gaussian, TwoPoint, PointMass)):
        return (dist,) * n
    dists = tuple(dist)
    if len(dists) != n:
        raise ValueError(f"need one distribution per user ({n}), got {len(dists)}")
    return dists


@dataclass(frozen=True)
class ScheduleDecision:
    """One slot's scheduling outcome.

    ``scheduled`` lists the users granted a channel, ``channel_ok`` the
    realized channel state per scheduled user, and ``delivered`` the
    per-user success indicator (scheduled AND channel good).
    """

    scheduled: tuple[int, ...]
    channel_ok: dict[int, bool] = field(default_factory=dict)
    delivered: tuple[bool, ...] = ()

    def __post_init__(self):
        if len(set(self.scheduled)) != len(self.scheduled):
            raise ValueError("scheduled set contains duplicates")
        for i, ok in enumerate(self.delivered):
            if ok and (i not in self.scheduled or not self.channel_ok.get(i, False)):
                raise ValueError(f"delivered[{i}] set without schedule + good channel")


# ---------------------------------------------------------------------------
# Per-slot transitions
# ---------------------------------------------------------------------------


def step_error(q: float, a: float, delivered: bool) -> float:
    """Error recursion: a delivery empties the retained error, then the
    fresh increment lands."""
    return (0.0 if delivered else q) + a


def step_aoi(aoi: int, delivered: bool) -> int:
    """Age recursion under the zero-delay model: a packet delivered in
    slot t was generated in slot t, so its age at slot t+1 is 1."""
    return 1 if delivered else aoi + 1


def context_lapse(weight: float, q: float) -> float:
    """Context-weighted squared error, the per-user per-slot metric."""
    if not weight > 0:
        raise ValueError("weight must be positive")
    return weight * q * q
