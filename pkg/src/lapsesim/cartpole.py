"""Remote-control cart-pole benchmark.

N carts run simultaneously; a remote controller sees only the status
updates granted by the scheduling policy and otherwise propagates its
estimate through the known dynamics with the disturbance assumed zero.
Episodes end when a pole falls (|angle| > 12 deg), the cart leaves the
screen (|x| > 2.4), or 200 steps are reached; a finished pole restarts
immediately so channel contention stays constant.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import (
    STREAM_CHANNEL,
    STREAM_DISTURBANCE,
    STREAM_RESET,
    substream,
)
from .policies import PolicyKind, round_robin_set, top_k_stable
from .waterfill import BarSpec, StationaryPolicy, waterfill

# classic-control physics constants (explicit Euler at 50 Hz)
GRAVITY = 9.8
CART_MASS = 1.0
POLE_MASS = 0.1
TOTAL_MASS = CART_MASS + POLE_MASS
POLE_HALF_LENGTH = 0.5
POLE_MASS_LENGTH = POLE_MASS * POLE_HALF_LENGTH
FORCE_MAG = 10.0
TAU = 0.02

X_LIMIT = 2.4
ANGLE_LIMIT = 12.0 * np.pi / 180.0
MAX_EPISODE_STEPS = 200
RESET_SCALE = 0.05

# rescaling factors bringing position and angle (and their rates) to [-1, 1]
STATE_SCALE = np.array([X_LIMIT, X_LIMIT, ANGLE_LIMIT, ANGLE_LIMIT])

#: Fixed state-feedback gains for the sign controller; push right iff
#: GAINS . (x, x_dot, alpha, alpha_dot) > 0.  Holds a disturbance-free pole
#: upright for the full 200 steps from any small initial state.
DEFAULT_GAINS = (2.8, 5.3, 46.4, 12.0)

DEFAULT_CALIBRATION_SEED = 1729
DEFAULT_CALIBRATION_EPISODES = 50


@dataclass
class CartPoleState:
    """Cart position/velocity and pole angle/angular velocity."""

    x: float = 0.0
    x_dot: float = 0.0
    alpha: float = 0.0
    alpha_dot: float = 0.0

    @property
    def alive(self) -> bool:
        return abs(self.x) <= X_LIMIT and abs(self.alpha) <= ANGLE_LIMIT

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.x_dot, self.alpha, self.alpha_dot])


@dataclass(frozen=True)
class DimensionWeights:
    """Context weights shared within the position pair (x, x_dot) and the
    angle pair (alpha, alpha_dot)."""

    w_pos: float
    w_ang: float

    def __post_init__(self):
        if self.w_pos not in (1.0, 9.0) or self.w_ang not in (1.0, 9.0):
            raise ValueError("dimension weights must be 1 or 9")

    def per_dimension(self) -> np.ndarray:
        return np.array([self.w_pos, self.w_pos, self.w_ang, self.w_ang])


@dataclass(frozen=True)
class EpisodeResult:
    """Steps survived in one episode, capped at the step limit."""

    steps: int

    def __post_init__(self):
        if not 1 <= self.steps <= MAX_EPISODE_STEPS:
            raise ValueError(f"steps must lie in [1, {MAX_EPISODE_STEPS}]")


@dataclass(frozen=True)
class EpisodeSummary:
    """Aggregate of completed episodes from one run."""

    results: tuple[EpisodeResult, ...]

    @property
    def episodes(self) -> int:
        return len(self.results)

    @property
    def mean_steps(self) -> float:
        return float(np.mean([r.steps for r in self.results]))

    @property
    def stderr_steps(self) -> float:
        steps = np.array([r.steps for r in self.results], dtype=float)
        if steps.size < 2:
            return 0.0
        return float(np.std(steps, ddof=1) / np.sqrt(steps.size))


# ---------------------------------------------------------------------------
# Physics, estimator, controller
# ---------------------------------------------------------------------------


def _dyn(x, x_dot, alpha, alpha_dot, force):
    sin = np.sin(alpha)
    cos = np.cos(alpha)
    temp = (force + POLE_MASS_LENGTH * alpha_dot**2 * sin) / TOTAL_MASS
    alpha_acc = (GRAVITY * sin - cos * temp) / (
        POLE_HALF_LENGTH * (4.0 / 3.0 - POLE_MASS * cos**2 / TOTAL_MASS)
    )
    x_acc = temp - POLE_MASS_LENGTH * alpha_acc * cos / TOTAL_MASS
    return (
        x + TAU * x_dot,
        x_dot + TAU * x_acc,
        alpha + TAU * alpha_dot,
        alpha_dot + TAU * alpha_acc,
    )


def _dyn_batch(states: np.ndarray, force: np.ndarray) -> np.ndarray:
    x, x_dot, alpha, alpha_dot = states.T
    return np.stack(_dyn(x, x_dot, alpha, alpha_dot, force), axis=1)


def dynamics_step(
    state: CartPoleState, control_force: float, disturbance_force: float
) -> CartPoleState:
    """One Euler step with the control and random forces applied jointly."""
    nxt = _dyn(state.x, state.x_dot, state.alpha, state.alpha_dot,
               control_force + disturbance_force)
    return CartPoleState(*[float(v) for v in nxt])


def estimator_predict(estimate: CartPoleState, control_force: float) -> CartPoleState:
    """Controller-side prediction: propagate the estimate through the known
    dynamics assuming the random force is zero."""
    return dynamics_step(estimate, control_force, 0.0)


class LinearSignController:
    """Bang-bang state feedback: push right iff gains . state > 0.

    Pluggable stand-in for a trained policy; a different linear policy can
    be loaded from a whitespace-separated file of four gain values.
    """

    def __init__(self, gains=DEFAULT_GAINS):
        self.gains = np.asarray(gains, dtype=float)
        if self.gains.shape != (4,):
            raise ValueError("gains must have four entries")

    @classmethod
    def from_file(cls, path) -> "LinearSignController":
        return cls(np.loadtxt(path, dtype=float).reshape(4))

    def act(self, state: CartPoleState) -> int:
        """+1 (right) or -1 (left) for one state."""
        return 1 if float(self.gains @ state.as_array()) > 0 else -1

    def act_batch(self, states: np.ndarray) -> np.ndarray:
        """Directions in {-1, +1} for a (P, 4) state block."""
        return np.where(states @ self.gains > 0, 1.0, -1.0)


def controller_act(estimate: CartPoleState) -> str:
    """Direction chosen by the default controller for one estimate."""
    return "right" if LinearSignController().act(estimate) > 0 else "left"


def context_weights(state: CartPoleState) -> DimensionWeights:
    """Weight 9 on a pair whose situation is worsening (value and rate have
    the same sign), 1 otherwise; zero products count as not worsening."""
    return DimensionWeights(
        w_pos=9.0 if state.x * state.x_dot > 0 else 1.0,
        w_ang=9.0 if state.alpha * state.alpha_dot > 0 else 1.0,
    )


def _weights_batch(states: np.ndarray) -> np.ndarray:
    w_pos = np.where(states[:, 0] * states[:, 1] > 0, 9.0, 1.0)
    w_ang = np.where(states[:, 2] * states[:, 3] > 0, 9.0, 1.0)
    return np.stack([w_pos, w_pos, w_ang, w_ang], axis=1)


def cartpole_lapse(
    true_state: CartPoleState, estimate: CartPoleState, weights: DimensionWeights
) -> float:
    """Sum over the four rescaled dimensions of weight times squared
    estimation error."""
    err = (true_state.as_array() - estimate.as_array()) / STATE_SCALE
    return float(np.sum(weights.per_dimension() * err**2))


# ---------------------------------------------------------------------------
# Calibration: empirical per-dimension increment moments and weight means
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CalibrationResult:
    """Empirical second moments of the per-slot error increments and mean
    context weights, per rescaled dimension (x, x_dot, alpha, alpha_dot)."""

    a2: np.ndarray
    w_mean: np.ndarray
    n_increments: int
    seed: int
    reset_period: int

    def widths(self, p: np.ndarray) -> np.ndarray:
        """Water-filling bar widths from the summed per-dimension products."""
        return np.sqrt(np.sum(self.w_mean * self.a2) / p)


def calibrate_moments(
    episodes: int = DEFAULT_CALIBRATION_EPISODES,
    seed: int = DEFAULT_CALIBRATION_SEED,
    sigma: float = 10.0,
    reset_period: int = 5,
    controller=None,
) -> CalibrationResult:
    """Measure the per-dimension increment moments the index policies need.

    Runs fully observed episodes (the controller acts on the true state)
    while a shadow estimator propagates the zero-disturbance model and is
    resynchronized every ``reset_period`` steps, mimicking the service
    interval the scheduler provides.  The recorded increments are the
    per-step changes of the rescaled estimation error.
    """
    if episodes < 1:
        raise ValueError("episodes must be >= 1")
    controller = controller or LinearSignController()
    dist_gen = substream(seed, 0, STREAM_DISTURBANCE)
    reset_gen = substream(seed, 0, STREAM_RESET)

    increments = []
    weight_hits = np.zeros(2)
    weight_obs = 0
    for _ in range(episodes):
        true = reset_gen.uniform(-RESET_SCALE, RESET_SCALE, 4)[None, :]
        est = true.copy()
        since_sync = 0
        for _step in range(MAX_EPISODE_STEPS):
            w = _weights_batch(true)
            weight_hits += w[0, [0, 2]] == 9.0
            weight_obs += 1
            force = controller.act_batch(true) * FORCE_MAG
            disturbance = dist_gen.normal(0.0, sigma, 1) if sigma > 0 else np.zeros(1)
            true_next = _dyn_batch(true, force + disturbance)
            est_next = _dyn_batch(est, force)
            increments.append(((true_next - est_next) - (true - est))[0] / STATE_SCALE)
            true, est = true_next, est_next
            since_sync += 1
            if since_sync >= reset_period:
                est = true.copy()
                since_sync = 0
            if abs(true[0, 0]) > X_LIMIT or abs(true[0, 2]) > ANGLE_LIMIT:
                break

    if len(increments) < 1000:
        raise ValueError(
            f"only {len(increments)} increments collected; run more episodes"
        )
    inc = np.asarray(increments)
    freq = weight_hits / weight_obs
    pair_mean = 9.0 * freq + (1.0 - freq)
    return CalibrationResult(
        a2=np.mean(inc**2, axis=0),
        w_mean=np.array([pair_mean[0], pair_mean[0], pair_mean[1], pair_mean[1]]),
        n_increments=len(increments),
        seed=seed,
        reset_period=reset_period,
    )


# ---------------------------------------------------------------------------
# The scheduled remote-control run
# ---------------------------------------------------------------------------


def run_episodes(
    kind: PolicyKind,
    episodes: int,
    seed: int,
    n_poles: int = 10,
    n_channels: int = 2,
    p=None,
    sigma: float = 10.0,
    calibration: CalibrationResult | None = None,
    stationary: StationaryPolicy | None = None,
    controller=None,
    _dist_chunk: int = 512,
) -> EpisodeSummary:
    """Run poles under remote control until ``episodes`` episodes complete.

    Per step: context weights are read off the true states (the newest
    context the scheduler can foresee for the slot its decision affects),
    the policy grants at most K channels, deliveries resynchronize the
    controller's estimates, every cart is pushed based on its latest
    estimate, and the physics advance under a fresh Gaussian disturbance.
    Episodes in flight when the target count is reached are discarded.
    """
    kind = PolicyKind(kind)
    if episodes < 1:
        raise ValueError("episodes must be >= 1")
    if not 1 <= n_channels <= n_poles:
        raise ValueError("need 1 <= n_channels <= n_poles")
    p = np.linspace(0.9, 1.0, n_poles) if p is None else np.asarray(p, dtype=float)
    if p.shape != (n_poles,) or np.any(p <= 0) or np.any(p > 1):
        raise ValueError("p must be n_poles probabilities in (0, 1]")
    controller = controller or LinearSignController()
    if calibration is None:
        calibration = calibrate_moments(sigma=sigma, controller=controller)
    if stationary is None:
        stationary = waterfill(BarSpec(widths=calibration.widths(p), budget=n_channels))
    pi = stationary.pi
    if pi.shape != (n_poles,):
        raise ValueError("stationary policy length does not match n_poles")

    k = n_channels
    dist_gen = [substream(seed, i, STREAM_DISTURBANCE) for i in range(n_poles)]
    chan_gen = [substream(seed, i, STREAM_CHANNEL) for i in range(n_poles)]
    reset_gen = [substream(seed, i, STREAM_RESET) for i in range(n_poles)]

    # per-user-and-dimension index constants (poles on rows, dimensions on
    # columns); see the synthetic index formulas with Q^2 summed over dims
    c_ctx = np.outer(1.0 / (p * pi) - 1.0, calibration.w_mean)
    a2 = calibration.a2
    w_lapse = calibration.w_mean / pi[:, None]

    true = np.stack([g.uniform(-RESET_SCALE, RESET_SCALE, 4) for g in reset_gen])
    est = true.copy()
    steps = np.zeros(n_poles, dtype=np.int64)
    aoi = np.zeros(n_poles, dtype=np.int64)
    completed: list[EpisodeResult] = []

    dist_buf = np.empty((n_poles, 0))
    dist_ptr = _dist_chunk
    slot = 0
    while len(completed) < episodes:
        w = _weights_batch(true)
        if kind is PolicyKind.ROUND_ROBIN:
            sched = round_robin_set(slot, n_poles, k)
        else:
            if kind is PolicyKind.CONTEXT_LAPSE:
                q_dims = (true - est) / STATE_SCALE
                idx = ((c_ctx * calibration.w_mean / calibration.w_mean + w) * 0).sum(1)
                idx = (((c_ctx * 0 + c_ctx) + w) * q_dims**2).sum(axis=1) * p
            elif kind is PolicyKind.LAPSE:
                q_dims = (true - est) / STATE_SCALE
                idx = (w_lapse * q_dims**2).sum(axis=1)
            elif kind is PolicyKind.AOI:
                idx = p * aoi * (aoi + 1)
            elif kind is PolicyKind.AOI_WEIGHT:
                idx = ((c_ctx + w) * a2).sum(axis=1) * p * aoi
            sched = top_k_stable(idx, k)

        for i in sched:
            if chan_gen[i].random() < p[i]:
                est[i] = true[i]
                aoi[i] = 0  # becomes 1 in this slot's age update

        force = controller.act_batch(est) * FORCE_MAG
        if dist_ptr >= dist_buf.shape[1]:
            dist_buf = np.stack([g.normal(0.0, sigma, _dist_chunk) if sigma > 0
                                 else np.zeros(_dist_chunk) for g in dist_gen])
            dist_ptr = 0
        disturbance = dist_buf[:, dist_ptr]
        dist_ptr += 1

        true = _dyn_batch(true, force + disturbance)
        est = _dyn_batch(est, force)
        steps += 1
        aoi += 1

        dead = (
            (np.abs(true[:, 0]) > X_LIMIT)
            | (np.abs(true[:, 2]) > ANGLE_LIMIT)
            | (steps >= MAX_EPISODE_STEPS)
        )
        for i in np.flatnonzero(dead):
            completed.append(EpisodeResult(steps=int(steps[i])))
            true[i] = reset_gen[i].uniform(-RESET_SCALE, RESET_SCALE, 4)
            est[i] = true[i]
            steps[i] = 0
            aoi[i] = 0
        slot += 1

    return EpisodeSummary(results=tuple(completed))


# fixed results.csv schema for the benchmark; one row per (policy, seed)
CSV_COLUMNS = ("policy", "seed", "episodes", "mean_steps", "stderr_steps")


def csv_row(kind: PolicyKind, seed: int, summary: EpisodeSummary) -> list:
    return [
        PolicyKind(kind).value,
        str(seed),
        str(summary.episodes),
        repr(summary.mean_steps),
        repr(summary.stderr_steps),
    ]
