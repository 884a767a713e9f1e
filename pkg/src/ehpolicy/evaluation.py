"""Long-run average-reward evaluators for battery-limited policies.

Battery dynamics per slot: the arrival x lands first and anything above the
capacity c spills, then the policy consumes from what is stored,

    stored_after = min(stored_before + x, c)
    carried      = stored_after - consumed,    0 <= consumed <= stored_after.

Three evaluators of the long-run average reward per slot:

  * bernoulli_reward: exact geometric series for all-or-nothing arrivals.
    Starting full, the battery walks down the policy's reserve ladder until
    the next full charge, so the average reward is a weighted sum of the
    rewards along that ladder.
  * simulate: Monte Carlo over independent finite paths started empty, with
    one RNG stream per path spawned from the master seed (results are
    byte-identical for any worker count).
  * optimal_gain / policy_gain: relative value iteration on the capacity
    grid.  Arrivals are discretized onto the same grid, so post-decision
    transitions are exact index shifts and the transition matrix is never
    materialized; the expectation step is a correlation.
"""

from __future__ import annotations

import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.signal import fftconvolve

from .arrivals import ArrivalDistribution, BernoulliArrivals
from .policies import MaximinAwgnPolicy, MaximinPolicy, StationaryPolicy
from .rewards import RewardFunction, ladder_sum, step_down_cutoff

__all__ = [
    "SlotOutcome",
    "EvaluationResult",
    "DerivativeCheck",
    "AdmissibilityError",
    "NonConvergenceError",
    "step",
    "bernoulli_reward",
    "bernoulli_derivative_check",
    "simulate",
    "MdpModel",
    "build_mdp",
    "optimal_gain",
    "policy_gain",
]

_ADMISSIBILITY_SLACK = 1e-9


class AdmissibilityError(ValueError):
    """Requested consumption exceeds the stored energy beyond the slack."""


class NonConvergenceError(RuntimeError):
    """Value iteration hit its sweep cap before the span criterion."""

    def __init__(self, span: float, iterations: int):
        super().__init__(
            f"value iteration span {span!r} after {iterations} sweeps"
        )
        self.span = span
        self.iterations = iterations


@dataclass(frozen=True)
class SlotOutcome:
    """One slot of battery dynamics."""

    before: float  # stored energy entering the slot
    after: float   # stored energy once the arrival landed (capacity clipped)
    consumed: float
    carried: float  # stored energy handed to the next slot


def step(before: float, x: float, u: float, c: float) -> SlotOutcome:
    """Advance the battery one slot; clamps u to the stored energy.

    Raises AdmissibilityError when u exceeds the post-arrival level by more
    than the 1e-9 slack; smaller overshoot is clamped silently.
    """
    before, x, u, c = float(before), float(x), float(u), float(c)
    if not c > 0:
        raise ValueError("capacity c must be positive")
    if x < 0 or u < 0 or before < 0 or before > c * (1 + 1e-12):
        raise ValueError("negative energies or stored level above capacity")
    after = min(before + x, c)
    if u > after + _ADMISSIBILITY_SLACK:
        raise AdmissibilityError(
            f"consumption {u!r} exceeds stored energy {after!r}"
        )
    consumed = min(u, after)
    return SlotOutcome(before=before, after=after, consumed=consumed, carried=after - consumed)


@dataclass(frozen=True)
class EvaluationResult:
    """A long-run average-reward estimate and its accuracy tags.

    tolerance is the evaluator's own accuracy budget: the series tail bound,
    3 standard errors for Monte Carlo, or the span half-width plus a grid
    term for value iteration.
    """

    value: float
    method: str
    stderr: float | None = None
    residual: float | None = None
    tolerance: float | None = None

    def as_dict(self) -> dict:
        out = {"method": self.method, "value": self.value}
        for key in ("stderr", "residual", "tolerance"):
            item = getattr(self, key)
            if item is not None:
                out[key] = item
        return out


def bernoulli_reward(
    policy: StationaryPolicy,
    reward: RewardFunction,
    c: float,
    p: float,
    tol: float = 1e-15,
) -> EvaluationResult:
    """Exact average reward under all-or-nothing arrivals (c w.p. p, else 0).

    Sums p (1-p)**(i-1) * r(consumption at the i-th ladder level), walking
    the policy's reserve map down from a full battery.  Stops exactly once
    the reserve hits 0 (maximin policies get there in finitely many steps)
    or once the geometric tail bound r(c) (1-p)**i drops below tol.
    """
    c, p = float(c), float(p)
    if not c > 0:
        raise ValueError("c must be positive")
    if not 0.0 < p < 1.0:
        raise ValueError("p must lie in (0, 1)")
    top = float(reward.value(c))
    total = 0.0
    level = c
    survivor = 1.0  # (1-p)**(i-1)
    residual = 0.0
    for _ in range(1_000_000):
        u = min(float(policy.evaluate(level)), level)
        total += p * survivor * float(reward.value(u))
        level = max(level - u, 0.0)
        survivor *= 1.0 - p
        if level == 0.0:
            residual = 0.0
            break
        residual = survivor * top
        if residual <= tol:
            break
    else:
        raise NonConvergenceError(residual, 1_000_000)
    return EvaluationResult(
        value=total, method="bernoulli_series", residual=residual, tolerance=residual
    )


@dataclass(frozen=True)
class DerivativeCheck:
    """Finite-difference slope of the series value vs the analytic slope."""

    fd_slope: float | None
    analytic_slope: float
    skipped: bool
    nearest_kink: float | None
    h: float


def _maximin_for(reward: RewardFunction, p: float) -> StationaryPolicy:
    if reward.kind == "awgn":
        return MaximinAwgnPolicy(reward.gamma, p)
    return MaximinPolicy(reward, p)


def _policy_kink_levels(reward: RewardFunction, p: float, upto: float) -> list[float]:
    """Stored levels where the maximin policy's slope jumps, up to `upto`."""
    s = 1.0 / (1.0 - p)
    out: list[float] = []
    for k in range(1, 10_000):
        scale_k = s**k
        if not np.isfinite(scale_k):
            break
        x = float(ladder_sum(reward, s, step_down_cutoff(reward, scale_k)))
        if x > upto:
            break
        out.append(x)
    return out


def bernoulli_derivative_check(
    reward: RewardFunction,
    p: float,
    c: float,
    h: float = 1e-5,
) -> DerivativeCheck:
    """Compare the capacity-derivative of the maximin series value two ways.

    The series value of the maximin policy is differentiable in c away from
    the policy's kinks, with slope p * marginal(policy(c)).  A central
    difference with step h is returned alongside that slope.  When c is
    within h of a kink the comparison is skipped with a warning.
    """
    c, p, h = float(c), float(p), float(h)
    if not (c > 0 and 0 < p < 1 and 0 < h < c):
        raise ValueError("need c > 0, p in (0, 1), 0 < h < c")
    policy = _maximin_for(reward, p)
    analytic = p * float(reward.marginal(policy.evaluate(c)))
    kinks = _policy_kink_levels(reward, p, upto=c + 2.0 * h)
    nearest = min(kinks, key=lambda x: abs(x - c)) if kinks else None
    if nearest is not None and abs(nearest - c) <= h:
        warnings.warn(
            f"c={c!r} is within h of a policy kink at {nearest!r}; "
            "finite-difference comparison skipped",
            stacklevel=2,
        )
        return DerivativeCheck(
            fd_slope=None,
            analytic_slope=analytic,
            skipped=True,
            nearest_kink=nearest,
            h=h,
        )
    hi = bernoulli_reward(policy, reward, c + h, p)
    lo = bernoulli_reward(policy, reward, c - h, p)
    fd = (hi.value - lo.value) / (2.0 * h)
    return DerivativeCheck(
        fd_slope=fd,
        analytic_slope=analytic,
        skipped=False,
        nearest_kink=nearest,
        h=h,
    )


def _run_paths(
    seeds,
    policy: StationaryPolicy,
    arrivals: ArrivalDistribution,
    reward: RewardFunction,
    n: int,
) -> np.ndarray:
    k = len(seeds)
    c = arrivals.c
    draws = np.empty((n, k))
    for idx, seed in enumerate(seeds):
        rng = np.random.default_rng(seed)
        draws[:, idx] = arrivals.sample(rng, n)
    stored = np.zeros(k)
    totals = np.zeros(k)
    for t in range(n):
        lvl = np.minimum(stored + draws[t], c)
        u = np.minimum(policy.evaluate(lvl), lvl)
        totals += reward.value(u)
        stored = lvl - u
    return totals / n


def simulate(
    policy: StationaryPolicy,
    arrivals: ArrivalDistribution,
    reward: RewardFunction,
    n: int,
    paths: int,
    seed: int,
    workers: int = 1,
) -> EvaluationResult:
    """Monte Carlo estimate of the long-run average reward per slot.

    Runs `paths` independent n-slot trajectories started with an empty
    battery and averages their per-slot rewards.  Each path draws from its
    own generator spawned from the master seed, and the final reduction runs
    in path order, so the result is byte-identical for any `workers`.
    stderr is the sample standard error over paths.
    """
    n, paths, workers = int(n), int(paths), int(workers)
    if n < 1 or paths < 2 or workers < 1:
        raise ValueError("need n >= 1, paths >= 2, workers >= 1")
    seeds = np.random.SeedSequence(int(seed)).spawn(paths)
    bounds = np.linspace(0, paths, min(workers, paths) + 1).astype(int)
    chunks = [(int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]
    means = np.empty(paths)
    if len(chunks) == 1:
        means[:] = _run_paths(seeds, policy, arrivals, reward, n)
    else:
        with ThreadPoolExecutor(max_workers=len(chunks)) as pool:
            futures = {
                pool.submit(_run_paths, seeds[a:b], policy, arrivals, reward, n): (a, b)
                for a, b in chunks
            }
            for fut, (a, b) in futures.items():
                means[a:b] = fut.result()
    value = float(np.mean(means))
    stderr = float(np.std(means, ddof=1) / np.sqrt(paths))
    return EvaluationResult(
        value=value, method="monte_carlo", stderr=stderr, tolerance=3.0 * stderr
    )


@dataclass(frozen=True)
class MdpModel:
    """Battery chain restricted to the uniform capacity grid.

    States and actions are the grid levels i * c / cells; an action j <= i
    consumes grid[j] from state i, after which the discretized arrival k
    moves the chain to min(i - j + k, cells).  Everything stays on the grid,
    so transitions are exact index arithmetic.
    """

    grid: np.ndarray
    mass: np.ndarray
    action_rewards: np.ndarray
    c: float
    slope_bound: float = field(repr=False)  # marginal reward at 0, for error budgets

    @property
    def states(self) -> int:
        return len(self.grid)

    @property
    def cell(self) -> float:
        return self.grid[1] - self.grid[0]

    def transition_row(self, i: int, j: int) -> np.ndarray:
        """Explicit next-state distribution for state i, action j."""
        n = self.states
        if not 0 <= j <= i < n:
            raise ValueError("need 0 <= action <= state < states")
        row = np.zeros(n)
        dest = np.minimum((i - j) + np.arange(n), n - 1)
        np.add.at(row, dest, self.mass)
        return row


def build_mdp(reward: RewardFunction, arrivals: ArrivalDistribution, cells: int) -> MdpModel:
    """Discretize arrivals onto the capacity grid and tabulate rewards."""
    pmf = arrivals.discretize(cells)
    return MdpModel(
        grid=pmf.grid,
        mass=pmf.mass,
        action_rewards=np.asarray(reward.value(pmf.grid), dtype=float),
        c=arrivals.c,
        slope_bound=float(reward.marginal(0.0)),
    )


def _expected_next(v: np.ndarray, mass: np.ndarray) -> np.ndarray:
    """w[m] = E[v(min(m + arrival, top))] for every post-decision level m."""
    n = len(v)
    vext = np.concatenate([v, np.full(n - 1, v[-1])])
    if n < 128:
        return np.correlate(vext, mass, mode="valid")
    return fftconvolve(vext, mass[::-1], mode="valid")


def _greedy_actions(action_rewards: np.ndarray, w: np.ndarray) -> np.ndarray:
    n = len(w)
    best_val = np.full(n, -np.inf)
    best = np.zeros(n, dtype=np.int64)
    for j in range(n):
        cand = action_rewards[j] + w[: n - j]
        better = cand > best_val[j:]
        best_val[j:] = np.where(better, cand, best_val[j:])
        best[j:] = np.where(better, j, best[j:])
    return best


def optimal_gain(
    model: MdpModel, eps: float = 1e-9, max_iter: int = 10**6
) -> tuple[EvaluationResult, np.ndarray]:
    """Optimal average reward of the grid MDP by relative value iteration.

    Sweeps stop once the span of successive value differences drops below
    eps; the true grid gain then lies within span/2 of the reported value.
    Also returns the maximizing action index per state (smallest on ties).
    Raises NonConvergenceError at the sweep cap.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    n = model.states
    rewards = model.action_rewards
    v = np.zeros(n)
    span = np.inf
    for it in range(int(max_iter)):
        w = _expected_next(v, model.mass)
        new_v = np.full(n, -np.inf)
        for j in range(n):
            np.maximum(new_v[j:], rewards[j] + w[: n - j], out=new_v[j:])
        delta = new_v - v
        hi, lo = float(delta.max()), float(delta.min())
        span = hi - lo
        if span <= eps:
            result = EvaluationResult(
                value=0.5 * (hi + lo),
                method="value_iteration",
                residual=span,
                tolerance=0.5 * span + 0.5 * model.slope_bound * model.cell,
            )
            return result, _greedy_actions(rewards, w)
        v = new_v - new_v[0]  # reference state: empty battery
    raise NonConvergenceError(span, int(max_iter))


def policy_gain(
    model: MdpModel,
    policy: StationaryPolicy,
    eps: float = 1e-9,
    max_iter: int = 10**6,
) -> EvaluationResult:
    """Average reward of a fixed policy on the grid MDP.

    The policy's consumption at each grid state is snapped down to the
    nearest feasible grid action, then evaluated by the same span-criterion
    sweep as optimal_gain.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    n = model.states
    h = model.cell
    u = np.asarray(policy.evaluate(model.grid), dtype=float)
    actions = np.floor(u / h + 1e-9).astype(np.int64)
    actions = np.minimum(np.maximum(actions, 0), np.arange(n))
    post = np.arange(n) - actions
    slot_reward = model.action_rewards[actions]
    v = np.zeros(n)
    span = np.inf
    for it in range(int(max_iter)):
        w = _expected_next(v, model.mass)
        new_v = slot_reward + w[post]
        delta = new_v - v
        hi, lo = float(delta.max()), float(delta.min())
        span = hi - lo
        if span <= eps:
            return EvaluationResult(
                value=0.5 * (hi + lo),
                method="value_iteration",
                residual=span,
                tolerance=0.5 * span + model.slope_bound * h,
            )
        v = new_v - new_v[0]
    raise NonConvergenceError(span, int(max_iter))
