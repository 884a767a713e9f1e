"""Stationary consumption policies for a battery-limited harvesting node.

A stationary policy maps the post-arrival stored energy x to the energy
consumed this slot, with 0 <= policy(x) <= x.  Implemented kinds:

    greedy          consume everything: x
    fixed_fraction  consume p * x
    maximin_generic invert ladder_sum at scale 1/(1-p) by bisection
    maximin_awgn    the same policy in closed piecewise-linear form for the
                    awgn reward

The maximin policy maximizes the worst-case long-run average reward over all
arrival processes whose capped mean is p times the battery capacity; the worst
case is the two-point (0 or full-battery) arrival law, and against that law
the policy spreads each full charge over a ladder of decreasing consumptions.
Its defining property is ladder_sum(reward, 1/(1-p), policy(x)) == x.
"""

from __future__ import annotations

from abc import ABC, abstractmethod
from dataclasses import dataclass

import numpy as np

from .rewards import (
    RewardFunction,
    depletion_steps,
    ladder_sum,
    step_down_iter,
)

__all__ = [
    "StationaryPolicy",
    "GreedyPolicy",
    "FixedFractionPolicy",
    "MaximinPolicy",
    "MaximinAwgnPolicy",
    "Endpoint",
    "awgn_segment_index",
    "awgn_endpoints",
    "ergodic_levels",
    "greed_index",
    "normality_check",
    "NormalityReport",
]


def _prepare(x) -> tuple[np.ndarray, bool]:
    arr = np.asarray(x, dtype=float)
    if np.any(~np.isfinite(arr)) or np.any(arr < 0):
        raise ValueError("stored energy must be finite and nonnegative")
    return arr, arr.ndim == 0


def _check_fraction(p: float) -> float:
    p = float(p)
    if not 0.0 < p < 1.0:
        raise ValueError("p must lie in (0, 1)")
    return p


class StationaryPolicy(ABC):
    """Base class: vectorized evaluation plus the reserve map."""

    kind: str = ""
    p: float | None = None

    @abstractmethod
    def _evaluate(self, arr: np.ndarray) -> np.ndarray:
        """Consumption for a 1-d array of stored-energy levels."""

    def evaluate(self, x):
        """Energy consumed at stored level x; satisfies 0 <= result <= x."""
        arr, scalar = _prepare(x)
        out = self._evaluate(arr.ravel()).reshape(arr.shape)
        return float(out) if scalar else out

    __call__ = evaluate

    def reserve(self, x):
        """Energy carried to the next slot: x - evaluate(x), clipped at 0."""
        arr, scalar = _prepare(x)
        out = np.maximum(arr - self._evaluate(arr.ravel()).reshape(arr.shape), 0.0)
        return float(out) if scalar else out

    def reserve_iter(self, i: int, x):
        """i-fold composition of the reserve map."""
        if i < 0 or int(i) != i:
            raise ValueError("i must be a nonnegative integer")
        arr, scalar = _prepare(x)
        out = arr.copy()
        for _ in range(int(i)):
            out = np.maximum(out - self._evaluate(out.ravel()).reshape(out.shape), 0.0)
        return float(out) if scalar else out


class GreedyPolicy(StationaryPolicy):
    """Consume the whole battery every slot."""

    kind = "greedy"

    def _evaluate(self, arr: np.ndarray) -> np.ndarray:
        return arr.copy()


class FixedFractionPolicy(StationaryPolicy):
    """Consume a fixed fraction p of the stored energy."""

    kind = "fixed_fraction"

    def __init__(self, p: float):
        self.p = _check_fraction(p)

    def _evaluate(self, arr: np.ndarray) -> np.ndarray:
        return self.p * arr


class MaximinPolicy(StationaryPolicy):
    """Maximin policy for any regular reward, via ladder-sum inversion.

    evaluate(x) is the unique u in [0, x] with ladder_sum(reward, s, u) == x,
    s = 1/(1-p), found by bisection on the residual (ladder_sum(u) - x).
    ladder_sum(0) = 0 and ladder_sum(x) >= x bracket the root, and the slope
    is at least 1, so the residual bounds the error in u.
    """

    kind = "maximin_generic"

    def __init__(self, reward: RewardFunction, p: float, inversion_tol: float = 1e-12):
        self.reward = reward
        self.p = _check_fraction(p)
        self.scale = 1.0 / (1.0 - self.p)
        if not inversion_tol > 0:
            raise ValueError("inversion_tol must be positive")
        self.inversion_tol = float(inversion_tol)

    def _evaluate(self, arr: np.ndarray) -> np.ndarray:
        lo = np.zeros_like(arr)
        hi = arr.copy()
        mid = 0.5 * (lo + hi)
        for _ in range(200):
            resid = np.asarray(ladder_sum(self.reward, self.scale, mid), dtype=float) - arr
            if np.max(np.abs(resid), initial=0.0) <= self.inversion_tol:
                break
            above = resid >= 0.0
            hi = np.where(above, mid, hi)
            lo = np.where(above, lo, mid)
            mid = 0.5 * (lo + hi)
        else:
            worst = float(np.max(np.abs(resid)))
            if worst > np.max(1e-9 * (1.0 + arr), initial=0.0):
                raise RuntimeError(f"ladder-sum inversion stalled, residual {worst!r}")
        return np.clip(mid, 0.0, arr)


class MaximinAwgnPolicy(StationaryPolicy):
    """Closed-form maximin policy for the awgn reward.

    Piecewise linear:  evaluate(x) = (p (gamma x + m) / (1 - (1-p)**m) - 1) / gamma
    with m = awgn_segment_index(gamma, p, x).  Coincides with greedy for
    gamma x <= p/(1-p) and agrees with MaximinPolicy(awgn) everywhere.
    """

    kind = "maximin_awgn"

    def __init__(self, gamma: float, p: float):
        gamma = float(gamma)
        if not gamma > 0:
            raise ValueError("gamma must be positive")
        self.gamma = gamma
        self.p = _check_fraction(p)
        self.scale = 1.0 / (1.0 - self.p)
        self.reward = RewardFunction.awgn(gamma)

    def _evaluate(self, arr: np.ndarray) -> np.ndarray:
        m = _segment_index_1d(self.gamma, self.p, arr)
        val = (
            self.p * (self.gamma * arr + m) / (1.0 - (1.0 - self.p) ** m) - 1.0
        ) / self.gamma
        return np.clip(val, 0.0, arr)

    def segment_index(self, x):
        """Linear-segment index of x (1 on the greedy segment)."""
        return awgn_segment_index(self.gamma, self.p, x)


def _segment_index_1d(gamma: float, p: float, arr: np.ndarray) -> np.ndarray:
    gx = gamma * arr
    m = np.ones(arr.shape, dtype=np.int64)
    # least m >= 1 with (1 + p (gamma x + m)) (1-p)**m strictly below 1;
    # ties (exact segment endpoints) push the search one segment further,
    # where continuity makes both formulas agree
    pending = (1.0 + p * (gx + m)) * (1.0 - p) ** m >= 1.0
    while np.any(pending):
        m[pending] += 1
        still = (1.0 + p * (gx[pending] + m[pending])) * (1.0 - p) ** m[pending] >= 1.0
        pending[pending] = still
    return m


def awgn_segment_index(gamma: float, p: float, x):
    """Index of the linear segment of the closed-form awgn maximin policy."""
    gamma = float(gamma)
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    p = _check_fraction(p)
    arr, scalar = _prepare(x)
    m = _segment_index_1d(gamma, p, arr.ravel()).reshape(arr.shape)
    return int(m) if scalar else m


@dataclass(frozen=True)
class Endpoint:
    """Kink of the piecewise-linear awgn maximin policy: value y at level x."""

    k: int
    x: float
    y: float


def awgn_endpoints(gamma: float, p: float, k_max: int) -> list[Endpoint]:
    """Segment endpoints E_0..E_k_max of the awgn maximin policy.

    E_k has stored level ((1-p)**-k - 1) / p - k and consumption
    (1-p)**-k - 1, both divided by gamma; E_0 is the origin.
    """
    gamma = float(gamma)
    if not gamma > 0:
        raise ValueError("gamma must be positive")
    p = _check_fraction(p)
    if k_max < 0:
        raise ValueError("k_max must be nonnegative")
    out = []
    for k in range(int(k_max) + 1):
        g = (1.0 - p) ** (-k)
        out.append(Endpoint(k=k, x=((g - 1.0) / p - k) / gamma, y=(g - 1.0) / gamma))
    return out


def ergodic_levels(policy: StationaryPolicy, c: float) -> np.ndarray:
    """Battery levels a maximin policy cycles through under 0-or-full arrivals.

    Starting full at c, repeated reserves visit a strictly decreasing ladder
    of levels ending at exactly 0 (then a full charge resets to c).  Levels
    are generated through the ladder identity
    reserve_iter(i, c) == ladder_sum(step_down_iter(i, evaluate(c))), which
    pins the final level to 0.0 exactly.
    """
    if not isinstance(policy, (MaximinPolicy, MaximinAwgnPolicy)):
        raise ValueError("ergodic levels are defined for the maximin policies")
    c = float(c)
    if not c > 0:
        raise ValueError("c must be positive")
    rw, s = policy.reward, policy.scale
    head = policy.evaluate(c)
    steps = depletion_steps(rw, s, head)
    levels = [c]
    for i in range(1, steps + 1):
        levels.append(float(ladder_sum(rw, s, step_down_iter(rw, s, i, head))))
    return np.asarray(levels)


def greed_index(
    policy: StationaryPolicy,
    reward: RewardFunction,
    c: float,
    grid_points: int = 10001,
) -> float:
    """How steeply the policy front-loads consumption, in [0, 1).

    One minus the smallest ratio marginal(policy(x)) / marginal(policy(reserve(x)))
    over x in [0, c], approximated on a uniform grid.  0 means perfectly
    smoothed consecutive consumptions; greedy scores 1 - marginal(c)/marginal(0).
    The maximin policy at mean-to-capacity ratio p scores at most p.
    """
    c = float(c)
    if not c > 0:
        raise ValueError("c must be positive")
    if grid_points < 2:
        raise ValueError("grid_points must be at least 2")
    x = np.linspace(0.0, c, int(grid_points))
    first = policy.evaluate(x)
    second = policy.evaluate(np.maximum(x - first, 0.0))
    ratio = np.asarray(reward.marginal(first), dtype=float) / np.asarray(
        reward.marginal(second), dtype=float
    )
    return float(1.0 - ratio.min())


@dataclass(frozen=True)
class NormalityReport:
    """Grid audit of a policy's shape on [0, c]."""

    nondecreasing: bool
    concave: bool
    max_decrease: float
    max_convexity: float

    @property
    def passed(self) -> bool:
        return self.nondecreasing and self.concave


def normality_check(
    policy: StationaryPolicy,
    c: float,
    grid_points: int = 10001,
    slack: float = 1e-9,
) -> NormalityReport:
    """Check that consumption is nondecreasing and concave on [0, c].

    Uses first and second differences on a uniform grid with an absolute
    slack for float noise.
    """
    c = float(c)
    if not c > 0:
        raise ValueError("c must be positive")
    x = np.linspace(0.0, c, int(grid_points))
    u = policy.evaluate(x)
    d1 = np.diff(u)
    d2 = u[2:] - 2.0 * u[1:-1] + u[:-2]
    max_decrease = float(max(-d1.min(), 0.0)) if d1.size else 0.0
    max_convexity = float(max(d2.max(), 0.0)) if d2.size else 0.0
    return NormalityReport(
        nondecreasing=bool(max_decrease <= slack),
        concave=bool(max_convexity <= slack),
        max_decrease=max_decrease,
        max_convexity=max_convexity,
    )
