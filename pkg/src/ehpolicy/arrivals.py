"""Arrival-energy distributions as seen by a battery of capacity c.

Energy arriving in one slot is an i.i.d. draw X >= 0; the battery can absorb
at most c, so all evaluators only ever see the capped arrival min(X, c).  Each
family here stores the capped law directly: a continuous part on [0, c) plus
an atom at c holding the probability that the raw draw meets or exceeds the
capacity.

    bernoulli     mass 1-p at 0 and p at c (the worst case at a given mean)
    uniform       Uniform[0, b] capped at c
    exponential   Exponential(rate) capped at c

Two summary ratios recur everywhere: the mean-to-capacity ratio
mcr = E[min(X, c)] / c of the capped law, and the nominal ratio
nmcr = E[X] / c of the uncapped law (undefined for bernoulli, whose support
already lies on {0, c}).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

__all__ = [
    "ArrivalDistribution",
    "BernoulliArrivals",
    "LimitedUniformArrivals",
    "LimitedExponentialArrivals",
    "DiscretizedPMF",
    "from_mcr",
    "from_nmcr",
]

_FAMILIES = ("bernoulli", "uniform", "exponential")


@dataclass(frozen=True)
class DiscretizedPMF:
    """Arrival law collapsed onto a uniform grid over [0, c]."""

    grid: np.ndarray
    mass: np.ndarray

    def mean(self) -> float:
        return float(self.grid @ self.mass)


class ArrivalDistribution:
    """Base class; subclasses fill in the continuous CDF and the atoms."""

    family: str = ""

    def __init__(self, c: float):
        c = float(c)
        if not c > 0:
            raise ValueError("capacity c must be positive")
        self.c = c

    # -- law ----------------------------------------------------------------

    def atom_at_zero(self) -> float:
        return 0.0

    def capacity_atom(self) -> float:
        """Probability that a raw draw meets or exceeds the capacity."""
        raise NotImplementedError

    def _continuous_cdf(self, x: np.ndarray) -> np.ndarray:
        """CDF of the part of the law strictly inside (0, c)."""
        raise NotImplementedError

    # -- summaries ------------------------------------------------------------

    def effective_mean(self) -> float:
        """E[min(X, c)]."""
        raise NotImplementedError

    def mcr(self) -> float:
        """Mean-to-capacity ratio of the capped law."""
        return self.effective_mean() / self.c

    def nmcr(self) -> float:
        """Nominal (uncapped) mean-to-capacity ratio."""
        raise ValueError(f"nmcr is undefined for the {self.family} family")

    # -- sampling and discretization -----------------------------------------

    def sample(self, rng: np.random.Generator, size=None):
        """Draw capped arrivals using the supplied generator."""
        raise NotImplementedError

    def discretize(self, cells: int) -> DiscretizedPMF:
        """Collapse onto the grid i * c / cells, i = 0..cells.

        Continuous mass goes to the nearest grid point (half-open cells,
        upper edge exclusive); the atoms at 0 and c land on the end points
        exactly.
        """
        n = int(cells)
        if n < 1:
            raise ValueError("cells must be at least 1")
        grid = np.linspace(0.0, self.c, n + 1)
        h = self.c / n
        edges = np.concatenate(([0.0], (np.arange(n) + 0.5) * h, [self.c]))
        cdf = self._continuous_cdf(edges)
        mass = np.diff(cdf)
        mass[0] += self.atom_at_zero()
        mass[-1] += self.capacity_atom()
        return DiscretizedPMF(grid=grid, mass=mass)


class BernoulliArrivals(ArrivalDistribution):
    """All-or-nothing arrivals: a full charge c with probability p, else 0."""

    family = "bernoulli"

    def __init__(self, c: float, p: float):
        super().__init__(c)
        p = float(p)
        if not 0.0 < p < 1.0:
            raise ValueError("p must lie in (0, 1)")
        self.p = p

    def atom_at_zero(self) -> float:
        return 1.0 - self.p

    def capacity_atom(self) -> float:
        return self.p

    def _continuous_cdf(self, x: np.ndarray) -> np.ndarray:
        return np.zeros_like(np.asarray(x, dtype=float))

    def effective_mean(self) -> float:
        return self.p * self.c

    def mcr(self) -> float:
        return self.p

    def sample(self, rng: np.random.Generator, size=None):
        return self.c * (rng.random(size) < self.p)


class LimitedUniformArrivals(ArrivalDistribution):
    """Uniform[0, b] arrivals capped at the capacity."""

    family = "uniform"

    def __init__(self, c: float, b: float):
        super().__init__(c)
        b = float(b)
        if not b > 0:
            raise ValueError("b must be positive")
        self.b = b

    def capacity_atom(self) -> float:
        return max(0.0, 1.0 - self.c / self.b)

    def _continuous_cdf(self, x: np.ndarray) -> np.ndarray:
        return np.minimum(np.asarray(x, dtype=float) / self.b, 1.0)

    def effective_mean(self) -> float:
        if self.b <= self.c:
            return self.b / 2.0
        return self.c - self.c * self.c / (2.0 * self.b)

    def nmcr(self) -> float:
        return self.b / (2.0 * self.c)

    def sample(self, rng: np.random.Generator, size=None):
        return np.minimum(self.b * rng.random(size), self.c)


class LimitedExponentialArrivals(ArrivalDistribution):
    """Exponential(rate) arrivals capped at the capacity."""

    family = "exponential"

    def __init__(self, c: float, rate: float):
        super().__init__(c)
        rate = float(rate)
        if not rate > 0:
            raise ValueError("rate must be positive")
        self.rate = rate

    def capacity_atom(self) -> float:
        return float(np.exp(-self.rate * self.c))

    def _continuous_cdf(self, x: np.ndarray) -> np.ndarray:
        return -np.expm1(-self.rate * np.asarray(x, dtype=float))

    def effective_mean(self) -> float:
        return float(-np.expm1(-self.rate * self.c) / self.rate)

    def nmcr(self) -> float:
        return 1.0 / (self.rate * self.c)

    def sample(self, rng: np.random.Generator, size=None):
        return np.minimum(rng.exponential(1.0 / self.rate, size), self.c)


def _exponential_nmcr_for_mcr(p: float) -> float:
    """Invert t -> t (1 - exp(-1/t)), which rises from 0 toward 1."""

    def gap(t: float) -> float:
        return t * -np.expm1(-1.0 / t) - p

    lo = p / 2.0
    hi = max(2.0, 1.0 / (1.0 - p))
    while gap(hi) < 0.0:
        hi *= 2.0
    return float(brentq(gap, lo, hi, xtol=1e-15, rtol=1e-15))


def from_nmcr(family: str, c: float, nmcr: float) -> ArrivalDistribution:
    """Build a distribution from its nominal mean-to-capacity ratio."""
    nmcr = float(nmcr)
    if not nmcr > 0:
        raise ValueError("nmcr must be positive")
    if family == "uniform":
        return LimitedUniformArrivals(c, b=2.0 * c * nmcr)
    if family == "exponential":
        return LimitedExponentialArrivals(c, rate=1.0 / (c * nmcr))
    if family == "bernoulli":
        raise ValueError("bernoulli arrivals have no nominal ratio; use from_mcr")
    raise ValueError(f"unknown family {family!r}; expected one of {_FAMILIES}")


def from_mcr(family: str, c: float, mcr: float) -> ArrivalDistribution:
    """Build a distribution whose capped mean is mcr * c."""
    p = float(mcr)
    if not 0.0 < p < 1.0:
        raise ValueError("mcr must lie in (0, 1)")
    if family == "bernoulli":
        return BernoulliArrivals(c, p)
    if family == "uniform":
        # capped mean p~ for b <= c, 1 - 1/(4 p~) beyond, p~ = b/(2c)
        nominal = p if p <= 0.5 else 1.0 / (4.0 * (1.0 - p))
        return LimitedUniformArrivals(c, b=2.0 * c * nominal)
    if family == "exponential":
        return LimitedExponentialArrivals(c, rate=1.0 / (c * _exponential_nmcr_for_mcr(p)))
    raise ValueError(f"unknown family {family!r}; expected one of {_FAMILIES}")
