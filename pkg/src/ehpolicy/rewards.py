"""Reward functions and the consumption-ladder calculus built on them.

A reward function r maps energy consumed in one slot to reward earned in that
slot.  Every reward handled here satisfies r(0) = 0, is nondecreasing, concave,
and has a finite slope at 0.  The built-in kinds are additionally strictly
concave and differentiable with a closed-form inverse marginal, which is what
the policy construction needs:

    awgn   r(u) = (1/2) log(1 + gamma u)
    sqrt   r(u) = sqrt(1 + u) - 1

Custom rewards supply the value, marginal, and inverse-marginal callables
directly (vectorized over numpy arrays) and are screened by a sampled
regularity audit at construction time.

The ladder calculus: fix a scale s > 1.  Starting from a consumption level x,
``step_down(rw, s, x)`` is the lower level whose marginal reward is s times
the marginal reward at x, clamped to 0 once no such positive level exists.
Iterating step_down produces a decreasing "ladder" of levels that reaches 0 in
finitely many steps; ``depletion_steps`` counts them and ``ladder_sum`` adds
them up.  ladder_sum is continuous, strictly increasing, and convex in x, and
its inverse is exactly the maximin consumption policy built in
:mod:`ehpolicy.policies`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

__all__ = [
    "RewardFunction",
    "step_down",
    "step_down_cutoff",
    "step_down_iter",
    "depletion_steps",
    "depletion_steps_upper",
    "ladder_sum",
    "regularity_audit",
]

_LADDER_CAP = 100_000


def _prepare(x, name: str = "x") -> tuple[np.ndarray, bool]:
    arr = np.asarray(x, dtype=float)
    if np.any(~np.isfinite(arr)) or np.any(arr < 0):
        raise ValueError(f"{name} must be finite and nonnegative")
    return arr, arr.ndim == 0


def _finish(arr: np.ndarray, scalar: bool):
    return float(arr) if scalar else arr


def _check_scale(s: float) -> float:
    s = float(s)
    if not s > 1.0:
        raise ValueError("scale s must be > 1")
    return s


@dataclass(frozen=True)
class RewardFunction:
    """One-slot reward as a function of consumed energy.

    Use the factories :meth:`awgn`, :meth:`sqrt_rate`, or :meth:`custom`
    rather than the constructor.
    """

    kind: str
    gamma: float = 1.0
    value_fn: Callable | None = field(default=None, repr=False)
    marginal_fn: Callable | None = field(default=None, repr=False)
    marginal_inverse_fn: Callable | None = field(default=None, repr=False)

    @classmethod
    def awgn(cls, gamma: float = 1.0) -> "RewardFunction":
        """Gaussian-channel rate reward r(u) = (1/2) log(1 + gamma u)."""
        gamma = float(gamma)
        if not gamma > 0:
            raise ValueError("gamma must be positive")
        return cls(kind="awgn", gamma=gamma)

    @classmethod
    def sqrt_rate(cls) -> "RewardFunction":
        """Square-root reward r(u) = sqrt(1 + u) - 1."""
        return cls(kind="sqrt")

    @classmethod
    def custom(
        cls,
        value: Callable,
        marginal: Callable,
        marginal_inverse: Callable,
        validate: bool = True,
    ) -> "RewardFunction":
        """Wrap user-supplied r, r', and the inverse of r'.

        All three callables must accept and return numpy arrays.  When
        ``validate`` is true a sampled regularity audit runs immediately and
        raises ValueError on the first failure.
        """
        rw = cls(
            kind="custom",
            value_fn=value,
            marginal_fn=marginal,
            marginal_inverse_fn=marginal_inverse,
        )
        if validate:
            failures = [item for item in regularity_audit(rw) if not item[1]]
            if failures:
                name, _, detail = failures[0]
                raise ValueError(f"custom reward failed regularity audit: {name} ({detail})")
        return rw

    # -- evaluation ---------------------------------------------------------

    def value(self, u):
        """Reward earned by consuming u >= 0 in one slot."""
        arr, scalar = _prepare(u, "u")
        if self.kind == "awgn":
            out = 0.5 * np.log1p(self.gamma * arr)
        elif self.kind == "sqrt":
            # algebraically sqrt(1+u) - 1, stable for small u
            out = arr / (np.sqrt(1.0 + arr) + 1.0)
        else:
            out = np.asarray(self.value_fn(arr), dtype=float)
        return _finish(out, scalar)

    def marginal(self, u):
        """Slope r'(u); positive and strictly decreasing."""
        arr, scalar = _prepare(u, "u")
        if self.kind == "awgn":
            out = self.gamma / (2.0 * (1.0 + self.gamma * arr))
        elif self.kind == "sqrt":
            out = 0.5 / np.sqrt(1.0 + arr)
        else:
            out = np.asarray(self.marginal_fn(arr), dtype=float)
        return _finish(out, scalar)

    def marginal_inverse(self, y):
        """Consumption level with slope y; domain (0, marginal(0)]."""
        arr = np.asarray(y, dtype=float)
        scalar = arr.ndim == 0
        m0 = self.marginal(0.0)
        if np.any(~np.isfinite(arr)) or np.any(arr <= 0) or np.any(arr > m0 * (1 + 1e-12)):
            raise ValueError("marginal_inverse argument outside (0, marginal(0)]")
        arr = np.minimum(arr, m0)
        if self.kind == "awgn":
            out = (self.gamma / (2.0 * arr) - 1.0) / self.gamma
        elif self.kind == "sqrt":
            half = 0.5 / arr
            out = half * half - 1.0
        else:
            out = np.asarray(self.marginal_inverse_fn(arr), dtype=float)
        out = np.maximum(out, 0.0)
        return _finish(out, scalar)

    def spec_string(self) -> str:
        """Round-trippable CLI spelling of this reward."""
        if self.kind == "awgn":
            return f"awgn:{self.gamma!r}"
        return self.kind


def step_down_cutoff(rw: RewardFunction, s: float):
    """Largest level from which one ladder step reaches 0.

    Below this cutoff the marginal reward cannot grow by a factor s before the
    slope at 0 caps it, so step_down returns 0 there.
    """
    s = _check_scale(s)
    if rw.kind == "awgn":
        return (s - 1.0) / rw.gamma
    if rw.kind == "sqrt":
        return s * s - 1.0
    return float(rw.marginal_inverse(rw.marginal(0.0) / s))


def step_down(rw: RewardFunction, s: float, x):
    """One ladder step: the level whose marginal reward is s times the one at x.

    Returns exactly 0.0 for x at or below the cutoff.  Always satisfies
    0 <= step_down(rw, s, x) < x for x > 0.
    """
    s = _check_scale(s)
    arr, scalar = _prepare(x)
    if rw.kind == "awgn":
        raw = ((1.0 + rw.gamma * arr) / s - 1.0) / rw.gamma
        out = np.where(raw > 0.0, raw, 0.0)
    elif rw.kind == "sqrt":
        raw = (1.0 + arr) / (s * s) - 1.0
        out = np.where(raw > 0.0, raw, 0.0)
    else:
        cutoff = step_down_cutoff(rw, s)
        out = np.zeros_like(arr)
        mask = arr > cutoff
        if np.any(mask):
            target = s * np.asarray(rw.marginal(arr[mask]), dtype=float)
            # float guard: x just above the cutoff may push the target a few
            # ulps past marginal(0), which is outside the inverse's domain
            target = np.minimum(target, rw.marginal(0.0))
            out[mask] = np.maximum(rw.marginal_inverse(target), 0.0)
    return _finish(out, scalar)


def step_down_iter(rw: RewardFunction, s: float, i: int, x):
    """i-fold composition of step_down, computed in closed form.

    Composing i single steps at scale s equals one step at scale s**i taken
    from max(x, cutoff(s**i)), which is what this evaluates.
    """
    s = _check_scale(s)
    if i < 0 or int(i) != i:
        raise ValueError("i must be a nonnegative integer")
    arr, scalar = _prepare(x)
    if i == 0:
        return _finish(arr.copy(), scalar)
    s_i = s ** int(i)
    if not np.isfinite(s_i):
        return _finish(np.zeros_like(arr), scalar)
    return _finish(np.asarray(step_down(rw, s_i, arr), dtype=float), scalar)


def _marginal_ratio(rw: RewardFunction, arr: np.ndarray) -> np.ndarray:
    """marginal(0) / marginal(x), in a form exact for the built-in kinds."""
    if rw.kind == "awgn":
        return 1.0 + rw.gamma * arr
    if rw.kind == "sqrt":
        return np.sqrt(1.0 + arr)
    return np.asarray(rw.marginal(0.0) / rw.marginal(arr), dtype=float)


def depletion_steps(rw: RewardFunction, s: float, x):
    """Number of ladder steps from x down to exactly 0.

    This is the least m >= 0 with s**m * marginal(x) >= marginal(0); the
    log-based guess is corrected against that inequality so exact integer
    boundaries resolve the way the defining ceiling does.
    """
    s = _check_scale(s)
    arr, scalar = _prepare(x)
    ratio = _marginal_ratio(rw, arr)
    with np.errstate(divide="ignore"):
        q = np.log(ratio) / np.log(s)
    m = np.ceil(q).astype(np.int64)
    m = np.maximum(m, 0)
    dec = (m > 0) & (np.power(s, np.maximum(m - 1, 0)) >= ratio)
    m = np.where(dec, m - 1, m)
    m = np.where(np.power(s, m) < ratio, m + 1, m)
    if scalar:
        return int(m)
    return m


def depletion_steps_upper(rw: RewardFunction, s: float, x):
    """Ladder length including a possible trailing zero step.

    The least m with s**m * marginal(x) strictly above marginal(0).  Equals
    depletion_steps everywhere except at exact boundaries, where it is one
    larger; the extra ladder term is exactly 0 there, so both counts truncate
    ladder_sum identically.
    """
    s = _check_scale(s)
    arr, scalar = _prepare(x)
    ratio = _marginal_ratio(rw, arr)
    with np.errstate(divide="ignore"):
        q = np.log(ratio) / np.log(s)
    m = np.floor(q).astype(np.int64) + 1
    m = np.maximum(m, 0)
    dec = (m > 0) & (np.power(s, np.maximum(m - 1, 0)) > ratio)
    m = np.where(dec, m - 1, m)
    m = np.where(np.power(s, m) <= ratio, m + 1, m)
    if scalar:
        return int(m)
    return m


def ladder_sum(rw: RewardFunction, s: float, x):
    """Total energy consumed along the ladder started at head level x.

    Sums x, step_down(x at scale s), step_down at scale s**2, ... until the
    rungs hit 0.  Closed geometric forms are used for the built-in kinds;
    custom rewards iterate the composition, which terminates exactly because
    step_down clamps to 0.
    """
    s = _check_scale(s)
    arr, scalar = _prepare(x)
    if rw.kind == "awgn":
        m = np.asarray(depletion_steps(rw, s, arr), dtype=float)
        shrink = np.power(s, -m)
        out = ((1.0 + rw.gamma * arr) * (1.0 - shrink) / (1.0 - 1.0 / s) - m) / rw.gamma
    elif rw.kind == "sqrt":
        m = np.asarray(depletion_steps(rw, s, arr), dtype=float)
        shrink = np.power(s, -2.0 * m)
        out = (1.0 + arr) * (1.0 - shrink) / (1.0 - s ** -2.0) - m
    else:
        acc = np.zeros_like(arr)
        cur = arr.copy()
        for _ in range(_LADDER_CAP):
            live = cur > 0.0
            if not np.any(live):
                break
            acc += cur
            cur = np.asarray(step_down(rw, s, cur), dtype=float)
        else:
            raise RuntimeError("ladder did not terminate; reward is not regular")
        out = acc
    out = np.maximum(out, arr)  # float guard: the head rung alone is a lower bound
    return _finish(out, scalar)


def regularity_audit(
    rw: RewardFunction,
    s_values: tuple[float, ...] = (1.1, 2.0, 5.0),
    x_max: float = 10.0,
    n: int = 201,
    slack: float = 1e-9,
) -> list[tuple[str, bool, str]]:
    """Sampled checks that a reward is usable by the ladder calculus.

    Returns (name, passed, detail) triples.  This is a screen, not a proof:
    it samples value/marginal behavior on a grid and the convexity of each
    ladder step above its cutoff.
    """
    items: list[tuple[str, bool, str]] = []
    x = np.linspace(0.0, x_max, n)

    v0 = float(rw.value(0.0))
    items.append(("value(0) == 0", abs(v0) <= 1e-12, f"value(0) = {v0!r}"))

    v = np.asarray(rw.value(x), dtype=float)
    dv = np.diff(v)
    items.append(
        ("value nondecreasing", bool(np.all(dv >= -slack)), f"min increment {dv.min()!r}")
    )
    d2v = v[2:] - 2.0 * v[1:-1] + v[:-2]
    items.append(
        ("value concave", bool(np.all(d2v <= slack)), f"max second difference {d2v.max()!r}")
    )

    g = np.asarray(rw.marginal(x), dtype=float)
    items.append(("marginal positive", bool(np.all(g > 0.0)), f"min marginal {g.min()!r}"))
    items.append(
        (
            "marginal strictly decreasing",
            bool(np.all(np.diff(g) < 0.0)),
            f"max increment {np.diff(g).max()!r}",
        )
    )
    items.append(
        ("marginal finite at 0", bool(np.isfinite(rw.marginal(0.0))), f"marginal(0) = {rw.marginal(0.0)!r}")
    )

    inv = np.asarray(rw.marginal_inverse(g[1:]), dtype=float)
    err = np.max(np.abs(inv - x[1:]) / np.maximum(1.0, x[1:]))
    items.append(("marginal_inverse inverts marginal", bool(err <= 1e-8), f"max error {err!r}"))

    for s in s_values:
        cutoff = step_down_cutoff(rw, s)
        grid = np.linspace(cutoff, cutoff + x_max, n)
        k = np.asarray(step_down(rw, s, grid), dtype=float)
        d2k = k[2:] - 2.0 * k[1:-1] + k[:-2]
        items.append(
            (
                f"step_down convex above cutoff (s={s})",
                bool(np.all(d2k >= -slack)),
                f"min second difference {d2k.min()!r}",
            )
        )
        inside = np.asarray(step_down(rw, s, x), dtype=float)
        ok = bool(np.all(inside[x > 0] < x[x > 0]) and np.all(inside >= 0.0))
        items.append((f"step_down within [0, x) (s={s})", ok, "bounds on sample grid"))
    return items
