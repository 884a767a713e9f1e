"""Command-line front end: policy curves, single-cell evaluations,
figure-style sweeps, and the invariant verification suite.

Subcommands: curve | evaluate | sweep | verify.  An optional plain-text
config file (one key=value per line, `#` comments) can supply any flag;
explicit command-line flags take precedence.  All output is written by a
single writer at the end of the run, so identical config and seed give
byte-identical files.

Exit codes: 0 success, 1 bad configuration, 2 evaluator non-convergence,
3 failed verification.
"""

from __future__ import annotations

import argparse
import dataclasses
import io
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import checks
from . import evaluation as ev
from . import metrics as mx
from . import policies as pol
from . import rewards as rw

__all__ = ["main", "UsageError"]


class UsageError(Exception):
    """Raised for any configuration problem; mapped to exit code 1."""


class _Parser(argparse.ArgumentParser):
    # argparse would exit(2); route everything through UsageError instead
    def error(self, message):
        raise UsageError(message)


# ---------------------------------------------------------------------------
# value parsers shared by flags and config files


def _parse_reward_spec(text: str) -> rw.RewardFunction:
    name, _, arg = text.strip().partition(":")
    name = name.lower()
    if name == "sqrt":
        if arg:
            raise ValueError("sqrt reward takes no parameter")
        return rw.RewardFunction.sqrt_rate()
    if name == "awgn":
        gamma = float(arg) if arg else 1.0
        return rw.RewardFunction.awgn(gamma)
    raise ValueError(f"unknown reward {text!r}; expected awgn[:gamma] or sqrt")


def _parse_grid(text: str) -> tuple[float, ...]:
    """'0.5' | '0.5,1,2' | 'lo:hi:count' (inclusive linear grid)."""
    text = text.strip()
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise ValueError("range grid must be lo:hi:count")
        lo, hi, count = float(parts[0]), float(parts[1]), int(parts[2])
        if count < 1:
            raise ValueError("grid count must be positive")
        return tuple(float(v) for v in np.linspace(lo, hi, count))
    values = tuple(float(tok) for tok in text.split(",") if tok.strip())
    if not values:
        raise ValueError("empty grid")
    return values


def _parse_policies(text: str) -> tuple[str, ...]:
    kinds = tuple(tok.strip() for tok in text.split(",") if tok.strip())
    if not kinds:
        raise ValueError("empty policy list")
    return kinds


# ---------------------------------------------------------------------------
# config handling

# dest -> (converter, default); used both for flags and for config keys
_CURVE_SPEC = {
    "reward": (_parse_reward_spec, rw.RewardFunction.awgn(1.0)),
    "p": (float, 0.5),
    "x_max": (float, 8.0),
    "points": (int, 201),
    "out": (str, None),
    "endpoints_out": (str, None),
}
_EVALUATE_SPEC = {
    "reward": (_parse_reward_spec, rw.RewardFunction.awgn(1.0)),
    "family": (str, "bernoulli"),
    "c": (float, 1.0),
    "p": (float, None),
    "nmcr": (float, None),
    "policy": (str, "maximin"),
    "method": (str, "series"),
    "n": (int, 100_000),
    "paths": (int, 64),
    "grid_n": (int, 2000),
    "eps": (float, 1e-9),
    "tol": (float, 1e-15),
    "max_iter": (int, 1_000_000),
    "seed": (int, 0),
    "workers": (int, 1),
    "out": (str, None),
    "format": (str, "json"),
}
_SWEEP_SPEC = {
    "reward": (_parse_reward_spec, rw.RewardFunction.awgn(1.0)),
    "family": (str, None),
    "c": (float, None),
    "c_grid": (_parse_grid, None),
    "p": (_parse_grid, None),
    "nmcr": (_parse_grid, None),
    "policies": (_parse_policies, mx.POLICY_KINDS),
    "method": (str, "vi"),
    "n": (int, 100_000),
    "paths": (int, 64),
    "grid_n": (int, 2000),
    "eps": (float, 1e-9),
    "tol": (float, 1e-15),
    "max_iter": (int, 1_000_000),
    "seed": (int, 0),
    "workers": (int, 1),
    "out": (str, None),
    "format": (str, "csv"),
}
_VERIFY_SPEC = {
    "seed": (int, 0),
}


def _load_config(path: str) -> dict[str, str]:
    try:
        raw = Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"cannot read config {path!r}: {exc}")
    mapping: dict[str, str] = {}
    for lineno, line in enumerate(raw.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise UsageError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, value = stripped.split("=", 1)
        mapping[key.strip().replace("-", "_").lower()] = value.strip()
    return mapping


def _resolve(ns: argparse.Namespace, table: dict) -> dict:
    """Merge flags over config over defaults, converting strings once."""
    config = _load_config(ns.config) if getattr(ns, "config", None) else {}
    unknown = set(config) - set(table)
    if unknown:
        raise UsageError(f"unknown config keys: {', '.join(sorted(unknown))}")
    resolved = {}
    for dest, (convert, default) in table.items():
        raw = getattr(ns, dest, None)
        if raw is None:
            raw = config.get(dest)
        if raw is None:
            resolved[dest] = default
            continue
        try:
            resolved[dest] = convert(raw)
        except (TypeError, ValueError) as exc:
            raise UsageError(f"bad value for {dest}: {raw!r} ({exc})")
    return resolved


def _require_positive(cfg: dict, *keys: str) -> None:
    for key in keys:
        if cfg[key] is not None and not cfg[key] > 0:
            raise UsageError(f"{key} must be positive, got {cfg[key]!r}")


def _emit(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        with open(out, "w", newline="") as handle:
            handle.write(text)


def _fmt(value) -> str:
    return repr(float(value)) if isinstance(value, (float, np.floating)) else str(value)


# ---------------------------------------------------------------------------
# subcommands


def _maximin_policy(reward: rw.RewardFunction, p: float) -> pol.StationaryPolicy:
    if reward.kind == "awgn":
        return pol.MaximinAwgnPolicy(reward.gamma, p)
    return pol.MaximinPolicy(reward, p)


def _curve_endpoints(reward: rw.RewardFunction, p: float, x_max: float) -> list[tuple[int, float, float]]:
    # kinks of the maximin curve: x_k where the ladder first gains a rung
    rows = [(0, 0.0, 0.0)]
    scale = 1.0 / (1.0 - p)
    for k in range(1, 500):
        y = float(rw.step_down_cutoff(reward, scale**k))
        x = float(rw.ladder_sum(reward, scale, y))
        if not (math.isfinite(x) and math.isfinite(y)):
            break
        rows.append((k, x, y))
        if x > x_max:
            break
    return rows


def cmd_curve(ns: argparse.Namespace) -> int:
    cfg = _resolve(ns, _CURVE_SPEC)
    if not 0.0 < cfg["p"] < 1.0:
        raise UsageError(f"p must lie in (0, 1), got {cfg['p']!r}")
    _require_positive(cfg, "x_max")
    if cfg["points"] < 2:
        raise UsageError("points must be at least 2")
    reward, p = cfg["reward"], cfg["p"]
    x = np.linspace(0.0, cfg["x_max"], cfg["points"])
    columns = [
        x,
        _maximin_policy(reward, p).evaluate(x),
        pol.FixedFractionPolicy(p).evaluate(x),
        pol.GreedyPolicy().evaluate(x),
    ]
    lines = ["x,omega,phi,greedy"]
    for row in zip(*columns):
        lines.append(",".join(repr(float(v)) for v in row))
    _emit("\n".join(lines) + "\n", cfg["out"])

    endpoints_out = cfg["endpoints_out"]
    if endpoints_out is None and cfg["out"] is not None:
        target = Path(cfg["out"])
        endpoints_out = str(target.with_name(target.stem + ".endpoints" + target.suffix))
    if endpoints_out is not None:
        ep_lines = ["k,x,y"]
        for k, ex, ey in _curve_endpoints(reward, p, cfg["x_max"]):
            ep_lines.append(f"{k},{ex!r},{ey!r}")
        _emit("\n".join(ep_lines) + "\n", endpoints_out)
    return 0


def cmd_evaluate(ns: argparse.Namespace) -> int:
    cfg = _resolve(ns, _EVALUATE_SPEC)
    _require_positive(cfg, "c", "n", "paths", "grid_n", "eps", "tol", "max_iter", "workers")
    if cfg["seed"] < 0:
        raise UsageError("seed must be nonnegative")
    if cfg["format"] not in ("json", "csv"):
        raise UsageError(f"evaluate emits json or csv, not {cfg['format']!r}")
    if (cfg["p"] is None) == (cfg["nmcr"] is None):
        raise UsageError("give exactly one of p or nmcr")
    if cfg["policy"] not in mx.POLICY_KINDS:
        raise UsageError(f"unknown policy {cfg['policy']!r}; expected one of {mx.POLICY_KINDS}")
    if cfg["method"] not in ("series", "vi", "mc"):
        raise UsageError(f"unknown method {cfg['method']!r}; expected series, vi, or mc")

    reward, family, c = cfg["reward"], cfg["family"], cfg["c"]
    try:
        dist = mx._cell_distribution(family, c, cfg["p"], cfg["nmcr"])
    except ValueError as exc:
        raise UsageError(str(exc))
    policy = mx.make_policy(cfg["policy"], reward, dist.mcr())

    method = cfg["method"]
    if method == "series":
        if family != "bernoulli":
            raise UsageError("method=series needs family=bernoulli")
        result = ev.bernoulli_reward(policy, reward, c, cfg["p"], tol=cfg["tol"])
        knobs = {"tol": cfg["tol"]}
    elif method == "vi":
        model = ev.build_mdp(reward, dist, cfg["grid_n"])
        result = ev.policy_gain(model, policy, eps=cfg["eps"], max_iter=cfg["max_iter"])
        knobs = {"grid": cfg["grid_n"], "eps": cfg["eps"]}
    else:
        result = ev.simulate(
            policy, dist, reward, cfg["n"], cfg["paths"], cfg["seed"], workers=cfg["workers"]
        )
        knobs = {"n": cfg["n"], "paths": cfg["paths"], "seed": cfg["seed"], "workers": cfg["workers"]}

    record = result.as_dict()
    record.update(knobs)
    record.update(
        policy=cfg["policy"],
        reward=reward.spec_string(),
        family=family,
        c=c,
        mcr=dist.mcr(),
    )
    if cfg["p"] is not None:
        record["p"] = cfg["p"]
    if cfg["nmcr"] is not None:
        record["nmcr"] = cfg["nmcr"]

    if cfg["format"] == "json":
        text = json.dumps(record, sort_keys=True) + "\n"
    else:
        keys = sorted(record)
        text = ",".join(keys) + "\n" + ",".join(_fmt(record[k]) for k in keys) + "\n"
    _emit(text, cfg["out"])
    return 0


def cmd_sweep(ns: argparse.Namespace) -> int:
    cfg = _resolve(ns, _SWEEP_SPEC)
    _require_positive(cfg, "n", "paths", "grid_n", "eps", "tol", "max_iter", "workers")
    if cfg["seed"] < 0:
        raise UsageError("seed must be nonnegative")
    if cfg["format"] not in ("csv", "json"):
        raise UsageError(f"sweep emits csv or json, not {cfg['format']!r}")
    if cfg["family"] is None:
        raise UsageError("family is required (bernoulli, uniform, or exponential)")
    if (cfg["c"] is None) == (cfg["c_grid"] is None):
        raise UsageError("give exactly one of c or c-grid")
    if (cfg["p"] is None) == (cfg["nmcr"] is None):
        raise UsageError("give exactly one of p or nmcr")
    if cfg["method"] not in ("series", "vi", "mc"):
        raise UsageError(f"unknown method {cfg['method']!r}; expected series, vi, or mc")
    if cfg["method"] == "series" and cfg["family"] != "bernoulli":
        raise UsageError("method=series needs family=bernoulli")

    c_values = (cfg["c"],) if cfg["c"] is not None else cfg["c_grid"]
    if any(v <= 0 for v in c_values):
        raise UsageError("every c must be positive")
    try:
        reports = mx.sweep(
            cfg["reward"],
            cfg["policies"],
            cfg["family"],
            c_values,
            p_values=cfg["p"],
            nmcr_values=cfg["nmcr"],
            grid_cells=cfg["grid_n"],
            vi_eps=cfg["eps"],
            series_tol=cfg["tol"],
            policy_evaluator="mc" if cfg["method"] == "mc" else "vi",
            mc_slots=cfg["n"],
            mc_paths=cfg["paths"],
            seed=cfg["seed"],
            workers=cfg["workers"],
            max_iter=cfg["max_iter"],
        )
    except ValueError as exc:
        raise UsageError(str(exc))

    if cfg["format"] == "csv":
        buffer = io.StringIO()
        mx.write_csv(reports, buffer)
        text = buffer.getvalue()
    else:
        rows = []
        for report in reports:
            row = dataclasses.asdict(report)
            rows.append({k: v for k, v in row.items() if v is not None})
        text = json.dumps(rows, sort_keys=True) + "\n"
    _emit(text, cfg["out"])
    return 0


def cmd_verify(ns: argparse.Namespace) -> int:
    cfg = _resolve(ns, _VERIFY_SPEC)
    if cfg["seed"] < 0:
        raise UsageError("seed must be nonnegative")
    results = checks.run_all(cfg["seed"])
    failures = [r for r in results if not r.passed]
    lines = []
    for r in results:
        if r.passed:
            lines.append(f"ok   {r.name}")
        else:
            lines.append(f"FAIL {r.name}: {r.detail}")
    lines.append(f"{len(results) - len(failures)}/{len(results)} checks passed")
    sys.stdout.write("\n".join(lines) + "\n")
    if failures:
        first = failures[0]
        print(f"first counterexample: {first.name}: {first.detail}", file=sys.stderr)
        return 3
    return 0


# ---------------------------------------------------------------------------
# parser assembly


def _add_common(parser: argparse.ArgumentParser, *names: str) -> None:
    table = {
        "reward": ("--reward", "reward curve: awgn, awgn:GAMMA, or sqrt"),
        "family": ("--family", "arrival family: bernoulli, uniform, or exponential"),
        "c": ("--c", "battery capacity"),
        "c_grid": ("--c-grid", "capacity grid: list 'a,b,c' or range 'lo:hi:count'"),
        "p": ("--p", "mean-to-capacity ratio (grids allowed where noted)"),
        "nmcr": ("--nmcr", "nominal mean-to-capacity ratio (uniform/exponential)"),
        "policy": ("--policy", "policy kind: maximin, fixed_fraction, or greedy"),
        "policies": ("--policies", "comma-separated policy kinds for sweeps"),
        "method": ("--method", "evaluator: series, vi, or mc"),
        "n": ("--n", "simulated slots per path (mc)"),
        "paths": ("--paths", "independent sample paths (mc)"),
        "grid_n": ("--grid-N", "battery grid cells (vi)"),
        "eps": ("--eps", "span stopping threshold (vi)"),
        "tol": ("--tol", "series tail tolerance"),
        "max_iter": ("--max-iter", "iteration cap before giving up (vi)"),
        "seed": ("--seed", "root seed for any randomized step"),
        "workers": ("--workers", "worker threads (result is worker-count invariant)"),
        "out": ("--out", "output file (default: standard output)"),
        "format": ("--format", "output format: csv or json"),
        "x_max": ("--x-max", "largest battery level on the curve"),
        "points": ("--points", "number of curve samples"),
        "endpoints_out": ("--endpoints-out", "where to write the kink list"),
    }
    for name in names:
        flag, help_text = table[name]
        parser.add_argument(flag, dest=name, default=None, help=help_text)
    parser.add_argument("--config", default=None, help="key=value file; flags win")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="ehpolicy", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command")

    p_curve = sub.add_parser("curve", help="sample policy curves and their kinks")
    _add_common(p_curve, "reward", "p", "x_max", "points", "out", "endpoints_out")
    p_curve.set_defaults(func=cmd_curve)

    p_eval = sub.add_parser("evaluate", help="long-run reward of one policy in one cell")
    _add_common(
        p_eval,
        "reward", "family", "c", "p", "nmcr", "policy", "method",
        "n", "paths", "grid_n", "eps", "tol", "max_iter", "seed", "workers", "out", "format",
    )
    p_eval.set_defaults(func=cmd_evaluate)

    p_sweep = sub.add_parser("sweep", help="gap/factor table over a parameter grid")
    _add_common(
        p_sweep,
        "reward", "family", "c", "c_grid", "p", "nmcr", "policies", "method",
        "n", "paths", "grid_n", "eps", "tol", "max_iter", "seed", "workers", "out", "format",
    )
    p_sweep.set_defaults(func=cmd_sweep)

    p_verify = sub.add_parser("verify", help="run every invariant suite")
    _add_common(p_verify, "seed")
    p_verify.set_defaults(func=cmd_verify)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
        if getattr(ns, "command", None) is None:
            parser.print_usage(sys.stderr)
            return 1
        return ns.func(ns)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ev.NonConvergenceError as exc:
        print(f"error: did not converge: {exc}", file=sys.stderr)
        return 2
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:  # argparse --help
        return int(exc.code or 0)


if __name__ == "__main__":
    sys.exit(main())
