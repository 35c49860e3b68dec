"""Experiment harness: one subcommand per operation, CSV out, JSON traces.

Every invocation runs one experiment from merged configuration (JSON config
file overridden by command-line flags), writes delimited rows to stdout or
``--out``, and optionally a full JSON trace sidecar via ``--trace-out``.
Rows are deterministic for a fixed config: re-runs are byte-identical except
for the trailing runtime_ms column, which trace sidecars omit entirely.

Exit codes: 0 success; 2 a search reported FAILED (``--expect-failed`` turns
this into 0 for expected-negative experiments); 3 configuration or
precondition error; 4 computation over budget (``--allow-mc-downgrade``
downgrades over-budget exact influence requests to Monte-Carlo instead).
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import time

import numpy as np

from .adversary import (
    check_dp_budget,
    coalition_game_budget_ok,
    extract_optimal_strategy,
    optimal_influence,
)
from .errors import BudgetError, CoalflipError, ConfigError, PreconditionError
from .functions import MultiRoundProtocol, RangedFunction
from .influence import (
    DEFAULT_RESILIENCE_BUDGET,
    boosted_influence,
    certify_resilience,
    coalition_influence,
)
from .measures import ProductMeasure, biased, uniform
from .search import (
    DEFAULT_CONSTANTS,
    SearchConstants,
    boosted_coalition,
    find_single_round,
    large_range_coalition,
    multi_round_coalition,
    prop22_fraction,
)
from .zoo import protocol_zoo, standard_zoo

SCHEMA_VERSION = 1

SUBCOMMANDS = (
    "influence",
    "boosted-influence",
    "resilience",
    "search-single",
    "search-range",
    "search-multi",
    "adversary-dp",
    "verify-prop22",
    "verify-or-example",
    "zoo",
)


# ---------------------------------------------------------------------------
# value formatting and emission
# ---------------------------------------------------------------------------


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return "%.17g" % v
    if isinstance(v, (list, tuple)):
        return ";".join(str(int(i)) for i in v)
    return str(v)


def _coalition_1based(S) -> list[int]:
    return [i + 1 for i in S]


def _jsonable(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON-serializable: {type(obj)!r}")


class Emitter:
    """Collects rows with a fixed header; runtime_ms is always the last column."""

    def __init__(self, header: list[str]):
        self.header = list(header) + ["runtime_ms"]
        self.rows: list[list] = []
        self.traces: list = []
        self._t0 = time.perf_counter()

    def add(self, row: dict, trace=None) -> None:
        ms = (time.perf_counter() - self._t0) * 1000.0
        self._t0 = time.perf_counter()
        missing = set(row) - set(self.header)
        if missing:
            raise ConfigError(f"row fields {sorted(missing)} not in header")
        self.rows.append([_fmt(row.get(col)) for col in self.header[:-1]] + ["%.3f" % ms])
        if trace is not None:
            self.traces.append(trace)

    def csv_text(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.header)
        w.writerows(self.rows)
        return buf.getvalue()

    def write(self, args) -> None:
        text = self.csv_text()
        if args.out:
            with open(args.out, "w") as fh:
                fh.write(text)
        else:
            sys.stdout.write(text)
        if args.trace_out:
            payload = {
                "schema_version": SCHEMA_VERSION,
                "experiment": args.subcommand,
                "traces": self.traces,
            }
            with open(args.trace_out, "w") as fh:
                json.dump(payload, fh, sort_keys=True, indent=2, default=_jsonable)
                fh.write("\n")


# ---------------------------------------------------------------------------
# argument string parsers
# ---------------------------------------------------------------------------


def parse_coalition(text: str | None, n: int) -> tuple[int, ...]:
    """Parse 1-based members like "1;3;5" (or comma-separated); "" is empty."""
    if not text:
        return ()
    parts = [p for p in text.replace(",", ";").split(";") if p]
    try:
        members = sorted(int(p) for p in parts)
    except ValueError as err:
        raise ConfigError(f"coalition {text!r}: members must be integers") from err
    if members and (members[0] < 1 or members[-1] > n):
        raise ConfigError(f"coalition {text!r}: members must be within 1..{n}")
    if len(set(members)) != len(members):
        raise ConfigError(f"coalition {text!r}: duplicate members")
    return tuple(i - 1 for i in members)


def parse_measure(spec: str) -> ProductMeasure:
    """uniform:N | biased:P:N | list:p1,p2,... | file:PATH"""
    kind, _, rest = spec.partition(":")
    try:
        if kind == "uniform":
            return uniform(int(rest))
        if kind == "biased":
            p, _, n = rest.partition(":")
            return biased(float(p), int(n))
        if kind == "list":
            return ProductMeasure(tuple(float(p) for p in rest.split(",")))
        if kind == "file":
            with open(rest) as fh:
                return ProductMeasure.from_json(fh.read())
    except (ValueError, OSError) as err:
        raise ConfigError(f"measure spec {spec!r}: {err}") from err
    raise ConfigError(f"measure spec {spec!r}: unknown kind {kind!r}")


def parse_function(spec: str, n: int | None) -> RangedFunction:
    """or | and | majority | parity | tribes:W | itmaj:D | constant:V |
    random:SEED[:RANGE[:DAGGERP]] | zoo:NAME | table:PATH

    Structured kinds take their arity from the measure (or --n)."""
    kind, _, rest = spec.partition(":")

    def need_n() -> int:
        if n is None:
            raise ConfigError(f"function spec {spec!r} needs an arity (give a measure or --n)")
        return n

    try:
        if kind == "or":
            return RangedFunction.or_function(need_n())
        if kind == "and":
            return RangedFunction.and_function(need_n())
        if kind == "majority":
            return RangedFunction.majority(need_n())
        if kind == "parity":
            return RangedFunction.parity(need_n())
        if kind == "tribes":
            return RangedFunction.tribes(int(rest), need_n())
        if kind == "itmaj":
            return RangedFunction.iterated_majority(int(rest))
        if kind == "constant":
            value = int(rest)
            arity = 1 if n is None else n  # a constant ignores its inputs
            return RangedFunction.constant(arity, value, max(2, value + 1))
        if kind == "random":
            parts = rest.split(":")
            seed = int(parts[0])
            range_size = int(parts[1]) if len(parts) > 1 else 2
            dagger_prob = float(parts[2]) if len(parts) > 2 else 0.0
            return RangedFunction.random_function(
                need_n(), range_size, seed=seed, dagger_prob=dagger_prob
            )
        if kind == "zoo":
            entries = standard_zoo()
            if rest not in entries:
                raise ConfigError(f"unknown zoo function {rest!r}")
            return entries[rest].function
        if kind == "table":
            with open(rest) as fh:
                return RangedFunction.from_json(fh.read())
    except ConfigError:
        raise
    except (ValueError, OSError, CoalflipError) as err:
        raise ConfigError(f"function spec {spec!r}: {err}") from err
    raise ConfigError(f"function spec {spec!r}: unknown kind {kind!r}")


def parse_protocol(spec: str) -> MultiRoundProtocol:
    """zoo:NAME | file:PATH"""
    kind, _, rest = spec.partition(":")
    if kind == "zoo":
        protos = protocol_zoo()
        if rest not in protos:
            raise ConfigError(f"unknown zoo protocol {rest!r}")
        return protos[rest]
    if kind == "file":
        try:
            with open(rest) as fh:
                return MultiRoundProtocol.from_obj(json.load(fh))
        except (ValueError, OSError, CoalflipError) as err:
            raise ConfigError(f"protocol spec {spec!r}: {err}") from err
    raise ConfigError(f"protocol spec {spec!r}: unknown kind {kind!r}")


# ---------------------------------------------------------------------------
# argument handling
# ---------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    """Exit 3 on usage errors; plain exit 2 is reserved for FAILED searches."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"config error: {message}", file=sys.stderr)
        raise SystemExit(3)


def _build_parser() -> argparse.ArgumentParser:
    top = _Parser(prog="coalflip", description=__doc__)
    sub = top.add_subparsers(dest="subcommand", required=True)

    common = _Parser(add_help=False)
    common.add_argument("--config", help="JSON config file; flags override its fields")
    common.add_argument("--seed", type=int, help="random seed (required)")
    common.add_argument("--out", help="CSV output path (default stdout)")
    common.add_argument("--trace-out", help="JSON trace sidecar path")
    common.add_argument("--threads", type=int,
                        help="worker count, 0 = auto (default from COALFLIP_THREADS)")
    common.add_argument("--mode", choices=["exact", "mc"])
    common.add_argument("--mc-samples", type=int)
    common.add_argument("--expect-failed", action="store_true", default=None,
                        help="exit 0 even when the search reports FAILED")
    common.add_argument("--allow-mc-downgrade", action="store_true", default=None,
                        help="fall back to Monte-Carlo when exact is over budget")
    common.add_argument("--boosted-coeff", type=float)
    common.add_argument("--range-k-scale", type=float)
    common.add_argument("--schedule-scale", type=float)
    common.add_argument("--electoral-samples", type=int)

    def cmd(name, **kwargs):
        return sub.add_parser(name, parents=[common], **kwargs)

    p = cmd("influence", help="exact or Monte-Carlo coalition influence")
    p.add_argument("--function"), p.add_argument("--measure"), p.add_argument("--n", type=int)
    p.add_argument("--S"), p.add_argument("--b", type=int)

    p = cmd("boosted-influence", help="influence under the t-fold boosted measure")
    p.add_argument("--function"), p.add_argument("--measure"), p.add_argument("--n", type=int)
    p.add_argument("--S"), p.add_argument("--b", type=int), p.add_argument("--t", type=int)

    p = cmd("resilience", help="exhaustively certify epsilon-resilience against ell players")
    p.add_argument("--function"), p.add_argument("--measure"), p.add_argument("--n", type=int)
    p.add_argument("--epsilon", type=float), p.add_argument("--ell", type=int)
    p.add_argument("--budget", type=int)

    p = cmd("search-single", help="single-round coalition search (mixed biases)")
    p.add_argument("--function"), p.add_argument("--measure"), p.add_argument("--n", type=int)
    p.add_argument("--epsilon", type=float)

    p = cmd("search-range", help="coalition search for multi-bit outputs")
    p.add_argument("--function"), p.add_argument("--measure"), p.add_argument("--n", type=int)
    p.add_argument("--epsilon", type=float), p.add_argument("--t", type=int)

    p = cmd("search-multi", help="multi-round coalition search with game certification")
    p.add_argument("--protocol"), p.add_argument("--epsilon", type=float)

    p = cmd("adversary-dp", help="exact rushing-game value and optimal strategy")
    p.add_argument("--protocol"), p.add_argument("--S"), p.add_argument("--b", type=int)

    p = cmd("verify-prop22", help="boosted-sampling success frequency over the zoo")
    p.add_argument("--function", help="restrict to one function (default: whole zoo)")
    p.add_argument("--measure"), p.add_argument("--n", type=int)
    p.add_argument("--epsilon", type=float), p.add_argument("--draws", type=int)

    p = cmd("verify-or-example", help="closed-form OR influence sweep")
    p.add_argument("--n", type=int), p.add_argument("--p", type=float)

    cmd("zoo", help="list the benchmark functions and protocols")
    return top


_CONFIG_ONLY = {"subcommand"}


def _merge_config(args: argparse.Namespace) -> argparse.Namespace:
    if not args.config:
        return args
    try:
        with open(args.config) as fh:
            cfg = json.load(fh)
    except (OSError, ValueError) as err:
        raise ConfigError(f"config file {args.config!r}: {err}") from err
    if not isinstance(cfg, dict):
        raise ConfigError(f"config file {args.config!r}: expected a JSON object")
    known = {k for k in vars(args)} - _CONFIG_ONLY
    for key, value in cfg.items():
        attr = key.replace("-", "_")
        if attr not in known:
            raise ConfigError(f"config field {key!r} is not a recognized option")
        if getattr(args, attr) is None:
            setattr(args, attr, value)
    return args


def _require(args, *fields) -> None:
    for f in fields:
        if getattr(args, f, None) is None:
            raise ConfigError(f"--{f.replace('_', '-')} is required for {args.subcommand}")


def _constants(args) -> SearchConstants:
    kw = {}
    if args.boosted_coeff is not None:
        kw["boosted_coeff"] = args.boosted_coeff
    if args.range_k_scale is not None:
        kw["range_k_scale"] = args.range_k_scale
    if args.schedule_scale is not None:
        kw["schedule_scale"] = args.schedule_scale
    if args.electoral_samples is not None:
        kw["electoral_samples"] = args.electoral_samples
    if args.mc_samples is not None:
        kw["mc_samples"] = args.mc_samples
    return SearchConstants(**kw) if kw else DEFAULT_CONSTANTS


def _function_and_measure(args) -> tuple[RangedFunction, ProductMeasure]:
    """Resolve --function/--measure/--n; a missing measure defaults to uniform."""
    _require(args, "function")
    measure = parse_measure(args.measure) if args.measure else None
    n_hint = args.n if args.n is not None else (measure.n if measure else None)
    f = parse_function(args.function, n_hint)
    if measure is None:
        measure = uniform(f.n)
        args.measure = f"uniform:{f.n}"  # rows record the resolved default
    if f.n != measure.n:
        raise ConfigError(f"function arity {f.n} does not match measure arity {measure.n}")
    return f, measure


# ---------------------------------------------------------------------------
# subcommand implementations (each returns the exit code)
# ---------------------------------------------------------------------------


def _estimate_influence(f, measure, S, b, t, args, rng):
    mode = args.mode or "exact"
    mc = args.mc_samples or 10_000
    meas = measure.boost(t) if t > 1 else measure
    downgraded = False
    if mode == "exact":
        try:
            est = coalition_influence(f, meas, S, b)
        except BudgetError:
            if not args.allow_mc_downgrade:
                raise
            downgraded = True
            est = coalition_influence(f, meas, S, b, mode="mc", mc_samples=mc, rng=rng)
    else:
        est = coalition_influence(f, meas, S, b, mode="mc", mc_samples=mc, rng=rng)
    return est, downgraded


def _run_influence(args, rng) -> int:
    f, measure = _function_and_measure(args)
    _require(args, "b")
    S = parse_coalition(args.S, f.n)
    boost_t = getattr(args, "t", None) or 1
    if args.subcommand == "boosted-influence":
        _require(args, "t")
        boost_t = args.t
    est, downgraded = _estimate_influence(f, measure, S, args.b, boost_t, args, rng)
    cols = ["experiment", "function", "measure", "n", "coalition", "target"]
    row = {
        "experiment": args.subcommand,
        "function": args.function,
        "measure": args.measure,
        "n": f.n,
        "coalition": _coalition_1based(S),
        "target": args.b,
    }
    if args.subcommand == "boosted-influence":
        cols.append("t")
        row["t"] = boost_t
    cols += ["seed", "value", "radius", "samples", "method", "downgraded"]
    row.update(seed=args.seed, value=est.value, radius=est.radius,
               samples=est.samples, method=est.method, downgraded=downgraded)
    em = Emitter(cols)
    em.add(row, trace={"estimate": est.to_obj(), "downgraded": downgraded})
    em.write(args)
    return 0


def _run_resilience(args, rng) -> int:
    f, measure = _function_and_measure(args)
    _require(args, "epsilon", "ell")
    budget = args.budget or DEFAULT_RESILIENCE_BUDGET
    verdict = certify_resilience(f, measure, args.epsilon, args.ell, budget=budget)
    em = Emitter(["experiment", "function", "measure", "n", "epsilon", "ell",
                  "seed", "resilient", "witness_coalition", "witness_target",
                  "checked"])
    wS, wb = ([], "") if verdict.witness is None else (
        _coalition_1based(verdict.witness[0]), verdict.witness[1])
    em.add(
        {
            "experiment": args.subcommand,
            "function": args.function,
            "measure": args.measure,
            "n": f.n,
            "epsilon": args.epsilon,
            "ell": args.ell,
            "seed": args.seed,
            "resilient": verdict.resilient,
            "witness_coalition": wS,
            "witness_target": wb,
            "checked": verdict.checked,
        },
        trace={
            "resilient": verdict.resilient,
            "witness": None if verdict.witness is None
            else {"coalition": wS, "target": wb},
            "checked": verdict.checked,
        },
    )
    em.write(args)
    return 0


def _search_row(args, outcome, extra: dict, extra_cols: list[str]) -> Emitter:
    em = Emitter(["experiment", *extra_cols, "epsilon", "seed", "status",
                  "coalition", "target", "value", "radius", "method", "threshold"])
    cert = outcome.certificate
    row = {
        "experiment": args.subcommand,
        "epsilon": args.epsilon,
        "seed": args.seed,
        "status": outcome.status,
        "coalition": _coalition_1based(outcome.coalition),
        "target": outcome.target,
        "value": None if cert is None else cert.value,
        "radius": None if cert is None else cert.radius,
        "method": None if cert is None else cert.method,
        "threshold": outcome.threshold,
    }
    row.update(extra)
    em.add(row, trace=outcome.to_obj())
    return em


def _exit_for(args, outcome) -> int:
    if outcome.ok or args.expect_failed:
        return 0
    return 2


def _run_search_single(args, rng) -> int:
    f, measure = _function_and_measure(args)
    _require(args, "epsilon")
    out = find_single_round(f, measure, args.epsilon, rng=rng, constants=_constants(args))
    em = _search_row(args, out, {"function": args.function, "measure": args.measure},
                     ["function", "measure"])
    em.write(args)
    return _exit_for(args, out)


def _run_search_range(args, rng) -> int:
    f, measure = _function_and_measure(args)
    _require(args, "epsilon", "t")
    out = large_range_coalition(f, measure, args.t, args.epsilon, rng=rng,
                                constants=_constants(args))
    em = _search_row(args, out,
                     {"function": args.function, "measure": args.measure, "t": args.t},
                     ["function", "measure", "t"])
    em.write(args)
    return _exit_for(args, out)


def _run_search_multi(args, rng) -> int:
    _require(args, "protocol", "epsilon")
    F = parse_protocol(args.protocol)
    out = multi_round_coalition(F, args.epsilon, rng=rng, constants=_constants(args))
    em = _search_row(args, out, {"protocol": args.protocol, "n": F.n, "r": F.r},
                     ["protocol", "n", "r"])
    em.write(args)
    return _exit_for(args, out)


def _run_adversary_dp(args, rng) -> int:
    _require(args, "protocol", "b")
    F = parse_protocol(args.protocol)
    B = parse_coalition(args.S, F.n)
    check_dp_budget(F, B)
    val = optimal_influence(F, B, args.b)
    strategy = extract_optimal_strategy(F, B, args.b) if B else None
    em = Emitter(["experiment", "protocol", "n", "r", "coalition", "target",
                  "seed", "value", "method"])
    em.add(
        {
            "experiment": args.subcommand,
            "protocol": args.protocol,
            "n": F.n,
            "r": F.r,
            "coalition": _coalition_1based(B),
            "target": args.b,
            "seed": args.seed,
            "value": val.value,
            "method": val.method,
        },
        trace={
            "value": val.value,
            "strategy": None if strategy is None else strategy.to_obj(),
        },
    )
    em.write(args)
    return 0


def _run_verify_prop22(args, rng) -> int:
    epsilon = args.epsilon if args.epsilon is not None else 0.25
    draws = args.draws or 400
    measure = parse_measure(args.measure) if args.measure else biased(1.0 / 16, 16)
    if args.function:
        f = parse_function(args.function, args.n if args.n is not None else measure.n)
        items = [(args.function, f)]
    else:
        items = [(name, e.function) for name, e in standard_zoo(measure.n).items()]
    em = Emitter(["experiment", "function", "measure", "n", "epsilon", "k",
                  "draws", "seed", "fraction", "sigma", "bound", "passed"])
    all_passed = True
    for name, f in items:
        rep = prop22_fraction(f, measure, epsilon, draws=draws, rng=rng,
                              constants=_constants(args))
        all_passed &= rep["passed"]
        em.add(
            {
                "experiment": args.subcommand,
                "function": name,
                "measure": args.measure or "biased:0.0625:16",
                "n": f.n,
                "epsilon": epsilon,
                "k": rep["k"],
                "draws": draws,
                "seed": args.seed,
                "fraction": rep["fraction"],
                "sigma": rep["sigma"],
                "bound": rep["bound"],
                "passed": rep["passed"],
            },
            trace={"function": name, **rep},
        )
    em.write(args)
    return 0 if all_passed or args.expect_failed else 2


def _run_verify_or_example(args, rng) -> int:
    n = args.n or 16
    p = args.p if args.p is not None else 1.0 / 16
    f = RangedFunction.or_function(n)
    measure = biased(p, n)
    em = Emitter(["experiment", "n", "p", "s", "target", "seed", "value", "complement"])
    for s in range(n):
        S = tuple(range(s))
        for b in (0, 1):
            est = coalition_influence(f, measure, S, b)
            em.add(
                {
                    "experiment": args.subcommand,
                    "n": n,
                    "p": p,
                    "s": s,
                    "target": b,
                    "seed": args.seed,
                    "value": est.value,
                    "complement": 1.0 - est.value,
                },
                trace={"s": s, "target": b, "value": est.value},
            )
    em.write(args)
    return 0


def _run_zoo(args, rng) -> int:
    em = Emitter(["experiment", "name", "kind", "n", "r", "range_size",
                  "monotone", "mean_uniform", "mean_biased16"])
    for name, entry in standard_zoo().items():
        f = entry.function
        mass_u = uniform(f.n).mass_vector()
        mass_b = biased(1.0 / 16, f.n).mass_vector()
        tbl = f.table()
        em.add({
            "experiment": args.subcommand,
            "name": name,
            "kind": "function",
            "n": f.n,
            "r": 1,
            "range_size": f.range_size,
            "monotone": entry.monotone,
            "mean_uniform": float(mass_u @ (tbl == 1)),
            "mean_biased16": float(mass_b @ (tbl == 1)),
        })
    for name, F in protocol_zoo().items():
        em.add({
            "experiment": args.subcommand,
            "name": name,
            "kind": "protocol",
            "n": F.n,
            "r": F.r,
            "range_size": F.outcome.range_size,
            "monotone": False,
            "mean_uniform": None,
            "mean_biased16": None,
        })
    em.write(args)
    return 0


_RUNNERS = {
    "influence": _run_influence,
    "boosted-influence": _run_influence,
    "resilience": _run_resilience,
    "search-single": _run_search_single,
    "search-range": _run_search_range,
    "search-multi": _run_search_multi,
    "adversary-dp": _run_adversary_dp,
    "verify-prop22": _run_verify_prop22,
    "verify-or-example": _run_verify_or_example,
    "zoo": _run_zoo,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        args = _merge_config(args)
        if args.threads is None:
            args.threads = int(os.environ.get("COALFLIP_THREADS", "0") or 0)
        if args.seed is None:
            raise ConfigError("--seed is required (there is no default seed)")
        rng = np.random.default_rng(args.seed)
        return _RUNNERS[args.subcommand](args, rng)
    except BudgetError as err:
        print(f"budget error: {err}", file=sys.stderr)
        return 4
    except PreconditionError as err:
        print(f"precondition error: {err}", file=sys.stderr)
        return 3
    except CoalflipError as err:
        print(f"config error: {err}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    raise SystemExit(main())
