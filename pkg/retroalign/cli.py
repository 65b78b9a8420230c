"""
Command Line Interface for Retrospective Alignment Analysis

Exact DoF values and figure-data tables, end-to-end scheme simulations over
random channels, and the verification suite that ties the closed forms, the
recursions and the simulator together.
"""

import argparse
import csv
import io
import json
import logging
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field as dataclass_field
from fractions import Fraction
from typing import Any, Callable, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np

from .alignment_core import COMPLEX_FIELD, PRIME_FIELD, LinearExpr, SymbolPool, decodable
from .dof_analysis import (
    ICFD,
    ICOF,
    ICSF,
    MODEL_NAMES,
    XFD,
    XOF,
    XSF,
    ModelId,
    asymptote,
    consistency_sweep,
    dof_icfd,
    dof_icof,
    dof_icof_at,
    dof_icsf,
    dof_icsf_at,
    dof_of,
    dof_xfd,
    dof_xof,
    dof_xsf,
    is_supported_regime,
    mu_exhaustive,
    mu_star,
    nu_star,
)
from .feedback_sim import FeasibilityError, format_sim_report, write_trace
from .schemes import (
    UnsupportedRegimeError,
    build_policy,
    execute_policy,
    verify_phase,
)

logger = logging.getLogger(__name__)

SEED_ENV = "RETROALIGN_SEED"
TABLE_FAMILIES = ("ic", "icof-w", "icsf-w", "xfd", "x")
VERIFY_SCOPES = ("all", "golden", "appendices", "asymptotics", "orderings",
                 "oracle", "simulation", "phases", "genericity")

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2


class UsageError(ValueError):
    """Bad command-line input (exit code 2)."""


@dataclass
class RunConfig:
    """Everything a command needs, resolved from flags and environment."""
    command: str
    model: Optional[ModelId] = None
    K: Optional[int] = None
    M: Optional[int] = None
    k_range: Optional[Tuple[int, int]] = None
    seed: int = 1
    trials: int = 100
    field: str = "prime"
    strict: bool = True
    output: Optional[str] = None     # None writes to stdout
    format: str = "csv"
    jobs: int = 1
    family: str = "ic"
    models: List[ModelId] = dataclass_field(default_factory=list)
    scope: str = "all"
    trace: Optional[str] = None
    verbose: bool = False


def format_fraction(value: Optional[Fraction]) -> str:
    if value is None:
        return ""
    return f"{value.numerator}/{value.denominator}"


def format_decimal(value: Optional[Union[Fraction, float]]) -> str:
    if value is None:
        return ""
    return f"{float(value):.12g}"


def parse_k_range(text: str) -> Tuple[int, int]:
    """
    Parse "A..B" (inclusive) or a single integer.

    Raises:
        UsageError: If the text is malformed or A > B
    """
    try:
        if ".." in text:
            lo_text, hi_text = text.split("..", 1)
            lo, hi = int(lo_text), int(hi_text)
        else:
            lo = hi = int(text)
    except ValueError:
        raise UsageError(f"Invalid K range {text!r} (expected A..B)")
    if lo > hi:
        raise UsageError(f"Empty K range {text!r}")
    if lo < 1:
        raise UsageError(f"K range must start at 1 or above (got {text!r})")
    return lo, hi


def resolve_seed(flag_seed: int, environ: Optional[Dict[str, str]] = None) -> int:
    """RETROALIGN_SEED overrides --seed when set."""
    environ = os.environ if environ is None else environ
    value = environ.get(SEED_ENV)
    if value is None or value == "":
        return flag_seed
    try:
        return int(value)
    except ValueError:
        raise UsageError(f"{SEED_ENV}={value!r} is not an integer")


def create_argument_parser() -> argparse.ArgumentParser:
    """Create and configure the CLI argument parser."""
    parser = argparse.ArgumentParser(
        prog='retroalign',
        description='Exact DoF analysis and slot-level simulation of retrospective '
                    'interference alignment with delayed CSIT and feedback',
        formatter_class=argparse.RawDescriptionHelpFormatter,
        epilog="""
Examples:
  # Sum DoF of the output-feedback IC for K = 3..12
  retroalign dof --model icof --k-range 3..12

  # Figure data: per-w curves of the Shannon-feedback IC
  retroalign table --family icsf-w --k-range 3..30 --out icsf_w.csv

  # Simulate the 3-user full-duplex IC over 10 seeds
  retroalign simulate --model icfd --k 3 --trials 10

  # 3x3 full-duplex X channel with a JSON-lines trace
  retroalign simulate --model xfd --k 3 --m-tx 3 --trials 1 --trace xfd33.jsonl

  # Recursion/closed-form sweep only
  retroalign verify --scope appendices
        """
    )

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        '--model',
        choices=MODEL_NAMES,
        help='Scheme: icfd, icof, icsf, xfd, xof or xsf'
    )
    common.add_argument(
        '--k',
        type=int,
        help='Number of receivers K'
    )
    common.add_argument(
        '--m-tx',
        type=int,
        dest='m_tx',
        help='Number of transmitters M (X channel with full-duplex only)'
    )
    common.add_argument(
        '--k-range',
        dest='k_range',
        help='Inclusive K range A..B'
    )
    common.add_argument(
        '--seed',
        type=int,
        default=1,
        help=f'Base seed (default: 1; {SEED_ENV} overrides)'
    )
    common.add_argument(
        '--trials',
        type=int,
        default=100,
        help='Number of seeds to simulate (default: 100)'
    )
    common.add_argument(
        '--field',
        choices=['prime', 'complex'],
        default='prime',
        help='Arithmetic: prime (exact, default) or complex (floating point)'
    )
    common.add_argument(
        '--strict',
        action='store_true',
        default=True,
        help='Abort a run on the first infeasible transmission (default: enabled)'
    )
    common.add_argument(
        '--no-strict',
        action='store_false',
        dest='strict',
        help='Record infeasible transmissions and keep going'
    )
    common.add_argument(
        '--format',
        choices=['csv', 'json'],
        default='csv',
        help='Machine output format (default: csv)'
    )
    common.add_argument(
        '--out',
        help='Output file (default: stdout)'
    )
    common.add_argument(
        '-v', '--verbose',
        action='store_true',
        help='Enable verbose output'
    )

    sub = parser.add_subparsers(dest='command', required=True)
    sub.add_parser('dof', parents=[common], help='Sum DoF of one model over K')

    table = sub.add_parser('table', parents=[common], help='Figure-data tables')
    table.add_argument(
        '--family',
        choices=TABLE_FAMILIES,
        default='ic',
        help='Table family: ic (default), icof-w, icsf-w, xfd or x'
    )
    table.add_argument(
        '--models',
        help='Comma-separated models for the ic and x families'
    )

    simulate = sub.add_parser('simulate', parents=[common], help='Run a scheme end to end')
    simulate.add_argument(
        '--jobs',
        type=int,
        default=1,
        help='Worker processes for multiple seeds (default: 1)'
    )
    simulate.add_argument(
        '--trace',
        help='Write the JSON-lines slot trace of the first seed to this path'
    )

    verify = sub.add_parser('verify', parents=[common], help='Run the verification suite')
    verify.add_argument(
        '--scope',
        choices=VERIFY_SCOPES,
        default='all',
        help='Checks to run (default: all)'
    )

    sub.add_parser('limits', parents=[common], help='K -> infinity limits')
    return parser


def build_config(args: argparse.Namespace, environ: Optional[Dict[str, str]] = None) -> RunConfig:
    """
    Turn parsed flags into a RunConfig.

    Raises:
        UsageError: On contradictory or malformed options
    """
    config = RunConfig(command=args.command)
    config.model = ModelId.from_name(args.model) if args.model else None
    config.K = args.k
    config.M = args.m_tx
    config.k_range = parse_k_range(args.k_range) if args.k_range else None
    config.seed = resolve_seed(args.seed, environ)
    if args.trials < 1:
        raise UsageError(f"--trials must be at least 1 (got {args.trials})")
    config.trials = args.trials
    config.field = args.field
    config.strict = args.strict
    config.output = args.out
    config.format = args.format
    config.verbose = args.verbose
    config.jobs = max(1, getattr(args, 'jobs', 1))
    config.family = getattr(args, 'family', 'ic')
    config.scope = getattr(args, 'scope', 'all')
    config.trace = getattr(args, 'trace', None)
    models_text = getattr(args, 'models', None)
    if models_text:
        try:
            config.models = [ModelId.from_name(name) for name in models_text.split(",") if name.strip()]
        except ValueError as e:
            raise UsageError(str(e))
    return config


def _k_values(config: RunConfig, default: Tuple[int, int]) -> range:
    if config.k_range is not None:
        lo, hi = config.k_range
    elif config.K is not None:
        lo = hi = config.K
    else:
        lo, hi = default
    return range(lo, hi + 1)


def _emit(config: RunConfig, rows: List[Dict[str, Any]], fieldnames: Sequence[str],
          extra: Optional[Dict[str, Any]] = None) -> None:
    """Write rows as CSV (header first) or JSON to --out or stdout."""
    if config.format == "json":
        payload: Any = rows if extra is None else dict(extra, rows=rows)
        text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    else:
        buffer = io.StringIO()
        writer = csv.DictWriter(buffer, fieldnames=list(fieldnames), lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow(row)
        text = buffer.getvalue()
    if config.output:
        with open(config.output, "w", encoding="utf-8", newline="") as f:
            f.write(text)
    else:
        sys.stdout.write(text)


def _progress(config: RunConfig, message: str) -> None:
    # keep stdout clean when it carries machine output
    if config.verbose:
        print(message, file=sys.stdout if config.output else sys.stderr)


# ---------------------------------------------------------------------------
# dof / table / limits
# ---------------------------------------------------------------------------

def _dof_thunk(model: ModelId, K: int, M: Optional[int] = None) -> Callable[[], Fraction]:
    return lambda: dof_of(model, K, M)


def _value_cells(prefix: str, compute: Callable[[], Fraction], supported: bool = True) -> Dict[str, str]:
    if not supported:
        return {prefix: "unsupported", f"{prefix}_decimal": ""}
    try:
        value = compute()
    except ValueError:
        return {prefix: "unsupported", f"{prefix}_decimal": ""}
    return {prefix: format_fraction(value), f"{prefix}_decimal": format_decimal(value)}


def cmd_dof(config: RunConfig) -> int:
    """One row per K with the exact DoF of --model."""
    if config.model is None:
        raise UsageError("dof requires --model")
    if config.K is None and config.k_range is None:
        raise UsageError("dof requires --k or --k-range")
    model = config.model
    if model == XFD and config.M is None:
        raise UsageError("xfd requires --m-tx")
    rows = []
    for K in _k_values(config, (3, 3)):
        M = config.M if model == XFD else K
        row: Dict[str, Any] = {"model": model.name, "K": K, "M": M}
        supported = is_supported_regime(model, K, M)
        row.update(_value_cells("dof", lambda: dof_of(model, K, M if model == XFD else None), supported))
        rows.append(row)
    _emit(config, rows, ["model", "K", "M", "dof", "dof_decimal"])
    return EXIT_OK


def _table_ic(config: RunConfig, K_values: Iterable[int]) -> Tuple[List[Dict[str, Any]], List[str]]:
    models = config.models or [ICFD, ICOF, ICSF]
    if any(m.channel != "IC" for m in models):
        raise UsageError("the ic family takes icfd, icof and icsf only")
    rows, names = [], ["K"]
    for model in models:
        names += [model.name, f"{model.name}_decimal"]
    for K in K_values:
        row: Dict[str, Any] = {"K": K}
        for model in models:
            row.update(_value_cells(model.name, _dof_thunk(model, K), is_supported_regime(model, K)))
        rows.append(row)
    return rows, names


def _table_per_w(K_values: Sequence[int], family: str) -> Tuple[List[Dict[str, Any]], List[str]]:
    """Per-w curves plus the optimized value (figure families of icof/icsf)."""
    per_w = dof_icof_at if family == "icof-w" else dof_icsf_at
    best = dof_icof if family == "icof-w" else dof_icsf
    chooser = mu_star if family == "icof-w" else nu_star
    label = "mu" if family == "icof-w" else "nu"
    w_max = max(2, (max(K_values) + 1) // 2)
    names = ["K"]
    for w in range(2, w_max + 1):
        names += [f"w{w}", f"w{w}_decimal"]
    names += [label, "optimized", "optimized_decimal"]
    rows = []
    for K in K_values:
        row: Dict[str, Any] = {"K": K}
        if K < 3:
            row.update({label: "unsupported", "optimized": "unsupported", "optimized_decimal": ""})
            rows.append(row)
            continue
        for w in range(2, w_max + 1):
            if w <= (K + 1) // 2:
                value = per_w(w, K)
                row[f"w{w}"] = format_fraction(value)
                row[f"w{w}_decimal"] = format_decimal(value)
            else:
                row[f"w{w}"] = ""
                row[f"w{w}_decimal"] = ""
        value = best(K)
        row.update({label: chooser(K), "optimized": format_fraction(value),
                    "optimized_decimal": format_decimal(value)})
        rows.append(row)
    return rows, names


def _table_xfd(K_values: Iterable[int]) -> Tuple[List[Dict[str, Any]], List[str]]:
    names = ["K", "M2", "M2_decimal", "M3", "M3_decimal", "wide_M", "wide", "wide_decimal"]
    rows = []
    for K in K_values:
        row: Dict[str, Any] = {"K": K}
        row.update(_value_cells("M2", lambda: dof_xfd(2, K), K >= 2))
        row.update(_value_cells("M3", lambda: dof_xfd(3, K), K >= 2))
        wide_M = (K + 1) // 2 + 1
        row["wide_M"] = wide_M
        row.update(_value_cells("wide", lambda: dof_xfd(wide_M, K), K >= 2))
        rows.append(row)
    return rows, names


def _table_x(config: RunConfig, K_values: Iterable[int]) -> Tuple[List[Dict[str, Any]], List[str]]:
    models = config.models or [XFD, XOF, XSF]
    if any(m.channel != "X" for m in models):
        raise UsageError("the x family takes xfd, xof and xsf only")
    names = ["K"]
    for model in models:
        names += [model.name, f"{model.name}_decimal"]
    rows = []
    for K in K_values:
        row: Dict[str, Any] = {"K": K}
        for model in models:
            M = K if model == XFD else None
            row.update(_value_cells(model.name, _dof_thunk(model, K, M), K >= 2))
        rows.append(row)
    return rows, names


def cmd_table(config: RunConfig) -> int:
    """Figure-data table for one family over a K range."""
    K_values = list(_k_values(config, (3, 30)))
    if config.family == "ic":
        rows, names = _table_ic(config, K_values)
    elif config.family in ("icof-w", "icsf-w"):
        rows, names = _table_per_w(K_values, config.family)
    elif config.family == "xfd":
        rows, names = _table_xfd(K_values)
    else:
        rows, names = _table_x(config, K_values)
    _progress(config, f"Table {config.family}: {len(rows)} rows")
    _emit(config, rows, names)
    return EXIT_OK


def _limit_rows() -> List[Dict[str, Any]]:
    entries: List[Tuple[str, str, Union[Fraction, float]]] = [
        ("icfd", "", asymptote(ICFD)),
        ("icof", "", asymptote(ICOF)),
        ("icsf", "", asymptote(ICSF)),
        ("xfd", "2", asymptote(XFD, 2)),
        ("xfd", "3", asymptote(XFD, 3)),
        ("xfd", "wide", asymptote(XFD, "wide")),
        ("xof", "", asymptote(XOF)),
        ("xsf", "", asymptote(XSF)),
    ]
    rows = []
    for name, M, value in entries:
        exact = format_fraction(value) if isinstance(value, Fraction) else ""
        rows.append({"model": name, "M": M, "limit": exact, "limit_decimal": format_decimal(value)})
    return rows


def cmd_limits(config: RunConfig) -> int:
    """Every K -> infinity limit."""
    _emit(config, _limit_rows(), ["model", "M", "limit", "limit_decimal"])
    return EXIT_OK


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------

def simulate_one(model_name: str, K: int, M: Optional[int], seed: int,
                 field_mode: str = "prime", strict: bool = True,
                 trace: Optional[str] = None) -> Dict[str, Any]:
    """
    Run one seed of a scheme; returns the serialized report plus a verdict.

    Module-level so worker processes can pickle it.
    """
    model = ModelId.from_name(model_name)
    policy = build_policy(model, K, M)
    try:
        report, ctx = execute_policy(policy, seed=seed, field=field_mode, strict=strict)
    except FeasibilityError as e:
        return {"seed": seed, "ok": False, "error": str(e), "report": None}
    if trace and ctx is not None:
        write_trace(trace, ctx.state, ctx.channel, report)
    # strict runs raise on violations; lenient runs only record them
    ok = report.all_decodable and not report.division_undefined and report.matches_analytic
    return {"seed": seed, "ok": ok, "error": "", "report": report.to_dict(),
            "text": format_sim_report(report)}


def cmd_simulate(config: RunConfig) -> int:
    """Run seeds seed..seed+trials-1 and report per-trial verdicts."""
    if config.model is None or config.K is None:
        raise UsageError("simulate requires --model and --k")
    model = config.model
    try:
        M = model.resolve_transmitters(config.K, config.M)
    except ValueError as e:
        raise UsageError(str(e))
    try:
        policy = build_policy(model, config.K, M)
    except UnsupportedRegimeError as e:
        raise UsageError(f"{e} (analytic value: retroalign dof --model {model.name} --k {config.K})")
    if policy.analytic_only:
        raise UsageError(
            f"{model.name} M={M} K={config.K} is analytic only ({policy.notes}); "
            f"DoF = {format_fraction(policy.analytic_dof)}"
        )

    seeds = [config.seed + n for n in range(config.trials)]
    _progress(config, f"Simulating {model.name} K={config.K} M={M}: {len(seeds)} seeds, "
                      f"{policy.total_slots()} slots per run")
    start_time = time.time()
    jobs = [(model.name, config.K, M, s, config.field, config.strict,
             config.trace if n == 0 else None) for n, s in enumerate(seeds)]
    if config.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=config.jobs) as pool:
            results = list(pool.map(simulate_one, *zip(*jobs)))
    else:
        results = [simulate_one(*job) for job in jobs]
    elapsed = time.time() - start_time

    rows = []
    for result in results:
        report = result["report"] or {}
        rows.append({
            "seed": result["seed"],
            "model": model.name,
            "K": config.K,
            "M": M,
            "slots": report.get("slots_used", ""),
            "symbols": report.get("symbols_injected", ""),
            "empirical_dof": report.get("empirical_dof", ""),
            "analytic_dof": report.get("analytic_dof", format_fraction(policy.analytic_dof)),
            "all_decodable": all(report.get("per_rx_decodable", {"": False}).values()),
            "violations": len(report.get("feasibility_violations", [])) if report else "",
            "ok": result["ok"],
            "error": result["error"],
        })
    passed = sum(1 for r in results if r["ok"])
    aggregate = {"model": model.name, "K": config.K, "M": M, "trials": len(results),
                 "passed": passed, "expected_dof": format_fraction(policy.expected_dof())}
    _emit(config, rows, list(rows[0].keys()), extra=aggregate)

    if config.verbose or config.output:
        stream = sys.stdout if config.output else sys.stderr
        first = results[0]
        if first.get("text"):
            print(first["text"], file=stream)
        print(f"Trials passed:       {passed}/{len(results)}", file=stream)
        print(f"Elapsed:             {elapsed:.2f} s", file=stream)
    return EXIT_OK if passed == len(results) else EXIT_FAILURE


# ---------------------------------------------------------------------------
# verify
# ---------------------------------------------------------------------------

@dataclass
class Check:
    name: str
    passed: bool
    detail: str = ""


GOLDEN_VALUES: List[Tuple[str, Callable[[], Fraction], Fraction]] = [
    ("icfd K=3", lambda: dof_icfd(3), Fraction(6, 5)),
    ("icfd K=4", lambda: dof_icfd(4), Fraction(24, 19)),
    ("icof K=3", lambda: dof_icof(3), Fraction(6, 5)),
    ("icof K=4", lambda: dof_icof(4), Fraction(24, 19)),
    ("icsf K=3", lambda: dof_icsf(3), Fraction(6, 5)),
    ("icsf K=4", lambda: dof_icsf(4), Fraction(24, 19)),
    ("xfd 2x2", lambda: dof_xfd(2, 2), Fraction(4, 3)),
    ("xfd 3x3", lambda: dof_xfd(3, 3), Fraction(24, 17)),
    ("xof K=2", lambda: dof_xof(2), Fraction(4, 3)),
    ("xof K=3", lambda: dof_xof(3), Fraction(3, 2)),
    ("xsf K=2", lambda: dof_xsf(2), Fraction(4, 3)),
    ("xsf K=3", lambda: dof_xsf(3), Fraction(27, 17)),
]

# (model, K, M, slots per run where the worked examples state them)
GOLDEN_SIMULATIONS: List[Tuple[ModelId, int, Optional[int], Optional[int]]] = [
    (ICFD, 3, None, 5), (ICFD, 4, None, 19), (ICFD, 5, None, None),
    (ICOF, 3, None, None), (ICOF, 4, None, None), (ICOF, 5, None, None),
    (ICSF, 3, None, None), (ICSF, 4, None, None),
    (XOF, 2, None, None), (XOF, 3, None, 6), (XOF, 4, None, None),
    (XOF, 5, None, None), (XOF, 6, None, None),
    (XFD, 2, 2, 3), (XFD, 3, 3, 51),
    (XSF, 2, None, None), (XSF, 3, None, 17),
]


def _check_golden() -> List[Check]:
    checks = []
    for name, compute, expected in GOLDEN_VALUES:
        value = compute()
        checks.append(Check(f"golden {name}", value == expected, f"{value} vs {expected}"))
    return checks


def _check_appendices(K_max: int = 30) -> List[Check]:
    report = consistency_sweep(K_max)
    first = report.first_mismatch
    return [Check(f"appendices K<={K_max}", report.ok,
                  first.describe() if first else f"{len(report.rows)} rows")]


def _check_asymptotics() -> List[Check]:
    checks = [Check("icfd(1000) near 4/3", abs(float(dof_icfd(1000)) - 4 / 3) < 1e-2)]
    for name, fn in (("icof", dof_icof), ("icsf", dof_icsf)):
        values = [fn(K) for K in range(3, 61)]
        increasing = all(b > a for a, b in zip(values, values[1:]))
        checks.append(Check(f"{name} increasing below 2 for K<=60",
                            increasing and all(v < 2 for v in values)))
    checks.append(Check("xfd(2,500) near 1/ln2",
                        abs(float(dof_xfd(2, 500)) - 1 / math.log(2)) < 1e-2))
    checks.append(Check("xfd(3,500) near 8/(3ln3+2)",
                        abs(float(dof_xfd(3, 500)) - 8 / (3 * math.log(3) + 2)) < 1e-2))
    wide = float(dof_xfd(31, 60))
    checks.append(Check("xfd wide K=60 near 6/(pi^2-6)",
                        abs(wide - 6 / (math.pi ** 2 - 6)) < 5e-2, f"{wide:.6f}"))
    return checks


def _check_orderings(K_max: int = 30) -> List[Check]:
    x_order = [K for K in range(3, K_max + 1) if not dof_xfd(K, K) < dof_xof(K) < dof_xsf(K)]
    of_fd = [K for K in range(6, K_max + 1) if not dof_icof(K) > dof_icfd(K)]
    sf_of = [K for K in [5] + list(range(7, K_max + 1)) if not dof_icsf(K) > dof_icof(K)]
    return [
        Check("xfd(K,K) < xof < xsf", not x_order, f"violations at K={x_order}" if x_order else ""),
        Check("icof > icfd for K>=6", not of_fd, f"violations at K={of_fd}" if of_fd else ""),
        Check("icsf > icof for K=5 and K>=7", not sf_of, f"violations at K={sf_of}" if sf_of else ""),
    ]


def _check_oracle(K_max: int = 60) -> List[Check]:
    mu_bad = [K for K in range(3, K_max + 1) if mu_star(K) != mu_exhaustive(K)]
    nu_bad = []
    for K in range(3, K_max + 1):
        values = [dof_icsf_at(w, K) for w in range(2, (K + 1) // 2 + 1)]
        if nu_star(K) != 2 + values.index(max(values)):
            nu_bad.append(K)
    return [
        Check("mu from w* matches exhaustive search", not mu_bad, f"K={mu_bad}" if mu_bad else ""),
        Check("nu is the lowest argmax", not nu_bad, f"K={nu_bad}" if nu_bad else ""),
    ]


def _check_simulation(config: RunConfig) -> List[Check]:
    checks = []
    for model, K, M, slots in GOLDEN_SIMULATIONS:
        policy = build_policy(model, K, M)
        label = f"simulate {model.name} K={K}" + (f" M={M}" if M else "")
        if slots is not None and policy.total_slots() != slots:
            checks.append(Check(label, False, f"{policy.total_slots()} slots, expected {slots}"))
            continue
        failed = []
        for seed in range(config.seed, config.seed + config.trials):
            result = simulate_one(model.name, K, M, seed, config.field, config.strict)
            if not result["ok"]:
                failed.append(seed)
                break
        checks.append(Check(label, not failed, f"first failing seed {failed[0]}" if failed else ""))
        _progress(config, f"  {label}: {'ok' if not failed else 'FAILED'}")
    return checks


def phase_cases() -> List[Tuple[ModelId, int, Optional[int], List[int]]]:
    return (
        [(model, K, None, list(range(2, K))) for model in (ICFD, ICOF) for K in (6, 7, 8)]
        + [(ICSF, K, None, list(range(nu_star(K) + 1, K + 1))) for K in (6, 7)]
        + [(XFD, 4, 3, [2]), (XFD, 6, 4, [2, 3])]
    )


def _check_phases(config: RunConfig) -> List[Check]:
    checks = []
    for model, K, M, orders in phase_cases():
        for m in orders:
            verdict = verify_phase(model, m, K, M, seed=config.seed)
            label = f"phase {model.name} K={K}" + (f" M={M}" if M else "") + f" m={m}"
            checks.append(Check(label, verdict.ok, "; ".join(verdict.failures[:3])))
            _progress(config, f"  {label}: {'ok' if verdict.ok else 'FAILED'}")
    return checks


def random_square_system(n: int, rng: np.random.Generator, fld: Any,
                         mask: Optional[np.ndarray] = None) -> Tuple[List[LinearExpr], List[Any]]:
    """n random equations in n symbols, optionally restricted to a support mask."""
    pool = SymbolPool()
    symbols = pool.mint_fresh(n, 0, 0)
    eqs = []
    for row in range(n):
        coeffs = fld.random_nonzero(n, rng)
        terms = {s: c for k, (s, c) in enumerate(zip(symbols, coeffs)) if mask is None or mask[row, k]}
        eqs.append(LinearExpr(terms, fld))
    return eqs, symbols


def _check_genericity(config: RunConfig, trials: int = 10_000, shared: int = 1_000) -> List[Check]:
    rng = np.random.default_rng(config.seed)
    failures = 0
    for _ in range(trials):
        n = int(rng.integers(1, 9))
        eqs, symbols = random_square_system(n, rng, PRIME_FIELD)
        if not decodable(eqs, [], symbols):
            failures += 1
    # failure probability per system is at most n / p by Schwartz-Zippel
    checks = [Check(f"prime decodable in {trials} random square systems", failures == 0,
                    f"{failures} failures")]
    disagreements = 0
    for _ in range(shared):
        n = int(rng.integers(1, 9))
        mask = rng.random((n, n)) < 0.5
        seed = int(rng.integers(0, 2 ** 31))
        prime_eqs, prime_symbols = random_square_system(n, np.random.default_rng(seed), PRIME_FIELD, mask)
        complex_eqs, complex_symbols = random_square_system(n, np.random.default_rng(seed), COMPLEX_FIELD, mask)
        if decodable(prime_eqs, [], prime_symbols) != decodable(complex_eqs, [], complex_symbols):
            disagreements += 1
    checks.append(Check(f"complex agrees with prime on {shared} shared structures",
                        disagreements == 0, f"{disagreements} disagreements"))
    return checks


def run_verification(config: RunConfig) -> List[Check]:
    scope = config.scope
    checks: List[Check] = []
    if scope in ("all", "golden"):
        checks += _check_golden()
    if scope in ("all", "appendices"):
        checks += _check_appendices()
    if scope in ("all", "asymptotics"):
        checks += _check_asymptotics()
    if scope in ("all", "orderings"):
        checks += _check_orderings()
    if scope in ("all", "oracle"):
        checks += _check_oracle()
    if scope in ("all", "simulation"):
        checks += _check_simulation(config)
    if scope in ("all", "phases"):
        checks += _check_phases(config)
    if scope in ("all", "genericity"):
        checks += _check_genericity(config)
    return checks


def cmd_verify(config: RunConfig) -> int:
    """Run the selected checks and print a JSON summary."""
    _progress(config, f"Verification scope: {config.scope}")
    checks = run_verification(config)
    failed = [c for c in checks if not c.passed]
    summary = {
        "scope": config.scope,
        "passed": not failed,
        "checks": [{"name": c.name, "passed": c.passed, "detail": c.detail} for c in checks],
        "first_failure": None if not failed else {"name": failed[0].name, "detail": failed[0].detail},
    }
    text = json.dumps(summary, indent=2) + "\n"
    if config.output:
        with open(config.output, "w", encoding="utf-8") as f:
            f.write(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK if not failed else EXIT_FAILURE


COMMANDS: Dict[str, Callable[[RunConfig], int]] = {
    "dof": cmd_dof,
    "table": cmd_table,
    "simulate": cmd_simulate,
    "verify": cmd_verify,
    "limits": cmd_limits,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Main CLI entrypoint."""
    parser = create_argument_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_USAGE if e.code not in (0, None) else EXIT_OK

    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        config = build_config(args)
        return COMMANDS[config.command](config)
    except (UsageError, UnsupportedRegimeError) as e:
        print(f"Error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as e:
        print(f"Error: {e}", file=sys.stderr)
        if args.verbose:
            import traceback
            traceback.print_exc()
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
