"""Command-line interface.

Exit codes: 0 success, 2 usage error, 3 infeasible problem, 4 numeric-domain error.
Error targets are given as log10 values (``--eps -10`` means 1e-10).
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import hashlib
import json
import math
import sys
from pathlib import Path

from . import __version__
from .bound import FeedbackSchedule, evaluate_theorem1
from .channel import DomainError
from .hyptest import TestParams, np_beta_for_epsilon, np_errors_from_params
from .opt import OptProblem, SweepTemplate, optimize, optimize_exhaustive, optimize_stochastic, sweep_rate_curve
from .rcu import MessageCount, rcu_bsc
from .sim import SimConfig, check_bound, simulate, write_trace_csv

EXIT_OK, EXIT_USAGE, EXIT_INFEASIBLE, EXIT_DOMAIN = 0, 2, 3, 4
LN10 = math.log(10.0)


class UsageError(Exception):
    pass


def fmt(x) -> str:
    if isinstance(x, float):
        if math.isinf(x):
            return "-inf" if x < 0 else "inf"
        return f"{x:.12g}"
    return str(x)


def log10_of(log_value: float) -> float:
    return log_value / LN10


def _ints(text, what):
    if isinstance(text, (list, tuple)):
        return tuple(int(v) for v in text)
    try:
        return tuple(int(v) for v in str(text).replace(" ", "").split(",") if v != "")
    except ValueError:
        raise UsageError(f"{what} must be a comma-separated list of integers, got {text!r}")


def _floats(text, what):
    if isinstance(text, (list, tuple)):
        return tuple(float(v) for v in text)
    try:
        return tuple(float(v) for v in str(text).replace(" ", "").split(",") if v != "")
    except ValueError:
        raise UsageError(f"{what} must be a comma-separated list of numbers, got {text!r}")


def _schedule(text) -> FeedbackSchedule:
    times = _ints(text, "schedule")
    try:
        return FeedbackSchedule(times)
    except DomainError as e:
        raise UsageError(f"invalid schedule: {e}")


def _message_count(args) -> MessageCount:
    if getattr(args, "m", None) is not None:
        return MessageCount.of(int(args.m))
    if args.log2m is None:
        raise UsageError("one of --log2m or --m is required")
    return MessageCount.from_log2(float(args.log2m))


def _log_eps(args) -> float:
    if args.eps is None:
        raise UsageError("--eps (log10 of the target error probability) is required")
    e = float(args.eps)
    if not e < 0:
        raise UsageError(f"--eps is a log10 value and must be negative, got {args.eps}")
    return e * LN10


def _log2m_list(text):
    """``"4:16:2"`` (inclusive range), ``"4,6,8"``, or empty."""
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    text = str(text).strip()
    if not text:
        return []
    if ":" in text:
        parts = [float(v) for v in text.split(":")]
        if len(parts) == 2:
            parts.append(1.0)
        start, stop, step = parts
        if step <= 0:
            raise UsageError("log2m range step must be positive")
        out, v = [], start
        while v <= stop + 1e-9:
            out.append(round(v, 12))
            v += step
        return out
    return list(_floats(text, "log2m list"))


def _box(text, L):
    if text is None:
        return None
    ranges = []
    for part in str(text).split(","):
        lo, _, hi = part.partition(":")
        ranges.append((int(lo), int(hi or lo)))
    if len(ranges) != L:
        raise UsageError(f"--box needs {L} ranges lo:hi, got {len(ranges)}")
    return tuple(ranges)


# --------------------------------------------------------------------------
# manifests


def _digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(command: str, params: dict, outputs, seed=None) -> Path:
    outputs = [Path(o) for o in outputs]
    manifest = {
        "command": command,
        "parameters": params,
        "seed": seed,
        "version": __version__,
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(),
        "outputs": {str(o): _digest(o) for o in outputs},
    }
    path = outputs[0].with_name(outputs[0].name + ".manifest.json")
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def _params(args) -> dict:
    return {k: v for k, v in vars(args).items() if k not in ("func", "config") and v is not None}


def _emit(text: str, out):
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


# --------------------------------------------------------------------------
# commands


def cmd_rcu(args):
    if args.n is None or args.p is None:
        raise UsageError("--n and --p are required")
    m = _message_count(args)
    val = rcu_bsc(int(args.n), m, float(args.p)).value
    lin = math.exp(val)
    if val == -math.inf:
        shown = "0"
    elif lin >= 1e-300:
        shown = fmt(lin)
    else:
        shown = "below 1e-300"
    print(f"rcu: {shown}")
    print(f"log10_rcu: {fmt(log10_of(val))}")
    return EXIT_OK


def cmd_np(args):
    if args.t_prime is None or args.p is None:
        raise UsageError("--t-prime and --p are required")
    t, p = int(args.t_prime), float(args.p)
    if args.gamma is not None:
        params = TestParams(t, int(args.gamma), float(args.lam or 0.0))
        errs = np_errors_from_params(params, p)
    else:
        params, errs = np_beta_for_epsilon(t, p, _log_eps(args))
    out = {
        "t_prime": params.t_prime,
        "gamma": params.gamma,
        "lambda": params.lam,
        "eps": math.exp(errs.type_one),
        "beta": math.exp(errs.type_two),
        "log10_eps": log10_of(errs.type_one),
        "log10_beta": log10_of(errs.type_two),
        "p_cont": math.exp(errs.p_cont),
    }
    _emit(json.dumps(out, indent=2) + "\n", None)
    return EXIT_OK


def cmd_bound(args):
    if args.schedule is None or args.p is None or args.gammas is None:
        raise UsageError("--schedule, --p and --gammas are required")
    schedule = _schedule(args.schedule)
    gammas = _ints(args.gammas, "gammas")
    lambdas = _floats(args.lambdas, "lambdas") if args.lambdas is not None else None
    res = evaluate_theorem1(schedule, _message_count(args), float(args.p), gammas, lambdas)
    text = json.dumps(res.to_dict(), indent=2) + "\n"
    _emit(text, args.out)
    if args.out:
        write_manifest("bound", _params(args), [args.out])
    return EXIT_OK


def _problem(args) -> OptProblem:
    if args.p is None or args.L is None:
        raise UsageError("--p and --L are required")
    m = _message_count(args)
    L = int(args.L)
    box = _box(args.box, L)
    budget = int(args.budget) if args.budget is not None else 10_000
    log_eps = _log_eps(args)
    if box is None:
        return OptProblem.with_default_box(m, float(args.p), log_eps, L, budget,
                                           float(args.box_factor) if args.box_factor is not None else 4.0)
    return OptProblem(m, float(args.p), log_eps, L, box, budget)


def cmd_optimize(args):
    problem = _problem(args)
    seed = int(args.seed or 0)
    restarts = int(args.restarts or 8)
    method = args.method or "auto"
    if method == "exhaustive":
        res = optimize_exhaustive(problem)
    elif method == "stochastic":
        res = optimize_stochastic(problem, restarts=restarts, seed=seed)
    else:
        res = optimize(problem, restarts=restarts, seed=seed)
    text = json.dumps(res.to_dict(), indent=2) + "\n"
    _emit(text, args.out)
    if args.out:
        write_manifest("optimize", _params(args), [args.out], seed)
    return EXIT_OK if res.feasible else EXIT_INFEASIBLE


def sweep_header(L: int) -> list:
    k = (L - 1) // 2
    return (["log2M", "N_bound", "eps_bound_log10", "rate"]
            + [f"n_{i}" for i in range(1, L + 1)] + [f"gamma_{i}" for i in range(1, k + 1)])


def cmd_sweep(args):
    if args.p is None or args.L is None or args.out is None:
        raise UsageError("--p, --L and --out are required")
    L = int(args.L)
    if L < 3 or L % 2 == 0:
        raise UsageError(f"--L must be odd and at least 3, got {L}")
    log_eps = _log_eps(args)
    values = _log2m_list(args.log2m_range if args.log2m_range is not None else "")
    template = SweepTemplate(
        box_factor=float(args.box_factor) if args.box_factor is not None else 4.0,
        budget=int(args.budget) if args.budget is not None else 10_000,
        restarts=int(args.restarts or 8),
        seed=int(args.seed or 0),
    )
    rows = []
    if values:
        for pt in sweep_rate_curve(float(args.p), log_eps, L, values, template):
            if not pt.feasible:
                continue
            rows.append([fmt(pt.log2_m), fmt(pt.n_bound), fmt(log10_of(pt.log_eps_bound)), fmt(pt.rate)]
                        + [str(t) for t in pt.schedule] + [str(g) for g in pt.gammas])
    with open(args.out, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(sweep_header(L))
        wr.writerows(rows)
    write_manifest("sweep", _params(args), [args.out], template.seed)
    return EXIT_OK


def schedule_report_rows(rows: list) -> list:
    out = []
    for row in rows:
        n_bound = float(row["N_bound"])
        L = sum(1 for k in row if k.startswith("n_"))
        out.append([fmt(n_bound)] + [fmt(int(row[f"n_{i}"]) / n_bound) for i in range(1, L + 1)])
    return out


def cmd_schedule_report(args):
    if args.input is None:
        raise UsageError("--input is required")
    with open(args.input, newline="") as fh:
        reader = csv.DictReader(fh)
        rows = list(reader)
        fields = reader.fieldnames or []
    L = sum(1 for h in fields if h.startswith("n_"))
    header = ["N_bound"] + [f"n_{i}/N" for i in range(1, L + 1)]
    lines = ([header] + schedule_report_rows(rows)) if rows else []
    if args.out:
        with open(args.out, "w", newline="") as fh:
            csv.writer(fh, lineterminator="\n").writerows(lines)
        write_manifest("schedule-report", _params(args), [args.out])
    else:
        csv.writer(sys.stdout, lineterminator="\n").writerows(lines)
    return EXIT_OK


def cmd_simulate(args):
    data = dict(args.sim_config or {})
    if args.trials is not None:
        data["trials"] = args.trials
    if args.seed is not None:
        data["master_seed"] = args.seed
    if not data:
        raise UsageError("--config with a simulation configuration is required")
    if int(data.get("trials", 0)) < 1:
        raise UsageError("trials must be a positive integer")
    try:
        config = SimConfig.from_dict(data)
    except KeyError as e:
        raise UsageError(f"simulation config is missing {e}")
    report = simulate(config, workers=int(args.workers or 1))
    out = report.to_dict()
    if config.is_bsc:
        bound = evaluate_theorem1(config.schedule, MessageCount.of(config.m), config.channel.p,
                                  config.gammas, config.lambdas)
        check = check_bound(report, bound)
        out["bound"] = {"eps_bound": bound.eps_bound, "n_bound": bound.n_bound}
        out["check"] = check.to_dict()
        verdict = check.to_dict()["verdict"]
    else:
        verdict = "N/A (no exact bound for general DMCs)"
    text = json.dumps(out, indent=2, sort_keys=True) + "\n"
    _emit(text, args.out)
    outputs = [args.out] if args.out else []
    if args.trace:
        write_trace_csv(config, args.trace)
        outputs.append(args.trace)
    if outputs:
        write_manifest("simulate", config.to_dict(), outputs, config.master_seed)
    print(f"bound check: {verdict}", file=sys.stderr if not args.out else sys.stdout)
    return EXIT_OK


# --------------------------------------------------------------------------
# parser


def _add_m(p):
    p.add_argument("--log2m", type=float, help="log2 of the number of messages")
    p.add_argument("--m", type=int, help="exact number of messages (alternative to --log2m)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vlbf", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", help="JSON file whose keys mirror the flag names; flags override it")
        p.set_defaults(func=func)
        return p

    p = add("rcu", cmd_rcu, "random-coding union bound over the BSC")
    p.add_argument("--n", type=int)
    _add_m(p)
    p.add_argument("--p", type=float)

    p = add("np", cmd_np, "Neyman-Pearson confirmation test errors")
    p.add_argument("--t-prime", type=int)
    p.add_argument("--p", type=float)
    p.add_argument("--eps", type=str, help="log10 of the target type-I error")
    p.add_argument("--gamma", type=int, help="evaluate a given threshold instead of solving for --eps")
    p.add_argument("--lam", type=float)

    p = add("bound", cmd_bound, "evaluate the VLBF achievability bounds")
    p.add_argument("--schedule", type=str, help="comma-separated feedback times n_1,...,n_L")
    _add_m(p)
    p.add_argument("--p", type=float)
    p.add_argument("--gammas", type=str)
    p.add_argument("--lambdas", type=str)
    p.add_argument("--out")

    p = add("optimize", cmd_optimize, "optimise feedback times and thresholds")
    _add_m(p)
    p.add_argument("--p", type=float)
    p.add_argument("--eps", type=str, help="log10 of the target error probability")
    p.add_argument("--L", type=int)
    p.add_argument("--box", type=str, help="per-coordinate ranges lo:hi,lo:hi,...")
    p.add_argument("--box-factor", type=float)
    p.add_argument("--budget", type=int)
    p.add_argument("--method", choices=["auto", "exhaustive", "stochastic"])
    p.add_argument("--restarts", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")

    p = add("sweep", cmd_sweep, "rate versus expected decoding time curve (CSV)")
    p.add_argument("--p", type=float)
    p.add_argument("--eps", type=str, help="log10 of the target error probability")
    p.add_argument("--L", type=int)
    p.add_argument("--log2m-range", type=str, help="start:stop[:step] inclusive, or a comma list")
    p.add_argument("--box-factor", type=float)
    p.add_argument("--budget", type=int)
    p.add_argument("--restarts", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")

    p = add("simulate", cmd_simulate, "Monte Carlo simulation with a bound-validity verdict")
    p.add_argument("--trials", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--trace", help="optional per-trial CSV")
    p.add_argument("--out")

    p = add("schedule-report", cmd_schedule_report, "feedback times normalised by N_bound")
    p.add_argument("--input")
    p.add_argument("--out")
    return parser


def _merge_config(args, parser):
    if not args.config:
        args.sim_config = None
        return args
    try:
        data = json.loads(Path(args.config).read_text())
    except (OSError, json.JSONDecodeError) as e:
        raise UsageError(f"cannot read config {args.config}: {e}")
    if args.command == "simulate":
        args.sim_config = data
        return args
    args.sim_config = None
    known = vars(args)
    for key, value in data.items():
        dest = key.replace("-", "_")
        if dest not in known or dest in ("func", "command", "config"):
            raise UsageError(f"unknown key {key!r} in config file")
        if known[dest] is None:
            setattr(args, dest, value)
    return args


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        args = _merge_config(args, parser)
        return args.func(args)
    except UsageError as e:
        print(f"vlbf {args.command}: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except DomainError as e:
        print(f"vlbf {args.command}: domain error: {e}", file=sys.stderr)
        return EXIT_DOMAIN


if __name__ == "__main__":
    sys.exit(main())
