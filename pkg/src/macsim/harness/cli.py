"""Command line entry point: ``macsim run|sweep|check|stats``.

Exit codes: 0 all verdicts passed, 2 some verdict failed (witnesses go to
stderr), 64 usage or configuration error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Sequence

from ..checkers import (check_agreement, check_coherence, check_convergence, check_epsilon_agreement,
                        check_validity)
from ..dyadic import Dyadic
from .config import PROTOCOLS, ConfigError, ExperimentConfig, config_from_dict, load_config, parse_number

EXIT_OK = 0
EXIT_VERDICT = 2
EXIT_USAGE = 64


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # noqa: D401 - argparse hook
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _seeds(text: str) -> tuple:
    """``5`` means seeds 0..4; ``3,7,9`` or ``10-19`` name them."""
    text = text.strip()
    if "," in text:
        return tuple(int(s) for s in text.split(","))
    if "-" in text[1:]:
        a, b = text.split("-", 1)
        return tuple(range(int(a), int(b) + 1))
    return tuple(range(int(text)))


def _add_config_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("protocol", nargs="?", choices=PROTOCOLS, help="protocol id (or give --config)")
    p.add_argument("--config", help="JSON (or YAML) experiment config")
    p.add_argument("--n", type=int)
    p.add_argument("--f", type=int)
    p.add_argument("--eps", "--epsilon", dest="epsilon")
    p.add_argument("--delta", type=float)
    p.add_argument("--n0", type=int)
    p.add_argument("--c", type=float)
    p.add_argument("--n-est", dest="n_est", type=int)
    p.add_argument("--t", type=int, help="lossy broadcast period")
    p.add_argument("--Delta", dest="Delta", type=int, help="lossy fairness window")
    p.add_argument("--drop", type=float, help="lossy drop probability")
    p.add_argument("--drop-policy", dest="drop_policy", choices=("iid", "adversarial"))
    p.add_argument("--duplicate", type=float)
    p.add_argument("--adversary")
    p.add_argument("--crash-rate", dest="crash_rate", type=float)
    p.add_argument("--byz")
    p.add_argument("--exclude-self-value", dest="include_self_value", action="store_false", default=None)
    p.add_argument("--literal-mac-ac", dest="literal", action="store_true",
                   help="mac-ac: reset the extremes at every phase start, as listed")
    p.add_argument("--p-end", dest="p_end", type=int)
    p.add_argument("--ops", dest="ops_per_node", type=int)
    p.add_argument("--seed", type=int, help="single seed")
    p.add_argument("--seeds", type=_seeds, help="count, list a,b,c or range a-b")
    p.add_argument("--budget", dest="event_budget", type=int)


def _config(args, defaults: dict | None = None) -> ExperimentConfig:
    data: dict = dict(defaults or {})
    if args.config:
        base = load_config(args.config)
        data = base.to_dict()
        if base.extra:
            data["extra"] = dict(base.extra)
    elif args.protocol is None:
        raise ConfigError("give a protocol or --config")
    if args.protocol:
        data["protocol"] = args.protocol
    for key in ("n", "f", "epsilon", "delta", "n0", "c", "n_est", "t", "Delta", "drop", "drop_policy", "duplicate",
                "adversary", "crash_rate", "byz", "include_self_value", "p_end", "ops_per_node", "event_budget"):
        v = getattr(args, key, None)
        if v is not None:
            data[key] = v
    if args.seed is not None:
        data["seeds"] = (args.seed,)
    if args.seeds is not None:
        data["seeds"] = args.seeds
    if args.literal:
        data["extra"] = {**data.get("extra", {}), "carry_extremes": False}
    return config_from_dict(data)


def _write(path: str | None, text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


def cmd_run(args) -> int:
    from ..protocols.storecollect import extract_history, history_to_jsonl
    from .experiment import failure_report, phases_csv, rows_csv, run_experiment

    cfg = _config(args)
    results = run_experiment(cfg, keep_traces=bool(args.trace_dir))
    _write(args.out, rows_csv(results))
    if args.phases:
        _write(args.phases, phases_csv(results))
    if args.trace_dir:
        d = Path(args.trace_dir)
        d.mkdir(parents=True, exist_ok=True)
        for r in results:
            (d / f"{cfg.protocol}-seed{r.seed}.jsonl").write_text(r.trace.to_jsonl(), encoding="utf-8")
            if cfg.protocol == "store-collect":
                (d / f"{cfg.protocol}-seed{r.seed}.history.jsonl").write_text(
                    history_to_jsonl(extract_history(r.trace)), encoding="utf-8")
    fails = failure_report(results)
    for line in fails:
        print(line, file=sys.stderr)
    return EXIT_VERDICT if fails else EXIT_OK


def cmd_sweep(args) -> int:
    from .experiment import sweep, sweep_csv

    values = [v for v in args.values.split(",") if v]
    if not values:
        raise ConfigError("--values is empty")
    # the swept parameter need not be given separately
    cfg = _config(args, {args.vary: int(values[0])} if args.vary in ("n", "Delta") else None)
    rows = sweep(cfg, args.vary, values)
    _write(args.out, sweep_csv(rows))
    failed = sum(r["failures"] for r in rows)
    if failed:
        print(f"{failed} runs failed a verdict", file=sys.stderr)
    return EXIT_VERDICT if failed else EXIT_OK


# -------------------------------------------------------------------- check


def _parse_value(x):
    if isinstance(x, list):
        return tuple(_parse_value(v) for v in x)
    if isinstance(x, str):
        try:
            return Dyadic.parse(x)
        except (ValueError, ZeroDivisionError):
            return x
    return x


def _read_summary(path: str) -> dict:
    summary = None
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.strip():
            rec = json.loads(line)
            if rec.get("kind") == "summary":
                summary = rec
    if summary is None:
        raise ConfigError(f"{path}: no summary record; not a macsim trace")
    return summary


CHECKS = ("validity", "agreement", "epsilon-agreement", "coherence", "convergence", "regularity")


def cmd_check(args) -> int:
    prop = args.property
    if prop == "regularity":
        from ..protocols.storecollect import check_regularity, history_from_jsonl

        text = Path(args.file).read_text(encoding="utf-8")
        try:
            history = history_from_jsonl(text)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        verdict = check_regularity(history)
    else:
        summary = _read_summary(args.file)
        outputs = {int(k): _parse_value(v) for k, v in summary["outputs"].items()}
        inputs = [_parse_value(v) for v in summary["meta"].get("inputs", [])]
        protocol = summary["meta"].get("protocol", "")
        binary = protocol in ("adopt-commit", "rbc", "rbc2", "first-mover")
        if protocol == "adopt-commit" and prop in ("validity", "agreement"):
            outputs = {k: v[1] for k, v in outputs.items()}
        if prop == "validity":
            verdict = check_validity(outputs, inputs, binary=binary)
        elif prop == "agreement":
            verdict = check_agreement(outputs)
        elif prop == "epsilon-agreement":
            eps = args.eps if args.eps is not None else summary["meta"].get("epsilon")
            if eps is None:
                raise ConfigError("epsilon-agreement needs --eps")
            verdict = check_epsilon_agreement(outputs, parse_number(eps))
        elif prop == "coherence":
            verdict = check_coherence(outputs)
        else:
            verdict = check_convergence(outputs, inputs)
    print(verdict)
    return EXIT_OK if verdict else EXIT_VERDICT


# -------------------------------------------------------------------- stats


def cmd_stats_firstmover(args) -> int:
    from ..protocols.randomized import estimate_firstmover_success

    n_est = args.n_est or args.n
    est = estimate_firstmover_success(args.n, n_est, args.trials, args.seed, args.adversary, args.confidence)
    lo, hi = est.interval
    print("trials,exactly_one,probability,wilson_lo,wilson_hi")
    print(f"{est.trials},{est.exactly_one},{est.probability:.12f},{lo:.12f},{hi:.12f}")
    return EXIT_OK if lo >= args.threshold else EXIT_VERDICT


def cmd_stats_scaling(args) -> int:
    import csv

    from .experiment import run_experiment
    from .stats import fit_scaling

    if args.csv:
        with open(args.csv, newline="", encoding="utf-8") as fh:
            rows = list(csv.DictReader(fh))
        try:
            ns = [float(r["value"]) for r in rows]
            means = [float(r["broadcasts_mean"]) for r in rows]
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"{args.csv}: expected a sweep CSV over n ({exc})") from None
    else:
        ns, means = [], []
        for n in (int(x) for x in args.ns.split(",")):
            cfg = ExperimentConfig("rbc2", n, n0=args.n0, c=args.c, seeds=tuple(range(args.trials))).validate()
            rows = [r.row for r in run_experiment(cfg)]
            ns.append(n)
            means.append(sum(r.broadcasts for r in rows) / len(rows))
            print(f"n={n} mean_broadcasts={means[-1]:.12g}", file=sys.stderr)
    k = fit_scaling(ns, means)
    print(f"exponent,{k:.12f}")
    return EXIT_OK if args.max_exponent is None or k <= args.max_exponent else EXIT_VERDICT


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="macsim", description="Abstract MAC layer and lossy-channel consensus simulator.")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="run one configuration over its seeds")
    _add_config_args(run)
    run.add_argument("--out", help="metrics CSV path (default stdout)")
    run.add_argument("--phases", help="per-phase range CSV path ('-' for stdout)")
    run.add_argument("--trace-dir", help="write one JSON-lines trace per seed here")
    run.set_defaults(func=cmd_run)

    sw = sub.add_parser("sweep", help="vary one parameter and aggregate")
    _add_config_args(sw)
    sw.add_argument("--vary", required=True, help="n, epsilon, delta, drop or Delta")
    sw.add_argument("--values", required=True, help="comma-separated values")
    sw.add_argument("--out")
    sw.set_defaults(func=cmd_sweep)

    ck = sub.add_parser("check", help="apply a checker to a trace or history file")
    ck.add_argument("property", choices=CHECKS)
    ck.add_argument("file")
    ck.add_argument("--eps")
    ck.set_defaults(func=cmd_check)

    st = sub.add_parser("stats", help="statistical experiments")
    stsub = st.add_subparsers(dest="stat", required=True, parser_class=_Parser)
    fm = stsub.add_parser("firstmover", help="P(exactly one successful original coin)")
    fm.add_argument("--n", type=int, default=4)
    fm.add_argument("--n-est", dest="n_est", type=int)
    fm.add_argument("--trials", type=int, default=5000)
    fm.add_argument("--seed", type=int, default=0)
    fm.add_argument("--adversary", default="random")
    fm.add_argument("--confidence", type=float, default=0.95)
    fm.add_argument("--threshold", type=float, default=0.05)
    fm.set_defaults(func=cmd_stats_firstmover)
    sc = stsub.add_parser("scaling", help="log-log exponent of mean rbc2 broadcasts against n")
    sc.add_argument("--ns", default="4,8,16,32")
    sc.add_argument("--trials", type=int, default=200)
    sc.add_argument("--n0", type=int, default=1)
    sc.add_argument("--c", type=float, default=4.0)
    sc.add_argument("--csv", help="fit a sweep CSV instead of running")
    sc.add_argument("--max-exponent", dest="max_exponent", type=float)
    sc.set_defaults(func=cmd_stats_scaling)
    return ap


def main(argv: Sequence[str] | None = None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"macsim: configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, OSError) as exc:
        print(f"macsim: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
