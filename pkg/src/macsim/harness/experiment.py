"""Run configured experiments, apply every relevant checker, emit CSV rows."""

from __future__ import annotations

import csv
import io
import os
import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Callable, Iterable, NamedTuple, Sequence

from ..checkers import (Verdict, check_agreement, check_coherence, check_convergence, check_epsilon_agreement,
                        check_validity)
from ..dyadic import Dyadic
from ..protocols import approximate as ac
from ..protocols import lossy as lz
from ..protocols import randomized as rz
from ..protocols import storecollect as sc
from ..sim.adversary import make_adversary
from ..sim.engine import MacEngine
from ..sim.lossy import check_fairness
from ..sim.rng import NodeRng, derive_seed
from ..sim.trace import Trace
from .config import ConfigError, ExperimentConfig
from .stats import summarize

ROW_FIELDS = ["protocol", "n", "seed", "decided", "timeout", "value", "phases", "broadcasts", "rbc", "original",
              "follow_up", "coin", "dummy", "ranges", "wall_events", "verdict"]
PHASE_FIELDS = ["seed", "p", "honest_min", "honest_max", "range"]
DIGITS = 12


class MetricsRow(NamedTuple):
    protocol: str
    n: int
    seed: int
    decided: bool
    timeout: bool
    value: int | None
    phases: int | None
    broadcasts: int
    rbc: int | None
    original: int | None
    follow_up: int | None
    coin: int | None
    dummy: int | None
    ranges: tuple | None
    wall_events: int
    verdict: str

    def csv_cells(self) -> list:
        out = []
        for name, v in zip(ROW_FIELDS, self):
            if v is None:
                out.append("")
            elif name == "ranges":
                out.append(";".join(_decimal(r) for r in v))
            elif isinstance(v, bool):
                out.append("true" if v else "false")
            else:
                out.append(v)
        return out


def _decimal(x) -> str:
    if isinstance(x, Dyadic):
        return x.decimal(DIGITS)
    return f"{float(x):.{DIGITS}f}"


@dataclass
class RunResult:
    seed: int
    trace: Trace
    inputs: list
    verdicts: list[Verdict]
    row: MetricsRow
    phase_table: list = field(default_factory=list)  # (p, min, max, range)

    @property
    def failures(self) -> list[Verdict]:
        return [v for v in self.verdicts if not v]


def _from_pair(name: str, result: tuple[bool, dict]) -> Verdict:
    ok, witness = result
    return Verdict(name, ok, witness)


def _dyadic_inputs(rng: random.Random, n: int) -> list[Dyadic]:
    return [Dyadic(rng.randrange((1 << 10) + 1), 10) for _ in range(n)]


def _mac_adversary(cfg: ExperimentConfig, seed: int, max_crashes: int | None = None):
    return make_adversary(cfg.adversary, derive_seed("adv", seed), cfg.crash_rate, max_crashes)


def _termination(trace: Trace) -> Verdict:
    if trace.timeout:
        return Verdict.fail("termination", end_time=trace.end_time, reason="event budget exhausted or deadlock")
    return Verdict.ok("termination")


# -------------------------------------------------------------- per protocol


def _run_store_collect(cfg, seed, rng):
    work = sc.random_workload(cfg.n, cfg.ops_per_node, rng)
    eng = MacEngine([sc.StoreCollect(i, ops) for i, ops in enumerate(work)], meta=_meta(cfg, seed))
    trace = eng.run(_mac_adversary(cfg, seed), cfg.event_budget)
    verdicts = [_termination(trace), sc.check_regularity(sc.extract_history(trace))]
    return trace, work, verdicts, {}


def _bits(rng: random.Random, n: int) -> list[int]:
    return [rng.randrange(2) for _ in range(n)]


def _run_adopt_commit(cfg, seed, rng):
    inputs = _bits(rng, cfg.n)
    eng = MacEngine([rz.AdoptCommit(x) for x in inputs], meta=_meta(cfg, seed, inputs))
    trace = eng.run(_mac_adversary(cfg, seed), cfg.event_budget)
    vals = {i: o[1] for i, o in trace.outputs.items()}
    verdicts = [_termination(trace), check_validity(vals, inputs, binary=True),
                check_coherence(trace.outputs), check_convergence(trace.outputs, inputs)]
    return trace, inputs, verdicts, {}


def _rbc_common(cfg, seed, rng, make):
    inputs = _bits(rng, cfg.n)
    autos = [make(x, NodeRng(seed, i)) for i, x in enumerate(inputs)]
    eng = MacEngine(autos, meta=_meta(cfg, seed, inputs))
    trace = eng.run(_mac_adversary(cfg, seed), cfg.event_budget)
    verdicts = [_termination(trace), check_agreement(trace.outputs),
                check_validity(trace.outputs, inputs, binary=True)]
    phases = rz.decision_phases(trace)
    if phases and max(phases.values()) - min(phases.values()) > 1:
        verdicts.append(Verdict.fail("decision-span", phases=phases))
    else:
        verdicts.append(Verdict.ok("decision-span"))
    extra = {"phases": max(phases.values()) if phases else None, "value": _common(trace.outputs)}
    return trace, inputs, verdicts, extra


def _common(outputs: dict):
    vals = set(outputs.values())
    return vals.pop() if len(vals) == 1 else None


def _run_rbc(cfg, seed, rng):
    return _rbc_common(cfg, seed, rng, lambda x, r: rz.Rbc(x, r))


def _run_rbc2(cfg, seed, rng):
    trace, inputs, verdicts, extra = _rbc_common(cfg, seed, rng, lambda x, r: rz.Rbc2(x, r, n0=cfg.n0, c=cfg.c))
    extra.update(_fm_counts(trace))
    return trace, inputs, verdicts, extra


def _fm_counts(trace) -> dict:
    c = rz.classify_trace(trace)
    return {"rbc": c["N_RBC"], "original": c["N_O"], "follow_up": c["N_F"],
            "coin": sum(t.coin for t in c["phases"]), "dummy": sum(t.dummy for t in c["phases"])}


def _run_first_mover(cfg, seed, rng):
    inputs = _bits(rng, cfg.n)
    n_est = cfg.n_est or cfg.n
    autos = [rz.FirstMover(x, n_est, NodeRng(seed, i)) for i, x in enumerate(inputs)]
    eng = MacEngine(autos, meta=_meta(cfg, seed, inputs))
    trace = eng.run(_mac_adversary(cfg, seed), cfg.event_budget)
    verdicts = [_termination(trace), check_validity(trace.outputs, inputs, binary=True)]
    extra = _fm_counts(trace)
    extra["phases"] = 0
    extra["value"] = _common(trace.outputs)
    return trace, inputs, verdicts, extra


def _ac_table(rows) -> list:
    return [(r.p, r.lo, r.hi, r.range) for r in rows]


def _run_mac_ac(cfg, seed, rng):
    inputs = _dyadic_inputs(rng, cfg.n)
    p_end = cfg.p_end if cfg.p_end is not None else ac.halving_phases(cfg.epsilon)
    eps = Fraction(1, 1 << p_end)
    carry = bool(cfg.extra.get("carry_extremes", True))
    autos = [ac.MacAc(x, p_end, carry_extremes=carry) for x in inputs]
    eng = MacEngine(autos, meta=_meta(cfg, seed, inputs), eager_start=True)
    trace = eng.run(_mac_adversary(cfg, seed), cfg.event_budget)
    rows = ac.phase_ranges(trace)
    verdicts = [_termination(trace), check_validity(trace.outputs, inputs), check_epsilon_agreement(trace.outputs, eps),
                _from_pair("halving", ac.check_halving(rows)), _from_pair("mover-interval", ac.check_mac_ac_movers(rows)),
                _from_pair("jump-provenance", ac.check_jump_provenance(rows))]
    return trace, inputs, verdicts, {"phases": p_end, "table": _ac_table(rows)}


def _run_mac_ac2(cfg, seed, rng):
    inputs = _dyadic_inputs(rng, cfg.n)
    p_end = cfg.p_end if cfg.p_end is not None else ac.contraction_phases(cfg.epsilon, cfg.n)
    eps = lz.truncated_epsilon(cfg.n, p_end) if cfg.p_end is not None else cfg.epsilon
    autos = [ac.MacAc2(x, p_end) for x in inputs]
    eng = MacEngine(autos, meta=_meta(cfg, seed, inputs), eager_start=True)
    trace = eng.run(_mac_adversary(cfg, seed), cfg.event_budget)
    rows = ac.phase_ranges(trace)
    verdicts = [_termination(trace), check_validity(trace.outputs, inputs), check_epsilon_agreement(trace.outputs, eps),
                _from_pair("contraction", ac.check_contraction(rows, cfg.n)),
                _from_pair("mover-envelope", ac.check_mac_ac2_movers(rows, cfg.n)),
                _from_pair("jump-provenance", ac.check_jump_provenance(rows, ac.copied_values(trace)))]
    return trace, inputs, verdicts, {"phases": p_end, "table": _ac_table(rows)}


def _lossy_table(rows) -> list:
    return [(r.p, min(r.values), max(r.values), r.range) for r in rows]


def _run_small_ac(cfg, seed, rng):
    inputs = _dyadic_inputs(rng, cfg.n)
    lossy = cfg.lossy()
    trace, _ = lz.run_small_ac(cfg.n, cfg.f, cfg.epsilon, seed, inputs=inputs, crash_rate=cfg.crash_rate,
                               lossy=lossy, budget=cfg.event_budget)
    trace.meta.update(_meta(cfg, seed, inputs))
    p_end = lz.small_ac_phases(cfg.epsilon)
    rows = lz.lossy_phases(trace)
    verdicts = [_termination(trace), check_validity(trace.outputs, inputs),
                check_epsilon_agreement(trace.outputs, cfg.epsilon),
                _from_pair("halving", lz.check_lossy_halving(rows)),
                _from_pair("mover-interval", lz.check_small_ac_movers(rows)),
                _from_pair("common-value", lz.check_common_value(rows, cfg.n, cfg.f)),
                _from_pair("jump-provenance", lz.check_jump_sources(rows)),
                _from_pair("fairness", check_fairness(trace, lossy.Delta, range(cfg.n)))]
    return trace, inputs, verdicts, {"phases": p_end, "table": _lossy_table(rows)}


def _run_small_bac(cfg, seed, rng):
    h = cfg.n - cfg.f
    inputs = _dyadic_inputs(rng, h)
    lossy = cfg.lossy()
    p_end = cfg.p_end if cfg.p_end is not None else lz.small_bac_phases(cfg.epsilon, cfg.n)
    eps = lz.truncated_epsilon(cfg.n, p_end) if cfg.p_end is not None else cfg.epsilon
    trace, _ = lz.run_small_bac(cfg.n, cfg.f, eps, seed, cfg.byz, inputs=inputs, p_end=p_end,
                                include_self_value=cfg.include_self_value, lossy=lossy, budget=cfg.event_budget)
    trace.meta.update(_meta(cfg, seed, inputs))
    rows = lz.lossy_phases(trace, range(h))
    verdicts = [_termination(trace), check_validity(trace.outputs, inputs),
                check_epsilon_agreement(trace.outputs, eps),
                _from_pair("contraction", lz.check_bac_contraction(rows, cfg.n)),
                _from_pair("envelope", lz.check_envelopes(rows, cfg.f)),
                _from_pair("fairness", check_fairness(trace, lossy.Delta, range(h)))]
    return trace, inputs, verdicts, {"phases": p_end, "table": _lossy_table(rows)}


RUNNERS: dict[str, Callable] = {
    "store-collect": _run_store_collect,
    "adopt-commit": _run_adopt_commit,
    "rbc": _run_rbc,
    "rbc2": _run_rbc2,
    "first-mover": _run_first_mover,
    "mac-ac": _run_mac_ac,
    "mac-ac2": _run_mac_ac2,
    "small-ac": _run_small_ac,
    "small-bac": _run_small_bac,
}


def _meta(cfg: ExperimentConfig, seed: int, inputs=None) -> dict:
    m: dict[str, Any] = {"protocol": cfg.protocol, "n": cfg.n, "f": cfg.f, "seed": seed,
                         "epsilon": cfg.epsilon}
    if inputs is not None:
        m["inputs"] = list(inputs)
    return m


def run_seed(cfg: ExperimentConfig, seed: int) -> RunResult:
    rng = random.Random(derive_seed("inputs", cfg.protocol, cfg.n, seed))
    trace, inputs, verdicts, extra = RUNNERS[cfg.protocol](cfg, seed, rng)
    table = extra.get("table", [])
    failing = [v.name for v in verdicts if not v]
    row = MetricsRow(
        protocol=cfg.protocol,
        n=cfg.n,
        seed=seed,
        decided=not trace.timeout,
        timeout=trace.timeout,
        value=extra.get("value"),
        phases=extra.get("phases"),
        broadcasts=len(trace.broadcasts),
        rbc=extra.get("rbc"),
        original=extra.get("original"),
        follow_up=extra.get("follow_up"),
        coin=extra.get("coin"),
        dummy=extra.get("dummy"),
        ranges=tuple(r[3] for r in table) if table else None,
        wall_events=trace.end_time,
        verdict="pass" if not failing else "fail:" + "+".join(failing),
    )
    return RunResult(seed, trace, inputs, verdicts, row, table)


def workers() -> int:
    try:
        return max(1, int(os.environ.get("MACSIM_WORKERS", "1")))
    except ValueError:
        raise ConfigError("MACSIM_WORKERS must be an integer") from None


def run_experiment(cfg: ExperimentConfig, *, keep_traces: bool = False) -> list[RunResult]:
    """One result per seed, in seed order; checkers already applied."""
    cfg.validate()

    def one(seed: int) -> RunResult:
        r = run_seed(cfg, seed)
        if not keep_traces:
            r.trace.events.clear()
        return r

    w = workers()
    if w == 1 or len(cfg.seeds) == 1:
        return [one(s) for s in cfg.seeds]
    with ThreadPoolExecutor(max_workers=w) as pool:
        return list(pool.map(one, cfg.seeds))


def rows_csv(results: Iterable[RunResult]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(ROW_FIELDS)
    for r in results:
        w.writerow(r.row.csv_cells())
    return buf.getvalue()


def phases_csv(results: Iterable[RunResult]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(PHASE_FIELDS)
    for r in results:
        for p, lo, hi, rg in r.phase_table:
            w.writerow([r.seed, p, _decimal(lo), _decimal(hi), _decimal(rg)])
    return buf.getvalue()


def failure_report(results: Iterable[RunResult]) -> list[str]:
    out = []
    for r in results:
        for v in r.failures:
            out.append(f"seed {r.seed}: {v}")
    return out


# ------------------------------------------------------------------- sweeps

SWEEP_PARAMS = {"n": "n", "epsilon": "epsilon", "eps": "epsilon", "delta": "delta", "drop": "drop",
                "loss": "drop", "Delta": "Delta"}
SWEEP_FIELDS = ["parameter", "value", "runs", "failures", "timeouts",
                "phases_mean", "phases_median", "phases_p95",
                "broadcasts_mean", "broadcasts_median", "broadcasts_p95",
                "original_mean", "follow_up_mean", "wall_events_mean"]


def _convert(param: str, value):
    if param == "epsilon":
        from .config import parse_number
        return parse_number(value)
    if param in ("n", "Delta"):
        return int(value)
    return float(value)


def sweep(cfg: ExperimentConfig, vary: str, values: Sequence) -> list[dict]:
    """Aggregate phases and broadcasts over the seeds for each parameter value."""
    if vary not in SWEEP_PARAMS:
        raise ConfigError(f"cannot vary {vary!r}; choose from n, epsilon, delta, drop, Delta")
    param = SWEEP_PARAMS[vary]
    out = []
    for raw in values:
        value = _convert(param, raw)
        sub = cfg.with_(**{param: value}).validate()
        results = run_experiment(sub)
        rows = [r.row for r in results]
        ph = summarize([r.phases for r in rows if r.phases is not None])
        bc = summarize([r.broadcasts for r in rows])
        orig = summarize([r.original for r in rows if r.original is not None])
        fol = summarize([r.follow_up for r in rows if r.follow_up is not None])
        out.append({
            "parameter": param, "value": raw, "runs": len(rows),
            "failures": sum(1 for r in results if r.failures), "timeouts": sum(r.timeout for r in rows),
            "phases_mean": ph["mean"], "phases_median": ph["median"], "phases_p95": ph["p95"],
            "broadcasts_mean": bc["mean"], "broadcasts_median": bc["median"], "broadcasts_p95": bc["p95"],
            "original_mean": orig["mean"], "follow_up_mean": fol["mean"],
            "wall_events_mean": summarize([r.wall_events for r in rows])["mean"],
        })
    return out


def sweep_csv(rows: Iterable[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_FIELDS)
    for r in rows:
        cells = []
        for k in SWEEP_FIELDS:
            v = r[k]
            if v is None:
                cells.append("")
            elif isinstance(v, float):
                cells.append(f"{v:.{DIGITS}g}")
            else:
                cells.append(v)
        w.writerow(cells)
    return buf.getvalue()
