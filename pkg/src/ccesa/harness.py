"""Monte Carlo sweeps, timing benchmarks and result serialization."""

from __future__ import annotations

import csv
import io
import json
import math
import statistics
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from typing import Sequence, Union

from .adversary import unmasking_attack_feasible
from .analysis import (
    log_pep_bound,
    log_per_bound,
    p_star,
    q_from_qtotal,
    t_rule,
)
from .errors import ConfigError, CCESAError
from .graph import GraphEvolution, gen_complete, gen_erdos_renyi, privacy_predicate, reliability_predicate
from .protocol import (
    DropoutSchedule,
    ProtocolParams,
    comm_accounting,
    plaintext_sum,
    random_models,
    run_round,
    sample_dropouts,
)
from .seeds import default_seed, make_np_rng

AUTO = "auto"
Spec = Union[float, int, str]


def resolve_p(n: int, q: float, p: Spec) -> float:
    if p == AUTO:
        return min(1.0, p_star(n, q))
    return float(p)


def resolve_t(n: int, p: float, t: Spec) -> int:
    if t == AUTO:
        return max(1, min(n, t_rule(n, p)))
    return int(t)


@dataclass
class ExperimentConfig:
    n: list[int]
    q_total: list[float] = field(default_factory=lambda: [0.0])
    p: list[Spec] = field(default_factory=lambda: [AUTO])
    t: list[Spec] = field(default_factory=lambda: [AUTO])
    m: list[int] = field(default_factory=lambda: [1])
    R: list[int] = field(default_factory=lambda: [16])
    trials: int = 100
    seed: int = field(default_factory=default_seed)
    full_protocol: bool = False
    a_K: int = 256
    a_S: int = 256

    def validate(self) -> None:
        for name in ("n", "q_total", "p", "t", "m", "R"):
            if not getattr(self, name):
                raise ConfigError(f"parameter grid '{name}' is empty")
        if self.trials < 1:
            raise ConfigError("trials must be at least 1")
        if any(n < 2 for n in self.n):
            raise ConfigError("every n must be at least 2")
        if any(not 0.0 <= q <= 1.0 for q in self.q_total):
            raise ConfigError("q_total values must lie in [0, 1]")

    def cells(self) -> list["Cell"]:
        self.validate()
        out = []
        for n in self.n:
            for qt in self.q_total:
                for p_spec in self.p:
                    for t_spec in self.t:
                        for m in self.m:
                            for R in self.R:
                                q = q_from_qtotal(qt)
                                try:
                                    p = resolve_p(n, q, p_spec)
                                    t = resolve_t(n, p, t_spec)
                                    ProtocolParams(n=n, t=t, p=p, q=q, m=m, R=R,
                                                   a_K=self.a_K, a_S=self.a_S)
                                except (ValueError, CCESAError) as exc:
                                    raise ConfigError(f"cell n={n}, q_total={qt}: {exc}") from exc
                                out.append(Cell(n, qt, q, p, t, m, R))
        return out


@dataclass(frozen=True)
class Cell:
    n: int
    q_total: float
    q: float
    p: float
    t: int
    m: int
    R: int

    @property
    def key(self) -> str:
        return f"{self.n}/{self.q_total!r}/{self.p!r}/{self.t}/{self.m}/{self.R}"


@dataclass
class CellResult:
    n: int
    q_total: float
    q: float
    p: float
    t: int
    m: int
    R: int
    trials: int
    reliability_failures: int
    privacy_violations: int
    reliability_failure_rate: float
    privacy_violation_rate: float
    per_bound: float | None
    pep_bound: float
    attack_feasible_fraction: float
    mean_client_bits: float
    mean_server_bits: float
    bits_source: str
    aggregate_mismatches: int
    step_ms: dict[str, float] = field(default_factory=dict)


RESULT_COLUMNS = [f.name for f in fields(CellResult)]


@dataclass
class ExperimentResult:
    cells: list[CellResult]
    seed: int

    def to_dict(self) -> dict:
        return {"seed": self.seed, "columns": RESULT_COLUMNS,
                "cells": [asdict(c) for c in self.cells]}

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentResult":
        return cls([CellResult(**c) for c in doc["cells"]], doc["seed"])


@dataclass
class _Tally:
    rel_fail: int = 0
    priv_fail: int = 0
    feasible: int = 0
    clients: int = 0
    client_bits: float = 0.0
    server_bits: float = 0.0
    mismatches: int = 0
    step_s: dict = field(default_factory=dict)

    def merge(self, other: "_Tally") -> None:
        self.rel_fail += other.rel_fail
        self.priv_fail += other.priv_fail
        self.feasible += other.feasible
        self.clients += other.clients
        self.client_bits += other.client_bits
        self.server_bits += other.server_bits
        self.mismatches += other.mismatches
        for k, v in other.step_s.items():
            self.step_s.setdefault(k, []).extend(v)


def _run_trials(cell: Cell, trials: Sequence[int], seed: int, full: bool, a_K: int, a_S: int) -> _Tally:
    tally = _Tally()
    for k in trials:
        rng = make_np_rng(seed, "trial", cell.key, k)
        graph = gen_erdos_renyi(cell.n, cell.p, rng)
        schedule = sample_dropouts(cell.n, cell.q, rng)
        evo = GraphEvolution(graph, schedule.survivors(cell.n))
        reliable = reliability_predicate(evo, cell.t)
        tally.rel_fail += not reliable
        tally.priv_fail += not privacy_predicate(evo, cell.t)
        tally.feasible += sum(unmasking_attack_feasible(i, evo, cell.t) for i in graph.vertices)
        tally.clients += cell.n
        if full:
            params = ProtocolParams(n=cell.n, t=cell.t, p=cell.p, q=cell.q, m=cell.m,
                                    R=cell.R, a_K=a_K, a_S=a_S)
            models = random_models(cell.n, cell.m, cell.R, rng)
            out = run_round(params, graph, schedule, models, seed=seed, round_id=k)
            if out.ok != reliable or (
                out.ok and out.aggregate != plaintext_sum(models, evo.V(3), cell.m, cell.R)
            ):
                tally.mismatches += 1
            rep = comm_accounting(out.transcript)
            tally.client_bits += sum(rep.client_bits.values())
            tally.server_bits += rep.server_bits
            for name, xs in out.timings.items():
                tally.step_s.setdefault(name, []).extend(xs)
        else:
            # nominal dropout-free cost at the realised degrees
            per = [2 * (graph.degree(i) + 1) * a_K + (5 * graph.degree(i) + 1) * a_S
                   + cell.m * cell.R for i in graph.vertices]
            tally.client_bits += sum(per)
            tally.server_bits += sum(per)
    return tally


def _summarize(cell: Cell, trials: int, tally: _Tally, full: bool) -> CellResult:
    try:
        lg = log_per_bound(cell.n, cell.p, cell.q, cell.t)
        per = None if lg is None else math.exp(lg)
    except CCESAError:
        per = None
    try:
        pep = math.exp(log_pep_bound(cell.n, cell.p, cell.q))
    except CCESAError:
        pep = float("nan")
    return CellResult(
        n=cell.n, q_total=cell.q_total, q=cell.q, p=cell.p, t=cell.t, m=cell.m, R=cell.R,
        trials=trials,
        reliability_failures=tally.rel_fail,
        privacy_violations=tally.priv_fail,
        reliability_failure_rate=tally.rel_fail / trials,
        privacy_violation_rate=tally.priv_fail / trials,
        per_bound=per,
        pep_bound=pep,
        attack_feasible_fraction=tally.feasible / max(1, tally.clients),
        mean_client_bits=tally.client_bits / max(1, tally.clients),
        mean_server_bits=tally.server_bits / trials,
        bits_source="transcript" if full else "nominal",
        aggregate_mismatches=tally.mismatches,
        step_ms={k: 1e3 * statistics.fmean(v) for k, v in sorted(tally.step_s.items()) if v},
    )


def _chunks(total: int, parts: int) -> list[range]:
    parts = max(1, min(parts, total))
    bounds = [total * i // parts for i in range(parts + 1)]
    return [range(bounds[i], bounds[i + 1]) for i in range(parts)]


def monte_carlo(config: ExperimentConfig, parallel: int = 1) -> ExperimentResult:
    """Run every cell of the grid; results do not depend on ``parallel``."""
    cells = config.cells()
    args = [
        (cell, chunk, config.seed, config.full_protocol, config.a_K, config.a_S)
        for cell in cells
        for chunk in _chunks(config.trials, parallel)
    ]
    if parallel > 1:
        with ProcessPoolExecutor(max_workers=parallel) as pool:
            tallies = list(pool.map(_run_trials, *zip(*args)))
    else:
        tallies = [_run_trials(*a) for a in args]
    results = []
    per_cell = len(args) // max(1, len(cells))
    for idx, cell in enumerate(cells):
        total = _Tally()
        for tl in tallies[idx * per_cell : (idx + 1) * per_cell]:
            total.merge(tl)
        results.append(_summarize(cell, config.trials, total, config.full_protocol))
    return ExperimentResult(results, config.seed)


# ---------------------------------------------------------------------------
# Output
# ---------------------------------------------------------------------------


def _csv_value(v) -> str:
    if v is None:
        return ""
    if isinstance(v, dict):
        return json.dumps(v, sort_keys=True)
    return repr(v) if isinstance(v, float) else str(v)


def render(result: ExperimentResult, fmt: str) -> str:
    if fmt == "json":
        return json.dumps(result.to_dict(), indent=2) + "\n"
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(RESULT_COLUMNS)
        for c in result.cells:
            w.writerow([_csv_value(getattr(c, k)) for k in RESULT_COLUMNS])
        return buf.getvalue()
    raise ConfigError(f"unknown output format {fmt!r}")


def emit(result: ExperimentResult, fmt: str, path: str | None = None) -> str:
    """Render ``result`` as csv or json; write it to ``path`` when given."""
    text = render(result, fmt)
    if path is not None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    return text


def load_result(text: str) -> ExperimentResult:
    return ExperimentResult.from_dict(json.loads(text))


# ---------------------------------------------------------------------------
# p* table
# ---------------------------------------------------------------------------

PSTAR_NS = tuple(range(100, 1001, 100))
PSTAR_QTOTALS = (0.0, 0.01, 0.05, 0.1)


def pstar_table(ns=PSTAR_NS, q_totals=PSTAR_QTOTALS) -> list[list[float]]:
    return [[p_star(n, q_from_qtotal(qt)) for n in ns] for qt in q_totals]


def render_pstar_table(ns=PSTAR_NS, q_totals=PSTAR_QTOTALS, fmt: str = "csv", digits: int = 3) -> str:
    rows = pstar_table(ns, q_totals)
    if fmt == "json":
        doc = {"n": list(ns), "q_total": list(q_totals),
               "p_star": [[round(v, digits) for v in r] for r in rows]}
        return json.dumps(doc, indent=2) + "\n"
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["q_total/n", *ns])
    for qt, r in zip(q_totals, rows):
        w.writerow([qt, *(f"{v:.{digits}f}" for v in r)])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# Timing
# ---------------------------------------------------------------------------

CLIENT_STEPS = ("client_step0", "client_step1", "client_step2", "client_step3")


@dataclass
class BenchResult:
    n: int
    q_total: float
    m: int
    R: int
    p: float
    t_sa: int
    t_ccesa: int
    sa_ms: dict[str, float]
    ccesa_ms: dict[str, float]

    def ratio(self, step: str) -> float:
        return self.ccesa_ms[step] / self.sa_ms[step]

    def within(self, step: str, lo: float = 0.5, hi: float = 2.0) -> bool:
        return lo * self.p <= self.ratio(step) <= hi * self.p

    def to_dict(self) -> dict:
        d = asdict(self)
        d["ratios"] = {s: self.ratio(s) for s in self.sa_ms if s in self.ccesa_ms}
        return d


def _mean_ms(timings: dict[str, list[float]]) -> dict[str, float]:
    return {k: 1e3 * statistics.fmean(v) for k, v in sorted(timings.items()) if v}


def bench_timing(
    n: int, q_total: float = 0.0, m: int = 10_000, R: int = 16, seed: int | None = None,
    p: float | None = None,
) -> BenchResult:
    """Time one SA round (complete graph) against one sparse round at ``p``.

    SA uses a majority threshold ``n // 2 + 1``; the sparse round uses the
    threshold rule at its ``p``. Both see the same dropout schedule and models.
    """
    seed = default_seed() if seed is None else seed
    q = q_from_qtotal(q_total)
    p = min(1.0, p_star(n, q)) if p is None else p
    t_sa, t_cc = n // 2 + 1, resolve_t(n, p, AUTO)
    rng = make_np_rng(seed, "bench", n, q_total)
    models = random_models(n, m, R, rng)
    schedule = sample_dropouts(n, q, rng) if q > 0 else DropoutSchedule.none()
    sparse = gen_erdos_renyi(n, p, rng)
    sa = run_round(ProtocolParams(n=n, t=t_sa, p=1.0, q=q, m=m, R=R), gen_complete(n),
                   schedule, models, seed=seed)
    cc = run_round(ProtocolParams(n=n, t=t_cc, p=p, q=q, m=m, R=R), sparse,
                   schedule, models, seed=seed)
    return BenchResult(n, q_total, m, R, p, t_sa, t_cc, _mean_ms(sa.timings), _mean_ms(cc.timings))
