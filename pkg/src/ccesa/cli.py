"""Command-line entry point: ``ccesa <command> ...``.

Exit codes: 0 success, 2 bad configuration or arguments, 3 a checked
property did not hold.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
from pathlib import Path

from . import analysis
from .adversary import (
    EavesdropperView,
    partial_sum_attack,
    privacy_oracle,
    proper_subsets,
    server_can_decode,
)
from .errors import AttackFailed, CCESAError, ConfigError, TooLarge
from .graph import AssignmentGraph, gen_erdos_renyi
from .harness import (
    bench_timing,
    emit,
    monte_carlo,
    render_pstar_table,
    resolve_p,
    resolve_t,
)
from .messages import Transcript
from .protocol import (
    ProtocolParams,
    comm_accounting,
    plaintext_sum,
    random_models,
    run_round,
    sample_dropouts,
)
from .seeds import make_np_rng

EXIT_CONFIG = 2
EXIT_CHECK = 3


class CheckFailed(Exception):
    pass


def _print_record(rec: dict, as_csv: bool) -> None:
    if as_csv:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(rec.keys())
        w.writerow(rec.values())
        sys.stdout.write(buf.getvalue())
    else:
        print(json.dumps(rec))


def _p_arg(v: str):
    return v if v == "auto" else float(v)


# -- analyze ------------------------------------------------------------------


def cmd_analyze(args) -> int:
    q = analysis.q_from_qtotal(args.q_total)
    if args.what == "pstar":
        rec = {"n": args.n, "q_total": args.q_total, "q": q,
               "privacy_term": analysis.privacy_threshold_p(args.n, q),
               "reliability_term": analysis.reliability_threshold_p(args.n, q),
               "p_star": analysis.p_star(args.n, q)}
    elif args.what == "t":
        p = resolve_p(args.n, q, args.p)
        rec = {"n": args.n, "p": p, "t_lower_bound": analysis.t_lower_bound(args.n, p),
               "t": analysis.t_rule(args.n, p)}
    elif args.what == "bounds":
        p = resolve_p(args.n, q, args.p)
        t = analysis.t_rule(args.n, p) if args.t is None else args.t
        lg = analysis.log_per_bound(args.n, p, q, t)
        lp = analysis.log_pep_bound(args.n, p, q)
        rec = {"n": args.n, "p": p, "q_total": args.q_total, "q": q, "t": t,
               "per_bound": None if lg is None else math.exp(lg),
               "log10_per_bound": None if lg is None else lg / math.log(10),
               "pep_bound": math.exp(lp),
               "log10_pep_bound": lp / math.log(10)}
    else:
        s = analysis.cost_table(args.n, args.q_total, args.m, args.r, args.ak, args.as_)
        rec = s.to_dict()
        rec["turbo_ratio_L10"] = analysis.turbo_ratio(args.n, args.ak, args.as_, args.m, args.r, 10)
    _print_record(rec, args.csv)
    return 0


# -- round --------------------------------------------------------------------


def cmd_round(args) -> int:
    from .config import round_config

    path = Path(args.config)
    cfg = round_config(path.read_text(), path.parent)
    q = analysis.q_from_qtotal(cfg["q_total"])
    rng = make_np_rng(cfg["seed"], "round-cli")
    if cfg["graph"]:
        graph = AssignmentGraph.from_edgelist(Path(cfg["graph"]).read_text())
        if cfg["n"] is not None and cfg["n"] != graph.n:
            raise ConfigError(f"graph has {graph.n} vertices but n = {cfg['n']}")
        n = graph.n
        # a fixed graph has no sampling probability; report its edge density
        p = 2 * len(graph.edges) / max(1, n * (n - 1))
    else:
        n = cfg["n"]
        p = resolve_p(n, q, cfg["p"])
        graph = gen_erdos_renyi(n, p, rng)
    t = resolve_t(n, p, cfg["t"])
    try:
        params = ProtocolParams(n=n, t=t, p=p, q=q, m=cfg["m"], R=cfg["R"],
                                a_K=cfg["a_K"], a_S=cfg["a_S"])
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    models = random_models(n, params.m, params.R, rng)
    schedule = sample_dropouts(n, q, rng)
    out = run_round(params, graph, schedule, models, seed=cfg["seed"])
    rep = comm_accounting(out.transcript)
    expected = plaintext_sum(models, out.evolution.V(3), params.m, params.R)
    rec = {
        "outcome": "ok" if out.ok else "reliability_failure",
        "n": n, "p": p, "q_total": cfg["q_total"], "t": t, "m": params.m, "R": params.R,
        "survivors": [len(v) for v in out.evolution.survivors],
        "aggregate_matches_plaintext": bool(out.ok and out.aggregate == expected),
        "client_bits_total": sum(rep.client_bits.values()),
        "client_bits_max": max(rep.client_bits.values(), default=0),
        "server_bits": rep.server_bits,
        "server_wire_bytes": rep.server_wire_bytes,
        "diagnostics": {
            "short_sharing": out.diagnostics.short_sharing,
            "non_informative": out.diagnostics.non_informative,
            "error": out.diagnostics.error,
        },
        "transcript_sha256": out.transcript.digest(),
    }
    if args.transcript_out:
        Path(args.transcript_out).write_text(out.transcript.to_json())
    print(json.dumps(rec, indent=2))
    return 0


# -- run / sweep / bench --------------------------------------------------------


def cmd_run(args) -> int:
    from .config import experiment_config

    cfg = experiment_config(Path(args.config).read_text())
    result = monte_carlo(cfg, parallel=args.parallel)
    text = emit(result, args.format, args.out)
    if not args.out:
        sys.stdout.write(text)
    return 0


def cmd_sweep(args) -> int:
    sys.stdout.write(render_pstar_table(fmt=args.format))
    return 0


def cmd_bench(args) -> int:
    res = bench_timing(args.n, args.q_total, m=args.m, R=args.r)
    rec = res.to_dict()
    print(json.dumps(rec, indent=2))
    if args.check:
        bad = [s for s in ("client_step1", "client_step2") if not res.within(s)]
        if bad:
            raise CheckFailed(f"ratio outside [p/2, 2p] for {', '.join(bad)}")
    return 0


# -- attack -------------------------------------------------------------------


def _subset_verdict(view: EavesdropperView, subset) -> dict:
    T = sorted(subset)
    try:
        vec = partial_sum_attack(view, T)
    except AttackFailed as exc:
        return {"subset": T, "recovered": False, "blocking_term": list(exc.term)}
    rec = {"subset": T, "recovered": True}
    if vec is not None:
        rec["partial_sum_head"] = [int(x) for x in vec.coords[:8]]
    return rec


def cmd_attack(args) -> int:
    tr = Transcript.from_json(Path(args.transcript).read_text())
    view = EavesdropperView.from_transcript(tr)
    if args.subset:
        try:
            subset = [int(x) for x in args.subset.split(",")]
        except ValueError:
            raise ConfigError(f"bad subset {args.subset!r}") from None
        print(json.dumps(_subset_verdict(view, subset)))
        return 0
    summary = {"uploaders": sorted(view.v3), "server_can_decode": server_can_decode(view)}
    try:
        summary["private"] = privacy_oracle(view)
    except TooLarge as exc:
        summary["private"] = None
        summary["note"] = str(exc)
    if args.exhaustive:
        if len(view.v3) > 20:
            raise ConfigError("too many uploaders for exhaustive enumeration")
        for T in proper_subsets(view.v3):
            print(json.dumps(_subset_verdict(view, T)))
    print(json.dumps(summary))
    return 0


# -- parser -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ccesa", description="Sparse-graph secure aggregation toolkit")
    sub = ap.add_subparsers(dest="command", required=True)

    an = sub.add_parser("analyze", help="closed-form design rules and bounds")
    an.add_argument("what", choices=["pstar", "t", "bounds", "cost"])
    an.add_argument("--n", type=int, required=True)
    an.add_argument("--q-total", type=float, default=0.0)
    an.add_argument("--p", type=_p_arg, default="auto")
    an.add_argument("--t", type=int)
    an.add_argument("--m", type=int, default=10**6)
    an.add_argument("--r", type=int, default=32)
    an.add_argument("--ak", type=int, default=256)
    an.add_argument("--as", dest="as_", type=int, default=256)
    an.add_argument("--csv", action="store_true")
    an.set_defaults(func=cmd_analyze)

    rd = sub.add_parser("round", help="run one protocol round from a config file")
    rd.add_argument("--config", required=True)
    rd.add_argument("--transcript-out")
    rd.set_defaults(func=cmd_round)

    rn = sub.add_parser("run", help="Monte Carlo sweep from a config file")
    rn.add_argument("--config", required=True)
    rn.add_argument("--parallel", type=int, default=1)
    rn.add_argument("--out")
    rn.add_argument("--format", choices=["csv", "json"], default="json")
    rn.set_defaults(func=cmd_run)

    sw = sub.add_parser("sweep", help="tabulate p* over the standard grid")
    sw.add_argument("table", choices=["pstar-table"])
    sw.add_argument("--format", choices=["csv", "json"], default="csv")
    sw.set_defaults(func=cmd_sweep)

    bn = sub.add_parser("bench", help="per-step timing, complete vs sparse graph")
    bn.add_argument("--n", type=int, default=100)
    bn.add_argument("--q-total", type=float, default=0.0)
    bn.add_argument("--m", type=int, default=10_000)
    bn.add_argument("--r", type=int, default=16)
    bn.add_argument("--check", action="store_true", help="exit 3 unless step ratios lie in [p/2, 2p]")
    bn.set_defaults(func=cmd_bench)

    at = sub.add_parser("attack", help="eavesdropper analysis of a saved transcript")
    at.add_argument("--transcript", required=True)
    g = at.add_mutually_exclusive_group()
    g.add_argument("--subset")
    g.add_argument("--exhaustive", action="store_true")
    at.set_defaults(func=cmd_attack)
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else 0
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CheckFailed as exc:
        print(f"check failed: {exc}", file=sys.stderr)
        return EXIT_CHECK
    except CCESAError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
