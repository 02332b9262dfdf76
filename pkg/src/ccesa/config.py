"""Plain-text ``key = value`` configuration files.

One setting per line, ``#`` starts a comment, list values are
comma-separated. Recognised keys:

=============  ==========================================================
key            meaning
=============  ==========================================================
n              number of clients (list for sweeps)
p              connection probability, or ``auto`` for p* (list)
graph          edge-list file; replaces ``p`` for single rounds
q / q_total    per-step or whole-round dropout probability (list)
t              threshold, or ``auto`` for the threshold rule (list)
m, R           model dimension and bits per coordinate (lists)
a_K, a_S       bits charged per public key and per share
seed           master seed (default: ``CCESA_SEED`` or 2021)
trials         Monte Carlo trials per cell
full_protocol  ``true`` runs every trial through the real protocol
=============  ==========================================================
"""

from __future__ import annotations

from pathlib import Path

from .analysis import qtotal_from_q
from .errors import ConfigError
from .harness import AUTO, ExperimentConfig
from .seeds import default_seed

KNOWN = {"n", "p", "graph", "q", "q_total", "t", "m", "R", "a_K", "a_S", "seed", "trials",
         "full_protocol"}


def parse_kv(text: str) -> dict[str, list[str]]:
    out: dict[str, list[str]] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in KNOWN:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in out:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        items = [v.strip() for v in value.split(",")]
        if not value or any(not v for v in items):
            raise ConfigError(f"line {lineno}: empty value for {key!r}")
        out[key] = items
    return out


def _conv(key: str, items: list[str], typ, allow_auto: bool = False) -> list:
    vals = []
    for v in items:
        if allow_auto and v == AUTO:
            vals.append(AUTO)
            continue
        try:
            vals.append(typ(v))
        except ValueError:
            raise ConfigError(f"{key}: cannot parse {v!r}") from None
    return vals


def _single(kv: dict, key: str, typ, default=None, allow_auto: bool = False):
    if key not in kv:
        return default
    vals = _conv(key, kv[key], typ, allow_auto)
    if len(vals) != 1:
        raise ConfigError(f"{key}: expected a single value")
    return vals[0]


def _bool(v: str) -> bool:
    low = v.lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(v)


def _q_totals(kv: dict) -> list[float]:
    if "q" in kv and "q_total" in kv:
        raise ConfigError("give either q or q_total, not both")
    if "q" in kv:
        qs = _conv("q", kv["q"], float)
        if any(not 0.0 <= q <= 1.0 for q in qs):
            raise ConfigError("q values must lie in [0, 1]")
        return [qtotal_from_q(q) for q in qs]
    return _conv("q_total", kv.get("q_total", ["0"]), float)


def experiment_config(text: str) -> ExperimentConfig:
    kv = parse_kv(text)
    if "n" not in kv:
        raise ConfigError("missing required key 'n'")
    if "graph" in kv:
        raise ConfigError("'graph' applies to single rounds only")
    cfg = ExperimentConfig(
        n=_conv("n", kv["n"], int),
        q_total=_q_totals(kv),
        p=_conv("p", kv.get("p", [AUTO]), float, allow_auto=True),
        t=_conv("t", kv.get("t", [AUTO]), int, allow_auto=True),
        m=_conv("m", kv.get("m", ["1"]), int),
        R=_conv("R", kv.get("R", ["16"]), int),
        trials=_single(kv, "trials", int, 100),
        seed=_single(kv, "seed", int, default_seed()),
        full_protocol=_single(kv, "full_protocol", _bool, False),
        a_K=_single(kv, "a_K", int, 256),
        a_S=_single(kv, "a_S", int, 256),
    )
    cfg.validate()
    return cfg


def round_config(text: str, base_dir: Path | None = None) -> dict:
    """Settings for a single round; ``graph`` paths resolve against ``base_dir``."""
    kv = parse_kv(text)
    if "n" not in kv and "graph" not in kv:
        raise ConfigError("need 'n' or 'graph'")
    q_totals = _q_totals(kv)
    if len(q_totals) != 1:
        raise ConfigError("q_total: expected a single value")
    graph = _single(kv, "graph", str)
    if graph is not None and base_dir is not None:
        graph = str((base_dir / graph).resolve()) if not Path(graph).is_absolute() else graph
    return {
        "n": _single(kv, "n", int),
        "p": _single(kv, "p", float, AUTO, allow_auto=True),
        "graph": graph,
        "q_total": q_totals[0],
        "t": _single(kv, "t", int, AUTO, allow_auto=True),
        "m": _single(kv, "m", int, 1),
        "R": _single(kv, "R", int, 16),
        "a_K": _single(kv, "a_K", int, 256),
        "a_S": _single(kv, "a_S", int, 256),
        "seed": _single(kv, "seed", int, default_seed()),
    }
