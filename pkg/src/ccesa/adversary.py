"""Passive eavesdropper and malicious-server analyses.

The eavesdropper sees every message of a round. It tries to learn the sum of
the models of a subset ``T`` of uploaders by adding their masked models and
stripping every mask term that does not cancel. A term can be stripped only
if its seed is recoverable from the step-3 share responses. Cryptographic
primitives are treated as ideal: a seed is either recoverable from shares or
unknown.

A view can be built from a real :class:`~ccesa.messages.Transcript`, in which
case successful attacks return the actual partial sum, or structurally from a
graph evolution by replaying who would send what to whom, in which case only
the verdict is available.
"""

from __future__ import annotations

import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from itertools import combinations, product
from typing import Iterable, Mapping

import numpy as np

from .crypto import (
    DEFAULT_FIELD,
    DEFAULT_GROUP,
    KEY_SHARE,
    SEED_SHARE,
    ByteShare,
    DHGroup,
    PrimeField,
    ResidueVector,
    key_agree,
    prg_expand,
    reconstruct_bytes,
)
from .errors import AttackFailed, TooLarge
from .graph import AssignmentGraph, GraphEvolution, privacy_predicate, reliability_predicate
from .messages import (
    SERVER,
    AdvertiseKeys,
    EncryptedShares,
    MaskedModel,
    ShareResponse,
    SurvivorList,
    Transcript,
)

ORACLE_LIMIT = 20

# a mask term: ("b", i) for a self mask, ("s", i, j) with i < j for a pairwise mask
Term = tuple


@dataclass
class EavesdropperView:
    """Everything visible on the wire, reduced to what the attacks need.

    ``mask_edges`` are the pairs whose pairwise mask entered some upload; the
    eavesdropper learns them from the forwarded share envelopes.
    ``share_counts[(owner, kind)]`` counts distinct step-3 shares seen.
    """

    n: int
    t: int | None
    v3: frozenset[int]
    mask_edges: frozenset[tuple[int, int]]
    share_counts: Mapping[tuple[int, str], int]
    masked: dict[int, ResidueVector] = field(default_factory=dict)
    shares: dict[tuple[int, str], list[ByteShare]] = field(default_factory=dict)
    s_public: dict[int, object] = field(default_factory=dict)
    group: DHGroup = DEFAULT_GROUP
    field: PrimeField = DEFAULT_FIELD
    m: int = 0
    R: int = 0

    def __post_init__(self):
        nb: dict[int, set[int]] = defaultdict(set)
        for i, j in self.mask_edges:
            nb[i].add(j)
            nb[j].add(i)
        self._mask_nb = {i: frozenset(s) for i, s in nb.items()}

    def mask_neighbors(self, i: int) -> frozenset[int]:
        return self._mask_nb.get(i, frozenset())

    def count(self, owner: int, kind: str) -> int:
        return self.share_counts.get((owner, kind), 0)

    @classmethod
    def from_transcript(cls, tr: Transcript) -> "EavesdropperView":
        v3: frozenset[int] | None = None
        edges = set()
        masked = {}
        shares: dict[tuple[int, str], dict[int, ByteShare]] = defaultdict(dict)
        s_public = {}
        for e in tr.entries:
            msg = e.message
            if isinstance(msg, AdvertiseKeys):
                s_public[msg.client] = msg.s_pk
            elif isinstance(msg, EncryptedShares) and e.sender == SERVER:
                edges.add((min(msg.sender, msg.receiver), max(msg.sender, msg.receiver)))
            elif isinstance(msg, MaskedModel):
                masked[msg.client] = msg.vector
            elif isinstance(msg, SurvivorList):
                v3 = frozenset(msg.survivors)
            elif isinstance(msg, ShareResponse):
                for s in msg.shares:
                    shares[(s.owner, s.kind)][s.index] = s
        if v3 is None:
            v3 = frozenset(masked)
        return cls(
            n=tr.n, t=tr.t, v3=v3, mask_edges=frozenset(edges),
            share_counts={k: len(v) for k, v in shares.items()},
            masked=masked,
            shares={k: [v[x] for x in sorted(v)] for k, v in shares.items()},
            s_public=s_public, group=tr.group, field=tr.field, m=tr.m, R=tr.R,
        )

    @classmethod
    def structural(
        cls, graph: AssignmentGraph, evolution: GraphEvolution, t: int | None = None
    ) -> "EavesdropperView":
        """Replay the message flow of an honest round without any cryptography."""
        V = evolution.survivors
        v2, v3, v4 = V[2], V[3], V[4]
        adj = graph.adj
        # share envelopes are forwarded between neighbours that both reach step 2
        edges = frozenset((i, j) for i, j in graph.edges if i in v2 and j in v2)
        counts: Counter = Counter()
        for j in v4:
            counts[(j, SEED_SHARE)] += 1  # own seed share; j is an uploader
            for i in adj(j) & v2:
                counts[(i, SEED_SHARE if i in v3 else KEY_SHARE)] += 1
        return cls(n=graph.n, t=t, v3=v3, mask_edges=edges, share_counts=dict(counts))


# ---------------------------------------------------------------------------
# Symbolic masked sums
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SymbolicMaskedSum:
    """Mask terms left in ``sum_{i in T} masked_i`` after cancellation."""

    subset: frozenset[int]
    seed_coeffs: Mapping[int, int]
    pair_coeffs: Mapping[tuple[int, int], int]

    @classmethod
    def build(cls, view: EavesdropperView, subset: Iterable[int]) -> "SymbolicMaskedSum":
        T = frozenset(subset)
        seeds = {i: 1 for i in sorted(T)}
        pairs: dict[tuple[int, int], int] = defaultdict(int)
        for i in T:
            for j in view.mask_neighbors(i):
                pairs[(min(i, j), max(i, j))] += 1 if i < j else -1
        return cls(T, seeds, {e: c for e, c in sorted(pairs.items()) if c})

    def terms(self) -> list[tuple[Term, int]]:
        out: list[tuple[Term, int]] = [(("b", i), c) for i, c in self.seed_coeffs.items()]
        out += [(("s", i, j), c) for (i, j), c in self.pair_coeffs.items()]
        return out


def term_threshold(view: EavesdropperView, term: Term) -> int:
    """Largest threshold at which ``term``'s seed can be rebuilt from the view."""
    if term[0] == "b":
        return view.count(term[1], SEED_SHARE)
    _, i, j = term
    return max(view.count(i, KEY_SHARE), view.count(j, KEY_SHARE))


def breakable_threshold(view: EavesdropperView, subset: Iterable[int]) -> float:
    """Largest ``t`` at which the partial-sum attack on ``subset`` succeeds."""
    terms = SymbolicMaskedSum.build(view, subset).terms()
    return min((term_threshold(view, tm) for tm, _ in terms), default=math.inf)


def recoverable_secrets(view: EavesdropperView, t: int | None = None) -> dict[int, frozenset[str]]:
    t = view.t if t is None else t
    if t is None:
        raise ValueError("threshold unknown")
    out: dict[int, set[str]] = defaultdict(set)
    for (owner, kind), c in view.share_counts.items():
        if c >= t:
            out[owner].add(kind)
    return {i: frozenset(s) for i, s in sorted(out.items())}


# ---------------------------------------------------------------------------
# Attacks
# ---------------------------------------------------------------------------


def _secret(view: EavesdropperView, owner: int, kind: str) -> bytes:
    return reconstruct_bytes(view.shares[(owner, kind)], view.field, verify=True)


def _term_mask(view: EavesdropperView, term: Term) -> np.ndarray:
    if term[0] == "b":
        seed = _secret(view, term[1], SEED_SHARE)
    else:
        _, i, j = term
        known, other = (i, j) if view.count(i, KEY_SHARE) >= view.t else (j, i)
        sk = view.group.decode_secret(_secret(view, known, KEY_SHARE))
        seed = key_agree(view.s_public[other], sk, view.group)
    return prg_expand(seed, view.m, view.R).coords


def _attack(view: EavesdropperView, T: frozenset[int]) -> ResidueVector | None:
    if view.t is None:
        raise ValueError("threshold unknown")
    sym = SymbolicMaskedSum.build(view, T)
    terms = sym.terms()
    for term, _ in terms:
        if term_threshold(view, term) < view.t:
            raise AttackFailed(term)
    if not view.masked:
        return None
    acc = np.zeros(view.m, dtype=np.uint64)
    for i in sorted(T):
        acc += view.masked[i].coords
    for term, c in terms:
        mask = _term_mask(view, term)
        acc -= np.uint64(c % (1 << 64)) * mask if c != 1 else mask
    return ResidueVector(acc, view.R)


def partial_sum_attack(view: EavesdropperView, subset: Iterable[int]) -> ResidueVector | None:
    """Try to learn ``sum_{i in T} theta_i``; raise :class:`AttackFailed` otherwise.

    Returns the recovered sum for transcript views and ``None`` for
    structural views.
    """
    T = frozenset(subset)
    if not T or T == view.v3:
        raise ValueError("subset must be a nonempty proper subset of the uploaders")
    if not T <= view.v3:
        raise ValueError(f"{sorted(T - view.v3)} did not upload a masked model")
    return _attack(view, T)


def server_can_decode(view: EavesdropperView) -> bool:
    """Whether the full sum over all uploaders can be unmasked."""
    if not view.v3:
        return True
    try:
        _attack(view, view.v3)
    except AttackFailed:
        return False
    return True


def proper_subsets(v3: Iterable[int]):
    items = sorted(v3)
    for k in range(1, len(items)):
        yield from combinations(items, k)


def max_breakable_threshold(view: EavesdropperView) -> float:
    """Largest threshold at which some proper subset sum leaks (``0`` if none can)."""
    return max((breakable_threshold(view, T) for T in proper_subsets(view.v3)), default=0)


def privacy_oracle(view: EavesdropperView) -> bool:
    """True iff every proper subset-sum attack fails; brute force over subsets."""
    if len(view.v3) > ORACLE_LIMIT:
        raise TooLarge(f"{len(view.v3)} uploaders exceed the brute-force limit {ORACLE_LIMIT}")
    if view.t is None:
        raise ValueError("threshold unknown")
    return max_breakable_threshold(view) < view.t


def unmasking_attack_feasible(i: int, evolution: GraphEvolution, t: int) -> bool:
    """Enough surviving holders for a server to ask for both of ``i``'s secrets."""
    holders = (evolution.base.adj(i) | {i}) & evolution.survivors[4]
    return len(holders) >= 2 * t


# ---------------------------------------------------------------------------
# Exhaustive equivalence check on small instances
# ---------------------------------------------------------------------------


@dataclass
class ExhaustiveReport:
    n_values: tuple[int, ...]
    graphs: int = 0
    evolutions: int = 0
    cases: int = 0
    reliability_mismatches: list = field(default_factory=list)
    privacy_mismatches: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.reliability_mismatches and not self.privacy_mismatches


def all_graphs(n: int):
    pairs = list(combinations(range(1, n + 1), 2))
    for mask in range(1 << len(pairs)):
        yield AssignmentGraph.build(n, [e for b, e in enumerate(pairs) if mask >> b & 1])


def exhaustive_equivalence(n_values: Iterable[int] = (1, 2, 3, 4, 5)) -> ExhaustiveReport:
    """Compare both predicates with the view-based oracles on every small case.

    For each graph and each assignment of dropout levels the structural view is
    built and attacked once; its breakable thresholds then settle every ``t``.
    Views depend only on ``V2, V3, V4``, so they are memoised on that triple.
    """
    report = ExhaustiveReport(tuple(n_values))
    for n in report.n_values:
        verts = range(1, n + 1)
        for graph in all_graphs(n):
            report.graphs += 1
            memo: dict = {}
            for levels in product(range(5), repeat=n):
                V = tuple(frozenset(v for v, lv in zip(verts, levels) if lv >= k) for k in range(5))
                evo = GraphEvolution(graph, V)
                report.evolutions += 1
                key = V[2:]
                if key not in memo:
                    view = EavesdropperView.structural(graph, evo)
                    decode_at = breakable_threshold(view, view.v3) if view.v3 else math.inf
                    memo[key] = (decode_at, max_breakable_threshold(view))
                decode_at, leak_at = memo[key]
                for t in range(1, n + 1):
                    report.cases += 1
                    if reliability_predicate(evo, t) != (decode_at >= t):
                        report.reliability_mismatches.append((graph.edges, levels, t))
                    if privacy_predicate(evo, t) != (leak_at < t):
                        report.privacy_mismatches.append((graph.edges, levels, t))
    return report
