"""Client and server state machines for one aggregation round.

A round runs in four steps:

0. clients advertise two public keys; the server forwards to each client the
   keys of its graph neighbours that are still alive;
1. each client secret-shares its self-mask seed and its masking secret key
   over its neighbourhood (itself included) and sends each neighbour an
   encrypted pair of shares through the server;
2. each client uploads its model plus a self mask and signed pairwise masks;
3. the server announces who uploaded, collects seed shares for uploaders and
   key shares for the rest, and strips every mask.

Dropouts are injected between steps through a :class:`DropoutSchedule`. A
client that drops at a transition sends nothing from that step on; sends
within a step are atomic.
"""

from __future__ import annotations

import random
import time
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .crypto import (
    DEFAULT_FIELD,
    DEFAULT_GROUP,
    KEY_SHARE,
    SEED_BYTES,
    SEED_SHARE,
    ByteShare,
    DHGroup,
    PrimeField,
    ResidueVector,
    ae_decrypt,
    ae_encrypt,
    derive_nonce,
    key_agree,
    prg_expand,
    reconstruct_bytes,
    share_bytes,
)
from .errors import MissingPeerKey, ReliabilityFailure, ShareMismatch
from .graph import AssignmentGraph, GraphEvolution, non_informative
from .messages import (
    SERVER,
    AdvertiseKeys,
    EncryptedShares,
    KeyBundle,
    MaskedModel,
    ShareResponse,
    SurvivorList,
    Transcript,
)
from .seeds import make_rng

STEPS = 4


@dataclass(frozen=True)
class ProtocolParams:
    n: int
    t: int
    p: float = 1.0
    q: float = 0.0
    m: int = 1
    R: int = 16
    a_K: int = 256
    a_S: int = 256

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be positive")
        if not 0.0 <= self.p <= 1.0 or not 0.0 <= self.q <= 1.0:
            raise ValueError("p and q must lie in [0, 1]")
        if not 1 <= self.t <= self.n:
            raise ValueError(f"t must lie in [1, n], got {self.t}")
        if self.m < 1:
            raise ValueError("m must be positive")
        if not 1 <= self.R <= 64:
            raise ValueError("R must lie in [1, 64]")
        if self.a_K < 0 or self.a_S < 0:
            raise ValueError("a_K and a_S must be nonnegative")


# ---------------------------------------------------------------------------
# Dropouts
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DropoutSchedule:
    """``dropped[k]`` is the set of clients lost at transition ``V_k -> V_{k+1}``."""

    dropped: tuple[frozenset[int], ...] = (frozenset(),) * STEPS

    def __post_init__(self):
        if len(self.dropped) != STEPS:
            raise ValueError("a schedule covers exactly four transitions")
        seen: set[int] = set()
        for d in self.dropped:
            if d & seen:
                raise ValueError("a client can drop only once")
            seen |= d

    @classmethod
    def none(cls) -> "DropoutSchedule":
        return cls()

    @classmethod
    def from_levels(cls, levels: Mapping[int, int]) -> "DropoutSchedule":
        """``levels[i] = k < 4`` drops client ``i`` at transition ``k``."""
        sets = [set() for _ in range(STEPS)]
        for i, k in levels.items():
            if k < STEPS:
                sets[k].add(i)
        return cls(tuple(frozenset(s) for s in sets))

    def survivors(self, n: int) -> tuple[frozenset[int], ...]:
        alive = frozenset(range(1, n + 1))
        out = [alive]
        for d in self.dropped:
            alive = alive - d
            out.append(alive)
        return tuple(out)


def sample_dropouts(n: int, q: float, rng: np.random.Generator) -> DropoutSchedule:
    """Every client still alive drops with probability ``q`` at each transition."""
    if not 0.0 <= q <= 1.0:
        raise ValueError("q must lie in [0, 1]")
    u = rng.random((STEPS, n))
    alive = np.ones(n, dtype=bool)
    sets = []
    for k in range(STEPS):
        drop = alive & (u[k] < q)
        sets.append(frozenset((np.flatnonzero(drop) + 1).tolist()))
        alive &= ~drop
    return DropoutSchedule(tuple(sets))


# ---------------------------------------------------------------------------
# Client
# ---------------------------------------------------------------------------


def _signed_masks(acc: np.ndarray, me: int, peers, seeds: Mapping[int, bytes], m: int, R: int):
    for j in sorted(peers):
        mask = prg_expand(seeds[j], m, R).coords
        if me < j:
            acc += mask
        else:
            acc -= mask


class Client:
    def __init__(
        self,
        cid: int,
        neighbors: frozenset[int],
        model: ResidueVector,
        params: ProtocolParams,
        rng: random.Random,
        group: DHGroup = DEFAULT_GROUP,
        field: PrimeField = DEFAULT_FIELD,
        round_id: int = 0,
    ):
        self.id = cid
        self.neighbors = frozenset(neighbors)
        self.model = model
        self.params = params
        self.rng = rng
        self.group = group
        self.field = field
        self.round_id = round_id
        self.c_keys = group.keygen(rng)
        self.s_keys = group.keygen(rng)
        self.self_seed: bytes | None = None
        self.peer_keys: dict[int, tuple] = {}
        self.received: dict[int, EncryptedShares] = {}
        self.own_shares: tuple[ByteShare, ByteShare] | None = None
        self.short_sharing = False
        self._channel: dict[int, bytes] = {}

    # step 0
    def advertise(self) -> AdvertiseKeys:
        return AdvertiseKeys(self.id, self.c_keys.public, self.s_keys.public)

    def receive_keys(self, bundle: KeyBundle) -> None:
        for j, c_pk, s_pk in bundle.entries:
            if j not in self.neighbors:
                raise ValueError(f"client {self.id} got keys of non-neighbour {j}")
            self.group.validate(c_pk)
            self.group.validate(s_pk)
            self.peer_keys[j] = (c_pk, s_pk)

    def _channel_key(self, j: int) -> bytes:
        key = self._channel.get(j)
        if key is None:
            if j not in self.peer_keys:
                raise MissingPeerKey(j)
            key = key_agree(self.peer_keys[j][0], self.c_keys.secret, self.group)
            self._channel[j] = key
        return key

    def _nonce(self, sender: int, receiver: int, kind: str) -> bytes:
        return derive_nonce(self.round_id, 1, sender, receiver, kind)

    # step 1
    def share_keys(self) -> list[EncryptedShares]:
        t = self.params.t
        self.self_seed = self.rng.getrandbits(8 * SEED_BYTES).to_bytes(SEED_BYTES, "big")
        points = sorted(self.neighbors | {self.id})
        self.short_sharing = t > len(points)
        b_sh = share_bytes(
            self.self_seed, t, points, self.rng, self.field,
            owner=self.id, kind=SEED_SHARE, allow_short=True,
        )
        sk_sh = share_bytes(
            self.group.encode_secret(self.s_keys.secret), t, points, self.rng, self.field,
            owner=self.id, kind=KEY_SHARE, allow_short=True,
        )
        out = []
        for b, s in zip(b_sh, sk_sh):
            j = b.index
            if j == self.id:
                self.own_shares = (b, s)
            elif j in self.peer_keys:
                key = self._channel_key(j)
                out.append(EncryptedShares(
                    self.id, j,
                    ae_encrypt(key, b.to_bytes(self.field), self._nonce(self.id, j, SEED_SHARE)),
                    ae_encrypt(key, s.to_bytes(self.field), self._nonce(self.id, j, KEY_SHARE)),
                ))
        return out

    def receive_shares(self, msgs: Sequence[EncryptedShares]) -> None:
        for msg in msgs:
            if msg.receiver != self.id or msg.sender not in self.neighbors:
                raise ValueError(f"misrouted share pair {msg.sender}->{msg.receiver}")
            self.received[msg.sender] = msg

    @property
    def v2_neighbors(self) -> frozenset[int]:
        """Neighbours whose share pairs arrived, i.e. ``Adj(i) ∩ V2`` as seen by ``i``."""
        return frozenset(self.received)

    # step 2
    def pairwise_seed(self, j: int) -> bytes:
        if j not in self.peer_keys:
            raise MissingPeerKey(j)
        return key_agree(self.peer_keys[j][1], self.s_keys.secret, self.group)

    def masked_model(self) -> MaskedModel:
        return MaskedModel(self.id, mask_model(self, self.v2_neighbors))

    # step 3
    def _open(self, j: int, kind: str) -> ByteShare:
        msg = self.received[j]
        ct = msg.b_ct if kind == SEED_SHARE else msg.s_ct
        share = ByteShare.from_bytes(ae_decrypt(self._channel_key(j), ct), self.field)
        if share.owner != j or share.index != self.id or share.kind != kind:
            raise ShareMismatch(f"share from {j} does not match its envelope")
        return share

    def unmask_response(self, survivors: SurvivorList) -> ShareResponse:
        v3 = frozenset(survivors.survivors)
        shares = []
        if self.id in v3 and self.own_shares is not None:
            shares.append(self.own_shares[0])
        for j in sorted(self.received):
            shares.append(self._open(j, SEED_SHARE if j in v3 else KEY_SHARE))
        return ShareResponse(self.id, tuple(shares))


def mask_model(client: Client, v2_neighbors) -> ResidueVector:
    """Model plus ``PRG(b_i)`` plus ``+PRG(s_ij)`` for ``i < j`` and ``-PRG(s_ij)`` for ``i > j``."""
    p = client.params
    if client.self_seed is None:
        raise ValueError("self-mask seed not drawn yet")
    acc = client.model.coords.copy()
    acc += prg_expand(client.self_seed, p.m, p.R).coords
    seeds = {j: client.pairwise_seed(j) for j in v2_neighbors}
    _signed_masks(acc, client.id, v2_neighbors, seeds, p.m, p.R)
    return ResidueVector(acc, p.R)


# ---------------------------------------------------------------------------
# Server
# ---------------------------------------------------------------------------


class Server:
    def __init__(
        self,
        graph: AssignmentGraph,
        params: ProtocolParams,
        group: DHGroup = DEFAULT_GROUP,
        field: PrimeField = DEFAULT_FIELD,
    ):
        self.graph = graph
        self.params = params
        self.group = group
        self.field = field
        self.keys: dict[int, tuple] = {}
        self.V1: frozenset[int] = frozenset()
        self.V2: frozenset[int] = frozenset()
        self.V3: frozenset[int] = frozenset()
        self.V4: frozenset[int] = frozenset()
        self.masked: dict[int, ResidueVector] = {}
        self.seeds: dict[int, bytes] = {}
        self.secret_keys: dict[int, bytes] = {}

    def collect_keys(self, ads: Mapping[int, AdvertiseKeys]) -> dict[int, KeyBundle]:
        self.keys = {i: (a.c_pk, a.s_pk) for i, a in ads.items()}
        self.V1 = frozenset(ads)
        return {
            j: KeyBundle(j, tuple((i, *self.keys[i]) for i in sorted(self.graph.adj(j) & self.V1)))
            for j in sorted(self.V1)
        }

    def route_shares(
        self, uploads: Mapping[int, Sequence[EncryptedShares]]
    ) -> dict[int, list[EncryptedShares]]:
        self.V2 = frozenset(uploads)
        inbox: dict[int, list[EncryptedShares]] = {j: [] for j in sorted(self.V2)}
        for i in sorted(uploads):
            for msg in uploads[i]:
                if msg.receiver in inbox:
                    inbox[msg.receiver].append(msg)
        return inbox

    def collect_masked(self, msgs: Mapping[int, MaskedModel]) -> SurvivorList:
        self.masked = {i: m.vector for i, m in msgs.items()}
        self.V3 = frozenset(msgs)
        return SurvivorList(tuple(sorted(self.V3)))

    def requested(self) -> dict[int, str]:
        """Which secret the server asks for, per client: seed for V3, key for V2 \\ V3."""
        req = {i: SEED_SHARE for i in self.V3}
        for i in self.V2 - self.V3:
            if self.graph.adj(i) & self.V3:
                req[i] = KEY_SHARE
        return req

    def unmask(self, responses: Mapping[int, ShareResponse]) -> ResidueVector:
        p = self.params
        self.V4 = frozenset(responses)
        req = self.requested()
        pool: dict[int, list[ByteShare]] = defaultdict(list)
        for j in sorted(responses):
            for s in responses[j].shares:
                if req.get(s.owner) == s.kind:
                    pool[s.owner].append(s)
        short = sorted(i for i in req if len(pool[i]) < p.t)
        if short:
            raise ReliabilityFailure(tuple(short))

        acc = np.zeros(p.m, dtype=np.uint64)
        for i in sorted(self.V3):
            acc += self.masked[i].coords
        for i in sorted(req):
            secret = reconstruct_bytes(pool[i], self.field, verify=True)
            if req[i] == SEED_SHARE:
                self.seeds[i] = secret
                acc -= prg_expand(secret, p.m, p.R).coords
            else:
                self.secret_keys[i] = secret
                sk = self.group.decode_secret(secret)
                peers = self.graph.adj(i) & self.V3
                seeds = {j: key_agree(self.keys[j][1], sk, self.group) for j in peers}
                # the dropped client's masks were never added; cancel the peers' halves
                _signed_masks(acc, i, peers, seeds, p.m, p.R)
        return ResidueVector(acc, p.R)


# ---------------------------------------------------------------------------
# Orchestration
# ---------------------------------------------------------------------------


@dataclass
class Diagnostics:
    short_sharing: list[int] = field(default_factory=list)
    non_informative: list[int] = field(default_factory=list)
    error: str | None = None


@dataclass
class RoundOutcome:
    aggregate: ResidueVector | None
    transcript: Transcript
    evolution: GraphEvolution
    diagnostics: Diagnostics
    timings: dict[str, list[float]] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return self.aggregate is not None


def random_models(n: int, m: int, R: int, rng: np.random.Generator) -> list[ResidueVector]:
    """Uniform synthetic models over ``Z_{2^R}``."""
    top = np.uint64((1 << R) - 1)
    return [
        ResidueVector(rng.integers(0, top, size=m, dtype=np.uint64, endpoint=True), R)
        for _ in range(n)
    ]


def plaintext_sum(models: Sequence[ResidueVector], ids, m: int, R: int) -> ResidueVector:
    acc = ResidueVector.zeros(m, R)
    for i in sorted(ids):
        acc = acc + models[i - 1]
    return acc


def _timed(bucket: list[float], fn, *args):
    t0 = time.perf_counter()
    out = fn(*args)
    bucket.append(time.perf_counter() - t0)
    return out


def run_round(
    params: ProtocolParams,
    graph: AssignmentGraph,
    schedule: DropoutSchedule,
    local_models: Sequence[ResidueVector],
    *,
    seed: int = 0,
    round_id: int = 0,
    group: DHGroup = DEFAULT_GROUP,
    field: PrimeField = DEFAULT_FIELD,
) -> RoundOutcome:
    n = params.n
    if graph.n != n:
        raise ValueError(f"graph has {graph.n} vertices, expected {n}")
    if len(local_models) != n:
        raise ValueError(f"need {n} local models, got {len(local_models)}")
    for v in local_models:
        if v.m != params.m or v.bits != params.R:
            raise ValueError("local model shape does not match params")

    V = schedule.survivors(n)
    evolution = GraphEvolution(graph, V)
    tr = Transcript(n=n, t=params.t, m=params.m, R=params.R, a_K=params.a_K, a_S=params.a_S,
                    group=group, field=field, round_id=round_id)
    timings: dict[str, list[float]] = defaultdict(list)
    clients = {
        i: Client(i, graph.adj(i), local_models[i - 1], params,
                  make_rng(seed, "round", round_id, "client", i), group, field, round_id)
        for i in range(1, n + 1)
    }
    server = Server(graph, params, group, field)
    diag = Diagnostics()

    # step 0
    ads = {}
    for i in sorted(V[1]):
        ads[i] = _timed(timings["client_step0"], clients[i].advertise)
        tr.record(0, i, SERVER, ads[i])
    bundles = _timed(timings["server_step0"], server.collect_keys, ads)
    for j, bundle in bundles.items():
        tr.record(0, SERVER, j, bundle)
        clients[j].receive_keys(bundle)

    # step 1
    uploads = {}
    for i in sorted(V[2]):
        uploads[i] = _timed(timings["client_step1"], clients[i].share_keys)
        for msg in uploads[i]:
            tr.record(1, i, SERVER, msg)
        if clients[i].short_sharing:
            diag.short_sharing.append(i)
    inbox = _timed(timings["server_step1"], server.route_shares, uploads)
    for j, msgs in inbox.items():
        for msg in msgs:
            tr.record(1, SERVER, j, msg)
        clients[j].receive_shares(msgs)

    # step 2
    masked = {}
    for i in sorted(V[3]):
        masked[i] = _timed(timings["client_step2"], clients[i].masked_model)
        tr.record(2, i, SERVER, masked[i])
    survivors = _timed(timings["server_step2"], server.collect_masked, masked)
    for j in survivors.survivors:
        tr.record(2, SERVER, j, survivors)

    # step 3
    responses = {}
    for j in sorted(V[4]):
        responses[j] = _timed(timings["client_step3"], clients[j].unmask_response, survivors)
        tr.record(3, j, SERVER, responses[j])
    aggregate = None
    try:
        aggregate = _timed(timings["server_step3"], server.unmask, responses)
    except ReliabilityFailure as exc:
        diag.error = str(exc)
    diag.non_informative = non_informative(evolution.v3_plus(), evolution, params.t)
    return RoundOutcome(aggregate, tr, evolution, diag, dict(timings))


# ---------------------------------------------------------------------------
# Accounting
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CommReport:
    client_bits: dict[int, int]
    server_bits: int
    client_wire_bytes: dict[int, int]
    server_wire_bytes: int


def comm_accounting(transcript: Transcript) -> CommReport:
    ids = range(1, transcript.n + 1)
    return CommReport(
        {i: transcript.cost_bits.get(i, 0) for i in ids},
        transcript.cost_bits.get(SERVER, 0),
        {i: transcript.wire_bytes.get(i, 0) for i in ids},
        transcript.wire_bytes.get(SERVER, 0),
    )


def expected_client_bits(degree: int, params: ProtocolParams) -> int:
    """Dropout-free per-client total under the unit cost model."""
    return (
        2 * (degree + 1) * params.a_K
        + (5 * degree + 1) * params.a_S
        + params.m * params.R
    )
