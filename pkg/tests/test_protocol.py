import random

import numpy as np
import pytest

from ccesa.analysis import bandwidth_sa, q_from_qtotal
from ccesa.crypto import KEY_SHARE, SEED_SHARE, TINY_GROUP, ResidueVector, prg_expand
from ccesa.errors import MissingPeerKey
from ccesa.graph import AssignmentGraph, gen_complete, gen_erdos_renyi, reliability_predicate
from ccesa.messages import (
    AdvertiseKeys,
    EncryptedShares,
    KeyBundle,
    ShareResponse,
    Transcript,
    decode_message,
)
from ccesa.protocol import (
    Client,
    DropoutSchedule,
    ProtocolParams,
    comm_accounting,
    expected_client_bits,
    mask_model,
    plaintext_sum,
    random_models,
    run_round,
    sample_dropouts,
)


def path(n):
    return AssignmentGraph.build(n, [(i, i + 1) for i in range(1, n)])


def star(n):
    return AssignmentGraph.build(n, [(1, j) for j in range(2, n + 1)])


def models(n, m=4, R=16, seed=0):
    return random_models(n, m, R, np.random.default_rng(seed))


def round_on(graph, t, schedule=None, m=4, R=16, seed=0, **kw):
    params = ProtocolParams(n=graph.n, t=t, m=m, R=R, **kw)
    ms = models(graph.n, m, R, seed)
    out = run_round(params, graph, schedule or DropoutSchedule.none(), ms, seed=seed)
    return out, ms


# -- parameters and dropouts ------------------------------------------------------


def test_params_validation():
    for bad in (dict(n=0, t=1), dict(n=3, t=4), dict(n=3, t=0), dict(n=3, t=1, p=1.5),
                dict(n=3, t=1, m=0), dict(n=3, t=1, R=65)):
        with pytest.raises(ValueError):
            ProtocolParams(**bad)


def test_dropout_extremes():
    rng = np.random.default_rng(1)
    assert sample_dropouts(20, 0.0, rng).survivors(20)[4] == set(range(1, 21))
    assert sample_dropouts(20, 1.0, rng).survivors(20)[1] == set()


def test_dropout_survival_rate():
    q = q_from_qtotal(0.1)
    sizes = [len(sample_dropouts(1000, q, np.random.default_rng(s)).survivors(1000)[4])
             for s in range(200)]
    # binomial sd of the mean over 200 draws is about 0.67
    assert abs(np.mean(sizes) - 900) < 3


def test_schedule_rejects_double_drop():
    with pytest.raises(ValueError):
        DropoutSchedule((frozenset({1}), frozenset({1}), frozenset(), frozenset()))
    s = DropoutSchedule.from_levels({2: 1, 3: 3})
    assert s.survivors(3) == ({1, 2, 3}, {1, 2, 3}, {1, 3}, {1, 3}, {1})


# -- step 0 and step 1 ------------------------------------------------------------


def test_complete_graph_bundles():
    out, _ = round_on(gen_complete(5), 3)
    for e in out.transcript.messages(0, KeyBundle):
        assert len(e.message.entries) == 4


def test_empty_graph_bundles_and_shares():
    out, ms = round_on(AssignmentGraph.build(4, []), 1)
    assert all(not e.message.entries for e in out.transcript.messages(0, KeyBundle))
    assert not list(out.transcript.messages(1, EncryptedShares))
    assert out.aggregate == plaintext_sum(ms, range(1, 5), 4, 16)


def test_star_bundles():
    out, _ = round_on(star(6), 1)
    sizes = {e.receiver: len(e.message.entries) for e in out.transcript.messages(0, KeyBundle)}
    assert sizes == {1: 5, 2: 1, 3: 1, 4: 1, 5: 1, 6: 1}


def test_share_counts_degree_four():
    out, _ = round_on(gen_complete(5), 3)
    sent = [e for e in out.transcript.messages(1, EncryptedShares) if e.sender == 2]
    assert len(sent) == 4


def test_step1_shares_decrypt_on_receiver_side():
    params = ProtocolParams(n=2, t=2, m=2)
    g = gen_complete(2)
    ms = models(2, 2)
    a = Client(1, g.adj(1), ms[0], params, random.Random(1))
    b = Client(2, g.adj(2), ms[1], params, random.Random(2))
    a.receive_keys(KeyBundle(1, ((2, b.c_keys.public, b.s_keys.public),)))
    b.receive_keys(KeyBundle(2, ((1, a.c_keys.public, a.s_keys.public),)))
    (msg,) = a.share_keys()
    b.receive_shares([msg])
    assert b._open(1, SEED_SHARE).owner == 1
    assert b._open(1, KEY_SHARE).kind == KEY_SHARE


def test_isolated_client_keeps_only_its_own_share():
    out, _ = round_on(AssignmentGraph.build(3, [(1, 2)]), 1)
    assert not [e for e in out.transcript.messages(1, EncryptedShares) if e.sender == 3]


def test_short_sharing_is_diagnosed():
    out, _ = round_on(path(4), 3)
    assert out.diagnostics.short_sharing == [1, 4]
    assert not out.ok and out.diagnostics.non_informative == [1, 4]


# -- masking ------------------------------------------------------------------------


def _client_pair(m=3, R=16):
    params = ProtocolParams(n=2, t=1, m=m, R=R)
    g = gen_complete(2)
    zero = ResidueVector.zeros(m, R)
    a = Client(1, g.adj(1), zero, params, random.Random(5))
    b = Client(2, g.adj(2), zero, params, random.Random(6))
    a.receive_keys(KeyBundle(1, ((2, b.c_keys.public, b.s_keys.public),)))
    b.receive_keys(KeyBundle(2, ((1, a.c_keys.public, a.s_keys.public),)))
    a.share_keys()
    b.share_keys()
    return a, b


def test_mask_without_neighbours_is_self_mask():
    a, _ = _client_pair()
    assert mask_model(a, frozenset()) == prg_expand(a.self_seed, 3, 16)


def test_pairwise_masks_cancel():
    a, b = _client_pair()
    total = mask_model(a, {2}) + mask_model(b, {1})
    assert total == prg_expand(a.self_seed, 3, 16) + prg_expand(b.self_seed, 3, 16)
    # the smaller index adds the shared mask
    s12 = a.pairwise_seed(2)
    assert s12 == b.pairwise_seed(1)
    assert mask_model(a, {2}) == prg_expand(a.self_seed, 3, 16) + prg_expand(s12, 3, 16)


def test_missing_peer_key():
    a, _ = _client_pair()
    with pytest.raises(MissingPeerKey):
        a.pairwise_seed(7)


# -- unmasking ---------------------------------------------------------------------


def test_complete_graph_reduces_to_plain_sum():
    out, ms = round_on(gen_complete(5), 3, m=16, R=32)
    assert out.ok
    assert out.aggregate == plaintext_sum(ms, range(1, 6), 16, 32)


def test_path_with_middle_dropout_t1():
    # client 2 leaves after sending its shares; the server rebuilds its key
    # and strips both pairwise masks from the neighbours' uploads
    sched = DropoutSchedule.from_levels({2: 2})
    out, ms = round_on(path(3), 1, sched)
    assert out.ok
    assert out.aggregate == ms[0] + ms[2]
    responses = {e.sender: e.message for e in out.transcript.messages(3, ShareResponse)}
    assert {(s.owner, s.kind) for s in responses[1].shares} == {(1, SEED_SHARE), (2, KEY_SHARE)}


def test_path_with_middle_dropout_t2_fails():
    # end nodes keep only their own share in V4, one short of t = 2
    sched = DropoutSchedule.from_levels({2: 2})
    out, _ = round_on(path(3), 2, sched)
    assert not out.ok
    assert out.diagnostics.non_informative == [1, 3]


def test_threshold_above_survivors_fails():
    sched = DropoutSchedule.from_levels({4: 3, 5: 3})
    out, _ = round_on(gen_complete(5), 4, sched)
    assert not out.ok and out.diagnostics.error


def test_server_never_requests_both_secrets():
    rng = np.random.default_rng(9)
    for r in range(20):
        g = gen_erdos_renyi(10, 0.6, rng)
        sched = sample_dropouts(10, 0.15, rng)
        out, _ = round_on(g, 2, sched, seed=r)
        seen = {}
        for e in out.transcript.messages(3, ShareResponse):
            for s in e.message.shares:
                assert seen.setdefault(s.owner, s.kind) == s.kind


def test_er_rounds_match_plaintext_oracle():
    q = q_from_qtotal(0.1)
    rng = np.random.default_rng(2024)
    ok = 0
    for r in range(500):
        g = gen_erdos_renyi(10, 0.8, rng)
        sched = sample_dropouts(10, q, rng)
        out, ms = round_on(g, 3, sched, m=8, R=24, seed=r)
        reliable = reliability_predicate(out.evolution, 3)
        assert out.ok == reliable
        if reliable:
            ok += 1
            assert out.aggregate == plaintext_sum(ms, out.evolution.V(3), 8, 24)
    assert ok > 400


def test_round_is_deterministic():
    g = gen_erdos_renyi(12, 0.5, np.random.default_rng(4))
    sched = sample_dropouts(12, 0.05, np.random.default_rng(5))
    a, _ = round_on(g, 3, sched, seed=77)
    b, _ = round_on(g, 3, sched, seed=77)
    c, _ = round_on(g, 3, sched, seed=78)
    assert a.transcript.digest() == b.transcript.digest() != c.transcript.digest()


def test_modp_group_round():
    params = ProtocolParams(n=4, t=2, m=3)
    ms = models(4, 3)
    out = run_round(params, gen_complete(4), DropoutSchedule.from_levels({3: 2}), ms, group=TINY_GROUP)
    assert out.aggregate == ms[0] + ms[1] + ms[3]


def test_run_round_checks_inputs():
    params = ProtocolParams(n=3, t=1, m=2)
    with pytest.raises(ValueError):
        run_round(params, gen_complete(4), DropoutSchedule.none(), models(4, 2))
    with pytest.raises(ValueError):
        run_round(params, gen_complete(3), DropoutSchedule.none(), models(3, 5))


# -- transcript and accounting -------------------------------------------------------------


def test_transcript_json_roundtrip():
    sched = DropoutSchedule.from_levels({3: 2, 5: 3})
    out, _ = round_on(gen_erdos_renyi(6, 0.7, np.random.default_rng(1)), 2, sched)
    back = Transcript.from_json(out.transcript.to_json())
    assert back.digest() == out.transcript.digest()
    assert back.cost_bits == out.transcript.cost_bits
    assert [type(e.message) for e in back.entries] == [type(e.message) for e in out.transcript.entries]


def test_message_sizes_match_encoding():
    out, _ = round_on(gen_complete(3), 2)
    codec = out.transcript.codec
    for e in out.transcript.entries:
        assert e.wire_bytes == len(e.message.encode(codec))
        assert decode_message(e.payload, codec) == e.message


def test_counters_sum_message_costs():
    out, _ = round_on(gen_erdos_renyi(7, 0.5, np.random.default_rng(2)), 2)
    tr = out.transcript
    for who in range(0, 8):
        assert tr.cost_bits[who] == sum(
            e.cost_bits for e in tr.entries if who in (e.sender, e.receiver)
        )


def test_cost_formula_degree_four():
    params = ProtocolParams(n=5, t=3, m=10000, R=16)
    assert expected_client_bits(4, params) == 167936
    out = run_round(params, gen_complete(5), DropoutSchedule.none(), models(5, 10000, 16))
    assert set(comm_accounting(out.transcript).client_bits.values()) == {167936}


@pytest.mark.parametrize("n", [2, 6, 11])
def test_complete_graph_cost_matches_sa(n):
    out, _ = round_on(gen_complete(n), 2, m=10, R=16)
    bits = comm_accounting(out.transcript).client_bits
    assert set(bits.values()) == {bandwidth_sa(n, 256, 256) + 10 * 16}


def test_empty_graph_cost():
    out, _ = round_on(AssignmentGraph.build(3, []), 1, m=10, R=16)
    assert set(comm_accounting(out.transcript).client_bits.values()) == {2 * 256 + 256 + 160}


def test_er_costs_per_degree():
    g = gen_erdos_renyi(15, 0.4, np.random.default_rng(8))
    out, _ = round_on(g, 2, m=5, R=12, a_K=64, a_S=200)
    params = ProtocolParams(n=15, t=2, m=5, R=12, a_K=64, a_S=200)
    bits = comm_accounting(out.transcript).client_bits
    for i in g.vertices:
        assert bits[i] == expected_client_bits(g.degree(i), params)


def test_advertise_message_units():
    msg = AdvertiseKeys(1, b"x" * 32, b"y" * 32)
    assert msg.key_units == 2 and msg.share_units == 0
