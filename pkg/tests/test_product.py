import numpy as np
import pytest
from hypothesis import given, strategies as st

from omegarm.fixtures import petrol_counter_rm, petrol_dra, petrol_mdp, random_dra, random_mdp, zero_rm
from omegarm.model import PolicyTable, TableRewardMachine, make_dra, make_mdp, memoryless
from omegarm.product import build_product, build_rm_product, lift_policy, product_policy_from_base

A, B = 0, 1


def test_running_product_states():
    m, d = petrol_mdp(), petrol_dra()
    p = build_product(m, d)
    assert set(p.backmap) == {(0, 0), (1, 1), (0, 1), (1, 2), (0, 2)}
    assert p.backmap[0] == (0, 0)
    full = build_product(m, d, exhaustive=True)
    assert full.mdp.n_states == 6
    assert full.backmap == [(s, q) for s in range(2) for q in range(3)]
    acc, rej = p.pairs[0]
    assert {p.backmap[v] for v in acc} == {(0, 1), (1, 1)} and not rej
    # b at (s0, q0) reads p and lands in (s1, q1)
    assert p.mdp.trans[(p.index(0, 0), B)][p.index(1, 1)] == 1.0


def test_identity_product():
    m = make_mdp(1, {(0, A): {0: 1.0}})
    d = make_dra(1, (), lambda q, l: 0, [(frozenset({0}), frozenset())])
    p = build_product(m, d)
    assert p.mdp.n_states == 1 and p.mdp.enabled == ((A,),)
    assert p.mdp.trans[(0, A)][0] == 1.0


@given(seed=st.integers(0, 10 ** 6))
def test_product_rows_embed_base_rows(seed):
    rng = np.random.default_rng(seed)
    m = random_mdp(rng, 3, 2)
    d = random_dra(rng, 2, m.ap)
    p = build_product(m, d)
    for v, (s, q) in enumerate(p.backmap):
        assert p.mdp.enabled[v] == m.enabled[s]
        for a in m.enabled[s]:
            row = p.mdp.trans[(v, a)]
            for t in range(m.n_states):
                w = p.index(t, d.step(q, m.label(s, a, t)))
                expect = m.trans[(s, a)][t]
                if expect > 0:
                    assert row[w] == pytest.approx(expect, abs=1e-15)
            assert row.sum() == pytest.approx(1.0)


def test_counter_rm_product():
    m = petrol_mdp()
    rp = build_rm_product(m, petrol_counter_rm(m))
    assert set(rp.backmap) == {(0, 0), (1, 1), (0, 1), (1, 2), (0, 2)}
    paying = [(rp.backmap[v], a, rp.backmap[w]) for (v, a), row in rp.reward.items()
              for w in np.flatnonzero(row)]
    assert paying == [((0, 1), A, (0, 1))]
    assert rp.reward[(rp.index(0, 1), A)][rp.index(0, 1)] == 1.0


def test_zero_rm_product_is_isomorphic():
    rng = np.random.default_rng(3)
    m = random_mdp(rng, 4, 2)
    rp = build_rm_product(m, zero_rm(m), cap=None)
    assert rp.mdp.n_states <= m.n_states
    for (v, a), row in rp.mdp.trans.items():
        s = rp.backmap[v][0]
        back = np.zeros(m.n_states)
        for w in np.flatnonzero(row):
            back[rp.backmap[w][0]] += row[w]
        assert np.allclose(back, m.trans[(s, a)])
        assert not rp.reward[(v, a)].any()


@given(seed=st.integers(0, 10 ** 6))
def test_rm_product_structure(seed):
    rng = np.random.default_rng(seed)
    m = random_mdp(rng, 3, 2)
    upd = {(u, e): int(rng.integers(2)) for u in range(2) for e in m.syntactic_transitions()}
    r = TableRewardMachine.from_functions([0, 1], 0, m.syntactic_transitions(),
                                          lambda u, e: upd[(u, e)], lambda u, e: 0.5 * u)
    rp = build_rm_product(m, r)
    assert rp.mdp.n_states <= 3 * 2
    for (v, a), row in rp.mdp.trans.items():
        s, u = rp.backmap[v]
        for w in np.flatnonzero(row):
            t, u2 = rp.backmap[w]
            assert row[w] == m.trans[(s, a)][t]
            assert u2 == upd[(u, (s, a, t))]
            assert rp.reward[(v, a)][w] == 0.5 * u


def test_lift_policy_uses_memory():
    m, d = petrol_mdp(), petrol_dra()
    p = build_product(m, d)
    choice = {v: (B if (s, q) == (0, 0) else A if s == 0 else B) for v, (s, q) in enumerate(p.backmap)}
    lifted = lift_policy(PolicyTable("memoryless", choice), p)
    assert lifted.kind == "finite-memory"
    assert lifted(0, 0) == B and lifted(0, 1) == A
    assert lifted.memory(0, (0, B, 1)) == 1


def test_constant_policy_lifts_to_memoryless_behaviour():
    m, d = petrol_mdp(), petrol_dra()
    p = build_product(m, d)
    choice = {v: B for v in range(p.mdp.n_states)}
    lifted = lift_policy(PolicyTable("memoryless", choice), p)
    assert {a for a in lifted.choice.values()} == {B}
    assert product_policy_from_base(memoryless([B, B]), p).choice == choice


def test_lifted_policy_replays_product_policy():
    rng = np.random.default_rng(11)
    m = random_mdp(rng, 3, 2)
    d = random_dra(rng, 2, m.ap)
    p = build_product(m, d)
    choice = {v: int(rng.choice(p.mdp.enabled[v])) for v in range(p.mdp.n_states)}
    lifted = lift_policy(PolicyTable("memoryless", choice), p)
    steps = 10_000
    u = np.random.default_rng(5).random(steps)
    # product walk
    v, trace_p = p.mdp.initial, []
    for x in u:
        a = choice[v]
        trace_p.append(a)
        # order successors by base state so both walks read the uniforms alike
        row = p.mdp.trans[(v, a)]
        ws = sorted(np.flatnonzero(row), key=lambda w: p.backmap[w][0])
        cum = np.cumsum(row[ws])
        v = int(ws[min(np.searchsorted(cum, x * cum[-1], side="right"), len(ws) - 1)])
    # base walk with memory, same uniforms
    s, mem, trace_b = m.initial, lifted.memory_initial, []
    for x in u:
        a = lifted(s, mem)
        trace_b.append(a)
        row = m.trans[(s, a)]
        ts = np.flatnonzero(row)
        cum = np.cumsum(row[ts])
        t = int(ts[min(np.searchsorted(cum, x * cum[-1], side="right"), len(ts) - 1)])
        mem = lifted.memory(mem, (s, a, t))
        s = t
    assert trace_p != [] and trace_b == trace_p


def test_lift_rejects_partial():
    p = build_product(petrol_mdp(), petrol_dra())
    with pytest.raises(ValueError):
        lift_policy(PolicyTable("memoryless", {0: A}), p)
