import numpy as np
import pytest
from hypothesis import given, strategies as st

from omegarm.fixtures import petrol_counter_rm, petrol_dra, petrol_mdp, random_dra
from omegarm.model import (DomainError, UltimatelyPeriodicWord, dra_accepts, letter_mask, make_dra,
                           make_mdp, mask_props, memoryless, check_policy, rm_step, validate_dra,
                           validate_mdp, validate_rm)
from omegarm.translate import BOT, translate_known_support

P = 1
A, B = 0, 1


def kinds(violations):
    return {v.kind for v in violations}


def test_running_example_valid():
    assert validate_mdp(petrol_mdp()) == []
    assert validate_dra(petrol_dra(), ("p",)) == []


def test_row_sum_violation():
    m = make_mdp(2, {(0, A): {0: 0.9}, (1, A): {1: 1.0}})
    v = validate_mdp(m)
    assert "row-sum" in kinds(v)
    assert any("s0" in x.where and "a0" in x.where for x in v)


def test_no_enabled_action():
    m = make_mdp(2, {(0, A): {0: 1.0}})
    assert "no enabled action" in kinds(validate_mdp(m))


def test_negative_probability():
    m = make_mdp(1, {(0, A): {0: 1.0}})
    m.trans[(0, A)][0] = -0.5
    assert validate_mdp(m)


def test_partial_delta():
    d = petrol_dra()
    del d.delta[(1, P)]
    assert "partial delta" in kinds(validate_dra(d, ("p",)))


def test_pair_out_of_range():
    d = make_dra(3, ("p",), lambda q, l: q, [(frozenset({9}), frozenset())])
    assert "pair out of range" in kinds(validate_dra(d, ("p",)))


def test_letter_mask_roundtrip():
    ap = ("p", "q", "r")
    assert letter_mask(["r", "p"], ap) == 0b101
    assert mask_props(0b101, ap) == ["p", "r"]
    with pytest.raises(DomainError):
        letter_mask(["x"], ap)


@pytest.mark.parametrize("prefix,cycle,expected", [
    ((0, 0, 0, P), (0,), True),
    ((), (0,), False),
    ((P, P), (0,), False),
    ((), (P,), False),
    ((P,), (0, 0), True),
])
def test_dra_accepts_petrol(prefix, cycle, expected):
    assert dra_accepts(petrol_dra(), UltimatelyPeriodicWord(prefix, cycle)) is expected


def test_empty_cycle_rejected():
    with pytest.raises(DomainError):
        UltimatelyPeriodicWord((0,), ())


def _words(n_letters):
    letter = st.integers(0, n_letters - 1)
    return st.tuples(st.lists(letter, max_size=5).map(tuple), st.lists(letter, min_size=1, max_size=4).map(tuple))


@given(seed=st.integers(0, 10 ** 6), w=_words(2), shift=st.integers(0, 3), reps=st.integers(1, 3))
def test_acceptance_invariant_under_cycle_rewriting(seed, w, shift, reps):
    """Unrolling the cycle into the prefix or repeating it denotes the same word."""
    d = random_dra(np.random.default_rng(seed), 3, ("p",))
    prefix, cycle = w
    base = dra_accepts(d, UltimatelyPeriodicWord(prefix, cycle))
    k = shift % len(cycle)
    rotated = UltimatelyPeriodicWord(prefix + cycle[:k], cycle[k:] + cycle[:k])
    repeated = UltimatelyPeriodicWord(prefix, cycle * reps)
    assert dra_accepts(d, rotated) == base
    assert dra_accepts(d, repeated) == base


@given(seed=st.integers(0, 10 ** 6), w=_words(2))
def test_acceptance_matches_long_run_simulation(seed, w):
    """Independent check: run the DRA for many cycle repetitions and collect
    the states seen in the last full lap of the eventual period."""
    d = random_dra(np.random.default_rng(seed), 3, ("p",))
    prefix, cycle = w
    q = d.initial
    for l in prefix:
        q = d.step(q, l)
    for _ in range(50):
        for l in cycle:
            q = d.step(q, l)
    seen = set()
    for _ in range(d.n_states):
        for l in cycle:
            seen.add(q)
            q = d.step(q, l)
    accepted = any(seen & acc and not seen & rej for acc, rej in d.pairs)
    assert dra_accepts(d, UltimatelyPeriodicWord(prefix, cycle)) == accepted


def test_counter_rm_steps():
    r = petrol_counter_rm()
    assert rm_step(r, 1, (0, A, 0)) == (1, 1.0)
    assert rm_step(r, 0, (0, A, 0)) == (0, 0.0)
    assert rm_step(r, 0, (0, B, 1)) == (1, 0.0)
    assert validate_rm(r, petrol_mdp()) == []


def test_constructed_rm_pays_on_leaving_covered_state():
    m, d = petrol_mdp(), petrol_dra()
    r = translate_known_support(m, d)
    assert rm_step(r, 1, (0, B, 1)) == (BOT, 1.0)


def test_unknown_transition():
    with pytest.raises(DomainError, match="transition not in domain"):
        rm_step(petrol_counter_rm(), 0, (1, A, 1))


def test_policy_check():
    m = petrol_mdp()
    assert check_policy(m, memoryless([A, B])) == []
    assert check_policy(m, memoryless([A, A]))
