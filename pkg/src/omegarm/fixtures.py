"""Small named instances and a seeded random instance generator."""
from __future__ import annotations

import numpy as np

from .model import Dra, Mdp, TableRewardMachine, make_dra, make_mdp
from .product import ProductMdp

A, B = 0, 1


def petrol_mdp() -> Mdp:
    """Two states; ``a`` loops at s0, ``b`` moves s0 -> s1 (labelled p) and back."""
    rows = {(0, A): {0: 1.0}, (0, B): {1: 1.0}, (1, B): {0: 1.0}}
    return make_mdp(2, rows, {(0, B, 1): 1}, n_actions=2, ap=("p",), action_names=("a", "b"))


def petrol_dra() -> Dra:
    """Accepts words with exactly one ``p``: q0 (none yet), q1 (one), q2 (too many)."""
    def table(q, letter):
        if q == 2:
            return 2
        return q + 1 if letter & 1 else q
    return make_dra(3, ("p",), table, [(frozenset({1}), frozenset())])


def running_example() -> tuple[Mdp, Dra]:
    return petrol_mdp(), petrol_dra()


def petrol_counter_rm(m: Mdp | None = None) -> TableRewardMachine:
    """Counts visits to the petrol station; pays 1 for looping at s0 after one visit."""
    m = m or petrol_mdp()

    def update(u, e):
        return min(u + 1, 2) if m.label(*e) & 1 else u

    def reward(u, e):
        return 1.0 if u == 1 and e == (0, A, 0) else 0.0

    return TableRewardMachine.from_functions([0, 1, 2], 0, m.syntactic_transitions(), update, reward,
                                             {0: "u0", 1: "u1", 2: "u2"})


def zero_rm(m: Mdp) -> TableRewardMachine:
    return TableRewardMachine.from_reward_function(m, lambda s, a, t: 0.0)


def recurrence_mdp(p1: float = 0.9, p2: float = 0.5) -> Mdp:
    """``a`` at s0 commits to s1 (good loop) w.p. p1 or s2 (bad loop); ``b`` at
    s0 stays w.p. p2 or detours through s3, whose return edge is good."""
    rows = {
        (0, A): {1: p1, 2: 1 - p1},
        (0, B): {0: p2, 3: 1 - p2},
        (1, A): {1: 1.0},
        (2, A): {2: 1.0},
        (3, B): {0: 1.0},
    }
    labels = {(1, A, 1): 1, (3, B, 0): 1}
    return make_mdp(4, rows, labels, n_actions=2, ap=("c",), action_names=("a", "b"))


def recurrence_dra() -> Dra:
    """Infinitely many ``c``: q1 after a ``c``, q0 otherwise."""
    return make_dra(2, ("c",), lambda q, letter: 1 if letter & 1 else 0,
                    [(frozenset({1}), frozenset())])


def recurrence_example(p1: float = 0.9, p2: float = 0.5) -> tuple[Mdp, Dra]:
    return recurrence_mdp(p1, p2), recurrence_dra()


def alternating_product() -> ProductMdp:
    """Two-state product where ``b`` loops at s0 and ``a`` alternates s0 <-> s1;
    visiting s1 infinitely often is the goal."""
    rows = {(0, B): {0: 1.0}, (0, A): {1: 1.0}, (1, A): {0: 1.0}}
    m = make_mdp(2, rows, n_actions=2, action_names=("a", "b"))
    d = make_dra(1, (), lambda q, letter: 0, [(frozenset({0}), frozenset())])
    return ProductMdp(m, [(frozenset({1}), frozenset())], [(0, 0), (1, 0)], m, d)


def two_island_mdp() -> tuple[Mdp, dict]:
    """Multichain: from s0, ``a`` enters a loop paying 0.5 per step at once,
    while ``b`` walks two steps to a lottery between a loop paying 1 (w.p. 0.6)
    and a loop paying 0.  Short horizons prefer ``a``, long ones ``b``
    (switch at ``gamma^2 = 5/6``).  Returns the MDP and its reward table."""
    rows = {
        (0, A): {1: 1.0},
        (0, B): {2: 1.0},
        (1, A): {1: 1.0},
        (2, A): {3: 1.0},
        (3, A): {4: 0.6, 5: 0.4},
        (4, A): {4: 1.0},
        (4, B): {5: 1.0},
        (5, A): {5: 1.0},
    }
    m = make_mdp(6, rows, n_actions=2, action_names=("a", "b"))
    rewards = {(1, A, 1): 0.5, (4, A, 4): 1.0}
    return m, rewards


def two_island_rm() -> tuple[Mdp, TableRewardMachine]:
    m, table = two_island_mdp()
    return m, TableRewardMachine.from_reward_function(m, lambda s, a, t: table.get((s, a, t), 0.0))


def random_row(rng: np.random.Generator, n: int, k: int) -> dict[int, float]:
    """Random distribution over ``k`` distinct targets with strictly positive mass."""
    targets = rng.choice(n, size=k, replace=False)
    w = rng.uniform(0.1, 1.0, size=k)
    w /= w.sum()
    return {int(t): float(p) for t, p in zip(targets, w)}


def random_mdp(rng: np.random.Generator, n_states: int, n_actions: int, n_ap: int = 1,
               max_support: int | None = None) -> Mdp:
    """Random MDP; each state enables a random nonempty action subset and each
    transition gets a random label."""
    max_support = max_support or n_states
    rows, labels = {}, {}
    for s in range(n_states):
        k = int(rng.integers(1, n_actions + 1))
        for a in sorted(rng.choice(n_actions, size=k, replace=False).tolist()):
            rows[(s, a)] = random_row(rng, n_states, int(rng.integers(1, max_support + 1)))
            for t in range(n_states):
                lab = int(rng.integers(0, 1 << n_ap))
                if lab:
                    labels[(s, a, t)] = lab
    ap = tuple("pqrs"[:n_ap])
    return make_mdp(n_states, rows, labels, n_actions=n_actions, ap=ap)


def random_dra(rng: np.random.Generator, n_states: int, ap, n_pairs: int | None = None) -> Dra:
    ap = tuple(ap)
    delta = {(q, l): int(rng.integers(n_states)) for q in range(n_states) for l in range(1 << len(ap))}
    n_pairs = n_pairs or int(rng.integers(1, 3))
    pairs = []
    for _ in range(n_pairs):
        acc = frozenset(q for q in range(n_states) if rng.random() < 0.5)
        rej = frozenset(q for q in range(n_states) if q not in acc and rng.random() < 0.3)
        pairs.append((acc, rej))
    return make_dra(n_states, ap, delta, pairs)


def random_instance(seed: int, max_states: int = 4, max_actions: int = 2, max_dra: int = 3,
                    max_support: int | None = None) -> tuple[Mdp, Dra]:
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, max_states + 1))
    k = int(rng.integers(1, max_actions + 1))
    m = random_mdp(rng, n, k, 1, max_support)
    return m, random_dra(rng, int(rng.integers(1, max_dra + 1)), m.ap)


def random_chain(rng: np.random.Generator, n: int, density: float = 0.5) -> np.ndarray:
    """Random stochastic matrix with roughly ``density`` of entries nonzero."""
    P = rng.uniform(size=(n, n)) * (rng.uniform(size=(n, n)) < density)
    for i in range(n):
        if not P[i].any():
            P[i, rng.integers(n)] = 1.0
    return P / P.sum(axis=1, keepdims=True)


def random_ergodic_chain(rng: np.random.Generator, n: int, density: float = 0.4) -> np.ndarray:
    """Irreducible chain: a random cycle through all states plus random extra edges."""
    P = random_chain(rng, n, density)
    perm = rng.permutation(n)
    for i in range(n):
        P[perm[i], perm[(i + 1) % n]] += rng.uniform(0.2, 1.0)
    return P / P.sum(axis=1, keepdims=True)
