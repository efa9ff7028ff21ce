"""Product constructions: MDP x DRA (for analysis) and MDP x RM (for rewards)."""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Callable, Hashable

import numpy as np

from .model import DomainError, Dra, Mdp, PolicyTable, RewardMachine


@dataclass(eq=False)
class ProductMdp:
    """``M (x) A``: states are pairs ``(s, q)`` listed in ``backmap``."""

    mdp: Mdp
    pairs: list[tuple[frozenset[int], frozenset[int]]]
    backmap: list[tuple[int, int]]
    base: Mdp
    dra: Dra

    def index(self, s: int, q: int) -> int | None:
        return self._index.get((s, q))

    def __post_init__(self) -> None:
        self._index = {sq: v for v, sq in enumerate(self.backmap)}


@dataclass(eq=False)
class RmProductMdp:
    """``M x| R``: states ``(s, u)``; ``reward[(v, a)]`` is a row aligned with
    ``mdp.trans[(v, a)]``."""

    mdp: Mdp
    reward: dict[tuple[int, int], np.ndarray]
    backmap: list[tuple[int, Hashable]]
    base: Mdp
    rm: RewardMachine

    def __post_init__(self) -> None:
        self._index = {su: v for v, su in enumerate(self.backmap)}

    def index(self, s: int, u) -> int | None:
        return self._index.get((s, u))


def _explore(m: Mdp, start, step: Callable, syntactic: bool, cap: int | None):
    """BFS over composite states ``(s, x)``; ``step(x, s, a, t)`` gives the
    next memory component.  Returns (order, edges) with edges
    ``{(key, a): [(t_key, p, extra)]}``."""
    seen = {start}
    order = [start]
    queue = deque([start])
    edges = {}
    while queue:
        key = queue.popleft()
        s, x = key
        for a in m.enabled[s]:
            row = m.trans[(s, a)]
            targets = range(m.n_states) if syntactic else [t for t, _ in m.succ(s, a)]
            out = []
            for t in targets:
                x2, extra = step(x, s, a, t)
                k2 = (t, x2)
                out.append((k2, float(row[t]), extra))
                if k2 not in seen:
                    seen.add(k2)
                    order.append(k2)
                    queue.append(k2)
                    if cap is not None and len(seen) > cap:
                        raise CapExceeded(f"product exceeds {cap} states")
            edges[(key, a)] = out
    return order, edges


class CapExceeded(RuntimeError):
    """A size guard was hit."""


def build_product(m: Mdp, d: Dra, exhaustive: bool = False, syntactic: bool = False) -> ProductMdp:
    """Synchronise ``m`` with ``d`` on transition labels.

    Only states reachable from ``(s0, q0)`` are built unless ``exhaustive``.
    States are numbered in canonical ``s * |Q| + q`` order either way.
    """
    if tuple(m.ap) != tuple(d.ap):
        raise DomainError(f"alphabet mismatch: {m.ap} vs {d.ap}")
    nq = d.n_states

    def step(q, s, a, t):
        return d.step(q, m.label(s, a, t)), None

    if exhaustive:
        keys = [(s, q) for s in range(m.n_states) for q in range(nq)]
        edges = {}
        for s, q in keys:
            for a in m.enabled[s]:
                targets = range(m.n_states) if syntactic else [t for t, _ in m.succ(s, a)]
                edges[((s, q), a)] = [((t, step(q, s, a, t)[0]), float(m.trans[(s, a)][t]), None)
                                      for t in targets]
    else:
        keys, edges = _explore(m, (m.initial, d.initial), step, syntactic, None)
        keys = sorted(keys, key=lambda k: k[0] * nq + k[1])
    index = {k: v for v, k in enumerate(keys)}
    n = len(keys)
    trans, labels = {}, {}
    enabled = []
    for v, (s, q) in enumerate(keys):
        enabled.append(tuple(m.enabled[s]))
        for a in m.enabled[s]:
            row = np.zeros(n)
            for k2, p, _ in edges[((s, q), a)]:
                w = index[k2]
                row[w] += p
                lab = m.label(s, a, k2[0])
                if lab:
                    labels[(v, a, w)] = lab
            trans[(v, a)] = row
    names = tuple(f"{m.states[s]}@{d.states[q]}" for s, q in keys)
    pairs = []
    for acc, rej in d.pairs:
        pairs.append((frozenset(v for v, (_, q) in enumerate(keys) if q in acc),
                      frozenset(v for v, (_, q) in enumerate(keys) if q in rej)))
    pm = Mdp(names, m.actions, tuple(enabled), trans, labels,
             index[(m.initial, d.initial)], m.ap)
    return ProductMdp(pm, pairs, list(keys), m, d)


def build_rm_product(m: Mdp, r: RewardMachine, syntactic: bool = False,
                     cap: int | None = None) -> RmProductMdp:
    """Track the reward machine state alongside the MDP.

    With ``syntactic`` every ``(s, a, t)`` with ``a`` enabled is explored,
    including zero-probability ones, so the state space does not depend on
    the transition support.
    """
    def step(u, s, a, t):
        return r.step(u, (s, a, t))

    keys, edges = _explore(m, (m.initial, r.initial), step, syntactic, cap)
    index = {k: v for v, k in enumerate(keys)}
    n = len(keys)
    trans, labels, reward = {}, {}, {}
    enabled = []
    for v, (s, u) in enumerate(keys):
        enabled.append(tuple(m.enabled[s]))
        for a in m.enabled[s]:
            row = np.zeros(n)
            rrow = np.zeros(n)
            for k2, p, rew in edges[((s, u), a)]:
                w = index[k2]
                row[w] += p
                rrow[w] = rew
                lab = m.label(s, a, k2[0])
                if lab:
                    labels[(v, a, w)] = lab
            trans[(v, a)] = row
            reward[(v, a)] = rrow
    names = tuple(f"{m.states[s]}@{r.state_name(u)}" for s, u in keys)
    pm = Mdp(names, m.actions, tuple(enabled), trans, labels, 0, m.ap)
    return RmProductMdp(pm, reward, list(keys), m, r)


def reward_rows(m: Mdp, fn: Callable[[int, int, int], float]) -> dict[tuple[int, int], np.ndarray]:
    """Tabulate a transition reward function as rows aligned with ``m.trans``."""
    out = {}
    for s, a in m.pairs():
        out[(s, a)] = np.array([fn(s, a, t) for t in range(m.n_states)], dtype=float)
    return out


def lift_policy(p: PolicyTable, product: ProductMdp | RmProductMdp) -> PolicyTable:
    """Turn a memoryless product policy into a finite-memory base policy whose
    memory is the automaton (DRA or RM) component."""
    if p.kind != "memoryless":
        raise DomainError("only memoryless product policies can be lifted")
    missing = [product.mdp.states[v] for v in range(product.mdp.n_states) if v not in p.choice]
    if missing:
        raise DomainError(f"policy not total on reachable product states: {missing}")
    choice = {product.backmap[v]: a for v, a in p.choice.items()}
    base = product.base
    if isinstance(product, ProductMdp):
        d = product.dra

        def memory(q, e):
            return d.step(q, base.label(*e))
        init = d.initial
    else:
        rm = product.rm

        def memory(u, e):
            return rm.step(u, e)[0]
        init = rm.initial
    return PolicyTable("finite-memory", choice, memory, init)


def product_policy_from_base(p: PolicyTable, product: ProductMdp | RmProductMdp) -> PolicyTable:
    """Inverse of :func:`lift_policy` on the materialised product states."""
    choice = {}
    for v, (s, mem) in enumerate(product.backmap):
        if p.kind == "memoryless":
            choice[v] = p.choice[s]
        elif (s, mem) in p.choice:
            choice[v] = p.choice[(s, mem)]
    return PolicyTable("memoryless", choice)
