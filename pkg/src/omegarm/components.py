"""End components of product MDPs.

Everything here works on any object exposing ``mdp`` (an :class:`Mdp`) and
``pairs`` (Rabin pairs over its states), so it applies equally to DRA
products and to the partial product graphs used by the general translation.
"""
from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Sequence

from .model import TOL, DomainError, Mdp, PolicyTable
from .product import CapExceeded

NAIVE_CAP = 12


@dataclass(frozen=True)
class EndComponent:
    states: frozenset[int]
    act: Mapping[int, tuple[int, ...]] = field(hash=False)
    witness_pair: int | None = field(default=None, compare=False)

    @property
    def is_simple(self) -> bool:
        return all(len(a) == 1 for a in self.act.values())

    @property
    def is_accepting(self) -> bool:
        return self.witness_pair is not None

    @property
    def size(self) -> int:
        return sum(len(a) for a in self.act.values())

    def key(self):
        return tuple(sorted((v, tuple(sorted(a))) for v, a in self.act.items()))

    def to_json(self, names: Sequence[str], actions: Sequence[str]) -> dict:
        return {
            "states": [names[v] for v in sorted(self.states)],
            "act": {names[v]: [actions[a] for a in self.act[v]] for v in sorted(self.states)},
            "simple": self.is_simple,
            "accepting": self.is_accepting,
            "witness_pair": self.witness_pair,
        }


@dataclass
class CoveringCollection:
    components: list[EndComponent]
    cover_index: dict[int, int]

    def covered(self, v: int) -> bool:
        return v in self.cover_index

    def action(self, v: int) -> int:
        """The single action the minimal covering ASEC prescribes at ``v``."""
        return self.components[self.cover_index[v]].act[v][0]


def tarjan(nodes: Iterable[int], succ: Callable[[int], Iterable[int]]) -> list[list[int]]:
    """Strongly connected components (iterative Tarjan), in reverse topological order."""
    index: dict[int, int] = {}
    low: dict[int, int] = {}
    on_stack: set[int] = set()
    stack: list[int] = []
    out: list[list[int]] = []
    counter = itertools.count()
    for root in nodes:
        if root in index:
            continue
        index[root] = low[root] = next(counter)
        stack.append(root)
        on_stack.add(root)
        work = [(root, iter(succ(root)))]
        while work:
            v, it = work[-1]
            pushed = False
            for w in it:
                if w not in index:
                    index[w] = low[w] = next(counter)
                    stack.append(w)
                    on_stack.add(w)
                    work.append((w, iter(succ(w))))
                    pushed = True
                    break
                if w in on_stack:
                    low[v] = min(low[v], index[w])
            if pushed:
                continue
            work.pop()
            if work:
                u = work[-1][0]
                low[u] = min(low[u], low[v])
            if low[v] == index[v]:
                comp = []
                while True:
                    w = stack.pop()
                    on_stack.discard(w)
                    comp.append(w)
                    if w == v:
                        break
                out.append(sorted(comp))
    return out


def _act_graph(m: Mdp, act: Mapping[int, Iterable[int]]):
    def succ(v):
        seen = set()
        for a in act.get(v, ()):
            for w, _ in m.succ(v, a):
                if w in act and w not in seen:
                    seen.add(w)
                    yield w
    return succ


def is_end_component(p, states: Iterable[int], act: Mapping[int, Iterable[int]]) -> bool:
    """Closure plus strong connectivity of ``(states, ->_act)``."""
    m = p.mdp if hasattr(p, "mdp") else p
    T = set(states)
    if not T or set(act) != T:
        return False
    for v in T:
        acts = tuple(act[v])
        if not acts:
            return False
        for a in acts:
            if a not in m.enabled[v]:
                return False
            inside = sum(pr for w, pr in m.succ(v, a) if w in T)
            if abs(inside - 1.0) > TOL:
                return False
    sccs = tarjan(sorted(T), _act_graph(m, {v: act[v] for v in T}))
    return len(sccs) == 1


def mec_decomposition(p, restrict: Iterable[int] | None = None) -> list[EndComponent]:
    """Maximal end components by iterated SCC decomposition and pruning.

    ``restrict`` limits the search to a sub-MDP on those states (actions that
    may leave it are pruned).  Result is ordered by smallest member state.
    """
    m = p.mdp if hasattr(p, "mdp") else p
    alive = set(range(m.n_states)) if restrict is None else set(restrict)
    act = {v: set(m.enabled[v]) for v in alive}
    comp_of: dict[int, int] = {}
    while True:
        act = {v: a for v, a in act.items() if a}
        sccs = tarjan(sorted(act), _act_graph(m, act))
        comp_of = {v: i for i, c in enumerate(sccs) for v in c}
        changed = False
        for v in list(act):
            for a in sorted(act[v]):
                if any(comp_of.get(w) != comp_of[v] for w, _ in m.succ(v, a)):
                    act[v].discard(a)
                    changed = True
        if not changed:
            break
    groups: dict[int, list[int]] = {}
    for v in act:
        groups.setdefault(comp_of[v], []).append(v)
    out = [EndComponent(frozenset(vs), {v: tuple(sorted(act[v])) for v in sorted(vs)})
           for vs in groups.values()]
    return sorted(out, key=lambda c: min(c.states))


def is_accepting(c: EndComponent, pairs) -> tuple[bool, int | None]:
    for i, (acc, rej) in enumerate(pairs):
        if c.states & acc and not c.states & rej:
            return True, i
    return False, None


def with_witness(c: EndComponent, pairs) -> EndComponent:
    _, i = is_accepting(c, pairs)
    return EndComponent(c.states, c.act, i)


def maximal_aecs(p) -> list[EndComponent]:
    """Maximal accepting ECs: per Rabin pair, MECs of the sub-MDP avoiding the
    reject set that meet the accept set.  Ordered by smallest state, then pair."""
    m = p.mdp
    found = {}
    for i, (acc, rej) in enumerate(p.pairs):
        if not acc:
            continue
        keep = [v for v in range(m.n_states) if v not in rej]
        for c in mec_decomposition(p, keep):
            if c.states & acc and c.key() not in found:
                found[c.key()] = (min(c.states), i, EndComponent(c.states, c.act, i))
    return [c for _, _, c in sorted(found.values(), key=lambda x: (x[0], x[1]))]


def _reach_from(m: Mdp, v: int, act: Mapping[int, Sequence[int]]) -> set[int]:
    seen = {v}
    queue = deque([v])
    while queue:
        x = queue.popleft()
        for a in act.get(x, ()):
            for w, _ in m.succ(x, a):
                if w not in seen:
                    seen.add(w)
                    queue.append(w)
    return seen


def extract_asec(p, c: EndComponent) -> EndComponent:
    """Shrink an accepting EC to an accepting *simple* EC inside it.

    Repeatedly picks the smallest state ``v`` with several actions, keeps the
    first action of a BFS-shortest path from ``v`` to an accept state, drops
    the largest other action, and restricts to what ``v`` still reaches.
    """
    ok, pair = is_accepting(c, p.pairs)
    if not ok:
        raise DomainError("end component is not accepting")
    m = p.mdp
    target = p.pairs[pair][0]
    act = {v: list(a) for v, a in c.act.items()}
    while True:
        multi = sorted(v for v, a in act.items() if len(a) > 1)
        if not multi:
            break
        v = multi[0]
        keep = _first_action_towards(m, v, act, target)
        drop = max(a for a in act[v] if a != keep)
        act[v].remove(drop)
        alive = _reach_from(m, v, act)
        act = {x: a for x, a in act.items() if x in alive}
    return EndComponent(frozenset(act), {v: tuple(a) for v, a in sorted(act.items())}, pair)


def _first_action_towards(m: Mdp, v: int, act, target) -> int | None:
    if v in target:
        return None
    first = {}
    queue = deque()
    for a in act[v]:
        for w, _ in m.succ(v, a):
            if w == v or w in first:
                continue
            if w in target:
                return a
            first[w] = a
            queue.append(w)
    while queue:
        x = queue.popleft()
        for a in act[x]:
            for w, _ in m.succ(x, a):
                if w == v or w in first:
                    continue
                if w in target:
                    return first[x]
                first[w] = first[x]
                queue.append(w)
    raise DomainError("no accept state reachable inside the end component")


def all_simple_ecs(p, guard: int = 10 ** 6) -> list[EndComponent]:
    """Every simple EC, found as bottom SCCs of every memoryless choice."""
    m = p.mdp
    live = [v for v in range(m.n_states) if m.enabled[v]]
    count = 1
    for v in live:
        count *= len(m.enabled[v])
    if count > guard:
        raise CapExceeded(f"{count} choice functions exceed guard {guard}")
    found = {}
    for choice in itertools.product(*(m.enabled[v] for v in live)):
        sigma = dict(zip(live, choice))
        for comp in _bottom_sccs(m, sigma, live):
            c = EndComponent(frozenset(comp), {v: (sigma[v],) for v in comp})
            found.setdefault(c.key(), c)
    return sorted(found.values(), key=lambda c: c.key())


def _bottom_sccs(m: Mdp, sigma: Mapping[int, int], nodes: Sequence[int]) -> list[list[int]]:
    def succ(v):
        return [w for w, _ in m.succ(v, sigma[v])] if v in sigma else []

    sccs = tarjan(nodes, succ)
    out = []
    for comp in sccs:
        cs = set(comp)
        if all(v in sigma and all(w in cs for w in succ(v)) for v in comp):
            out.append(comp)
    return out


def covering_asecs(p, mode: str = "efficient") -> CoveringCollection:
    """Ordered accepting simple ECs used by the translation.

    ``efficient``: one ASEC extracted from each maximal accepting EC.
    ``naive``: brute-force enumeration of all ASECs, keeping one per not yet
    covered state in state order (refuses products above ``NAIVE_CAP``).
    """
    if mode == "efficient":
        comps = [extract_asec(p, c) for c in maximal_aecs(p)]
    elif mode == "naive":
        if p.mdp.n_states > NAIVE_CAP:
            raise CapExceeded(f"naive covering: cap exceeded ({p.mdp.n_states} > {NAIVE_CAP} states)")
        asecs = [with_witness(c, p.pairs) for c in all_simple_ecs(p)]
        asecs = [c for c in asecs if c.is_accepting]
        comps, covered = [], set()
        for v in range(p.mdp.n_states):
            if v in covered:
                continue
            for c in asecs:
                if v in c.states:
                    comps.append(c)
                    covered |= c.states
                    break
    else:
        raise ValueError(f"unknown covering mode {mode!r}")
    cover_index = {}
    for i, c in enumerate(comps):
        for v in c.states:
            cover_index.setdefault(v, i)
    return CoveringCollection(comps, cover_index)


def induced_chain_ecs(m: Mdp, policy: PolicyTable | Sequence[int] | Mapping[int, int],
                      start: int | None = None) -> list[EndComponent]:
    """Recurrent classes of the chain induced by a memoryless policy.

    With ``start`` only states reachable from it are considered.
    """
    sigma = _as_choice(policy)
    if start is None:
        nodes = sorted(sigma)
    else:
        nodes = sorted(_reach_from(m, start, {v: (sigma[v],) for v in sigma}))
        missing = [v for v in nodes if v not in sigma]
        if missing:
            raise DomainError(f"policy undefined at reachable states {missing}")
    comps = _bottom_sccs(m, sigma, nodes)
    return sorted((EndComponent(frozenset(c), {v: (sigma[v],) for v in c}) for c in comps),
                  key=lambda c: min(c.states))


def _as_choice(policy) -> dict[int, int]:
    if isinstance(policy, PolicyTable):
        if policy.kind != "memoryless":
            raise DomainError("expected a memoryless policy")
        return dict(policy.choice)
    if isinstance(policy, Mapping):
        return dict(policy)
    return {s: a for s, a in enumerate(policy) if a is not None}
