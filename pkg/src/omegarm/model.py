"""Core domain types: MDPs, Rabin automata, reward machines and policies.

Label sets are bitmasks over an ordered list of atomic propositions; bit ``i``
stands for ``ap[i]``.  States and actions are referred to by index everywhere
except in file I/O.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Hashable, Iterable, Iterator, Mapping, Sequence

import numpy as np

TOL = 1e-9
MAX_AP = 16

Transition = tuple[int, int, int]


class DomainError(ValueError):
    """Raised when an operation is applied outside its declared domain."""


@dataclass(frozen=True)
class Violation:
    kind: str
    where: str = ""

    def __str__(self) -> str:
        return f"{self.kind}: {self.where}" if self.where else self.kind


def letter_mask(props: Iterable[str], ap: Sequence[str]) -> int:
    index = {p: i for i, p in enumerate(ap)}
    mask = 0
    for p in props:
        if p not in index:
            raise DomainError(f"unknown proposition {p!r}")
        mask |= 1 << index[p]
    return mask


def mask_props(mask: int, ap: Sequence[str]) -> list[str]:
    return [p for i, p in enumerate(ap) if mask >> i & 1]


@dataclass(eq=False)
class Mdp:
    """Finite MDP with per-state enabled actions and transition labels.

    ``trans[(s, a)]`` is a dense probability vector over states; it is only
    defined for ``a in enabled[s]``.  ``labels`` maps ``(s, a, t)`` to a
    bitmask; transitions without an entry carry the empty label.
    """

    states: tuple[str, ...]
    actions: tuple[str, ...]
    enabled: tuple[tuple[int, ...], ...]
    trans: Mapping[tuple[int, int], np.ndarray]
    labels: Mapping[Transition, int] = field(default_factory=dict)
    initial: int = 0
    ap: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        self.states = tuple(self.states)
        self.actions = tuple(self.actions)
        self.enabled = tuple(tuple(sorted(e)) for e in self.enabled)
        self.ap = tuple(self.ap)
        self._succ: dict[tuple[int, int], tuple[tuple[int, float], ...]] = {}

    @property
    def n_states(self) -> int:
        return len(self.states)

    @property
    def n_actions(self) -> int:
        return len(self.actions)

    def succ(self, s: int, a: int) -> tuple[tuple[int, float], ...]:
        """Successors with positive probability, in state-index order."""
        key = (s, a)
        out = self._succ.get(key)
        if out is None:
            row = self.trans[key]
            out = tuple((int(t), float(row[t])) for t in np.flatnonzero(row > 0))
            self._succ[key] = out
        return out

    def label(self, s: int, a: int, t: int) -> int:
        return self.labels.get((s, a, t), 0)

    def pairs(self) -> Iterator[tuple[int, int]]:
        for s, acts in enumerate(self.enabled):
            for a in acts:
                yield s, a

    def support(self) -> frozenset[Transition]:
        return frozenset((s, a, t) for s, a in self.pairs() for t, _ in self.succ(s, a))

    def syntactic_transitions(self) -> Iterator[Transition]:
        for s, a in self.pairs():
            for t in range(self.n_states):
                yield s, a, t

    def p_min(self) -> float:
        return min(p for s, a in self.pairs() for _, p in self.succ(s, a))

    def with_trans(self, trans: Mapping[tuple[int, int], np.ndarray]) -> "Mdp":
        """Same structure and labels, different transition function."""
        return Mdp(self.states, self.actions, self.enabled, dict(trans), self.labels,
                   self.initial, self.ap)


def make_mdp(n_states: int, rows: Mapping[tuple[int, int], Mapping[int, float]],
             labels: Mapping[Transition, int] | None = None, n_actions: int | None = None,
             initial: int = 0, ap: Sequence[str] = (), state_names=None, action_names=None) -> Mdp:
    """Build an :class:`Mdp` from sparse rows ``{(s, a): {t: p}}``."""
    if n_actions is None:
        n_actions = 1 + max(a for _, a in rows)
    enabled: list[list[int]] = [[] for _ in range(n_states)]
    trans = {}
    for (s, a), row in rows.items():
        vec = np.zeros(n_states)
        for t, p in row.items():
            vec[t] += p
        trans[(s, a)] = vec
        enabled[s].append(a)
    states = tuple(state_names) if state_names else tuple(f"s{i}" for i in range(n_states))
    actions = tuple(action_names) if action_names else tuple(f"a{i}" for i in range(n_actions))
    return Mdp(states, actions, tuple(tuple(e) for e in enabled), trans,
               dict(labels or {}), initial, tuple(ap))


def validate_mdp(m: Mdp) -> list[Violation]:
    """Every violated invariant of ``m``; empty iff valid."""
    out = []
    if not 0 <= m.initial < m.n_states:
        out.append(Violation("initial out of range", str(m.initial)))
    if len(m.enabled) != m.n_states:
        out.append(Violation("enabled map size", f"{len(m.enabled)} != {m.n_states}"))
    for s, acts in enumerate(m.enabled):
        if not acts:
            out.append(Violation("no enabled action", m.states[s]))
        for a in acts:
            row = m.trans.get((s, a))
            where = f"({m.states[s]},{m.actions[a] if a < m.n_actions else a})"
            if row is None:
                out.append(Violation("missing row", where))
                continue
            row = np.asarray(row, dtype=float)
            if row.shape != (m.n_states,):
                out.append(Violation("row shape", where))
                continue
            if np.any(row < 0) or np.any(row > 1):
                out.append(Violation("probability out of range", where))
            if abs(row.sum() - 1.0) > TOL:
                out.append(Violation("row-sum", f"{where} sums to {row.sum():.12g}"))
    for (s, a), _ in m.trans.items():
        if s >= len(m.enabled) or a not in m.enabled[s]:
            out.append(Violation("row for disabled action", f"({s},{a})"))
    if len(m.ap) > MAX_AP:
        out.append(Violation("alphabet too large", str(len(m.ap))))
    limit = 1 << len(m.ap)
    for (s, a, t), lab in m.labels.items():
        if not 0 <= lab < limit:
            out.append(Violation("label outside alphabet", f"({s},{a},{t})"))
    return out


@dataclass(eq=False)
class Dra:
    """Deterministic Rabin automaton over letters ``0 .. 2**len(ap) - 1``.

    ``pairs`` holds ``(accept, reject)`` state sets; a run is accepted when
    some pair has its accept set visited infinitely often and its reject set
    only finitely often.
    """

    states: tuple[str, ...]
    ap: tuple[str, ...]
    delta: Mapping[tuple[int, int], int]
    pairs: Sequence[tuple[frozenset[int], frozenset[int]]]
    initial: int = 0

    def __post_init__(self) -> None:
        self.states = tuple(self.states)
        self.ap = tuple(self.ap)
        self.pairs = [(frozenset(a), frozenset(r)) for a, r in self.pairs]

    @property
    def n_states(self) -> int:
        return len(self.states)

    @property
    def n_letters(self) -> int:
        return 1 << len(self.ap)

    def step(self, q: int, letter: int) -> int:
        try:
            return self.delta[(q, letter)]
        except KeyError:
            raise DomainError(f"delta undefined at ({q}, {letter})") from None

    def inf_accepting(self, inf: Iterable[int]) -> int | None:
        """Smallest pair index accepting the infinity set ``inf``, else None."""
        inf = set(inf)
        for i, (acc, rej) in enumerate(self.pairs):
            if inf & acc and not inf & rej:
                return i
        return None


def make_dra(n_states: int, ap: Sequence[str], table, pairs, initial: int = 0,
             state_names=None) -> Dra:
    """``table`` is a callable ``(q, letter) -> q'`` or a mapping; it is tabulated."""
    ap = tuple(ap)
    if callable(table):
        delta = {(q, l): table(q, l) for q in range(n_states) for l in range(1 << len(ap))}
    else:
        delta = dict(table)
    names = tuple(state_names) if state_names else tuple(f"q{i}" for i in range(n_states))
    return Dra(names, ap, delta, list(pairs), initial)


def validate_dra(d: Dra, ap: Sequence[str] | None = None) -> list[Violation]:
    out = []
    if ap is not None and tuple(ap) != d.ap:
        out.append(Violation("alphabet mismatch", f"{list(ap)} != {list(d.ap)}"))
    if len(d.ap) > MAX_AP:
        out.append(Violation("alphabet too large", str(len(d.ap))))
        return out
    if not 0 <= d.initial < d.n_states:
        out.append(Violation("initial out of range", str(d.initial)))
    for q in range(d.n_states):
        for letter in range(d.n_letters):
            t = d.delta.get((q, letter))
            if t is None:
                out.append(Violation("partial delta", f"({d.states[q]},{mask_props(letter, d.ap)})"))
            elif not 0 <= t < d.n_states:
                out.append(Violation("delta target out of range", f"({d.states[q]},{letter})"))
    for i, (acc, rej) in enumerate(d.pairs):
        bad = sorted(x for x in acc | rej if not 0 <= x < d.n_states)
        if bad:
            out.append(Violation("pair out of range", f"pair {i}: {bad}"))
    return out


@dataclass(frozen=True)
class UltimatelyPeriodicWord:
    """The infinite word ``prefix . cycle^omega`` of letter bitmasks."""

    prefix: tuple[int, ...]
    cycle: tuple[int, ...]

    def __post_init__(self) -> None:
        if not self.cycle:
            raise DomainError("cycle must be nonempty")


def dra_run_inf(d: Dra, w: UltimatelyPeriodicWord) -> set[int]:
    """States visited infinitely often by the run of ``d`` on ``w``."""
    q = d.initial
    for letter in w.prefix:
        q = d.step(q, letter)
    seen: dict[tuple[int, int], int] = {}
    trace = []
    pos = 0
    while (q, pos) not in seen:
        seen[(q, pos)] = len(trace)
        trace.append(q)
        q = d.step(q, w.cycle[pos])
        pos = (pos + 1) % len(w.cycle)
    return set(trace[seen[(q, pos)]:])


def dra_accepts(d: Dra, w: UltimatelyPeriodicWord) -> bool:
    return d.inf_accepting(dra_run_inf(d, w)) is not None


class RewardMachine:
    """Finite-state transducer reading base transitions ``(s, a, t)``.

    Subclasses implement :meth:`step`; ``states`` lists the machine states
    known so far (for lazily built machines this grows as :meth:`step` is
    called).
    """

    initial: Hashable

    def step(self, u: Hashable, e: Transition) -> tuple[Hashable, float]:
        raise NotImplementedError

    @property
    def states(self) -> list[Hashable]:
        raise NotImplementedError

    def state_name(self, u: Hashable) -> str:
        return str(u)


class TableRewardMachine(RewardMachine):
    """Reward machine given by an explicit rule table ``(u, e) -> (u', r)``."""

    def __init__(self, states: Sequence[Hashable], initial: Hashable,
                 rules: Mapping[tuple[Hashable, Transition], tuple[Hashable, float]],
                 names: Mapping[Hashable, str] | None = None):
        self._states = list(states)
        self.initial = initial
        self.rules = dict(rules)
        self.names = dict(names or {})

    @property
    def states(self) -> list[Hashable]:
        return self._states

    def step(self, u, e):
        try:
            return self.rules[(u, tuple(e))]
        except KeyError:
            raise DomainError(f"transition not in domain: {u!r}, {e!r}") from None

    def state_name(self, u) -> str:
        return self.names.get(u, str(u))

    @classmethod
    def from_functions(cls, states, initial, domain: Iterable[Transition], update, reward, names=None):
        domain = list(domain)
        rules = {(u, e): (update(u, e), float(reward(u, e))) for u in states for e in domain}
        return cls(states, initial, rules, names)

    @classmethod
    def from_reward_function(cls, m: Mdp, reward) -> "TableRewardMachine":
        """Single-state machine emitting ``reward(s, a, t)`` on every transition."""
        return cls.from_functions([0], 0, m.syntactic_transitions(), lambda u, e: 0,
                                  lambda u, e: reward(*e), names={0: "u0"})


def validate_rm(r: RewardMachine, m: Mdp) -> list[Violation]:
    """Totality over the syntactic transitions of ``m`` and rewards in [0, 1]."""
    out = []
    frontier = [r.initial]
    seen = {r.initial}
    while frontier:
        u = frontier.pop()
        for e in m.syntactic_transitions():
            try:
                u2, rew = r.step(u, e)
            except DomainError:
                out.append(Violation("rm domain gap", f"({r.state_name(u)},{e})"))
                continue
            if not 0.0 <= rew <= 1.0:
                out.append(Violation("reward out of range", f"({r.state_name(u)},{e})"))
            if u2 not in seen:
                seen.add(u2)
                frontier.append(u2)
    return out


def rm_step(r: RewardMachine, u, e: Transition):
    return r.step(u, e)


@dataclass(eq=False)
class PolicyTable:
    """Deterministic policy.

    ``kind == "memoryless"``: ``choice[s]`` is the action at state ``s``.
    ``kind == "finite-memory"``: ``choice[(s, m)]`` is the action at base state
    ``s`` with memory ``m``; ``memory`` is a callable ``(m, (s, a, t)) -> m'``
    and ``memory_initial`` its start value.
    """

    kind: str
    choice: dict
    memory: object = None
    memory_initial: Hashable = None

    def __call__(self, s, mem=None) -> int:
        if self.kind == "memoryless":
            return self.choice[s]
        return self.choice[(s, mem)]

    def as_array(self, n_states: int) -> list[int | None]:
        return [self.choice.get(s) for s in range(n_states)]


def memoryless(actions: Sequence[int] | Mapping[int, int]) -> PolicyTable:
    if isinstance(actions, Mapping):
        return PolicyTable("memoryless", dict(actions))
    return PolicyTable("memoryless", {s: a for s, a in enumerate(actions) if a is not None})


def check_policy(m: Mdp, p: PolicyTable) -> list[Violation]:
    out = []
    for key, a in p.choice.items():
        s = key if p.kind == "memoryless" else key[0]
        if a not in m.enabled[s]:
            out.append(Violation("action not enabled", f"{key!r} -> {a}"))
    return out
