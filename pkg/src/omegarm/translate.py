"""Translate a DRA objective into a limit-average reward machine.

The machine tracks the DRA state and pays 1 while the MDP/DRA pair sits in
one of an ordered list of accepting simple end components (ASECs) of the
product.  Leaving the prescribed action of the first ASEC covering the current
product state sends the machine to an absorbing, reward-0 sink.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .components import CoveringCollection, covering_asecs
from .evaluate import (ENUM_GUARD, acceptance_on_product, limit_average)
from .model import DomainError, Dra, Mdp, RewardMachine, TableRewardMachine, Transition
from .product import CapExceeded, ProductMdp, build_product, build_rm_product

BOT = "⊥"
CERT_TOL = 1e-7
CERT_STATE_CAP = 14
GENERAL_CAP = 10 ** 6


def support_mdp(m: Mdp, support: Iterable[Transition]) -> Mdp:
    """Skeleton of ``m`` restricted to ``support``, with uniform probabilities.

    Only the graph matters to end-component analysis, so any probabilities
    with this support give the same components.
    """
    rows: dict[tuple[int, int], list[int]] = {}
    for s, a, t in support:
        if a not in m.enabled[s]:
            raise DomainError(f"support edge uses a disabled action: {(s, a, t)}")
        rows.setdefault((s, a), []).append(t)
    trans = {}
    for key, ts in rows.items():
        vec = np.zeros(m.n_states)
        vec[sorted(set(ts))] = 1.0 / len(set(ts))
        trans[key] = vec
    enabled = tuple(tuple(a for a in m.enabled[s] if (s, a) in trans) for s in range(m.n_states))
    return Mdp(m.states, m.actions, enabled, trans, m.labels, m.initial, m.ap)


def _covered_actions(prod: ProductMdp, cover: CoveringCollection) -> dict[tuple[int, int], int]:
    return {prod.backmap[v]: cover.action(v) for v in cover.cover_index}


def translate_known_support(m: Mdp, d: Dra, support: Iterable[Transition] | None = None,
                            mode: str = "efficient") -> TableRewardMachine:
    """Reward machine with states ``Q + {BOT}`` for a known transition support.

    Only the structure of ``m`` (states, enabled actions, labels) and the
    support are used; transition magnitudes are ignored.
    """
    support = m.support() if support is None else frozenset(support)
    if not support:
        raise DomainError("empty support")
    prod = build_product(support_mdp(m, support), d)
    act = _covered_actions(prod, covering_asecs(prod, mode))

    def update(u, e):
        s, a, t = e
        if u == BOT or ((s, u) in act and act[(s, u)] != a):
            return BOT
        return d.step(u, m.label(s, a, t))

    def reward(u, e):
        return 1.0 if u != BOT and (e[0], u) in act else 0.0

    states = list(range(d.n_states)) + [BOT]
    names = {q: d.states[q] for q in range(d.n_states)}
    names[BOT] = BOT
    return TableRewardMachine.from_functions(states, d.initial, m.syntactic_transitions(),
                                             update, reward, names)


class GeneralRewardMachine(RewardMachine):
    """Reward machine that learns the support as it goes.

    States are ``(q, E)`` with ``E`` the set of product edges
    ``((s, q), a, (t, q'))`` observed so far, plus :data:`BOT`.  Built lazily;
    covering collections are memoised per edge set.
    """

    def __init__(self, m: Mdp, d: Dra, mode: str = "efficient", cap: int = GENERAL_CAP,
                 reward_before_update: bool = True, bot_after_update: bool = True):
        self.m = m
        self.d = d
        self.mode = mode
        self.cap = cap
        self.reward_before_update = reward_before_update
        self.bot_after_update = bot_after_update
        self.initial = (d.initial, frozenset())
        self._states = {self.initial: 0}
        self._covers: dict[frozenset, dict[tuple[int, int], int]] = {}
        self._steps: dict = {}

    @property
    def states(self):
        return list(self._states)

    def state_name(self, u) -> str:
        if u == BOT:
            return BOT
        return f"{self.d.states[u[0]]}#{self._states[u]}"

    def cover(self, E: frozenset) -> dict[tuple[int, int], int]:
        """Map (s, q) -> prescribed action for states covered w.r.t. ``E``."""
        got = self._covers.get(E)
        if got is not None:
            return got
        if not E:
            self._covers[E] = {}
            return {}
        prod = edge_graph_product(self.m, self.d, E)
        cov = covering_asecs(prod, self.mode)
        got = {prod.backmap[v]: cov.action(v) for v in cov.cover_index}
        self._covers[E] = got
        return got

    def step(self, u, e):
        key = (u, e)
        hit = self._steps.get(key)
        if hit is not None:
            return hit
        if u == BOT:
            out = (BOT, 0.0)
        else:
            q, E = u
            s, a, t = e
            q2 = self.d.step(q, self.m.label(s, a, t))
            E2 = E | {((s, q), a, (t, q2))}
            before = self.cover(E)
            after = self.cover(E2)
            rew_cover = before if self.reward_before_update else after
            bot_cover = after if self.bot_after_update else before
            rew = 1.0 if (s, q) in rew_cover else 0.0
            if (s, q) in bot_cover and bot_cover[(s, q)] != a:
                nxt = BOT
            else:
                nxt = (q2, E2)
                if nxt not in self._states:
                    if len(self._states) >= self.cap:
                        raise CapExceeded(f"general reward machine exceeds {self.cap} states")
                    self._states[nxt] = len(self._states)
            out = (nxt, rew)
        self._steps[key] = out
        return out


def edge_graph_product(m: Mdp, d: Dra, E: Iterable) -> ProductMdp:
    """Partial product graph spanned by observed product edges ``E``.

    Actions without an observed edge are not enabled; probabilities are
    uniform over observed successors.
    """
    nq = d.n_states
    verts = sorted({v for e in E for v in (e[0], e[2])}, key=lambda x: x[0] * nq + x[1])
    index = {v: i for i, v in enumerate(verts)}
    rows: dict[tuple[int, int], set[int]] = {}
    for src, a, dst in E:
        rows.setdefault((index[src], a), set()).add(index[dst])
    n = len(verts)
    trans = {}
    for key, ts in rows.items():
        vec = np.zeros(n)
        vec[sorted(ts)] = 1.0 / len(ts)
        trans[key] = vec
    enabled = tuple(tuple(sorted(a for (v, a) in rows if v == i)) for i in range(n))
    names = tuple(f"{m.states[s]}@{d.states[q]}" for s, q in verts)
    pm = Mdp(names, m.actions, enabled, trans, {}, 0, m.ap)
    pairs = [(frozenset(i for i, (_, q) in enumerate(verts) if q in acc),
              frozenset(i for i, (_, q) in enumerate(verts) if q in rej)) for acc, rej in d.pairs]
    return ProductMdp(pm, pairs, verts, m, d)


def translate_general(m: Mdp, d: Dra, mode: str = "efficient", cap: int = GENERAL_CAP,
                      **order) -> GeneralRewardMachine:
    """Support-agnostic translation; uses only states, actions and labels of ``m``."""
    if tuple(m.ap) != tuple(d.ap):
        raise DomainError("alphabet mismatch")
    return GeneralRewardMachine(m, d, mode, cap, **order)


def materialize(r: RewardMachine, m: Mdp, syntactic: bool = False,
                cap: int = GENERAL_CAP) -> TableRewardMachine:
    """Tabulate the part of ``r`` reachable along runs of ``m``.

    With ``syntactic`` every transition with an enabled action is followed;
    otherwise only the support of ``m``.
    """
    rp = build_rm_product(m, r, syntactic=syntactic, cap=cap)
    states = list(dict.fromkeys(u for _, u in rp.backmap))
    domain = list(m.syntactic_transitions()) if syntactic else sorted(m.support())
    rules = {}
    for s, u in rp.backmap:
        for e in domain:
            if e[0] == s:
                rules[(u, e)] = r.step(u, e)
    names = {u: r.state_name(u) for u in states}
    out = TableRewardMachine(states, r.initial, rules, names)
    out.domain = "syntactic" if syntactic else "support"
    return out


@dataclass
class CertificationReport:
    max_gain: float
    max_acceptance: float
    gain_maximizers: int
    policies: int
    lower_bound_violations: int
    maximizers_not_accepting_optimal: int
    product_states: int
    seconds: float
    checks: dict[str, bool] = field(default_factory=dict)

    @property
    def certified(self) -> bool:
        return all(self.checks.values())

    def to_json(self) -> dict:
        return {
            "certified": self.certified,
            "checks": self.checks,
            "max_gain": self.max_gain,
            "max_acceptance": self.max_acceptance,
            "policies": self.policies,
            "gain_maximizers": self.gain_maximizers,
            "lower_bound_violations": self.lower_bound_violations,
            "maximizers_not_acceptance_optimal": self.maximizers_not_accepting_optimal,
            "product_states": self.product_states,
            "seconds": self.seconds,
        }


def reachable_policy_classes(m: Mdp, guard: int = ENUM_GUARD):
    """Enumerate memoryless policies up to agreement on the states they reach
    from the initial state.  Yields ``{state: action}`` dicts covering exactly
    the reachable states; two policies in the same class induce the same
    chain from the initial state."""
    count = 0
    # each frame: (assigned so far, states reached but unassigned)
    stack = [({}, frozenset([m.initial]))]
    while stack:
        assigned, pending = stack.pop()
        if not pending:
            count += 1
            if count > guard:
                raise CapExceeded(f"more than {guard} policy classes")
            yield assigned
            continue
        v = min(pending)
        for a in reversed(m.enabled[v]):
            nxt = dict(assigned)
            nxt[v] = a
            new = {t for t, _ in m.succ(v, a) if t not in nxt}
            stack.append((nxt, (pending - {v}) | new))


def joint_product(m: Mdp, d: Dra, r: RewardMachine, cap: int | None = None):
    """``(m x| r) (x) d`` with reward rows lifted from ``m x| r``."""
    rp = build_rm_product(m, r, cap=cap)
    joint = build_product(rp.mdp, d)
    reward = {}
    for (v, a) in joint.mdp.trans:
        base = rp.reward[(joint.backmap[v][0], a)]
        reward[(v, a)] = np.array([base[joint.backmap[w][0]] for w in range(joint.mdp.n_states)])
    return rp, joint, reward


def certify_translation(m: Mdp, d: Dra, r: RewardMachine, state_cap: int | None = CERT_STATE_CAP,
                        guard: int = ENUM_GUARD, tol: float = CERT_TOL) -> CertificationReport:
    """Check optimality preservation of ``r`` on the concrete MDP ``m``.

    Enumerates the deterministic memoryless policies of ``(m x| r) (x) d``
    (up to agreement on reachable states); each gets its exact gain under the
    machine's rewards and its exact acceptance probability.  Tracking the DRA
    state lets the enumeration reach acceptance-optimal behaviour even when
    the machine itself forgets too much.  Certified iff max gain equals max
    acceptance, all gain maximisers are acceptance maximisers, and gain <=
    acceptance for every policy.
    """
    t0 = time.perf_counter()
    big = None if state_cap is None else max(state_cap, 1) * 1000
    rp, joint, reward = joint_product(m, d, r, cap=big)
    n = joint.mdp.n_states
    if state_cap is not None and n > state_cap:
        raise CapExceeded(f"certification cap exceeded: {n} > {state_cap} product states")
    rows = []
    for sigma in reachable_policy_classes(joint.mdp, guard):
        gain = limit_average(joint.mdp, reward, sigma).gain
        acc = acceptance_on_product(joint, sigma)
        rows.append((gain, acc))
    gains = np.array([g for g, _ in rows])
    accs = np.array([a for _, a in rows])
    max_gain, max_acc = float(gains.max()), float(accs.max())
    maximizers = gains >= max_gain - tol
    bad_max = int(np.sum(maximizers & (accs < max_acc - tol)))
    violations = int(np.sum(gains > accs + tol))
    checks = {
        "max_gain_equals_max_acceptance": abs(max_gain - max_acc) <= tol,
        "gain_maximizers_maximize_acceptance": bad_max == 0,
        "gain_below_acceptance": violations == 0,
    }
    return CertificationReport(max_gain, max_acc, int(maximizers.sum()), len(rows), violations,
                               bad_max, n, time.perf_counter() - t0, checks)
