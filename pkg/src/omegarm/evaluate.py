"""Exact evaluation of fixed policies and the brute-force optimal-policy oracle.

Rewards are given as rows ``reward[(s, a)]`` aligned with ``m.trans[(s, a)]``
(see :func:`omegarm.product.reward_rows`).  All linear systems are dense and
solved directly.
"""
from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .components import EndComponent, _as_choice, induced_chain_ecs
from .model import DomainError, Dra, Mdp, PolicyTable
from .product import CapExceeded, ProductMdp, build_product

Rewards = Mapping[tuple[int, int], np.ndarray]

ARGMAX_TOL = 1e-9
ENUM_GUARD = 10 ** 6


class SingularSystem(ArithmeticError):
    pass


@dataclass
class GainReport:
    """Per recurrent class: reach probability ``x``, gain ``y`` and bias ``w``."""

    classes: list[EndComponent]
    x: list[float]
    y: list[float]
    bias: list[dict[int, float]]

    @property
    def gain(self) -> float:
        return float(sum(xi * yi for xi, yi in zip(self.x, self.y)))

    def to_json(self, names: Sequence[str]) -> dict:
        return {
            "gain": self.gain,
            "classes": [
                {"states": [names[v] for v in sorted(c.states)], "reach": xi, "gain": yi,
                 "bias": {names[v]: b for v, b in w.items()}}
                for c, xi, yi, w in zip(self.classes, self.x, self.y, self.bias)
            ],
        }


@dataclass
class OracleResult:
    J_star: float
    optimal_set: list[tuple[int, ...]]
    enumerated_count: int
    states: list[int] = field(default_factory=list)

    def policies(self) -> list[PolicyTable]:
        return [PolicyTable("memoryless", dict(zip(self.states, p))) for p in self.optimal_set]


def _solve(A: np.ndarray, b: np.ndarray) -> np.ndarray:
    try:
        x = np.linalg.solve(A, b)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(str(exc)) from None
    if not np.all(np.isfinite(x)):
        raise SingularSystem("non-finite solution")
    return x


def expected_reward(m: Mdp, reward: Rewards, s: int, a: int) -> float:
    return float(m.trans[(s, a)] @ reward[(s, a)])


def reach_probability(m: Mdp, policy, target) -> np.ndarray:
    """Probability of eventually hitting ``target`` from every state under a
    memoryless policy.  States where the policy is undefined get 0 unless in
    ``target``."""
    sigma = _as_choice(policy)
    target = set(target)
    n = m.n_states
    pred: dict[int, list[int]] = {}
    for s, a in sigma.items():
        for t, _ in m.succ(s, a):
            pred.setdefault(t, []).append(s)
    pre = set(target)
    queue = deque(target)
    while queue:
        t = queue.popleft()
        for s in pred.get(t, ()):
            if s not in pre:
                pre.add(s)
                queue.append(s)
    x = np.zeros(n)
    for t in target:
        x[t] = 1.0
    unknown = sorted(pre - target)
    if not unknown:
        return x
    pos = {s: i for i, s in enumerate(unknown)}
    k = len(unknown)
    A = np.eye(k)
    b = np.zeros(k)
    for s in unknown:
        i = pos[s]
        for t, p in m.succ(s, sigma[s]):
            if t in target:
                b[i] += p
            elif t in pos:
                A[i, pos[t]] -= p
    x[unknown] = _solve(A, b)
    return x


def chain_gain(P: np.ndarray, r: np.ndarray) -> tuple[float, np.ndarray]:
    """Gain and bias of an irreducible chain with expected one-step rewards
    ``r``: ``w[0] = 0`` and ``w + y = r + P w``."""
    k = len(r)
    A = np.zeros((k + 1, k + 1))
    b = np.zeros(k + 1)
    A[0, 0] = 1.0
    A[1:, :k] = np.eye(k) - P
    A[1:, k] = 1.0
    b[1:] = r
    sol = _solve(A, b)
    return float(sol[k]), sol[:k]


def gain_of_ec(m: Mdp, reward: Rewards, c: EndComponent) -> tuple[float, dict[int, float]]:
    if not c.is_simple:
        raise DomainError("gain_of_ec needs a simple end component")
    order = sorted(c.states)
    pos = {v: i for i, v in enumerate(order)}
    k = len(order)
    P = np.zeros((k, k))
    r = np.zeros(k)
    for v in order:
        a = c.act[v][0]
        row = m.trans[(v, a)]
        for w, p in m.succ(v, a):
            if w not in pos:
                raise DomainError("end component is not closed")
            P[pos[v], pos[w]] = p
        r[pos[v]] = float(row @ reward[(v, a)])
    y, w = chain_gain(P, r)
    return y, {v: float(w[pos[v]]) for v in order}


def limit_average(m: Mdp, reward: Rewards, policy, start: int | None = None) -> GainReport:
    """Limit-average reward from ``start`` (default: initial state) as
    ``sum_i x_i * y_i`` over the recurrent classes of the induced chain."""
    start = m.initial if start is None else start
    classes = induced_chain_ecs(m, policy, start=start)
    xs, ys, ws = [], [], []
    for c in classes:
        xs.append(float(reach_probability(m, policy, c.states)[start]))
        y, w = gain_of_ec(m, reward, c)
        ys.append(y)
        ws.append(w)
    return GainReport(classes, xs, ys, ws)


def acceptance_on_product(prod: ProductMdp, policy) -> float:
    """Probability that the chain induced on ``prod`` gets trapped in an
    accepting recurrent class."""
    sigma = _as_choice(policy)
    start = prod.mdp.initial
    total = 0.0
    for c in induced_chain_ecs(prod.mdp, sigma, start=start):
        if any(c.states & acc and not c.states & rej for acc, rej in prod.pairs):
            total += float(reach_probability(prod.mdp, sigma, c.states)[start])
    return total


def acceptance_probability(m: Mdp, d: Dra, policy: PolicyTable, prod: ProductMdp | None = None) -> float:
    """Acceptance probability of ``d`` under ``policy`` on ``m``.

    ``policy`` is memoryless on ``m`` (the DRA is tracked alongside) or
    finite-memory with the DRA state as memory.
    """
    prod = prod or build_product(m, d)
    choice = {}
    for v, (s, q) in enumerate(prod.backmap):
        if policy.kind == "memoryless":
            if s in policy.choice:
                choice[v] = policy.choice[s]
        elif (s, q) in policy.choice:
            choice[v] = policy.choice[(s, q)]
    return acceptance_on_product(prod, choice)


def _policy_matrix(m: Mdp, reward: Rewards, sigma: Mapping[int, int]):
    n = m.n_states
    P = np.zeros((n, n))
    r = np.zeros(n)
    for s in range(n):
        a = sigma[s]
        P[s] = m.trans[(s, a)]
        r[s] = float(P[s] @ reward[(s, a)])
    return P, r


def discounted_value(m: Mdp, reward: Rewards, policy, gamma: float) -> np.ndarray:
    """Solve ``(I - gamma P) v = r`` for a memoryless policy total on ``m``."""
    if not 0.0 < gamma < 1.0:
        raise DomainError("discount must lie in (0, 1)")
    sigma = _as_choice(policy)
    P, r = _policy_matrix(m, reward, sigma)
    return _solve(np.eye(m.n_states) - gamma * P, r)


def _tensors(m: Mdp, reward: Rewards):
    n, k = m.n_states, m.n_actions
    P = np.zeros((n, k, n))
    R = np.zeros((n, k))
    mask = np.zeros((n, k), dtype=bool)
    for s, a in m.pairs():
        P[s, a] = m.trans[(s, a)]
        R[s, a] = float(m.trans[(s, a)] @ reward[(s, a)])
        mask[s, a] = True
    return P, R, mask


def optimal_discounted(m: Mdp, reward: Rewards, gamma: float, eps: float,
                       max_iter: int = 10 ** 7) -> PolicyTable:
    """Value iteration to residual ``eps (1 - gamma) / (2 gamma)``, then greedy.

    The greedy policy is ``eps``-optimal for discount ``gamma``; ties go to the
    lowest action index.
    """
    if not 0.0 < gamma < 1.0 or eps <= 0:
        raise DomainError("need gamma in (0, 1) and eps > 0")
    P, R, mask = _tensors(m, reward)
    stop = eps * (1 - gamma) / (2 * gamma)
    v = np.zeros(m.n_states)
    for _ in range(max_iter):
        q = np.where(mask, R + gamma * P @ v, -np.inf)
        v_new = q.max(axis=1)
        done = np.max(np.abs(v_new - v)) <= stop
        v = v_new
        if done:
            break
    q = np.where(mask, R + gamma * P @ v, -np.inf)
    best = q.max(axis=1, keepdims=True)
    # lowest index within rounding of the max
    greedy = np.argmax(q >= best - 1e-12 * np.maximum(1.0, np.abs(best)), axis=1)
    return PolicyTable("memoryless", {s: int(greedy[s]) for s in range(m.n_states)})


def _reachable(m: Mdp, sigma: Sequence[int], start: int) -> list[int]:
    seen = {start}
    stack = [start]
    while stack:
        s = stack.pop()
        for t, _ in m.succ(s, sigma[s]):
            if t not in seen:
                seen.add(t)
                stack.append(t)
    return sorted(seen)


def enumerate_policies(m: Mdp, guard: int = ENUM_GUARD):
    count = 1
    for acts in m.enabled:
        count *= len(acts)
    if count > guard:
        raise CapExceeded(f"{count} memoryless policies exceed the enumeration guard {guard}")
    return count, itertools.product(*m.enabled)


def brute_force_optimal_average(m: Mdp, reward: Rewards, guard: int = ENUM_GUARD,
                                tol: float = ARGMAX_TOL) -> OracleResult:
    """Evaluate every deterministic memoryless policy; return the best gain
    and every policy within ``tol`` of it (in enumeration order)."""
    count, policies = enumerate_policies(m, guard)
    cache: dict[tuple, float] = {}
    gains = []
    for sigma in policies:
        reach = _reachable(m, sigma, m.initial)
        key = tuple(sigma[s] for s in reach), tuple(reach)
        g = cache.get(key)
        if g is None:
            g = limit_average(m, reward, dict(zip(reach, key[0]))).gain
            cache[key] = g
        gains.append((g, sigma))
    best = max(g for g, _ in gains)
    optimal = [sigma for g, sigma in gains if g >= best - tol]
    return OracleResult(best, optimal, count, list(range(m.n_states)))


def ergodic_transform(P: np.ndarray, r: np.ndarray, alpha: float) -> tuple[np.ndarray, np.ndarray]:
    """``alpha P + (1 - alpha) I``; the added self-loop mass earns no reward."""
    n = len(P)
    return alpha * P + (1 - alpha) * np.eye(n), alpha * r


def stationary(P: np.ndarray) -> np.ndarray:
    n = len(P)
    A = np.vstack([P.T - np.eye(n), np.ones(n)])
    b = np.zeros(n + 1)
    b[-1] = 1.0
    pi, *_ = np.linalg.lstsq(A, b, rcond=None)
    return pi


def ergodic_mixing_time(P: np.ndarray, eps: float, cap: int = 10 ** 6) -> int:
    """First ``t`` with ``max_x ||Mhat^t(x, .) - pi||_TV <= eps`` where
    ``Mhat = (P + I) / 2``."""
    from .components import tarjan

    P = np.asarray(P, dtype=float)
    n = len(P)
    sccs = tarjan(range(n), lambda v: np.flatnonzero(P[v] > 0).tolist())
    if len(sccs) != 1:
        raise DomainError("chain is not irreducible")
    M = 0.5 * (P + np.eye(n))
    pi = stationary(M)
    D = np.eye(n)
    for t in range(cap + 1):
        if 0.5 * np.abs(D - pi).sum(axis=1).max() <= eps:
            return t
        D = D @ M
    raise CapExceeded(f"mixing time exceeds {cap}")
