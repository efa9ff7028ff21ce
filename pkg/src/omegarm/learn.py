"""Model-based learning against a seeded simulator.

The learner knows states, enabled actions, labels and the reward machine but
not the transition probabilities.  Sample counts from the theory get huge
(``1e12`` and beyond), so per-pair counts are drawn in one batch: a
multinomial draw has exactly the law of ``N`` independent samples.  Above the
int64 range a sequence of normal-approximated binomials is used instead.
"""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass

import numpy as np

from .evaluate import (brute_force_optimal_average, discounted_value, limit_average,
                       optimal_discounted)
from .model import DomainError, Mdp, PolicyTable, RewardMachine
from .product import RmProductMdp, build_rm_product, lift_policy

INT64_SAFE = 2 ** 62
GAIN_TOL = 1e-9


class Simulator:
    """Draws successors of the hidden MDP; counts every sample."""

    def __init__(self, mdp: Mdp, seed: int):
        self.mdp = mdp
        self.rng = np.random.default_rng(seed)
        self.total_samples = 0
        self.pair_samples: Counter = Counter()

    def sample(self, s: int, a: int) -> int:
        if a not in self.mdp.enabled[s]:
            raise DomainError(f"action {a} not enabled at state {s}")
        self.total_samples += 1
        self.pair_samples[(s, a)] += 1
        return int(self.rng.choice(self.mdp.n_states, p=self.mdp.trans[(s, a)]))

    def sample_counts(self, s: int, a: int, n: int) -> np.ndarray:
        """Successor counts of ``n`` draws from ``(s, a)``.  Returned as floats
        when ``n`` exceeds the int64 range (then approximate, see module doc)."""
        if a not in self.mdp.enabled[s]:
            raise DomainError(f"action {a} not enabled at state {s}")
        n = int(n)
        self.total_samples += n
        self.pair_samples[(s, a)] += n
        p = self.mdp.trans[(s, a)]
        if n <= INT64_SAFE:
            return self.rng.multinomial(n, p / p.sum())
        return _normal_multinomial(self.rng, n, p)


def _normal_multinomial(rng: np.random.Generator, n: int, p: np.ndarray) -> np.ndarray:
    out = np.zeros(len(p))
    left, mass = float(n), 1.0
    for i, pi in enumerate(p):
        if left <= 0 or pi <= 0:
            continue
        q = min(1.0, pi / mass) if mass > 0 else 1.0
        c = left * q + math.sqrt(left * q * (1 - q)) * rng.standard_normal()
        c = min(max(round(c), 0.0), left)
        out[i] = c
        left -= c
        mass -= pi
    return out


def required_samples(delta: float, eps: float, p_min: float, n_states: int, n_actions: int) -> int:
    """Per-pair draws making an (M, delta)-estimate likely with failure < eps."""
    if not (0 < delta and 0 < eps < 1 and 0 < p_min <= 1):
        raise DomainError("need delta > 0, eps in (0, 1), p_min in (0, 1]")
    d = min(delta, p_min)
    return math.ceil(math.log(2 * n_actions * n_states ** 2 / eps) / d ** 2)


def delta_for_accuracy(eps: float, n_states: int, beta: float) -> float:
    """Estimate accuracy under which every policy's gain moves by at most ``eps``."""
    if not (0 < eps < 2 and 0 < beta < 1 and n_states >= 1):
        raise DomainError("need eps in (0, 2), beta in (0, 1), n_states >= 1")
    e = eps / (2 * n_states)
    # log1p keeps d1 positive when 1 - beta ** n_states rounds to 1
    d1 = e * math.log1p(-beta ** n_states) / (6 * n_states ** 2 * math.log(e / 6))
    d2 = (e ** 2 / (24 * n_states * math.ceil(math.log2(4 / e)) * (1 / beta))) ** 2
    return min(d1, d2)


def structure(m: Mdp) -> Mdp:
    """What the learner sees: same states, actions and labels, uniform rows."""
    row = np.full(m.n_states, 1.0 / m.n_states)
    return m.with_trans({key: row.copy() for key in m.trans})


@dataclass
class MdpEstimate:
    mdp: Mdp
    counts: dict[tuple[int, int], int]
    reward: dict | None = None
    product: RmProductMdp | None = None


def estimate_mdp(sim: Simulator, n: int) -> MdpEstimate:
    """Empirical frequencies from ``n`` draws per enabled pair of the hidden MDP."""
    if n < 1:
        raise DomainError("need at least one sample per pair")
    m = sim.mdp
    trans = {}
    for s, a in m.pairs():
        c = sim.sample_counts(s, a, n)
        trans[(s, a)] = np.asarray(c, dtype=float) / n
    return MdpEstimate(structure(m).with_trans(trans), {k: n for k in trans})


def learner_product(m: Mdp, r: RewardMachine) -> RmProductMdp:
    """Product explored over every syntactic successor, so its states and
    indexing do not depend on the (unknown) transition support."""
    return build_rm_product(structure(m), r, syntactic=True)


def hidden_product(m: Mdp, r: RewardMachine) -> RmProductMdp:
    """Same states and indexing as :func:`learner_product`, true probabilities."""
    return build_rm_product(m, r, syntactic=True)


def estimate_product(sim: Simulator, r: RewardMachine, n: int,
                     skeleton: RmProductMdp | None = None) -> MdpEstimate:
    """Sample every pair ``((s, u), a)`` of the product ``n`` times through the
    base simulator and the reward machine."""
    skeleton = skeleton or learner_product(sim.mdp, r)
    pm = skeleton.mdp
    trans = {}
    for v, (s, u) in enumerate(skeleton.backmap):
        for a in pm.enabled[v]:
            c = np.asarray(sim.sample_counts(s, a, n), dtype=float)
            row = np.zeros(pm.n_states)
            for t in np.flatnonzero(c):
                u2, _ = r.step(u, (s, a, int(t)))
                row[skeleton.index(int(t), u2)] += c[t] / n
            trans[(v, a)] = row
    return MdpEstimate(pm.with_trans(trans), {k: n for k in trans}, skeleton.reward, skeleton)


def is_estimate(est: Mdp, hidden: Mdp, delta: float) -> bool:
    """Entrywise error below ``delta`` and identical support."""
    for key, row in hidden.trans.items():
        e = est.trans[key]
        if np.any(np.abs(e - row) >= delta) or np.any((e > 0) != (row > 0)):
            return False
    return True


def discounted_sample_count(gamma: float, eps: float, delta: float, n_states: int, n_actions: int) -> int:
    alpha = eps * (1 - gamma) ** 2 / (4 * n_states)
    return required_samples(alpha, delta, 1.0, n_states, n_actions)


def discounted_pac(sim: Simulator, r: RewardMachine, gamma: float, eps: float, delta: float,
                   skeleton: RmProductMdp | None = None) -> PolicyTable:
    """Probably-approximately-optimal discounted policy on the product with ``r``.

    Each product pair is sampled so that every entry is within
    ``eps (1 - gamma)^2 / (4 |S|)`` w.p. ``>= 1 - delta``; the estimate is then
    planned on with slack ``eps / 2``.
    """
    if not (0 < gamma < 1 and 0 < eps < 1 and 0 < delta < 1):
        raise DomainError("need gamma, eps, delta in (0, 1)")
    skeleton = skeleton or learner_product(sim.mdp, r)
    pm = skeleton.mdp
    n = discounted_sample_count(gamma, eps, delta, pm.n_states, pm.n_actions)
    est = estimate_product(sim, r, n, skeleton)
    return optimal_discounted(est.mdp, est.reward, gamma, eps / 2)


@dataclass
class Iteration:
    k: int
    gamma: float
    eps: float
    delta: float
    samples_per_pair: int
    policy: PolicyTable
    gain: float
    optimal: bool
    discount_miss: bool

    def to_json(self) -> dict:
        return {"k": self.k, "gamma": self.gamma, "eps": self.eps, "delta": self.delta,
                "samples_per_pair": self.samples_per_pair, "gain": self.gain,
                "optimal": self.optimal, "discount_miss": self.discount_miss,
                "policy": {str(v): a for v, a in sorted(self.policy.choice.items())}}


@dataclass
class ScheduleReport:
    iterations: list[Iteration]
    J_star: float
    k0: int | None
    total_samples: int
    product_states: int = 0

    @property
    def stabilized(self) -> bool:
        return self.k0 is not None

    @property
    def discount_misses(self) -> int:
        return sum(it.discount_miss for it in self.iterations)

    def to_json(self) -> dict:
        return {"J_star": self.J_star, "k0": self.k0,
                "stabilized": self.stabilized,
                "status": "stabilized" if self.stabilized else "not stabilized within budget",
                "discount_misses": self.discount_misses, "total_samples": self.total_samples,
                "product_states": self.product_states,
                "iterations": [it.to_json() for it in self.iterations]}


def schedule(k: int) -> tuple[float, float, float]:
    """Discount, accuracy and confidence used in round ``k``."""
    if k < 2:
        raise DomainError("rounds start at k = 2")
    return 1 - 1 / k, 1 / k, 1 / k ** 2


def run_algorithm1(sim: Simulator, r: RewardMachine, k_max: int) -> ScheduleReport:
    """Discount schedule ``gamma_k = 1 - 1/k``; every round's policy is scored
    offline against the hidden MDP.  ``k0`` is the first round from which all
    policies up to ``k_max`` are gain-optimal."""
    if k_max < 2:
        raise DomainError("k_max must be at least 2")
    skeleton = learner_product(sim.mdp, r)
    truth = hidden_product(sim.mdp, r)
    assert truth.backmap == skeleton.backmap
    J_star = brute_force_optimal_average(truth.mdp, truth.reward).J_star
    pm = skeleton.mdp
    out = []
    for k in range(2, k_max + 1):
        gamma, eps, delta = schedule(k)
        pi = discounted_pac(sim, r, gamma, eps, delta, skeleton)
        gain = limit_average(truth.mdp, truth.reward, pi).gain
        best = optimal_discounted(truth.mdp, truth.reward, gamma, 1e-9 * eps)
        v_pi = discounted_value(truth.mdp, truth.reward, pi, gamma)[truth.mdp.initial]
        v_best = discounted_value(truth.mdp, truth.reward, best, gamma)[truth.mdp.initial]
        out.append(Iteration(k, gamma, eps, delta,
                             discounted_sample_count(gamma, eps, delta, pm.n_states, pm.n_actions),
                             pi, gain, gain >= J_star - GAIN_TOL, bool(v_pi < v_best - eps)))
    k0 = None
    for it in reversed(out):
        if not it.optimal:
            break
        k0 = it.k
    return ScheduleReport(out, J_star, k0, sim.total_samples, pm.n_states)


@dataclass
class OmegaPacResult:
    policy: PolicyTable
    product_policy: PolicyTable
    estimate_gain: float
    delta_prime: float
    samples_per_pair: int
    product_states: int
    total_samples: int

    def to_json(self) -> dict:
        return {"estimate_gain": self.estimate_gain, "delta_prime": self.delta_prime,
                "samples_per_pair": self.samples_per_pair, "product_states": self.product_states,
                "total_samples": self.total_samples,
                "product_policy": {str(v): a for v, a in sorted(self.product_policy.choice.items())}}


def omega_pac(sim: Simulator, r: RewardMachine, beta: float, eps: float, delta: float) -> OmegaPacResult:
    """With probability ``>= 1 - eps`` the returned policy's gain is within
    ``delta`` of optimal.  ``beta`` must lower-bound both the smallest
    transition probability and the inverse mixing time of the product."""
    if not (0 < beta <= 1 and 0 < eps < 1 and 0 < delta < 2):
        raise DomainError("need beta in (0, 1], eps in (0, 1), delta in (0, 2)")
    skeleton = learner_product(sim.mdp, r)
    pm = skeleton.mdp
    n_su = pm.n_states
    # beta = 1 only arises when every transition is deterministic and chains mix
    # at once; the accuracy bound is continuous there, so nudge inside (0, 1).
    d_prime = delta_for_accuracy(delta, n_su, min(beta, 1 - 1e-12))
    n = required_samples(d_prime, eps, beta, n_su, pm.n_actions)
    est = estimate_product(sim, r, n, skeleton)
    oracle = brute_force_optimal_average(est.mdp, est.reward)
    choice = dict(zip(oracle.states, oracle.optimal_set[0]))
    product_policy = PolicyTable("memoryless", choice)
    return OmegaPacResult(lift_policy(product_policy, skeleton), product_policy, oracle.J_star,
                          d_prime, n, n_su, sim.total_samples)


def score_product_policy(m: Mdp, r: RewardMachine, policy: PolicyTable) -> float:
    """Exact gain on the hidden MDP of a policy over the learner's product."""
    truth = hidden_product(m, r)
    return limit_average(truth.mdp, truth.reward, policy).gain
