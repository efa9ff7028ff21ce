"""Command-line entry point.

Exit codes: 0 ok, 1 a check failed, 2 invalid input, 3 a size cap was hit.
"""
from __future__ import annotations

import argparse
import sys
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import __version__
from .components import covering_asecs, maximal_aecs, mec_decomposition
from .evaluate import acceptance_on_product, limit_average
from .learn import (Simulator, discounted_pac, learner_product, omega_pac, run_algorithm1,
                    score_product_policy)
from .model import DomainError, PolicyTable
from .product import CapExceeded, build_product, build_rm_product
from .schema import (InvalidInput, instance_to_json, load_instance, load_policy, load_rm,
                     read_json, rm_to_json, write_json)
from .translate import (CERT_STATE_CAP, GENERAL_CAP, certify_translation, materialize,
                        translate_general, translate_known_support)

OK, CHECK_FAILED, INVALID, CAP = 0, 1, 2, 3


def _instance(path):
    return load_instance(read_json(path))


def _rm(path, m):
    return load_rm(read_json(path), m)


def _report(args, results, checks=None, t0=None) -> dict:
    echo = {k: v for k, v in vars(args).items() if k != "func"}
    out = {"command": args.command, "args": echo, "seed": getattr(args, "seed", None),
           "results": results}
    if checks is not None:
        out["checks"] = {k: ("pass" if v else "fail") for k, v in checks.items()}
    if t0 is not None:
        out["seconds"] = time.perf_counter() - t0
    return out


def _emit(args, data):
    text = write_json(data, args.output)
    if args.output is None:
        sys.stdout.write(text)


def cmd_translate(args) -> int:
    m, d, declared = _instance(args.instance)
    if args.support == "declared":
        if declared is None:
            raise InvalidInput("instance declares no 'support'; use --support from-instance")
        support = declared
    else:
        support = m.support()
    if args.mode == "known-support":
        r = translate_known_support(m, d, support, args.covering)
        r.domain = "syntactic"
    else:
        g = translate_general(m, d, args.covering, cap=args.cap)
        r = materialize(g, m.with_trans(_support_rows(m, support)), cap=args.cap)
    if not any(rew for _, rew in r.rules.values()):
        print("warning: reward machine pays no reward (no accepting end component)", file=sys.stderr)
    _emit(args, rm_to_json(r, m))
    return OK


def _support_rows(m, support):
    """Uniform rows over ``support``: only the support matters for tabulation."""
    rows = {}
    for s, a in m.pairs():
        ts = sorted(t for (s2, a2, t) in support if (s2, a2) == (s, a))
        row = np.zeros(m.n_states)
        if ts:
            row[ts] = 1.0 / len(ts)
        else:
            row = m.trans[(s, a)].copy()
        rows[(s, a)] = row
    return rows


def cmd_certify(args) -> int:
    t0 = time.perf_counter()
    m, d, _ = _instance(args.instance)
    r = _rm(args.rm, m)
    rep = certify_translation(m, d, r, state_cap=args.cap)
    _emit(args, _report(args, rep.to_json(), rep.checks, t0))
    return OK if rep.certified else CHECK_FAILED


def _product_policy(p: PolicyTable, rp) -> dict[int, int]:
    choice = {}
    for v, (s, u) in enumerate(rp.backmap):
        name = rp.rm.state_name(u)
        if p.kind == "memoryless":
            if s in p.choice:
                choice[v] = p.choice[s]
        elif (s, name) in p.choice:
            choice[v] = p.choice[(s, name)]
    return choice


def cmd_evaluate(args) -> int:
    t0 = time.perf_counter()
    m, d, _ = _instance(args.instance)
    pol = load_policy(read_json(args.policy), m.states, m.actions)
    results = {}
    if args.rm:
        rp = build_rm_product(m, _rm(args.rm, m))
        sigma = _product_policy(pol, rp)
        report = limit_average(rp.mdp, rp.reward, sigma)
        results["gain"] = report.to_json(rp.mdp.states)
        results["acceptance"] = acceptance_on_product(build_product(rp.mdp, d), _lift_to_tracked(rp, d, sigma))
    else:
        prod = build_product(m, d)
        choice = {}
        for v, (s, q) in enumerate(prod.backmap):
            key = s if pol.kind == "memoryless" else (s, d.states[q])
            if key in pol.choice:
                choice[v] = pol.choice[key]
        results["acceptance"] = acceptance_on_product(prod, choice)
    _emit(args, _report(args, results, None, t0))
    return OK


def _lift_to_tracked(rp, d, sigma):
    tracked = build_product(rp.mdp, d)
    return {v: sigma[s] for v, (s, _) in enumerate(tracked.backmap) if s in sigma}


def cmd_decompose(args) -> int:
    m, d, _ = _instance(args.instance)
    prod = build_product(m, d, exhaustive=args.exhaustive)
    names, acts = prod.mdp.states, prod.mdp.actions
    cover = covering_asecs(prod, args.covering)
    results = {
        "product_states": list(names),
        "pairs": [{"acc": [names[v] for v in sorted(a)], "rej": [names[v] for v in sorted(r)]}
                  for a, r in prod.pairs],
        "mecs": [c.to_json(names, acts) for c in mec_decomposition(prod)],
        "maximal_aecs": [c.to_json(names, acts) for c in maximal_aecs(prod)],
        "asecs": [c.to_json(names, acts) for c in cover.components],
        "cover_index": {names[v]: i + 1 for v, i in sorted(cover.cover_index.items())},
    }
    _emit(args, _report(args, results))
    return OK


def cmd_simulate(args) -> int:
    m, d, _ = _instance(args.instance)
    pol = load_policy(read_json(args.policy), m.states, m.actions)
    rm = _rm(args.rm, m) if args.rm else None
    rng = np.random.default_rng(args.seed)
    s, q = m.initial, d.initial
    u = rm.initial if rm else None
    total, visits = 0.0, np.zeros(m.n_states, dtype=int)
    for _ in range(args.steps):
        if pol.kind == "memoryless":
            a = pol.choice[s]
        else:
            a = pol.choice[(s, rm.state_name(u) if rm else d.states[q])]
        t = int(rng.choice(m.n_states, p=m.trans[(s, a)]))
        if rm:
            u, rew = rm.step(u, (s, a, t))
            total += rew
        q = d.step(q, m.label(s, a, t))
        s = t
        visits[s] += 1
    results = {"steps": args.steps, "average_reward": total / args.steps if rm else None,
               "final_state": m.states[s], "final_dra_state": d.states[q],
               "visit_frequency": {m.states[i]: float(c) / args.steps for i, c in enumerate(visits)}}
    _emit(args, _report(args, results))
    return OK


def _solve_trial(args_tuple):
    alg, m, r, seed, kw = args_tuple
    sim = Simulator(m, seed)
    if alg == "alg1":
        return run_algorithm1(sim, r, kw["kmax"]).to_json()
    if alg == "omega-pac":
        res = omega_pac(sim, r, kw["beta"], kw["eps"], kw["delta"])
        out = res.to_json()
        out["gain"] = score_product_policy(m, r, res.product_policy)
        return out
    pol = discounted_pac(sim, r, kw["gamma"], kw["eps"], kw["delta"])
    return {"gain": score_product_policy(m, r, pol), "total_samples": sim.total_samples,
            "policy": {str(v): a for v, a in sorted(pol.choice.items())}}


def cmd_solve(args) -> int:
    t0 = time.perf_counter()
    m, d, _ = _instance(args.instance)
    r = _rm(args.rm, m) if args.rm else translate_known_support(m, d)
    kw = {"kmax": args.kmax, "gamma": args.gamma, "eps": args.eps, "delta": args.delta,
          "beta": args.beta}
    jobs = [(args.alg, m, r, args.seed + i, kw) for i in range(args.trials)]
    if args.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(args.jobs) as pool:
            runs = list(pool.map(_solve_trial, jobs))
    else:
        runs = [_solve_trial(j) for j in jobs]
    skeleton = learner_product(m, r)
    results = {"algorithm": args.alg, "product_states": skeleton.mdp.n_states,
               "trials": [{"seed": args.seed + i, **run} for i, run in enumerate(runs)]}
    checks = None
    if args.alg == "alg1":
        checks = {f"stabilized_seed_{args.seed + i}": run["stabilized"] for i, run in enumerate(runs)}
    _emit(args, _report(args, results, checks, t0))
    return OK if checks is None or all(checks.values()) else CHECK_FAILED


def cmd_schema(args) -> int:
    """Round-trip an instance file through the loader (canonical form)."""
    m, d, support = _instance(args.instance)
    _emit(args, instance_to_json(m, d, support))
    return OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="omegarm", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)

    def add(name, func, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("instance", help="instance JSON (MDP + DRA)")
        p.add_argument("--output", "-o", help="write JSON here instead of stdout")
        p.set_defaults(func=func)
        return p

    p = add("translate", cmd_translate, "build the reward machine")
    p.add_argument("--mode", choices=["known-support", "general"], default="known-support")
    p.add_argument("--support", choices=["declared", "from-instance"], default="from-instance")
    p.add_argument("--covering", choices=["efficient", "naive"], default="efficient")
    p.add_argument("--cap", type=int, default=GENERAL_CAP, help="state cap for the general machine")

    p = add("certify", cmd_certify, "check optimality preservation by policy enumeration")
    p.add_argument("rm", help="reward machine JSON")
    p.add_argument("--cap", type=int, default=CERT_STATE_CAP, help="product state cap")

    p = add("evaluate", cmd_evaluate, "exact gain and acceptance of a policy")
    p.add_argument("--policy", required=True)
    p.add_argument("--rm")

    p = add("decompose", cmd_decompose, "end components of the DRA product")
    p.add_argument("--covering", choices=["efficient", "naive"], default="efficient")
    p.add_argument("--exhaustive", action="store_true")

    p = add("simulate", cmd_simulate, "Monte Carlo run of a policy")
    p.add_argument("--policy", required=True)
    p.add_argument("--rm")
    p.add_argument("--steps", type=int, default=10_000)
    p.add_argument("--seed", type=int, required=True)

    p = add("solve", cmd_solve, "learn a policy against a simulator of the instance")
    p.add_argument("--alg", choices=["alg1", "omega-pac", "discounted"], required=True)
    p.add_argument("--rm", help="reward machine JSON (default: known-support translation)")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--trials", type=int, default=1)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--kmax", type=int, default=30)
    p.add_argument("--gamma", type=float, default=0.95)
    p.add_argument("--eps", type=float, default=0.05)
    p.add_argument("--delta", type=float, default=0.1)
    p.add_argument("--beta", type=float, default=0.5)

    add("canonical", cmd_schema, "print the instance in canonical form")
    return ap


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (InvalidInput, DomainError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return INVALID
    except CapExceeded as exc:
        print(f"error: {exc}", file=sys.stderr)
        return CAP


if __name__ == "__main__":
    sys.exit(main())
