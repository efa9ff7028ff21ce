"""JSON files: instances (MDP + DRA), reward machines and policies.

Loading validates names and references and raises :class:`InvalidInput` with
a field path; serialising is canonical, so load -> dump -> load is the
identity on every file type.
"""
from __future__ import annotations

import json
from pathlib import Path
from typing import Any

import numpy as np

from .model import (MAX_AP, Dra, Mdp, PolicyTable, TableRewardMachine, letter_mask, mask_props,
                    validate_dra, validate_mdp)

VERSION = 1


class InvalidInput(ValueError):
    pass


def read_json(path: str | Path) -> Any:
    text = Path(path).read_text()
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise InvalidInput(f"{path}: malformed JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from None


def write_json(data: Any, path: str | Path | None) -> str:
    text = json.dumps(data, indent=2, ensure_ascii=False) + "\n"
    if path is not None:
        Path(path).write_text(text)
    return text


def _need(obj: dict, key: str, where: str):
    if not isinstance(obj, dict) or key not in obj:
        raise InvalidInput(f"{where}: missing field '{key}'")
    return obj[key]


def _names(items, where: str) -> dict[str, int]:
    if not isinstance(items, list) or not items:
        raise InvalidInput(f"{where}: expected a nonempty list of names")
    out = {}
    for i, name in enumerate(items):
        if not isinstance(name, str):
            raise InvalidInput(f"{where}[{i}]: names must be strings")
        if name in out:
            raise InvalidInput(f"{where}[{i}]: duplicate name '{name}'")
        out[name] = i
    return out


def _ref(table: dict[str, int], name, where: str) -> int:
    if name not in table:
        raise InvalidInput(f"{where}: undeclared name '{name}'")
    return table[name]


def _mask(props, ap, where: str) -> int:
    if not isinstance(props, list):
        raise InvalidInput(f"{where}: expected a list of propositions")
    try:
        return letter_mask(props, ap)
    except ValueError as exc:
        raise InvalidInput(f"{where}: {exc}") from None


def load_instance(data: dict) -> tuple[Mdp, Dra, frozenset | None]:
    """Returns the MDP, the DRA and the declared support (None if absent)."""
    ap = _need(data, "ap", "instance")
    if not isinstance(ap, list) or len(set(ap)) != len(ap) or len(ap) > MAX_AP:
        raise InvalidInput(f"instance.ap: expected at most {MAX_AP} distinct proposition names")
    ap = tuple(ap)
    jm = _need(data, "mdp", "instance")
    S = _names(_need(jm, "states", "mdp"), "mdp.states")
    Act = _names(_need(jm, "actions", "mdp"), "mdp.actions")
    init = _ref(S, _need(jm, "initial", "mdp"), "mdp.initial")
    rows: dict[tuple[int, int], np.ndarray] = {}
    labels = {}
    for i, tr in enumerate(_need(jm, "transitions", "mdp")):
        where = f"mdp.transitions[{i}]"
        s = _ref(S, _need(tr, "from", where), where + ".from")
        a = _ref(Act, _need(tr, "action", where), where + ".action")
        t = _ref(S, _need(tr, "to", where), where + ".to")
        p = _need(tr, "prob", where)
        if not isinstance(p, (int, float)):
            raise InvalidInput(f"{where}.prob: expected a number")
        row = rows.setdefault((s, a), np.zeros(len(S)))
        row[t] += float(p)
        lab = _mask(tr.get("labels", []), ap, where + ".labels")
        if lab:
            labels[(s, a, t)] = lab
    enabled = tuple(tuple(a for a in range(len(Act)) if (s, a) in rows) for s in range(len(S)))
    m = Mdp(tuple(S), tuple(Act), enabled, rows, labels, init, ap)
    problems = validate_mdp(m)
    if problems:
        raise InvalidInput("mdp: " + "; ".join(map(str, problems)))

    jd = _need(data, "dra", "instance")
    Q = _names(_need(jd, "states", "dra"), "dra.states")
    q0 = _ref(Q, _need(jd, "initial", "dra"), "dra.initial")
    delta = {}
    for i, tr in enumerate(_need(jd, "delta", "dra")):
        where = f"dra.delta[{i}]"
        q = _ref(Q, _need(tr, "from", where), where + ".from")
        q2 = _ref(Q, _need(tr, "to", where), where + ".to")
        letter = _need(tr, "letter", where)
        letters = range(1 << len(ap)) if letter == "*" else [_mask(letter, ap, where + ".letter")]
        for l in letters:
            if delta.get((q, l), q2) != q2:
                raise InvalidInput(f"{where}: conflicting move for letter {mask_props(l, ap)}")
            delta[(q, l)] = q2
    pairs = []
    for i, pr in enumerate(_need(jd, "pairs", "dra")):
        where = f"dra.pairs[{i}]"
        acc = frozenset(_ref(Q, n, where + ".acc") for n in _need(pr, "acc", where))
        rej = frozenset(_ref(Q, n, where + ".rej") for n in _need(pr, "rej", where))
        pairs.append((acc, rej))
    d = Dra(tuple(Q), ap, delta, pairs, q0)
    problems = validate_dra(d, ap)
    if problems:
        raise InvalidInput("dra: " + "; ".join(map(str, problems)))

    support = None
    if "support" in data:
        support = set()
        for i, e in enumerate(data["support"]):
            where = f"support[{i}]"
            if not isinstance(e, list) or len(e) != 3:
                raise InvalidInput(f"{where}: expected [from, action, to]")
            s, a, t = _ref(S, e[0], where), _ref(Act, e[1], where), _ref(S, e[2], where)
            if a not in m.enabled[s]:
                raise InvalidInput(f"{where}: action '{e[1]}' not enabled at '{e[0]}'")
            support.add((s, a, t))
        support = frozenset(support)
    return m, d, support


def instance_to_json(m: Mdp, d: Dra, support=None) -> dict:
    trans = []
    for s, a in sorted(m.pairs()):
        for t in range(m.n_states):
            p = float(m.trans[(s, a)][t])
            lab = m.label(s, a, t)
            if p > 0 or lab:
                trans.append({"from": m.states[s], "action": m.actions[a], "to": m.states[t],
                              "prob": p, "labels": mask_props(lab, m.ap)})
    delta = [{"from": d.states[q], "letter": mask_props(l, d.ap), "to": d.states[q2]}
             for (q, l), q2 in sorted(d.delta.items())]
    out = {
        "version": VERSION,
        "ap": list(m.ap),
        "mdp": {"states": list(m.states), "initial": m.states[m.initial],
                "actions": list(m.actions), "transitions": trans},
        "dra": {"states": list(d.states), "initial": d.states[d.initial], "delta": delta,
                "pairs": [{"acc": [d.states[q] for q in sorted(acc)],
                           "rej": [d.states[q] for q in sorted(rej)]} for acc, rej in d.pairs]},
    }
    if support is not None:
        out["support"] = [[m.states[s], m.actions[a], m.states[t]] for s, a, t in sorted(support)]
    return out


def rm_to_json(r: TableRewardMachine, m: Mdp) -> dict:
    name = r.state_name
    rules = [{"u": name(u), "from": m.states[s], "action": m.actions[a], "to": m.states[t],
              "u_next": name(u2), "reward": rew}
             for (u, (s, a, t)), (u2, rew) in r.rules.items()]
    order = {u: i for i, u in enumerate(r.states)}
    rules.sort(key=lambda x: (order[_by_name(r, x["u"])], m.states.index(x["from"]),
                              m.actions.index(x["action"]), m.states.index(x["to"])))
    out = {"states": [name(u) for u in r.states], "initial": name(r.initial), "rules": rules}
    if getattr(r, "domain", "syntactic") != "syntactic":
        out["domain"] = r.domain
    return out


def _by_name(r: TableRewardMachine, n: str):
    if not hasattr(r, "_by_name"):
        r._by_name = {r.state_name(u): u for u in r.states}
    return r._by_name[n]


def load_rm(data: dict, m: Mdp) -> TableRewardMachine:
    """Machine states become their names."""
    U = _names(_need(data, "states", "rm"), "rm.states")
    init = _need(data, "initial", "rm")
    _ref(U, init, "rm.initial")
    S = {n: i for i, n in enumerate(m.states)}
    Act = {n: i for i, n in enumerate(m.actions)}
    rules = {}
    for i, rule in enumerate(_need(data, "rules", "rm")):
        where = f"rm.rules[{i}]"
        u = _need(rule, "u", where)
        _ref(U, u, where + ".u")
        u2 = _need(rule, "u_next", where)
        _ref(U, u2, where + ".u_next")
        e = (_ref(S, _need(rule, "from", where), where + ".from"),
             _ref(Act, _need(rule, "action", where), where + ".action"),
             _ref(S, _need(rule, "to", where), where + ".to"))
        rew = _need(rule, "reward", where)
        if not isinstance(rew, (int, float)) or not 0 <= rew <= 1:
            raise InvalidInput(f"{where}.reward: expected a number in [0, 1]")
        if (u, e) in rules:
            raise InvalidInput(f"{where}: duplicate rule")
        rules[(u, e)] = (u2, float(rew))
    r = TableRewardMachine(list(U), init, rules, {u: u for u in U})
    r.domain = data.get("domain", "syntactic")
    if r.domain == "syntactic":
        missing = [(u, e) for u in U for e in m.syntactic_transitions() if (u, e) not in rules]
        if missing:
            u, (s, a, t) = missing[0]
            raise InvalidInput(f"rm: {len(missing)} missing rules, e.g. ({u}, {m.states[s]}, "
                               f"{m.actions[a]}, {m.states[t]})")
    return r


def policy_to_json(p: PolicyTable, state_names, action_names, memory_names=None) -> dict:
    if p.kind == "memoryless":
        entries = [{"state": state_names[s], "action": action_names[a]} for s, a in sorted(p.choice.items())]
    else:
        mn = memory_names or str
        entries = [{"state": state_names[s], "memory": mn(mem), "action": action_names[a]}
                   for (s, mem), a in p.choice.items()]
        entries.sort(key=lambda x: (state_names.index(x["state"]), x["memory"]))
    return {"kind": p.kind, "entries": entries}


def load_policy(data: dict, state_names, action_names) -> PolicyTable:
    """Memory values stay as names; callers map them to machine states."""
    kind = _need(data, "kind", "policy")
    if kind not in ("memoryless", "finite-memory"):
        raise InvalidInput("policy.kind: expected 'memoryless' or 'finite-memory'")
    S = {n: i for i, n in enumerate(state_names)}
    Act = {n: i for i, n in enumerate(action_names)}
    choice = {}
    for i, e in enumerate(_need(data, "entries", "policy")):
        where = f"policy.entries[{i}]"
        s = _ref(S, _need(e, "state", where), where + ".state")
        a = _ref(Act, _need(e, "action", where), where + ".action")
        key = s if kind == "memoryless" else (s, _need(e, "memory", where))
        if key in choice:
            raise InvalidInput(f"{where}: duplicate entry")
        choice[key] = a
    return PolicyTable(kind, choice)
