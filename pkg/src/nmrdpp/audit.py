"""Checks that an expanded MDP is equivalent to its NMRDP, and minimality audits.

The equivalence check walks every feasible state sequence up to a horizon in
lockstep through the NMRDP and the expanded MDP.  The NMRDP side computes
rewards on its own: PLTL rewards from a truth vector over all subformulae
updated by the semantic clauses, $FLTL rewards by plain progression.  Nothing
is read off the e-state annotations.
"""

from __future__ import annotations

from collections.abc import Hashable
from dataclasses import dataclass, field

from .fltl import FltlRewardSpec, rprog
from .formula import (
    AND,
    ATOM,
    FALSE,
    FLTL,
    NOT,
    OR,
    PRV,
    SNC,
    TRUE,
    Formula,
    subformulae,
)
from .mdp import PROB_TOL, EState, ExpandedMdp, Nmrdp

MAX_REPORTED = 50


@dataclass
class EquivalenceReport:
    horizon: int
    violations: list[str] = field(default_factory=list)
    sequences_checked: int = 0
    notes: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def add(self, msg: str) -> None:
        if len(self.violations) < MAX_REPORTED:
            self.violations.append(msg)

    def __str__(self) -> str:
        head = "equivalent" if self.ok else f"{len(self.violations)} violation(s)"
        return f"{head} (horizon {self.horizon}, {self.sequences_checked} prefixes)"


class _PltlTracker:
    """Truth of every subformula of the reward formulae along a sequence."""

    def __init__(self, d: Nmrdp):
        self.d = d
        self.entries = [(r.formula, r.reward) for r in d.rewards]
        subs: list[Formula] = []
        seen: set[Formula] = set()
        for f, _ in self.entries:
            for g in subformulae(f):
                if g not in seen:
                    seen.add(g)
                    subs.append(g)
        self.subs = subs
        self.pos = {g: k for k, g in enumerate(subs)}

    def start(self, s: int):
        return self._update(None, s)

    def step(self, key, s: int):
        return self._update(key, s)

    def _update(self, prev, s: int):
        now = self.d.state_set(s)
        val: list[bool] = []
        pos = self.pos
        for g in self.subs:
            op = g.op
            if op == ATOM:
                v = g.name in now
            elif op == TRUE:
                v = True
            elif op == FALSE:
                v = False
            elif op == NOT:
                v = not val[pos[g.args[0]]]
            elif op == AND:
                v = val[pos[g.args[0]]] and val[pos[g.args[1]]]
            elif op == OR:
                v = val[pos[g.args[0]]] or val[pos[g.args[1]]]
            elif op == PRV:
                v = prev is not None and prev[pos[g.args[0]]]
            elif op == SNC:
                v = val[pos[g.args[1]]] or (
                    val[pos[g.args[0]]] and prev is not None and prev[pos[g]])
            else:
                raise ValueError(f"{op} is not a PLTL operator")
            val.append(v)
        key = tuple(val)
        reward = sum(r for f, r in self.entries if key[pos[f]])
        return key, reward


class _FltlTracker:
    def __init__(self, d: Nmrdp):
        self.d = d
        self.spec0 = FltlRewardSpec.from_entries(d.rewards)

    def start(self, s: int):
        return self.step(self.spec0, s)

    def step(self, spec, s: int):
        return rprog(self.d.state_set(s), spec)


def _tracker(d: Nmrdp):
    return _FltlTracker(d) if d.dialect == FLTL else _PltlTracker(d)


def check_equivalence(d: Nmrdp, m: ExpandedMdp, horizon: int = 6) -> EquivalenceReport:
    """Check the four conditions relating ``m`` to ``d`` (the reward
    condition only up to ``horizon`` states)."""
    rep = EquivalenceReport(horizon)
    if not m.n:
        rep.add("expanded MDP is empty")
        return rep
    if m.tau(m.initial) != d.initial:
        rep.add("initial e-state does not map to the initial state")
    all_actions = list(range(len(d.actions)))
    for i, e in enumerate(m.estates):
        acts = m.applicable(i)
        if acts != all_actions:
            if e.dead and d.control is not None:
                continue
            rep.add(f"e-state {i}: actions {acts} differ from {all_actions}")
        for a in acts:
            dist = m.transitions[i][a]
            by_state: dict[int, float] = {}
            for j, p in dist:
                t = m.tau(j)
                if t in by_state:
                    rep.add(f"e-state {i} action {a}: two successors for state {t}")
                by_state[t] = by_state.get(t, 0.0) + p
            want = dict(d.successors(e.state, a))
            for t in set(want) | set(by_state):
                if abs(want.get(t, 0.0) - by_state.get(t, 0.0)) > PROB_TOL:
                    rep.add(f"e-state {i} action {a}: probability of state {t} is "
                            f"{by_state.get(t, 0.0)}, expected {want.get(t, 0.0)}")
    if not rep.ok:
        return rep

    tracker = _tracker(d)
    key, r = tracker.start(d.initial)
    best: dict[tuple[int, Hashable], int] = {}
    stack = [(m.initial, key, r, 1)]
    while stack:
        i, key, r, depth = stack.pop()
        rep.sequences_checked += 1
        if abs(m.estates[i].reward - r) > 1e-9:
            rep.add(f"e-state {i} at depth {depth}: reward {m.estates[i].reward}, expected {r}")
            continue
        if depth >= horizon:
            continue
        seen = best.get((i, key))
        if seen is not None and seen <= depth:
            continue
        best[(i, key)] = depth
        for a in m.applicable(i):
            for j, _ in m.transitions[i][a]:
                k2, r2 = tracker.step(key, m.tau(j))
                stack.append((j, k2, r2, depth + 1))
    return rep


# -- minimality -------------------------------------------------------------------

@dataclass
class MinimalityReport:
    kind: str
    horizon: int
    merge_required: list[tuple[int, int]] = field(default_factory=list)
    suspect: list[tuple[int, int]] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.merge_required


def audit_minimality(m: ExpandedMdp, horizon: int = 6, kind: str = "blind") -> MinimalityReport:
    """Compare e-states over the same NMRDP state.

    ``blind`` compares reward streams over every continuation of states (the
    annotation is pushed through infeasible transitions too); ``true`` only
    over feasible continuations.  Pairs that agree to ``horizon`` steps are
    reported as suspect; pairs with identical labels as merge-required.
    """
    if kind not in ("blind", "true"):
        raise ValueError("kind must be 'blind' or 'true'")
    rep = MinimalityReport(kind, horizon)
    d = m.nmrdp
    gen = m.generator
    if gen is None:
        raise ValueError("minimality audits need the generator that built the MDP")
    all_states = list(range(1 << d.n_props))
    feasible: dict[int, list[int]] = {}

    def nexts(s: int) -> list[int]:
        if kind == "blind":
            return all_states
        out = feasible.get(s)
        if out is None:
            out = sorted({t for a in range(len(d.actions)) for t, _ in d.successors(s, a)})
            feasible[s] = out
        return out

    ids: dict[tuple, int] = {}
    memo: dict[tuple[EState, int], int] = {}

    def sig(e: EState, depth: int) -> int:
        k = (e, depth)
        out = memo.get(k)
        if out is not None:
            return out
        reward = round(e.reward, 9)
        if depth == 1:
            node = (reward,)
        elif kind == "true" and e.dead:
            node = (reward, ())
        else:
            node = (reward, tuple((t, sig(gen.step(e, t), depth - 1)) for t in nexts(e.state)))
        out = ids.setdefault(node, len(ids))
        memo[k] = out
        return out

    by_state: dict[int, list[int]] = {}
    for i, e in enumerate(m.estates):
        by_state.setdefault(e.state, []).append(i)
    for group in by_state.values():
        for x in range(len(group)):
            for y in range(x + 1, len(group)):
                i, j = group[x], group[y]
                ei, ej = m.estates[i], m.estates[j]
                if ei == ej:
                    rep.merge_required.append((i, j))
                elif sig(ei, horizon) == sig(ej, horizon):
                    rep.suspect.append((i, j))
    return rep
