"""PLTL regression and the PLTLSIM / PLTLMIN translations.

Both translations label each e-state with truth values for a set of tracked
PLTL formulae.  The truth of a tracked formula after moving to state ``s'``
is obtained by regressing it through ``s'`` and reading the result off the
predecessor's label; no theorem proving is needed because a regressed formula
is a boolean combination of formulae the predecessor already tracks.

PLTLSIM tracks the whole subformula closure everywhere.  PLTLMIN first
computes, per reachable state, the least set of formulae whose history must be
remembered (:func:`pltlmin_preprocess`) and tracks only those.
"""

from __future__ import annotations

from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass

from .formula import (
    AND,
    ATOM,
    FALSE,
    FF,
    NATOM,
    NOT,
    OR,
    PRV,
    SNC,
    TRUE,
    TT,
    Formula,
    FormulaError,
    conj,
    disj,
    eval_pltl,
    neg,
    simplify,
    sub_closure,
    to_text,
)
from .mdp import EState, ExpandedMdp, Generator, Nmrdp, RewardEntry, expand

_reg_cache: dict[tuple[Formula, frozenset[str]], Formula] = {}


def _reg(f: Formula, s: frozenset[str]) -> Formula:
    key = (f, s)
    out = _reg_cache.get(key)
    if out is not None:
        return out
    op = f.op
    if op == ATOM:
        out = TT if f.name in s else FF
    elif op == NATOM:
        out = FF if f.name in s else TT
    elif op in (TRUE, FALSE):
        out = f
    elif op == NOT:
        out = neg(_reg(f.args[0], s))
    elif op == AND:
        out = conj(_reg(f.args[0], s), _reg(f.args[1], s))
    elif op == OR:
        out = disj(_reg(f.args[0], s), _reg(f.args[1], s))
    elif op == PRV:
        out = f.args[0]
    elif op == SNC:
        out = disj(_reg(f.args[1], s), conj(_reg(f.args[0], s), f))
    else:
        raise FormulaError(f"cannot regress the future operator {op}")
    _reg_cache[key] = out
    return out


def regress(f: Formula, s: Iterable[str]) -> Formula:
    """What must have held one step earlier for ``f`` to hold now in ``s``."""
    return simplify(_reg(f, frozenset(s)))


def strip_not(f: Formula) -> Formula:
    while f.op == NOT:
        f = f.args[0]
    return f


class Label(frozenset):
    """A consistent set of PLTL literals (``f`` or ``~f`` per tracked ``f``)."""

    def truth(self) -> dict[Formula, bool]:
        out = {}
        for lit in self:
            if lit.op == NOT:
                out[lit.args[0]] = False
            else:
                out[lit] = True
        return out

    def __str__(self) -> str:
        return "{" + ", ".join(to_text(f) for f in sorted(self, key=lambda g: g.key)) + "}"

    def __repr__(self) -> str:
        return f"Label({self})"


def truth_under(g: Formula, truth: Mapping[Formula, bool]) -> bool:
    """Evaluate a boolean combination of tracked formulae."""
    v = truth.get(g)
    if v is not None:
        return v
    op = g.op
    if op == TRUE:
        return True
    if op == FALSE:
        return False
    if op == NOT:
        return not truth_under(g.args[0], truth)
    if op == AND:
        return truth_under(g.args[0], truth) and truth_under(g.args[1], truth)
    if op == OR:
        return truth_under(g.args[0], truth) or truth_under(g.args[1], truth)
    raise KeyError(f"{to_text(g)} is not tracked by the label")


@dataclass
class LabelFunction:
    """Per-state sets of formulae whose truth a PLTLMIN e-state records."""

    map: dict[int, frozenset[Formula]]

    def __getitem__(self, s: int) -> frozenset[Formula]:
        return self.map[s]

    def __len__(self) -> int:
        return len(self.map)


def _spec_entries(d: Nmrdp, spec: Sequence[RewardEntry] | None) -> list[tuple[Formula, float]]:
    entries = d.rewards if spec is None else spec
    out = []
    for r in entries:
        if r.formula.dialect not in ("pltl", "material"):
            raise FormulaError(f"reward {r.name} is not a PLTL formula")
        out.append((simplify(r.formula), r.reward))
    return out


class PltlGenerator(Generator):
    """E-states labelled with truth values of tracked PLTL formulae."""

    def __init__(self, nmrdp: Nmrdp, spec: Sequence[RewardEntry] | None = None,
                 labels: LabelFunction | None = None):
        super().__init__(nmrdp)
        self.entries = _spec_entries(nmrdp, spec)
        self.labels = labels
        if labels is None:
            self.method = "pltlsim"
            closure = sub_closure(f for f, _ in self.entries)
            self._all = tuple(sorted({strip_not(g) for g in closure}, key=lambda g: g.key))
        else:
            self.method = "pltlmin"
        self._tracked: dict[int, tuple[Formula, ...]] = {}

    def tracked(self, s: int) -> tuple[Formula, ...]:
        if self.labels is None:
            return self._all
        out = self._tracked.get(s)
        if out is None:
            out = tuple(sorted(self.labels[s], key=lambda g: g.key))
            self._tracked[s] = out
        return out

    def _make(self, s: int, truth: dict[Formula, bool]) -> EState:
        lits = Label(g if truth[g] else neg(g) for g in self.tracked(s))
        reward = sum(r for f, r in self.entries if truth_under(f, truth))
        return EState(s, lits, reward)

    def initial(self) -> EState:
        s0 = self.nmrdp.initial
        hist = [self.nmrdp.state_set(s0)]
        truth = {g: eval_pltl(hist, 0, g) for g in self.tracked(s0)}
        return self._make(s0, truth)

    def step(self, e: EState, s_next: int) -> EState:
        prev = e.annotation.truth()
        now = self.nmrdp.state_set(s_next)
        truth = {g: truth_under(regress(g, now), prev) for g in self.tracked(s_next)}
        return self._make(s_next, truth)


def pltlmin_preprocess(d: Nmrdp, spec: Sequence[RewardEntry] | None = None,
                       max_states: int | None = None) -> LabelFunction:
    """Least fixpoint of ``l(s) = F ∪ {Reg(g, s') | g ∈ l(s'), s' a successor of s}``.

    Constant regressions are dropped and a leading negation is stripped, since
    knowing ``g`` and knowing ``~g`` are the same thing.
    """
    base = frozenset(strip_not(f) for f, _ in _spec_entries(d, spec) if not f.is_constant)
    states = d.reachable_states(max_states)
    succ = {
        s: sorted({t for a in range(len(d.actions)) for t, _ in d.successors(s, a)})
        for s in states
    }
    label = {s: set(base) for s in states}
    changed = True
    while changed:
        changed = False
        for s in states:
            mine = label[s]
            before = len(mine)
            for t in succ[s]:
                now = d.state_set(t)
                for g in list(label[t]):
                    r = regress(g, now)
                    if not r.is_constant:
                        mine.add(strip_not(r))
            if len(mine) != before:
                changed = True
    return LabelFunction({s: frozenset(v) for s, v in label.items()})


def pltlsim_translate(d: Nmrdp, spec: Sequence[RewardEntry] | None = None,
                      max_estates: int | None = None) -> ExpandedMdp:
    return expand(PltlGenerator(d, spec), max_estates)


def pltlmin_translate(d: Nmrdp, spec: Sequence[RewardEntry] | None = None,
                      labels: LabelFunction | None = None,
                      max_estates: int | None = None) -> ExpandedMdp:
    if labels is None:
        labels = pltlmin_preprocess(d, spec, max_estates)
    return expand(PltlGenerator(d, spec, labels), max_estates)
