"""$FLTL progression, reward-specification progression and the FLTL translation.

A reward specification is a multiset of ``(formula, reward)`` pairs.  Pushing
it through a state with :func:`rprog` yields the specification for the rest
of the sequence and the reward earned at that state.  Because rewards are
decided without lookahead, a formula that progresses to ``ff`` means the
specification was not reward-normal; that is reported as
:class:`ProgressionFailure` with the offending prefix.
"""

from __future__ import annotations

import itertools
from collections.abc import Collection, Iterable, Sequence
from dataclasses import dataclass

from .formula import (
    AND,
    ATOM,
    DOLLAR,
    FALSE,
    FF,
    FLTL,
    NATOM,
    NXT,
    OR,
    TRUE,
    TT,
    UNTIL,
    And,
    Formula,
    FormulaError,
    Nxt,
    Or,
    Until,
    conj,
    disj,
    negate_nnf,
    simplify,
    to_text,
)
from .mdp import EState, Generator, Nmrdp, RewardEntry, expand


class ProgressionFailure(RuntimeError):
    """A reward formula progressed to ``ff``: the specification is not reward-normal."""

    def __init__(self, formula: Formula, witness: Sequence[Collection[str]]):
        self.formula = formula
        self.witness = [frozenset(s) for s in witness]
        shown = ", ".join("{" + ", ".join(sorted(s)) + "}" for s in self.witness)
        super().__init__(f"{to_text(formula)} progressed to ff along <{shown}>")


# -- progression -----------------------------------------------------------------

_prog_cache: dict[tuple[Formula, bool, frozenset[str]], Formula] = {}


def _prog(b: bool, s: frozenset[str], f: Formula) -> Formula:
    key = (f, b, s)
    out = _prog_cache.get(key)
    if out is not None:
        return out
    op = f.op
    if op == DOLLAR:
        out = TT if b else FF
    elif op == TRUE or op == FALSE:
        out = f
    elif op == ATOM:
        out = TT if f.name in s else FF
    elif op == NATOM:
        out = FF if f.name in s else TT
    elif op == AND:
        out = conj(_prog(b, s, f.args[0]), _prog(b, s, f.args[1]))
    elif op == OR:
        out = disj(_prog(b, s, f.args[0]), _prog(b, s, f.args[1]))
    elif op == NXT:
        out = f.args[0]
    elif op == UNTIL:
        out = disj(_prog(b, s, f.args[1]), conj(_prog(b, s, f.args[0]), f))
    else:
        raise FormulaError(f"cannot progress the past operator {op}")
    _prog_cache[key] = out
    return out


def prog(b: bool, s: Iterable[str], f: Formula) -> Formula:
    """Progress ``f`` through state ``s``; ``b`` says whether a reward is taken now."""
    return simplify(_prog(bool(b), frozenset(s), f))


def prog_raw(b: bool, s: Iterable[str], f: Formula) -> Formula:
    """Progression without simplification (for size checks)."""
    s = frozenset(s)

    def go(g: Formula) -> Formula:
        op = g.op
        if op == DOLLAR:
            return TT if b else FF
        if op in (TRUE, FALSE):
            return g
        if op == ATOM:
            return TT if g.name in s else FF
        if op == NATOM:
            return FF if g.name in s else TT
        if op == AND:
            return And(go(g.args[0]), go(g.args[1]))
        if op == OR:
            return Or(go(g.args[0]), go(g.args[1]))
        if op == NXT:
            return g.args[0]
        if op == UNTIL:
            return Or(go(g.args[1]), And(go(g.args[0]), g))
        raise FormulaError(f"cannot progress the past operator {op}")

    return go(f)


def rew(s: Iterable[str], f: Formula) -> bool:
    """Whether ``f`` demands a reward in ``s``: progressing without one fails."""
    return _prog(False, frozenset(s), f) is FF


def dollar_prog(s: Iterable[str], f: Formula) -> Formula:
    s = frozenset(s)
    return prog(rew(s, f), s, f)


# -- reward specifications -----------------------------------------------------------

@dataclass(frozen=True)
class FltlRewardSpec:
    """Canonical reward specification: merged, simplified, ordered, no ``tt`` entries."""

    entries: tuple[tuple[Formula, float], ...] = ()

    @staticmethod
    def of(pairs: Iterable[tuple[Formula, float]]) -> FltlRewardSpec:
        merged: dict[Formula, float] = {}
        for f, r in pairs:
            f = simplify(f)
            if f is TT:
                continue
            merged[f] = merged.get(f, 0.0) + float(r)
        return FltlRewardSpec(tuple(sorted(merged.items(), key=lambda e: e[0].key)))

    @staticmethod
    def from_entries(entries: Iterable[RewardEntry]) -> FltlRewardSpec:
        pairs = []
        for e in entries:
            if e.formula.dialect not in (FLTL, "material"):
                raise FormulaError(f"reward {e.name} is not an $FLTL formula")
            pairs.append((e.formula, e.reward))
        return FltlRewardSpec.of(pairs)

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    @property
    def total(self) -> float:
        return sum(abs(r) for _, r in self.entries)

    def __str__(self) -> str:
        return "{" + ", ".join(f"{to_text(f)} : {r:g}" for f, r in self.entries) + "}"


def rprog(s: Iterable[str], spec: FltlRewardSpec,
          history: Sequence[Collection[str]] = ()) -> tuple[FltlRewardSpec, float]:
    """Progress a specification through ``s``; returns the next spec and the reward."""
    s = frozenset(s)
    reward = 0.0
    nxt = []
    for f, r in spec.entries:
        b = rew(s, f)
        if b:
            reward += r
        g = simplify(_prog(b, s, f))
        if g is FF:
            raise ProgressionFailure(f, list(history) + [s])
        nxt.append((g, r))
    return FltlRewardSpec.of(nxt), reward


def reward_stream(spec: FltlRewardSpec, seq: Sequence[Collection[str]]) -> list[float]:
    """Rewards earned at each index of ``seq`` by repeated progression."""
    out = []
    for i, s in enumerate(seq):
        spec, r = rprog(s, spec, seq[:i])
        out.append(r)
    return out


# -- reward-normal combinators ---------------------------------------------------------

def _check_material(m: Formula) -> None:
    if not m.is_material:
        raise FormulaError(f"{to_text(m)} is not material")


def delay(f: Formula) -> Formula:
    return Nxt(f)


def cond(m: Formula, f: Formula) -> Formula:
    _check_material(m)
    return Or(negate_nnf(m), f)


def loop(m: Formula, f: Formula) -> Formula:
    _check_material(m)
    return Until(f, m)


def union(f1: Formula, f2: Formula) -> Formula:
    return And(f1, f2)


# -- behaviours ------------------------------------------------------------------------

def nxt_depth(f: Formula) -> int:
    if f.op == NXT:
        return 1 + nxt_depth(f.args[0])
    return max((nxt_depth(a) for a in f.args), default=0)


def _tail(f: Formula) -> bool:
    """Truth past the end of a finite trace, where every literal counts as satisfied."""
    op = f.op
    if op == FALSE:
        return False
    if op in (TRUE, ATOM, NATOM, DOLLAR):
        return True
    if op == AND:
        return _tail(f.args[0]) and _tail(f.args[1])
    if op == OR:
        return _tail(f.args[0]) or _tail(f.args[1])
    if op == NXT:
        return _tail(f.args[0])
    if op == UNTIL:
        return _tail(f.args[1]) or _tail(f.args[0])
    raise FormulaError(f"{op} is not an $FLTL operator")


def sat_b(f: Formula, seq: Sequence[Collection[str]], i: int, behaviour: Collection[tuple],
          limit: int | None = None) -> bool:
    """``(seq, i)`` satisfies ``f`` relative to the behaviour (a set of prefixes).

    Positions past the end of ``seq`` satisfy every literal and ``$``; so does
    ``$`` at prefixes longer than ``limit``, which the behaviour does not cover.
    """
    n = len(seq)
    memo: dict[tuple[int, int], bool] = {}
    key_seq = [frozenset(s) for s in seq]

    def ev(g: Formula, j: int) -> bool:
        if j >= n:
            return _tail(g)
        k = (g.uid, j)
        r = memo.get(k)
        if r is not None:
            return r
        op = g.op
        if op == TRUE:
            r = True
        elif op == FALSE:
            r = False
        elif op == ATOM:
            r = g.name in key_seq[j]
        elif op == NATOM:
            r = g.name not in key_seq[j]
        elif op == DOLLAR:
            r = (limit is not None and j + 1 > limit) or tuple(key_seq[: j + 1]) in behaviour
        elif op == AND:
            r = ev(g.args[0], j) and ev(g.args[1], j)
        elif op == OR:
            r = ev(g.args[0], j) or ev(g.args[1], j)
        elif op == NXT:
            r = ev(g.args[0], j + 1)
        elif op == UNTIL:
            r = ev(g.args[1], j) or (ev(g.args[0], j) and ev(g, j + 1))
        else:
            raise FormulaError(f"{op} is not an $FLTL operator")
        memo[k] = r
        return r

    return ev(f, i)


def all_states(props: Sequence[str]) -> list[frozenset[str]]:
    props = list(props)
    return [frozenset(p for k, p in enumerate(props) if (m >> k) & 1) for m in range(1 << len(props))]


def all_sequences(props: Sequence[str], max_len: int, min_len: int = 1) -> Iterable[tuple]:
    states = all_states(props)
    for n in range(min_len, max_len + 1):
        yield from itertools.product(states, repeat=n)


BRUTE_FORCE_LIMIT = 16


def behaviour_oracle(f: Formula, horizon: int, props: Sequence[str]) -> frozenset[tuple]:
    """The behaviour a formula represents, over prefixes short enough to judge.

    Candidate behaviours range over prefixes of length at most ``horizon``
    minus the nesting depth of ``nxt`` in ``f``; a candidate satisfies ``f``
    when every length-``horizon`` sequence does at index 0.  The result is the
    intersection of all satisfying candidates (every prefix when none does).

    With at most 16 candidate prefixes every subset is tried.  Beyond that the
    intersection is found by leaving out one prefix at a time from the full
    set, which is exact because ``$`` only occurs positively.
    """
    if len(props) > 3 or horizon > 4:
        raise ValueError("behaviour oracle is limited to 3 propositions and horizon 4")
    limit = max(horizon - nxt_depth(f), 0)
    prefixes = list(all_sequences(props, limit)) if limit else []
    seqs = list(all_sequences(props, horizon, horizon))

    def ok(b: Collection[tuple]) -> bool:
        return all(sat_b(f, s, 0, b, limit) for s in seqs)

    universe = frozenset(prefixes)
    if len(prefixes) <= BRUTE_FORCE_LIMIT:
        out = None
        for mask in range(1 << len(prefixes)):
            b = {p for k, p in enumerate(prefixes) if (mask >> k) & 1}
            if ok(b):
                out = b if out is None else out & b
        return universe if out is None else frozenset(out)
    if not ok(universe):
        return universe
    return frozenset(p for p in prefixes if not ok(universe - {p}))


def rewarded_prefixes(spec: FltlRewardSpec, props: Sequence[str], max_len: int) -> frozenset[tuple]:
    """Prefixes (length ≤ ``max_len``) at whose last state progression pays out."""
    out = set()
    for seq in all_sequences(props, max_len, max_len):
        for i, r in enumerate(reward_stream(spec, seq)):
            if r != 0.0:
                out.add(tuple(seq[: i + 1]))
    return frozenset(out)


# -- translation -------------------------------------------------------------------------

@dataclass(frozen=True)
class FltlAnnotation:
    spec: FltlRewardSpec
    control: Formula | None = None

    def __str__(self) -> str:
        text = str(self.spec)
        if self.control is not None:
            text += " / " + to_text(self.control)
        return text


class FltlGenerator(Generator):
    """E-states labelled with progressed reward specifications.

    By default the label is one step ahead: the e-state for state ``s`` holds
    the specification already progressed through ``s`` and the reward earned
    there.  With ``one_step_ahead=False`` the label is the specification still
    to be progressed through ``s``.
    """

    method = "fltl"

    def __init__(self, nmrdp: Nmrdp, spec: FltlRewardSpec | Sequence[RewardEntry] | None = None,
                 control: Formula | None = None, one_step_ahead: bool = True):
        super().__init__(nmrdp)
        if spec is None:
            spec = nmrdp.rewards
        if not isinstance(spec, FltlRewardSpec):
            spec = FltlRewardSpec.from_entries(spec)
        self.spec = spec
        if control is None:
            control = nmrdp.control
        if control is not None:
            if control.has_dollar or control.dialect not in (FLTL, "material"):
                raise FormulaError("control knowledge must be a $-free $FLTL formula")
            control = simplify(control)
        self.control = control
        self.one_step_ahead = one_step_ahead
        self._parent: dict[EState, EState | None] = {}
        self._cache: dict[tuple, EState] = {}

    def _history(self, e: EState | None) -> list[frozenset[str]]:
        out = []
        while e is not None:
            out.append(self.nmrdp.state_set(e.state))
            e = self._parent.get(e)
        return out[::-1]

    def _record(self, e: EState, parent: EState | None) -> EState:
        self._parent.setdefault(e, parent)
        return e

    def initial(self) -> EState:
        s0 = self.nmrdp.initial
        if self.one_step_ahead:
            return self._record(self._advance(s0, self.spec, self.control, None), None)
        return self._record(self._literal(s0, self.spec, self.control, None), None)

    def _advance(self, s: int, spec: FltlRewardSpec, control: Formula | None,
                 parent: EState | None) -> EState:
        key = (s, spec, control)
        out = self._cache.get(key)
        if out is None:
            now = self.nmrdp.state_set(s)
            nxt, r = self._rprog(now, spec, parent)
            c = None if control is None else prog(False, now, control)
            out = EState(s, FltlAnnotation(nxt, c), r, c is FF)
            self._cache[key] = out
        return out

    def _rprog(self, now: frozenset[str], spec: FltlRewardSpec, parent: EState | None):
        # the witness is only assembled when progression fails
        try:
            return rprog(now, spec)
        except ProgressionFailure as e:
            raise ProgressionFailure(e.formula, self._history(parent) + [now]) from None

    def _literal(self, s: int, spec: FltlRewardSpec, control: Formula | None,
                 parent: EState | None) -> EState:
        now = self.nmrdp.state_set(s)
        _, r = self._rprog(now, spec, parent)
        dead = control is not None and prog(False, now, control) is FF
        return EState(s, FltlAnnotation(spec, control), r, dead)

    def step(self, e: EState, s_next: int) -> EState:
        ann = e.annotation
        if self.one_step_ahead:
            out = self._advance(s_next, ann.spec, ann.control, e)
        else:
            now = self.nmrdp.state_set(e.state)
            nxt, _ = self._rprog(now, ann.spec, self._parent.get(e))
            c = None if ann.control is None else prog(False, now, ann.control)
            out = self._literal(s_next, nxt, c, e)
        return self._record(out, e)

    def heuristic(self, e: EState) -> float | None:
        return None


def fltl_translate(d: Nmrdp, spec: FltlRewardSpec | Sequence[RewardEntry] | None = None,
                   control: Formula | None = None, mode: str = "full",
                   one_step_ahead: bool = True, max_estates: int | None = None):
    """FLTL translation: an :class:`ExpandedMdp` in ``full`` mode, the
    on-demand :class:`FltlGenerator` in ``on-demand`` mode."""
    gen = FltlGenerator(d, spec, control, one_step_ahead)
    if mode == "on-demand":
        return gen
    if mode != "full":
        raise ValueError(f"unknown mode {mode!r}")
    return expand(gen, max_estates)
