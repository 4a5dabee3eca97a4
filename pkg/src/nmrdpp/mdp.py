"""NMRDPs, expanded MDPs, and the successor-generator protocol.

A state is an ``int`` bit mask over the domain's propositions (bit ``i`` set
means proposition ``i`` holds).  Temporal formulae are evaluated against the
set of true proposition names, which :meth:`Nmrdp.state_set` provides.

Translations into equivalent MDPs are written as *generators*: objects that
know the initial e-state and how to move an e-state's annotation forward
through a successor state.  :func:`expand` turns any generator into an
explicit :class:`ExpandedMdp`; the LAO* solver drives the same generators
on demand.
"""

from __future__ import annotations

import math
from collections import deque
from collections.abc import Hashable, Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from typing import Any

from .formula import FLTL, PLTL, Formula

PROB_TOL = 1e-9
DEFAULT_MAX_ESTATES = 1_000_000


class ResourceLimitError(RuntimeError):
    """Raised when a construction would exceed its configured size cap."""


class DomainError(ValueError):
    """Raised for ill-formed domains."""


# -- decision trees ----------------------------------------------------------

@dataclass(frozen=True)
class DTree:
    """Probability-of-true decision tree over current-state propositions.

    A leaf has ``var is None`` and carries ``prob``; an internal node tests
    proposition ``var`` and continues with ``hi`` (true) or ``lo`` (false).
    """

    var: int | None = None
    prob: float = 0.0
    hi: DTree | None = None
    lo: DTree | None = None

    @staticmethod
    def leaf(p: float) -> DTree:
        p = float(p)
        if not (0.0 <= p <= 1.0) or math.isnan(p):
            raise DomainError(f"probability {p} outside [0, 1]")
        return DTree(None, p)

    @staticmethod
    def test(var: int, hi: DTree, lo: DTree) -> DTree:
        return DTree(var, 0.0, hi, lo)

    @property
    def is_leaf(self) -> bool:
        return self.var is None

    def prob_true(self, state: int) -> float:
        t = self
        while t.var is not None:
            t = t.hi if (state >> t.var) & 1 else t.lo
        return t.prob

    def leaves(self) -> list[float]:
        if self.var is None:
            return [self.prob]
        return self.hi.leaves() + self.lo.leaves()

    def variables(self) -> set[int]:
        if self.var is None:
            return set()
        return {self.var} | self.hi.variables() | self.lo.variables()

    def render(self, props: Sequence[str]) -> str:
        if self.var is None:
            return f"({self.prob:g})"
        return f"({props[self.var]} {self.hi.render(props)} {self.lo.render(props)})"


@dataclass
class ActionSpec:
    name: str
    effects: dict[int, DTree] = field(default_factory=dict)


@dataclass(frozen=True)
class RewardEntry:
    name: str
    formula: Formula
    reward: float


# -- NMRDP -------------------------------------------------------------------

@dataclass
class Nmrdp:
    """A propositional MDP whose rewards are given by temporal formulae."""

    props: tuple[str, ...]
    actions: tuple[ActionSpec, ...]
    initial: int = 0
    rewards: tuple[RewardEntry, ...] = ()
    dialect: str = PLTL
    control: Formula | None = None
    name: str = "domain"

    def __post_init__(self) -> None:
        self.props = tuple(self.props)
        self.actions = tuple(self.actions)
        self.rewards = tuple(self.rewards)
        if len(set(self.props)) != len(self.props):
            raise DomainError("duplicate proposition names")
        if any(not p for p in self.props):
            raise DomainError("proposition names must be nonempty")
        if not self.actions:
            raise DomainError("a domain needs at least one action")
        if len({a.name for a in self.actions}) != len(self.actions):
            raise DomainError("duplicate action names")
        if self.dialect not in (PLTL, FLTL):
            raise DomainError(f"unknown dialect {self.dialect!r}")
        n = len(self.props)
        if not 0 <= self.initial < (1 << n) and not (n == 0 and self.initial == 0):
            raise DomainError("initial state does not fit the proposition set")
        for a in self.actions:
            for i, t in a.effects.items():
                if not 0 <= i < n or any(not 0 <= v < n for v in t.variables()):
                    raise DomainError(f"action {a.name} refers to an unknown proposition")
                if any(not 0.0 <= p <= 1.0 for p in t.leaves()):
                    raise DomainError(f"action {a.name} has a leaf outside [0, 1]")
        names = set()
        for r in self.rewards:
            if not math.isfinite(r.reward):
                raise DomainError(f"reward {r.name} is not finite")
            if r.name in names:
                raise DomainError(f"duplicate reward name {r.name}")
            names.add(r.name)
        self.index = {p: i for i, p in enumerate(self.props)}
        self._succ: dict[tuple[int, int], tuple[tuple[int, float], ...]] = {}
        self._sets: dict[int, frozenset[str]] = {}

    @property
    def n_props(self) -> int:
        return len(self.props)

    @property
    def action_names(self) -> list[str]:
        return [a.name for a in self.actions]

    def state_set(self, s: int) -> frozenset[str]:
        out = self._sets.get(s)
        if out is None:
            out = frozenset(p for i, p in enumerate(self.props) if (s >> i) & 1)
            self._sets[s] = out
        return out

    def state_of(self, true_props: Iterable[str]) -> int:
        s = 0
        for p in true_props:
            if p not in self.index:
                raise DomainError(f"unknown proposition {p!r}")
            s |= 1 << self.index[p]
        return s

    def show_state(self, s: int) -> str:
        return "{" + ", ".join(sorted(self.state_set(s))) + "}"

    def successors(self, s: int, a: int) -> tuple[tuple[int, float], ...]:
        """Distribution over next states, each effect independent."""
        key = (s, a)
        out = self._succ.get(key)
        if out is not None:
            return out
        dist = {s: 1.0}
        for i, tree in self.actions[a].effects.items():
            p = tree.prob_true(s)
            bit = 1 << i
            nxt: dict[int, float] = {}
            for t, q in dist.items():
                if p > 0.0:
                    u = t | bit
                    nxt[u] = nxt.get(u, 0.0) + q * p
                if p < 1.0:
                    u = t & ~bit
                    nxt[u] = nxt.get(u, 0.0) + q * (1.0 - p)
            dist = nxt
        out = tuple(sorted((t, q) for t, q in dist.items() if q > 0.0))
        self._succ[key] = out
        return out

    def reachable_states(self, max_states: int | None = None) -> list[int]:
        """States reachable from the initial state, in BFS order."""
        seen = {self.initial: None}
        queue = deque([self.initial])
        while queue:
            s = queue.popleft()
            for a in range(len(self.actions)):
                for t, _ in self.successors(s, a):
                    if t not in seen:
                        seen[t] = None
                        if max_states is not None and len(seen) > max_states:
                            raise ResourceLimitError(f"more than {max_states} reachable states")
                        queue.append(t)
        return list(seen)

    def with_rewards(self, rewards: Iterable[RewardEntry], dialect: str,
                     control: Formula | None = None) -> Nmrdp:
        """Same dynamics, different reward specification."""
        return Nmrdp(self.props, self.actions, self.initial, tuple(rewards), dialect,
                     control, self.name)

    @property
    def reward_sum(self) -> float:
        return sum(abs(r.reward) for r in self.rewards)


# -- e-states and expanded MDPs ----------------------------------------------

@dataclass(frozen=True)
class EState:
    """An NMRDP state paired with a history annotation.

    ``reward`` is the immediate reward of the e-state.  ``dead`` marks e-states
    that search control has ruled out; they have no applicable actions.
    """

    state: int
    annotation: Hashable
    reward: float = 0.0
    dead: bool = False


class Generator:
    """Base class for on-demand e-state construction.

    Subclasses implement :meth:`initial` and :meth:`step`; :meth:`step` moves
    an e-state's annotation through an arbitrary next state, whether or not the
    transition is feasible (the minimality audits need the infeasible ones).
    """

    method = "generic"

    def __init__(self, nmrdp: Nmrdp):
        self.nmrdp = nmrdp
        self._succ: dict[tuple[EState, int], tuple[tuple[EState, float], ...]] = {}

    def initial(self) -> EState:
        raise NotImplementedError

    def step(self, e: EState, s_next: int) -> EState:
        raise NotImplementedError

    def actions(self, e: EState) -> tuple[int, ...]:
        if e.dead:
            return ()
        return tuple(range(len(self.nmrdp.actions)))

    def successors(self, e: EState, a: int) -> tuple[tuple[EState, float], ...]:
        key = (e, a)
        out = self._succ.get(key)
        if out is None:
            out = tuple((self.step(e, t), p) for t, p in self.nmrdp.successors(e.state, a))
            self._succ[key] = out
        return out

    def describe(self, e: EState) -> str:
        return str(e.annotation)

    def heuristic(self, e: EState) -> float | None:
        return None


Transition = tuple[tuple[int, float], ...]


@dataclass
class ExpandedMdp:
    """An explicit equivalent MDP; ``transitions[e][a]`` is ``None`` when ``a``
    is inapplicable at e-state ``e``."""

    nmrdp: Nmrdp
    estates: list[EState]
    transitions: list[list[Transition | None]]
    initial: int = 0
    method: str = ""
    generator: Generator | None = None
    _mats: Any = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return len(self.estates)

    @property
    def action_names(self) -> list[str]:
        return self.nmrdp.action_names

    def tau(self, i: int) -> int:
        return self.estates[i].state

    def rewards(self) -> list[float]:
        return [e.reward for e in self.estates]

    def applicable(self, i: int) -> list[int]:
        return [a for a, t in enumerate(self.transitions[i]) if t is not None]

    def describe(self, i: int) -> str:
        e = self.estates[i]
        if self.generator is not None:
            return self.generator.describe(e)
        return str(e.annotation)

    def validate(self) -> list[str]:
        """Structural problems: bad distributions and unreachable e-states."""
        problems = []
        for i, row in enumerate(self.transitions):
            for a, dist in enumerate(row):
                if dist is None:
                    continue
                total = sum(p for _, p in dist)
                if abs(total - 1.0) > PROB_TOL:
                    problems.append(f"e-state {i} action {a}: probabilities sum to {total}")
                if any(not 0 <= j < self.n for j, _ in dist):
                    problems.append(f"e-state {i} action {a}: bad target index")
        seen = {self.initial}
        stack = [self.initial]
        while stack:
            i = stack.pop()
            for dist in self.transitions[i]:
                for j, p in dist or ():
                    if p > 0 and j not in seen:
                        seen.add(j)
                        stack.append(j)
        for i in range(self.n):
            if i not in seen:
                problems.append(f"e-state {i} is unreachable")
        return problems

    def matrices(self):
        """Per-action sparse transition matrices and applicability masks."""
        if self._mats is None:
            import numpy as np
            from scipy import sparse

            n = self.n
            mats = []
            masks = []
            for a in range(len(self.nmrdp.actions)):
                rows, cols, vals = [], [], []
                mask = np.zeros(n, dtype=bool)
                for i in range(n):
                    dist = self.transitions[i][a]
                    if dist is None:
                        continue
                    mask[i] = True
                    for j, p in dist:
                        rows.append(i)
                        cols.append(j)
                        vals.append(p)
                mats.append(sparse.csr_matrix((vals, (rows, cols)), shape=(n, n)))
                masks.append(mask)
            self._mats = (mats, masks)
        return self._mats

    def to_dot(self, policy: Mapping[int, int] | Sequence[int | None] | None = None,
               values: Sequence[float] | None = None, policy_only: bool = False) -> str:
        """DOT rendering; nodes read ``state | annotation | reward``."""
        names = self.action_names
        lines = ["digraph mdp {", "  rankdir=LR;", "  node [shape=record];"]
        if self.n == 0:
            lines.append('  empty [label="(empty)"];')
        for i, e in enumerate(self.estates):
            label = f"{self.nmrdp.show_state(e.state)} | {self.describe(i)} | {e.reward:g}"
            if values is not None:
                label += f" | V={values[i]:.6g}"
            label = label.replace('"', '\\"').replace("{", "\\{").replace("}", "\\}")
            extra = ", peripheries=2" if i == self.initial else ""
            lines.append(f'  e{i} [label="{label}"{extra}];')
        for i in range(self.n):
            chosen = None
            if policy is not None:
                chosen = policy.get(i) if isinstance(policy, Mapping) else policy[i]
            for a, dist in enumerate(self.transitions[i]):
                if dist is None:
                    continue
                if policy_only and a != chosen:
                    continue
                style = ", style=bold" if chosen == a and not policy_only else ""
                for j, p in dist:
                    lines.append(f'  e{i} -> e{j} [label="{names[a]} : {p:g}"{style}];')
        lines.append("}")
        return "\n".join(lines) + "\n"


def expand(gen: Generator, max_estates: int | None = None) -> ExpandedMdp:
    """Breadth-first closure of a generator from its initial e-state."""
    cap = DEFAULT_MAX_ESTATES if max_estates is None else max_estates
    e0 = gen.initial()
    index = {e0: 0}
    estates = [e0]
    transitions: list[list[Transition | None]] = []
    n_actions = len(gen.nmrdp.actions)
    i = 0
    while i < len(estates):
        e = estates[i]
        row: list[Transition | None] = [None] * n_actions
        for a in gen.actions(e):
            dist = []
            for f, p in gen.successors(e, a):
                j = index.get(f)
                if j is None:
                    j = len(estates)
                    if j >= cap:
                        raise ResourceLimitError(f"more than {cap} e-states")
                    index[f] = j
                    estates.append(f)
                dist.append((j, p))
            row[a] = tuple(dist)
        transitions.append(row)
        i += 1
    return ExpandedMdp(gen.nmrdp, estates, transitions, 0, gen.method, gen)


def count_estates(gen: Generator, max_estates: int | None = None) -> int:
    """Number of reachable e-states, without storing transitions.

    Cheaper than :func:`expand` when many actions share successor states.
    """
    cap = DEFAULT_MAX_ESTATES if max_estates is None else max_estates
    d = gen.nmrdp
    e0 = gen.initial()
    seen = {e0}
    queue = deque([e0])
    nexts: dict[int, list[int]] = {}
    while queue:
        e = queue.popleft()
        acts = gen.actions(e)
        if not acts:
            continue
        key = e.state if len(acts) == len(d.actions) else None
        succ = nexts.get(key) if key is not None else None
        if succ is None:
            succ = sorted({t for a in acts for t, _ in d.successors(e.state, a)})
            if key is not None:
                nexts[key] = succ
        for t in succ:
            f = gen.step(e, t)
            if f not in seen:
                if len(seen) >= cap:
                    raise ResourceLimitError(f"more than {cap} e-states")
                seen.add(f)
                queue.append(f)
    return len(seen)
