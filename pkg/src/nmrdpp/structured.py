"""PLTLSTR: a factored MDP with temporal variables, solved SPUDD-style.

Each purely temporal subformula ``g`` of the reward formulae gets a boolean
*temporal variable* standing for ``prv g`` (or for ``g`` itself when ``g``
already starts with ``prv``).  Its next value is ``g`` evaluated now, where
``f1 snc f2`` unfolds to ``f2 or (f1 and prv (f1 snc f2))``.  The reward then
becomes a function of the current state and temporal variables, so ordinary
structured value iteration applies.

Variable order: state variable ``k`` sits at level ``2k`` and its next-step
copy at ``2k + 1``; temporal variables follow the state variables the same way.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

from .add import Add, AddManager, add_from_dtree
from .formula import (
    AND,
    ATOM,
    FALSE,
    NOT,
    OR,
    PRV,
    SNC,
    TRUE,
    Formula,
    FormulaError,
    Prv,
    simplify,
    subformulae,
    to_text,
)
from .mdp import Nmrdp, RewardEntry
from .solvers import SolverConfig


@dataclass(frozen=True)
class TemporalVariable:
    id: int
    definition: Formula  # always prv g

    @property
    def name(self) -> str:
        return f"t{self.id + 1}"

    @property
    def inner(self) -> Formula:
        return self.definition.args[0]


@dataclass
class StructuredMdp:
    nmrdp: Nmrdp
    mgr: AddManager
    temporal: list[TemporalVariable]
    cpts: list[dict[int, Add]]  # per action: variable index -> P(var true next)
    reward: Add
    reward_formulae: list[tuple[Formula, float]]
    compiled: dict[Formula, Add] = field(default_factory=dict)
    factors: dict[tuple[int, int], Add] = field(default_factory=dict)

    @property
    def n_state(self) -> int:
        return self.nmrdp.n_props

    @property
    def n_vars(self) -> int:
        return self.n_state + len(self.temporal)

    @property
    def var_names(self) -> list[str]:
        return list(self.nmrdp.props) + [t.name for t in self.temporal]

    @staticmethod
    def level(var: int) -> int:
        return 2 * var

    @staticmethod
    def primed(var: int) -> int:
        return 2 * var + 1

    @property
    def initial_bits(self) -> int:
        """Initial assignment over all variables; temporal variables start false."""
        return self.nmrdp.initial

    def assignment(self, bits: int):
        return lambda level: bool((bits >> (level // 2)) & 1)

    def step_temporal(self, bits: int) -> int:
        """Temporal-variable values for the next step given the current full assignment."""
        out = 0
        get = self.assignment(bits)
        for t in self.temporal:
            if self.compiled[t.inner].evaluate(get) > 0.5:
                out |= 1 << (self.n_state + t.id)
        return out

    def to_dot(self, which: str = "reward", action: int | None = None, var: int | None = None) -> str:
        if which == "reward":
            return self.reward.to_dot("reward")
        if action is None or var is None:
            raise ValueError("action and variable are required for dynamics diagrams")
        return self.cpts[action][var].to_dot(f"{self.nmrdp.actions[action].name}_{self.var_names[var]}")


def temporal_subformulae(fs: list[Formula]) -> list[Formula]:
    """Subformulae whose main operator is ``prv`` or ``snc``, children first."""
    out: list[Formula] = []
    seen: set[Formula] = set()
    for f in fs:
        for g in subformulae(f):
            if g.op in (PRV, SNC) and g not in seen:
                seen.add(g)
                out.append(g)
    return out


def temporal_variables(fs: list[Formula]) -> list[TemporalVariable]:
    defs: list[Formula] = []
    for g in temporal_subformulae(fs):
        d = g if g.op == PRV else Prv(g)
        if d not in defs:
            defs.append(d)
    return [TemporalVariable(i, d) for i, d in enumerate(defs)]


def pltlstr_translate(d: Nmrdp, spec: list[RewardEntry] | None = None,
                      node_limit: int | None = None) -> StructuredMdp:
    entries = list(d.rewards if spec is None else spec)
    formulae = []
    for r in entries:
        if r.formula.dialect not in ("pltl", "material"):
            raise FormulaError(f"reward {r.name} is not a PLTL formula")
        formulae.append((simplify(r.formula), r.reward))
    temporal = temporal_variables([f for f, _ in formulae])
    n = d.n_props
    names = {}
    for i, p in enumerate(d.props):
        names[2 * i] = p
        names[2 * i + 1] = p + "'"
    for t in temporal:
        names[2 * (n + t.id)] = t.name
        names[2 * (n + t.id) + 1] = t.name + "'"
    mgr = AddManager(node_limit)
    mgr.names.update(names)
    tvar = {t.definition: n + t.id for t in temporal}
    compiled: dict[Formula, Add] = {}

    def compile_(f: Formula) -> Add:
        out = compiled.get(f)
        if out is not None:
            return out
        op = f.op
        if op == TRUE:
            out = mgr.const(1.0)
        elif op == FALSE:
            out = mgr.const(0.0)
        elif op == ATOM:
            out = mgr.var(2 * d.index[f.name])
        elif op == NOT:
            out = 1.0 - compile_(f.args[0])
        elif op == AND:
            out = compile_(f.args[0]) * compile_(f.args[1])
        elif op == OR:
            out = compile_(f.args[0]).maximum(compile_(f.args[1]))
        elif op == PRV:
            out = mgr.var(2 * tvar[f])
        elif op == SNC:
            a, b = compile_(f.args[0]), compile_(f.args[1])
            out = b.maximum(a * mgr.var(2 * tvar[Prv(f)]))
        else:
            raise FormulaError(f"cannot compile {to_text(f)}")
        compiled[f] = out
        return out

    reward = mgr.const(0.0)
    for f, r in formulae:
        reward = reward + compile_(f) * r
    for t in temporal:
        compile_(t.inner)
    cpts = []
    for a in d.actions:
        table: dict[int, Add] = {}
        for v in range(n):
            tree = a.effects.get(v)
            if tree is None:
                table[v] = mgr.var(2 * v)
            else:
                table[v] = add_from_dtree(mgr, tree, lambda k: 2 * k)
        for t in temporal:
            table[n + t.id] = compiled[t.inner]
        cpts.append(table)
    return StructuredMdp(d, mgr, temporal, cpts, reward, formulae, compiled)


# -- reachability ----------------------------------------------------------------

def _cube(sm: StructuredMdp, bits: int, primed: bool = False) -> Add:
    mgr = sm.mgr
    out = mgr.const(1.0)
    for v in reversed(range(sm.n_vars)):
        lvl = 2 * v + (1 if primed else 0)
        lit = mgr.var(lvl) if (bits >> v) & 1 else mgr.nvar(lvl)
        out = lit * out
    return out


def transition_relations(sm: StructuredMdp) -> list[Add]:
    """Per action, the 0/1 relation between current and next assignments."""
    mgr = sm.mgr
    out = []
    for table in sm.cpts:
        rel = mgr.const(1.0)
        for v in reversed(range(sm.n_vars)):
            p = table[v]
            x1 = mgr.var(2 * v + 1)
            x0 = mgr.nvar(2 * v + 1)
            allowed = x1 * p.threshold(0.0) + x0 * (1.0 - p).threshold(0.0)
            rel = rel * allowed
        out.append(rel)
    return out


@dataclass
class Reachability:
    indicator: Add
    steps: int
    layers: list[Add]


def reachability(sm: StructuredMdp) -> Reachability:
    """Least fixpoint of the image computation from the initial assignment."""
    mgr = sm.mgr
    rels = transition_relations(sm)
    unprime = {2 * v + 1: 2 * v for v in range(sm.n_vars)}
    reach = _cube(sm, sm.initial_bits)
    layers = [reach]
    steps = 0
    while True:
        img = mgr.const(0.0)
        for rel in rels:
            prod = reach * rel
            for v in range(sm.n_vars):
                prod = prod.max_out(2 * v)
            img = img.maximum(prod)
        nxt = reach.maximum(img.rename(unprime))
        if nxt == reach:
            break
        reach = nxt
        steps += 1
        layers.append(reach)
    return Reachability(reach, steps, layers)


def reachability_restrict(sm: StructuredMdp) -> Add:
    return reachability(sm).indicator


# -- structured value iteration ---------------------------------------------------

@dataclass
class StructuredResult:
    value: Add
    policy: Add
    iterations: int
    wall_time: float
    converged: bool
    value_at_start: float
    max_nodes: int


def _transition_factor(sm: StructuredMdp, a: int, v: int) -> Add:
    """P(v' | current assignment, a) as a diagram over v' and current variables."""
    key = (a, v)
    out = sm.factors.get(key)
    if out is None:
        p = sm.cpts[a][v]
        x1 = sm.mgr.var(2 * v + 1)
        out = x1 * p + (1.0 - x1) * (1.0 - p)
        sm.factors[key] = out
    return out


def _expectation(sm: StructuredMdp, a: int, vprime: Add) -> Add:
    """Sum over next assignments of P(next | current, a) times V(next)."""
    q = vprime
    for v in sorted((l // 2 for l in q.support() if l % 2 == 1), reverse=True):
        q = (q * _transition_factor(sm, a, v)).sum_out(2 * v + 1)
    return q


def spudd_solve(sm: StructuredMdp, cfg: SolverConfig | None = None,
                reachable: Add | None = None) -> StructuredResult:
    """Structured value iteration over decision diagrams.

    Uses the same initialisation and stopping rule as the explicit solvers;
    with ``reachable`` every backup is masked to reachable assignments.
    """
    cfg = cfg or SolverConfig()
    t0 = time.perf_counter()
    mgr = sm.mgr
    prime = {2 * v: 2 * v + 1 for v in range(sm.n_vars)}
    R = sm.reward if reachable is None else sm.reward * reachable
    V = R if cfg.init == "reward" else mgr.const(0.0)
    th = cfg.threshold
    it = 0
    converged = False
    max_nodes = 0
    while it < cfg.max_iterations:
        vp = V.rename(prime)
        best = None
        for a in range(len(sm.cpts)):
            q = _expectation(sm, a, vp)
            best = q if best is None else best.maximum(q)
        Vn = R + best * cfg.beta
        if reachable is not None:
            Vn = Vn * reachable
        diff = (Vn - V).sup_norm()
        V = Vn
        it += 1
        max_nodes = max(max_nodes, V.size)
        if diff < th:
            converged = True
            break
        if mgr.cache_size > CACHE_LIMIT:
            mgr.clear_caches()
        if len(mgr) > COMPACT_AT:
            V, R, reachable = _compact(sm, V, R, reachable)
    policy = extract_policy(sm, V, cfg.beta, reachable)
    v0 = V.evaluate(sm.assignment(sm.initial_bits))
    return StructuredResult(V, policy, it, time.perf_counter() - t0, converged, v0, max_nodes)


COMPACT_AT = 200_000
CACHE_LIMIT = 1_000_000


def _compact(sm: StructuredMdp, *extra: Add | None):
    """Garbage-collect the manager, keeping the model and ``extra`` diagrams."""
    mgr = sm.mgr
    model = [sm.reward] + [p for table in sm.cpts for p in table.values()]
    model += list(sm.compiled.values())
    sm.factors.clear()
    live = [a for a in extra if a is not None]
    new = iter(mgr.collect([a.node for a in model + live]))
    sm.reward = Add(mgr, next(new))
    for table in sm.cpts:
        for v in table:
            table[v] = Add(mgr, next(new))
    for f in sm.compiled:
        sm.compiled[f] = Add(mgr, next(new))
    return tuple(None if a is None else Add(mgr, next(new)) for a in extra)


def extract_policy(sm: StructuredMdp, V: Add, beta: float, reachable: Add | None = None) -> Add:
    """Diagram mapping assignments to the lowest-index greedy action."""
    mgr = sm.mgr
    prime = {2 * v: 2 * v + 1 for v in range(sm.n_vars)}
    vp = V.rename(prime)
    best = None
    policy = mgr.const(0.0)
    for a in range(len(sm.cpts)):
        q = sm.reward + _expectation(sm, a, vp) * beta
        if best is None:
            best = q
            continue
        better = (q - best).threshold(1e-9)
        policy = better * float(a) + (1.0 - better) * policy
        best = best.maximum(q)
    if reachable is not None:
        policy = policy * reachable + (1.0 - reachable) * -1.0
    return policy
