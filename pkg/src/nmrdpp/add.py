"""Reduced ordered algebraic decision diagrams.

An :class:`AddManager` owns a unique table of nodes, so two diagrams denote the
same function exactly when they are the same node.  Node ids are plain ints;
:class:`Add` wraps an id with its manager for convenient arithmetic.

Variables are identified by their level: smaller levels sit nearer the root.
Terminals live at level :data:`TERMINAL`.
"""

from __future__ import annotations

import os
import threading
from collections.abc import Callable, Iterable, Mapping, Sequence
from dataclasses import dataclass

TERMINAL = 1 << 30
DEFAULT_NODE_LIMIT = 1 << 22


class NodeLimitError(MemoryError):
    """Raised when a manager would exceed its node budget."""


def _env_limit() -> int:
    raw = os.environ.get("NMRDPP_NODE_LIMIT")
    if raw is None or raw == "":
        return DEFAULT_NODE_LIMIT
    try:
        value = int(raw)
    except ValueError:
        raise ValueError(f"NMRDPP_NODE_LIMIT must be an integer, got {raw!r}") from None
    if value < 2:
        raise ValueError("NMRDPP_NODE_LIMIT must be at least 2")
    return value


_BINARY: dict[str, Callable[[float, float], float]] = {
    "+": lambda a, b: a + b,
    "-": lambda a, b: a - b,
    "*": lambda a, b: a * b,
    "max": max,
    "min": min,
}
_COMMUTATIVE = {"+", "*", "max", "min"}


class AddManager:
    """Unique table, operation caches and the node store.

    One manager should be confined to one thread; interning is guarded by a
    lock so that accidental sharing cannot corrupt the table.
    """

    def __init__(self, node_limit: int | None = None, var_names: Sequence[str] | None = None):
        self.node_limit = _env_limit() if node_limit is None else node_limit
        self.level: list[int] = []
        self.hi: list[int] = []
        self.lo: list[int] = []
        self.value: list[float] = []
        self._unique: dict[tuple[int, int, int], int] = {}
        self._terminals: dict[float, int] = {}
        self._cache: dict[tuple, int] = {}
        self._lock = threading.Lock()
        self.names: dict[int, str] = {}
        if var_names:
            self.names.update(enumerate(var_names))
        self.zero = self._terminal(0.0)
        self.one = self._terminal(1.0)

    # -- node construction --------------------------------------------------------

    def __len__(self) -> int:
        return len(self.level)

    def _new(self, level: int, hi: int, lo: int, value: float) -> int:
        if len(self.level) >= self.node_limit:
            raise NodeLimitError(f"decision diagram node limit {self.node_limit} exceeded")
        self.level.append(level)
        self.hi.append(hi)
        self.lo.append(lo)
        self.value.append(value)
        return len(self.level) - 1

    def _terminal(self, v: float) -> int:
        v = float(v) + 0.0  # folds -0.0 into 0.0
        node = self._terminals.get(v)
        if node is None:
            with self._lock:
                node = self._terminals.get(v)
                if node is None:
                    node = self._new(TERMINAL, -1, -1, v)
                    self._terminals[v] = node
        return node

    def mk(self, level: int, hi: int, lo: int) -> int:
        if hi == lo:
            return hi
        if not (level < self.level[hi] and level < self.level[lo]):
            raise ValueError("variable order violated")
        key = (level, hi, lo)
        node = self._unique.get(key)
        if node is None:
            with self._lock:
                node = self._unique.get(key)
                if node is None:
                    node = self._new(level, hi, lo, 0.0)
                    self._unique[key] = node
        return node

    def const(self, v: float) -> Add:
        return Add(self, self._terminal(v))

    def var(self, level: int) -> Add:
        """Indicator of variable ``level`` being true."""
        return Add(self, self.mk(level, self.one, self.zero))

    def nvar(self, level: int) -> Add:
        return Add(self, self.mk(level, self.zero, self.one))

    def wrap(self, node: int) -> Add:
        return Add(self, node)

    def clear_caches(self) -> None:
        self._cache.clear()

    @property
    def cache_size(self) -> int:
        return len(self._cache)

    def is_terminal(self, node: int) -> bool:
        return self.level[node] == TERMINAL

    # -- core algorithms on node ids ------------------------------------------------

    def apply(self, op: str, f: int, g: int) -> int:
        fn = _BINARY.get(op)
        if fn is None:
            raise ValueError(f"unknown operation {op!r}")
        return self._apply(op, fn, f, g)

    def _apply(self, op: str, fn, f: int, g: int) -> int:
        lf, lg = self.level[f], self.level[g]
        if lf == TERMINAL and lg == TERMINAL:
            return self._terminal(fn(self.value[f], self.value[g]))
        # cheap identities
        if op == "+":
            if f == self.zero:
                return g
            if g == self.zero:
                return f
        elif op == "*":
            if f == self.zero or g == self.zero:
                return self.zero
            if f == self.one:
                return g
            if g == self.one:
                return f
        elif op == "-":
            if g == self.zero:
                return f
            if f == g:
                return self.zero
        elif op in ("max", "min") and f == g:
            return f
        if op in _COMMUTATIVE and f > g:
            f, g = g, f
            lf, lg = lg, lf
        key = (op, f, g)
        out = self._cache.get(key)
        if out is not None:
            return out
        top = min(lf, lg)
        fh, fl = (self.hi[f], self.lo[f]) if lf == top else (f, f)
        gh, gl = (self.hi[g], self.lo[g]) if lg == top else (g, g)
        out = self.mk(top, self._apply(op, fn, fh, gh), self._apply(op, fn, fl, gl))
        self._cache[key] = out
        return out

    def map_terminals(self, f: int, fn: Callable[[float], float], tag: object = None) -> int:
        """Apply ``fn`` to every terminal.  ``tag`` names ``fn`` so results can
        be cached across calls; without it only this call's work is shared."""
        memo: dict[int, int] = {}
        cache = self._cache

        def go(n: int) -> int:
            key = ("map", tag, n)
            out = cache.get(key) if tag is not None else memo.get(n)
            if out is not None:
                return out
            if self.level[n] == TERMINAL:
                out = self._terminal(fn(self.value[n]))
            else:
                out = self.mk(self.level[n], go(self.hi[n]), go(self.lo[n]))
            if tag is not None:
                cache[key] = out
            else:
                memo[n] = out
            return out

        return go(f)

    def restrict(self, f: int, level: int, val: bool) -> int:
        lf = self.level[f]
        if lf > level:
            return f
        if lf == level:
            return self.hi[f] if val else self.lo[f]
        key = ("restrict", f, level, val)
        out = self._cache.get(key)
        if out is not None:
            return out
        out = self.mk(lf, self.restrict(self.hi[f], level, val),
                      self.restrict(self.lo[f], level, val))
        self._cache[key] = out
        return out

    def abstract(self, op: str, f: int, level: int) -> int:
        """Eliminate ``level`` by combining both cofactors with ``op``."""
        return self.apply(op, self.restrict(f, level, True), self.restrict(f, level, False))

    def rename(self, f: int, mapping: Mapping[int, int]) -> int:
        """Substitute variables by others.  Order-preserving renamings stay
        linear; others fall back to if-then-else through :meth:`ite`."""
        return self._rename(f, dict(mapping), tuple(sorted(mapping.items())))

    def _rename(self, f: int, mapping: dict[int, int], mkey: tuple) -> int:
        if self.level[f] == TERMINAL:
            return f
        key = ("rename", mkey, f)
        out = self._cache.get(key)
        if out is not None:
            return out
        lv = self.level[f]
        new = mapping.get(lv, lv)
        hi = self._rename(self.hi[f], mapping, mkey)
        lo = self._rename(self.lo[f], mapping, mkey)
        if new < self.level[hi] and new < self.level[lo]:
            out = self.mk(new, hi, lo)
        else:
            out = self.ite(new, hi, lo)
        self._cache[key] = out
        return out

    def ite(self, level: int, hi: int, lo: int) -> int:
        x = self.mk(level, self.one, self.zero)
        nx = self.mk(level, self.zero, self.one)
        return self.apply("+", self.apply("*", x, hi), self.apply("*", nx, lo))

    def evaluate(self, f: int, assignment: Callable[[int], bool] | Mapping[int, bool]) -> float:
        get = assignment.__getitem__ if isinstance(assignment, Mapping) else assignment
        while self.level[f] != TERMINAL:
            f = self.hi[f] if get(self.level[f]) else self.lo[f]
        return self.value[f]

    def support(self, f: int) -> set[int]:
        out: set[int] = set()
        seen: set[int] = set()
        stack = [f]
        while stack:
            n = stack.pop()
            if n in seen or self.level[n] == TERMINAL:
                continue
            seen.add(n)
            out.add(self.level[n])
            stack.append(self.hi[n])
            stack.append(self.lo[n])
        return out

    def nodes(self, f: int) -> list[int]:
        seen: dict[int, None] = {}
        stack = [f]
        while stack:
            n = stack.pop()
            if n in seen:
                continue
            seen[n] = None
            if self.level[n] != TERMINAL:
                stack.append(self.lo[n])
                stack.append(self.hi[n])
        return list(seen)

    def terminals(self, f: int) -> list[float]:
        return [self.value[n] for n in self.nodes(f) if self.level[n] == TERMINAL]

    def collect(self, roots: Sequence[int]) -> list[int]:
        """Drop every node not reachable from ``roots``; returns the roots' new ids.

        All other ids (and :class:`Add` wrappers) from this manager become invalid.
        """
        live: set[int] = {self.zero, self.one}
        for r in roots:
            live.update(self.nodes(r))
        order = sorted(live, key=lambda n: -self.level[n])  # terminals first
        level, hi, lo, value = self.level, self.hi, self.lo, self.value
        self.level, self.hi, self.lo, self.value = [], [], [], []
        self._unique.clear()
        self._terminals.clear()
        self._cache.clear()
        remap: dict[int, int] = {}
        for n in order:
            if level[n] == TERMINAL:
                remap[n] = self._terminal(value[n])
            else:
                remap[n] = self.mk(level[n], remap[hi[n]], remap[lo[n]])
        self.zero = self._terminal(0.0)
        self.one = self._terminal(1.0)
        return [remap[r] for r in roots]

    def to_dot(self, f: int, name: str = "add") -> str:
        lines = [f"digraph {name} {{"]
        for n in self.nodes(f):
            if self.level[n] == TERMINAL:
                lines.append(f'  n{n} [shape=box, label="{self.value[n]:.6g}"];')
            else:
                label = self.names.get(self.level[n], f"x{self.level[n]}")
                lines.append(f'  n{n} [shape=ellipse, label="{label}"];')
                lines.append(f"  n{n} -> n{self.hi[n]};")
                lines.append(f"  n{n} -> n{self.lo[n]} [style=dashed];")
        lines.append("}")
        return "\n".join(lines) + "\n"


@dataclass(frozen=True, eq=False)
class Add:
    """A diagram node together with its manager."""

    mgr: AddManager
    node: int

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Add) and other.mgr is self.mgr and other.node == self.node

    def __hash__(self) -> int:
        return hash((id(self.mgr), self.node))

    def _lift(self, other) -> int:
        if isinstance(other, Add):
            if other.mgr is not self.mgr:
                raise ValueError("diagrams from different managers")
            return other.node
        return self.mgr._terminal(float(other))

    def apply(self, op: str, other) -> Add:
        return Add(self.mgr, self.mgr.apply(op, self.node, self._lift(other)))

    def __add__(self, other) -> Add:
        return self.apply("+", other)

    __radd__ = __add__

    def __sub__(self, other) -> Add:
        return self.apply("-", other)

    def __rsub__(self, other) -> Add:
        return Add(self.mgr, self.mgr.apply("-", self._lift(other), self.node))

    def __mul__(self, other) -> Add:
        return self.apply("*", other)

    __rmul__ = __mul__

    def maximum(self, other) -> Add:
        return self.apply("max", other)

    def minimum(self, other) -> Add:
        return self.apply("min", other)

    def restrict(self, level: int, val: bool) -> Add:
        return Add(self.mgr, self.mgr.restrict(self.node, level, val))

    def sum_out(self, level: int) -> Add:
        return Add(self.mgr, self.mgr.abstract("+", self.node, level))

    def max_out(self, level: int) -> Add:
        return Add(self.mgr, self.mgr.abstract("max", self.node, level))

    def rename(self, mapping: Mapping[int, int]) -> Add:
        return Add(self.mgr, self.mgr.rename(self.node, mapping))

    def threshold(self, t: float = 0.0) -> Add:
        """1 where the value exceeds ``t``, else 0."""
        return Add(self.mgr, self.mgr.map_terminals(self.node, lambda v: 1.0 if v > t else 0.0,
                                                    ("gt", t)))

    def map_terminals(self, fn: Callable[[float], float], tag: object = None) -> Add:
        return Add(self.mgr, self.mgr.map_terminals(self.node, fn, tag))

    def evaluate(self, assignment) -> float:
        return self.mgr.evaluate(self.node, assignment)

    def support(self) -> set[int]:
        return self.mgr.support(self.node)

    def terminals(self) -> list[float]:
        return self.mgr.terminals(self.node)

    @property
    def size(self) -> int:
        return len(self.mgr.nodes(self.node))

    @property
    def is_constant(self) -> bool:
        return self.mgr.is_terminal(self.node)

    @property
    def constant_value(self) -> float:
        if not self.is_constant:
            raise ValueError("diagram is not constant")
        return self.mgr.value[self.node]

    def sup_norm(self) -> float:
        return max((abs(v) for v in self.terminals()), default=0.0)

    def to_dot(self, name: str = "add") -> str:
        return self.mgr.to_dot(self.node, name)


def add_apply(op: str, a: Add, b: Add) -> Add:
    return a.apply(op, b)


def add_restrict(a: Add, level: int, val: bool) -> Add:
    return a.restrict(level, val)


def add_threshold(a: Add, t: float = 0.0) -> Add:
    return a.threshold(t)


def add_from_dtree(mgr: AddManager, tree, level_of: Callable[[int], int]) -> Add:
    """Compile a :class:`~nmrdpp.mdp.DTree`; ``level_of`` maps propositions to levels."""
    if tree.var is None:
        return mgr.const(tree.prob)
    hi = add_from_dtree(mgr, tree.hi, level_of)
    lo = add_from_dtree(mgr, tree.lo, level_of)
    return Add(mgr, mgr.ite(level_of(tree.var), hi.node, lo.node))


def add_from_table(mgr: AddManager, levels: Sequence[int], table: Iterable[float]) -> Add:
    """Diagram of a full table indexed by the bits of ``levels`` (first level = bit 0)."""
    values = list(table)
    if len(values) != 1 << len(levels):
        raise ValueError("table size does not match the number of levels")
    order = sorted(range(len(levels)), key=lambda k: levels[k])

    def build(depth: int, fixed: int) -> int:
        if depth == len(order):
            return mgr._terminal(values[fixed])
        k = order[depth]
        hi = build(depth + 1, fixed | (1 << k))
        lo = build(depth + 1, fixed)
        return mgr.mk(levels[k], hi, lo)

    return Add(mgr, build(0, 0))
