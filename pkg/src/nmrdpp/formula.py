"""Temporal formulae shared by the PLTL and $FLTL reward languages.

Formulae are immutable, hash-consed nodes: two structurally equal formulae are
always the same Python object, so ``is``/``==`` comparisons and hashing are
O(1).  The two dialects share one node type and are told apart by the
operators they contain:

* PLTL uses ``not``, ``prv`` (previously) and ``snc`` (since);
* $FLTL is in negation normal form and uses ``natom`` (negated atom),
  ``dollar``, ``nxt`` and weak ``until``.

Formulae built only from atoms, constants, ``and`` and ``or`` are *material*
and belong to both dialects.

Surface syntax (whitespace-insensitive)::

    formula := binExpr
    binExpr := orExpr [ ("snc" | "until" | "->") orExpr ]
    orExpr  := andExpr { "or" andExpr }
    andExpr := unary { "and" unary }
    unary   := "~" unary | "prv" ["^" int] unary | "nxt" ["^" int] unary
             | "pdi" unary | "pbx" unary | "alw" unary | atomic
    atomic  := ident | "tt" | "ff" | "$" | "(" binExpr ")"
"""

from __future__ import annotations

import re
import threading
from collections.abc import Collection, Iterable, Sequence

PLTL = "pltl"
FLTL = "fltl"

ATOM = "atom"
NATOM = "natom"
TRUE = "true"
FALSE = "false"
DOLLAR = "dollar"
AND = "and"
OR = "or"
NOT = "not"
PRV = "prv"
SNC = "snc"
NXT = "nxt"
UNTIL = "until"

_PAST_OPS = frozenset({NOT, PRV, SNC})
_FUTURE_OPS = frozenset({NATOM, DOLLAR, NXT, UNTIL})
_TEMPORAL_OPS = frozenset({PRV, SNC, NXT, UNTIL})
_CONSTANTS = frozenset({TRUE, FALSE})


class FormulaError(ValueError):
    """Raised for formulae that are ill-formed for the requested operation."""


class FormulaSyntaxError(FormulaError):
    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"{message} (line {line}, column {column})")
        self.line = line
        self.column = column


class Formula:
    """A hash-consed formula node.  Build through the module-level constructors."""

    __slots__ = ("_flags", "_key", "_size", "args", "name", "op", "uid")

    op: str
    name: str | None
    args: tuple[Formula, ...]

    def __init__(self, *_):
        raise TypeError("use the constructor functions in nmrdpp.formula")

    def __hash__(self) -> int:
        return self.uid

    def __eq__(self, other: object) -> bool:
        return self is other

    def __reduce__(self):
        return (parse_formula, (to_text(self), self.dialect if self.dialect != "material" else PLTL))

    def __repr__(self) -> str:
        return f"Formula({to_text(self)!r})"

    def __str__(self) -> str:
        return to_text(self)

    @property
    def key(self) -> tuple[str, str]:
        """Canonical, run-independent ordering key."""
        if self._key is None:
            self._key = (to_text(self), self.op)
        return self._key

    @property
    def size(self) -> int:
        """Length of the formula as a tree (number of operator and leaf nodes)."""
        if self._size is None:
            self._size = 1 + sum(a.size for a in self.args)
        return self._size

    @property
    def dialect(self) -> str:
        """``"pltl"``, ``"fltl"``, ``"material"`` or ``"mixed"``."""
        past = bool(self._flags & 1)
        future = bool(self._flags & 2)
        if past and future:
            return "mixed"
        if past:
            return PLTL
        if future:
            return FLTL
        return "material"

    @property
    def is_material(self) -> bool:
        return not (self._flags & 4) and self.op != DOLLAR and not self._has_dollar()

    @property
    def has_dollar(self) -> bool:
        return self._has_dollar()

    def _has_dollar(self) -> bool:
        return bool(self._flags & 8)

    @property
    def is_constant(self) -> bool:
        return self.op in _CONSTANTS


_table: dict[tuple, Formula] = {}
_lock = threading.Lock()


def _intern(op: str, args: tuple[Formula, ...] = (), name: str | None = None) -> Formula:
    k = (op, name, tuple(a.uid for a in args))
    node = _table.get(k)
    if node is not None:
        return node
    with _lock:
        node = _table.get(k)
        if node is None:
            node = object.__new__(Formula)
            node.op = op
            node.name = name
            node.args = args
            node.uid = len(_table)
            node._key = None
            node._size = None
            flags = 0
            if op in _PAST_OPS:
                flags |= 1
            if op in _FUTURE_OPS:
                flags |= 2
            if op in _TEMPORAL_OPS:
                flags |= 4
            if op == DOLLAR:
                flags |= 8
            for a in args:
                flags |= a._flags
            node._flags = flags
            _table[k] = node
    return node


# -- raw constructors (no simplification) ------------------------------------

def atom(name: str) -> Formula:
    if not name:
        raise FormulaError("proposition names must be nonempty")
    return _intern(ATOM, name=name)


def natom(name: str) -> Formula:
    if not name:
        raise FormulaError("proposition names must be nonempty")
    return _intern(NATOM, name=name)


TT = _intern(TRUE)
FF = _intern(FALSE)
DOLLAR_F = _intern(DOLLAR)


def And(a: Formula, b: Formula) -> Formula:
    return _intern(AND, (a, b))


def Or(a: Formula, b: Formula) -> Formula:
    return _intern(OR, (a, b))


def Not(a: Formula) -> Formula:
    return _intern(NOT, (a,))


def Prv(a: Formula, k: int = 1) -> Formula:
    for _ in range(k):
        a = _intern(PRV, (a,))
    return a


def Snc(a: Formula, b: Formula) -> Formula:
    return _intern(SNC, (a, b))


def Nxt(a: Formula, k: int = 1) -> Formula:
    for _ in range(k):
        a = _intern(NXT, (a,))
    return a


def Until(a: Formula, b: Formula) -> Formula:
    return _intern(UNTIL, (a, b))


def pdi(f: Formula) -> Formula:
    """Past diamond: ``f`` held at some point so far."""
    return Snc(TT, f)


def pbx(f: Formula) -> Formula:
    """Past box: ``f`` held at every point so far."""
    return Not(Snc(TT, Not(f)))


def alw(f: Formula) -> Formula:
    """Always (weak until false)."""
    return Until(f, FF)


def conj_all(fs: Iterable[Formula], raw: bool = False) -> Formula:
    out = None
    for f in fs:
        out = f if out is None else (And(out, f) if raw else conj(out, f))
    return TT if out is None else out


def disj_all(fs: Iterable[Formula], raw: bool = False) -> Formula:
    out = None
    for f in fs:
        out = f if out is None else (Or(out, f) if raw else disj(out, f))
    return FF if out is None else out


def negate_nnf(f: Formula) -> Formula:
    """Negation pushed to the literals, as required by $FLTL.

    Weak until and ``$`` have no negation in $FLTL, so they are rejected.
    """
    op = f.op
    if op == ATOM:
        return natom(f.name)
    if op == NATOM:
        return atom(f.name)
    if op == TRUE:
        return FF
    if op == FALSE:
        return TT
    if op == AND:
        return Or(negate_nnf(f.args[0]), negate_nnf(f.args[1]))
    if op == OR:
        return And(negate_nnf(f.args[0]), negate_nnf(f.args[1]))
    if op == NXT:
        return Nxt(negate_nnf(f.args[0]))
    if op == NOT:
        return to_nnf(f.args[0])
    if op == DOLLAR:
        raise FormulaError("$ cannot be negated")
    raise FormulaError(f"no negation normal form for the negation of {to_text(f)}")


def to_nnf(f: Formula) -> Formula:
    """Remove ``not`` nodes from a future (or material) formula."""
    op = f.op
    if op == NOT:
        return negate_nnf(f.args[0])
    if not f.args:
        return f
    if f.dialect in (PLTL, "mixed") and op in (PRV, SNC):
        raise FormulaError("past operators have no $FLTL counterpart")
    return _intern(op, tuple(to_nnf(a) for a in f.args), f.name)


def implies(a: Formula, b: Formula, dialect: str = FLTL) -> Formula:
    if dialect == FLTL:
        return Or(negate_nnf(a), b)
    return Or(Not(a), b)


# -- smart constructors (simplifying) ----------------------------------------

def _chain(op: str, f: Formula, out: list[Formula]) -> None:
    if f.op == op:
        _chain(op, f.args[0], out)
        _chain(op, f.args[1], out)
    else:
        out.append(f)


def _complement(f: Formula) -> Formula | None:
    if f.op == ATOM:
        return natom(f.name)
    if f.op == NATOM:
        return atom(f.name)
    if f.op == NOT:
        return f.args[0]
    return None


def _assoc(op: str, a: Formula, b: Formula) -> Formula:
    absorbing, unit = (FF, TT) if op == AND else (TT, FF)
    items: list[Formula] = []
    _chain(op, a, items)
    _chain(op, b, items)
    seen = set()
    uniq = []
    for f in items:
        if f is absorbing:
            return absorbing
        if f is unit or f in seen:
            continue
        seen.add(f)
        uniq.append(f)
    for f in uniq:
        c = _complement(f)
        if c is not None and c in seen:
            return absorbing
    if not uniq:
        return unit
    uniq.sort(key=lambda g: g.key)
    out = uniq[0]
    for f in uniq[1:]:
        out = _intern(op, (out, f))
    return out


def conj(a: Formula, b: Formula) -> Formula:
    if a is FF or b is FF:
        return FF
    if a is TT:
        return b
    if b is TT:
        return a
    if a is b:
        return a
    return _assoc(AND, a, b)


def disj(a: Formula, b: Formula) -> Formula:
    if a is TT or b is TT:
        return TT
    if a is FF:
        return b
    if b is FF:
        return a
    if a is b:
        return a
    return _assoc(OR, a, b)


def neg(a: Formula) -> Formula:
    """PLTL negation with double-negation and constant folding."""
    if a is TT:
        return FF
    if a is FF:
        return TT
    if a.op == NOT:
        return a.args[0]
    return Not(a)


def prv(a: Formula) -> Formula:
    if a is FF:
        return FF
    return Prv(a)


def since(a: Formula, b: Formula) -> Formula:
    if b is FF:
        return FF
    if b is TT:
        return TT
    if a is FF:
        return b
    return Snc(a, b)


def nxt(a: Formula) -> Formula:
    if a is TT or a is FF:
        return a
    return Nxt(a)


def until(a: Formula, b: Formula) -> Formula:
    if b is TT or a is TT:
        return TT
    if a is FF:
        return b
    return Until(a, b)


_SMART = {
    AND: conj,
    OR: disj,
    NOT: neg,
    PRV: prv,
    SNC: since,
    NXT: nxt,
    UNTIL: until,
}

_simplified: dict[Formula, Formula] = {}


def _simplify_once(f: Formula) -> Formula:
    done = _simplified.get(f)
    if done is not None:
        return done
    if not f.args:
        out = f
    else:
        out = _SMART[f.op](*(_simplify_once(a) for a in f.args))
    _simplified[f] = out
    return out


def simplify(f: Formula) -> Formula:
    """Syntactic simplification to a fixpoint.

    Constant folding, idempotence, complementary literals, flattening and
    canonical operand order for ``and``/``or``, plus the obvious constant
    cases of the temporal operators.  The result is logically equivalent.
    """
    while True:
        g = _simplify_once(f)
        if g is f:
            return g
        f = g


# -- printing ------------------------------------------------------------------

_PREC = {SNC: 0, UNTIL: 0, OR: 1, AND: 2}


def _prec(f: Formula) -> int:
    if f.op == UNTIL and f.args[1] is FF:
        return 3
    return _PREC.get(f.op, 3)


def _fmt(f: Formula, ctx: int) -> str:
    op = f.op
    if op == ATOM:
        s = f.name
    elif op == NATOM:
        s = "~" + f.name
    elif op == TRUE:
        s = "tt"
    elif op == FALSE:
        s = "ff"
    elif op == DOLLAR:
        s = "$"
    elif op == NOT:
        s = "~" + _fmt(f.args[0], 3)
    elif op in (PRV, NXT):
        k = 0
        g = f
        while g.op == op:
            k += 1
            g = g.args[0]
        s = op + (f"^{k} " if k > 1 else " ") + _fmt(g, 3)
    elif op == AND:
        s = _fmt(f.args[0], 2) + " and " + _fmt(f.args[1], 3)
    elif op == OR:
        s = _fmt(f.args[0], 1) + " or " + _fmt(f.args[1], 2)
    elif op == SNC:
        if f.args[0] is TT:
            s = "pdi " + _fmt(f.args[1], 3)
            return s
        s = _fmt(f.args[0], 3) + " snc " + _fmt(f.args[1], 3)
    elif op == UNTIL:
        if f.args[1] is FF:
            return "alw " + _fmt(f.args[0], 3)
        s = _fmt(f.args[0], 3) + " until " + _fmt(f.args[1], 3)
    else:  # pragma: no cover
        raise FormulaError(f"unknown operator {op}")
    if _prec(f) < ctx:
        return "(" + s + ")"
    return s


def to_text(f: Formula) -> str:
    return _fmt(f, 0)


print_formula = to_text


# -- parsing -------------------------------------------------------------------

_KEYWORDS = {"prv", "pdi", "pbx", "snc", "nxt", "until", "alw", "and", "or", "tt", "ff"}
_TOKEN = re.compile(
    r"\s*(?:(?P<num>\d+)|(?P<id>[A-Za-z_][A-Za-z0-9_]*)|(?P<sym>->|[()~$^]))"
)


class _Parser:
    def __init__(self, text: str, dialect: str):
        if dialect not in (PLTL, FLTL):
            raise FormulaError(f"unknown dialect {dialect!r}")
        self.text = text
        self.dialect = dialect
        self.tokens: list[tuple[str, str, int]] = []
        pos = 0
        while True:
            m = _TOKEN.match(text, pos)
            if m is None:
                rest = text[pos:]
                if rest.strip():
                    off = pos + len(rest) - len(rest.lstrip())
                    self._fail(f"unexpected character {text[off]!r}", off)
                break
            group = m.lastgroup
            val = m.group(group)
            kind = "kw" if group == "id" and val in _KEYWORDS else group
            self.tokens.append((kind, val, m.start(group)))
            pos = m.end()
        self.i = 0

    def _fail(self, msg: str, offset: int | None = None):
        if offset is None:
            offset = self.tokens[self.i][2] if self.i < len(self.tokens) else len(self.text)
        line = self.text.count("\n", 0, offset) + 1
        col = offset - (self.text.rfind("\n", 0, offset) + 1) + 1
        raise FormulaSyntaxError(msg, line, col)

    def peek(self) -> tuple[str, str, int] | None:
        return self.tokens[self.i] if self.i < len(self.tokens) else None

    def accept(self, val: str) -> bool:
        t = self.peek()
        if t is not None and t[1] == val and t[0] in ("kw", "sym"):
            self.i += 1
            return True
        return False

    def expect(self, val: str) -> None:
        if not self.accept(val):
            t = self.peek()
            self._fail(f"expected {val!r}" + (f" but found {t[1]!r}" if t else " at end of input"))

    def need(self, dialect: str, what: str, offset: int) -> None:
        if self.dialect != dialect:
            self._fail(f"{what} is not allowed in {self.dialect.upper()} formulae", offset)

    def parse(self) -> Formula:
        f = self.bin_expr()
        if self.peek() is not None:
            self._fail(f"unexpected {self.peek()[1]!r}")
        return f

    def bin_expr(self) -> Formula:
        left = self.or_expr()
        t = self.peek()
        if t is not None and t[1] in ("snc", "until", "->") and t[0] in ("kw", "sym"):
            self.i += 1
            right = self.or_expr()
            if t[1] == "snc":
                self.need(PLTL, "snc", t[2])
                return Snc(left, right)
            if t[1] == "until":
                self.need(FLTL, "until", t[2])
                return Until(left, right)
            try:
                return implies(left, right, self.dialect)
            except FormulaError as e:
                self._fail(str(e), t[2])
        return left

    def or_expr(self) -> Formula:
        f = self.and_expr()
        while self.accept("or"):
            f = Or(f, self.and_expr())
        return f

    def and_expr(self) -> Formula:
        f = self.unary()
        while self.accept("and"):
            f = And(f, self.unary())
        return f

    def power(self) -> int:
        if self.accept("^"):
            t = self.peek()
            if t is None or t[0] != "num":
                self._fail("expected an integer exponent")
            self.i += 1
            k = int(t[1])
            if k < 1:
                self._fail("exponent must be at least 1", t[2])
            return k
        return 1

    def unary(self) -> Formula:
        t = self.peek()
        if t is None:
            self._fail("unexpected end of input")
        kind, val, off = t
        if kind == "sym" and val == "~":
            self.i += 1
            sub = self.unary()
            if self.dialect == PLTL:
                return Not(sub)
            try:
                return negate_nnf(sub)
            except FormulaError as e:
                self._fail(str(e), off)
        if kind == "kw":
            if val == "prv":
                self.i += 1
                self.need(PLTL, "prv", off)
                k = self.power()
                return Prv(self.unary(), k)
            if val == "nxt":
                self.i += 1
                self.need(FLTL, "nxt", off)
                k = self.power()
                return Nxt(self.unary(), k)
            if val == "pdi":
                self.i += 1
                self.need(PLTL, "pdi", off)
                return pdi(self.unary())
            if val == "pbx":
                self.i += 1
                self.need(PLTL, "pbx", off)
                return pbx(self.unary())
            if val == "alw":
                self.i += 1
                self.need(FLTL, "alw", off)
                return alw(self.unary())
        return self.atomic()

    def atomic(self) -> Formula:
        t = self.peek()
        if t is None:
            self._fail("unexpected end of input")
        kind, val, off = t
        self.i += 1
        if kind == "id":
            return atom(val)
        if kind == "kw" and val == "tt":
            return TT
        if kind == "kw" and val == "ff":
            return FF
        if kind == "sym" and val == "$":
            self.need(FLTL, "$", off)
            return DOLLAR_F
        if kind == "sym" and val == "(":
            f = self.bin_expr()
            self.expect(")")
            return f
        self.i -= 1
        self._fail(f"unexpected {val!r}")


def parse_formula(text: str, dialect: str = PLTL) -> Formula:
    """Parse ``text`` in the given dialect (``"pltl"`` or ``"fltl"``)."""
    return _Parser(text, dialect.lower()).parse()


# -- PLTL semantics ------------------------------------------------------------

def holds(f: Formula, state: Collection[str]) -> bool:
    """Truth of a material formula in a single state."""
    op = f.op
    if op == ATOM:
        return f.name in state
    if op == NATOM:
        return f.name not in state
    if op == TRUE:
        return True
    if op == FALSE:
        return False
    if op == AND:
        return holds(f.args[0], state) and holds(f.args[1], state)
    if op == OR:
        return holds(f.args[0], state) or holds(f.args[1], state)
    if op == NOT:
        return not holds(f.args[0], state)
    raise FormulaError(f"{to_text(f)} is not material")


def eval_pltl(prefix: Sequence[Collection[str]], i: int, f: Formula) -> bool:
    """Whether the prefix ``prefix[0..i]`` is a model of the PLTL formula ``f``."""
    if not 0 <= i < len(prefix):
        raise IndexError(f"index {i} outside a prefix of length {len(prefix)}")
    memo: dict[tuple[int, int], bool] = {}

    def ev(g: Formula, j: int) -> bool:
        k = (g.uid, j)
        r = memo.get(k)
        if r is not None:
            return r
        op = g.op
        if op == ATOM:
            r = g.name in prefix[j]
        elif op == NATOM:
            r = g.name not in prefix[j]
        elif op == TRUE:
            r = True
        elif op == FALSE:
            r = False
        elif op == NOT:
            r = not ev(g.args[0], j)
        elif op == AND:
            r = ev(g.args[0], j) and ev(g.args[1], j)
        elif op == OR:
            r = ev(g.args[0], j) or ev(g.args[1], j)
        elif op == PRV:
            r = j > 0 and ev(g.args[0], j - 1)
        elif op == SNC:
            # f1 S f2 at j iff f2 at j, or f1 at j and f1 S f2 at j-1
            r = False
            for m in range(j, -1, -1):
                if ev(g.args[1], m):
                    r = True
                    break
                if not ev(g.args[0], m):
                    break
        else:
            raise FormulaError(f"{op} is not a PLTL operator")
        memo[k] = r
        return r

    return ev(f, i)


def subformulae(f: Formula) -> list[Formula]:
    """All distinct subformulae of ``f``, children before parents."""
    out: list[Formula] = []
    seen: set[Formula] = set()

    def walk(g: Formula) -> None:
        if g in seen:
            return
        for a in g.args:
            walk(a)
        seen.add(g)
        out.append(g)

    walk(f)
    return out


def sub_closure(fs: Iterable[Formula]) -> frozenset[Formula]:
    """Subformulae of every formula in ``fs`` and their single negations.

    Constants are left out; they need no tracking.
    """
    out: set[Formula] = set()
    for f in fs:
        for g in subformulae(f):
            if g.is_constant:
                continue
            out.add(g)
            out.add(neg(g))
    return frozenset(out)


def atoms(f: Formula) -> set[str]:
    return {g.name for g in subformulae(f) if g.op in (ATOM, NATOM)}


def dag_size(f: Formula) -> int:
    """Number of distinct nodes (the size of the shared representation)."""
    return len(subformulae(f))
