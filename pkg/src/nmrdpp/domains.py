"""World files and benchmark domain generators.

World file format (whitespace-insensitive, ``#`` starts a comment)::

    dialect pltl                  # or fltl; applies to every reward line
    action flip
      heads (0.5)                 # one line per affected proposition
    endaction
    heads = ff                    # initial value (unassigned means false)
    [first, 5.0]? heads and ~prv (pdi heads)
    control? alw (p -> nxt q)     # optional, fltl only

A decision tree is ``(<prob>)`` or ``(<prop> <tree-if-true> <tree-if-false>)``.
"""

from __future__ import annotations

import math
import random
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .formula import (
    DOLLAR_F,
    FLTL,
    PLTL,
    And,
    Formula,
    FormulaError,
    Not,
    Nxt,
    Or,
    Prv,
    Snc,
    Until,
    alw,
    atom,
    atoms,
    conj_all,
    disj_all,
    implies,
    natom,
    negate_nnf,
    parse_formula,
    pbx,
)
from .mdp import ActionSpec, DomainError, DTree, Nmrdp, RewardEntry


class WorldSyntaxError(DomainError):
    def __init__(self, message: str, line: int, column: int = 1):
        super().__init__(f"{message} (line {line}, column {column})")
        self.line = line
        self.column = column


_TREE_TOKEN = re.compile(r"\s*([()]|[^\s()]+)")
_REWARD_LINE = re.compile(r"^\[\s*([^,\]]+?)\s*,\s*([^\]]+?)\s*\]\s*\?\s*(.*)$")
_ASSIGN_LINE = re.compile(r"^([A-Za-z_][A-Za-z0-9_]*)\s*=\s*(\S+)\s*$")
_IDENT = re.compile(r"^[A-Za-z_][A-Za-z0-9_]*$")


@dataclass
class _Pending:
    line: int
    name: str
    value: str
    text: str


def _parse_tree(text: str, line: int, declare) -> tuple[str, object]:
    """Parse ``<prop> <tree>`` into the target name and a nested tuple tree."""
    toks = [(m.group(1), m.start(1)) for m in _TREE_TOKEN.finditer(text)]
    pos = 0

    def fail(msg: str, off: int | None = None):
        col = (toks[pos][1] if pos < len(toks) else len(text)) if off is None else off
        raise WorldSyntaxError(msg, line, col + 1)

    def tree():
        nonlocal pos
        if pos >= len(toks) or toks[pos][0] != "(":
            fail("expected '('")
        pos += 1
        if pos >= len(toks):
            fail("unterminated tree")
        tok, off = toks[pos]
        try:
            p = float(tok)
        except ValueError:
            p = None
        if p is not None:
            pos += 1
            if not (0.0 <= p <= 1.0) or math.isnan(p):
                fail(f"probability {tok} outside [0, 1]", off)
            out = ("leaf", p)
        else:
            if not _IDENT.match(tok):
                fail(f"bad proposition name {tok!r}", off)
            pos += 1
            declare(tok)
            hi = tree()
            lo = tree()
            out = ("test", tok, hi, lo)
        if pos >= len(toks) or toks[pos][0] != ")":
            fail("expected ')'")
        pos += 1
        return out

    if not toks or not _IDENT.match(toks[0][0]):
        fail("expected a proposition name", 0)
    target = toks[0][0]
    declare(target)
    pos = 1
    t = tree()
    if pos != len(toks):
        fail(f"unexpected {toks[pos][0]!r}")
    return target, t


def parse_world(text: str, name: str = "world") -> Nmrdp:
    """Parse a world file into an :class:`Nmrdp`."""
    props: dict[str, None] = {}

    def declare(p: str) -> None:
        props.setdefault(p, None)

    actions: list[tuple[str, list[tuple[str, object]]]] = []
    current: list[tuple[str, object]] | None = None
    initial: dict[str, bool] = {}
    rewards: list[_Pending] = []
    control: tuple[int, str] | None = None
    dialect = PLTL
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        words = line.split()
        if current is not None:
            if line == "endaction":
                current = None
                continue
            if words[0] in ("action", "dialect") or line.startswith("["):
                raise WorldSyntaxError("missing endaction", lineno)
            current.append(_parse_tree(line, lineno, declare))
            continue
        if words[0] == "action":
            if len(words) != 2 or not _IDENT.match(words[1]):
                raise WorldSyntaxError("expected 'action <name>'", lineno)
            if any(a == words[1] for a, _ in actions):
                raise WorldSyntaxError(f"duplicate action {words[1]}", lineno)
            current = []
            actions.append((words[1], current))
        elif words[0] == "dialect":
            if len(words) != 2 or words[1].lower() not in (PLTL, FLTL):
                raise WorldSyntaxError("expected 'dialect pltl' or 'dialect fltl'", lineno)
            dialect = words[1].lower()
        elif line.startswith("control"):
            m = re.match(r"^control\s*\?\s*(.*)$", line)
            if not m or not m.group(1):
                raise WorldSyntaxError("expected 'control? <formula>'", lineno)
            control = (lineno, m.group(1))
        elif line.startswith("["):
            m = _REWARD_LINE.match(line)
            if not m or not m.group(3):
                raise WorldSyntaxError("expected '[<name>, <real>]? <formula>'", lineno)
            rewards.append(_Pending(lineno, m.group(1), m.group(2), m.group(3)))
        elif line == "endaction":
            raise WorldSyntaxError("endaction without action", lineno)
        else:
            m = _ASSIGN_LINE.match(line)
            if not m or m.group(2) not in ("tt", "ff"):
                raise WorldSyntaxError(f"cannot parse {line!r}", lineno)
            declare(m.group(1))
            initial[m.group(1)] = m.group(2) == "tt"
    if current is not None:
        raise WorldSyntaxError("missing endaction at end of file", len(text.splitlines()))
    if not actions:
        raise WorldSyntaxError("a world needs at least one action", 1)

    names = list(props)
    index = {p: i for i, p in enumerate(names)}

    def build(t) -> DTree:
        if t[0] == "leaf":
            return DTree.leaf(t[1])
        return DTree.test(index[t[1]], build(t[2]), build(t[3]))

    specs = []
    for aname, effects in actions:
        eff = {}
        for target, t in effects:
            if index[target] in eff:
                raise DomainError(f"action {aname} affects {target} twice")
            eff[index[target]] = build(t)
        specs.append(ActionSpec(aname, eff))

    def formula(lineno: int, src: str) -> Formula:
        try:
            f = parse_formula(src, dialect)
        except FormulaError as e:
            raise WorldSyntaxError(str(e), lineno) from None
        unknown = atoms(f) - set(index)
        if unknown:
            raise WorldSyntaxError(f"undeclared proposition(s) {sorted(unknown)}", lineno)
        return f

    entries = []
    for r in rewards:
        try:
            value = float(r.value)
        except ValueError:
            raise WorldSyntaxError(f"reward value {r.value!r} is not a real", r.line) from None
        if not math.isfinite(value):
            raise WorldSyntaxError(f"reward value {r.value!r} is not finite", r.line)
        if any(e.name == r.name for e in entries):
            raise WorldSyntaxError(f"duplicate reward name {r.name}", r.line)
        entries.append(RewardEntry(r.name, formula(r.line, r.text), value))
    ck = None
    if control is not None:
        if dialect != FLTL:
            raise WorldSyntaxError("control knowledge needs 'dialect fltl'", control[0])
        ck = formula(*control)
        if ck.has_dollar:
            raise WorldSyntaxError("control knowledge must not mention $", control[0])
    s0 = sum(1 << index[p] for p, v in initial.items() if v)
    return Nmrdp(tuple(names), tuple(specs), s0, tuple(entries), dialect, ck, name)


def bundled_worlds() -> list[str]:
    return sorted(p.name[:-4] for p in resources.files("nmrdpp.worlds").iterdir()
                  if p.name.endswith(".nmr"))


def load_world(path: str | Path) -> Nmrdp:
    """Load a world file by path, or a bundled world by name (``coin``, ``fig1``, ``fig3``)."""
    p = Path(path)
    if p.is_file():
        return parse_world(p.read_text(), p.stem)
    if p.suffix == "" and not p.is_file() and p.with_suffix(".nmr").is_file():
        return parse_world(p.with_suffix(".nmr").read_text(), p.stem)
    bundled = resources.files("nmrdpp.worlds").joinpath(f"{p.stem}.nmr")
    if str(path) == p.stem and bundled.is_file():
        return parse_world(bundled.read_text(), p.stem)
    raise FileNotFoundError(f"no world file {path!r} (bundled: {', '.join(bundled_worlds())})")


def format_world(d: Nmrdp) -> str:
    """Render a domain back into world-file syntax."""
    lines = []
    if d.dialect == FLTL:
        lines.append("dialect fltl")
    for a in d.actions:
        lines.append(f"action {a.name}")
        for i, t in sorted(a.effects.items()):
            lines.append(f"  {d.props[i]} {t.render(d.props)}")
        lines.append("endaction")
    for i, p in enumerate(d.props):
        lines.append(f"{p} = {'tt' if (d.initial >> i) & 1 else 'ff'}")
    from .formula import to_text

    for r in d.rewards:
        lines.append(f"[{r.name}, {r.reward!r}]? {to_text(r.formula)}")
    if d.control is not None:
        lines.append(f"control? {to_text(d.control)}")
    return "\n".join(lines) + "\n"


# -- hand-coded generators -----------------------------------------------------

def _check_n(n: int) -> None:
    if not 1 <= n <= 20:
        raise DomainError("n must be between 1 and 20")


def _const(p: float) -> DTree:
    return DTree.leaf(p)


def _keep_or(i: int, p_false: float) -> DTree:
    """True stays true; false becomes true with probability ``p_false``."""
    return DTree.test(i, _const(1.0), _const(p_false))


def props_n(n: int) -> tuple[str, ...]:
    return tuple(f"p{i}" for i in range(1, n + 1))


def gen_spudd_linear(n: int) -> Nmrdp:
    """``a_i`` sets ``p_i`` and clears every ``p_j`` with ``j < i``."""
    _check_n(n)
    acts = []
    for i in range(n):
        eff = {i: _const(1.0)}
        eff.update({j: _const(0.0) for j in range(i)})
        acts.append(ActionSpec(f"a{i + 1}", eff))
    return Nmrdp(props_n(n), tuple(acts), 0, (), PLTL, None, f"linear{n}")


def gen_spudd_expon(n: int) -> Nmrdp:
    """``a_i`` sets ``p_i`` only if every lower ``p_j`` holds, and clears them."""
    _check_n(n)
    acts = []
    for i in range(n):
        t = _const(1.0)
        for j in reversed(range(i)):
            t = DTree.test(j, t, _const(0.0))
        eff = {i: t}
        eff.update({j: _const(0.0) for j in range(i)})
        acts.append(ActionSpec(f"a{i + 1}", eff))
    return Nmrdp(props_n(n), tuple(acts), 0, (), PLTL, None, f"expon{n}")


def gen_onoff(n: int, p_success: float = 0.8) -> Nmrdp:
    """A probabilistic turn-on and turn-off action per proposition."""
    _check_n(n)
    if not 0.0 < p_success <= 1.0:
        raise DomainError("p_success must be in (0, 1]")
    acts = []
    for i in range(n):
        acts.append(ActionSpec(f"on{i + 1}", {i: _keep_or(i, p_success)}))
        acts.append(ActionSpec(f"off{i + 1}",
                               {i: DTree.test(i, _const(1.0 - p_success), _const(0.0))}))
    return Nmrdp(props_n(n), tuple(acts), 0, (), PLTL, None, f"onoff{n}")


def gen_complete(n: int) -> Nmrdp:
    """``a_i`` makes ``p_i`` true with probability i/(n+1), every other p_j with 0.5."""
    _check_n(n)
    acts = []
    for i in range(n):
        eff = {j: _const(0.5) for j in range(n)}
        eff[i] = _const((i + 1) / (n + 1))
        acts.append(ActionSpec(f"a{i + 1}", eff))
    return Nmrdp(props_n(n), tuple(acts), 0, (), PLTL, None, f"complete{n}")


# -- random domains ------------------------------------------------------------

@dataclass(frozen=True)
class RandomDomainParams:
    n: int = 4
    action_count: int = 3
    uncertainty: float = 0.5
    structure: float = 0.5
    proportion_reachable: float = 1.0
    seed: int = 0
    max_insertions: int = 10_000

    def __post_init__(self):
        _check_n(self.n)
        if self.action_count < 1:
            raise DomainError("action_count must be positive")
        for name in ("uncertainty", "structure", "proportion_reachable"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise DomainError(f"{name} must be in [0, 1]")


def _random_tree(rng: random.Random, n: int, uncertainty: float, structure: float) -> DTree:
    order = list(range(n))
    rng.shuffle(order)
    tested = [v for v in order if rng.random() < structure]

    def leaf() -> DTree:
        if rng.random() < uncertainty:
            return _const(rng.random())
        return _const(float(rng.randrange(2)))

    def build(k: int) -> DTree:
        if k == len(tested):
            return leaf()
        return DTree.test(tested[k], build(k + 1), build(k + 1))

    return build(0)


def gen_random(params: RandomDomainParams) -> Nmrdp:
    """Random dynamics grown until enough of the state space is reachable."""
    rng = random.Random(params.seed)
    n, k = params.n, params.action_count
    effects: list[dict[int, DTree]] = [{} for _ in range(k)]
    chunk = math.ceil(n / k)
    for i in range(n):
        effects[min(i // chunk, k - 1)][i] = _random_tree(
            rng, n, params.uncertainty, params.structure)
    props = props_n(n)

    def domain() -> Nmrdp:
        acts = tuple(ActionSpec(f"a{j + 1}", dict(e)) for j, e in enumerate(effects))
        return Nmrdp(props, acts, 0, (), PLTL, None, f"random{n}-s{params.seed}")

    d = domain()
    target = math.ceil(params.proportion_reachable * (1 << n))
    inserted = 0
    while len(d.reachable_states()) < target:
        if inserted >= params.max_insertions:
            raise DomainError(
                "reachability target not met; try a lower proportion_reachable")
        j = rng.randrange(k)
        i = rng.randrange(n)
        effects[j][i] = _random_tree(rng, n, params.uncertainty, params.structure)
        inserted += 1
        d = domain()
    return d


def _reach_path(rng: random.Random, n: int, members: set[int], want: bool) -> list[tuple[int, bool]]:
    """Random path through the reduced decision diagram of ``members``
    (over variables 0..n-1 in order) to a terminal of value ``want``.

    When the diagram is a single terminal the path runs through the complete
    tree instead, so the conjunction names one whole state.
    """
    path = []
    cube = list(range(1 << n))
    constant = len({s in members for s in cube}) == 1
    for v in range(n):
        vals = {s in members for s in cube}
        if len(vals) == 1 and not constant:
            break
        choices = []
        for b in (True, False):
            sub = [s for s in cube if bool((s >> v) & 1) == b]
            if any((s in members) == want for s in sub):
                choices.append((b, sub))
        b, cube = rng.choice(choices)
        path.append((v, b))
    return path


def gen_random_rewards(d: Nmrdp, reachable_count: int, unreachable_count: int,
                       seed: int = 0, max_draws: int = 1000) -> tuple[RewardEntry, ...]:
    """Conjunctive rewards read off random paths of the reachability diagram.

    Reward values are drawn uniformly from 1..10.
    """
    rng = random.Random(seed)
    n = d.n_props
    members = set(d.reachable_states())
    if unreachable_count and len(members) == (1 << n):
        raise DomainError("every state is reachable; no unreachable reward exists")
    out: list[RewardEntry] = []
    seen: set[Formula] = set()
    for want, count in ((True, reachable_count), (False, unreachable_count)):
        made = draws = 0
        while made < count:
            draws += 1
            if draws > max_draws:
                raise DomainError("could not draw enough distinct rewards")
            path = _reach_path(rng, n, members, want)
            lits = [atom(d.props[v]) if b else Not(atom(d.props[v])) for v, b in path]
            f = conj_all(lits, raw=True)
            if f in seen:
                continue
            seen.add(f)
            out.append(RewardEntry(f"r{len(out) + 1}", f, float(rng.randint(1, 10))))
            made += 1
    return tuple(out)


# -- Miconic --------------------------------------------------------------------

@dataclass(frozen=True)
class MiconicInfo:
    floors: int
    passengers: int
    origin: tuple[int, ...]
    destination: tuple[int, ...]
    start_floor: int
    nonstop: frozenset[int]
    supervisor: dict
    direct: frozenset[int]


def _a(name: str) -> Formula:
    return atom(name)


def miconic_rewards(info: MiconicInfo, variant: str, dialect: str) -> tuple[RewardEntry, ...]:
    """Reward formulae for the simple (type 1) or hard (types 1 to 4) variants."""
    F = info.floors
    out = []
    for i in range(1, info.passengers + 1):
        served, boarded = _a(f"ServedP{i}"), _a(f"BoardedP{i}")
        if dialect == PLTL:
            f1 = And(served, Prv(pbx(Not(served))))
        else:
            f1 = Until(natom(served.name), And(served, DOLLAR_F))
        out.append(RewardEntry(f"served{i}", f1, 50.0))
    if variant == "simple":
        return tuple(out)
    if variant != "hard":
        raise DomainError(f"unknown Miconic variant {variant!r}")
    for i in range(1, info.passengers + 1):
        served, boarded = _a(f"ServedP{i}"), _a(f"BoardedP{i}")
        if i in info.nonstop:
            ns = _a(f"NonStopP{i}")
            if dialect == PLTL:
                f = conj_all([ns, Prv(Not(boarded), 2), Prv(Not(served), 2), served], raw=True)
            else:
                trig = conj_all([ns, natom(boarded.name), natom(served.name), Nxt(served, 2)],
                                raw=True)
                f = alw(implies(trig, Nxt(DOLLAR_F, 2)))
            out.append(RewardEntry(f"nonstop{i}", f, 2.0))
        if i in info.supervisor:
            j = info.supervisor[i]
            sup, supd = _a(f"SupervisorP{j}P{i}"), _a(f"SupervisedP{i}")
            bj = _a(f"BoardedP{j}")
            if dialect == PLTL:
                f = conj_all([supd, sup, served, Prv(pbx(Not(served))),
                              pbx(Or(Not(boarded), bj))], raw=True)
            else:
                bad = conj_all([boarded, supd, negate_nnf(And(bj, sup)), natom(served.name)],
                               raw=True)
                f = Until(natom(served.name), Or(bad, And(served, DOLLAR_F)))
            out.append(RewardEntry(f"supervised{i}", f, 5.0))
        if i in info.direct:
            di = _a(f"DirectP{i}")
            for tag, moves in (("up", [(j, k) for j in range(1, F + 1) for k in range(j + 1, F + 1)]),
                               ("down", [(j, k) for j in range(1, F + 1) for k in range(1, j)])):
                if dialect == PLTL:
                    step = disj_all([And(_a(f"AtFloor{k}"), Prv(_a(f"AtFloor{j}"))) for j, k in moves],
                                    raw=True)
                    f = conj_all([di, served, Prv(Not(served)),
                                  Snc(step, And(boarded, Prv(Not(boarded))))], raw=True)
                else:
                    step = disj_all([And(_a(f"AtFloor{j}"), Nxt(_a(f"AtFloor{k}"))) for j, k in moves],
                                    raw=True)
                    bad = And(negate_nnf(step), natom(served.name))
                    f = alw(implies(And(di, boarded),
                                    Until(natom(served.name), Or(bad, And(served, DOLLAR_F)))))
                out.append(RewardEntry(f"direct{tag}{i}", f, 10.0))
    return tuple(out)


def gen_miconic(floors: int, passengers: int, variant: str = "simple",
                dialect: str = FLTL, seed: int = 0) -> Nmrdp:
    """Deterministic elevator domain with one service action per floor."""
    if floors < 2 or passengers < 1:
        raise DomainError("Miconic needs at least 2 floors and 1 passenger")
    rng = random.Random(seed)
    origin, dest = [], []
    for _ in range(passengers):
        o = rng.randrange(1, floors + 1)
        t = rng.choice([k for k in range(1, floors + 1) if k != o])
        origin.append(o)
        dest.append(t)
    start = rng.randrange(1, floors + 1)
    people = list(range(1, passengers + 1))
    nonstop = frozenset(rng.sample(people, 1))
    supervisor = {}
    if passengers >= 2:
        for i in rng.sample(people, max(1, passengers // 3)):
            supervisor[i] = rng.choice([j for j in people if j != i])
    direct = frozenset(rng.sample(people, max(1, passengers // 2)))
    info = MiconicInfo(floors, passengers, tuple(origin), tuple(dest), start, nonstop,
                       supervisor, direct)

    props = [f"AtFloor{k}" for k in range(1, floors + 1)]
    props += [f"BoardedP{i}" for i in people] + [f"ServedP{i}" for i in people]
    static = [f"OriginP{i}F{origin[i - 1]}" for i in people]
    static += [f"DestinationP{i}F{dest[i - 1]}" for i in people]
    if variant == "hard":
        static += [f"NonStopP{i}" for i in sorted(nonstop)]
        static += [f"SupervisedP{i}" for i in sorted(supervisor)]
        static += [f"SupervisorP{j}P{i}" for i, j in sorted(supervisor.items())]
        static += [f"DirectP{i}" for i in sorted(direct)]
    props += static
    idx = {p: n for n, p in enumerate(props)}
    acts = []
    for k in range(1, floors + 1):
        eff = {idx[f"AtFloor{m}"]: _const(1.0 if m == k else 0.0) for m in range(1, floors + 1)}
        for i in people:
            b, s = idx[f"BoardedP{i}"], idx[f"ServedP{i}"]
            if origin[i - 1] == k:
                # unserved passengers waiting here get on
                eff[b] = DTree.test(s, _const(0.0), _const(1.0))
            elif dest[i - 1] == k:
                eff[b] = _const(0.0)
                eff[s] = DTree.test(b, _const(1.0), DTree.test(s, _const(1.0), _const(0.0)))
        acts.append(ActionSpec(f"service{k}", eff))
    s0 = (1 << idx[f"AtFloor{start}"]) | sum(1 << idx[p] for p in static)
    d = Nmrdp(tuple(props), tuple(acts), s0, miconic_rewards(info, variant, dialect), dialect,
              None, f"miconic-{variant}-{floors}x{passengers}")
    d.miconic = info
    return d


def miconic_heuristic(d: Nmrdp, beta: float):
    """50 per still-unserved passenger, discounted once, on top of the current reward."""
    served = [d.index[f"ServedP{i}"] for i in range(1, d.miconic.passengers + 1)]

    def h(e) -> float:
        left = sum(1 for b in served if not (e.state >> b) & 1)
        return e.reward + beta * 50.0 * left

    return h
