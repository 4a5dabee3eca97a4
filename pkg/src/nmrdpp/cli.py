"""Command interpreter and command-line entry point.

A script is a sequence of commands, one per line, such as::

    loadWorld('coin')
    preprocess('mPltl')
    expand
    domainStateSize
    valIt(0.99, 0.0001)
    iterationCount

Every line of the transcript is tagged ``cmd``, ``output``, ``timing`` or
``error`` so that timing lines can be stripped when comparing runs.
"""

from __future__ import annotations

import argparse
import ast
import csv
import io
import re
import sys
import time
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from pathlib import Path

from .domains import format_world, load_world, miconic_heuristic
from .fltl import FltlGenerator, ProgressionFailure
from .formula import FLTL, PLTL
from .mdp import ExpandedMdp, Nmrdp, expand
from .pltl import PltlGenerator, pltlmin_preprocess
from .solvers import SolverConfig, lao_star, policy_iteration, simulate, value_iteration
from .structured import StructuredMdp, pltlstr_translate, reachability, spudd_solve


class CommandError(RuntimeError):
    """A command failed; the script stops here."""


class PhaseError(CommandError):
    """A command ran before the artifact it needs was built."""


# preprocess tokens; the 'l'/'1' pairs cover both renderings of the same name
METHODS = {
    "simpltl": "pltlsim",
    "pltlsim": "pltlsim",
    "sim": "pltlsim",
    "mpltl": "pltlmin",
    "mplt1": "pltlmin",
    "pltlmin": "pltlmin",
    "min": "pltlmin",
    "spltl": "pltlstr",
    "splt1": "pltlstr",
    "strpltl": "pltlstr",
    "pltlstr": "pltlstr",
    "str": "pltlstr",
    "strpltla": "pltlstra",
    "pltlstra": "pltlstra",
    "stra": "pltlstra",
    "fltl": "fltl",
}

METHOD_LABEL = {
    "pltlsim": "PLTLSIM",
    "pltlmin": "PLTLMIN",
    "pltlstr": "PLTLSTR",
    "pltlstra": "PLTLSTR(A)",
    "fltl": "FLTL",
}


@dataclass
class Line:
    kind: str
    text: str


@dataclass
class Transcript:
    lines: list[Line] = field(default_factory=list)
    failed: bool = False

    def add(self, kind: str, text: str) -> None:
        for part in str(text).splitlines() or [""]:
            self.lines.append(Line(kind, part))

    def render(self, timing: bool = True, tagged: bool = False) -> str:
        out = []
        for ln in self.lines:
            if ln.kind == "timing" and not timing:
                continue
            text = "> " + ln.text if ln.kind == "cmd" else ln.text
            out.append(f"[{ln.kind}] {text}" if tagged else text)
        return "\n".join(out) + ("\n" if out else "")


@dataclass
class Stats:
    domain: str
    method: str
    n_props: int
    estates: int
    iterations: int
    wall_time_ms: float
    value_at_start: float


CSV_COLUMNS = ["domain", "method", "nProps", "eStates", "iterations", "wallTimeMs", "valueAtStart"]


def export_csv(stats: Iterable[Stats]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for s in stats:
        w.writerow([s.domain, s.method, s.n_props, s.estates, s.iterations,
                    f"{s.wall_time_ms:.3f}", repr(float(s.value_at_start))])
    return buf.getvalue()


def count_assignments(sm: StructuredMdp, indicator) -> int:
    """Number of assignments (over all variables) where a 0/1 diagram is 1."""
    mgr = sm.mgr
    nvars = sm.n_vars
    memo: dict[int, int] = {}

    def go(node: int, var: int) -> int:
        # assignments of variables var.. that reach a 1 terminal
        if mgr.is_terminal(node):
            return (1 << (nvars - var)) if mgr.value[node] > 0 else 0
        v = mgr.level[node] // 2
        k = memo.get(node)
        if k is None:
            k = go(mgr.hi[node], v + 1) + go(mgr.lo[node], v + 1)
            memo[node] = k
        return k << (v - var)

    return go(indicator.node, 0)


_CALL = re.compile(r"^([A-Za-z_]\w*)\s*(?:\((.*)\))?\s*(?:\|.*)?$")


def _parse_args(raw: str | None) -> list:
    if raw is None or not raw.strip():
        return []
    parts, depth, cur, quote = [], 0, "", None
    for ch in raw:
        if quote:
            cur += ch
            if ch == quote:
                quote = None
            continue
        if ch in "'\"":
            quote = ch
        elif ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        elif ch == "," and depth == 0:
            parts.append(cur)
            cur = ""
            continue
        cur += ch
    parts.append(cur)
    out = []
    for p in parts:
        p = p.strip()
        try:
            out.append(ast.literal_eval(p))
        except (ValueError, SyntaxError):
            if not re.match(r"^[A-Za-z_][\w.\-]*$", p):
                raise CommandError(f"cannot read argument {p!r}") from None
            out.append(p)
    return out


class Session:
    """Interpreter state: the loaded world and whatever has been built from it."""

    def __init__(self, seed: int = 0, max_estates: int | None = None, out_dir: str | None = None):
        self.seed = seed
        self.max_estates = max_estates
        self.out_dir = Path(out_dir) if out_dir else None
        self.world: Nmrdp | None = None
        self.method: str | None = None
        self.labels = None
        self.structured: StructuredMdp | None = None
        self.reach = None
        self.mdp: ExpandedMdp | None = None
        self.result = None
        self.result_kind: str | None = None
        self.timer_start: float | None = None
        self.timer_value: float | None = None
        self.dot_count = 0
        self.stats: list[Stats] = []

    # -- helpers ----------------------------------------------------------------

    def _need_world(self) -> Nmrdp:
        if self.world is None:
            raise PhaseError("no world loaded (use loadWorld first)")
        return self.world

    def _need_method(self) -> str:
        self._need_world()
        if self.method is None:
            raise PhaseError("no translation method chosen (use preprocess first)")
        return self.method

    def _need_mdp(self) -> ExpandedMdp:
        self._need_method()
        if self.mdp is None:
            raise PhaseError("the MDP has not been expanded (use expand first)")
        return self.mdp

    def _need_result(self):
        if self.result is None:
            raise PhaseError("nothing has been solved yet")
        return self.result

    def _config(self, args: Sequence) -> SolverConfig:
        if len(args) < 2:
            raise CommandError("expected (beta, epsilon)")
        try:
            return SolverConfig(beta=float(args[0]), epsilon=float(args[1]))
        except (TypeError, ValueError) as e:
            raise CommandError(str(e)) from None

    def _generator(self):
        d = self._need_world()
        method = self._need_method()
        if method == "fltl":
            return FltlGenerator(d)
        if method == "pltlsim":
            return PltlGenerator(d)
        if method == "pltlmin":
            return PltlGenerator(d, None, self.labels)
        raise PhaseError(f"{METHOD_LABEL[method]} has no explicit expansion")

    def _record(self, solver: str, estates: int, iterations: int, wall: float, v0: float) -> None:
        d = self._need_world()
        self.stats.append(Stats(d.name, f"{METHOD_LABEL[self.method]}+{solver}", d.n_props,
                                estates, iterations, wall * 1000.0, v0))

    def _emit_dot(self, text: str, tag: str, out: Transcript) -> None:
        if self.out_dir is None:
            out.add("output", text.rstrip("\n"))
            return
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.dot_count += 1
        path = self.out_dir / f"{self.dot_count:03d}-{tag}.dot"
        path.write_text(text)
        out.add("output", f"wrote {path}")

    # -- commands ---------------------------------------------------------------

    def cmd_loadworld(self, args, out):
        if len(args) != 1:
            raise CommandError("loadWorld expects one argument")
        try:
            self.world = load_world(str(args[0]))
        except FileNotFoundError as e:
            raise CommandError(str(e)) from None
        self.method = self.labels = self.structured = self.reach = None
        self.mdp = self.result = self.result_kind = None

    def cmd_preprocess(self, args, out):
        d = self._need_world()
        if len(args) != 1:
            raise CommandError("preprocess expects one argument")
        key = str(args[0]).lower()
        if key not in METHODS:
            raise CommandError(f"unknown method {args[0]!r}")
        method = METHODS[key]
        want = FLTL if method == "fltl" else PLTL
        if d.rewards and d.dialect != want:
            raise CommandError(f"{METHOD_LABEL[method]} needs {want.upper()} rewards; "
                               f"this world uses {d.dialect.upper()}")
        self.method = method
        self.mdp = self.result = self.result_kind = None
        self.labels = self.structured = self.reach = None
        if method == "pltlmin":
            self.labels = pltlmin_preprocess(d, None, self.max_estates)
        elif method in ("pltlstr", "pltlstra"):
            self.structured = pltlstr_translate(d)
            if method == "pltlstra":
                self.reach = reachability(self.structured).indicator

    def cmd_expand(self, args, out):
        gen = self._generator()
        self.mdp = expand(gen, self.max_estates)

    def _explicit(self, solver, name, args):
        m = self._need_mdp()
        cfg = self._config(args)
        r = solver(m, cfg)
        self.result, self.result_kind = r, "explicit"
        self._record(name, m.n, r.iterations, r.wall_time, r.value_at_start)

    def cmd_valit(self, args, out):
        self._explicit(value_iteration, "VI", args)

    def cmd_polit(self, args, out):
        self._explicit(policy_iteration, "PI", args)

    def cmd_lao(self, args, out):
        gen = self._generator()
        cfg = self._config(args)
        if len(args) > 2:
            h = str(args[2])
            if h == "miconic":
                if not hasattr(self.world, "miconic"):
                    raise CommandError("the miconic heuristic needs a generated Miconic world")
                cfg.heuristic = miconic_heuristic(self.world, cfg.beta)
            elif h in ("default", "zero"):
                cfg.heuristic = h
            else:
                raise CommandError(f"unknown heuristic {h!r}")
        r = lao_star(gen, cfg)
        self.result, self.result_kind = r, "lao"
        self._record("LAO*", r.expanded_count, r.iterations, r.wall_time, r.value_at_start)

    def cmd_spudd(self, args, out):
        self._need_method()
        if self.structured is None:
            raise PhaseError("spudd needs a structured model (use preprocess('sPltl'))")
        cfg = self._config(args)
        r = spudd_solve(self.structured, cfg, self.reach)
        self.result, self.result_kind = r, "structured"
        ind = self.reach if self.reach is not None else self.structured.mgr.const(1.0)
        self._record("SPUDD", count_assignments(self.structured, ind), r.iterations,
                     r.wall_time, r.value_at_start)

    def cmd_startcputimer(self, args, out):
        self.timer_start = time.process_time()
        self.timer_value = None

    def cmd_stopcputimer(self, args, out):
        if self.timer_start is None:
            raise PhaseError("timer not started")
        self.timer_value = time.process_time() - self.timer_start
        self.timer_start = None

    def cmd_readcputimer(self, args, out):
        if self.timer_value is None:
            if self.timer_start is None:
                raise PhaseError("timer not started")
            value = time.process_time() - self.timer_start
        else:
            value = self.timer_value
        out.add("timing", f"{value:.5f}")

    def cmd_iterationcount(self, args, out):
        out.add("output", str(self._need_result().iterations))

    def cmd_domainstatesize(self, args, out):
        out.add("output", str(self._need_mdp().n))

    def cmd_expandedstatecount(self, args, out):
        r = self.result
        if r is not None and self.result_kind in ("explicit", "lao"):
            out.add("output", str(r.expanded_count))
        else:
            out.add("output", str(self._need_mdp().n))

    def cmd_startvalue(self, args, out):
        out.add("output", f"{self._need_result().value_at_start:.6f}")

    def cmd_getpolicy(self, args, out):
        r = self._need_result()
        d = self._need_world()
        names = d.action_names
        if self.result_kind == "explicit":
            m = self.mdp
            for i in range(m.n):
                a = r.policy[i]
                act = names[a] if a is not None else "-"
                out.add("output", f"e{i} {d.show_state(m.tau(i))} {m.describe(i)} : {act}")
        elif self.result_kind == "lao":
            gen = self._generator()
            for i, e in enumerate(r.estates):
                a = r.policy[i]
                act = names[a] if a is not None else "-"
                out.add("output", f"e{i} {d.show_state(e.state)} {gen.describe(e)} : {act}")
        else:
            sm = self.structured
            reach = self.reach if self.reach is not None else reachability(sm).indicator
            nv = sm.n_vars
            if nv > 16:
                raise CommandError("too many variables to list; use displayDot(policyToDot)")
            for bits in range(1 << nv):
                get = sm.assignment(bits)
                if reach.evaluate(get) <= 0:
                    continue
                a = int(r.policy.evaluate(get))
                vals = ", ".join(n for k, n in enumerate(sm.var_names) if (bits >> k) & 1)
                out.add("output", f"{{{vals}}} : {names[a]}")

    def cmd_displaydot(self, args, out):
        kind = str(args[0]) if args else "mdpToDot"
        if kind not in ("valueToDot", "policyToDot", "mdpToDot"):
            raise CommandError(f"unknown rendering {kind!r}")
        if kind == "mdpToDot":
            if self.structured is not None and self.mdp is None:
                text = self.structured.to_dot("reward")
            else:
                text = self._need_mdp().to_dot()
            self._emit_dot(text, kind, out)
            return
        r = self._need_result()
        if self.result_kind == "structured":
            add = r.value if kind == "valueToDot" else r.policy
            text = add.to_dot("value" if kind == "valueToDot" else "policy")
        elif self.result_kind == "explicit":
            if kind == "valueToDot":
                text = self.mdp.to_dot(values=list(r.value))
            else:
                text = self.mdp.to_dot(policy=r.policy, policy_only=True)
        else:
            raise CommandError("DOT rendering of LAO* results is not supported; expand first")
        self._emit_dot(text, kind, out)

    def cmd_printdomain(self, args, out):
        if self.mdp is not None:
            self._emit_dot(self.mdp.to_dot(), "domain", out)
        else:
            out.add("output", format_world(self._need_world()).rstrip("\n"))

    def cmd_setseed(self, args, out):
        if len(args) != 1 or not isinstance(args[0], int):
            raise CommandError("setSeed expects an integer")
        self.seed = args[0]

    def cmd_simulate(self, args, out):
        r = self._need_result()
        if self.result_kind != "explicit":
            raise PhaseError("simulate needs an explicit solution (valIt or polIt)")
        trials = int(args[0]) if args else 100
        horizon = int(args[1]) if len(args) > 1 else 100
        beta = float(args[2]) if len(args) > 2 else 1.0
        st = simulate(self.mdp, r.policy, trials, horizon, self.seed, beta)
        out.add("output", f"mean {st.mean:.6f} variance {st.variance:.6f}")

    def cmd_echo(self, args, out):
        out.add("output", " ".join(str(a) for a in args))

    # -- dispatch ---------------------------------------------------------------

    def execute(self, line: str, out: Transcript) -> None:
        text = line.strip()
        if text.startswith(">"):
            text = text[1:].strip()
        if not text or text.startswith("#"):
            return
        out.add("cmd", text)
        m = _CALL.match(text)
        if not m:
            raise CommandError(f"cannot parse command {text!r}")
        name, raw = m.group(1), m.group(2)
        handler = getattr(self, "cmd_" + name.lower(), None)
        if handler is None:
            raise CommandError(f"unknown command {name!r}")
        handler(_parse_args(raw), out)


def run_script(lines: Iterable[str], seed: int = 0, max_estates: int | None = None,
               out_dir: str | None = None, session: Session | None = None) -> Transcript:
    """Run commands until the first error; the transcript records everything."""
    sess = session or Session(seed, max_estates, out_dir)
    out = Transcript()
    for line in lines:
        try:
            sess.execute(line, out)
        except ProgressionFailure as e:
            out.add("error", f"error: progression failure: {e}")
            out.failed = True
            break
        except (CommandError, ValueError, FileNotFoundError, RuntimeError, MemoryError) as e:
            out.add("error", f"error: {e}")
            out.failed = True
            break
    out.session = sess
    return out


# -- command line --------------------------------------------------------------

SOLVE_METHODS = {"sim": "pltlsim", "min": "pltlmin", "str": "pltlstr", "stra": "pltlstra",
                 "fltl": "fltl"}


def _run(ns) -> int:
    if ns.script == "-":
        interactive = sys.stdin.isatty()
        sess = Session(ns.seed, ns.max_estates, ns.out)
        failed = False
        while True:
            if interactive:
                print("> ", end="", flush=True)
            line = sys.stdin.readline()
            if not line:
                break
            t = run_script([line], session=sess)
            text = t.render(timing=True)
            lines = text.splitlines()
            if interactive and lines and lines[0].startswith("> "):
                lines = lines[1:]
            if lines:
                print("\n".join(lines))
            if t.failed:
                failed = True
                if not interactive:
                    break
        return 1 if failed else 0
    try:
        lines = Path(ns.script).read_text().splitlines()
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    t = run_script(lines, ns.seed, ns.max_estates, ns.out)
    sys.stdout.write(t.render(timing=not ns.no_timing, tagged=ns.tagged))
    if ns.csv and t.session.stats:
        Path(ns.csv).write_text(export_csv(t.session.stats))
    return 1 if t.failed else 0


def _solve(ns) -> int:
    method = SOLVE_METHODS[ns.method]
    structured = method in ("pltlstr", "pltlstra")
    if (ns.solver == "spudd") != structured:
        print("error: spudd goes with --method str or stra, and only there", file=sys.stderr)
        return 2
    script = [f"loadWorld({ns.world!r})", f"preprocess({method!r})"]
    if ns.solver in ("vi", "pi"):
        script.append("expand")
    call = {"vi": "valIt", "pi": "polIt", "lao": "lao", "spudd": "spudd"}[ns.solver]
    extra = f", {ns.heuristic!r}" if ns.solver == "lao" and ns.heuristic else ""
    script += [f"{call}({ns.beta!r}, {ns.eps!r}{extra})", "iterationCount", "startValue"]
    t = run_script(script, ns.seed, ns.max_estates)
    if t.failed:
        sys.stdout.write(t.render())
        return 1
    text = export_csv(t.session.stats)
    if ns.csv:
        Path(ns.csv).write_text(text)
    sys.stdout.write(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nmrdpp",
                                description="Planning with non-Markovian rewards.")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run a command script ('-' reads standard input)")
    r.add_argument("script")
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--max-estates", type=int, default=None)
    r.add_argument("--out", default=None, help="directory for DOT files")
    r.add_argument("--csv", default=None, help="write solver statistics to this file")
    r.add_argument("--no-timing", action="store_true", help="omit timing lines")
    r.add_argument("--tagged", action="store_true", help="prefix lines with their kind")
    r.set_defaults(func=_run)
    s = sub.add_parser("solve", help="translate and solve a world in one go")
    s.add_argument("world")
    s.add_argument("--method", choices=sorted(SOLVE_METHODS), default="fltl")
    s.add_argument("--solver", choices=["vi", "pi", "lao", "spudd"], default="vi")
    s.add_argument("--beta", type=float, default=0.95)
    s.add_argument("--eps", type=float, default=1e-6)
    s.add_argument("--heuristic", default=None)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--max-estates", type=int, default=None)
    s.add_argument("--csv", default=None)
    s.set_defaults(func=_solve)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    ns = build_parser().parse_args(argv)
    return ns.func(ns)


if __name__ == "__main__":
    sys.exit(main())
