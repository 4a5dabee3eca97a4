"""Explicit-state solvers: value iteration, policy iteration and LAO*.

All solvers maximise expected discounted reward.  E-states without applicable
actions (ruled out by search control) are terminal: their value is their
immediate reward.

Stopping rule.  By default a solver starts from ``V0 = R`` and stops once the
Bellman residual ``max |V_{k+1} - V_k|`` drops below ``eps * (1 - beta) /
(2 * beta)``, which bounds the distance to the optimum by ``eps/2``; this is
the convention of the SPUDD family of solvers.  ``stopping="supnorm"`` with
``init="zero"`` gives the plain rule (start at 0, stop when the residual is
below ``eps``).
"""

from __future__ import annotations

import time
from collections.abc import Callable, Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse.linalg import spsolve

from .mdp import EState, ExpandedMdp, Generator

TIE_TOL = 1e-9
DIRECT_SOLVE_MAX = 2000


@dataclass
class SolverConfig:
    beta: float = 0.95
    epsilon: float = 1e-6
    max_iterations: int = 1_000_000
    heuristic: str | Callable[[EState], float] | None = None
    stopping: str = "bellman"
    init: str = "reward"
    evaluation: str = "auto"

    def __post_init__(self):
        if not 0.0 <= self.beta < 1.0:
            raise ValueError("beta must lie in [0, 1)")
        if not self.epsilon > 0.0:
            raise ValueError("epsilon must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be positive")
        if self.stopping not in ("bellman", "supnorm"):
            raise ValueError(f"unknown stopping rule {self.stopping!r}")
        if self.init not in ("reward", "zero"):
            raise ValueError(f"unknown initialisation {self.init!r}")
        if self.evaluation not in ("auto", "direct", "iterative"):
            raise ValueError(f"unknown evaluation mode {self.evaluation!r}")

    @property
    def threshold(self) -> float:
        if self.stopping == "supnorm" or self.beta == 0.0:
            return self.epsilon
        return self.epsilon * (1.0 - self.beta) / (2.0 * self.beta)


@dataclass
class SolveResult:
    value: np.ndarray
    policy: list[int | None]
    iterations: int
    expanded_count: int
    wall_time: float
    converged: bool = True
    interrupted: bool = False
    mdp: ExpandedMdp | None = None
    estates: list[EState] | None = None

    @property
    def value_at_start(self) -> float:
        return float(self.value[0]) if len(self.value) else 0.0


# -- explicit-MDP solvers ------------------------------------------------------------

def _backup(mats, masks, R, beta, V, dead):
    Q = np.full((len(mats), len(V)), -np.inf)
    for a, (P, mask) in enumerate(zip(mats, masks)):
        q = R + beta * (P @ V)
        Q[a, mask] = q[mask]
    out = Q.max(axis=0) if len(mats) else np.array(R, dtype=float)
    out[dead] = R[dead]
    return out, Q


def greedy(Q: np.ndarray, prefer: Sequence[int | None] | None = None) -> list[int | None]:
    """Best action per column of ``Q``: lowest index among near-ties,
    unless ``prefer`` names an action that is itself near-optimal."""
    policy: list[int | None] = []
    for i in range(Q.shape[1]):
        col = Q[:, i]
        best = col.max() if len(col) else -np.inf
        if not np.isfinite(best):
            policy.append(None)
            continue
        tol = TIE_TOL * max(1.0, abs(best))
        if prefer is not None and prefer[i] is not None and col[prefer[i]] >= best - tol:
            policy.append(prefer[i])
            continue
        policy.append(int(np.flatnonzero(col >= best - tol)[0]))
    return policy


def _arrays(m: ExpandedMdp):
    mats, masks = m.matrices()
    R = np.array(m.rewards(), dtype=float)
    dead = ~np.any(np.stack(masks), axis=0) if masks else np.ones(m.n, dtype=bool)
    return mats, masks, R, dead


def value_iteration(m: ExpandedMdp, cfg: SolverConfig | None = None) -> SolveResult:
    cfg = cfg or SolverConfig()
    t0 = time.perf_counter()
    mats, masks, R, dead = _arrays(m)
    V = R.copy() if cfg.init == "reward" else np.zeros(m.n)
    th = cfg.threshold
    it = 0
    converged = False
    while it < cfg.max_iterations:
        Vn, Q = _backup(mats, masks, R, cfg.beta, V, dead)
        diff = float(np.max(np.abs(Vn - V))) if m.n else 0.0
        V = Vn
        it += 1
        if diff < th:
            converged = True
            break
    _, Q = _backup(mats, masks, R, cfg.beta, V, dead)
    return SolveResult(V, greedy(Q), it, m.n, time.perf_counter() - t0, converged, mdp=m)


def _policy_matrix(m: ExpandedMdp, policy: Sequence[int | None]):
    rows, cols, vals = [], [], []
    for i, a in enumerate(policy):
        if a is None:
            continue
        dist = m.transitions[i][a]
        if dist is None:
            raise ValueError(f"action {a} is not applicable at e-state {i}")
        for j, p in dist:
            rows.append(i)
            cols.append(j)
            vals.append(p)
    return sparse.csr_matrix((vals, (rows, cols)), shape=(m.n, m.n))


def evaluate_policy(m: ExpandedMdp, policy: Sequence[int | None] | Mapping[int, int],
                    cfg: SolverConfig | None = None) -> np.ndarray:
    """Value of a fixed policy (``None`` only on e-states without actions)."""
    cfg = cfg or SolverConfig()
    if isinstance(policy, Mapping):
        policy = [policy.get(i) for i in range(m.n)]
    for i, a in enumerate(policy):
        if a is None and m.applicable(i):
            raise ValueError(f"policy undefined at e-state {i}")
    P = _policy_matrix(m, policy)
    R = np.array(m.rewards(), dtype=float)
    direct = cfg.evaluation == "direct" or (cfg.evaluation == "auto" and m.n <= DIRECT_SOLVE_MAX)
    if direct:
        A = sparse.identity(m.n, format="csc") - cfg.beta * P.tocsc()
        return np.atleast_1d(spsolve(A, R))
    V = R.copy()
    tol = cfg.epsilon / 10.0 * (1.0 - cfg.beta)
    for _ in range(cfg.max_iterations):
        Vn = R + cfg.beta * (P @ V)
        if np.max(np.abs(Vn - V)) < tol:
            return Vn
        V = Vn
    return V


def policy_iteration(m: ExpandedMdp, cfg: SolverConfig | None = None) -> SolveResult:
    cfg = cfg or SolverConfig()
    t0 = time.perf_counter()
    mats, masks, R, dead = _arrays(m)
    policy: list[int | None] = [(m.applicable(i) or [None])[0] for i in range(m.n)]
    rounds = 0
    converged = False
    V = np.zeros(m.n)
    while rounds < cfg.max_iterations:
        V = evaluate_policy(m, policy, cfg)
        rounds += 1
        _, Q = _backup(mats, masks, R, cfg.beta, V, dead)
        new = greedy(Q, prefer=policy)
        if new == policy:
            converged = True
            break
        policy = new
    return SolveResult(V, policy, rounds, m.n, time.perf_counter() - t0, converged, mdp=m)


# -- LAO* ----------------------------------------------------------------------------

def default_heuristic(gen: Generator, beta: float) -> Callable[[EState], float]:
    """Sum of reward magnitudes earned at every future step: admissible for
    nonnegative rewards."""
    spec = getattr(gen, "spec", None)
    total = spec.total if spec is not None and hasattr(spec, "total") else gen.nmrdp.reward_sum
    bound = total / (1.0 - beta)
    return lambda e: bound


class Interrupt:
    """Cooperative interruption flag for anytime solving."""

    def __init__(self):
        self.requested = False

    def set(self) -> None:
        self.requested = True


def lao_star(gen: Generator, cfg: SolverConfig | None = None,
             interrupt: Interrupt | None = None) -> SolveResult:
    """LAO* over an on-demand generator.

    Fringe e-states are valued by the heuristic.  Each round expands every
    fringe e-state of the current best partial solution graph and re-runs value
    iteration over the expanded ancestors of what was expanded.  The search
    stops when the best solution graph has no fringe and its values have
    converged.
    """
    cfg = cfg or SolverConfig()
    t0 = time.perf_counter()
    h = cfg.heuristic
    if h is None or h == "default":
        h = default_heuristic(gen, cfg.beta)
    elif h == "zero":
        h = lambda e: 0.0
    elif isinstance(h, str):
        raise ValueError(f"unknown heuristic {h!r}")
    beta = cfg.beta
    th = cfg.threshold
    index: dict[EState, int] = {}
    estates: list[EState] = []
    V: list[float] = []
    succ: list[list[list[tuple[int, float]] | None] | None] = []
    preds: list[set[int]] = []
    policy: list[int | None] = []

    def add(e: EState) -> int:
        i = index.get(e)
        if i is None:
            i = len(estates)
            index[e] = i
            estates.append(e)
            V.append(float(h(e)))
            succ.append(None)
            preds.append(set())
            policy.append(None)
        return i

    def q(i: int, a: int) -> float:
        return estates[i].reward + beta * sum(p * V[j] for j, p in succ[i][a])

    def bellman(i: int) -> float:
        acts = [a for a, d in enumerate(succ[i]) if d is not None]
        if not acts:
            policy[i] = None
            return estates[i].reward
        qs = [q(i, a) for a in acts]
        best = max(qs)
        tol = TIE_TOL * max(1.0, abs(best))
        cur = policy[i]
        if cur is not None and succ[i][cur] is not None and q(i, cur) >= best - tol:
            return best
        policy[i] = next(a for a, v in zip(acts, qs) if v >= best - tol)
        return best

    def expand_one(i: int) -> None:
        e = estates[i]
        row: list[list[tuple[int, float]] | None] = [None] * len(gen.nmrdp.actions)
        for a in gen.actions(e):
            dist = []
            for f, p in gen.successors(e, a):
                j = add(f)
                preds[j].add(i)
                dist.append((j, p))
            row[a] = dist
        succ[i] = row
        V[i] = bellman(i)

    def solution_graph() -> tuple[list[int], list[int]]:
        seen = {0}
        stack = [0]
        inner, fringe = [], []
        while stack:
            i = stack.pop()
            if succ[i] is None:
                fringe.append(i)
                continue
            inner.append(i)
            a = policy[i]
            if a is None:
                continue
            for j, _ in succ[i][a]:
                if j not in seen:
                    seen.add(j)
                    stack.append(j)
        return inner, fringe

    def vi(states: list[int]) -> int:
        sweeps = 0
        while sweeps < cfg.max_iterations:
            diff = 0.0
            old = [V[i] for i in states]
            new = [bellman(i) for i in states]
            for i, o, n in zip(states, old, new):
                V[i] = n
                diff = max(diff, abs(n - o))
            sweeps += 1
            if diff < th or (interrupt is not None and interrupt.requested):
                break
        return sweeps

    add(gen.initial())
    iterations = 0
    interrupted = False
    converged = False
    try:
        while True:
            if interrupt is not None and interrupt.requested:
                interrupted = True
                break
            inner, fringe = solution_graph()
            if fringe:
                for i in fringe:
                    expand_one(i)
                # dynamic programming over everything that can reach the new nodes
                z = set(fringe)
                stack = list(fringe)
                while stack:
                    j = stack.pop()
                    for i in preds[j]:
                        if i not in z:
                            z.add(i)
                            stack.append(i)
                iterations += vi(sorted(z))
                continue
            before = list(policy)
            iterations += vi(sorted(inner))
            inner2, fringe2 = solution_graph()
            if not fringe2 and [policy[i] for i in inner2] == [before[i] for i in inner2]:
                # one more check: the residual over the final graph is small
                old = [V[i] for i in inner2]
                new = [bellman(i) for i in inner2]
                for i, n in zip(inner2, new):
                    V[i] = n
                if max((abs(a - b) for a, b in zip(old, new)), default=0.0) < th:
                    converged = True
                    break
            if iterations >= cfg.max_iterations:
                break
    except KeyboardInterrupt:
        interrupted = True
    expanded = sum(1 for s in succ if s is not None)
    return SolveResult(np.array(V), list(policy), iterations, expanded,
                       time.perf_counter() - t0, converged, interrupted, estates=estates)


# -- simulation ----------------------------------------------------------------------

@dataclass
class SimulationStats:
    returns: list[float] = field(default_factory=list)

    @property
    def mean(self) -> float:
        return float(np.mean(self.returns)) if self.returns else 0.0

    @property
    def variance(self) -> float:
        return float(np.var(self.returns)) if self.returns else 0.0


def simulate(m: ExpandedMdp, policy: Sequence[int | None] | Mapping[int, int], trials: int,
             horizon: int, seed: int = 0, beta: float = 1.0,
             default_action: int | None = None) -> SimulationStats:
    """Discounted return of ``trials`` runs of ``horizon`` steps each."""
    if isinstance(policy, Mapping):
        policy = [policy.get(i) for i in range(m.n)]
    rng = np.random.default_rng(seed)
    out = SimulationStats()
    for _ in range(trials):
        i = m.initial
        total = 0.0
        disc = 1.0
        for _ in range(horizon):
            total += disc * m.estates[i].reward
            disc *= beta
            if not m.applicable(i):
                break
            a = policy[i] if i < len(policy) else None
            if a is None:
                a = default_action
            if a is None:
                raise ValueError(f"policy undefined at e-state {i} and no default action")
            dist = m.transitions[i][a]
            if dist is None:
                raise ValueError(f"action {a} not applicable at e-state {i}")
            r = rng.random()
            acc = 0.0
            nxt = dist[-1][0]
            for j, p in dist:
                acc += p
                if r < acc:
                    nxt = j
                    break
            i = nxt
        out.returns.append(total)
    return out
