import random

import pytest
from corpus import coin, fig3, onoff
from hypothesis import given
from hypothesis import strategies as st

from nmrdpp.add import (
    AddManager,
    NodeLimitError,
    add_apply,
    add_from_dtree,
    add_from_table,
    add_restrict,
    add_threshold,
)
from nmrdpp.domains import gen_complete, gen_spudd_expon, load_world
from nmrdpp.formula import Prv, atom, eval_pltl, parse_formula, simplify
from nmrdpp.mdp import ActionSpec, DTree, Nmrdp, RewardEntry
from nmrdpp.pltl import pltlmin_translate
from nmrdpp.solvers import SolverConfig, value_iteration
from nmrdpp.structured import (
    pltlstr_translate,
    reachability,
    reachability_restrict,
    spudd_solve,
)


def _assign(levels, bits):
    return {lvl: bool((bits >> k) & 1) for k, lvl in enumerate(levels)}


# -- decision diagram algebra ------------------------------------------------------------

def test_identity_and_restrict():
    mgr = AddManager()
    x = mgr.var(0)
    a = x * 0.9 + (1.0 - x) * 0.1
    assert add_apply("+", mgr.const(0.0), a) == a
    r = add_restrict(a, 0, True)
    assert r.is_constant and r.constant_value == pytest.approx(0.9)


def test_product_and_sum_out_match_brute_force():
    rng = random.Random(2)
    mgr = AddManager()
    levels = [0, 2, 4]
    for _ in range(20):
        ta = [rng.random() for _ in range(8)]
        tb = [float(rng.randrange(2)) for _ in range(8)]
        a, b = add_from_table(mgr, levels, ta), add_from_table(mgr, levels, tb)
        prod = (a * b).sum_out(0).sum_out(2).sum_out(4)
        assert prod.constant_value == pytest.approx(sum(x * y for x, y in zip(ta, tb)))


@given(st.integers(1, 10), st.integers(0, 2 ** 32 - 1))
def test_canonicity(nvars, seed):
    rng = random.Random(seed)
    mgr = AddManager()
    levels = list(range(nvars))
    table = [float(rng.randrange(3)) for _ in range(1 << nvars)]
    direct = add_from_table(mgr, levels, table)
    # the same function assembled as a sum of weighted minterms, in random order
    rows = list(range(1 << nvars))
    rng.shuffle(rows)
    total = mgr.const(0.0)
    for bits in rows:
        if table[bits] == 0.0:
            continue
        cube = mgr.const(table[bits])
        for k in levels:
            cube = cube * (mgr.var(k) if (bits >> k) & 1 else mgr.nvar(k))
        total = total + cube
    assert total.node == direct.node
    if nvars <= 6:
        for bits in range(1 << nvars):
            assert total.evaluate(_assign(levels, bits)) == table[bits]


def test_threshold_and_dtree():
    mgr = AddManager()
    t = DTree.test(0, DTree.leaf(0.25), DTree.test(1, DTree.leaf(0.0), DTree.leaf(1.0)))
    a = add_from_dtree(mgr, t, lambda k: 2 * k)
    th = add_threshold(a, 0.0)
    for bits in range(4):
        get = {0: bool(bits & 1), 2: bool(bits & 2)}
        assert a.evaluate(get) == t.prob_true(bits)
        assert th.evaluate(get) == (1.0 if t.prob_true(bits) > 0 else 0.0)


def test_node_limit():
    mgr = AddManager(node_limit=16)
    with pytest.raises(NodeLimitError):
        add_from_table(mgr, list(range(6)), [float(k) for k in range(64)])


def test_order_violation_is_an_error():
    mgr = AddManager()
    x2 = mgr.var(2)
    with pytest.raises(ValueError):
        mgr.mk(4, x2.node, mgr.zero)


# -- PLTLSTR translation -----------------------------------------------------------------

def test_fig3_temporal_variables():
    sm = pltlstr_translate(load_world("fig3"))
    p = atom("p")
    assert {t.definition for t in sm.temporal} == {Prv(p), Prv(Prv(p))}
    pp = next(t for t in sm.temporal if t.definition is Prv(Prv(p)))
    support = {lvl // 2 for lvl in sm.reward.support()}
    assert support == {sm.nmrdp.index["q"], sm.n_state + pp.id}


def test_nested_since_temporal_variables():
    d = Nmrdp(("p", "q", "r"), (ActionSpec("a"),),
              rewards=(RewardEntry("f", parse_formula("pdi (p snc (q or prv r))"), 1.0),))
    sm = pltlstr_translate(d)
    assert len(sm.temporal) == 3
    inner = simplify(parse_formula("p snc (q or prv r)"))
    outer = simplify(parse_formula("pdi (p snc (q or prv r))"))
    t1 = next(t for t in sm.temporal if t.definition is Prv(outer))
    t2 = next(t for t in sm.temporal if t.definition is Prv(inner))
    t3 = next(t for t in sm.temporal if t.definition is Prv(atom("r")))
    for bits in range(1 << sm.n_vars):
        def v(k, bits=bits):
            return bool((bits >> k) & 1)
        p, q = v(0), v(1)
        want = (q or v(3 + t3.id)) or (p and v(3 + t2.id)) or v(3 + t1.id)
        assert sm.reward.evaluate(sm.assignment(bits)) == (1.0 if want else 0.0)


def test_atemporal_reward_has_no_temporal_variables():
    d = load_world("fig3").with_rewards([RewardEntry("r", atom("p"), 2.0)], "pltl")
    sm = pltlstr_translate(d)
    assert sm.temporal == []
    assert sm.reward.support() == {0}


@pytest.mark.parametrize("world", ["coin", "fig3"])
def test_temporal_trajectory_matches_direct_evaluation(world):
    d = load_world(world)
    sm = pltlstr_translate(d)
    rng = random.Random(8)
    n = d.n_props
    for _ in range(100):
        seq = [d.initial] + [rng.randrange(1 << n) for _ in range(rng.randint(0, 7))]
        sets = [d.state_set(s) for s in seq]
        tbits = 0
        for i, s in enumerate(seq):
            bits = s | tbits
            for t in sm.temporal:
                got = bool((bits >> (n + t.id)) & 1)
                assert got == eval_pltl(sets, i, t.definition)
            tbits = sm.step_temporal(bits)


# -- reachability ------------------------------------------------------------------------

def _explicit_reachable(sm):
    d = sm.nmrdp
    start = sm.initial_bits
    seen = {start}
    stack = [start]
    mask = (1 << d.n_props) - 1
    while stack:
        bits = stack.pop()
        s = bits & mask
        tb = sm.step_temporal(bits)
        for a in range(len(d.actions)):
            for t, _ in d.successors(s, a):
                nb = t | tb
                if nb not in seen:
                    seen.add(nb)
                    stack.append(nb)
    return seen


@pytest.mark.parametrize("world", ["coin", "fig3"])
def test_reachability_matches_explicit_search(world):
    sm = pltlstr_translate(load_world(world))
    ind = reachability_restrict(sm)
    want = _explicit_reachable(sm)
    for bits in range(1 << sm.n_vars):
        assert (ind.evaluate(sm.assignment(bits)) == 1.0) == (bits in want)
    # some combinations of temporal variables contradict every history
    assert len(want) < 1 << sm.n_vars


def test_complete_domain_is_fully_reachable():
    sm = pltlstr_translate(gen_complete(3))
    ind = reachability(sm).indicator
    assert ind.is_constant and ind.constant_value == 1.0


def test_expon_all_true_needs_the_full_fixpoint():
    sm = pltlstr_translate(gen_spudd_expon(4))
    r = reachability(sm)
    top = (1 << 4) - 1
    first = next(k for k, layer in enumerate(r.layers) if layer.evaluate(sm.assignment(top)) == 1.0)
    assert first == 2 ** 4 - 1
    assert r.indicator.evaluate(sm.assignment(top)) == 1.0


# -- SPUDD -------------------------------------------------------------------------------

def test_spudd_on_coin():
    d = load_world("coin")
    sm = pltlstr_translate(d)
    cfg = SolverConfig(beta=0.99, epsilon=1e-4)
    r = spudd_solve(sm, cfg)
    assert r.iterations == 1277
    vi = value_iteration(pltlmin_translate(d), cfg)
    assert abs(r.value_at_start - vi.value_at_start) <= 1e-6


def test_spudd_zero_reward():
    sm = pltlstr_translate(load_world("coin").with_rewards([], "pltl"))
    r = spudd_solve(sm, SolverConfig(beta=0.9))
    assert r.iterations == 1
    assert r.value.is_constant and r.value.constant_value == 0.0


@pytest.mark.parametrize("make", [coin, fig3, lambda: onoff(3)], ids=["coin", "fig3", "onoff3"])
def test_spudd_matches_state_based_values(make):
    d, _ = make()
    cfg = SolverConfig(beta=0.95, epsilon=1e-8)
    vi = value_iteration(pltlmin_translate(d), cfg).value_at_start
    sm = pltlstr_translate(d)
    plain = spudd_solve(sm, cfg).value_at_start
    restricted = spudd_solve(sm, cfg, reachability(sm).indicator).value_at_start
    assert abs(plain - vi) <= 1e-6
    assert abs(restricted - plain) <= 1e-9


def test_spudd_policy_is_optimal_on_fig3():
    d = load_world("fig3")
    sm = pltlstr_translate(d)
    r = spudd_solve(sm, SolverConfig(beta=0.95, epsilon=1e-6))
    a, b = d.action_names.index("a"), d.action_names.index("b")
    assert r.policy.evaluate(sm.assignment(0)) == b
    assert r.policy.evaluate(sm.assignment(d.state_of({"q"}))) == a

