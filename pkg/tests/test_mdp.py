import copy

import pytest
from corpus import corpus

from nmrdpp.audit import audit_minimality, check_equivalence
from nmrdpp.domains import load_world
from nmrdpp.fltl import fltl_translate
from nmrdpp.mdp import (
    ActionSpec,
    DomainError,
    DTree,
    EState,
    ExpandedMdp,
    Nmrdp,
    expand,
)
from nmrdpp.pltl import pltlmin_translate, pltlsim_translate

CORPUS = corpus()
AUDITED = [c for c in CORPUS if c[0] in ("coin", "fig1", "fig3", "onoff3", "random4-s0")]
METHODS = {
    "pltlsim": lambda d, f: pltlsim_translate(d),
    "pltlmin": lambda d, f: pltlmin_translate(d),
    "fltl": lambda d, f: fltl_translate(f),
}


def test_coin_successors():
    d = load_world("coin")
    flip, tilt = 0, 1
    heads = d.state_of({"heads"})
    assert dict(d.successors(0, flip)) == {0: 0.5, heads: 0.5}
    assert dict(d.successors(heads, tilt))[heads] == pytest.approx(0.9)


def test_action_without_effects_keeps_the_state():
    d = Nmrdp(("p", "q"), (ActionSpec("noop"),), initial=1)
    for s in range(4):
        assert d.successors(s, 0) == ((s, 1.0),)


def test_successors_are_products_of_effects():
    t = DTree.test(0, DTree.leaf(0.3), DTree.leaf(0.6))
    d = Nmrdp(("p", "q"), (ActionSpec("a", {0: DTree.leaf(0.5), 1: t}),))
    dist = dict(d.successors(1, 0))
    assert dist == pytest.approx({0: 0.35, 1: 0.35, 2: 0.15, 3: 0.15})


def test_invalid_domains_are_rejected():
    with pytest.raises(DomainError):
        DTree.leaf(1.5)
    with pytest.raises(DomainError):
        Nmrdp(("p", "p"), (ActionSpec("a"),))
    with pytest.raises(DomainError):
        Nmrdp(("p",), ())
    with pytest.raises(DomainError):
        Nmrdp(("p",), (ActionSpec("a", {3: DTree.leaf(1.0)}),))


@pytest.mark.parametrize("name,d,f", CORPUS, ids=[c[0] for c in CORPUS])
@pytest.mark.parametrize("method", sorted(METHODS))
def test_distributions_sum_to_one(name, d, f, method):
    m = METHODS[method](d, f)
    assert m.validate() == []
    for i in range(m.n):
        for a in m.applicable(i):
            states = [m.tau(j) for j, _ in m.transitions[i][a]]
            assert len(states) == len(set(states))


@pytest.mark.parametrize("name,d,f", AUDITED, ids=[c[0] for c in AUDITED])
@pytest.mark.parametrize("method", sorted(METHODS))
def test_equivalence_for_every_method(name, d, f, method):
    m = METHODS[method](d, f)
    rep = check_equivalence(f if method == "fltl" else d, m, horizon=6)
    assert rep.ok, rep.violations


def test_fig1_expansion_rewards_one_estate():
    d = load_world("fig1")
    m = pltlmin_translate(d)
    assert check_equivalence(d, m, horizon=5).ok
    rewarded = [e for e in m.estates if e.reward > 0]
    assert len(rewarded) == 1
    assert "p" in d.state_set(rewarded[0].state)


def test_perturbed_probability_is_reported():
    d = load_world("fig3")
    m = pltlmin_translate(d)
    bad = copy.deepcopy(m)
    i = next(k for k in range(bad.n) if len(bad.transitions[k][0]) > 1)
    dist = list(bad.transitions[i][0])
    (j0, p0), (j1, p1) = dist[0], dist[1]
    dist[0], dist[1] = (j0, p0 + 0.01), (j1, p1 - 0.01)
    bad.transitions[i][0] = tuple(dist)
    rep = check_equivalence(d, bad, horizon=4)
    assert not rep.ok
    assert any("probability" in v for v in rep.violations)


def test_wrong_reward_is_reported():
    d = load_world("fig3")
    m = pltlmin_translate(d)
    bad = copy.deepcopy(m)
    e = bad.estates[0]
    bad.estates[0] = EState(e.state, e.annotation, e.reward + 1.0)
    assert not check_equivalence(d, bad, horizon=3).ok


def test_blind_minimality_of_fltl_fig3():
    _, _, f = next(c for c in CORPUS if c[0] == "fig3")
    m = fltl_translate(f)
    rep = audit_minimality(m, horizon=6, kind="blind")
    assert rep.merge_required == []


def test_true_minimality_flags_the_extra_fltl_estate():
    _, d, f = next(c for c in CORPUS if c[0] == "fig3")
    m = fltl_translate(f)
    assert m.n == pltlmin_translate(d).n + 1
    rep = audit_minimality(m, horizon=6, kind="true")
    assert rep.suspect
    for i, j in rep.suspect:
        assert m.tau(i) == m.tau(j)


def test_duplicated_estate_is_merge_required():
    _, _, f = next(c for c in CORPUS if c[0] == "fig3")
    m = fltl_translate(f)
    dup = ExpandedMdp(m.nmrdp, m.estates + [m.estates[1]], m.transitions + [m.transitions[1]],
                      m.initial, m.method, m.generator)
    rep = audit_minimality(dup, horizon=4, kind="blind")
    assert (1, m.n) in rep.merge_required


def test_empty_mdp_dot_has_one_node():
    d = load_world("fig1")
    m = ExpandedMdp(d, [], [], 0, "none", None)
    dot = m.to_dot()
    assert dot.startswith("digraph")
    assert dot.count("[label=") == 1


def test_expand_respects_limit():
    from nmrdpp.mdp import ResourceLimitError
    d = load_world("coin")
    with pytest.raises(ResourceLimitError):
        pltlsim_translate(d, max_estates=3)


def test_policy_dot_has_one_edge_group_per_estate():
    d = load_world("coin")
    m = pltlmin_translate(d)
    policy = [0] * m.n
    dot = m.to_dot(policy=policy, policy_only=True)
    for i in range(m.n):
        assert f"e{i} -> " in dot
    assert "tilt" not in dot


def test_expand_uses_generator_order():
    m = expand(pltlmin_translate(load_world("coin")).generator)
    assert m.initial == 0 and m.n == 6
