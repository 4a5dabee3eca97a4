import re

import pytest

from nmrdpp.domains import (
    RandomDomainParams,
    WorldSyntaxError,
    bundled_worlds,
    format_world,
    gen_complete,
    gen_miconic,
    gen_onoff,
    gen_random,
    gen_random_rewards,
    gen_spudd_expon,
    gen_spudd_linear,
    load_world,
    miconic_heuristic,
    parse_world,
)
from nmrdpp.fltl import fltl_translate
from nmrdpp.formula import FLTL, PLTL, eval_pltl, holds, parse_formula, simplify
from nmrdpp.mdp import DomainError
from nmrdpp.solvers import SolverConfig, lao_star, simulate, value_iteration

GENERATORS = {
    "linear": gen_spudd_linear,
    "expon": gen_spudd_expon,
    "onoff": gen_onoff,
    "complete": gen_complete,
}


def _check_distributions(d):
    for s in range(1 << d.n_props):
        for a in range(len(d.actions)):
            assert sum(p for _, p in d.successors(s, a)) == pytest.approx(1.0, abs=1e-9)


# -- world files --------------------------------------------------------------------------

def test_coin_world():
    d = load_world("coin")
    assert d.action_names == ["flip", "tilt"]
    assert d.initial == 0
    assert [(r.name, r.reward) for r in d.rewards] == [("first", 5.0), ("seq", 1.0)]
    assert d.dialect == PLTL


def test_one_state_world():
    d = parse_world("action noop\nendaction\np = tt\n")
    assert d.reachable_states() == [d.initial] == [1]


@pytest.mark.parametrize("text,what", [
    ("action a\n  heads (1.5)\nendaction\n", "outside"),
    ("action a\n  p (0.5)\nendaction\n[r, x]? p\n", "not a real"),
    ("action a\n  p (0.5)\nendaction\n[r, 1]? zz\n", "undeclared"),
    ("action a\n  p (0.5\nendaction\n", "line 2"),
    ("action a\n  p (0.5)\n", "endaction"),
])
def test_world_errors(text, what):
    with pytest.raises(WorldSyntaxError) as e:
        parse_world(text)
    assert what in str(e.value)


@pytest.mark.parametrize("name", bundled_worlds())
def test_world_round_trip(name):
    d = load_world(name)
    again = parse_world(format_world(d), name)
    assert again.props == d.props and again.initial == d.initial
    assert [(r.name, r.formula, r.reward) for r in again.rewards] == \
        [(r.name, r.formula, r.reward) for r in d.rewards]
    for s in range(1 << d.n_props):
        for a in range(len(d.actions)):
            assert again.successors(s, a) == d.successors(s, a)


def test_fltl_world_with_control():
    text = ("dialect fltl\naction a\n  p (0.5)\n  q (p (1) (0))\nendaction\n"
            "[r, 2]? alw (q -> $)\ncontrol? alw (p -> nxt q)\n")
    d = parse_world(text)
    assert d.dialect == FLTL
    assert d.control is not None
    assert fltl_translate(d).n > 0


# -- hand-coded generators ----------------------------------------------------------------

@pytest.mark.parametrize("kind", sorted(GENERATORS))
@pytest.mark.parametrize("n", range(1, 7))
def test_every_state_is_reachable(kind, n):
    d = GENERATORS[kind](n)
    assert d.initial == 0
    _check_distributions(d)
    assert len(d.reachable_states()) == 1 << n


def test_complete_probabilities():
    d = gen_complete(3)
    a2 = d.action_names.index("a2")
    for s in range(8):
        dist = dict(d.successors(s, a2))
        p2 = sum(p for t, p in dist.items() if t & 2)
        p1 = sum(p for t, p in dist.items() if t & 1)
        p3 = sum(p for t, p in dist.items() if t & 4)
        assert (p1, p2, p3) == pytest.approx((0.5, 0.5, 0.5))
    a3 = d.action_names.index("a3")
    assert sum(p for t, p in d.successors(0, a3) if t & 4) == pytest.approx(0.75)


def test_expon_counts():
    d = gen_spudd_expon(3)
    a3 = d.action_names.index("a3")
    assert d.successors(d.state_of({"p1", "p2"}), a3) == ((d.state_of({"p3"}), 1.0),)


def test_linear_sets_and_clears():
    d = gen_spudd_linear(3)
    a2 = d.action_names.index("a2")
    assert d.successors(d.state_of({"p1", "p3"}), a2) == ((d.state_of({"p2", "p3"}), 1.0),)


def test_onoff_turn_on_when_already_on():
    d = gen_onoff(1)
    on = d.action_names.index("on1")
    s = d.state_of({"p1"})
    assert d.successors(s, on) == ((s, 1.0),)
    assert dict(d.successors(0, on)) == pytest.approx({0: 0.2, s: 0.8})


# -- random domains -------------------------------------------------------------------------

def test_random_domain_full_reachability():
    d = gen_random(RandomDomainParams(n=4, seed=3, proportion_reachable=1.0))
    assert len(d.reachable_states()) == 16
    _check_distributions(d)


def test_random_domain_without_uncertainty_has_boolean_leaves():
    d = gen_random(RandomDomainParams(n=5, seed=1, uncertainty=0.0))
    for a in d.actions:
        for t in a.effects.values():
            assert set(t.leaves()) <= {0.0, 1.0}


def test_random_domain_effects_cover_every_proposition():
    d = gen_random(RandomDomainParams(n=7, action_count=3, seed=2))
    covered = set()
    for a in d.actions:
        covered |= set(a.effects)
    assert covered == set(range(7))


def test_random_domain_is_deterministic():
    a = gen_random(RandomDomainParams(n=5, seed=9, proportion_reachable=0.5))
    b = gen_random(RandomDomainParams(n=5, seed=9, proportion_reachable=0.5))
    assert format_world(a) == format_world(b)


def test_random_rewards_respect_reachability():
    d = gen_random(RandomDomainParams(n=5, seed=1, proportion_reachable=0.3, structure=0.2))
    reach = d.reachable_states()
    assert len(reach) < 32
    rewards = gen_random_rewards(d, 2, 2, seed=4)
    assert len(rewards) == 4
    for r in rewards[:2]:
        assert any(holds(r.formula, d.state_set(s)) for s in reach)
        assert 1 <= r.reward <= 10
    for r in rewards[2:]:
        assert not any(holds(r.formula, d.state_set(s)) for s in reach)


def test_random_parameters_are_checked():
    with pytest.raises(DomainError):
        RandomDomainParams(uncertainty=2.0)
    with pytest.raises(DomainError):
        gen_random(RandomDomainParams(n=6, seed=0, proportion_reachable=1.0, structure=0.0,
                                      uncertainty=0.0, max_insertions=0, action_count=1))


# -- Miconic ---------------------------------------------------------------------------------

def test_miconic_reward_renderings():
    d = gen_miconic(2, 1, "simple", FLTL)
    assert d.rewards[0].formula is simplify(parse_formula("~ServedP1 until (ServedP1 and $)", FLTL)) \
        or d.rewards[0].formula is parse_formula("~ServedP1 until (ServedP1 and $)", FLTL)
    h = gen_miconic(3, 3, "hard", PLTL, seed=0)
    ns = next(r for r in h.rewards if r.name.startswith("nonstop"))
    i = ns.name[len("nonstop"):]
    want = parse_formula(f"NonStopP{i} and prv^2 ~BoardedP{i} and prv^2 ~ServedP{i} and ServedP{i}")
    seqs = [[{"NonStopP" + i}, {"NonStopP" + i}, {"NonStopP" + i, "ServedP" + i}],
            [{"NonStopP" + i}, {"NonStopP" + i, "BoardedP" + i}, {"NonStopP" + i, "ServedP" + i}],
            [{"NonStopP" + i, "BoardedP" + i}, {"NonStopP" + i}, {"ServedP" + i}]]
    for seq in seqs:
        assert eval_pltl(seq, 2, ns.formula) == eval_pltl(seq, 2, want)


@pytest.mark.parametrize("variant", ["simple", "hard"])
@pytest.mark.parametrize("dialect", [PLTL, FLTL])
def test_miconic_is_well_formed(variant, dialect):
    d = gen_miconic(3, 2, variant, dialect, seed=1)
    for s in d.reachable_states():
        for a in range(len(d.actions)):
            assert sum(p for _, p in d.successors(s, a)) == pytest.approx(1.0)
    kinds = {re.sub(r"(up|down)?\d+$", "", r.name) for r in d.rewards}
    assert kinds == ({"served"} if variant == "simple" else {"served", "nonstop", "supervised", "direct"})


def test_two_floor_one_passenger_value():
    d = gen_miconic(2, 1, "simple", FLTL, seed=0)
    beta = 0.9
    r = value_iteration(fltl_translate(d), SolverConfig(beta=beta, epsilon=1e-9))
    info = d.miconic
    # steps until served: go to the origin (if not there), then to the destination
    t = (0 if info.start_floor == info.origin[0] else 1) + 1
    assert r.value_at_start == pytest.approx(50 * beta ** t, abs=1e-6)


@pytest.mark.parametrize("n", [2, 3])
def test_optimal_miconic_policy_serves_everyone(n):
    d = gen_miconic(n, n, "simple", FLTL, seed=n)
    m = fltl_translate(d)
    r = value_iteration(m, SolverConfig(beta=0.95, epsilon=1e-6))
    horizon = 4 * n * n
    served = [d.index[f"ServedP{i}"] for i in range(1, n + 1)]
    i = m.initial
    for _ in range(horizon):
        (j, _p), = m.transitions[i][r.policy[i]]
        i = j
    assert all((m.tau(i) >> b) & 1 for b in served)
    st = simulate(m, r.policy, trials=3, horizon=horizon, seed=0)
    assert st.variance == pytest.approx(0.0)


def test_miconic_heuristic_prunes_search():
    d = gen_miconic(3, 3, "simple", FLTL, seed=3)
    cfg = SolverConfig(beta=0.95, epsilon=1e-6)
    plain = lao_star(fltl_translate(d, mode="on-demand"), cfg)
    cfg_h = SolverConfig(beta=0.95, epsilon=1e-6, heuristic=miconic_heuristic(d, 0.95))
    informed = lao_star(fltl_translate(d, mode="on-demand"), cfg_h)
    assert informed.expanded_count < plain.expanded_count
    assert informed.value_at_start == pytest.approx(plain.value_at_start, abs=1e-4)


@pytest.mark.parametrize("dialect", [PLTL, FLTL])
def test_hard_miconic_two_by_two_solves(dialect):
    from nmrdpp.pltl import pltlmin_translate
    d = gen_miconic(2, 2, "hard", dialect, seed=0)
    m = fltl_translate(d) if dialect == FLTL else pltlmin_translate(d)
    r = value_iteration(m, SolverConfig(beta=0.9, epsilon=1e-6))
    assert r.value_at_start > 0
