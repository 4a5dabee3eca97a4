import numpy as np
import pytest
from corpus import corpus

from nmrdpp.domains import load_world
from nmrdpp.fltl import fltl_translate
from nmrdpp.formula import FLTL, atom, parse_formula
from nmrdpp.mdp import ActionSpec, DTree, Nmrdp, RewardEntry
from nmrdpp.pltl import (
    PltlGenerator,
    pltlmin_preprocess,
    pltlmin_translate,
    pltlsim_translate,
)
from nmrdpp.solvers import (
    Interrupt,
    SolverConfig,
    evaluate_policy,
    lao_star,
    policy_iteration,
    simulate,
    value_iteration,
)

CORPUS = corpus()
COIN_CFG = SolverConfig(beta=0.99, epsilon=1e-4)


def _absorbing(reward):
    d = Nmrdp(("p",), (ActionSpec("stay"),), initial=1,
              rewards=(RewardEntry("r", atom("p"), reward),))
    return pltlmin_translate(d)


def test_coin_iteration_count():
    m = pltlmin_translate(load_world("coin"))
    r = value_iteration(m, COIN_CFG)
    assert r.iterations == 1277
    assert r.converged
    assert r.value_at_start == pytest.approx(23.154588, abs=1e-6)


def test_coin_iteration_count_under_plain_supnorm_rule():
    # the textbook rule (start from zero, stop when successive iterates differ
    # by less than epsilon) stops much earlier on this problem
    m = pltlmin_translate(load_world("coin"))
    cfg = SolverConfig(beta=0.99, epsilon=1e-4, stopping="supnorm", init="zero")
    assert value_iteration(m, cfg).iterations == 751


def test_single_absorbing_state_without_reward():
    m = _absorbing(0.0)
    assert m.n == 1
    r = value_iteration(m, SolverConfig(beta=0.9, epsilon=1e-6))
    assert r.iterations == 1
    assert r.value[0] == 0.0


def test_single_absorbing_state_geometric_series():
    cfg = SolverConfig(beta=0.9, epsilon=1e-6)
    r = value_iteration(_absorbing(3.0), cfg)
    assert abs(r.value[0] - 30.0) <= cfg.epsilon / (1 - cfg.beta)


def test_policy_iteration_matches_value_iteration_on_coin():
    m = pltlmin_translate(load_world("coin"))
    vi, pi = value_iteration(m, COIN_CFG), policy_iteration(m, COIN_CFG)
    assert vi.policy == pi.policy
    assert abs(vi.value_at_start - pi.value_at_start) <= 10 * COIN_CFG.epsilon / (1 - COIN_CFG.beta)


def test_policy_iteration_on_a_chain():
    d = Nmrdp(("p",), (ActionSpec("go", {0: DTree.leaf(1.0)}),),
              rewards=(RewardEntry("r", atom("p"), 1.0),))
    r = policy_iteration(pltlmin_translate(d), SolverConfig(beta=0.5))
    assert r.iterations <= 2
    assert r.value_at_start == pytest.approx(1.0)


def test_fig3_optimal_policy():
    _, _, f = next(c for c in CORPUS if c[0] == "fig3")
    m = fltl_translate(f)
    d = m.nmrdp
    a, b = d.action_names.index("a"), d.action_names.index("b")
    for solver in (value_iteration, policy_iteration):
        r = solver(m, SolverConfig(beta=0.95, epsilon=1e-6))
        for i, e in enumerate(m.estates):
            s = d.state_set(e.state)
            if not s:
                assert r.policy[i] == b
            elif s == {"q"}:
                assert r.policy[i] == a


@pytest.mark.parametrize("name,d,f", CORPUS, ids=[c[0] for c in CORPUS])
def test_solver_agreement(name, d, f):
    cfg = SolverConfig(beta=0.9, epsilon=1e-5)
    bound = 10 * cfg.epsilon / (1 - cfg.beta)
    m = pltlmin_translate(d)
    vi = value_iteration(m, cfg).value_at_start
    assert abs(vi - policy_iteration(m, cfg).value_at_start) <= bound
    lao = lao_star(PltlGenerator(d, None, pltlmin_preprocess(d)), cfg)
    assert abs(vi - lao.value_at_start) <= bound
    assert lao.expanded_count <= m.n
    lao_f = lao_star(fltl_translate(f, mode="on-demand"), cfg)
    assert abs(vi - lao_f.value_at_start) <= bound


@pytest.mark.parametrize("name,d,f", CORPUS, ids=[c[0] for c in CORPUS])
def test_translation_agreement(name, d, f):
    cfg = SolverConfig(beta=0.9, epsilon=1e-8)
    values = [value_iteration(m, cfg).value_at_start
              for m in (pltlsim_translate(d), pltlmin_translate(d), fltl_translate(f))]
    assert max(values) - min(values) <= 1e-6


def test_value_iteration_from_zero_is_monotone():
    m = pltlmin_translate(load_world("coin"))
    prev = np.zeros(m.n)
    for k in range(1, 40):
        cfg = SolverConfig(beta=0.9, epsilon=1e-12, max_iterations=k, init="zero")
        v = value_iteration(m, cfg).value
        assert np.all(v >= prev - 1e-12)
        prev = v


def test_evaluate_optimal_policy():
    m = pltlmin_translate(load_world("coin"))
    r = value_iteration(m, COIN_CFG)
    for mode in ("direct", "iterative"):
        cfg = SolverConfig(beta=0.99, epsilon=1e-4, evaluation=mode)
        v = evaluate_policy(m, r.policy, cfg)
        assert abs(v[0] - r.value_at_start) <= COIN_CFG.epsilon


def test_evaluate_rejects_undefined_policy():
    m = pltlmin_translate(load_world("coin"))
    with pytest.raises(ValueError):
        evaluate_policy(m, [None] * m.n)


def test_simulation_is_reproducible():
    m = pltlmin_translate(load_world("coin"))
    pol = value_iteration(m, COIN_CFG).policy
    a = simulate(m, pol, trials=50, horizon=30, seed=4, beta=0.99)
    b = simulate(m, pol, trials=50, horizon=30, seed=4, beta=0.99)
    assert a.returns == b.returns
    assert a.mean == b.mean and a.variance == b.variance


def test_zero_reward_simulation():
    d = load_world("coin").with_rewards([], "pltl")
    m = pltlmin_translate(d)
    st = simulate(m, [0] * m.n, trials=20, horizon=20, seed=1)
    assert st.returns == [0.0] * 20


def test_simulation_needs_a_default_for_undefined_states():
    m = pltlmin_translate(load_world("coin"))
    with pytest.raises(ValueError):
        simulate(m, [None] * m.n, trials=1, horizon=5)
    st = simulate(m, [None] * m.n, trials=1, horizon=5, default_action=0)
    assert len(st.returns) == 1


def _two_branch():
    """``good`` reaches a rewarding absorbing region at once; ``bad`` wanders
    into a large unrewarded region."""
    props = ("g", "b1", "b2", "b3", "b4")
    good = ActionSpec("good", {0: DTree.test(1, DTree.leaf(0.0), DTree.leaf(1.0))})
    bad = ActionSpec("bad", {k: DTree.test(0, DTree.leaf(0.0), DTree.leaf(0.5)) for k in range(1, 5)})
    f = parse_formula("alw (g -> $)", FLTL)
    return Nmrdp(props, (good, bad), rewards=(RewardEntry("g", f, 1.0),), dialect=FLTL)


def test_lao_star_skips_dominated_region():
    d = _two_branch()
    cfg = SolverConfig(beta=0.9, epsilon=1e-6)
    full = fltl_translate(d)
    r = lao_star(fltl_translate(d, mode="on-demand"), cfg)
    assert r.expanded_count < full.n
    assert r.value_at_start == pytest.approx(value_iteration(full, cfg).value_at_start, abs=1e-5)


def test_lao_star_can_be_interrupted():
    flag = Interrupt()
    flag.set()
    r = lao_star(fltl_translate(_two_branch(), mode="on-demand"), SolverConfig(), flag)
    assert r.interrupted
    assert r.policy


def test_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(beta=1.0)
    with pytest.raises(ValueError):
        SolverConfig(epsilon=0.0)
    with pytest.raises(ValueError):
        SolverConfig(stopping="other")
