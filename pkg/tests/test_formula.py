import itertools
import random

import pytest
from hypothesis import given
from strategies import fltl_formulae, pltl_formulae, random_pltl, random_sequence

from nmrdpp.formula import (
    AND,
    ATOM,
    DOLLAR,
    FF,
    FLTL,
    NATOM,
    NOT,
    PLTL,
    PRV,
    SNC,
    TRUE,
    TT,
    UNTIL,
    And,
    FormulaSyntaxError,
    Not,
    Or,
    Prv,
    Snc,
    Until,
    alw,
    atom,
    eval_pltl,
    parse_formula,
    pdi,
    print_formula,
    simplify,
    sub_closure,
    to_text,
)

p, q = atom("p"), atom("q")


# -- hash-consing and canonical keys ---------------------------------------------------

def test_structurally_equal_formulae_are_identical():
    a = And(p, Prv(Snc(TT, q)))
    b = And(atom("p"), Prv(Snc(TT, atom("q"))))
    assert a is b
    assert a.key == b.key


@given(pltl_formulae(max_depth=4), pltl_formulae(max_depth=4))
def test_key_equality_matches_identity(f, g):
    assert (f.key == g.key) == (f is g)


# -- parsing and printing ----------------------------------------------------------------

def test_parse_coin_first_reward():
    f = parse_formula("heads and ~prv (pdi heads)")
    assert f.op == AND
    left, right = f.args
    assert left.op == ATOM and left.name == "heads"
    assert right.op == NOT and right.args[0].op == PRV
    inner = right.args[0].args[0]
    assert inner.op == SNC and inner.args[0].op == TRUE and inner.args[1] is atom("heads")


def test_parse_constant():
    assert parse_formula("tt") is TT


def test_parse_first_p_fltl():
    f = parse_formula("~p until (p and $)", FLTL)
    assert f.op == UNTIL
    assert f.args[0].op == NATOM
    assert f.args[1].args[1].op == DOLLAR


def test_print_examples():
    assert print_formula(TT) == "tt"
    assert print_formula(Prv(Prv(p))) == "prv^2 p"
    f = parse_formula("~p until (p and $)", FLTL)
    assert print_formula(f) == "~p until (p and $)"


def test_derived_operators_expand():
    assert parse_formula("pdi p") is Snc(TT, p)
    assert parse_formula("prv^3 p") is Prv(Prv(Prv(p)))
    assert parse_formula("alw p", FLTL) is Until(p, FF)
    assert parse_formula("pbx p") is Not(Snc(TT, Not(p)))


def test_precedence():
    assert parse_formula("p or q and p") is Or(p, And(q, p))
    assert parse_formula("~p and prv q snc p") is Snc(And(Not(p), Prv(q)), p)


def test_syntax_error_has_location():
    with pytest.raises(FormulaSyntaxError) as e:
        parse_formula("p and (q")
    assert "column" in str(e.value)


def test_dialects_are_checked():
    with pytest.raises(FormulaSyntaxError):
        parse_formula("prv p", FLTL)
    with pytest.raises(FormulaSyntaxError):
        parse_formula("nxt p", PLTL)


@given(pltl_formulae(max_depth=6))
def test_pltl_round_trip(f):
    text = to_text(f)
    assert parse_formula(text, PLTL) is f
    assert to_text(parse_formula(text, PLTL)) == text


@given(fltl_formulae(max_depth=6))
def test_fltl_round_trip(f):
    text = to_text(f)
    assert parse_formula(text, FLTL) is f


# -- simplification ----------------------------------------------------------------------

def test_simplify_examples():
    assert simplify(And(FF, Until(p, q))) is FF
    assert simplify(Or(TT, p)) is TT
    assert simplify(Or(p, p)) is p


def test_simplify_preserves_eval_on_random_cases():
    rng = random.Random(7)
    for _ in range(1000):
        f = random_pltl(rng, rng.randint(1, 5))
        seq = random_sequence(rng, rng.randint(1, 6))
        i = rng.randrange(len(seq))
        assert eval_pltl(seq, i, simplify(f)) == eval_pltl(seq, i, f), to_text(f)


# -- semantics ---------------------------------------------------------------------------

def test_eval_examples():
    assert not eval_pltl([set()], 0, Prv(TT))
    assert eval_pltl([{"q"}, {"p"}, {"p"}], 2, Snc(p, q))
    assert eval_pltl([set(), {"p"}], 1, parse_formula("p and ~prv (pdi p)"))


def test_past_diamond_matches_brute_force():
    states = [frozenset(), frozenset({"p"})]
    for n in range(1, 7):
        for seq in itertools.product(states, repeat=n):
            for i in range(n):
                want = any("p" in seq[j] for j in range(i + 1))
                assert eval_pltl(seq, i, pdi(p)) == want


# -- subformula closure -----------------------------------------------------------------

def test_closure_examples():
    assert len(sub_closure([parse_formula("q and prv prv p")])) == 10
    assert sub_closure([]) == frozenset()
    assert sub_closure([p]) == {p, Not(p)}


def test_closure_normalises_double_negation():
    assert sub_closure([Not(p)]) == {p, Not(p)}


def test_alw_printing():
    assert to_text(alw(p)) == "alw p"
