import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from distorder.expr import (
    BinOp, Call, EvalError, Neg, Num, ParseError, Var, evaluate, parse, to_source,
)


@pytest.mark.parametrize(
    "src, env, want",
    [
        ("1+x^2", {"x": 2}, 5.0),
        ("alpha*(1-alpha)^2*exp(2*alpha)", {"alpha": 0.5}, 0.5 * 0.25 * math.e),
        ("chi(0.2,0.8,alpha)", {"alpha": 0.5}, 1.0),
        ("chi(0.2,0.8,alpha)", {"alpha": 0.9}, 0.0),
        ("min(alpha,1-alpha)*2", {"alpha": 0.25}, 0.5),
        ("x*(1-x)*exp(x)", {"x": 0.0}, 0.0),
        ("sin(3.141592653589793*x)", {"x": 0.5}, 1.0),
        ("2+3*4", {}, 14.0),
        ("2^3^2", {}, 512.0),
        ("-2^2", {}, -4.0),
        ("2^-1", {}, 0.5),
        ("1e-3*sin(pi/2)", {}, 1e-3),
    ],
)
def test_examples(src, env, want):
    assert parse(src)(**env) == pytest.approx(want, abs=1e-12)


def test_chi_is_boundary_inclusive():
    e = parse("chi(0.2,0.8,alpha)")
    assert e(alpha=0.2) == 1.0 and e(alpha=0.8) == 1.0
    vals = e(alpha=np.linspace(0, 1, 101))
    assert set(np.unique(vals)) <= {0.0, 1.0}


def test_vectorized_and_broadcast_constant():
    x = np.linspace(0, 1, 5)
    assert np.allclose(parse("1+x^2")(x=x), 1 + x**2)
    assert parse("3")(x=x).shape == x.shape


@pytest.mark.parametrize("src, offset", [("1+", 2), ("(1", 2), ("1 $ 2", 2), ("", 0), ("foo(1)", 0)])
def test_syntax_errors_carry_offset(src, offset):
    with pytest.raises(ParseError) as err:
        parse(src)
    assert err.value.offset == offset


def test_arity_and_domain_errors():
    with pytest.raises(ParseError):
        parse("sin(1,2)")
    with pytest.raises(EvalError):
        parse("1/x")(x=0.0)
    with pytest.raises(EvalError):
        parse("x^-1")(x=0.0)
    with pytest.raises(EvalError):
        parse("x+y")(x=1.0)


def test_free_vars_and_constant():
    e = parse("a*x + sin(t) - pi")
    assert e.free_vars == {"a", "x", "t"}
    assert parse("2*pi").is_constant()


names = st.sampled_from(["x", "t", "alpha"])
leaves = st.one_of(
    st.floats(0, 1e6, allow_nan=False).map(Num), names.map(Var)
)


def _extend(children):
    return st.one_of(
        children.map(Neg),
        st.tuples(st.sampled_from("+-*/^"), children, children).map(lambda a: BinOp(*a)),
        st.tuples(st.sampled_from(["sin", "exp", "abs"]), children).map(lambda a: Call(a[0], (a[1],))),
        st.tuples(children, children).map(lambda a: Call("max", a)),
        st.tuples(children, children, children).map(lambda a: Call("chi", a)),
    )


trees = st.recursive(leaves, _extend, max_leaves=12)


@given(trees)
def test_print_parse_roundtrip(tree):
    once = parse(to_source(tree)).tree
    assert once == tree
    assert parse(to_source(once)).tree == once


@given(st.floats(-5, 5), st.floats(-5, 5), st.floats(0.1, 5))
def test_precedence_matches_python(a, b, c):
    got = parse(f"{a!r}+{b!r}*{c!r}-{a!r}/{c!r}")()
    assert got == pytest.approx(a + b * c - a / c, rel=1e-12, abs=1e-12)
