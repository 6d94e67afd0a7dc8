import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from globlin.exceptions import ArityError, EvalDomainError, ExprError, ExprSyntaxError, UnknownIdentifier
from globlin.expr import CompiledField, compile_field, evaluate, numeric_jacobian, parse, to_source, variables


def ev(src, *point):
    return evaluate(parse(src), list(point))


class TestParseEvaluate:
    def test_precedence(self):
        assert ev("2+3*4", 0.0) == 14.0

    def test_unary_minus_below_power(self):
        assert ev("-x1^3", 0.5) == -0.125
        assert ev("(-x1)^2", 3.0) == 9.0
        assert ev("-x1^2", 3.0) == -9.0

    def test_exponential_of_inverse_square(self):
        assert ev("exp(-1/(2*x1^2))", 0.5) == pytest.approx(0.1353352832366127, rel=1e-15)

    def test_power_right_associative(self):
        assert ev("2^3^2") == 512.0
        assert ev("2^-1") == 0.5

    def test_left_associative(self):
        assert ev("8/4/2") == 1.0
        assert ev("8-4-2") == 2.0

    def test_whitespace_and_constants(self):
        assert ev("  pi *\t1 ") == math.pi
        assert ev("e") == math.e

    def test_variables(self):
        assert ev("x1+x2", 1.0, 2.0) == 3.0
        assert ev("x1^4/4 + x2^4/4", 1.0, 1.0) == 0.5
        assert variables(parse("x3*sin(x1)")) == {1, 3}

    @pytest.mark.parametrize("func,ref", [
        ("sin", math.sin), ("cos", math.cos), ("exp", math.exp), ("log", math.log),
        ("sqrt", math.sqrt), ("tanh", math.tanh), ("abs", abs),
    ])
    def test_functions(self, func, ref):
        assert ev(f"{func}(x1)", 0.7) == ref(0.7)

    def test_negative_base_integer_power(self):
        assert ev("x1^3", -2.0) == -8.0
        assert ev("x1^-2", -2.0) == 0.25

    @pytest.mark.parametrize("src,point", [
        ("sqrt(x1)", -1.0), ("log(x1)", -1.0), ("log(x1)", 0.0), ("x1^-1", 0.0),
        ("x1^0.5", -4.0), ("1/x1", 0.0), ("exp(x1)", 1000.0),
    ])
    def test_domain_errors(self, src, point):
        with pytest.raises(EvalDomainError):
            ev(src, point)

    def test_domain_error_reports_node(self):
        with pytest.raises(EvalDomainError) as info:
            ev("1 + sqrt(x1)", -1.0)
        assert info.value.offset == 4


class TestErrors:
    def test_syntax_error_offset(self):
        with pytest.raises(ExprSyntaxError) as info:
            parse("1 + * 2")
        assert info.value.offset == 4
        assert info.value.name == "SyntaxError"
        assert info.value.expected

    @pytest.mark.parametrize("src", ["", "(", "1 +", "x1 x2", "sin", "sin(", "3 $ 4", "x", "x0", "1..2"])
    def test_malformed(self, src):
        with pytest.raises(ExprError):
            parse(src)

    def test_unknown_identifier(self):
        with pytest.raises(UnknownIdentifier):
            parse("foo(x1)")
        with pytest.raises(UnknownIdentifier):
            parse("x3", n_vars=2)

    def test_arity(self):
        with pytest.raises(ArityError):
            parse("sin(x1, x2)")

    def test_deep_nesting_is_an_error_not_a_crash(self):
        with pytest.raises(ExprSyntaxError):
            parse("(" * 5000 + "1" + ")" * 5000)

    def test_missing_coordinates(self):
        with pytest.raises(ValueError):
            ev("x2", 1.0)


# Random well-formed expressions for the round-trip property.
_leaf = st.one_of(
    st.floats(0, 1e6, allow_nan=False).map(repr),
    st.integers(1, 3).map(lambda i: f"x{i}"),
    st.sampled_from(["pi", "e"]),
)
_exprs = st.recursive(
    _leaf,
    lambda sub: st.one_of(
        st.tuples(sub, st.sampled_from("+-*/^"), sub).map(lambda t: f"{t[0]}{t[1]}{t[2]}"),
        sub.map(lambda s: f"-{s}"),
        sub.map(lambda s: f"({s})"),
        st.tuples(st.sampled_from(["sin", "cos", "exp", "log", "sqrt", "tanh", "abs"]), sub)
        .map(lambda t: f"{t[0]}({t[1]})"),
    ),
    max_leaves=12,
)


@given(_exprs)
def test_print_parse_round_trip(src):
    tree = parse(src)
    assert parse(to_source(tree)) == tree


@given(st.binary(max_size=64))
def test_arbitrary_bytes_parse_or_raise(data):
    try:
        parse(data)
    except ExprError:
        pass


class TestField:
    def test_compiled_field(self):
        f = compile_field(["-x1", "-x2"])
        assert f.dimension == 2
        np.testing.assert_array_equal(f([1.0, 2.0]), [-1.0, -2.0])

    def test_field_rejects_out_of_range_variable(self):
        with pytest.raises(UnknownIdentifier):
            CompiledField(["x1", "x3"])

    def test_scalar(self):
        assert CompiledField("x1^2/2").scalar([3.0]) == 4.5

    def test_jacobian_linear(self):
        J = numeric_jacobian(compile_field(["-x1", "-x2"]), [0.0, 0.0])
        np.testing.assert_allclose(J, -np.eye(2), atol=1e-8)

    def test_jacobian_nonhyperbolic(self):
        f = compile_field(["-x1^3"])
        np.testing.assert_allclose(numeric_jacobian(f, [0.0]), [[0.0]], atol=1e-8)
        np.testing.assert_allclose(numeric_jacobian(f, [1.0]), [[-3.0]], atol=1e-6)

    def test_jacobian_step_must_be_positive(self):
        with pytest.raises(ValueError):
            numeric_jacobian(compile_field(["x1"]), [0.0], step=0.0)

    def test_jacobian_propagates_domain_error(self):
        with pytest.raises(EvalDomainError):
            numeric_jacobian(compile_field(["sqrt(x1)"]), [0.0])


def test_long_chains_are_bounded():
    assert ev("+".join(["1"] * 200)) == 200.0
    with pytest.raises(ExprSyntaxError):
        parse("+".join(["1"] * 5000))
