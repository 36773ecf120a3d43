#include <doctest.h>

#include <cmath>
#include <random>

#include "stablekit/expr.hpp"

using namespace stablekit;

TEST_CASE("precedence and associativity") {
    CHECK(parse_expr("2+3*4").eval(Vec(0.0)) == doctest::Approx(14.0));
    CHECK(parse_expr("2*3+4").eval(Vec(0.0)) == doctest::Approx(10.0));
    CHECK(parse_expr("2-3-4").eval(Vec(0.0)) == doctest::Approx(-5.0));
    CHECK(parse_expr("12/4/3").eval(Vec(0.0)) == doctest::Approx(1.0));
    CHECK(parse_expr("-2*3").eval(Vec(0.0)) == doctest::Approx(-6.0));
    CHECK(parse_expr("2--3").eval(Vec(0.0)) == doctest::Approx(5.0));
}

TEST_CASE("function evaluation") {
    CHECK(parse_expr("1 + 0.5*tanh(x1)").eval(Vec(0.0)) == doctest::Approx(1.0));
    CHECK(parse_expr("clamp(x1, 0.6, 1.4)").eval(Vec(2.0)) == doctest::Approx(1.4));
    CHECK(parse_expr("exp(0)").eval(Vec(0.0)) == doctest::Approx(1.0));
    CHECK(parse_expr("min(3, x1)").eval(Vec(7.0)) == doctest::Approx(3.0));
    CHECK(parse_expr("max(3, x1)").eval(Vec(7.0)) == doctest::Approx(7.0));
    CHECK(parse_expr("sqrt(abs(x1))").eval(Vec(-9.0)) == doctest::Approx(3.0));
    CHECK(parse_expr("sin(x1)*sin(x1)+cos(x1)*cos(x1)").eval(Vec(0.37)) ==
          doctest::Approx(1.0));
}

TEST_CASE("time variable") {
    Expr e = parse_expr("x1*t");
    CHECK(e.eval(Vec(3.0), 2.0) == doctest::Approx(6.0));
    CHECK(e.uses_time());
    CHECK_THROWS_AS(e.eval(Vec(3.0)), EvalError);
}

TEST_CASE("syntax errors carry byte offsets") {
    try {
        parse_expr("min(");
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(e.offset == 4);
        CHECK(!e.expected.empty());
    }
    CHECK_THROWS_AS(parse_expr("2+*3"), ParseError);
    CHECK_THROWS_AS(parse_expr("foo(1)"), ParseError);
    CHECK_THROWS_AS(parse_expr("2+"), ParseError);
    CHECK_THROWS_AS(parse_expr("bogus"), ParseError);
    CHECK_THROWS_AS(parse_expr("min(1,2,3)"), ParseError);
}

TEST_CASE("domain errors") {
    CHECK_THROWS_AS(parse_expr("1/x1").eval(Vec(0.0)), EvalError);
    CHECK_THROWS_AS(parse_expr("log(x1)").eval(Vec(-1.0)), EvalError);
    CHECK_THROWS_AS(parse_expr("log(0)").eval(Vec(0.0)), EvalError);
    CHECK_THROWS_AS(parse_expr("x2").eval(Vec(1.0)), EvalError);
}

namespace {

Expr::Node random_node(std::mt19937& rng, int depth) {
    std::uniform_int_distribution<int> kind(0, depth <= 0 ? 1 : 4);
    std::uniform_real_distribution<double> num(-4.0, 4.0);
    Expr::Node n;
    switch (kind(rng)) {
        case 0:
            n.kind = Expr::Kind::Number;
            n.value = num(rng);
            break;
        case 1:
            n.kind = Expr::Kind::Var;
            n.var = static_cast<int>(rng() % 2) == 0 ? 0 : 2;  // x1 or t
            break;
        case 2:
            n.kind = Expr::Kind::Unary;
            n.op = '-';
            n.args.push_back(random_node(rng, depth - 1));
            break;
        case 3: {
            n.kind = Expr::Kind::Binary;
            const char ops[] = {'+', '-', '*'};
            n.op = ops[rng() % 3];  // division skipped to stay total
            n.args.push_back(random_node(rng, depth - 1));
            n.args.push_back(random_node(rng, depth - 1));
            break;
        }
        default: {
            n.kind = Expr::Kind::Call;
            n.func = static_cast<int>(rng() % 5);  // sin cos exp abs tanh
            n.args.push_back(random_node(rng, depth - 1));
            break;
        }
    }
    return n;
}

} // namespace

TEST_CASE("parse(print(e)) evaluates identically") {
    std::mt19937 rng(12345);
    for (int trial = 0; trial < 200; ++trial) {
        Expr e(random_node(rng, 4));
        Expr back = parse_expr(e.print());
        for (double x : {-1.7, -0.3, 0.0, 0.9, 2.4}) {
            for (double t : {0.1, 1.0}) {
                const double a = e.eval(Vec(x), t);
                const double b = back.eval(Vec(x), t);
                if (std::isfinite(a))
                    CHECK(a == doctest::Approx(b).epsilon(1e-13));
            }
        }
    }
}
