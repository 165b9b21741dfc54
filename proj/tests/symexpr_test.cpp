#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "phigrad/symexpr.hpp"

using namespace phigrad;
using namespace phigrad::sx;

TEST_CASE("like terms collect at construction") {
    ExprPtr x = sym("x");
    ExprPtr e = add(mul(ci(2), x), mul(ci(3), x));
    CHECK(equalExpr(e, mul(ci(5), x)));
    CHECK(equalExpr(add(x, neg(x)), zero()));
    CHECK(equalExpr(add({ci(2), sym("y"), ci(3)}), add(ci(5), sym("y"))));
}

TEST_CASE("products fold constants and merge positive powers") {
    ExprPtr x = sym("x");
    CHECK(equalExpr(mul(x, x), pow(x, ci(2))));
    CHECK(equalExpr(mul(pow(x, ci(2)), pow(x, ci(3))), pow(x, ci(5))));
    CHECK(equalExpr(mul(ci(0), sym("y")), zero()));
    CHECK(equalExpr(mul(ci(2), ci(3)), ci(6)));
    // x * x^-1 must NOT merge without a nonzero license
    ExprPtr e = mul(x, pow(x, ci(-1)));
    CHECK(e->kind == SxKind::Mul);
}

TEST_CASE("sqrt normalizes to a half power and merges") {
    ExprPtr t = add(sym("p"), mul(sym("q"), sym("x")));
    ExprPtr e = call(Intrinsic::Sqrt, {t});
    CHECK(e->kind == SxKind::Pow);
    CHECK(equalExpr(e->kids[1], c(Rational(1, 2))));
    // t * t^{1/2} -> t^{3/2}
    CHECK(equalExpr(mul(t, e), pow(t, c(Rational(3, 2)))));
}

TEST_CASE("rational powers of constants fold exactly") {
    CHECK(equalExpr(pow(c(Rational(2)), ci(10)), ci(1024)));
    CHECK(equalExpr(pow(c(Rational(2, 3)), ci(-2)), c(Rational(9, 4))));
    CHECK(equalExpr(pow(sym("x"), zero()), one()));
}

TEST_CASE("select and cmp fold on constants") {
    CHECK(equalExpr(cmp(CmpOp::Lt, ci(1), ci(2)), one()));
    CHECK(equalExpr(select(cmp(CmpOp::Gt, ci(1), ci(2)), sym("a"), sym("b")), sym("b")));
    CHECK(equalExpr(select(sym("c"), sym("a"), sym("a")), sym("a")));
}

TEST_CASE("evaluation covers arithmetic, sums and loop notation") {
    EvalEnv env;
    env.scalars = {{"x", 2.0}, {"n", 4.0}};
    env.arrays["v"] = {1.0, 2.0, 3.0, 4.0};

    SUBCASE("sum of array elements") {
        ExprPtr e = sum("i", zero(), sub(sym("n"), one()), arrayRef("v", sym("i")));
        CHECK(evalDouble(e, env) == doctest::Approx(10.0));
    }
    SUBCASE("prod") {
        ExprPtr e = prod("i", one(), ci(4), sym("i"));
        CHECK(evalDouble(e, env) == doctest::Approx(24.0));
    }
    SUBCASE("loop body iterates its recurrence") {
        // s <- phi(1, s) * x, 4 trips: 1*2^4 = 16
        ExprPtr phiN = phi(PhiKind::LoopEntry, 7, {one(), sym("s.2")});
        ExprPtr body = mul(phiN, sym("x"));
        ExprPtr e = loopBody(7, "s.2", sym("n"), body);
        CHECK(evalDouble(e, env) == doctest::Approx(16.0));
        // zero trips give the entry value
        env.scalars["n"] = 0;
        CHECK(evalDouble(e, env) == doctest::Approx(1.0));
        env.scalars["n"] = 4;
    }
    SUBCASE("iterated application") {
        ExprPtr e = iterApply("h", mul(sym("h"), sym("h")), ci(3), sym("x"));
        CHECK(evalDouble(e, env) == doctest::Approx(256.0)); // ((2^2)^2)^2
    }
}

TEST_CASE("exact rational evaluation") {
    RatEnv env;
    env.scalars = {{"a", Rational(1, 3)}, {"n", Rational(5)}};
    ExprPtr e = loopBody(0, "s",
                         sym("n"),
                         add(phi(PhiKind::LoopEntry, 0, {zero(), sym("s")}), sym("a")));
    CHECK(evalRational(e, env) == Rational(5, 3));
    ExprPtr p = pow(c(Rational(2, 3)), sym("n"));
    CHECK(evalRational(p, env) == Rational(32, 243));
}

TEST_CASE("free symbols respect binders") {
    ExprPtr e = sum("i", zero(), sym("n"), mul(arrayRef("v", sym("i")), sym("w")));
    FreeSymbols fs = freeSymbols(e);
    CHECK(fs.scalars == std::set<std::string>{"n", "w"});
    CHECK(fs.arrays == std::set<std::string>{"v"});

    ExprPtr lb = loopBody(3, "s.9", sym("K"),
                          add(phi(PhiKind::LoopEntry, 3, {sym("w0"), sym("s.9")}), sym("c")));
    FreeSymbols fs2 = freeSymbols(lb);
    CHECK(fs2.scalars == std::set<std::string>{"K", "c", "w0"});
}

TEST_CASE("substitution is capture aware") {
    // sum body binds i; substituting i only touches the free bound exprs
    ExprPtr e = sum("i", zero(), sym("i"), mul(sym("i"), sym("y")));
    std::map<std::string, ExprPtr> m{{"i", ci(7)}, {"y", ci(2)}};
    ExprPtr r = substitute(e, m);
    CHECK(equalExpr(r, sum("i", zero(), ci(7), mul(ci(2), sym("i")))));
}

TEST_CASE("counters charge arithmetic per evaluation") {
    Counters ctr;
    EvalEnv env;
    env.scalars = {{"x", 1.5}};
    env.counters = &ctr;
    ExprPtr e = add(mul(sym("x"), sym("x")), one()); // 1 mul + 1 add
    evalDouble(e, env);
    CHECK(ctr.ops == 2);
    ctr.reset();
    ExprPtr s = sum("i", one(), ci(3), mul(sym("i"), sym("x")));
    evalDouble(s, env);
    CHECK(ctr.ops == 6); // 3*(mul + accumulate)
}

TEST_CASE("printer produces readable fractions and powers") {
    ExprPtr c2 = pow(call(Intrinsic::Cos, {sym("x2")}), ci(2));
    ExprPtr e = add(c(Rational(909, 250000)),
                    mul({c(Rational(1, 6250)), c2,
                         pow(add(c(Rational(13, 20)), mul(c(Rational(-81, 200)), c2)),
                             ci(-1))}));
    std::string s = printExpr(e);
    CHECK(s.find("cos(x2)^2") != std::string::npos);
    CHECK(s.find("/") != std::string::npos);
    CHECK(printExpr(pow(sym("t"), c(Rational(1, 2)))) == "sqrt(t)");
}
