#include "doctest.h"

#include <cmath>

#include "nbds/expr.hpp"

using namespace nbds;

TEST_CASE("parse: synapse rhs structure") {
    // "-s + I_ext" -> Add(Negate(s), I_ext)
    auto e = parse_expr("-s + I_ext");
    REQUIRE(e->kind == ExprKind::Add);
    REQUIRE(e->children.size() == 2);
    CHECK(e->children[0]->kind == ExprKind::Negate);
    CHECK(e->children[0]->children[0]->name == "s");
    CHECK(e->children[1]->name == "I_ext");
}

TEST_CASE("parse: FHN v rhs structure") {
    // Add(v, Negate(Div(PowInt(v,3), 3)), Negate(w), I_ext)
    auto e = parse_expr("v - v^3/3 - w + I_ext");
    REQUIRE(e->kind == ExprKind::Add);
    REQUIRE(e->children.size() == 4);
    CHECK(e->children[0]->name == "v");
    const auto& cubic = e->children[1];
    REQUIRE(cubic->kind == ExprKind::Negate);
    REQUIRE(cubic->children[0]->kind == ExprKind::Div);
    const auto& num = cubic->children[0]->children[0];
    CHECK(num->kind == ExprKind::PowInt);
    CHECK(num->exponent == 3);
    CHECK(num->children[0]->name == "v");
    CHECK(cubic->children[0]->children[1]->value == 3.0);
    REQUIRE(e->children[2]->kind == ExprKind::Negate);
    CHECK(e->children[2]->children[0]->name == "w");
    CHECK(e->children[3]->name == "I_ext");
}

TEST_CASE("parse: identity and precedence") {
    CHECK(parse_expr("x")->kind == ExprKind::Symbol);

    auto e = parse_expr("a+b*c");
    REQUIRE(e->kind == ExprKind::Add);
    CHECK(e->children[1]->kind == ExprKind::Mul);

    // '^' binds tighter than unary '-': -x^2 == -(x^2)
    auto n = parse_expr("-x^2");
    REQUIRE(n->kind == ExprKind::Negate);
    CHECK(n->children[0]->kind == ExprKind::PowInt);

    // left-assoc: a*b/c == (a*b)/c, a/b*c == (a/b)*c
    auto d1 = parse_expr("a*b/c");
    REQUIRE(d1->kind == ExprKind::Div);
    CHECK(d1->children[0]->kind == ExprKind::Mul);
    auto d2 = parse_expr("a/b*c");
    REQUIRE(d2->kind == ExprKind::Mul);
    CHECK(d2->children[0]->kind == ExprKind::Div);

    // flat n-ary chains
    CHECK(parse_expr("a*b*c")->children.size() == 3);
    CHECK(parse_expr("a+b+c+d")->children.size() == 4);
}

TEST_CASE("parse: negative constant products hoist the sign outward") {
    auto e = parse_expr("-2*x");
    REQUIRE(e->kind == ExprKind::Negate);
    REQUIRE(e->children[0]->kind == ExprKind::Mul);
    CHECK(e->children[0]->children[0]->value == 2.0);
    CHECK(e->children[0]->children[1]->name == "x");

    // grouping is preserved: the 0.18 factor is not distributed
    auto g = parse_expr("0.18*(v+0.7-0.8*w)");
    REQUIRE(g->kind == ExprKind::Mul);
    CHECK(g->children[0]->value == doctest::Approx(0.18));
    REQUIRE(g->children[1]->kind == ExprKind::Add);
    CHECK(g->children[1]->children.size() == 3);

    // lone negated constant keeps its Negate
    auto lone = parse_expr("-2");
    REQUIRE(lone->kind == ExprKind::Negate);
    CHECK(lone->children[0]->value == 2.0);

    // two negative constant factors cancel
    auto two = parse_expr("-2*-3");
    REQUIRE(two->kind == ExprKind::Mul);
}

TEST_CASE("parse: numbers") {
    CHECK(parse_expr("1.5e-3")->value == doctest::Approx(1.5e-3));
    CHECK(parse_expr("2E6")->value == 2e6);
    CHECK(parse_expr("0.25")->value == 0.25);
}

TEST_CASE("parse: errors carry positions") {
    CHECK_THROWS_AS(parse_expr("x^0.5"), ExponentError);
    CHECK_THROWS_AS(parse_expr("x^-2"), ExponentError);
    CHECK_THROWS_AS(parse_expr("x^0"), ExponentError);
    CHECK_THROWS_AS(parse_expr("x^(2)"), ExponentError);
    CHECK_THROWS_AS(parse_expr("(a+b"), SyntaxError);
    CHECK_THROWS_AS(parse_expr("a+"), SyntaxError);
    CHECK_THROWS_AS(parse_expr("a b"), SyntaxError);
    CHECK_THROWS_AS(parse_expr(""), SyntaxError);
    CHECK_THROWS_AS(parse_expr("a ? b"), SyntaxError);
    try {
        parse_expr("a + (b*");
    } catch (const SyntaxError& err) {
        CHECK(err.position == 7);
    }
}

TEST_CASE("eval: spec examples") {
    // "v - v^3/3" at v=3: 3 - 27/3 = -6
    CHECK(eval_expr(parse_expr("v - v^3/3"), {{"v", 3.0}}) == -6.0);
    CHECK(eval_expr(parse_expr("x"), {{"x", 7.5}}) == 7.5);
    CHECK_THROWS_AS(eval_expr(parse_expr("a/b"), {{"a", 1.0}, {"b", 0.0}}), DivisionByZero);
    CHECK_THROWS_AS(eval_expr(parse_expr("a+q"), {{"a", 1.0}}), UnboundSymbol);
    // denominator magnitude below the 1e-15 floor also trips
    CHECK_THROWS_AS(eval_expr(parse_expr("a/b"), {{"a", 1.0}, {"b", 5e-16}}), DivisionByZero);
}

TEST_CASE("split_terms: spec examples") {
    {
        auto s = split_terms(parse_expr("-s + I_ext"));
        REQUIRE(s.positive_terms.size() == 1);
        REQUIRE(s.negative_terms.size() == 1);
        CHECK(s.positive_terms[0]->name == "I_ext");
        CHECK(s.negative_terms[0]->name == "s");
    }
    {
        auto s = split_terms(parse_expr("v - v^3/3 - w + I_ext"));
        REQUIRE(s.positive_terms.size() == 2);
        REQUIRE(s.negative_terms.size() == 2);
        CHECK(s.positive_terms[0]->name == "v");
        CHECK(s.positive_terms[1]->name == "I_ext");
        CHECK(s.negative_terms[0]->kind == ExprKind::Div);
        CHECK(s.negative_terms[1]->name == "w");
    }
    {
        auto s = split_terms(parse_expr("x"));
        CHECK(s.positive_terms.size() == 1);
        CHECK(s.negative_terms.empty());
    }
}

TEST_CASE("split_terms: negative constant factors and nested negation") {
    // a negative leading constant factor moves the term, sign stripped
    auto s = split_terms(mul({constant(-0.8), symbol("w")}));
    REQUIRE(s.negative_terms.size() == 1);
    CHECK(s.negative_terms[0]->children[0]->value == 0.8);

    // -(a + b) distributes over the enclosed sum
    auto d = split_terms(parse_expr("x - (a + b)"));
    CHECK(d.positive_terms.size() == 1);
    CHECK(d.negative_terms.size() == 2);

    // no term carries a top-level Negate
    auto all = split_terms(parse_expr("-a - -b + -(c) - 2*-d"));
    for (const auto& t : all.positive_terms) CHECK(t->kind != ExprKind::Negate);
    for (const auto& t : all.negative_terms) CHECK(t->kind != ExprKind::Negate);
}

TEST_CASE("validate_synthesizable: vocabulary") {
    CHECK(validate_synthesizable(parse_expr("v - v^3/3 - w + I_ext")).empty());
    CHECK(validate_synthesizable(parse_expr("X/(K2+X)")).empty());
    CHECK(validate_synthesizable(parse_expr("V_M3*Y/(K_R+Y)*X/(K_A+X)")).empty());
    CHECK(validate_synthesizable(parse_expr("x/(I_b*I_x)")).empty());

    CHECK(!validate_synthesizable(parse_expr("x/(K - y)")).empty());
    CHECK(!validate_synthesizable(parse_expr("x/(-K)")).empty());
    CHECK(!validate_synthesizable(parse_expr("x/(a/b)")).empty());
    CHECK(!validate_synthesizable(div(symbol("x"), constant(-2.0))).empty());
}

TEST_CASE("constructors enforce invariants") {
    CHECK_THROWS_AS(pow_int(symbol("x"), 0), std::invalid_argument);
    CHECK_THROWS_AS(div(symbol("x"), constant(0.0)), std::invalid_argument);
    CHECK_THROWS_AS(symbol(""), std::invalid_argument);
    CHECK_THROWS_AS(symbol("9a"), std::invalid_argument);
    CHECK_THROWS_AS(add({symbol("x")}), std::invalid_argument);
}

TEST_CASE("printing matches the input grammar") {
    CHECK(to_string(parse_expr("v - v^3/3 - w + I_ext")) == "v - v^3/3 - w + I_ext");
    CHECK(to_string(parse_expr("-s + I_ext")) == "-s + I_ext");
    CHECK(to_string(parse_expr("X/(K2+X)")) == "X/(K2 + X)");
    CHECK(to_string(parse_expr("0.18*(v+0.7-0.8*w)")) == "0.18*(v + 0.7 - 0.8*w)");
}
