#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "phigrad/frontend.hpp"
#include "test_support.hpp"

using namespace phigrad;

TEST_CASE("identity function parses") {
    Program p = parseProgram("fn f(active x) { return x }");
    REQUIRE(p.functions.size() == 1);
    const FunctionDef& f = p.functions[0];
    CHECK(f.name == "f");
    REQUIRE(f.params.size() == 1);
    CHECK(f.params[0].isActive);
    CHECK_FALSE(f.params[0].isArray);
    CHECK(f.body.empty());
    CHECK(f.ret->kind == AExprKind::Var);
    CHECK(f.ret->name == "x");
    CHECK(validate(p).empty());
}

TEST_CASE("loop source yields one For and two Assigns") {
    const char* src =
        "fn f(a, active x, k) {\n"
        "  s = a;\n"
        "  for i in 0..k {\n"
        "    s = s + x;\n"
        "  }\n"
        "  return s;\n"
        "}\n";
    Program p = parseProgram(src);
    const FunctionDef& f = p.functions[0];
    REQUIRE(f.body.size() == 2);
    CHECK(f.body[0]->kind == StmtKind::Assign);
    CHECK(f.body[1]->kind == StmtKind::For);
    REQUIRE(f.body[1]->body.size() == 1);
    CHECK(f.body[1]->body[0]->kind == StmtKind::Assign);
    CHECK(validate(p).empty());
}

TEST_CASE("use before def is reported with a location") {
    Program p = parseProgram("fn f(x) { y = z; return y }");
    auto diags = validate(p);
    REQUIRE(diags.size() == 1);
    CHECK(diags[0].message.find("z") != std::string::npos);
    CHECK(diags[0].span.line == 1);
}

TEST_CASE("assignment to array parameter is a diagnostic") {
    Program p = parseProgram("fn f(a[], active x) { a = x; return x }");
    auto diags = validate(p);
    REQUIRE(diags.size() == 1);
    CHECK(diags[0].message.find("array parameter") != std::string::npos);
}

TEST_CASE("break outside while is rejected") {
    Program p = parseProgram("fn f(x) { for i in 0..3 { break } return x }");
    auto diags = validate(p);
    REQUIRE(!diags.empty());
    CHECK(diags[0].message.find("break") != std::string::npos);
}

TEST_CASE("syntax errors carry line/column") {
    try {
        parseProgram("fn f(x) {\n  y = ;\n  return y\n}");
        FAIL("expected a syntax error");
    } catch (const Error& e) {
        CHECK(e.span().line == 2);
    }
}

TEST_CASE("for bound on active parameter is rejected") {
    Program p = parseProgram("fn f(active x) { s = 0; for i in 0..x { s = s + 1; } return s }");
    auto diags = validate(p);
    REQUIRE(!diags.empty());
    CHECK(diags[0].message.find("active") != std::string::npos);
}

TEST_CASE("newline terminates statements like a semicolon") {
    const char* src =
        "fn f(active x)\n{\n  y = x * 2\n  z = y + 1\n  return z\n}\n";
    Program p = parseProgram(src);
    CHECK(p.functions[0].body.size() == 2);
    CHECK(validate(p).empty());
}

static const char* kBgdSource =
    "fn bgdhyperopt(x[], y[], m, active r) {\n"
    "  w = 0.0;\n"
    "  k = 0.0;\n"
    "  while (k < 50.0) {\n"
    "    d = 0.0;\n"
    "    for i in 0..m {\n"
    "      d = d + (w * x[i] - y[i]) * x[i];\n"
    "    }\n"
    "    wn = w - r * d;\n"
    "    if (abs(wn - w) < 0.0000000001) {\n"
    "      w = wn;\n"
    "      break;\n"
    "    } else {\n"
    "      w = wn;\n"
    "    }\n"
    "    k = k + 1.0;\n"
    "  }\n"
    "  err = 0.0;\n"
    "  for j in 0..m {\n"
    "    err = err + (w * x[j] - y[j]) * (w * x[j] - y[j]);\n"
    "  }\n"
    "  return err;\n"
    "}\n";

TEST_CASE("batch-gradient-descent style source validates cleanly") {
    Program p = parseProgram(kBgdSource);
    CHECK(validate(p).empty());
}

TEST_CASE("pretty-print round trip reparses structurally equal") {
    std::vector<std::string> sources = {
        "fn f(active x) { return x }",
        kBgdSource,
        "fn g(active x, p, q) {\n"
        "  t = p + q * x\n"
        "  if (t > 0) { z = sqrt(t) * t } else { z = t * t }\n"
        "  return z * (1 + exp(t))\n"
        "}\n",
    };
    for (unsigned seed = 1; seed <= 20; ++seed) {
        test::ProgramGen gen(seed);
        sources.push_back(gen.generate());
    }
    for (const auto& src : sources) {
        CAPTURE(src);
        Program p1 = parseProgram(src);
        std::string printed = printProgram(p1);
        CAPTURE(printed);
        Program p2 = parseProgram(printed);
        CHECK(equal(p1, p2));
    }
}

TEST_CASE("AST spans survive into the JSON dump") {
    Program p = parseProgram("fn f(active x) {\n  y = x * x;\n  return y;\n}");
    std::string j = astToJson(p);
    CHECK(j.find("\"line\": 2") != std::string::npos);
    CHECK(j.find("\"kind\": \"assign\"") != std::string::npos);
}
