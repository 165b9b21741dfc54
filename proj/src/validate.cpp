#include "phigrad/frontend.hpp"

#include <json.hpp>

#include <algorithm>
#include <set>

namespace phigrad {

namespace {

struct Checker {
    const FunctionDef& fn;
    std::vector<Diagnostic>& diags;
    std::set<std::string> scalars;  // defined scalar names on every path so far
    std::set<std::string> arrays;
    std::vector<std::string> activeParams;

    void report(Span s, std::string msg) { diags.push_back({s, std::move(msg)}); }

    void checkExpr(const AExpr& e, const std::set<std::string>& defined) {
        switch (e.kind) {
        case AExprKind::Const:
            break;
        case AExprKind::Var:
            if (arrays.count(e.name))
                report(e.span, "array '" + e.name + "' used as a scalar");
            else if (!defined.count(e.name))
                report(e.span, "use of undefined variable '" + e.name + "'");
            break;
        case AExprKind::Index:
            if (!arrays.count(e.name))
                report(e.span, "indexing non-array '" + e.name + "'");
            checkExpr(*e.args[0], defined);
            break;
        default:
            for (const auto& a : e.args) checkExpr(*a, defined);
            break;
        }
    }

    void checkCond(const Cond& c, const std::set<std::string>& defined) {
        checkExpr(*c.lhs, defined);
        checkExpr(*c.rhs, defined);
    }

    // Affine in enclosing loop indices and scalar parameters: +, -, and
    // multiplication/division by constants only, no array reads.
    bool isAffineBound(const AExpr& e) {
        switch (e.kind) {
        case AExprKind::Const:
            return true;
        case AExprKind::Var:
            return true; // definedness checked separately
        case AExprKind::Index:
        case AExprKind::Call:
            return false;
        case AExprKind::Unary:
            return isAffineBound(*e.args[0]);
        case AExprKind::Binary:
            switch (e.bop) {
            case BinOp::Add:
            case BinOp::Sub:
                return isAffineBound(*e.args[0]) && isAffineBound(*e.args[1]);
            case BinOp::Mul:
                return (e.args[0]->kind == AExprKind::Const && isAffineBound(*e.args[1])) ||
                       (e.args[1]->kind == AExprKind::Const && isAffineBound(*e.args[0]));
            case BinOp::Div:
                return e.args[1]->kind == AExprKind::Const && isAffineBound(*e.args[0]);
            }
        }
        return false;
    }

    void checkBoundVars(const AExpr& e, const std::set<std::string>& boundVars) {
        if (e.kind == AExprKind::Var) {
            if (std::find(activeParams.begin(), activeParams.end(), e.name) !=
                activeParams.end())
                report(e.span, "for bound depends on active parameter '" + e.name + "'");
            if (!boundVars.count(e.name))
                report(e.span,
                       "for bound must use only parameters and enclosing loop indices, "
                       "got '" + e.name + "'");
        }
        for (const auto& a : e.args) checkBoundVars(*a, boundVars);
    }

    // Returns the set of names defined on every path through `body`.
    std::set<std::string> checkBody(const std::vector<StmtPtr>& body,
                                    std::set<std::string> defined,
                                    const std::set<std::string>& boundVars,
                                    bool inWhile) {
        for (const auto& sp : body) {
            const Stmt& s = *sp;
            switch (s.kind) {
            case StmtKind::Assign:
                checkExpr(*s.value, defined);
                if (arrays.count(s.name))
                    report(s.span, "assignment to array parameter '" + s.name + "'");
                defined.insert(s.name);
                break;
            case StmtKind::If: {
                checkCond(*s.cond, defined);
                auto thenDef = checkBody(s.body, defined, boundVars, inWhile);
                auto elseDef = checkBody(s.elseBody, defined, boundVars, inWhile);
                std::set<std::string> both;
                std::set_intersection(thenDef.begin(), thenDef.end(), elseDef.begin(),
                                      elseDef.end(), std::inserter(both, both.begin()));
                defined = std::move(both);
                break;
            }
            case StmtKind::For: {
                checkExpr(*s.lo, defined);
                checkExpr(*s.hi, defined);
                if (!isAffineBound(*s.lo) || !isAffineBound(*s.hi))
                    report(s.span, "for bounds must be affine in loop indices and parameters");
                checkBoundVars(*s.lo, boundVars);
                checkBoundVars(*s.hi, boundVars);
                if (defined.count(s.name) || arrays.count(s.name))
                    report(s.span, "loop index '" + s.name + "' shadows an existing name");
                auto inner = defined;
                inner.insert(s.name);
                auto innerBound = boundVars;
                innerBound.insert(s.name);
                checkBody(s.body, std::move(inner), innerBound, false);
                // defs inside the loop may not execute; they do not escape
                break;
            }
            case StmtKind::While:
                checkCond(*s.cond, defined);
                checkBody(s.body, defined, boundVars, true);
                break;
            case StmtKind::Break:
                if (!inWhile) report(s.span, "break outside while");
                break;
            }
        }
        return defined;
    }

    void run() {
        std::set<std::string> defined;
        std::set<std::string> boundVars;
        for (const auto& p : fn.params) {
            if (defined.count(p.name) || arrays.count(p.name))
                report(p.span, "duplicate parameter '" + p.name + "'");
            if (p.isArray) {
                arrays.insert(p.name);
            } else {
                defined.insert(p.name);
                boundVars.insert(p.name);
            }
            if (p.isActive) activeParams.push_back(p.name);
        }
        scalars = defined;
        auto atEnd = checkBody(fn.body, defined, boundVars, false);
        checkExpr(*fn.ret, atEnd);
    }
};

using nlohmann::json;

json spanJson(Span s) { return json{{"line", s.line}, {"col", s.col}}; }

json exprJson(const AExpr& e) {
    json j;
    j["span"] = spanJson(e.span);
    switch (e.kind) {
    case AExprKind::Const:
        j["kind"] = "const";
        j["value"] = ratStr(e.value);
        break;
    case AExprKind::Var:
        j["kind"] = "var";
        j["name"] = e.name;
        break;
    case AExprKind::Index:
        j["kind"] = "index";
        j["name"] = e.name;
        break;
    case AExprKind::Unary:
        j["kind"] = "neg";
        break;
    case AExprKind::Binary:
        j["kind"] = e.bop == BinOp::Add   ? "add"
                    : e.bop == BinOp::Sub ? "sub"
                    : e.bop == BinOp::Mul ? "mul"
                                          : "div";
        break;
    case AExprKind::Call:
        j["kind"] = "call";
        j["name"] = intrinsicName(e.intrinsic);
        break;
    }
    if (!e.args.empty()) {
        json kids = json::array();
        for (const auto& a : e.args) kids.push_back(exprJson(*a));
        j["children"] = std::move(kids);
    }
    return j;
}

json condJson(const Cond& c) {
    return json{{"kind", "cmp"},
                {"op", cmpOpName(c.op)},
                {"span", spanJson(c.span)},
                {"children", json::array({exprJson(*c.lhs), exprJson(*c.rhs)})}};
}

json stmtJson(const Stmt& s);

json bodyJson(const std::vector<StmtPtr>& body) {
    json arr = json::array();
    for (const auto& s : body) arr.push_back(stmtJson(*s));
    return arr;
}

json stmtJson(const Stmt& s) {
    json j;
    j["span"] = spanJson(s.span);
    switch (s.kind) {
    case StmtKind::Assign:
        j["kind"] = "assign";
        j["name"] = s.name;
        j["children"] = json::array({exprJson(*s.value)});
        break;
    case StmtKind::If:
        j["kind"] = "if";
        j["cond"] = condJson(*s.cond);
        j["children"] = bodyJson(s.body);
        j["else"] = bodyJson(s.elseBody);
        break;
    case StmtKind::For:
        j["kind"] = "for";
        j["name"] = s.name;
        j["lo"] = exprJson(*s.lo);
        j["hi"] = exprJson(*s.hi);
        j["children"] = bodyJson(s.body);
        break;
    case StmtKind::While:
        j["kind"] = "while";
        j["cond"] = condJson(*s.cond);
        j["children"] = bodyJson(s.body);
        break;
    case StmtKind::Break:
        j["kind"] = "break";
        break;
    }
    return j;
}

} // namespace

std::vector<Diagnostic> validate(const Program& p) {
    std::vector<Diagnostic> diags;
    std::set<std::string> names;
    for (const auto& f : p.functions) {
        if (!names.insert(f.name).second)
            diags.push_back({f.span, "duplicate function '" + f.name + "'"});
        Checker c{f, diags, {}, {}, {}};
        c.run();
    }
    return diags;
}

std::string astToJson(const Program& p) {
    json j;
    json fns = json::array();
    for (const auto& f : p.functions) {
        json jf;
        jf["kind"] = "function";
        jf["name"] = f.name;
        jf["span"] = spanJson(f.span);
        json params = json::array();
        for (const auto& prm : f.params)
            params.push_back(json{{"name", prm.name},
                                  {"array", prm.isArray},
                                  {"active", prm.isActive}});
        jf["params"] = std::move(params);
        jf["children"] = bodyJson(f.body);
        jf["return"] = exprJson(*f.ret);
        fns.push_back(std::move(jf));
    }
    j["kind"] = "program";
    j["children"] = std::move(fns);
    return j.dump(2);
}

} // namespace phigrad
