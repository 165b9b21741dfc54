#include "phigrad/ast.hpp"

#include <array>
#include <sstream>

namespace phigrad {

namespace {

struct IntrinsicInfo {
    Intrinsic op;
    const char* name;
    int arity;
};

constexpr std::array<IntrinsicInfo, 10> kIntrinsics = {{
    {Intrinsic::Sin, "sin", 1},
    {Intrinsic::Cos, "cos", 1},
    {Intrinsic::Exp, "exp", 1},
    {Intrinsic::Log, "log", 1},
    {Intrinsic::Sqrt, "sqrt", 1},
    {Intrinsic::Pow, "pow", 2},
    {Intrinsic::Relu, "relu", 1},
    {Intrinsic::Abs, "abs", 1},
    {Intrinsic::Min, "min", 2},
    {Intrinsic::Max, "max", 2},
}};

} // namespace

const char* intrinsicName(Intrinsic op) {
    for (const auto& i : kIntrinsics)
        if (i.op == op) return i.name;
    return "?";
}

std::optional<Intrinsic> intrinsicByName(const std::string& name) {
    for (const auto& i : kIntrinsics)
        if (name == i.name) return i.op;
    return std::nullopt;
}

int intrinsicArity(Intrinsic op) {
    for (const auto& i : kIntrinsics)
        if (i.op == op) return i.arity;
    return 1;
}

const char* cmpOpName(CmpOp op) {
    switch (op) {
    case CmpOp::Lt: return "<";
    case CmpOp::Le: return "<=";
    case CmpOp::Gt: return ">";
    case CmpOp::Ge: return ">=";
    case CmpOp::Eq: return "==";
    case CmpOp::Ne: return "!=";
    }
    return "?";
}

AExprPtr aConst(Rational v, Span s) {
    auto e = std::make_shared<AExpr>();
    e->kind = AExprKind::Const;
    e->value = std::move(v);
    e->span = s;
    return e;
}

AExprPtr aVar(std::string name, Span s) {
    auto e = std::make_shared<AExpr>();
    e->kind = AExprKind::Var;
    e->name = std::move(name);
    e->span = s;
    return e;
}

AExprPtr aIndex(std::string array, AExprPtr idx, Span s) {
    auto e = std::make_shared<AExpr>();
    e->kind = AExprKind::Index;
    e->name = std::move(array);
    e->args = {std::move(idx)};
    e->span = s;
    return e;
}

AExprPtr aUnary(UnOp op, AExprPtr x, Span s) {
    auto e = std::make_shared<AExpr>();
    e->kind = AExprKind::Unary;
    e->uop = op;
    e->args = {std::move(x)};
    e->span = s;
    return e;
}

AExprPtr aBinary(BinOp op, AExprPtr a, AExprPtr b, Span s) {
    auto e = std::make_shared<AExpr>();
    e->kind = AExprKind::Binary;
    e->bop = op;
    e->args = {std::move(a), std::move(b)};
    e->span = s;
    return e;
}

AExprPtr aCall(Intrinsic op, std::vector<AExprPtr> args, Span s) {
    auto e = std::make_shared<AExpr>();
    e->kind = AExprKind::Call;
    e->intrinsic = op;
    e->args = std::move(args);
    e->span = s;
    return e;
}

const FunctionDef* Program::find(const std::string& name) const {
    for (const auto& f : functions)
        if (f.name == name) return &f;
    return nullptr;
}

bool equal(const AExpr& a, const AExpr& b) {
    if (a.kind != b.kind) return false;
    switch (a.kind) {
    case AExprKind::Const:
        if (a.value != b.value) return false;
        break;
    case AExprKind::Var:
    case AExprKind::Index:
        if (a.name != b.name) return false;
        break;
    case AExprKind::Unary:
        if (a.uop != b.uop) return false;
        break;
    case AExprKind::Binary:
        if (a.bop != b.bop) return false;
        break;
    case AExprKind::Call:
        if (a.intrinsic != b.intrinsic) return false;
        break;
    }
    if (a.args.size() != b.args.size()) return false;
    for (size_t i = 0; i < a.args.size(); ++i)
        if (!equal(*a.args[i], *b.args[i])) return false;
    return true;
}

bool equal(const Cond& a, const Cond& b) {
    return a.op == b.op && equal(*a.lhs, *b.lhs) && equal(*a.rhs, *b.rhs);
}

static bool equalBody(const std::vector<StmtPtr>& a, const std::vector<StmtPtr>& b) {
    if (a.size() != b.size()) return false;
    for (size_t i = 0; i < a.size(); ++i)
        if (!equal(*a[i], *b[i])) return false;
    return true;
}

bool equal(const Stmt& a, const Stmt& b) {
    if (a.kind != b.kind) return false;
    switch (a.kind) {
    case StmtKind::Assign:
        return a.name == b.name && equal(*a.value, *b.value);
    case StmtKind::If:
        return equal(*a.cond, *b.cond) && equalBody(a.body, b.body) &&
               equalBody(a.elseBody, b.elseBody);
    case StmtKind::For:
        return a.name == b.name && equal(*a.lo, *b.lo) && equal(*a.hi, *b.hi) &&
               equalBody(a.body, b.body);
    case StmtKind::While:
        return equal(*a.cond, *b.cond) && equalBody(a.body, b.body);
    case StmtKind::Break:
        return true;
    }
    return false;
}

bool equal(const FunctionDef& a, const FunctionDef& b) {
    if (a.name != b.name || a.params.size() != b.params.size()) return false;
    for (size_t i = 0; i < a.params.size(); ++i) {
        const auto& p = a.params[i];
        const auto& q = b.params[i];
        if (p.name != q.name || p.isArray != q.isArray || p.isActive != q.isActive)
            return false;
    }
    return equalBody(a.body, b.body) && equal(*a.ret, *b.ret);
}

bool equal(const Program& a, const Program& b) {
    if (a.functions.size() != b.functions.size()) return false;
    for (size_t i = 0; i < a.functions.size(); ++i)
        if (!equal(a.functions[i], b.functions[i])) return false;
    return true;
}

// --- printer ---

namespace {

int precedence(const AExpr& e) {
    switch (e.kind) {
    case AExprKind::Binary:
        return (e.bop == BinOp::Add || e.bop == BinOp::Sub) ? 1 : 2;
    case AExprKind::Unary:
        return 3;
    default:
        return 4;
    }
}

void printExprInto(std::ostream& os, const AExpr& e, int parentPrec) {
    int prec = precedence(e);
    bool parens = prec < parentPrec;
    if (parens) os << '(';
    switch (e.kind) {
    case AExprKind::Const:
        if (e.value < 0) {
            os << "(" << ratPrettyStr(e.value) << ")";
        } else {
            os << ratPrettyStr(e.value);
        }
        break;
    case AExprKind::Var:
        os << e.name;
        break;
    case AExprKind::Index:
        os << e.name << '[';
        printExprInto(os, *e.args[0], 0);
        os << ']';
        break;
    case AExprKind::Unary:
        os << '-';
        printExprInto(os, *e.args[0], prec + 1);
        break;
    case AExprKind::Binary: {
        const char* op = e.bop == BinOp::Add   ? " + "
                         : e.bop == BinOp::Sub ? " - "
                         : e.bop == BinOp::Mul ? " * "
                                               : " / ";
        printExprInto(os, *e.args[0], prec);
        os << op;
        // Sub/Div are left-associative; force parens on a same-precedence rhs.
        printExprInto(os, *e.args[1], prec + 1);
        break;
    }
    case AExprKind::Call:
        os << intrinsicName(e.intrinsic) << '(';
        for (size_t i = 0; i < e.args.size(); ++i) {
            if (i) os << ", ";
            printExprInto(os, *e.args[i], 0);
        }
        os << ')';
        break;
    }
    if (parens) os << ')';
}

void printBody(std::ostream& os, const std::vector<StmtPtr>& body, int indent);

void printStmt(std::ostream& os, const Stmt& s, int indent) {
    std::string pad(static_cast<size_t>(indent) * 2, ' ');
    switch (s.kind) {
    case StmtKind::Assign:
        os << pad << s.name << " = ";
        printExprInto(os, *s.value, 0);
        os << ";\n";
        break;
    case StmtKind::If:
        os << pad << "if (";
        printExprInto(os, *s.cond->lhs, 0);
        os << ' ' << cmpOpName(s.cond->op) << ' ';
        printExprInto(os, *s.cond->rhs, 0);
        os << ") {\n";
        printBody(os, s.body, indent + 1);
        if (!s.elseBody.empty()) {
            os << pad << "} else {\n";
            printBody(os, s.elseBody, indent + 1);
        }
        os << pad << "}\n";
        break;
    case StmtKind::For:
        os << pad << "for " << s.name << " in ";
        printExprInto(os, *s.lo, 0);
        os << "..";
        printExprInto(os, *s.hi, 0);
        os << " {\n";
        printBody(os, s.body, indent + 1);
        os << pad << "}\n";
        break;
    case StmtKind::While:
        os << pad << "while (";
        printExprInto(os, *s.cond->lhs, 0);
        os << ' ' << cmpOpName(s.cond->op) << ' ';
        printExprInto(os, *s.cond->rhs, 0);
        os << ") {\n";
        printBody(os, s.body, indent + 1);
        os << pad << "}\n";
        break;
    case StmtKind::Break:
        os << pad << "break;\n";
        break;
    }
}

void printBody(std::ostream& os, const std::vector<StmtPtr>& body, int indent) {
    for (const auto& s : body) printStmt(os, *s, indent);
}

} // namespace

std::string printExpr(const AExpr& e) {
    std::ostringstream os;
    printExprInto(os, e, 0);
    return os.str();
}

std::string printProgram(const Program& p) {
    std::ostringstream os;
    for (const auto& f : p.functions) {
        os << "fn " << f.name << "(";
        for (size_t i = 0; i < f.params.size(); ++i) {
            if (i) os << ", ";
            const auto& prm = f.params[i];
            if (prm.isActive) os << "active ";
            os << prm.name;
            if (prm.isArray) os << "[]";
        }
        os << ") {\n";
        printBody(os, f.body, 1);
        os << "  return ";
        printExprInto(os, *f.ret, 0);
        os << ";\n}\n";
    }
    return os.str();
}

} // namespace phigrad
