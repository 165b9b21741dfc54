#ifndef PHIGRAD_AST_HPP
#define PHIGRAD_AST_HPP

#include "phigrad/diag.hpp"
#include "phigrad/rational.hpp"

#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace phigrad {

// AST for the differentiable mini-language (DPL). Scalar and read-only
// array-of-scalar parameters; assignments, if/else, bounded for, while with
// break, one trailing return per function.

enum class UnOp { Neg };
enum class BinOp { Add, Sub, Mul, Div };
enum class CmpOp { Lt, Le, Gt, Ge, Eq, Ne };

enum class Intrinsic { Sin, Cos, Exp, Log, Sqrt, Pow, Relu, Abs, Min, Max };

const char* intrinsicName(Intrinsic op);
std::optional<Intrinsic> intrinsicByName(const std::string& name);
int intrinsicArity(Intrinsic op);

struct AExpr;
using AExprPtr = std::shared_ptr<const AExpr>;

enum class AExprKind { Const, Var, Index, Unary, Binary, Call };

struct AExpr {
    AExprKind kind;
    Span span;
    Rational value;       // Const
    std::string name;     // Var, Index array name
    UnOp uop{};           // Unary
    BinOp bop{};          // Binary
    Intrinsic intrinsic{};// Call
    std::vector<AExprPtr> args;
};

AExprPtr aConst(Rational v, Span s = {});
AExprPtr aVar(std::string name, Span s = {});
AExprPtr aIndex(std::string array, AExprPtr idx, Span s = {});
AExprPtr aUnary(UnOp op, AExprPtr x, Span s = {});
AExprPtr aBinary(BinOp op, AExprPtr a, AExprPtr b, Span s = {});
AExprPtr aCall(Intrinsic op, std::vector<AExprPtr> args, Span s = {});

struct Cond {
    CmpOp op;
    AExprPtr lhs, rhs;
    Span span;
};
using CondPtr = std::shared_ptr<const Cond>;

struct Stmt;
using StmtPtr = std::shared_ptr<const Stmt>;

enum class StmtKind { Assign, If, For, While, Break };

struct Stmt {
    StmtKind kind;
    Span span;
    std::string name;     // Assign target, For index
    AExprPtr value;       // Assign rhs
    CondPtr cond;         // If / While
    AExprPtr lo, hi;      // For range [lo, hi)
    std::vector<StmtPtr> body;
    std::vector<StmtPtr> elseBody; // If only
};

struct Param {
    std::string name;
    bool isArray = false;
    bool isActive = false;
    Span span;
};

struct FunctionDef {
    std::string name;
    std::vector<Param> params;
    std::vector<StmtPtr> body;
    AExprPtr ret;
    Span span;
};

struct Program {
    std::vector<FunctionDef> functions;

    const FunctionDef* find(const std::string& name) const;
};

// Structural equality, spans ignored.
bool equal(const AExpr& a, const AExpr& b);
bool equal(const Cond& a, const Cond& b);
bool equal(const Stmt& a, const Stmt& b);
bool equal(const FunctionDef& a, const FunctionDef& b);
bool equal(const Program& a, const Program& b);

// Pretty printer; output reparses to a structurally equal AST.
std::string printExpr(const AExpr& e);
std::string printProgram(const Program& p);

const char* cmpOpName(CmpOp op);

} // namespace phigrad

#endif // PHIGRAD_AST_HPP
