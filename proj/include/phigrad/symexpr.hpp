#ifndef PHIGRAD_SYMEXPR_HPP
#define PHIGRAD_SYMEXPR_HPP

#include "phigrad/ast.hpp"
#include "phigrad/ssa.hpp"
#include "phigrad/trace.hpp"

#include <functional>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

namespace phigrad {

// Symbolic expression tree carrying the phi-calculus notations: phi nodes
// (normal / loop-entry / loop-exit), the loop wrapper L^u<...>, Sum/Prod,
// iterated application f^[n], per-iteration instances a^(j), and exit values
// a_exit(L). Values are immutable and shared; constructors canonicalize
// Add/Mul (flattening, constant folding, like-term and power merging under a
// total node order).
enum class SxKind {
    Const, Sym, ArrayRef, Add, Mul, Pow, Call, Cmp, Select,
    Phi, LoopBody, Sum, Prod, IterApply, IterInstance, ExitValue,
};

struct SymExpr;
using ExprPtr = std::shared_ptr<const SymExpr>;

struct SymExpr {
    SxKind kind;
    Rational value;          // Const
    std::string name;        // Sym; ArrayRef array; Sum/Prod index; IterApply hole;
                             // LoopBody carried name; IterInstance/ExitValue name
    Intrinsic intrinsic{};   // Call
    CmpOp cmp{};             // Cmp
    PhiKind phiKind{};       // Phi
    int site = -1;           // Phi site/loop id; LoopBody/IterInstance/ExitValue loop id
    std::vector<ExprPtr> kids;
    // kids layout:
    //   ArrayRef {index}; Pow {base, exp}; Cmp {lhs, rhs}; Select {cond, a, b}
    //   Phi {args...}; LoopBody {trip, body}; Sum/Prod {lo, hi, body}
    //   IterApply {template, count, seed}; IterInstance {j}
    size_t hashv = 0;
    int nodes = 1;
};

namespace sx {

ExprPtr c(Rational v);
ExprPtr ci(long v);
ExprPtr sym(const std::string& name);
ExprPtr arrayRef(const std::string& array, ExprPtr index);
ExprPtr add(std::vector<ExprPtr> terms);
ExprPtr add(ExprPtr a, ExprPtr b);
ExprPtr mul(std::vector<ExprPtr> factors);
ExprPtr mul(ExprPtr a, ExprPtr b);
ExprPtr neg(ExprPtr x);
ExprPtr sub(ExprPtr a, ExprPtr b);
ExprPtr div(ExprPtr a, ExprPtr b);
ExprPtr pow(ExprPtr base, ExprPtr exp);
ExprPtr call(Intrinsic op, std::vector<ExprPtr> args);
ExprPtr cmp(CmpOp op, ExprPtr a, ExprPtr b);
ExprPtr select(ExprPtr cond, ExprPtr a, ExprPtr b);
ExprPtr phi(PhiKind kind, int site, std::vector<ExprPtr> args);
ExprPtr loopBody(int loopId, const std::string& carried, ExprPtr trip, ExprPtr body);
ExprPtr sum(const std::string& index, ExprPtr lo, ExprPtr hi, ExprPtr body);
ExprPtr prod(const std::string& index, ExprPtr lo, ExprPtr hi, ExprPtr body);
ExprPtr iterApply(const std::string& hole, ExprPtr tmpl, ExprPtr count, ExprPtr seed);
ExprPtr iterInstance(int loopId, const std::string& name, ExprPtr j);
ExprPtr exitValue(int loopId, const std::string& name);

ExprPtr zero();
ExprPtr one();

} // namespace sx

bool isConst(const ExprPtr& e, const Rational& v);
bool isConst(const ExprPtr& e);

// Total order used for canonical sorting; 0 when structurally equal.
int compareExpr(const SymExpr& a, const SymExpr& b);
bool equalExpr(const ExprPtr& a, const ExprPtr& b);

struct ExprLess {
    bool operator()(const ExprPtr& a, const ExprPtr& b) const {
        return compareExpr(*a, *b) < 0;
    }
};

struct FreeSymbols {
    std::set<std::string> scalars;
    std::set<std::string> arrays;
};
FreeSymbols freeSymbols(const ExprPtr& e);

// Substitution of free scalar symbols; binders shadow as expected.
ExprPtr substitute(const ExprPtr& e, const std::map<std::string, ExprPtr>& map);

// Counts arithmetic/intrinsic nodes (n-ary ops cost arity-1); Sum/Prod count
// their body once plus the accumulate. A static proxy, not a dynamic count.
int opCountStatic(const ExprPtr& e);

bool containsKind(const ExprPtr& e, SxKind k);
void forEachNode(const ExprPtr& e, const std::function<void(const ExprPtr&)>& f);

// --- evaluation -----------------------------------------------------------

struct EvalEnv {
    std::map<std::string, double> scalars;
    std::map<std::string, std::vector<double>> arrays;
    const TraceRecord* trace = nullptr;
    Counters* counters = nullptr;
};

double evalDouble(const ExprPtr& e, EvalEnv& env);

struct RatEnv {
    std::map<std::string, Rational> scalars;
    std::map<std::string, std::vector<Rational>> arrays;
    const TraceRecord* trace = nullptr;
};

Rational evalRational(const ExprPtr& e, RatEnv& env);

// --- printing --------------------------------------------------------------

std::string printExpr(const ExprPtr& e);
std::string exprToJson(const ExprPtr& e);

} // namespace phigrad

#endif // PHIGRAD_SYMEXPR_HPP
