#ifndef PHIGRAD_SYMDIFF_HPP
#define PHIGRAD_SYMDIFF_HPP

#include "phigrad/symexpr.hpp"

#include <optional>
#include <set>
#include <string>
#include <vector>

namespace phigrad {

// Assumptions that license cancellations: trace trip counts and iteration
// counters are nonnegative integers; positivity supports facts like
// 1 + e^t > 0 used for denominator cancellation.
struct SymbolFacts {
    std::set<std::string> nonnegInt; // integer-valued, >= 0
    std::set<std::string> posInt;    // integer-valued, >= 1
    std::set<std::string> positive;  // real, > 0

    static SymbolFacts none() { return {}; }
};

bool isProvablyPositive(const ExprPtr& e, const SymbolFacts& facts);
bool isProvablyNonneg(const ExprPtr& e, const SymbolFacts& facts);
bool isProvablyNonzero(const ExprPtr& e, const SymbolFacts& facts);
bool isProvablyNonnegInt(const ExprPtr& e, const SymbolFacts& facts);

// Bounded-fixpoint algebraic simplification: licensed power merging, phi
// distribution/collapse (F1/F2/C3/C4 shapes), Sum linearity, select folding.
ExprPtr simplify(const ExprPtr& e, const SymbolFacts& facts = SymbolFacts::none(),
                 int maxPasses = 8);

// Full distribution of products over sums (exposes linear recurrences).
ExprPtr expandProducts(const ExprPtr& e);

struct DerivRequest {
    ExprPtr expr;
    std::string wrt;
};

// Symbolic derivative; phi nodes differentiate argument-wise, relu' is 0 at
// 0, Sum differentiates under the summation. Residual loop notations are
// rejected with NotClosedError.
class NotClosedError : public Error {
  public:
    explicit NotClosedError(const std::string& msg) : Error(msg) {}
};

ExprPtr differentiate(const DerivRequest& req);
ExprPtr differentiate(const ExprPtr& e, const std::string& wrt);

// d/d(array[element]) with a symbolic element index; Kronecker contributions
// appear as guarded Selects after Sum collapse. Used for spot checks; bulk
// array gradients go through the backend's accumulation loops.
ExprPtr differentiateArrayElement(const ExprPtr& e, const std::string& array,
                                  const ExprPtr& elemIndex);

struct Binding {
    std::string name;
    ExprPtr expr;
};

struct SimplifiedExpr {
    ExprPtr expr;
    std::vector<Binding> bindings; // topologically ordered
    int opCount = 0;
};

// Greedy common-subexpression extraction over one or more roots. Subtrees
// referencing binder-bound symbols stay in place.
SimplifiedExpr cse(const ExprPtr& e, int minSize = 3);
std::vector<ExprPtr> cseMulti(std::vector<ExprPtr> roots, int minSize,
                              std::vector<Binding>& bindingsOut);

int opCountWithBindings(const SimplifiedExpr& s);

} // namespace phigrad

#endif // PHIGRAD_SYMDIFF_HPP
