#ifndef PHIGRAD_PHICALC_HPP
#define PHIGRAD_PHICALC_HPP

#include "phigrad/elevate.hpp"
#include "phigrad/symdiff.hpp"
#include "phigrad/symexpr.hpp"

#include <optional>
#include <set>
#include <string>
#include <vector>

namespace phigrad {

// The phi-calculus rewrite catalog. F1..F5 are the fundamental formulae;
// C1..C4 support distribution/differentiation through phi functions; C5..C9
// turn loop recurrences into closed forms:
//   C5  d <- f(d)              => f^[n](p)            (IterApply)
//   C6  d <- d + c             => p + n*c
//   C7  d <- a*d + b           => a^n*p + b*(a^n-1)/(a-1), guarded at a == 1
//   C8  d <- a*d               => a^n*p
//   C9  d <- d + g(i)          => p + sum_i g(i), closed when g is affine
enum class RuleId { F1, F2, F3, F4, F5, C1, C2, C3, C4, C5, C6, C7, C8, C9 };

const char* ruleName(RuleId id);

struct RuleContext {
    const Elevation* elev = nullptr;
    std::string wrt;          // C2
    SymbolFacts facts;
};

// Applies one rule at the root of e. Returns nullopt when the rule does not
// match (no-match is a value, not an error).
std::optional<ExprPtr> applyRule(RuleId id, const ExprPtr& e, const RuleContext& ctx);

struct FiredRule {
    RuleId id;
    int nodesBefore = 0;
    int nodesAfter = 0;
};

struct ClosedForm {
    ExprPtr expr;
    std::vector<ExprPtr> residual;   // remaining loop notations / loop phis
    std::set<std::string> traceDeps; // trip-count symbols the form consumes
    std::vector<FiredRule> fired;

    bool fullyClosed() const { return residual.empty(); }
};

class BudgetExceededError : public Error {
  public:
    explicit BudgetExceededError(const std::string& msg) : Error(msg) {}
};

// Applies the rewrite strategy to fixpoint: innermost loops first, recurrence
// closures in the order C6, C8, C7, C9, C5, then F5 on exit phis; F2/C1-C4
// are applied on demand by the simplifier to expose matches. Throws
// BudgetExceededError when the working expression exceeds `budget` nodes.
ClosedForm toClosedForm(const Elevation& elev, int budget = 1 << 20);

// Closes one recurrence d <- step(d, i) with seed init after `count`
// iterations. Returns nullopt if no corollary applies.
std::optional<ExprPtr> closeRecurrence(int loopId, const std::string& carried,
                                       const ExprPtr& step, const ExprPtr& init,
                                       const ExprPtr& count, const RuleContext& ctx,
                                       std::vector<FiredRule>* fired = nullptr);

// Facts available to closed-form rewriting: trip symbols and iteration
// counters are nonnegative integers.
SymbolFacts elevationFacts(const Elevation& elev);

} // namespace phigrad

#endif // PHIGRAD_PHICALC_HPP
