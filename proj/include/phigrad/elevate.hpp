#ifndef PHIGRAD_ELEVATE_HPP
#define PHIGRAD_ELEVATE_HPP

#include "phigrad/ssa.hpp"
#include "phigrad/symexpr.hpp"

#include <map>
#include <set>
#include <string>
#include <vector>

namespace phigrad {

// Result of symbolic elevation of an SSA segment. Besides the expression
// itself this carries the context the later passes need: branch conditions
// per phi site, loop conditions, recurrence steps per loop-entry phi, the
// while-loop trip-count trace symbols, and memoized sharing bindings.
struct Elevation {
    ExprPtr expr;
    std::map<int, ExprPtr> conditions;       // normal-phi site -> Cmp expr
    std::map<int, ExprPtr> whileConds;       // loop id -> header condition
    std::map<int, std::vector<ExprPtr>> breakConds; // loop id -> per break guard
    std::map<int, std::map<std::string, ExprPtr>> loopSteps; // loop -> carried name -> step
    std::map<int, std::map<std::string, ExprPtr>> loopInits; // loop -> carried name -> init
    std::map<std::string, int> traceSymbols; // "K..." -> loop id
    std::vector<std::pair<std::string, ExprPtr>> shares; // placeholder bindings, in order

    // Trip-count expression per loop (for: hi-lo; while: trace symbol).
    std::map<int, ExprPtr> tripExprs;

    struct LoopMeta {
        bool isWhile = false;
        std::string indexBase; // for-loop source index name
        ExprPtr lo, hi;        // for-loop bounds (elevated)
    };
    std::map<int, LoopMeta> loopMeta;

    ExprPtr exprWithShares() const; // shares inlined back into expr
};

// Symbolic elevation by substitution along data flow. `soi` must be closed
// under def-use inside the segment; names defined outside it become free
// boundary symbols.
Elevation elevate(const SsaFunction& s, const std::vector<InstrId>& soi, const VName& out);

// Boundary symbol naming: parameters keep their plain name, other versions
// print as base.version.
std::string boundarySymbol(const SsaFunction& s, const VName& v);

} // namespace phigrad

#endif // PHIGRAD_ELEVATE_HPP
