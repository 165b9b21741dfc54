#ifndef PHIGRAD_TRACE_HPP
#define PHIGRAD_TRACE_HPP

#include <map>
#include <vector>

namespace phigrad {

// Branch decisions and loop trip counts captured while the primal runs,
// consumed by generated adjoints. Decisions are argument indices into the
// deciding phi, ordered by dynamic instance.
struct TraceRecord {
    std::map<int, std::vector<int>> decisions;   // normal-phi site -> chosen arg (0 = then)
    std::map<int, std::vector<long>> trips;      // loop id -> body entries per activation
    std::map<int, std::vector<int>> exitEdges;   // loop id -> exit-phi arg index taken

    void clear() {
        decisions.clear();
        trips.clear();
        exitEdges.clear();
    }

    long tripOf(int loopId, size_t instance = 0) const {
        auto it = trips.find(loopId);
        if (it == trips.end() || instance >= it->second.size()) return -1;
        return it->second[instance];
    }
};

// Instrumentation counters shared by the interpreters and generated
// evaluators. `ops` counts primitive arithmetic/intrinsic evaluations,
// `allocs` counts boxed intermediates (tape nodes, materialized bindings).
struct Counters {
    long ops = 0;
    long allocs = 0;
    long tapeNodes = 0;

    long cost() const { return ops + allocs; }
    void reset() { *this = Counters{}; }
};

} // namespace phigrad

#endif // PHIGRAD_TRACE_HPP
