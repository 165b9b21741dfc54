#ifndef PHIGRAD_TAPEAD_HPP
#define PHIGRAD_TAPEAD_HPP

#include "phigrad/ssa.hpp"
#include "phigrad/symexpr.hpp"
#include "phigrad/trace.hpp"

#include <functional>
#include <map>
#include <string>
#include <vector>

namespace phigrad {

struct Inputs {
    std::map<std::string, double> scalars;
    std::map<std::string, std::vector<double>> arrays;
};

struct Gradient {
    std::map<std::string, double> scalars;
    std::map<std::string, std::vector<double>> arrays;
};

// One reverse-mode tape node. Inputs have no args; interior nodes carry the
// local partials evaluated during the forward sweep.
struct TapeNode {
    std::vector<int> args;
    std::vector<double> partials;
    double value = 0;
    // input provenance (args empty): scalar param or array element
    std::string inputName;
    int inputElem = -1;
    bool isInput = false;
};

struct Tape {
    std::vector<TapeNode> nodes;
    int output = -1;

    int addInput(const std::string& name, int elem, double value);
    int addNode(double value, std::vector<int> args, std::vector<double> partials);
};

Gradient backprop(const Tape& t, const SsaFunction& f, Counters* counters = nullptr);

// Cost model (documented proxy for the boxed AD runtime):
//   plain run  : 1 op + 1 alloc per data operation (boxed intermediates)
//   taped run  : 1 op + 2 allocs per data operation (box + tape node)
//   backprop   : 2 ops per tape edge + 1 alloc per node (adjoint slots)
// Comparisons between pipelines use Counters::cost() = ops + allocs.
class SsaInterp {
  public:
    explicit SsaInterp(const SsaFunction& f);

    const SsaFunction& fn() const { return *f_; }

    void reset(const Inputs& in, bool buildTape);
    double finish(); // value of the return name

    double run(const Inputs& in, bool buildTape);

    Counters counters;
    TraceRecord trace;
    Tape tape;

    // 0 = fell through, 1+k = break #k unwinding
    int execBlock(const Block& b);
    int execItem(const Item& it);

    double valueOf(const VName& v) const;
    int tapeIdOf(const VName& v) const;
    void setValue(const VName& v, double val, int tapeId = -1);

    // When set, may take over a run of items starting at index i inside a
    // block; returns the number of items consumed (0 = not handled).
    std::function<size_t(const Block&, size_t)> itemHook;

    bool tapingEnabled() const { return buildTape_; }

  private:
    int execStruct(const Structure& st);
    void execInstr(const SsaInstr& in);

    struct Slot {
        double v = 0;
        int tapeId = -1;
        bool set = false;
    };

    const SsaFunction* f_;
    std::map<VName, int> slotIndex_;
    std::vector<Slot> slots_;
    std::vector<int> defSlot_;                  // per instr
    std::vector<std::vector<int>> argSlots_;    // per instr
    std::map<std::string, const std::vector<double>*> arrays_;
    std::map<std::string, std::map<long, int>> arrayInputNodes_;
    std::map<int, int> lastDecision_;   // site -> last branch taken
    std::map<int, long> loopIter_;      // loop -> current iteration
    std::map<int, long> loopTrips_;     // loop -> trips of current activation
    std::map<int, int> loopExitEdge_;   // loop -> exit edge taken
    Inputs inputs_;
    bool buildTape_ = false;

    int slotFor(const VName& v);
};

// Reverse-mode gradient of a closed-form expression via taped evaluation.
// Independent of symbolic differentiation; used as a cross-check oracle.
double exprTapeGradient(const ExprPtr& e, const EvalEnv& env,
                        const std::string& wrt, double* valueOut = nullptr);

// Central finite differences with h = scale * max(1, |x|).
double centralDiff(const std::function<double(double)>& f, double x, double scale = 1e-6);

} // namespace phigrad

#endif // PHIGRAD_TAPEAD_HPP
