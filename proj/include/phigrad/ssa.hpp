#ifndef PHIGRAD_SSA_HPP
#define PHIGRAD_SSA_HPP

#include "phigrad/ast.hpp"

#include <map>
#include <set>
#include <string>
#include <vector>

namespace phigrad {

using InstrId = int;
constexpr InstrId kNoInstr = -1;

struct VName {
    std::string base;
    int ver = 0;

    std::string str() const { return base + "." + std::to_string(ver); }
    bool operator==(const VName& o) const { return ver == o.ver && base == o.base; }
    bool operator<(const VName& o) const {
        return base < o.base || (base == o.base && ver < o.ver);
    }
};

enum class SsaOp {
    Const, Copy, Neg, Add, Sub, Mul, Div, Index, Call, Cmp, Phi, Break,
};

enum class PhiKind { Normal, LoopEntry, LoopExit };

struct SsaInstr {
    InstrId id = kNoInstr;
    SsaOp op;
    VName def;
    std::vector<VName> args;
    Rational cval;          // Const
    std::string array;      // Index
    Intrinsic intrinsic{};  // Call
    CmpOp cmp{};            // Cmp
    PhiKind phiKind{};      // Phi
    int site = -1;          // Phi: Normal -> if-site id, Loop* -> loop id; Break -> break index
    Span span;
    bool plumbing = false;  // feeds only indices/conditions; not taped
    bool removedFlag = false;
};

enum class StructKind { If, For, While };

struct Item {
    bool isInstr;
    int id; // InstrId or structure id
};

struct Block {
    std::vector<Item> items;
};

struct Structure {
    int id = -1;
    StructKind kind;
    Span span;
    int parent = -1;           // enclosing structure, -1 for top level

    // If
    int site = -1;             // Normal-phi site id
    InstrId cond = kNoInstr;   // Cmp instr (emitted in parent block)
    Block thenB, elseB;
    std::vector<InstrId> mergePhis;

    // Loops (For / While)
    int loopId = -1;
    Block body;
    std::vector<InstrId> entryPhis; // args: [preheader, backedge]
    std::vector<InstrId> exitPhis;  // args: [preheader, breaks..., backedge]
    int numBreaks = 0;

    // For
    VName indexName;
    VName loName, hiName;                 // bound values (may be params)
    InstrId lo = kNoInstr, hi = kNoInstr; // bound defs when they are instrs
    InstrId increment = kNoInstr;         // index + 1, at body end

    // While
    Block header;                  // condition computation, re-run per check
    InstrId whileCond = kNoInstr;  // Cmp instr inside header
    std::vector<InstrId> breakGuards; // guarding cmp per break site
};

struct RegionNode {
    int id = -1;
    int parent = -1;
    bool isLoop = false;
    int loopId = -1; // structure id when isLoop
    std::vector<InstrId> instrs;              // chain instrs owned directly
    std::vector<int> children;                // child region nodes
    // Program-ordered mix of owned instrs and child nodes.
    std::vector<std::pair<bool, int>> seq;    // (isChild, instrId-or-childNode)
};

struct DefUseRegionTree {
    std::vector<RegionNode> nodes;
    int root = -1;
};

struct SsaFunction {
    std::string name;
    std::vector<Param> params;           // version-0 defs
    std::vector<SsaInstr> instrs;        // id == index
    std::vector<Structure> structs;      // id == index
    Block top;
    VName returnName;
    int numSites = 0;
    int numLoops = 0;

    std::map<VName, InstrId> defOf;      // params map to kNoInstr
    std::map<InstrId, int> enclosing;    // instr -> innermost structure, absent if top

    const SsaInstr& instr(InstrId id) const { return instrs[static_cast<size_t>(id)]; }
    bool isParamName(const VName& v) const;
    const Structure* loopById(int loopId) const;
    // Innermost enclosing structure id, -1 for top level.
    int structOf(InstrId id) const;
    // Uses of a def across the whole function (operand occurrences).
    int refCount(const VName& v) const;
    bool isActiveParam(const std::string& base) const;
};

SsaFunction buildSsa(const Program& p, const std::string& fnName);

// Minimal closed set of definitions (data + control dependences) reaching v,
// ordered by instruction id.
std::vector<InstrId> defUseChain(const SsaFunction& s, const VName& v);

DefUseRegionTree buildRegionTree(const SsaFunction& s, const std::vector<InstrId>& chain);

std::string ssaToText(const SsaFunction& s);
std::string ssaToJson(const SsaFunction& s, const DefUseRegionTree* tree = nullptr);

} // namespace phigrad

#endif // PHIGRAD_SSA_HPP
