#include "phigrad/tapead.hpp"

#include <cmath>

namespace phigrad {

int Tape::addInput(const std::string& name, int elem, double value) {
    TapeNode n;
    n.value = value;
    n.isInput = true;
    n.inputName = name;
    n.inputElem = elem;
    nodes.push_back(std::move(n));
    return static_cast<int>(nodes.size()) - 1;
}

int Tape::addNode(double value, std::vector<int> args, std::vector<double> partials) {
    TapeNode n;
    n.value = value;
    n.args = std::move(args);
    n.partials = std::move(partials);
    nodes.push_back(std::move(n));
    return static_cast<int>(nodes.size()) - 1;
}

Gradient backprop(const Tape& t, const SsaFunction& f, Counters* counters) {
    std::vector<double> adj(t.nodes.size(), 0.0);
    Gradient g;
    for (const auto& p : f.params) {
        if (!p.isActive) continue;
        if (p.isArray)
            g.arrays[p.name] = {};
        else
            g.scalars[p.name] = 0.0;
    }
    if (t.output < 0) return g;
    adj[static_cast<size_t>(t.output)] = 1.0;
    if (counters) counters->allocs += static_cast<long>(t.nodes.size());
    for (int i = static_cast<int>(t.nodes.size()) - 1; i >= 0; --i) {
        const TapeNode& n = t.nodes[static_cast<size_t>(i)];
        double a = adj[static_cast<size_t>(i)];
        if (a == 0.0 && !n.isInput) continue;
        for (size_t k = 0; k < n.args.size(); ++k) {
            adj[static_cast<size_t>(n.args[k])] += a * n.partials[k];
            if (counters) counters->ops += 2;
        }
    }
    for (size_t i = 0; i < t.nodes.size(); ++i) {
        const TapeNode& n = t.nodes[i];
        if (!n.isInput) continue;
        if (n.inputElem < 0) {
            if (g.scalars.count(n.inputName)) g.scalars[n.inputName] += adj[i];
        } else if (g.arrays.count(n.inputName)) {
            auto& vec = g.arrays[n.inputName];
            if (static_cast<int>(vec.size()) <= n.inputElem)
                vec.resize(static_cast<size_t>(n.inputElem) + 1, 0.0);
            vec[static_cast<size_t>(n.inputElem)] += adj[i];
        }
    }
    // size array gradients to the full input length
    return g;
}

SsaInterp::SsaInterp(const SsaFunction& f) : f_(&f) {
    defSlot_.resize(f.instrs.size(), -1);
    argSlots_.resize(f.instrs.size());
    for (const auto& in : f.instrs) {
        defSlot_[static_cast<size_t>(in.id)] = slotFor(in.def);
        auto& as = argSlots_[static_cast<size_t>(in.id)];
        for (const auto& a : in.args) as.push_back(slotFor(a));
    }
    for (const auto& p : f.params)
        if (!p.isArray) slotFor(VName{p.name, 0});
    slotFor(f.returnName);
}

int SsaInterp::slotFor(const VName& v) {
    auto it = slotIndex_.find(v);
    if (it != slotIndex_.end()) return it->second;
    int idx = static_cast<int>(slots_.size());
    slotIndex_[v] = idx;
    slots_.push_back({});
    return idx;
}

void SsaInterp::reset(const Inputs& in, bool buildTape) {
    for (auto& s : slots_) s = Slot{};
    counters.reset();
    trace.clear();
    tape = Tape{};
    buildTape_ = buildTape;
    inputs_ = in;
    arrays_.clear();
    arrayInputNodes_.clear();
    lastDecision_.clear();
    loopIter_.clear();
    loopTrips_.clear();
    loopExitEdge_.clear();

    for (const auto& p : f_->params) {
        if (p.isArray) {
            auto it = in.arrays.find(p.name);
            if (it == in.arrays.end()) throw Error("missing array input '" + p.name + "'");
            arrays_[p.name] = &it->second;
        } else {
            auto it = in.scalars.find(p.name);
            if (it == in.scalars.end()) throw Error("missing input '" + p.name + "'");
            int tapeId = -1;
            if (buildTape_ && p.isActive) tapeId = tape.addInput(p.name, -1, it->second);
            auto sIt = slotIndex_.find(VName{p.name, 0});
            if (sIt != slotIndex_.end())
                slots_[static_cast<size_t>(sIt->second)] = {it->second, tapeId, true};
        }
    }
}

double SsaInterp::valueOf(const VName& v) const {
    auto it = slotIndex_.find(v);
    if (it == slotIndex_.end() || !slots_[static_cast<size_t>(it->second)].set)
        throw Error("value of '" + v.str() + "' not computed");
    return slots_[static_cast<size_t>(it->second)].v;
}

int SsaInterp::tapeIdOf(const VName& v) const {
    auto it = slotIndex_.find(v);
    if (it == slotIndex_.end()) return -1;
    return slots_[static_cast<size_t>(it->second)].tapeId;
}

void SsaInterp::setValue(const VName& v, double val, int tapeId) {
    auto it = slotIndex_.find(v);
    if (it == slotIndex_.end()) {
        slotIndex_[v] = static_cast<int>(slots_.size());
        slots_.push_back({val, tapeId, true});
        return;
    }
    slots_[static_cast<size_t>(it->second)] = {val, tapeId, true};
}

double SsaInterp::run(const Inputs& in, bool buildTape) {
    reset(in, buildTape);
    int status = execBlock(f_->top);
    if (status != 0) throw Error("break escaped the function body");
    return finish();
}

double SsaInterp::finish() {
    double v = valueOf(f_->returnName);
    if (buildTape_) tape.output = tapeIdOf(f_->returnName);
    return v;
}

int SsaInterp::execBlock(const Block& b) {
    for (size_t i = 0; i < b.items.size();) {
        if (itemHook) {
            size_t consumed = itemHook(b, i);
            if (consumed > 0) {
                i += consumed;
                continue;
            }
        }
        int status = execItem(b.items[i]);
        if (status != 0) return status;
        ++i;
    }
    return 0;
}

int SsaInterp::execItem(const Item& it) {
    if (it.isInstr) {
        const SsaInstr& in = f_->instr(it.id);
        if (in.op == SsaOp::Break) return 1 + in.site;
        execInstr(in);
        return 0;
    }
    return execStruct(f_->structs[static_cast<size_t>(it.id)]);
}

namespace {

double applyCall(Intrinsic op, const std::vector<double>& a, std::vector<double>* partials) {
    double v = 0;
    switch (op) {
    case Intrinsic::Sin:
        v = std::sin(a[0]);
        if (partials) *partials = {std::cos(a[0])};
        break;
    case Intrinsic::Cos:
        v = std::cos(a[0]);
        if (partials) *partials = {-std::sin(a[0])};
        break;
    case Intrinsic::Exp:
        v = std::exp(a[0]);
        if (partials) *partials = {v};
        break;
    case Intrinsic::Log:
        if (a[0] <= 0) throw Error("log of non-positive value");
        v = std::log(a[0]);
        if (partials) *partials = {1.0 / a[0]};
        break;
    case Intrinsic::Sqrt:
        if (a[0] < 0) throw Error("sqrt of negative value");
        v = std::sqrt(a[0]);
        if (partials) *partials = {v == 0 ? 0.0 : 0.5 / v};
        break;
    case Intrinsic::Pow:
        v = std::pow(a[0], a[1]);
        if (partials)
            *partials = {a[0] == 0 ? 0.0 : v * a[1] / a[0],
                         a[0] > 0 ? v * std::log(a[0]) : 0.0};
        break;
    case Intrinsic::Relu:
        v = a[0] > 0 ? a[0] : 0.0;
        if (partials) *partials = {a[0] > 0 ? 1.0 : 0.0}; // 0 at relu(0)
        break;
    case Intrinsic::Abs:
        v = std::fabs(a[0]);
        if (partials) *partials = {a[0] >= 0 ? 1.0 : -1.0};
        break;
    case Intrinsic::Min:
        v = a[0] <= a[1] ? a[0] : a[1]; // tie takes the first argument
        if (partials) *partials = {a[0] <= a[1] ? 1.0 : 0.0, a[0] <= a[1] ? 0.0 : 1.0};
        break;
    case Intrinsic::Max:
        v = a[0] >= a[1] ? a[0] : a[1];
        if (partials) *partials = {a[0] >= a[1] ? 1.0 : 0.0, a[0] >= a[1] ? 0.0 : 1.0};
        break;
    }
    return v;
}

} // namespace

void SsaInterp::execInstr(const SsaInstr& in) {
    const auto& argIdx = argSlots_[static_cast<size_t>(in.id)];
    auto argVal = [&](size_t k) -> const Slot& {
        const Slot& s = slots_[static_cast<size_t>(argIdx[k])];
        if (!s.set)
            throw Error(in.span, "operand '" + in.args[k].str() + "' not computed (L" +
                                     std::to_string(in.id) + ")");
        return s;
    };
    Slot out;
    out.set = true;

    auto charge = [&]() {
        counters.ops += 1;
        counters.allocs += 1; // boxed intermediate
        if (buildTape_) counters.allocs += 1;
    };
    auto record = [&](std::vector<int> argTapeIds, std::vector<double> partials) {
        if (!buildTape_) return;
        counters.tapeNodes += 1;
        // drop untaped args (constants, inactive data)
        std::vector<int> ids;
        std::vector<double> ps;
        for (size_t k = 0; k < argTapeIds.size(); ++k) {
            if (argTapeIds[k] >= 0) {
                ids.push_back(argTapeIds[k]);
                ps.push_back(partials[k]);
            }
        }
        out.tapeId = tape.addNode(out.v, std::move(ids), std::move(ps));
    };

    switch (in.op) {
    case SsaOp::Const:
        out.v = toDouble(in.cval);
        break;
    case SsaOp::Copy:
        out = argVal(0);
        break;
    case SsaOp::Neg: {
        const Slot& a = argVal(0);
        out.v = -a.v;
        if (!in.plumbing) {
            charge();
            record({a.tapeId}, {-1.0});
        }
        break;
    }
    case SsaOp::Add:
    case SsaOp::Sub:
    case SsaOp::Mul:
    case SsaOp::Div: {
        const Slot& a = argVal(0);
        const Slot& b = argVal(1);
        std::vector<double> partials;
        switch (in.op) {
        case SsaOp::Add:
            out.v = a.v + b.v;
            partials = {1.0, 1.0};
            break;
        case SsaOp::Sub:
            out.v = a.v - b.v;
            partials = {1.0, -1.0};
            break;
        case SsaOp::Mul:
            out.v = a.v * b.v;
            partials = {b.v, a.v};
            break;
        default:
            if (b.v == 0) throw Error(in.span, "division by zero");
            out.v = a.v / b.v;
            partials = {1.0 / b.v, -a.v / (b.v * b.v)};
            break;
        }
        if (!in.plumbing) {
            charge();
            record({a.tapeId, b.tapeId}, std::move(partials));
        }
        break;
    }
    case SsaOp::Index: {
        const Slot& ix = argVal(0);
        long i = std::lround(ix.v);
        auto it = arrays_.find(in.array);
        if (it == arrays_.end()) throw Error(in.span, "unknown array '" + in.array + "'");
        if (i < 0 || i >= static_cast<long>(it->second->size()))
            throw Error(in.span, "index out of range: " + in.array + "[" + std::to_string(i) + "]");
        out.v = (*it->second)[static_cast<size_t>(i)];
        if (buildTape_ && f_->isActiveParam(in.array)) {
            auto& nodes = arrayInputNodes_[in.array];
            auto nIt = nodes.find(i);
            if (nIt == nodes.end()) {
                int id = tape.addInput(in.array, static_cast<int>(i), out.v);
                nodes[i] = id;
                out.tapeId = id;
            } else {
                out.tapeId = nIt->second;
            }
        }
        break;
    }
    case SsaOp::Call: {
        std::vector<double> av;
        std::vector<int> ids;
        for (size_t k = 0; k < argIdx.size(); ++k) {
            const Slot& s = argVal(k);
            av.push_back(s.v);
            ids.push_back(s.tapeId);
        }
        std::vector<double> partials;
        try {
            out.v = applyCall(in.intrinsic, av, &partials);
        } catch (const Error& e) {
            throw Error(in.span, std::string(e.what()) + " (L" + std::to_string(in.id) + ")");
        }
        if (!in.plumbing) {
            charge();
            record(std::move(ids), std::move(partials));
        }
        break;
    }
    case SsaOp::Cmp: {
        const Slot& a = argVal(0);
        const Slot& b = argVal(1);
        bool r = false;
        switch (in.cmp) {
        case CmpOp::Lt: r = a.v < b.v; break;
        case CmpOp::Le: r = a.v <= b.v; break;
        case CmpOp::Gt: r = a.v > b.v; break;
        case CmpOp::Ge: r = a.v >= b.v; break;
        case CmpOp::Eq: r = a.v == b.v; break;
        case CmpOp::Ne: r = a.v != b.v; break;
        }
        out.v = r ? 1.0 : 0.0;
        break;
    }
    case SsaOp::Break:
        return;
    case SsaOp::Phi: {
        size_t arg = 0;
        if (in.phiKind == PhiKind::Normal) {
            auto it = lastDecision_.find(in.site);
            if (it == lastDecision_.end())
                throw Error(in.span, "phi executed before its branch");
            arg = static_cast<size_t>(it->second);
        } else if (in.phiKind == PhiKind::LoopEntry) {
            long j = loopIter_.at(in.site);
            arg = j == 0 ? 0 : 1;
        } else {
            arg = static_cast<size_t>(loopExitEdge_.at(in.site));
        }
        out = argVal(arg);
        break;
    }
    }
    slots_[static_cast<size_t>(defSlot_[in.id])] = out;
}

int SsaInterp::execStruct(const Structure& st) {
    switch (st.kind) {
    case StructKind::If: {
        bool taken = valueOf(f_->instr(st.cond).def) != 0.0;
        lastDecision_[st.site] = taken ? 0 : 1;
        trace.decisions[st.site].push_back(taken ? 0 : 1);
        return execBlock(taken ? st.thenB : st.elseB);
    }
    case StructKind::For: {
        double lo = valueOf(st.loName);
        double hi = valueOf(st.hiName);
        long trips = std::lround(hi) - std::lround(lo);
        if (trips < 0) trips = 0;
        loopTrips_[st.loopId] = 0;
        for (long j = 0; j < trips; ++j) {
            loopIter_[st.loopId] = j;
            loopTrips_[st.loopId] = j + 1;
            int status = execBlock(st.body);
            if (status != 0) return status; // impossible: no breaks in for
        }
        trace.trips[st.loopId].push_back(trips);
        loopExitEdge_[st.loopId] = trips == 0 ? 0 : static_cast<int>(1);
        trace.exitEdges[st.loopId].push_back(loopExitEdge_[st.loopId]);
        return 0;
    }
    case StructKind::While: {
        long trips = 0;
        int exitEdge = 0;
        while (true) {
            loopIter_[st.loopId] = trips;
            int hs = execBlock(st.header);
            (void)hs;
            if (valueOf(f_->instr(st.whileCond).def) == 0.0) {
                exitEdge = trips == 0 ? 0 : st.numBreaks + 1;
                break;
            }
            ++trips;
            loopTrips_[st.loopId] = trips;
            int status = execBlock(st.body);
            if (status != 0) {
                exitEdge = status; // 1 + break index
                break;
            }
        }
        trace.trips[st.loopId].push_back(trips);
        loopExitEdge_[st.loopId] = exitEdge;
        trace.exitEdges[st.loopId].push_back(exitEdge);
        return 0;
    }
    }
    return 0;
}

// --- expression-level taped gradient (oracle) --------------------------------

namespace {

struct ETape {
    std::vector<TapeNode> nodes;
    int add(double v, std::vector<int> args, std::vector<double> ps) {
        TapeNode n;
        n.value = v;
        n.args = std::move(args);
        n.partials = std::move(ps);
        nodes.push_back(std::move(n));
        return static_cast<int>(nodes.size()) - 1;
    }
};

struct ENode {
    double v;
    int id; // -1 when constant w.r.t. the target
};

ENode etEval(const ExprPtr& e, std::map<std::string, double>& syms,
             const std::map<std::string, std::vector<double>>& arrays,
             const std::string& wrt, ETape& t, const TraceRecord* trace,
             std::map<int, double>& carried, std::map<int, int>& carriedId) {
    switch (e->kind) {
    case SxKind::Const:
        return {toDouble(e->value), -1};
    case SxKind::Sym: {
        auto it = syms.find(e->name);
        if (it == syms.end()) throw Error("unbound symbol '" + e->name + "'");
        if (e->name == wrt) return {it->second, t.add(it->second, {}, {})};
        return {it->second, -1};
    }
    case SxKind::ArrayRef: {
        auto it = arrays.find(e->name);
        if (it == arrays.end()) throw Error("unbound array '" + e->name + "'");
        std::map<int, double> c2;
        std::map<int, int> ci2;
        long i = std::lround(
            etEval(e->kids[0], syms, arrays, "", t, trace, c2, ci2).v);
        return {it->second.at(static_cast<size_t>(i)), -1};
    }
    case SxKind::Add: {
        double v = 0;
        std::vector<int> args;
        for (const auto& k : e->kids) {
            ENode n = etEval(k, syms, arrays, wrt, t, trace, carried, carriedId);
            v += n.v;
            if (n.id >= 0) args.push_back(n.id);
        }
        if (args.empty()) return {v, -1};
        return {v, t.add(v, args, std::vector<double>(args.size(), 1.0))};
    }
    case SxKind::Mul: {
        double v = 1;
        std::vector<ENode> ns;
        for (const auto& k : e->kids) {
            ns.push_back(etEval(k, syms, arrays, wrt, t, trace, carried, carriedId));
            v *= ns.back().v;
        }
        std::vector<int> args;
        std::vector<double> ps;
        for (size_t i = 0; i < ns.size(); ++i) {
            if (ns[i].id < 0) continue;
            double p = 1;
            for (size_t j = 0; j < ns.size(); ++j)
                if (j != i) p *= ns[j].v;
            args.push_back(ns[i].id);
            ps.push_back(p);
        }
        if (args.empty()) return {v, -1};
        return {v, t.add(v, std::move(args), std::move(ps))};
    }
    case SxKind::Pow: {
        ENode b = etEval(e->kids[0], syms, arrays, wrt, t, trace, carried, carriedId);
        ENode x = etEval(e->kids[1], syms, arrays, wrt, t, trace, carried, carriedId);
        double v = (b.v == 0 && x.v == 0) ? 1.0 : std::pow(b.v, x.v);
        std::vector<int> args;
        std::vector<double> ps;
        if (b.id >= 0) {
            args.push_back(b.id);
            ps.push_back(b.v == 0 ? 0.0 : v * x.v / b.v);
        }
        if (x.id >= 0) {
            args.push_back(x.id);
            ps.push_back(b.v > 0 ? v * std::log(b.v) : 0.0);
        }
        if (args.empty()) return {v, -1};
        return {v, t.add(v, std::move(args), std::move(ps))};
    }
    case SxKind::Call: {
        std::vector<double> av;
        std::vector<ENode> ns;
        for (const auto& k : e->kids) {
            ns.push_back(etEval(k, syms, arrays, wrt, t, trace, carried, carriedId));
            av.push_back(ns.back().v);
        }
        std::vector<double> partials;
        double v = applyCall(e->intrinsic, av, &partials);
        std::vector<int> args;
        std::vector<double> ps;
        for (size_t i = 0; i < ns.size(); ++i) {
            if (ns[i].id < 0) continue;
            args.push_back(ns[i].id);
            ps.push_back(partials[i]);
        }
        if (args.empty()) return {v, -1};
        return {v, t.add(v, std::move(args), std::move(ps))};
    }
    case SxKind::Cmp: {
        ENode a = etEval(e->kids[0], syms, arrays, wrt, t, trace, carried, carriedId);
        ENode b = etEval(e->kids[1], syms, arrays, wrt, t, trace, carried, carriedId);
        bool r = false;
        switch (e->cmp) {
        case CmpOp::Lt: r = a.v < b.v; break;
        case CmpOp::Le: r = a.v <= b.v; break;
        case CmpOp::Gt: r = a.v > b.v; break;
        case CmpOp::Ge: r = a.v >= b.v; break;
        case CmpOp::Eq: r = a.v == b.v; break;
        case CmpOp::Ne: r = a.v != b.v; break;
        }
        return {r ? 1.0 : 0.0, -1};
    }
    case SxKind::Select: {
        ENode c = etEval(e->kids[0], syms, arrays, wrt, t, trace, carried, carriedId);
        return etEval(c.v != 0 ? e->kids[1] : e->kids[2], syms, arrays, wrt, t, trace,
                      carried, carriedId);
    }
    case SxKind::Sum:
    case SxKind::Prod: {
        std::map<int, double> c2;
        std::map<int, int> ci2;
        long lo = std::lround(etEval(e->kids[0], syms, arrays, "", t, trace, c2, ci2).v);
        long hi = std::lround(etEval(e->kids[1], syms, arrays, "", t, trace, c2, ci2).v);
        bool isSum = e->kind == SxKind::Sum;
        double acc = isSum ? 0.0 : 1.0;
        std::vector<ENode> ns;
        bool hadSaved = syms.count(e->name) > 0;
        double saved = hadSaved ? syms[e->name] : 0.0;
        for (long i = lo; i <= hi; ++i) {
            syms[e->name] = static_cast<double>(i);
            ENode n = etEval(e->kids[2], syms, arrays, wrt, t, trace, carried, carriedId);
            ns.push_back(n);
            acc = isSum ? acc + n.v : acc * n.v;
        }
        if (hadSaved)
            syms[e->name] = saved;
        else
            syms.erase(e->name);
        std::vector<int> args;
        std::vector<double> ps;
        for (size_t i = 0; i < ns.size(); ++i) {
            if (ns[i].id < 0) continue;
            double p = 1.0;
            if (!isSum) {
                for (size_t j = 0; j < ns.size(); ++j)
                    if (j != i) p *= ns[j].v;
            }
            args.push_back(ns[i].id);
            ps.push_back(p);
        }
        if (args.empty()) return {acc, -1};
        return {acc, t.add(acc, std::move(args), std::move(ps))};
    }
    case SxKind::Phi: {
        if (e->phiKind == PhiKind::LoopEntry) {
            auto it = carried.find(e->site);
            if (it == carried.end()) throw Error("entry phi outside loop");
            return {it->second, carriedId.at(e->site)};
        }
        if (e->phiKind == PhiKind::LoopExit) {
            if (!trace) throw Error("loop-exit phi needs a trace");
            long trip = trace->tripOf(e->site);
            size_t arg = trip == 0 ? 0 : e->kids.size() - 1;
            auto it = trace->exitEdges.find(e->site);
            if (trip != 0 && it != trace->exitEdges.end() && !it->second.empty())
                arg = static_cast<size_t>(it->second[0]);
            return etEval(e->kids[arg], syms, arrays, wrt, t, trace, carried, carriedId);
        }
        if (!trace) throw Error("normal phi needs a decision");
        auto it = trace->decisions.find(e->site);
        if (it == trace->decisions.end() || it->second.empty())
            throw Error("no decision for phi site");
        return etEval(e->kids[static_cast<size_t>(it->second[0])], syms, arrays, wrt, t,
                      trace, carried, carriedId);
    }
    case SxKind::LoopBody: {
        std::map<int, double> c2;
        std::map<int, int> ci2;
        long n = std::lround(etEval(e->kids[0], syms, arrays, "", t, trace, c2, ci2).v);
        if (n < 0) n = 0;
        const SymExpr* entry = nullptr;
        forEachNode(e->kids[1], [&](const ExprPtr& x) {
            if (x->kind == SxKind::Phi && x->phiKind == PhiKind::LoopEntry &&
                x->site == e->site)
                entry = x.get();
        });
        if (!entry) throw Error("loop body without entry phi");
        ENode st = etEval(entry->kids[0], syms, arrays, wrt, t, trace, carried, carriedId);
        std::string iter = "@it" + std::to_string(e->site);
        for (long j = 0; j < n; ++j) {
            carried[e->site] = st.v;
            carriedId[e->site] = st.id;
            syms[iter] = static_cast<double>(j);
            st = etEval(e->kids[1], syms, arrays, wrt, t, trace, carried, carriedId);
        }
        carried.erase(e->site);
        carriedId.erase(e->site);
        syms.erase(iter);
        return st;
    }
    default:
        throw Error("expression not supported by the taped evaluator");
    }
}

} // namespace

double exprTapeGradient(const ExprPtr& e, const EvalEnv& env, const std::string& wrt,
                        double* valueOut) {
    ETape t;
    std::map<std::string, double> syms = env.scalars;
    std::map<int, double> carried;
    std::map<int, int> carriedId;
    ENode root = etEval(e, syms, env.arrays, wrt, t, env.trace, carried, carriedId);
    if (valueOut) *valueOut = root.v;
    if (root.id < 0) return 0.0;
    std::vector<double> adj(t.nodes.size(), 0.0);
    adj[static_cast<size_t>(root.id)] = 1.0;
    for (int i = static_cast<int>(t.nodes.size()) - 1; i >= 0; --i) {
        const TapeNode& n = t.nodes[static_cast<size_t>(i)];
        for (size_t k = 0; k < n.args.size(); ++k)
            adj[static_cast<size_t>(n.args[k])] += adj[static_cast<size_t>(i)] * n.partials[k];
    }
    // every zero-arg node is a leaf minted for an occurrence of `wrt`
    double g = 0;
    for (size_t i = 0; i < t.nodes.size(); ++i)
        if (t.nodes[i].args.empty()) g += adj[i];
    return g;
}

double centralDiff(const std::function<double(double)>& f, double x, double scale) {
    double h = scale * std::max(1.0, std::fabs(x));
    return (f(x + h) - f(x - h)) / (2 * h);
}

} // namespace phigrad
