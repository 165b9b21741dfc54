#include "phigrad/elevate.hpp"

#include <algorithm>
#include <cassert>

namespace phigrad {

std::string boundarySymbol(const SsaFunction& s, const VName& v) {
    if (s.isParamName(v)) return v.base;
    return v.str();
}

namespace {

class Elevator {
  public:
    Elevator(const SsaFunction& s, const std::vector<InstrId>& soi) : s_(s) {
        soi_.insert(soi.begin(), soi.end());
    }

    Elevation run(const VName& out) {
        result_.expr = exprOf(out);
        rejectMutualRecurrences(result_.exprWithShares());
        return std::move(result_);
    }

    // A loop body whose recurrence references another carried value of the
    // same loop has no univariate closed form here; the segment must shrink
    // until the loop is handled by the per-operation tape.
    void rejectMutualRecurrences(const ExprPtr& e) {
        forEachNode(e, [&](const ExprPtr& n) {
            if (n->kind != SxKind::LoopBody) return;
            int distinct = 0;
            std::vector<const SymExpr*> seen;
            forEachNode(n->kids[1], [&](const ExprPtr& m) {
                if (m->kind == SxKind::Phi && m->phiKind == PhiKind::LoopEntry &&
                    m->site == n->site) {
                    for (const auto* s : seen)
                        if (compareExpr(*s, *m) == 0) return;
                    seen.push_back(m.get());
                    ++distinct;
                }
            });
            if (distinct > 1)
                throw Error("loop carries mutually dependent values; segment not elevatable");
        });
    }

  private:
    ExprPtr iterSym(int loopId) { return sx::sym("@it" + std::to_string(loopId)); }

    const Structure& loopStruct(int loopId) const {
        const Structure* st = s_.loopById(loopId);
        assert(st);
        return *st;
    }

    // trip-count expression of a loop; while loops get a fresh trace symbol
    ExprPtr tripExpr(const Structure& st) {
        auto it = result_.tripExprs.find(st.loopId);
        if (it != result_.tripExprs.end()) return it->second;
        ExprPtr trip;
        if (st.kind == StructKind::For) {
            trip = sx::sub(exprOf(st.hiName), exprOf(st.loName));
            result_.loopMeta[st.loopId] =
                {false, st.indexName.base, exprOf(st.loName), exprOf(st.hiName)};
        } else {
            // a while nested inside another loop would need one trip symbol
            // per activation; such segments stay with the per-iteration tape
            for (int p = st.parent; p != -1; p = s_.structs[static_cast<size_t>(p)].parent)
                if (s_.structs[static_cast<size_t>(p)].kind != StructKind::If)
                    throw Error("while loop nested inside a loop is not elevatable");
            result_.loopMeta[st.loopId] = {true, "", nullptr, nullptr};
            std::string k = result_.traceSymbols.empty()
                                ? "K"
                                : "K" + std::to_string(result_.traceSymbols.size() + 1);
            result_.traceSymbols[k] = st.loopId;
            trip = sx::sym(k);
            result_.whileConds[st.loopId] = exprOf(s_.instr(st.whileCond).def);
            std::vector<ExprPtr> guards;
            for (InstrId g : st.breakGuards)
                guards.push_back(g == kNoInstr ? sx::one() : exprOf(s_.instr(g).def));
            result_.breakConds[st.loopId] = std::move(guards);
        }
        result_.tripExprs[st.loopId] = trip;
        return trip;
    }

    bool isIndexPhi(const SsaInstr& phi) const {
        const Structure& st = loopStruct(phi.site);
        return st.kind == StructKind::For && st.indexName == phi.def;
    }

    // step expression of a carried variable, keyed by its backedge name
    ExprPtr stepOf(const SsaInstr& phi) {
        ExprPtr step = exprOf(phi.args.back());
        result_.loopSteps[phi.site][phi.args.back().str()] = step;
        result_.loopInits[phi.site][phi.args.back().str()] = exprOf(phi.args[0]);
        return step;
    }

    ExprPtr stepExprFor(int loopId, const std::string& carried) {
        const Structure& st = loopStruct(loopId);
        for (InstrId pid : st.entryPhis) {
            const SsaInstr& phi = s_.instr(pid);
            if (phi.args.back().str() == carried) return stepOf(phi);
        }
        throw Error("no recurrence found for '" + carried + "'");
    }

    // value of expression E at the final (n-th, 1-based) iteration: carried
    // phis advance to their (n-1)-iterate, the iteration counter becomes n-1
    ExprPtr atFinalIteration(const ExprPtr& e, int loopId, const ExprPtr& trip) {
        ExprPtr nm1 = sx::sub(trip, sx::one());
        ExprPtr out = replaceEntryPhis(e, loopId, nm1);
        std::map<std::string, ExprPtr> m;
        m["@it" + std::to_string(loopId)] = nm1;
        return substitute(out, m);
    }

    ExprPtr replaceEntryPhis(const ExprPtr& e, int loopId, const ExprPtr& nm1) {
        if (e->kind == SxKind::Phi && e->phiKind == PhiKind::LoopEntry && e->site == loopId &&
            e->kids[1]->kind == SxKind::Sym) {
            const std::string& carried = e->kids[1]->name;
            return sx::loopBody(loopId, carried, nm1, stepExprFor(loopId, carried));
        }
        if (e->kids.empty()) return e;
        std::vector<ExprPtr> kids;
        bool changed = false;
        for (const auto& k : e->kids) {
            kids.push_back(replaceEntryPhis(k, loopId, nm1));
            changed = changed || kids.back().get() != k.get();
        }
        if (!changed) return e;
        switch (e->kind) {
        case SxKind::Add: return sx::add(std::move(kids));
        case SxKind::Mul: return sx::mul(std::move(kids));
        case SxKind::Pow: return sx::pow(kids[0], kids[1]);
        case SxKind::Call: return sx::call(e->intrinsic, std::move(kids));
        case SxKind::Cmp: return sx::cmp(e->cmp, kids[0], kids[1]);
        case SxKind::Select: return sx::select(kids[0], kids[1], kids[2]);
        case SxKind::Phi: return sx::phi(e->phiKind, e->site, std::move(kids));
        case SxKind::ArrayRef: return sx::arrayRef(e->name, kids[0]);
        case SxKind::Sum: return sx::sum(e->name, kids[0], kids[1], kids[2]);
        case SxKind::Prod: return sx::prod(e->name, kids[0], kids[1], kids[2]);
        case SxKind::LoopBody: return sx::loopBody(e->site, e->name, kids[0], kids[1]);
        case SxKind::IterApply: return sx::iterApply(e->name, kids[0], kids[1], kids[2]);
        case SxKind::IterInstance: return sx::iterInstance(e->site, e->name, kids[0]);
        default: return e;
        }
    }

    ExprPtr exprOf(const VName& v) {
        auto cached = cache_.find(v);
        if (cached != cache_.end()) return cached->second;
        ExprPtr e = compute(v);
        // share large multiply-referenced subexpressions behind placeholders
        if (e->nodes > 64 && s_.refCount(v) > 1 && !s_.isParamName(v)) {
            std::string name = "$" + v.str();
            result_.shares.push_back({name, e});
            e = sx::sym(name);
        }
        cache_[v] = e;
        return e;
    }

    ExprPtr compute(const VName& v) {
        auto defIt = s_.defOf.find(v);
        if (defIt == s_.defOf.end()) throw Error("elevate: unknown name '" + v.str() + "'");
        InstrId id = defIt->second;
        if (id == kNoInstr || !soi_.count(id)) return sx::sym(boundarySymbol(s_, v));
        const SsaInstr& in = s_.instr(id);
        switch (in.op) {
        case SsaOp::Const:
            return sx::c(in.cval);
        case SsaOp::Copy:
            return exprOf(in.args[0]);
        case SsaOp::Neg:
            return sx::neg(exprOf(in.args[0]));
        case SsaOp::Add:
            return sx::add(exprOf(in.args[0]), exprOf(in.args[1]));
        case SsaOp::Sub:
            return sx::sub(exprOf(in.args[0]), exprOf(in.args[1]));
        case SsaOp::Mul:
            return sx::mul(exprOf(in.args[0]), exprOf(in.args[1]));
        case SsaOp::Div:
            return sx::div(exprOf(in.args[0]), exprOf(in.args[1]));
        case SsaOp::Index:
            return sx::arrayRef(in.array, exprOf(in.args[0]));
        case SsaOp::Call: {
            std::vector<ExprPtr> args;
            for (const auto& a : in.args) args.push_back(exprOf(a));
            return sx::call(in.intrinsic, std::move(args));
        }
        case SsaOp::Cmp:
            return sx::cmp(in.cmp, exprOf(in.args[0]), exprOf(in.args[1]));
        case SsaOp::Phi:
            return phiExpr(in);
        case SsaOp::Break:
            break;
        }
        throw Error("elevate: unhandled op");
    }

    ExprPtr phiExpr(const SsaInstr& in) {
        switch (in.phiKind) {
        case PhiKind::Normal: {
            // retain the branch condition alongside; the phi stays condition-free
            for (const auto& st : s_.structs)
                if (st.kind == StructKind::If && st.site == in.site && st.cond != kNoInstr)
                    result_.conditions[in.site] = exprOf(s_.instr(st.cond).def);
            return sx::phi(PhiKind::Normal, in.site,
                           {exprOf(in.args[0]), exprOf(in.args[1])});
        }
        case PhiKind::LoopEntry: {
            const Structure& st = loopStruct(in.site);
            if (isIndexPhi(in)) {
                // induction index: lo + iteration counter
                return sx::add(exprOf(st.loName), iterSym(in.site));
            }
            ExprPtr init = exprOf(in.args[0]);
            return sx::phi(PhiKind::LoopEntry, in.site,
                           {init, sx::sym(in.args.back().str())});
        }
        case PhiKind::LoopExit: {
            const Structure& st = loopStruct(in.site);
            ExprPtr trip = tripExpr(st);
            std::vector<ExprPtr> args;
            args.push_back(exprOf(in.args[0])); // pre-loop value
            for (size_t k = 1; k < in.args.size(); ++k) {
                const VName& argName = in.args[k];
                ExprPtr inLoop = exprOf(argName);
                // an argument that is (or equals) a carried variable's
                // recurrence step is the loop notation over that step
                bool isStep = false;
                for (InstrId pid : st.entryPhis) {
                    const SsaInstr& phi = s_.instr(pid);
                    if (phi.args.back() == argName || equalExpr(stepOf(phi), inLoop)) {
                        args.push_back(sx::loopBody(st.loopId, phi.args.back().str(), trip,
                                                    stepOf(phi)));
                        isStep = true;
                        break;
                    }
                }
                if (isStep) continue;
                // generic in-loop value: close at the final iteration
                args.push_back(atFinalIteration(inLoop, st.loopId, trip));
            }
            return sx::phi(PhiKind::LoopExit, st.loopId, std::move(args));
        }
        }
        throw Error("elevate: unknown phi kind");
    }

    const SsaFunction& s_;
    std::set<InstrId> soi_;
    std::map<VName, ExprPtr> cache_;
    Elevation result_;
};

} // namespace

ExprPtr Elevation::exprWithShares() const {
    ExprPtr out = expr;
    // shares were appended innermost-first; inline in reverse
    for (auto it = shares.rbegin(); it != shares.rend(); ++it) {
        std::map<std::string, ExprPtr> m{{it->first, it->second}};
        out = substitute(out, m);
    }
    return out;
}

Elevation elevate(const SsaFunction& s, const std::vector<InstrId>& soi, const VName& out) {
    Elevator e(s, soi);
    return e.run(out);
}

} // namespace phigrad
