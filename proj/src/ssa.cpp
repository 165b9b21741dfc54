#include "phigrad/ssa.hpp"
#include "phigrad/frontend.hpp"

#include <json.hpp>

#include <algorithm>
#include <cassert>
#include <deque>
#include <functional>
#include <sstream>

namespace phigrad {

bool SsaFunction::isParamName(const VName& v) const {
    if (v.ver != 0) return false;
    for (const auto& p : params)
        if (p.name == v.base) return true;
    return false;
}

bool SsaFunction::isActiveParam(const std::string& base) const {
    for (const auto& p : params)
        if (p.name == base) return p.isActive;
    return false;
}

const Structure* SsaFunction::loopById(int loopId) const {
    for (const auto& st : structs)
        if (st.loopId == loopId && st.kind != StructKind::If) return &st;
    return nullptr;
}

int SsaFunction::structOf(InstrId id) const {
    auto it = enclosing.find(id);
    return it == enclosing.end() ? -1 : it->second;
}

int SsaFunction::refCount(const VName& v) const {
    int n = 0;
    for (const auto& in : instrs)
        for (const auto& a : in.args)
            if (a == v) ++n;
    if (returnName == v) ++n;
    return n;
}

namespace {

class Builder {
  public:
    Builder(const Program& p, const FunctionDef& fn) : fn_(fn) { (void)p; }

    SsaFunction run() {
        out_.name = fn_.name;
        out_.params = fn_.params;
        for (const auto& prm : fn_.params) {
            if (!prm.isArray) {
                env_[prm.name] = VName{prm.name, 0};
                out_.defOf[VName{prm.name, 0}] = kNoInstr;
            } else {
                arrays_.insert(prm.name);
            }
        }
        buildBody(fn_.body, out_.top);
        out_.returnName = buildExpr(*fn_.ret, out_.top);
        pruneDeadPhis();
        markPlumbing();
        return std::move(out_);
    }

  private:
    using Env = std::map<std::string, VName>;

    VName fresh(const std::string& base) { return VName{base, ++verCounter_[base]}; }

    VName temp() { return VName{"%t", ++tempCounter_}; }

    InstrId emit(SsaInstr in, Block& block) {
        in.id = static_cast<InstrId>(out_.instrs.size());
        out_.defOf[in.def] = in.id;
        if (curStruct_ != -1) out_.enclosing[in.id] = curStruct_;
        block.items.push_back({true, in.id});
        out_.instrs.push_back(std::move(in));
        return out_.instrs.back().id;
    }

    VName buildExpr(const AExpr& e, Block& block) {
        SsaInstr in;
        in.span = e.span;
        switch (e.kind) {
        case AExprKind::Const:
            in.op = SsaOp::Const;
            in.cval = e.value;
            break;
        case AExprKind::Var: {
            auto it = env_.find(e.name);
            if (it == env_.end()) throw Error(e.span, "undefined variable '" + e.name + "'");
            return it->second;
        }
        case AExprKind::Index:
            in.op = SsaOp::Index;
            in.array = e.name;
            in.args = {buildExpr(*e.args[0], block)};
            break;
        case AExprKind::Unary:
            in.op = SsaOp::Neg;
            in.args = {buildExpr(*e.args[0], block)};
            break;
        case AExprKind::Binary:
            in.op = e.bop == BinOp::Add   ? SsaOp::Add
                    : e.bop == BinOp::Sub ? SsaOp::Sub
                    : e.bop == BinOp::Mul ? SsaOp::Mul
                                          : SsaOp::Div;
            in.args = {buildExpr(*e.args[0], block), buildExpr(*e.args[1], block)};
            break;
        case AExprKind::Call:
            in.op = SsaOp::Call;
            in.intrinsic = e.intrinsic;
            for (const auto& a : e.args) in.args.push_back(buildExpr(*a, block));
            break;
        }
        in.def = temp();
        emit(in, block);
        return in.def;
    }

    InstrId buildCmp(const Cond& c, Block& block) {
        SsaInstr in;
        in.op = SsaOp::Cmp;
        in.cmp = c.op;
        in.span = c.span;
        in.args = {buildExpr(*c.lhs, block), buildExpr(*c.rhs, block)};
        in.def = temp();
        return emit(in, block);
    }

    // Rebinds the defining instruction of a temp to a named version; emits a
    // Copy when the rhs is a direct reference to an existing name.
    void assign(const std::string& target, VName rhs, Span span, Block& block) {
        VName named = fresh(target);
        auto it = out_.defOf.find(rhs);
        if (rhs.base == "%t" && it != out_.defOf.end() && it->second != kNoInstr) {
            SsaInstr& in = out_.instrs[static_cast<size_t>(it->second)];
            out_.defOf.erase(it);
            in.def = named;
            out_.defOf[named] = in.id;
        } else {
            SsaInstr in;
            in.op = SsaOp::Copy;
            in.args = {rhs};
            in.def = named;
            in.span = span;
            emit(in, block);
        }
        env_[target] = named;
    }

    // Bases assigned anywhere within a statement list (transitively).
    static void assignedBases(const std::vector<StmtPtr>& body, std::set<std::string>& out) {
        for (const auto& sp : body) {
            switch (sp->kind) {
            case StmtKind::Assign:
                out.insert(sp->name);
                break;
            case StmtKind::If:
                assignedBases(sp->body, out);
                assignedBases(sp->elseBody, out);
                break;
            case StmtKind::For:
            case StmtKind::While:
                assignedBases(sp->body, out);
                break;
            case StmtKind::Break:
                break;
            }
        }
    }

    static bool fallsThrough(const std::vector<StmtPtr>& body) {
        for (const auto& sp : body) {
            if (sp->kind == StmtKind::Break) return false;
            if (sp->kind == StmtKind::If && !sp->elseBody.empty() &&
                !fallsThrough(sp->body) && !fallsThrough(sp->elseBody))
                return false;
        }
        return true;
    }

    struct BreakCtx {
        std::vector<Env> snapshots;        // env at each break site
        std::vector<InstrId> guardConds;   // cmp of the if guarding each break
        std::vector<InstrId> pendingGuard; // cond stack while building
    };

    void buildBody(const std::vector<StmtPtr>& body, Block& block) {
        for (const auto& sp : body) buildStmt(*sp, block);
    }

    void buildStmt(const Stmt& s, Block& block) {
        switch (s.kind) {
        case StmtKind::Assign: {
            VName v = buildExpr(*s.value, block);
            assign(s.name, v, s.span, block);
            return;
        }
        case StmtKind::If: return buildIf(s, block);
        case StmtKind::For: return buildFor(s, block);
        case StmtKind::While: return buildWhile(s, block);
        case StmtKind::Break: {
            if (!breaks_) throw Error(s.span, "break outside while");
            SsaInstr br;
            br.op = SsaOp::Break;
            br.site = static_cast<int>(breaks_->snapshots.size());
            br.def = temp();
            br.span = s.span;
            emit(br, block);
            breaks_->snapshots.push_back(env_);
            breaks_->guardConds.push_back(
                breaks_->pendingGuard.empty() ? kNoInstr : breaks_->pendingGuard.back());
            return;
        }
        }
    }

    void buildIf(const Stmt& s, Block& block) {
        InstrId cond = buildCmp(*s.cond, block);

        Structure st;
        st.kind = StructKind::If;
        st.span = s.span;
        st.site = out_.numSites++;
        st.cond = cond;
        st.parent = curStruct_;
        int sid = static_cast<int>(out_.structs.size());
        st.id = sid;
        out_.structs.push_back(std::move(st));
        block.items.push_back({false, sid});

        int saved = curStruct_;
        curStruct_ = sid;
        if (breaks_) breaks_->pendingGuard.push_back(cond);

        Env pre = env_;
        Block thenB, elseB;
        buildBody(s.body, thenB);
        Env thenEnv = env_;
        env_ = pre;
        buildBody(s.elseBody, elseB);
        Env elseEnv = env_;

        if (breaks_) breaks_->pendingGuard.pop_back();
        curStruct_ = saved;

        bool thenFalls = fallsThrough(s.body);
        bool elseFalls = fallsThrough(s.elseBody);

        std::vector<InstrId> mergePhis;
        if (thenFalls && elseFalls) {
            std::set<std::string> touched;
            assignedBases(s.body, touched);
            assignedBases(s.elseBody, touched);
            env_ = pre;
            for (const auto& base : touched) {
                auto tIt = thenEnv.find(base);
                auto eIt = elseEnv.find(base);
                bool inThen = tIt != thenEnv.end();
                bool inElse = eIt != elseEnv.end();
                if (!inThen && !inElse) continue;
                VName tv = inThen ? tIt->second : pre.count(base) ? pre[base] : VName{};
                VName ev = inElse ? eIt->second : pre.count(base) ? pre[base] : VName{};
                if (tv.base.empty() || ev.base.empty()) continue; // one-sided local
                if (tv == ev) {
                    env_[base] = tv;
                    continue;
                }
                SsaInstr phi;
                phi.op = SsaOp::Phi;
                phi.phiKind = PhiKind::Normal;
                phi.site = out_.structs[static_cast<size_t>(sid)].site;
                phi.args = {tv, ev};
                phi.def = fresh(base);
                phi.span = s.span;
                curStruct_ = saved;
                mergePhis.push_back(emit(phi, block));
                env_[base] = phi.def;
            }
        } else if (thenFalls) {
            env_ = thenEnv;
        } else if (elseFalls) {
            env_ = elseEnv;
        } else {
            env_ = pre; // nothing after the if is reachable
        }

        Structure& stRef = out_.structs[static_cast<size_t>(sid)];
        stRef.thenB = std::move(thenB);
        stRef.elseB = std::move(elseB);
        stRef.mergePhis = std::move(mergePhis);
    }

    struct LoopPhis {
        std::vector<std::string> bases;     // carried bases, entry/exit order
        std::vector<VName> preVersions;
        std::vector<InstrId> entries;
    };

    LoopPhis emitEntryPhis(const std::set<std::string>& carried, int loopId, Span span,
                           Block& into) {
        LoopPhis lp;
        for (const auto& base : carried) {
            VName pre = env_.at(base);
            SsaInstr phi;
            phi.op = SsaOp::Phi;
            phi.phiKind = PhiKind::LoopEntry;
            phi.site = loopId;
            phi.args = {pre, VName{}}; // backedge patched later
            phi.def = fresh(base);
            phi.span = span;
            lp.bases.push_back(base);
            lp.preVersions.push_back(pre);
            lp.entries.push_back(emit(phi, into));
            env_[base] = phi.def;
        }
        return lp;
    }

    void buildFor(const Stmt& s, Block& block) {
        VName loV = buildExpr(*s.lo, block);
        VName hiV = buildExpr(*s.hi, block);

        Structure st;
        st.kind = StructKind::For;
        st.span = s.span;
        st.parent = curStruct_;
        st.loopId = out_.numLoops++;
        int sid = static_cast<int>(out_.structs.size());
        st.id = sid;
        out_.structs.push_back(std::move(st));
        block.items.push_back({false, sid});

        int saved = curStruct_;
        curStruct_ = sid;

        std::set<std::string> carried;
        assignedBases(s.body, carried);
        Env pre = env_;
        std::set<std::string> loopCarried;
        for (const auto& base : carried)
            if (pre.count(base)) loopCarried.insert(base);

        Block body;
        // index behaves like any carried variable: explicit entry phi
        env_[s.name] = loV;
        auto withIndex = loopCarried;
        withIndex.insert(s.name);
        LoopPhis lp = emitEntryPhis(withIndex, out_.structs[static_cast<size_t>(sid)].loopId,
                                    s.span, body);
        VName indexPhi = env_.at(s.name);

        auto savedBreaks = breaks_;
        breaks_ = nullptr; // break is not legal inside for bodies
        buildBody(s.body, body);
        breaks_ = savedBreaks;

        // i_next = i + 1
        SsaInstr inc;
        inc.op = SsaOp::Const;
        inc.cval = 1;
        inc.def = temp();
        inc.span = s.span;
        InstrId oneId = emit(inc, body);
        SsaInstr add;
        add.op = SsaOp::Add;
        add.args = {indexPhi, out_.instrs[static_cast<size_t>(oneId)].def};
        add.def = fresh(s.name);
        add.span = s.span;
        InstrId incId = emit(add, body);

        // patch backedges
        Env bodyEnd = env_;
        for (size_t k = 0; k < lp.bases.size(); ++k) {
            VName back = lp.bases[k] == s.name ? out_.instrs[static_cast<size_t>(incId)].def
                                               : bodyEnd.at(lp.bases[k]);
            out_.instrs[static_cast<size_t>(lp.entries[k])].args[1] = back;
        }

        curStruct_ = saved;
        env_ = pre;
        std::vector<InstrId> exitPhis;
        for (size_t k = 0; k < lp.bases.size(); ++k) {
            if (lp.bases[k] == s.name) continue; // index is loop-local
            SsaInstr phi;
            phi.op = SsaOp::Phi;
            phi.phiKind = PhiKind::LoopExit;
            phi.site = out_.structs[static_cast<size_t>(sid)].loopId;
            phi.args = {lp.preVersions[k], bodyEnd.at(lp.bases[k])};
            phi.def = fresh(lp.bases[k]);
            phi.span = s.span;
            exitPhis.push_back(emit(phi, block));
            env_[lp.bases[k]] = phi.def;
        }
        env_.erase(s.name);

        Structure& stRef = out_.structs[static_cast<size_t>(sid)];
        stRef.body = std::move(body);
        stRef.indexName = indexPhi;
        stRef.lo = out_.defOf.count(loV) ? out_.defOf[loV] : kNoInstr;
        stRef.hi = out_.defOf.count(hiV) ? out_.defOf[hiV] : kNoInstr;
        stRef.entryPhis = lp.entries;
        stRef.exitPhis = std::move(exitPhis);
        stRef.increment = incId;
        loVals_[stRef.loopId] = loV;
        hiVals_[stRef.loopId] = hiV;
    }

    void buildWhile(const Stmt& s, Block& block) {
        Structure st;
        st.kind = StructKind::While;
        st.span = s.span;
        st.parent = curStruct_;
        st.loopId = out_.numLoops++;
        int sid = static_cast<int>(out_.structs.size());
        st.id = sid;
        out_.structs.push_back(std::move(st));
        block.items.push_back({false, sid});

        int saved = curStruct_;
        curStruct_ = sid;

        std::set<std::string> carried;
        assignedBases(s.body, carried);
        Env pre = env_;
        std::set<std::string> loopCarried;
        for (const auto& base : carried)
            if (pre.count(base)) loopCarried.insert(base);

        Block header;
        LoopPhis lp = emitEntryPhis(loopCarried, out_.structs[static_cast<size_t>(sid)].loopId,
                                    s.span, header);
        InstrId cond = buildCmp(*s.cond, header);

        BreakCtx bc;
        auto savedBreaks = breaks_;
        breaks_ = &bc;
        Block body;
        buildBody(s.body, body);
        breaks_ = savedBreaks;

        Env bodyEnd = env_;
        for (size_t k = 0; k < lp.bases.size(); ++k)
            out_.instrs[static_cast<size_t>(lp.entries[k])].args[1] = bodyEnd.at(lp.bases[k]);

        curStruct_ = saved;
        env_ = pre;
        std::vector<InstrId> exitPhis;
        for (size_t k = 0; k < lp.bases.size(); ++k) {
            SsaInstr phi;
            phi.op = SsaOp::Phi;
            phi.phiKind = PhiKind::LoopExit;
            phi.site = out_.structs[static_cast<size_t>(sid)].loopId;
            phi.args = {lp.preVersions[k]};
            for (const auto& snap : bc.snapshots) phi.args.push_back(snap.at(lp.bases[k]));
            phi.args.push_back(bodyEnd.at(lp.bases[k]));
            phi.def = fresh(lp.bases[k]);
            phi.span = s.span;
            exitPhis.push_back(emit(phi, block));
            env_[lp.bases[k]] = phi.def;
        }

        Structure& stRef = out_.structs[static_cast<size_t>(sid)];
        stRef.header = std::move(header);
        stRef.body = std::move(body);
        stRef.whileCond = cond;
        stRef.entryPhis = lp.entries;
        stRef.exitPhis = std::move(exitPhis);
        stRef.numBreaks = static_cast<int>(bc.snapshots.size());
        breakGuards_[stRef.loopId] = bc.guardConds;
    }

    void pruneDeadPhis() {
        auto used = [&](const VName& v) {
            if (out_.returnName == v) return true;
            for (const auto& in : out_.instrs) {
                if (in.removedFlag) continue;
                for (const auto& a : in.args)
                    if (a == v) return true;
            }
            return false;
        };
        bool changed = true;
        while (changed) {
            changed = false;
            for (auto& in : out_.instrs) {
                if (in.removedFlag || in.op != SsaOp::Phi) continue;
                if (!used(in.def)) {
                    in.removedFlag = true;
                    changed = true;
                }
            }
        }
        // compact: rebuild instruction list without removed phis
        std::vector<SsaInstr> keep;
        std::map<InstrId, InstrId> remap;
        for (auto& in : out_.instrs) {
            if (in.removedFlag) continue;
            InstrId nid = static_cast<InstrId>(keep.size());
            remap[in.id] = nid;
            in.id = nid;
            keep.push_back(std::move(in));
        }
        out_.instrs = std::move(keep);
        auto remapId = [&](InstrId id) -> InstrId {
            auto it = remap.find(id);
            return it == remap.end() ? kNoInstr : it->second;
        };
        auto remapBlock = [&](Block& b) {
            std::vector<Item> items;
            for (auto& it : b.items) {
                if (it.isInstr) {
                    InstrId nid = remapId(it.id);
                    if (nid != kNoInstr) items.push_back({true, nid});
                } else {
                    items.push_back(it);
                }
            }
            b.items = std::move(items);
        };
        remapBlock(out_.top);
        for (auto& st : out_.structs) {
            remapBlock(st.thenB);
            remapBlock(st.elseB);
            remapBlock(st.body);
            remapBlock(st.header);
            auto remapList = [&](std::vector<InstrId>& xs) {
                std::vector<InstrId> ys;
                for (InstrId x : xs) {
                    InstrId nid = remapId(x);
                    if (nid != kNoInstr) ys.push_back(nid);
                }
                xs = std::move(ys);
            };
            remapList(st.entryPhis);
            remapList(st.exitPhis);
            remapList(st.mergePhis);
            if (st.cond != kNoInstr) st.cond = remapId(st.cond);
            if (st.whileCond != kNoInstr) st.whileCond = remapId(st.whileCond);
            if (st.lo != kNoInstr) st.lo = remapId(st.lo);
            if (st.hi != kNoInstr) st.hi = remapId(st.hi);
            if (st.increment != kNoInstr) st.increment = remapId(st.increment);
        }
        std::map<VName, InstrId> defOf;
        for (const auto& [v, id] : out_.defOf) {
            if (id == kNoInstr) {
                defOf[v] = kNoInstr;
            } else {
                InstrId nid = remapId(id);
                if (nid != kNoInstr) defOf[v] = nid;
            }
        }
        out_.defOf = std::move(defOf);
        std::map<InstrId, int> enc;
        for (const auto& [id, sid] : out_.enclosing) {
            InstrId nid = remapId(id);
            if (nid != kNoInstr) enc[nid] = sid;
        }
        out_.enclosing = std::move(enc);
        for (auto& [loop, guards] : breakGuards_)
            for (auto& g : guards)
                if (g != kNoInstr) g = remapId(g);
    }

    // An instruction is plumbing when its value only ever feeds array
    // indices, comparisons, or other plumbing (loop counters, bounds).
    void markPlumbing() {
        std::map<VName, std::vector<std::pair<InstrId, size_t>>> uses;
        for (const auto& in : out_.instrs)
            for (size_t k = 0; k < in.args.size(); ++k)
                uses[in.args[k]].push_back({in.id, k});

        std::deque<InstrId> work;
        std::vector<bool> data(out_.instrs.size(), false);
        auto seed = [&](const VName& v) {
            auto it = out_.defOf.find(v);
            if (it != out_.defOf.end() && it->second != kNoInstr &&
                !data[static_cast<size_t>(it->second)]) {
                data[static_cast<size_t>(it->second)] = true;
                work.push_back(it->second);
            }
        };
        seed(out_.returnName);
        while (!work.empty()) {
            InstrId id = work.front();
            work.pop_front();
            const SsaInstr& in = out_.instrs[static_cast<size_t>(id)];
            if (in.op == SsaOp::Cmp) continue; // comparisons gate control only
            for (size_t k = 0; k < in.args.size(); ++k) {
                if (in.op == SsaOp::Index && k == 0) continue; // index position
                seed(in.args[k]);
            }
        }
        for (auto& in : out_.instrs) in.plumbing = !data[static_cast<size_t>(in.id)];
    }

    const FunctionDef& fn_;
    SsaFunction out_;
    Env env_;
    std::set<std::string> arrays_;
    std::map<std::string, int> verCounter_;
    int tempCounter_ = 0;
    int curStruct_ = -1;
    BreakCtx* breaks_ = nullptr;

  public:
    std::map<int, std::vector<InstrId>> breakGuards_; // loopId -> guard cmp per break
    std::map<int, VName> loVals_, hiVals_;
};

} // namespace

SsaFunction buildSsa(const Program& p, const std::string& fnName) {
    const FunctionDef* fn = p.find(fnName);
    if (!fn) throw Error("no function named '" + fnName + "'");
    Builder b(p, *fn);
    SsaFunction s = b.run();
    // stash break guards and loop bounds on the structures
    for (auto& st : s.structs) {
        if (st.kind == StructKind::While) {
            auto it = b.breakGuards_.find(st.loopId);
            if (it != b.breakGuards_.end()) st.breakGuards = it->second;
        }
        if (st.kind == StructKind::For) {
            st.loName = b.loVals_.at(st.loopId);
            st.hiName = b.hiVals_.at(st.loopId);
        }
    }
    return s;
}

std::vector<InstrId> defUseChain(const SsaFunction& s, const VName& v) {
    auto it = s.defOf.find(v);
    if (it == s.defOf.end()) throw Error("unknown name '" + v.str() + "'");

    std::set<InstrId> chain;
    std::deque<InstrId> work;
    auto add = [&](InstrId id) {
        if (id != kNoInstr && !chain.count(id)) {
            chain.insert(id);
            work.push_back(id);
        }
    };
    auto addName = [&](const VName& n) {
        auto d = s.defOf.find(n);
        if (d != s.defOf.end()) add(d->second);
    };
    if (it->second != kNoInstr) add(it->second);

    while (!work.empty()) {
        InstrId id = work.front();
        work.pop_front();
        const SsaInstr& in = s.instr(id);
        for (const auto& a : in.args) addName(a);

        // control dependences: conditions of enclosing structures, and for a
        // phi, the condition that decides it
        int sid = s.structOf(id);
        if (in.op == SsaOp::Phi) {
            if (in.phiKind == PhiKind::Normal) {
                for (const auto& st : s.structs)
                    if (st.kind == StructKind::If && st.site == in.site) add(st.cond);
            } else {
                const Structure* loop = s.loopById(in.site);
                if (loop) sid = loop->id; // pull in the loop's own conditions
            }
        }
        while (sid != -1) {
            const Structure& st = s.structs[static_cast<size_t>(sid)];
            switch (st.kind) {
            case StructKind::If:
                add(st.cond);
                break;
            case StructKind::For:
                if (st.lo != kNoInstr) add(st.lo);
                if (st.hi != kNoInstr) add(st.hi);
                addName(st.loName);
                addName(st.hiName);
                break;
            case StructKind::While:
                add(st.whileCond);
                for (InstrId g : st.breakGuards) add(g);
                break;
            }
            sid = st.parent;
        }
    }

    std::vector<InstrId> out(chain.begin(), chain.end());
    std::sort(out.begin(), out.end());
    return out;
}

DefUseRegionTree buildRegionTree(const SsaFunction& s, const std::vector<InstrId>& chain) {
    DefUseRegionTree tree;
    std::set<InstrId> inChain(chain.begin(), chain.end());

    RegionNode root;
    root.id = 0;
    tree.nodes.push_back(root);
    tree.root = 0;

    // region node per loop structure (created lazily in walk order)
    std::map<int, int> loopNode; // struct id -> node id

    std::function<int(int)> nodeFor = [&](int structId) -> int {
        if (structId == -1) return tree.root;
        const Structure& st = s.structs[static_cast<size_t>(structId)];
        if (st.kind == StructKind::If) return nodeFor(st.parent);
        auto it = loopNode.find(structId);
        if (it != loopNode.end()) return it->second;
        int parent = nodeFor(st.parent);
        RegionNode n;
        n.id = static_cast<int>(tree.nodes.size());
        n.parent = parent;
        n.isLoop = true;
        n.loopId = st.loopId;
        tree.nodes.push_back(n);
        tree.nodes[static_cast<size_t>(parent)].children.push_back(n.id);
        tree.nodes[static_cast<size_t>(parent)].seq.push_back({true, n.id});
        loopNode[structId] = n.id;
        return n.id;
    };

    std::function<void(const Block&, int)> walk = [&](const Block& b, int structId) {
        for (const auto& item : b.items) {
            if (item.isInstr) {
                if (!inChain.count(item.id)) continue;
                const SsaInstr& in = s.instr(item.id);
                int target;
                if (in.op == SsaOp::Phi && in.phiKind == PhiKind::LoopExit) {
                    // exit phis belong to the region of their loop
                    const Structure* loop = s.loopById(in.site);
                    target = nodeFor(loop ? loop->id : structId);
                } else {
                    target = nodeFor(structId);
                }
                tree.nodes[static_cast<size_t>(target)].instrs.push_back(item.id);
                tree.nodes[static_cast<size_t>(target)].seq.push_back({false, item.id});
            } else {
                const Structure& st = s.structs[static_cast<size_t>(item.id)];
                switch (st.kind) {
                case StructKind::If:
                    walk(st.thenB, st.id);
                    walk(st.elseB, st.id);
                    break;
                case StructKind::For:
                    walk(st.body, st.id);
                    break;
                case StructKind::While:
                    walk(st.header, st.id);
                    walk(st.body, st.id);
                    break;
                }
            }
        }
    };
    walk(s.top, -1);

    // drop empty loop nodes (loops with no chain instructions)
    // (kept simple: nodes created lazily, so only reachable ones exist)
    return tree;
}

namespace {

const char* ssaOpName(SsaOp op) {
    switch (op) {
    case SsaOp::Const: return "const";
    case SsaOp::Copy: return "copy";
    case SsaOp::Neg: return "neg";
    case SsaOp::Add: return "add";
    case SsaOp::Sub: return "sub";
    case SsaOp::Mul: return "mul";
    case SsaOp::Div: return "div";
    case SsaOp::Index: return "index";
    case SsaOp::Call: return "call";
    case SsaOp::Cmp: return "cmp";
    case SsaOp::Phi: return "phi";
    case SsaOp::Break: return "break";
    }
    return "?";
}

void printInstr(std::ostream& os, const SsaFunction& s, InstrId id, int indent) {
    const SsaInstr& in = s.instr(id);
    os << std::string(static_cast<size_t>(indent) * 2, ' ') << "L" << id << ": " << in.def.str()
       << " = ";
    if (in.op == SsaOp::Phi) {
        const char* kind = in.phiKind == PhiKind::Normal      ? "phi"
                           : in.phiKind == PhiKind::LoopEntry ? "phi_entry"
                                                              : "phi_exit";
        os << kind << "[" << in.site << "](";
        for (size_t k = 0; k < in.args.size(); ++k) {
            if (k) os << ", ";
            os << in.args[k].str();
        }
        os << ")";
    } else if (in.op == SsaOp::Const) {
        os << ratPrettyStr(in.cval);
    } else if (in.op == SsaOp::Index) {
        os << in.array << "[" << in.args[0].str() << "]";
    } else if (in.op == SsaOp::Call) {
        os << intrinsicName(in.intrinsic) << "(";
        for (size_t k = 0; k < in.args.size(); ++k) {
            if (k) os << ", ";
            os << in.args[k].str();
        }
        os << ")";
    } else if (in.op == SsaOp::Cmp) {
        os << in.args[0].str() << " " << cmpOpName(in.cmp) << " " << in.args[1].str();
    } else {
        os << ssaOpName(in.op);
        for (const auto& a : in.args) os << " " << a.str();
    }
    if (in.plumbing) os << "  ; idx";
    os << "\n";
}

void printBlock(std::ostream& os, const SsaFunction& s, const Block& b, int indent);

void printStruct(std::ostream& os, const SsaFunction& s, const Structure& st, int indent) {
    std::string pad(static_cast<size_t>(indent) * 2, ' ');
    switch (st.kind) {
    case StructKind::If:
        os << pad << "if (L" << st.cond << ") {\n";
        printBlock(os, s, st.thenB, indent + 1);
        os << pad << "} else {\n";
        printBlock(os, s, st.elseB, indent + 1);
        os << pad << "}\n";
        break;
    case StructKind::For:
        os << pad << "for#" << st.loopId << " " << st.indexName.str() << " in "
           << st.loName.str() << ".." << st.hiName.str() << " {\n";
        printBlock(os, s, st.body, indent + 1);
        os << pad << "}\n";
        break;
    case StructKind::While:
        os << pad << "while#" << st.loopId << " {\n";
        os << pad << "  header:\n";
        printBlock(os, s, st.header, indent + 2);
        os << pad << "  body:\n";
        printBlock(os, s, st.body, indent + 2);
        os << pad << "}\n";
        break;
    }
}

void printBlock(std::ostream& os, const SsaFunction& s, const Block& b, int indent) {
    for (const auto& item : b.items) {
        if (item.isInstr)
            printInstr(os, s, item.id, indent);
        else
            printStruct(os, s, s.structs[static_cast<size_t>(item.id)], indent);
    }
}

} // namespace

std::string ssaToText(const SsaFunction& s) {
    std::ostringstream os;
    os << "fn " << s.name << "(";
    for (size_t i = 0; i < s.params.size(); ++i) {
        if (i) os << ", ";
        if (s.params[i].isActive) os << "active ";
        os << s.params[i].name;
        if (s.params[i].isArray) os << "[]";
    }
    os << ")\n";
    printBlock(os, s, s.top, 1);
    os << "  return " << s.returnName.str() << "\n";
    return os.str();
}

std::string ssaToJson(const SsaFunction& s, const DefUseRegionTree* tree) {
    using nlohmann::json;
    json j;
    j["function"] = s.name;
    json instrs = json::array();
    for (const auto& in : s.instrs) {
        json ji;
        ji["id"] = in.id;
        ji["def"] = in.def.str();
        ji["op"] = ssaOpName(in.op);
        if (in.op == SsaOp::Phi) {
            ji["phi"] = in.phiKind == PhiKind::Normal      ? "normal"
                        : in.phiKind == PhiKind::LoopEntry ? "loop-entry"
                                                           : "loop-exit";
            ji["site"] = in.site;
        }
        if (in.op == SsaOp::Const) ji["value"] = ratStr(in.cval);
        if (in.op == SsaOp::Index) ji["array"] = in.array;
        if (in.op == SsaOp::Call) ji["intrinsic"] = intrinsicName(in.intrinsic);
        if (in.op == SsaOp::Cmp) ji["cmp"] = cmpOpName(in.cmp);
        json args = json::array();
        for (const auto& a : in.args) args.push_back(a.str());
        ji["args"] = std::move(args);
        ji["plumbing"] = in.plumbing;
        instrs.push_back(std::move(ji));
    }
    j["instructions"] = std::move(instrs);
    json structsJ = json::array();
    for (const auto& st : s.structs) {
        json js;
        js["id"] = st.id;
        js["kind"] = st.kind == StructKind::If ? "if" : st.kind == StructKind::For ? "for" : "while";
        js["parent"] = st.parent;
        if (st.kind != StructKind::If) {
            js["loop"] = st.loopId;
            js["entryPhis"] = st.entryPhis;
            js["exitPhis"] = st.exitPhis;
        }
        structsJ.push_back(std::move(js));
    }
    j["structures"] = std::move(structsJ);
    j["return"] = s.returnName.str();
    if (tree) {
        json nodes = json::array();
        for (const auto& n : tree->nodes) {
            json jn;
            jn["id"] = n.id;
            jn["parent"] = n.parent;
            jn["loop"] = n.isLoop ? json(n.loopId) : json(nullptr);
            jn["instrs"] = n.instrs;
            jn["children"] = n.children;
            nodes.push_back(std::move(jn));
        }
        j["regionTree"] = std::move(nodes);
    }
    return j.dump(2);
}

} // namespace phigrad
