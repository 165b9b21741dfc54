#include "phigrad/phicalc.hpp"

#include <algorithm>
#include <random>

namespace phigrad {

const char* ruleName(RuleId id) {
    switch (id) {
    case RuleId::F1: return "F1";
    case RuleId::F2: return "F2";
    case RuleId::F3: return "F3";
    case RuleId::F4: return "F4";
    case RuleId::F5: return "F5";
    case RuleId::C1: return "C1";
    case RuleId::C2: return "C2";
    case RuleId::C3: return "C3";
    case RuleId::C4: return "C4";
    case RuleId::C5: return "C5";
    case RuleId::C6: return "C6";
    case RuleId::C7: return "C7";
    case RuleId::C8: return "C8";
    case RuleId::C9: return "C9";
    }
    return "?";
}

SymbolFacts elevationFacts(const Elevation& elev) {
    SymbolFacts f;
    for (const auto& [name, loop] : elev.traceSymbols) {
        (void)loop;
        f.nonnegInt.insert(name);
    }
    for (const auto& [loop, trip] : elev.tripExprs) {
        (void)trip;
        f.nonnegInt.insert("@it" + std::to_string(loop));
    }
    return f;
}

namespace {

ExprPtr rebuildNode(const ExprPtr& e, std::vector<ExprPtr> kids) {
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

ExprPtr replaceNode(const ExprPtr& root, const ExprPtr& target, const ExprPtr& repl) {
    if (equalExpr(root, target)) return repl;
    if (root->kids.empty()) return root;
    std::vector<ExprPtr> kids;
    bool changed = false;
    for (const auto& k : root->kids) {
        kids.push_back(replaceNode(k, target, repl));
        changed = changed || kids.back().get() != k.get();
    }
    if (!changed) return root;
    return rebuildNode(root, std::move(kids));
}

// distinct loop-entry phi nodes of a given loop inside an expression; does
// not descend into nested LoopBody of the same loop (cannot occur anyway)
std::vector<ExprPtr> entryPhisOf(const ExprPtr& e, int loopId) {
    std::vector<ExprPtr> out;
    forEachNode(e, [&](const ExprPtr& n) {
        if (n->kind == SxKind::Phi && n->phiKind == PhiKind::LoopEntry && n->site == loopId) {
            for (const auto& p : out)
                if (equalExpr(p, n)) return;
            out.push_back(n);
        }
    });
    return out;
}

bool dependsOnSym(const ExprPtr& e, const std::string& name) {
    return freeSymbols(e).scalars.count(name) > 0;
}

// step = A*phi + B with A, B phi-free; nullopt when nonlinear
struct LinearForm {
    ExprPtr a, b;
};

std::optional<LinearForm> decomposeLinear(const ExprPtr& step, const ExprPtr& phiNode) {
    static const std::string kMarker = "@self";
    ExprPtr marked = replaceNode(step, phiNode, sx::sym(kMarker));
    std::vector<ExprPtr> terms =
        marked->kind == SxKind::Add ? marked->kids : std::vector<ExprPtr>{marked};
    std::vector<ExprPtr> aParts, bParts;
    for (const auto& t : terms) {
        if (!dependsOnSym(t, kMarker)) {
            bParts.push_back(t);
            continue;
        }
        if (t->kind == SxKind::Sym && t->name == kMarker) {
            aParts.push_back(sx::one());
            continue;
        }
        if (t->kind == SxKind::Mul) {
            std::vector<ExprPtr> rest;
            int hits = 0;
            for (const auto& f : t->kids) {
                if (f->kind == SxKind::Sym && f->name == kMarker) {
                    ++hits;
                    continue;
                }
                if (dependsOnSym(f, kMarker)) return std::nullopt; // nested
                rest.push_back(f);
            }
            if (hits != 1) return std::nullopt;
            aParts.push_back(sx::mul(std::move(rest)));
            continue;
        }
        return std::nullopt; // phi under a nonlinear context
    }
    LinearForm lf;
    lf.a = aParts.empty() ? sx::zero() : sx::add(std::move(aParts));
    lf.b = bParts.empty() ? sx::zero() : sx::add(std::move(bParts));
    return lf;
}

struct Closer {
    const RuleContext& ctx;
    std::vector<FiredRule>* fired;
    // rules allowed for this invocation; empty = all
    std::vector<RuleId> allowed;

    bool allows(RuleId id) const {
        return allowed.empty() || std::find(allowed.begin(), allowed.end(), id) != allowed.end();
    }

    void note(RuleId id, int before, int after) {
        if (fired) fired->push_back({id, before, after});
    }

    std::string iterSymName(int loopId) const { return "@it" + std::to_string(loopId); }

    // replace in-loop normal phis with conditional selects; their decisions
    // vary per iteration so the recorded-decision shortcut does not apply
    ExprPtr materializeNormalPhis(const ExprPtr& e) {
        if (!ctx.elev) return e;
        if (e->kind == SxKind::Phi && e->phiKind == PhiKind::Normal && e->kids.size() == 2) {
            auto it = ctx.elev->conditions.find(e->site);
            if (it != ctx.elev->conditions.end()) {
                ExprPtr cond = materializeNormalPhis(it->second);
                return sx::select(cond, materializeNormalPhis(e->kids[0]),
                                  materializeNormalPhis(e->kids[1]));
            }
        }
        if (e->kids.empty()) return e;
        std::vector<ExprPtr> kids;
        bool changed = false;
        for (const auto& k : e->kids) {
            kids.push_back(materializeNormalPhis(k));
            changed = changed || kids.back().get() != k.get();
        }
        return changed ? rebuildNode(e, std::move(kids)) : e;
    }

    std::optional<ExprPtr> close(int loopId, const ExprPtr& count, const ExprPtr& body) {
        ExprPtr step = simplify(materializeNormalPhis(body), ctx.facts);
        auto phis = entryPhisOf(step, loopId);
        const std::string iter = iterSymName(loopId);
        if (phis.empty()) {
            // no carried value: the exit value is the last iteration's value
            std::map<std::string, ExprPtr> m{{iter, sx::sub(count, sx::one())}};
            return substitute(step, m);
        }
        if (phis.size() > 1) return std::nullopt; // mutual recurrence
        const ExprPtr& phi = phis[0];
        ExprPtr init = phi->kids[0];
        int before = 0;
        auto lf = decomposeLinear(step, phi);
        if (!lf) lf = decomposeLinear(simplify(expandProducts(step), ctx.facts), phi);
        if (lf) {
            bool aIdx = dependsOnSym(lf->a, iter);
            bool bIdx = dependsOnSym(lf->b, iter);
            bool aOne = isConst(lf->a, Rational(1));
            bool aZero = isConst(lf->a, Rational(0));
            // C6: d <- d + c
            if (allows(RuleId::C6) && aOne && !bIdx) {
                ExprPtr r = sx::add(init, sx::mul(count, lf->b));
                note(RuleId::C6, before, r->nodes);
                return r;
            }
            // C8: d <- a*d
            if (allows(RuleId::C8) && !aZero && !aIdx && isConst(lf->b, Rational(0))) {
                ExprPtr r = sx::mul(sx::pow(lf->a, count), init);
                note(RuleId::C8, before, r->nodes);
                return r;
            }
            // C7: d <- a*d + b
            if (allows(RuleId::C7) && !aZero && !aIdx && !bIdx) {
                ExprPtr an = sx::pow(lf->a, count);
                ExprPtr general = sx::add(
                    sx::mul(an, init),
                    sx::mul({lf->b, sx::sub(an, sx::one()),
                             sx::pow(sx::sub(lf->a, sx::one()), sx::ci(-1))}));
                ExprPtr r;
                if (lf->a->kind == SxKind::Const) {
                    r = lf->a->value == 1 ? sx::add(init, sx::mul(count, lf->b)) : general;
                } else {
                    r = sx::select(sx::cmp(CmpOp::Eq, lf->a, sx::one()),
                                   sx::add(init, sx::mul(count, lf->b)), general);
                }
                note(RuleId::C7, before, r->nodes);
                return r;
            }
            // C9: d <- d + g(i)
            if (allows(RuleId::C9) && aOne && bIdx) {
                ExprPtr r = sx::add(init, sumOverIterations(loopId, count, lf->b));
                note(RuleId::C9, before, r->nodes);
                return r;
            }
            // a depends on the index (e.g. d <- g(i)*d): no corollary
        }
        // C5: index-free step, arbitrary shape in the carried value
        if (allows(RuleId::C5) && !dependsOnSym(step, iter)) {
            std::string hole = "@x" + std::to_string(loopId);
            ExprPtr tmpl = replaceNode(step, phi, sx::sym(hole));
            ExprPtr r = sx::iterApply(hole, tmpl, count, init);
            note(RuleId::C5, before, r->nodes);
            return r;
        }
        return std::nullopt;
    }

    ExprPtr sumOverIterations(int loopId, const ExprPtr& count, const ExprPtr& g) {
        const std::string iter = iterSymName(loopId);
        if (ctx.elev) {
            auto it = ctx.elev->loopMeta.find(loopId);
            if (it != ctx.elev->loopMeta.end() && !it->second.isWhile && it->second.lo) {
                // present the sum over the source index rather than the
                // raw iteration counter
                const std::string& idx = it->second.indexBase;
                std::map<std::string, ExprPtr> m{
                    {iter, sx::sub(sx::sym(idx), it->second.lo)}};
                ExprPtr body = substitute(g, m);
                return sx::sum(idx, it->second.lo, sx::sub(it->second.hi, sx::one()), body);
            }
        }
        std::string idx = "q" + std::to_string(loopId);
        std::map<std::string, ExprPtr> m{{iter, sx::sym(idx)}};
        return sx::sum(idx, sx::zero(), sx::sub(count, sx::one()), substitute(g, m));
    }
};

// random rational probing: a semi-decision for symbolic equality
bool probeEqual(const ExprPtr& a, const ExprPtr& b, const SymbolFacts& facts,
                unsigned seed) {
    FreeSymbols fa = freeSymbols(a);
    FreeSymbols fb = freeSymbols(b);
    std::set<std::string> syms = fa.scalars;
    syms.insert(fb.scalars.begin(), fb.scalars.end());
    std::set<std::string> arrays = fa.arrays;
    arrays.insert(fb.arrays.begin(), fb.arrays.end());
    std::mt19937 rng(seed);
    for (int trial = 0; trial < 8; ++trial) {
        RatEnv env;
        for (const auto& s : syms) {
            if (facts.nonnegInt.count(s) || facts.posInt.count(s)) {
                long lo = facts.posInt.count(s) ? 1 : 0;
                env.scalars[s] = Rational(lo + static_cast<long>(rng() % 8));
            } else {
                long num = static_cast<long>(rng() % 25) - 12;
                long den = 1 + static_cast<long>(rng() % 6);
                env.scalars[s] = Rational(num, den);
            }
        }
        for (const auto& arr : arrays) {
            std::vector<Rational> v;
            for (int i = 0; i < 8; ++i)
                v.push_back(Rational(static_cast<long>(rng() % 19) - 9,
                                     1 + static_cast<long>(rng() % 4)));
            env.arrays[arr] = v;
        }
        try {
            if (evalRational(a, env) != evalRational(b, env)) return false;
        } catch (const Error&) {
            return false; // cannot decide; stay conservative
        }
    }
    return true;
}

bool symbolicallyEqual(const ExprPtr& a, const ExprPtr& b, const SymbolFacts& facts) {
    if (equalExpr(a, b)) return true;
    ExprPtr sa = simplify(a, facts);
    ExprPtr sb = simplify(b, facts);
    if (equalExpr(sa, sb)) return true;
    // canonical-form equality failed; fall back to random rational probing
    return probeEqual(sa, sb, facts, 0x9e11u);
}

} // namespace

std::optional<ExprPtr> closeRecurrence(int loopId, const std::string& carried,
                                       const ExprPtr& step, const ExprPtr& init,
                                       const ExprPtr& count, const RuleContext& ctx,
                                       std::vector<FiredRule>* fired) {
    (void)carried;
    (void)init;
    Closer closer{ctx, fired, {}};
    return closer.close(loopId, count, step);
}

std::optional<ExprPtr> applyRule(RuleId id, const ExprPtr& e, const RuleContext& ctx) {
    switch (id) {
    case RuleId::F1: {
        if (e->kind != SxKind::Phi || e->kids.empty()) return std::nullopt;
        for (size_t i = 1; i < e->kids.size(); ++i)
            if (!equalExpr(e->kids[0], e->kids[i])) return std::nullopt;
        return e->kids[0];
    }
    case RuleId::F2:
    case RuleId::C1: {
        // distribute the surrounding function into the phi's arguments
        auto distribute = [&](const ExprPtr& host, size_t phiAt) -> ExprPtr {
            const ExprPtr& ph = host->kids[phiAt];
            std::vector<ExprPtr> args;
            for (const auto& a : ph->kids) {
                std::vector<ExprPtr> kids = host->kids;
                kids[phiAt] = a;
                args.push_back(rebuildNode(host, std::move(kids)));
            }
            return sx::phi(ph->phiKind, ph->site, std::move(args));
        };
        if (e->kind == SxKind::Call || e->kind == SxKind::Mul || e->kind == SxKind::Add ||
            e->kind == SxKind::Pow) {
            int phiAt = -1;
            for (size_t i = 0; i < e->kids.size(); ++i) {
                if (e->kids[i]->kind == SxKind::Phi &&
                    e->kids[i]->phiKind == PhiKind::Normal) {
                    if (phiAt >= 0) return std::nullopt; // one phi at a time
                    phiAt = static_cast<int>(i);
                }
            }
            if (phiAt < 0) return std::nullopt;
            if (e->kind == SxKind::Pow && phiAt == 1) return std::nullopt;
            return distribute(e, static_cast<size_t>(phiAt));
        }
        return std::nullopt;
    }
    case RuleId::F3: {
        if (e->kind != SxKind::Phi || e->phiKind != PhiKind::Normal || e->kids.size() != 2)
            return std::nullopt;
        return sx::phi(PhiKind::Normal, -(e->site + 2), {e->kids[1], e->kids[0]});
    }
    case RuleId::F4: {
        // phi^(j): the first instance takes the initial value, any later
        // instance arrives through the back edge
        if (e->kind != SxKind::IterInstance || e->name.rfind("phi:", 0) != 0)
            return std::nullopt;
        if (!ctx.elev) return std::nullopt;
        const std::string carried = e->name.substr(4);
        auto loopIt = ctx.elev->loopSteps.find(e->site);
        auto initsIt = ctx.elev->loopInits.find(e->site);
        if (loopIt == ctx.elev->loopSteps.end() || initsIt == ctx.elev->loopInits.end())
            return std::nullopt;
        auto stepIt = loopIt->second.find(carried);
        auto initIt = initsIt->second.find(carried);
        if (stepIt == loopIt->second.end() || initIt == initsIt->second.end())
            return std::nullopt;
        const ExprPtr& step = stepIt->second;
        const ExprPtr& init = initIt->second;
        const ExprPtr& j = e->kids[0];
        if (isConst(j, Rational(1))) return init;
        if (j->kind == SxKind::Const && j->value > 1) {
            auto phis = entryPhisOf(step, e->site);
            if (phis.size() > 1) return std::nullopt;
            if (phis.empty()) {
                // the value does not feed itself; instance j is the step at
                // iteration j-2 (0-based counter)
                std::map<std::string, ExprPtr> m{
                    {"@it" + std::to_string(e->site), sx::sub(j, sx::ci(2))}};
                return substitute(step, m);
            }
            ExprPtr prev = sx::iterInstance(e->site, e->name, sx::sub(j, sx::one()));
            return replaceNode(step, phis[0], prev);
        }
        return std::nullopt;
    }
    case RuleId::F5: {
        if (e->kind != SxKind::Phi || e->phiKind != PhiKind::LoopExit || e->kids.size() < 2)
            return std::nullopt;
        for (size_t i = 1; i < e->kids.size(); ++i)
            if (containsKind(e->kids[i], SxKind::LoopBody)) return std::nullopt;
        SymbolFacts duringLoop = ctx.facts;
        if (ctx.elev)
            for (const auto& [k, loop] : ctx.elev->traceSymbols)
                if (loop == e->site) duringLoop.posInt.insert(k);
        for (size_t i = 2; i < e->kids.size(); ++i)
            if (!symbolicallyEqual(e->kids[1], e->kids[i], duringLoop)) return std::nullopt;
        // side condition (ii): at trip count zero the in-loop value equals
        // the first argument
        if (ctx.elev) {
            auto tripIt = ctx.elev->tripExprs.find(e->site);
            if (tripIt == ctx.elev->tripExprs.end()) return std::nullopt;
            ExprPtr atZero = replaceNode(e->kids[1], tripIt->second, sx::zero());
            if (!symbolicallyEqual(atZero, e->kids[0], ctx.facts)) return std::nullopt;
        }
        return e->kids[1];
    }
    case RuleId::C2: {
        if (e->kind != SxKind::Phi || ctx.wrt.empty()) return std::nullopt;
        std::vector<ExprPtr> args;
        for (const auto& k : e->kids) args.push_back(differentiate(k, ctx.wrt));
        return sx::phi(e->phiKind, e->site, std::move(args));
    }
    case RuleId::C3: {
        if (e->kind != SxKind::Add && e->kind != SxKind::Mul) return std::nullopt;
        int first = -1, second = -1;
        for (size_t i = 0; i < e->kids.size(); ++i) {
            const auto& k = e->kids[i];
            if (k->kind == SxKind::Phi && k->phiKind == PhiKind::Normal) {
                if (first < 0)
                    first = static_cast<int>(i);
                else if (second < 0 && k->site == e->kids[static_cast<size_t>(first)]->site)
                    second = static_cast<int>(i);
            }
        }
        if (first < 0 || second < 0) return std::nullopt;
        const ExprPtr& p = e->kids[static_cast<size_t>(first)];
        const ExprPtr& q = e->kids[static_cast<size_t>(second)];
        if (p->kids.size() != q->kids.size()) return std::nullopt;
        std::vector<ExprPtr> args;
        for (size_t a = 0; a < p->kids.size(); ++a)
            args.push_back(e->kind == SxKind::Add ? sx::add(p->kids[a], q->kids[a])
                                                  : sx::mul(p->kids[a], q->kids[a]));
        ExprPtr mergedPhi = sx::phi(PhiKind::Normal, p->site, std::move(args));
        std::vector<ExprPtr> kids;
        for (size_t i = 0; i < e->kids.size(); ++i)
            if (static_cast<int>(i) != first && static_cast<int>(i) != second)
                kids.push_back(e->kids[i]);
        kids.push_back(mergedPhi);
        return e->kind == SxKind::Add ? sx::add(std::move(kids)) : sx::mul(std::move(kids));
    }
    case RuleId::C4: {
        auto distributed = applyRule(RuleId::F2, e, ctx);
        if (!distributed) return std::nullopt;
        auto collapsed = applyRule(RuleId::F1, *distributed, ctx);
        if (!collapsed) return std::nullopt;
        return collapsed;
    }
    case RuleId::C5:
    case RuleId::C6:
    case RuleId::C7:
    case RuleId::C8:
    case RuleId::C9: {
        if (e->kind != SxKind::LoopBody) return std::nullopt;
        Closer closer{ctx, nullptr, {id}};
        return closer.close(e->site, e->kids[0], e->kids[1]);
    }
    }
    return std::nullopt;
}

ClosedForm toClosedForm(const Elevation& elev, int budget) {
    RuleContext ctx;
    ctx.elev = &elev;
    ctx.facts = elevationFacts(elev);

    ClosedForm out;
    ExprPtr expr = simplify(elev.exprWithShares(), ctx.facts);
    const long maxSteps = 10L * std::max(expr->nodes, 16);
    long steps = 0;
    std::set<size_t> failedLoops;

    auto findInnermostLoop = [&](const ExprPtr& root) -> ExprPtr {
        ExprPtr found;
        std::function<void(const ExprPtr&)> walk = [&](const ExprPtr& n) {
            if (found) return;
            for (const auto& k : n->kids) walk(k);
            if (found) return;
            if (n->kind == SxKind::LoopBody && !failedLoops.count(n->hashv)) {
                bool inner = true;
                for (const auto& k : n->kids)
                    if (containsKind(k, SxKind::LoopBody)) inner = false;
                if (inner) found = n;
            }
        };
        walk(root);
        return found;
    };

    Closer closer{ctx, &out.fired, {}};
    while (steps++ < maxSteps) {
        if (expr->nodes > budget)
            throw BudgetExceededError("closed form exceeds the node budget (" +
                                      std::to_string(expr->nodes) + " > " +
                                      std::to_string(budget) + ")");
        // resolve exit phis as soon as their arguments are fully closed, so
        // enclosing recurrences see plain expressions
        ExprPtr exitPhi;
        forEachNode(expr, [&](const ExprPtr& n) {
            if (exitPhi) return;
            if (n->kind == SxKind::Phi && n->phiKind == PhiKind::LoopExit &&
                !failedLoops.count(n->hashv)) {
                bool argsClosed = true;
                for (const auto& k : n->kids)
                    if (containsKind(k, SxKind::LoopBody)) argsClosed = false;
                if (argsClosed) exitPhi = n;
            }
        });
        if (exitPhi) {
            auto r = applyRule(RuleId::F5, exitPhi, ctx);
            if (r) {
                out.fired.push_back({RuleId::F5, exitPhi->nodes, (*r)->nodes});
                expr = simplify(replaceNode(expr, exitPhi, *r), ctx.facts);
            } else {
                failedLoops.insert(exitPhi->hashv);
            }
            continue;
        }
        ExprPtr lb = findInnermostLoop(expr);
        if (lb) {
            auto closed = closer.close(lb->site, lb->kids[0], lb->kids[1]);
            if (closed) {
                expr = simplify(replaceNode(expr, lb, simplify(*closed, ctx.facts)), ctx.facts);
                continue;
            }
            failedLoops.insert(lb->hashv);
            continue;
        }
        break;
    }

    out.expr = expr;
    forEachNode(expr, [&](const ExprPtr& n) {
        bool residual = n->kind == SxKind::LoopBody || n->kind == SxKind::IterApply ||
                        (n->kind == SxKind::Phi && n->phiKind != PhiKind::Normal);
        if (residual) {
            for (const auto& r : out.residual)
                if (equalExpr(r, n)) return;
            out.residual.push_back(n);
        }
    });
    for (const auto& [k, loop] : elev.traceSymbols) {
        (void)loop;
        if (freeSymbols(expr).scalars.count(k)) out.traceDeps.insert(k);
    }
    return out;
}

} // namespace phigrad
