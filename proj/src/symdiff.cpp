#include "phigrad/symdiff.hpp"

#include <algorithm>
#include <cassert>
#include <map>

namespace phigrad {

// --- assumption checkers -----------------------------------------------------

bool isProvablyPositive(const ExprPtr& e, const SymbolFacts& facts) {
    switch (e->kind) {
    case SxKind::Const:
        return e->value > 0;
    case SxKind::Sym:
        return facts.positive.count(e->name) > 0 || facts.posInt.count(e->name) > 0;
    case SxKind::Call:
        return e->intrinsic == Intrinsic::Exp;
    case SxKind::Add: {
        bool onePos = false;
        for (const auto& k : e->kids) {
            if (isProvablyPositive(k, facts))
                onePos = true;
            else if (!isProvablyNonneg(k, facts))
                return false;
        }
        return onePos;
    }
    case SxKind::Mul:
        for (const auto& k : e->kids)
            if (!isProvablyPositive(k, facts)) return false;
        return true;
    case SxKind::Pow:
        if (isProvablyPositive(e->kids[0], facts)) return true;
        if (isProvablyNonzero(e->kids[0], facts) && e->kids[1]->kind == SxKind::Const &&
            isInteger(e->kids[1]->value) && numerator(e->kids[1]->value) % 2 == 0)
            return true;
        return false;
    default:
        return false;
    }
}

bool isProvablyNonneg(const ExprPtr& e, const SymbolFacts& facts) {
    if (isProvablyPositive(e, facts)) return true;
    switch (e->kind) {
    case SxKind::Const:
        return e->value >= 0;
    case SxKind::Sym:
        return facts.nonnegInt.count(e->name) > 0;
    case SxKind::Add:
    case SxKind::Mul:
        for (const auto& k : e->kids)
            if (!isProvablyNonneg(k, facts)) return false;
        return true;
    case SxKind::Pow:
        // x^2 >= 0 for even integer exponents
        return e->kids[1]->kind == SxKind::Const && isInteger(e->kids[1]->value) &&
               numerator(e->kids[1]->value) % 2 == 0 && numerator(e->kids[1]->value) > 0;
    case SxKind::Call:
        return e->intrinsic == Intrinsic::Abs || e->intrinsic == Intrinsic::Relu ||
               e->intrinsic == Intrinsic::Exp;
    default:
        return false;
    }
}

namespace {

bool isProvablyNegative(const ExprPtr& e, const SymbolFacts& facts) {
    if (e->kind == SxKind::Const) return e->value < 0;
    if (e->kind == SxKind::Mul && e->kids[0]->kind == SxKind::Const && e->kids[0]->value < 0) {
        for (size_t i = 1; i < e->kids.size(); ++i)
            if (!isProvablyPositive(e->kids[i], facts)) return false;
        return true;
    }
    return false;
}

// integer-valued with a known lower bound; nullopt when unknown
std::optional<long> intMinBound(const ExprPtr& e, const SymbolFacts& facts) {
    switch (e->kind) {
    case SxKind::Const:
        if (!isInteger(e->value)) return std::nullopt;
        if (numerator(e->value) < -100000 || numerator(e->value) > 100000) return std::nullopt;
        return static_cast<long>(numerator(e->value));
    case SxKind::Sym:
        if (facts.posInt.count(e->name)) return 1;
        if (facts.nonnegInt.count(e->name)) return 0;
        return std::nullopt;
    case SxKind::Add: {
        long sum = 0;
        for (const auto& k : e->kids) {
            auto b = intMinBound(k, facts);
            if (!b) return std::nullopt;
            sum += *b;
        }
        return sum;
    }
    case SxKind::Mul: {
        long prodv = 1;
        for (const auto& k : e->kids) {
            auto b = intMinBound(k, facts);
            if (!b || *b < 0) return std::nullopt;
            prodv *= *b;
        }
        return prodv;
    }
    default:
        return std::nullopt;
    }
}

} // namespace

bool isProvablyNonzero(const ExprPtr& e, const SymbolFacts& facts) {
    if (e->kind == SxKind::Const) return e->value != 0;
    return isProvablyPositive(e, facts) || isProvablyNegative(e, facts);
}

bool isProvablyNonnegInt(const ExprPtr& e, const SymbolFacts& facts) {
    auto b = intMinBound(e, facts);
    return b.has_value() && *b >= 0;
}

// --- simplify ------------------------------------------------------------------

namespace {

ExprPtr rebuild(const ExprPtr& e, std::vector<ExprPtr> kids) {
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

bool dependsOn(const ExprPtr& e, const std::string& name) {
    return freeSymbols(e).scalars.count(name) > 0;
}

// complement phi normalization (F3): complement sites are encoded as
// -(site + 2); rewriting restores the positive site with swapped arguments
constexpr int complementSite(int site) { return -(site + 2); }

ExprPtr normalizeComplement(const ExprPtr& e) {
    if (e->kind == SxKind::Phi && e->phiKind == PhiKind::Normal && e->site < -1 &&
        e->kids.size() == 2)
        return sx::phi(PhiKind::Normal, complementSite(e->site), {e->kids[1], e->kids[0]});
    return e;
}

// merge same-base powers under licensing rules
ExprPtr licensedMulMerge(const ExprPtr& e, const SymbolFacts& facts) {
    if (e->kind != SxKind::Mul) return e;
    std::map<ExprPtr, std::vector<ExprPtr>, ExprLess> byBase;
    Rational coeff(1);
    for (const auto& f : e->kids) {
        if (f->kind == SxKind::Const) {
            coeff *= f->value;
            continue;
        }
        if (f->kind == SxKind::Pow)
            byBase[f->kids[0]].push_back(f->kids[1]);
        else
            byBase[f].push_back(sx::one());
    }
    bool merged = false;
    std::vector<ExprPtr> out;
    for (const auto& [b, exps] : byBase) {
        if (exps.size() < 2) {
            out.push_back(sx::pow(b, exps[0]));
            continue;
        }
        bool license = isProvablyNonzero(b, facts);
        if (!license) {
            license = true;
            for (const auto& x : exps)
                if (!isProvablyNonnegInt(x, facts)) license = false;
        }
        if (!license) {
            for (const auto& x : exps) out.push_back(sx::pow(b, x));
            continue;
        }
        ExprPtr total = sx::add(exps);
        if (isConst(total, Rational(0))) {
            merged = true; // factor collapses to 1
            continue;
        }
        ExprPtr p = sx::pow(b, total);
        merged = merged || exps.size() > 1;
        out.push_back(p);
    }
    if (!merged) return e;
    out.push_back(sx::c(coeff));
    return sx::mul(std::move(out));
}

ExprPtr expandProductsImpl(const ExprPtr& e) {
    if (e->kind == SxKind::Mul) {
        std::vector<ExprPtr> kids;
        for (const auto& k : e->kids) kids.push_back(expandProductsImpl(k));
        std::vector<std::vector<ExprPtr>> terms = {{}};
        for (const auto& k : kids) {
            if (k->kind == SxKind::Add && k->nodes < 64) {
                std::vector<std::vector<ExprPtr>> next;
                for (const auto& t : terms)
                    for (const auto& a : k->kids) {
                        auto copy = t;
                        copy.push_back(a);
                        next.push_back(std::move(copy));
                    }
                terms = std::move(next);
            } else {
                for (auto& t : terms) t.push_back(k);
            }
        }
        if (terms.size() == 1) return sx::mul(terms[0]);
        std::vector<ExprPtr> sumTerms;
        for (auto& t : terms) sumTerms.push_back(sx::mul(t));
        return sx::add(std::move(sumTerms));
    }
    if (e->kind == SxKind::Add) {
        std::vector<ExprPtr> kids;
        for (const auto& k : e->kids) kids.push_back(expandProductsImpl(k));
        return sx::add(std::move(kids));
    }
    return e;
}

struct Simplifier {
    const SymbolFacts& facts;

    ExprPtr run(const ExprPtr& e) {
        std::vector<ExprPtr> kids;
        kids.reserve(e->kids.size());
        for (const auto& k : e->kids) kids.push_back(run(k));
        ExprPtr cur = rebuild(e, std::move(kids));
        return atRoot(cur);
    }

    ExprPtr atRoot(ExprPtr e) {
        e = normalizeComplement(e);
        switch (e->kind) {
        case SxKind::Phi:
            return phiRules(e);
        case SxKind::Mul:
            return mulRules(e);
        case SxKind::Add:
            return addRules(e);
        case SxKind::Sum:
            return sumRules(e);
        default:
            return e;
        }
    }

    // F1: identical arguments collapse
    ExprPtr phiRules(const ExprPtr& e) {
        bool allEqual = true;
        for (size_t i = 1; i < e->kids.size(); ++i)
            if (!equalExpr(e->kids[0], e->kids[i])) allEqual = false;
        if (allEqual && !e->kids.empty()) return e->kids[0];
        return e;
    }

    ExprPtr mulRules(ExprPtr e) {
        e = licensedMulMerge(e, facts);
        if (e->kind != SxKind::Mul) return e;
        // distribute the remaining factors into a normal phi when that
        // shrinks the expression or exposes an F1 collapse
        int phiAt = -1;
        for (size_t i = 0; i < e->kids.size(); ++i) {
            if (e->kids[i]->kind == SxKind::Phi && e->kids[i]->phiKind == PhiKind::Normal) {
                phiAt = static_cast<int>(i);
                break;
            }
        }
        if (phiAt >= 0) {
            std::vector<ExprPtr> rest;
            for (size_t i = 0; i < e->kids.size(); ++i)
                if (static_cast<int>(i) != phiAt) rest.push_back(e->kids[i]);
            const ExprPtr& ph = e->kids[static_cast<size_t>(phiAt)];
            std::vector<ExprPtr> args;
            for (const auto& a : ph->kids) {
                auto factors = rest;
                factors.push_back(a);
                args.push_back(licensedMulMerge(sx::mul(factors), facts));
            }
            ExprPtr cand = sx::phi(ph->phiKind, ph->site, args);
            cand = phiRules(cand);
            if (cand->nodes < e->nodes) return cand;
        }
        return e;
    }

    // C3: merge phis over the same decision site inside a sum
    ExprPtr addRules(const ExprPtr& e) {
        if (e->kind != SxKind::Add) return e;
        std::map<int, std::vector<size_t>> phiTerms;
        for (size_t i = 0; i < e->kids.size(); ++i)
            if (e->kids[i]->kind == SxKind::Phi && e->kids[i]->phiKind == PhiKind::Normal)
                phiTerms[e->kids[i]->site].push_back(i);
        for (const auto& [site, idxs] : phiTerms) {
            if (idxs.size() < 2) continue;
            size_t nargs = e->kids[idxs[0]]->kids.size();
            bool ok = true;
            for (size_t t : idxs)
                if (e->kids[t]->kids.size() != nargs) ok = false;
            if (!ok) continue;
            std::vector<ExprPtr> args;
            for (size_t a = 0; a < nargs; ++a) {
                std::vector<ExprPtr> parts;
                for (size_t t : idxs) parts.push_back(e->kids[t]->kids[a]);
                args.push_back(sx::add(parts));
            }
            ExprPtr mergedPhi = phiRules(sx::phi(PhiKind::Normal, site, args));
            std::vector<ExprPtr> terms;
            for (size_t i = 0; i < e->kids.size(); ++i)
                if (std::find(idxs.begin(), idxs.end(), i) == idxs.end())
                    terms.push_back(e->kids[i]);
            terms.push_back(mergedPhi);
            return sx::add(terms);
        }
        return e;
    }

    // Sum linearity: split over Add, hoist index-free factors, close
    // index-free and affine bodies
    ExprPtr sumRules(const ExprPtr& e) {
        const std::string& idx = e->name;
        const ExprPtr& lo = e->kids[0];
        const ExprPtr& hi = e->kids[1];
        ExprPtr body = e->kids[2];
        ExprPtr count = sx::add(sx::sub(hi, lo), sx::one());

        if (!dependsOn(body, idx)) return sx::mul(body, count);

        ExprPtr expanded = expandProductsImpl(body);
        if (expanded->kind == SxKind::Add) {
            std::vector<ExprPtr> sums;
            for (const auto& t : expanded->kids)
                sums.push_back(sumRules(sx::sum(idx, lo, hi, t)));
            return sx::add(std::move(sums));
        }
        if (expanded->kind == SxKind::Mul) {
            std::vector<ExprPtr> in, out;
            for (const auto& f : expanded->kids)
                (dependsOn(f, idx) ? in : out).push_back(f);
            if (!out.empty() && !in.empty()) {
                out.push_back(sx::sum(idx, lo, hi, sx::mul(in)));
                return sx::mul(std::move(out));
            }
        }
        // arithmetic series for affine bodies
        if (equalExpr(expanded, sx::sym(idx))) {
            // sum i = (lo + hi) * n / 2
            return sx::mul({sx::c(Rational(1, 2)), sx::add(lo, hi), count});
        }
        if (expanded.get() != body.get()) return sx::sum(idx, lo, hi, expanded);
        return e;
    }
};

} // namespace

ExprPtr expandProducts(const ExprPtr& e) { return expandProductsImpl(e); }

ExprPtr simplify(const ExprPtr& e, const SymbolFacts& facts, int maxPasses) {
    Simplifier s{facts};
    ExprPtr cur = e;
    for (int pass = 0; pass < maxPasses; ++pass) {
        ExprPtr next = s.run(cur);
        if (equalExpr(next, cur)) return next;
        cur = next;
    }
    return cur;
}

// --- differentiation ------------------------------------------------------------

namespace {

struct Differ {
    const std::string& wrt;

    ExprPtr d(const ExprPtr& e) {
        switch (e->kind) {
        case SxKind::Const:
        case SxKind::ArrayRef:
        case SxKind::Cmp:
            return sx::zero();
        case SxKind::Sym:
            return e->name == wrt ? sx::one() : sx::zero();
        case SxKind::Add: {
            std::vector<ExprPtr> terms;
            for (const auto& k : e->kids) terms.push_back(d(k));
            return sx::add(std::move(terms));
        }
        case SxKind::Mul: {
            std::vector<ExprPtr> terms;
            for (size_t i = 0; i < e->kids.size(); ++i) {
                std::vector<ExprPtr> factors;
                for (size_t j = 0; j < e->kids.size(); ++j)
                    factors.push_back(j == i ? d(e->kids[j]) : e->kids[j]);
                terms.push_back(sx::mul(std::move(factors)));
            }
            return sx::add(std::move(terms));
        }
        case SxKind::Pow: {
            const ExprPtr& b = e->kids[0];
            const ExprPtr& x = e->kids[1];
            ExprPtr db = d(b);
            ExprPtr dx = d(x);
            ExprPtr t1 = sx::mul({x, sx::pow(b, sx::sub(x, sx::one())), db});
            if (isConst(dx, Rational(0))) return t1;
            ExprPtr t2 = sx::mul({sx::pow(b, x), sx::call(Intrinsic::Log, {b}), dx});
            return sx::add(t1, t2);
        }
        case SxKind::Call: {
            const ExprPtr& a = e->kids[0];
            ExprPtr da = d(a);
            switch (e->intrinsic) {
            case Intrinsic::Sin:
                return sx::mul(sx::call(Intrinsic::Cos, {a}), da);
            case Intrinsic::Cos:
                return sx::neg(sx::mul(sx::call(Intrinsic::Sin, {a}), da));
            case Intrinsic::Exp:
                return sx::mul(e, da);
            case Intrinsic::Log:
                return sx::mul(sx::pow(a, sx::ci(-1)), da);
            case Intrinsic::Sqrt:
                return sx::mul({sx::c(Rational(1, 2)), sx::pow(a, sx::c(Rational(-1, 2))), da});
            case Intrinsic::Relu:
                // subgradient 0 at relu(0)
                return sx::mul(sx::select(sx::cmp(CmpOp::Gt, a, sx::zero()), sx::one(), sx::zero()), da);
            case Intrinsic::Abs:
                return sx::mul(sx::select(sx::cmp(CmpOp::Ge, a, sx::zero()), sx::one(), sx::ci(-1)), da);
            case Intrinsic::Min:
                return sx::select(sx::cmp(CmpOp::Le, a, e->kids[1]), da, d(e->kids[1]));
            case Intrinsic::Max:
                return sx::select(sx::cmp(CmpOp::Ge, a, e->kids[1]), da, d(e->kids[1]));
            case Intrinsic::Pow:
                return d(sx::pow(a, e->kids[1]));
            }
            throw Error("unhandled intrinsic in differentiation");
        }
        case SxKind::Select:
            return sx::select(e->kids[0], d(e->kids[1]), d(e->kids[2]));
        case SxKind::Phi: {
            if (e->phiKind != PhiKind::Normal && e->phiKind != PhiKind::LoopExit)
                throw NotClosedError("cannot differentiate a loop-entry phi");
            std::vector<ExprPtr> args;
            for (const auto& k : e->kids) args.push_back(d(k));
            return sx::phi(e->phiKind, e->site, std::move(args));
        }
        case SxKind::Sum:
            if (dependsOn(e->kids[0], wrt) || dependsOn(e->kids[1], wrt))
                throw NotClosedError("sum bounds depend on the active input");
            return sx::sum(e->name, e->kids[0], e->kids[1], d(e->kids[2]));
        case SxKind::Prod: {
            if (dependsOn(e->kids[0], wrt) || dependsOn(e->kids[1], wrt))
                throw NotClosedError("product bounds depend on the active input");
            // sum_i body'(i) * prod_{j<i} body(j) * prod_{j>i} body(j)
            std::string j = e->name + "'";
            std::map<std::string, ExprPtr> m{{e->name, sx::sym(j)}};
            ExprPtr bodyJ = substitute(e->kids[2], m);
            ExprPtr left = sx::prod(j, e->kids[0], sx::sub(sx::sym(e->name), sx::one()), bodyJ);
            ExprPtr right = sx::prod(j, sx::add(sx::sym(e->name), sx::one()), e->kids[1], bodyJ);
            return sx::sum(e->name, e->kids[0], e->kids[1],
                           sx::mul({d(e->kids[2]), left, right}));
        }
        case SxKind::LoopBody:
            throw NotClosedError("loop notation is not closed; split the SOI");
        case SxKind::IterApply:
            throw NotClosedError("iterated application is not closed; split the SOI");
        case SxKind::IterInstance:
        case SxKind::ExitValue:
            throw NotClosedError("loop instance values are not differentiable directly");
        }
        throw Error("unreachable");
    }
};

} // namespace

ExprPtr differentiate(const DerivRequest& req) { return differentiate(req.expr, req.wrt); }

ExprPtr differentiate(const ExprPtr& e, const std::string& wrt) {
    Differ dd{wrt};
    return dd.d(e);
}

namespace {

struct ArrayDiffer {
    const std::string& array;
    const ExprPtr& elemIndex;

    ExprPtr d(const ExprPtr& e) {
        if (e->kind == SxKind::ArrayRef) {
            if (e->name != array) return sx::zero();
            return sx::select(sx::cmp(CmpOp::Eq, e->kids[0], elemIndex), sx::one(), sx::zero());
        }
        if (e->kind == SxKind::Sym || e->kind == SxKind::Const || e->kind == SxKind::Cmp)
            return sx::zero();
        // reuse the scalar rules by temporarily treating array reads as
        // opaque; structure mirrors Differ
        switch (e->kind) {
        case SxKind::Add: {
            std::vector<ExprPtr> terms;
            for (const auto& k : e->kids) terms.push_back(d(k));
            return sx::add(std::move(terms));
        }
        case SxKind::Mul: {
            std::vector<ExprPtr> terms;
            for (size_t i = 0; i < e->kids.size(); ++i) {
                std::vector<ExprPtr> factors;
                for (size_t j = 0; j < e->kids.size(); ++j)
                    factors.push_back(j == i ? d(e->kids[j]) : e->kids[j]);
                terms.push_back(sx::mul(std::move(factors)));
            }
            return sx::add(std::move(terms));
        }
        case SxKind::Pow: {
            ExprPtr db = d(e->kids[0]);
            if (isConst(db, Rational(0)) && !dependsOnArray(e->kids[1])) return sx::zero();
            ExprPtr t1 =
                sx::mul({e->kids[1], sx::pow(e->kids[0], sx::sub(e->kids[1], sx::one())), db});
            return t1;
        }
        case SxKind::Call: {
            ExprPtr da = d(e->kids[0]);
            switch (e->intrinsic) {
            case Intrinsic::Sin: return sx::mul(sx::call(Intrinsic::Cos, {e->kids[0]}), da);
            case Intrinsic::Cos:
                return sx::neg(sx::mul(sx::call(Intrinsic::Sin, {e->kids[0]}), da));
            case Intrinsic::Exp: return sx::mul(e, da);
            case Intrinsic::Log: return sx::mul(sx::pow(e->kids[0], sx::ci(-1)), da);
            default:
                return sx::mul(
                    sx::select(sx::cmp(CmpOp::Gt, e->kids[0], sx::zero()), sx::one(), sx::zero()),
                    da);
            }
        }
        case SxKind::Select:
            return sx::select(e->kids[0], d(e->kids[1]), d(e->kids[2]));
        case SxKind::Sum:
            return sx::sum(e->name, e->kids[0], e->kids[1], d(e->kids[2]));
        default:
            throw NotClosedError("expression not supported for array differentiation");
        }
    }

    bool dependsOnArray(const ExprPtr& e) const { return freeSymbols(e).arrays.count(array) > 0; }
};

} // namespace

ExprPtr differentiateArrayElement(const ExprPtr& e, const std::string& array,
                                  const ExprPtr& elemIndex) {
    ArrayDiffer ad{array, elemIndex};
    return ad.d(e);
}

// --- CSE -----------------------------------------------------------------------

namespace {

void collectBinderNames(const ExprPtr& e, std::set<std::string>& out) {
    if (e->kind == SxKind::Sum || e->kind == SxKind::Prod || e->kind == SxKind::IterApply)
        out.insert(e->name);
    if (e->kind == SxKind::LoopBody) {
        out.insert(e->name);
        out.insert("@it" + std::to_string(e->site));
    }
    for (const auto& k : e->kids) collectBinderNames(k, out);
}

bool extractable(const ExprPtr& e, const std::set<std::string>& binders) {
    if (e->kind == SxKind::Const || e->kind == SxKind::Sym) return false;
    if (e->nodes < 2) return false;
    if (containsKind(e, SxKind::Phi) || containsKind(e, SxKind::LoopBody)) return false;
    FreeSymbols fs = freeSymbols(e);
    for (const auto& s : fs.scalars)
        if (binders.count(s)) return false;
    return true;
}

void countOccurrences(const ExprPtr& e, std::map<ExprPtr, int, ExprLess>& counts,
                      const std::set<std::string>& binders, int minSize) {
    if (e->nodes >= minSize && extractable(e, binders)) counts[e] += 1;
    for (const auto& k : e->kids) countOccurrences(k, counts, binders, minSize);
}

ExprPtr replaceAll(const ExprPtr& e, const ExprPtr& target, const ExprPtr& repl) {
    if (equalExpr(e, target)) return repl;
    if (e->kids.empty()) return e;
    std::vector<ExprPtr> kids;
    bool changed = false;
    for (const auto& k : e->kids) {
        kids.push_back(replaceAll(k, target, repl));
        changed = changed || kids.back().get() != k.get();
    }
    if (!changed) return e;
    return rebuild(e, std::move(kids));
}

} // namespace

std::vector<ExprPtr> cseMulti(std::vector<ExprPtr> roots, int minSize,
                              std::vector<Binding>& bindingsOut) {
    std::set<std::string> binders, taken;
    for (const auto& r : roots) {
        collectBinderNames(r, binders);
        for (const auto& s : freeSymbols(r).scalars) taken.insert(s);
    }
    int next = 0;
    while (true) {
        std::map<ExprPtr, int, ExprLess> counts;
        for (const auto& r : roots) countOccurrences(r, counts, binders, minSize);
        ExprPtr best;
        for (const auto& [expr, n] : counts) {
            if (n < 2) continue;
            if (!best || expr->nodes > best->nodes) best = expr;
        }
        if (!best) break;
        std::string name;
        do {
            name = "t" + std::to_string(next++);
        } while (taken.count(name));
        taken.insert(name);
        bindingsOut.push_back({name, best});
        ExprPtr ph = sx::sym(name);
        for (auto& r : roots) r = replaceAll(r, best, ph);
        for (auto& b : bindingsOut)
            if (!equalExpr(b.expr, best)) b.expr = replaceAll(b.expr, best, ph);
    }
    // bindings were appended as discovered (largest first); to evaluate in
    // order, later bindings must not reference earlier-emitted names that
    // are defined after them -- reverse so innermost come first
    std::reverse(bindingsOut.begin(), bindingsOut.end());
    return roots;
}

SimplifiedExpr cse(const ExprPtr& e, int minSize) {
    SimplifiedExpr out;
    std::vector<Binding> bindings;
    auto roots = cseMulti({e}, minSize, bindings);
    out.expr = roots[0];
    out.bindings = std::move(bindings);
    out.opCount = opCountWithBindings(out);
    return out;
}

int opCountWithBindings(const SimplifiedExpr& s) {
    int n = opCountStatic(s.expr);
    for (const auto& b : s.bindings) n += opCountStatic(b.expr);
    return n;
}

} // namespace phigrad
