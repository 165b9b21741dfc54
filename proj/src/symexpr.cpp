#include "phigrad/symexpr.hpp"
#include "phigrad/diag.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <sstream>

namespace phigrad {

namespace {

size_t hashCombine(size_t h, size_t v) {
    return h ^ (v + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2));
}

size_t hashString(const std::string& s) { return std::hash<std::string>{}(s); }

ExprPtr mkNode(SymExpr node) {
    size_t h = static_cast<size_t>(node.kind) * 1315423911ull;
    switch (node.kind) {
    case SxKind::Const:
        h = hashCombine(h, hashString(ratStr(node.value)));
        break;
    case SxKind::Sym:
    case SxKind::ArrayRef:
    case SxKind::IterApply:
        h = hashCombine(h, hashString(node.name));
        break;
    case SxKind::Call:
        h = hashCombine(h, static_cast<size_t>(node.intrinsic));
        break;
    case SxKind::Cmp:
        h = hashCombine(h, static_cast<size_t>(node.cmp));
        break;
    case SxKind::Phi:
        h = hashCombine(h, static_cast<size_t>(node.phiKind));
        h = hashCombine(h, static_cast<size_t>(node.site));
        break;
    case SxKind::LoopBody:
    case SxKind::IterInstance:
    case SxKind::ExitValue:
        h = hashCombine(h, static_cast<size_t>(node.site));
        h = hashCombine(h, hashString(node.name));
        break;
    case SxKind::Sum:
    case SxKind::Prod:
        h = hashCombine(h, hashString(node.name));
        break;
    default:
        break;
    }
    int n = 1;
    for (const auto& k : node.kids) {
        h = hashCombine(h, k->hashv);
        n += k->nodes;
    }
    node.hashv = h;
    node.nodes = n;
    return std::make_shared<SymExpr>(std::move(node));
}

SymExpr base(SxKind k) {
    SymExpr e;
    e.kind = k;
    return e;
}

} // namespace

int compareExpr(const SymExpr& a, const SymExpr& b) {
    if (a.kind != b.kind) return a.kind < b.kind ? -1 : 1;
    switch (a.kind) {
    case SxKind::Const:
        if (a.value != b.value) return a.value < b.value ? -1 : 1;
        break;
    case SxKind::Sym:
    case SxKind::ArrayRef:
    case SxKind::Sum:
    case SxKind::Prod:
    case SxKind::IterApply:
        if (a.name != b.name) return a.name < b.name ? -1 : 1;
        break;
    case SxKind::Call:
        if (a.intrinsic != b.intrinsic) return a.intrinsic < b.intrinsic ? -1 : 1;
        break;
    case SxKind::Cmp:
        if (a.cmp != b.cmp) return a.cmp < b.cmp ? -1 : 1;
        break;
    case SxKind::Phi:
        if (a.phiKind != b.phiKind) return a.phiKind < b.phiKind ? -1 : 1;
        if (a.site != b.site) return a.site < b.site ? -1 : 1;
        break;
    case SxKind::LoopBody:
    case SxKind::IterInstance:
    case SxKind::ExitValue:
        if (a.site != b.site) return a.site < b.site ? -1 : 1;
        if (a.name != b.name) return a.name < b.name ? -1 : 1;
        break;
    default:
        break;
    }
    if (a.kids.size() != b.kids.size()) return a.kids.size() < b.kids.size() ? -1 : 1;
    for (size_t i = 0; i < a.kids.size(); ++i) {
        int c = compareExpr(*a.kids[i], *b.kids[i]);
        if (c != 0) return c;
    }
    return 0;
}

bool equalExpr(const ExprPtr& a, const ExprPtr& b) {
    if (a.get() == b.get()) return true;
    if (!a || !b) return false;
    if (a->hashv != b->hashv) return false;
    return compareExpr(*a, *b) == 0;
}

bool isConst(const ExprPtr& e, const Rational& v) {
    return e->kind == SxKind::Const && e->value == v;
}
bool isConst(const ExprPtr& e) { return e->kind == SxKind::Const; }

namespace sx {

ExprPtr c(Rational v) {
    SymExpr e = base(SxKind::Const);
    e.value = std::move(v);
    return mkNode(std::move(e));
}

ExprPtr ci(long v) { return c(Rational(v)); }
ExprPtr zero() { return ci(0); }
ExprPtr one() { return ci(1); }

ExprPtr sym(const std::string& name) {
    SymExpr e = base(SxKind::Sym);
    e.name = name;
    return mkNode(std::move(e));
}

ExprPtr arrayRef(const std::string& array, ExprPtr index) {
    SymExpr e = base(SxKind::ArrayRef);
    e.name = array;
    e.kids = {std::move(index)};
    return mkNode(std::move(e));
}

namespace {

// coefficient * core split of a canonical non-Const term
std::pair<Rational, ExprPtr> splitCoeff(const ExprPtr& t) {
    if (t->kind == SxKind::Mul && !t->kids.empty() && t->kids[0]->kind == SxKind::Const) {
        if (t->kids.size() == 2) return {t->kids[0]->value, t->kids[1]};
        SymExpr rest = base(SxKind::Mul);
        rest.kids.assign(t->kids.begin() + 1, t->kids.end());
        return {t->kids[0]->value, mkNode(std::move(rest))};
    }
    return {Rational(1), t};
}

ExprPtr withCoeff(const Rational& coeff, const ExprPtr& core) {
    if (coeff == 0) return zero();
    if (coeff == 1) return core;
    SymExpr m = base(SxKind::Mul);
    m.kids.push_back(c(coeff));
    if (core->kind == SxKind::Mul)
        m.kids.insert(m.kids.end(), core->kids.begin(), core->kids.end());
    else
        m.kids.push_back(core);
    return mkNode(std::move(m));
}

std::pair<ExprPtr, ExprPtr> asPow(const ExprPtr& f) {
    if (f->kind == SxKind::Pow) return {f->kids[0], f->kids[1]};
    return {f, one()};
}

} // namespace

ExprPtr add(std::vector<ExprPtr> terms) {
    std::vector<ExprPtr> flat;
    for (auto& t : terms) {
        if (t->kind == SxKind::Add)
            flat.insert(flat.end(), t->kids.begin(), t->kids.end());
        else
            flat.push_back(std::move(t));
    }
    Rational constSum(0);
    std::map<ExprPtr, Rational, ExprLess> byCore;
    for (const auto& t : flat) {
        if (t->kind == SxKind::Const) {
            constSum += t->value;
            continue;
        }
        auto [coeff, core] = splitCoeff(t);
        byCore[core] += coeff;
    }
    std::vector<ExprPtr> out;
    for (const auto& [core, coeff] : byCore) {
        if (coeff == 0) continue;
        out.push_back(withCoeff(coeff, core));
    }
    std::sort(out.begin(), out.end(), ExprLess{});
    if (constSum != 0) out.insert(out.begin(), c(constSum));
    if (out.empty()) return zero();
    if (out.size() == 1) return out[0];
    SymExpr e = base(SxKind::Add);
    e.kids = std::move(out);
    return mkNode(std::move(e));
}

ExprPtr add(ExprPtr a, ExprPtr b) { return add(std::vector<ExprPtr>{std::move(a), std::move(b)}); }

ExprPtr mul(std::vector<ExprPtr> factors) {
    std::vector<ExprPtr> flat;
    for (auto& f : factors) {
        if (f->kind == SxKind::Mul)
            flat.insert(flat.end(), f->kids.begin(), f->kids.end());
        else
            flat.push_back(std::move(f));
    }
    Rational coeff(1);
    std::map<ExprPtr, std::vector<ExprPtr>, ExprLess> byBase; // base -> exponents
    std::vector<ExprPtr> opaque; // factors kept as-is (unmergeable)
    for (const auto& f : flat) {
        if (f->kind == SxKind::Const) {
            coeff *= f->value;
            continue;
        }
        auto [b, e] = asPow(f);
        byBase[b].push_back(e);
    }
    if (coeff == 0) return zero();
    for (const auto& [b, exps] : byBase) {
        Rational constExp(0);
        bool anyConst = false;
        std::vector<ExprPtr> symbolic;
        for (const auto& e : exps) {
            if (e->kind == SxKind::Const) {
                constExp += e->value;
                anyConst = true;
            } else {
                symbolic.push_back(e);
            }
        }
        // symbolic exponents are merged only by the licensed simplifier
        for (const auto& e : symbolic) opaque.push_back(pow(b, e));
        if (anyConst) {
            if (constExp == 0 && exps.size() - symbolic.size() > 1) {
                // a^e * a^-e: cancellation needs a nonzero license; keep split
                for (const auto& e : exps)
                    if (e->kind == SxKind::Const) opaque.push_back(pow(b, e));
            } else if (constExp != 0) {
                ExprPtr p = pow(b, c(constExp));
                if (p->kind == SxKind::Const)
                    coeff *= p->value;
                else if (p->kind == SxKind::Mul) // pow may have redistributed
                    return mul({c(coeff), p, mul(opaque)});
                else
                    opaque.push_back(p);
            }
            // constExp == 0 from a single zero exponent: pow() already folded
        }
    }
    std::sort(opaque.begin(), opaque.end(), ExprLess{});
    if (opaque.empty()) return c(coeff);
    if (coeff == 1 && opaque.size() == 1) return opaque[0];
    SymExpr e = base(SxKind::Mul);
    if (coeff != 1) e.kids.push_back(c(coeff));
    e.kids.insert(e.kids.end(), opaque.begin(), opaque.end());
    if (e.kids.size() == 1) return e.kids[0];
    return mkNode(std::move(e));
}

ExprPtr mul(ExprPtr a, ExprPtr b) { return mul(std::vector<ExprPtr>{std::move(a), std::move(b)}); }

ExprPtr neg(ExprPtr x) { return mul(ci(-1), std::move(x)); }
ExprPtr sub(ExprPtr a, ExprPtr b) { return add(std::move(a), neg(std::move(b))); }
ExprPtr div(ExprPtr a, ExprPtr b) { return mul(std::move(a), pow(std::move(b), ci(-1))); }

ExprPtr pow(ExprPtr b, ExprPtr e) {
    if (e->kind == SxKind::Const) {
        const Rational& ev = e->value;
        if (ev == 0) return one();
        if (ev == 1) return b;
        if (b->kind == SxKind::Const) {
            if (isInteger(ev) && numerator(ev) > -64 && numerator(ev) < 64 &&
                !(b->value == 0 && ev < 0))
                return c(ratPow(b->value, static_cast<long>(numerator(ev))));
            if (b->value == 1) return one();
            if (b->value == 0 && ev > 0) return zero();
        }
        if (b->kind == SxKind::Pow && isInteger(ev) && ev > 0)
            return pow(b->kids[0], mul(b->kids[1], e));
        if (b->kind == SxKind::Mul && isInteger(ev)) {
            std::vector<ExprPtr> parts;
            for (const auto& k : b->kids) parts.push_back(pow(k, e));
            return mul(std::move(parts));
        }
    }
    SymExpr n = base(SxKind::Pow);
    n.kids = {std::move(b), std::move(e)};
    return mkNode(std::move(n));
}

ExprPtr call(Intrinsic op, std::vector<ExprPtr> args) {
    if (op == Intrinsic::Sqrt) return pow(args.at(0), c(Rational(1, 2)));
    if (op == Intrinsic::Pow) return pow(args.at(0), args.at(1));
    if (args.size() == 1 && args[0]->kind == SxKind::Const) {
        const Rational& v = args[0]->value;
        switch (op) {
        case Intrinsic::Relu: return c(v > 0 ? v : Rational(0));
        case Intrinsic::Abs: return c(v < 0 ? -v : v);
        case Intrinsic::Sin: if (v == 0) return zero(); break;
        case Intrinsic::Cos: if (v == 0) return one(); break;
        case Intrinsic::Exp: if (v == 0) return one(); break;
        case Intrinsic::Log: if (v == 1) return zero(); break;
        default: break;
        }
    }
    if (args.size() == 2 && args[0]->kind == SxKind::Const && args[1]->kind == SxKind::Const) {
        const Rational& x = args[0]->value;
        const Rational& y = args[1]->value;
        if (op == Intrinsic::Min) return c(x <= y ? x : y);
        if (op == Intrinsic::Max) return c(x >= y ? x : y);
    }
    SymExpr e = base(SxKind::Call);
    e.intrinsic = op;
    e.kids = std::move(args);
    return mkNode(std::move(e));
}

ExprPtr cmp(CmpOp op, ExprPtr a, ExprPtr b) {
    if (a->kind == SxKind::Const && b->kind == SxKind::Const) {
        const Rational& x = a->value;
        const Rational& y = b->value;
        bool r = false;
        switch (op) {
        case CmpOp::Lt: r = x < y; break;
        case CmpOp::Le: r = x <= y; break;
        case CmpOp::Gt: r = x > y; break;
        case CmpOp::Ge: r = x >= y; break;
        case CmpOp::Eq: r = x == y; break;
        case CmpOp::Ne: r = x != y; break;
        }
        return r ? one() : zero();
    }
    SymExpr e = base(SxKind::Cmp);
    e.cmp = op;
    e.kids = {std::move(a), std::move(b)};
    return mkNode(std::move(e));
}

ExprPtr select(ExprPtr cond, ExprPtr a, ExprPtr b) {
    if (cond->kind == SxKind::Const) return cond->value != 0 ? a : b;
    if (equalExpr(a, b)) return a;
    SymExpr e = base(SxKind::Select);
    e.kids = {std::move(cond), std::move(a), std::move(b)};
    return mkNode(std::move(e));
}

ExprPtr phi(PhiKind kind, int site, std::vector<ExprPtr> args) {
    SymExpr e = base(SxKind::Phi);
    e.phiKind = kind;
    e.site = site;
    e.kids = std::move(args);
    return mkNode(std::move(e));
}

ExprPtr loopBody(int loopId, const std::string& carried, ExprPtr trip, ExprPtr body) {
    SymExpr e = base(SxKind::LoopBody);
    e.site = loopId;
    e.name = carried;
    e.kids = {std::move(trip), std::move(body)};
    return mkNode(std::move(e));
}

ExprPtr sum(const std::string& index, ExprPtr lo, ExprPtr hi, ExprPtr body) {
    SymExpr e = base(SxKind::Sum);
    e.name = index;
    e.kids = {std::move(lo), std::move(hi), std::move(body)};
    return mkNode(std::move(e));
}

ExprPtr prod(const std::string& index, ExprPtr lo, ExprPtr hi, ExprPtr body) {
    SymExpr e = base(SxKind::Prod);
    e.name = index;
    e.kids = {std::move(lo), std::move(hi), std::move(body)};
    return mkNode(std::move(e));
}

ExprPtr iterApply(const std::string& hole, ExprPtr tmpl, ExprPtr count, ExprPtr seed) {
    if (count->kind == SxKind::Const && count->value == 0) return seed;
    SymExpr e = base(SxKind::IterApply);
    e.name = hole;
    e.kids = {std::move(tmpl), std::move(count), std::move(seed)};
    return mkNode(std::move(e));
}

ExprPtr iterInstance(int loopId, const std::string& name, ExprPtr j) {
    SymExpr e = base(SxKind::IterInstance);
    e.site = loopId;
    e.name = name;
    e.kids = {std::move(j)};
    return mkNode(std::move(e));
}

ExprPtr exitValue(int loopId, const std::string& name) {
    SymExpr e = base(SxKind::ExitValue);
    e.site = loopId;
    e.name = name;
    return mkNode(std::move(e));
}

} // namespace sx

// --- traversal --------------------------------------------------------------

void forEachNode(const ExprPtr& e, const std::function<void(const ExprPtr&)>& f) {
    f(e);
    for (const auto& k : e->kids) forEachNode(k, f);
}

bool containsKind(const ExprPtr& e, SxKind k) {
    if (e->kind == k) return true;
    for (const auto& kid : e->kids)
        if (containsKind(kid, k)) return true;
    return false;
}

namespace {

void freeSymsWalk(const ExprPtr& e, std::set<std::string>& bound, FreeSymbols& out) {
    switch (e->kind) {
    case SxKind::Sym:
        if (!bound.count(e->name)) out.scalars.insert(e->name);
        return;
    case SxKind::ArrayRef:
        out.arrays.insert(e->name);
        freeSymsWalk(e->kids[0], bound, out);
        return;
    case SxKind::Sum:
    case SxKind::Prod: {
        freeSymsWalk(e->kids[0], bound, out);
        freeSymsWalk(e->kids[1], bound, out);
        bool inserted = bound.insert(e->name).second;
        freeSymsWalk(e->kids[2], bound, out);
        if (inserted) bound.erase(e->name);
        return;
    }
    case SxKind::IterApply: {
        freeSymsWalk(e->kids[1], bound, out);
        freeSymsWalk(e->kids[2], bound, out);
        bool inserted = bound.insert(e->name).second;
        freeSymsWalk(e->kids[0], bound, out);
        if (inserted) bound.erase(e->name);
        return;
    }
    case SxKind::LoopBody: {
        freeSymsWalk(e->kids[0], bound, out);
        std::string iter = "@it" + std::to_string(e->site);
        bool i1 = bound.insert(e->name).second;
        bool i2 = bound.insert(iter).second;
        freeSymsWalk(e->kids[1], bound, out);
        if (i1) bound.erase(e->name);
        if (i2) bound.erase(iter);
        return;
    }
    default:
        for (const auto& k : e->kids) freeSymsWalk(k, bound, out);
        return;
    }
}

} // namespace

FreeSymbols freeSymbols(const ExprPtr& e) {
    FreeSymbols out;
    std::set<std::string> bound;
    freeSymsWalk(e, bound, out);
    return out;
}

ExprPtr substitute(const ExprPtr& e, const std::map<std::string, ExprPtr>& map) {
    switch (e->kind) {
    case SxKind::Const:
        return e;
    case SxKind::Sym: {
        auto it = map.find(e->name);
        return it == map.end() ? e : it->second;
    }
    case SxKind::Sum:
    case SxKind::Prod:
    case SxKind::IterApply:
    case SxKind::LoopBody: {
        auto inner = map;
        inner.erase(e->name);
        if (e->kind == SxKind::LoopBody) inner.erase("@it" + std::to_string(e->site));
        ExprPtr k0, k1, k2;
        if (e->kind == SxKind::Sum || e->kind == SxKind::Prod) {
            k0 = substitute(e->kids[0], map);
            k1 = substitute(e->kids[1], map);
            k2 = substitute(e->kids[2], inner);
            return e->kind == SxKind::Sum ? sx::sum(e->name, k0, k1, k2)
                                          : sx::prod(e->name, k0, k1, k2);
        }
        if (e->kind == SxKind::IterApply) {
            k0 = substitute(e->kids[0], inner);
            k1 = substitute(e->kids[1], map);
            k2 = substitute(e->kids[2], map);
            return sx::iterApply(e->name, k0, k1, k2);
        }
        k0 = substitute(e->kids[0], map);
        k1 = substitute(e->kids[1], inner);
        return sx::loopBody(e->site, e->name, k0, k1);
    }
    default:
        break;
    }
    std::vector<ExprPtr> kids;
    kids.reserve(e->kids.size());
    bool changed = false;
    for (const auto& k : e->kids) {
        kids.push_back(substitute(k, map));
        changed = changed || kids.back().get() != k.get();
    }
    if (!changed) return e;
    switch (e->kind) {
    case SxKind::ArrayRef: return sx::arrayRef(e->name, kids[0]);
    case SxKind::Add: return sx::add(std::move(kids));
    case SxKind::Mul: return sx::mul(std::move(kids));
    case SxKind::Pow: return sx::pow(kids[0], kids[1]);
    case SxKind::Call: return sx::call(e->intrinsic, std::move(kids));
    case SxKind::Cmp: return sx::cmp(e->cmp, kids[0], kids[1]);
    case SxKind::Select: return sx::select(kids[0], kids[1], kids[2]);
    case SxKind::Phi: return sx::phi(e->phiKind, e->site, std::move(kids));
    case SxKind::IterInstance: return sx::iterInstance(e->site, e->name, kids[0]);
    default: return e;
    }
}

int opCountStatic(const ExprPtr& e) {
    int n = 0;
    switch (e->kind) {
    case SxKind::Add:
    case SxKind::Mul:
        n = static_cast<int>(e->kids.size()) - 1;
        if (e->kind == SxKind::Mul && e->kids[0]->kind == SxKind::Const &&
            e->kids[0]->value == -1)
            n -= 1; // plain negation
        break;
    case SxKind::Pow:
    case SxKind::Call:
    case SxKind::Cmp:
    case SxKind::Select:
        n = 1;
        break;
    case SxKind::Sum:
    case SxKind::Prod:
        n = 1;
        break;
    default:
        break;
    }
    for (const auto& k : e->kids) n += opCountStatic(k);
    return n;
}

// --- evaluation --------------------------------------------------------------

namespace {

template <typename Num>
struct Ctx {
    std::map<std::string, Num> scalars;
    const std::map<std::string, std::vector<Num>>* arrays = nullptr;
    const TraceRecord* trace = nullptr;
    Counters* counters = nullptr;
    std::map<int, Num> carried;          // active LoopBody state per loop id
    std::map<int, int> siteInstance;     // normal-phi dynamic instance counters

    void op(long n = 1) {
        if (counters) counters->ops += n;
    }
};

long asIndex(double v) { return std::lround(v); }
long asIndex(const Rational& v) {
    if (!isInteger(v)) throw Error("expected integer value in loop bound/index");
    return static_cast<long>(numerator(v));
}

double applyIntrinsic(Intrinsic op, const std::vector<double>& a) {
    switch (op) {
    case Intrinsic::Sin: return std::sin(a[0]);
    case Intrinsic::Cos: return std::cos(a[0]);
    case Intrinsic::Exp: return std::exp(a[0]);
    case Intrinsic::Log: return std::log(a[0]);
    case Intrinsic::Sqrt: return std::sqrt(a[0]);
    case Intrinsic::Pow: return std::pow(a[0], a[1]);
    case Intrinsic::Relu: return a[0] > 0 ? a[0] : 0.0;
    case Intrinsic::Abs: return std::fabs(a[0]);
    case Intrinsic::Min: return a[0] <= a[1] ? a[0] : a[1];
    case Intrinsic::Max: return a[0] >= a[1] ? a[0] : a[1];
    }
    return 0;
}

Rational applyIntrinsic(Intrinsic op, const std::vector<Rational>& a) {
    switch (op) {
    case Intrinsic::Relu: return a[0] > 0 ? a[0] : Rational(0);
    case Intrinsic::Abs: return a[0] < 0 ? -a[0] : a[0];
    case Intrinsic::Min: return a[0] <= a[1] ? a[0] : a[1];
    case Intrinsic::Max: return a[0] >= a[1] ? a[0] : a[1];
    default:
        throw Error("intrinsic not defined over exact rationals");
    }
}

template <typename Num>
Num numPow(const Num& b, const Num& e);

template <>
double numPow<double>(const double& b, const double& e) {
    if (b == 0.0 && e == 0.0) return 1.0;
    return std::pow(b, e);
}

template <>
Rational numPow<Rational>(const Rational& b, const Rational& e) {
    if (!isInteger(e)) throw Error("fractional power over exact rationals");
    return ratPow(b, static_cast<long>(numerator(e)));
}

template <typename Num>
bool cmpApply(CmpOp op, const Num& x, const Num& y) {
    switch (op) {
    case CmpOp::Lt: return x < y;
    case CmpOp::Le: return x <= y;
    case CmpOp::Gt: return x > y;
    case CmpOp::Ge: return x >= y;
    case CmpOp::Eq: return x == y;
    case CmpOp::Ne: return x != y;
    }
    return false;
}

template <typename Num>
Num toNum(const Rational& r);
template <>
double toNum<double>(const Rational& r) { return toDouble(r); }
template <>
Rational toNum<Rational>(const Rational& r) { return r; }

template <typename Num>
const SymExpr* findEntryPhi(const ExprPtr& body, int loopId) {
    const SymExpr* found = nullptr;
    bool multiple = false;
    std::function<void(const ExprPtr&)> walk = [&](const ExprPtr& n) {
        if (n->kind == SxKind::Phi && n->phiKind == PhiKind::LoopEntry && n->site == loopId) {
            if (found && found->hashv != n->hashv && compareExpr(*found, *n) != 0)
                multiple = true;
            found = n.get();
        }
        if (n->kind == SxKind::LoopBody && n->site == loopId) return; // shadowed
        for (const auto& k : n->kids) walk(k);
    };
    walk(body);
    if (multiple) throw Error("loop has mutually recursive carried values");
    return found;
}

template <typename Num>
struct SavedEntry {
    std::map<std::string, Num>& map;
    std::string key;
    bool had;
    Num old{};
    SavedEntry(std::map<std::string, Num>& m, const std::string& k) : map(m), key(k) {
        auto it = m.find(k);
        had = it != m.end();
        if (had) old = it->second;
    }
    ~SavedEntry() {
        if (had)
            map[key] = old;
        else
            map.erase(key);
    }
};

template <typename Num>
Num evalNum(const ExprPtr& e, Ctx<Num>& ctx) {
    switch (e->kind) {
    case SxKind::Const:
        return toNum<Num>(e->value);
    case SxKind::Sym: {
        auto it = ctx.scalars.find(e->name);
        if (it == ctx.scalars.end()) throw Error("unbound symbol '" + e->name + "'");
        return it->second;
    }
    case SxKind::ArrayRef: {
        if (!ctx.arrays) throw Error("no arrays bound");
        auto it = ctx.arrays->find(e->name);
        if (it == ctx.arrays->end()) throw Error("unbound array '" + e->name + "'");
        long i = asIndex(evalNum(e->kids[0], ctx));
        if (i < 0 || i >= static_cast<long>(it->second.size()))
            throw Error("array index out of range: " + e->name + "[" + std::to_string(i) + "]");
        return it->second[static_cast<size_t>(i)];
    }
    case SxKind::Add: {
        Num acc = evalNum(e->kids[0], ctx);
        for (size_t i = 1; i < e->kids.size(); ++i) acc += evalNum(e->kids[i], ctx);
        ctx.op(static_cast<long>(e->kids.size()) - 1);
        return acc;
    }
    case SxKind::Mul: {
        Num acc = evalNum(e->kids[0], ctx);
        for (size_t i = 1; i < e->kids.size(); ++i) acc *= evalNum(e->kids[i], ctx);
        ctx.op(static_cast<long>(e->kids.size()) - 1);
        return acc;
    }
    case SxKind::Pow: {
        Num b = evalNum(e->kids[0], ctx);
        Num x = evalNum(e->kids[1], ctx);
        ctx.op();
        return numPow<Num>(b, x);
    }
    case SxKind::Call: {
        std::vector<Num> args;
        for (const auto& k : e->kids) args.push_back(evalNum(k, ctx));
        ctx.op();
        return applyIntrinsic(e->intrinsic, args);
    }
    case SxKind::Cmp: {
        Num a = evalNum(e->kids[0], ctx);
        Num b = evalNum(e->kids[1], ctx);
        ctx.op();
        return cmpApply(e->cmp, a, b) ? Num(1) : Num(0);
    }
    case SxKind::Select: {
        Num cond = evalNum(e->kids[0], ctx);
        ctx.op();
        return cond != Num(0) ? evalNum(e->kids[1], ctx) : evalNum(e->kids[2], ctx);
    }
    case SxKind::Phi: {
        if (e->phiKind == PhiKind::LoopEntry) {
            auto it = ctx.carried.find(e->site);
            if (it == ctx.carried.end())
                throw Error("loop-entry phi evaluated outside its loop");
            return it->second;
        }
        if (e->phiKind == PhiKind::LoopExit) {
            if (!ctx.trace) throw Error("loop-exit phi needs a trace");
            long trip = ctx.trace->tripOf(e->site);
            if (trip < 0) throw Error("no trip count recorded for loop");
            if (trip == 0) return evalNum(e->kids[0], ctx);
            auto it = ctx.trace->exitEdges.find(e->site);
            size_t arg = it != ctx.trace->exitEdges.end() && !it->second.empty()
                             ? static_cast<size_t>(it->second[0])
                             : e->kids.size() - 1;
            return evalNum(e->kids[arg], ctx);
        }
        // Normal phi: recorded decision, one per dynamic instance; sites
        // encoded as -(s+2) are complements (F3) of site s
        if (!ctx.trace) throw Error("normal phi needs a recorded decision");
        bool complement = e->site < -1;
        int realSite = complement ? -(e->site + 2) : e->site;
        auto it = ctx.trace->decisions.find(realSite);
        if (it == ctx.trace->decisions.end() || it->second.empty())
            throw Error("no decision recorded for phi site " + std::to_string(realSite));
        int inst = ctx.siteInstance[realSite]++;
        int idx = it->second[static_cast<size_t>(inst) < it->second.size()
                                 ? static_cast<size_t>(inst)
                                 : it->second.size() - 1];
        if (complement) idx = 1 - idx;
        return evalNum(e->kids[static_cast<size_t>(idx)], ctx);
    }
    case SxKind::LoopBody: {
        long n = asIndex(evalNum(e->kids[0], ctx));
        if (n < 0) n = 0;
        const SymExpr* entry = findEntryPhi<Num>(e->kids[1], e->site);
        if (!entry) {
            if (n == 0) throw Error("zero-trip loop body without an entry phi");
            ctx.scalars["@it" + std::to_string(e->site)] = Num(n - 1);
            Num v = evalNum(e->kids[1], ctx);
            ctx.scalars.erase("@it" + std::to_string(e->site));
            return v;
        }
        Num state = evalNum(entry->kids[0], ctx);
        std::string iterSym = "@it" + std::to_string(e->site);
        bool hadCarried = ctx.carried.count(e->site) > 0;
        Num oldCarried = hadCarried ? ctx.carried[e->site] : Num(0);
        SavedEntry<Num> save(ctx.scalars, iterSym);
        for (long j = 0; j < n; ++j) {
            ctx.carried[e->site] = state;
            ctx.scalars[iterSym] = Num(j);
            state = evalNum(e->kids[1], ctx);
        }
        if (hadCarried)
            ctx.carried[e->site] = oldCarried;
        else
            ctx.carried.erase(e->site);
        return state;
    }
    case SxKind::Sum:
    case SxKind::Prod: {
        long lo = asIndex(evalNum(e->kids[0], ctx));
        long hi = asIndex(evalNum(e->kids[1], ctx));
        bool isSum = e->kind == SxKind::Sum;
        Num acc = isSum ? Num(0) : Num(1);
        SavedEntry<Num> save(ctx.scalars, e->name);
        for (long i = lo; i <= hi; ++i) {
            ctx.scalars[e->name] = Num(i);
            Num v = evalNum(e->kids[2], ctx);
            if (isSum)
                acc += v;
            else
                acc *= v;
            ctx.op();
        }
        return acc;
    }
    case SxKind::IterApply: {
        long n = asIndex(evalNum(e->kids[1], ctx));
        if (n < 0) n = 0;
        Num x = evalNum(e->kids[2], ctx);
        SavedEntry<Num> save(ctx.scalars, e->name);
        for (long j = 0; j < n; ++j) {
            ctx.scalars[e->name] = x;
            x = evalNum(e->kids[0], ctx);
        }
        return x;
    }
    case SxKind::IterInstance:
        throw Error("per-iteration instance requires a loop harness");
    case SxKind::ExitValue:
        throw Error("exit value requires a loop harness");
    }
    throw Error("unreachable expression kind");
}

} // namespace

double evalDouble(const ExprPtr& e, EvalEnv& env) {
    Ctx<double> ctx;
    ctx.scalars = env.scalars;
    ctx.arrays = &env.arrays;
    ctx.trace = env.trace;
    ctx.counters = env.counters;
    return evalNum(e, ctx);
}

Rational evalRational(const ExprPtr& e, RatEnv& env) {
    Ctx<Rational> ctx;
    ctx.scalars = env.scalars;
    ctx.arrays = &env.arrays;
    ctx.trace = env.trace;
    return evalNum(e, ctx);
}

// --- printing ----------------------------------------------------------------

namespace {

// precedence: 0 none, 1 add, 2 mul, 3 pow/unary, 4 atom
void printInto(std::ostream& os, const ExprPtr& e, int parent);

void printParen(std::ostream& os, const ExprPtr& e, int prec, int parent) {
    if (prec < parent) {
        os << '(';
        printInto(os, e, 0);
        os << ')';
    } else {
        printInto(os, e, parent);
    }
}

void printMul(std::ostream& os, const ExprPtr& e, int parent) {
    // split numerator/denominator on negative constant exponents
    std::vector<ExprPtr> num, den;
    Rational coeff(1);
    for (const auto& k : e->kids) {
        if (k->kind == SxKind::Const) {
            coeff *= k->value;
        } else if (k->kind == SxKind::Pow && k->kids[1]->kind == SxKind::Const &&
                   k->kids[1]->value < 0) {
            den.push_back(sx::pow(k->kids[0], sx::c(-k->kids[1]->value)));
        } else {
            num.push_back(k);
        }
    }
    bool negate = coeff < 0;
    if (negate) coeff = -coeff;
    bool frac = !den.empty();
    bool parens = (negate && parent > 1) || 2 < parent;
    if (parens) os << '(';
    if (negate) os << '-';
    std::ostringstream numOs;
    bool first = true;
    if (coeff != 1 || num.empty()) {
        numOs << ratPrettyStr(coeff);
        first = false;
    }
    for (const auto& k : num) {
        if (!first) numOs << "*";
        printParen(numOs, k, k->kind == SxKind::Add ? 1 : k->kind == SxKind::Mul ? 2 : 4, 2);
        first = false;
    }
    os << numOs.str();
    if (frac) {
        os << "/";
        if (den.size() == 1 && den[0]->kind != SxKind::Add && den[0]->kind != SxKind::Mul) {
            printParen(os, den[0], 4, 3);
        } else {
            os << '(';
            for (size_t i = 0; i < den.size(); ++i) {
                if (i) os << "*";
                printParen(os, den[i], den[i]->kind == SxKind::Add ? 1 : 2, 2);
            }
            os << ')';
        }
    }
    if (parens) os << ')';
}

void printInto(std::ostream& os, const ExprPtr& e, int parent) {
    switch (e->kind) {
    case SxKind::Const:
        if (e->value < 0 && parent > 0) {
            os << '(' << ratPrettyStr(e->value) << ')';
        } else {
            os << ratPrettyStr(e->value);
        }
        return;
    case SxKind::Sym:
        os << e->name;
        return;
    case SxKind::ArrayRef:
        os << e->name << '[';
        printInto(os, e->kids[0], 0);
        os << ']';
        return;
    case SxKind::Add: {
        bool parens = 1 < parent;
        if (parens) os << '(';
        for (size_t i = 0; i < e->kids.size(); ++i) {
            const auto& t = e->kids[i];
            Rational coeff(1);
            if (t->kind == SxKind::Const) coeff = t->value;
            if (t->kind == SxKind::Mul && t->kids[0]->kind == SxKind::Const)
                coeff = t->kids[0]->value;
            if (i > 0) os << (coeff < 0 ? " - " : " + ");
            if (i > 0 && coeff < 0) {
                // reprint with sign stripped
                if (t->kind == SxKind::Const) {
                    os << ratPrettyStr(-t->value);
                } else {
                    printInto(os, sx::neg(t), 2);
                }
            } else {
                printInto(os, t, 1);
            }
        }
        if (parens) os << ')';
        return;
    }
    case SxKind::Mul:
        printMul(os, e, parent);
        return;
    case SxKind::Pow: {
        if (e->kids[1]->kind == SxKind::Const && e->kids[1]->value == Rational(1, 2)) {
            os << "sqrt(";
            printInto(os, e->kids[0], 0);
            os << ')';
            return;
        }
        bool parens = 3 < parent;
        if (parens) os << '(';
        printParen(os, e->kids[0], e->kids[0]->kind == SxKind::Sym ||
                                           e->kids[0]->kind == SxKind::Const ||
                                           e->kids[0]->kind == SxKind::ArrayRef ||
                                           e->kids[0]->kind == SxKind::Call
                                       ? 4
                                       : 0,
                   4);
        os << '^';
        printParen(os, e->kids[1], e->kids[1]->kind == SxKind::Sym ||
                                           (e->kids[1]->kind == SxKind::Const &&
                                            e->kids[1]->value >= 0 && isInteger(e->kids[1]->value))
                                       ? 4
                                       : 0,
                   4);
        if (parens) os << ')';
        return;
    }
    case SxKind::Call:
        os << intrinsicName(e->intrinsic) << '(';
        for (size_t i = 0; i < e->kids.size(); ++i) {
            if (i) os << ", ";
            printInto(os, e->kids[i], 0);
        }
        os << ')';
        return;
    case SxKind::Cmp:
        os << '(';
        printInto(os, e->kids[0], 0);
        os << ' ' << cmpOpName(e->cmp) << ' ';
        printInto(os, e->kids[1], 0);
        os << ')';
        return;
    case SxKind::Select:
        os << "select(";
        printInto(os, e->kids[0], 0);
        os << ", ";
        printInto(os, e->kids[1], 0);
        os << ", ";
        printInto(os, e->kids[2], 0);
        os << ')';
        return;
    case SxKind::Phi: {
        const char* tag = e->phiKind == PhiKind::Normal      ? "phi"
                          : e->phiKind == PhiKind::LoopEntry ? "phiL"
                                                             : "phiX";
        os << tag << e->site << '(';
        for (size_t i = 0; i < e->kids.size(); ++i) {
            if (i) os << ", ";
            printInto(os, e->kids[i], 0);
        }
        os << ')';
        return;
    }
    case SxKind::LoopBody:
        os << "L" << e->site << "^";
        printParen(os, e->kids[0], e->kids[0]->kind == SxKind::Sym ||
                                           e->kids[0]->kind == SxKind::Const
                                       ? 4
                                       : 0,
                   4);
        os << "<" << e->name << " := ";
        printInto(os, e->kids[1], 0);
        os << ">";
        return;
    case SxKind::Sum:
    case SxKind::Prod:
        os << (e->kind == SxKind::Sum ? "sum(" : "prod(") << e->name << " = ";
        printInto(os, e->kids[0], 0);
        os << "..";
        printInto(os, e->kids[1], 0);
        os << ", ";
        printInto(os, e->kids[2], 0);
        os << ')';
        return;
    case SxKind::IterApply:
        os << "iter[" << e->name << " -> ";
        printInto(os, e->kids[0], 0);
        os << "]^";
        printParen(os, e->kids[1], e->kids[1]->kind == SxKind::Sym ||
                                           e->kids[1]->kind == SxKind::Const
                                       ? 4
                                       : 0,
                   4);
        os << '(';
        printInto(os, e->kids[2], 0);
        os << ')';
        return;
    case SxKind::IterInstance:
        os << e->name << "^(";
        printInto(os, e->kids[0], 0);
        os << ")@L" << e->site;
        return;
    case SxKind::ExitValue:
        os << e->name << "@exit(L" << e->site << ")";
        return;
    }
}

} // namespace

std::string printExpr(const ExprPtr& e) {
    std::ostringstream os;
    printInto(os, e, 0);
    return os.str();
}

namespace {

nlohmann::json exprJsonRec(const ExprPtr& e) {
    using nlohmann::json;
    json j;
    switch (e->kind) {
    case SxKind::Const: j["kind"] = "const"; j["value"] = ratStr(e->value); break;
    case SxKind::Sym: j["kind"] = "sym"; j["name"] = e->name; break;
    case SxKind::ArrayRef: j["kind"] = "arrayref"; j["name"] = e->name; break;
    case SxKind::Add: j["kind"] = "add"; break;
    case SxKind::Mul: j["kind"] = "mul"; break;
    case SxKind::Pow: j["kind"] = "pow"; break;
    case SxKind::Call: j["kind"] = "call"; j["name"] = intrinsicName(e->intrinsic); break;
    case SxKind::Cmp: j["kind"] = "cmp"; j["op"] = cmpOpName(e->cmp); break;
    case SxKind::Select: j["kind"] = "select"; break;
    case SxKind::Phi:
        j["kind"] = "phi";
        j["phi"] = e->phiKind == PhiKind::Normal      ? "normal"
                   : e->phiKind == PhiKind::LoopEntry ? "loop-entry"
                                                      : "loop-exit";
        j["site"] = e->site;
        break;
    case SxKind::LoopBody: j["kind"] = "loop"; j["loop"] = e->site; j["name"] = e->name; break;
    case SxKind::Sum: j["kind"] = "sum"; j["index"] = e->name; break;
    case SxKind::Prod: j["kind"] = "prod"; j["index"] = e->name; break;
    case SxKind::IterApply: j["kind"] = "iter"; j["hole"] = e->name; break;
    case SxKind::IterInstance: j["kind"] = "iter-instance"; j["loop"] = e->site; j["name"] = e->name; break;
    case SxKind::ExitValue: j["kind"] = "exit-value"; j["loop"] = e->site; j["name"] = e->name; break;
    }
    if (!e->kids.empty()) {
        json kids = json::array();
        for (const auto& k : e->kids) kids.push_back(exprJsonRec(k));
        j["children"] = std::move(kids);
    }
    return j;
}

} // namespace

std::string exprToJson(const ExprPtr& e) { return exprJsonRec(e).dump(2); }

} // namespace phigrad
