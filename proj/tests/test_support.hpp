#ifndef PHIGRAD_TEST_SUPPORT_HPP
#define PHIGRAD_TEST_SUPPORT_HPP

#include "phigrad/frontend.hpp"
#include "phigrad/tapead.hpp"

#include <cmath>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace phigrad::test {

// Reference interpreter over the AST, independent of the SSA pipeline.
class AstInterp {
  public:
    AstInterp(const Program& p, const std::string& fn) : fn_(*p.find(fn)) {}

    double run(const Inputs& in) {
        env_.clear();
        arrays_ = &in.arrays;
        for (const auto& prm : fn_.params)
            if (!prm.isArray) env_[prm.name] = in.scalars.at(prm.name);
        execBody(fn_.body);
        return eval(*fn_.ret);
    }

  private:
    bool execBody(const std::vector<StmtPtr>& body) { // false = break unwinding
        for (const auto& sp : body) {
            const Stmt& s = *sp;
            switch (s.kind) {
            case StmtKind::Assign:
                env_[s.name] = eval(*s.value);
                break;
            case StmtKind::If:
                if (!execBody(evalCond(*s.cond) ? s.body : s.elseBody)) return false;
                break;
            case StmtKind::For: {
                long lo = std::lround(eval(*s.lo));
                long hi = std::lround(eval(*s.hi));
                for (long i = lo; i < hi; ++i) {
                    env_[s.name] = static_cast<double>(i);
                    execBody(s.body);
                }
                env_.erase(s.name);
                break;
            }
            case StmtKind::While:
                while (evalCond(*s.cond))
                    if (!execBody(s.body)) break;
                break;
            case StmtKind::Break:
                return false;
            }
        }
        return true;
    }

    bool evalCond(const Cond& c) {
        double a = eval(*c.lhs), b = eval(*c.rhs);
        switch (c.op) {
        case CmpOp::Lt: return a < b;
        case CmpOp::Le: return a <= b;
        case CmpOp::Gt: return a > b;
        case CmpOp::Ge: return a >= b;
        case CmpOp::Eq: return a == b;
        case CmpOp::Ne: return a != b;
        }
        return false;
    }

    double eval(const AExpr& e) {
        switch (e.kind) {
        case AExprKind::Const:
            return toDouble(e.value);
        case AExprKind::Var:
            return env_.at(e.name);
        case AExprKind::Index: {
            long i = std::lround(eval(*e.args[0]));
            return arrays_->at(e.name).at(static_cast<size_t>(i));
        }
        case AExprKind::Unary:
            return -eval(*e.args[0]);
        case AExprKind::Binary: {
            double a = eval(*e.args[0]), b = eval(*e.args[1]);
            switch (e.bop) {
            case BinOp::Add: return a + b;
            case BinOp::Sub: return a - b;
            case BinOp::Mul: return a * b;
            case BinOp::Div: return a / b;
            }
            return 0;
        }
        case AExprKind::Call: {
            double a = eval(*e.args[0]);
            switch (e.intrinsic) {
            case Intrinsic::Sin: return std::sin(a);
            case Intrinsic::Cos: return std::cos(a);
            case Intrinsic::Exp: return std::exp(a);
            case Intrinsic::Log: return std::log(a);
            case Intrinsic::Sqrt: return std::sqrt(a);
            case Intrinsic::Relu: return a > 0 ? a : 0.0;
            case Intrinsic::Abs: return std::fabs(a);
            case Intrinsic::Pow: return std::pow(a, eval(*e.args[1]));
            case Intrinsic::Min: {
                double b = eval(*e.args[1]);
                return a <= b ? a : b;
            }
            case Intrinsic::Max: {
                double b = eval(*e.args[1]);
                return a >= b ? a : b;
            }
            }
            return 0;
        }
        }
        return 0;
    }

    const FunctionDef& fn_;
    std::map<std::string, double> env_;
    const std::map<std::string, std::vector<double>>* arrays_ = nullptr;
};

// Seeded random DPL program generator. Produces validating programs with
// for loops, top-level while loops with conditional breaks, and if/else.
class ProgramGen {
  public:
    // simpleLoops: loop bodies accumulate expressions over the parameters
    // only, so every recurrence is univariate and elevatable
    explicit ProgramGen(unsigned seed, bool simpleLoops = false)
        : rng_(seed), simpleLoops_(simpleLoops) {}

    // returns source text; active scalar params x0, x1
    std::string generate() {
        src_.str("");
        vars_ = {"x0", "x1", "c0"};
        counter_ = 0;
        src_ << "fn f(active x0, active x1, c0) {\n";
        int n = 2 + static_cast<int>(rng_() % 4);
        for (int i = 0; i < n; ++i) stmt(1, true);
        src_ << "  return " << pickVar() << ";\n}\n";
        return src_.str();
    }

    Inputs randomInputs() {
        Inputs in;
        in.scalars["x0"] = uniform(-1.5, 1.5);
        in.scalars["x1"] = uniform(-1.5, 1.5);
        in.scalars["c0"] = uniform(-1.0, 1.0);
        return in;
    }

  private:
    double uniform(double lo, double hi) {
        return lo + (hi - lo) * (static_cast<double>(rng_()) /
                                 static_cast<double>(std::mt19937::max()));
    }

    std::string fresh() { return "v" + std::to_string(counter_++); }

    std::string pickVar() { return vars_[rng_() % vars_.size()]; }

    std::string pickParam() {
        static const char* params[3] = {"x0", "x1", "c0"};
        return params[rng_() % 3];
    }

    std::string expr(int depth) {
        if (depth <= 0 || rng_() % 3 == 0) {
            switch (rng_() % 3) {
            case 0: return pickVar();
            case 1: {
                std::ostringstream os;
                os << (static_cast<long>(rng_() % 9) - 4) * 0.25;
                return os.str();
            }
            default: return pickVar();
            }
        }
        switch (rng_() % 6) {
        case 0: return "(" + expr(depth - 1) + " + " + expr(depth - 1) + ")";
        case 1: return "(" + expr(depth - 1) + " - " + expr(depth - 1) + ")";
        case 2: return "(" + expr(depth - 1) + " * " + expr(depth - 1) + ")";
        case 3: return "sin(" + expr(depth - 1) + ")";
        case 4: return "cos(" + expr(depth - 1) + ")";
        default: return "(0.5 * " + expr(depth - 1) + ")";
        }
    }

    std::string loopExpr() {
        if (!simpleLoops_) return expr(1);
        switch (rng_() % 4) {
        case 0: return pickParam();
        case 1: return "(" + pickParam() + " * " + pickParam() + ")";
        case 2: return "sin(" + pickParam() + ")";
        default: return "0.25";
        }
    }

    void indent(int level) { src_ << std::string(static_cast<size_t>(level) * 2, ' '); }

    void stmt(int level, bool allowLoops) {
        unsigned pick = rng_() % 10;
        if (!allowLoops && pick >= 7) pick = rng_() % 7;
        if (pick < 5) { // assignment
            std::string v = rng_() % 2 == 0 && level == 1 ? fresh() : pickVar();
            bool isNew = std::find(vars_.begin(), vars_.end(), v) == vars_.end();
            indent(level);
            src_ << v << " = " << expr(2) << ";\n";
            if (isNew) vars_.push_back(v);
        } else if (pick < 7) { // if/else (both assign the same existing var)
            std::string v = pickVar();
            indent(level);
            src_ << "if (" << expr(1) << " > " << expr(1) << ") {\n";
            indent(level + 1);
            src_ << v << " = " << expr(2) << ";\n";
            indent(level);
            src_ << "} else {\n";
            indent(level + 1);
            src_ << v << " = " << expr(2) << ";\n";
            indent(level);
            src_ << "}\n";
        } else if (pick < 9) { // for loop accumulating into an existing var
            std::string v = pickVar();
            std::string idx = "i" + std::to_string(counter_++);
            long trips = static_cast<long>(rng_() % 5);
            indent(level);
            src_ << "for " << idx << " in 0.." << trips << " {\n";
            vars_.push_back(idx);
            indent(level + 1);
            src_ << v << " = " << v << " + " << loopExpr() << ";\n";
            vars_.pop_back();
            indent(level);
            src_ << "}\n";
        } else { // bounded while with a conditional break (top level only)
            std::string w = fresh();
            std::string acc = pickVar();
            indent(level);
            src_ << w << " = " << (2 + rng_() % 4) << ";\n";
            vars_.push_back(w);
            indent(level);
            src_ << "while (" << w << " > 0) {\n";
            indent(level + 1);
            src_ << acc << " = " << acc << " + " << loopExpr() << ";\n";
            if (rng_() % 2 == 0) {
                indent(level + 1);
                src_ << "if (" << acc << " > " << (1 + rng_() % 3) << ") {\n";
                indent(level + 2);
                src_ << "break;\n";
                indent(level + 1);
                src_ << "}\n";
            }
            indent(level + 1);
            src_ << w << " = " << w << " - 1;\n";
            indent(level);
            src_ << "}\n";
        }
    }

    std::mt19937 rng_;
    bool simpleLoops_ = false;
    std::ostringstream src_;
    std::vector<std::string> vars_;
    int counter_ = 0;
};

// relative error with an absolute floor for tiny references
inline double relError(double got, double want, double floor = 1e-9) {
    double scale = std::max(std::fabs(want), floor);
    return std::fabs(got - want) / scale;
}

} // namespace phigrad::test

#endif
