#include "phigrad/frontend.hpp"

#include <cctype>
#include <utility>

namespace phigrad {

namespace {

enum class Tok {
    End, Ident, Number, Keyword,
    LParen, RParen, LBrace, RBrace, LBracket, RBracket,
    Comma, Semi, Assign, Plus, Minus, Star, Slash, DotDot,
    Lt, Le, Gt, Ge, EqEq, Ne,
};

struct Token {
    Tok kind = Tok::End;
    std::string text;
    Rational number;
    Span span;
    bool startsLine = false; // first token on its source line
};

bool isKeyword(const std::string& s) {
    return s == "fn" || s == "active" || s == "if" || s == "else" || s == "for" ||
           s == "in" || s == "while" || s == "break" || s == "return";
}

class Lexer {
  public:
    explicit Lexer(const std::string& src) : src_(src) {}

    std::vector<Token> run() {
        std::vector<Token> out;
        bool lineStart = true;
        while (true) {
            skipSpace(lineStart);
            Token t;
            t.span = {line_, col_};
            t.startsLine = lineStart;
            lineStart = false;
            if (pos_ >= src_.size()) {
                t.kind = Tok::End;
                out.push_back(t);
                return out;
            }
            char c = src_[pos_];
            if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
                while (pos_ < src_.size() &&
                       (std::isalnum(static_cast<unsigned char>(src_[pos_])) ||
                        src_[pos_] == '_'))
                    t.text += take();
                t.kind = isKeyword(t.text) ? Tok::Keyword : Tok::Ident;
            } else if (std::isdigit(static_cast<unsigned char>(c)) ||
                       (c == '.' && pos_ + 1 < src_.size() &&
                        std::isdigit(static_cast<unsigned char>(src_[pos_ + 1])))) {
                while (pos_ < src_.size() &&
                       (std::isdigit(static_cast<unsigned char>(src_[pos_])) ||
                        src_[pos_] == '.' || src_[pos_] == 'e' || src_[pos_] == 'E' ||
                        ((src_[pos_] == '+' || src_[pos_] == '-') && !t.text.empty() &&
                         (t.text.back() == 'e' || t.text.back() == 'E')))) {
                    if (src_[pos_] == '.' && pos_ + 1 < src_.size() && src_[pos_ + 1] == '.')
                        break; // range operator
                    t.text += take();
                }
                auto r = parseRational(t.text);
                if (!r) throw Error(t.span, "malformed number '" + t.text + "'");
                t.kind = Tok::Number;
                t.number = *r;
            } else {
                t.kind = punct(t);
            }
            out.push_back(std::move(t));
        }
    }

  private:
    char take() {
        char c = src_[pos_++];
        if (c == '\n') {
            ++line_;
            col_ = 1;
        } else {
            ++col_;
        }
        return c;
    }

    void skipSpace(bool& lineStart) {
        while (pos_ < src_.size()) {
            char c = src_[pos_];
            if (c == '#') {
                while (pos_ < src_.size() && src_[pos_] != '\n') take();
            } else if (c == '\n') {
                lineStart = true;
                take();
            } else if (std::isspace(static_cast<unsigned char>(c))) {
                take();
            } else {
                break;
            }
        }
    }

    Tok punct(Token& t) {
        char c = take();
        t.text = c;
        switch (c) {
        case '(': return Tok::LParen;
        case ')': return Tok::RParen;
        case '{': return Tok::LBrace;
        case '}': return Tok::RBrace;
        case '[': return Tok::LBracket;
        case ']': return Tok::RBracket;
        case ',': return Tok::Comma;
        case ';': return Tok::Semi;
        case '+': return Tok::Plus;
        case '-': return Tok::Minus;
        case '*': return Tok::Star;
        case '/': return Tok::Slash;
        case '.':
            if (pos_ < src_.size() && src_[pos_] == '.') {
                t.text += take();
                return Tok::DotDot;
            }
            break;
        case '=':
            if (pos_ < src_.size() && src_[pos_] == '=') {
                t.text += take();
                return Tok::EqEq;
            }
            return Tok::Assign;
        case '<':
            if (pos_ < src_.size() && src_[pos_] == '=') {
                t.text += take();
                return Tok::Le;
            }
            return Tok::Lt;
        case '>':
            if (pos_ < src_.size() && src_[pos_] == '=') {
                t.text += take();
                return Tok::Ge;
            }
            return Tok::Gt;
        case '!':
            if (pos_ < src_.size() && src_[pos_] == '=') {
                t.text += take();
                return Tok::Ne;
            }
            break;
        default:
            break;
        }
        throw Error(t.span, std::string("unexpected character '") + c + "'");
    }

    const std::string& src_;
    size_t pos_ = 0;
    int line_ = 1;
    int col_ = 1;
};

class Parser {
  public:
    explicit Parser(std::vector<Token> toks) : toks_(std::move(toks)) {}

    Program run() {
        Program p;
        while (!at(Tok::End)) p.functions.push_back(function());
        if (p.functions.empty()) throw Error(cur().span, "expected 'fn'");
        return p;
    }

  private:
    const Token& cur() const { return toks_[idx_]; }
    const Token& peek() const { return toks_[idx_ + 1 < toks_.size() ? idx_ + 1 : idx_]; }
    bool at(Tok k) const { return cur().kind == k; }
    bool atKeyword(const char* kw) const {
        return cur().kind == Tok::Keyword && cur().text == kw;
    }
    Token eat() { return toks_[idx_++]; }
    Token expect(Tok k, const char* what) {
        if (!at(k)) throw Error(cur().span, std::string("expected ") + what);
        return eat();
    }
    void expectKeyword(const char* kw) {
        if (!atKeyword(kw)) throw Error(cur().span, std::string("expected '") + kw + "'");
        eat();
    }

    // ';' or a line break terminate simple statements.
    void terminator() {
        if (at(Tok::Semi)) {
            eat();
            return;
        }
        if (at(Tok::RBrace) || at(Tok::End) || cur().startsLine) return;
        throw Error(cur().span, "expected ';' or newline");
    }

    FunctionDef function() {
        FunctionDef f;
        f.span = cur().span;
        expectKeyword("fn");
        f.name = expect(Tok::Ident, "function name").text;
        expect(Tok::LParen, "'('");
        if (!at(Tok::RParen)) {
            while (true) {
                Param prm;
                prm.span = cur().span;
                if (atKeyword("active")) {
                    eat();
                    prm.isActive = true;
                }
                prm.name = expect(Tok::Ident, "parameter name").text;
                if (at(Tok::LBracket)) {
                    eat();
                    expect(Tok::RBracket, "']'");
                    prm.isArray = true;
                }
                f.params.push_back(std::move(prm));
                if (!at(Tok::Comma)) break;
                eat();
            }
        }
        expect(Tok::RParen, "')'");
        expect(Tok::LBrace, "'{'");
        bool sawReturn = false;
        while (!at(Tok::RBrace)) {
            if (atKeyword("return")) {
                Span sp = eat().span;
                f.ret = expr();
                (void)sp;
                terminator();
                sawReturn = true;
                if (!at(Tok::RBrace))
                    throw Error(cur().span, "return must be the final statement");
                break;
            }
            f.body.push_back(stmt());
        }
        if (!sawReturn) throw Error(cur().span, "function body must end with 'return'");
        expect(Tok::RBrace, "'}'");
        return f;
    }

    std::vector<StmtPtr> block() {
        expect(Tok::LBrace, "'{'");
        std::vector<StmtPtr> body;
        while (!at(Tok::RBrace)) {
            if (atKeyword("return"))
                throw Error(cur().span, "return must be the final statement");
            body.push_back(stmt());
        }
        eat();
        return body;
    }

    CondPtr condition() {
        auto c = std::make_shared<Cond>();
        c->span = cur().span;
        c->lhs = expr();
        switch (cur().kind) {
        case Tok::Lt: c->op = CmpOp::Lt; break;
        case Tok::Le: c->op = CmpOp::Le; break;
        case Tok::Gt: c->op = CmpOp::Gt; break;
        case Tok::Ge: c->op = CmpOp::Ge; break;
        case Tok::EqEq: c->op = CmpOp::Eq; break;
        case Tok::Ne: c->op = CmpOp::Ne; break;
        default:
            throw Error(cur().span, "expected comparison operator");
        }
        eat();
        c->rhs = expr();
        return c;
    }

    StmtPtr stmt() {
        auto s = std::make_shared<Stmt>();
        s->span = cur().span;
        if (atKeyword("if")) {
            eat();
            s->kind = StmtKind::If;
            expect(Tok::LParen, "'('");
            s->cond = condition();
            expect(Tok::RParen, "')'");
            s->body = block();
            if (atKeyword("else")) {
                eat();
                s->elseBody = block();
            }
            return s;
        }
        if (atKeyword("for")) {
            eat();
            s->kind = StmtKind::For;
            s->name = expect(Tok::Ident, "loop index").text;
            expectKeyword("in");
            s->lo = expr();
            expect(Tok::DotDot, "'..'");
            s->hi = expr();
            s->body = block();
            return s;
        }
        if (atKeyword("while")) {
            eat();
            s->kind = StmtKind::While;
            expect(Tok::LParen, "'('");
            s->cond = condition();
            expect(Tok::RParen, "')'");
            s->body = block();
            return s;
        }
        if (atKeyword("break")) {
            eat();
            s->kind = StmtKind::Break;
            terminator();
            return s;
        }
        if (at(Tok::Ident) && peek().kind == Tok::Assign) {
            s->kind = StmtKind::Assign;
            s->name = eat().text;
            eat(); // '='
            s->value = expr();
            terminator();
            return s;
        }
        throw Error(cur().span, "expected statement");
    }

    AExprPtr expr() {
        AExprPtr lhs = term();
        while (at(Tok::Plus) || at(Tok::Minus)) {
            BinOp op = at(Tok::Plus) ? BinOp::Add : BinOp::Sub;
            Span sp = eat().span;
            lhs = aBinary(op, lhs, term(), sp);
        }
        return lhs;
    }

    AExprPtr term() {
        AExprPtr lhs = factor();
        while (at(Tok::Star) || at(Tok::Slash)) {
            BinOp op = at(Tok::Star) ? BinOp::Mul : BinOp::Div;
            Span sp = eat().span;
            lhs = aBinary(op, lhs, factor(), sp);
        }
        return lhs;
    }

    AExprPtr factor() {
        if (at(Tok::Minus)) {
            Span sp = eat().span;
            return aUnary(UnOp::Neg, factor(), sp);
        }
        return atom();
    }

    AExprPtr atom() {
        if (at(Tok::Number)) {
            Token t = eat();
            return aConst(t.number, t.span);
        }
        if (at(Tok::LParen)) {
            eat();
            AExprPtr e = expr();
            expect(Tok::RParen, "')'");
            return e;
        }
        if (at(Tok::Ident)) {
            Token t = eat();
            if (at(Tok::LBracket)) {
                eat();
                AExprPtr idx = expr();
                expect(Tok::RBracket, "']'");
                return aIndex(t.text, idx, t.span);
            }
            if (at(Tok::LParen)) {
                auto op = intrinsicByName(t.text);
                if (!op) throw Error(t.span, "unknown intrinsic '" + t.text + "'");
                eat();
                std::vector<AExprPtr> args;
                if (!at(Tok::RParen)) {
                    args.push_back(expr());
                    while (at(Tok::Comma)) {
                        eat();
                        args.push_back(expr());
                    }
                }
                expect(Tok::RParen, "')'");
                if (static_cast<int>(args.size()) != intrinsicArity(*op))
                    throw Error(t.span, std::string(intrinsicName(*op)) + " expects " +
                                            std::to_string(intrinsicArity(*op)) +
                                            " argument(s)");
                return aCall(*op, std::move(args), t.span);
            }
            return aVar(t.text, t.span);
        }
        throw Error(cur().span, "expected expression");
    }

    std::vector<Token> toks_;
    size_t idx_ = 0;
};

} // namespace

Program parseProgram(const std::string& source) {
    Lexer lex(source);
    Parser parser(lex.run());
    return parser.run();
}

Program parseAndValidate(const std::string& source) {
    Program p = parseProgram(source);
    auto diags = validate(p);
    if (!diags.empty()) throw Error(diags.front().span, diags.front().message);
    return p;
}

} // namespace phigrad
