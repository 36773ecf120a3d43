#include "stablekit/expr.hpp"

#include <cctype>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace stablekit {

namespace {

struct FuncInfo {
    const char* name;
    int arity;
};

const FuncInfo kFuncs[] = {
    {"sin", 1}, {"cos", 1}, {"exp", 1}, {"abs", 1}, {"tanh", 1},
    {"sqrt", 1}, {"log", 1}, {"min", 2}, {"max", 2}, {"clamp", 3},
};
constexpr int kNumFuncs = 10;

int func_index(const std::string& name) {
    for (int i = 0; i < kNumFuncs; ++i)
        if (name == kFuncs[i].name) return i;
    return -1;
}

struct Token {
    enum Type { Num, Ident, Op, LParen, RParen, Comma, End } type;
    double num = 0.0;
    std::string text;
    char op = 0;
    size_t offset = 0;
};

class Lexer {
public:
    explicit Lexer(const std::string& s) : s_(s) { advance(); }

    const Token& peek() const { return tok_; }
    Token take() {
        Token t = tok_;
        advance();
        return t;
    }

private:
    void advance() {
        while (pos_ < s_.size() && std::isspace(static_cast<unsigned char>(s_[pos_]))) ++pos_;
        tok_ = Token{};
        tok_.offset = pos_;
        if (pos_ >= s_.size()) {
            tok_.type = Token::End;
            return;
        }
        const char c = s_[pos_];
        if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
            size_t end = 0;
            try {
                tok_.num = std::stod(s_.substr(pos_), &end);
            } catch (const std::exception&) {
                throw ParseError("malformed number", pos_, "number");
            }
            tok_.type = Token::Num;
            pos_ += end;
            return;
        }
        if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
            size_t end = pos_;
            while (end < s_.size() &&
                   (std::isalnum(static_cast<unsigned char>(s_[end])) || s_[end] == '_'))
                ++end;
            tok_.type = Token::Ident;
            tok_.text = s_.substr(pos_, end - pos_);
            pos_ = end;
            return;
        }
        switch (c) {
            case '+': case '-': case '*': case '/':
                tok_.type = Token::Op;
                tok_.op = c;
                break;
            case '(': tok_.type = Token::LParen; break;
            case ')': tok_.type = Token::RParen; break;
            case ',': tok_.type = Token::Comma; break;
            default:
                throw ParseError(std::string("unexpected character '") + c + "'", pos_,
                                 "operator, number, or identifier");
        }
        ++pos_;
    }

    const std::string& s_;
    size_t pos_ = 0;
    Token tok_;
};

class Parser {
public:
    explicit Parser(const std::string& s) : lex_(s) {}

    Expr::Node parse() {
        Expr::Node n = expr();
        if (lex_.peek().type != Token::End)
            throw ParseError("trailing input", lex_.peek().offset, "end of input");
        return n;
    }

private:
    Expr::Node expr() {
        Expr::Node lhs = term();
        while (lex_.peek().type == Token::Op &&
               (lex_.peek().op == '+' || lex_.peek().op == '-')) {
            const char op = lex_.take().op;
            Expr::Node rhs = term();
            lhs = binary(op, std::move(lhs), std::move(rhs));
        }
        return lhs;
    }

    Expr::Node term() {
        Expr::Node lhs = unary();
        while (lex_.peek().type == Token::Op &&
               (lex_.peek().op == '*' || lex_.peek().op == '/')) {
            const char op = lex_.take().op;
            Expr::Node rhs = unary();
            lhs = binary(op, std::move(lhs), std::move(rhs));
        }
        return lhs;
    }

    Expr::Node unary() {
        if (lex_.peek().type == Token::Op && lex_.peek().op == '-') {
            lex_.take();
            Expr::Node n;
            n.kind = Expr::Kind::Unary;
            n.op = '-';
            n.args.push_back(unary());
            return n;
        }
        return primary();
    }

    Expr::Node primary() {
        const Token t = lex_.take();
        if (t.type == Token::Num) {
            Expr::Node n;
            n.kind = Expr::Kind::Number;
            n.value = t.num;
            return n;
        }
        if (t.type == Token::LParen) {
            Expr::Node inner = expr();
            expect_rparen();
            return inner;
        }
        if (t.type == Token::Ident) {
            if (lex_.peek().type == Token::LParen) {
                const int fi = func_index(t.text);
                if (fi < 0)
                    throw ParseError("unknown function '" + t.text + "'", t.offset,
                                     "sin, cos, exp, abs, tanh, sqrt, log, min, max, clamp");
                lex_.take();  // '('
                Expr::Node n;
                n.kind = Expr::Kind::Call;
                n.func = fi;
                n.args.push_back(expr());
                while (lex_.peek().type == Token::Comma) {
                    lex_.take();
                    n.args.push_back(expr());
                }
                expect_rparen();
                if (static_cast<int>(n.args.size()) != kFuncs[fi].arity)
                    throw ParseError("function '" + t.text + "' takes " +
                                         std::to_string(kFuncs[fi].arity) + " argument(s)",
                                     t.offset);
                return n;
            }
            if (t.text == "x1" || t.text == "x") return var_node(0);
            if (t.text == "x2" || t.text == "y") return var_node(1);
            if (t.text == "t") return var_node(2);
            throw ParseError("unknown identifier '" + t.text + "'", t.offset,
                             "x1, x2, t, or a function name");
        }
        throw ParseError("unexpected token", t.offset, "number, identifier, '(' or '-'");
    }

    void expect_rparen() {
        const Token t = lex_.take();
        if (t.type != Token::RParen)
            throw ParseError("unbalanced parentheses", t.offset, "')'");
    }

    static Expr::Node var_node(int idx) {
        Expr::Node n;
        n.kind = Expr::Kind::Var;
        n.var = idx;
        return n;
    }

    static Expr::Node binary(char op, Expr::Node lhs, Expr::Node rhs) {
        Expr::Node n;
        n.kind = Expr::Kind::Binary;
        n.op = op;
        n.args.push_back(std::move(lhs));
        n.args.push_back(std::move(rhs));
        return n;
    }

    Lexer lex_;
};

double eval_node(const Expr::Node& n, const Vec& x, const double* t) {
    switch (n.kind) {
        case Expr::Kind::Number:
            return n.value;
        case Expr::Kind::Var:
            if (n.var == 2) {
                if (!t) throw EvalError("variable t is unbound");
                return *t;
            }
            if (n.var >= x.d)
                throw EvalError("variable x" + std::to_string(n.var + 1) +
                                " is unbound (point has dimension " + std::to_string(x.d) + ")");
            return x[n.var];
        case Expr::Kind::Unary:
            return -eval_node(n.args[0], x, t);
        case Expr::Kind::Binary: {
            const double a = eval_node(n.args[0], x, t);
            const double b = eval_node(n.args[1], x, t);
            switch (n.op) {
                case '+': return a + b;
                case '-': return a - b;
                case '*': return a * b;
                case '/':
                    if (b == 0.0) throw EvalError("division by zero");
                    return a / b;
            }
            throw EvalError("corrupt expression node");
        }
        case Expr::Kind::Call: {
            const double a = eval_node(n.args[0], x, t);
            switch (n.func) {
                case 0: return std::sin(a);
                case 1: return std::cos(a);
                case 2: return std::exp(a);
                case 3: return std::abs(a);
                case 4: return std::tanh(a);
                case 5:
                    if (a < 0.0) throw EvalError("sqrt of negative value");
                    return std::sqrt(a);
                case 6:
                    if (a <= 0.0) throw EvalError("log of non-positive value");
                    return std::log(a);
                case 7: return std::min(a, eval_node(n.args[1], x, t));
                case 8: return std::max(a, eval_node(n.args[1], x, t));
                case 9: {
                    const double lo = eval_node(n.args[1], x, t);
                    const double hi = eval_node(n.args[2], x, t);
                    return std::min(std::max(a, lo), hi);
                }
            }
            throw EvalError("corrupt expression node");
        }
    }
    throw EvalError("corrupt expression node");
}

void print_node(const Expr::Node& n, std::ostringstream& out) {
    switch (n.kind) {
        case Expr::Kind::Number: {
            char buf[32];
            std::snprintf(buf, sizeof(buf), "%.17g", n.value);
            out << buf;
            return;
        }
        case Expr::Kind::Var:
            out << (n.var == 2 ? "t" : (n.var == 0 ? "x1" : "x2"));
            return;
        case Expr::Kind::Unary:
            out << "(-";
            print_node(n.args[0], out);
            out << ")";
            return;
        case Expr::Kind::Binary:
            out << "(";
            print_node(n.args[0], out);
            out << n.op;
            print_node(n.args[1], out);
            out << ")";
            return;
        case Expr::Kind::Call:
            out << kFuncs[n.func].name << "(";
            for (size_t i = 0; i < n.args.size(); ++i) {
                if (i) out << ",";
                print_node(n.args[i], out);
            }
            out << ")";
            return;
    }
}

bool node_uses_time(const Expr::Node& n) {
    if (n.kind == Expr::Kind::Var) return n.var == 2;
    for (const auto& a : n.args)
        if (node_uses_time(a)) return true;
    return false;
}

} // namespace

const Expr::Node& Expr::root() const {
    if (!has_root_) throw EvalError("empty expression");
    return root_;
}

double Expr::eval(const Vec& x) const { return eval_node(root(), x, nullptr); }

double Expr::eval(const Vec& x, double t) const { return eval_node(root(), x, &t); }

std::string Expr::print() const {
    std::ostringstream out;
    print_node(root(), out);
    return out.str();
}

bool Expr::uses_time() const { return has_root_ && node_uses_time(root_); }

Expr parse_expr(const std::string& text) {
    Parser p(text);
    return Expr(p.parse());
}

Expr constant_expr(double v) {
    Expr::Node n;
    n.kind = Expr::Kind::Number;
    n.value = v;
    return Expr(std::move(n));
}

} // namespace stablekit
