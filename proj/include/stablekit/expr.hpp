#pragma once

#include <memory>
#include <string>
#include <vector>

#include "stablekit/common.hpp"

namespace stablekit {

/// Immutable arithmetic expression over the variables x1..xd and t.
///
/// Grammar (standard precedence, left-associative):
///   expr   := term (('+'|'-') term)*
///   term   := unary (('*'|'/') unary)*
///   unary  := '-' unary | primary
///   primary:= number | ident | ident '(' expr (',' expr)* ')' | '(' expr ')'
///
/// Functions: sin cos exp abs tanh sqrt log min max clamp.
class Expr {
public:
    enum class Kind { Number, Var, Unary, Binary, Call };

    struct Node {
        Kind kind;
        double value = 0.0;      // Number
        int var = 0;             // Var: 0,1 -> x1,x2; 2 -> t
        char op = 0;             // Unary/Binary: + - * /
        int func = 0;            // Call: index into function table
        std::vector<Node> args;
    };

    Expr() = default;
    explicit Expr(Node root) : root_(std::move(root)), has_root_(true) {}

    bool empty() const { return !has_root_; }
    const Node& root() const;

    /// Evaluate at point x (t unbound unless given).
    double eval(const Vec& x) const;
    double eval(const Vec& x, double t) const;

    /// Canonical text form; parse(print()) evaluates identically.
    std::string print() const;

    /// True if the expression references t.
    bool uses_time() const;

private:
    Node root_;
    bool has_root_ = false;
};

/// Parse an expression.  Throws ParseError with a byte offset on bad input.
Expr parse_expr(const std::string& text);

/// Convenience: a constant expression.
Expr constant_expr(double v);

} // namespace stablekit
