#pragma once

// Arithmetic expression trees for dynamical-system right-hand sides:
// parsing, printing, evaluation, and sign-structured term decomposition.
//
// Grammar (infix, standard precedence '^' > unary '-' > '*' '/' > '+' '-',
// left-associative):
//
//   expr   := term (('+'|'-') term)*
//   term   := factor (('*'|'/') factor)*
//   factor := '-' factor | base ('^' INT)?
//   base   := NUMBER | SYMBOL | '(' expr ')'
//
// '+'/'-' chains build flat n-ary Add nodes (subtraction becomes a Negate
// child); '*' chains build flat n-ary Mul nodes. Products with negative
// constant factors normalize the sign outward: `-2*x` parses as
// Negate(Mul(2, x)).

#include <cassert>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "nbds/errors.hpp"

namespace nbds {

enum class ExprKind { Constant, Symbol, Negate, Add, Mul, Div, PowInt };

struct Expr;
using ExprPtr = std::shared_ptr<const Expr>;

/// Immutable expression node. Construct through the factory functions below,
/// which enforce the structural invariants.
struct Expr {
    ExprKind kind;
    double value = 0.0;            // Constant
    std::string name;              // Symbol
    std::vector<ExprPtr> children; // Negate: 1, Add/Mul: >= 2, Div: {num, den}, PowInt: {base}
    int exponent = 0;              // PowInt, >= 1
};

inline bool is_valid_symbol_name(std::string_view s) {
    if (s.empty()) return false;
    auto head = [](char c) { return c == '_' || (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z'); };
    auto tail = [&](char c) { return head(c) || (c >= '0' && c <= '9'); };
    if (!head(s[0])) return false;
    for (char c : s.substr(1))
        if (!tail(c)) return false;
    return true;
}

inline ExprPtr constant(double v) {
    auto e = std::make_shared<Expr>();
    e->kind = ExprKind::Constant;
    e->value = v;
    return e;
}

inline ExprPtr symbol(std::string name) {
    if (!is_valid_symbol_name(name))
        throw std::invalid_argument("invalid symbol name '" + name + "'");
    auto e = std::make_shared<Expr>();
    e->kind = ExprKind::Symbol;
    e->name = std::move(name);
    return e;
}

inline ExprPtr negate(ExprPtr child) {
    auto e = std::make_shared<Expr>();
    e->kind = ExprKind::Negate;
    e->children = {std::move(child)};
    return e;
}

inline ExprPtr add(std::vector<ExprPtr> children) {
    if (children.size() < 2) throw std::invalid_argument("Add requires >= 2 children");
    auto e = std::make_shared<Expr>();
    e->kind = ExprKind::Add;
    e->children = std::move(children);
    return e;
}

inline ExprPtr mul(std::vector<ExprPtr> children) {
    if (children.size() < 2) throw std::invalid_argument("Mul requires >= 2 children");
    auto e = std::make_shared<Expr>();
    e->kind = ExprKind::Mul;
    e->children = std::move(children);
    return e;
}

inline ExprPtr div(ExprPtr num, ExprPtr den) {
    if (den->kind == ExprKind::Constant && den->value == 0.0)
        throw std::invalid_argument("Div denominator is the literal constant 0");
    auto e = std::make_shared<Expr>();
    e->kind = ExprKind::Div;
    e->children = {std::move(num), std::move(den)};
    return e;
}

inline ExprPtr pow_int(ExprPtr base, int exponent) {
    if (exponent < 1) throw std::invalid_argument("PowInt exponent must be >= 1");
    auto e = std::make_shared<Expr>();
    e->kind = ExprKind::PowInt;
    e->children = {std::move(base)};
    e->exponent = exponent;
    return e;
}

/// Deep structural equality.
inline bool expr_equal(const ExprPtr& a, const ExprPtr& b) {
    if (a.get() == b.get()) return true;
    if (a->kind != b->kind) return false;
    switch (a->kind) {
    case ExprKind::Constant: return a->value == b->value;
    case ExprKind::Symbol: return a->name == b->name;
    case ExprKind::PowInt:
        if (a->exponent != b->exponent) return false;
        break;
    default: break;
    }
    if (a->children.size() != b->children.size()) return false;
    for (std::size_t i = 0; i < a->children.size(); ++i)
        if (!expr_equal(a->children[i], b->children[i])) return false;
    return true;
}

// ---------------------------------------------------------------------------
// Printing
// ---------------------------------------------------------------------------

namespace detail {

inline int expr_prec(const Expr& e) {
    switch (e.kind) {
    case ExprKind::Add: return 1;
    case ExprKind::Mul:
    case ExprKind::Div: return 2;
    case ExprKind::Negate: return 3;
    case ExprKind::PowInt: return 4;
    default: return 5;
    }
}

inline std::string format_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

inline void print_rec(const ExprPtr& e, int min_prec, std::string& out) {
    const bool paren = expr_prec(*e) < min_prec;
    if (paren) out += '(';
    switch (e->kind) {
    case ExprKind::Constant:
        out += format_double(e->value);
        break;
    case ExprKind::Symbol:
        out += e->name;
        break;
    case ExprKind::Negate:
        out += '-';
        print_rec(e->children[0], 4, out);
        break;
    case ExprKind::Add:
        print_rec(e->children[0], 2, out);
        for (std::size_t i = 1; i < e->children.size(); ++i) {
            const auto& c = e->children[i];
            if (c->kind == ExprKind::Negate) {
                out += " - ";
                print_rec(c->children[0], 2, out);
            } else {
                out += " + ";
                print_rec(c, 2, out);
            }
        }
        break;
    case ExprKind::Mul:
        print_rec(e->children[0], 3, out);
        for (std::size_t i = 1; i < e->children.size(); ++i) {
            out += '*';
            print_rec(e->children[i], 3, out);
        }
        break;
    case ExprKind::Div:
        print_rec(e->children[0], 2, out);
        out += '/';
        print_rec(e->children[1], 3, out);
        break;
    case ExprKind::PowInt:
        print_rec(e->children[0], 5, out);
        out += '^';
        out += std::to_string(e->exponent);
        break;
    }
    if (paren) out += ')';
}

} // namespace detail

/// Renders the expression in the input grammar. parse_expr(to_string(e))
/// reproduces e structurally for parser-normal trees (flat Add/Mul chains,
/// nonnegative constants).
inline std::string to_string(const ExprPtr& e) {
    std::string out;
    detail::print_rec(e, 0, out);
    return out;
}

// ---------------------------------------------------------------------------
// Parsing
// ---------------------------------------------------------------------------

namespace detail {

enum class Tok { Num, Sym, Plus, Minus, Star, Slash, Caret, LParen, RParen, End };

struct Token {
    Tok kind;
    std::size_t pos = 0;
    double num = 0.0;
    bool is_integer = false;
    std::string text;
};

class Lexer {
public:
    explicit Lexer(std::string_view src) : src_(src) { advance(); }

    const Token& peek() const { return tok_; }

    Token take() {
        Token t = tok_;
        advance();
        return t;
    }

private:
    void advance() {
        while (i_ < src_.size() && (src_[i_] == ' ' || src_[i_] == '\t' || src_[i_] == '\n' || src_[i_] == '\r'))
            ++i_;
        tok_ = Token{};
        tok_.pos = i_;
        if (i_ >= src_.size()) {
            tok_.kind = Tok::End;
            return;
        }
        char c = src_[i_];
        switch (c) {
        case '+': tok_.kind = Tok::Plus; ++i_; return;
        case '-': tok_.kind = Tok::Minus; ++i_; return;
        case '*': tok_.kind = Tok::Star; ++i_; return;
        case '/': tok_.kind = Tok::Slash; ++i_; return;
        case '^': tok_.kind = Tok::Caret; ++i_; return;
        case '(': tok_.kind = Tok::LParen; ++i_; return;
        case ')': tok_.kind = Tok::RParen; ++i_; return;
        default: break;
        }
        if (c >= '0' && c <= '9') {
            lex_number();
            return;
        }
        if (is_valid_symbol_name(std::string_view(&c, 1))) {
            std::size_t j = i_;
            while (j < src_.size() && is_valid_symbol_name(src_.substr(i_, j - i_ + 1)))
                ++j;
            tok_.kind = Tok::Sym;
            tok_.text = std::string(src_.substr(i_, j - i_));
            i_ = j;
            return;
        }
        throw SyntaxError(i_, std::string("unexpected character '") + c + "'");
    }

    void lex_number() {
        std::size_t j = i_;
        bool integer = true;
        while (j < src_.size() && src_[j] >= '0' && src_[j] <= '9') ++j;
        if (j < src_.size() && src_[j] == '.') {
            integer = false;
            ++j;
            if (j >= src_.size() || src_[j] < '0' || src_[j] > '9')
                throw SyntaxError(j, "digit expected after decimal point");
            while (j < src_.size() && src_[j] >= '0' && src_[j] <= '9') ++j;
        }
        if (j < src_.size() && (src_[j] == 'e' || src_[j] == 'E')) {
            std::size_t k = j + 1;
            if (k < src_.size() && (src_[k] == '+' || src_[k] == '-')) ++k;
            if (k < src_.size() && src_[k] >= '0' && src_[k] <= '9') {
                integer = false;
                while (k < src_.size() && src_[k] >= '0' && src_[k] <= '9') ++k;
                j = k;
            }
        }
        tok_.kind = Tok::Num;
        tok_.text = std::string(src_.substr(i_, j - i_));
        tok_.is_integer = integer;
        auto res = std::from_chars(src_.data() + i_, src_.data() + j, tok_.num);
        if (res.ec != std::errc())
            throw SyntaxError(i_, "malformed number '" + tok_.text + "'");
        i_ = j;
    }

    std::string_view src_;
    std::size_t i_ = 0;
    Token tok_;
};

class Parser {
public:
    explicit Parser(std::string_view src) : lex_(src) {}

    ExprPtr parse() {
        ExprPtr e = parse_sum();
        if (lex_.peek().kind != Tok::End)
            throw SyntaxError(lex_.peek().pos, "unexpected trailing input");
        return e;
    }

private:
    ExprPtr parse_sum() {
        // each chain element is a term (a parenthesized sum stays one term),
        // so the n-ary Add is flat by construction
        std::vector<ExprPtr> terms;
        terms.push_back(parse_term());
        while (lex_.peek().kind == Tok::Plus || lex_.peek().kind == Tok::Minus) {
            bool minus = lex_.take().kind == Tok::Minus;
            ExprPtr t = parse_term();
            terms.push_back(minus ? negate(std::move(t)) : std::move(t));
        }
        if (terms.size() == 1) return terms[0];
        return add(std::move(terms));
    }

    ExprPtr parse_term() {
        ExprPtr cur = parse_factor();
        if (lex_.peek().kind != Tok::Star && lex_.peek().kind != Tok::Slash)
            return cur; // a lone factor is not a product; keep its sign in place
        int sign_parity = 0;
        cur = hoist_negative_constant(std::move(cur), sign_parity);
        bool chain_mul = false; // flatten only Muls built by this chain
        while (lex_.peek().kind == Tok::Star || lex_.peek().kind == Tok::Slash) {
            bool is_div = lex_.take().kind == Tok::Slash;
            ExprPtr rhs = hoist_negative_constant(parse_factor(), sign_parity);
            if (is_div) {
                cur = div(std::move(cur), std::move(rhs));
                chain_mul = false;
            } else if (chain_mul) {
                auto children = cur->children;
                children.push_back(std::move(rhs));
                cur = mul(std::move(children));
            } else {
                cur = mul({std::move(cur), std::move(rhs)});
                chain_mul = true;
            }
        }
        if (sign_parity % 2 != 0) cur = negate(std::move(cur));
        return cur;
    }

    // Products of negative constants normalize the sign outward: strips
    // Negate(Constant) factors and counts them; the term builder reapplies
    // the parity as a single outer Negate.
    static ExprPtr hoist_negative_constant(ExprPtr factor, int& parity) {
        while (factor->kind == ExprKind::Negate &&
               factor->children[0]->kind == ExprKind::Constant) {
            ++parity;
            factor = factor->children[0];
        }
        return factor;
    }

    ExprPtr parse_factor() {
        if (lex_.peek().kind == Tok::Minus) {
            lex_.take();
            return negate(parse_factor());
        }
        ExprPtr b = parse_base();
        if (lex_.peek().kind == Tok::Caret) {
            lex_.take();
            Token t = lex_.peek();
            if (t.kind != Tok::Num || !t.is_integer)
                throw ExponentError(t.pos, "exponent must be a positive integer literal");
            lex_.take();
            if (t.num < 1.0)
                throw ExponentError(t.pos, "exponent must be a positive integer literal");
            if (t.num > 1e6)
                throw ExponentError(t.pos, "exponent too large");
            return pow_int(std::move(b), static_cast<int>(t.num));
        }
        return b;
    }

    ExprPtr parse_base() {
        Token t = lex_.peek();
        switch (t.kind) {
        case Tok::Num:
            lex_.take();
            return constant(t.num);
        case Tok::Sym:
            lex_.take();
            return symbol(t.text);
        case Tok::LParen: {
            lex_.take();
            ExprPtr e = parse_sum();
            if (lex_.peek().kind != Tok::RParen)
                throw SyntaxError(lex_.peek().pos, "expected ')'");
            lex_.take();
            return e;
        }
        default:
            throw SyntaxError(t.pos, "expected a number, symbol, or '('");
        }
    }

    Lexer lex_;
};

} // namespace detail

inline ExprPtr parse_expr(std::string_view text) {
    return detail::Parser(text).parse();
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

using Env = std::unordered_map<std::string, double>;

inline double eval_expr(const ExprPtr& e, const Env& env) {
    switch (e->kind) {
    case ExprKind::Constant:
        return e->value;
    case ExprKind::Symbol: {
        auto it = env.find(e->name);
        if (it == env.end()) throw UnboundSymbol(e->name);
        return it->second;
    }
    case ExprKind::Negate:
        return -eval_expr(e->children[0], env);
    case ExprKind::Add: {
        double s = 0.0;
        for (const auto& c : e->children) s += eval_expr(c, env);
        return s;
    }
    case ExprKind::Mul: {
        double p = 1.0;
        for (const auto& c : e->children) p *= eval_expr(c, env);
        return p;
    }
    case ExprKind::Div: {
        double num = eval_expr(e->children[0], env);
        double den = eval_expr(e->children[1], env);
        if (std::fabs(den) < 1e-15) throw DivisionByZero();
        return num / den;
    }
    case ExprKind::PowInt: {
        double b = eval_expr(e->children[0], env);
        double r = b;
        for (int i = 1; i < e->exponent; ++i) r *= b;
        return r;
    }
    }
    throw Error("unreachable expression kind");
}

// ---------------------------------------------------------------------------
// Term decomposition (F -> F+ / F-)
// ---------------------------------------------------------------------------

/// Sign-structured decomposition of a sum: sum(positive_terms) -
/// sum(negative_terms) equals the source expression, and no listed term
/// carries a top-level Negate.
struct TermSplit {
    std::vector<ExprPtr> positive_terms;
    std::vector<ExprPtr> negative_terms;
};

namespace detail {

// Strips a leading negative constant factor: Constant(-c) -> (Constant(c),
// flipped), Mul(Constant(-c), ...) -> (Mul(Constant(c), ...), flipped), and
// the same through a Div numerator.
inline std::pair<ExprPtr, bool> strip_constant_sign(const ExprPtr& term) {
    switch (term->kind) {
    case ExprKind::Constant:
        if (term->value < 0.0) return {constant(-term->value), true};
        return {term, false};
    case ExprKind::Mul:
        if (term->children[0]->kind == ExprKind::Constant && term->children[0]->value < 0.0) {
            auto children = term->children;
            children[0] = constant(-children[0]->value);
            return {mul(std::move(children)), true};
        }
        return {term, false};
    case ExprKind::Div: {
        auto [num, flipped] = strip_constant_sign(term->children[0]);
        if (flipped) return {div(num, term->children[1]), true};
        return {term, false};
    }
    default:
        return {term, false};
    }
}

inline void split_rec(const ExprPtr& e, bool negated, TermSplit& out) {
    switch (e->kind) {
    case ExprKind::Add:
        for (const auto& c : e->children) split_rec(c, negated, out);
        return;
    case ExprKind::Negate:
        split_rec(e->children[0], !negated, out);
        return;
    default: {
        auto [term, flipped] = strip_constant_sign(e);
        bool neg = negated ^ flipped;
        (neg ? out.negative_terms : out.positive_terms).push_back(std::move(term));
        return;
    }
    }
}

} // namespace detail

inline TermSplit split_terms(const ExprPtr& e) {
    TermSplit out;
    detail::split_rec(e, false, out);
    return out;
}

/// Recombines a TermSplit into a single expression (used by tests and the
/// recombination invariant).
inline ExprPtr recombine(const TermSplit& split) {
    std::vector<ExprPtr> terms;
    for (const auto& t : split.positive_terms) terms.push_back(t);
    for (const auto& t : split.negative_terms) terms.push_back(negate(t));
    if (terms.empty()) return constant(0.0);
    if (terms.size() == 1) return terms[0];
    return add(std::move(terms));
}

// ---------------------------------------------------------------------------
// Synthesizability check
// ---------------------------------------------------------------------------

namespace detail {

inline void check_denominator(const ExprPtr& e, std::vector<Diagnostic>& diags) {
    switch (e->kind) {
    case ExprKind::Constant:
        if (e->value <= 0.0)
            diags.push_back({to_string(e), "denominator constant must be positive"});
        return;
    case ExprKind::Symbol:
        return;
    case ExprKind::Add:
        for (const auto& c : e->children) {
            if (c->kind == ExprKind::Negate) {
                diags.push_back({to_string(e), "denominator sum must not contain negated terms"});
                continue;
            }
            check_denominator(c, diags);
        }
        return;
    case ExprKind::Mul:
    case ExprKind::PowInt:
        for (const auto& c : e->children) check_denominator(c, diags);
        return;
    case ExprKind::Negate:
        diags.push_back({to_string(e), "negated denominator is not realizable"});
        return;
    case ExprKind::Div:
        diags.push_back({to_string(e), "nested division in a denominator is not realizable"});
        return;
    }
}

inline void check_synthesizable(const ExprPtr& e, std::vector<Diagnostic>& diags) {
    switch (e->kind) {
    case ExprKind::Div:
        check_synthesizable(e->children[0], diags);
        check_denominator(e->children[1], diags);
        return;
    default:
        for (const auto& c : e->children) check_synthesizable(c, diags);
        return;
    }
}

} // namespace detail

/// Empty result means the expression stays inside the realizable block
/// vocabulary: constants, symbols, sums/differences, products, integer
/// powers, and divisions whose denominators are non-negated sums/products of
/// positive constants and signals.
inline std::vector<Diagnostic> validate_synthesizable(const ExprPtr& e) {
    std::vector<Diagnostic> diags;
    detail::check_synthesizable(e, diags);
    return diags;
}

/// Collects every symbol referenced by the expression.
inline void collect_symbols(const ExprPtr& e, std::vector<std::string>& out) {
    if (e->kind == ExprKind::Symbol) {
        out.push_back(e->name);
        return;
    }
    for (const auto& c : e->children) collect_symbols(c, out);
}

} // namespace nbds
