#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace nbds {

/// A validation finding. Diagnostics are data, not exceptions; validators
/// return a list of them and an empty list means "clean".
struct Diagnostic {
    std::string where;    // printed subtree / block / net the finding points at
    std::string message;

    std::string str() const { return where.empty() ? message : where + ": " + message; }
};

class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// --- expression parsing/evaluation ---

class SyntaxError : public Error {
public:
    SyntaxError(std::size_t position, const std::string& msg)
        : Error("syntax error at position " + std::to_string(position) + ": " + msg),
          position(position) {}
    std::size_t position;
};

class ExponentError : public SyntaxError {
public:
    ExponentError(std::size_t position, const std::string& msg) : SyntaxError(position, msg) {}
};

class UnboundSymbol : public Error {
public:
    explicit UnboundSymbol(const std::string& symbol)
        : Error("unbound symbol '" + symbol + "'"), symbol(symbol) {}
    std::string symbol;
};

class DivisionByZero : public Error {
public:
    DivisionByZero() : Error("division by zero (denominator magnitude below 1e-15)") {}
};

// --- system model ---

class SchemaError : public Error {
public:
    explicit SchemaError(const std::string& msg) : Error("schema error: " + msg) {}
};

class UnknownSymbolError : public Error {
public:
    UnknownSymbolError(const std::string& symbol, const std::string& equation)
        : Error("unknown symbol '" + symbol + "' in equation for '" + equation + "'"),
          symbol(symbol), equation(equation) {}
    std::string symbol;
    std::string equation;
};

class NonPositiveTauError : public Error {
public:
    explicit NonPositiveTauError(const std::string& state)
        : Error("non-positive tau for state '" + state + "'"), state(state) {}
    std::string state;
};

class UnknownModelError : public Error {
public:
    explicit UnknownModelError(const std::string& name)
        : Error("unknown built-in model '" + name + "'"), name(name) {}
    std::string name;
};

// --- synthesis ---

class NonPhysicalBias : public Error {
public:
    explicit NonPhysicalBias(const std::string& msg) : Error("non-physical bias: " + msg) {}
};

class UnsynthesizableExpression : public Error {
public:
    explicit UnsynthesizableExpression(std::vector<Diagnostic> diags)
        : Error(join(diags)), diagnostics(std::move(diags)) {}
    std::vector<Diagnostic> diagnostics;

private:
    static std::string join(const std::vector<Diagnostic>& diags) {
        std::string s = "unsynthesizable expression";
        for (const auto& d : diags) s += "\n  " + d.str();
        return s;
    }
};

class MissingS : public Error {
public:
    explicit MissingS(int dim)
        : Error("missing S value for dimension " + std::to_string(dim)), dim(dim) {}
    int dim;
};

// --- simulation ---

class RangeViolationError : public Error {
public:
    RangeViolationError(double i_out, double s)
        : Error("range violation: |I_out| = " + std::to_string(i_out) +
                " A exceeds S^2 = " + std::to_string(s * s) + " A"),
          i_out(i_out), s(s) {}
    double i_out;
    double s;
};

class GridMismatch : public Error {
public:
    explicit GridMismatch(const std::string& msg) : Error("grid mismatch: " + msg) {}
};

class NonFiniteStateError : public Error {
public:
    explicit NonFiniteStateError(double t)
        : Error("non-finite state at t = " + std::to_string(t) + " s"), t(t) {}
    double t;
};

} // namespace nbds
