#pragma once

// Canonical dynamical-system representation (tau_N * dx_N/dt = F_N), the
// built-in synapse / FHN neuron / astrocyte models, and the biological-to-
// electrical unit mapping that turns model-unit systems into current-valued
// ones.

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "nbds/errors.hpp"
#include "nbds/expr.hpp"

namespace nbds {

struct StateEquation {
    std::string name;
    double tau = 1.0;          // model-time constant, > 0
    ExprPtr rhs;               // F_N over declared symbols
    double initial_value = 0.0;
};

struct DynamicalSystem {
    std::string name;
    std::vector<StateEquation> states;
    std::vector<std::string> inputs;
    std::map<std::string, double> params;

    bool is_state(const std::string& s) const {
        return std::any_of(states.begin(), states.end(),
                           [&](const StateEquation& eq) { return eq.name == s; });
    }
    bool is_input(const std::string& s) const {
        return std::find(inputs.begin(), inputs.end(), s) != inputs.end();
    }
    bool is_param(const std::string& s) const { return params.count(s) != 0; }

    int state_index(const std::string& s) const {
        for (std::size_t i = 0; i < states.size(); ++i)
            if (states[i].name == s) return static_cast<int>(i);
        return -1;
    }

    /// Throws on violated invariants: disjoint names, declared symbols only,
    /// positive finite taus.
    void validate() const {
        if (states.empty()) throw SchemaError("system has no states");
        std::set<std::string> seen;
        auto declare = [&](const std::string& n, const char* role) {
            if (!is_valid_symbol_name(n))
                throw SchemaError(std::string(role) + " name '" + n + "' is not a valid symbol");
            if (!seen.insert(n).second)
                throw SchemaError("duplicate symbol '" + n + "' across states/inputs/params");
        };
        for (const auto& eq : states) declare(eq.name, "state");
        for (const auto& in : inputs) declare(in, "input");
        for (const auto& [p, v] : params) {
            declare(p, "parameter");
            if (!std::isfinite(v)) throw SchemaError("parameter '" + p + "' is not finite");
        }
        for (const auto& eq : states) {
            if (!(eq.tau > 0.0) || !std::isfinite(eq.tau)) throw NonPositiveTauError(eq.name);
            if (!std::isfinite(eq.initial_value))
                throw SchemaError("initial value of '" + eq.name + "' is not finite");
            std::vector<std::string> syms;
            collect_symbols(eq.rhs, syms);
            for (const auto& s : syms)
                if (!seen.count(s)) throw UnknownSymbolError(s, eq.name);
        }
    }
};

/// Biological-to-electrical scaling: amperes per model unit and circuit
/// seconds per model second.
struct UnitMap {
    double current_per_unit = 1e-6; // 1 uA of circuit current per model unit
    double time_scale = 1e-3;       // 1 ms of circuit time per model time unit

    void validate() const {
        if (!(current_per_unit > 0.0) || !std::isfinite(current_per_unit) ||
            !(time_scale > 0.0) || !std::isfinite(time_scale))
            throw SchemaError("unit map values must be positive and finite");
    }
};

// ---------------------------------------------------------------------------
// Canonical tau form
// ---------------------------------------------------------------------------

/// Absorbs a leading positive constant factor of the RHS into 1/tau, so
/// dw/dt = 0.18*(...) canonicalizes to tau_w = 1/0.18 with F_w = (...).
inline StateEquation canonicalize_tau(StateEquation eq) {
    for (;;) {
        if (eq.rhs->kind == ExprKind::Mul && eq.rhs->children[0]->kind == ExprKind::Constant &&
            eq.rhs->children[0]->value > 0.0) {
            eq.tau /= eq.rhs->children[0]->value;
            std::vector<ExprPtr> rest(eq.rhs->children.begin() + 1, eq.rhs->children.end());
            eq.rhs = rest.size() == 1 ? rest[0] : mul(std::move(rest));
            continue;
        }
        if (eq.rhs->kind == ExprKind::Negate) {
            const auto& inner = eq.rhs->children[0];
            if (inner->kind == ExprKind::Mul && inner->children[0]->kind == ExprKind::Constant &&
                inner->children[0]->value > 0.0) {
                eq.tau /= inner->children[0]->value;
                std::vector<ExprPtr> rest(inner->children.begin() + 1, inner->children.end());
                eq.rhs = negate(rest.size() == 1 ? rest[0] : mul(std::move(rest)));
                continue;
            }
        }
        break;
    }
    return eq;
}

// ---------------------------------------------------------------------------
// Model files
// ---------------------------------------------------------------------------

/// Parses a model document:
///   {"name": ..., "states": [{"name","tau","rhs","init"}], "inputs": [...],
///    "params": {...}}
/// RHS strings use the expression grammar; numbers are model units.
inline DynamicalSystem load_system(const std::string& document) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(document);
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(std::string("model file is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw SchemaError("model document must be a JSON object");

    DynamicalSystem sys;
    try {
        sys.name = j.at("name").get<std::string>();
        if (!j.contains("states") || !j["states"].is_array() || j["states"].empty())
            throw SchemaError("model must declare a non-empty 'states' array");
        for (const auto& js : j["states"]) {
            StateEquation eq;
            eq.name = js.at("name").get<std::string>();
            eq.tau = js.at("tau").get<double>();
            eq.rhs = parse_expr(js.at("rhs").get<std::string>());
            eq.initial_value = js.value("init", 0.0);
            if (!(eq.tau > 0.0) || !std::isfinite(eq.tau)) throw NonPositiveTauError(eq.name);
            sys.states.push_back(canonicalize_tau(std::move(eq)));
        }
        if (j.contains("inputs"))
            for (const auto& ji : j["inputs"]) sys.inputs.push_back(ji.get<std::string>());
        if (j.contains("params"))
            for (const auto& [k, v] : j["params"].items()) sys.params[k] = v.get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(std::string("malformed model document: ") + e.what());
    }
    sys.validate();
    return sys;
}

// ---------------------------------------------------------------------------
// Built-in models
// ---------------------------------------------------------------------------

/// FitzHugh-Nagumo constants (dv/dt = v - v^3/3 - w + I_ext,
/// dw/dt = a*(v + offset - w_gain*w)) plus the electrical scale currents the
/// unit mapping implies.
struct FhnParams {
    double a_recovery = 0.18;
    double offset = 0.7;
    double w_gain = 0.8;

    struct ScaleCurrents {
        double I_x, I_b, I_c, I_d; // amperes
    };
    ScaleCurrents scale_currents(const UnitMap& units) const {
        const double a = units.current_per_unit;
        return {a, 3.0 * a, offset * a, w_gain * a};
    }
};

/// Two-pool calcium model with all Hill coefficients fixed at 1. The default
/// values are a derived oscillatory set (reference-integrator sweep over
/// V_M3 and beta_stim), not literature ground truth; override freely.
struct AstrocyteParams {
    double z0 = 0.2;        // basal influx rate
    double z1 = 1.0;        // stimulus-induced influx gain
    double beta_stim = 0.4; // stimulation level in [0, 1]
    double V_M2 = 120.0;
    double V_M3 = 500.0;
    double K2 = 0.1;
    double K_R = 1.0;
    double K_A = 0.4;
    double k_f = 0.5;
    double k = 10.0;
    double init_X = 0.1;
    double init_Y = 1.0;

    static constexpr int hill_m = 1;
    static constexpr int hill_n = 1;
    static constexpr int hill_p = 1;

    void validate() const {
        for (double v : {z0, z1, V_M2, V_M3, K2, K_R, K_A, k_f, k})
            if (!(v > 0.0) || !std::isfinite(v))
                throw SchemaError("astrocyte rate/threshold parameters must be positive");
        if (!(beta_stim >= 0.0 && beta_stim <= 1.0))
            throw SchemaError("beta_stim must lie in [0, 1]");
    }
};

inline DynamicalSystem builtin_synapse() {
    DynamicalSystem sys;
    sys.name = "synapse";
    sys.states.push_back({"s", 1.0, parse_expr("-s + I_ext"), 0.0});
    sys.inputs = {"I_ext"};
    sys.validate();
    return sys;
}

inline DynamicalSystem builtin_fhn(const FhnParams& p = {}) {
    DynamicalSystem sys;
    sys.name = "fhn";
    sys.states.push_back({"v", 1.0, parse_expr("v - v^3/3 - w + I_ext"), 0.0});
    // dw/dt = a*(v + offset - w_gain*w), canonicalized to tau_w = 1/a
    ExprPtr rhs_w = add({symbol("v"), constant(p.offset),
                         negate(mul({constant(p.w_gain), symbol("w")}))});
    sys.states.push_back({"w", 1.0 / p.a_recovery, rhs_w, 0.0});
    sys.inputs = {"I_ext"};
    sys.validate();
    return sys;
}

inline DynamicalSystem builtin_astrocyte(const AstrocyteParams& p = {}) {
    p.validate();
    DynamicalSystem sys;
    sys.name = "astrocyte";
    sys.states.push_back(
        {"X", 1.0,
         parse_expr("z0 + z1*beta_stim - V_M2*X/(K2+X) + V_M3*Y/(K_R+Y)*X/(K_A+X) + k_f*Y - k*X"),
         p.init_X});
    sys.states.push_back(
        {"Y", 1.0, parse_expr("V_M2*X/(K2+X) - V_M3*Y/(K_R+Y)*X/(K_A+X) - k_f*Y"), p.init_Y});
    sys.params = {{"z0", p.z0},   {"z1", p.z1},   {"beta_stim", p.beta_stim},
                  {"V_M2", p.V_M2}, {"V_M3", p.V_M3}, {"K2", p.K2},
                  {"K_R", p.K_R}, {"K_A", p.K_A}, {"k_f", p.k_f},
                  {"k", p.k}};
    sys.validate();
    return sys;
}

inline DynamicalSystem builtin(const std::string& name) {
    if (name == "synapse") return builtin_synapse();
    if (name == "fhn") return builtin_fhn();
    if (name == "astrocyte") return builtin_astrocyte();
    throw UnknownModelError(name);
}

// ---------------------------------------------------------------------------
// Electrical mapping
// ---------------------------------------------------------------------------
//
// States, inputs, and threshold-like parameters become currents (values
// scaled by current_per_unit); purely multiplicative parameters stay
// dimensionless gains. Nonlinear terms are rescaled with explicit scale
// currents so that every product/quotient is dimensionally a current:
//
//   v^3/3        ->  v^3/(I_b*I_x)      I_b = 3*alpha, I_x = alpha
//   0.8*w        ->  I_d*w/I_x          I_d = 0.8*alpha
//   0.7          ->  I_c                I_c = 0.7*alpha
//
// The mapping satisfies F_electrical(alpha*x) == alpha * F_biological(x)
// pointwise.

namespace detail {

struct ElectricalMapper {
    const DynamicalSystem& sys;
    double alpha;
    std::map<std::string, int> param_dim;      // current dimension per parameter
    std::map<std::string, double> new_params;  // introduced scale currents (ampere values)
    std::set<std::string> taken;
    int c_count = 0, b_count = 0, d_count = 0;
    std::string unit_name; // the shared unit-scale current, created on demand

    enum class Series { Additive, Denominator, Coefficient };

    explicit ElectricalMapper(const DynamicalSystem& s, double a) : sys(s), alpha(a) {
        for (const auto& eq : s.states) taken.insert(eq.name);
        for (const auto& in : s.inputs) taken.insert(in);
        for (const auto& [p, v] : s.params) taken.insert(p);
    }

    bool is_signal(const std::string& n) const { return sys.is_state(n) || sys.is_input(n); }

    bool has_signal(const ExprPtr& e) const {
        if (e->kind == ExprKind::Symbol) return is_signal(e->name);
        for (const auto& c : e->children)
            if (has_signal(c)) return true;
        return false;
    }

    bool has_unassigned_param(const ExprPtr& e) const {
        if (e->kind == ExprKind::Symbol)
            return sys.is_param(e->name) && !param_dim.count(e->name);
        for (const auto& c : e->children)
            if (has_unassigned_param(c)) return true;
        return false;
    }

    int nat_dim(const ExprPtr& e) const {
        switch (e->kind) {
        case ExprKind::Constant: return 0;
        case ExprKind::Symbol: {
            if (is_signal(e->name)) return 1;
            auto it = param_dim.find(e->name);
            return it == param_dim.end() ? 0 : it->second;
        }
        case ExprKind::Negate: return nat_dim(e->children[0]);
        case ExprKind::Add: {
            int d = 0;
            for (const auto& c : e->children) d = std::max(d, nat_dim(c));
            return d;
        }
        case ExprKind::Mul: {
            int d = 0;
            for (const auto& c : e->children) d += nat_dim(c);
            return d;
        }
        case ExprKind::Div: return nat_dim(e->children[0]) - nat_dim(e->children[1]);
        case ExprKind::PowInt: return e->exponent * nat_dim(e->children[0]);
        }
        return 0;
    }

    // Phase 1: assign current dimensions to parameters so each RHS comes out
    // one current deep. Deficits flow to the leftmost flexible operand.
    void solve(const ExprPtr& e, int target) {
        switch (e->kind) {
        case ExprKind::Constant:
            return; // constants promote by value at rewrite time
        case ExprKind::Symbol:
            if (sys.is_param(e->name) && !param_dim.count(e->name))
                param_dim[e->name] = std::min(std::max(target, 0), 1);
            return;
        case ExprKind::Negate:
            solve(e->children[0], target);
            return;
        case ExprKind::Add:
            for (const auto& c : e->children) solve(c, target);
            return;
        case ExprKind::Mul: {
            int base = 0;
            for (const auto& c : e->children) base += nat_dim(c);
            int deficit = target - base;
            bool spent = false;
            for (const auto& c : e->children) {
                if (!spent && deficit > 0 && has_unassigned_param(c)) {
                    solve(c, nat_dim(c) + deficit);
                    spent = true;
                } else {
                    solve(c, nat_dim(c));
                }
            }
            return;
        }
        case ExprKind::Div: {
            const auto& num = e->children[0];
            const auto& den = e->children[1];
            int dd;
            if (has_signal(den)) {
                dd = std::max(nat_dim(den), 1);
                solve(den, dd);
                dd = nat_dim(den);
            } else {
                // constant/parameter-only denominator is flexible:
                // absorb whatever the numerator's excess demands
                dd = std::max(0, nat_dim(num) - target);
                distribute_over(den, dd);
            }
            solve(num, target + dd);
            return;
        }
        case ExprKind::PowInt: {
            int k = e->exponent;
            if (target > 0 && target % k == 0)
                solve(e->children[0], target / k);
            else
                solve(e->children[0], nat_dim(e->children[0]));
            return;
        }
        }
    }

    // Spreads `amount` of current dimension over the unassigned parameters of
    // a signal-free denominator, one unit each from the left: parameters are
    // currents, never current powers (higher powers would synthesize as DC
    // sources under the 1 pA floor). Leftovers stay with the constants and
    // unit-current lifts at rewrite time.
    void distribute_over(const ExprPtr& e, int amount) {
        std::vector<std::string> names;
        collect_unassigned(e, names);
        for (std::size_t i = 0; i < names.size(); ++i)
            param_dim[names[i]] = static_cast<int>(i) < amount ? 1 : 0;
    }

    void collect_unassigned(const ExprPtr& e, std::vector<std::string>& out) const {
        if (e->kind == ExprKind::Symbol) {
            if (sys.is_param(e->name) && !param_dim.count(e->name) &&
                std::find(out.begin(), out.end(), e->name) == out.end())
                out.push_back(e->name);
            return;
        }
        for (const auto& c : e->children) collect_unassigned(c, out);
    }

    // --- naming for introduced scale currents ---

    std::string fresh(Series s) {
        const char* stem = s == Series::Additive ? "I_c" : s == Series::Denominator ? "I_b" : "I_d";
        int& count = s == Series::Additive ? c_count : s == Series::Denominator ? b_count : d_count;
        ++count;
        std::string name = count == 1 ? stem : stem + std::to_string(count);
        while (taken.count(name)) name += "_";
        taken.insert(name);
        return name;
    }

    std::string unit_current() {
        if (unit_name.empty()) {
            unit_name = "I_x";
            while (taken.count(unit_name)) unit_name += "_";
            taken.insert(unit_name);
            new_params[unit_name] = alpha;
        }
        return unit_name;
    }

    double alpha_pow(int k) const {
        double r = 1.0;
        for (int i = 0; i < k; ++i) r *= alpha;
        return r;
    }

    ExprPtr unit_product(int k) { // I_x^k as an expression, k >= 1
        if (k == 1) return symbol(unit_current());
        return pow_int(symbol(unit_current()), k);
    }

    ExprPtr lift(ExprPtr e, int from, int to) {
        if (from == to) return e;
        if (from < to) return mul({std::move(e), unit_product(to - from)});
        return div(std::move(e), unit_product(from - to));
    }

    // Phase 2: rewrite to the target dimension with final assignments.
    ExprPtr rewrite(const ExprPtr& e, int target, Series series) {
        switch (e->kind) {
        case ExprKind::Constant: {
            if (target == 0) return e;
            double mag = std::fabs(e->value);
            ExprPtr out;
            if (series == Series::Denominator && target > 1) {
                // split as named*unit^(k-1), the Eq. 33 I_b*I_x shape
                std::string name = fresh(series);
                new_params[name] = mag * alpha;
                out = mul({symbol(name), unit_product(target - 1)});
            } else {
                std::string name = fresh(series);
                new_params[name] = mag * alpha_pow(target);
                out = symbol(name);
            }
            return e->value < 0.0 ? negate(std::move(out)) : out;
        }
        case ExprKind::Symbol: {
            int d = is_signal(e->name) ? 1 : (param_dim.count(e->name) ? param_dim.at(e->name) : 0);
            return lift(e, d, target);
        }
        case ExprKind::Negate:
            return negate(rewrite(e->children[0], target, series));
        case ExprKind::Add: {
            std::vector<ExprPtr> children;
            for (const auto& c : e->children) children.push_back(rewrite(c, target, series));
            return add(std::move(children));
        }
        case ExprKind::Mul: {
            double coeff = 1.0;
            bool has_literal = false;
            std::vector<ExprPtr> parts;
            for (const auto& c : e->children) {
                if (c->kind == ExprKind::Constant) {
                    coeff *= c->value;
                    has_literal = true;
                } else {
                    parts.push_back(c);
                }
            }
            int base = 0;
            for (const auto& p : parts) base += nat_dim(p);
            ExprPtr out;
            if (parts.empty()) {
                out = rewrite(constant(std::fabs(coeff)), target, series);
                return coeff < 0.0 ? negate(std::move(out)) : out;
            }
            if (has_literal && series == Series::Denominator) {
                // no division inside denominators: the literal either stays a
                // dimensionless ratio or promotes to a named current outright
                int deficit = target - base; // >= 0: dd never undercuts the parts
                std::vector<ExprPtr> children;
                if (deficit >= 1) {
                    std::string name = fresh(Series::Denominator);
                    new_params[name] = std::fabs(coeff) * alpha_pow(deficit);
                    children.push_back(symbol(name));
                } else {
                    children.push_back(constant(std::fabs(coeff)));
                }
                for (const auto& p : parts) children.push_back(rewrite(p, nat_dim(p), series));
                out = children.size() == 1 ? children[0] : mul(std::move(children));
                return coeff < 0.0 ? negate(std::move(out)) : out;
            }
            if (has_literal) {
                // literal coefficient becomes a named current paired with a
                // unit-current divisor (0.8*w -> I_d*w/I_x)
                int k_c = std::max(target - base, 0) + 1;
                std::string name = fresh(Series::Coefficient);
                new_params[name] = std::fabs(coeff) * alpha_pow(k_c);
                std::vector<ExprPtr> children{symbol(name)};
                for (const auto& p : parts) children.push_back(rewrite(p, nat_dim(p), series));
                out = mul(std::move(children));
                out = lift(std::move(out), base + k_c, target);
                return coeff < 0.0 ? negate(std::move(out)) : out;
            }
            if (parts.size() == 1) {
                out = rewrite(parts[0], nat_dim(parts[0]), series);
            } else {
                std::vector<ExprPtr> children;
                for (const auto& p : parts) children.push_back(rewrite(p, nat_dim(p), series));
                out = mul(std::move(children));
            }
            return lift(std::move(out), base, target);
        }
        case ExprKind::Div: {
            const auto& num = e->children[0];
            const auto& den = e->children[1];
            int dd = std::max({nat_dim(den), nat_dim(num) - target, 0});
            ExprPtr den2 = rewrite(den, dd, Series::Denominator);
            ExprPtr num2 = rewrite(num, target + dd, series);
            if (dd == 0 && den->kind == ExprKind::Constant) return div(num2, den);
            return div(std::move(num2), std::move(den2));
        }
        case ExprKind::PowInt: {
            int k = e->exponent;
            if (target > 0 && target % k == 0)
                return pow_int(rewrite(e->children[0], target / k, series), k);
            int b = nat_dim(e->children[0]);
            return lift(pow_int(rewrite(e->children[0], b, series), k), k * b, target);
        }
        }
        throw Error("unreachable expression kind");
    }
};

/// Folds constant-only subtrees to a single literal (sign kept as Negate).
inline ExprPtr fold_constants(const ExprPtr& e) {
    bool constant_only = true;
    std::vector<std::string> syms;
    collect_symbols(e, syms);
    constant_only = syms.empty();
    if (constant_only && e->kind != ExprKind::Constant &&
        !(e->kind == ExprKind::Negate && e->children[0]->kind == ExprKind::Constant)) {
        double v = eval_expr(e, {});
        return v < 0.0 ? negate(constant(-v)) : constant(v);
    }
    if (e->children.empty()) return e;
    auto copy = std::make_shared<Expr>(*e);
    for (auto& c : copy->children) c = fold_constants(c);
    return copy;
}

} // namespace detail

/// Maps a model-domain system onto current-valued variables: taus scale by
/// time_scale, initial values and current-like parameters by
/// current_per_unit, and nonlinear terms gain explicit scale currents.
inline DynamicalSystem to_electrical(const DynamicalSystem& system, const UnitMap& units) {
    units.validate();
    system.validate();
    const double alpha = units.current_per_unit;

    detail::ElectricalMapper mapper(system, alpha);

    std::vector<ExprPtr> folded;
    for (const auto& eq : system.states) folded.push_back(detail::fold_constants(eq.rhs));
    for (const auto& rhs : folded) mapper.solve(rhs, 1);

    DynamicalSystem out;
    out.name = system.name;
    out.inputs = system.inputs;
    for (std::size_t i = 0; i < system.states.size(); ++i) {
        StateEquation eq = system.states[i];
        eq.tau *= units.time_scale;
        eq.initial_value *= alpha;
        eq.rhs = mapper.rewrite(folded[i], 1, detail::ElectricalMapper::Series::Additive);
        out.states.push_back(std::move(eq));
    }
    for (const auto& [p, v] : system.params) {
        int d = mapper.param_dim.count(p) ? mapper.param_dim.at(p) : 0;
        out.params[p] = v * mapper.alpha_pow(d);
    }
    for (const auto& [p, v] : mapper.new_params) out.params[p] = v;
    out.validate();
    return out;
}

} // namespace nbds
