#pragma once

// Fixed-step RK4 integration of (a) the reference ODE tau*dx/dt = F and
// (b) the synthesized netlist's circuit dynamics
//   dI_out/dt = (sqrt(I_A)+sqrt(I_B)) * 2*sqrt(k_n) * I_Cin / ((2+beta)*C),
//   I_Cin     = F * I_dc / (sqrt(I_A)+sqrt(I_B)),
// with branch currents recovered from the conserved sum S = sqrt(I_A)+sqrt(I_B).

#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "nbds/errors.hpp"
#include "nbds/netlist.hpp"
#include "nbds/system.hpp"

namespace nbds {

// ---------------------------------------------------------------------------
// Simulation configuration
// ---------------------------------------------------------------------------

struct InputDrive {
    struct Constant {
        double level = 0.0;
    };
    struct Step {
        double t0 = 0.0;
        double level = 0.0; // 0 before t0, level from t0 on
    };
    struct Table {
        std::vector<std::pair<double, double>> points; // (t, value), t ascending
    };
    std::variant<Constant, Step, Table> wave = Constant{};

    double value(double t) const {
        if (std::holds_alternative<Constant>(wave)) return std::get<Constant>(wave).level;
        if (std::holds_alternative<Step>(wave)) {
            const auto& s = std::get<Step>(wave);
            return t >= s.t0 ? s.level : 0.0;
        }
        const auto& pts = std::get<Table>(wave).points;
        if (pts.empty()) return 0.0;
        if (t <= pts.front().first) return pts.front().second;
        if (t >= pts.back().first) return pts.back().second;
        for (std::size_t i = 1; i < pts.size(); ++i) {
            if (t <= pts[i].first) {
                const auto& [t0, v0] = pts[i - 1];
                const auto& [t1, v1] = pts[i];
                double u = (t - t0) / (t1 - t0);
                return v0 + u * (v1 - v0);
            }
        }
        return pts.back().second;
    }
};

struct SimConfig {
    double dt = 1e-6;    // seconds, fixed step
    double t_end = 1e-3; // seconds; 0 means "initial sample only"
    int record_stride = 1;
    std::map<std::string, InputDrive> inputs;

    void validate() const {
        if (!(dt > 0.0) || !std::isfinite(dt)) throw SchemaError("dt must be positive");
        if (!(t_end >= 0.0) || !std::isfinite(t_end)) throw SchemaError("t_end must be >= 0");
        if (t_end > 0.0 && dt > t_end) throw SchemaError("dt must not exceed t_end");
        if (t_end / dt > 1e9) throw SchemaError("step count exceeds 1e9");
        if (record_stride < 1) throw SchemaError("record_stride must be >= 1");
    }

    std::int64_t steps() const { return std::llround(t_end / dt); }

    double input_value(const std::string& name, double t) const {
        auto it = inputs.find(name);
        return it == inputs.end() ? 0.0 : it->second.value(t);
    }
};

struct TraceEvent {
    double t = 0.0;
    std::string kind;   // RangeViolation | DenominatorFloor | NonFiniteState
    std::string detail; // dimension / block
};

struct Trace {
    std::vector<double> times;
    std::vector<std::string> state_names;
    std::vector<std::vector<double>> values; // [state][sample], amperes
    std::vector<TraceEvent> events;
    bool aborted = false;

    std::size_t samples() const { return times.size(); }
};

// ---------------------------------------------------------------------------
// Branch-current recovery
// ---------------------------------------------------------------------------

/// Runtime state of one NBDS core: the bilateral output current
/// I_out = I_B - I_A, the conserved branch sum S = sqrt(I_A)+sqrt(I_B) fixed
/// by the initialization circuit, and the capacitor current I_Cin driving it.
struct NbdsState {
    double I_out = 0.0; // amperes, |I_out| <= S^2
    double S = 0.0;     // sqrt(amperes)
    double I_Cin = 0.0; // amperes
};

/// Inverts I_out = I_B - I_A under the conserved sum sqrt(I_A)+sqrt(I_B)=S.
/// Throws RangeViolationError when |I_out| > S^2 (a branch would cut off).
inline std::pair<double, double> recover_branch_currents(double i_out, double S) {
    if (!(S > 0.0) || !std::isfinite(S)) throw std::invalid_argument("S must be positive");
    if (std::fabs(i_out) > S * S) throw RangeViolationError(i_out, S);
    const double q = i_out / S;
    double sa = 0.5 * (S - q);
    double sb = 0.5 * (S + q);
    if (sa < 0.0) sa = 0.0;
    if (sb < 0.0) sb = 0.0;
    return {sa * sa, sb * sb};
}

// ---------------------------------------------------------------------------
// Reference integrator
// ---------------------------------------------------------------------------

namespace detail {

template <typename Deriv>
Trace rk4_run(const SimConfig& cfg, std::vector<double> x, std::vector<std::string> names,
              Deriv&& deriv) {
    cfg.validate();
    Trace tr;
    tr.state_names = std::move(names);
    tr.values.resize(x.size());

    const std::int64_t steps = cfg.steps();
    const double h = cfg.dt;
    const std::size_t n = x.size();
    std::vector<double> k1(n), k2(n), k3(n), k4(n), tmp(n);

    auto record = [&](std::int64_t k) {
        tr.times.push_back(static_cast<double>(k) * h);
        for (std::size_t i = 0; i < n; ++i) tr.values[i].push_back(x[i]);
    };
    record(0);

    for (std::int64_t k = 0; k < steps; ++k) {
        const double t = static_cast<double>(k) * h;
        deriv(t, x, k1, true);
        for (std::size_t i = 0; i < n; ++i) tmp[i] = x[i] + 0.5 * h * k1[i];
        deriv(t + 0.5 * h, tmp, k2, false);
        for (std::size_t i = 0; i < n; ++i) tmp[i] = x[i] + 0.5 * h * k2[i];
        deriv(t + 0.5 * h, tmp, k3, false);
        for (std::size_t i = 0; i < n; ++i) tmp[i] = x[i] + h * k3[i];
        deriv(t + h, tmp, k4, false);
        for (std::size_t i = 0; i < n; ++i)
            x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);

        bool finite = true;
        for (double v : x)
            if (!std::isfinite(v)) finite = false;
        const double t_next = static_cast<double>(k + 1) * h;
        if (!finite) {
            tr.events.push_back({t_next, "NonFiniteState", ""});
            tr.aborted = true;
            return tr;
        }
        if ((k + 1) % cfg.record_stride == 0) record(k + 1);
    }
    return tr;
}

} // namespace detail

/// Classical fixed-step RK4 on dx_N/dt = F_N / tau_N for an
/// electrical-domain system.
inline Trace integrate_reference(const DynamicalSystem& system, const SimConfig& cfg) {
    system.validate();
    Env env;
    for (const auto& [p, v] : system.params) env[p] = v;

    std::vector<double> x0;
    std::vector<std::string> names;
    for (const auto& eq : system.states) {
        x0.push_back(eq.initial_value);
        names.push_back(eq.name);
    }

    auto deriv = [&, env](double t, const std::vector<double>& x, std::vector<double>& dx,
                          bool /*accepted_stage*/) mutable {
        for (std::size_t i = 0; i < system.states.size(); ++i) env[system.states[i].name] = x[i];
        for (const auto& in : system.inputs) env[in] = cfg.input_value(in, t);
        for (std::size_t i = 0; i < system.states.size(); ++i)
            dx[i] = eval_expr(system.states[i].rhs, env) / system.states[i].tau;
    };
    return detail::rk4_run(cfg, std::move(x0), std::move(names), deriv);
}

// ---------------------------------------------------------------------------
// Netlist dataflow evaluation
// ---------------------------------------------------------------------------

namespace detail {

struct NetlistEvaluator {
    const Netlist& nl;
    std::vector<int> nbds_blocks;  // by dimension
    std::vector<double> net_value;

    explicit NetlistEvaluator(const Netlist& netlist) : nl(netlist) {
        int dims = nl.count(BlockKind::Nbds);
        nbds_blocks.assign(dims, -1);
        for (const auto& b : nl.blocks)
            if (b.kind == BlockKind::Nbds) {
                if (b.dim < 0 || b.dim >= dims)
                    throw SchemaError("netlist NBDS dimensions are not contiguous");
                nbds_blocks[b.dim] = b.id;
            }
        net_value.assign(nl.nets.size(), 0.0);
    }

    double pin_sum(const std::vector<int>& pin) const {
        double s = 0.0;
        for (int n : pin) s += net_value[n];
        return s;
    }

    // One combinational pass; returns F per dimension. `floor_events` gets a
    // block name per MULT whose denominator hit the 1 pA floor.
    void propagate(const std::vector<double>& state, //
                   const std::function<double(const std::string&)>& input,
                   std::vector<double>& F, std::vector<std::string>* floor_events) {
        for (const auto& b : nl.blocks) {
            switch (b.kind) {
            case BlockKind::Nbds:
                net_value[b.output] = state[b.dim];
                break;
            case BlockKind::Input:
                net_value[b.output] = input(b.sym);
                break;
            case BlockKind::DcSource:
                net_value[b.output] = b.value;
                break;
            case BlockKind::Splitter:
                net_value[b.output] = pin_sum(b.inputs);
                break;
            case BlockKind::Mirror:
                net_value[b.output] = b.value * net_value[b.inputs[0]];
                break;
            case BlockKind::Mult: {
                double a = pin_sum(b.inputs);
                double c = pin_sum(b.inputs2);
                double d = pin_sum(b.den_inputs);
                if (std::fabs(d) < 1e-12) { // 1 pA denominator floor
                    if (floor_events) floor_events->push_back(b.name);
                    d = d < 0.0 ? -1e-12 : 1e-12;
                }
                net_value[b.output] = a * c / d;
                break;
            }
            case BlockKind::Output:
                break;
            }
        }
        for (std::size_t d = 0; d < nbds_blocks.size(); ++d) {
            const Block& b = nl.blocks[nbds_blocks[d]];
            F[d] = pin_sum(b.plus_inputs) - pin_sum(b.minus_inputs);
        }
    }
};

} // namespace detail

/// Evaluates the netlist's combinational dataflow once: given state and input
/// current values, returns F_N per dimension (the rail sums feeding each
/// NBDS core). Used by property tests and the netlist integrator.
inline std::vector<double> evaluate_netlist_rhs(const Netlist& netlist,
                                                const std::map<std::string, double>& state_values,
                                                const std::map<std::string, double>& input_values) {
    detail::NetlistEvaluator ev(netlist);
    std::vector<double> state(ev.nbds_blocks.size());
    for (std::size_t d = 0; d < ev.nbds_blocks.size(); ++d)
        state[d] = state_values.at(netlist.blocks[ev.nbds_blocks[d]].sym);
    std::vector<double> F(state.size());
    ev.propagate(
        state, [&](const std::string& s) { return input_values.count(s) ? input_values.at(s) : 0.0; },
        F, nullptr);
    return F;
}

/// Per-step hook for invariant checks: (t, dim, I_A, I_B, S).
using StepObserver = std::function<void(double, int, double, double, double)>;

/// Integrates the netlist's circuit dynamics with RK4 on the capacitor-
/// current equation. Range violations clamp I_out to +/- S^2 and log an
/// event; MULT denominator floors log DenominatorFloor events.
inline Trace integrate_netlist(const Netlist& netlist, const SimConfig& cfg,
                               const StepObserver& observer = {}) {
    cfg.validate();
    detail::NetlistEvaluator ev(netlist);
    const std::size_t dims = ev.nbds_blocks.size();
    if (dims == 0) throw SchemaError("netlist has no NBDS blocks");

    std::vector<double> x0(dims), S(dims), dcoef(dims), i_dc(dims), s2(dims);
    std::vector<std::string> names(dims);
    const double beta = netlist.beta();
    for (std::size_t d = 0; d < dims; ++d) {
        const Block& b = netlist.blocks[ev.nbds_blocks[d]];
        x0[d] = b.init_I_out;
        S[d] = b.S;
        s2[d] = b.S * b.S;
        i_dc[d] = b.bias.I_dc;
        if (!(b.S > 0.0)) throw MissingS(static_cast<int>(d));
        dcoef[d] = 2.0 * std::sqrt(netlist.k_n) / ((2.0 + beta) * b.bias.C);
        names[d] = b.sym.empty() ? "x" + std::to_string(d) : b.sym;
    }

    Trace tr;
    tr.state_names = names;
    tr.values.resize(dims);

    const std::int64_t steps = cfg.steps();
    const double h = cfg.dt;
    std::vector<double> x = x0, k1(dims), k2(dims), k3(dims), k4(dims), tmp(dims), F(dims);
    std::vector<bool> violating(dims, false);
    std::vector<std::string> floors;

    auto record = [&](std::int64_t k) {
        tr.times.push_back(static_cast<double>(k) * h);
        for (std::size_t d = 0; d < dims; ++d) tr.values[d].push_back(x[d]);
    };

    // One derivative evaluation along the circuit route: recover branch
    // currents, form I_Cin = F*I_dc/(sqrt(I_A)+sqrt(I_B)), then
    // dI_out/dt = (sqrt(I_A)+sqrt(I_B)) * 2 sqrt(k_n) I_Cin / ((2+beta) C).
    auto deriv = [&](double t, const std::vector<double>& xs, std::vector<double>& dx,
                     bool accepted_stage) {
        for (std::size_t d = 0; d < dims; ++d) {
            double xc = xs[d];
            if (xc > s2[d]) xc = s2[d];
            if (xc < -s2[d]) xc = -s2[d];
            tmp[d] = xc;
        }
        std::vector<std::string>* fl = accepted_stage ? &floors : nullptr;
        ev.propagate(
            tmp, [&](const std::string& s) { return cfg.input_value(s, t); }, F, fl);
        for (std::size_t d = 0; d < dims; ++d) {
            NbdsState core{tmp[d], S[d], 0.0};
            auto [ia, ib] = recover_branch_currents(core.I_out, core.S);
            const double ssum = std::sqrt(ia) + std::sqrt(ib);
            core.I_Cin = F[d] * i_dc[d] / ssum;
            dx[d] = ssum * dcoef[d] * core.I_Cin;
            if (accepted_stage && observer)
                observer(t, static_cast<int>(d), ia, ib, core.S);
        }
    };

    record(0);
    std::vector<double> stage(dims);
    for (std::int64_t k = 0; k < steps; ++k) {
        const double t = static_cast<double>(k) * h;
        floors.clear();
        deriv(t, x, k1, true);
        for (const auto& name : floors)
            tr.events.push_back({t, "DenominatorFloor", name});

        for (std::size_t i = 0; i < dims; ++i) stage[i] = x[i] + 0.5 * h * k1[i];
        deriv(t + 0.5 * h, stage, k2, false);
        for (std::size_t i = 0; i < dims; ++i) stage[i] = x[i] + 0.5 * h * k2[i];
        deriv(t + 0.5 * h, stage, k3, false);
        for (std::size_t i = 0; i < dims; ++i) stage[i] = x[i] + h * k3[i];
        deriv(t + h, stage, k4, false);
        for (std::size_t i = 0; i < dims; ++i)
            x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);

        const double t_next = static_cast<double>(k + 1) * h;
        bool finite = true;
        for (double v : x)
            if (!std::isfinite(v)) finite = false;
        if (!finite) {
            tr.events.push_back({t_next, "NonFiniteState", ""});
            tr.aborted = true;
            return tr;
        }
        for (std::size_t d = 0; d < dims; ++d) {
            if (std::fabs(x[d]) > s2[d]) {
                if (!violating[d])
                    tr.events.push_back({t_next, "RangeViolation", names[d]});
                violating[d] = true;
                x[d] = x[d] > 0.0 ? s2[d] : -s2[d];
            } else {
                violating[d] = false;
            }
        }
        if ((k + 1) % cfg.record_stride == 0) record(k + 1);
    }
    return tr;
}

// ---------------------------------------------------------------------------
// Trace comparison and period estimation
// ---------------------------------------------------------------------------

/// Mean spacing of upward threshold crossings (linear interpolation between
/// samples); nullopt with fewer than 3 crossings.
inline std::optional<double> estimate_period(const Trace& trace, std::size_t state,
                                             double threshold) {
    if (state >= trace.values.size()) return std::nullopt;
    const auto& v = trace.values[state];
    std::vector<double> crossings;
    for (std::size_t i = 1; i < v.size(); ++i) {
        if (v[i - 1] < threshold && v[i] >= threshold) {
            double u = (threshold - v[i - 1]) / (v[i] - v[i - 1]);
            crossings.push_back(trace.times[i - 1] + u * (trace.times[i] - trace.times[i - 1]));
        }
    }
    if (crossings.size() < 3) return std::nullopt;
    return (crossings.back() - crossings.front()) / static_cast<double>(crossings.size() - 1);
}

struct CompareReport {
    double rmse = 0.0;        // amperes, pooled over states
    double max_abs_err = 0.0; // amperes
    double rel_rmse = 0.0;    // rmse / reference RMS
    std::optional<double> period_ref;
    std::optional<double> period_test;
};

/// Sample-by-sample comparison on matched grids; periods come from the first
/// state's upward crossings of the reference midrange.
inline CompareReport compare_traces(const Trace& ref, const Trace& test) {
    if (ref.samples() != test.samples())
        throw GridMismatch("sample counts differ: " + std::to_string(ref.samples()) + " vs " +
                           std::to_string(test.samples()));
    if (ref.values.size() != test.values.size())
        throw GridMismatch("state counts differ");
    for (std::size_t i = 0; i < ref.times.size(); ++i)
        if (std::fabs(ref.times[i] - test.times[i]) >
            1e-12 * std::max(1.0, std::fabs(ref.times[i])))
            throw GridMismatch("time grids differ at sample " + std::to_string(i));

    CompareReport rep;
    double se = 0.0, ref_sq = 0.0;
    std::size_t n = 0;
    for (std::size_t s = 0; s < ref.values.size(); ++s) {
        for (std::size_t i = 0; i < ref.values[s].size(); ++i) {
            const double e = test.values[s][i] - ref.values[s][i];
            se += e * e;
            ref_sq += ref.values[s][i] * ref.values[s][i];
            rep.max_abs_err = std::max(rep.max_abs_err, std::fabs(e));
            ++n;
        }
    }
    if (n > 0) {
        rep.rmse = std::sqrt(se / static_cast<double>(n));
        const double ref_rms = std::sqrt(ref_sq / static_cast<double>(n));
        rep.rel_rmse = ref_rms > 0.0 ? rep.rmse / ref_rms : (rep.rmse > 0.0 ? INFINITY : 0.0);
    }

    if (!ref.values.empty() && !ref.values[0].empty()) {
        auto [lo, hi] = std::minmax_element(ref.values[0].begin(), ref.values[0].end());
        const double thr = 0.5 * (*lo + *hi);
        rep.period_ref = estimate_period(ref, 0, thr);
        rep.period_test = estimate_period(test, 0, thr);
    }
    return rep;
}

} // namespace nbds
