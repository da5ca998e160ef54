#pragma once

// Compiles an electrical-domain dynamical system into a structural NBDS
// netlist. One NBDS core per state; the right-hand side splits into +/-
// terms that feed the core's rail pins. Products of signals become MULT
// chains (out = in1*in2/in3), constant coefficients become mirror gain
// ratios, and compile-time constants (parameters, literals) become DC
// sources where a MULT operand slot needs them.

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "nbds/device.hpp"
#include "nbds/errors.hpp"
#include "nbds/expr.hpp"
#include "nbds/netlist.hpp"
#include "nbds/system.hpp"

namespace nbds {

namespace detail {

class Synthesizer {
public:
    Synthesizer(const DynamicalSystem& sys, const DeviceParams& dev, const UnitMap& units)
        : sys_(sys), dev_(dev), units_(units) {}

    Netlist run() {
        sys_.validate();
        dev_.validate();
        nl_.name = sys_.name;
        nl_.k_n = dev_.k_n;
        nl_.k_p = dev_.k_p;

        std::vector<Diagnostic> diags;
        for (const auto& eq : sys_.states)
            for (auto& d : validate_synthesizable(eq.rhs))
                diags.push_back({eq.name + ": " + d.where, d.message});
        if (!diags.empty()) throw UnsynthesizableExpression(std::move(diags));

        // one NBDS + observation port per state, ports consume first
        for (std::size_t i = 0; i < sys_.states.size(); ++i) {
            const auto& eq = sys_.states[i];
            int out = new_net(eq.name, Polarity::BilateralPair);
            int b = new_block(BlockKind::Nbds, "nbds_" + eq.name);
            nl_.blocks[b].output = out;
            nl_.blocks[b].dim = static_cast<int>(i);
            nl_.blocks[b].sym = eq.name;
            nl_.blocks[b].bias = compute_bias(eq.tau / units_.time_scale, units_, dev_,
                                              static_cast<int>(i));
            nl_.blocks[b].init_I_out = eq.initial_value;
            nl_.blocks[b].S = pick_S(static_cast<int>(i), nl_.blocks[b].bias);
            nbds_block_.push_back(b);
            state_net_[eq.name] = out;

            int port = new_block(BlockKind::Output, "out_" + eq.name);
            nl_.blocks[port].sym = eq.name;
            nl_.blocks[port].inputs = {consume(out, 1.0)};
        }

        // external inputs pass through splitter blocks
        for (const auto& in : sys_.inputs) {
            int raw = new_net(in + "_raw", Polarity::BilateralPair);
            int ib = new_block(BlockKind::Input, "in_" + in);
            nl_.blocks[ib].output = raw;
            nl_.blocks[ib].sym = in;
            int split_out = new_net(in, Polarity::BilateralPair);
            int sb = new_block(BlockKind::Splitter, "split_" + in);
            nl_.blocks[sb].inputs = {consume(raw, 1.0)};
            nl_.blocks[sb].output = split_out;
            input_net_[in] = split_out;
        }

        // rails, in state order then term order
        for (std::size_t i = 0; i < sys_.states.size(); ++i) {
            TermSplit split = split_terms(sys_.states[i].rhs);
            for (const auto& t : split.positive_terms) attach(static_cast<int>(i), true, t);
            for (const auto& t : split.negative_terms) attach(static_cast<int>(i), false, t);
        }
        return std::move(nl_);
    }

private:
    // one rail contribution: current nets with gain ratios plus an optional
    // constant current
    struct Operand {
        std::vector<std::pair<int, double>> nets; // (net id, gain)
        double dc = 0.0;                          // amperes, signed
        std::string dc_label;
        bool pure_dc() const { return nets.empty(); }
    };

    struct DenEntry {
        bool is_const = true;
        double value = 1.0;  // constant divisor value
        std::string label;
        ExprPtr expr;        // signal sum / signal when !is_const
    };

    struct Chain {
        double coeff = 1.0;
        std::string coeff_label;
        std::vector<Operand> operands; // numerator signal operands, source order
        std::vector<DenEntry> dens;    // source order
    };

    // --- netlist assembly primitives ---

    int new_net(std::string name, Polarity pol) {
        int id = static_cast<int>(nl_.nets.size());
        nl_.nets.push_back({id, std::move(name), pol});
        consumers_.push_back(0);
        return id;
    }

    int new_block(BlockKind k, std::string name) {
        Block b;
        b.kind = k;
        b.id = static_cast<int>(nl_.blocks.size());
        b.name = std::move(name);
        nl_.blocks.push_back(std::move(b));
        return nl_.blocks.back().id;
    }

    // Consumes a net for one pin. The first consumer reads directly (gain 1);
    // every further read, and any read with a gain ratio, goes through a
    // mirror copy.
    int consume(int net, double gain) {
        if (consumers_[net] == 0 && gain == 1.0) {
            ++consumers_[net];
            return net;
        }
        ++consumers_[net];
        ++mirror_seq_;
        int out = new_net(nl_.nets[net].name + "_m" + std::to_string(mirror_seq_),
                          nl_.nets[net].polarity);
        int m = new_block(BlockKind::Mirror, "mirror" + std::to_string(mirror_seq_));
        nl_.blocks[m].inputs = {net};
        nl_.blocks[m].output = out;
        nl_.blocks[m].value = gain;
        ++consumers_[out];
        return out;
    }

    int dc_source(double amps, const std::string& label) {
        ++dc_seq_;
        std::string name = "dc" + std::to_string(dc_seq_) + (label.empty() ? "" : "_" + label);
        int b = new_block(BlockKind::DcSource, name);
        int out = new_net(name, Polarity::Plus);
        nl_.blocks[b].output = out;
        nl_.blocks[b].value = amps;
        return out;
    }

    double pick_S(int dim, const NbdsBias& bias) const {
        if (!dev_.S_per_dim.empty()) {
            if (dim >= static_cast<int>(dev_.S_per_dim.size())) throw MissingS(dim);
            return dev_.S_per_dim[dim];
        }
        return 2.0 * std::sqrt(10.0 * bias.I_dc); // headroom S^2 = 40*I_dc
    }

    // --- expression flattening ---

    bool signal_free(const ExprPtr& e) const {
        if (e->kind == ExprKind::Symbol) return sys_.is_param(e->name);
        for (const auto& c : e->children)
            if (!signal_free(c)) return false;
        return true;
    }

    double const_value(const ExprPtr& e) const {
        Env env;
        for (const auto& [p, v] : sys_.params) env[p] = v;
        return eval_expr(e, env);
    }

    std::string const_label(const ExprPtr& e) const {
        if (e->kind == ExprKind::Symbol) return e->name;
        return "";
    }

    int signal_net(const std::string& name) const {
        auto it = state_net_.find(name);
        if (it != state_net_.end()) return it->second;
        return input_net_.at(name);
    }

    void build_chain(const ExprPtr& e, Chain& chain) {
        switch (e->kind) {
        case ExprKind::Negate:
            chain.coeff = -chain.coeff;
            build_chain(e->children[0], chain);
            return;
        case ExprKind::Mul:
            for (const auto& c : e->children) build_factor(c, chain);
            return;
        case ExprKind::Div:
            build_chain(e->children[0], chain);
            build_den(e->children[1], chain);
            return;
        default:
            build_factor(e, chain);
            return;
        }
    }

    void build_factor(const ExprPtr& e, Chain& chain) {
        if (signal_free(e)) { // compile-time constant factor
            chain.coeff *= const_value(e);
            if (chain.coeff_label.empty()) chain.coeff_label = const_label(e);
            return;
        }
        switch (e->kind) {
        case ExprKind::Symbol:
            chain.operands.push_back(Operand{{{signal_net(e->name), 1.0}}, 0.0, ""});
            return;
        case ExprKind::Negate:
            chain.coeff = -chain.coeff;
            build_factor(e->children[0], chain);
            return;
        case ExprKind::Mul:
            for (const auto& c : e->children) build_factor(c, chain);
            return;
        case ExprKind::PowInt:
            for (int i = 0; i < e->exponent; ++i) build_factor(e->children[0], chain);
            return;
        case ExprKind::Add:
            chain.operands.push_back(sum_operand(e));
            return;
        case ExprKind::Div: { // nested quotient keeps its own MULT chain
            Operand sub = compile_term(e);
            chain.operands.push_back(std::move(sub));
            return;
        }
        default:
            throw UnsynthesizableExpression({{to_string(e), "unsupported factor"}});
        }
    }

    void build_den(const ExprPtr& e, Chain& chain) {
        switch (e->kind) {
        case ExprKind::Mul: // keep divisor factors separate, one per MULT slot
            for (const auto& c : e->children) build_den(c, chain);
            return;
        case ExprKind::PowInt:
            for (int i = 0; i < e->exponent; ++i) build_den(e->children[0], chain);
            return;
        default:
            break;
        }
        if (signal_free(e)) {
            chain.dens.push_back({true, const_value(e), const_label(e), nullptr});
            return;
        }
        switch (e->kind) {
        case ExprKind::Add:
        case ExprKind::Symbol:
            chain.dens.push_back({false, 0.0, "", e});
            return;
        default:
            throw UnsynthesizableExpression({{to_string(e), "unrealizable denominator"}});
        }
    }

    // A sum used as a single current operand: signals and constants merge on
    // the same summing pin.
    Operand sum_operand(const ExprPtr& e) {
        Operand op;
        accumulate_sum(e, 1.0, op);
        return op;
    }

    void accumulate_sum(const ExprPtr& e, double sign, Operand& op) {
        if (signal_free(e)) {
            op.dc += sign * const_value(e);
            if (op.dc_label.empty()) op.dc_label = const_label(e);
            return;
        }
        switch (e->kind) {
        case ExprKind::Add:
            for (const auto& c : e->children) accumulate_sum(c, sign, op);
            return;
        case ExprKind::Negate:
            accumulate_sum(e->children[0], -sign, op);
            return;
        case ExprKind::Symbol:
            op.nets.push_back({signal_net(e->name), sign});
            return;
        default: { // product / quotient addend compiles as its own term
            Operand sub = compile_term(e);
            for (auto& [n, g] : sub.nets) op.nets.push_back({n, sign * g});
            op.dc += sign * sub.dc;
            return;
        }
        }
    }

    // --- MULT chain realization ---

    std::vector<int> wire_operand(const Operand& op) {
        std::vector<int> pin;
        for (const auto& [net, gain] : op.nets) pin.push_back(consume(net, gain));
        if (op.dc != 0.0) pin.push_back(consume(dc_source(op.dc, op.dc_label), 1.0));
        return pin;
    }

    std::vector<int> wire_den(const DenEntry& d) {
        if (d.is_const) return {consume(dc_source(d.value, d.label), 1.0)};
        Operand op = sum_operand(d.expr);
        std::vector<int> pin;
        for (const auto& [net, gain] : op.nets) pin.push_back(consume(net, gain));
        if (op.dc != 0.0) pin.push_back(consume(dc_source(op.dc, op.dc_label), 1.0));
        return pin;
    }

    Operand compile_term(const ExprPtr& term) {
        const std::string key = to_string(term);
        auto hit = memo_.find(key);
        if (hit != memo_.end()) return hit->second;

        Chain chain;
        build_chain(term, chain);
        Operand out = realize(chain);
        memo_.emplace(key, out);
        return out;
    }

    Operand realize(Chain& chain) {
        const bool negative = chain.coeff < 0.0;
        double coeff = std::fabs(chain.coeff);

        std::vector<DenEntry> sig_dens;
        std::vector<DenEntry> const_dens;
        for (auto& d : chain.dens) (d.is_const ? const_dens : sig_dens).push_back(d);
        // the innermost (rightmost) constant divisor pairs with the first MULT
        std::reverse(const_dens.begin(), const_dens.end());

        const int n_sig = static_cast<int>(chain.operands.size());
        const int mults = std::max(n_sig - 1, static_cast<int>(sig_dens.size()));

        if (mults <= 0) {
            double gain = coeff;
            for (const auto& d : const_dens) gain /= d.value;
            if (negative) gain = -gain;
            if (n_sig == 0) return Operand{{}, gain, chain.coeff_label};
            Operand op = chain.operands[0];
            for (auto& [n, g] : op.nets) g *= gain;
            op.dc *= gain;
            return op;
        }

        // constant divisors beyond the available in3 slots fold into the
        // coefficient so they end up inside a DC operand, not a mirror ratio
        const int const_slots = mults - static_cast<int>(sig_dens.size());
        while (static_cast<int>(const_dens.size()) > std::max(const_slots, 0)) {
            coeff /= const_dens.back().value;
            const_dens.pop_back();
        }

        std::size_t next_sig_den = 0, next_const_den = 0;
        bool coeff_folded = (coeff == 1.0);

        Operand acc;
        int next_operand = 0;
        if (n_sig > 0) {
            acc = chain.operands[next_operand++];
        } else {
            acc = Operand{{}, coeff, chain.coeff_label};
            coeff_folded = true;
        }

        for (int m = 0; m < mults; ++m) {
            Operand in2;
            if (next_operand < n_sig) {
                in2 = chain.operands[next_operand++];
            } else {
                in2 = Operand{{}, coeff_folded ? 1.0 : coeff, chain.coeff_label};
                coeff_folded = true;
            }
            DenEntry d3;
            if (next_sig_den < sig_dens.size()) {
                d3 = sig_dens[next_sig_den++];
            } else if (next_const_den < const_dens.size()) {
                d3 = const_dens[next_const_den++];
                if (!coeff_folded) { // out scales by coeff <=> divisor shrinks by it
                    d3.value /= coeff;
                    coeff_folded = true;
                }
            } else {
                d3 = DenEntry{true, coeff_folded ? 1.0 : 1.0 / coeff, "unit", nullptr};
                coeff_folded = true;
            }

            auto p1 = wire_operand(acc);
            auto p2 = wire_operand(in2);
            auto p3 = wire_den(d3);
            ++mult_seq_;
            int out = new_net("mult" + std::to_string(mult_seq_), Polarity::BilateralPair);
            int mb = new_block(BlockKind::Mult, "mult" + std::to_string(mult_seq_));
            nl_.blocks[mb].inputs = std::move(p1);
            nl_.blocks[mb].inputs2 = std::move(p2);
            nl_.blocks[mb].den_inputs = std::move(p3);
            nl_.blocks[mb].output = out;
            acc = Operand{{{out, 1.0}}, 0.0, ""};
        }

        double gain = coeff_folded ? 1.0 : coeff;
        if (negative) gain = -gain;
        for (auto& [n, g] : acc.nets) g *= gain;
        acc.dc *= gain;
        return acc;
    }

    void attach(int dim, bool positive, const ExprPtr& term) {
        Operand op = compile_term(term);
        const int nb = nbds_block_[dim];
        for (const auto& [net, gain] : op.nets) {
            bool plus = positive == (gain >= 0.0);
            int wired = consume(net, std::fabs(gain));
            auto& pin = plus ? nl_.blocks[nb].plus_inputs : nl_.blocks[nb].minus_inputs;
            pin.push_back(wired);
        }
        if (op.dc != 0.0) {
            bool plus = positive == (op.dc >= 0.0);
            int wired = consume(dc_source(std::fabs(op.dc), op.dc_label), 1.0);
            auto& pin = plus ? nl_.blocks[nb].plus_inputs : nl_.blocks[nb].minus_inputs;
            pin.push_back(wired);
        }
    }

    const DynamicalSystem& sys_;
    const DeviceParams& dev_;
    const UnitMap& units_;
    Netlist nl_;
    std::vector<int> consumers_;
    std::vector<int> nbds_block_;
    std::map<std::string, int> state_net_;
    std::map<std::string, int> input_net_;
    std::map<std::string, Operand> memo_;
    int mirror_seq_ = 0, mult_seq_ = 0, dc_seq_ = 0;
};

} // namespace detail

/// Compiles an electrical-domain system into a block netlist. The system's
/// taus are circuit seconds (i.e. the output of to_electrical).
inline Netlist synthesize(const DynamicalSystem& system, const DeviceParams& device,
                          const UnitMap& units) {
    return detail::Synthesizer(system, device, units).run();
}

} // namespace nbds
