#pragma once

// Structural block netlist: NBDS integrator cores, three-current MULT
// blocks (out = in1*in2/in3), splitters, current mirrors, DC sources and
// ports, wired through polarity-annotated current nets.
//
// Connectivity model: every net has exactly one driving block; summation
// happens at summing pins (NBDS rail inputs and every MULT pin), which accept
// several nets and read their sum. A net consumed more than once is copied
// through MIRROR blocks; only the first consumer reads it directly.

#include <algorithm>
#include <map>
#include <queue>
#include <set>
#include <string>
#include <vector>

#include "json.hpp"

#include "nbds/device.hpp"
#include "nbds/errors.hpp"

namespace nbds {

enum class BlockKind { Nbds, Mult, Splitter, Mirror, DcSource, Input, Output };

enum class Polarity { Plus, Minus, BilateralPair };

inline const char* to_label(BlockKind k) {
    switch (k) {
    case BlockKind::Nbds: return "NBDS";
    case BlockKind::Mult: return "MULT";
    case BlockKind::Splitter: return "SPLITTER";
    case BlockKind::Mirror: return "MIRROR";
    case BlockKind::DcSource: return "DCSOURCE";
    case BlockKind::Input: return "INPUT";
    case BlockKind::Output: return "OUTPUT";
    }
    return "?";
}

inline const char* to_label(Polarity p) {
    switch (p) {
    case Polarity::Plus: return "plus";
    case Polarity::Minus: return "minus";
    case Polarity::BilateralPair: return "bilateral-pair";
    }
    return "?";
}

struct Net {
    int id = -1;
    std::string name;
    Polarity polarity = Polarity::BilateralPair;
};

struct Block {
    BlockKind kind;
    int id = -1;
    std::string name;

    std::vector<int> inputs;       // Mult in1 summing pin; Mirror/Splitter/Output source
    std::vector<int> inputs2;      // Mult in2 summing pin
    std::vector<int> den_inputs;   // Mult in3 summing pin
    std::vector<int> plus_inputs;  // Nbds plus rail summing pin
    std::vector<int> minus_inputs; // Nbds minus rail summing pin
    int output = -1;               // driven net, -1 for Output ports

    double value = 0.0; // DcSource amperes; Mirror gain ratio

    // Nbds payload
    int dim = -1;
    NbdsBias bias;
    double S = 0.0;          // sqrt(A), conserved sqrt(I_A)+sqrt(I_B)
    double init_I_out = 0.0; // amperes
    std::string sym;         // Nbds/Input/Output: model symbol
};

struct Netlist {
    std::string name;
    double k_n = 0.0;
    double k_p = 0.0;
    std::vector<Block> blocks;
    std::vector<Net> nets;

    double beta() const { return std::sqrt(k_n / k_p); }

    std::map<std::string, int> census() const {
        std::map<std::string, int> c;
        for (const auto& b : blocks) ++c[to_label(b.kind)];
        return c;
    }

    int count(BlockKind k) const {
        int n = 0;
        for (const auto& b : blocks)
            if (b.kind == k) ++n;
        return n;
    }

    /// All input-pin references of a block, in pin order.
    static std::vector<int> consumed_nets(const Block& b) {
        std::vector<int> all = b.inputs;
        all.insert(all.end(), b.inputs2.begin(), b.inputs2.end());
        all.insert(all.end(), b.den_inputs.begin(), b.den_inputs.end());
        all.insert(all.end(), b.plus_inputs.begin(), b.plus_inputs.end());
        all.insert(all.end(), b.minus_inputs.begin(), b.minus_inputs.end());
        return all;
    }

    /// consumer count per net id (pin references across all blocks)
    std::vector<int> consumer_counts() const {
        std::vector<int> counts(nets.size(), 0);
        for (const auto& b : blocks)
            for (int n : consumed_nets(b))
                if (n >= 0 && n < static_cast<int>(counts.size())) ++counts[n];
        return counts;
    }

    /// driver block id per net id, -1 when driverless
    std::vector<int> drivers() const {
        std::vector<int> drv(nets.size(), -1);
        for (const auto& b : blocks)
            if (b.output >= 0 && b.output < static_cast<int>(drv.size())) drv[b.output] = b.id;
        return drv;
    }
};

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

inline std::vector<Diagnostic> validate_netlist(const Netlist& nl) {
    std::vector<Diagnostic> diags;
    const auto drv = nl.drivers();

    auto net_name = [&](int id) {
        return id >= 0 && id < static_cast<int>(nl.nets.size()) ? nl.nets[id].name
                                                                : "net#" + std::to_string(id);
    };

    // well-formed references and single drivers
    for (const auto& b : nl.blocks) {
        for (int n : Netlist::consumed_nets(b))
            if (n < 0 || n >= static_cast<int>(nl.nets.size()))
                diags.push_back({b.name, "DanglingPin: references unknown net " + std::to_string(n)});
    }
    for (std::size_t i = 0; i < nl.nets.size(); ++i) {
        int count = 0;
        for (const auto& b : nl.blocks)
            if (b.output == static_cast<int>(i)) ++count;
        if (count > 1)
            diags.push_back({nl.nets[i].name, "MultipleDrivers: net has " + std::to_string(count)});
    }

    // exactly one NBDS per dimension
    std::set<int> dims;
    int nbds_count = 0;
    for (const auto& b : nl.blocks)
        if (b.kind == BlockKind::Nbds) {
            ++nbds_count;
            if (!dims.insert(b.dim).second)
                diags.push_back({b.name, "DuplicateDimension: " + std::to_string(b.dim)});
        }
    for (int d = 0; d < nbds_count; ++d)
        if (!dims.count(d))
            diags.push_back({"netlist", "MissingDimension: no NBDS for dim " + std::to_string(d)});

    // bias ratio law per NBDS
    for (const auto& b : nl.blocks) {
        if (b.kind != BlockKind::Nbds) continue;
        if (!(b.bias.C > 0.0) || !(b.bias.I_dc > 0.0) || !(b.bias.tau_circuit > 0.0) ||
            !(b.S > 0.0)) {
            diags.push_back({b.name, "NonPositiveBias"});
            continue;
        }
        const double expect =
            2.0 * b.bias.tau_circuit * std::sqrt(nl.k_n) / (2.0 + nl.beta());
        const double got = b.bias.C / b.bias.I_dc;
        if (std::fabs(got - expect) > 1e-12 * std::fabs(expect))
            diags.push_back({b.name, "BiasRatioViolation: C/I_dc deviates from 2*tau*sqrt(k_n)/(2+beta)"});
    }

    // every MULT denominator pin must sum in at least one DC source
    // (positivity guard); mirrors are traced back to their origin.
    auto origin_kind = [&](int net) {
        int guard = 0;
        while (net >= 0 && guard++ < 1024) {
            int d = drv[net];
            if (d < 0) return BlockKind::Output; // driverless; caught elsewhere
            const Block& b = nl.blocks[d];
            if (b.kind == BlockKind::Mirror) {
                net = b.inputs.empty() ? -1 : b.inputs[0];
                continue;
            }
            return b.kind;
        }
        return BlockKind::Output;
    };
    for (const auto& b : nl.blocks) {
        if (b.kind != BlockKind::Mult) continue;
        bool has_dc = false;
        for (int n : b.den_inputs)
            if (origin_kind(n) == BlockKind::DcSource) has_dc = true;
        if (!has_dc) diags.push_back({b.name, "PositivityGuardMissing: denominator has no DC source"});
    }

    // mirror discipline: at most one non-mirror consumer per net
    {
        std::vector<int> direct(nl.nets.size(), 0);
        for (const auto& b : nl.blocks) {
            if (b.kind == BlockKind::Mirror) continue;
            for (int n : Netlist::consumed_nets(b))
                if (n >= 0 && n < static_cast<int>(direct.size())) ++direct[n];
        }
        for (std::size_t i = 0; i < direct.size(); ++i)
            if (direct[i] > 1)
                diags.push_back({net_name(static_cast<int>(i)),
                                 "MirrorMissing: net has " + std::to_string(direct[i]) +
                                     " direct consumers"});
    }

    // dataflow order: combinational blocks may only read nets driven by
    // earlier blocks (NBDS rails and Output taps close the loop and are
    // exempt on the reading side; NBDS outputs are state values)
    for (const auto& b : nl.blocks) {
        if (b.kind == BlockKind::Nbds || b.kind == BlockKind::Output) continue;
        for (int n : Netlist::consumed_nets(b)) {
            if (n < 0 || n >= static_cast<int>(drv.size()) || drv[n] < 0) continue;
            if (drv[n] > b.id)
                diags.push_back({b.name, "ForwardReference: reads " + net_name(n) +
                                             " driven by a later block"});
        }
    }

    // connectivity: all blocks reachable from sources (inputs, DC sources,
    // NBDS state outputs)
    {
        std::vector<bool> net_live(nl.nets.size(), false);
        std::queue<int> work;
        for (const auto& b : nl.blocks)
            if ((b.kind == BlockKind::Input || b.kind == BlockKind::DcSource ||
                 b.kind == BlockKind::Nbds) &&
                b.output >= 0) {
                net_live[b.output] = true;
                work.push(b.output);
            }
        bool changed = true;
        while (changed) {
            changed = false;
            for (const auto& b : nl.blocks) {
                if (b.output < 0 || net_live[b.output]) continue;
                auto in = Netlist::consumed_nets(b);
                if (in.empty()) continue;
                bool all = std::all_of(in.begin(), in.end(), [&](int n) {
                    return n >= 0 && n < static_cast<int>(net_live.size()) && net_live[n];
                });
                if (all) {
                    net_live[b.output] = true;
                    changed = true;
                }
            }
        }
        for (const auto& b : nl.blocks) {
            if (b.kind != BlockKind::Nbds) continue;
            for (int n : Netlist::consumed_nets(b))
                if (n >= 0 && n < static_cast<int>(net_live.size()) && !net_live[n])
                    diags.push_back({b.name, "Disconnected: rail net " + net_name(n) +
                                                 " is not fed from sources"});
        }
    }

    return diags;
}

// ---------------------------------------------------------------------------
// JSON round-trip (schema nbds-netlist/1)
// ---------------------------------------------------------------------------

inline std::string export_json(const Netlist& nl) {
    nlohmann::json j;
    j["schema"] = "nbds-netlist/1";
    j["name"] = nl.name;
    j["k_n"] = nl.k_n;
    j["k_p"] = nl.k_p;
    j["nets"] = nlohmann::json::array();
    for (const auto& n : nl.nets)
        j["nets"].push_back({{"id", n.id}, {"name", n.name}, {"polarity", to_label(n.polarity)}});
    j["blocks"] = nlohmann::json::array();
    for (const auto& b : nl.blocks) {
        nlohmann::json jb;
        jb["id"] = b.id;
        jb["kind"] = to_label(b.kind);
        jb["name"] = b.name;
        jb["inputs"] = b.inputs;
        jb["inputs2"] = b.inputs2;
        jb["den_inputs"] = b.den_inputs;
        jb["plus_inputs"] = b.plus_inputs;
        jb["minus_inputs"] = b.minus_inputs;
        jb["output"] = b.output;
        jb["value"] = b.value;
        if (b.kind == BlockKind::Nbds) {
            jb["dim"] = b.dim;
            jb["S"] = b.S;
            jb["init_I_out"] = b.init_I_out;
            jb["bias"] = {{"C", b.bias.C}, {"I_dc", b.bias.I_dc}, {"tau", b.bias.tau_circuit}};
        }
        if (!b.sym.empty()) jb["sym"] = b.sym;
        j["blocks"].push_back(jb);
    }
    return j.dump(2) + "\n";
}

inline Netlist import_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(std::string("netlist file is not valid JSON: ") + e.what());
    }
    Netlist nl;
    try {
        if (j.at("schema").get<std::string>() != "nbds-netlist/1")
            throw SchemaError("unsupported netlist schema");
        nl.name = j.at("name").get<std::string>();
        nl.k_n = j.at("k_n").get<double>();
        nl.k_p = j.at("k_p").get<double>();
        for (const auto& jn : j.at("nets")) {
            Net n;
            n.id = jn.at("id").get<int>();
            n.name = jn.at("name").get<std::string>();
            std::string pol = jn.at("polarity").get<std::string>();
            n.polarity = pol == "plus"    ? Polarity::Plus
                         : pol == "minus" ? Polarity::Minus
                                          : Polarity::BilateralPair;
            nl.nets.push_back(std::move(n));
        }
        for (const auto& jb : j.at("blocks")) {
            Block b;
            std::string kind = jb.at("kind").get<std::string>();
            if (kind == "NBDS") b.kind = BlockKind::Nbds;
            else if (kind == "MULT") b.kind = BlockKind::Mult;
            else if (kind == "SPLITTER") b.kind = BlockKind::Splitter;
            else if (kind == "MIRROR") b.kind = BlockKind::Mirror;
            else if (kind == "DCSOURCE") b.kind = BlockKind::DcSource;
            else if (kind == "INPUT") b.kind = BlockKind::Input;
            else if (kind == "OUTPUT") b.kind = BlockKind::Output;
            else throw SchemaError("unknown block kind '" + kind + "'");
            b.id = jb.at("id").get<int>();
            b.name = jb.at("name").get<std::string>();
            b.inputs = jb.at("inputs").get<std::vector<int>>();
            b.inputs2 = jb.at("inputs2").get<std::vector<int>>();
            b.den_inputs = jb.at("den_inputs").get<std::vector<int>>();
            b.plus_inputs = jb.at("plus_inputs").get<std::vector<int>>();
            b.minus_inputs = jb.at("minus_inputs").get<std::vector<int>>();
            b.output = jb.at("output").get<int>();
            b.value = jb.at("value").get<double>();
            if (b.kind == BlockKind::Nbds) {
                b.dim = jb.at("dim").get<int>();
                b.S = jb.at("S").get<double>();
                b.init_I_out = jb.at("init_I_out").get<double>();
                b.bias.C = jb.at("bias").at("C").get<double>();
                b.bias.I_dc = jb.at("bias").at("I_dc").get<double>();
                b.bias.tau_circuit = jb.at("bias").at("tau").get<double>();
            }
            if (jb.contains("sym")) b.sym = jb.at("sym").get<std::string>();
            nl.blocks.push_back(std::move(b));
        }
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(std::string("malformed netlist document: ") + e.what());
    }
    return nl;
}

// ---------------------------------------------------------------------------
// DOT export
// ---------------------------------------------------------------------------

inline const char* dot_shape(BlockKind k) {
    switch (k) {
    case BlockKind::Nbds: return "box";
    case BlockKind::Mult: return "trapezium";
    case BlockKind::Splitter: return "diamond";
    case BlockKind::Mirror: return "doublecircle"; // mirrors draw as double circles
    case BlockKind::DcSource: return "circle";
    case BlockKind::Input: return "invhouse";
    case BlockKind::Output: return "house";
    }
    return "box";
}

inline std::string export_dot(const Netlist& nl) {
    const auto drv = nl.drivers();
    std::string out = "digraph \"" + nl.name + "\" {\n  rankdir=LR;\n";
    for (const auto& b : nl.blocks) {
        std::string label = b.name;
        if (b.kind == BlockKind::DcSource)
            label += "\\n" + detail::format_double(b.value) + " A";
        if (b.kind == BlockKind::Mirror && b.value != 1.0)
            label += "\\nx" + detail::format_double(b.value);
        out += "  b" + std::to_string(b.id) + " [shape=" + dot_shape(b.kind) + ", label=\"" +
               label + "\"];\n";
    }
    auto edge = [&](int net, const Block& to, const char* style) {
        if (net < 0 || net >= static_cast<int>(nl.nets.size())) return;
        int d = drv[net];
        if (d < 0) return;
        out += "  b" + std::to_string(d) + " -> b" + std::to_string(to.id) + " [label=\"" +
               nl.nets[net].name + "\"" + style + "];\n";
    };
    for (const auto& b : nl.blocks) {
        for (int n : b.inputs) edge(n, b, "");
        for (int n : b.inputs2) edge(n, b, "");
        for (int n : b.den_inputs) edge(n, b, ", arrowhead=odot");
        for (int n : b.plus_inputs) edge(n, b, "");
        for (int n : b.minus_inputs) edge(n, b, ", style=dashed");
    }
    out += "}\n";
    return out;
}

} // namespace nbds
