// nbds: synthesize current-mode block netlists from dynamical-system models
// and verify them by simulation.
//
//   nbds synth   --model fhn --out out/            netlist JSON + DOT + census
//   nbds sim     --model fhn --mode ref --dt 1e-6 --tend 50e-3
//                --input I_ext=0.5e-6 --out out/   trace CSV
//   nbds compare out/ref/trace.csv out/net/trace.csv
//
// Exit codes: 0 success, 2 input error, 3 synthesis diagnostics,
// 4 comparison/grid error, 5 numerical abort.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include "CLI11.hpp"

#include "nbds/device.hpp"
#include "nbds/netlist.hpp"
#include "nbds/sim.hpp"
#include "nbds/synth.hpp"
#include "nbds/system.hpp"
#include "nbds/trace_io.hpp"

namespace {

constexpr int kExitInput = 2;
constexpr int kExitSynth = 3;
constexpr int kExitCompare = 4;
constexpr int kExitNumeric = 5;

struct CliError {
    int code;
    std::string message;
};

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CliError{kExitInput, "cannot open file: " + path};
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw CliError{kExitInput, "cannot write file: " + path};
    out << content;
}

/// A fully resolved command: what to run, on which sources, where results
/// land. Referenced files are checked before any work starts.
struct RunManifest {
    std::string command; // synth | sim | compare
    std::string model;   // builtin name or model JSON path
    std::string device;  // optional device JSON path
    std::string mode = "ref";
    double dt = 1e-6;
    double tend = 10e-3;
    int stride = 1;
    std::vector<std::string> input_specs;
    std::vector<std::string> traces; // compare operands
    std::string out;

    void check() const {
        auto must_exist = [](const std::string& path) {
            if (!path.empty() && !std::filesystem::exists(path))
                throw CliError{kExitInput, "cannot open file: " + path};
        };
        if (!model.empty() && model != "synapse" && model != "fhn" && model != "astrocyte")
            must_exist(model);
        must_exist(device);
        for (const auto& t : traces) must_exist(t);
        if (!out.empty()) {
            std::error_code ec;
            std::filesystem::create_directories(out, ec);
            if (ec) throw CliError{kExitInput, "cannot create output directory: " + out};
        }
    }
};

nbds::DynamicalSystem resolve_model(const std::string& spec) {
    if (spec == "synapse" || spec == "fhn" || spec == "astrocyte") return nbds::builtin(spec);
    return nbds::load_system(read_file(spec));
}

nbds::DeviceParams resolve_device(const std::string& path) {
    if (path.empty()) return nbds::DeviceParams{};
    return nbds::load_device(read_file(path));
}

// --input name=<value | const:v | step:t0,level>, amperes / seconds
std::pair<std::string, nbds::InputDrive> parse_input_spec(const std::string& spec) {
    auto eq = spec.find('=');
    if (eq == std::string::npos)
        throw CliError{kExitInput, "--input expects name=<const|step:t0,level>: " + spec};
    std::string name = spec.substr(0, eq);
    std::string rest = spec.substr(eq + 1);
    nbds::InputDrive drive;
    try {
        if (rest.rfind("step:", 0) == 0) {
            auto comma = rest.find(',', 5);
            if (comma == std::string::npos)
                throw CliError{kExitInput, "step drive needs t0,level: " + spec};
            drive.wave = nbds::InputDrive::Step{std::stod(rest.substr(5, comma - 5)),
                                                std::stod(rest.substr(comma + 1))};
        } else {
            if (rest.rfind("const:", 0) == 0) rest = rest.substr(6);
            drive.wave = nbds::InputDrive::Constant{std::stod(rest)};
        }
    } catch (const std::logic_error&) {
        throw CliError{kExitInput, "malformed input drive value: " + spec};
    }
    return {name, drive};
}

std::string census_line(const nbds::Netlist& nl) {
    auto c = nl.census();
    auto get = [&](const char* k) { return c.count(k) ? c.at(k) : 0; };
    std::ostringstream ss;
    ss << "census: NBDS=" << get("NBDS") << " MULT=" << get("MULT")
       << " SPLITTER=" << get("SPLITTER") << " MIRROR=" << get("MIRROR")
       << " DCSOURCE=" << get("DCSOURCE") << " INPUT=" << get("INPUT")
       << " OUTPUT=" << get("OUTPUT");
    return ss.str();
}

int cmd_synth(const RunManifest& run) {
    auto bio = resolve_model(run.model);
    nbds::UnitMap units;
    auto elec = nbds::to_electrical(bio, units);
    auto dev = resolve_device(run.device);
    nbds::Netlist nl;
    try {
        nl = nbds::synthesize(elec, dev, units);
    } catch (const nbds::UnsynthesizableExpression& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitSynth;
    } catch (const nbds::MissingS& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitSynth;
    } catch (const nbds::NonPhysicalBias& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitSynth;
    }
    auto diags = nbds::validate_netlist(nl);
    if (!diags.empty()) {
        for (const auto& d : diags) std::cerr << "diagnostic: " << d.str() << "\n";
        return kExitSynth;
    }
    write_file(run.out + "/netlist.json", nbds::export_json(nl));
    write_file(run.out + "/netlist.dot", nbds::export_dot(nl));
    std::cout << census_line(nl) << "\n";
    return 0;
}

int cmd_sim(const RunManifest& run) {
    auto bio = resolve_model(run.model);
    nbds::UnitMap units;
    auto elec = nbds::to_electrical(bio, units);

    nbds::SimConfig cfg;
    cfg.dt = run.dt;
    cfg.t_end = run.tend;
    cfg.record_stride = run.stride;
    for (const auto& spec : run.input_specs) {
        auto [name, drive] = parse_input_spec(spec);
        if (!elec.is_input(name))
            throw CliError{kExitInput, "model has no input named '" + name + "'"};
        cfg.inputs[name] = drive;
    }

    nbds::Trace tr;
    if (run.mode == "ref") {
        tr = nbds::integrate_reference(elec, cfg);
    } else if (run.mode == "netlist") {
        auto dev = resolve_device(run.device);
        nbds::Netlist nl;
        try {
            nl = nbds::synthesize(elec, dev, units);
        } catch (const nbds::UnsynthesizableExpression& e) {
            std::cerr << "error: " << e.what() << "\n";
            return kExitSynth;
        }
        tr = nbds::integrate_netlist(nl, cfg);
    } else {
        throw CliError{kExitInput, "--mode must be ref or netlist"};
    }

    write_file(run.out + "/trace.csv", nbds::write_trace_csv(tr));
    std::cout << "trace: " << run.out << "/trace.csv (" << tr.samples() << " samples, "
              << tr.events.size() << " events)\n";
    if (tr.aborted) {
        std::cerr << "error: simulation aborted on non-finite state\n";
        return kExitNumeric;
    }
    return 0;
}

int cmd_compare(const RunManifest& run) {
    auto a = nbds::read_trace_csv(read_file(run.traces[0]));
    auto b = nbds::read_trace_csv(read_file(run.traces[1]));
    nbds::CompareReport rep;
    try {
        rep = nbds::compare_traces(a, b);
    } catch (const nbds::GridMismatch& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitCompare;
    }
    auto fmt = [](double v) { return nbds::detail::format_g17(v); };
    std::cout << "rmse_A=" << fmt(rep.rmse) << "\n";
    std::cout << "max_abs_err_A=" << fmt(rep.max_abs_err) << "\n";
    std::cout << "rel_rmse=" << fmt(rep.rel_rmse) << "\n";
    std::cout << "period_ref_s=" << (rep.period_ref ? fmt(*rep.period_ref) : "none") << "\n";
    std::cout << "period_test_s=" << (rep.period_test ? fmt(*rep.period_test) : "none") << "\n";

    nlohmann::json j;
    j["rmse_A"] = rep.rmse;
    j["max_abs_err_A"] = rep.max_abs_err;
    j["rel_rmse"] = rep.rel_rmse;
    if (rep.period_ref) j["period_ref_s"] = *rep.period_ref;
    if (rep.period_test) j["period_test_s"] = *rep.period_test;
    if (!run.out.empty()) write_file(run.out + "/compare.json", j.dump(2) + "\n");
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"current-mode netlist synthesis and behavioral simulation"};
    app.require_subcommand(1);

    int jobs = 1;
    app.add_option("--jobs", jobs, "parallel workers for independent runs (reserved)")
        ->check(CLI::PositiveNumber);

    RunManifest run;
    run.out = ".";
    std::string trace_a, trace_b;

    auto* synth = app.add_subcommand("synth", "compile a model into a block netlist");
    synth->add_option("--model", run.model,
                      "builtin name (synapse|fhn|astrocyte) or model JSON path")
        ->required();
    synth->add_option("--device", run.device, "device JSON path");
    synth->add_option("--out", run.out, "output directory");

    auto* sim = app.add_subcommand("sim", "integrate the reference ODE or the netlist dynamics");
    sim->add_option("--model", run.model, "builtin name or model JSON path")->required();
    sim->add_option("--device", run.device, "device JSON path");
    sim->add_option("--mode", run.mode, "ref | netlist")->required();
    sim->add_option("--dt", run.dt, "step, circuit seconds")->required();
    sim->add_option("--tend", run.tend, "end time, circuit seconds")->required();
    sim->add_option("--stride", run.stride, "record every Nth step");
    sim->add_option("--input", run.input_specs,
                    "input drive name=<amps|const:amps|step:t0,amps> (repeatable)");
    sim->add_option("--out", run.out, "output directory");

    auto* cmp = app.add_subcommand("compare", "compare two trace CSV files");
    cmp->add_option("traceA", trace_a, "reference trace CSV")->required();
    cmp->add_option("traceB", trace_b, "test trace CSV")->required();
    cmp->add_option("--out", run.out, "directory for compare.json (default: print only)")
        ->default_val("");

    try {
        app.parse(argc, argv);
        run.command = synth->parsed() ? "synth" : sim->parsed() ? "sim" : "compare";
        if (cmp->parsed()) run.traces = {trace_a, trace_b};
        run.check();
        if (synth->parsed()) return cmd_synth(run);
        if (sim->parsed()) return cmd_sim(run);
        if (cmp->parsed()) return cmd_compare(run);
        return kExitInput;
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : kExitInput;
    } catch (const CliError& e) {
        std::cerr << "error: " << e.message << "\n";
        return e.code;
    } catch (const nbds::GridMismatch& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitCompare;
    } catch (const nbds::NonFiniteStateError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitNumeric;
    } catch (const nbds::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInput;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitInput;
    }
}
