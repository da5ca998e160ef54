#include "doctest.h"

#include <cmath>
#include <fstream>
#include <iterator>

#include "nbds/synth.hpp"
#include "nbds/sim.hpp"
#include "nbds/system.hpp"
#include "test_util.hpp"

using namespace nbds;

namespace {

Env bio_env(const DynamicalSystem& sys, testutil::Rng& rng, bool positive) {
    Env env;
    for (const auto& eq : sys.states)
        env[eq.name] = positive ? rng.uniform(0.05, 5.0) : rng.uniform(-3.0, 3.0);
    for (const auto& in : sys.inputs)
        env[in] = positive ? rng.uniform(0.05, 5.0) : rng.uniform(-3.0, 3.0);
    for (const auto& [p, v] : sys.params) env[p] = v;
    return env;
}

} // namespace

TEST_CASE("builtin synapse") {
    auto sys = builtin_synapse();
    REQUIRE(sys.states.size() == 1);
    CHECK(sys.states[0].name == "s");
    CHECK(sys.states[0].tau == 1.0);
    CHECK(sys.inputs == std::vector<std::string>{"I_ext"});
    CHECK(eval_expr(sys.states[0].rhs, {{"s", 2.0}, {"I_ext", 0.5}}) == -1.5);
}

TEST_CASE("builtin fhn: canonical tau form") {
    auto sys = builtin_fhn();
    REQUIRE(sys.states.size() == 2);
    CHECK(sys.states[0].name == "v");
    CHECK(sys.states[0].tau == 1.0);
    CHECK(sys.states[1].name == "w");
    CHECK(sys.states[1].tau == doctest::Approx(1.0 / 0.18).epsilon(1e-14));

    // F_w = v + 0.7 - 0.8*w
    testutil::Rng rng(11);
    for (int i = 0; i < 20; ++i) {
        double v = rng.uniform(-3, 3), w = rng.uniform(-3, 3);
        CHECK(eval_expr(sys.states[1].rhs, {{"v", v}, {"w", w}}) ==
              doctest::Approx(v + 0.7 - 0.8 * w).epsilon(1e-14));
    }
}

TEST_CASE("builtin astrocyte: F_Y = z2 - z3 - k_f*Y") {
    auto sys = builtin_astrocyte();
    REQUIRE(sys.states.size() == 2);
    CHECK(sys.states[0].name == "X");
    CHECK(sys.states[1].name == "Y");
    CHECK(sys.inputs.empty());

    AstrocyteParams p;
    double X = 0.7, Y = 1.3;
    double z2 = p.V_M2 * X / (p.K2 + X);
    double z3 = p.V_M3 * (Y / (p.K_R + Y)) * (X / (p.K_A + X));
    Env env = {{"X", X}, {"Y", Y}};
    for (const auto& [k, v] : sys.params) env[k] = v;
    CHECK(eval_expr(sys.states[1].rhs, env) == doctest::Approx(z2 - z3 - p.k_f * Y).epsilon(1e-12));
    CHECK(eval_expr(sys.states[0].rhs, env) ==
          doctest::Approx(p.z0 + p.z1 * p.beta_stim - z2 + z3 + p.k_f * Y - p.k * X).epsilon(1e-12));
}

TEST_CASE("builtin: unknown model") {
    CHECK_THROWS_AS(builtin("izhikevich"), UnknownModelError);
}

TEST_CASE("builtins pass load_system round-trip validation") {
    for (const char* name : {"synapse", "fhn", "astrocyte"}) {
        auto sys = builtin(name);
        CHECK_NOTHROW(sys.validate());
    }
}

TEST_CASE("load_system: synapse document") {
    const char* doc = R"({
        "name": "synapse",
        "states": [{"name": "s", "tau": 1.0, "rhs": "-s + I_ext", "init": 0.0}],
        "inputs": ["I_ext"]
    })";
    auto sys = load_system(doc);
    CHECK(sys.states.size() == 1);
    CHECK(sys.states[0].tau == 1.0);
}

TEST_CASE("load_system: canonical tau extraction") {
    const char* doc = R"json({
        "name": "fhn",
        "states": [
            {"name": "v", "tau": 1.0, "rhs": "v - v^3/3 - w + I_ext"},
            {"name": "w", "tau": 1.0, "rhs": "0.18*(v + 0.7 - 0.8*w)"}
        ],
        "inputs": ["I_ext"]
    })json";
    auto sys = load_system(doc);
    CHECK(sys.states[1].tau == doctest::Approx(1.0 / 0.18).epsilon(1e-14));
    // leading constant absorbed, the grouped sum remains
    CHECK(sys.states[1].rhs->kind == ExprKind::Add);
}

TEST_CASE("load_system: errors") {
    CHECK_THROWS_AS(load_system("not json"), SchemaError);
    CHECK_THROWS_AS(load_system("{\"name\":\"x\"}"), SchemaError);
    CHECK_THROWS_AS(load_system(R"({"name":"m","states":[{"name":"x","tau":0.0,"rhs":"x"}]})"),
                    NonPositiveTauError);
    CHECK_THROWS_AS(load_system(R"({"name":"m","states":[{"name":"x","tau":1.0,"rhs":"x + q"}]})"),
                    UnknownSymbolError);
    try {
        load_system(R"({"name":"m","states":[{"name":"x","tau":1.0,"rhs":"x + q"}]})");
    } catch (const UnknownSymbolError& e) {
        CHECK(e.symbol == "q");
        CHECK(e.equation == "x");
    }
    // duplicate symbol across roles
    const char* dup =
        R"({"name":"m","states":[{"name":"x","tau":1.0,"rhs":"x"}],"inputs":["x"]})";
    CHECK_THROWS_AS(load_system(dup), SchemaError);
}

TEST_CASE("to_electrical: FHN scale currents match the unit map") {
    auto elec = to_electrical(builtin_fhn(), UnitMap{});
    REQUIRE(elec.params.count("I_x"));
    REQUIRE(elec.params.count("I_b"));
    REQUIRE(elec.params.count("I_c"));
    REQUIRE(elec.params.count("I_d"));
    CHECK(elec.params.at("I_x") == doctest::Approx(1e-6).epsilon(1e-14));
    CHECK(elec.params.at("I_b") == doctest::Approx(3e-6).epsilon(1e-14));
    CHECK(elec.params.at("I_c") == doctest::Approx(0.7e-6).epsilon(1e-14));
    CHECK(elec.params.at("I_d") == doctest::Approx(0.8e-6).epsilon(1e-14));

    FhnParams fp;
    auto sc = fp.scale_currents(UnitMap{});
    CHECK(sc.I_x == elec.params.at("I_x"));
    CHECK(sc.I_b == elec.params.at("I_b"));
    CHECK(sc.I_c == elec.params.at("I_c"));
    CHECK(sc.I_d == elec.params.at("I_d"));

    CHECK(elec.states[0].tau == doctest::Approx(1e-3).epsilon(1e-14));
    CHECK(elec.states[1].tau == doctest::Approx(1e-3 / 0.18).epsilon(1e-14));
}

TEST_CASE("to_electrical: pointwise scaling equivalence for all built-ins") {
    UnitMap units; // 1 uA per unit, 1 ms per unit
    const double alpha = units.current_per_unit;
    testutil::Rng rng(42);
    for (const char* name : {"synapse", "fhn", "astrocyte"}) {
        auto bio = builtin(name);
        auto elec = to_electrical(bio, units);
        bool positive = std::string(name) == "astrocyte";
        for (int trial = 0; trial < 100; ++trial) {
            Env env_b = bio_env(bio, rng, positive);
            Env env_e;
            for (const auto& eq : bio.states) env_e[eq.name] = alpha * env_b[eq.name];
            for (const auto& in : bio.inputs) env_e[in] = alpha * env_b[in];
            for (const auto& [p, v] : elec.params) env_e[p] = v;
            for (std::size_t i = 0; i < bio.states.size(); ++i) {
                double fb = eval_expr(bio.states[i].rhs, env_b);
                double fe = eval_expr(elec.states[i].rhs, env_e);
                double tol = 1e-12 * std::max(std::fabs(alpha * fb), alpha);
                CHECK(std::fabs(fe - alpha * fb) <= tol);
            }
        }
    }
}

TEST_CASE("to_electrical: identity map changes values nowhere") {
    UnitMap id{1.0, 1.0};
    testutil::Rng rng(7);
    for (const char* name : {"synapse", "fhn", "astrocyte"}) {
        auto bio = builtin(name);
        auto elec = to_electrical(bio, id);
        for (std::size_t i = 0; i < bio.states.size(); ++i) {
            CHECK(elec.states[i].tau == bio.states[i].tau);
            CHECK(elec.states[i].initial_value == bio.states[i].initial_value);
        }
        bool positive = std::string(name) == "astrocyte";
        for (int trial = 0; trial < 30; ++trial) {
            Env env = bio_env(bio, rng, positive);
            Env env_e = env;
            for (const auto& [p, v] : elec.params) env_e[p] = v;
            for (std::size_t i = 0; i < bio.states.size(); ++i) {
                double fb = eval_expr(bio.states[i].rhs, env);
                double fe = eval_expr(elec.states[i].rhs, env_e);
                CHECK(fe == doctest::Approx(fb).epsilon(1e-13));
            }
        }
    }
}

TEST_CASE("to_electrical: astrocyte gains stay dimensionless") {
    auto elec = to_electrical(builtin_astrocyte(), UnitMap{});
    AstrocyteParams p;
    // rates/gains unchanged, thresholds and maxima scaled to amperes
    CHECK(elec.params.at("k") == p.k);
    CHECK(elec.params.at("k_f") == p.k_f);
    CHECK(elec.params.at("beta_stim") == p.beta_stim);
    CHECK(elec.params.at("V_M2") == doctest::Approx(p.V_M2 * 1e-6));
    CHECK(elec.params.at("V_M3") == doctest::Approx(p.V_M3 * 1e-6));
    CHECK(elec.params.at("K2") == doctest::Approx(p.K2 * 1e-6));
    CHECK(elec.params.at("K_R") == doctest::Approx(p.K_R * 1e-6));
    CHECK(elec.params.at("K_A") == doctest::Approx(p.K_A * 1e-6));
    CHECK(elec.params.at("z0") == doctest::Approx(p.z0 * 1e-6));
    CHECK(elec.params.at("z1") == doctest::Approx(p.z1 * 1e-6));
}

TEST_CASE("canonicalize_tau peels through negation") {
    StateEquation eq{"x", 2.0, parse_expr("-(4*(x + 1))"), 0.0};
    auto canon = canonicalize_tau(eq);
    CHECK(canon.tau == doctest::Approx(0.5));
    CHECK(eval_expr(canon.rhs, {{"x", 1.0}}) == doctest::Approx(-2.0));
}

TEST_CASE("shipped model files match the built-ins") {
    auto slurp = [](const char* path) {
        std::ifstream in(path);
        REQUIRE(in.good());
        return std::string(std::istreambuf_iterator<char>(in),
                           std::istreambuf_iterator<char>());
    };
    struct Pair {
        const char* file;
        const char* name;
    } pairs[] = {{NBDS_MODELS_DIR "/synapse.json", "synapse"},
                 {NBDS_MODELS_DIR "/fhn.json", "fhn"},
                 {NBDS_MODELS_DIR "/astrocyte_derived.json", "astrocyte"}};
    testutil::Rng rng(8);
    for (const auto& p : pairs) {
        auto from_file = load_system(slurp(p.file));
        auto built = builtin(p.name);
        REQUIRE(from_file.states.size() == built.states.size());
        for (std::size_t i = 0; i < built.states.size(); ++i) {
            CHECK(from_file.states[i].name == built.states[i].name);
            CHECK(from_file.states[i].tau == doctest::Approx(built.states[i].tau).epsilon(1e-14));
            CHECK(from_file.states[i].initial_value == built.states[i].initial_value);
            for (int trial = 0; trial < 10; ++trial) {
                Env env;
                for (const auto& eq : built.states) env[eq.name] = rng.uniform(0.1, 2.0);
                for (const auto& in : built.inputs) env[in] = rng.uniform(0.1, 2.0);
                for (const auto& [k, v] : built.params) env[k] = v;
                CHECK(eval_expr(from_file.states[i].rhs, env) ==
                      doctest::Approx(eval_expr(built.states[i].rhs, env)).epsilon(1e-13));
            }
        }
    }
}

TEST_CASE("to_electrical: adversarial shapes stay pointwise-equivalent") {
    struct Case {
        const char* rhs;
        bool has_input;
    } cases[] = {
        {"x^2", false},
        {"x*u + 0.5", true},
        {"g*x + g", false},      // same parameter as gain and as addend
        {"x/(2+x) + 3*u/(1+u)", true},
        {"u^3/9", true},
        {"1/(K+x)", false},
        {"x*x*u", true},
        {"(x + 1)*u", true},
        {"K/(K+x) - x", false},
        {"2*x^3/(5*g)", false},
    };
    UnitMap units;
    const double alpha = units.current_per_unit;
    testutil::Rng rng(1234);
    for (const auto& c : cases) {
        CAPTURE(c.rhs);
        DynamicalSystem sys;
        sys.name = "adv";
        sys.states.push_back({"x", 1.0, parse_expr(c.rhs), 0.1});
        if (c.has_input) sys.inputs = {"u"};
        sys.params = {{"g", 0.7}, {"K", 1.3}};
        auto elec = to_electrical(sys, units);
        CHECK(validate_synthesizable(elec.states[0].rhs).empty());
        for (int trial = 0; trial < 30; ++trial) {
            Env env_b, env_e;
            for (const char* s : {"x", "u"}) {
                double v = rng.uniform(0.05, 3.0);
                env_b[s] = v;
                env_e[s] = alpha * v;
            }
            for (const auto& [p, v] : sys.params) env_b[p] = v;
            for (const auto& [p, v] : elec.params) env_e[p] = v;
            double fb = eval_expr(sys.states[0].rhs, env_b);
            double fe = eval_expr(elec.states[0].rhs, env_e);
            CHECK(std::fabs(fe - alpha * fb) <= 1e-12 * std::max(std::fabs(alpha * fb), alpha));
        }
    }
}

TEST_CASE("to_electrical: adversarial shapes synthesize and flow correctly") {
    const char* shapes[] = {"x^2", "x*u + 0.5", "g*x + g", "x/(2+x) + 3*u/(1+u)",
                            "(x + 1)*u", "K/(K+x) - x", "2*x^3/(5*g)"};
    UnitMap units;
    testutil::Rng rng(991);
    for (const char* rhs : shapes) {
        CAPTURE(rhs);
        DynamicalSystem sys;
        sys.name = "adv";
        sys.states.push_back({"x", 1.0, parse_expr(rhs), 0.1});
        sys.inputs = {"u"};
        sys.params = {{"g", 0.7}, {"K", 1.3}};
        auto elec = to_electrical(sys, units);
        auto nl = synthesize(elec, DeviceParams{}, units);
        // every denominator DC source must sit far above the 1 pA floor
        for (const auto& b : nl.blocks) {
            if (b.kind != BlockKind::Mult) continue;
            for (int net : b.den_inputs)
                for (const auto& src : nl.blocks)
                    if (src.output == net && src.kind == BlockKind::DcSource)
                        CHECK(src.value >= 1e-11);
        }
        Env env;
        for (const auto& [p, v] : elec.params) env[p] = v;
        for (int trial = 0; trial < 15; ++trial) {
            double xv = rng.uniform(0.05, 3.0) * 1e-6;
            double uv = rng.uniform(0.05, 3.0) * 1e-6;
            env["x"] = xv;
            env["u"] = uv;
            auto F = evaluate_netlist_rhs(nl, {{"x", xv}}, {{"u", uv}});
            double expect = eval_expr(elec.states[0].rhs, env);
            CHECK(std::fabs(F[0] - expect) <= 1e-9 * std::max(std::fabs(expect), 1e-12));
        }
    }
}
