#pragma once

// Device parameters (strong-inversion transconductance factors), the
// capacitor/bias-current trade-off policy, and the per-dimension bias law
// C_N / I_dc_N = 2 * tau_N * sqrt(k_n) / (2 + beta).

#include <cmath>
#include <string>
#include <vector>

#include "json.hpp"

#include "nbds/errors.hpp"
#include "nbds/system.hpp"

namespace nbds {

struct CapacitorPolicy {
    enum class Kind { FixedIdc, FixedC };
    Kind kind = Kind::FixedIdc;
    double value = 1e-6; // amperes for FixedIdc, farads for FixedC
};

struct DeviceParams {
    double k_n = 1e-4; // A/V^2, NMOS (1/2)*mu_n*C_ox*(W/L)
    double k_p = 1e-4; // A/V^2, PMOS
    std::vector<double> S_per_dim; // sqrt(A); empty means auto (2*sqrt(10*I_dc))
    CapacitorPolicy policy;

    double beta() const { return std::sqrt(k_n / k_p); }

    void validate() const {
        if (!(k_n > 0.0) || !(k_p > 0.0) || !std::isfinite(k_n) || !std::isfinite(k_p))
            throw SchemaError("device k_n and k_p must be positive and finite");
        if (!(policy.value > 0.0) || !std::isfinite(policy.value))
            throw SchemaError("capacitor policy value must be positive and finite");
        for (double s : S_per_dim)
            if (!(s > 0.0) || !std::isfinite(s)) throw SchemaError("every S value must be positive");
    }
};

/// Parses a device file: {"k_n": .., "k_p": .., "S": "auto" | [..],
/// "policy": {"fixed_I_dc": amps} | {"fixed_C": farads}}. Missing fields fall
/// back to the defaults above.
inline DeviceParams load_device(const std::string& document) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(document);
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(std::string("device file is not valid JSON: ") + e.what());
    }
    DeviceParams dev;
    try {
        if (j.contains("k_n")) dev.k_n = j["k_n"].get<double>();
        if (j.contains("k_p")) dev.k_p = j["k_p"].get<double>();
        if (j.contains("S") && !j["S"].is_string())
            for (const auto& v : j["S"]) dev.S_per_dim.push_back(v.get<double>());
        if (j.contains("policy")) {
            const auto& pol = j["policy"];
            if (pol.contains("fixed_I_dc"))
                dev.policy = {CapacitorPolicy::Kind::FixedIdc, pol["fixed_I_dc"].get<double>()};
            else if (pol.contains("fixed_C"))
                dev.policy = {CapacitorPolicy::Kind::FixedC, pol["fixed_C"].get<double>()};
            else
                throw SchemaError("policy must set fixed_I_dc or fixed_C");
        }
    } catch (const nlohmann::json::exception& e) {
        throw SchemaError(std::string("malformed device document: ") + e.what());
    }
    dev.validate();
    return dev;
}

/// Per-dimension bias pair. The invariant C / I_dc = 2 * tau * sqrt(k_n) /
/// (2 + beta) ties the three fields to the device.
struct NbdsBias {
    double C = 0.0;           // farads
    double I_dc = 0.0;        // amperes
    double tau_circuit = 0.0; // seconds
};

inline double bias_ratio(double tau_circuit, const DeviceParams& device) {
    return 2.0 * tau_circuit * std::sqrt(device.k_n) / (2.0 + device.beta());
}

/// Fixes (C, I_dc) for one dimension from the model-time constant; the free
/// value comes from the capacitor policy.
inline NbdsBias compute_bias(double tau_model, const UnitMap& units, const DeviceParams& device,
                             int dim) {
    (void)dim;
    device.validate();
    if (!(tau_model > 0.0) || !std::isfinite(tau_model))
        throw SchemaError("tau must be positive and finite");
    NbdsBias bias;
    bias.tau_circuit = tau_model * units.time_scale;
    const double ratio = bias_ratio(bias.tau_circuit, device);
    if (device.policy.kind == CapacitorPolicy::Kind::FixedIdc) {
        bias.I_dc = device.policy.value;
        bias.C = ratio * bias.I_dc;
    } else {
        bias.C = device.policy.value;
        bias.I_dc = bias.C / ratio;
    }
    if (bias.C < 1e-15)
        throw NonPhysicalBias("C = " + std::to_string(bias.C) + " F is below the 1 fF floor");
    if (bias.I_dc < 1e-12)
        throw NonPhysicalBias("I_dc = " + std::to_string(bias.I_dc) + " A is below the 1 pA floor");
    return bias;
}

} // namespace nbds
