#pragma once

// Trace CSV format: header `t_s,<state1>_A,<state2>_A,...`, one row per
// recorded sample (full double precision), events appended as comment lines
// `# event,<t>,<kind>,<detail>`.

#include <cstdio>
#include <cstdlib>
#include <string>
#include <vector>

#include "nbds/errors.hpp"
#include "nbds/sim.hpp"

namespace nbds {

namespace detail {

inline std::string format_g17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

inline std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

} // namespace detail

inline std::string write_trace_csv(const Trace& trace) {
    std::string out = "t_s";
    for (const auto& n : trace.state_names) out += "," + n + "_A";
    out += "\n";
    for (std::size_t i = 0; i < trace.times.size(); ++i) {
        out += detail::format_g17(trace.times[i]);
        for (const auto& col : trace.values) out += "," + detail::format_g17(col[i]);
        out += "\n";
    }
    for (const auto& ev : trace.events)
        out += "# event," + detail::format_g17(ev.t) + "," + ev.kind + "," + ev.detail + "\n";
    return out;
}

inline Trace read_trace_csv(const std::string& text) {
    Trace tr;
    std::size_t pos = 0;
    bool header_done = false;
    while (pos < text.size()) {
        std::size_t eol = text.find('\n', pos);
        if (eol == std::string::npos) eol = text.size();
        std::string line = text.substr(pos, eol - pos);
        pos = eol + 1;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        if (line[0] == '#') {
            auto f = detail::split_csv(line);
            if (f.size() >= 3 && f[0] == "# event") {
                TraceEvent ev;
                ev.t = std::strtod(f[1].c_str(), nullptr);
                ev.kind = f[2];
                if (f.size() >= 4) ev.detail = f[3];
                tr.events.push_back(std::move(ev));
            }
            continue;
        }
        auto f = detail::split_csv(line);
        if (!header_done) {
            if (f.empty() || f[0] != "t_s") throw SchemaError("trace CSV must start with t_s header");
            for (std::size_t i = 1; i < f.size(); ++i) {
                std::string name = f[i];
                if (name.size() > 2 && name.substr(name.size() - 2) == "_A")
                    name = name.substr(0, name.size() - 2);
                tr.state_names.push_back(name);
            }
            tr.values.resize(tr.state_names.size());
            header_done = true;
            continue;
        }
        if (f.size() != tr.state_names.size() + 1)
            throw SchemaError("trace CSV row has wrong column count");
        char* end = nullptr;
        tr.times.push_back(std::strtod(f[0].c_str(), &end));
        for (std::size_t i = 0; i < tr.state_names.size(); ++i)
            tr.values[i].push_back(std::strtod(f[i + 1].c_str(), nullptr));
    }
    if (!header_done) throw SchemaError("trace CSV is empty");
    return tr;
}

} // namespace nbds
