#include "vsrfdx/config.hpp"

#include "vsrfdx/error.hpp"

#include <cerrno>
#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace vsrfdx {

std::string trim(std::string_view text) {
    auto is_space = [](char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; };
    while (!text.empty() && is_space(text.front())) text.remove_prefix(1);
    while (!text.empty() && is_space(text.back())) text.remove_suffix(1);
    return std::string(text);
}

std::vector<std::string> split(std::string_view text, char sep) {
    std::vector<std::string> out;
    while (true) {
        auto pos = text.find(sep);
        out.push_back(trim(text.substr(0, pos)));
        if (pos == std::string_view::npos) break;
        text.remove_prefix(pos + 1);
    }
    return out;
}

std::vector<KeyValue> parse_key_values(std::string_view text) {
    std::vector<KeyValue> out;
    std::istringstream in{std::string(text)};
    std::string line;
    int n = 0;
    while (std::getline(in, line)) {
        ++n;
        auto t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        auto eq = t.find('=');
        if (eq == std::string::npos) {
            throw Error(ErrorKind::Config, "line " + std::to_string(n) + ": expected key=value");
        }
        out.push_back({trim(t.substr(0, eq)), trim(t.substr(eq + 1)), n});
    }
    return out;
}

namespace {
std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::Io, "cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}
} // namespace

std::vector<KeyValue> read_key_values(const std::string& path) { return parse_key_values(slurp(path)); }

double parse_double(std::string_view text, std::string_view what) {
    std::string s(trim(text));
    char* end = nullptr;
    errno = 0;
    double v = std::strtod(s.c_str(), &end);
    if (s.empty() || end != s.c_str() + s.size() || errno == ERANGE) {
        throw Error(ErrorKind::Config, "bad number for " + std::string(what) + ": '" + s + "'");
    }
    return v;
}

std::int64_t parse_int(std::string_view text, std::string_view what) {
    std::string s(trim(text));
    std::int64_t v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc{} || ptr != s.data() + s.size()) {
        throw Error(ErrorKind::Config, "bad integer for " + std::string(what) + ": '" + s + "'");
    }
    return v;
}

bool parse_bool(std::string_view text, std::string_view what) {
    auto s = trim(text);
    if (s == "1" || s == "true" || s == "yes") return true;
    if (s == "0" || s == "false" || s == "no") return false;
    throw Error(ErrorKind::Config, "bad boolean for " + std::string(what) + ": '" + s + "'");
}

std::uint64_t fnv1a(std::string_view bytes) {
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

bool apply_param(sim::SimParams& p, const std::string& key, std::string_view value) {
    struct Field {
        const char* name;
        double sim::SimParams::*member;
    };
    static const Field fields[] = {
        {"grid_voltage", &sim::SimParams::grid_voltage},
        {"grid_freq", &sim::SimParams::grid_freq},
        {"filter_inductance", &sim::SimParams::filter_inductance},
        {"dc_capacitance", &sim::SimParams::dc_capacitance},
        {"load_resistance", &sim::SimParams::load_resistance},
        {"vdc_ref", &sim::SimParams::vdc_ref},
        {"switching_freq", &sim::SimParams::switching_freq},
        {"control_freq", &sim::SimParams::control_freq},
        {"sim_step", &sim::SimParams::sim_step},
        {"initial_udc", &sim::SimParams::initial_udc},
    };
    for (const auto& f : fields) {
        if (key == f.name) {
            p.*(f.member) = parse_double(value, key);
            return true;
        }
    }
    struct GainField {
        const char* name;
        double sim::ControllerGains::*member;
    };
    static const GainField gains[] = {
        {"kp_v", &sim::ControllerGains::kp_v},
        {"ki_v", &sim::ControllerGains::ki_v},
        {"kp_i", &sim::ControllerGains::kp_i},
        {"kr_i", &sim::ControllerGains::kr_i},
        {"resonant_bw", &sim::ControllerGains::resonant_bw},
        {"i_max", &sim::ControllerGains::i_max},
    };
    for (const auto& g : gains) {
        if (key == g.name) {
            p.gains.*(g.member) = parse_double(value, key);
            return true;
        }
    }
    return false;
}

sim::FaultEntry parse_fault_entry(std::string_view value) {
    auto parts = split(value, ',');
    if (parts.size() < 2 || parts.size() > 3) {
        throw Error(ErrorKind::Config, "fault entry must be <switch>,<onset>[,<clear>]");
    }
    auto sw = parse_switch(parts[0]);
    if (!sw) throw Error(ErrorKind::Config, "unknown switch '" + parts[0] + "'");
    sim::FaultEntry e{*sw, parse_double(parts[1], "fault onset"), std::nullopt};
    if (parts.size() == 3) e.clear = parse_double(parts[2], "fault clear");
    return e;
}

ScenarioConfig parse_scenario_config(std::string_view text) {
    ScenarioConfig cfg;
    cfg.hash = fnv1a(text);
    for (const auto& kv : parse_key_values(text)) {
        if (kv.key == "fault") {
            cfg.scenario.faults.push_back(parse_fault_entry(kv.value));
        } else if (kv.key == "duration") {
            cfg.duration = parse_double(kv.value, kv.key);
        } else if (kv.key == "seed") {
            cfg.seed = static_cast<std::uint64_t>(parse_int(kv.value, kv.key));
        } else if (kv.key == "randomize") {
            cfg.options.randomize = parse_bool(kv.value, kv.key);
        } else if (kv.key == "onset_jitter") {
            cfg.options.onset_jitter = parse_double(kv.value, kv.key);
        } else if (!apply_param(cfg.params, kv.key, kv.value)) {
            throw Error(ErrorKind::Config,
                        "line " + std::to_string(kv.line) + ": unknown key '" + kv.key + "'");
        }
    }
    cfg.params.validate();
    cfg.scenario.validate();
    return cfg;
}

ScenarioConfig read_scenario_config(const std::string& path) {
    return parse_scenario_config(slurp(path));
}

} // namespace vsrfdx
