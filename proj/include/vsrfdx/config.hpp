#pragma once

// Plain-text `key=value` configuration files. Lines starting with '#' and
// blank lines are ignored; keys may repeat (e.g. several `fault=` entries).

#include "vsrfdx/sim.hpp"

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace vsrfdx {

struct KeyValue {
    std::string key;
    std::string value;
    int line = 0;
};

std::vector<KeyValue> parse_key_values(std::string_view text);
std::vector<KeyValue> read_key_values(const std::string& path);

double parse_double(std::string_view text, std::string_view what);
std::int64_t parse_int(std::string_view text, std::string_view what);
bool parse_bool(std::string_view text, std::string_view what);
std::vector<std::string> split(std::string_view text, char sep);
std::string trim(std::string_view text);

// FNV-1a over the raw bytes; used to stamp output files with the config.
std::uint64_t fnv1a(std::string_view bytes);
std::string hex64(std::uint64_t v);

// Applies a SimParams override; returns false if `key` is not a parameter.
bool apply_param(sim::SimParams& params, const std::string& key, std::string_view value);

// `fault=<switch>,<onset_s>[,<clear_s>]`
sim::FaultEntry parse_fault_entry(std::string_view value);

struct ScenarioConfig {
    sim::SimParams params;
    sim::FaultScenario scenario;
    double duration = 0.5;
    std::uint64_t seed = 1;
    sim::SimOptions options;
    std::uint64_t hash = 0;  // of the file contents
};

ScenarioConfig parse_scenario_config(std::string_view text);
ScenarioConfig read_scenario_config(const std::string& path);

} // namespace vsrfdx
