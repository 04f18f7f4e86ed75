#include "vsrfdx/switches.hpp"

#include "vsrfdx/error.hpp"

namespace vsrfdx {

namespace {
constexpr std::array<std::string_view, 6> kNames{"SaP", "SaN", "SbP", "SbN", "ScP", "ScN"};
}

std::string_view switch_name(SwitchId s) { return kNames[static_cast<std::size_t>(s)]; }

std::optional<SwitchId> parse_switch(std::string_view name) {
    for (std::size_t i = 0; i < kNames.size(); ++i) {
        if (kNames[i] == name) return static_cast<SwitchId>(i);
    }
    return std::nullopt;
}

std::string SwitchSet::to_string() const {
    std::string out;
    for (auto s : kAllSwitches) {
        if (!contains(s)) continue;
        if (!out.empty()) out += '+';
        out += switch_name(s);
    }
    return out;
}

SwitchSet SwitchSet::parse(std::string_view text) {
    SwitchSet set;
    while (!text.empty()) {
        auto pos = text.find('+');
        auto token = text.substr(0, pos);
        auto id = parse_switch(token);
        if (!id) throw Error(ErrorKind::Config, "unknown switch '" + std::string(token) + "'");
        set.insert(*id);
        if (pos == std::string_view::npos) break;
        text.remove_prefix(pos + 1);
    }
    return set;
}

std::string SwitchSet::to_bits() const {
    std::string bits(6, '0');
    for (auto s : kAllSwitches) {
        if (contains(s)) bits[static_cast<std::size_t>(s)] = '1';
    }
    return bits;
}

std::optional<SwitchSet> SwitchSet::parse_bits(std::string_view bits) {
    if (bits.size() != 6) return std::nullopt;
    SwitchSet set;
    for (std::size_t i = 0; i < 6; ++i) {
        if (bits[i] == '1') {
            set.insert(static_cast<SwitchId>(i));
        } else if (bits[i] != '0') {
            return std::nullopt;
        }
    }
    return set;
}

} // namespace vsrfdx
