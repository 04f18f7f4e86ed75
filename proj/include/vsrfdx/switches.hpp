#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace vsrfdx {

// Upper (P) and lower (N) IGBT of each phase leg.
enum class SwitchId : std::uint8_t { SaP = 0, SaN, SbP, SbN, ScP, ScN };

inline constexpr std::array<SwitchId, 6> kAllSwitches{
    SwitchId::SaP, SwitchId::SaN, SwitchId::SbP, SwitchId::SbN, SwitchId::ScP, SwitchId::ScN};

constexpr int phase_of(SwitchId s) { return static_cast<int>(s) / 2; }
constexpr bool is_upper(SwitchId s) { return static_cast<int>(s) % 2 == 0; }
constexpr SwitchId upper_switch(int phase) { return static_cast<SwitchId>(2 * phase); }
constexpr SwitchId lower_switch(int phase) { return static_cast<SwitchId>(2 * phase + 1); }

std::string_view switch_name(SwitchId s);
std::optional<SwitchId> parse_switch(std::string_view name);

// Bit set over the six switches, bit i = SwitchId(i).
class SwitchSet {
public:
    constexpr SwitchSet() = default;
    constexpr SwitchSet(std::initializer_list<SwitchId> ids) {
        for (auto id : ids) insert(id);
    }
    static constexpr SwitchSet from_mask(std::uint8_t mask) {
        SwitchSet s;
        s.mask_ = mask & 0x3F;
        return s;
    }

    constexpr void insert(SwitchId s) { mask_ |= bit(s); }
    constexpr void erase(SwitchId s) { mask_ &= static_cast<std::uint8_t>(~bit(s)); }
    constexpr bool contains(SwitchId s) const { return (mask_ & bit(s)) != 0; }
    constexpr bool empty() const { return mask_ == 0; }
    constexpr int size() const {
        int n = 0;
        for (std::uint8_t m = mask_; m != 0; m &= m - 1) ++n;
        return n;
    }
    constexpr std::uint8_t mask() const { return mask_; }

    constexpr SwitchSet operator&(SwitchSet o) const { return from_mask(mask_ & o.mask_); }
    constexpr SwitchSet operator|(SwitchSet o) const { return from_mask(mask_ | o.mask_); }
    constexpr SwitchSet& operator|=(SwitchSet o) {
        mask_ |= o.mask_;
        return *this;
    }
    constexpr bool operator==(const SwitchSet&) const = default;

    // "SaP+SbP"; empty set renders as "".
    std::string to_string() const;
    // Inverse of to_string; throws Error(Config) on unknown names.
    static SwitchSet parse(std::string_view text);

    // 6-char 0/1 string ordered SaP,SaN,SbP,SbN,ScP,ScN.
    std::string to_bits() const;
    static std::optional<SwitchSet> parse_bits(std::string_view bits);

private:
    static constexpr std::uint8_t bit(SwitchId s) {
        return static_cast<std::uint8_t>(1u << static_cast<unsigned>(s));
    }
    std::uint8_t mask_ = 0;
};

} // namespace vsrfdx
