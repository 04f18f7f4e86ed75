#pragma once

#include "vsrfdx/sim.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>

namespace vsrfdx::sim {

struct TraceStamp {
    std::uint64_t seed = 0;
    std::string config;  // hex hash of the generating config
};

// `vsr-trace v1, rate=<hz>[, seed=<n>, config=<hex>]` followed by
// `t,ia,ib,ic,udc,ref_angle,gates` rows, 17 significant digits.
void write_trace(std::ostream& out, const Trace& trace, const std::optional<TraceStamp>& stamp = {});
void write_trace_file(const std::string& path, const Trace& trace,
                      const std::optional<TraceStamp>& stamp = {});

// Throws Error(MalformedFile) on a bad header or row, Error(VersionMismatch)
// on an unknown version.
Trace read_trace(std::istream& in);
Trace read_trace_file(const std::string& path);

} // namespace vsrfdx::sim
