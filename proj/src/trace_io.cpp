#include "vsrfdx/trace_io.hpp"

#include "vsrfdx/config.hpp"
#include "vsrfdx/error.hpp"

#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>

namespace vsrfdx::sim {

void write_trace(std::ostream& out, const Trace& trace, const std::optional<TraceStamp>& stamp) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "vsr-trace v1, rate=%.17g", trace.sample_rate);
    out << buf;
    if (stamp) out << ", seed=" << stamp->seed << ", config=" << stamp->config;
    out << '\n';
    for (const auto& r : trace.records) {
        std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,", r.t, r.i_abc[0],
                      r.i_abc[1], r.i_abc[2], r.u_dc, r.ref_angle);
        out << buf << r.gates.to_bits() << '\n';
    }
}

void write_trace_file(const std::string& path, const Trace& trace,
                      const std::optional<TraceStamp>& stamp) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorKind::Io, "cannot write " + path);
    write_trace(out, trace, stamp);
    if (!out) throw Error(ErrorKind::Io, "write failed: " + path);
}

Trace read_trace(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw Error(ErrorKind::MalformedFile, "empty trace file");
    auto fields = split(line, ',');
    if (fields.empty() || fields[0].rfind("vsr-trace ", 0) != 0) {
        throw Error(ErrorKind::MalformedFile, "missing vsr-trace header");
    }
    if (fields[0] != "vsr-trace v1") throw Error(ErrorKind::VersionMismatch, fields[0]);

    Trace trace;
    bool have_rate = false;
    for (std::size_t i = 1; i < fields.size(); ++i) {
        auto eq = fields[i].find('=');
        if (eq == std::string::npos) throw Error(ErrorKind::MalformedFile, "bad header field");
        if (fields[i].substr(0, eq) == "rate") {
            try {
                trace.sample_rate = parse_double(fields[i].substr(eq + 1), "rate");
            } catch (const Error&) {
                throw Error(ErrorKind::MalformedFile, "bad rate");
            }
            have_rate = trace.sample_rate > 0.0;
        }
    }
    if (!have_rate) throw Error(ErrorKind::MalformedFile, "trace header lacks a positive rate");

    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (line.empty()) continue;
        auto cols = split(line, ',');
        if (cols.size() != 7) {
            throw Error(ErrorKind::MalformedFile, "row " + std::to_string(row) + ": expected 7 columns");
        }
        TraceRecord r{};
        try {
            r.t = parse_double(cols[0], "t");
            for (int k = 0; k < 3; ++k) r.i_abc[k] = parse_double(cols[1 + k], "i");
            r.u_dc = parse_double(cols[4], "udc");
            r.ref_angle = parse_double(cols[5], "ref_angle");
        } catch (const Error& e) {
            throw Error(ErrorKind::MalformedFile, "row " + std::to_string(row) + ": " + e.what());
        }
        auto gates = SwitchSet::parse_bits(cols[6]);
        if (!gates) throw Error(ErrorKind::MalformedFile, "row " + std::to_string(row) + ": bad gates");
        r.gates = *gates;
        if (!trace.records.empty() && !(r.t > trace.records.back().t)) {
            throw Error(ErrorKind::MalformedFile, "row " + std::to_string(row) + ": time not increasing");
        }
        trace.records.push_back(r);
    }
    return trace;
}

Trace read_trace_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::Io, "cannot open " + path);
    return read_trace(in);
}

} // namespace vsrfdx::sim
