#include "vsrfdx/features.hpp"

#include "vsrfdx/config.hpp"
#include "vsrfdx/error.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>

namespace vsrfdx::feat {

namespace {

constexpr std::array<SwitchSet, kNumLabels> kLabelSets{
    SwitchSet{},
    SwitchSet{SwitchId::SaP},
    SwitchSet{SwitchId::SaN},
    SwitchSet{SwitchId::SbP},
    SwitchSet{SwitchId::SbN},
    SwitchSet{SwitchId::ScP},
    SwitchSet{SwitchId::ScN},
    SwitchSet{SwitchId::SaP, SwitchId::SbP},
};

// Shortest decimal that round-trips.
void append_double(std::string& out, double v) {
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    out.append(buf, ptr);
}

double parse_field(std::string_view s, std::size_t row) {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc{} || ptr != s.data() + s.size()) {
        throw Error(ErrorKind::MalformedFile, "row " + std::to_string(row) + ": bad number '" +
                                                  std::string(s) + "'");
    }
    return v;
}

} // namespace

std::optional<FaultLabel> label_from_code(std::int64_t c) {
    if (c < 0 || c >= kNumLabels) return std::nullopt;
    return static_cast<FaultLabel>(c);
}

SwitchSet label_switches(FaultLabel label) { return kLabelSets[static_cast<std::size_t>(label)]; }

std::optional<FaultLabel> label_for(SwitchSet faulted) {
    for (int c = 0; c < kNumLabels; ++c) {
        if (kLabelSets[c] == faulted) return static_cast<FaultLabel>(c);
    }
    return std::nullopt;
}

std::string label_name(FaultLabel label) { return "F" + std::to_string(code(label)); }

double normalize(double x, ChannelRange range) {
    if (range.max == range.min) return kTargetMin;
    return (kTargetMax - kTargetMin) * (x - range.min) / (range.max - range.min) + kTargetMin;
}

void NormalizationSpec::apply(std::span<const double> in, std::span<double> out) const {
    if (in.size() != channels.size() || out.size() != channels.size()) {
        throw Error(ErrorKind::DimensionMismatch, "normalization expects " +
                                                      std::to_string(channels.size()) + " channels");
    }
    for (std::size_t i = 0; i < in.size(); ++i) out[i] = normalize(in[i], channels[i]);
}

FeatureRegime FeatureRegime::time_series(std::size_t window_len) {
    if (window_len < 1) throw Error(ErrorKind::Config, "window_len must be >= 1");
    return FeatureRegime(Kind::TimeSeries, window_len);
}

FeatureRegime FeatureRegime::parse(std::string_view tag) {
    if (tag == "transient") return transient();
    if (tag == "synthetic") return synthetic();
    if (tag.rfind("timeseries", 0) == 0) {
        auto rest = tag.substr(std::string_view("timeseries").size());
        if (rest.empty()) return time_series();
        if (rest.front() != ':') throw Error(ErrorKind::Config, "bad regime '" + std::string(tag) + "'");
        auto n = parse_int(rest.substr(1), "window_len");
        if (n < 1) throw Error(ErrorKind::Config, "window_len must be >= 1");
        return time_series(static_cast<std::size_t>(n));
    }
    throw Error(ErrorKind::Config, "unknown regime '" + std::string(tag) + "'");
}

std::string FeatureRegime::tag() const {
    switch (kind_) {
    case Kind::TimeSeries: return "timeseries:" + std::to_string(window_len_);
    case Kind::Transient: return "transient";
    case Kind::SyntheticTransient: return "synthetic";
    }
    return {};
}

std::size_t FeatureRegime::dim() const {
    switch (kind_) {
    case Kind::TimeSeries: return 3 * window_len_;
    case Kind::Transient: return 3;
    case Kind::SyntheticTransient: return 7;
    }
    return 0;
}

void FeatureMatrix::push_back(std::span<const double> x, double t) {
    if (x.size() != dim) throw Error(ErrorKind::DimensionMismatch, "row length != dim");
    values.insert(values.end(), x.begin(), x.end());
    times.push_back(t);
}

NormalizationSpec fit_normalization(const FeatureMatrix& data) {
    if (data.rows() == 0) throw Error(ErrorKind::EmptyDataset, "cannot fit normalization on no samples");
    NormalizationSpec spec;
    spec.channels.resize(data.dim);
    auto first = data.row(0);
    for (std::size_t c = 0; c < data.dim; ++c) spec.channels[c] = {first[c], first[c]};
    for (std::size_t r = 1; r < data.rows(); ++r) {
        auto x = data.row(r);
        for (std::size_t c = 0; c < data.dim; ++c) {
            spec.channels[c].min = std::min(spec.channels[c].min, x[c]);
            spec.channels[c].max = std::max(spec.channels[c].max, x[c]);
        }
    }
    return spec;
}

std::array<double, 7> synthesize(double i_a, double i_b, double i_c) {
    return {i_a, i_b, i_c, i_a * i_b, i_a * i_c, i_b * i_c, i_a * i_b * i_c};
}

void raw_features(const FeatureRegime& regime, const sim::Abc& i, std::span<double> out) {
    switch (regime.kind()) {
    case FeatureRegime::Kind::Transient:
        if (out.size() != 3) break;
        std::copy(i.begin(), i.end(), out.begin());
        return;
    case FeatureRegime::Kind::SyntheticTransient: {
        if (out.size() != 7) break;
        auto s = synthesize(i[0], i[1], i[2]);
        std::copy(s.begin(), s.end(), out.begin());
        return;
    }
    case FeatureRegime::Kind::TimeSeries:
        throw Error(ErrorKind::RegimeMismatch, "time-series features need a window of records");
    }
    throw Error(ErrorKind::DimensionMismatch, "output span does not match regime dimension");
}

FeatureMatrix extract(const sim::Trace& trace, const FeatureRegime& regime) {
    FeatureMatrix m;
    m.dim = regime.dim();
    const auto& recs = trace.records;
    if (regime.kind() == FeatureRegime::Kind::TimeSeries) {
        const std::size_t w = regime.window_len();
        if (recs.size() < w) {
            throw Error(ErrorKind::TraceTooShort, "trace has " + std::to_string(recs.size()) +
                                                      " records, window needs " + std::to_string(w));
        }
        const std::size_t n = recs.size() - w + 1;
        m.values.resize(n * m.dim);
        m.times.resize(n);
        for (std::size_t s = 0; s < n; ++s) {
            auto row = m.row(s);
            for (std::size_t j = 0; j < w; ++j) {
                for (int k = 0; k < 3; ++k) row[k * w + j] = recs[s + j].i_abc[k];
            }
            m.times[s] = recs[s + w - 1].t;
        }
        return m;
    }
    m.values.resize(recs.size() * m.dim);
    m.times.resize(recs.size());
    for (std::size_t r = 0; r < recs.size(); ++r) {
        raw_features(regime, recs[r].i_abc, m.row(r));
        m.times[r] = recs[r].t;
    }
    return m;
}

std::vector<FaultLabel> label_samples(const sim::Trace& trace, const sim::FaultScenario& scenario) {
    if (!label_for(scenario.switches())) {
        throw Error(ErrorKind::UncodableFaultSet,
                    "no fault code for {" + scenario.switches().to_string() + "}");
    }
    std::vector<FaultLabel> labels;
    labels.reserve(trace.records.size());
    for (const auto& r : trace.records) {
        SwitchSet visible = scenario.active_at(r.t) & sim::observable_switches(r.ref_angle);
        auto label = label_for(visible);
        if (!label) {
            throw Error(ErrorKind::UncodableFaultSet, "no fault code for {" + visible.to_string() + "}");
        }
        labels.push_back(*label);
    }
    return labels;
}

std::vector<FaultLabel> labels_for_regime(const std::vector<FaultLabel>& record_labels,
                                          const FeatureRegime& regime) {
    if (regime.kind() != FeatureRegime::Kind::TimeSeries) return record_labels;
    const std::size_t w = regime.window_len();
    if (record_labels.size() < w) return {};
    return {record_labels.begin() + static_cast<std::ptrdiff_t>(w - 1), record_labels.end()};
}

void Dataset::append(const Dataset& other) {
    if (!(other.regime == regime)) throw Error(ErrorKind::RegimeMismatch, "dataset regimes differ");
    if (x.dim == 0) x.dim = other.x.dim;
    x.values.insert(x.values.end(), other.x.values.begin(), other.x.values.end());
    x.times.insert(x.times.end(), other.x.times.begin(), other.x.times.end());
    labels.insert(labels.end(), other.labels.begin(), other.labels.end());
}

void write_dataset(std::ostream& out, const Dataset& data) {
    if (data.x.dim != data.regime.dim() && data.size() > 0) {
        throw Error(ErrorKind::DimensionMismatch, "dataset dim does not match its regime");
    }
    out << "vsr-dataset v1, regime=" << data.regime.tag() << ", dim=" << data.regime.dim();
    if (!data.config.empty()) out << ", seed=" << data.seed << ", config=" << data.config;
    out << '\n';
    std::string line;
    for (std::size_t i = 0; i < data.size(); ++i) {
        line.clear();
        for (double v : data.x.row(i)) {
            append_double(line, v);
            line += ',';
        }
        line += std::to_string(code(data.labels[i]));
        line += ',';
        append_double(line, data.x.times[i]);
        line += '\n';
        out << line;
    }
}

void write_dataset_file(const std::string& path, const Dataset& data) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorKind::Io, "cannot write " + path);
    write_dataset(out, data);
    if (!out) throw Error(ErrorKind::Io, "write failed: " + path);
}

Dataset read_dataset(std::istream& in) {
    std::string line;
    if (!std::getline(in, line)) throw Error(ErrorKind::MalformedFile, "empty dataset file");
    auto fields = split(line, ',');
    if ((fields.size() != 3 && fields.size() != 5) || fields[0].rfind("vsr-dataset ", 0) != 0) {
        throw Error(ErrorKind::MalformedFile, "bad dataset header");
    }
    if (fields[0] != "vsr-dataset v1") throw Error(ErrorKind::VersionMismatch, fields[0]);
    if (fields[1].rfind("regime=", 0) != 0 || fields[2].rfind("dim=", 0) != 0) {
        throw Error(ErrorKind::MalformedFile, "bad dataset header");
    }
    Dataset data;
    try {
        data.regime = FeatureRegime::parse(fields[1].substr(7));
        auto dim = parse_int(fields[2].substr(4), "dim");
        if (dim < 0 || static_cast<std::size_t>(dim) != data.regime.dim()) {
            throw Error(ErrorKind::MalformedFile, "dim does not match regime");
        }
        if (fields.size() == 5) {
            if (fields[3].rfind("seed=", 0) != 0 || fields[4].rfind("config=", 0) != 0) {
                throw Error(ErrorKind::MalformedFile, "bad dataset header");
            }
            data.seed = static_cast<std::uint64_t>(parse_int(fields[3].substr(5), "seed"));
            data.config = fields[4].substr(7);
        }
    } catch (const Error& e) {
        if (e.kind() == ErrorKind::MalformedFile) throw;
        throw Error(ErrorKind::MalformedFile, e.what());
    }
    const std::size_t dim = data.regime.dim();
    data.x.dim = dim;

    std::size_t row = 1;
    std::vector<double> buf(dim);
    while (std::getline(in, line)) {
        ++row;
        if (line.empty()) continue;
        std::string_view rest(line);
        std::size_t col = 0;
        double label_val = 0.0;
        double t = 0.0;
        while (true) {
            auto pos = rest.find(',');
            auto tok = rest.substr(0, pos);
            if (col < dim) {
                buf[col] = parse_field(tok, row);
            } else if (col == dim) {
                label_val = parse_field(tok, row);
            } else if (col == dim + 1) {
                t = parse_field(tok, row);
            }
            ++col;
            if (pos == std::string_view::npos) break;
            rest.remove_prefix(pos + 1);
        }
        if (col != dim + 2) {
            throw Error(ErrorKind::MalformedFile, "row " + std::to_string(row) + ": expected " +
                                                      std::to_string(dim + 2) + " columns");
        }
        auto label = label_from_code(static_cast<std::int64_t>(label_val));
        if (!label || static_cast<double>(code(*label)) != label_val) {
            throw Error(ErrorKind::MalformedFile, "row " + std::to_string(row) + ": label outside 0..7");
        }
        data.x.push_back(buf, t);
        data.labels.push_back(*label);
    }
    return data;
}

Dataset read_dataset_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::Io, "cannot open " + path);
    return read_dataset(in);
}

} // namespace vsrfdx::feat
