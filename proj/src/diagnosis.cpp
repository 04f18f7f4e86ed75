#include "vsrfdx/diagnosis.hpp"

#include "vsrfdx/error.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>

namespace vsrfdx::diag {

DiagnosisResult decide(double f) {
    if (!(f > -0.5 && f < 7.5)) return DiagnosisResult::error();
    auto k = static_cast<std::int64_t>(std::round(f));
    return DiagnosisResult::label(*feat::label_from_code(k));
}

DiagnosisResult classify_sample(const nn::MlpModel& model, const sim::Abc& i_abc) {
    if (model.regime.kind() == feat::FeatureRegime::Kind::TimeSeries) {
        throw Error(ErrorKind::RegimeMismatch,
                    "time-series models classify windows, not single samples");
    }
    std::array<double, 7> raw{};
    std::array<double, 7> x{};
    const std::size_t dim = model.regime.dim();
    feat::raw_features(model.regime, i_abc, std::span(raw.data(), dim));
    model.norm.apply(std::span<const double>(raw.data(), dim), std::span(x.data(), dim));
    return decide(nn::forward(model, std::span<const double>(x.data(), dim)));
}

std::size_t WindowReport::total() const {
    return std::accumulate(counts.begin(), counts.end(), std::size_t{0});
}

WindowReport aggregate_window(std::span<const DiagnosisResult> results, double threshold,
                              std::size_t window_index, double t_start, double span) {
    if (results.empty()) throw Error(ErrorKind::Config, "empty diagnosis window");
    if (!(threshold > 0.0 && threshold <= 1.0)) {
        throw Error(ErrorKind::Config, "threshold must be in (0, 1]");
    }
    WindowReport r;
    r.window_index = window_index;
    r.t_start = t_start;
    r.span = span;
    for (const auto& res : results) ++r.counts[res.column()];
    const double needed = threshold * static_cast<double>(results.size());
    for (int c = 0; c < kNumLabels; ++c) {
        if (static_cast<double>(r.counts[c]) >= needed) {
            auto label = static_cast<FaultLabel>(c);
            r.above_threshold.push_back(label);
            r.fault_switches = r.fault_switches | feat::label_switches(label);
        }
    }
    return r;
}

SwitchSet localize(const WindowReport& report, LocalizationState& s) {
    for (auto sw : kAllSwitches) {
        auto k = static_cast<std::size_t>(sw);
        if (report.fault_switches.contains(sw)) {
            s.hits[k] = std::min(s.hits[k] + 1, s.debounce);
            s.misses[k] = 0;
            if (s.hits[k] >= s.debounce) s.confirmed.insert(sw);
        } else {
            s.misses[k] = std::min(s.misses[k] + 1, s.debounce);
            s.hits[k] = 0;
            if (s.misses[k] >= s.debounce) s.confirmed.erase(sw);
        }
    }
    return s.confirmed;
}

void Confusion::add(FaultLabel truth, const DiagnosisResult& predicted) {
    ++counts[feat::code(truth)][predicted.column()];
}

std::size_t Confusion::support(int label) const {
    const auto& row = counts[label];
    return std::accumulate(row.begin(), row.end(), std::size_t{0});
}

std::size_t Confusion::total() const {
    std::size_t n = 0;
    for (int c = 0; c < kNumLabels; ++c) n += support(c);
    return n;
}

double Confusion::rate(int truth, int column) const {
    auto n = support(truth);
    return n == 0 ? 0.0 : static_cast<double>(counts[truth][column]) / static_cast<double>(n);
}

double Confusion::macro_accuracy() const {
    double sum = 0.0;
    int classes = 0;
    for (int c = 0; c < kNumLabels; ++c) {
        if (support(c) == 0) continue;
        sum += recall(c);
        ++classes;
    }
    return classes == 0 ? 0.0 : sum / classes;
}

double Confusion::micro_accuracy() const {
    std::size_t hit = 0;
    for (int c = 0; c < kNumLabels; ++c) hit += counts[c][c];
    auto n = total();
    return n == 0 ? 0.0 : static_cast<double>(hit) / static_cast<double>(n);
}

double Confusion::error_rate() const {
    std::size_t err = 0;
    for (int c = 0; c < kNumLabels; ++c) err += counts[c][kNumLabels];
    auto n = total();
    return n == 0 ? 0.0 : static_cast<double>(err) / static_cast<double>(n);
}

Confusion evaluate(const nn::MlpModel& model, const feat::Dataset& data) {
    if (data.size() == 0) throw Error(ErrorKind::EmptyDataset, "empty test set");
    if (!(data.regime == model.regime)) {
        throw Error(ErrorKind::RegimeMismatch, "dataset regime " + data.regime.tag() +
                                                   " does not match model regime " +
                                                   model.regime.tag());
    }
    Confusion c;
    std::vector<double> x(data.x.dim);
    for (std::size_t i = 0; i < data.size(); ++i) {
        model.norm.apply(data.x.row(i), x);
        c.add(data.labels[i], decide(nn::forward(model, x)));
    }
    return c;
}

void write_confusion_csv(std::ostream& out, const Confusion& c) {
    out << "true";
    for (int col = 0; col < kNumLabels; ++col) out << ",F" << col;
    out << ",Error,support\n";
    char buf[32];
    for (int r = 0; r < kNumLabels; ++r) {
        out << 'F' << r;
        for (int col = 0; col <= kNumLabels; ++col) {
            std::snprintf(buf, sizeof buf, ",%.4f", c.rate(r, col));
            out << buf;
        }
        out << ',' << c.support(r) << '\n';
    }
}

std::string diagnosis_log_header() {
    std::string h = "window_index,t_start";
    for (int c = 0; c < kNumLabels; ++c) h += ",count_F" + std::to_string(c);
    return h + ",count_err,fault_switches";
}

std::string diagnosis_log_row(const WindowReport& r) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6f", r.t_start);
    std::string row = std::to_string(r.window_index) + "," + buf;
    for (auto n : r.counts) row += "," + std::to_string(n);
    return row + "," + r.fault_switches.to_string();
}

} // namespace vsrfdx::diag
