#pragma once

// Trace -> classifier dataset: min-max normalization onto [-1, 1], product
// feature synthesis, windowing, and region-wise fault labels.

#include "vsrfdx/sim.hpp"

#include <array>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace vsrfdx::feat {

// Fault codes F0..F7: normal, the six single switches, and SaP+SbP.
enum class FaultLabel : std::uint8_t { F0 = 0, F1, F2, F3, F4, F5, F6, F7 };

inline constexpr int kNumLabels = 8;

constexpr int code(FaultLabel l) { return static_cast<int>(l); }
std::optional<FaultLabel> label_from_code(std::int64_t code);
SwitchSet label_switches(FaultLabel label);
std::optional<FaultLabel> label_for(SwitchSet faulted);
std::string label_name(FaultLabel label);  // "F3"

inline constexpr double kTargetMin = -1.0;
inline constexpr double kTargetMax = 1.0;

struct ChannelRange {
    double min = 0.0;
    double max = 0.0;
};

struct NormalizationSpec {
    std::vector<ChannelRange> channels;

    std::size_t dim() const { return channels.size(); }
    // out[i] = normalize(in[i], channels[i]); sizes must match.
    void apply(std::span<const double> in, std::span<double> out) const;
};

// Affine map of [min, max] onto [-1, 1]; degenerate range maps to -1. No
// clamping: values outside the fitted range extrapolate.
double normalize(double x, ChannelRange range);

class FeatureRegime {
public:
    enum class Kind { TimeSeries, Transient, SyntheticTransient };

    static FeatureRegime time_series(std::size_t window_len = 200);
    static FeatureRegime transient() { return FeatureRegime(Kind::Transient, 1); }
    static FeatureRegime synthetic() { return FeatureRegime(Kind::SyntheticTransient, 1); }

    // "timeseries:<n>", "transient", "synthetic"
    static FeatureRegime parse(std::string_view tag);
    std::string tag() const;

    Kind kind() const { return kind_; }
    std::size_t window_len() const { return window_len_; }
    std::size_t dim() const;

    bool operator==(const FeatureRegime&) const = default;

private:
    FeatureRegime(Kind k, std::size_t w) : kind_(k), window_len_(w) {}
    Kind kind_;
    std::size_t window_len_;
};

// Row-major sample matrix with a source time per row.
struct FeatureMatrix {
    std::size_t dim = 0;
    std::vector<double> values;
    std::vector<double> times;

    std::size_t rows() const { return times.size(); }
    std::span<const double> row(std::size_t i) const { return {values.data() + i * dim, dim}; }
    std::span<double> row(std::size_t i) { return {values.data() + i * dim, dim}; }
    void push_back(std::span<const double> x, double t);
};

NormalizationSpec fit_normalization(const FeatureMatrix& data);

// (ia, ib, ic, ia*ib, ia*ic, ib*ic, ia*ib*ic)
std::array<double, 7> synthesize(double i_a, double i_b, double i_c);

// Raw (un-normalized) features from the transient triple.
void raw_features(const FeatureRegime& regime, const sim::Abc& i_abc, std::span<double> out);

FeatureMatrix extract(const sim::Trace& trace, const FeatureRegime& regime);

// One label per trace record. Throws Error(UncodableFaultSet) when the
// scenario's switch set has no code.
std::vector<FaultLabel> label_samples(const sim::Trace& trace, const sim::FaultScenario& scenario);

// Labels aligned with extract(): time-series windows take the label of their
// last record.
std::vector<FaultLabel> labels_for_regime(const std::vector<FaultLabel>& record_labels,
                                          const FeatureRegime& regime);

struct Dataset {
    FeatureRegime regime = FeatureRegime::transient();
    FeatureMatrix x;
    std::vector<FaultLabel> labels;
    // Provenance stamp written into the header when `config` is non-empty.
    std::uint64_t seed = 0;
    std::string config;

    std::size_t size() const { return labels.size(); }
    void append(const Dataset& other);
};

// `vsr-dataset v1, regime=<tag>, dim=<n>[, seed=<n>, config=<hex>]` then `<f1>,...,<fn>,<label>,<t>` rows.
void write_dataset(std::ostream& out, const Dataset& data);
void write_dataset_file(const std::string& path, const Dataset& data);
Dataset read_dataset(std::istream& in);
Dataset read_dataset_file(const std::string& path);

} // namespace vsrfdx::feat
