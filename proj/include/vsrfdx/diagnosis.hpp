#pragma once

// Per-sample decision, frame-window aggregation, debounced localization and
// confusion-matrix evaluation.

#include "vsrfdx/features.hpp"
#include "vsrfdx/mlp.hpp"

#include <array>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace vsrfdx::diag {

using feat::FaultLabel;
using feat::kNumLabels;

inline constexpr double kDefaultThreshold = 0.10;
inline constexpr std::size_t kDefaultWindow = 200;
inline constexpr int kDefaultDebounce = 2;

// Either a fault label or the out-of-range Error outcome.
class DiagnosisResult {
public:
    static DiagnosisResult label(FaultLabel l) { return DiagnosisResult(l); }
    static DiagnosisResult error() { return DiagnosisResult(); }

    bool is_error() const { return !label_; }
    FaultLabel value() const { return *label_; }  // only when !is_error()
    // 0..7, or 8 for Error.
    int column() const { return label_ ? feat::code(*label_) : kNumLabels; }

    bool operator==(const DiagnosisResult&) const = default;

private:
    DiagnosisResult() = default;
    explicit DiagnosisResult(FaultLabel l) : label_(l) {}
    std::optional<FaultLabel> label_;
};

// Label round(f) (half away from zero) when -0.5 < f < 7.5, else Error.
DiagnosisResult decide(double f_value);

// Transient or synthetic models only; throws Error(RegimeMismatch) otherwise.
DiagnosisResult classify_sample(const nn::MlpModel& model, const sim::Abc& i_abc);

struct WindowReport {
    std::size_t window_index = 0;
    double t_start = 0.0;
    double span = 0.0;  // seconds covered by the window
    std::array<std::size_t, kNumLabels + 1> counts{};  // F0..F7, Error last
    std::vector<FaultLabel> above_threshold;
    SwitchSet fault_switches;

    std::size_t total() const;
};

// Throws Error(Config) for an empty window or threshold outside (0, 1].
WindowReport aggregate_window(std::span<const DiagnosisResult> results, double threshold,
                              std::size_t window_index = 0, double t_start = 0.0,
                              double span = 0.0);

struct LocalizationState {
    int debounce = kDefaultDebounce;
    std::array<int, 6> hits{};    // consecutive windows present
    std::array<int, 6> misses{};  // consecutive windows absent
    SwitchSet confirmed;
};

// Folds one report in; returns the confirmed set afterwards.
SwitchSet localize(const WindowReport& report, LocalizationState& state);

struct Confusion {
    // rows: true label; columns: F0..F7, Error.
    std::array<std::array<std::size_t, kNumLabels + 1>, kNumLabels> counts{};

    void add(FaultLabel truth, const DiagnosisResult& predicted);
    std::size_t support(int label) const;
    std::size_t total() const;
    // Row-normalized rate; 0 for rows without support.
    double rate(int truth, int column) const;
    double recall(int label) const { return rate(label, label); }
    // Mean diagonal over classes with support.
    double macro_accuracy() const;
    double micro_accuracy() const;
    double error_rate() const;
};

// Runs every row of `data` through the model. Throws Error(EmptyDataset) and
// Error(RegimeMismatch) when the dataset and model regimes differ.
Confusion evaluate(const nn::MlpModel& model, const feat::Dataset& data);

void write_confusion_csv(std::ostream& out, const Confusion& c);

// `window_index,t_start,count_F0,...,count_F7,count_err,fault_switches`
std::string diagnosis_log_header();
std::string diagnosis_log_row(const WindowReport& report);

} // namespace vsrfdx::diag
