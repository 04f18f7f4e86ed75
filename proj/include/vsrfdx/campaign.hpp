#pragma once

// Scripted fault-injection campaigns: one batch of randomized runs per fault
// class, region-wise labels, class balancing and stratified splits.

#include "vsrfdx/features.hpp"
#include "vsrfdx/mlp.hpp"
#include "vsrfdx/sim.hpp"

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

namespace vsrfdx::campaign {

struct CampaignConfig {
    sim::SimParams params;
    std::vector<int> classes{0, 1, 2, 3, 4, 5, 6, 7};
    std::size_t runs_per_class = 24;
    double duration = 0.5;
    double fault_onset = 0.2;
    double onset_jitter = 0.02;   // one fundamental period: every onset angle
    double sample_start = 0.2;    // records before this are discarded
    std::size_t samples_per_class = 0;  // 0: balance down to the rarest class
    double train_fraction = 0.05;
    double val_fraction = 0.05;
    std::vector<feat::FeatureRegime> regimes{feat::FeatureRegime::synthetic(),
                                             feat::FeatureRegime::transient()};
    std::vector<std::size_t> hidden = nn::kDefaultHidden;
    nn::TrainConfig train;
    unsigned threads = 0;  // simulation workers; 0 = hardware concurrency
    std::uint64_t seed = 1;
    std::uint64_t hash = 0;

    void validate() const;
};

// Keys: the SimParams keys, classes, runs_per_class, duration, fault_onset,
// onset_jitter, sample_start, samples_per_class, train_fraction,
// val_fraction, regimes (comma list), hidden (comma list), threads, seed, and
// learning_rate, loss_goal, max_epochs, batch_size, optimizer, momentum,
// patience, halve_on_increase, train_threads, train_seed.
CampaignConfig parse_campaign_config(std::string_view text);
CampaignConfig read_campaign_config(const std::string& path);

// Fault scenario used for every run of class `label`.
sim::FaultScenario class_scenario(feat::FaultLabel label, double onset);

// Per-run seed derived from the campaign seed.
std::uint64_t run_seed(std::uint64_t campaign_seed, int label, std::size_t run);

struct Split {
    feat::Dataset train;
    feat::Dataset val;
    feat::Dataset test;
};

struct CampaignOutput {
    std::vector<Split> splits;  // one per configured regime, same samples
    std::array<std::size_t, feat::kNumLabels> available{};  // before balancing
    std::size_t per_class = 0;
};

using Progress = std::function<void(const std::string&)>;

// Throws Error(EmptyDataset) when a requested class yields no samples.
CampaignOutput run_campaign(const CampaignConfig& config, const Progress& progress = {});

// Per-label shuffle, then the first floor(f * n) rows go to train, the next
// to val, the rest to test.
Split stratified_split(const feat::Dataset& data, double train_fraction, double val_fraction,
                       std::uint64_t seed);

// Targets for mlp::train.
std::vector<double> targets(const feat::Dataset& data);

// Min-max normalization of every row with `norm`.
feat::FeatureMatrix normalized(const feat::Dataset& data, const feat::NormalizationSpec& norm);

// Fits normalization on `train`, Glorot-initializes from config.seed and
// trains. The returned model carries norm, regime and seed.
nn::TrainResult fit_model(const feat::Dataset& train, const feat::Dataset& val,
                          const std::vector<std::size_t>& hidden, const nn::TrainConfig& config);

} // namespace vsrfdx::campaign
