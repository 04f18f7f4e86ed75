#pragma once

// Fully connected feedforward regressor: tanh hidden layers, linear scalar
// output, trained on MSE against the integer fault label.

#include "vsrfdx/features.hpp"

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace vsrfdx::nn {

enum class Activation { Tansig, Linear };

std::string activation_tag(Activation a);

struct LayerShape {
    std::size_t in = 0;
    std::size_t out = 0;
    Activation activation = Activation::Tansig;
    std::size_t weight_offset = 0;  // out x in, row-major
    std::size_t bias_offset = 0;
};

inline const std::vector<std::size_t> kDefaultHidden(10, 16);

class MlpModel {
public:
    MlpModel() = default;
    // Zero-initialized network: hidden tanh layers, then one linear output.
    MlpModel(std::size_t input_dim, const std::vector<std::size_t>& hidden);

    std::size_t input_dim() const { return layers_.empty() ? 0 : layers_.front().in; }
    std::size_t parameter_count() const { return params_.size(); }
    const std::vector<LayerShape>& layers() const { return layers_; }

    std::span<double> params() { return params_; }
    std::span<const double> params() const { return params_; }
    std::span<double> weights(std::size_t layer);
    std::span<const double> weights(std::size_t layer) const;
    std::span<double> biases(std::size_t layer);
    std::span<const double> biases(std::size_t layer) const;

    // Uniform in +-sqrt(6 / (fan_in + fan_out)) per layer, zero biases.
    void init_glorot(std::uint64_t seed);

    // Rebuilds the layer table from explicit shapes (used by the loader).
    static MlpModel from_shapes(std::vector<LayerShape> shapes);

    feat::NormalizationSpec norm;
    feat::FeatureRegime regime = feat::FeatureRegime::synthetic();
    std::uint64_t seed = 0;
    double final_loss = 0.0;

private:
    std::vector<LayerShape> layers_;
    std::vector<double> params_;
};

// Closed-form parameter count for a tanh stack with a scalar output.
std::size_t parameter_count(std::size_t input_dim, const std::vector<std::size_t>& hidden);

// x must already be normalized. Throws Error(DimensionMismatch).
double forward(const MlpModel& model, std::span<const double> x);
// Applies the embedded normalization first.
double forward_raw(const MlpModel& model, std::span<const double> raw);

// Squared error (f(x) - y)^2 for one sample; accumulates d/dtheta into grad.
double accumulate_gradient(const MlpModel& model, std::span<const double> x, double y,
                           std::span<double> grad);

// max over parameters of |g_bp - g_fd| / max(|g_bp|, |g_fd|, 1e-12)
double gradient_check(const MlpModel& model, std::span<const double> x, double y,
                      double epsilon = 1e-5);

enum class Optimizer { Momentum, Adam };

struct TrainConfig {
    double learning_rate = 0.01;
    double loss_goal = 1e-4;
    std::size_t max_epochs = 1000;
    std::size_t batch_size = 64;
    std::uint64_t seed = 1;
    Optimizer optimizer = Optimizer::Momentum;
    double momentum = 0.9;
    std::size_t patience = 50;      // epochs without validation improvement
    bool halve_on_increase = false; // on a rising epoch loss: halve the rate, drop momentum
    unsigned threads = 1;           // >1: data-parallel batches, tree-reduced

    void validate() const;
};

enum class StopReason { GoalReached, MaxEpochs, EarlyStop };
std::string stop_reason_name(StopReason r);

struct EpochStats {
    std::size_t epoch;
    double train_mse;
    double val_mse;  // NaN without a validation set
};

struct TrainHistory {
    std::vector<EpochStats> epochs;
    StopReason stop = StopReason::MaxEpochs;
};

struct TrainResult {
    MlpModel model;
    TrainHistory history;
};

// Inputs are already-normalized rows; targets are label codes. `model`
// supplies the architecture and initial weights.
TrainResult train(MlpModel model, const feat::FeatureMatrix& train_x,
                  std::span<const double> train_y, const feat::FeatureMatrix& val_x,
                  std::span<const double> val_y, const TrainConfig& config);

// Mean of (f(x)-y)^2 over the batch rows; gradient of that mean into grad.
// threads > 1 splits rows into contiguous chunks reduced pairwise.
double batch_gradient(const MlpModel& model, const feat::FeatureMatrix& x,
                      std::span<const double> y, std::span<const std::size_t> rows,
                      std::span<double> grad, unsigned threads = 1);

double mean_squared_error(const MlpModel& model, const feat::FeatureMatrix& x,
                          std::span<const double> y);

void save_model(std::ostream& out, const MlpModel& model);
void save_model_file(const std::string& path, const MlpModel& model);
MlpModel load_model(std::istream& in);
MlpModel load_model_file(const std::string& path);

} // namespace vsrfdx::nn
