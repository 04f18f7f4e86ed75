#include "vsrfdx/mlp.hpp"

#include "vsrfdx/config.hpp"
#include "vsrfdx/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>
#include <thread>

namespace vsrfdx::nn {

namespace {

// Per-layer activations, reused across samples.
struct Workspace {
    std::vector<std::vector<double>> act;    // act[0] = input, act[l+1] = output of layer l
    std::vector<double> delta;
    std::vector<double> delta_prev;

    void prepare(const MlpModel& m) {
        const auto& layers = m.layers();
        act.resize(layers.size() + 1);
        act[0].resize(m.input_dim());
        std::size_t widest = m.input_dim();
        for (std::size_t l = 0; l < layers.size(); ++l) {
            act[l + 1].resize(layers[l].out);
            widest = std::max(widest, layers[l].out);
        }
        delta.resize(widest);
        delta_prev.resize(widest);
    }
};

double run_forward(const MlpModel& m, std::span<const double> x, Workspace& ws) {
    if (x.size() != m.input_dim() || m.layers().empty()) {
        throw Error(ErrorKind::DimensionMismatch, "input has " + std::to_string(x.size()) +
                                                      " features, model expects " +
                                                      std::to_string(m.input_dim()));
    }
    std::copy(x.begin(), x.end(), ws.act[0].begin());
    const auto p = m.params();
    for (std::size_t l = 0; l < m.layers().size(); ++l) {
        const auto& L = m.layers()[l];
        const double* w = p.data() + L.weight_offset;
        const double* b = p.data() + L.bias_offset;
        const double* in = ws.act[l].data();
        double* out = ws.act[l + 1].data();
        for (std::size_t o = 0; o < L.out; ++o) {
            double z = b[o];
            const double* row = w + o * L.in;
            for (std::size_t i = 0; i < L.in; ++i) z += row[i] * in[i];
            out[o] = L.activation == Activation::Tansig ? std::tanh(z) : z;
        }
    }
    return ws.act.back()[0];
}

double run_backward(const MlpModel& m, std::span<const double> x, double y, Workspace& ws,
                    std::span<double> grad) {
    const double f = run_forward(m, x, ws);
    const double err = f - y;
    const auto p = m.params();
    const auto& layers = m.layers();

    // dLoss/dz for the (linear) output neuron.
    ws.delta[0] = 2.0 * err;
    if (layers.back().activation == Activation::Tansig) {
        double a = ws.act.back()[0];
        ws.delta[0] *= 1.0 - a * a;
    }
    for (std::size_t l = layers.size(); l-- > 0;) {
        const auto& L = layers[l];
        const double* in = ws.act[l].data();
        double* gw = grad.data() + L.weight_offset;
        double* gb = grad.data() + L.bias_offset;
        for (std::size_t o = 0; o < L.out; ++o) {
            double d = ws.delta[o];
            gb[o] += d;
            double* grow = gw + o * L.in;
            for (std::size_t i = 0; i < L.in; ++i) grow[i] += d * in[i];
        }
        if (l == 0) break;
        const double* w = p.data() + L.weight_offset;
        const auto& prev = layers[l - 1];
        for (std::size_t i = 0; i < L.in; ++i) {
            double s = 0.0;
            for (std::size_t o = 0; o < L.out; ++o) s += w[o * L.in + i] * ws.delta[o];
            double a = in[i];
            ws.delta_prev[i] = prev.activation == Activation::Tansig ? s * (1.0 - a * a) : s;
        }
        std::swap(ws.delta, ws.delta_prev);
    }
    return err * err;
}

Workspace& thread_workspace(const MlpModel& m) {
    thread_local Workspace ws;
    ws.prepare(m);
    return ws;
}

double chunk_gradient(const MlpModel& model, const feat::FeatureMatrix& x,
                      std::span<const double> y, std::span<const std::size_t> rows,
                      std::span<double> grad) {
    Workspace ws;
    ws.prepare(model);
    std::fill(grad.begin(), grad.end(), 0.0);
    double loss = 0.0;
    for (auto r : rows) loss += run_backward(model, x.row(r), y[r], ws, grad);
    return loss;
}

} // namespace

std::string activation_tag(Activation a) { return a == Activation::Tansig ? "tansig" : "linear"; }

MlpModel::MlpModel(std::size_t input_dim, const std::vector<std::size_t>& hidden) {
    std::vector<LayerShape> shapes;
    std::size_t in = input_dim;
    for (auto width : hidden) {
        shapes.push_back({in, width, Activation::Tansig, 0, 0});
        in = width;
    }
    shapes.push_back({in, 1, Activation::Linear, 0, 0});
    *this = from_shapes(std::move(shapes));
}

MlpModel MlpModel::from_shapes(std::vector<LayerShape> shapes) {
    MlpModel m;
    std::size_t offset = 0;
    for (std::size_t l = 0; l < shapes.size(); ++l) {
        auto& s = shapes[l];
        if (s.in == 0 || s.out == 0) throw Error(ErrorKind::DimensionMismatch, "empty layer");
        if (l > 0 && shapes[l - 1].out != s.in) {
            throw Error(ErrorKind::DimensionMismatch, "layer " + std::to_string(l) +
                                                          " input does not match previous output");
        }
        s.weight_offset = offset;
        offset += s.in * s.out;
        s.bias_offset = offset;
        offset += s.out;
    }
    if (!shapes.empty() && shapes.back().out != 1) {
        throw Error(ErrorKind::DimensionMismatch, "output layer must have one neuron");
    }
    m.layers_ = std::move(shapes);
    m.params_.assign(offset, 0.0);
    return m;
}

std::span<double> MlpModel::weights(std::size_t l) {
    return {params_.data() + layers_[l].weight_offset, layers_[l].in * layers_[l].out};
}
std::span<const double> MlpModel::weights(std::size_t l) const {
    return {params_.data() + layers_[l].weight_offset, layers_[l].in * layers_[l].out};
}
std::span<double> MlpModel::biases(std::size_t l) {
    return {params_.data() + layers_[l].bias_offset, layers_[l].out};
}
std::span<const double> MlpModel::biases(std::size_t l) const {
    return {params_.data() + layers_[l].bias_offset, layers_[l].out};
}

void MlpModel::init_glorot(std::uint64_t s) {
    seed = s;
    std::mt19937_64 rng(s);
    for (std::size_t l = 0; l < layers_.size(); ++l) {
        const auto& L = layers_[l];
        double limit = std::sqrt(6.0 / static_cast<double>(L.in + L.out));
        for (auto& w : weights(l)) {
            double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
            w = (2.0 * u - 1.0) * limit;
        }
        for (auto& b : biases(l)) b = 0.0;
    }
}

std::size_t parameter_count(std::size_t input_dim, const std::vector<std::size_t>& hidden) {
    std::size_t n = 0;
    std::size_t in = input_dim;
    for (auto w : hidden) {
        n += w * in + w;
        in = w;
    }
    return n + in + 1;
}

double forward(const MlpModel& model, std::span<const double> x) {
    return run_forward(model, x, thread_workspace(model));
}

double forward_raw(const MlpModel& model, std::span<const double> raw) {
    std::vector<double> x(raw.size());
    model.norm.apply(raw, x);
    return forward(model, x);
}

double accumulate_gradient(const MlpModel& model, std::span<const double> x, double y,
                           std::span<double> grad) {
    if (grad.size() != model.parameter_count()) {
        throw Error(ErrorKind::DimensionMismatch, "gradient buffer size");
    }
    return run_backward(model, x, y, thread_workspace(model), grad);
}

double gradient_check(const MlpModel& model, std::span<const double> x, double y, double epsilon) {
    std::vector<double> grad(model.parameter_count(), 0.0);
    accumulate_gradient(model, x, y, grad);

    MlpModel probe = model;
    auto p = probe.params();
    double worst = 0.0;
    for (std::size_t k = 0; k < p.size(); ++k) {
        const double saved = p[k];
        p[k] = saved + epsilon;
        double fp = forward(probe, x) - y;
        p[k] = saved - epsilon;
        double fm = forward(probe, x) - y;
        p[k] = saved;
        double fd = (fp * fp - fm * fm) / (2.0 * epsilon);
        double denom = std::max({std::abs(grad[k]), std::abs(fd), 1e-12});
        worst = std::max(worst, std::abs(grad[k] - fd) / denom);
    }
    return worst;
}

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0)) throw Error(ErrorKind::Config, "learning_rate must be > 0");
    if (!(loss_goal > 0.0)) throw Error(ErrorKind::Config, "loss_goal must be > 0");
    if (batch_size < 1) throw Error(ErrorKind::Config, "batch_size must be >= 1");
    if (threads < 1) throw Error(ErrorKind::Config, "threads must be >= 1");
}

std::string stop_reason_name(StopReason r) {
    switch (r) {
    case StopReason::GoalReached: return "goal_reached";
    case StopReason::MaxEpochs: return "max_epochs";
    case StopReason::EarlyStop: return "early_stop";
    }
    return "unknown";
}

double batch_gradient(const MlpModel& model, const feat::FeatureMatrix& x,
                      std::span<const double> y, std::span<const std::size_t> rows,
                      std::span<double> grad, unsigned threads) {
    if (rows.empty()) throw Error(ErrorKind::EmptyDataset, "empty batch");
    const std::size_t n_params = model.parameter_count();
    const std::size_t workers = std::min<std::size_t>(std::max(1u, threads), rows.size());
    double loss = 0.0;
    if (workers == 1) {
        loss = chunk_gradient(model, x, y, rows, grad);
    } else {
        std::vector<std::vector<double>> partial(workers, std::vector<double>(n_params));
        std::vector<double> losses(workers, 0.0);
        std::vector<std::thread> pool;
        const std::size_t per = rows.size() / workers;
        const std::size_t extra = rows.size() % workers;
        std::size_t begin = 0;
        for (std::size_t w = 0; w < workers; ++w) {
            std::size_t len = per + (w < extra ? 1 : 0);
            auto chunk = rows.subspan(begin, len);
            begin += len;
            pool.emplace_back([&, w, chunk] {
                losses[w] = chunk_gradient(model, x, y, chunk, partial[w]);
            });
        }
        for (auto& t : pool) t.join();
        // Fixed pairwise tree so the result does not depend on scheduling.
        for (std::size_t stride = 1; stride < workers; stride *= 2) {
            for (std::size_t w = 0; w + stride < workers; w += 2 * stride) {
                auto& dst = partial[w];
                const auto& src = partial[w + stride];
                for (std::size_t k = 0; k < n_params; ++k) dst[k] += src[k];
                losses[w] += losses[w + stride];
            }
        }
        std::copy(partial[0].begin(), partial[0].end(), grad.begin());
        loss = losses[0];
    }
    const double inv = 1.0 / static_cast<double>(rows.size());
    for (auto& g : grad) g *= inv;
    return loss * inv;
}

double mean_squared_error(const MlpModel& model, const feat::FeatureMatrix& x,
                          std::span<const double> y) {
    if (x.rows() == 0) return std::numeric_limits<double>::quiet_NaN();
    Workspace ws;
    ws.prepare(model);
    double acc = 0.0;
    for (std::size_t r = 0; r < x.rows(); ++r) {
        double e = run_forward(model, x.row(r), ws) - y[r];
        acc += e * e;
    }
    return acc / static_cast<double>(x.rows());
}

TrainResult train(MlpModel model, const feat::FeatureMatrix& train_x,
                  std::span<const double> train_y, const feat::FeatureMatrix& val_x,
                  std::span<const double> val_y, const TrainConfig& config) {
    config.validate();
    if (train_x.rows() == 0) throw Error(ErrorKind::EmptyDataset, "no training samples");
    if (train_y.size() != train_x.rows() || val_y.size() != val_x.rows()) {
        throw Error(ErrorKind::DimensionMismatch, "targets do not match samples");
    }
    if (train_x.dim != model.input_dim()) {
        throw Error(ErrorKind::DimensionMismatch, "training rows do not match model input");
    }

    const std::size_t n = train_x.rows();
    const std::size_t n_params = model.parameter_count();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(config.seed);

    std::vector<double> grad(n_params), m1(n_params, 0.0), m2(n_params, 0.0);
    double lr = config.learning_rate;
    std::uint64_t adam_t = 0;

    TrainResult result;
    auto& history = result.history;
    const bool has_val = val_x.rows() > 0;
    double best_val = std::numeric_limits<double>::infinity();
    std::vector<double> best_params;
    std::size_t since_best = 0;
    double prev_train = std::numeric_limits<double>::infinity();

    for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
        // Fisher-Yates with our own draws so the order is portable.
        for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng() % i]);

        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < n; start += config.batch_size) {
            std::size_t len = std::min(config.batch_size, n - start);
            std::span<const std::size_t> rows(order.data() + start, len);
            double loss = batch_gradient(model, train_x, train_y, rows, grad, config.threads);
            epoch_loss += loss * static_cast<double>(len);

            auto p = model.params();
            if (config.optimizer == Optimizer::Momentum) {
                for (std::size_t k = 0; k < n_params; ++k) {
                    m1[k] = config.momentum * m1[k] - lr * grad[k];
                    p[k] += m1[k];
                }
            } else {
                constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
                ++adam_t;
                double c1 = 1.0 - std::pow(b1, static_cast<double>(adam_t));
                double c2 = 1.0 - std::pow(b2, static_cast<double>(adam_t));
                for (std::size_t k = 0; k < n_params; ++k) {
                    m1[k] = b1 * m1[k] + (1.0 - b1) * grad[k];
                    m2[k] = b2 * m2[k] + (1.0 - b2) * grad[k] * grad[k];
                    p[k] -= lr * (m1[k] / c1) / (std::sqrt(m2[k] / c2) + eps);
                }
            }
        }
        double train_mse = epoch_loss / static_cast<double>(n);
        if (!std::isfinite(train_mse)) {
            throw Error(ErrorKind::Diverged, "training loss became non-finite at epoch " +
                                                 std::to_string(epoch));
        }
        double val_mse = has_val ? mean_squared_error(model, val_x, val_y)
                                 : std::numeric_limits<double>::quiet_NaN();
        history.epochs.push_back({epoch, train_mse, val_mse});
        model.final_loss = train_mse;

        if (config.halve_on_increase && train_mse > prev_train) {
            lr *= 0.5;
            std::fill(m1.begin(), m1.end(), 0.0);
        }
        prev_train = train_mse;

        if (train_mse <= config.loss_goal) {
            history.stop = StopReason::GoalReached;
            break;
        }
        if (has_val) {
            if (val_mse < best_val) {
                best_val = val_mse;
                best_params.assign(model.params().begin(), model.params().end());
                since_best = 0;
            } else if (++since_best >= config.patience) {
                history.stop = StopReason::EarlyStop;
                break;
            }
        }
    }
    if (history.stop == StopReason::EarlyStop && !best_params.empty()) {
        std::copy(best_params.begin(), best_params.end(), model.params().begin());
    }
    result.model = std::move(model);
    return result;
}

// --- persistence -----------------------------------------------------------

namespace {

std::string fmt17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

[[noreturn]] void malformed(const std::string& what) { throw Error(ErrorKind::MalformedFile, what); }

std::vector<double> parse_row(const std::string& line, std::size_t expected, const std::string& where) {
    auto cells = split(line, ',');
    if (cells.size() != expected) {
        malformed(where + ": expected " + std::to_string(expected) + " values, got " +
                  std::to_string(cells.size()));
    }
    std::vector<double> out(expected);
    for (std::size_t i = 0; i < expected; ++i) {
        try {
            out[i] = parse_double(cells[i], where);
        } catch (const Error& e) {
            malformed(e.what());
        }
    }
    return out;
}

} // namespace

void save_model(std::ostream& out, const MlpModel& model) {
    out << "vsr-mlp v1\n[arch]\ninput_dim=" << model.input_dim() << "\nlayers=";
    for (std::size_t l = 0; l < model.layers().size(); ++l) {
        const auto& L = model.layers()[l];
        out << (l ? "," : "") << L.out << ':' << activation_tag(L.activation);
    }
    out << "\n[norm]\n";
    for (const auto& c : model.norm.channels) out << fmt17(c.min) << ',' << fmt17(c.max) << '\n';
    out << "[regime]\n" << model.regime.tag() << '\n';
    out << "[meta]\nseed=" << model.seed << "\nfinal_loss=" << fmt17(model.final_loss) << '\n';
    for (std::size_t l = 0; l < model.layers().size(); ++l) {
        const auto& L = model.layers()[l];
        out << "[layer " << l << "]\n";
        auto w = model.weights(l);
        for (std::size_t o = 0; o < L.out; ++o) {
            for (std::size_t i = 0; i < L.in; ++i) out << (i ? "," : "") << fmt17(w[o * L.in + i]);
            out << '\n';
        }
        auto b = model.biases(l);
        for (std::size_t o = 0; o < L.out; ++o) out << (o ? "," : "") << fmt17(b[o]);
        out << '\n';
    }
}

void save_model_file(const std::string& path, const MlpModel& model) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorKind::Io, "cannot write " + path);
    save_model(out, model);
    if (!out) throw Error(ErrorKind::Io, "write failed: " + path);
}

MlpModel load_model(std::istream& in) {
    std::vector<std::string> lines;
    for (std::string line; std::getline(in, line);) {
        auto t = trim(line);
        if (!t.empty()) lines.push_back(t);
    }
    if (lines.empty()) malformed("empty model file");
    if (lines[0].rfind("vsr-mlp ", 0) != 0) malformed("missing vsr-mlp header");
    if (lines[0] != "vsr-mlp v1") throw Error(ErrorKind::VersionMismatch, lines[0]);

    std::size_t pos = 1;
    auto expect = [&](const std::string& s) {
        if (pos >= lines.size() || lines[pos] != s) malformed("expected '" + s + "'");
        ++pos;
    };
    auto value_of = [&](const std::string& key) {
        if (pos >= lines.size() || lines[pos].rfind(key + "=", 0) != 0) malformed("expected " + key + "=");
        return lines[pos++].substr(key.size() + 1);
    };

    expect("[arch]");
    std::size_t input_dim = 0;
    try {
        auto v = parse_int(value_of("input_dim"), "input_dim");
        if (v <= 0) malformed("input_dim must be positive");
        input_dim = static_cast<std::size_t>(v);
    } catch (const Error& e) {
        if (e.kind() != ErrorKind::Config) throw;
        malformed(e.what());
    }
    std::vector<LayerShape> shapes;
    std::size_t in_dim = input_dim;
    for (const auto& spec : split(value_of("layers"), ',')) {
        auto colon = spec.find(':');
        if (colon == std::string::npos) malformed("layer spec '" + spec + "'");
        std::int64_t width = 0;
        try {
            width = parse_int(spec.substr(0, colon), "layer width");
        } catch (const Error& e) {
            malformed(e.what());
        }
        auto tag = spec.substr(colon + 1);
        Activation act;
        if (tag == "tansig") {
            act = Activation::Tansig;
        } else if (tag == "linear") {
            act = Activation::Linear;
        } else {
            malformed("unknown activation '" + tag + "'");
        }
        if (width <= 0) malformed("layer width must be positive");
        shapes.push_back({in_dim, static_cast<std::size_t>(width), act, 0, 0});
        in_dim = static_cast<std::size_t>(width);
    }
    MlpModel model;
    try {
        model = MlpModel::from_shapes(shapes);
    } catch (const Error& e) {
        malformed(e.what());
    }

    expect("[norm]");
    while (pos < lines.size() && lines[pos][0] != '[') {
        auto row = parse_row(lines[pos], 2, "norm");
        model.norm.channels.push_back({row[0], row[1]});
        ++pos;
    }
    if (model.norm.dim() != input_dim) malformed("normalization spec does not match input_dim");

    expect("[regime]");
    if (pos >= lines.size()) malformed("missing regime");
    try {
        model.regime = feat::FeatureRegime::parse(lines[pos++]);
    } catch (const Error& e) {
        malformed(e.what());
    }
    if (model.regime.dim() != input_dim) malformed("regime dimension does not match input_dim");

    if (pos < lines.size() && lines[pos] == "[meta]") {
        ++pos;
        while (pos < lines.size() && lines[pos][0] != '[') {
            const auto& l = lines[pos++];
            try {
                if (l.rfind("seed=", 0) == 0) {
                    model.seed = static_cast<std::uint64_t>(parse_int(l.substr(5), "seed"));
                } else if (l.rfind("final_loss=", 0) == 0) {
                    model.final_loss = parse_double(l.substr(11), "final_loss");
                }
            } catch (const Error& e) {
                malformed(e.what());
            }
        }
    }

    for (std::size_t l = 0; l < model.layers().size(); ++l) {
        expect("[layer " + std::to_string(l) + "]");
        const auto& L = model.layers()[l];
        auto w = model.weights(l);
        for (std::size_t o = 0; o < L.out; ++o) {
            if (pos >= lines.size()) malformed("truncated layer " + std::to_string(l));
            auto row = parse_row(lines[pos++], L.in, "layer " + std::to_string(l) + " weights");
            std::copy(row.begin(), row.end(), w.begin() + static_cast<std::ptrdiff_t>(o * L.in));
        }
        if (pos >= lines.size()) malformed("truncated layer " + std::to_string(l));
        auto b = parse_row(lines[pos++], L.out, "layer " + std::to_string(l) + " biases");
        std::copy(b.begin(), b.end(), model.biases(l).begin());
    }
    if (pos != lines.size()) malformed("trailing content after last layer");
    return model;
}

MlpModel load_model_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::Io, "cannot open " + path);
    return load_model(in);
}

} // namespace vsrfdx::nn
