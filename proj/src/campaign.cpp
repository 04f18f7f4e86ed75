#include "vsrfdx/campaign.hpp"

#include "vsrfdx/config.hpp"
#include "vsrfdx/error.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <limits>
#include <mutex>
#include <random>
#include <sstream>
#include <thread>

namespace vsrfdx::campaign {

namespace {

std::uint64_t splitmix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

template <typename T>
void shuffle_portable(std::vector<T>& v, std::mt19937_64& rng) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng() % i]);
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::Io, "cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::size_t to_count(std::string_view v, std::string_view key) {
    auto n = parse_int(v, key);
    if (n < 0) throw Error(ErrorKind::Config, std::string(key) + " must be >= 0");
    return static_cast<std::size_t>(n);
}

// Samples kept from one run: label plus the record window needed by every
// configured regime.
struct RunSamples {
    int label_class = 0;
    std::vector<sim::Abc> currents;  // records from `first` on
    std::vector<double> times;
    std::vector<feat::FaultLabel> labels;
    std::size_t first_sample = 0;    // index into currents of the first kept sample
};

struct SampleRef {
    std::uint32_t run;
    std::uint32_t index;
};

} // namespace

void CampaignConfig::validate() const {
    params.validate();
    train.validate();
    if (classes.empty()) throw Error(ErrorKind::Config, "no classes requested");
    for (int c : classes) {
        if (!feat::label_from_code(c)) throw Error(ErrorKind::Config, "class outside 0..7");
    }
    if (runs_per_class < 1) throw Error(ErrorKind::Config, "runs_per_class must be >= 1");
    if (!(duration > sample_start)) throw Error(ErrorKind::Config, "duration must exceed sample_start");
    if (!(fault_onset >= 0.0) || !(onset_jitter >= 0.0)) {
        throw Error(ErrorKind::Config, "fault_onset and onset_jitter must be >= 0");
    }
    if (!(train_fraction > 0.0 && train_fraction < 1.0) || !(val_fraction > 0.0 && val_fraction < 1.0) ||
        train_fraction + val_fraction > 1.0) {
        throw Error(ErrorKind::Config, "split fractions must be in (0,1) and sum to <= 1");
    }
    if (regimes.empty()) throw Error(ErrorKind::Config, "no feature regimes requested");
}

CampaignConfig parse_campaign_config(std::string_view text) {
    CampaignConfig c;
    c.hash = fnv1a(text);
    for (const auto& kv : parse_key_values(text)) {
        const auto& k = kv.key;
        const auto& v = kv.value;
        if (k == "classes") {
            c.classes.clear();
            for (const auto& s : split(v, ',')) c.classes.push_back(static_cast<int>(parse_int(s, k)));
        } else if (k == "runs_per_class") {
            c.runs_per_class = to_count(v, k);
        } else if (k == "duration") {
            c.duration = parse_double(v, k);
        } else if (k == "fault_onset") {
            c.fault_onset = parse_double(v, k);
        } else if (k == "onset_jitter") {
            c.onset_jitter = parse_double(v, k);
        } else if (k == "sample_start") {
            c.sample_start = parse_double(v, k);
        } else if (k == "samples_per_class") {
            c.samples_per_class = to_count(v, k);
        } else if (k == "train_fraction") {
            c.train_fraction = parse_double(v, k);
        } else if (k == "val_fraction") {
            c.val_fraction = parse_double(v, k);
        } else if (k == "regimes") {
            c.regimes.clear();
            for (const auto& s : split(v, ',')) c.regimes.push_back(feat::FeatureRegime::parse(s));
        } else if (k == "hidden") {
            c.hidden.clear();
            for (const auto& s : split(v, ',')) c.hidden.push_back(to_count(s, k));
        } else if (k == "threads") {
            c.threads = static_cast<unsigned>(to_count(v, k));
        } else if (k == "seed") {
            c.seed = static_cast<std::uint64_t>(parse_int(v, k));
        } else if (k == "learning_rate") {
            c.train.learning_rate = parse_double(v, k);
        } else if (k == "loss_goal") {
            c.train.loss_goal = parse_double(v, k);
        } else if (k == "max_epochs") {
            c.train.max_epochs = to_count(v, k);
        } else if (k == "batch_size") {
            c.train.batch_size = to_count(v, k);
        } else if (k == "optimizer") {
            if (v == "momentum") {
                c.train.optimizer = nn::Optimizer::Momentum;
            } else if (v == "adam") {
                c.train.optimizer = nn::Optimizer::Adam;
            } else {
                throw Error(ErrorKind::Config, "optimizer must be momentum or adam");
            }
        } else if (k == "momentum") {
            c.train.momentum = parse_double(v, k);
        } else if (k == "patience") {
            c.train.patience = to_count(v, k);
        } else if (k == "halve_on_increase") {
            c.train.halve_on_increase = parse_bool(v, k);
        } else if (k == "train_threads") {
            c.train.threads = static_cast<unsigned>(to_count(v, k));
        } else if (k == "train_seed") {
            c.train.seed = static_cast<std::uint64_t>(parse_int(v, k));
        } else if (!apply_param(c.params, k, v)) {
            throw Error(ErrorKind::Config, "line " + std::to_string(kv.line) + ": unknown key '" + k + "'");
        }
    }
    c.validate();
    return c;
}

CampaignConfig read_campaign_config(const std::string& path) { return parse_campaign_config(slurp(path)); }

sim::FaultScenario class_scenario(feat::FaultLabel label, double onset) {
    sim::FaultScenario s;
    for (auto sw : kAllSwitches) {
        if (feat::label_switches(label).contains(sw)) s.faults.push_back({sw, onset, std::nullopt});
    }
    return s;
}

std::uint64_t run_seed(std::uint64_t campaign_seed, int label, std::size_t run) {
    return splitmix(splitmix(campaign_seed) ^ (static_cast<std::uint64_t>(label) << 32) ^ run);
}

std::vector<double> targets(const feat::Dataset& data) {
    std::vector<double> y(data.size());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = feat::code(data.labels[i]);
    return y;
}

Split stratified_split(const feat::Dataset& data, double train_fraction, double val_fraction,
                       std::uint64_t seed) {
    std::array<std::vector<std::size_t>, feat::kNumLabels> by_label;
    for (std::size_t i = 0; i < data.size(); ++i) by_label[feat::code(data.labels[i])].push_back(i);

    Split out;
    for (auto* d : {&out.train, &out.val, &out.test}) {
        d->regime = data.regime;
        d->x.dim = data.x.dim;
        d->seed = data.seed;
        d->config = data.config;
    }
    std::mt19937_64 rng(seed);
    for (auto& idx : by_label) {
        shuffle_portable(idx, rng);
        const auto n = idx.size();
        // Floor (with slack for binary fractions) so a split never exceeds its share.
        auto n_train = static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(n) + 1e-9));
        auto n_val = static_cast<std::size_t>(std::floor(val_fraction * static_cast<double>(n) + 1e-9));
        n_train = std::min(n_train, n);
        n_val = std::min(n_val, n - n_train);
        for (std::size_t j = 0; j < n; ++j) {
            auto& dst = j < n_train ? out.train : (j < n_train + n_val ? out.val : out.test);
            dst.x.push_back(data.x.row(idx[j]), data.x.times[idx[j]]);
            dst.labels.push_back(data.labels[idx[j]]);
        }
    }
    return out;
}

CampaignOutput run_campaign(const CampaignConfig& config, const Progress& progress) {
    config.validate();
    std::size_t history = 1;
    for (const auto& r : config.regimes) history = std::max(history, r.window_len());

    struct Job {
        int label;
        std::size_t run;
    };
    std::vector<Job> jobs;
    for (int c : config.classes) {
        for (std::size_t r = 0; r < config.runs_per_class; ++r) jobs.push_back({c, r});
    }

    sim::SimOptions options;
    options.randomize = true;
    options.onset_jitter = config.onset_jitter;

    std::vector<RunSamples> runs(jobs.size());
    std::atomic<std::size_t> next{0};
    std::mutex report_mu;
    std::exception_ptr failure;
    auto worker = [&] {
        while (true) {
            std::size_t j = next.fetch_add(1);
            if (j >= jobs.size()) return;
            try {
                const auto label = static_cast<feat::FaultLabel>(jobs[j].label);
                auto scenario = class_scenario(label, config.fault_onset);
                auto seed = run_seed(config.seed, jobs[j].label, jobs[j].run);
                auto trace = sim::simulate(scenario, config.duration, config.params, seed, options);
                auto eff = sim::effective_scenario(scenario, config.params, seed, options);
                auto labels = feat::label_samples(trace, eff);

                std::size_t first = 0;
                while (first < trace.records.size() && trace.records[first].t < config.sample_start) ++first;
                std::size_t keep_from = first >= history - 1 ? first - (history - 1) : 0;
                RunSamples rs;
                rs.label_class = jobs[j].label;
                rs.first_sample = std::max(first, history - 1) - keep_from;
                for (std::size_t i = keep_from; i < trace.records.size(); ++i) {
                    rs.currents.push_back(trace.records[i].i_abc);
                    rs.times.push_back(trace.records[i].t);
                    rs.labels.push_back(labels[i]);
                }
                runs[j] = std::move(rs);
                if (progress) {
                    std::lock_guard lock(report_mu);
                    progress("simulated class F" + std::to_string(jobs[j].label) + " run " +
                             std::to_string(jobs[j].run));
                }
            } catch (...) {
                std::lock_guard lock(report_mu);
                if (!failure) failure = std::current_exception();
                next = jobs.size();
                return;
            }
        }
    };
    unsigned n_threads = config.threads ? config.threads : std::max(1u, std::thread::hardware_concurrency());
    n_threads = static_cast<unsigned>(std::min<std::size_t>(n_threads, jobs.size()));
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    if (failure) std::rethrow_exception(failure);

    // Candidate samples grouped by label, in run order.
    CampaignOutput out;
    std::array<std::vector<SampleRef>, feat::kNumLabels> pool_by_label;
    for (std::size_t r = 0; r < runs.size(); ++r) {
        const auto& rs = runs[r];
        for (std::size_t i = rs.first_sample; i < rs.labels.size(); ++i) {
            pool_by_label[feat::code(rs.labels[i])].push_back(
                {static_cast<std::uint32_t>(r), static_cast<std::uint32_t>(i)});
        }
    }
    std::size_t per_class = std::numeric_limits<std::size_t>::max();
    for (int c : config.classes) {
        out.available[c] = pool_by_label[c].size();
        if (pool_by_label[c].empty()) {
            throw Error(ErrorKind::EmptyDataset, "class F" + std::to_string(c) + " produced no samples");
        }
        per_class = std::min(per_class, pool_by_label[c].size());
    }
    if (config.samples_per_class > 0) per_class = std::min(per_class, config.samples_per_class);
    out.per_class = per_class;

    std::mt19937_64 rng(splitmix(config.seed ^ 0x5eedull));
    std::vector<SampleRef> chosen;
    for (int c : config.classes) {
        auto& p = pool_by_label[c];
        shuffle_portable(p, rng);
        chosen.insert(chosen.end(), p.begin(), p.begin() + static_cast<std::ptrdiff_t>(per_class));
    }

    const std::uint64_t split_seed = splitmix(config.seed ^ 0x5b17ull);
    for (const auto& regime : config.regimes) {
        feat::Dataset data;
        data.regime = regime;
        data.x.dim = regime.dim();
        data.seed = config.seed;
        data.config = hex64(config.hash);
        data.x.values.reserve(chosen.size() * regime.dim());
        std::vector<double> row(regime.dim());
        for (const auto& ref : chosen) {
            const auto& rs = runs[ref.run];
            if (regime.kind() == feat::FeatureRegime::Kind::TimeSeries) {
                const std::size_t w = regime.window_len();
                for (std::size_t j = 0; j < w; ++j) {
                    const auto& cur = rs.currents[ref.index + 1 - w + j];
                    for (int k = 0; k < 3; ++k) row[k * w + j] = cur[k];
                }
            } else {
                feat::raw_features(regime, rs.currents[ref.index], row);
            }
            data.x.push_back(row, rs.times[ref.index]);
            data.labels.push_back(rs.labels[ref.index]);
        }
        out.splits.push_back(stratified_split(data, config.train_fraction, config.val_fraction, split_seed));
        if (progress) progress("built " + regime.tag() + " dataset");
    }
    return out;
}

feat::FeatureMatrix normalized(const feat::Dataset& data, const feat::NormalizationSpec& norm) {
    feat::FeatureMatrix m;
    m.dim = data.x.dim;
    m.values.reserve(data.x.values.size());
    m.times.reserve(data.size());
    std::vector<double> row(data.x.dim);
    for (std::size_t i = 0; i < data.size(); ++i) {
        norm.apply(data.x.row(i), row);
        m.push_back(row, data.x.times[i]);
    }
    return m;
}

nn::TrainResult fit_model(const feat::Dataset& train, const feat::Dataset& val,
                          const std::vector<std::size_t>& hidden, const nn::TrainConfig& config) {
    if (train.size() == 0) throw Error(ErrorKind::EmptyDataset, "training set is empty");
    if (val.size() != 0 && !(val.regime == train.regime)) {
        throw Error(ErrorKind::RegimeMismatch, "validation regime " + val.regime.tag() +
                                                   " differs from training regime " + train.regime.tag());
    }
    nn::MlpModel model(train.x.dim, hidden);
    model.init_glorot(config.seed);
    model.norm = feat::fit_normalization(train.x);
    model.regime = train.regime;
    auto tx = normalized(train, model.norm);
    auto vx = normalized(val, model.norm);
    auto ty = targets(train);
    auto vy = targets(val);
    return nn::train(std::move(model), tx, ty, vx, vy, config);
}

} // namespace vsrfdx::campaign
