// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.
//
//   acceptance [--only N[,N...]]

#include "vsrfdx/campaign.hpp"
#include "vsrfdx/config.hpp"
#include "vsrfdx/diagnosis.hpp"
#include "vsrfdx/features.hpp"
#include "vsrfdx/mlp.hpp"
#include "vsrfdx/sim.hpp"
#include "vsrfdx/stream.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

using namespace vsrfdx;
using Clock = std::chrono::steady_clock;

namespace {

struct Verdict {
    bool pass = true;
    std::string detail;

    void require(bool ok, const std::string& what) {
        if (!detail.empty()) detail += "; ";
        detail += what;
        if (!ok) {
            pass = false;
            detail += " [x]";
        }
    }
};

std::string fmt(const char* f, double a) {
    char buf[64];
    std::snprintf(buf, sizeof buf, f, a);
    return buf;
}

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

sim::FaultScenario faults_at(std::initializer_list<SwitchId> ids, double onset) {
    sim::FaultScenario s;
    for (auto id : ids) s.faults.push_back({id, onset, std::nullopt});
    return s;
}

double mean_udc(const sim::Trace& t, double from) {
    double s = 0.0;
    std::size_t n = 0;
    for (const auto& r : t.records) {
        if (r.t >= from) {
            s += r.u_dc;
            ++n;
        }
    }
    return n ? s / static_cast<double>(n) : std::nan("");
}

double worst_current_sum(const sim::Trace& t) {
    double worst = 0.0;
    for (const auto& r : t.records) worst = std::max(worst, std::abs(r.i_abc[0] + r.i_abc[1] + r.i_abc[2]));
    return worst;
}

// Shared simulation results, computed on first use.
struct Fixture {
    sim::SimParams params;
    double onset = 0.2;
    double duration = 0.5;
    std::optional<sim::Trace> healthy;
    std::map<int, sim::Trace> single;  // by switch index

    const sim::Trace& healthy_trace() {
        if (!healthy) healthy = sim::simulate({}, duration, params, 1);
        return *healthy;
    }
    const sim::Trace& single_trace(SwitchId sw) {
        int k = static_cast<int>(sw);
        auto it = single.find(k);
        if (it == single.end()) {
            it = single.emplace(k, sim::simulate(faults_at({sw}, onset), duration, params, 1)).first;
        }
        return it->second;
    }

    std::optional<nn::MlpModel> synthetic_model;
};

Fixture fx;

// --- 1 ---------------------------------------------------------------------

Verdict normalization() {
    Verdict v;
    feat::ChannelRange r{-3.0, 5.0};
    bool exact = feat::normalize(1.0, r) == 0.0 && feat::normalize(-3.0, r) == -1.0 && feat::normalize(5.0, r) == 1.0;
    feat::ChannelRange sym{-12.5, 12.5};
    exact = exact && feat::normalize(0.0, sym) == 0.0 && feat::normalize(-12.5, sym) == -1.0 &&
            feat::normalize(12.5, sym) == 1.0;
    v.require(exact, "midpoint 0 and endpoints +-1 exact");
    feat::ChannelRange flat{2.0, 2.0};
    v.require(feat::normalize(2.0, flat) == -1.0 && feat::normalize(7.0, flat) == -1.0, "degenerate range maps to -1");
    return v;
}

// --- 2 ---------------------------------------------------------------------

Verdict decision_rule() {
    Verdict v;
    const std::pair<double, int> rows[] = {{-0.07, 0}, {1.02, 1}, {1.99, 2}, {2.96, 3},
                                           {4.01, 4},  {5.01, 5}, {5.99, 6}, {6.97, 7}};
    int ok = 0;
    for (auto [f, y] : rows) {
        auto r = diag::decide(f);
        if (!r.is_error() && feat::code(r.value()) == y) ++ok;
    }
    v.require(ok == 8, std::to_string(ok) + "/8 table rows");
    v.require(diag::decide(-0.5).is_error() && diag::decide(7.5).is_error(), "-0.5 and 7.5 give Error");
    v.require(!diag::decide(std::nextafter(-0.5, 0.0)).is_error() && !diag::decide(std::nextafter(7.5, 0.0)).is_error(),
              "open interval interior accepted");
    return v;
}

// --- 3 ---------------------------------------------------------------------

Verdict synthesis() {
    Verdict v;
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(-20.0, 20.0);
    int mismatches = 0;
    for (int n = 0; n < 1000; ++n) {
        double a = u(rng), b = u(rng), c = u(rng);
        auto s = feat::synthesize(a, b, c);
        double expect[7] = {a, b, c, a * b, a * c, b * c, a * b * c};
        for (int k = 0; k < 7; ++k) {
            if (s[k] != expect[k]) ++mismatches;
        }
    }
    v.require(mismatches == 0, std::to_string(mismatches) + " mismatches over 1000 triples");
    return v;
}

// --- 4 ---------------------------------------------------------------------

Verdict gradients() {
    Verdict v;
    std::mt19937_64 rng(11);
    double worst = 0.0;
    const int cases = 24;
    for (int n = 0; n < cases; ++n) {
        std::size_t in = 1 + rng() % 7;
        std::vector<std::size_t> hidden(1 + rng() % 4);
        for (auto& h : hidden) h = 1 + rng() % 8;
        nn::MlpModel m(in, hidden);
        m.init_glorot(rng());
        std::uniform_real_distribution<double> u(-1.0, 1.0);
        std::vector<double> x(in);
        for (auto& e : x) e = u(rng);
        worst = std::max(worst, nn::gradient_check(m, x, static_cast<double>(rng() % 8)));
    }
    v.require(worst <= 1e-4, std::to_string(cases) + " architectures, worst relative error " + fmt("%.2e", worst));
    return v;
}

// --- 5 ---------------------------------------------------------------------

Verdict physics() {
    Verdict v;
    const auto& p = fx.params;
    double worst = worst_current_sum(fx.healthy_trace());
    double healthy = mean_udc(fx.healthy_trace(), 0.2);
    double single_worst = 0.0;
    for (auto sw : kAllSwitches) {
        const auto& tr = fx.single_trace(sw);
        worst = std::max(worst, worst_current_sum(tr));
        single_worst = std::max(single_worst, std::abs(mean_udc(tr, fx.onset) - p.vdc_ref) / p.vdc_ref);
    }
    auto all = sim::simulate(faults_at({SwitchId::SaP, SwitchId::SaN, SwitchId::SbP, SwitchId::SbN, SwitchId::ScP,
                                        SwitchId::ScN},
                                       0.0),
                             0.6, p, 1);
    worst = std::max(worst, worst_current_sum(all));
    double oracle = 1.35 * p.grid_voltage;
    double all_mean = mean_udc(all, 0.4);

    v.require(worst <= 1e-9, "max |ia+ib+ic| " + fmt("%.1e", worst) + " A");
    v.require(std::abs(healthy - 100.0) <= 2.0, "healthy mean udc " + fmt("%.2f", healthy) + " V");
    v.require(std::abs(all_mean - oracle) <= 0.10 * oracle, "all-switch fault udc " + fmt("%.2f", all_mean) + " V");
    v.require(single_worst <= 0.10, "single faults worst udc deviation " + fmt("%.2f", 100 * single_worst) + "%");
    return v;
}

// --- 6 ---------------------------------------------------------------------

double rms_between(const sim::Trace& t, int phase, double from, double to) {
    double s = 0.0;
    std::size_t n = 0;
    for (const auto& r : t.records) {
        if (r.t >= from && r.t < to) {
            s += r.i_abc[phase] * r.i_abc[phase];
            ++n;
        }
    }
    return n ? std::sqrt(s / static_cast<double>(n)) : 0.0;
}

double peak_between(const sim::Trace& t, double from, double to) {
    double pk = 0.0;
    for (const auto& r : t.records) {
        if (r.t >= from && r.t < to) {
            for (double i : r.i_abc) pk = std::max(pk, std::abs(i));
        }
    }
    return pk;
}

Verdict signatures() {
    Verdict v;
    const double period = 1.0 / fx.params.grid_freq;
    const auto& healthy = fx.healthy_trace();
    double worst_faulted = 1e9, worst_other = 0.0, ratio = 0.0;
    for (int phase = 0; phase < 3; ++phase) {
        auto sw = upper_switch(phase);
        const auto& tr = fx.single_trace(sw);
        // First record at or after onset where the phase reference turns negative.
        double t1 = -1.0;
        for (std::size_t i = 1; i < tr.records.size(); ++i) {
            const auto& r = tr.records[i];
            if (r.t < fx.onset) continue;
            double s_now = std::sin(r.ref_angle - phase * 2.0 * sim::kPi / 3.0);
            double s_prev = std::sin(tr.records[i - 1].ref_angle - phase * 2.0 * sim::kPi / 3.0);
            if (s_now < 0.0 && (s_prev >= 0.0 || r.t == fx.onset)) {
                t1 = r.t;
                break;
            }
        }
        if (t1 < 0.0) {
            v.require(false, "no faulted half-cycle found for " + std::string(switch_name(sw)));
            continue;
        }
        double fh = rms_between(tr, phase, t1, t1 + period / 2);
        double hh = rms_between(healthy, phase, t1, t1 + period / 2);
        double fo = rms_between(tr, phase, t1 + period / 2, t1 + period);
        double ho = rms_between(healthy, phase, t1 + period / 2, t1 + period);
        worst_faulted = std::min(worst_faulted, std::abs(fh - hh) / hh);
        worst_other = std::max(worst_other, std::abs(fo - ho) / ho);
        ratio = std::max(ratio, peak_between(tr, fx.onset, fx.onset + 0.1) / peak_between(healthy, fx.onset, fx.onset + 0.1));
    }
    v.require(worst_faulted >= 0.30, "faulted half RMS deviation min " + fmt("%.1f", 100 * worst_faulted) + "%");
    v.require(worst_other <= 0.15, "other half RMS deviation max " + fmt("%.1f", 100 * worst_other) + "%");
    v.require(ratio >= 1.5, "overcurrent ratio " + fmt("%.2f", ratio) + "x healthy peak");
    return v;
}

// --- 7 ---------------------------------------------------------------------

Verdict classifier() {
    Verdict v;
    campaign::CampaignConfig cfg;
    cfg.train.optimizer = nn::Optimizer::Adam;
    cfg.train.learning_rate = 1e-3;
    cfg.train.batch_size = 64;
    cfg.train.max_epochs = 300;
    cfg.train.patience = 50;
    auto t0 = Clock::now();
    auto out = campaign::run_campaign(cfg);
    std::fprintf(stderr, "  campaign: %zu per class, %.0f s\n", out.per_class, seconds_since(t0));

    std::map<std::string, diag::Confusion> results;
    std::size_t total = 0, train_n = 0;
    for (const auto& split : out.splits) {
        total = split.train.size() + split.val.size() + split.test.size();
        train_n = split.train.size();
        t0 = Clock::now();
        auto fit = campaign::fit_model(split.train, split.val, cfg.hidden, cfg.train);
        auto c = diag::evaluate(fit.model, split.test);
        std::fprintf(stderr, "  %s: %zu epochs (%s), macro %.4f, %.0f s\n", split.train.regime.tag().c_str(),
                     fit.history.epochs.size(), nn::stop_reason_name(fit.history.stop).c_str(), c.macro_accuracy(),
                     seconds_since(t0));
        std::fprintf(stderr, "   recalls:");
        for (int k = 0; k < feat::kNumLabels; ++k) std::fprintf(stderr, " F%d=%.3f", k, c.recall(k));
        std::fprintf(stderr, "\n");
        if (split.train.regime == feat::FeatureRegime::synthetic()) fx.synthetic_model = fit.model;
        results.emplace(split.train.regime.tag(), c);
    }
    const auto& syn = results.at("synthetic");
    const auto& tra = results.at("transient");
    double min_recall = 1.0;
    for (int k = 0; k < feat::kNumLabels; ++k) min_recall = std::min(min_recall, syn.recall(k));
    double margin = 100.0 * (syn.macro_accuracy() - tra.macro_accuracy());

    v.require(total >= 200'000, std::to_string(total) + " samples");
    v.require(train_n <= total / 20, fmt("%.2f", 100.0 * static_cast<double>(train_n) / static_cast<double>(total)) + "% train");
    v.require(syn.macro_accuracy() >= 0.95, "synthetic macro " + fmt("%.4f", syn.macro_accuracy()));
    v.require(margin >= 0.5, "margin over transient " + fmt("%+.2f", margin) + " pp");
    v.require(min_recall >= 0.90, "min recall " + fmt("%.3f", min_recall));
    return v;
}

// --- 8 ---------------------------------------------------------------------

// Frames of a trace run through a fresh session; collects every step.
std::vector<stream::SessionStep> run_session(const nn::MlpModel& model, const sim::Trace& trace) {
    auto frames = stream::frames_from_trace(trace);
    stream::DiagnosisSession session(model);
    std::vector<stream::SessionStep> steps;
    for (const auto& f : frames) steps.push_back(session.process(f));
    return steps;
}

// Time of the first record whose region-wise label is not F0.
double feature_onset(const sim::Trace& trace, const sim::FaultScenario& scenario) {
    auto labels = feat::label_samples(trace, scenario);
    for (std::size_t i = 0; i < labels.size(); ++i) {
        if (labels[i] != feat::FaultLabel::F0) return trace.records[i].t;
    }
    return std::nan("");
}

Verdict localization() {
    Verdict v;
    if (!fx.synthetic_model) {
        v.require(false, "no trained model (criterion 7 not run)");
        return v;
    }
    const auto& model = *fx.synthetic_model;
    const double t0 = fx.healthy_trace().records.front().t;

    int late = 0;
    int false_hits = 0;
    std::size_t worst_delay = 0;
    std::string misses;
    for (auto sw : kAllSwitches) {
        const auto& tr = fx.single_trace(sw);
        auto steps = run_session(model, tr);
        auto onset_window = static_cast<std::size_t>((feature_onset(tr, faults_at({sw}, fx.onset)) - t0) / stream::kFramePeriod);
        std::optional<std::size_t> confirmed_at;
        SwitchSet others;
        for (const auto& s : steps) {
            if (!confirmed_at && s.confirmed.contains(sw)) confirmed_at = s.report.window_index;
            auto extra = s.confirmed;
            extra.erase(sw);
            others |= extra;
        }
        if (!others.empty()) {
            ++false_hits;
            misses += " " + std::string(switch_name(sw)) + ":false{" + others.to_string() + "}";
        }
        if (!confirmed_at || *confirmed_at < onset_window || *confirmed_at - onset_window > 2) {
            ++late;
            misses += " " + std::string(switch_name(sw)) + ":" +
                      (confirmed_at ? "window+" + std::to_string(*confirmed_at - onset_window) : "never");
        } else {
            worst_delay = std::max(worst_delay, *confirmed_at - onset_window);
        }
    }
    v.require(late == 0, std::to_string(6 - late) + "/6 single faults confirmed within 2 windows");
    v.require(false_hits == 0, std::to_string(false_hits) + " runs with false switches" + misses);

    auto dual = sim::simulate(faults_at({SwitchId::SaP, SwitchId::SbP}, fx.onset), 0.6, fx.params, 1);
    auto steps = run_session(model, dual);
    bool mixed = false;
    for (const auto& s : steps) {
        const auto& c = s.report.counts;
        mixed = mixed || (c[1] > 0 && c[3] > 0 && c[7] > 0);
    }
    auto final_set = steps.empty() ? SwitchSet{} : steps.back().confirmed;
    v.require(final_set == SwitchSet{SwitchId::SaP, SwitchId::SbP}, "SaP+SbP final {" + final_set.to_string() + "}");
    v.require(mixed, "a window holds F1, F3 and F7");

    auto healthy = sim::simulate({}, 10.0, fx.params, 1);
    SwitchSet ever;
    for (const auto& s : run_session(model, healthy)) ever |= s.confirmed;
    v.require(ever.empty(), "healthy 10 s confirms {" + ever.to_string() + "}");
    return v;
}

// --- 9 ---------------------------------------------------------------------

Verdict streaming() {
    Verdict v;
    const auto& tr = fx.single_trace(SwitchId::SaP);
    auto frames = stream::frames_from_trace(tr);
    bool exact = true;
    for (const auto& f : frames) {
        auto back = stream::decode_frame(stream::encode_frame(f));
        exact = exact && back.sequence == f.sequence &&
                std::memcmp(back.samples.data(), f.samples.data(), f.samples.size() * sizeof f.samples[0]) == 0;
    }
    v.require(exact, "codec round-trip bit-exact over " + std::to_string(frames.size()) + " frames");

    if (!fx.synthetic_model) {
        v.require(false, "no trained model (criterion 7 not run)");
        return v;
    }
    const auto& model = *fx.synthetic_model;

    std::stringstream file;
    stream::write_frames(file, frames);
    std::ostringstream file_log;
    stream::diagnose_stream(model, [&] { return stream::read_frame(file); }, file_log);

    stream::Listener listener("127.0.0.1", 0);
    std::thread server([&] {
        auto sock = listener.accept();
        stream::serve_frames(sock, frames, stream::Pacing::MaxSpeed);
    });
    auto client = stream::connect_to("127.0.0.1", listener.port(), std::chrono::seconds(2));
    std::ostringstream socket_log;
    stream::diagnose_stream(model, [&] { return stream::receive_frame(client); }, socket_log);
    server.join();
    v.require(!file_log.str().empty() && file_log.str() == socket_log.str(), "socket log identical to file log");

    // Throughput over a longer replay, transport excluded.
    std::vector<stream::Frame> many;
    for (int rep = 0; rep < 4; ++rep) {
        for (auto f : frames) {
            f.sequence = many.size();
            many.push_back(std::move(f));
        }
    }
    std::size_t next = 0;
    std::ostringstream sink;
    auto t0 = Clock::now();
    auto summary = stream::diagnose_stream(model, [&]() -> std::optional<stream::Frame> {
        if (next >= many.size()) return std::nullopt;
        return many[next++];
    }, sink);
    double rate = static_cast<double>(summary.samples) / seconds_since(t0);
    v.require(rate >= 10'000.0, fmt("%.0f", rate) + " samples/s");

    // Real-time pacing, first 30 frames.
    std::vector<stream::Frame> paced(frames.begin(), frames.begin() + std::min<std::size_t>(30, frames.size()));
    stream::Listener listener2("127.0.0.1", 0);
    stream::ServeStats stats;
    std::thread pacer([&] {
        auto sock = listener2.accept();
        stats = stream::serve_frames(sock, paced, stream::Pacing::RealTime);
    });
    auto client2 = stream::connect_to("127.0.0.1", listener2.port(), std::chrono::seconds(2));
    while (stream::receive_frame(client2)) {
    }
    pacer.join();
    double worst = 0.0, mean = 0.0;
    for (std::size_t i = 1; i < stats.sent_at.size(); ++i) {
        double dt = std::chrono::duration<double, std::milli>(stats.sent_at[i] - stats.sent_at[i - 1]).count();
        worst = std::max(worst, std::abs(dt - 20.0));
        mean += dt;
    }
    mean /= static_cast<double>(std::max<std::size_t>(1, stats.sent_at.size() - 1));
    v.require(stats.sent_at.size() >= 2 && worst <= 2.0,
              "pacing mean " + fmt("%.2f", mean) + " ms, worst deviation " + fmt("%.2f", worst) + " ms");
    return v;
}

// --- 10 --------------------------------------------------------------------

Verdict half_split() {
    Verdict v;
    if (!fx.synthetic_model) {
        v.require(false, "no trained model (criterion 7 not run)");
        return v;
    }
    const double t0 = fx.healthy_trace().records.front().t;
    double lo = 1.0, hi = 0.0;
    std::string per;
    for (auto sw : kAllSwitches) {
        const auto& tr = fx.single_trace(sw);
        auto label = *feat::label_for(SwitchSet{sw});
        auto steps = run_session(*fx.synthetic_model, tr);
        // Windows entirely after the feature onset plus one settling window.
        double start = feature_onset(tr, faults_at({sw}, fx.onset)) + stream::kFramePeriod;
        double hits = 0.0, total = 0.0;
        for (const auto& s : steps) {
            if (t0 + s.report.t_start < start) continue;
            hits += static_cast<double>(s.report.counts[feat::code(label)]);
            total += static_cast<double>(s.report.total());
        }
        double share = total > 0 ? hits / total : 0.0;
        lo = std::min(lo, share);
        hi = std::max(hi, share);
        per += " " + std::string(switch_name(sw)) + "=" + fmt("%.3f", share);
    }
    v.require(lo >= 0.45 && hi <= 0.55, "fault label share" + per);
    return v;
}

} // namespace

int main(int argc, char** argv) {
    std::set<int> only;
    for (int i = 1; i < argc; ++i) {
        if (std::strcmp(argv[i], "--only") == 0 && i + 1 < argc) {
            for (const auto& s : split(argv[++i], ',')) only.insert(static_cast<int>(parse_int(s, "criterion")));
        }
    }
    const std::vector<std::pair<const char*, std::function<Verdict()>>> criteria = {
        {"normalization", normalization},
        {"decision rule", decision_rule},
        {"synthetic features", synthesis},
        {"gradient check", gradients},
        {"simulator physics", physics},
        {"fault signatures", signatures},
        {"classifier accuracy", classifier},
        {"end-to-end localization", localization},
        {"streaming", streaming},
        {"half-split", half_split},
    };
    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        int n = static_cast<int>(i) + 1;
        if (!only.empty() && !only.count(n)) continue;
        auto t0 = Clock::now();
        Verdict v;
        try {
            v = criteria[i].second();
        } catch (const std::exception& e) {
            v.pass = false;
            v.detail = std::string("exception: ") + e.what();
        }
        if (!v.pass) ++failures;
        std::printf("%s %2d %s: %s (%.1f s)\n", v.pass ? "PASS" : "FAIL", n, criteria[i].first, v.detail.c_str(),
                    seconds_since(t0));
        std::fflush(stdout);
    }
    return failures ? 1 : 0;
}
