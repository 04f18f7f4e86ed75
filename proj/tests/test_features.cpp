#include "doctest.h"

#include "vsrfdx/error.hpp"
#include "vsrfdx/features.hpp"

#include <cmath>
#include <random>
#include <sstream>

using namespace vsrfdx;
using namespace vsrfdx::feat;

namespace {

sim::Trace synthetic_trace(std::size_t n) {
    sim::Trace t;
    t.sample_rate = 1000.0;
    for (std::size_t i = 0; i < n; ++i) {
        double v = static_cast<double>(i);
        t.records.push_back({v / 1000.0, {v, 10 + v, 20 + v}, 100.0, 0.0, {}});
    }
    return t;
}

// Records whose reference angle sweeps exactly one period per `per_period` records.
sim::Trace angle_sweep(std::size_t periods, std::size_t per_period) {
    sim::Trace t;
    t.sample_rate = 50.0 * per_period;
    for (std::size_t i = 0; i < periods * per_period; ++i) {
        double phase = (static_cast<double>(i % per_period) + 0.5) / per_period;
        t.records.push_back({i / t.sample_rate, {}, 100.0, 2 * sim::kPi * phase, {}});
    }
    return t;
}

sim::FaultScenario single(SwitchId s, double onset = 0.0) {
    sim::FaultScenario sc;
    sc.faults.push_back({s, onset, std::nullopt});
    return sc;
}

} // namespace

TEST_CASE("normalize endpoints and degenerate range") {
    CHECK(normalize(5, {0, 10}) == 0.0);
    CHECK(normalize(3, {3, 9}) == -1.0);
    CHECK(normalize(9, {3, 9}) == 1.0);
    CHECK(normalize(123.0, {4, 4}) == -1.0);
    CHECK(normalize(-7.0, {4, 4}) == -1.0);
    // no clamping
    CHECK(normalize(20, {0, 10}) == 3.0);
}

TEST_CASE("normalize is strictly increasing") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-50, 50);
    for (int i = 0; i < 500; ++i) {
        double lo = u(rng), hi = lo + 1e-3 + std::abs(u(rng));
        double a = u(rng), b = a + 1e-6 + std::abs(u(rng));
        CHECK(normalize(a, {lo, hi}) < normalize(b, {lo, hi}));
    }
}

TEST_CASE("fit normalization") {
    FeatureMatrix m;
    m.dim = 3;
    m.push_back(std::vector<double>{2, -1, 0}, 0.0);
    auto one = fit_normalization(m);
    CHECK(one.channels[0].min == 2);
    CHECK(one.channels[0].max == 2);
    CHECK(one.channels[1].min == -1);

    FeatureMatrix c;
    c.dim = 1;
    for (double v : {-3.0, 0.0, 7.0}) c.push_back(std::vector<double>{v}, 0.0);
    auto spec = fit_normalization(c);
    CHECK(spec.channels[0].min == -3);
    CHECK(spec.channels[0].max == 7);

    FeatureMatrix r;
    r.dim = 4;
    std::mt19937_64 rng(1);
    std::normal_distribution<double> g(0, 3);
    for (int i = 0; i < 50; ++i) r.push_back(std::vector<double>{g(rng), g(rng), g(rng), g(rng)}, 0.0);
    auto rs = fit_normalization(r);
    std::vector<double> out(4);
    std::vector<bool> lo(4), hi(4);
    for (std::size_t i = 0; i < r.rows(); ++i) {
        rs.apply(r.row(i), out);
        for (int k = 0; k < 4; ++k) {
            lo[k] = lo[k] || out[k] == -1.0;
            hi[k] = hi[k] || out[k] == 1.0;
        }
    }
    for (int k = 0; k < 4; ++k) CHECK((lo[k] && hi[k]));

    FeatureMatrix empty;
    empty.dim = 3;
    CHECK_THROWS_AS(fit_normalization(empty), Error);
}

TEST_CASE("synthesize examples") {
    CHECK(synthesize(1, 2, 3) == std::array<double, 7>{1, 2, 3, 2, 3, 6, 6});
    CHECK(synthesize(0, 5, -2) == std::array<double, 7>{0, 5, -2, 0, 0, -10, 0});
    CHECK(synthesize(-1, -1, -1) == std::array<double, 7>{-1, -1, -1, 1, 1, 1, -1});
}

TEST_CASE("synthesis symmetry") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(-20, 20);
    for (int i = 0; i < 200; ++i) {
        double a = u(rng), b = u(rng), c = u(rng);
        auto s = synthesize(a, b, c);
        auto ba = synthesize(b, a, c);
        CHECK(s[3] == ba[3]);
        CHECK(s[4] == synthesize(c, b, a)[4]);
        CHECK(s[5] == synthesize(a, c, b)[5]);
        // triple product: equal up to rounding of the multiplication order
        CHECK(s[6] == doctest::Approx(synthesize(c, a, b)[6]).epsilon(1e-15));
        CHECK(s[6] == doctest::Approx(synthesize(b, c, a)[6]).epsilon(1e-15));
    }
}

TEST_CASE("extract dimensions") {
    auto t = synthetic_trace(5);
    auto tr = extract(t, FeatureRegime::transient());
    CHECK(tr.rows() == 5);
    CHECK(tr.dim == 3);
    auto ts = extract(t, FeatureRegime::time_series(3));
    CHECK(ts.rows() == 3);
    CHECK(ts.dim == 9);
    // channel-major window, stride 1
    auto w = ts.row(1);
    CHECK(std::vector<double>(w.begin(), w.end()) == std::vector<double>{1, 2, 3, 11, 12, 13, 21, 22, 23});
    CHECK(ts.times[0] == t.records[2].t);

    sim::Trace one = synthetic_trace(0);
    one.records.push_back({0, {1, 2, 3}, 100, 0, {}});
    auto sy = extract(one, FeatureRegime::synthetic());
    CHECK(std::vector<double>(sy.row(0).begin(), sy.row(0).end()) == std::vector<double>{1, 2, 3, 2, 3, 6, 6});

    CHECK_THROWS_AS(extract(t, FeatureRegime::time_series(6)), Error);

    for (auto regime : {FeatureRegime::transient(), FeatureRegime::synthetic(), FeatureRegime::time_series(4)}) {
        auto m = extract(synthetic_trace(9), regime);
        CHECK(m.dim == regime.dim());
        CHECK(m.values.size() == m.rows() * regime.dim());
    }
}

TEST_CASE("regime tags") {
    CHECK(FeatureRegime::parse("timeseries:200") == FeatureRegime::time_series(200));
    CHECK(FeatureRegime::time_series().dim() == 600);
    CHECK(FeatureRegime::parse("synthetic").dim() == 7);
    CHECK(FeatureRegime::parse(FeatureRegime::transient().tag()) == FeatureRegime::transient());
    CHECK_THROWS_AS(FeatureRegime::parse("fft"), Error);
    CHECK_THROWS_AS(FeatureRegime::parse("timeseries:0"), Error);
}

TEST_CASE("label codes follow the code table") {
    CHECK(label_switches(FaultLabel::F0).empty());
    CHECK(label_switches(FaultLabel::F1) == SwitchSet{SwitchId::SaP});
    CHECK(label_switches(FaultLabel::F4) == SwitchSet{SwitchId::SbN});
    CHECK(label_switches(FaultLabel::F6) == SwitchSet{SwitchId::ScN});
    CHECK(label_switches(FaultLabel::F7) == SwitchSet{SwitchId::SaP, SwitchId::SbP});
    for (int c = 0; c < kNumLabels; ++c) CHECK(code(*label_for(label_switches(*label_from_code(c)))) == c);
    CHECK_FALSE(label_for(SwitchSet{SwitchId::SaP, SwitchId::SaN}));
    CHECK_FALSE(label_from_code(8));
}

TEST_CASE("region-wise labels") {
    const double deg = sim::kPi / 180;
    sim::Trace t;
    t.sample_rate = 1.0;
    t.records.push_back({0.0, {}, 100, 270 * deg, {}});
    t.records.push_back({1.0, {}, 100, 90 * deg, {}});
    t.records.push_back({2.0, {}, 100, 330 * deg, {}});
    CHECK(label_samples(t, {}) == std::vector<FaultLabel>(3, FaultLabel::F0));

    auto sap = label_samples(t, single(SwitchId::SaP));
    CHECK(sap[0] == FaultLabel::F1);
    CHECK(sap[1] == FaultLabel::F0);

    sim::FaultScenario both = single(SwitchId::SaP);
    both.faults.push_back({SwitchId::SbP, 0.0, std::nullopt});
    // 330 deg: a and b references both negative
    CHECK(label_samples(t, both)[2] == FaultLabel::F7);

    // before onset
    CHECK(label_samples(t, single(SwitchId::SaP, 0.5))[0] == FaultLabel::F0);

    sim::FaultScenario bad = single(SwitchId::SaP);
    bad.faults.push_back({SwitchId::ScN, 0.0, std::nullopt});
    CHECK_THROWS_AS(label_samples(t, bad), Error);
}

TEST_CASE("double fault visits F3, F0, F1, F7 in order") {
    auto t = angle_sweep(1, 3600);
    sim::FaultScenario both = single(SwitchId::SaP);
    both.faults.push_back({SwitchId::SbP, 0.0, std::nullopt});
    auto labels = label_samples(t, both);
    std::vector<FaultLabel> runs;
    for (auto l : labels) {
        if (runs.empty() || runs.back() != l) runs.push_back(l);
    }
    CHECK(runs == std::vector<FaultLabel>{FaultLabel::F3, FaultLabel::F0, FaultLabel::F1, FaultLabel::F7});
}

TEST_CASE("single fault labels split the period in half") {
    auto t = angle_sweep(4, 512);
    for (auto sw : kAllSwitches) {
        auto labels = label_samples(t, single(sw));
        double faulty = 0;
        for (auto l : labels) faulty += l != FaultLabel::F0;
        CHECK(faulty / labels.size() == doctest::Approx(0.5).epsilon(0.02));
    }
}

TEST_CASE("labels for time-series windows use the last record") {
    std::vector<FaultLabel> rec{FaultLabel::F0, FaultLabel::F1, FaultLabel::F2, FaultLabel::F3};
    auto w = labels_for_regime(rec, FeatureRegime::time_series(2));
    CHECK(w == std::vector<FaultLabel>{FaultLabel::F1, FaultLabel::F2, FaultLabel::F3});
    CHECK(labels_for_regime(rec, FeatureRegime::synthetic()) == rec);
}

TEST_CASE("dataset round-trip") {
    Dataset d;
    d.regime = FeatureRegime::synthetic();
    d.x.dim = 7;
    std::mt19937_64 rng(3);
    std::normal_distribution<double> g(0, 10);
    for (int i = 0; i < 1000; ++i) {
        auto s = synthesize(g(rng), g(rng), g(rng));
        d.x.push_back(s, i * 3.90625e-5);
        d.labels.push_back(static_cast<FaultLabel>(i % 8));
    }
    d.seed = 17;
    d.config = "00ff";
    std::stringstream ss;
    write_dataset(ss, d);
    auto back = read_dataset(ss);
    CHECK(back.regime == d.regime);
    CHECK(back.x.values == d.x.values);
    CHECK(back.x.times == d.x.times);
    CHECK(back.labels == d.labels);
    CHECK(back.seed == 17);
    CHECK(back.config == "00ff");
}

TEST_CASE("dataset reader errors") {
    auto kind_of = [](const std::string& text) {
        std::stringstream ss(text);
        try {
            read_dataset(ss);
        } catch (const Error& e) {
            return e.kind();
        }
        return ErrorKind::Config;  // sentinel: no error
    };
    CHECK(kind_of("vsr-dataset v1, regime=transient, dim=3\n1,2,3,9,0\n") == ErrorKind::MalformedFile);
    CHECK(kind_of("vsr-dataset v1, regime=transient, dim=3\n1,2,3,1\n") == ErrorKind::MalformedFile);
    CHECK(kind_of("vsr-dataset v1, regime=transient, dim=3\n1,2,3,1.5,0\n") == ErrorKind::MalformedFile);
    CHECK(kind_of("vsr-dataset v1, regime=transient, dim=7\n") == ErrorKind::MalformedFile);
    CHECK(kind_of("vsr-dataset v2, regime=transient, dim=3\n") == ErrorKind::VersionMismatch);

    std::stringstream empty("vsr-dataset v1, regime=transient, dim=3\n");
    CHECK(read_dataset(empty).size() == 0);
}
