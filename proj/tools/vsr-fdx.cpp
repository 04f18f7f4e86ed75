// vsr-fdx: simulate, build datasets, train, evaluate, stream and diagnose.
//
// Exit codes: 0 success, 1 config error, 2 runtime/numeric error, 3 I/O or
// connection error.

#include "vsrfdx/campaign.hpp"
#include "vsrfdx/config.hpp"
#include "vsrfdx/diagnosis.hpp"
#include "vsrfdx/error.hpp"
#include "vsrfdx/features.hpp"
#include "vsrfdx/mlp.hpp"
#include "vsrfdx/plot.hpp"
#include "vsrfdx/stream.hpp"
#include "vsrfdx/trace_io.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

namespace fs = std::filesystem;
using namespace vsrfdx;

namespace {

int exit_code(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::Config: return 1;
    case ErrorKind::Io:
    case ErrorKind::MalformedFile:
    case ErrorKind::VersionMismatch: return 3;
    default: return 2;
    }
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::Io, "cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path prepare_out(const std::string& dir) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw Error(ErrorKind::Io, "cannot create " + dir + ": " + ec.message());
    return fs::path(dir);
}

std::ofstream open_out(const fs::path& path) {
    std::ofstream out(path);
    if (!out) throw Error(ErrorKind::Io, "cannot write " + path.string());
    return out;
}

std::string stamp_line(std::uint64_t seed, std::uint64_t hash) {
    return "# seed=" + std::to_string(seed) + ", config=" + hex64(hash);
}

std::string file_tag(const feat::FeatureRegime& regime) {
    auto tag = regime.tag();
    for (auto& c : tag) {
        if (c == ':') c = '-';
    }
    return tag;
}

struct Common {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out = ".";
};

void add_common(CLI::App* cmd, Common& c, bool config_required = false) {
    auto* opt = cmd->add_option("--config", c.config, "Configuration file");
    if (config_required) opt->required();
    cmd->add_option("--seed", c.seed, "Random seed");
    cmd->add_option("--out", c.out, "Output directory");
}

campaign::CampaignConfig load_campaign(const Common& c) {
    auto cfg = c.config.empty() ? campaign::parse_campaign_config("") : campaign::read_campaign_config(c.config);
    if (c.seed) cfg.seed = *c.seed;
    return cfg;
}

// --- simulate ----------------------------------------------------------------

struct SimulateArgs {
    Common common;
    std::optional<double> duration;
};

int run_simulate(const SimulateArgs& a) {
    auto cfg = read_scenario_config(a.common.config);
    if (a.common.seed) cfg.seed = *a.common.seed;
    if (a.duration) cfg.duration = *a.duration;
    if (!(cfg.duration > 0)) throw Error(ErrorKind::Config, "duration must be positive");
    auto trace = sim::simulate(cfg.scenario, cfg.duration, cfg.params, cfg.seed, cfg.options);
    auto path = prepare_out(a.common.out) / "trace.csv";
    sim::write_trace_file(path.string(), trace, sim::TraceStamp{cfg.seed, hex64(cfg.hash)});
    std::printf("%zu records at %.0f Hz -> %s\n", trace.records.size(), trace.sample_rate, path.c_str());
    return 0;
}

// --- dataset -----------------------------------------------------------------

int run_dataset(const Common& c) {
    auto cfg = load_campaign(c);
    auto dir = prepare_out(c.out);
    auto out = campaign::run_campaign(cfg, [](const std::string& msg) { std::fprintf(stderr, "%s\n", msg.c_str()); });
    std::printf("per-class samples after balancing: %zu\n", out.per_class);
    for (const auto& split : out.splits) {
        auto tag = file_tag(split.train.regime);
        for (auto [name, data] : {std::pair{"train", &split.train}, std::pair{"val", &split.val},
                                  std::pair{"test", &split.test}}) {
            auto path = dir / (tag + "_" + name + ".csv");
            feat::write_dataset_file(path.string(), *data);
            std::printf("%-10s %-5s %8zu -> %s\n", tag.c_str(), name, data->size(), path.c_str());
        }
    }
    return 0;
}

// --- train -------------------------------------------------------------------

struct TrainArgs {
    Common common;
    std::string train;
    std::string val;
};

int run_train(const TrainArgs& a) {
    auto cfg = load_campaign(a.common);
    auto tc = cfg.train;
    if (a.common.seed) tc.seed = *a.common.seed;
    auto train = feat::read_dataset_file(a.train);
    feat::Dataset val;
    val.regime = train.regime;
    val.x.dim = train.x.dim;
    if (!a.val.empty()) val = feat::read_dataset_file(a.val);
    auto dir = prepare_out(a.common.out);

    auto result = campaign::fit_model(train, val, cfg.hidden, tc);
    nn::save_model_file((dir / "model.txt").string(), result.model);

    auto hist = open_out(dir / "history.csv");
    hist << stamp_line(tc.seed, cfg.hash) << '\n' << "epoch,train_mse,val_mse\n";
    for (const auto& e : result.history.epochs) {
        char buf[96];
        std::snprintf(buf, sizeof buf, "%zu,%.9g,%.9g\n", e.epoch, e.train_mse, e.val_mse);
        hist << buf;
    }
    std::printf("%s model, %zu epochs, stop=%s, train mse %.6g -> %s\n", result.model.regime.tag().c_str(),
                result.history.epochs.size(), nn::stop_reason_name(result.history.stop).c_str(),
                result.model.final_loss, (dir / "model.txt").c_str());
    return 0;
}

// --- eval --------------------------------------------------------------------

struct EvalArgs {
    Common common;
    std::string model;
    std::string test;
};

int run_eval(const EvalArgs& a) {
    auto model = nn::load_model_file(a.model);
    auto test = feat::read_dataset_file(a.test);
    auto c = diag::evaluate(model, test);
    auto dir = prepare_out(a.common.out);
    std::uint64_t hash = fnv1a(read_file(a.model));

    auto csv = open_out(dir / "confusion.csv");
    csv << stamp_line(model.seed, hash) << '\n';
    diag::write_confusion_csv(csv, c);

    std::ostringstream summary;
    char buf[128];
    std::snprintf(buf, sizeof buf, "samples %zu\nmacro_accuracy %.4f\nmicro_accuracy %.4f\nerror_rate %.4f\n",
                  c.total(), c.macro_accuracy(), c.micro_accuracy(), c.error_rate());
    summary << buf;
    for (int k = 0; k < feat::kNumLabels; ++k) {
        std::snprintf(buf, sizeof buf, "recall_F%d %.4f (support %zu)\n", k, c.recall(k), c.support(k));
        summary << buf;
    }
    auto txt = open_out(dir / "summary.txt");
    txt << stamp_line(model.seed, hash) << '\n' << summary.str();
    std::cout << summary.str();
    return 0;
}

// --- serve -------------------------------------------------------------------

struct ServeArgs {
    Common common;
    std::string trace;
    std::string listen = "127.0.0.1:5555";
    std::string pacing = "realtime";
    std::string frames_out;
};

int run_serve(const ServeArgs& a) {
    if (a.trace.empty() == a.common.config.empty()) {
        throw Error(ErrorKind::Config, "serve needs exactly one of --trace or --config");
    }
    sim::Trace trace;
    if (!a.trace.empty()) {
        trace = sim::read_trace_file(a.trace);
    } else {
        auto cfg = read_scenario_config(a.common.config);
        if (a.common.seed) cfg.seed = *a.common.seed;
        trace = sim::simulate(cfg.scenario, cfg.duration, cfg.params, cfg.seed, cfg.options);
    }
    auto frames = stream::frames_from_trace(trace);

    if (!a.frames_out.empty()) {
        std::ofstream out(a.frames_out, std::ios::binary);
        if (!out) throw Error(ErrorKind::Io, "cannot write " + a.frames_out);
        stream::write_frames(out, frames);
        std::printf("%zu frames -> %s\n", frames.size(), a.frames_out.c_str());
        return 0;
    }

    auto pacing = a.pacing == "max" ? stream::Pacing::MaxSpeed : stream::Pacing::RealTime;
    auto [host, port] = stream::parse_endpoint(a.listen);
    stream::Listener listener(host, port);
    std::fprintf(stderr, "listening on %s:%u\n", host.c_str(), static_cast<unsigned>(listener.port()));
    auto sock = listener.accept();
    auto stats = stream::serve_frames(sock, frames, pacing);
    std::printf("served %zu frames\n", stats.frames);
    return 0;
}

// --- diagnose ----------------------------------------------------------------

struct DiagnoseArgs {
    Common common;
    std::string model;
    std::string connect;
    std::string frames;
    std::string trace;
    double threshold = diag::kDefaultThreshold;
    int debounce = diag::kDefaultDebounce;
};

int run_diagnose(const DiagnoseArgs& a) {
    int sources = !a.connect.empty() + !a.frames.empty() + !a.trace.empty();
    if (sources != 1) throw Error(ErrorKind::Config, "diagnose needs exactly one of --connect, --frames, --trace");
    auto model = nn::load_model_file(a.model);
    std::uint64_t hash = fnv1a(read_file(a.model));
    std::uint64_t seed = a.common.seed.value_or(model.seed);

    stream::FrameSource source;
    stream::Socket sock;
    std::ifstream frame_file;
    std::vector<stream::Frame> frames;
    std::size_t next = 0;
    if (!a.connect.empty()) {
        auto [host, port] = stream::parse_endpoint(a.connect);
        sock = stream::connect_to(host, port, std::chrono::seconds(5));
        source = [&] { return stream::receive_frame(sock); };
    } else if (!a.frames.empty()) {
        frame_file.open(a.frames, std::ios::binary);
        if (!frame_file) throw Error(ErrorKind::Io, "cannot open " + a.frames);
        source = [&] { return stream::read_frame(frame_file); };
    } else {
        frames = stream::frames_from_trace(sim::read_trace_file(a.trace));
        source = [&]() -> std::optional<stream::Frame> {
            if (next >= frames.size()) return std::nullopt;
            return frames[next++];
        };
    }

    auto path = prepare_out(a.common.out) / "diagnosis.csv";
    auto log = open_out(path);
    log << stamp_line(seed, hash) << '\n';
    stream::SessionConfig sc{a.threshold, a.debounce};
    auto summary = stream::diagnose_stream(model, source, log, sc, [](const stream::SessionStep& s) {
        if (s.changed) {
            std::printf("window %zu t=%.3f s: confirmed {%s}\n", s.report.window_index, s.report.t_start,
                        s.confirmed.to_string().c_str());
        }
    });
    log.flush();
    if (!log) throw Error(ErrorKind::Io, "write failed: " + path.string());
    std::printf("%zu windows, %zu samples; final fault set {%s}\n", summary.windows, summary.samples,
                summary.final_set.to_string().c_str());
    return 0;
}

// --- plot --------------------------------------------------------------------

struct PlotArgs {
    Common common;
    std::string trace;
    std::string log;
};

int run_plot(const PlotArgs& a) {
    if (a.trace.empty() == a.log.empty()) throw Error(ErrorKind::Config, "plot needs exactly one of --trace or --log");
    auto dir = prepare_out(a.common.out);
    fs::path path;
    if (!a.trace.empty()) {
        path = dir / "trace.svg";
        auto out = open_out(path);
        plot::write_svg(out, plot::trace_panels(sim::read_trace_file(a.trace)), "t (s)");
    } else {
        std::ifstream in(a.log);
        if (!in) throw Error(ErrorKind::Io, "cannot open " + a.log);
        path = dir / "diagnosis.svg";
        auto out = open_out(path);
        plot::write_svg(out, plot::diagnosis_panels(in), "window start (s)");
    }
    std::printf("-> %s\n", path.c_str());
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Open-circuit fault diagnosis for a three-phase PWM rectifier"};
    app.require_subcommand(1);

    SimulateArgs sim_args;
    auto* simulate = app.add_subcommand("simulate", "Run one fault scenario and write its trace");
    add_common(simulate, sim_args.common, true);
    simulate->add_option("--duration", sim_args.duration, "Override the scenario duration (s)");

    Common dataset_args;
    auto* dataset = app.add_subcommand("dataset", "Run a fault campaign and write train/val/test datasets");
    add_common(dataset, dataset_args);

    TrainArgs train_args;
    auto* train = app.add_subcommand("train", "Train a classifier on a dataset");
    add_common(train, train_args.common);
    train->add_option("--train", train_args.train, "Training dataset")->required();
    train->add_option("--val", train_args.val, "Validation dataset");

    EvalArgs eval_args;
    auto* eval = app.add_subcommand("eval", "Confusion matrix and accuracy on a test dataset");
    add_common(eval, eval_args.common);
    eval->add_option("--model", eval_args.model, "Model file")->required();
    eval->add_option("--test", eval_args.test, "Test dataset")->required();

    ServeArgs serve_args;
    auto* serve = app.add_subcommand("serve", "Stream a trace as telemetry frames");
    add_common(serve, serve_args.common);
    serve->add_option("--trace", serve_args.trace, "Trace file (otherwise simulate --config)");
    serve->add_option("--listen", serve_args.listen, "host:port to listen on");
    serve->add_option("--pacing", serve_args.pacing, "realtime or max")
        ->check(CLI::IsMember({"realtime", "max"}));
    serve->add_option("--frames-out", serve_args.frames_out, "Write frames to this file instead of a socket");

    DiagnoseArgs diag_args;
    auto* diagnose = app.add_subcommand("diagnose", "Diagnose a frame stream window by window");
    add_common(diagnose, diag_args.common);
    diagnose->add_option("--model", diag_args.model, "Model file")->required();
    diagnose->add_option("--connect", diag_args.connect, "host:port of a running serve");
    diagnose->add_option("--frames", diag_args.frames, "Frame file");
    diagnose->add_option("--trace", diag_args.trace, "Trace file");
    diagnose->add_option("--threshold", diag_args.threshold, "Window label share threshold");
    diagnose->add_option("--debounce", diag_args.debounce, "Consecutive windows to confirm or retire");

    PlotArgs plot_args;
    auto* plot_cmd = app.add_subcommand("plot", "SVG plots of a trace or diagnosis log");
    add_common(plot_cmd, plot_args.common);
    plot_cmd->add_option("--trace", plot_args.trace, "Trace file");
    plot_cmd->add_option("--log", plot_args.log, "Diagnosis log");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : 1;
    }

    try {
        if (*simulate) return run_simulate(sim_args);
        if (*dataset) return run_dataset(dataset_args);
        if (*train) return run_train(train_args);
        if (*eval) return run_eval(eval_args);
        if (*serve) return run_serve(serve_args);
        if (*diagnose) return run_diagnose(diag_args);
        if (*plot_cmd) return run_plot(plot_args);
    } catch (const Error& e) {
        std::fprintf(stderr, "vsr-fdx: %s\n", e.what());
        return exit_code(e.kind());
    } catch (const std::exception& e) {
        std::fprintf(stderr, "vsr-fdx: %s\n", e.what());
        return 2;
    }
    return 1;
}
