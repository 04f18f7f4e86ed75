#pragma once

// Fixed-size binary telemetry frames (200 three-phase samples per 20 ms),
// trace resampling, a minimal TCP transport and the frame-by-frame
// diagnosis session.

#include "vsrfdx/diagnosis.hpp"
#include "vsrfdx/sim.hpp"

#include <array>
#include <chrono>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace vsrfdx::stream {

inline constexpr std::array<char, 4> kMagic{'V', 'S', 'R', 'F'};
inline constexpr std::size_t kFrameSamples = 200;
inline constexpr double kStreamRate = 10'000.0;
inline constexpr double kFramePeriod = kFrameSamples / kStreamRate;  // 20 ms
inline constexpr std::size_t kFrameBytes = 4 + 8 + 2 + kFrameSamples * 3 * 4;

struct Frame {
    std::uint64_t sequence = 0;
    std::vector<std::array<float, 3>> samples;

    bool operator==(const Frame&) const = default;
};

// Little-endian wire image; throws Error(Config) unless 200 samples.
std::vector<std::uint8_t> encode_frame(const Frame& frame);
// Throws Error(MalformedFile) on wrong size, magic or count.
Frame decode_frame(std::span<const std::uint8_t> bytes);

// Linear interpolation onto a uniform grid starting at the first record.
// Throws Error(Config) when the trace is sampled below `rate`.
std::vector<sim::Abc> resample(const sim::Trace& trace, double rate = kStreamRate);

// Consecutive 200-sample frames, sequence from 0; a short tail is dropped.
std::vector<Frame> frames_from_trace(const sim::Trace& trace);

void write_frames(std::ostream& out, const std::vector<Frame>& frames);
// nullopt on clean end of stream; Error(MalformedFile) on a partial frame.
std::optional<Frame> read_frame(std::istream& in);
std::vector<Frame> read_frames_file(const std::string& path);

// --- TCP -------------------------------------------------------------------

class Socket {
public:
    Socket() = default;
    explicit Socket(int fd) : fd_(fd) {}
    Socket(Socket&& o) noexcept : fd_(o.fd_) { o.fd_ = -1; }
    Socket& operator=(Socket&& o) noexcept;
    Socket(const Socket&) = delete;
    Socket& operator=(const Socket&) = delete;
    ~Socket();

    int fd() const { return fd_; }
    bool valid() const { return fd_ >= 0; }

    void send_all(std::span<const std::uint8_t> bytes);
    // false on orderly shutdown before the first byte; Error(Io) mid-read.
    bool recv_exact(std::span<std::uint8_t> bytes);

private:
    int fd_ = -1;
};

class Listener {
public:
    // Binds 127.0.0.1-or-host:port (0 = ephemeral) and listens.
    Listener(const std::string& host, std::uint16_t port);
    std::uint16_t port() const { return port_; }
    Socket accept();

private:
    Socket sock_;
    std::uint16_t port_ = 0;
};

Socket connect_to(const std::string& host, std::uint16_t port,
                  std::chrono::milliseconds retry_for = std::chrono::milliseconds(0));

// "host:port"
std::pair<std::string, std::uint16_t> parse_endpoint(const std::string& text);

enum class Pacing { RealTime, MaxSpeed };

struct ServeStats {
    std::size_t frames = 0;
    std::vector<std::chrono::steady_clock::time_point> sent_at;
};

// Writes every frame to `sock`; real-time pacing releases frame k at
// start + k * 20 ms.
ServeStats serve_frames(Socket& sock, const std::vector<Frame>& frames, Pacing pacing);

// nullopt on clean end of stream.
std::optional<Frame> receive_frame(Socket& sock);

// --- diagnosis session -----------------------------------------------------

struct SessionConfig {
    double threshold = diag::kDefaultThreshold;
    int debounce = diag::kDefaultDebounce;
};

struct SessionStep {
    diag::WindowReport report;
    SwitchSet confirmed;
    bool changed = false;  // confirmed set differs from the previous window
};

class DiagnosisSession {
public:
    // Throws Error(RegimeMismatch) for time-series models.
    DiagnosisSession(const nn::MlpModel& model, SessionConfig config = {});

    SessionStep process(const Frame& frame);
    SwitchSet confirmed() const { return state_.confirmed; }

private:
    const nn::MlpModel& model_;
    SessionConfig config_;
    diag::LocalizationState state_;
    std::vector<diag::DiagnosisResult> results_;
};

using FrameSource = std::function<std::optional<Frame>()>;

struct DiagnosisSummary {
    std::size_t windows = 0;
    std::size_t samples = 0;
    SwitchSet final_set;
    SwitchSet ever_confirmed;
};

// Drains `source` through a session, writing the header and one log row per
// window to `log`. `on_step` (optional) sees every window in order.
DiagnosisSummary diagnose_stream(const nn::MlpModel& model, const FrameSource& source,
                                 std::ostream& log, SessionConfig config = {},
                                 const std::function<void(const SessionStep&)>& on_step = {});

} // namespace vsrfdx::stream
