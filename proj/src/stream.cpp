#include "vsrfdx/stream.hpp"

#include "vsrfdx/config.hpp"
#include "vsrfdx/error.hpp"

#include <algorithm>
#include <arpa/inet.h>
#include <bit>
#include <cerrno>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <ostream>
#include <sys/socket.h>
#include <thread>
#include <unistd.h>

namespace vsrfdx::stream {

namespace {

template <typename T>
void put_le(std::uint8_t*& p, T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i) *p++ = static_cast<std::uint8_t>(v >> (8 * i));
}

template <typename T>
T get_le(const std::uint8_t*& p) {
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(T(*p++) << (8 * i));
    return v;
}

[[noreturn]] void sys_error(const std::string& what) {
    throw Error(ErrorKind::Io, what + ": " + std::strerror(errno));
}

} // namespace

std::vector<std::uint8_t> encode_frame(const Frame& f) {
    if (f.samples.size() != kFrameSamples) {
        throw Error(ErrorKind::Config, "frame must carry " + std::to_string(kFrameSamples) +
                                           " samples, has " + std::to_string(f.samples.size()));
    }
    std::vector<std::uint8_t> out(kFrameBytes);
    std::uint8_t* p = out.data();
    std::memcpy(p, kMagic.data(), 4);
    p += 4;
    put_le<std::uint64_t>(p, f.sequence);
    put_le<std::uint16_t>(p, static_cast<std::uint16_t>(kFrameSamples));
    for (const auto& s : f.samples) {
        for (float v : s) put_le<std::uint32_t>(p, std::bit_cast<std::uint32_t>(v));
    }
    return out;
}

Frame decode_frame(std::span<const std::uint8_t> bytes) {
    if (bytes.size() != kFrameBytes) {
        throw Error(ErrorKind::MalformedFile, "frame is " + std::to_string(bytes.size()) +
                                                  " bytes, expected " + std::to_string(kFrameBytes));
    }
    if (std::memcmp(bytes.data(), kMagic.data(), 4) != 0) {
        throw Error(ErrorKind::MalformedFile, "bad frame magic");
    }
    const std::uint8_t* p = bytes.data() + 4;
    Frame f;
    f.sequence = get_le<std::uint64_t>(p);
    auto count = get_le<std::uint16_t>(p);
    if (count != kFrameSamples) {
        throw Error(ErrorKind::MalformedFile, "frame count " + std::to_string(count));
    }
    f.samples.resize(count);
    for (auto& s : f.samples) {
        for (float& v : s) v = std::bit_cast<float>(get_le<std::uint32_t>(p));
    }
    return f;
}

std::vector<sim::Abc> resample(const sim::Trace& trace, double rate) {
    const auto& rec = trace.records;
    if (rec.size() < 2) throw Error(ErrorKind::TraceTooShort, "trace has fewer than 2 records");
    if (trace.sample_rate < rate) {
        throw Error(ErrorKind::Config, "trace rate below the stream rate");
    }
    const double t0 = rec.front().t;
    const double t_end = rec.back().t;
    std::vector<sim::Abc> out;
    std::size_t j = 0;
    for (std::size_t k = 0;; ++k) {
        double t = t0 + static_cast<double>(k) / rate;
        if (t > t_end) break;
        while (j + 2 < rec.size() && rec[j + 1].t <= t) ++j;
        const auto& a = rec[j];
        const auto& b = rec[j + 1];
        double w = (t - a.t) / (b.t - a.t);
        w = std::clamp(w, 0.0, 1.0);
        sim::Abc s;
        for (int p = 0; p < 3; ++p) s[p] = a.i_abc[p] + w * (b.i_abc[p] - a.i_abc[p]);
        out.push_back(s);
    }
    return out;
}

std::vector<Frame> frames_from_trace(const sim::Trace& trace) {
    auto samples = resample(trace);
    std::vector<Frame> frames;
    for (std::size_t start = 0; start + kFrameSamples <= samples.size(); start += kFrameSamples) {
        Frame f;
        f.sequence = frames.size();
        f.samples.reserve(kFrameSamples);
        for (std::size_t i = 0; i < kFrameSamples; ++i) {
            const auto& s = samples[start + i];
            f.samples.push_back({static_cast<float>(s[0]), static_cast<float>(s[1]),
                                 static_cast<float>(s[2])});
        }
        frames.push_back(std::move(f));
    }
    return frames;
}

void write_frames(std::ostream& out, const std::vector<Frame>& frames) {
    for (const auto& f : frames) {
        auto bytes = encode_frame(f);
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    }
}

std::optional<Frame> read_frame(std::istream& in) {
    std::vector<std::uint8_t> buf(kFrameBytes);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(kFrameBytes));
    auto got = static_cast<std::size_t>(in.gcount());
    if (got == 0) return std::nullopt;
    if (got != kFrameBytes) throw Error(ErrorKind::MalformedFile, "truncated frame");
    return decode_frame(buf);
}

std::vector<Frame> read_frames_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorKind::Io, "cannot open " + path);
    std::vector<Frame> frames;
    while (auto f = read_frame(in)) frames.push_back(std::move(*f));
    return frames;
}

// --- TCP -------------------------------------------------------------------

Socket& Socket::operator=(Socket&& o) noexcept {
    if (this != &o) {
        if (fd_ >= 0) ::close(fd_);
        fd_ = o.fd_;
        o.fd_ = -1;
    }
    return *this;
}

Socket::~Socket() {
    if (fd_ >= 0) ::close(fd_);
}

void Socket::send_all(std::span<const std::uint8_t> bytes) {
    std::size_t done = 0;
    while (done < bytes.size()) {
        ssize_t n = ::send(fd_, bytes.data() + done, bytes.size() - done, MSG_NOSIGNAL);
        if (n < 0) {
            if (errno == EINTR) continue;
            sys_error("send");
        }
        done += static_cast<std::size_t>(n);
    }
}

bool Socket::recv_exact(std::span<std::uint8_t> bytes) {
    std::size_t done = 0;
    while (done < bytes.size()) {
        ssize_t n = ::recv(fd_, bytes.data() + done, bytes.size() - done, 0);
        if (n < 0) {
            if (errno == EINTR) continue;
            sys_error("recv");
        }
        if (n == 0) {
            if (done == 0) return false;
            throw Error(ErrorKind::Io, "connection closed mid-frame");
        }
        done += static_cast<std::size_t>(n);
    }
    return true;
}

namespace {

sockaddr_in resolve(const std::string& host, std::uint16_t port) {
    addrinfo hints{};
    hints.ai_family = AF_INET;
    hints.ai_socktype = SOCK_STREAM;
    addrinfo* res = nullptr;
    if (int rc = ::getaddrinfo(host.c_str(), nullptr, &hints, &res); rc != 0 || !res) {
        throw Error(ErrorKind::Io, "cannot resolve " + host + ": " + ::gai_strerror(rc));
    }
    sockaddr_in addr{};
    std::memcpy(&addr, res->ai_addr, sizeof addr);
    ::freeaddrinfo(res);
    addr.sin_port = htons(port);
    return addr;
}

} // namespace

Listener::Listener(const std::string& host, std::uint16_t port) {
    sock_ = Socket(::socket(AF_INET, SOCK_STREAM, 0));
    if (!sock_.valid()) sys_error("socket");
    int one = 1;
    ::setsockopt(sock_.fd(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof one);
    auto addr = resolve(host, port);
    if (::bind(sock_.fd(), reinterpret_cast<sockaddr*>(&addr), sizeof addr) != 0) {
        sys_error("bind " + host + ":" + std::to_string(port));
    }
    if (::listen(sock_.fd(), 1) != 0) sys_error("listen");
    socklen_t len = sizeof addr;
    ::getsockname(sock_.fd(), reinterpret_cast<sockaddr*>(&addr), &len);
    port_ = ntohs(addr.sin_port);
}

Socket Listener::accept() {
    while (true) {
        int fd = ::accept(sock_.fd(), nullptr, nullptr);
        if (fd >= 0) {
            int one = 1;
            ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof one);
            return Socket(fd);
        }
        if (errno != EINTR) sys_error("accept");
    }
}

Socket connect_to(const std::string& host, std::uint16_t port, std::chrono::milliseconds retry_for) {
    auto addr = resolve(host, port);
    auto deadline = std::chrono::steady_clock::now() + retry_for;
    while (true) {
        Socket s(::socket(AF_INET, SOCK_STREAM, 0));
        if (!s.valid()) sys_error("socket");
        if (::connect(s.fd(), reinterpret_cast<sockaddr*>(&addr), sizeof addr) == 0) return s;
        if (std::chrono::steady_clock::now() >= deadline) {
            sys_error("connect " + host + ":" + std::to_string(port));
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(20));
    }
}

std::pair<std::string, std::uint16_t> parse_endpoint(const std::string& text) {
    auto colon = text.rfind(':');
    if (colon == std::string::npos) throw Error(ErrorKind::Config, "endpoint must be host:port");
    auto port = parse_int(text.substr(colon + 1), "port");
    if (port < 0 || port > 65535) throw Error(ErrorKind::Config, "port out of range");
    return {text.substr(0, colon), static_cast<std::uint16_t>(port)};
}

ServeStats serve_frames(Socket& sock, const std::vector<Frame>& frames, Pacing pacing) {
    ServeStats stats;
    const auto start = std::chrono::steady_clock::now();
    const auto period = std::chrono::duration_cast<std::chrono::steady_clock::duration>(
        std::chrono::duration<double>(kFramePeriod));
    for (std::size_t k = 0; k < frames.size(); ++k) {
        if (pacing == Pacing::RealTime) std::this_thread::sleep_until(start + period * static_cast<long>(k));
        sock.send_all(encode_frame(frames[k]));
        stats.sent_at.push_back(std::chrono::steady_clock::now());
        ++stats.frames;
    }
    ::shutdown(sock.fd(), SHUT_WR);
    return stats;
}

std::optional<Frame> receive_frame(Socket& sock) {
    std::vector<std::uint8_t> buf(kFrameBytes);
    if (!sock.recv_exact(buf)) return std::nullopt;
    return decode_frame(buf);
}

// --- diagnosis session -----------------------------------------------------

DiagnosisSession::DiagnosisSession(const nn::MlpModel& model, SessionConfig config)
    : model_(model), config_(config) {
    if (model.regime.kind() == feat::FeatureRegime::Kind::TimeSeries) {
        throw Error(ErrorKind::RegimeMismatch, "streaming diagnosis needs a transient model");
    }
    state_.debounce = config.debounce;
    results_.reserve(kFrameSamples);
}

SessionStep DiagnosisSession::process(const Frame& frame) {
    results_.clear();
    for (const auto& s : frame.samples) {
        results_.push_back(diag::classify_sample(model_, {s[0], s[1], s[2]}));
    }
    SessionStep step;
    step.report = diag::aggregate_window(results_, config_.threshold, frame.sequence,
                                         static_cast<double>(frame.sequence) * kFramePeriod,
                                         kFramePeriod);
    auto before = state_.confirmed;
    step.confirmed = diag::localize(step.report, state_);
    step.changed = !(before == step.confirmed);
    return step;
}

DiagnosisSummary diagnose_stream(const nn::MlpModel& model, const FrameSource& source,
                                 std::ostream& log, SessionConfig config,
                                 const std::function<void(const SessionStep&)>& on_step) {
    DiagnosisSession session(model, config);
    DiagnosisSummary summary;
    log << diag::diagnosis_log_header() << '\n';
    while (auto frame = source()) {
        auto step = session.process(*frame);
        log << diag::diagnosis_log_row(step.report) << '\n';
        ++summary.windows;
        summary.samples += frame->samples.size();
        summary.ever_confirmed |= step.confirmed;
        if (on_step) on_step(step);
    }
    summary.final_set = session.confirmed();
    return summary;
}

} // namespace vsrfdx::stream
