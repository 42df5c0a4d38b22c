#pragma once

// Host side of the bridge protocol (v1): an external process acting as a
// SegmenterBackend over its stdin/stdout. Every message is a 4-byte big-endian
// payload length followed by a UTF-8 JSON object. See docs/bridge-protocol.md.

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <spawn.h>
#include <sys/socket.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <array>
#include <bit>
#include <cerrno>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "ics/base64.hpp"
#include "ics/error.hpp"
#include "ics/image.hpp"
#include "ics/segmenter.hpp"
#include "ics/support_set.hpp"

extern char** environ;

namespace ics::bridge {

inline constexpr int kProtocolVersion = 1;
inline constexpr std::uint32_t kMaxFrameBytes = 1u << 30;

using Clock = std::chrono::steady_clock;
using json = nlohmann::json;

struct BridgeHandshake {
  int protocol_version = kProtocolVersion;
  std::string backend_name;
  int required_width = 0;
  int required_height = 0;
  int max_support = 0;

  std::optional<Size2> required_size() const {
    if (required_width == 0 && required_height == 0) return std::nullopt;
    return Size2{required_width, required_height};
  }
};

struct BridgeOptions {
  std::chrono::milliseconds handshake_timeout{30'000};
  std::chrono::milliseconds request_timeout{120'000};
};

// ---------------------------------------------------------------------------
// Payload codecs. Pixel arrays travel row-major: images as f32 little-endian,
// labels as u8, both base64-encoded.

inline std::string encode_f32(std::span<const float> values) {
  std::vector<std::uint8_t> bytes(values.size() * 4);
  for (std::size_t i = 0; i < values.size(); ++i) {
    auto bits = std::bit_cast<std::uint32_t>(values[i]);
    for (int b = 0; b < 4; ++b) bytes[i * 4 + b] = static_cast<std::uint8_t>(bits >> (8 * b));
  }
  return base64::encode(bytes);
}

inline std::optional<std::vector<float>> decode_f32(std::string_view text) {
  auto bytes = base64::decode(text);
  if (!bytes || bytes->size() % 4 != 0) return std::nullopt;
  std::vector<float> out(bytes->size() / 4);
  for (std::size_t i = 0; i < out.size(); ++i) {
    std::uint32_t bits = 0;
    for (int b = 0; b < 4; ++b) bits |= std::uint32_t{(*bytes)[i * 4 + b]} << (8 * b);
    out[i] = std::bit_cast<float>(bits);
  }
  return out;
}

inline json hello_request() { return {{"type", "hello"}, {"protocol_version", kProtocolVersion}}; }

inline json hello_reply(const BridgeHandshake& h) {
  return {{"type", "hello"},
          {"protocol_version", h.protocol_version},
          {"backend_name", h.backend_name},
          {"required_width", h.required_width},
          {"required_height", h.required_height},
          {"max_support", h.max_support}};
}

inline BridgeHandshake parse_hello(const json& msg) {
  try {
    if (msg.at("type").get<std::string>() != "hello") fail(ErrorCode::MalformedResponse, "expected hello");
    BridgeHandshake h;
    h.protocol_version = msg.at("protocol_version").get<int>();
    if (h.protocol_version != kProtocolVersion) {
      fail(ErrorCode::VersionMismatch, "child speaks protocol " + std::to_string(h.protocol_version) + ", host " +
                                           std::to_string(kProtocolVersion));
    }
    h.backend_name = msg.value("backend_name", std::string{});
    h.required_width = msg.value("required_width", 0);
    h.required_height = msg.value("required_height", 0);
    h.max_support = msg.value("max_support", 0);
    const bool native = h.required_width == 0 && h.required_height == 0;
    if (!native && (h.required_width < 1 || h.required_height < 1)) {
      fail(ErrorCode::MalformedResponse, "required size must be >= 1x1 or 0x0");
    }
    if (h.max_support < 0) fail(ErrorCode::MalformedResponse, "negative max_support");
    return h;
  } catch (const json::exception& e) {
    fail(ErrorCode::MalformedResponse, std::string("hello: ") + e.what());
  }
}

inline json segment_request(const Slice& query, std::span<const SupportEntry> support) {
  json entries = json::array();
  for (const auto& e : support) {
    entries.push_back({{"image", encode_f32(e.image.pixels.values())},
                       {"label", base64::encode(e.label.values())}});
  }
  return {{"type", "segment_request"},
          {"w", query.width()},
          {"h", query.height()},
          {"query", encode_f32(query.pixels.values())},
          {"support", std::move(entries)}};
}

/// Validates a segment_response for a w x h query.
inline ProbMask parse_segment_response(const json& msg, Size2 size) {
  std::string type;
  try {
    type = msg.at("type").get<std::string>();
  } catch (const json::exception& e) {
    fail(ErrorCode::MalformedResponse, std::string("response without type: ") + e.what());
  }
  if (type == "error") {
    fail(ErrorCode::RemoteError, msg.value("message", std::string("unspecified child error")));
  }
  if (type != "segment_response") fail(ErrorCode::MalformedResponse, "unexpected message type " + type);
  std::optional<std::vector<float>> values;
  try {
    values = decode_f32(msg.at("prob").get<std::string>());
  } catch (const json::exception& e) {
    fail(ErrorCode::MalformedResponse, std::string("prob: ") + e.what());
  }
  if (!values) fail(ErrorCode::MalformedResponse, "prob is not valid base64 f32");
  if (values->size() != size.area()) {
    fail(ErrorCode::MalformedResponse, "prob has " + std::to_string(values->size()) + " values, expected " +
                                           std::to_string(size.area()));
  }
  ProbMask out(size.width, size.height);
  auto dst = out.values();
  for (std::size_t i = 0; i < values->size(); ++i) {
    const float v = (*values)[i];
    if (!(v >= 0.0f && v <= 1.0f)) {
      fail(ErrorCode::OutOfRangeProbability, "prob[" + std::to_string(i) + "] = " + std::to_string(v));
    }
    dst[i] = v;
  }
  return out;
}

// ---------------------------------------------------------------------------
// Framing over file descriptors.

enum class ReadStatus { Ok, Eof, TimedOut };

namespace detail {

inline ReadStatus read_exact(int fd, std::uint8_t* dst, std::size_t n, Clock::time_point deadline) {
  std::size_t got = 0;
  while (got < n) {
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(deadline - Clock::now()).count();
    if (left <= 0) return ReadStatus::TimedOut;
    pollfd pfd{fd, POLLIN, 0};
    const int ready = ::poll(&pfd, 1, static_cast<int>(std::min<long long>(left, 1 << 30)));
    if (ready < 0) {
      if (errno == EINTR) continue;
      return ReadStatus::Eof;
    }
    if (ready == 0) return ReadStatus::TimedOut;
    const ssize_t r = ::read(fd, dst + got, n - got);
    if (r < 0) {
      if (errno == EINTR || errno == EAGAIN) continue;
      return ReadStatus::Eof;
    }
    if (r == 0) return ReadStatus::Eof;
    got += static_cast<std::size_t>(r);
  }
  return ReadStatus::Ok;
}

inline bool write_exact(int fd, const std::uint8_t* src, std::size_t n) {
  std::size_t sent = 0;
  while (sent < n) {
    ssize_t w = ::send(fd, src + sent, n - sent, MSG_NOSIGNAL);
    if (w < 0 && errno == ENOTSOCK) w = ::write(fd, src + sent, n - sent);
    if (w < 0) {
      if (errno == EINTR) continue;
      return false;
    }
    sent += static_cast<std::size_t>(w);
  }
  return true;
}

}  // namespace detail

inline std::vector<std::uint8_t> encode_frame(std::string_view payload) {
  const auto n = static_cast<std::uint32_t>(payload.size());
  std::vector<std::uint8_t> frame{static_cast<std::uint8_t>(n >> 24), static_cast<std::uint8_t>(n >> 16),
                                  static_cast<std::uint8_t>(n >> 8), static_cast<std::uint8_t>(n)};
  frame.insert(frame.end(), payload.begin(), payload.end());
  return frame;
}

inline bool write_frame(int fd, std::string_view payload) {
  if (payload.size() > kMaxFrameBytes) return false;
  const auto frame = encode_frame(payload);
  return detail::write_exact(fd, frame.data(), frame.size());
}

struct FrameResult {
  ReadStatus status = ReadStatus::Eof;
  std::string payload;
};

/// Reads one frame. Oversized length prefixes raise MalformedResponse.
inline FrameResult read_frame(int fd, Clock::time_point deadline) {
  std::array<std::uint8_t, 4> prefix{};
  FrameResult out;
  out.status = detail::read_exact(fd, prefix.data(), prefix.size(), deadline);
  if (out.status != ReadStatus::Ok) return out;
  const std::uint32_t n = (std::uint32_t{prefix[0]} << 24) | (std::uint32_t{prefix[1]} << 16) |
                          (std::uint32_t{prefix[2]} << 8) | prefix[3];
  if (n > kMaxFrameBytes) fail(ErrorCode::MalformedResponse, "frame length " + std::to_string(n) + " too large");
  out.payload.resize(n);
  out.status = detail::read_exact(fd, reinterpret_cast<std::uint8_t*>(out.payload.data()), n, deadline);
  return out;
}

// ---------------------------------------------------------------------------
// Child process.

/// Owns one child started with `/bin/sh -c <command>`, connected through a
/// socket pair on its stdin and stdout. stderr is inherited.
class ChildProcess {
 public:
  explicit ChildProcess(const std::string& command) {
    int fds[2];
    if (::socketpair(AF_UNIX, SOCK_STREAM | SOCK_CLOEXEC, 0, fds) != 0) {
      fail(ErrorCode::SpawnFailure, std::string("socketpair: ") + std::strerror(errno));
    }
    posix_spawn_file_actions_t actions;
    posix_spawn_file_actions_init(&actions);
    posix_spawn_file_actions_adddup2(&actions, fds[1], STDIN_FILENO);
    posix_spawn_file_actions_adddup2(&actions, fds[1], STDOUT_FILENO);

    std::string sh = "sh";
    std::string flag = "-c";
    std::string cmd = command;
    char* argv[] = {sh.data(), flag.data(), cmd.data(), nullptr};
    const int rc = ::posix_spawn(&pid_, "/bin/sh", &actions, nullptr, argv, environ);
    posix_spawn_file_actions_destroy(&actions);
    ::close(fds[1]);
    if (rc != 0) {
      ::close(fds[0]);
      fail(ErrorCode::SpawnFailure, "posix_spawn: " + std::string(std::strerror(rc)));
    }
    fd_ = fds[0];
  }

  ChildProcess(const ChildProcess&) = delete;
  ChildProcess& operator=(const ChildProcess&) = delete;

  ~ChildProcess() { terminate(); }

  int fd() const noexcept { return fd_; }
  pid_t pid() const noexcept { return pid_; }

  /// Closes the channel (the child sees EOF), waits briefly, then kills.
  void terminate() noexcept {
    if (fd_ >= 0) {
      ::shutdown(fd_, SHUT_RDWR);
      ::close(fd_);
      fd_ = -1;
    }
    if (pid_ <= 0) return;
    int status = 0;
    for (int i = 0; i < 100; ++i) {
      const pid_t r = ::waitpid(pid_, &status, WNOHANG);
      if (r == pid_ || (r < 0 && errno != EINTR)) {
        pid_ = -1;
        return;
      }
      std::this_thread::sleep_for(std::chrono::milliseconds(10));
    }
    ::kill(pid_, SIGKILL);
    while (::waitpid(pid_, &status, 0) < 0 && errno == EINTR) {
    }
    pid_ = -1;
  }

 private:
  pid_t pid_ = -1;
  int fd_ = -1;
};

/// SegmenterBackend backed by a child process speaking protocol v1. The
/// child is stateless per request; capacity and augmentation stay with the
/// engine.
class BridgeBackend final : public SegmenterBackend {
 public:
  static std::unique_ptr<BridgeBackend> spawn(const std::string& command, BridgeOptions options = {}) {
    return std::unique_ptr<BridgeBackend>(new BridgeBackend(command, options));
  }

  std::string id() const override { return "bridge:" + handshake_.backend_name; }
  std::optional<Size2> required_size() const override { return handshake_.required_size(); }
  std::size_t max_support() const override { return static_cast<std::size_t>(handshake_.max_support); }
  const BridgeHandshake& handshake() const noexcept { return handshake_; }

  ProbMask segment(const Slice& query, std::span<const SupportEntry> support) override {
    if (broken_) fail(ErrorCode::ChildCrashed, "bridge child unusable after an earlier failure");
    for (const auto& e : support) {
      if (e.image.size() != query.size() || e.label.size() != query.size()) {
        fail(ErrorCode::DimMismatch, "support entry size differs from query");
      }
    }
    const std::string payload = segment_request(query, support).dump();
    if (!write_frame(child_.fd(), payload)) {
      broken_ = true;
      fail(ErrorCode::ChildCrashed, "bridge child closed its input");
    }
    FrameResult frame;
    try {
      frame = read_frame(child_.fd(), Clock::now() + options_.request_timeout);
    } catch (const Error&) {
      broken_ = true;
      throw;
    }
    if (frame.status == ReadStatus::TimedOut) {
      broken_ = true;
      fail(ErrorCode::Timeout, "no response within " + std::to_string(options_.request_timeout.count()) + " ms");
    }
    if (frame.status == ReadStatus::Eof) {
      broken_ = true;
      fail(ErrorCode::ChildCrashed, "bridge child exited mid-request");
    }
    json msg;
    try {
      msg = json::parse(frame.payload);
    } catch (const json::exception& e) {
      fail(ErrorCode::MalformedResponse, std::string("response is not JSON: ") + e.what());
    }
    return parse_segment_response(msg, query.size());
  }

 private:
  BridgeBackend(const std::string& command, BridgeOptions options) : child_(command), options_(options) {
    if (!write_frame(child_.fd(), hello_request().dump())) {
      fail(ErrorCode::SpawnFailure, "could not send hello to `" + command + "`");
    }
    const FrameResult frame = read_frame(child_.fd(), Clock::now() + options_.handshake_timeout);
    if (frame.status == ReadStatus::TimedOut) {
      fail(ErrorCode::HandshakeTimeout, "no hello from `" + command + "` within " +
                                            std::to_string(options_.handshake_timeout.count()) + " ms");
    }
    if (frame.status == ReadStatus::Eof) fail(ErrorCode::SpawnFailure, "`" + command + "` exited before hello");
    json msg;
    try {
      msg = json::parse(frame.payload);
    } catch (const json::exception& e) {
      fail(ErrorCode::MalformedResponse, std::string("hello is not JSON: ") + e.what());
    }
    handshake_ = parse_hello(msg);
  }

  ChildProcess child_;
  BridgeOptions options_;
  BridgeHandshake handshake_;
  bool broken_ = false;
};

}  // namespace ics::bridge

namespace ics {

using bridge::BridgeBackend;

inline std::unique_ptr<BridgeBackend> bridge_spawn(const std::string& command, bridge::BridgeOptions options = {}) {
  return BridgeBackend::spawn(command, options);
}

inline ProbMask bridge_segment(BridgeBackend& backend, const Slice& query, std::span<const SupportEntry> support) {
  return backend.segment(query, support);
}

}  // namespace ics
