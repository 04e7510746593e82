#pragma once

// Out-of-process environment transport. Framing is byte-exact and normative:
//
//   frame  := length:u32le  type:u8  payload
//   length == 1 + |payload|  (the type byte is counted)
//
// types: 0x01 HELLO, 0x02 SPEC, 0x03 RESET, 0x04 OBS, 0x05 STEP,
//        0x06 TRANSITION, 0x07 SEED, 0x08 CLOSE, 0x7F ERROR
//
// payloads (all little-endian, reals are IEEE-754 binary64):
//   SPEC       u32 obs_dim, u32 act_dim, u32 max_episode_steps, u8 variant
//   OBS        obs_dim f64
//   STEP       act_dim f64
//   TRANSITION obs_dim f64, f64 reward, u8 done
//   SEED       u64 (request), empty (ack)
//   ERROR      u8 code, utf-8 message
//
// One environment per connection, blocking request/response. A malformed
// frame is answered with ERROR and the connection stays open; the only drop
// case is a declared length beyond the 1 MiB cap, where resynchronization is
// impossible.

#include <atomic>
#include <cstdint>
#include <mutex>
#include <optional>
#include <thread>
#include <vector>

#include "polgrad/env.hpp"

namespace polgrad::envlink {

enum class FrameType : std::uint8_t {
  kHello = 0x01,
  kSpec = 0x02,
  kReset = 0x03,
  kObs = 0x04,
  kStep = 0x05,
  kTransition = 0x06,
  kSeed = 0x07,
  kClose = 0x08,
  kError = 0x7F,
};

enum ErrorCode : std::uint8_t {
  kErrMalformed = 1,
  kErrBadState = 2,
  kErrUnknownType = 3,
  kErrEnvFault = 4,
};

inline constexpr std::size_t kMaxFrameBytes = 1u << 20;

struct Frame {
  FrameType type;
  std::vector<std::uint8_t> payload;
};

std::vector<std::uint8_t> encode_frame(FrameType type,
                                       const std::vector<std::uint8_t>& payload);
// Strict whole-buffer decode; throws EnvLinkError on any mismatch.
Frame decode_frame(const std::vector<std::uint8_t>& bytes);

// Incremental decoder for a byte stream; frames may arrive split at arbitrary
// boundaries.
class FrameDecoder {
 public:
  void feed(const std::uint8_t* data, std::size_t n);
  // Next complete frame, if any. Throws EnvLinkError when the declared
  // length exceeds kMaxFrameBytes (the stream cannot be resynchronized).
  std::optional<Frame> next();

 private:
  std::vector<std::uint8_t> buf_;
  std::size_t at_ = 0;
};

// --- payload packing ---
void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v);
void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v);
void put_f64(std::vector<std::uint8_t>& out, double v);
std::uint32_t get_u32(const std::uint8_t* p);
std::uint64_t get_u64(const std::uint8_t* p);
double get_f64(const std::uint8_t* p);

struct Endpoint {
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;
};
// Parses "host:port"; throws ConfigError.
Endpoint parse_endpoint(const std::string& s);

// Serves one environment instance per connection; connections are handled on
// their own threads with no shared state besides the listener.
class EnvServer {
 public:
  EnvServer(EnvFactory factory, const Endpoint& endpoint);
  ~EnvServer();

  std::uint16_t port() const { return port_; }
  void start();          // background accept loop
  void run();            // foreground accept loop (serve CLI)
  void stop();

 private:
  void accept_loop();
  void handle_connection(int fd);

  EnvFactory factory_;
  int listen_fd_ = -1;
  std::uint16_t port_ = 0;
  std::atomic<bool> stopping_{false};
  std::thread accept_thread_;
  std::mutex conn_mutex_;
  std::vector<int> conn_fds_;
  std::vector<std::thread> conn_threads_;
};

// Client side of the protocol, exposing the local Env contract.
class RemoteEnv final : public Env {
 public:
  explicit RemoteEnv(const Endpoint& endpoint);
  ~RemoteEnv() override;

  const EnvSpecInfo& spec() const override { return spec_; }
  void seed(std::uint64_t s) override;
  Eigen::VectorXd reset() override;
  Transition step(const Eigen::VectorXd& action) override;

 private:
  Frame request(FrameType type, const std::vector<std::uint8_t>& payload,
                FrameType expect);
  Frame read_frame();

  int fd_ = -1;
  EnvSpecInfo spec_;
  FrameDecoder decoder_;
};

}  // namespace polgrad::envlink
