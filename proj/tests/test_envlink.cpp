#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <arpa/inet.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include "polgrad/envlink.hpp"
#include "polgrad/reacher.hpp"

using namespace polgrad;
using namespace polgrad::envlink;

namespace {

EnvFactory reach2d_factory(int max_steps = 64) {
  return [max_steps] {
    ReacherOptions opts;
    opts.max_episode_steps = max_steps;
    return make_env("Reach2D-v0", opts);
  };
}

// Raw TCP helper for protocol-level tests.
struct RawClient {
  int fd = -1;
  explicit RawClient(std::uint16_t port) {
    fd = ::socket(AF_INET, SOCK_STREAM, 0);
    REQUIRE(fd >= 0);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = htons(port);
    ::inet_pton(AF_INET, "127.0.0.1", &addr.sin_addr);
    REQUIRE(::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) == 0);
  }
  ~RawClient() {
    if (fd >= 0) ::close(fd);
  }
  void send_bytes(const std::vector<std::uint8_t>& b) {
    std::size_t at = 0;
    while (at < b.size()) {
      const ssize_t n = ::send(fd, b.data() + at, b.size() - at, MSG_NOSIGNAL);
      REQUIRE(n > 0);
      at += static_cast<std::size_t>(n);
    }
  }
  // Reads one frame with a timeout; returns nullopt on timeout/close.
  std::optional<Frame> read_frame(int timeout_ms = 2000) {
    FrameDecoder dec;
    std::uint8_t rx[4096];
    while (true) {
      if (auto f = dec.next()) return f;
      pollfd pfd{fd, POLLIN, 0};
      if (::poll(&pfd, 1, timeout_ms) <= 0) return std::nullopt;
      const ssize_t n = ::recv(fd, rx, sizeof(rx), 0);
      if (n <= 0) return std::nullopt;
      dec.feed(rx, static_cast<std::size_t>(n));
    }
  }
};

}  // namespace

TEST_CASE("encode_frame: RESET is exactly 01 00 00 00 03") {
  const auto bytes = encode_frame(FrameType::kReset, {});
  REQUIRE(bytes.size() == 5);
  CHECK(bytes[0] == 0x01);
  CHECK(bytes[1] == 0x00);
  CHECK(bytes[2] == 0x00);
  CHECK(bytes[3] == 0x00);
  CHECK(bytes[4] == 0x03);
}

TEST_CASE("encode_frame: STEP with one zero action is length 9, type 05, zeros") {
  std::vector<std::uint8_t> payload;
  put_f64(payload, 0.0);
  const auto bytes = encode_frame(FrameType::kStep, payload);
  REQUIRE(bytes.size() == 13);
  CHECK(bytes[0] == 0x09);
  CHECK(bytes[1] == 0x00);
  CHECK(bytes[2] == 0x00);
  CHECK(bytes[3] == 0x00);
  CHECK(bytes[4] == 0x05);
  for (int i = 5; i < 13; ++i) CHECK(bytes[static_cast<std::size_t>(i)] == 0x00);
}

TEST_CASE("frames round-trip byte-identically over 1e4 fuzz cases") {
  Rng rng(1);
  const FrameType types[] = {FrameType::kHello, FrameType::kSpec, FrameType::kReset,
                             FrameType::kObs, FrameType::kStep,
                             FrameType::kTransition, FrameType::kSeed,
                             FrameType::kClose, FrameType::kError};
  for (int i = 0; i < 10000; ++i) {
    const FrameType t = types[rng.below(9)];
    std::vector<std::uint8_t> payload(rng.below(64));
    for (auto& b : payload) b = static_cast<std::uint8_t>(rng.below(256));
    const auto bytes = encode_frame(t, payload);
    const Frame f = decode_frame(bytes);
    CHECK(f.type == t);
    CHECK(f.payload == payload);
  }
}

TEST_CASE("decode_frame rejects length mismatches") {
  auto bytes = encode_frame(FrameType::kSeed, {1, 2, 3});
  bytes.push_back(0xFF);
  CHECK_THROWS_AS(decode_frame(bytes), EnvLinkError);
  CHECK_THROWS_AS(decode_frame({0x01, 0x00}), EnvLinkError);
}

TEST_CASE("stream reassembly: concatenated frames split at arbitrary boundaries") {
  Rng rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<Frame> want;
    std::vector<std::uint8_t> stream;
    for (int k = 0; k < 20; ++k) {
      Frame f;
      f.type = static_cast<FrameType>(1 + rng.below(8));
      f.payload.resize(rng.below(48));
      for (auto& b : f.payload) b = static_cast<std::uint8_t>(rng.below(256));
      const auto bytes = encode_frame(f.type, f.payload);
      stream.insert(stream.end(), bytes.begin(), bytes.end());
      want.push_back(std::move(f));
    }
    FrameDecoder dec;
    std::vector<Frame> got;
    std::size_t at = 0;
    while (at < stream.size()) {
      const std::size_t chunk = std::min<std::size_t>(1 + rng.below(7),
                                                      stream.size() - at);
      dec.feed(stream.data() + at, chunk);
      at += chunk;
      while (auto f = dec.next()) got.push_back(*f);
    }
    REQUIRE(got.size() == want.size());
    for (std::size_t i = 0; i < got.size(); ++i) {
      CHECK(got[i].type == want[i].type);
      CHECK(got[i].payload == want[i].payload);
    }
  }
}

TEST_CASE("server handshake reports the env spec with N == M + 7") {
  EnvServer server(reach2d_factory(), {"127.0.0.1", 0});
  server.start();
  {
    RemoteEnv remote({"127.0.0.1", server.port()});
    CHECK(remote.spec().obs_dim == 9);
    CHECK(remote.spec().act_dim == 2);
    CHECK(remote.spec().obs_dim == remote.spec().act_dim + 7);
    CHECK(remote.spec().max_episode_steps == 64);
  }
  server.stop();
}

TEST_CASE("STEP before RESET surfaces as a typed client error") {
  EnvServer server(reach2d_factory(), {"127.0.0.1", 0});
  server.start();
  {
    RemoteEnv remote({"127.0.0.1", server.port()});
    CHECK_THROWS_AS(remote.step(Eigen::Vector2d(0.0, 0.0)), EnvLinkError);
    // the connection survives: a proper reset still works
    Eigen::VectorXd obs = remote.reset();
    CHECK(obs.size() == 9);
  }
  server.stop();
}

TEST_CASE("unknown frame type draws ERROR and leaves the connection usable") {
  EnvServer server(reach2d_factory(), {"127.0.0.1", 0});
  server.start();
  {
    RawClient raw(server.port());
    raw.send_bytes(encode_frame(static_cast<FrameType>(0x55), {1, 2, 3}));
    auto err = raw.read_frame();
    REQUIRE(err.has_value());
    CHECK(err->type == FrameType::kError);
    REQUIRE(!err->payload.empty());
    CHECK(err->payload[0] == kErrUnknownType);
    raw.send_bytes(encode_frame(FrameType::kHello, {}));
    auto spec = raw.read_frame();
    REQUIRE(spec.has_value());
    CHECK(spec->type == FrameType::kSpec);
  }
  server.stop();
}

TEST_CASE("local and remote environments produce bit-identical streams") {
  EnvServer server(reach2d_factory(128), {"127.0.0.1", 0});
  server.start();
  {
    auto local = reach2d_factory(128)();
    RemoteEnv remote({"127.0.0.1", server.port()});
    local->seed(99);
    remote.seed(99);
    Eigen::VectorXd lo = local->reset();
    Eigen::VectorXd ro = remote.reset();
    CHECK(std::memcmp(lo.data(), ro.data(), sizeof(double) * 9) == 0);
    Rng rng(3);
    for (int i = 0; i < 2000; ++i) {
      Eigen::Vector2d a(rng.uniform(-0.2, 0.2), rng.uniform(-0.2, 0.2));
      Transition lt = local->step(a);
      Transition rt = remote.step(a);
      REQUIRE(lt.done == rt.done);
      REQUIRE(std::memcmp(&lt.reward, &rt.reward, sizeof(double)) == 0);
      REQUIRE(std::memcmp(lt.observation.data(), rt.observation.data(),
                          sizeof(double) * 9) == 0);
      if (lt.done) {
        lo = local->reset();
        ro = remote.reset();
        REQUIRE(std::memcmp(lo.data(), ro.data(), sizeof(double) * 9) == 0);
      }
    }
  }
  server.stop();
}

TEST_CASE("malformed payload sizes are answered without dropping the connection") {
  EnvServer server(reach2d_factory(), {"127.0.0.1", 0});
  server.start();
  {
    RawClient raw(server.port());
    raw.send_bytes(encode_frame(FrameType::kHello, {}));
    REQUIRE(raw.read_frame().has_value());
    raw.send_bytes(encode_frame(FrameType::kReset, {}));
    REQUIRE(raw.read_frame().has_value());
    // STEP with a truncated action vector
    raw.send_bytes(encode_frame(FrameType::kStep, {1, 2, 3}));
    auto err = raw.read_frame();
    REQUIRE(err.has_value());
    CHECK(err->type == FrameType::kError);
    CHECK(err->payload[0] == kErrMalformed);
    // still alive
    std::vector<std::uint8_t> action;
    put_f64(action, 0.05);
    put_f64(action, -0.05);
    raw.send_bytes(encode_frame(FrameType::kStep, action));
    auto tr = raw.read_frame();
    REQUIRE(tr.has_value());
    CHECK(tr->type == FrameType::kTransition);
  }
  server.stop();
}

TEST_CASE("fuzz: 1e4 random frames never kill the server") {
  EnvServer server(reach2d_factory(), {"127.0.0.1", 0});
  server.start();
  Rng rng(4);
  {
    RawClient raw(server.port());
    int answered = 0;
    for (int i = 0; i < 10000; ++i) {
      // random but in-cap declared lengths so the stream stays parseable
      std::vector<std::uint8_t> payload(rng.below(32));
      for (auto& b : payload) b = static_cast<std::uint8_t>(rng.below(256));
      const auto t = static_cast<FrameType>(rng.below(256));
      raw.send_bytes(encode_frame(t, payload));
      auto f = raw.read_frame();
      if (!f) break;  // dropped (allowed), but server must live on
      answered += 1;
    }
    CHECK(answered > 0);
  }
  // server is still serving fresh connections
  {
    RemoteEnv remote({"127.0.0.1", server.port()});
    remote.reset();
    Transition t = remote.step(Eigen::Vector2d(0.01, 0.01));
    CHECK(t.observation.size() == 9);
  }
  server.stop();
}

TEST_CASE("oversized declared length drops only that connection") {
  EnvServer server(reach2d_factory(), {"127.0.0.1", 0});
  server.start();
  {
    RawClient raw(server.port());
    std::vector<std::uint8_t> evil;
    put_u32(evil, 0x7FFFFFFF);
    evil.push_back(0x05);
    raw.send_bytes(evil);
    auto err = raw.read_frame();
    // answered with ERROR, then closed
    if (err) CHECK(err->type == FrameType::kError);
    CHECK_FALSE(raw.read_frame(200).has_value());
  }
  {
    RemoteEnv remote({"127.0.0.1", server.port()});
    CHECK(remote.reset().size() == 9);
  }
  server.stop();
}

TEST_CASE("endpoint parsing") {
  Endpoint ep = parse_endpoint("127.0.0.1:5555");
  CHECK(ep.host == "127.0.0.1");
  CHECK(ep.port == 5555);
  CHECK_THROWS_AS(parse_endpoint("nonsense"), ConfigError);
  CHECK_THROWS_AS(parse_endpoint("h:99999"), ConfigError);
}
