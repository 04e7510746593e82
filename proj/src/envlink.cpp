#include "polgrad/envlink.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cstring>

namespace polgrad::envlink {

namespace {

bool write_all(int fd, const std::uint8_t* buf, std::size_t n) {
  while (n > 0) {
    const ssize_t rv = ::send(fd, buf, n, MSG_NOSIGNAL);
    if (rv <= 0) return false;
    n -= static_cast<std::size_t>(rv);
    buf += rv;
  }
  return true;
}

bool send_frame(int fd, FrameType type, const std::vector<std::uint8_t>& payload) {
  const auto bytes = encode_frame(type, payload);
  return write_all(fd, bytes.data(), bytes.size());
}

bool send_error(int fd, std::uint8_t code, const std::string& message) {
  std::vector<std::uint8_t> payload;
  payload.push_back(code);
  payload.insert(payload.end(), message.begin(), message.end());
  return send_frame(fd, FrameType::kError, payload);
}

}  // namespace

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xFF));
  out.push_back(static_cast<std::uint8_t>((v >> 8) & 0xFF));
  out.push_back(static_cast<std::uint8_t>((v >> 16) & 0xFF));
  out.push_back(static_cast<std::uint8_t>((v >> 24) & 0xFF));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i)
    out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
}

void put_f64(std::vector<std::uint8_t>& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, sizeof(bits));
  put_u64(out, bits);
}

std::uint32_t get_u32(const std::uint8_t* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) |
         (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint64_t get_u64(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
  return v;
}

double get_f64(const std::uint8_t* p) {
  const std::uint64_t bits = get_u64(p);
  double v;
  std::memcpy(&v, &bits, sizeof(v));
  return v;
}

std::vector<std::uint8_t> encode_frame(FrameType type,
                                       const std::vector<std::uint8_t>& payload) {
  if (payload.size() + 1 > kMaxFrameBytes)
    throw EnvLinkError("encode_frame: payload exceeds frame cap");
  std::vector<std::uint8_t> out;
  out.reserve(5 + payload.size());
  put_u32(out, static_cast<std::uint32_t>(payload.size() + 1));
  out.push_back(static_cast<std::uint8_t>(type));
  out.insert(out.end(), payload.begin(), payload.end());
  return out;
}

Frame decode_frame(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 5) throw EnvLinkError("decode_frame: short frame");
  const std::uint32_t length = get_u32(bytes.data());
  if (length == 0) throw EnvLinkError("decode_frame: zero length");
  if (bytes.size() != 4u + length)
    throw EnvLinkError("decode_frame: length mismatch: declared " +
                       std::to_string(length) + ", have " +
                       std::to_string(bytes.size() - 4));
  Frame f;
  f.type = static_cast<FrameType>(bytes[4]);
  f.payload.assign(bytes.begin() + 5, bytes.end());
  return f;
}

void FrameDecoder::feed(const std::uint8_t* data, std::size_t n) {
  buf_.insert(buf_.end(), data, data + n);
}

std::optional<Frame> FrameDecoder::next() {
  // compact the consumed prefix once it dominates the buffer
  if (at_ > 4096 && at_ * 2 > buf_.size()) {
    buf_.erase(buf_.begin(), buf_.begin() + static_cast<long>(at_));
    at_ = 0;
  }
  if (buf_.size() - at_ < 4) return std::nullopt;
  const std::uint32_t length = get_u32(buf_.data() + at_);
  if (length == 0) {
    at_ += 4;
    Frame f;
    f.type = static_cast<FrameType>(0);  // invalid; caller answers ERROR
    return f;
  }
  if (length > kMaxFrameBytes)
    throw EnvLinkError("frame length " + std::to_string(length) +
                       " exceeds cap; stream cannot be resynchronized");
  if (buf_.size() - at_ < 4u + length) return std::nullopt;
  Frame f;
  f.type = static_cast<FrameType>(buf_[at_ + 4]);
  f.payload.assign(buf_.begin() + static_cast<long>(at_) + 5,
                   buf_.begin() + static_cast<long>(at_) + 4 + length);
  at_ += 4u + length;
  return f;
}

Endpoint parse_endpoint(const std::string& s) {
  const auto colon = s.rfind(':');
  if (colon == std::string::npos)
    throw ConfigError("endpoint '" + s + "': expected host:port");
  Endpoint ep;
  ep.host = s.substr(0, colon);
  try {
    const int port = std::stoi(s.substr(colon + 1));
    if (port < 0 || port > 65535) throw std::out_of_range("port");
    ep.port = static_cast<std::uint16_t>(port);
  } catch (const std::exception&) {
    throw ConfigError("endpoint '" + s + "': bad port");
  }
  if (ep.host.empty()) ep.host = "127.0.0.1";
  return ep;
}

// --- server ---

EnvServer::EnvServer(EnvFactory factory, const Endpoint& endpoint)
    : factory_(std::move(factory)) {
  listen_fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (listen_fd_ < 0) throw EnvLinkError("server: socket() failed");
  const int one = 1;
  ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(endpoint.port);
  if (::inet_pton(AF_INET, endpoint.host.c_str(), &addr.sin_addr) != 1)
    throw EnvLinkError("server: bad host '" + endpoint.host + "'");
  if (::bind(listen_fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0)
    throw EnvLinkError("server: bind to " + endpoint.host + ":" +
                       std::to_string(endpoint.port) + " failed");
  if (::listen(listen_fd_, 16) != 0) throw EnvLinkError("server: listen failed");
  sockaddr_in bound{};
  socklen_t len = sizeof(bound);
  ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&bound), &len);
  port_ = ntohs(bound.sin_port);
}

EnvServer::~EnvServer() { stop(); }

void EnvServer::start() {
  accept_thread_ = std::thread([this] { accept_loop(); });
}

void EnvServer::run() { accept_loop(); }

void EnvServer::stop() {
  if (stopping_.exchange(true)) {
    if (accept_thread_.joinable()) accept_thread_.join();
    return;
  }
  if (listen_fd_ >= 0) {
    ::shutdown(listen_fd_, SHUT_RDWR);
    ::close(listen_fd_);
    listen_fd_ = -1;
  }
  {
    std::lock_guard<std::mutex> lock(conn_mutex_);
    for (int fd : conn_fds_) ::shutdown(fd, SHUT_RDWR);
  }
  if (accept_thread_.joinable()) accept_thread_.join();
  std::vector<std::thread> threads;
  {
    std::lock_guard<std::mutex> lock(conn_mutex_);
    threads.swap(conn_threads_);
  }
  for (auto& t : threads)
    if (t.joinable()) t.join();
}

void EnvServer::accept_loop() {
  while (!stopping_.load()) {
    const int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) break;
    std::lock_guard<std::mutex> lock(conn_mutex_);
    conn_fds_.push_back(fd);
    conn_threads_.emplace_back([this, fd] { handle_connection(fd); });
  }
}

void EnvServer::handle_connection(int fd) {
  std::unique_ptr<Env> env;
  try {
    env = factory_();
  } catch (const std::exception&) {
    send_error(fd, kErrEnvFault, "environment construction failed");
    ::close(fd);
    return;
  }
  const int M = env->spec().act_dim;
  FrameDecoder decoder;
  bool hello_done = false;
  bool has_reset = false;
  std::uint8_t rx[4096];

  auto reply_obs = [&](FrameType type, const Eigen::VectorXd& obs, double reward,
                       bool done, bool with_tail) {
    std::vector<std::uint8_t> payload;
    payload.reserve(static_cast<std::size_t>(obs.size()) * 8 + 9);
    for (Eigen::Index i = 0; i < obs.size(); ++i) put_f64(payload, obs[i]);
    if (with_tail) {
      put_f64(payload, reward);
      payload.push_back(done ? 1 : 0);
    }
    return send_frame(fd, type, payload);
  };

  bool open = true;
  while (open) {
    const ssize_t n = ::recv(fd, rx, sizeof(rx), 0);
    if (n <= 0) break;
    decoder.feed(rx, static_cast<std::size_t>(n));
    while (open) {
      std::optional<Frame> frame;
      try {
        frame = decoder.next();
      } catch (const EnvLinkError& e) {
        // oversized declared length: answer and drop, the stream is lost
        send_error(fd, kErrMalformed, e.what());
        open = false;
        break;
      }
      if (!frame) break;
      switch (frame->type) {
        case FrameType::kHello: {
          hello_done = true;
          std::vector<std::uint8_t> payload;
          put_u32(payload, static_cast<std::uint32_t>(env->spec().obs_dim));
          put_u32(payload, static_cast<std::uint32_t>(env->spec().act_dim));
          put_u32(payload, static_cast<std::uint32_t>(env->spec().max_episode_steps));
          payload.push_back(static_cast<std::uint8_t>(env->spec().variant));
          if (!send_frame(fd, FrameType::kSpec, payload)) open = false;
          break;
        }
        case FrameType::kReset: {
          if (!hello_done) {
            if (!send_error(fd, kErrBadState, "expected HELLO first")) open = false;
            break;
          }
          if (!frame->payload.empty()) {
            if (!send_error(fd, kErrMalformed, "RESET carries no payload")) open = false;
            break;
          }
          const Eigen::VectorXd obs = env->reset();
          has_reset = true;
          if (!reply_obs(FrameType::kObs, obs, 0, false, false)) open = false;
          break;
        }
        case FrameType::kStep: {
          if (!hello_done || !has_reset) {
            if (!send_error(fd, kErrBadState, "STEP before RESET")) open = false;
            break;
          }
          if (frame->payload.size() != static_cast<std::size_t>(M) * 8) {
            if (!send_error(fd, kErrMalformed,
                            "STEP payload must be " + std::to_string(M * 8) +
                                " bytes"))
              open = false;
            break;
          }
          Eigen::VectorXd action(M);
          for (int i = 0; i < M; ++i)
            action[i] = get_f64(frame->payload.data() + 8 * i);
          try {
            const Transition tr = env->step(action);
            if (!reply_obs(FrameType::kTransition, tr.observation, tr.reward, tr.done,
                           true))
              open = false;
          } catch (const std::exception& e) {
            if (!send_error(fd, kErrEnvFault, e.what())) open = false;
          }
          break;
        }
        case FrameType::kSeed: {
          if (frame->payload.size() != 8) {
            if (!send_error(fd, kErrMalformed, "SEED payload must be 8 bytes"))
              open = false;
            break;
          }
          env->seed(get_u64(frame->payload.data()));
          if (!send_frame(fd, FrameType::kSeed, {})) open = false;
          break;
        }
        case FrameType::kClose: {
          send_frame(fd, FrameType::kClose, {});
          open = false;
          break;
        }
        case FrameType::kSpec:
        case FrameType::kObs:
        case FrameType::kTransition:
        case FrameType::kError: {
          if (!send_error(fd, kErrMalformed, "response frame from client")) open = false;
          break;
        }
        default: {
          if (!send_error(fd, kErrUnknownType, "unknown frame type")) open = false;
          break;
        }
      }
    }
  }
  ::close(fd);
}

// --- client ---

RemoteEnv::RemoteEnv(const Endpoint& endpoint) {
  fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
  if (fd_ < 0) throw EnvLinkError("client: socket() failed");
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(endpoint.port);
  if (::inet_pton(AF_INET, endpoint.host.c_str(), &addr.sin_addr) != 1) {
    ::close(fd_);
    throw EnvLinkError("client: bad host '" + endpoint.host + "'");
  }
  if (::connect(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
    ::close(fd_);
    fd_ = -1;
    throw EnvLinkError("client: cannot connect to " + endpoint.host + ":" +
                       std::to_string(endpoint.port));
  }
  const Frame spec = request(FrameType::kHello, {}, FrameType::kSpec);
  if (spec.payload.size() != 13) throw EnvLinkError("client: malformed SPEC");
  spec_.obs_dim = static_cast<int>(get_u32(spec.payload.data()));
  spec_.act_dim = static_cast<int>(get_u32(spec.payload.data() + 4));
  spec_.max_episode_steps = static_cast<int>(get_u32(spec.payload.data() + 8));
  spec_.variant = static_cast<RewardVariant>(spec.payload[12]);
  spec_.name = "remote:" + endpoint.host + ":" + std::to_string(endpoint.port);
}

RemoteEnv::~RemoteEnv() {
  if (fd_ >= 0) {
    try {
      request(FrameType::kClose, {}, FrameType::kClose);
    } catch (...) {
    }
    ::close(fd_);
  }
}

Frame RemoteEnv::read_frame() {
  std::uint8_t rx[4096];
  while (true) {
    if (auto f = decoder_.next()) return *f;
    const ssize_t n = ::recv(fd_, rx, sizeof(rx), 0);
    if (n <= 0) throw EnvLinkError("client: connection closed by server");
    decoder_.feed(rx, static_cast<std::size_t>(n));
  }
}

Frame RemoteEnv::request(FrameType type, const std::vector<std::uint8_t>& payload,
                         FrameType expect) {
  if (fd_ < 0) throw EnvLinkError("client: connection not open");
  if (!send_frame(fd_, type, payload))
    throw EnvLinkError("client: send failed");
  Frame f = read_frame();
  if (f.type == FrameType::kError) {
    const std::uint8_t code = f.payload.empty() ? 0 : f.payload[0];
    std::string msg(f.payload.begin() + (f.payload.empty() ? 0 : 1),
                    f.payload.end());
    throw EnvLinkError("server error " + std::to_string(code) + ": " + msg);
  }
  if (f.type != expect) throw EnvLinkError("client: unexpected frame type");
  return f;
}

void RemoteEnv::seed(std::uint64_t s) {
  std::vector<std::uint8_t> payload;
  put_u64(payload, s);
  request(FrameType::kSeed, payload, FrameType::kSeed);
}

Eigen::VectorXd RemoteEnv::reset() {
  const Frame f = request(FrameType::kReset, {}, FrameType::kObs);
  if (f.payload.size() != static_cast<std::size_t>(spec_.obs_dim) * 8)
    throw EnvLinkError("client: malformed OBS payload");
  Eigen::VectorXd obs(spec_.obs_dim);
  for (int i = 0; i < spec_.obs_dim; ++i) obs[i] = get_f64(f.payload.data() + 8 * i);
  return obs;
}

Transition RemoteEnv::step(const Eigen::VectorXd& action) {
  if (action.size() != spec_.act_dim)
    throw EnvFault("remote step: action width " + std::to_string(action.size()) +
                   " != " + std::to_string(spec_.act_dim));
  std::vector<std::uint8_t> payload;
  payload.reserve(static_cast<std::size_t>(spec_.act_dim) * 8);
  for (int i = 0; i < spec_.act_dim; ++i) put_f64(payload, action[i]);
  const Frame f = request(FrameType::kStep, payload, FrameType::kTransition);
  const std::size_t want = static_cast<std::size_t>(spec_.obs_dim) * 8 + 9;
  if (f.payload.size() != want)
    throw EnvLinkError("client: malformed TRANSITION payload");
  Transition tr;
  tr.observation.resize(spec_.obs_dim);
  for (int i = 0; i < spec_.obs_dim; ++i)
    tr.observation[i] = get_f64(f.payload.data() + 8 * i);
  tr.reward = get_f64(f.payload.data() + static_cast<std::size_t>(spec_.obs_dim) * 8);
  tr.done = f.payload[static_cast<std::size_t>(spec_.obs_dim) * 8 + 8] != 0;
  return tr;
}

}  // namespace polgrad::envlink
