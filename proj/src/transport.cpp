#include "hxit/transport.hpp"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <atomic>
#include <cerrno>
#include <chrono>
#include <condition_variable>
#include <cstring>
#include <deque>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <set>
#include <thread>
#include <variant>

#include "hxit/error.hpp"

namespace hxit {

namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

constexpr uint8_t kMagic[4] = {0x48, 0x58, 0x49, 0x54}; // "HXIT"
constexpr uint8_t kVersion = 1;
constexpr size_t kChunkSize = 64 * 1024;
constexpr uint64_t kMaxPayload = uint64_t(1) << 40;

void put_u32(std::vector<uint8_t>& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<uint8_t>& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

uint32_t get_u32(const uint8_t* p) {
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(p[i]) << (8 * i);
  return v;
}

uint64_t get_u64(const uint8_t* p) {
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(p[i]) << (8 * i);
  return v;
}

struct FrameHeader {
  FrameKind kind;
  uint64_t step;
  uint32_t rank;
  uint32_t rank_count;
  uint64_t payload_len;
};

FrameHeader parse_frame_header(const uint8_t* p) {
  if (std::memcmp(p, kMagic, 4) != 0) fail(ErrorCode::ProtocolBadMagic, "bad frame magic");
  if (p[4] != kVersion)
    fail(ErrorCode::ProtocolBadVersion, "unsupported frame version " + std::to_string(p[4]));
  if (p[5] > 2)
    fail(ErrorCode::ProtocolBadVersion, "unknown frame kind " + std::to_string(p[5]));
  FrameHeader h;
  h.kind = static_cast<FrameKind>(p[5]);
  h.step = get_u64(p + 6);
  h.rank = get_u32(p + 14);
  h.rank_count = get_u32(p + 18);
  h.payload_len = get_u64(p + 22);
  if (h.payload_len > kMaxPayload)
    fail(ErrorCode::ProtocolTruncated,
         "implausible payload length " + std::to_string(h.payload_len));
  return h;
}

} // namespace

std::vector<uint8_t> encode_frame(const Frame& frame) {
  std::vector<uint8_t> out;
  out.reserve(kFrameHeaderSize + frame.payload.size());
  out.insert(out.end(), kMagic, kMagic + 4);
  out.push_back(kVersion);
  out.push_back(static_cast<uint8_t>(frame.kind));
  put_u64(out, frame.step);
  put_u32(out, frame.rank);
  put_u32(out, frame.rank_count);
  put_u64(out, frame.payload.size());
  out.insert(out.end(), frame.payload.begin(), frame.payload.end());
  return out;
}

Frame decode_frame(std::span<const uint8_t> bytes) {
  if (bytes.size() < kFrameHeaderSize)
    fail(ErrorCode::ProtocolTruncated, "frame shorter than its 30-byte header");
  FrameHeader h = parse_frame_header(bytes.data());
  if (bytes.size() - kFrameHeaderSize != h.payload_len)
    fail(ErrorCode::ProtocolTruncated,
         "frame payload length mismatch (declared " + std::to_string(h.payload_len) + ", have " +
             std::to_string(bytes.size() - kFrameHeaderSize) + ")");
  Frame f;
  f.kind = h.kind;
  f.step = h.step;
  f.rank = h.rank;
  f.rank_count = h.rank_count;
  f.payload.assign(bytes.begin() + kFrameHeaderSize, bytes.end());
  return f;
}

// ---------------------------------------------------------------------------
// endpoints
// ---------------------------------------------------------------------------

Endpoint Endpoint::parse(const std::string& spec) {
  Endpoint e;
  if (spec.rfind("file://", 0) == 0) {
    e.kind = Kind::File;
    e.dir = spec.substr(7);
    if (e.dir.empty()) fail(ErrorCode::ConfigInvalid, "file endpoint needs a directory");
    return e;
  }
  size_t pos = spec.rfind(':');
  if (pos == std::string::npos || pos == 0 || pos + 1 >= spec.size())
    fail(ErrorCode::ConfigInvalid, "endpoint '" + spec + "' is neither host:port nor file://dir");
  e.kind = Kind::Socket;
  e.host = spec.substr(0, pos);
  std::string port = spec.substr(pos + 1);
  int value = 0;
  for (char c : port) {
    if (c < '0' || c > '9')
      fail(ErrorCode::ConfigInvalid, "endpoint '" + spec + "' has a non-numeric port");
    value = value * 10 + (c - '0');
    if (value > 65535) fail(ErrorCode::ConfigInvalid, "endpoint '" + spec + "' port out of range");
  }
  e.port = value;
  return e;
}

std::string Endpoint::describe() const {
  if (kind == Kind::File) return "file://" + dir;
  return host + ":" + std::to_string(port);
}

// ---------------------------------------------------------------------------
// pacing
// ---------------------------------------------------------------------------

TokenBucket::TokenBucket(double bytes_per_second) : rate_(bytes_per_second) {}

void TokenBucket::acquire(size_t bytes) {
  if (rate_ <= 0.0) return;
  // sleeping under the lock serializes contending writers, which is the
  // point: one link, rate_ bytes per second in total
  std::lock_guard<std::mutex> lock(mu_);
  auto now = Clock::now();
  if (primed_) {
    double credit = std::chrono::duration<double>(now - last_).count() * rate_;
    available_ = std::min(available_ + credit, static_cast<double>(kChunkSize));
  } else {
    primed_ = true;
  }
  last_ = now;
  if (available_ >= static_cast<double>(bytes)) {
    available_ -= static_cast<double>(bytes);
    return;
  }
  double deficit = static_cast<double>(bytes) - available_;
  available_ = 0.0;
  std::this_thread::sleep_for(std::chrono::duration<double>(deficit / rate_));
  last_ = Clock::now();
}

// ---------------------------------------------------------------------------
// socket plumbing
// ---------------------------------------------------------------------------

namespace {

class UniqueFd {
public:
  UniqueFd() = default;
  explicit UniqueFd(int fd) : fd_(fd) {}
  ~UniqueFd() { reset(); }
  UniqueFd(UniqueFd&& o) noexcept : fd_(o.release()) {}
  UniqueFd& operator=(UniqueFd&& o) noexcept {
    reset(o.release());
    return *this;
  }
  int get() const { return fd_; }
  int release() {
    int f = fd_;
    fd_ = -1;
    return f;
  }
  void reset(int fd = -1) {
    if (fd_ >= 0) ::close(fd_);
    fd_ = fd;
  }
  explicit operator bool() const { return fd_ >= 0; }

private:
  int fd_ = -1;
};

void send_all(int fd, const uint8_t* data, size_t len) {
  while (len > 0) {
    ssize_t n = ::send(fd, data, len, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      fail(ErrorCode::TransportBroken, std::string("send: ") + std::strerror(errno));
    }
    data += n;
    len -= static_cast<size_t>(n);
  }
}

enum class RecvEnd { Full, Eof, Stopped, TimedOut };

// Reads exactly `len` bytes unless the peer closes (Eof), `stop` is raised,
// or no byte arrives within the idle timeout. With `timeout_at_boundary`
// false the timeout only starts once the first byte is in (an idle but
// healthy peer may sit at a frame boundary indefinitely).
RecvEnd recv_exact(int fd, uint8_t* buf, size_t len, const std::atomic<bool>* stop,
                   double idle_timeout_s, bool timeout_at_boundary, size_t* got) {
  size_t off = 0;
  auto last_data = Clock::now();
  while (off < len) {
    struct pollfd p{fd, POLLIN, 0};
    int pr = ::poll(&p, 1, 100);
    if (stop && stop->load()) {
      *got = off;
      return RecvEnd::Stopped;
    }
    if (pr < 0) {
      if (errno == EINTR) continue;
      fail(ErrorCode::TransportBroken, std::string("poll: ") + std::strerror(errno));
    }
    if (pr == 0) {
      if (idle_timeout_s > 0.0 && (off > 0 || timeout_at_boundary) &&
          std::chrono::duration<double>(Clock::now() - last_data).count() > idle_timeout_s) {
        *got = off;
        return RecvEnd::TimedOut;
      }
      continue;
    }
    ssize_t n = ::recv(fd, buf + off, len - off, 0);
    if (n < 0) {
      if (errno == EINTR) continue;
      fail(ErrorCode::TransportBroken, std::string("recv: ") + std::strerror(errno));
    }
    if (n == 0) {
      *got = off;
      return RecvEnd::Eof;
    }
    off += static_cast<size_t>(n);
    last_data = Clock::now();
  }
  *got = len;
  return RecvEnd::Full;
}

int connect_with_retry(const std::string& host, int port, double timeout_s) {
  struct addrinfo hints{};
  hints.ai_family = AF_UNSPEC;
  hints.ai_socktype = SOCK_STREAM;
  struct addrinfo* res = nullptr;
  std::string port_str = std::to_string(port);
  int rc = ::getaddrinfo(host.c_str(), port_str.c_str(), &hints, &res);
  if (rc != 0)
    fail(ErrorCode::TransportConnect,
         "cannot resolve '" + host + "': " + std::string(gai_strerror(rc)));

  auto deadline = Clock::now() + std::chrono::duration<double>(timeout_s);
  int last_errno = ECONNREFUSED;
  for (;;) {
    for (struct addrinfo* ai = res; ai; ai = ai->ai_next) {
      UniqueFd fd(::socket(ai->ai_family, ai->ai_socktype, ai->ai_protocol));
      if (!fd) {
        last_errno = errno;
        continue;
      }
      if (::connect(fd.get(), ai->ai_addr, ai->ai_addrlen) == 0) {
        int one = 1;
        ::setsockopt(fd.get(), IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
        ::freeaddrinfo(res);
        return fd.release();
      }
      last_errno = errno;
    }
    if (Clock::now() >= deadline) {
      ::freeaddrinfo(res);
      fail(ErrorCode::TransportConnect, "cannot connect to " + host + ":" + port_str + ": " +
                                            std::strerror(last_errno));
    }
    std::this_thread::sleep_for(std::chrono::milliseconds(50));
  }
}

void atomic_write_file(const fs::path& final_path, const std::vector<uint8_t>& bytes,
                       TokenBucket& bucket) {
  fs::path tmp = final_path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorCode::Io, "cannot open '" + tmp.string() + "' for writing");
    for (size_t off = 0; off < bytes.size(); off += kChunkSize) {
      size_t n = std::min(kChunkSize, bytes.size() - off);
      bucket.acquire(n);
      out.write(reinterpret_cast<const char*>(bytes.data() + off),
                static_cast<std::streamsize>(n));
      if (!out) fail(ErrorCode::Io, "short write to '" + tmp.string() + "'");
    }
  }
  std::error_code ec;
  fs::rename(tmp, final_path, ec);
  if (ec)
    fail(ErrorCode::Io, "cannot rename '" + tmp.string() + "': " + ec.message());
}

} // namespace

// ---------------------------------------------------------------------------
// writer
// ---------------------------------------------------------------------------

struct TransportWriter::Impl {
  Endpoint endpoint;
  WriterOptions options;
  std::shared_ptr<TokenBucket> bucket;
  UniqueFd fd;
  bool open = false;
  bool have_last = false;
  uint64_t last_step = 0;

  Impl(const Endpoint& ep, const WriterOptions& opts)
      : endpoint(ep), options(opts),
        bucket(opts.shared_bucket ? opts.shared_bucket
                                  : std::make_shared<TokenBucket>(opts.bytes_per_second)) {}

  Frame make_frame(FrameKind kind, uint64_t step, std::span<const uint8_t> payload) const {
    Frame f;
    f.kind = kind;
    f.step = step;
    f.rank = options.rank;
    f.rank_count = options.rank_count;
    f.payload.assign(payload.begin(), payload.end());
    return f;
  }

  uint64_t emit(const Frame& frame) {
    std::vector<uint8_t> bytes = encode_frame(frame);
    if (endpoint.kind == Endpoint::Kind::Socket) {
      for (size_t off = 0; off < bytes.size(); off += kChunkSize) {
        size_t n = std::min(kChunkSize, bytes.size() - off);
        bucket->acquire(n);
        send_all(fd.get(), bytes.data() + off, n);
      }
    } else {
      fs::path name;
      switch (frame.kind) {
        case FrameKind::Data:
          name = "step" + std::to_string(frame.step) + "_rank" + std::to_string(frame.rank) +
                 ".hxit";
          break;
        case FrameKind::Eos: name = "eos_rank" + std::to_string(frame.rank) + ".hxit"; break;
        case FrameKind::Handshake:
          name = "handshake_rank" + std::to_string(frame.rank) + ".hxit";
          break;
      }
      atomic_write_file(fs::path(endpoint.dir) / name, bytes, *bucket);
    }
    return bytes.size();
  }
};

TransportWriter::TransportWriter(const Endpoint& endpoint, const WriterOptions& options)
    : impl_(std::make_unique<Impl>(endpoint, options)) {
  if (options.rank_count == 0 || options.rank >= options.rank_count)
    fail(ErrorCode::ConfigInvalid, "writer rank must lie in [0, rank_count)");
  if (endpoint.kind == Endpoint::Kind::Socket) {
    impl_->fd.reset(connect_with_retry(endpoint.host, endpoint.port, options.timeout_seconds));
    impl_->emit(impl_->make_frame(FrameKind::Handshake, 0, {}));
    uint8_t ack[4] = {0, 0, 0, 0};
    size_t got = 0;
    RecvEnd end = recv_exact(impl_->fd.get(), ack, 4, nullptr, options.timeout_seconds, true, &got);
    if (end != RecvEnd::Full || std::memcmp(ack, kMagic, 4) != 0)
      fail(ErrorCode::TransportHandshake, "no handshake acknowledgement from " +
                                              endpoint.describe());
  } else {
    std::error_code ec;
    fs::create_directories(endpoint.dir, ec);
    if (ec)
      fail(ErrorCode::Io, "cannot create '" + endpoint.dir + "': " + ec.message());
    impl_->emit(impl_->make_frame(FrameKind::Handshake, 0, {}));
  }
  impl_->open = true;
}

TransportWriter::~TransportWriter() {
  try {
    close();
  } catch (...) {
    // destructor stays silent; explicit close() reports
  }
}

uint64_t TransportWriter::send(uint64_t step, std::span<const uint8_t> payload) {
  if (!impl_->open) fail(ErrorCode::TransportBroken, "writer already closed");
  if (impl_->have_last && step <= impl_->last_step)
    fail(ErrorCode::TransportStepOrder,
         "step " + std::to_string(step) + " does not follow " + std::to_string(impl_->last_step));
  uint64_t bytes = impl_->emit(impl_->make_frame(FrameKind::Data, step, payload));
  impl_->have_last = true;
  impl_->last_step = step;
  return bytes;
}

uint64_t TransportWriter::send_node(uint64_t step, const DataNode& payload) {
  return send(step, serialize_node(payload));
}

void TransportWriter::close() {
  if (!impl_->open) return;
  impl_->open = false; // a failed EOS still leaves the writer closed
  uint64_t eos_step = impl_->have_last ? impl_->last_step + 1 : 0;
  impl_->emit(impl_->make_frame(FrameKind::Eos, eos_step, {}));
  if (impl_->endpoint.kind == Endpoint::Kind::Socket) {
    ::shutdown(impl_->fd.get(), SHUT_WR);
    impl_->fd.reset();
  }
}

// ---------------------------------------------------------------------------
// reader
// ---------------------------------------------------------------------------

struct TransportReader::Impl {
  Endpoint endpoint;
  ReaderOptions options;

  // socket mode
  UniqueFd listen_fd;
  int port = 0;
  std::atomic<bool> stop{false};
  std::thread acceptor;
  std::mutex conn_mutex;
  std::vector<UniqueFd> conn_fds;
  std::vector<std::thread> conn_threads;

  std::mutex mu;
  std::condition_variable cv;
  std::deque<std::variant<Frame, std::exception_ptr>> queue;

  // consumer-side bookkeeping
  std::optional<uint32_t> rank_count;
  std::set<uint32_t> eos_ranks;
  std::map<uint32_t, uint64_t> last_step;

  // file mode
  std::set<std::string> consumed;
  std::deque<Frame> file_pending;
  Clock::time_point last_progress = Clock::now();

  std::atomic<bool> closed{false};

  explicit Impl(const Endpoint& ep, const ReaderOptions& opts) : endpoint(ep), options(opts) {}

  void push(std::variant<Frame, std::exception_ptr> item) {
    {
      std::lock_guard<std::mutex> lock(mu);
      queue.push_back(std::move(item));
    }
    cv.notify_all();
  }

  void connection_loop(int fd) {
    bool first = true;
    bool had_eos = false;
    try {
      for (;;) {
        uint8_t header[kFrameHeaderSize];
        size_t got = 0;
        // The magic is validated as soon as its four bytes arrive; a corrupt
        // peer fails fast instead of stalling until the idle timeout.
        RecvEnd end = recv_exact(fd, header, 4, &stop, options.timeout_seconds, false, &got);
        if (end == RecvEnd::Stopped) return;
        if (end == RecvEnd::Eof) {
          if (got == 0) {
            if (first || had_eos) return; // probe or orderly shutdown
            fail(ErrorCode::TransportBroken, "connection closed before end-of-stream");
          }
          fail(ErrorCode::ProtocolTruncated, "connection closed inside a frame header");
        }
        if (end == RecvEnd::TimedOut)
          fail(ErrorCode::TransportBroken, "timed out inside a frame header");
        if (std::memcmp(header, kMagic, 4) != 0)
          fail(ErrorCode::ProtocolBadMagic, "bad frame magic");

        end = recv_exact(fd, header + 4, kFrameHeaderSize - 4, &stop, options.timeout_seconds,
                         true, &got);
        if (end == RecvEnd::Stopped) return;
        if (end == RecvEnd::Eof)
          fail(ErrorCode::ProtocolTruncated, "connection closed inside a frame header");
        if (end == RecvEnd::TimedOut)
          fail(ErrorCode::TransportBroken, "timed out inside a frame header");

        FrameHeader h = parse_frame_header(header);
        Frame frame;
        frame.kind = h.kind;
        frame.step = h.step;
        frame.rank = h.rank;
        frame.rank_count = h.rank_count;
        frame.payload.resize(h.payload_len);
        if (h.payload_len > 0) {
          end = recv_exact(fd, frame.payload.data(), h.payload_len, &stop,
                           options.timeout_seconds, true, &got);
          if (end == RecvEnd::Stopped) return;
          if (end == RecvEnd::Eof)
            fail(ErrorCode::ProtocolTruncated, "connection closed inside a frame payload");
          if (end == RecvEnd::TimedOut)
            fail(ErrorCode::TransportBroken, "timed out inside a frame payload");
        }
        first = false;
        if (frame.kind == FrameKind::Handshake) send_all(fd, kMagic, 4);
        if (frame.kind == FrameKind::Eos) had_eos = true;
        push(std::move(frame));
      }
    } catch (...) {
      push(std::current_exception());
    }
  }

  void acceptor_loop() {
    for (;;) {
      struct pollfd p{listen_fd.get(), POLLIN, 0};
      int pr = ::poll(&p, 1, 100);
      if (stop.load()) return;
      if (pr <= 0) continue;
      int cfd = ::accept(listen_fd.get(), nullptr, nullptr);
      if (cfd < 0) {
        if (stop.load()) return;
        continue;
      }
      int one = 1;
      ::setsockopt(cfd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
      std::lock_guard<std::mutex> lock(conn_mutex);
      conn_fds.emplace_back(cfd);
      conn_threads.emplace_back([this, cfd] { connection_loop(cfd); });
    }
  }

  // Applies shared bookkeeping; returns the frame when it is a data frame
  // the caller should hand out.
  std::optional<Frame> account(Frame frame) {
    if (!rank_count) {
      if (frame.rank_count == 0)
        fail(ErrorCode::ReplayRankCountConflict, "frame declares rank_count 0");
      rank_count = frame.rank_count;
    } else if (frame.rank_count != *rank_count) {
      fail(ErrorCode::ReplayRankCountConflict,
           "rank_count " + std::to_string(frame.rank_count) + " conflicts with " +
               std::to_string(*rank_count));
    }
    if (frame.rank >= *rank_count)
      fail(ErrorCode::ReplayRankCountConflict,
           "rank " + std::to_string(frame.rank) + " outside [0, " + std::to_string(*rank_count) +
               ")");
    switch (frame.kind) {
      case FrameKind::Handshake: return std::nullopt;
      case FrameKind::Eos:
        eos_ranks.insert(frame.rank);
        return std::nullopt;
      case FrameKind::Data: break;
    }
    auto it = last_step.find(frame.rank);
    if (it != last_step.end()) {
      if (frame.step == it->second)
        fail(ErrorCode::ReplayDuplicateStep, "rank " + std::to_string(frame.rank) +
                                                 " repeated step " + std::to_string(frame.step));
      if (frame.step < it->second)
        fail(ErrorCode::TransportStepOrder,
             "rank " + std::to_string(frame.rank) + " stepped backwards to " +
                 std::to_string(frame.step));
    }
    last_step[frame.rank] = frame.step;
    return frame;
  }

  bool all_eos() const { return rank_count && eos_ranks.size() == *rank_count; }

  bool scan_directory() {
    if (!fs::exists(endpoint.dir)) return false;
    std::vector<std::string> fresh;
    for (const auto& entry : fs::directory_iterator(endpoint.dir)) {
      if (!entry.is_regular_file()) continue;
      std::string name = entry.path().filename().string();
      if (name.size() < 5 || name.substr(name.size() - 5) != ".hxit") continue;
      if (consumed.count(name)) continue;
      fresh.push_back(name);
    }
    if (fresh.empty()) return false;

    std::vector<Frame> batch;
    for (const std::string& name : fresh) {
      fs::path path = fs::path(endpoint.dir) / name;
      std::ifstream in(path, std::ios::binary);
      if (!in) fail(ErrorCode::Io, "cannot read '" + path.string() + "'");
      std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                 std::istreambuf_iterator<char>());
      batch.push_back(decode_frame(bytes));
      consumed.insert(name);
    }
    // handshakes first, then data by (step, rank), end-of-stream last
    std::stable_sort(batch.begin(), batch.end(), [](const Frame& a, const Frame& b) {
      auto order = [](const Frame& f) {
        return f.kind == FrameKind::Handshake ? 0 : f.kind == FrameKind::Data ? 1 : 2;
      };
      if (order(a) != order(b)) return order(a) < order(b);
      if (a.step != b.step) return a.step < b.step;
      return a.rank < b.rank;
    });
    for (Frame& f : batch) file_pending.push_back(std::move(f));
    return true;
  }
};

TransportReader::TransportReader(const Endpoint& endpoint, const ReaderOptions& options)
    : impl_(std::make_unique<Impl>(endpoint, options)) {
  if (endpoint.kind == Endpoint::Kind::File) return;

  struct addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  hints.ai_flags = AI_PASSIVE;
  struct addrinfo* res = nullptr;
  const char* host = endpoint.host.empty() ? nullptr : endpoint.host.c_str();
  std::string port_str = std::to_string(endpoint.port);
  int rc = ::getaddrinfo(host, port_str.c_str(), &hints, &res);
  if (rc != 0)
    fail(ErrorCode::TransportConnect,
         "cannot resolve '" + endpoint.host + "': " + std::string(gai_strerror(rc)));
  UniqueFd fd(::socket(res->ai_family, res->ai_socktype, res->ai_protocol));
  if (!fd) {
    ::freeaddrinfo(res);
    fail(ErrorCode::TransportConnect, std::string("socket: ") + std::strerror(errno));
  }
  int one = 1;
  ::setsockopt(fd.get(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  if (::bind(fd.get(), res->ai_addr, res->ai_addrlen) != 0) {
    int err = errno;
    ::freeaddrinfo(res);
    fail(ErrorCode::TransportConnect,
         "cannot bind " + endpoint.describe() + ": " + std::strerror(err));
  }
  ::freeaddrinfo(res);
  if (::listen(fd.get(), 64) != 0)
    fail(ErrorCode::TransportConnect, std::string("listen: ") + std::strerror(errno));

  struct sockaddr_in addr{};
  socklen_t addr_len = sizeof(addr);
  if (::getsockname(fd.get(), reinterpret_cast<struct sockaddr*>(&addr), &addr_len) == 0)
    impl_->port = ntohs(addr.sin_port);

  impl_->listen_fd = std::move(fd);
  impl_->acceptor = std::thread([im = impl_.get()] { im->acceptor_loop(); });
}

TransportReader::~TransportReader() { close(); }

int TransportReader::bound_port() const { return impl_->port; }

void TransportReader::close() {
  if (impl_->closed.exchange(true)) return;
  impl_->stop.store(true);
  {
    std::lock_guard<std::mutex> lock(impl_->conn_mutex);
    for (UniqueFd& fd : impl_->conn_fds) ::shutdown(fd.get(), SHUT_RDWR);
  }
  if (impl_->acceptor.joinable()) impl_->acceptor.join();
  // the acceptor is down, so conn_threads can no longer grow
  std::vector<std::thread> threads;
  {
    std::lock_guard<std::mutex> lock(impl_->conn_mutex);
    threads.swap(impl_->conn_threads);
  }
  for (std::thread& t : threads)
    if (t.joinable()) t.join();
  {
    std::lock_guard<std::mutex> lock(impl_->conn_mutex);
    impl_->conn_fds.clear();
  }
  impl_->listen_fd.reset();
  impl_->cv.notify_all();
}

std::optional<Frame> TransportReader::next_frame() {
  Impl& im = *impl_;
  if (im.endpoint.kind == Endpoint::Kind::Socket) {
    std::unique_lock<std::mutex> lock(im.mu);
    for (;;) {
      while (!im.queue.empty()) {
        auto item = std::move(im.queue.front());
        im.queue.pop_front();
        if (auto* err = std::get_if<std::exception_ptr>(&item)) std::rethrow_exception(*err);
        if (auto frame = im.account(std::move(std::get<Frame>(item)))) return frame;
      }
      if (im.all_eos()) return std::nullopt;
      if (im.closed) fail(ErrorCode::TransportBroken, "reader closed while frames were pending");
      if (!im.cv.wait_for(lock, std::chrono::duration<double>(im.options.timeout_seconds),
                          [&] { return !im.queue.empty() || im.closed; }))
        fail(ErrorCode::TransportBroken, "timed out waiting for frames");
    }
  }

  // file mode polls the staging directory
  for (;;) {
    while (!im.file_pending.empty()) {
      Frame f = std::move(im.file_pending.front());
      im.file_pending.pop_front();
      if (auto frame = im.account(std::move(f))) return frame;
    }
    if (im.all_eos()) return std::nullopt;
    if (im.scan_directory()) {
      im.last_progress = Clock::now();
      continue;
    }
    if (std::chrono::duration<double>(Clock::now() - im.last_progress).count() >
        im.options.timeout_seconds)
      fail(ErrorCode::TransportBroken, "timed out waiting for staged frames");
    std::this_thread::sleep_for(std::chrono::milliseconds(10));
  }
}

// ---------------------------------------------------------------------------
// replay
// ---------------------------------------------------------------------------

ReplaySummary replay_loop(TransportReader& reader, const ReplaySink& sink) {
  ReplaySummary summary;
  std::map<uint64_t, std::map<uint32_t, std::vector<uint8_t>>> pending;
  uint32_t rank_count = 0;

  while (auto frame = reader.next_frame()) {
    rank_count = frame->rank_count;
    auto& parts = pending[frame->step];
    if (parts.count(frame->rank))
      fail(ErrorCode::ReplayDuplicateStep, "rank " + std::to_string(frame->rank) +
                                               " repeated step " + std::to_string(frame->step));
    summary.payload_bytes += frame->payload.size();
    ++summary.frames;
    parts.emplace(frame->rank, std::move(frame->payload));

    // flush complete steps from the front so steps reach the sink in order
    while (!pending.empty() && pending.begin()->second.size() == rank_count) {
      auto it = pending.begin();
      std::vector<DataNode> nodes;
      nodes.reserve(it->second.size());
      for (auto& [rank, payload] : it->second) nodes.push_back(deserialize_node(payload));
      sink(it->first, nodes);
      ++summary.steps;
      pending.erase(it);
    }
  }

  if (!pending.empty())
    fail(ErrorCode::ReplayIncompleteStep,
         "step " + std::to_string(pending.begin()->first) + " incomplete at end-of-stream");
  return summary;
}

} // namespace hxit
