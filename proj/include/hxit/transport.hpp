#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hxit/node.hpp"

namespace hxit {

// Wire framing
// ------------
//   magic       4 bytes  "HXIT"
//   version     u8       1
//   frame_kind  u8       0 = data, 1 = end-of-stream, 2 = handshake
//   step        u64 LE
//   rank        u32 LE
//   rank_count  u32 LE
//   payload_len u64 LE
//   payload     payload_len bytes (serialized node for data frames)

enum class FrameKind : uint8_t { Data = 0, Eos = 1, Handshake = 2 };

struct Frame {
  FrameKind kind = FrameKind::Data;
  uint64_t step = 0;
  uint32_t rank = 0;
  uint32_t rank_count = 1;
  std::vector<uint8_t> payload;
};

inline constexpr size_t kFrameHeaderSize = 30;

std::vector<uint8_t> encode_frame(const Frame& frame);

/// Decodes one complete frame; the buffer must contain exactly one frame.
/// Errors: ProtocolBadMagic, ProtocolBadVersion (also unknown frame kinds),
/// ProtocolTruncated (short buffer, length mismatch, implausible length).
Frame decode_frame(std::span<const uint8_t> bytes);

/// Transport endpoint, either "host:port" (TCP) or "file://<directory>"
/// (staging files "step<step>_rank<rank>.hxit" plus "eos_rank<rank>.hxit"
/// and "handshake_rank<rank>.hxit", each written whole via temp file and
/// atomic rename).
struct Endpoint {
  enum class Kind { Socket, File };
  Kind kind = Kind::Socket;
  std::string host;
  int port = 0; // 0 asks the reader for an ephemeral port
  std::string dir;

  static Endpoint parse(const std::string& spec);
  std::string describe() const;
};

/// Write pacer. The bucket starts empty and holds at most one 64 KiB chunk,
/// so B bytes acquired in chunks take at least B / rate seconds. Thread-safe;
/// writers sharing one bucket model ranks contending for one link.
class TokenBucket {
public:
  explicit TokenBucket(double bytes_per_second);
  void acquire(size_t bytes);

private:
  double rate_;
  double available_ = 0.0;
  bool primed_ = false;
  std::chrono::steady_clock::time_point last_{};
  std::mutex mu_;
};

struct WriterOptions {
  uint32_t rank = 0;
  uint32_t rank_count = 1;
  double bytes_per_second = 0.0; // 0 = unthrottled
  double timeout_seconds = 10.0; // connect retries and handshake ack
  std::shared_ptr<TokenBucket> shared_bucket; // overrides bytes_per_second
};

/// Sends framed payloads to one endpoint. Socket mode performs a handshake
/// (handshake frame out, 4-byte "HXIT" ack back) before the first data
/// frame; file mode writes handshake.hxit and awaits nothing. Writes are
/// paced by a token bucket in 64 KiB chunks so a frame of B bytes takes at
/// least B / bytes_per_second seconds on the wire.
class TransportWriter {
public:
  TransportWriter(const Endpoint& endpoint, const WriterOptions& options);
  ~TransportWriter();

  TransportWriter(const TransportWriter&) = delete;
  TransportWriter& operator=(const TransportWriter&) = delete;

  /// Sends one data frame; steps must be strictly increasing
  /// (TransportStepOrder). Returns the frame size on the wire in bytes.
  uint64_t send(uint64_t step, std::span<const uint8_t> payload);
  uint64_t send_node(uint64_t step, const DataNode& payload);

  /// Sends the end-of-stream frame and releases the endpoint. Idempotent;
  /// the destructor calls it best-effort.
  void close();

private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

struct ReaderOptions {
  double timeout_seconds = 10.0; // inactivity limit while expecting frames
};

/// Receives frames from any number of writer ranks. Handshakes are answered,
/// per-rank step monotonicity is enforced (ReplayDuplicateStep on repeats,
/// TransportStepOrder on regressions), and disagreeing rank_count values
/// raise ReplayRankCountConflict. Decode errors on a connection surface from
/// next_frame.
class TransportReader {
public:
  TransportReader(const Endpoint& endpoint, const ReaderOptions& options = {});
  ~TransportReader();

  TransportReader(const TransportReader&) = delete;
  TransportReader& operator=(const TransportReader&) = delete;

  /// Port actually bound (socket mode; resolves an ephemeral request).
  int bound_port() const;

  /// Next data frame in arrival order. Returns nullopt once the end-of-stream
  /// frame of every rank in [0, rank_count) has arrived.
  std::optional<Frame> next_frame();

  void close();

private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

struct ReplaySummary {
  uint64_t steps = 0;
  uint64_t frames = 0;
  uint64_t payload_bytes = 0;
};

/// Called once per completed step with the decoded payload of every rank,
/// in rank order.
using ReplaySink = std::function<void(uint64_t step, const std::vector<DataNode>& parts)>;

/// Groups incoming frames by step and flushes complete steps in increasing
/// step order. A step left incomplete at end-of-stream is
/// ReplayIncompleteStep.
ReplaySummary replay_loop(TransportReader& reader, const ReplaySink& sink);

} // namespace hxit
