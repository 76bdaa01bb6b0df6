#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "hxit/config.hpp"
#include "hxit/node.hpp"
#include "hxit/reduce.hpp"
#include "hxit/render.hpp"

namespace hxit {

class TokenBucket;

enum class Backend { Inline, Transit, Hybrid };

const char* backend_name(Backend b);
Backend backend_from_string(const std::string& s);

/// Timing model for benchmark runs. In wall mode timings are measured; in
/// modeled mode the recorded step costs come from these constants instead
/// (transfer falls back to 1000 * bytes / bandwidth when no transfer_ms
/// constant is given).
struct ClockSpec {
  bool modeled = false;
  double sim_ms = 0.0;
  std::optional<double> reduce_ms;
  std::optional<double> bandwidth;   // bytes per second
  std::optional<double> transfer_ms; // direct override

  static ClockSpec from_config(const Config& cfg);
  double model_transfer_ms(uint64_t bytes) const;
};

struct GatewayConfig {
  Backend backend = Backend::Hybrid;
  PipelineSpec pipeline;
  std::string endpoint;          // transit and hybrid destinations
  double bandwidth = 0.0;        // writer throttle, bytes per second, 0 = off
  double timeout_seconds = 10.0;
  uint32_t rank = 0;
  uint32_t rank_count = 1;
  std::string output_dir;        // inline renderings land here
  std::vector<RenderRecipe> recipes;
  ClockSpec clock;
  std::vector<std::string> warnings;
  std::shared_ptr<TokenBucket> shared_bucket; // one pipe for all ranks

  /// Reads gateway.*, pipeline.*, render.* and clock.* keys. Inconsistent
  /// combinations that have a sensible reading produce warnings (transit
  /// with a pipeline, inline with an endpoint); a hybrid backend without a
  /// pipeline is ConfigInvalid, as is a missing endpoint for the sending
  /// backends.
  static GatewayConfig from_config(const Config& cfg);
};

struct ExecuteResult {
  double reduce_ms = 0.0;
  double transfer_ms = 0.0; // includes payload serialization
  double render_ms = 0.0;   // inline backend only
  uint64_t bytes_sent = 0;
  Provenance provenance;
  std::vector<std::string> images; // files written by inline rendering
};

/// Simulation-facing adaptor. Construction opens the transport for the
/// sending backends (connect plus handshake); execute() takes one step's
/// channels and either renders them in place (inline), forwards them whole
/// (transit), or reduces then forwards (hybrid); finalize() ends the stream.
///
/// The payload sent per step is an object node
///   state/   timestep:int64, time:float64
///   channels/<name>/...
///
/// A failed execute leaves the gateway usable for the next step. Timesteps
/// must be strictly increasing (GatewayTimestepOrder); calls after
/// finalize() are GatewayFinalized.
class Gateway {
public:
  explicit Gateway(const GatewayConfig& config);
  ~Gateway();

  Gateway(const Gateway&) = delete;
  Gateway& operator=(const Gateway&) = delete;

  const GatewayConfig& config() const { return config_; }

  ExecuteResult execute(int64_t timestep, double time, const DataNode& channels);

  /// Idempotent; sends end-of-stream on the sending backends.
  void finalize();

private:
  GatewayConfig config_;
  std::unique_ptr<class TransportWriter> writer_;
  bool finalized_ = false;
  bool have_last_ = false;
  int64_t last_timestep_ = 0;
};

} // namespace hxit
