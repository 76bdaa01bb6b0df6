#include "hxit/gateway.hpp"

#include <chrono>
#include <filesystem>

#include "hxit/error.hpp"
#include "hxit/mesh.hpp"
#include "hxit/transport.hpp"

namespace hxit {

namespace fs = std::filesystem;

namespace {

double elapsed_ms(std::chrono::steady_clock::time_point since) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - since)
      .count();
}

} // namespace

const char* backend_name(Backend b) {
  switch (b) {
    case Backend::Inline: return "inline";
    case Backend::Transit: return "transit";
    case Backend::Hybrid: return "hybrid";
  }
  return "?";
}

Backend backend_from_string(const std::string& s) {
  if (s == "inline") return Backend::Inline;
  if (s == "transit") return Backend::Transit;
  if (s == "hybrid") return Backend::Hybrid;
  fail(ErrorCode::ConfigInvalid, "unknown backend '" + s + "' (want inline, transit or hybrid)");
}

ClockSpec ClockSpec::from_config(const Config& cfg) {
  ClockSpec clock;
  std::string mode = cfg.get_string("clock.mode", "wall");
  if (mode == "wall") return clock;
  if (mode != "modeled")
    fail(ErrorCode::ConfigInvalid, "clock.mode must be wall or modeled, not '" + mode + "'");
  clock.modeled = true;
  clock.sim_ms = cfg.get_double("clock.sim_ms", 0.0);
  if (cfg.has("clock.reduce_ms")) clock.reduce_ms = cfg.require_double("clock.reduce_ms");
  if (cfg.has("clock.bandwidth")) {
    clock.bandwidth = cfg.require_double("clock.bandwidth");
    if (!(*clock.bandwidth > 0.0))
      fail(ErrorCode::ConfigInvalid, "clock.bandwidth must be positive");
  }
  if (cfg.has("clock.transfer_ms")) clock.transfer_ms = cfg.require_double("clock.transfer_ms");
  return clock;
}

double ClockSpec::model_transfer_ms(uint64_t bytes) const {
  if (transfer_ms) return *transfer_ms;
  if (bandwidth) return 1000.0 * static_cast<double>(bytes) / *bandwidth;
  fail(ErrorCode::ConfigInvalid,
       "modeled clock needs clock.transfer_ms or clock.bandwidth to cost a transfer");
}

GatewayConfig GatewayConfig::from_config(const Config& cfg) {
  GatewayConfig gc;
  gc.backend = backend_from_string(cfg.require_string("gateway.backend"));
  gc.pipeline = PipelineSpec::from_config(cfg);
  gc.endpoint = cfg.get_string("gateway.endpoint", "");
  gc.bandwidth = cfg.get_double("gateway.bandwidth", 0.0);
  gc.timeout_seconds = cfg.get_double("gateway.timeout", 10.0);
  gc.output_dir = cfg.get_string("gateway.output", ".");
  gc.recipes = RenderRecipe::list_from_config(cfg);
  gc.clock = ClockSpec::from_config(cfg);

  switch (gc.backend) {
    case Backend::Inline:
      if (!gc.endpoint.empty())
        gc.warnings.push_back("gateway.endpoint is unused by the inline backend");
      break;
    case Backend::Transit:
      if (!gc.pipeline.empty())
        gc.warnings.push_back("pipeline stages are ignored by the transit backend");
      if (gc.endpoint.empty())
        fail(ErrorCode::ConfigInvalid, "the transit backend needs gateway.endpoint");
      break;
    case Backend::Hybrid:
      if (gc.pipeline.empty())
        fail(ErrorCode::ConfigInvalid, "the hybrid backend needs at least one pipeline stage");
      if (gc.endpoint.empty())
        fail(ErrorCode::ConfigInvalid, "the hybrid backend needs gateway.endpoint");
      break;
  }
  return gc;
}

Gateway::Gateway(const GatewayConfig& config) : config_(config) {
  if (config_.backend != Backend::Inline) {
    WriterOptions opts;
    opts.rank = config_.rank;
    opts.rank_count = config_.rank_count;
    opts.bytes_per_second = config_.bandwidth;
    opts.timeout_seconds = config_.timeout_seconds;
    opts.shared_bucket = config_.shared_bucket;
    writer_ = std::make_unique<TransportWriter>(Endpoint::parse(config_.endpoint), opts);
  } else if (!config_.recipes.empty()) {
    std::error_code ec;
    fs::create_directories(config_.output_dir, ec);
    if (ec)
      fail(ErrorCode::Io, "cannot create '" + config_.output_dir + "': " + ec.message());
  }
}

Gateway::~Gateway() {
  try {
    finalize();
  } catch (...) {
    // destructor stays silent; explicit finalize() reports
  }
}

ExecuteResult Gateway::execute(int64_t timestep, double time, const DataNode& channels) {
  if (finalized_) fail(ErrorCode::GatewayFinalized, "execute after finalize");
  if (timestep < 0)
    fail(ErrorCode::GatewayTimestepOrder, "timestep must be non-negative");
  if (have_last_ && timestep <= last_timestep_)
    fail(ErrorCode::GatewayTimestepOrder, "timestep " + std::to_string(timestep) +
                                              " does not follow " +
                                              std::to_string(last_timestep_));
  if (channels.kind() != NodeKind::Object || channels.child_count() == 0)
    fail(ErrorCode::GatewayState, "execute needs at least one channel");
  for (size_t i = 0; i < channels.child_count(); ++i) validate_mesh(channels.child_at(i));

  ExecuteResult result;
  const ClockSpec& clock = config_.clock;

  DataNode payload;
  payload.set("state/timestep", DataNode::int64(timestep));
  payload.set("state/time", DataNode::float64(time));

  if (config_.backend == Backend::Transit) {
    // no in-line reduction; serialization is part of the transfer cost
    auto t0 = std::chrono::steady_clock::now();
    payload.child("channels") = channels;
    result.bytes_sent = writer_->send_node(static_cast<uint64_t>(timestep), payload);
    result.transfer_ms = clock.modeled ? clock.model_transfer_ms(result.bytes_sent)
                                       : elapsed_ms(t0);
    result.reduce_ms = 0.0;
  } else {
    auto t0 = std::chrono::steady_clock::now();
    DataNode processed;
    if (config_.pipeline.empty()) {
      processed = channels;
    } else {
      for (size_t i = 0; i < channels.child_count(); ++i) {
        ReducedOutput reduced = run_pipeline(config_.pipeline, channels.child_at(i));
        result.provenance.input_cells += reduced.provenance.input_cells;
        result.provenance.output_cells += reduced.provenance.output_cells;
        result.provenance.skipped_cells += reduced.provenance.skipped_cells;
        result.provenance.out_of_domain += reduced.provenance.out_of_domain;
        result.provenance.newton_fallbacks += reduced.provenance.newton_fallbacks;
        processed.child(channels.child_name(i)) = std::move(reduced.channel);
      }
    }
    double wall_reduce = elapsed_ms(t0);
    result.reduce_ms = clock.modeled ? clock.reduce_ms.value_or(wall_reduce) : wall_reduce;

    if (config_.backend == Backend::Hybrid) {
      auto t1 = std::chrono::steady_clock::now();
      payload.child("channels") = std::move(processed);
      result.bytes_sent = writer_->send_node(static_cast<uint64_t>(timestep), payload);
      result.transfer_ms = clock.modeled ? clock.model_transfer_ms(result.bytes_sent)
                                         : elapsed_ms(t1);
    } else {
      auto t1 = std::chrono::steady_clock::now();
      for (const RenderRecipe& recipe : config_.recipes) {
        const DataNode* channel = &processed.child_at(0);
        ImageBuffer image = render(*channel, recipe);
        std::string name = config_.rank_count > 1
                               ? "step" + std::to_string(timestep) + "_rank" +
                                     std::to_string(config_.rank) + "_" + recipe.name + ".ppm"
                               : image_filename(static_cast<uint64_t>(timestep), recipe.name);
        std::string path = (fs::path(config_.output_dir) / name).string();
        write_image(path, image);
        result.images.push_back(path);
      }
      result.render_ms = elapsed_ms(t1);
    }
  }

  have_last_ = true;
  last_timestep_ = timestep;
  return result;
}

void Gateway::finalize() {
  if (finalized_) return;
  finalized_ = true;
  if (writer_) writer_->close();
}

} // namespace hxit
