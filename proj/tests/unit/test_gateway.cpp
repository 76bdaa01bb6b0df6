#include <doctest.h>

#include <filesystem>
#include <thread>

#include "hxit/error.hpp"
#include "hxit/gateway.hpp"
#include "hxit/minisim.hpp"
#include "hxit/transport.hpp"

using namespace hxit;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& tag) {
  fs::path dir = fs::temp_directory_path() /
                 ("hxit_gateway_" + tag + "_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

ErrorCode code_of(auto fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.code();
  }
  return ErrorCode::Structural;
}

Config base_config(const std::string& backend) {
  Config cfg;
  cfg.set("gateway.backend", backend);
  return cfg;
}

DataNode small_channels(double t = 0.5) {
  SimConfig sim;
  sim.n = 4;
  DataNode channels;
  channels.child("mesh") = generate_step(sim, 0, t);
  return channels;
}

} // namespace

TEST_SUITE("gateway") {

TEST_CASE("backend names round trip") {
  CHECK(backend_from_string("inline") == Backend::Inline);
  CHECK(backend_from_string("transit") == Backend::Transit);
  CHECK(backend_from_string("hybrid") == Backend::Hybrid);
  CHECK(std::string(backend_name(Backend::Transit)) == "transit");
  CHECK(code_of([] { backend_from_string("insitu"); }) == ErrorCode::ConfigInvalid);
}

TEST_CASE("config validation per backend") {
  Config missing;
  CHECK(code_of([&] { GatewayConfig::from_config(missing); }) == ErrorCode::ConfigInvalid);

  Config inl = base_config("inline");
  inl.set("gateway.endpoint", "127.0.0.1:9");
  GatewayConfig gi = GatewayConfig::from_config(inl);
  REQUIRE(gi.warnings.size() == 1);
  CHECK(gi.warnings[0] == "gateway.endpoint is unused by the inline backend");
  CHECK(gi.bandwidth == 0.0);
  CHECK(gi.timeout_seconds == 10.0);
  CHECK(gi.output_dir == ".");

  Config tr = base_config("transit");
  tr.set("gateway.endpoint", "127.0.0.1:9");
  tr.set("pipeline.stage.0.kind", "select_fields");
  tr.set("pipeline.stage.0.fields", "energy");
  GatewayConfig gt = GatewayConfig::from_config(tr);
  REQUIRE(gt.warnings.size() == 1);
  CHECK(gt.warnings[0] == "pipeline stages are ignored by the transit backend");

  Config tr_no_ep = base_config("transit");
  CHECK(code_of([&] { GatewayConfig::from_config(tr_no_ep); }) == ErrorCode::ConfigInvalid);

  Config hy_no_pipe = base_config("hybrid");
  hy_no_pipe.set("gateway.endpoint", "127.0.0.1:9");
  CHECK(code_of([&] { GatewayConfig::from_config(hy_no_pipe); }) == ErrorCode::ConfigInvalid);

  Config hy_no_ep = base_config("hybrid");
  hy_no_ep.set("pipeline.stage.0.kind", "select_fields");
  hy_no_ep.set("pipeline.stage.0.fields", "energy");
  CHECK(code_of([&] { GatewayConfig::from_config(hy_no_ep); }) == ErrorCode::ConfigInvalid);
}

TEST_CASE("clock spec reads wall and modeled modes") {
  Config wall;
  CHECK_FALSE(ClockSpec::from_config(wall).modeled);

  Config bad;
  bad.set("clock.mode", "simulated");
  CHECK(code_of([&] { ClockSpec::from_config(bad); }) == ErrorCode::ConfigInvalid);

  Config modeled;
  modeled.set("clock.mode", "modeled");
  modeled.set("clock.sim_ms", "15860");
  modeled.set("clock.reduce_ms", "319");
  modeled.set("clock.bandwidth", "1e9");
  ClockSpec spec = ClockSpec::from_config(modeled);
  CHECK(spec.modeled);
  CHECK(spec.sim_ms == 15860.0);
  CHECK(spec.reduce_ms.value() == 319.0);
  CHECK(spec.model_transfer_ms(500000000) == doctest::Approx(500.0));

  modeled.set("clock.transfer_ms", "6.56");
  ClockSpec with_override = ClockSpec::from_config(modeled);
  CHECK(with_override.model_transfer_ms(12345) == 6.56); // override beats bandwidth

  Config no_cost;
  no_cost.set("clock.mode", "modeled");
  ClockSpec bare = ClockSpec::from_config(no_cost);
  CHECK(code_of([&] { bare.model_transfer_ms(1); }) == ErrorCode::ConfigInvalid);

  Config neg_bw;
  neg_bw.set("clock.mode", "modeled");
  neg_bw.set("clock.bandwidth", "-5");
  CHECK(code_of([&] { ClockSpec::from_config(neg_bw); }) == ErrorCode::ConfigInvalid);
}

TEST_CASE("inline backend renders to the output directory") {
  fs::path out = fresh_dir("inline");
  Config cfg = base_config("inline");
  cfg.set("gateway.output", out.string());
  cfg.set("render.recipe.0.kind", "volume");
  cfg.set("render.recipe.0.field", "energy");
  cfg.set("render.recipe.0.name", "blast");
  cfg.set("render.recipe.0.width", "32");
  cfg.set("render.recipe.0.height", "32");

  Gateway gate(GatewayConfig::from_config(cfg));
  ExecuteResult r = gate.execute(0, 0.5, small_channels());
  CHECK(r.bytes_sent == 0);
  CHECK(r.transfer_ms == 0.0);
  CHECK(r.render_ms >= 0.0);
  REQUIRE(r.images.size() == 1);
  CHECK(fs::path(r.images[0]).filename() == "step0_blast.ppm");
  CHECK(fs::exists(r.images[0]));
  gate.finalize();
}

TEST_CASE("inline backend qualifies image names by rank when parallel") {
  fs::path out = fresh_dir("inline_ranked");
  Config cfg = base_config("inline");
  cfg.set("gateway.output", out.string());
  cfg.set("render.recipe.0.kind", "volume");
  cfg.set("render.recipe.0.field", "energy");
  cfg.set("render.recipe.0.width", "16");
  cfg.set("render.recipe.0.height", "16");

  GatewayConfig gc = GatewayConfig::from_config(cfg);
  gc.rank = 1;
  gc.rank_count = 2;
  SimConfig sim;
  sim.n = 4;
  sim.partitions = 2;
  DataNode channels;
  channels.child("mesh") = generate_step(sim, 1, 0.5);

  Gateway gate(gc);
  ExecuteResult r = gate.execute(0, 0.5, channels);
  REQUIRE(r.images.size() == 1);
  CHECK(fs::path(r.images[0]).filename() == "step0_rank1_volume0.ppm");
}

TEST_CASE("inline backend without recipes still advances") {
  Config cfg = base_config("inline");
  Gateway gate(GatewayConfig::from_config(cfg));
  ExecuteResult r = gate.execute(0, 0.1, small_channels());
  CHECK(r.images.empty());
  CHECK(r.render_ms >= 0.0);
}

TEST_CASE("inline backend applies a pipeline before rendering") {
  Config cfg = base_config("inline");
  cfg.set("pipeline.stage.0.kind", "slice");
  cfg.set("pipeline.stage.0.axis", "z");
  cfg.set("pipeline.stage.0.coordinate", "0.5");
  Gateway gate(GatewayConfig::from_config(cfg));
  ExecuteResult r = gate.execute(0, 0.5, small_channels());
  CHECK(r.provenance.input_cells == 64);
  CHECK(r.provenance.output_cells == 16);
  CHECK(r.reduce_ms >= 0.0);
}

TEST_CASE("timesteps must strictly increase and errors keep the gateway usable") {
  Config cfg = base_config("inline");
  Gateway gate(GatewayConfig::from_config(cfg));
  DataNode channels = small_channels();
  gate.execute(3, 0.3, channels);
  CHECK(code_of([&] { gate.execute(3, 0.3, channels); }) == ErrorCode::GatewayTimestepOrder);
  CHECK(code_of([&] { gate.execute(2, 0.2, channels); }) == ErrorCode::GatewayTimestepOrder);
  CHECK(code_of([&] { gate.execute(-1, 0.0, channels); }) == ErrorCode::GatewayTimestepOrder);
  gate.execute(4, 0.4, channels); // still usable after the rejections

  DataNode empty_channels;
  CHECK(code_of([&] { gate.execute(5, 0.5, empty_channels); }) == ErrorCode::GatewayState);

  gate.finalize();
  gate.finalize(); // idempotent
  CHECK(code_of([&] { gate.execute(6, 0.6, channels); }) == ErrorCode::GatewayFinalized);
}

TEST_CASE("transit forwards whole meshes, hybrid sends the reduction") {
  // One reader per run: a reader tracks per-rank step progress for its
  // lifetime, so a second rank-0 stream would read as a replayed step.
  TransportReader transit_reader(Endpoint::parse("127.0.0.1:0"));
  TransportReader hybrid_reader(Endpoint::parse("127.0.0.1:0"));

  Config tr = base_config("transit");
  tr.set("gateway.endpoint", "127.0.0.1:" + std::to_string(transit_reader.bound_port()));
  Gateway transit(GatewayConfig::from_config(tr));
  ExecuteResult rt = transit.execute(0, 0.5, small_channels());
  transit.finalize();

  Config hy = base_config("hybrid");
  hy.set("gateway.endpoint", "127.0.0.1:" + std::to_string(hybrid_reader.bound_port()));
  hy.set("pipeline.stage.0.kind", "select_fields");
  hy.set("pipeline.stage.0.fields", "energy");
  hy.set("pipeline.stage.1.kind", "slice");
  hy.set("pipeline.stage.1.axis", "z");
  hy.set("pipeline.stage.1.coordinate", "0.5");
  Gateway hybrid(GatewayConfig::from_config(hy));
  ExecuteResult rh = hybrid.execute(0, 0.5, small_channels());
  hybrid.finalize();

  CHECK(rt.reduce_ms == 0.0); // transit does no reduction work
  CHECK(rt.bytes_sent > 0);
  CHECK(rh.bytes_sent > 0);
  CHECK(rh.bytes_sent * 4 < rt.bytes_sent); // slice sheds a dimension
  CHECK(rh.provenance.input_cells == 64);
  CHECK(rh.provenance.output_cells == 16);

  // payloads carry state plus channels
  size_t data_frames = 0;
  for (TransportReader* reader : {&transit_reader, &hybrid_reader}) {
    while (auto f = reader->next_frame()) {
      DataNode payload = deserialize_node(f->payload);
      CHECK(payload.find("state/timestep")->as_int64() == 0);
      CHECK(payload.find("state/time")->as_float64() == 0.5);
      REQUIRE(payload.find("channels/mesh") != nullptr);
      ++data_frames;
    }
  }
  CHECK(data_frames == 2);
}

TEST_CASE("modeled clock replaces measured costs") {
  TransportReader reader(Endpoint::parse("127.0.0.1:0"));
  Config cfg = base_config("hybrid");
  cfg.set("gateway.endpoint", "127.0.0.1:" + std::to_string(reader.bound_port()));
  cfg.set("pipeline.stage.0.kind", "select_fields");
  cfg.set("pipeline.stage.0.fields", "energy");
  cfg.set("clock.mode", "modeled");
  cfg.set("clock.reduce_ms", "319");
  cfg.set("clock.bandwidth", "1e6");

  Gateway gate(GatewayConfig::from_config(cfg));
  ExecuteResult r = gate.execute(0, 0.5, small_channels());
  gate.finalize();
  CHECK(r.reduce_ms == 319.0);
  CHECK(r.transfer_ms ==
        doctest::Approx(1000.0 * static_cast<double>(r.bytes_sent) / 1.0e6));
  while (reader.next_frame()) {
  }
}

TEST_CASE("a gateway validates channels as meshes") {
  Config cfg = base_config("inline");
  Gateway gate(GatewayConfig::from_config(cfg));
  DataNode channels;
  channels.child("mesh") = DataNode::int64(7);
  CHECK(code_of([&] { gate.execute(0, 0.1, channels); }) == ErrorCode::MeshMissingCoordset);
}

} // TEST_SUITE
