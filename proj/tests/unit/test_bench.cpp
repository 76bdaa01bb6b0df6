#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "hxit/bench.hpp"
#include "hxit/error.hpp"

using namespace hxit;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& tag) {
  fs::path dir = fs::temp_directory_path() /
                 ("hxit_bench_" + tag + "_" + std::to_string(::getpid()));
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

TimingRecord rec(uint64_t step, uint32_t rank, double sim, double reduce, double transfer,
                 uint64_t bytes = 0, double render = 0.0) {
  TimingRecord r;
  r.step = step;
  r.rank = rank;
  r.sim_ms = sim;
  r.reduce_ms = reduce;
  r.transfer_ms = transfer;
  r.render_ms = render;
  r.bytes_sent = bytes;
  return r;
}

} // namespace

TEST_SUITE("bench") {

TEST_CASE("timings CSV round trips") {
  fs::path dir = fresh_dir("csv");
  std::string path = (dir / "timings.csv").string();
  std::vector<TimingRecord> records = {
      rec(0, 0, 1.5, 0.25, 3.125, 1024, 0.5),
      rec(0, 1, 2.0, 0.0, 0.0625, 17),
      rec(1, 0, 1.0e-3, 1234.5678, 0.1, 0),
  };
  write_timings_csv(path, records);

  std::ifstream in(path);
  std::string header;
  std::getline(in, header);
  CHECK(header == "step,rank,sim_ms,reduce_ms,transfer_ms,render_ms,bytes_sent");

  std::vector<TimingRecord> back = read_timings_csv(path);
  REQUIRE(back.size() == records.size());
  for (size_t i = 0; i < records.size(); ++i) {
    CHECK(back[i].step == records[i].step);
    CHECK(back[i].rank == records[i].rank);
    CHECK(back[i].sim_ms == records[i].sim_ms);
    CHECK(back[i].reduce_ms == records[i].reduce_ms);
    CHECK(back[i].transfer_ms == records[i].transfer_ms);
    CHECK(back[i].render_ms == records[i].render_ms);
    CHECK(back[i].bytes_sent == records[i].bytes_sent);
  }
}

TEST_CASE("reading a non-CSV file is Io") {
  fs::path dir = fresh_dir("badcsv");
  std::string path = (dir / "junk.csv").string();
  std::ofstream(path) << "not,a,timings,file\n";
  CHECK(code_of([&] { read_timings_csv(path); }) == ErrorCode::Io);
  CHECK(code_of([&] { read_timings_csv((dir / "absent.csv").string()); }) == ErrorCode::Io);

  std::string trunc = (dir / "trunc.csv").string();
  std::ofstream(trunc) << "step,rank,sim_ms,reduce_ms,transfer_ms,render_ms,bytes_sent\n"
                       << "0,0,1.0,2.0\n";
  CHECK(code_of([&] { read_timings_csv(trunc); }) == ErrorCode::Io);
}

TEST_CASE("aggregation follows the per-step critical path") {
  // step 0: rank 0 costs 5+1+2 = 8, rank 1 costs 3+0.5+1 = 4.5 -> rank 0
  // step 1: rank 0 costs 4+0+2 = 6, rank 1 costs 10+1+6 = 17   -> rank 1
  std::vector<TimingRecord> records = {
      rec(0, 0, 5, 1, 2, 100),
      rec(0, 1, 3, 0.5, 1, 50),
      rec(1, 0, 4, 0, 2, 100),
      rec(1, 1, 10, 1, 6, 200),
  };
  RunReport rep = aggregate_report("transit", 2, records, {}, "fp");
  CHECK(rep.steps == 2);
  CHECK(rep.ranks == 2);
  CHECK(rep.sim_ms == doctest::Approx(7.5));
  CHECK(rep.reduce_ms == doctest::Approx(1.0));
  CHECK(rep.transfer_ms == doctest::Approx(4.0));
  CHECK(rep.total_ms == doctest::Approx(12.5));
  CHECK(rep.bytes_per_step == doctest::Approx(225.0)); // (150 + 300) / 2
}

TEST_CASE("critical-path ties pick the lowest rank") {
  std::vector<TimingRecord> records = {
      rec(0, 1, 1, 2, 3), // cost 6, listed first on purpose
      rec(0, 0, 2, 2, 2), // cost 6
  };
  RunReport rep = aggregate_report("transit", 2, records, {}, "");
  CHECK(rep.sim_ms == doctest::Approx(2.0)); // rank 0's split, not rank 1's
}

TEST_CASE("render cost comes from receiver records when present") {
  std::vector<TimingRecord> records = {rec(0, 0, 1, 0, 0, 0, 4.0), rec(1, 0, 1, 0, 0, 0, 8.0)};
  RunReport inline_rep = aggregate_report("inline", 1, records, {}, "");
  CHECK(inline_rep.render_ms == doctest::Approx(6.0)); // per-step max, averaged

  std::vector<TimingRecord> render = {rec(0, 0, 0, 0, 0, 0, 10.0), rec(1, 0, 0, 0, 0, 0, 20.0)};
  RunReport recv_rep = aggregate_report("hybrid", 1, records, render, "");
  CHECK(recv_rep.render_ms == doctest::Approx(15.0));
  CHECK(recv_rep.total_ms == doctest::Approx(1.0)); // render stays outside the total
}

TEST_CASE("gain percent and formatting match the cost table conventions") {
  CHECK(format_gain(gain_percent(19275.0, 16161.0)) == "16.16");
  CHECK(format_gain(gain_percent(44497.0, 34632.0)) == "22.17");
  CHECK(format_gain(gain_percent(100.0, 100.0)) == "0.00");
  CHECK(gain_percent(200.0, 100.0) == doctest::Approx(50.0));
  CHECK(gain_percent(100.0, 200.0) == doctest::Approx(-100.0));
  CHECK(code_of([] { gain_percent(0.0, 1.0); }) == ErrorCode::ReportMismatch);

  CHECK(format_cost(3415.0) == "3415");
  CHECK(format_cost(16160.56) == "16161");
  CHECK(format_cost(100.0) == "100");
  CHECK(format_cost(99.96) == "100"); // still the three-digit branch
  CHECK(format_cost(48.7) == "48.7");
  CHECK(format_cost(6.56) == "6.56");
  CHECK(format_cost(0.0) == "0");
  CHECK(format_cost(319.0) == "319");
}

TEST_CASE("the cost table lines up rows and gains") {
  RunReport a;
  a.mode = "transit";
  a.sim_ms = 15860;
  a.reduce_ms = 0;
  a.transfer_ms = 3415;
  a.total_ms = 19275;
  RunReport b;
  b.mode = "hybrid";
  b.sim_ms = 15835;
  b.reduce_ms = 319;
  b.transfer_ms = 6.56;
  b.total_ms = 16160.56;

  std::string table = emit_table({a, b});
  CHECK(table.find("Simulation Time (ms)    15860 / 15835\n") != std::string::npos);
  CHECK(table.find("Reduction Time (ms)     0 / 319\n") != std::string::npos);
  CHECK(table.find("Data Transfer Time (ms) 3415 / 6.56\n") != std::string::npos);
  CHECK(table.find("Total Time (ms)         19275 / 16161\n") != std::string::npos);
  CHECK(table.find("Total Gain              - / 16.16%\n") != std::string::npos);

  CHECK(code_of([&] { emit_table({a}); }) == ErrorCode::ReportMismatch);
}

TEST_CASE("reports round trip through their key=value file") {
  fs::path dir = fresh_dir("report");
  std::string path = (dir / "report.txt").string();
  RunReport rep;
  rep.mode = "hybrid";
  rep.steps = 10;
  rep.ranks = 4;
  rep.sim_ms = 15835.25;
  rep.reduce_ms = 319;
  rep.transfer_ms = 6.5625;
  rep.total_ms = 16160.8125;
  rep.render_ms = 12.5;
  rep.bytes_per_step = 123456.0;
  rep.fingerprint = "pipeline.stage.0.kind=slice;sim.n=220;sim.steps=10";
  write_report(path, rep);
  RunReport back = read_report(path);
  CHECK(back.mode == rep.mode);
  CHECK(back.steps == rep.steps);
  CHECK(back.ranks == rep.ranks);
  CHECK(back.sim_ms == rep.sim_ms);
  CHECK(back.reduce_ms == rep.reduce_ms);
  CHECK(back.transfer_ms == rep.transfer_ms);
  CHECK(back.total_ms == rep.total_ms);
  CHECK(back.render_ms == rep.render_ms);
  CHECK(back.bytes_per_step == rep.bytes_per_step);
  CHECK(back.fingerprint == rep.fingerprint);
}

TEST_CASE("fingerprints cover sim and pipeline keys only, order-insensitive") {
  Config a;
  a.set("sim.steps", "10");
  a.set("sim.n", "220");
  a.set("pipeline.stage.0.kind", "slice");
  a.set("gateway.backend", "hybrid");
  a.set("render.recipe.0.kind", "slice");

  Config b;
  b.set("pipeline.stage.0.kind", "slice");
  b.set("sim.n", "220");
  b.set("sim.steps", "10");
  b.set("gateway.backend", "transit"); // differs, but not fingerprinted

  CHECK(config_fingerprint(a) == config_fingerprint(b));
  CHECK(config_fingerprint(a) == "pipeline.stage.0.kind=slice;sim.n=220;sim.steps=10");
}

TEST_CASE("runs compare only when their fingerprints agree") {
  RunReport a, b;
  a.total_ms = 200;
  b.total_ms = 100;
  a.fingerprint = b.fingerprint = "sim.n=8";
  CHECK(compare_runs(a, b) == doctest::Approx(50.0));
  b.fingerprint = "sim.n=16";
  CHECK(code_of([&] { compare_runs(a, b); }) == ErrorCode::ReportMismatch);
}

TEST_CASE("an inline experiment produces per-rank records and no traffic") {
  fs::path out = fresh_dir("exp_inline");
  Config cfg;
  cfg.set("sim.n", "6");
  cfg.set("sim.steps", "3");
  cfg.set("sim.partitions", "2");
  cfg.set("gateway.backend", "inline");

  ExperimentOutcome outcome = run_experiment(cfg, out.string());
  CHECK(outcome.report.mode == "inline");
  CHECK(outcome.report.steps == 3);
  CHECK(outcome.report.ranks == 2);
  REQUIRE(outcome.records.size() == 6);
  for (size_t i = 0; i < outcome.records.size(); ++i) {
    const TimingRecord& r = outcome.records[i];
    CHECK(r.step == i / 2);
    CHECK(r.rank == i % 2);
    CHECK(r.bytes_sent == 0);
    CHECK(r.transfer_ms == 0.0);
  }
  CHECK(fs::exists(outcome.timings_path));
  CHECK(fs::exists(outcome.report_path));
  std::vector<TimingRecord> csv = read_timings_csv(outcome.timings_path);
  CHECK(csv.size() == 6);
  RunReport reread = read_report(outcome.report_path);
  CHECK(reread.fingerprint == outcome.report.fingerprint);
}

TEST_CASE("a transit experiment with an in-process receiver renders per step") {
  fs::path out = fresh_dir("exp_transit");
  Config cfg;
  cfg.set("sim.n", "6");
  cfg.set("sim.steps", "2");
  cfg.set("sim.partitions", "2");
  cfg.set("gateway.backend", "transit");
  cfg.set("gateway.endpoint", "127.0.0.1:0");
  cfg.set("harness.receiver", "inproc");
  cfg.set("render.recipe.0.kind", "volume");
  cfg.set("render.recipe.0.field", "energy");
  cfg.set("render.recipe.0.name", "vol");
  cfg.set("render.recipe.0.width", "24");
  cfg.set("render.recipe.0.height", "24");

  ExperimentOutcome outcome = run_experiment(cfg, out.string());
  CHECK(outcome.report.mode == "transit");
  REQUIRE(outcome.records.size() == 4);
  for (const TimingRecord& r : outcome.records) {
    CHECK(r.reduce_ms == 0.0);
    CHECK(r.bytes_sent > 0);
  }
  CHECK(outcome.render_records.size() == 2);
  CHECK(fs::exists(out / "step0_vol.ppm"));
  CHECK(fs::exists(out / "step1_vol.ppm"));
  CHECK(fs::exists(out / "render_timings.csv"));
}

TEST_CASE("a modeled hybrid experiment records the configured costs") {
  fs::path out = fresh_dir("exp_modeled");
  Config cfg;
  cfg.set("sim.n", "6");
  cfg.set("sim.steps", "2");
  cfg.set("sim.partitions", "1");
  cfg.set("gateway.backend", "hybrid");
  cfg.set("gateway.endpoint", "127.0.0.1:0");
  cfg.set("harness.receiver", "inproc");
  cfg.set("pipeline.stage.0.kind", "slice");
  cfg.set("pipeline.stage.0.axis", "z");
  cfg.set("pipeline.stage.0.coordinate", "0.5");
  cfg.set("clock.mode", "modeled");
  cfg.set("clock.sim_ms", "1586");
  cfg.set("clock.reduce_ms", "31.9");
  cfg.set("clock.transfer_ms", "0.656");

  ExperimentOutcome outcome = run_experiment(cfg, out.string());
  CHECK(outcome.report.sim_ms == doctest::Approx(1586.0));
  CHECK(outcome.report.reduce_ms == doctest::Approx(31.9));
  CHECK(outcome.report.transfer_ms == doctest::Approx(0.656));
  CHECK(outcome.report.total_ms == doctest::Approx(1586.0 + 31.9 + 0.656));
}

TEST_CASE("an unknown receiver mode is rejected") {
  fs::path out = fresh_dir("exp_badrecv");
  Config cfg;
  cfg.set("sim.n", "4");
  cfg.set("sim.steps", "1");
  cfg.set("gateway.backend", "transit");
  cfg.set("gateway.endpoint", "127.0.0.1:0");
  cfg.set("harness.receiver", "rpc");
  CHECK(code_of([&] { run_experiment(cfg, out.string()); }) == ErrorCode::ConfigInvalid);
}

} // TEST_SUITE
