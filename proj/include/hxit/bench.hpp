#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hxit/config.hpp"
#include "hxit/gateway.hpp"
#include "hxit/render.hpp"
#include "hxit/transport.hpp"

namespace hxit {

struct TimingRecord {
  uint64_t step = 0;
  uint32_t rank = 0;
  double sim_ms = 0.0;
  double reduce_ms = 0.0;
  double transfer_ms = 0.0;
  double render_ms = 0.0;
  uint64_t bytes_sent = 0;
};

/// Columns: step,rank,sim_ms,reduce_ms,transfer_ms,render_ms,bytes_sent
void write_timings_csv(const std::string& path, const std::vector<TimingRecord>& records);
std::vector<TimingRecord> read_timings_csv(const std::string& path);

/// Per-run aggregate. Component costs are critical-path means: per step the
/// rank maximizing sim+reduce+transfer is picked and its components
/// accumulated, so the reported components sum to the mean of the per-step
/// maxima. render_ms stays outside total_ms (receiver-side cost).
struct RunReport {
  std::string mode;
  uint64_t steps = 0;
  uint32_t ranks = 1;
  double sim_ms = 0.0;
  double reduce_ms = 0.0;
  double transfer_ms = 0.0;
  double total_ms = 0.0;
  double render_ms = 0.0;
  double bytes_per_step = 0.0; // mean over steps, summed over ranks
  std::string fingerprint;     // sim.* and pipeline.* entries, sorted
};

RunReport aggregate_report(const std::string& mode, uint32_t ranks,
                           const std::vector<TimingRecord>& records,
                           const std::vector<TimingRecord>& render_records,
                           const std::string& fingerprint);

/// Flat key=value file, parseable by Config.
void write_report(const std::string& path, const RunReport& report);
RunReport read_report(const std::string& path);

std::string config_fingerprint(const Config& cfg);

/// 100 * (1 - total_b / total_a).
double gain_percent(double total_a, double total_b);

/// Costs at the table's precision: integers at or above 100 ms, three
/// significant digits below.
std::string format_cost(double ms);
std::string format_gain(double percent); // two decimals

/// Rows Simulation/Reduction/Data Transfer/Total/Gain, one column per
/// report, values joined by " / ". Gains compare each column against the
/// first. Fewer than two reports is ReportMismatch.
std::string emit_table(const std::vector<RunReport>& reports);

/// Gain of b over a; ReportMismatch unless both reports share a fingerprint.
double compare_runs(const RunReport& a, const RunReport& b);

struct ReceiverOutcome {
  std::vector<TimingRecord> render_records; // rank 0, render_ms only
  uint64_t steps = 0;
  uint64_t frames = 0;
  uint64_t payload_bytes = 0;
};

/// Replays to end-of-stream, merging each step's rank parts and rendering
/// every recipe to out_dir; writes render_timings.csv there.
ReceiverOutcome run_receiver_loop(TransportReader& reader,
                                  const std::vector<RenderRecipe>& recipes,
                                  const std::string& out_dir);

/// Receiver entry: binds the endpoint, prints "LISTENING <endpoint>" (with
/// the resolved port) to stdout, then replays and renders until
/// end-of-stream.
ReceiverOutcome run_receiver(const Config& cfg, const std::string& endpoint_spec,
                             const std::string& out_dir);

/// argv-level wrapper over run_receiver taking "--config <file> --endpoint
/// <spec> --out <dir>"; returns a process exit code. Test binaries route
/// their own argv here so the harness can re-exec any host binary as the
/// receiver.
int receive_main(int argc, char** argv);

struct ExperimentOutcome {
  RunReport report;
  std::vector<TimingRecord> records;
  std::vector<TimingRecord> render_records;
  std::vector<std::string> warnings;
  std::string timings_path;
  std::string report_path;
};

/// Runs one experiment: per-rank minisim + gateway threads in lockstep, a
/// receiver (subprocess by default, harness.receiver = inproc for
/// in-process) for the sending backends, CSV and report files under
/// out_dir.
ExperimentOutcome run_experiment(const Config& cfg, const std::string& out_dir);

} // namespace hxit
