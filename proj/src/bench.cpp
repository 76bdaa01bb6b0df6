#include "hxit/bench.hpp"

#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <barrier>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <sstream>
#include <thread>
#include <utility>

#include "hxit/error.hpp"
#include "hxit/minisim.hpp"

namespace hxit {

namespace fs = std::filesystem;

namespace {

using SteadyClock = std::chrono::steady_clock;

double elapsed_ms(SteadyClock::time_point start) {
  return std::chrono::duration<double, std::milli>(SteadyClock::now() - start).count();
}

// %.10g keeps every value the harness produces round-trippable through text.
std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

double parse_double(const std::string& text, const std::string& where) {
  try {
    size_t used = 0;
    double v = std::stod(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    fail(ErrorCode::Io, where + ": bad number '" + text + "'");
  }
}

uint64_t parse_u64(const std::string& text, const std::string& where) {
  try {
    size_t used = 0;
    unsigned long long v = std::stoull(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return static_cast<uint64_t>(v);
  } catch (const std::exception&) {
    fail(ErrorCode::Io, where + ": bad count '" + text + "'");
  }
}

}  // namespace

void write_timings_csv(const std::string& path, const std::vector<TimingRecord>& records) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorCode::Io, "cannot open '" + path + "' for writing");
  out << "step,rank,sim_ms,reduce_ms,transfer_ms,render_ms,bytes_sent\n";
  for (const TimingRecord& r : records) {
    out << r.step << ',' << r.rank << ',' << format_double(r.sim_ms) << ','
        << format_double(r.reduce_ms) << ',' << format_double(r.transfer_ms) << ','
        << format_double(r.render_ms) << ',' << r.bytes_sent << '\n';
  }
  if (!out) fail(ErrorCode::Io, "failed while writing '" + path + "'");
}

std::vector<TimingRecord> read_timings_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::Io, "cannot open '" + path + "'");
  std::string line;
  if (!std::getline(in, line) || line.rfind("step,rank,", 0) != 0)
    fail(ErrorCode::Io, "'" + path + "' is not a timings CSV");
  std::vector<TimingRecord> records;
  size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> cols;
    std::istringstream ss(line);
    std::string item;
    while (std::getline(ss, item, ',')) cols.push_back(item);
    std::string where = path + ":" + std::to_string(lineno);
    if (cols.size() != 7) fail(ErrorCode::Io, where + ": expected 7 columns");
    TimingRecord r;
    r.step = parse_u64(cols[0], where);
    r.rank = static_cast<uint32_t>(parse_u64(cols[1], where));
    r.sim_ms = parse_double(cols[2], where);
    r.reduce_ms = parse_double(cols[3], where);
    r.transfer_ms = parse_double(cols[4], where);
    r.render_ms = parse_double(cols[5], where);
    r.bytes_sent = parse_u64(cols[6], where);
    records.push_back(r);
  }
  return records;
}

RunReport aggregate_report(const std::string& mode, uint32_t ranks,
                           const std::vector<TimingRecord>& records,
                           const std::vector<TimingRecord>& render_records,
                           const std::string& fingerprint) {
  RunReport rep;
  rep.mode = mode;
  rep.ranks = ranks;
  rep.fingerprint = fingerprint;

  std::map<uint64_t, std::vector<const TimingRecord*>> by_step;
  for (const TimingRecord& r : records) by_step[r.step].push_back(&r);
  rep.steps = by_step.size();
  if (rep.steps == 0) return rep;

  // Critical path per step: the rank whose sim + reduce + transfer is largest
  // sets the step cost, and its own components are what the report averages,
  // so the component rows always sum to the total row.
  double sim = 0.0, reduce = 0.0, transfer = 0.0, bytes = 0.0, inline_render = 0.0;
  for (const auto& [step, rows] : by_step) {
    const TimingRecord* slowest = nullptr;
    double slowest_cost = 0.0;
    uint64_t step_bytes = 0;
    double step_render = 0.0;
    for (const TimingRecord* r : rows) {
      double cost = r->sim_ms + r->reduce_ms + r->transfer_ms;
      if (slowest == nullptr || cost > slowest_cost ||
          (cost == slowest_cost && r->rank < slowest->rank)) {
        slowest = r;
        slowest_cost = cost;
      }
      step_bytes += r->bytes_sent;
      step_render = std::max(step_render, r->render_ms);
    }
    sim += slowest->sim_ms;
    reduce += slowest->reduce_ms;
    transfer += slowest->transfer_ms;
    bytes += static_cast<double>(step_bytes);
    inline_render += step_render;
  }

  double n = static_cast<double>(rep.steps);
  rep.sim_ms = sim / n;
  rep.reduce_ms = reduce / n;
  rep.transfer_ms = transfer / n;
  rep.total_ms = rep.sim_ms + rep.reduce_ms + rep.transfer_ms;
  rep.bytes_per_step = bytes / n;
  if (!render_records.empty()) {
    double acc = 0.0;
    for (const TimingRecord& r : render_records) acc += r.render_ms;
    rep.render_ms = acc / static_cast<double>(render_records.size());
  } else {
    rep.render_ms = inline_render / n;
  }
  return rep;
}

void write_report(const std::string& path, const RunReport& report) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) fail(ErrorCode::Io, "cannot open '" + path + "' for writing");
  out << "mode = " << report.mode << '\n'
      << "steps = " << report.steps << '\n'
      << "ranks = " << report.ranks << '\n'
      << "sim_ms = " << format_double(report.sim_ms) << '\n'
      << "reduce_ms = " << format_double(report.reduce_ms) << '\n'
      << "transfer_ms = " << format_double(report.transfer_ms) << '\n'
      << "total_ms = " << format_double(report.total_ms) << '\n'
      << "render_ms = " << format_double(report.render_ms) << '\n'
      << "bytes_per_step = " << format_double(report.bytes_per_step) << '\n'
      << "fingerprint = " << report.fingerprint << '\n';
  if (!out) fail(ErrorCode::Io, "failed while writing '" + path + "'");
}

RunReport read_report(const std::string& path) {
  Config cfg = Config::parse_file(path);
  RunReport r;
  r.mode = cfg.require_string("mode");
  r.steps = static_cast<uint64_t>(cfg.require_int("steps"));
  r.ranks = static_cast<uint32_t>(cfg.require_int("ranks"));
  r.sim_ms = cfg.require_double("sim_ms");
  r.reduce_ms = cfg.require_double("reduce_ms");
  r.transfer_ms = cfg.require_double("transfer_ms");
  r.total_ms = cfg.require_double("total_ms");
  r.render_ms = cfg.require_double("render_ms");
  r.bytes_per_step = cfg.require_double("bytes_per_step");
  r.fingerprint = cfg.get_string("fingerprint", "");
  return r;
}

std::string config_fingerprint(const Config& cfg) {
  std::vector<std::string> keys = cfg.keys_with_prefix("sim.");
  for (const std::string& k : cfg.keys_with_prefix("pipeline.")) keys.push_back(k);
  std::sort(keys.begin(), keys.end());
  std::string out;
  for (const std::string& k : keys) {
    if (!out.empty()) out += ';';
    out += k + "=" + *cfg.get(k);
  }
  return out;
}

double gain_percent(double total_a, double total_b) {
  if (!(total_a > 0.0)) fail(ErrorCode::ReportMismatch, "baseline total must be positive");
  return 100.0 * (1.0 - total_b / total_a);
}

std::string format_cost(double ms) {
  if (ms >= 100.0) return std::to_string(static_cast<long long>(std::llround(ms)));
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3g", ms);
  return buf;
}

std::string format_gain(double percent) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.2f", percent);
  return buf;
}

std::string emit_table(const std::vector<RunReport>& reports) {
  if (reports.size() < 2)
    fail(ErrorCode::ReportMismatch, "a cost table needs at least two runs to compare");

  auto row = [](const std::string& label, const std::vector<std::string>& cells) {
    std::string line = label;
    if (line.size() < 24) line.append(24 - line.size(), ' ');
    for (size_t i = 0; i < cells.size(); ++i) {
      if (i > 0) line += " / ";
      line += cells[i];
    }
    line += '\n';
    return line;
  };

  std::vector<std::string> modes, sims, reduces, transfers, totals, gains;
  for (size_t i = 0; i < reports.size(); ++i) {
    const RunReport& r = reports[i];
    modes.push_back(r.mode);
    sims.push_back(format_cost(r.sim_ms));
    reduces.push_back(format_cost(r.reduce_ms));
    transfers.push_back(format_cost(r.transfer_ms));
    totals.push_back(format_cost(r.total_ms));
    gains.push_back(i == 0 ? "-"
                           : format_gain(gain_percent(reports[0].total_ms, r.total_ms)) + "%");
  }

  std::string out;
  out += row("", modes);
  out += row("Simulation Time (ms)", sims);
  out += row("Reduction Time (ms)", reduces);
  out += row("Data Transfer Time (ms)", transfers);
  out += row("Total Time (ms)", totals);
  out += row("Total Gain", gains);
  return out;
}

double compare_runs(const RunReport& a, const RunReport& b) {
  if (a.fingerprint != b.fingerprint)
    fail(ErrorCode::ReportMismatch,
         "runs used different sim/pipeline configs; totals are not comparable");
  return gain_percent(a.total_ms, b.total_ms);
}

ReceiverOutcome run_receiver_loop(TransportReader& reader, const std::vector<RenderRecipe>& recipes,
                                  const std::string& out_dir) {
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) fail(ErrorCode::Io, "cannot create '" + out_dir + "': " + ec.message());

  ReceiverOutcome outcome;
  ReplaySink sink = [&](uint64_t step, const std::vector<DataNode>& parts) {
    auto start = SteadyClock::now();
    // Stitch the per-rank parts of the first channel back into one mesh, then
    // render every recipe from the stitched result.
    std::vector<const DataNode*> pieces;
    std::string channel_name;
    for (const DataNode& payload : parts) {
      const DataNode* channels = payload.find("channels");
      if (channels == nullptr || channels->child_count() == 0) continue;
      if (channel_name.empty()) channel_name = channels->child_name(0);
      const DataNode* channel = channels->find(channel_name);
      if (channel != nullptr) pieces.push_back(channel);
    }
    if (!pieces.empty() && !recipes.empty()) {
      DataNode merged = merge_channel_parts(pieces);
      for (const RenderRecipe& recipe : recipes) {
        ImageBuffer img = render(merged, recipe);
        write_image((fs::path(out_dir) / image_filename(step, recipe.name)).string(), img);
      }
    }
    TimingRecord rec;
    rec.step = step;
    rec.rank = 0;
    rec.render_ms = elapsed_ms(start);
    outcome.render_records.push_back(rec);
  };

  ReplaySummary summary = replay_loop(reader, sink);
  outcome.steps = summary.steps;
  outcome.frames = summary.frames;
  outcome.payload_bytes = summary.payload_bytes;
  write_timings_csv((fs::path(out_dir) / "render_timings.csv").string(), outcome.render_records);
  return outcome;
}

ReceiverOutcome run_receiver(const Config& cfg, const std::string& endpoint_spec,
                             const std::string& out_dir) {
  Endpoint ep = Endpoint::parse(endpoint_spec);
  ReaderOptions opts;
  opts.timeout_seconds = cfg.get_double("harness.receiver_timeout", 60.0);
  TransportReader reader(ep, opts);
  std::string resolved = ep.kind == Endpoint::Kind::Socket
                             ? ep.host + ":" + std::to_string(reader.bound_port())
                             : ep.describe();
  std::printf("LISTENING %s\n", resolved.c_str());
  std::fflush(stdout);
  return run_receiver_loop(reader, RenderRecipe::list_from_config(cfg), out_dir);
}

int receive_main(int argc, char** argv) {
  std::string config_path, endpoint, out = ".";
  for (int i = 0; i < argc; ++i) {
    std::string flag = argv[i];
    if (i + 1 >= argc) {
      std::fprintf(stderr, "receive: missing value for %s\n", flag.c_str());
      return 2;
    }
    std::string value = argv[++i];
    if (flag == "--config") {
      config_path = value;
    } else if (flag == "--endpoint") {
      endpoint = value;
    } else if (flag == "--out") {
      out = value;
    } else {
      std::fprintf(stderr, "receive: unknown flag %s\n", flag.c_str());
      return 2;
    }
  }
  if (endpoint.empty()) {
    std::fprintf(stderr, "receive: --endpoint is required\n");
    return 2;
  }
  try {
    Config cfg;
    if (!config_path.empty()) cfg = Config::parse_file(config_path);
    run_receiver(cfg, endpoint, out);
    return 0;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "receive: %s\n", e.what());
    return 1;
  }
}

namespace {

// A forked receiver with its stdout captured; kills the child if the harness
// unwinds before the normal waitpid.
struct ReceiverProcess {
  pid_t pid = -1;
  int out_fd = -1;

  ~ReceiverProcess() {
    if (out_fd >= 0) ::close(out_fd);
    if (pid > 0) {
      ::kill(pid, SIGKILL);
      int status = 0;
      ::waitpid(pid, &status, 0);
    }
  }
};

std::unique_ptr<ReceiverProcess> spawn_receiver(const std::vector<std::string>& args) {
  int fds[2];
  if (::pipe(fds) != 0) fail(ErrorCode::Io, std::string("pipe: ") + std::strerror(errno));
  pid_t pid = ::fork();
  if (pid < 0) {
    int err = errno;
    ::close(fds[0]);
    ::close(fds[1]);
    fail(ErrorCode::Io, std::string("fork: ") + std::strerror(err));
  }
  if (pid == 0) {
    ::dup2(fds[1], STDOUT_FILENO);
    ::close(fds[0]);
    ::close(fds[1]);
    std::vector<char*> argv;
    argv.reserve(args.size() + 1);
    for (const std::string& a : args) argv.push_back(const_cast<char*>(a.c_str()));
    argv.push_back(nullptr);
    ::execv(args[0].c_str(), argv.data());
    std::_Exit(127);
  }
  ::close(fds[1]);
  auto proc = std::make_unique<ReceiverProcess>();
  proc->pid = pid;
  proc->out_fd = fds[0];
  return proc;
}

std::string read_line_fd(int fd, double timeout_seconds) {
  auto deadline = SteadyClock::now() + std::chrono::duration<double>(timeout_seconds);
  std::string line;
  for (;;) {
    auto remaining = std::chrono::duration_cast<std::chrono::milliseconds>(
        deadline - SteadyClock::now());
    if (remaining.count() <= 0)
      fail(ErrorCode::TransportConnect, "receiver did not report its endpoint in time");
    pollfd p{fd, POLLIN, 0};
    int pr = ::poll(&p, 1, static_cast<int>(std::min<int64_t>(remaining.count(), 100)));
    if (pr < 0) {
      if (errno == EINTR) continue;
      fail(ErrorCode::Io, std::string("poll: ") + std::strerror(errno));
    }
    if (pr == 0) continue;
    char c = 0;
    ssize_t n = ::read(fd, &c, 1);
    if (n <= 0)
      fail(ErrorCode::TransportConnect, "receiver exited before reporting its endpoint");
    if (c == '\n') return line;
    line += c;
  }
}

}  // namespace

ExperimentOutcome run_experiment(const Config& cfg_in, const std::string& out_dir) {
  Config cfg = cfg_in;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) fail(ErrorCode::Io, "cannot create '" + out_dir + "': " + ec.message());
  if (!cfg.has("gateway.output")) cfg.set("gateway.output", out_dir);

  SimConfig sim = SimConfig::from_config(cfg);
  GatewayConfig proto = GatewayConfig::from_config(cfg);
  uint32_t ranks = static_cast<uint32_t>(sim.partitions);

  ExperimentOutcome outcome;
  outcome.warnings = proto.warnings;

  // All writers share one bandwidth budget: the throttle models the single
  // cluster-to-visualization link, not a per-rank NIC.
  std::shared_ptr<TokenBucket> bucket;
  if (proto.backend != Backend::Inline && proto.bandwidth > 0.0)
    bucket = std::make_shared<TokenBucket>(proto.bandwidth);

  std::unique_ptr<ReceiverProcess> child;
  std::unique_ptr<TransportReader> inproc_reader;
  std::thread inproc_thread;
  ReceiverOutcome inproc_outcome;
  std::exception_ptr inproc_error;
  std::string endpoint = proto.endpoint;

  if (proto.backend != Backend::Inline) {
    std::string receiver_mode = cfg.get_string("harness.receiver", "subprocess");
    if (receiver_mode == "subprocess") {
      std::string cfg_path = (fs::path(out_dir) / "run_config.cfg").string();
      {
        std::ofstream out(cfg_path, std::ios::trunc);
        out << cfg.to_text();
        if (!out) fail(ErrorCode::Io, "cannot write '" + cfg_path + "'");
      }
      child = spawn_receiver({"/proc/self/exe", "receive", "--config", cfg_path, "--endpoint",
                              proto.endpoint, "--out", out_dir});
      std::string line = read_line_fd(child->out_fd, std::max(proto.timeout_seconds, 30.0));
      if (line.rfind("LISTENING ", 0) != 0)
        fail(ErrorCode::TransportConnect, "receiver reported '" + line + "'");
      endpoint = line.substr(10);
    } else if (receiver_mode == "inproc") {
      Endpoint requested = Endpoint::parse(proto.endpoint);
      ReaderOptions ropts;
      ropts.timeout_seconds = cfg.get_double("harness.receiver_timeout", 60.0);
      inproc_reader = std::make_unique<TransportReader>(requested, ropts);
      if (requested.kind == Endpoint::Kind::Socket)
        endpoint = requested.host + ":" + std::to_string(inproc_reader->bound_port());
      inproc_thread = std::thread([&inproc_outcome, &inproc_error, reader = inproc_reader.get(),
                                   recipes = proto.recipes, out_dir] {
        try {
          inproc_outcome = run_receiver_loop(*reader, recipes, out_dir);
        } catch (...) {
          inproc_error = std::current_exception();
        }
      });
    } else {
      fail(ErrorCode::ConfigInvalid, "harness.receiver must be 'subprocess' or 'inproc'");
    }
  }

  std::vector<std::vector<TimingRecord>> per_rank(ranks);
  std::vector<std::exception_ptr> rank_errors(ranks);
  std::barrier gate(static_cast<std::ptrdiff_t>(ranks));
  std::vector<std::thread> workers;
  workers.reserve(ranks);
  for (uint32_t rank = 0; rank < ranks; ++rank) {
    workers.emplace_back([&, rank] {
      try {
        GatewayConfig gc = proto;
        gc.rank = rank;
        gc.rank_count = ranks;
        gc.endpoint = endpoint;
        gc.shared_bucket = bucket;
        Gateway gateway(gc);
        for (int64_t step = 0; step < sim.steps; ++step) {
          double time = static_cast<double>(step + 1) * sim.step_dt();
          auto t0 = SteadyClock::now();
          DataNode mesh = generate_step(sim, rank, time);
          double wall_sim = elapsed_ms(t0);
          DataNode channels;
          channels.child("mesh") = std::move(mesh);
          ExecuteResult result = gateway.execute(step, time, channels);
          TimingRecord rec;
          rec.step = static_cast<uint64_t>(step);
          rec.rank = rank;
          rec.sim_ms = proto.clock.modeled ? proto.clock.sim_ms : wall_sim;
          rec.reduce_ms = result.reduce_ms;
          rec.transfer_ms = result.transfer_ms;
          rec.render_ms = result.render_ms;
          rec.bytes_sent = result.bytes_sent;
          per_rank[rank].push_back(rec);
          // Lockstep: no rank starts step s+1 until every rank finished s.
          gate.arrive_and_wait();
        }
        gateway.finalize();
      } catch (...) {
        rank_errors[rank] = std::current_exception();
        gate.arrive_and_drop();
      }
    });
  }
  for (std::thread& t : workers) t.join();

  std::exception_ptr first_error;
  for (const std::exception_ptr& e : rank_errors) {
    if (e) {
      first_error = e;
      break;
    }
  }

  std::vector<TimingRecord> render_records;
  if (child) {
    if (first_error) ::kill(child->pid, SIGKILL);
    int status = 0;
    ::waitpid(child->pid, &status, 0);
    child->pid = -1;
    if (!first_error) {
      if (!WIFEXITED(status) || WEXITSTATUS(status) != 0)
        fail(ErrorCode::TransportBroken,
             "receiver exited abnormally (status " + std::to_string(status) + ")");
      render_records = read_timings_csv((fs::path(out_dir) / "render_timings.csv").string());
    }
  } else if (inproc_reader) {
    if (first_error) inproc_reader->close();
    if (inproc_thread.joinable()) inproc_thread.join();
    if (!first_error) {
      if (inproc_error) std::rethrow_exception(inproc_error);
      render_records = inproc_outcome.render_records;
    }
  }
  if (first_error) std::rethrow_exception(first_error);

  for (const std::vector<TimingRecord>& rows : per_rank)
    outcome.records.insert(outcome.records.end(), rows.begin(), rows.end());
  std::sort(outcome.records.begin(), outcome.records.end(),
            [](const TimingRecord& a, const TimingRecord& b) {
              return a.step != b.step ? a.step < b.step : a.rank < b.rank;
            });
  outcome.render_records = std::move(render_records);

  outcome.timings_path = (fs::path(out_dir) / "timings.csv").string();
  write_timings_csv(outcome.timings_path, outcome.records);
  outcome.report = aggregate_report(backend_name(proto.backend), ranks, outcome.records,
                                    outcome.render_records, config_fingerprint(cfg));
  outcome.report_path = (fs::path(out_dir) / "report.txt").string();
  write_report(outcome.report_path, outcome.report);
  return outcome;
}

}  // namespace hxit
