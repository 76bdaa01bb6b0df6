#include "hxit/minisim.hpp"

#include <cmath>

namespace hxit {

SimConfig SimConfig::from_config(const Config& cfg) {
  SimConfig s;
  s.n = cfg.get_int("sim.n", s.n);
  s.steps = cfg.get_int("sim.steps", s.steps);
  s.dt = cfg.get_double("sim.dt", s.dt);
  s.partitions = cfg.get_int("sim.partitions", s.partitions);
  s.shock_width = cfg.get_double("sim.width", s.shock_width);
  std::string topo = cfg.get_string("sim.topology", "uniform");
  if (topo == "uniform") s.topology = TopologyKind::Uniform;
  else if (topo == "explicit-hex" || topo == "hex") s.topology = TopologyKind::Hex;
  else fail(ErrorCode::ConfigInvalid, "sim.topology must be uniform or explicit-hex");
  if (s.n < 2) fail(ErrorCode::ConfigInvalid, "sim.n must be >= 2");
  if (s.steps < 1) fail(ErrorCode::ConfigInvalid, "sim.steps must be >= 1");
  if (s.partitions < 1) fail(ErrorCode::ConfigInvalid, "sim.partitions must be >= 1");
  if (!(s.shock_width > 0.0)) fail(ErrorCode::ConfigInvalid, "sim.width must be > 0");
  return s;
}

double shock_radius(double t) { return std::pow(t, 0.4); }

double energy_at(double x, double y, double z, double t, double width) {
  double r = std::sqrt(x * x + y * y + z * z);
  double d = (r - shock_radius(t)) / width;
  return std::exp(-d * d);
}

double density_at(double x, double y, double z, double t, double width) {
  return 1.0 + 0.5 * energy_at(x, y, z, t, width);
}

double pressure_at(double x, double y, double z, double t, double width) {
  double e = energy_at(x, y, z, t, width);
  return 0.4 * (1.0 + 0.5 * e) * e; // (gamma - 1) * rho * e, gamma = 1.4
}

std::pair<int64_t, int64_t> partition_bounds(const SimConfig& cfg, int64_t rank) {
  if (rank < 0 || rank >= cfg.partitions)
    fail(ErrorCode::ConfigInvalid,
         "rank " + std::to_string(rank) + " outside [0, " + std::to_string(cfg.partitions) + ")");
  int64_t base = cfg.n / cfg.partitions;
  int64_t rem = cfg.n % cfg.partitions;
  int64_t size = base + (rank < rem ? 1 : 0);
  int64_t first = rank * base + std::min(rank, rem);
  return {first, first + size};
}

DataNode generate_step(const SimConfig& cfg, int64_t rank, double t) {
  auto [z_first, z_last] = partition_bounds(cfg, rank);
  int64_t layers = z_last - z_first;
  if (layers == 0) {
    // Empty slab: a 0-vertex explicit-hex channel keeps the run going where
    // the original system had to fall back to a single core.
    DataNode ch = make_explicit_channel({}, {}, {}, {}, TopologyKind::Hex);
    add_field(ch, "energy", Association::Vertex, {});
    add_field(ch, "density", Association::Vertex, {});
    add_field(ch, "pressure", Association::Cell, {});
    return ch;
  }

  double h = 1.0 / static_cast<double>(cfg.n);
  int64_t nv = cfg.n + 1;           // vertices per transverse axis
  int64_t vz = layers + 1;          // vertex layers in this slab
  double z0 = static_cast<double>(z_first) * h;

  int64_t vertex_count = nv * nv * vz;
  std::vector<double> energy(static_cast<size_t>(vertex_count));
  std::vector<double> density(static_cast<size_t>(vertex_count));
  size_t vi = 0;
  for (int64_t k = 0; k < vz; ++k) {
    double zc = z0 + static_cast<double>(k) * h;
    for (int64_t j = 0; j < nv; ++j) {
      double yc = static_cast<double>(j) * h;
      for (int64_t i = 0; i < nv; ++i, ++vi) {
        double xc = static_cast<double>(i) * h;
        double e = energy_at(xc, yc, zc, t, cfg.shock_width);
        energy[vi] = e;
        density[vi] = 1.0 + 0.5 * e;
      }
    }
  }

  int64_t cell_count = cfg.n * cfg.n * layers;
  std::vector<double> pressure(static_cast<size_t>(cell_count));
  size_t ci = 0;
  for (int64_t k = 0; k < layers; ++k) {
    double zc = z0 + (static_cast<double>(k) + 0.5) * h;
    for (int64_t j = 0; j < cfg.n; ++j) {
      double yc = (static_cast<double>(j) + 0.5) * h;
      for (int64_t i = 0; i < cfg.n; ++i, ++ci)
        pressure[ci] = pressure_at((static_cast<double>(i) + 0.5) * h, yc, zc, t, cfg.shock_width);
    }
  }

  DataNode ch;
  if (cfg.topology == TopologyKind::Uniform) {
    ch = make_uniform_channel({nv, nv, vz}, {0.0, 0.0, z0}, {h, h, h});
  } else {
    std::vector<double> x(static_cast<size_t>(vertex_count));
    std::vector<double> y(static_cast<size_t>(vertex_count));
    std::vector<double> z(static_cast<size_t>(vertex_count));
    size_t p = 0;
    for (int64_t k = 0; k < vz; ++k)
      for (int64_t j = 0; j < nv; ++j)
        for (int64_t i = 0; i < nv; ++i, ++p) {
          x[p] = static_cast<double>(i) * h;
          y[p] = static_cast<double>(j) * h;
          z[p] = z0 + static_cast<double>(k) * h;
        }
    std::vector<int64_t> conn(static_cast<size_t>(cell_count) * 8);
    size_t c = 0;
    auto vid = [&](int64_t i, int64_t j, int64_t k) { return i + nv * (j + nv * k); };
    for (int64_t k = 0; k < layers; ++k)
      for (int64_t j = 0; j < cfg.n; ++j)
        for (int64_t i = 0; i < cfg.n; ++i) {
          conn[c++] = vid(i, j, k);
          conn[c++] = vid(i + 1, j, k);
          conn[c++] = vid(i + 1, j + 1, k);
          conn[c++] = vid(i, j + 1, k);
          conn[c++] = vid(i, j, k + 1);
          conn[c++] = vid(i + 1, j, k + 1);
          conn[c++] = vid(i + 1, j + 1, k + 1);
          conn[c++] = vid(i, j + 1, k + 1);
        }
    ch = make_explicit_channel(std::move(x), std::move(y), std::move(z), std::move(conn),
                               TopologyKind::Hex);
  }
  add_field(ch, "energy", Association::Vertex, std::move(energy));
  add_field(ch, "density", Association::Vertex, std::move(density));
  add_field(ch, "pressure", Association::Cell, std::move(pressure));
  return ch;
}

} // namespace hxit
