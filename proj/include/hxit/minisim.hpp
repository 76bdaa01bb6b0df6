#pragma once

#include <cstdint>
#include <utility>

#include "hxit/config.hpp"
#include "hxit/mesh.hpp"
#include "hxit/node.hpp"

namespace hxit {

/// Synthetic Sedov-style blast generator over [0,1]^3, split into P slabs
/// along z. Stands in for a shock-hydro code: fields are analytic, so every
/// downstream interpolation has a closed-form oracle.
struct SimConfig {
  int64_t n = 32;          // cells per axis of the global mesh
  TopologyKind topology = TopologyKind::Uniform; // Uniform or Hex lattice
  int64_t steps = 10;
  double dt = 0.0;         // 0 => 1/steps
  int64_t partitions = 1;  // slabs along z; empty slabs allowed when P > n
  double shock_width = 0.05;

  static SimConfig from_config(const Config& cfg);
  double step_dt() const { return dt > 0.0 ? dt : 1.0 / static_cast<double>(steps); }
};

/// Shock radius at time t: r_s(t) = t^0.4, blast centered at the corner
/// origin (0,0,0); r_s(1) = 1 so the front reaches the far corner at t = 1.
double shock_radius(double t);

/// Blast fields: e = exp(-((|x| - r_s)/w)^2), rho = 1 + e/2,
/// p = 0.4 * rho * e (evaluated at cell centers).
double energy_at(double x, double y, double z, double t, double width);
double density_at(double x, double y, double z, double t, double width);
double pressure_at(double x, double y, double z, double t, double width);

/// Contiguous cell-layer range [first, last) along z owned by a rank.
/// Ranges are disjoint and ordered, sizes differ by at most one, and their
/// union is [0, n). Empty ranges occur when partitions > n.
std::pair<int64_t, int64_t> partition_bounds(const SimConfig& cfg, int64_t rank);

/// Mesh channel for the rank's slab at time t, with fields energy (vertex),
/// density (vertex) and pressure (cell). Deterministic: identical inputs
/// produce bit-identical arrays. An empty slab yields an empty explicit-hex
/// channel regardless of cfg.topology.
DataNode generate_step(const SimConfig& cfg, int64_t rank, double t);

} // namespace hxit
