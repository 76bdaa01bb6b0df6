#include "hxit/reduce.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>
#include <unordered_set>

namespace hxit {

// ---------------------------------------------------------------------------
// pipeline spec parsing
// ---------------------------------------------------------------------------

namespace {

std::array<double, 3> triple(const Config& cfg, const std::string& key) {
  auto v = cfg.get_doubles(key);
  if (v.size() != 3)
    fail(ErrorCode::ConfigInvalid, "config key '" + key + "' must have 3 components");
  return {v[0], v[1], v[2]};
}

int axis_from_string(const std::string& key, const std::string& s) {
  if (s == "x") return 0;
  if (s == "y") return 1;
  if (s == "z") return 2;
  fail(ErrorCode::ConfigInvalid, "config key '" + key + "': axis must be x, y or z");
}

} // namespace

PipelineSpec PipelineSpec::from_config(const Config& cfg) {
  PipelineSpec spec;
  for (int i = 0;; ++i) {
    std::string prefix = "pipeline.stage." + std::to_string(i) + ".";
    auto kind = cfg.get(prefix + "kind");
    if (!kind) break;
    if (*kind == "select_fields") {
      SelectFieldsStage st;
      st.keep = cfg.get_list(prefix + "fields");
      spec.stages.emplace_back(std::move(st));
    } else if (*kind == "slice") {
      SliceStage st;
      if (cfg.has(prefix + "axis")) {
        st.axis = axis_from_string(prefix + "axis", cfg.require_string(prefix + "axis"));
        st.coordinate = cfg.require_double(prefix + "coordinate");
      } else {
        st.origin = triple(cfg, prefix + "origin");
        st.normal = triple(cfg, prefix + "normal");
        double n2 = st.normal[0] * st.normal[0] + st.normal[1] * st.normal[1] +
                    st.normal[2] * st.normal[2];
        if (!(n2 > 0.0))
          fail(ErrorCode::ConfigInvalid, "config key '" + prefix + "normal' must be nonzero");
      }
      spec.stages.emplace_back(st);
    } else if (*kind == "resample") {
      ResampleStage st;
      auto dims = cfg.get_list(prefix + "dims");
      if (dims.size() == 1) dims = {dims[0], dims[0], dims[0]};
      if (dims.size() != 3)
        fail(ErrorCode::ConfigInvalid, "config key '" + prefix + "dims' must have 1 or 3 components");
      for (int a = 0; a < 3; ++a) {
        const std::string& item = dims[static_cast<size_t>(a)];
        try {
          size_t used = 0;
          st.dims[a] = std::stoll(item, &used);
          if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
          fail(ErrorCode::ConfigInvalid, "config key '" + prefix + "dims': bad integer '" + item + "'");
        }
        if (st.dims[a] < 2)
          fail(ErrorCode::ConfigInvalid, "config key '" + prefix + "dims' components must be >= 2");
      }
      std::string bounds = cfg.get_string(prefix + "bounds", "auto");
      if (bounds != "auto") {
        auto b = cfg.get_doubles(prefix + "bounds");
        if (b.size() != 6)
          fail(ErrorCode::ConfigInvalid,
               "config key '" + prefix + "bounds' must be auto or 6 numbers");
        st.bounds = std::array<double, 6>{b[0], b[1], b[2], b[3], b[4], b[5]};
      }
      spec.stages.emplace_back(st);
    } else {
      fail(ErrorCode::ConfigInvalid, "unknown pipeline stage kind '" + *kind + "'");
    }
  }
  return spec;
}

std::string PipelineSpec::summary() const {
  std::ostringstream out;
  bool first = true;
  for (const Stage& stage : stages) {
    if (!first) out << "|";
    first = false;
    if (const auto* sf = std::get_if<SelectFieldsStage>(&stage)) {
      out << "select_fields(";
      for (size_t i = 0; i < sf->keep.size(); ++i) out << (i ? "," : "") << sf->keep[i];
      out << ")";
    } else if (const auto* sl = std::get_if<SliceStage>(&stage)) {
      if (sl->axis_aligned())
        out << "slice(" << "xyz"[*sl->axis] << "@" << sl->coordinate << ")";
      else
        out << "slice(plane)";
    } else if (const auto* rs = std::get_if<ResampleStage>(&stage)) {
      out << "resample(" << rs->dims[0] << "x" << rs->dims[1] << "x" << rs->dims[2] << ")";
    }
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// select_fields
// ---------------------------------------------------------------------------

DataNode select_fields(const std::vector<std::string>& keep, const DataNode& channel) {
  MeshChannel m = validate_mesh(channel);
  for (const std::string& name : keep)
    if (!m.field(name))
      fail(ErrorCode::PipelineMissingField, "field '" + name + "' not present in channel");

  std::unordered_set<std::string> keep_set(keep.begin(), keep.end());
  DataNode out;
  if (const DataNode* cs = channel.find("coordset")) out.set("coordset", *cs);
  if (const DataNode* topo = channel.find("topology")) out.set("topology", *topo);
  DataNode& fields_out = out.child("fields");
  if (const DataNode* fields = channel.find("fields")) {
    for (size_t i = 0; i < fields->child_count(); ++i)
      if (keep_set.count(fields->child_name(i)))
        fields_out.child(fields->child_name(i)) = fields->child_at(i);
  }
  return out;
}

// ---------------------------------------------------------------------------
// axis-aligned slice
// ---------------------------------------------------------------------------

namespace {

int64_t vertex_id(const std::array<int64_t, 3>& dims, int64_t i, int64_t j, int64_t k) {
  return i + dims[0] * (j + dims[1] * k);
}

} // namespace

DataNode slice_axis_aligned(int axis, double coordinate, const DataNode& channel) {
  if (axis < 0 || axis > 2) fail(ErrorCode::ConfigInvalid, "slice axis must be 0, 1 or 2");
  MeshChannel m = validate_mesh(channel);
  if (!m.is_uniform())
    fail(ErrorCode::PipelineStageMismatch, "axis-aligned slice requires a uniform mesh");
  const UniformCoords& u = *m.uniform;
  for (int a = 0; a < 3; ++a)
    if (u.dims[a] < 2)
      fail(ErrorCode::PipelineStageMismatch, "axis-aligned slice requires a 3D uniform mesh");

  double lo = u.origin[axis];
  double h = u.spacing[axis];
  double hi = lo + h * static_cast<double>(u.dims[axis] - 1);
  if (coordinate < lo || coordinate > hi)
    fail(ErrorCode::SliceOutOfBounds,
         "slice coordinate " + std::to_string(coordinate) + " outside [" + std::to_string(lo) +
             ", " + std::to_string(hi) + "]");

  double q = (coordinate - lo) / h;
  int64_t layer = std::clamp<int64_t>(static_cast<int64_t>(std::floor(q)), 0, u.dims[axis] - 2);
  double t = std::clamp(q - static_cast<double>(layer), 0.0, 1.0);
  int64_t cell_layer = std::clamp<int64_t>(static_cast<int64_t>(std::floor(q)), 0, u.dims[axis] - 2);

  std::array<int64_t, 3> od = u.dims;
  od[axis] = 1;
  std::array<double, 3> oorigin = u.origin;
  oorigin[axis] = coordinate;
  DataNode out = make_uniform_channel(od, oorigin, u.spacing);

  std::array<int64_t, 3> in_cells{u.dims[0] - 1, u.dims[1] - 1, u.dims[2] - 1};
  std::array<int64_t, 3> out_cells{std::max<int64_t>(od[0] - 1, 1), std::max<int64_t>(od[1] - 1, 1),
                                   std::max<int64_t>(od[2] - 1, 1)};

  for (const FieldView& f : m.fields) {
    if (f.association == Association::Vertex) {
      std::vector<double> vals(static_cast<size_t>(od[0] * od[1] * od[2]));
      size_t o = 0;
      for (int64_t k = 0; k < od[2]; ++k)
        for (int64_t j = 0; j < od[1]; ++j)
          for (int64_t i = 0; i < od[0]; ++i, ++o) {
            std::array<int64_t, 3> idx{i, j, k};
            idx[axis] = layer;
            double a = f.values[static_cast<size_t>(vertex_id(u.dims, idx[0], idx[1], idx[2]))];
            idx[axis] = layer + 1;
            double b = f.values[static_cast<size_t>(vertex_id(u.dims, idx[0], idx[1], idx[2]))];
            vals[o] = (1.0 - t) * a + t * b;
          }
      add_field(out, f.name, Association::Vertex, std::move(vals));
    } else {
      std::vector<double> vals(static_cast<size_t>(out_cells[0] * out_cells[1] * out_cells[2]));
      size_t o = 0;
      for (int64_t k = 0; k < out_cells[2]; ++k)
        for (int64_t j = 0; j < out_cells[1]; ++j)
          for (int64_t i = 0; i < out_cells[0]; ++i, ++o) {
            std::array<int64_t, 3> idx{i, j, k};
            idx[axis] = cell_layer;
            vals[o] = f.values[static_cast<size_t>(vertex_id(in_cells, idx[0], idx[1], idx[2]))];
          }
      add_field(out, f.name, Association::Cell, std::move(vals));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// general-plane slice of explicit hexes
// ---------------------------------------------------------------------------

namespace {

constexpr int kHexEdges[12][2] = {{0, 1}, {1, 2}, {2, 3}, {3, 0}, {4, 5}, {5, 6},
                                  {6, 7}, {7, 4}, {0, 4}, {1, 5}, {2, 6}, {3, 7}};

std::array<double, 3> normalize3(const std::array<double, 3>& v) {
  double len = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
  if (!(len > 0.0)) fail(ErrorCode::ConfigInvalid, "plane normal must be nonzero");
  return {v[0] / len, v[1] / len, v[2] / len};
}

} // namespace

DataNode slice_plane_hex(const std::array<double, 3>& origin, const std::array<double, 3>& normal,
                         const DataNode& channel, Provenance* provenance) {
  MeshChannel m = validate_mesh(channel);
  if (m.topology != TopologyKind::Hex)
    fail(ErrorCode::PipelineStageMismatch, "plane slice requires an explicit-hex mesh");
  std::array<double, 3> nrm = normalize3(normal);

  std::vector<const FieldView*> vfields, cfields;
  for (const FieldView& f : m.fields)
    (f.association == Association::Vertex ? vfields : cfields).push_back(&f);

  std::vector<double> ox, oy, oz;
  std::vector<int64_t> conn;
  std::vector<std::vector<double>> vvals(vfields.size());
  std::vector<std::vector<double>> cvals(cfields.size());

  std::array<double, 3> corner_pos[8];
  double dist[8];

  for (int64_t cell = 0; cell < m.cell_count; ++cell) {
    auto ids = m.hex_corners(cell);
    bool degenerate = false;
    for (int a = 0; a < 8 && !degenerate; ++a)
      for (int b = a + 1; b < 8; ++b)
        if (ids[a] == ids[b]) { degenerate = true; break; }
    if (degenerate) {
      if (provenance) ++provenance->skipped_cells;
      continue;
    }

    bool any_pos = false, any_neg = false;
    for (int c = 0; c < 8; ++c) {
      corner_pos[c] = m.vertex(ids[c]);
      dist[c] = (corner_pos[c][0] - origin[0]) * nrm[0] + (corner_pos[c][1] - origin[1]) * nrm[1] +
                (corner_pos[c][2] - origin[2]) * nrm[2];
      (dist[c] >= 0.0 ? any_pos : any_neg) = true;
    }
    if (!any_pos || !any_neg) continue;

    // cut points on edges whose endpoints straddle the plane
    std::vector<std::array<double, 3>> pts;
    std::vector<std::vector<double>> pt_vvals(vfields.size());
    for (const auto& edge : kHexEdges) {
      int a = edge[0], b = edge[1];
      if ((dist[a] >= 0.0) == (dist[b] >= 0.0)) continue;
      double t = dist[a] / (dist[a] - dist[b]);
      std::array<double, 3> p{corner_pos[a][0] + t * (corner_pos[b][0] - corner_pos[a][0]),
                              corner_pos[a][1] + t * (corner_pos[b][1] - corner_pos[a][1]),
                              corner_pos[a][2] + t * (corner_pos[b][2] - corner_pos[a][2])};
      bool dup = false;
      for (const auto& q : pts) {
        double dx = q[0] - p[0], dy = q[1] - p[1], dz = q[2] - p[2];
        if (dx * dx + dy * dy + dz * dz < 1e-24) { dup = true; break; }
      }
      if (dup) continue;
      pts.push_back(p);
      for (size_t f = 0; f < vfields.size(); ++f) {
        double fa = vfields[f]->values[static_cast<size_t>(ids[a])];
        double fb = vfields[f]->values[static_cast<size_t>(ids[b])];
        pt_vvals[f].push_back(fa + t * (fb - fa));
      }
    }
    if (pts.size() < 3) continue;

    // order around the centroid in the cutting plane
    std::array<double, 3> cen{0, 0, 0};
    for (const auto& p : pts)
      for (int a = 0; a < 3; ++a) cen[a] += p[a];
    for (int a = 0; a < 3; ++a) cen[a] /= static_cast<double>(pts.size());
    std::array<double, 3> ref = std::abs(nrm[0]) < 0.9 ? std::array<double, 3>{1, 0, 0}
                                                       : std::array<double, 3>{0, 1, 0};
    double rd = ref[0] * nrm[0] + ref[1] * nrm[1] + ref[2] * nrm[2];
    std::array<double, 3> u =
        normalize3({ref[0] - rd * nrm[0], ref[1] - rd * nrm[1], ref[2] - rd * nrm[2]});
    std::array<double, 3> v{nrm[1] * u[2] - nrm[2] * u[1], nrm[2] * u[0] - nrm[0] * u[2],
                            nrm[0] * u[1] - nrm[1] * u[0]};
    std::vector<size_t> order(pts.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::vector<double> angle(pts.size());
    for (size_t i = 0; i < pts.size(); ++i) {
      double du = (pts[i][0] - cen[0]) * u[0] + (pts[i][1] - cen[1]) * u[1] + (pts[i][2] - cen[2]) * u[2];
      double dv = (pts[i][0] - cen[0]) * v[0] + (pts[i][1] - cen[1]) * v[1] + (pts[i][2] - cen[2]) * v[2];
      angle[i] = std::atan2(dv, du);
    }
    std::sort(order.begin(), order.end(),
              [&](size_t a, size_t b) { return angle[a] != angle[b] ? angle[a] < angle[b] : a < b; });

    int64_t base = static_cast<int64_t>(ox.size());
    for (size_t i : order) {
      ox.push_back(pts[i][0]);
      oy.push_back(pts[i][1]);
      oz.push_back(pts[i][2]);
      for (size_t f = 0; f < vfields.size(); ++f) vvals[f].push_back(pt_vvals[f][i]);
    }
    for (size_t i = 1; i + 1 < pts.size(); ++i) {
      conn.push_back(base);
      conn.push_back(base + static_cast<int64_t>(i));
      conn.push_back(base + static_cast<int64_t>(i) + 1);
      for (size_t f = 0; f < cfields.size(); ++f)
        cvals[f].push_back(cfields[f]->values[static_cast<size_t>(cell)]);
    }
  }

  DataNode out = make_explicit_channel(std::move(ox), std::move(oy), std::move(oz), std::move(conn),
                                       TopologyKind::Tri);
  // input field order preserved
  size_t vf = 0, cf = 0;
  for (const FieldView& f : m.fields) {
    if (f.association == Association::Vertex)
      add_field(out, f.name, Association::Vertex, std::move(vvals[vf++]));
    else
      add_field(out, f.name, Association::Cell, std::move(cvals[cf++]));
  }
  return out;
}

// ---------------------------------------------------------------------------
// resample onto a uniform grid
// ---------------------------------------------------------------------------

namespace {

// Trilinear basis over the VTK hexahedron corner order.
void trilinear_weights(double pu, double pv, double pw, double w[8]) {
  double mu = 1.0 - pu, mv = 1.0 - pv, mw = 1.0 - pw;
  w[0] = mu * mv * mw;
  w[1] = pu * mv * mw;
  w[2] = pu * pv * mw;
  w[3] = mu * pv * mw;
  w[4] = mu * mv * pw;
  w[5] = pu * mv * pw;
  w[6] = pu * pv * pw;
  w[7] = mu * pv * pw;
}

// Solves J * x = r in place; returns false when J is (near) singular.
bool solve3(double J[3][3], const double r[3], double x[3]) {
  double a[3][4] = {{J[0][0], J[0][1], J[0][2], r[0]},
                    {J[1][0], J[1][1], J[1][2], r[1]},
                    {J[2][0], J[2][1], J[2][2], r[2]}};
  for (int col = 0; col < 3; ++col) {
    int piv = col;
    for (int row = col + 1; row < 3; ++row)
      if (std::abs(a[row][col]) > std::abs(a[piv][col])) piv = row;
    if (std::abs(a[piv][col]) < 1e-300) return false;
    if (piv != col)
      for (int c = col; c < 4; ++c) std::swap(a[piv][c], a[col][c]);
    for (int row = col + 1; row < 3; ++row) {
      double f = a[row][col] / a[col][col];
      for (int c = col; c < 4; ++c) a[row][c] -= f * a[col][c];
    }
  }
  for (int row = 2; row >= 0; --row) {
    double s = a[row][3];
    for (int c = row + 1; c < 3; ++c) s -= a[row][c] * x[c];
    x[row] = s / a[row][row];
  }
  return true;
}

struct HexLocator {
  const MeshChannel& mesh;
  std::array<double, 3> lo{0, 0, 0}, hi{0, 0, 0};
  std::array<int64_t, 3> grid{1, 1, 1};
  std::array<double, 3> inv_bin{0, 0, 0};
  std::vector<std::vector<int64_t>> bins;
  std::vector<std::array<double, 6>> cell_box; // inflated per-cell bbox

  explicit HexLocator(const MeshChannel& m) : mesh(m) {
    auto b = m.bounds();
    lo = b[0];
    hi = b[1];
    double max_extent = 0.0;
    for (int a = 0; a < 3; ++a) max_extent = std::max(max_extent, hi[a] - lo[a]);
    double pad = std::max(1e-12, 1e-9 * max_extent);

    int64_t g = std::clamp<int64_t>(
        static_cast<int64_t>(std::llround(std::cbrt(static_cast<double>(std::max<int64_t>(m.cell_count, 1))))),
        1, 64);
    grid = {g, g, g};
    for (int a = 0; a < 3; ++a) {
      double extent = std::max(hi[a] - lo[a], 1e-12);
      inv_bin[a] = static_cast<double>(grid[a]) / extent;
    }
    bins.resize(static_cast<size_t>(grid[0] * grid[1] * grid[2]));
    cell_box.resize(static_cast<size_t>(m.cell_count));

    for (int64_t cell = 0; cell < m.cell_count; ++cell) {
      auto ids = m.hex_corners(cell);
      std::array<double, 6> box{1e300, 1e300, 1e300, -1e300, -1e300, -1e300};
      for (int c = 0; c < 8; ++c) {
        auto p = m.vertex(ids[c]);
        for (int a = 0; a < 3; ++a) {
          box[a] = std::min(box[a], p[a]);
          box[a + 3] = std::max(box[a + 3], p[a]);
        }
      }
      for (int a = 0; a < 3; ++a) {
        box[a] -= pad;
        box[a + 3] += pad;
      }
      cell_box[static_cast<size_t>(cell)] = box;
      std::array<int64_t, 3> b0, b1;
      for (int a = 0; a < 3; ++a) {
        b0[a] = std::clamp<int64_t>(static_cast<int64_t>((box[a] - lo[a]) * inv_bin[a]), 0, grid[a] - 1);
        b1[a] = std::clamp<int64_t>(static_cast<int64_t>((box[a + 3] - lo[a]) * inv_bin[a]), 0, grid[a] - 1);
      }
      for (int64_t bk = b0[2]; bk <= b1[2]; ++bk)
        for (int64_t bj = b0[1]; bj <= b1[1]; ++bj)
          for (int64_t bi = b0[0]; bi <= b1[0]; ++bi)
            bins[static_cast<size_t>(bi + grid[0] * (bj + grid[1] * bk))].push_back(cell);
    }
  }

  // Inverse trilinear map via Newton; param tolerance admits shared faces.
  bool invert(int64_t cell, const std::array<double, 3>& p, std::array<double, 3>& xi,
              bool& converged) const {
    auto ids = mesh.hex_corners(cell);
    std::array<double, 3> corners[8];
    for (int c = 0; c < 8; ++c) corners[c] = mesh.vertex(ids[c]);

    double u = 0.5, v = 0.5, w = 0.5;
    converged = false;
    for (int iter = 0; iter < 20; ++iter) {
      double wgt[8];
      trilinear_weights(u, v, w, wgt);
      double pos[3] = {0, 0, 0};
      for (int c = 0; c < 8; ++c)
        for (int a = 0; a < 3; ++a) pos[a] += wgt[c] * corners[c][a];
      double res[3] = {pos[0] - p[0], pos[1] - p[1], pos[2] - p[2]};
      double err = std::max({std::abs(res[0]), std::abs(res[1]), std::abs(res[2])});
      if (err <= 1e-10) {
        converged = true;
        break;
      }
      double mv = 1.0 - v, mw = 1.0 - w, mu = 1.0 - u;
      double du[8] = {-mv * mw, mv * mw, v * mw, -v * mw, -mv * w, mv * w, v * w, -v * w};
      double dv[8] = {-mu * mw, -u * mw, u * mw, mu * mw, -mu * w, -u * w, u * w, mu * w};
      double dw[8] = {-mu * mv, -u * mv, -u * v, -mu * v, mu * mv, u * mv, u * v, mu * v};
      double J[3][3] = {{0, 0, 0}, {0, 0, 0}, {0, 0, 0}};
      for (int c = 0; c < 8; ++c)
        for (int a = 0; a < 3; ++a) {
          J[a][0] += du[c] * corners[c][a];
          J[a][1] += dv[c] * corners[c][a];
          J[a][2] += dw[c] * corners[c][a];
        }
      double delta[3];
      if (!solve3(J, res, delta)) break;
      u -= delta[0];
      v -= delta[1];
      w -= delta[2];
    }
    xi = {u, v, w};
    constexpr double slack = 1e-9;
    return converged && u >= -slack && u <= 1.0 + slack && v >= -slack && v <= 1.0 + slack &&
           w >= -slack && w <= 1.0 + slack;
  }

  // Finds the containing cell; falls back to the nearest corner of a
  // non-converged candidate when Newton gives up.
  bool locate(const std::array<double, 3>& p, int64_t& cell, std::array<double, 3>& xi,
              bool& used_fallback) const {
    used_fallback = false;
    std::array<int64_t, 3> b;
    for (int a = 0; a < 3; ++a) {
      if (p[a] < lo[a] - 1e-12 || p[a] > hi[a] + 1e-12) return false;
      b[a] = std::clamp<int64_t>(static_cast<int64_t>((p[a] - lo[a]) * inv_bin[a]), 0, grid[a] - 1);
    }
    const auto& candidates = bins[static_cast<size_t>(b[0] + grid[0] * (b[1] + grid[1] * b[2]))];
    int64_t stubborn = -1;
    for (int64_t c : candidates) {
      const auto& box = cell_box[static_cast<size_t>(c)];
      if (p[0] < box[0] || p[0] > box[3] || p[1] < box[1] || p[1] > box[4] || p[2] < box[2] ||
          p[2] > box[5])
        continue;
      bool converged = false;
      if (invert(c, p, xi, converged)) {
        cell = c;
        return true;
      }
      if (!converged && stubborn < 0) stubborn = c;
    }
    if (stubborn >= 0) {
      // nearest corner of the candidate Newton could not resolve
      auto ids = mesh.hex_corners(stubborn);
      double best = 1e300;
      int best_c = 0;
      for (int c = 0; c < 8; ++c) {
        auto q = mesh.vertex(ids[c]);
        double d2 = (q[0] - p[0]) * (q[0] - p[0]) + (q[1] - p[1]) * (q[1] - p[1]) +
                    (q[2] - p[2]) * (q[2] - p[2]);
        if (d2 < best) {
          best = d2;
          best_c = c;
        }
      }
      cell = stubborn;
      xi = {best_c == 1 || best_c == 2 || best_c == 5 || best_c == 6 ? 1.0 : 0.0,
            best_c == 2 || best_c == 3 || best_c == 6 || best_c == 7 ? 1.0 : 0.0,
            best_c >= 4 ? 1.0 : 0.0};
      used_fallback = true;
      return true;
    }
    return false;
  }
};

struct UniformLocator {
  const UniformCoords& u;
  std::array<int64_t, 3> cells;

  explicit UniformLocator(const UniformCoords& uc) : u(uc) {
    cells = {u.dims[0] - 1, u.dims[1] - 1, u.dims[2] - 1};
  }

  bool locate(const std::array<double, 3>& p, std::array<int64_t, 3>& cell,
              std::array<double, 3>& frac) const {
    for (int a = 0; a < 3; ++a) {
      double q = (p[a] - u.origin[a]) / u.spacing[a];
      if (q < -1e-9 || q > static_cast<double>(u.dims[a] - 1) + 1e-9) return false;
      int64_t i = std::clamp<int64_t>(static_cast<int64_t>(std::floor(q)), 0, cells[a] - 1);
      cell[a] = i;
      frac[a] = std::clamp(q - static_cast<double>(i), 0.0, 1.0);
    }
    return true;
  }
};

} // namespace

DataNode resample_to_grid(std::array<int64_t, 3> dims,
                          const std::optional<std::array<double, 6>>& bounds,
                          const DataNode& channel, Provenance* provenance) {
  MeshChannel m = validate_mesh(channel);
  if (m.topology == TopologyKind::Tri)
    fail(ErrorCode::PipelineStageMismatch, "resample requires a uniform or explicit-hex mesh");
  if (m.is_uniform())
    for (int a = 0; a < 3; ++a)
      if (m.uniform->dims[a] < 2)
        fail(ErrorCode::PipelineStageMismatch, "resample requires a 3D uniform mesh");
  for (int a = 0; a < 3; ++a)
    if (dims[a] < 2) fail(ErrorCode::ConfigInvalid, "resample dims must be >= 2 per axis");

  std::array<double, 3> blo, bhi;
  if (bounds) {
    for (int a = 0; a < 3; ++a) {
      blo[a] = (*bounds)[a];
      bhi[a] = (*bounds)[a + 3];
    }
  } else {
    auto b = m.bounds();
    blo = b[0];
    bhi = b[1];
  }
  for (int a = 0; a < 3; ++a)
    if (!(bhi[a] > blo[a]))
      fail(ErrorCode::ConfigInvalid, "resample bounds degenerate along axis " + std::to_string(a));

  std::array<double, 3> spacing;
  for (int a = 0; a < 3; ++a) spacing[a] = (bhi[a] - blo[a]) / static_cast<double>(dims[a] - 1);
  DataNode out = make_uniform_channel(dims, blo, spacing);

  std::vector<const FieldView*> vfields, cfields;
  for (const FieldView& f : m.fields)
    (f.association == Association::Vertex ? vfields : cfields).push_back(&f);

  std::optional<UniformLocator> uloc;
  std::optional<HexLocator> hloc;
  if (m.is_uniform()) uloc.emplace(*m.uniform);
  else hloc.emplace(m);

  // Evaluates all requested fields at one point; false when p is outside.
  auto sample_vertex_fields = [&](const std::array<double, 3>& p, std::vector<double*>& dst,
                                  size_t at) -> bool {
    if (uloc) {
      std::array<int64_t, 3> cell;
      std::array<double, 3> frac;
      if (!uloc->locate(p, cell, frac)) return false;
      double w[8];
      trilinear_weights(frac[0], frac[1], frac[2], w);
      auto vid = [&](int64_t i, int64_t j, int64_t k) {
        return i + m.uniform->dims[0] * (j + m.uniform->dims[1] * k);
      };
      int64_t corner[8] = {vid(cell[0], cell[1], cell[2]),
                           vid(cell[0] + 1, cell[1], cell[2]),
                           vid(cell[0] + 1, cell[1] + 1, cell[2]),
                           vid(cell[0], cell[1] + 1, cell[2]),
                           vid(cell[0], cell[1], cell[2] + 1),
                           vid(cell[0] + 1, cell[1], cell[2] + 1),
                           vid(cell[0] + 1, cell[1] + 1, cell[2] + 1),
                           vid(cell[0], cell[1] + 1, cell[2] + 1)};
      for (size_t f = 0; f < vfields.size(); ++f) {
        double acc = 0.0;
        for (int c = 0; c < 8; ++c) acc += w[c] * vfields[f]->values[static_cast<size_t>(corner[c])];
        dst[f][at] = acc;
      }
      return true;
    }
    int64_t cell = 0;
    std::array<double, 3> xi;
    bool fallback = false;
    if (!hloc->locate(p, cell, xi, fallback)) return false;
    if (fallback && provenance) ++provenance->newton_fallbacks;
    double w[8];
    trilinear_weights(xi[0], xi[1], xi[2], w);
    auto ids = m.hex_corners(cell);
    for (size_t f = 0; f < vfields.size(); ++f) {
      double acc = 0.0;
      for (int c = 0; c < 8; ++c) acc += w[c] * vfields[f]->values[static_cast<size_t>(ids[c])];
      dst[f][at] = acc;
    }
    return true;
  };

  auto sample_cell_fields = [&](const std::array<double, 3>& p, std::vector<double*>& dst,
                                size_t at) -> bool {
    int64_t cell = -1;
    if (uloc) {
      std::array<int64_t, 3> ci;
      std::array<double, 3> frac;
      if (!uloc->locate(p, ci, frac)) return false;
      cell = ci[0] + uloc->cells[0] * (ci[1] + uloc->cells[1] * ci[2]);
    } else {
      std::array<double, 3> xi;
      bool fallback = false;
      if (!hloc->locate(p, cell, xi, fallback)) return false;
      if (fallback && provenance) ++provenance->newton_fallbacks;
    }
    for (size_t f = 0; f < cfields.size(); ++f) dst[f][at] = cfields[f]->values[static_cast<size_t>(cell)];
    return true;
  };

  if (!vfields.empty()) {
    int64_t nvert = dims[0] * dims[1] * dims[2];
    std::vector<std::vector<double>> vals(vfields.size(),
                                          std::vector<double>(static_cast<size_t>(nvert), 0.0));
    std::vector<double*> dst(vfields.size());
    for (size_t f = 0; f < vfields.size(); ++f) dst[f] = vals[f].data();
    size_t at = 0;
    for (int64_t k = 0; k < dims[2]; ++k)
      for (int64_t j = 0; j < dims[1]; ++j)
        for (int64_t i = 0; i < dims[0]; ++i, ++at) {
          std::array<double, 3> p{blo[0] + static_cast<double>(i) * spacing[0],
                                  blo[1] + static_cast<double>(j) * spacing[1],
                                  blo[2] + static_cast<double>(k) * spacing[2]};
          if (!sample_vertex_fields(p, dst, at) && provenance) ++provenance->out_of_domain;
        }
    for (size_t f = 0; f < vfields.size(); ++f)
      add_field(out, vfields[f]->name, Association::Vertex, std::move(vals[f]));
  }

  if (!cfields.empty()) {
    std::array<int64_t, 3> oc{dims[0] - 1, dims[1] - 1, dims[2] - 1};
    int64_t ncell = oc[0] * oc[1] * oc[2];
    std::vector<std::vector<double>> vals(cfields.size(),
                                          std::vector<double>(static_cast<size_t>(ncell), 0.0));
    std::vector<double*> dst(cfields.size());
    for (size_t f = 0; f < cfields.size(); ++f) dst[f] = vals[f].data();
    size_t at = 0;
    for (int64_t k = 0; k < oc[2]; ++k)
      for (int64_t j = 0; j < oc[1]; ++j)
        for (int64_t i = 0; i < oc[0]; ++i, ++at) {
          std::array<double, 3> p{blo[0] + (static_cast<double>(i) + 0.5) * spacing[0],
                                  blo[1] + (static_cast<double>(j) + 0.5) * spacing[1],
                                  blo[2] + (static_cast<double>(k) + 0.5) * spacing[2]};
          if (!sample_cell_fields(p, dst, at) && provenance) ++provenance->out_of_domain;
        }
    for (size_t f = 0; f < cfields.size(); ++f)
      add_field(out, cfields[f]->name, Association::Cell, std::move(vals[f]));
  }

  // field order as in the input
  if (!m.fields.empty()) {
    DataNode ordered;
    for (const FieldView& f : m.fields) ordered.child(f.name) = *out.find("fields/" + f.name);
    out.set("fields", std::move(ordered));
  }
  return out;
}

// ---------------------------------------------------------------------------
// pipeline execution
// ---------------------------------------------------------------------------

namespace {

// 0-cell stand-in that preserves the field schema of `m`.
DataNode make_empty_like(const MeshChannel& m) {
  DataNode out = make_explicit_channel({}, {}, {}, {}, TopologyKind::Tri);
  for (const FieldView& f : m.fields) add_field(out, f.name, f.association, {});
  return out;
}

} // namespace

ReducedOutput run_pipeline(const PipelineSpec& spec, const DataNode& input) {
  if (spec.stages.empty()) fail(ErrorCode::PipelineEmpty, "pipeline has no stages");
  ReducedOutput result;
  MeshChannel in_mesh = validate_mesh(input);
  result.provenance.input_cells = in_mesh.cell_count;

  DataNode current = input;
  for (const Stage& stage : spec.stages) {
    MeshChannel m = validate_mesh(current);
    if (const auto* sf = std::get_if<SelectFieldsStage>(&stage)) {
      current = select_fields(sf->keep, current);
    } else if (const auto* sl = std::get_if<SliceStage>(&stage)) {
      if (m.is_empty()) {
        current = make_empty_like(m);
      } else if (sl->axis_aligned()) {
        if (!m.is_uniform())
          fail(ErrorCode::PipelineStageMismatch,
               "axis-aligned slice stage on a non-uniform mesh");
        const UniformCoords& u = *m.uniform;
        int axis = *sl->axis;
        double lo = u.origin[axis];
        double hi = lo + u.spacing[axis] * static_cast<double>(u.dims[axis] - 1);
        // half-open ownership so exactly one partition emits a cut that
        // falls on a slab boundary
        if (sl->coordinate >= lo && sl->coordinate < hi)
          current = slice_axis_aligned(axis, sl->coordinate, current);
        else
          current = make_empty_like(m);
      } else {
        current = slice_plane_hex(sl->origin, sl->normal, current, &result.provenance);
      }
    } else if (const auto* rs = std::get_if<ResampleStage>(&stage)) {
      if (m.is_empty())
        current = make_empty_like(m);
      else
        current = resample_to_grid(rs->dims, rs->bounds, current, &result.provenance);
    }
  }

  MeshChannel out_mesh = validate_mesh(current);
  result.provenance.output_cells = out_mesh.cell_count;
  result.channel = std::move(current);
  return result;
}

} // namespace hxit
