#include "hxit/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace hxit {

const char* association_name(Association a) {
  return a == Association::Vertex ? "vertex" : "cell";
}

const char* topology_kind_name(TopologyKind k) {
  switch (k) {
    case TopologyKind::Uniform: return "uniform";
    case TopologyKind::Hex: return "hex";
    case TopologyKind::Tri: return "tri";
  }
  return "?";
}

const FieldView* MeshChannel::field(const std::string& name) const {
  for (const FieldView& f : fields)
    if (f.name == name) return &f;
  return nullptr;
}

std::array<double, 3> MeshChannel::vertex(int64_t v) const {
  if (uniform) {
    const UniformCoords& u = *uniform;
    int64_t i = v % u.dims[0];
    int64_t j = (v / u.dims[0]) % u.dims[1];
    int64_t k = v / (u.dims[0] * u.dims[1]);
    return {u.origin[0] + static_cast<double>(i) * u.spacing[0],
            u.origin[1] + static_cast<double>(j) * u.spacing[1],
            u.origin[2] + static_cast<double>(k) * u.spacing[2]};
  }
  return {x[static_cast<size_t>(v)], y[static_cast<size_t>(v)], z[static_cast<size_t>(v)]};
}

std::array<int64_t, 3> MeshChannel::uniform_cells() const {
  const UniformCoords& u = *uniform;
  return {std::max<int64_t>(u.dims[0] - 1, 1), std::max<int64_t>(u.dims[1] - 1, 1),
          std::max<int64_t>(u.dims[2] - 1, 1)};
}

std::array<int64_t, 8> MeshChannel::hex_corners(int64_t cell) const {
  if (topology == TopologyKind::Hex) {
    std::array<int64_t, 8> c;
    for (int i = 0; i < 8; ++i) c[static_cast<size_t>(i)] = connectivity[static_cast<size_t>(cell * 8 + i)];
    return c;
  }
  // implied lattice cell, VTK hexahedron corner order
  const UniformCoords& u = *uniform;
  auto nc = uniform_cells();
  int64_t ci = cell % nc[0];
  int64_t cj = (cell / nc[0]) % nc[1];
  int64_t ck = cell / (nc[0] * nc[1]);
  auto vid = [&](int64_t i, int64_t j, int64_t k) {
    return i + u.dims[0] * (j + u.dims[1] * k);
  };
  return {vid(ci, cj, ck),         vid(ci + 1, cj, ck),
          vid(ci + 1, cj + 1, ck), vid(ci, cj + 1, ck),
          vid(ci, cj, ck + 1),     vid(ci + 1, cj, ck + 1),
          vid(ci + 1, cj + 1, ck + 1), vid(ci, cj + 1, ck + 1)};
}

std::array<std::array<double, 3>, 2> MeshChannel::bounds() const {
  std::array<double, 3> lo{0, 0, 0}, hi{0, 0, 0};
  if (uniform) {
    const UniformCoords& u = *uniform;
    for (int a = 0; a < 3; ++a) {
      lo[a] = u.origin[a];
      hi[a] = u.origin[a] + u.spacing[a] * static_cast<double>(u.dims[a] - 1);
    }
    return {lo, hi};
  }
  lo.fill(std::numeric_limits<double>::infinity());
  hi.fill(-std::numeric_limits<double>::infinity());
  for (size_t v = 0; v < x.size(); ++v) {
    lo[0] = std::min(lo[0], x[v]); hi[0] = std::max(hi[0], x[v]);
    lo[1] = std::min(lo[1], y[v]); hi[1] = std::max(hi[1], y[v]);
    lo[2] = std::min(lo[2], z[v]); hi[2] = std::max(hi[2], z[v]);
  }
  if (x.empty()) { lo.fill(0.0); hi.fill(0.0); }
  return {lo, hi};
}

// ---------------------------------------------------------------------------
// validation
// ---------------------------------------------------------------------------

namespace {

std::array<double, 3> triple_f64(const DataNode& n, const std::string& what) {
  auto a = n.as_float64_array();
  if (a.size() != 3) fail(ErrorCode::MeshBadCoordset, what + " must have 3 components");
  return {a[0], a[1], a[2]};
}

const DataNode& require(const DataNode& parent, const char* name, ErrorCode code,
                        const std::string& what) {
  const DataNode* n = parent.child_ptr(name);
  if (!n) fail(code, what);
  return *n;
}

} // namespace

MeshChannel validate_mesh(const DataNode& channel) {
  MeshChannel m;

  const DataNode* coordset = channel.find("coordset");
  if (!coordset) fail(ErrorCode::MeshMissingCoordset, "channel has no coordset");
  const DataNode* cs_kind = coordset->find("kind");
  if (!cs_kind || cs_kind->kind() != NodeKind::String)
    fail(ErrorCode::MeshBadCoordset, "coordset/kind missing or not a string");

  if (cs_kind->as_string() == "uniform") {
    UniformCoords u{};
    auto dims_node = require(*coordset, "dims", ErrorCode::MeshBadCoordset, "uniform coordset has no dims");
    auto dims = dims_node.as_int64_array();
    if (dims.size() != 3) fail(ErrorCode::MeshBadCoordset, "dims must have 3 components");
    int flat_axes = 0;
    for (int a = 0; a < 3; ++a) {
      u.dims[a] = dims[a];
      if (u.dims[a] < 1)
        fail(ErrorCode::MeshBadCoordset, "dims component " + std::to_string(a) + " < 1");
      if (u.dims[a] == 1) ++flat_axes;
    }
    if (flat_axes > 1)
      fail(ErrorCode::MeshBadCoordset, "more than one flat axis (dims == 1)");
    u.origin = triple_f64(require(*coordset, "origin", ErrorCode::MeshBadCoordset,
                                  "uniform coordset has no origin"), "origin");
    u.spacing = triple_f64(require(*coordset, "spacing", ErrorCode::MeshBadCoordset,
                                   "uniform coordset has no spacing"), "spacing");
    for (int a = 0; a < 3; ++a)
      if (!(u.spacing[a] > 0.0))
        fail(ErrorCode::MeshBadCoordset, "spacing component " + std::to_string(a) + " not positive");

    m.uniform = u;
    m.vertex_count = u.dims[0] * u.dims[1] * u.dims[2];
    auto nc = std::array<int64_t, 3>{std::max<int64_t>(u.dims[0] - 1, 1),
                                     std::max<int64_t>(u.dims[1] - 1, 1),
                                     std::max<int64_t>(u.dims[2] - 1, 1)};
    m.cell_count = nc[0] * nc[1] * nc[2];

    const DataNode* topo = channel.find("topology");
    if (topo) {
      const DataNode* tk = topo->find("kind");
      if (!tk || tk->kind() != NodeKind::String || tk->as_string() != "uniform")
        fail(ErrorCode::MeshUnknownTopology,
             "uniform coordset requires uniform (or omitted) topology");
    }
    m.topology = TopologyKind::Uniform;
  } else if (cs_kind->as_string() == "explicit") {
    const DataNode& xn = require(*coordset, "x", ErrorCode::MeshBadCoordset, "explicit coordset has no x");
    const DataNode& yn = require(*coordset, "y", ErrorCode::MeshBadCoordset, "explicit coordset has no y");
    const DataNode& zn = require(*coordset, "z", ErrorCode::MeshBadCoordset, "explicit coordset has no z");
    m.x = xn.as_float64_array();
    m.y = yn.as_float64_array();
    m.z = zn.as_float64_array();
    if (m.x.size() != m.y.size() || m.x.size() != m.z.size())
      fail(ErrorCode::MeshBadCoordset, "x/y/z lengths differ");
    m.vertex_count = static_cast<int64_t>(m.x.size());

    const DataNode* topo = channel.find("topology");
    if (!topo) fail(ErrorCode::MeshUnknownTopology, "explicit coordset requires a topology");
    const DataNode* tk = topo->find("kind");
    if (!tk || tk->kind() != NodeKind::String)
      fail(ErrorCode::MeshUnknownTopology, "topology/kind missing or not a string");
    const std::string& kind = tk->as_string();
    int verts_per_cell = 0;
    if (kind == "hex") {
      m.topology = TopologyKind::Hex;
      verts_per_cell = 8;
    } else if (kind == "tri") {
      m.topology = TopologyKind::Tri;
      verts_per_cell = 3;
    } else {
      fail(ErrorCode::MeshUnknownTopology, "unknown topology kind '" + kind + "'");
    }
    const DataNode& conn_node = require(*topo, "connectivity", ErrorCode::MeshUnknownTopology,
                                        "topology has no connectivity");
    m.connectivity = conn_node.as_int64_array();
    if (m.connectivity.size() % static_cast<size_t>(verts_per_cell) != 0)
      fail(ErrorCode::MeshConnectivityRange,
           "connectivity length " + std::to_string(m.connectivity.size()) +
               " is not a multiple of " + std::to_string(verts_per_cell));
    for (int64_t idx : m.connectivity)
      if (idx < 0 || idx >= m.vertex_count)
        fail(ErrorCode::MeshConnectivityRange,
             "connectivity index " + std::to_string(idx) + " outside [0, " +
                 std::to_string(m.vertex_count) + ")");
    m.cell_count = static_cast<int64_t>(m.connectivity.size()) / verts_per_cell;
  } else {
    fail(ErrorCode::MeshBadCoordset, "unknown coordset kind '" + cs_kind->as_string() + "'");
  }

  if (const DataNode* fields = channel.find("fields")) {
    if (!fields->is_object()) fail(ErrorCode::MeshNonScalarField, "fields is not an object");
    for (size_t i = 0; i < fields->child_count(); ++i) {
      const std::string& name = fields->child_name(i);
      const DataNode& f = fields->child_at(i);
      const DataNode* assoc = f.find("association");
      if (!assoc || assoc->kind() != NodeKind::String)
        fail(ErrorCode::MeshNonScalarField, "field '" + name + "' has no association");
      Association a;
      if (assoc->as_string() == "vertex") a = Association::Vertex;
      else if (assoc->as_string() == "cell") a = Association::Cell;
      else fail(ErrorCode::MeshNonScalarField,
                "field '" + name + "' has unknown association '" + assoc->as_string() + "'");
      const DataNode* values = f.find("values");
      if (!values || values->kind() != NodeKind::Float64Array)
        fail(ErrorCode::MeshNonScalarField,
             "field '" + name + "' values must be a single float64_array (scalar per entity)");
      auto vals = values->as_float64_array();
      int64_t expected = (a == Association::Vertex) ? m.vertex_count : m.cell_count;
      if (static_cast<int64_t>(vals.size()) != expected)
        fail(ErrorCode::MeshFieldLength,
             "field '" + name + "' has " + std::to_string(vals.size()) + " values, expected " +
                 std::to_string(expected) + " (" + association_name(a) + ")");
      m.fields.push_back(FieldView{name, a, vals});
    }
  }

  return m;
}

// ---------------------------------------------------------------------------
// builders
// ---------------------------------------------------------------------------

DataNode make_uniform_channel(std::array<int64_t, 3> dims, std::array<double, 3> origin,
                              std::array<double, 3> spacing) {
  DataNode ch;
  ch.set("coordset/kind", DataNode::string("uniform"));
  ch.set("coordset/dims", DataNode::int64_array({dims[0], dims[1], dims[2]}));
  ch.set("coordset/origin", DataNode::float64_array({origin[0], origin[1], origin[2]}));
  ch.set("coordset/spacing", DataNode::float64_array({spacing[0], spacing[1], spacing[2]}));
  ch.child("fields");
  return ch;
}

DataNode make_explicit_channel(std::vector<double> x, std::vector<double> y,
                               std::vector<double> z, std::vector<int64_t> connectivity,
                               TopologyKind topology) {
  DataNode ch;
  ch.set("coordset/kind", DataNode::string("explicit"));
  ch.set("coordset/x", DataNode::float64_array(std::move(x)));
  ch.set("coordset/y", DataNode::float64_array(std::move(y)));
  ch.set("coordset/z", DataNode::float64_array(std::move(z)));
  ch.set("topology/kind", DataNode::string(topology_kind_name(topology)));
  ch.set("topology/connectivity", DataNode::int64_array(std::move(connectivity)));
  ch.child("fields");
  return ch;
}

void add_field(DataNode& channel, const std::string& name, Association association,
               std::vector<double> values) {
  DataNode& f = channel.child("fields").child(name);
  f.set("association", DataNode::string(association_name(association)));
  f.set("values", DataNode::float64_array(std::move(values)));
}

} // namespace hxit
