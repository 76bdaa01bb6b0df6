#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hxit/node.hpp"

namespace hxit {

// Mesh channel node schema
// ------------------------
//   coordset/
//     kind    = "uniform" | "explicit"
//     dims    = int64_array[3]   vertex counts        (uniform)
//     origin  = float64_array[3]                      (uniform)
//     spacing = float64_array[3] all > 0              (uniform)
//     x, y, z = float64_array    equal lengths        (explicit)
//   topology/                    (omitted => implied by a uniform coordset)
//     kind         = "uniform" | "hex" | "tri"
//     connectivity = int64_array 8 per cell (hex), 3 per cell (tri)
//   fields/
//     <name>/
//       association = "vertex" | "cell"
//       values      = float64_array  one scalar per entity
//
// A uniform dims component of 1 marks a flat axis (the 1-vertex-thick output
// of an axis-aligned slice); at most one axis may be flat. Cell counts treat
// flat axes as a single layer.

enum class TopologyKind { Uniform, Hex, Tri };
enum class Association { Vertex, Cell };

struct UniformCoords {
  std::array<int64_t, 3> dims;   // vertex counts per axis
  std::array<double, 3> origin;
  std::array<double, 3> spacing;
};

struct FieldView {
  std::string name;
  Association association;
  std::span<const double> values;
};

/// Typed, validated view over a mesh channel node. Spans alias the node the
/// view was created from; keep that node alive.
struct MeshChannel {
  TopologyKind topology = TopologyKind::Uniform;

  std::optional<UniformCoords> uniform; // set iff coordset is uniform
  std::span<const double> x, y, z;      // explicit coordset
  std::span<const int64_t> connectivity; // hex/tri topologies

  std::vector<FieldView> fields;

  int64_t vertex_count = 0;
  int64_t cell_count = 0;

  bool is_uniform() const { return topology == TopologyKind::Uniform; }
  bool is_empty() const { return cell_count == 0; }

  const FieldView* field(const std::string& name) const;

  /// Vertex position (explicit coords or uniform lattice position).
  std::array<double, 3> vertex(int64_t v) const;

  /// Corner vertex ids of one cell in VTK hexahedron order (uniform/hex only).
  std::array<int64_t, 8> hex_corners(int64_t cell) const;

  /// Axis-aligned bounding box {min, max}.
  std::array<std::array<double, 3>, 2> bounds() const;

  /// Per-axis cell counts for uniform meshes (flat axes count one layer).
  std::array<int64_t, 3> uniform_cells() const;
};

/// Validates the channel against the schema above and returns a typed view.
/// Distinct error codes: MeshMissingCoordset, MeshBadCoordset,
/// MeshUnknownTopology, MeshConnectivityRange, MeshFieldLength,
/// MeshNonScalarField.
MeshChannel validate_mesh(const DataNode& channel);

// Builders ------------------------------------------------------------------

DataNode make_uniform_channel(std::array<int64_t, 3> dims, std::array<double, 3> origin,
                              std::array<double, 3> spacing);
DataNode make_explicit_channel(std::vector<double> x, std::vector<double> y,
                               std::vector<double> z, std::vector<int64_t> connectivity,
                               TopologyKind topology);

/// Appends a scalar field (values length must match the association's entity
/// count; checked on the next validate).
void add_field(DataNode& channel, const std::string& name, Association association,
               std::vector<double> values);

const char* association_name(Association a);
const char* topology_kind_name(TopologyKind k);

} // namespace hxit
