#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "hxit/config.hpp"
#include "hxit/mesh.hpp"
#include "hxit/node.hpp"

namespace hxit {

// Pipeline stages ------------------------------------------------------------

struct SelectFieldsStage {
  std::vector<std::string> keep;
};

struct SliceStage {
  // axis-aligned slice (uniform meshes)
  std::optional<int> axis;      // 0=x 1=y 2=z
  double coordinate = 0.0;
  // general plane (explicit-hex meshes)
  std::array<double, 3> origin{0, 0, 0};
  std::array<double, 3> normal{0, 0, 1};

  bool axis_aligned() const { return axis.has_value(); }
};

struct ResampleStage {
  std::array<int64_t, 3> dims{2, 2, 2};          // output vertex counts
  std::optional<std::array<double, 6>> bounds;    // {x0,y0,z0,x1,y1,z1}; nullopt = input bbox
};

using Stage = std::variant<SelectFieldsStage, SliceStage, ResampleStage>;

/// Ordered list of reduction stages, each consuming the previous output.
struct PipelineSpec {
  std::vector<Stage> stages;

  /// Reads pipeline.stage.<i>.* keys from a run config.
  static PipelineSpec from_config(const Config& cfg);
  bool empty() const { return stages.empty(); }
  std::string summary() const;
};

struct Provenance {
  int64_t input_cells = 0;
  int64_t output_cells = 0;
  int64_t skipped_cells = 0;     // degenerate hexes dropped by plane slicing
  int64_t out_of_domain = 0;     // resample points outside the source mesh
  int64_t newton_fallbacks = 0;  // resample points resolved by nearest corner
};

struct ReducedOutput {
  DataNode channel;
  Provenance provenance;
};

/// Runs the whole pipeline on a validated input channel. A spec with no
/// stages is PipelineEmpty.
/// A 0-cell input (empty partition) flows through every stage as a valid
/// 0-cell output; a slice plane outside the mesh yields a valid 0-cell
/// output rather than an error.
ReducedOutput run_pipeline(const PipelineSpec& spec, const DataNode& input);

// Individual operations -------------------------------------------------------

/// Geometry untouched (coordset and topology copied verbatim); fields
/// restricted to the keep set, input order preserved.
/// Throws PipelineMissingField when a kept name is absent.
DataNode select_fields(const std::vector<std::string>& keep, const DataNode& channel);

/// Axis-aligned cut of a uniform mesh. Output is a uniform grid with the
/// sliced axis reduced to a single vertex layer at the cut coordinate: an
/// (ni x nj x nk)-cell input sliced along k yields ni*nj cells. Vertex
/// fields are linearly interpolated between the two bounding vertex layers;
/// cell fields take the cell layer containing the plane.
/// Throws SliceOutOfBounds when the coordinate leaves the mesh extent and
/// PipelineStageMismatch when the mesh is not a 3D uniform grid.
DataNode slice_axis_aligned(int axis, double coordinate, const DataNode& channel);

/// General-plane cut of an explicit-hex mesh into a triangle soup. Each hex
/// with mixed corner signs contributes its cut polygon (edge interpolation
/// at t = d_a/(d_a-d_b)), ordered by angle around the centroid and fanned
/// into triangles. Vertex fields are interpolated at cut points; cell fields
/// are copied to each emitted triangle. Degenerate hexes (repeated corner
/// ids) are skipped and counted.
DataNode slice_plane_hex(const std::array<double, 3>& origin, const std::array<double, 3>& normal,
                         const DataNode& channel, Provenance* provenance = nullptr);

/// Resamples a uniform or explicit-hex mesh onto a uniform grid with the
/// given vertex dims over `bounds` (input bounding box when absent). Vertex
/// fields are interpolated trilinearly inside the containing source cell
/// (inverse-mapped by Newton iteration, tol 1e-10, max 20 iterations); cell
/// fields are piecewise constant. Sample points outside the source mesh get
/// 0.0 and are counted.
DataNode resample_to_grid(std::array<int64_t, 3> dims,
                          const std::optional<std::array<double, 6>>& bounds,
                          const DataNode& channel, Provenance* provenance = nullptr);

} // namespace hxit
