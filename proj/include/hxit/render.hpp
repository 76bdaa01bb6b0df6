#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "hxit/config.hpp"
#include "hxit/mesh.hpp"
#include "hxit/node.hpp"

namespace hxit {

struct ColorStop {
  double t = 0.0;
  std::array<double, 3> rgb{0, 0, 0};
};

/// Piecewise-linear colormap over [0, 1]. Inputs are clamped. The default
/// ramp is blue (0) through white (0.5) to red (1).
class Colormap {
public:
  Colormap();
  explicit Colormap(std::vector<ColorStop> stops);

  /// Textual form "t:r,g,b;t:r,g,b;..." with all components in [0, 1].
  static Colormap parse(const std::string& text);

  std::array<double, 3> map(double t) const;

private:
  std::vector<ColorStop> stops_; // sorted by t, never empty
};

/// 8-bit RGB raster, row 0 at the top.
struct ImageBuffer {
  int width = 0;
  int height = 0;
  std::vector<uint8_t> pixels; // 3 bytes per pixel, row-major

  ImageBuffer() = default;
  ImageBuffer(int w, int h)
      : width(w), height(h), pixels(static_cast<size_t>(w) * static_cast<size_t>(h) * 3, 0) {}

  uint8_t* at(int x, int y) { return pixels.data() + 3 * (static_cast<size_t>(y) * width + x); }
  const uint8_t* at(int x, int y) const {
    return pixels.data() + 3 * (static_cast<size_t>(y) * width + x);
  }
};

enum class RecipeKind { Slice, Volume };

/// One configured rendering of a mesh channel into an image.
///
/// Slice recipes accept a uniform grid with exactly one flat axis (drawn in
/// the plane of its two live axes) or a triangle soup (orthographic
/// projection along `axis`). Volume recipes accept a full 3D uniform grid;
/// the viewer sits on the positive side of `axis` and rays march toward
/// negative coordinates with absorption coefficient `kappa`.
struct RenderRecipe {
  std::string name;
  RecipeKind kind = RecipeKind::Slice;
  std::string field;
  int axis = 2;
  int width = 256;
  int height = 256;
  int samples = 0; // volume ray samples; 0 picks 2x the cell count along axis
  double kappa = 4.0;
  std::optional<std::array<double, 2>> range; // fixed normalization, else data min/max
  Colormap colormap;

  /// Reads render.recipe.<i>.* keys (kind, field, name, axis, width, height,
  /// samples, kappa, range, colormap) until the first missing kind.
  static std::vector<RenderRecipe> list_from_config(const Config& cfg);
};

/// Renders a reduced 2D grid or triangle soup. Pixels no geometry covers are
/// black; an empty channel gives an all-black image. A constant field under
/// automatic normalization maps to the colormap midpoint.
ImageBuffer render_slice(const DataNode& channel, const RenderRecipe& recipe);

/// Volume-renders a 3D uniform grid by front-to-back compositing with early
/// termination once accumulated opacity exceeds 0.999. Under automatic
/// normalization a constant field maps to 0 when the value is 0 and to 1
/// otherwise.
ImageBuffer render_volume(const DataNode& channel, const RenderRecipe& recipe);

/// Dispatches on recipe.kind.
ImageBuffer render(const DataNode& channel, const RenderRecipe& recipe);

/// Binary PPM: "P6\n<width> <height>\n255\n" then raw RGB bytes.
void write_image(const std::string& path, const ImageBuffer& image);
std::vector<uint8_t> encode_ppm(const ImageBuffer& image);

/// "step<step>_<recipe>.ppm"
std::string image_filename(uint64_t step, const std::string& recipe);

/// Combines per-rank channels into one renderable channel: empty parts are
/// dropped, a single survivor passes through, triangle soups are
/// concatenated, same-shape uniform grids merge by element-wise field
/// maximum, and uniform grids tiling the domain along one axis are stitched
/// into one grid (shared boundary planes collapse). Anything else is
/// RenderBadMesh.
DataNode merge_channel_parts(const std::vector<const DataNode*>& parts);

} // namespace hxit
