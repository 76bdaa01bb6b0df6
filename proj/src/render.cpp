#include "hxit/render.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include "hxit/error.hpp"

namespace hxit {

// ---------------------------------------------------------------------------
// colormap
// ---------------------------------------------------------------------------

Colormap::Colormap()
    : stops_{{0.0, {0.0, 0.0, 1.0}}, {0.5, {1.0, 1.0, 1.0}}, {1.0, {1.0, 0.0, 0.0}}} {}

Colormap::Colormap(std::vector<ColorStop> stops) : stops_(std::move(stops)) {
  if (stops_.empty()) fail(ErrorCode::ConfigInvalid, "colormap needs at least one stop");
  std::stable_sort(stops_.begin(), stops_.end(),
                   [](const ColorStop& a, const ColorStop& b) { return a.t < b.t; });
}

Colormap Colormap::parse(const std::string& text) {
  std::vector<ColorStop> stops;
  std::istringstream in(text);
  std::string item;
  while (std::getline(in, item, ';')) {
    if (item.empty()) continue;
    ColorStop stop;
    char colon = 0, c1 = 0, c2 = 0;
    std::istringstream part(item);
    if (!(part >> stop.t >> colon >> stop.rgb[0] >> c1 >> stop.rgb[1] >> c2 >> stop.rgb[2]) ||
        colon != ':' || c1 != ',' || c2 != ',')
      fail(ErrorCode::ConfigInvalid, "bad colormap stop '" + item + "' (want t:r,g,b)");
    stops.push_back(stop);
  }
  return Colormap(std::move(stops));
}

std::array<double, 3> Colormap::map(double t) const {
  t = std::clamp(t, 0.0, 1.0);
  if (t <= stops_.front().t) return stops_.front().rgb;
  if (t >= stops_.back().t) return stops_.back().rgb;
  for (size_t i = 0; i + 1 < stops_.size(); ++i) {
    if (t > stops_[i + 1].t) continue;
    double span = stops_[i + 1].t - stops_[i].t;
    if (span <= 0.0) return stops_[i + 1].rgb;
    double f = (t - stops_[i].t) / span;
    return {stops_[i].rgb[0] + f * (stops_[i + 1].rgb[0] - stops_[i].rgb[0]),
            stops_[i].rgb[1] + f * (stops_[i + 1].rgb[1] - stops_[i].rgb[1]),
            stops_[i].rgb[2] + f * (stops_[i + 1].rgb[2] - stops_[i].rgb[2])};
  }
  return stops_.back().rgb;
}

// ---------------------------------------------------------------------------
// recipes
// ---------------------------------------------------------------------------

std::vector<RenderRecipe> RenderRecipe::list_from_config(const Config& cfg) {
  std::vector<RenderRecipe> recipes;
  for (int i = 0;; ++i) {
    std::string prefix = "render.recipe." + std::to_string(i) + ".";
    auto kind = cfg.get(prefix + "kind");
    if (!kind) break;
    RenderRecipe r;
    if (*kind == "slice") r.kind = RecipeKind::Slice;
    else if (*kind == "volume") r.kind = RecipeKind::Volume;
    else fail(ErrorCode::ConfigInvalid, "config key '" + prefix + "kind': unknown kind '" + *kind + "'");
    r.field = cfg.require_string(prefix + "field");
    r.name = cfg.get_string(prefix + "name", *kind + std::to_string(i));
    std::string axis = cfg.get_string(prefix + "axis", "z");
    if (axis == "x") r.axis = 0;
    else if (axis == "y") r.axis = 1;
    else if (axis == "z") r.axis = 2;
    else fail(ErrorCode::ConfigInvalid, "config key '" + prefix + "axis' must be x, y or z");
    r.width = static_cast<int>(cfg.get_int(prefix + "width", 256));
    r.height = static_cast<int>(cfg.get_int(prefix + "height", 256));
    if (r.width < 1 || r.height < 1)
      fail(ErrorCode::ConfigInvalid, "render image dimensions must be positive");
    r.samples = static_cast<int>(cfg.get_int(prefix + "samples", 0));
    r.kappa = cfg.get_double(prefix + "kappa", 4.0);
    std::string range = cfg.get_string(prefix + "range", "auto");
    if (range != "auto") {
      auto v = cfg.get_doubles(prefix + "range");
      if (v.size() != 2 || !(v[1] > v[0]))
        fail(ErrorCode::ConfigInvalid, "config key '" + prefix + "range' must be auto or lo,hi");
      r.range = std::array<double, 2>{v[0], v[1]};
    }
    if (auto cmap = cfg.get(prefix + "colormap")) r.colormap = Colormap::parse(*cmap);
    recipes.push_back(std::move(r));
  }
  return recipes;
}

// ---------------------------------------------------------------------------
// shared sampling helpers
// ---------------------------------------------------------------------------

namespace {

struct Normalizer {
  double lo = 0.0;
  double hi = 1.0;
  bool constant = false;

  static Normalizer from(const RenderRecipe& recipe, std::span<const double> values) {
    Normalizer n;
    if (recipe.range) {
      n.lo = (*recipe.range)[0];
      n.hi = (*recipe.range)[1];
      return n;
    }
    if (values.empty()) {
      n.constant = true;
      return n;
    }
    n.lo = *std::min_element(values.begin(), values.end());
    n.hi = *std::max_element(values.begin(), values.end());
    n.constant = !(n.hi > n.lo);
    return n;
  }

  double map(double v) const {
    if (constant) return 0.5;
    return std::clamp((v - lo) / (hi - lo), 0.0, 1.0);
  }
};

void put_pixel(ImageBuffer& img, int x, int y, const std::array<double, 3>& rgb) {
  uint8_t* p = img.at(x, y);
  for (int c = 0; c < 3; ++c)
    p[c] = static_cast<uint8_t>(std::lround(255.0 * std::clamp(rgb[c], 0.0, 1.0)));
}

// Transverse axes of `axis` in ascending order; the first maps to image x
// (left to right), the second to image y (top row at maximum coordinate).
std::array<int, 2> transverse_axes(int axis) {
  switch (axis) {
    case 0: return {1, 2};
    case 1: return {0, 2};
    default: return {0, 1};
  }
}

const FieldView& required_field(const MeshChannel& m, const std::string& name) {
  const FieldView* f = m.field(name);
  if (!f) fail(ErrorCode::RenderMissingField, "field '" + name + "' not present in channel");
  return *f;
}

// Bilinear or containing-cell sample of a 2D uniform grid (one flat axis).
struct GridSampler2D {
  const UniformCoords& u;
  std::array<int, 2> axes;
  const FieldView& field;

  double sample(double c0, double c1) const {
    if (field.association == Association::Vertex) return vertex_sample(c0, c1);
    return cell_sample(c0, c1);
  }

  double vertex_sample(double c0, double c1) const {
    double co[2] = {c0, c1};
    int64_t i[2];
    double f[2];
    for (int a = 0; a < 2; ++a) {
      int ax = axes[a];
      double q = (co[a] - u.origin[ax]) / u.spacing[ax];
      if (u.dims[ax] < 2) {
        i[a] = 0;
        f[a] = 0.0;
      } else {
        i[a] = std::clamp<int64_t>(static_cast<int64_t>(std::floor(q)), 0, u.dims[ax] - 2);
        f[a] = std::clamp(q - static_cast<double>(i[a]), 0.0, 1.0);
      }
    }
    auto value = [&](int64_t d0, int64_t d1) {
      std::array<int64_t, 3> idx{0, 0, 0};
      idx[axes[0]] = std::min(i[0] + d0, u.dims[axes[0]] - 1);
      idx[axes[1]] = std::min(i[1] + d1, u.dims[axes[1]] - 1);
      return field.values[static_cast<size_t>(idx[0] + u.dims[0] * (idx[1] + u.dims[1] * idx[2]))];
    };
    double a = value(0, 0) + f[0] * (value(1, 0) - value(0, 0));
    double b = value(0, 1) + f[0] * (value(1, 1) - value(0, 1));
    return a + f[1] * (b - a);
  }

  double cell_sample(double c0, double c1) const {
    std::array<int64_t, 3> cells{std::max<int64_t>(u.dims[0] - 1, 1),
                                 std::max<int64_t>(u.dims[1] - 1, 1),
                                 std::max<int64_t>(u.dims[2] - 1, 1)};
    double co[2] = {c0, c1};
    std::array<int64_t, 3> ci{0, 0, 0};
    for (int a = 0; a < 2; ++a) {
      int ax = axes[a];
      double q = (co[a] - u.origin[ax]) / u.spacing[ax];
      ci[ax] = std::clamp<int64_t>(static_cast<int64_t>(std::floor(q)), 0, cells[ax] - 1);
    }
    return field.values[static_cast<size_t>(ci[0] + cells[0] * (ci[1] + cells[1] * ci[2]))];
  }
};

} // namespace

// ---------------------------------------------------------------------------
// slice rendering
// ---------------------------------------------------------------------------

namespace {

ImageBuffer render_uniform_slice(const MeshChannel& m, const RenderRecipe& recipe) {
  const UniformCoords& u = *m.uniform;
  int flat = -1;
  for (int a = 0; a < 3; ++a)
    if (u.dims[a] == 1) flat = a;
  if (flat < 0)
    fail(ErrorCode::RenderBadMesh, "slice rendering needs a grid with one flat axis");
  auto axes = transverse_axes(flat);

  const FieldView& field = required_field(m, recipe.field);
  Normalizer norm = Normalizer::from(recipe, field.values);
  GridSampler2D sampler{u, axes, field};

  double lo0 = u.origin[axes[0]];
  double hi0 = lo0 + u.spacing[axes[0]] * static_cast<double>(u.dims[axes[0]] - 1);
  double lo1 = u.origin[axes[1]];
  double hi1 = lo1 + u.spacing[axes[1]] * static_cast<double>(u.dims[axes[1]] - 1);

  ImageBuffer img(recipe.width, recipe.height);
  for (int py = 0; py < recipe.height; ++py) {
    double c1 = hi1 - (static_cast<double>(py) + 0.5) / recipe.height * (hi1 - lo1);
    for (int px = 0; px < recipe.width; ++px) {
      double c0 = lo0 + (static_cast<double>(px) + 0.5) / recipe.width * (hi0 - lo0);
      put_pixel(img, px, py, recipe.colormap.map(norm.map(sampler.sample(c0, c1))));
    }
  }
  return img;
}

ImageBuffer render_tri_slice(const MeshChannel& m, const RenderRecipe& recipe) {
  const FieldView& field = required_field(m, recipe.field);
  Normalizer norm = Normalizer::from(recipe, field.values);
  auto axes = transverse_axes(recipe.axis);

  auto coord = [&](int64_t v, int axis) {
    switch (axis) {
      case 0: return m.x[static_cast<size_t>(v)];
      case 1: return m.y[static_cast<size_t>(v)];
      default: return m.z[static_cast<size_t>(v)];
    }
  };

  double lo0 = std::numeric_limits<double>::max(), hi0 = std::numeric_limits<double>::lowest();
  double lo1 = lo0, hi1 = hi0;
  for (int64_t v = 0; v < m.vertex_count; ++v) {
    lo0 = std::min(lo0, coord(v, axes[0]));
    hi0 = std::max(hi0, coord(v, axes[0]));
    lo1 = std::min(lo1, coord(v, axes[1]));
    hi1 = std::max(hi1, coord(v, axes[1]));
  }

  ImageBuffer img(recipe.width, recipe.height);
  if (!(hi0 > lo0) || !(hi1 > lo1)) return img; // projection collapses to a line

  std::vector<double> depth(static_cast<size_t>(recipe.width) * recipe.height,
                            std::numeric_limits<double>::lowest());

  auto to_px = [&](double c0) { return (c0 - lo0) / (hi0 - lo0) * recipe.width - 0.5; };
  auto to_py = [&](double c1) { return (hi1 - c1) / (hi1 - lo1) * recipe.height - 0.5; };

  for (int64_t cell = 0; cell < m.cell_count; ++cell) {
    int64_t vid[3] = {m.connectivity[static_cast<size_t>(3 * cell)],
                      m.connectivity[static_cast<size_t>(3 * cell + 1)],
                      m.connectivity[static_cast<size_t>(3 * cell + 2)]};
    double p0[3], p1[3], dep[3], val[3];
    for (int c = 0; c < 3; ++c) {
      p0[c] = coord(vid[c], axes[0]);
      p1[c] = coord(vid[c], axes[1]);
      dep[c] = coord(vid[c], recipe.axis);
      val[c] = field.association == Association::Vertex
                   ? field.values[static_cast<size_t>(vid[c])]
                   : field.values[static_cast<size_t>(cell)];
    }
    double denom = (p0[1] - p0[0]) * (p1[2] - p1[0]) - (p0[2] - p0[0]) * (p1[1] - p1[0]);
    if (denom == 0.0) continue;

    double fx[3], fy[3];
    for (int c = 0; c < 3; ++c) {
      fx[c] = to_px(p0[c]);
      fy[c] = to_py(p1[c]);
    }
    int xmin = std::max(0, static_cast<int>(std::floor(std::min({fx[0], fx[1], fx[2]}))));
    int xmax = std::min(recipe.width - 1, static_cast<int>(std::ceil(std::max({fx[0], fx[1], fx[2]}))));
    int ymin = std::max(0, static_cast<int>(std::floor(std::min({fy[0], fy[1], fy[2]}))));
    int ymax = std::min(recipe.height - 1, static_cast<int>(std::ceil(std::max({fy[0], fy[1], fy[2]}))));

    for (int py = ymin; py <= ymax; ++py) {
      double c1 = hi1 - (static_cast<double>(py) + 0.5) / recipe.height * (hi1 - lo1);
      for (int px = xmin; px <= xmax; ++px) {
        double c0 = lo0 + (static_cast<double>(px) + 0.5) / recipe.width * (hi0 - lo0);
        double w0 = ((p0[1] - c0) * (p1[2] - c1) - (p0[2] - c0) * (p1[1] - c1)) / denom;
        double w1 = ((p0[2] - c0) * (p1[0] - c1) - (p0[0] - c0) * (p1[2] - c1)) / denom;
        double w2 = 1.0 - w0 - w1;
        constexpr double eps = -1e-12;
        if (w0 < eps || w1 < eps || w2 < eps) continue;
        double d = w0 * dep[0] + w1 * dep[1] + w2 * dep[2];
        size_t at = static_cast<size_t>(py) * recipe.width + px;
        if (d <= depth[at]) continue;
        depth[at] = d;
        double v = w0 * val[0] + w1 * val[1] + w2 * val[2];
        put_pixel(img, px, py, recipe.colormap.map(norm.map(v)));
      }
    }
  }
  return img;
}

} // namespace

ImageBuffer render_slice(const DataNode& channel, const RenderRecipe& recipe) {
  MeshChannel m = validate_mesh(channel);
  if (m.is_empty()) return ImageBuffer(recipe.width, recipe.height);
  if (m.is_uniform()) return render_uniform_slice(m, recipe);
  if (m.topology == TopologyKind::Tri) return render_tri_slice(m, recipe);
  fail(ErrorCode::RenderBadMesh, "slice rendering needs a uniform grid or a triangle soup");
}

// ---------------------------------------------------------------------------
// volume rendering
// ---------------------------------------------------------------------------

ImageBuffer render_volume(const DataNode& channel, const RenderRecipe& recipe) {
  MeshChannel m = validate_mesh(channel);
  if (m.is_empty()) return ImageBuffer(recipe.width, recipe.height);
  if (!m.is_uniform())
    fail(ErrorCode::RenderBadMesh, "volume rendering needs a uniform grid");
  const UniformCoords& u = *m.uniform;
  for (int a = 0; a < 3; ++a)
    if (u.dims[a] < 2) fail(ErrorCode::RenderBadMesh, "volume rendering needs a 3D grid");

  const FieldView& field = required_field(m, recipe.field);

  // automatic range: a constant field reads 0 when the value is 0, else 1
  Normalizer norm = Normalizer::from(recipe, field.values);
  auto normalized = [&](double v) {
    if (norm.constant && !recipe.range) return v == 0.0 ? 0.0 : 1.0;
    return norm.map(v);
  };

  int axis = recipe.axis;
  auto axes = transverse_axes(axis);
  double lo0 = u.origin[axes[0]];
  double hi0 = lo0 + u.spacing[axes[0]] * static_cast<double>(u.dims[axes[0]] - 1);
  double lo1 = u.origin[axes[1]];
  double hi1 = lo1 + u.spacing[axes[1]] * static_cast<double>(u.dims[axes[1]] - 1);
  double lo_a = u.origin[axis];
  double hi_a = lo_a + u.spacing[axis] * static_cast<double>(u.dims[axis] - 1);

  int64_t cells_along = u.dims[axis] - 1;
  int samples = recipe.samples > 0 ? recipe.samples : static_cast<int>(2 * cells_along);
  double ds = (hi_a - lo_a) / static_cast<double>(samples);

  std::array<int64_t, 3> cells{u.dims[0] - 1, u.dims[1] - 1, u.dims[2] - 1};

  auto sample_at = [&](const std::array<double, 3>& p) {
    if (field.association == Association::Cell) {
      std::array<int64_t, 3> ci;
      for (int a = 0; a < 3; ++a) {
        double q = (p[a] - u.origin[a]) / u.spacing[a];
        ci[a] = std::clamp<int64_t>(static_cast<int64_t>(std::floor(q)), 0, cells[a] - 1);
      }
      return field.values[static_cast<size_t>(ci[0] + cells[0] * (ci[1] + cells[1] * ci[2]))];
    }
    std::array<int64_t, 3> ci;
    std::array<double, 3> f;
    for (int a = 0; a < 3; ++a) {
      double q = (p[a] - u.origin[a]) / u.spacing[a];
      ci[a] = std::clamp<int64_t>(static_cast<int64_t>(std::floor(q)), 0, u.dims[a] - 2);
      f[a] = std::clamp(q - static_cast<double>(ci[a]), 0.0, 1.0);
    }
    auto vid = [&](int64_t i, int64_t j, int64_t k) {
      return i + u.dims[0] * (j + u.dims[1] * k);
    };
    double acc = 0.0;
    for (int c = 0; c < 8; ++c) {
      int64_t di = c & 1, dj = (c >> 1) & 1, dk = (c >> 2) & 1;
      double w = (di ? f[0] : 1.0 - f[0]) * (dj ? f[1] : 1.0 - f[1]) * (dk ? f[2] : 1.0 - f[2]);
      acc += w * field.values[static_cast<size_t>(vid(ci[0] + di, ci[1] + dj, ci[2] + dk))];
    }
    return acc;
  };

  ImageBuffer img(recipe.width, recipe.height);
  for (int py = 0; py < recipe.height; ++py) {
    double c1 = hi1 - (static_cast<double>(py) + 0.5) / recipe.height * (hi1 - lo1);
    for (int px = 0; px < recipe.width; ++px) {
      double c0 = lo0 + (static_cast<double>(px) + 0.5) / recipe.width * (hi0 - lo0);
      double rgb[3] = {0, 0, 0};
      double alpha = 0.0;
      for (int s = 0; s < samples; ++s) {
        std::array<double, 3> p;
        p[axes[0]] = c0;
        p[axes[1]] = c1;
        p[axis] = hi_a - (static_cast<double>(s) + 0.5) * ds;
        double vhat = normalized(sample_at(p));
        double a = 1.0 - std::exp(-recipe.kappa * vhat * ds);
        auto color = recipe.colormap.map(vhat);
        double w = (1.0 - alpha) * a;
        for (int c = 0; c < 3; ++c) rgb[c] += w * color[c];
        alpha += w;
        if (alpha > 0.999) break;
      }
      put_pixel(img, px, py, {rgb[0], rgb[1], rgb[2]});
    }
  }
  return img;
}

ImageBuffer render(const DataNode& channel, const RenderRecipe& recipe) {
  return recipe.kind == RecipeKind::Slice ? render_slice(channel, recipe)
                                          : render_volume(channel, recipe);
}

// ---------------------------------------------------------------------------
// image output
// ---------------------------------------------------------------------------

std::vector<uint8_t> encode_ppm(const ImageBuffer& image) {
  std::string header =
      "P6\n" + std::to_string(image.width) + " " + std::to_string(image.height) + "\n255\n";
  std::vector<uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), image.pixels.begin(), image.pixels.end());
  return out;
}

void write_image(const std::string& path, const ImageBuffer& image) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::Io, "cannot open '" + path + "' for writing");
  auto bytes = encode_ppm(image);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorCode::Io, "short write to '" + path + "'");
}

std::string image_filename(uint64_t step, const std::string& recipe) {
  return "step" + std::to_string(step) + "_" + recipe + ".ppm";
}

// ---------------------------------------------------------------------------
// part merging
// ---------------------------------------------------------------------------

namespace {

bool same_field_schema(const MeshChannel& a, const MeshChannel& b) {
  if (a.fields.size() != b.fields.size()) return false;
  for (size_t i = 0; i < a.fields.size(); ++i)
    if (a.fields[i].name != b.fields[i].name ||
        a.fields[i].association != b.fields[i].association)
      return false;
  return true;
}

bool near(double a, double b) {
  return std::abs(a - b) <= 1e-9 * std::max({1.0, std::abs(a), std::abs(b)});
}

// Concatenates uniform parts that tile the domain along one axis. Adjacent
// parts share their boundary vertex plane; the lower part's copy wins.
DataNode stitch_uniform_slabs(const std::vector<MeshChannel>& meshes) {
  const UniformCoords& u0 = *meshes[0].uniform;
  int axis = -1;
  for (int a = 0; a < 3; ++a) {
    bool moves = false;
    for (const MeshChannel& m : meshes)
      if (!near(m.uniform->origin[a], u0.origin[a])) moves = true;
    if (!moves) continue;
    if (axis >= 0)
      fail(ErrorCode::RenderBadMesh, "uniform parts shift along more than one axis");
    axis = a;
  }
  if (axis < 0) fail(ErrorCode::RenderBadMesh, "uniform parts disagree on grid shape");
  for (const MeshChannel& m : meshes) {
    const UniformCoords& u = *m.uniform;
    for (int a = 0; a < 3; ++a) {
      if (!near(u.spacing[a], u0.spacing[a]))
        fail(ErrorCode::RenderBadMesh, "uniform parts disagree on spacing");
      if (a != axis && u.dims[a] != u0.dims[a])
        fail(ErrorCode::RenderBadMesh, "uniform parts disagree on grid shape");
    }
    if (u.dims[axis] < 2)
      fail(ErrorCode::RenderBadMesh, "cannot stitch a slab with no cells along the tile axis");
  }

  std::vector<size_t> order(meshes.size());
  for (size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
    return meshes[a].uniform->origin[axis] < meshes[b].uniform->origin[axis];
  });

  std::vector<int64_t> offsets(order.size());
  int64_t layers = 0;
  for (size_t p = 0; p < order.size(); ++p) {
    const UniformCoords& u = *meshes[order[p]].uniform;
    if (p > 0) {
      const UniformCoords& prev = *meshes[order[p - 1]].uniform;
      double expected = prev.origin[axis] +
                        static_cast<double>(prev.dims[axis] - 1) * prev.spacing[axis];
      if (!near(u.origin[axis], expected))
        fail(ErrorCode::RenderBadMesh, "uniform parts do not tile contiguously");
    }
    offsets[p] = layers;
    layers += u.dims[axis] - 1;
  }

  std::array<int64_t, 3> out_dims = u0.dims;
  out_dims[axis] = layers + 1;
  std::array<double, 3> out_origin = meshes[order[0]].uniform->origin;

  auto cell_dims = [](std::array<int64_t, 3> d) {
    for (int64_t& v : d) v = std::max<int64_t>(v - 1, 1);
    return d;
  };
  auto lindex = [](const std::array<int64_t, 3>& d, int64_t i, int64_t j, int64_t k) {
    return static_cast<size_t>(i + d[0] * (j + d[1] * k));
  };

  DataNode out = make_uniform_channel(out_dims, out_origin, u0.spacing);
  for (size_t f = 0; f < meshes[0].fields.size(); ++f) {
    bool vertex = meshes[0].fields[f].association == Association::Vertex;
    std::array<int64_t, 3> od = vertex ? out_dims : cell_dims(out_dims);
    std::vector<double> vals(static_cast<size_t>(od[0] * od[1] * od[2]), 0.0);
    for (size_t p = 0; p < order.size(); ++p) {
      const MeshChannel& m = meshes[order[p]];
      std::array<int64_t, 3> pd = vertex ? m.uniform->dims : cell_dims(m.uniform->dims);
      int64_t start = vertex && p > 0 ? 1 : 0;
      const FieldView& fv = m.fields[f];
      for (int64_t k = 0; k < pd[2]; ++k)
        for (int64_t j = 0; j < pd[1]; ++j)
          for (int64_t i = 0; i < pd[0]; ++i) {
            std::array<int64_t, 3> lp{i, j, k};
            if (lp[axis] < start) continue;
            std::array<int64_t, 3> gp = lp;
            gp[axis] += offsets[p];
            vals[lindex(od, gp[0], gp[1], gp[2])] = fv.values[lindex(pd, i, j, k)];
          }
    }
    add_field(out, meshes[0].fields[f].name, meshes[0].fields[f].association, std::move(vals));
  }
  return out;
}

} // namespace

DataNode merge_channel_parts(const std::vector<const DataNode*>& parts) {
  std::vector<const DataNode*> live;
  std::vector<MeshChannel> meshes;
  const DataNode* first_empty = nullptr;
  for (const DataNode* part : parts) {
    MeshChannel m = validate_mesh(*part);
    if (m.is_empty()) {
      if (!first_empty) first_empty = part;
      continue;
    }
    live.push_back(part);
    meshes.push_back(std::move(m));
  }

  if (live.empty()) {
    if (first_empty) return *first_empty;
    fail(ErrorCode::RenderBadMesh, "no parts to merge");
  }
  if (live.size() == 1) return *live[0];

  for (size_t i = 1; i < meshes.size(); ++i)
    if (!same_field_schema(meshes[0], meshes[i]))
      fail(ErrorCode::RenderBadMesh, "parts disagree on field schema");

  bool all_tri = true, all_uniform = true;
  for (const MeshChannel& m : meshes) {
    all_tri = all_tri && m.topology == TopologyKind::Tri;
    all_uniform = all_uniform && m.is_uniform();
  }

  if (all_tri) {
    std::vector<double> x, y, z;
    std::vector<int64_t> conn;
    size_t nfields = meshes[0].fields.size();
    std::vector<std::vector<double>> fvals(nfields);
    for (const MeshChannel& m : meshes) {
      int64_t base = static_cast<int64_t>(x.size());
      x.insert(x.end(), m.x.begin(), m.x.end());
      y.insert(y.end(), m.y.begin(), m.y.end());
      z.insert(z.end(), m.z.begin(), m.z.end());
      for (int64_t c : m.connectivity) conn.push_back(c + base);
      for (size_t f = 0; f < nfields; ++f)
        fvals[f].insert(fvals[f].end(), m.fields[f].values.begin(), m.fields[f].values.end());
    }
    DataNode out = make_explicit_channel(std::move(x), std::move(y), std::move(z), std::move(conn),
                                         TopologyKind::Tri);
    for (size_t f = 0; f < nfields; ++f)
      add_field(out, meshes[0].fields[f].name, meshes[0].fields[f].association,
                std::move(fvals[f]));
    return out;
  }

  if (all_uniform) {
    const UniformCoords& u0 = *meshes[0].uniform;
    bool identical = true;
    for (size_t i = 1; i < meshes.size(); ++i) {
      const UniformCoords& ui = *meshes[i].uniform;
      if (ui.dims != u0.dims || ui.origin != u0.origin || ui.spacing != u0.spacing)
        identical = false;
    }
    if (!identical) return stitch_uniform_slabs(meshes);
    DataNode out = make_uniform_channel(u0.dims, u0.origin, u0.spacing);
    for (size_t f = 0; f < meshes[0].fields.size(); ++f) {
      std::vector<double> vals(meshes[0].fields[f].values.begin(),
                               meshes[0].fields[f].values.end());
      for (size_t i = 1; i < meshes.size(); ++i) {
        auto other = meshes[i].fields[f].values;
        for (size_t k = 0; k < vals.size(); ++k) vals[k] = std::max(vals[k], other[k]);
      }
      add_field(out, meshes[0].fields[f].name, meshes[0].fields[f].association, std::move(vals));
    }
    return out;
  }

  fail(ErrorCode::RenderBadMesh, "parts mix triangle and uniform topologies");
}

} // namespace hxit
