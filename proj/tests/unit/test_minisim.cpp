#include <doctest.h>

#include <cmath>

#include "hxit/minisim.hpp"
#include "hxit/node.hpp"

using namespace hxit;

TEST_SUITE("minisim") {

TEST_CASE("partition bounds tile [0, n) with sizes differing by at most one") {
  auto sizes = [](int64_t n, int64_t p) {
    SimConfig cfg;
    cfg.n = n;
    cfg.partitions = p;
    std::vector<int64_t> out;
    int64_t expect_first = 0;
    for (int64_t r = 0; r < p; ++r) {
      auto [first, last] = partition_bounds(cfg, r);
      CHECK(first == expect_first);
      CHECK(last >= first);
      expect_first = last;
      out.push_back(last - first);
    }
    CHECK(expect_first == n);
    return out;
  };

  CHECK(sizes(8, 8) == std::vector<int64_t>{1, 1, 1, 1, 1, 1, 1, 1});
  CHECK(sizes(7, 8) == std::vector<int64_t>{1, 1, 1, 1, 1, 1, 1, 0});
  CHECK(sizes(220, 8) == std::vector<int64_t>{28, 28, 28, 28, 27, 27, 27, 27});
  CHECK(sizes(2, 5) == std::vector<int64_t>{1, 1, 0, 0, 0});
}

TEST_CASE("shock radius follows the power law") {
  CHECK(shock_radius(0.0) == 0.0);
  CHECK(shock_radius(1.0) == doctest::Approx(1.0));
  CHECK(shock_radius(0.5) == doctest::Approx(std::pow(0.5, 0.4)));
  CHECK(shock_radius(0.2) < shock_radius(0.8));
}

TEST_CASE("field formulas agree at the shock front") {
  double t = 0.5, w = 0.05;
  double r = shock_radius(t);
  // a point exactly on the front, along the x axis
  CHECK(energy_at(r, 0, 0, t, w) == doctest::Approx(1.0));
  CHECK(density_at(r, 0, 0, t, w) == doctest::Approx(1.5));
  CHECK(pressure_at(r, 0, 0, t, w) == doctest::Approx(0.4 * 1.5 * 1.0));
  // far from the front the medium is at rest
  CHECK(energy_at(0.0, 0.0, 0.0, 1.0, w) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("uniform slab carries analytic fields on the rank's layers") {
  SimConfig cfg;
  cfg.n = 4;
  cfg.partitions = 2;
  double t = 0.5;
  DataNode ch = generate_step(cfg, 1, t);
  MeshChannel m = validate_mesh(ch);
  REQUIRE(m.is_uniform());
  double h = 1.0 / 4.0;
  CHECK(m.uniform->dims == std::array<int64_t, 3>{5, 5, 3});
  CHECK(m.uniform->origin[2] == doctest::Approx(2 * h));
  CHECK(m.cell_count == 4 * 4 * 2);

  const FieldView* e = m.field("energy");
  REQUIRE(e != nullptr);
  CHECK(e->association == Association::Vertex);
  // vertex (1, 2, 1) of the slab sits at (h, 2h, 3h) globally
  size_t vid = 1 + 5 * (2 + 5 * 1);
  CHECK(e->values[vid] == doctest::Approx(energy_at(h, 2 * h, 3 * h, t, cfg.shock_width)));

  const FieldView* p = m.field("pressure");
  REQUIRE(p != nullptr);
  CHECK(p->association == Association::Cell);
  CHECK(p->values.size() == static_cast<size_t>(m.cell_count));
  // cell (0, 0, 0) of the slab is centered at (h/2, h/2, 2h + h/2)
  CHECK(p->values[0] ==
        doctest::Approx(pressure_at(h / 2, h / 2, 2 * h + h / 2, t, cfg.shock_width)));
}

TEST_CASE("hex topology produces an equivalent explicit lattice") {
  SimConfig cfg;
  cfg.n = 3;
  cfg.topology = TopologyKind::Hex;
  DataNode ch = generate_step(cfg, 0, 0.4);
  MeshChannel m = validate_mesh(ch);
  CHECK(m.topology == TopologyKind::Hex);
  CHECK(m.vertex_count == 4 * 4 * 4);
  CHECK(m.cell_count == 27);
  CHECK(m.connectivity.size() == 27 * 8);

  SimConfig ucfg = cfg;
  ucfg.topology = TopologyKind::Uniform;
  MeshChannel u = validate_mesh(generate_step(ucfg, 0, 0.4));
  // same lattice: vertex 21 = (1, 1, 1)
  CHECK(m.vertex(21) == u.vertex(21));
}

TEST_CASE("generation is deterministic") {
  SimConfig cfg;
  cfg.n = 5;
  DataNode a = generate_step(cfg, 0, 0.3);
  DataNode b = generate_step(cfg, 0, 0.3);
  CHECK(serialize_node(a) == serialize_node(b));
}

TEST_CASE("an empty slab yields an empty channel with the field schema") {
  SimConfig cfg;
  cfg.n = 2;
  cfg.partitions = 5;
  DataNode ch = generate_step(cfg, 4, 0.5);
  MeshChannel m = validate_mesh(ch);
  CHECK(m.is_empty());
  CHECK_FALSE(m.is_uniform());
  REQUIRE(m.fields.size() == 3);
  CHECK(m.fields[0].name == "energy");
  CHECK(m.fields[0].values.empty());
}

TEST_CASE("from_config reads the sim section") {
  Config cfg = Config::parse_text(
      "sim.n = 12\nsim.topology = hex\nsim.steps = 4\nsim.partitions = 3\n"
      "sim.width = 0.1\n");
  SimConfig sc = SimConfig::from_config(cfg);
  CHECK(sc.n == 12);
  CHECK(sc.topology == TopologyKind::Hex);
  CHECK(sc.steps == 4);
  CHECK(sc.partitions == 3);
  CHECK(sc.shock_width == 0.1);
  CHECK(sc.step_dt() == doctest::Approx(0.25));
}

} // TEST_SUITE
