#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "doctest.h"
#include "hgnn/mesh.hpp"

using namespace hgnn;

TEST_CASE("gll points: closed forms and frozen p=5 values") {
  SUBCASE("p=1 endpoints only") {
    const auto x = gll_points(1);
    REQUIRE(x.size() == 2);
    CHECK(x[0] == -1.0);
    CHECK(x[1] == 1.0);
  }
  SUBCASE("p=2 symmetry forces the midpoint") {
    const auto x = gll_points(2);
    REQUIRE(x.size() == 3);
    CHECK(x[0] == -1.0);
    CHECK(x[1] == 0.0);
    CHECK(x[2] == 1.0);
  }
  SUBCASE("p=5 interior nodes") {
    // roots of P'_5: x^2 = (14 +- sqrt(112))/42
    const auto x = gll_points(5);
    REQUIRE(x.size() == 6);
    CHECK(std::abs(x[1] + 0.7650553239294647) < 1e-12);
    CHECK(std::abs(x[2] + 0.2852315164806451) < 1e-12);
    CHECK(std::abs(x[3] - 0.2852315164806451) < 1e-12);
    CHECK(std::abs(x[4] - 0.7650553239294647) < 1e-12);
  }
  SUBCASE("p=0 is rejected") { CHECK_THROWS_AS(gll_points(0), ConfigError); }
}

TEST_CASE("gll properties: symmetry, ordering, quadrature exactness") {
  for (int64_t p : {1, 2, 3, 4, 5, 7, 8, 12, 16}) {
    const auto x = gll_points(p);
    REQUIRE(static_cast<int64_t>(x.size()) == p + 1);
    for (size_t i = 0; i + 1 < x.size(); ++i) CHECK(x[i] < x[i + 1]);
    for (int64_t k = 0; k <= p; ++k)
      CHECK(std::abs(x[static_cast<size_t>(k)] + x[static_cast<size_t>(p - k)]) < 1e-14);

    // independent oracle: GLL quadrature integrates monomials of degree
    // <= 2p-1 exactly over [-1,1]
    const auto w = gll_weights(p);
    for (int64_t deg = 0; deg <= 2 * p - 1; ++deg) {
      double q = 0.0;
      for (size_t i = 0; i < x.size(); ++i) q += w[i] * std::pow(x[i], static_cast<double>(deg));
      const double exact = deg % 2 == 1 ? 0.0 : 2.0 / static_cast<double>(deg + 1);
      CHECK(std::abs(q - exact) < 1e-12);
    }
  }
}

TEST_CASE("box mesh: structured counts and corner case") {
  SUBCASE("E=1 p=1 unit cube: 8 corner nodes, ids 0..7") {
    MeshConfig cfg;
    cfg.elements_per_axis = 1;
    cfg.poly_order = 1;
    const Mesh mesh = build_box_mesh(cfg);
    REQUIRE(mesh.num_elements() == 1);
    REQUIRE(mesh.global_ids[0].size() == 8);
    std::set<int64_t> ids(mesh.global_ids[0].begin(), mesh.global_ids[0].end());
    CHECK(ids == std::set<int64_t>({0, 1, 2, 3, 4, 5, 6, 7}));
    for (const auto& p : mesh.node_positions[0])
      for (int a = 0; a < 3; ++a) CHECK((p[a] == 0.0 || p[a] == 1.0));
  }
  SUBCASE("raw and unique node counts follow the structured laws") {
    struct Case {
      int64_t e, p, unique;
    };
    for (const Case c : {Case{2, 5, 1331}, Case{2, 1, 27}, Case{3, 2, 343}, Case{4, 3, 2197}}) {
      MeshConfig cfg;
      cfg.elements_per_axis = c.e;
      cfg.poly_order = c.p;
      const Mesh mesh = build_box_mesh(cfg);
      const int64_t raw = mesh.num_elements() * cfg.nodes_per_element();
      CHECK(raw == c.e * c.e * c.e * (c.p + 1) * (c.p + 1) * (c.p + 1));
      std::set<int64_t> ids;
      for (const auto& elem : mesh.global_ids) ids.insert(elem.begin(), elem.end());
      CHECK(static_cast<int64_t>(ids.size()) == c.unique);
      CHECK(cfg.unique_nodes() == c.unique);
      CHECK(*ids.begin() == 0);
      CHECK(*ids.rbegin() == c.unique - 1);
    }
  }
}

TEST_CASE("coincidence soundness: equal gid iff positions coincide (pairwise oracle)") {
  MeshConfig cfg;
  cfg.elements_per_axis = 2;
  cfg.poly_order = 3;
  cfg.domain_min = {-0.3, 0.0, 1.0};
  cfg.domain_max = {0.7, 2.0, 4.0};
  const Mesh mesh = build_box_mesh(cfg);

  double extent = 0.0;
  for (int a = 0; a < 3; ++a) extent = std::max(extent, cfg.domain_max[a] - cfg.domain_min[a]);
  const double tau = 1e-9 * extent;

  struct Node {
    int64_t gid;
    std::array<double, 3> pos;
  };
  std::vector<Node> nodes;
  for (int64_t e = 0; e < mesh.num_elements(); ++e)
    for (size_t s = 0; s < mesh.global_ids[static_cast<size_t>(e)].size(); ++s)
      nodes.push_back(
          {mesh.global_ids[static_cast<size_t>(e)][s], mesh.node_positions[static_cast<size_t>(e)][s]});
  REQUIRE(nodes.size() == 512);  // 8 elements x 64

  for (size_t i = 0; i < nodes.size(); ++i)
    for (size_t j = i + 1; j < nodes.size(); ++j) {
      double d = 0.0;
      for (int a = 0; a < 3; ++a) d = std::max(d, std::abs(nodes[i].pos[a] - nodes[j].pos[a]));
      if (nodes[i].gid == nodes[j].gid)
        CHECK(d <= tau);
      else
        CHECK(d > tau);
    }
}

TEST_CASE("coincident nodes have bitwise-identical positions") {
  MeshConfig cfg;
  cfg.elements_per_axis = 3;
  cfg.poly_order = 2;
  cfg.domain_min = {0.0, 0.0, 0.0};
  cfg.domain_max = {0.3, 0.3, 0.3};  // element widths not exactly representable
  const Mesh mesh = build_box_mesh(cfg);
  std::map<int64_t, std::array<double, 3>> seen;
  for (int64_t e = 0; e < mesh.num_elements(); ++e)
    for (size_t s = 0; s < mesh.global_ids[static_cast<size_t>(e)].size(); ++s) {
      const auto [it, inserted] = seen.emplace(mesh.global_ids[static_cast<size_t>(e)][s],
                                               mesh.node_positions[static_cast<size_t>(e)][s]);
      if (!inserted)
        for (int a = 0; a < 3; ++a)
          CHECK(it->second[a] == mesh.node_positions[static_cast<size_t>(e)][s][a]);
    }
}

TEST_CASE("config validation") {
  MeshConfig cfg;
  cfg.elements_per_axis = 0;
  CHECK_THROWS_AS(build_box_mesh(cfg), ConfigError);
  cfg.elements_per_axis = 2;
  cfg.poly_order = 0;
  CHECK_THROWS_AS(build_box_mesh(cfg), ConfigError);
  cfg.poly_order = 1;
  cfg.domain_max = cfg.domain_min;
  CHECK_THROWS_AS(build_box_mesh(cfg), ConfigError);
}

TEST_CASE("partitioning") {
  MeshConfig cfg;
  cfg.elements_per_axis = 2;
  cfg.poly_order = 1;
  const Mesh mesh = build_box_mesh(cfg);

  SUBCASE("E=2 R=8 block: one element per rank") {
    const PartitionMap part = partition_mesh(mesh, 8, PartitionStrategy::Block);
    std::vector<int> count(8, 0);
    for (const auto r : part.element_to_rank) count[static_cast<size_t>(r)]++;
    for (const int c : count) CHECK(c == 1);
  }

  SUBCASE("E=2 R=2 slab: half boxes split along x") {
    const PartitionMap part = partition_mesh(mesh, 2, PartitionStrategy::Slab);
    std::vector<int> count(2, 0);
    for (const auto r : part.element_to_rank) count[static_cast<size_t>(r)]++;
    CHECK(count[0] == 4);
    CHECK(count[1] == 4);
    for (int64_t ez = 0; ez < 2; ++ez)
      for (int64_t ey = 0; ey < 2; ++ey)
        for (int64_t ex = 0; ex < 2; ++ex)
          CHECK(part.element_to_rank[static_cast<size_t>(ex + 2 * ey + 4 * ez)] == ex);
  }

  SUBCASE("E=4 R=8 block(2,2,2): sub-cubes with face/edge/corner adjacency") {
    MeshConfig c4;
    c4.elements_per_axis = 4;
    c4.poly_order = 1;
    const Mesh m4 = build_box_mesh(c4);
    const PartitionMap part = partition_mesh(m4, 8, PartitionStrategy::Block);
    CHECK(part.block_factors == std::array<int64_t, 3>{2, 2, 2});
    std::vector<int> count(8, 0);
    for (const auto r : part.element_to_rank) count[static_cast<size_t>(r)]++;
    for (const int c : count) CHECK(c == 8);  // 2x2x2 elements each

    // adjacency enumeration: every pair of distinct octants shares at least a
    // corner, so the rank adjacency graph is complete
    std::set<std::pair<int, int>> adjacent;
    const int64_t e_axis = 4;
    auto rank_of = [&](int64_t x, int64_t y, int64_t z) {
      return part.element_to_rank[static_cast<size_t>(x + y * e_axis + z * e_axis * e_axis)];
    };
    for (int64_t z = 0; z < e_axis; ++z)
      for (int64_t y = 0; y < e_axis; ++y)
        for (int64_t x = 0; x < e_axis; ++x)
          for (int64_t dz = -1; dz <= 1; ++dz)
            for (int64_t dy = -1; dy <= 1; ++dy)
              for (int64_t dx = -1; dx <= 1; ++dx) {
                const int64_t nx = x + dx, ny = y + dy, nz = z + dz;
                if (nx < 0 || ny < 0 || nz < 0 || nx >= e_axis || ny >= e_axis || nz >= e_axis)
                  continue;
                const int a = rank_of(x, y, z), b = rank_of(nx, ny, nz);
                if (a != b) adjacent.insert({std::min(a, b), std::max(a, b)});
              }
    CHECK(adjacent.size() == 28);  // all pairs of 8 octants
  }

  SUBCASE("totality: every element mapped to exactly one rank") {
    const PartitionMap part = partition_mesh(mesh, 2, PartitionStrategy::Slab);
    CHECK(static_cast<int64_t>(part.element_to_rank.size()) == mesh.num_elements());
    for (const auto r : part.element_to_rank) {
      CHECK(r >= 0);
      CHECK(r < 2);
    }
  }

  SUBCASE("infeasible combinations are named") {
    CHECK_THROWS_WITH_AS(static_cast<void>(partition_mesh(mesh, 3, PartitionStrategy::Slab)),
                         doctest::Contains("slab"), PartitionError);
    CHECK_THROWS_AS(static_cast<void>(partition_mesh(mesh, 5, PartitionStrategy::Block)),
                    PartitionError);
    CHECK_THROWS_AS(static_cast<void>(partition_mesh(mesh, 8, PartitionStrategy::Block,
                                                     std::array<int64_t, 3>{4, 2, 1})),
                    PartitionError);  // 4 does not divide E=2
  }
}

TEST_CASE("balanced block factors") {
  CHECK(balanced_factors(2, 4) == std::array<int64_t, 3>{2, 1, 1});
  CHECK(balanced_factors(4, 4) == std::array<int64_t, 3>{2, 2, 1});
  CHECK(balanced_factors(8, 4) == std::array<int64_t, 3>{2, 2, 2});
  CHECK(balanced_factors(16, 4) == std::array<int64_t, 3>{4, 2, 2});
  CHECK(balanced_factors(64, 16) == std::array<int64_t, 3>{4, 4, 4});
  CHECK_THROWS_AS(balanced_factors(7, 4), PartitionError);
}
