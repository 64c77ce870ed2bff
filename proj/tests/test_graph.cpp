#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "doctest.h"
#include "hgnn/graph.hpp"
#include "hgnn/mesh.hpp"

using namespace hgnn;

namespace {

// Hand-built mesh of two p-th order hexahedral elements stacked along z
// (the halo-schematic configuration: one element per rank at R=2).
Mesh two_element_mesh(int64_t p) {
  Mesh mesh;
  mesh.config.elements_per_axis = 2;  // only poly_order/nodes_per_element are used downstream
  mesh.config.poly_order = p;
  mesh.config.domain_max = {1.0, 1.0, 1.0};
  mesh.gll_1d = gll_points(p);
  const int64_t q = p + 1;
  auto coord = [&](int64_t t) { return 0.5 * (mesh.gll_1d[static_cast<size_t>(t)] + 1.0); };
  for (int64_t ez = 0; ez < 2; ++ez) {
    std::vector<int64_t> ids(static_cast<size_t>(q * q * q));
    std::vector<std::array<double, 3>> pos(static_cast<size_t>(q * q * q));
    for (int64_t k = 0; k < q; ++k)
      for (int64_t j = 0; j < q; ++j)
        for (int64_t i = 0; i < q; ++i) {
          const int64_t local = i + j * q + k * q * q;
          const int64_t gz = ez * p + k;
          ids[static_cast<size_t>(local)] = i + j * q + gz * q * q;
          // canonical z: owner decomposition so the shared face is bitwise equal
          int64_t zel = gz / p, zloc = gz % p;
          if (zel == 2) {
            zel = 1;
            zloc = p;
          }
          pos[static_cast<size_t>(local)] = {coord(i), coord(j),
                                             static_cast<double>(zel) + coord(zloc)};
        }
    mesh.element_origins.push_back({0.0, 0.0, static_cast<double>(ez)});
    mesh.global_ids.push_back(std::move(ids));
    mesh.node_positions.push_back(std::move(pos));
  }
  return mesh;
}

PartitionMap two_element_partition(int32_t r0, int32_t r1) {
  PartitionMap part;
  part.num_ranks = std::max(r0, r1) + 1;
  part.element_to_rank = {r0, r1};
  return part;
}

std::set<std::pair<int64_t, int64_t>> global_edge_set(const ReducedGraph& g) {
  std::set<std::pair<int64_t, int64_t>> out;
  for (int64_t e = 0; e < g.num_edges(); e += 2) {
    int64_t a = g.global_ids[static_cast<size_t>(g.edge_src[static_cast<size_t>(e)])];
    int64_t b = g.global_ids[static_cast<size_t>(g.edge_dst[static_cast<size_t>(e)])];
    if (a > b) std::swap(a, b);
    out.insert({a, b});
  }
  return out;
}

}  // namespace

TEST_CASE("element edges: counts and enumeration oracle") {
  for (int64_t p : {1, 3, 5}) {
    const auto edges = element_edges(p);
    const int64_t q = p + 1;
    CHECK(static_cast<int64_t>(edges.size()) == 3 * p * q * q);

    // oracle: brute-force scan over all lattice point pairs
    int64_t count = 0;
    for (int64_t b = 0; b < q * q * q; ++b)
      for (int64_t a = 0; a < b; ++a) {
        const int64_t ai = a % q, aj = (a / q) % q, ak = a / (q * q);
        const int64_t bi = b % q, bj = (b / q) % q, bk = b / (q * q);
        const int64_t d = std::abs(ai - bi) + std::abs(aj - bj) + std::abs(ak - bk);
        const bool axis_nbr = d == 1;
        if (axis_nbr) ++count;
      }
    CHECK(static_cast<int64_t>(edges.size()) == count);
    std::set<std::pair<int32_t, int32_t>> dedup(edges.begin(), edges.end());
    CHECK(dedup.size() == edges.size());
  }
  CHECK(element_edges(1).size() == 12);
  CHECK(element_edges(3).size() == 144);
  CHECK(element_edges(5).size() == 540);
}

TEST_CASE("assembly collapses local coincident nodes and dedupes edges") {
  const Mesh mesh = two_element_mesh(1);

  SUBCASE("both elements on one rank: 16 raw -> 12 local, 24 raw edges -> 20") {
    PartitionMap part;
    part.num_ranks = 1;
    part.element_to_rank = {0, 0};
    auto [g, cmap] = assemble_rank_graph(mesh, part, 0);
    CHECK(g.num_local == 12);
    CHECK(g.num_edges() == 40);  // 20 undirected
    // collapse map is surjective onto [0, num_local)
    std::set<int32_t> hit(cmap.raw_to_reduced.begin(), cmap.raw_to_reduced.end());
    CHECK(static_cast<int64_t>(hit.size()) == g.num_local);
    CHECK(*hit.begin() == 0);
    CHECK(*hit.rbegin() == 11);
  }

  SUBCASE("single element: identity collapse, 8 nodes, 12 edges") {
    MeshConfig cfg;
    cfg.elements_per_axis = 1;
    cfg.poly_order = 1;
    const Mesh m1 = build_box_mesh(cfg);
    PartitionMap part;
    part.num_ranks = 1;
    part.element_to_rank = {0};
    auto [g, cmap] = assemble_rank_graph(m1, part, 0);
    CHECK(g.num_local == 8);
    CHECK(g.num_edges() == 24);
    for (size_t s = 0; s < cmap.raw_to_reduced.size(); ++s)
      CHECK(cmap.raw_to_reduced[s] == static_cast<int32_t>(s));
  }

  SUBCASE("rank owning zero elements is an error") {
    PartitionMap part;
    part.num_ranks = 3;
    part.element_to_rank = {0, 1};
    CHECK_THROWS_AS(assemble_rank_graph(mesh, part, 2), PartitionError);
  }
}

TEST_CASE("halo schematic configuration: two p=1 elements on two ranks") {
  const Mesh mesh = two_element_mesh(1);
  const PartitionMap part = two_element_partition(0, 1);
  DistributedGraph dg = build_distributed_graph(mesh, part);

  for (int r = 0; r < 2; ++r) {
    const ReducedGraph& g = dg.graphs[static_cast<size_t>(r)];
    const HaloMap& h = dg.halos[static_cast<size_t>(r)];
    CHECK(g.num_local == 8);
    CHECK(g.num_halo == 4);
    CHECK(g.rows() == 12);  // node matrix rows
    CHECK(g.node_features.rows() == 0);  // features come later
    REQUIRE(h.neighbors.size() == 1);
    CHECK(h.neighbors[0] == 1 - r);
    CHECK(h.send_masks[0].size() == 4);
    CHECK(h.recv_masks[0].size() == 4);

    // the four face nodes are coincident: node degree 2, others 1
    int shared = 0;
    for (int64_t i = 0; i < g.num_local; ++i) {
      if (g.node_degree[static_cast<size_t>(i)] == 2)
        ++shared;
      else
        CHECK(g.node_degree[static_cast<size_t>(i)] == 1);
    }
    CHECK(shared == 4);

    // face edges (both endpoints coincident) have degree 2 on both ranks
    int deg2 = 0;
    for (int64_t e = 0; e < g.num_edges(); e += 2) {
      if (g.edge_degree[static_cast<size_t>(e)] == 2) deg2 += 1;
      CHECK(g.edge_degree[static_cast<size_t>(e)] ==
            g.edge_degree[static_cast<size_t>(e + 1)]);
    }
    CHECK(deg2 == 4);  // the 4 shared-face edges
  }
}

TEST_CASE("slab cut of the E=2 p=5 box: 121 halo nodes per rank") {
  MeshConfig cfg;
  cfg.elements_per_axis = 2;
  cfg.poly_order = 5;
  const Mesh mesh = build_box_mesh(cfg);
  const PartitionMap part = partition_mesh(mesh, 2, PartitionStrategy::Slab);
  const DistributedGraph dg = build_distributed_graph(mesh, part);

  // shared-face lattice count (verified against global-id multiplicity)
  std::map<int64_t, int> mult;
  for (const auto& g : dg.graphs)
    for (int64_t i = 0; i < g.num_local; ++i) mult[g.global_ids[static_cast<size_t>(i)]]++;
  int64_t coincident = 0;
  for (const auto& [gid, m] : mult)
    if (m > 1) ++coincident;
  CHECK(coincident == 121);

  const HaloStats st = halo_stats(dg);
  CHECK(st.halo_min == 121);
  CHECK(st.halo_max == 121);
  CHECK(st.nbr_min == 1);
  CHECK(st.nbr_max == 1);
  CHECK(st.nbr_avg == 1.0);
}

TEST_CASE("partition-of-unity and union equivalence across configurations") {
  struct Case {
    int64_t e, p, r;
    PartitionStrategy strategy;
  };
  const std::vector<Case> cases = {
      {2, 2, 2, PartitionStrategy::Slab},   {2, 1, 8, PartitionStrategy::Block},
      {4, 2, 8, PartitionStrategy::Block},  {4, 1, 16, PartitionStrategy::Block},
      {4, 1, 4, PartitionStrategy::Slab},
  };
  for (const auto& c : cases) {
    CAPTURE(c.e);
    CAPTURE(c.p);
    CAPTURE(c.r);
    MeshConfig cfg;
    cfg.elements_per_axis = c.e;
    cfg.poly_order = c.p;
    const Mesh mesh = build_box_mesh(cfg);
    const DistributedGraph dg =
        build_distributed_graph(mesh, partition_mesh(mesh, c.r, c.strategy));

    // node partition of unity: sum over owners of 1/d == 1, exact
    std::map<int64_t, double> node_sum;
    for (const auto& g : dg.graphs)
      for (int64_t i = 0; i < g.num_local; ++i)
        node_sum[g.global_ids[static_cast<size_t>(i)]] += g.node_inv_degree[static_cast<size_t>(i)];
    CHECK(static_cast<int64_t>(node_sum.size()) == cfg.unique_nodes());
    for (const auto& [gid, s] : node_sum) CHECK(std::abs(s - 1.0) <= 1e-14);

    // edge partition of unity
    std::map<std::pair<int64_t, int64_t>, double> edge_sum;
    for (const auto& g : dg.graphs)
      for (int64_t e = 0; e < g.num_edges(); e += 2) {
        int64_t a = g.global_ids[static_cast<size_t>(g.edge_src[static_cast<size_t>(e)])];
        int64_t b = g.global_ids[static_cast<size_t>(g.edge_dst[static_cast<size_t>(e)])];
        if (a > b) std::swap(a, b);
        edge_sum[{a, b}] += g.edge_inv_degree[static_cast<size_t>(e)];
      }
    for (const auto& [key, s] : edge_sum) CHECK(std::abs(s - 1.0) <= 1e-14);

    // graph union equals the unpartitioned reference exactly
    const DistributedGraph ref =
        build_distributed_graph(mesh, partition_mesh(mesh, 1, PartitionStrategy::Slab));
    std::set<int64_t> ref_nodes(ref.graphs[0].global_ids.begin(), ref.graphs[0].global_ids.end());
    std::set<int64_t> union_nodes;
    for (const auto& [gid, s] : node_sum) union_nodes.insert(gid);
    CHECK(union_nodes == ref_nodes);
    std::set<std::pair<int64_t, int64_t>> union_edges;
    for (const auto& [key, s] : edge_sum) union_edges.insert(key);
    CHECK(union_edges == global_edge_set(ref.graphs[0]));

    // halo isolation: adjacency never references halo rows
    for (const auto& g : dg.graphs) {
      for (const auto s : g.edge_src) CHECK(s < g.num_local);
      for (const auto d : g.edge_dst) CHECK(d < g.num_local);
    }

    // halo pairing: send-mask gids on r match recv-mask gids on the neighbor
    for (const auto& h : dg.halos) {
      const ReducedGraph& g = dg.graphs[static_cast<size_t>(h.rank)];
      for (size_t n = 0; n < h.neighbors.size(); ++n) {
        const int32_t s = h.neighbors[n];
        const HaloMap& hs = dg.halos[static_cast<size_t>(s)];
        const ReducedGraph& gs = dg.graphs[static_cast<size_t>(s)];
        const auto it = std::find(hs.neighbors.begin(), hs.neighbors.end(), h.rank);
        REQUIRE(it != hs.neighbors.end());
        const size_t back = static_cast<size_t>(it - hs.neighbors.begin());
        REQUIRE(h.send_masks[n].size() == hs.recv_masks[back].size());
        for (size_t t = 0; t < h.send_masks[n].size(); ++t) {
          const int64_t gid_send = g.global_ids[static_cast<size_t>(h.send_masks[n][t])];
          const int64_t gid_recv = gs.global_ids[static_cast<size_t>(hs.recv_masks[back][t])];
          CHECK(gid_send == gid_recv);
        }
        // no duplicate indices within one mask
        std::set<int32_t> uniq(h.send_masks[n].begin(), h.send_masks[n].end());
        CHECK(uniq.size() == h.send_masks[n].size());
      }
    }
  }
}

TEST_CASE("block symmetry: E=4 p=2 R=8 halo counts equal across ranks") {
  MeshConfig cfg;
  cfg.elements_per_axis = 4;
  cfg.poly_order = 2;
  const Mesh mesh = build_box_mesh(cfg);
  const DistributedGraph dg =
      build_distributed_graph(mesh, partition_mesh(mesh, 8, PartitionStrategy::Block));
  const HaloStats st = halo_stats(dg);
  CHECK(st.halo_min == st.halo_max);
  CHECK(st.local_min == st.local_max);
  CHECK(st.nbr_min == 7);  // octants all touch at the center
  CHECK(st.nbr_max == 7);
}

TEST_CASE("duplicate local global ids are an integrity error") {
  const Mesh mesh = two_element_mesh(1);
  PartitionMap part;
  part.num_ranks = 1;
  part.element_to_rank = {0, 0};
  auto [g, cmap] = assemble_rank_graph(mesh, part, 0);
  g.global_ids[1] = g.global_ids[0];
  std::vector<ReducedGraph> graphs;
  graphs.push_back(std::move(g));
  CHECK_THROWS_AS(build_halo_structures(graphs), IntegrityError);
}

TEST_CASE("edge feature initialization") {
  SUBCASE("identical endpoints give a zero row; unit offset gives (0,0,0,1,0,0,1)") {
    ReducedGraph g;
    g.num_local = 3;
    g.positions = Tensor2D(3, 3);
    g.positions.at(1, 0) = 1.0;  // node1 at (1,0,0); nodes 0 and 2 at origin
    g.global_ids = {0, 1, 2};
    g.edge_src = {0, 2, 0, 1};
    g.edge_dst = {2, 0, 1, 0};
    g.node_features = Tensor2D(3, 3);
    for (int64_t i = 0; i < 3; ++i)
      for (int64_t c = 0; c < 3; ++c) g.node_features.at(i, c) = 0.25;  // equal features
    init_edge_features(g);
    REQUIRE(g.edge_features.rows() == 4);
    for (int64_t c = 0; c < 7; ++c) CHECK(g.edge_features.at(0, c) == 0.0);  // 0 -> 2
    const double expect[7] = {0, 0, 0, 1, 0, 0, 1};
    for (int64_t c = 0; c < 7; ++c) CHECK(g.edge_features.at(2, c) == expect[c]);  // 0 -> 1
  }

  SUBCASE("reversed edge negates the difference columns, keeps the norm") {
    const Mesh mesh = two_element_mesh(2);
    PartitionMap part;
    part.num_ranks = 1;
    part.element_to_rank = {0, 0};
    DistributedGraph dg = build_distributed_graph(mesh, part);
    ReducedGraph& g = dg.graphs[0];
    g.node_features = Tensor2D(g.rows(), 3);
    for (int64_t i = 0; i < g.rows(); ++i)
      for (int64_t c = 0; c < 3; ++c)
        g.node_features.at(i, c) = 0.1 * static_cast<double>(i) + static_cast<double>(c);
    init_edge_features(g);
    for (int64_t e = 0; e < g.num_edges(); e += 2) {
      for (int64_t c = 0; c < 6; ++c)
        CHECK(g.edge_features.at(e, c) == -g.edge_features.at(e + 1, c));
      CHECK(g.edge_features.at(e, 6) == g.edge_features.at(e + 1, 6));
    }
  }

  SUBCASE("unpopulated features raise") {
    ReducedGraph g;
    g.num_local = 1;
    g.positions = Tensor2D(1, 3);
    g.global_ids = {0};
    CHECK_THROWS_AS(init_edge_features(g), UninitializedError);
  }
}
