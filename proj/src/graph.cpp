#include "hgnn/graph.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <string>
#include <unordered_map>
#include <unordered_set>

#include "hgnn/error.hpp"

namespace hgnn {

// ---------------------------------------------------------------------------
// element graphs
// ---------------------------------------------------------------------------

std::vector<std::pair<int32_t, int32_t>> element_edges(int64_t p) {
  if (p < 1) throw ConfigError("element_edges: polynomial order must be >= 1");
  const int64_t q = p + 1;
  std::vector<std::pair<int32_t, int32_t>> edges;
  edges.reserve(static_cast<size_t>(3 * p * q * q));
  auto idx = [q](int64_t i, int64_t j, int64_t k) {
    return static_cast<int32_t>(i + j * q + k * q * q);
  };
  for (int64_t k = 0; k < q; ++k)
    for (int64_t j = 0; j < q; ++j)
      for (int64_t i = 0; i < q; ++i) {
        if (i + 1 < q) edges.emplace_back(idx(i, j, k), idx(i + 1, j, k));
        if (j + 1 < q) edges.emplace_back(idx(i, j, k), idx(i, j + 1, k));
        if (k + 1 < q) edges.emplace_back(idx(i, j, k), idx(i, j, k + 1));
      }
  return edges;
}

// ---------------------------------------------------------------------------
// per-rank assembly
// ---------------------------------------------------------------------------

std::pair<ReducedGraph, CollapseMap> assemble_rank_graph(const Mesh& mesh,
                                                         const PartitionMap& part, int32_t rank) {
  if (rank < 0 || rank >= part.num_ranks)
    throw PartitionError("assemble_rank_graph: rank out of range");

  std::vector<int64_t> owned;
  for (int64_t e = 0; e < mesh.num_elements(); ++e)
    if (part.element_to_rank[e] == rank) owned.push_back(e);
  if (owned.empty())
    throw PartitionError("assemble_rank_graph: rank " + std::to_string(rank) +
                         " owns no elements");

  const int64_t p = mesh.config.poly_order;
  const int64_t npe = mesh.config.nodes_per_element();
  const auto local_edges = element_edges(p);

  ReducedGraph g;
  g.rank = rank;
  CollapseMap cmap;
  cmap.raw_to_reduced.assign(owned.size() * static_cast<size_t>(npe), -1);

  // Collapse local coincident nodes: first occurrence in ascending element
  // index, then ascending lattice order, owns the reduced row.
  std::unordered_map<int64_t, int32_t> gid_to_local;
  gid_to_local.reserve(owned.size() * static_cast<size_t>(npe));
  std::vector<std::array<double, 3>> pos;
  for (size_t oe = 0; oe < owned.size(); ++oe) {
    const auto& ids = mesh.global_ids[owned[oe]];
    const auto& epos = mesh.node_positions[owned[oe]];
    for (int64_t s = 0; s < npe; ++s) {
      const int64_t gid = ids[s];
      auto it = gid_to_local.find(gid);
      int32_t local;
      if (it == gid_to_local.end()) {
        local = static_cast<int32_t>(g.global_ids.size());
        gid_to_local.emplace(gid, local);
        g.global_ids.push_back(gid);
        pos.push_back(epos[s]);
      } else {
        local = it->second;
      }
      cmap.raw_to_reduced[oe * static_cast<size_t>(npe) + static_cast<size_t>(s)] = local;
    }
  }
  g.num_local = static_cast<int64_t>(g.global_ids.size());
  g.positions = Tensor2D(g.num_local, 3);
  for (int64_t i = 0; i < g.num_local; ++i)
    for (int a = 0; a < 3; ++a) g.positions.at(i, a) = pos[static_cast<size_t>(i)][a];

  // Undirected edges, intra-rank duplicates (same unordered global-id pair)
  // removed; each kept edge stored as two directed entries.
  struct PairHash {
    size_t operator()(const std::pair<int64_t, int64_t>& p) const {
      const uint64_t h = static_cast<uint64_t>(p.first) * 0x9e3779b97f4a7c15ull;
      return static_cast<size_t>(h ^ (static_cast<uint64_t>(p.second) + (h >> 27)));
    }
  };
  std::unordered_set<std::pair<int64_t, int64_t>, PairHash> seen_edge;
  seen_edge.reserve(owned.size() * local_edges.size());
  for (size_t oe = 0; oe < owned.size(); ++oe) {
    const auto& ids = mesh.global_ids[owned[oe]];
    for (const auto& [a, b] : local_edges) {
      int64_t ga = ids[a], gb = ids[b];
      if (ga > gb) std::swap(ga, gb);
      if (seen_edge.emplace(ga, gb).second) {
        const int32_t u = gid_to_local.at(ga);
        const int32_t v = gid_to_local.at(gb);
        g.edge_src.push_back(u);
        g.edge_dst.push_back(v);
        g.edge_src.push_back(v);
        g.edge_dst.push_back(u);
      }
    }
  }

  g.node_degree.assign(static_cast<size_t>(g.num_local), 1);
  g.node_inv_degree.assign(static_cast<size_t>(g.num_local), 1.0);
  g.edge_degree.assign(g.edge_src.size(), 1);
  g.edge_inv_degree.assign(g.edge_src.size(), 1.0);
  return {std::move(g), std::move(cmap)};
}

void ReducedGraph::build_csr() {
  const int64_t n = rows();
  const int64_t ne = num_edges();
  auto build = [&](const std::vector<int32_t>& key, std::vector<int32_t>& offsets,
                   std::vector<int32_t>& ids) {
    offsets.assign(static_cast<size_t>(n + 1), 0);
    for (int64_t e = 0; e < ne; ++e) offsets[static_cast<size_t>(key[e]) + 1]++;
    for (int64_t i = 0; i < n; ++i) offsets[static_cast<size_t>(i + 1)] += offsets[static_cast<size_t>(i)];
    ids.resize(static_cast<size_t>(ne));
    std::vector<int32_t> cursor(offsets.begin(), offsets.end() - 1);
    for (int64_t e = 0; e < ne; ++e) ids[static_cast<size_t>(cursor[static_cast<size_t>(key[e])]++)] = static_cast<int32_t>(e);
  };
  build(edge_dst, in_offsets, in_edges);
  build(edge_src, out_offsets, out_edges);
}

// ---------------------------------------------------------------------------
// halo structures
// ---------------------------------------------------------------------------

std::vector<HaloMap> build_halo_structures(std::vector<ReducedGraph>& graphs) {
  const int64_t num_ranks = static_cast<int64_t>(graphs.size());

  // gid -> owners as (rank, local index), ascending rank by construction
  std::unordered_map<int64_t, std::vector<std::pair<int32_t, int32_t>>> owners;
  for (int64_t r = 0; r < num_ranks; ++r) {
    const ReducedGraph& g = graphs[static_cast<size_t>(r)];
    if (g.num_halo != 0)
      throw IntegrityError("build_halo_structures: graphs must not already carry halo rows");
    std::unordered_map<int64_t, int32_t> local_seen;
    for (int64_t i = 0; i < g.num_local; ++i) {
      const int64_t gid = g.global_ids[static_cast<size_t>(i)];
      if (!local_seen.emplace(gid, 0).second)
        throw IntegrityError("build_halo_structures: duplicate global id " + std::to_string(gid) +
                             " among local nodes of rank " + std::to_string(r));
      owners[gid].emplace_back(static_cast<int32_t>(r), static_cast<int32_t>(i));
    }
  }

  std::vector<HaloMap> halos(static_cast<size_t>(num_ranks));

  for (int64_t r = 0; r < num_ranks; ++r) {
    ReducedGraph& g = graphs[static_cast<size_t>(r)];
    HaloMap& h = halos[static_cast<size_t>(r)];
    h.rank = static_cast<int32_t>(r);

    // shared gids per neighbor rank, ascending gid (map keeps neighbors sorted)
    std::map<int32_t, std::vector<std::pair<int64_t, int32_t>>> shared;  // s -> (gid, local on r)
    for (int64_t i = 0; i < g.num_local; ++i) {
      const auto& own = owners.at(g.global_ids[static_cast<size_t>(i)]);
      if (own.size() < 2) continue;
      g.node_degree[static_cast<size_t>(i)] = static_cast<int32_t>(own.size());
      g.node_inv_degree[static_cast<size_t>(i)] = 1.0 / static_cast<double>(own.size());
      for (const auto& [s, sl] : own) {
        (void)sl;
        if (s != r)
          shared[s].emplace_back(g.global_ids[static_cast<size_t>(i)], static_cast<int32_t>(i));
      }
    }

    // halo rows ordered by (source rank asc, gid asc)
    std::map<std::pair<int32_t, int64_t>, int32_t> halo_lookup;
    int64_t next_row = g.num_local;
    for (auto& [s, list] : shared) {
      std::sort(list.begin(), list.end());
      h.neighbors.push_back(s);
      std::vector<int32_t> send, recv;
      send.reserve(list.size());
      recv.reserve(list.size());
      for (const auto& [gid, local] : list) {
        send.push_back(local);
        recv.push_back(static_cast<int32_t>(next_row));
        halo_lookup[{s, gid}] = static_cast<int32_t>(next_row);
        h.halo_to_local.push_back(local);
        g.global_ids.push_back(gid);
        ++next_row;
      }
      h.send_masks.push_back(std::move(send));
      h.recv_masks.push_back(std::move(recv));
    }
    g.num_halo = next_row - g.num_local;

    // positions for halo rows mirror the coincident local rows
    Tensor2D pos(g.rows(), 3);
    for (int64_t i = 0; i < g.num_local; ++i)
      for (int a = 0; a < 3; ++a) pos.at(i, a) = g.positions.at(i, a);
    for (int64_t hrow = 0; hrow < g.num_halo; ++hrow) {
      const int32_t local = h.halo_to_local[static_cast<size_t>(hrow)];
      for (int a = 0; a < 3; ++a) pos.at(g.num_local + hrow, a) = g.positions.at(local, a);
    }
    g.positions = std::move(pos);

    // synchronization groups: ascending owner-rank order, own slot in place
    for (int64_t i = 0; i < g.num_local; ++i) {
      const auto& own = owners.at(g.global_ids[static_cast<size_t>(i)]);
      if (own.size() < 2) continue;
      HaloMap::SyncGroup grp;
      grp.local_node = static_cast<int32_t>(i);
      for (const auto& [s, sl] : own) {
        (void)sl;
        if (s == r)
          grp.slots.push_back(-1);
        else
          grp.slots.push_back(halo_lookup.at({s, g.global_ids[static_cast<size_t>(i)]}));
      }
      h.sync_groups.push_back(std::move(grp));
    }
  }

  // edge degrees: number of ranks owning each unordered global edge
  std::unordered_map<int64_t, std::unordered_map<int64_t, int32_t>> edge_owners;
  for (int64_t r = 0; r < num_ranks; ++r) {
    const ReducedGraph& g = graphs[static_cast<size_t>(r)];
    for (int64_t e = 0; e < g.num_edges(); e += 2) {
      int64_t ga = g.global_ids[static_cast<size_t>(g.edge_src[static_cast<size_t>(e)])];
      int64_t gb = g.global_ids[static_cast<size_t>(g.edge_dst[static_cast<size_t>(e)])];
      if (ga > gb) std::swap(ga, gb);
      edge_owners[ga][gb]++;
    }
  }
  for (int64_t r = 0; r < num_ranks; ++r) {
    ReducedGraph& g = graphs[static_cast<size_t>(r)];
    for (int64_t e = 0; e < g.num_edges(); e += 2) {
      int64_t ga = g.global_ids[static_cast<size_t>(g.edge_src[static_cast<size_t>(e)])];
      int64_t gb = g.global_ids[static_cast<size_t>(g.edge_dst[static_cast<size_t>(e)])];
      if (ga > gb) std::swap(ga, gb);
      const int32_t d = edge_owners.at(ga).at(gb);
      g.edge_degree[static_cast<size_t>(e)] = d;
      g.edge_degree[static_cast<size_t>(e + 1)] = d;
      g.edge_inv_degree[static_cast<size_t>(e)] = 1.0 / static_cast<double>(d);
      g.edge_inv_degree[static_cast<size_t>(e + 1)] = 1.0 / static_cast<double>(d);
    }
    g.build_csr();
  }

  // global max buffer rows (AllToAll padding unit)
  int64_t max_rows = 0;
  for (const auto& h : halos)
    for (const auto& m : h.send_masks)
      max_rows = std::max(max_rows, static_cast<int64_t>(m.size()));
  for (auto& h : halos) h.max_buffer_rows = max_rows;

  return halos;
}

// ---------------------------------------------------------------------------
// features / stats
// ---------------------------------------------------------------------------

void init_edge_features(ReducedGraph& graph) {
  if (graph.node_features.rows() != graph.rows() || graph.node_features.cols() != 3)
    throw UninitializedError("init_edge_features: node_features must be populated with 3 columns");
  if (graph.positions.rows() != graph.rows())
    throw UninitializedError("init_edge_features: positions not populated");
  const int64_t ne = graph.num_edges();
  graph.edge_features = Tensor2D(ne, 7);
  for (int64_t e = 0; e < ne; ++e) {
    const int32_t i = graph.edge_src[static_cast<size_t>(e)];
    const int32_t j = graph.edge_dst[static_cast<size_t>(e)];
    double* row = graph.edge_features.row(e);
    double norm2 = 0.0;
    for (int a = 0; a < 3; ++a) {
      row[a] = graph.node_features.at(j, a) - graph.node_features.at(i, a);
      const double d = graph.positions.at(j, a) - graph.positions.at(i, a);
      row[3 + a] = d;
      norm2 += d * d;
    }
    row[6] = std::sqrt(norm2);
  }
}

DistributedGraph build_distributed_graph(const Mesh& mesh, const PartitionMap& part) {
  DistributedGraph dg;
  dg.graphs.reserve(static_cast<size_t>(part.num_ranks));
  for (int32_t r = 0; r < part.num_ranks; ++r)
    dg.graphs.push_back(assemble_rank_graph(mesh, part, r).first);
  dg.halos = build_halo_structures(dg.graphs);
  return dg;
}

HaloStats halo_stats(const DistributedGraph& dg) {
  HaloStats st;
  for (size_t r = 0; r < dg.graphs.size(); ++r) {
    const auto& g = dg.graphs[r];
    const auto& h = dg.halos[r];
    st.rows.push_back({g.rank, g.num_local, g.num_halo, static_cast<int64_t>(h.neighbors.size())});
  }
  auto summarize = [&](auto get, int64_t& mn, int64_t& mx, double& avg) {
    mn = get(st.rows[0]);
    mx = mn;
    double sum = 0.0;
    for (const auto& row : st.rows) {
      const int64_t v = get(row);
      mn = std::min(mn, v);
      mx = std::max(mx, v);
      sum += static_cast<double>(v);
    }
    avg = sum / static_cast<double>(st.rows.size());
  };
  summarize([](const HaloStatsRow& r) { return r.local_nodes; }, st.local_min, st.local_max,
            st.local_avg);
  summarize([](const HaloStatsRow& r) { return r.halo_nodes; }, st.halo_min, st.halo_max,
            st.halo_avg);
  summarize([](const HaloStatsRow& r) { return r.neighbors; }, st.nbr_min, st.nbr_max, st.nbr_avg);
  return st;
}

}  // namespace hgnn
