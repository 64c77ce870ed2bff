#pragma once

#include <array>
#include <cstdint>
#include <utility>
#include <vector>

#include "hgnn/mesh.hpp"
#include "hgnn/tensor.hpp"

namespace hgnn {

// Per-rank reduced distributed graph: local coincident nodes collapsed to one
// owner, halo rows appended after the local block, adjacency stored as
// directed coordinate pairs (one undirected edge = two directed entries).
struct ReducedGraph {
  int32_t rank = 0;
  int64_t num_local = 0;
  int64_t num_halo = 0;

  Tensor2D positions;             // (num_local+num_halo) x 3
  std::vector<int64_t> global_ids;  // num_local+num_halo
  Tensor2D node_features;         // (num_local+num_halo) x F_x, filled by caller
  Tensor2D edge_features;         // N_e x F_e, see init_edge_features

  std::vector<int32_t> edge_src;  // N_e directed entries; never references halo rows
  std::vector<int32_t> edge_dst;

  std::vector<int32_t> node_degree;      // num_local; ranks owning each global node
  std::vector<int32_t> edge_degree;      // N_e; ranks owning each global edge
  std::vector<double> edge_inv_degree;   // 1/d per directed entry
  std::vector<double> node_inv_degree;   // 1/d per local node

  // CSR groupings of directed edge ids, fixed order for deterministic
  // scatter; in_* groups by receiver (dst), out_* by sender (src).
  std::vector<int32_t> in_offsets, in_edges;
  std::vector<int32_t> out_offsets, out_edges;

  int64_t rows() const { return num_local + num_halo; }
  int64_t num_edges() const { return static_cast<int64_t>(edge_src.size()); }
  void build_csr();
};

// Send/receive index masks pairing coincident rows with halo rows on
// neighboring ranks. Mask order is ascending global id on both sides, so the
// sequences match element-for-element.
struct HaloMap {
  int32_t rank = 0;
  std::vector<int32_t> neighbors;               // ascending rank ids
  std::vector<std::vector<int32_t>> send_masks;  // per neighbor: local row indices
  std::vector<std::vector<int32_t>> recv_masks;  // per neighbor: halo row indices
  std::vector<int32_t> halo_to_local;            // per halo row: matching local row

  // Aggregate synchronization groups: for every local node owned by several
  // ranks, the contribution slots in ascending owner-rank order. Slot -1 is
  // this rank's own aggregate; other slots are halo row indices.
  struct SyncGroup {
    int32_t local_node;
    std::vector<int32_t> slots;
  };
  std::vector<SyncGroup> sync_groups;

  // Global max send-mask length, the padded buffer row count for AllToAll.
  int64_t max_buffer_rows = 0;
};

// Maps every raw per-element node slot of a rank's owned elements (element
// iteration order x lattice order) to its reduced local index.
struct CollapseMap {
  std::vector<int32_t> raw_to_reduced;
};

struct DistributedGraph {
  std::vector<ReducedGraph> graphs;
  std::vector<HaloMap> halos;
  int64_t num_ranks() const { return static_cast<int64_t>(graphs.size()); }
};

// Undirected axis-neighbor edges between GLL lattice points of one element,
// as (a,b) local index pairs with a < b; count = 3*p*(p+1)^2.
std::vector<std::pair<int32_t, int32_t>> element_edges(int64_t p);

// Concatenates the rank's element graphs, collapses nodes sharing a global id
// (owner = first occurrence in element-iteration order) and deduplicates
// intra-rank duplicate edges. Halo structures are not built here.
std::pair<ReducedGraph, CollapseMap> assemble_rank_graph(const Mesh& mesh,
                                                         const PartitionMap& part, int32_t rank);

// Cross-rank preprocessing with global visibility: appends halo rows (ordered
// by source rank, then global id), fills node/edge degrees, and builds the
// halo maps and CSR scatter structures for every rank.
std::vector<HaloMap> build_halo_structures(std::vector<ReducedGraph>& graphs);

// F_e = 7 edge features for directed edge i->j: x_j - x_i, pos_j - pos_i,
// |pos_j - pos_i|. node_features must hold 3 columns.
void init_edge_features(ReducedGraph& graph);

// assemble + halo structures for all ranks of a partition.
DistributedGraph build_distributed_graph(const Mesh& mesh, const PartitionMap& part);

struct HaloStatsRow {
  int32_t rank;
  int64_t local_nodes, halo_nodes, neighbors;
};

struct HaloStats {
  std::vector<HaloStatsRow> rows;
  int64_t local_min = 0, local_max = 0;
  int64_t halo_min = 0, halo_max = 0;
  int64_t nbr_min = 0, nbr_max = 0;
  double local_avg = 0.0, halo_avg = 0.0, nbr_avg = 0.0;
};

HaloStats halo_stats(const DistributedGraph& dg);

}  // namespace hgnn
