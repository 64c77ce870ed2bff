#pragma once

// Shared helpers for the model/harness test suites.

#include <cmath>
#include <map>
#include <vector>

#include "hgnn/graph.hpp"
#include "hgnn/harness.hpp"
#include "hgnn/mesh.hpp"

namespace hgnn::testing {

// Populates node features with the Taylor-Green field (bitwise equal at
// coincident nodes since positions are) and initializes edge features.
inline void attach_position_features(DistributedGraph& dg) {
  MeshConfig cfg;  // only the domain box matters for the field
  attach_tgv_features(dg, cfg);
}

inline DistributedGraph make_graph(int64_t e, int64_t p, int64_t r,
                                   PartitionStrategy strategy = PartitionStrategy::Block) {
  MeshConfig cfg;
  cfg.elements_per_axis = e;
  cfg.poly_order = p;
  const Mesh mesh = build_box_mesh(cfg);
  const PartitionMap part = r == 1 ? partition_mesh(mesh, 1, PartitionStrategy::Slab)
                                   : partition_mesh(mesh, r, strategy);
  DistributedGraph dg = build_distributed_graph(mesh, part);
  attach_tgv_features(dg, cfg);
  return dg;
}

// Collects per-global-id output rows across ranks. Verifies bitwise equality
// between coincident copies when `bitwise_equal` is non-null.
inline std::map<int64_t, std::vector<double>> gather_by_gid(const DistributedGraph& dg,
                                                            const std::vector<Tensor2D>& per_rank,
                                                            bool* bitwise_equal = nullptr) {
  if (bitwise_equal) *bitwise_equal = true;
  std::map<int64_t, std::vector<double>> out;
  for (size_t r = 0; r < dg.graphs.size(); ++r) {
    const auto& g = dg.graphs[r];
    const auto& y = per_rank[r];
    for (int64_t i = 0; i < g.num_local; ++i) {
      std::vector<double> row(y.row(i), y.row(i) + y.cols());
      const auto [it, inserted] = out.emplace(g.global_ids[static_cast<size_t>(i)], row);
      if (!inserted && bitwise_equal && it->second != row) *bitwise_equal = false;
    }
  }
  return out;
}

// Max relative deviation between two gid-keyed row maps, normalized by the
// reference's max magnitude.
inline double max_rel_deviation(const std::map<int64_t, std::vector<double>>& test,
                                const std::map<int64_t, std::vector<double>>& ref) {
  double ref_mag = 0.0;
  for (const auto& [gid, row] : ref)
    for (const double v : row) ref_mag = std::max(ref_mag, std::abs(v));
  if (ref_mag == 0.0) ref_mag = 1.0;
  double dev = 0.0;
  for (const auto& [gid, row] : ref) {
    const auto it = test.find(gid);
    if (it == test.end()) return 1e300;
    for (size_t c = 0; c < row.size(); ++c)
      dev = std::max(dev, std::abs(it->second[c] - row[c]) / ref_mag);
  }
  return dev;
}

}  // namespace hgnn::testing
