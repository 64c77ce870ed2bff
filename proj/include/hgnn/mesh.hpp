#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "hgnn/error.hpp"

namespace hgnn {

// Structured box mesh of hexahedral spectral elements with Gauss-Legendre-
// Lobatto quadrature points, standing in for the solver-side preprocessor.

struct MeshConfig {
  int64_t elements_per_axis = 1;  // E
  int64_t poly_order = 1;         // p
  std::array<double, 3> domain_min{0.0, 0.0, 0.0};
  std::array<double, 3> domain_max{1.0, 1.0, 1.0};

  void validate() const;
  int64_t num_elements() const { return elements_per_axis * elements_per_axis * elements_per_axis; }
  int64_t nodes_per_element() const {
    const int64_t q = poly_order + 1;
    return q * q * q;
  }
  // unique global lattice points per axis
  int64_t lattice_per_axis() const { return elements_per_axis * poly_order + 1; }
  int64_t unique_nodes() const {
    const int64_t n = lattice_per_axis();
    return n * n * n;
  }
};

struct Mesh {
  MeshConfig config;
  std::vector<double> gll_1d;                           // p+1 reference coords in [-1,1]
  std::vector<std::array<double, 3>> element_origins;   // E^3, x-fastest element order
  std::vector<std::vector<int64_t>> global_ids;         // per element, (p+1)^3 lattice ids
  std::vector<std::vector<std::array<double, 3>>> node_positions;  // per element

  int64_t num_elements() const { return static_cast<int64_t>(element_origins.size()); }
};

enum class PartitionStrategy { Slab, Block };

struct PartitionMap {
  int64_t num_ranks = 1;
  PartitionStrategy strategy = PartitionStrategy::Slab;
  std::array<int64_t, 3> block_factors{1, 1, 1};  // (Rx,Ry,Rz); slab uses (R,1,1)
  std::vector<int32_t> element_to_rank;           // length E^3
};

// Gauss-Legendre-Lobatto nodes on [-1,1], strictly ascending, exactly
// symmetric about 0. Newton iteration on P'_p seeded with Chebyshev-Lobatto
// points (tolerance 1e-14, max 100 iterations). Throws ConfigError for p < 1.
std::vector<double> gll_points(int64_t p);

// Quadrature weights matching gll_points; used by tests to verify exactness.
std::vector<double> gll_weights(int64_t p);

Mesh build_box_mesh(const MeshConfig& config);

// Canonical physical position of a global lattice point. Every element that
// touches the point computes it through this same decomposition, so coincident
// node positions are bitwise equal.
std::array<double, 3> lattice_position(const MeshConfig& config, const std::vector<double>& gll,
                                       int64_t gx, int64_t gy, int64_t gz);

// Slab: equal-thickness slabs along x (requires R | E). Block: R = Rx*Ry*Rz
// sub-boxes with each factor dividing E; factors chosen automatically to
// minimize spread unless given. Throws PartitionError naming the failing
// constraint.
PartitionMap partition_mesh(const Mesh& mesh, int64_t num_ranks, PartitionStrategy strategy);
PartitionMap partition_mesh(const Mesh& mesh, int64_t num_ranks, PartitionStrategy strategy,
                            const std::array<int64_t, 3>& factors);

// Balanced factor triple (Rx,Ry,Rz) of R with each factor dividing E.
std::array<int64_t, 3> balanced_factors(int64_t num_ranks, int64_t elements_per_axis);

}  // namespace hgnn
