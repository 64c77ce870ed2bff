#include "hgnn/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace hgnn {

void MeshConfig::validate() const {
  if (elements_per_axis < 1) throw ConfigError("MeshConfig: elements_per_axis must be >= 1");
  if (poly_order < 1) throw ConfigError("MeshConfig: poly_order must be >= 1");
  for (int a = 0; a < 3; ++a)
    if (!(domain_max[a] > domain_min[a]))
      throw ConfigError("MeshConfig: domain_max must exceed domain_min on every axis");
}

// ---------------------------------------------------------------------------
// GLL quadrature
// ---------------------------------------------------------------------------

namespace {

// Legendre P_p(x) and P'_p(x) by the three-term recurrence.
void legendre(int64_t p, double x, double& value, double& deriv) {
  double p0 = 1.0, p1 = x;
  if (p == 0) {
    value = 1.0;
    deriv = 0.0;
    return;
  }
  for (int64_t n = 1; n < p; ++n) {
    const double p2 = ((2.0 * n + 1.0) * x * p1 - n * p0) / (n + 1.0);
    p0 = p1;
    p1 = p2;
  }
  value = p1;
  // (1 - x^2) P'_p = p (P_{p-1} - x P_p)
  deriv = p * (p0 - x * p1) / (1.0 - x * x);
}

}  // namespace

std::vector<double> gll_points(int64_t p) {
  if (p < 1) throw ConfigError("gll_points: polynomial order must be >= 1");
  std::vector<double> x(static_cast<size_t>(p + 1), 0.0);
  x.front() = -1.0;
  x.back() = 1.0;
  // Interior nodes are the roots of P'_p. Newton iteration seeded with
  // Chebyshev-Lobatto points; the right half mirrors the left so the set is
  // exactly symmetric.
  constexpr double tol = 1e-14;
  constexpr int max_iter = 100;
  for (int64_t i = 1; i <= (p - 1) / 2; ++i) {
    double xi = -std::cos(M_PI * static_cast<double>(i) / static_cast<double>(p));
    for (int it = 0; it < max_iter; ++it) {
      double v, d;
      legendre(p, xi, v, d);
      // P''_p = (2 x P'_p - p(p+1) P_p) / (1 - x^2)
      const double dd = (2.0 * xi * d - static_cast<double>(p * (p + 1)) * v) / (1.0 - xi * xi);
      const double step = d / dd;
      xi -= step;
      if (std::abs(step) < tol) break;
    }
    x[static_cast<size_t>(i)] = xi;
    x[static_cast<size_t>(p - i)] = -xi;
  }
  if (p % 2 == 0) x[static_cast<size_t>(p / 2)] = 0.0;
  return x;
}

std::vector<double> gll_weights(int64_t p) {
  const std::vector<double> x = gll_points(p);
  std::vector<double> w(x.size());
  for (size_t i = 0; i < x.size(); ++i) {
    double v, d;
    legendre(p, x[i], v, d);
    w[i] = 2.0 / (static_cast<double>(p * (p + 1)) * v * v);
  }
  return w;
}

// ---------------------------------------------------------------------------
// box mesh
// ---------------------------------------------------------------------------

std::array<double, 3> lattice_position(const MeshConfig& config, const std::vector<double>& gll,
                                       int64_t gx, int64_t gy, int64_t gz) {
  const int64_t e_axis = config.elements_per_axis;
  const int64_t p = config.poly_order;
  std::array<double, 3> pos{};
  const std::array<int64_t, 3> g{gx, gy, gz};
  for (int a = 0; a < 3; ++a) {
    int64_t elem = g[a] / p;
    int64_t loc = g[a] % p;
    if (elem == e_axis) {  // domain max face belongs to the last element
      elem = e_axis - 1;
      loc = p;
    }
    const double h = (config.domain_max[a] - config.domain_min[a]) / static_cast<double>(e_axis);
    pos[a] = config.domain_min[a] + static_cast<double>(elem) * h +
             0.5 * (gll[static_cast<size_t>(loc)] + 1.0) * h;
  }
  return pos;
}

Mesh build_box_mesh(const MeshConfig& config) {
  config.validate();
  Mesh mesh;
  mesh.config = config;
  mesh.gll_1d = gll_points(config.poly_order);

  const int64_t e_axis = config.elements_per_axis;
  const int64_t p = config.poly_order;
  const int64_t q = p + 1;
  const int64_t n1d = config.lattice_per_axis();
  const int64_t n_elem = config.num_elements();

  mesh.element_origins.resize(static_cast<size_t>(n_elem));
  mesh.global_ids.resize(static_cast<size_t>(n_elem));
  mesh.node_positions.resize(static_cast<size_t>(n_elem));

  for (int64_t ez = 0; ez < e_axis; ++ez)
    for (int64_t ey = 0; ey < e_axis; ++ey)
      for (int64_t ex = 0; ex < e_axis; ++ex) {
        const int64_t e = ex + ey * e_axis + ez * e_axis * e_axis;
        for (int a = 0; a < 3; ++a) {
          const double h =
              (config.domain_max[a] - config.domain_min[a]) / static_cast<double>(e_axis);
          const int64_t idx = a == 0 ? ex : (a == 1 ? ey : ez);
          mesh.element_origins[e][a] = config.domain_min[a] + static_cast<double>(idx) * h;
        }
        auto& ids = mesh.global_ids[e];
        auto& pos = mesh.node_positions[e];
        ids.resize(static_cast<size_t>(q * q * q));
        pos.resize(static_cast<size_t>(q * q * q));
        for (int64_t k = 0; k < q; ++k)
          for (int64_t j = 0; j < q; ++j)
            for (int64_t i = 0; i < q; ++i) {
              const int64_t local = i + j * q + k * q * q;
              const int64_t gx = ex * p + i;
              const int64_t gy = ey * p + j;
              const int64_t gz = ez * p + k;
              ids[local] = gx + gy * n1d + gz * n1d * n1d;
              pos[local] = lattice_position(config, mesh.gll_1d, gx, gy, gz);
            }
      }
  return mesh;
}

// ---------------------------------------------------------------------------
// partitioning
// ---------------------------------------------------------------------------

std::array<int64_t, 3> balanced_factors(int64_t num_ranks, int64_t elements_per_axis) {
  std::array<int64_t, 3> best{0, 0, 0};
  int64_t best_spread = -1;
  for (int64_t a = 1; a <= num_ranks; ++a) {
    if (num_ranks % a != 0 || elements_per_axis % a != 0) continue;
    const int64_t bc = num_ranks / a;
    for (int64_t b = 1; b <= bc; ++b) {
      if (bc % b != 0 || elements_per_axis % b != 0) continue;
      const int64_t c = bc / b;
      if (elements_per_axis % c != 0) continue;
      const int64_t spread = std::max({a, b, c}) - std::min({a, b, c});
      const std::array<int64_t, 3> cand{a, b, c};
      if (best_spread < 0 || spread < best_spread || (spread == best_spread && cand > best)) {
        best = cand;
        best_spread = spread;
      }
    }
  }
  if (best_spread < 0)
    throw PartitionError("block partition: no factorization of R=" + std::to_string(num_ranks) +
                         " with every factor dividing E=" + std::to_string(elements_per_axis));
  return best;
}

PartitionMap partition_mesh(const Mesh& mesh, int64_t num_ranks, PartitionStrategy strategy,
                            const std::array<int64_t, 3>& factors) {
  const int64_t e_axis = mesh.config.elements_per_axis;
  if (num_ranks < 1) throw PartitionError("partition: rank count must be >= 1");

  PartitionMap part;
  part.num_ranks = num_ranks;
  part.strategy = strategy;
  part.element_to_rank.assign(static_cast<size_t>(mesh.num_elements()), 0);

  if (strategy == PartitionStrategy::Slab) {
    if (e_axis % num_ranks != 0)
      throw PartitionError("slab partition: R=" + std::to_string(num_ranks) +
                           " must divide elements_per_axis E=" + std::to_string(e_axis) +
                           " (R <= E along the split axis)");
    part.block_factors = {num_ranks, 1, 1};
  } else {
    const int64_t prod = factors[0] * factors[1] * factors[2];
    if (prod != num_ranks)
      throw PartitionError("block partition: factors (" + std::to_string(factors[0]) + "," +
                           std::to_string(factors[1]) + "," + std::to_string(factors[2]) +
                           ") do not multiply to R=" + std::to_string(num_ranks));
    for (int a = 0; a < 3; ++a)
      if (e_axis % factors[a] != 0)
        throw PartitionError("block partition: factor " + std::to_string(factors[a]) +
                             " does not divide elements_per_axis E=" + std::to_string(e_axis));
    part.block_factors = factors;
  }

  const auto& f = part.block_factors;
  const std::array<int64_t, 3> per{e_axis / f[0], e_axis / f[1], e_axis / f[2]};
  for (int64_t ez = 0; ez < e_axis; ++ez)
    for (int64_t ey = 0; ey < e_axis; ++ey)
      for (int64_t ex = 0; ex < e_axis; ++ex) {
        const int64_t e = ex + ey * e_axis + ez * e_axis * e_axis;
        const int64_t bx = ex / per[0];
        const int64_t by = ey / per[1];
        const int64_t bz = ez / per[2];
        part.element_to_rank[e] = static_cast<int32_t>(bx + by * f[0] + bz * f[0] * f[1]);
      }
  return part;
}

PartitionMap partition_mesh(const Mesh& mesh, int64_t num_ranks, PartitionStrategy strategy) {
  if (strategy == PartitionStrategy::Block)
    return partition_mesh(mesh, num_ranks, strategy,
                          balanced_factors(num_ranks, mesh.config.elements_per_axis));
  return partition_mesh(mesh, num_ranks, strategy, {num_ranks, 1, 1});
}

}  // namespace hgnn
