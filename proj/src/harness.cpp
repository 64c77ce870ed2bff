#include "hgnn/harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <map>
#include <sstream>

#include "hgnn/error.hpp"
#include "hgnn/io.hpp"

namespace hgnn {

// ---------------------------------------------------------------------------
// Taylor-Green input field
// ---------------------------------------------------------------------------

Tensor2D tgv_field(const Tensor2D& positions, const std::array<double, 3>& domain_min,
                   const std::array<double, 3>& domain_max) {
  if (positions.cols() != 3) throw ShapeError("tgv_field: positions must have 3 columns");
  Tensor2D out(positions.rows(), 3);
  const double two_pi = 2.0 * M_PI;
  for (int64_t i = 0; i < positions.rows(); ++i) {
    double s[3];
    for (int a = 0; a < 3; ++a)
      s[a] = (positions.at(i, a) - domain_min[a]) / (domain_max[a] - domain_min[a]) * two_pi;
    out.at(i, 0) = std::sin(s[0]) * std::cos(s[1]) * std::cos(s[2]);
    out.at(i, 1) = -std::cos(s[0]) * std::sin(s[1]) * std::cos(s[2]);
    out.at(i, 2) = 0.0;
  }
  return out;
}

void attach_tgv_features(DistributedGraph& dg, const MeshConfig& config) {
  for (auto& g : dg.graphs) {
    g.node_features = tgv_field(g.positions, config.domain_min, config.domain_max);
    init_edge_features(g);
  }
}

PartitionMap verify_partition(const Mesh& mesh, int64_t ranks) {
  if (ranks == 1) return partition_mesh(mesh, 1, PartitionStrategy::Slab);
  return partition_mesh(mesh, ranks, PartitionStrategy::Block);
}

// ---------------------------------------------------------------------------
// consistency verification
// ---------------------------------------------------------------------------

namespace {

struct ForwardResult {
  std::vector<Tensor2D> outputs;  // per rank, local rows
  double loss = 0.0;
};

ForwardResult run_forward_loss(const DistributedGraph& dg, const ModelParams& params) {
  RankRuntime rt(dg.num_ranks());
  ForwardResult res;
  res.outputs.resize(static_cast<size_t>(dg.num_ranks()));
  std::vector<double> losses(static_cast<size_t>(dg.num_ranks()));
  rt.run([&](RankComm& comm) {
    const size_t r = static_cast<size_t>(comm.rank());
    const ReducedGraph& g = dg.graphs[r];
    Tensor2D y = gnn_forward(params, g, dg.halos[r], &comm, nullptr);
    Tensor2D target(g.num_local, g.node_features.cols());
    std::memcpy(target.data(), g.node_features.data(),
                sizeof(double) * static_cast<size_t>(target.size()));
    losses[r] = consistent_loss(comm, y, target, g.node_inv_degree).loss;
    res.outputs[r] = std::move(y);
  });
  res.loss = losses[0];
  return res;
}

// gid -> output rows; flags bitwise disagreement between coincident copies
std::map<int64_t, std::vector<double>> gather_outputs(const DistributedGraph& dg,
                                                      const std::vector<Tensor2D>& ys,
                                                      bool* bitwise) {
  if (bitwise) *bitwise = true;
  std::map<int64_t, std::vector<double>> out;
  for (size_t r = 0; r < dg.graphs.size(); ++r) {
    const auto& g = dg.graphs[r];
    for (int64_t i = 0; i < g.num_local; ++i) {
      std::vector<double> row(ys[r].row(i), ys[r].row(i) + ys[r].cols());
      const auto [it, inserted] = out.emplace(g.global_ids[static_cast<size_t>(i)], std::move(row));
      if (!inserted && bitwise) {
        for (int64_t c = 0; c < ys[r].cols(); ++c)
          if (it->second[static_cast<size_t>(c)] != ys[r].at(i, c)) *bitwise = false;
      }
    }
  }
  return out;
}

double max_rel_dev(const std::map<int64_t, std::vector<double>>& test,
                   const std::map<int64_t, std::vector<double>>& ref) {
  double mag = 0.0;
  for (const auto& [gid, row] : ref)
    for (const double v : row) mag = std::max(mag, std::abs(v));
  if (mag == 0.0) mag = 1.0;
  double dev = 0.0;
  for (const auto& [gid, row] : ref) {
    const auto it = test.find(gid);
    if (it == test.end()) throw IntegrityError("output comparison: missing global id");
    for (size_t c = 0; c < row.size(); ++c)
      dev = std::max(dev, std::abs(it->second[c] - row[c]) / mag);
  }
  return dev;
}

double rel_diff(double a, double ref) {
  const double denom = std::max(std::abs(ref), 1e-300);
  return std::abs(a - ref) / denom;
}

}  // namespace

ConsistencyReport verify_consistency(const MeshConfig& mesh_config,
                                     const std::vector<int64_t>& rank_counts,
                                     const GnnConfig& model_config, uint64_t seed) {
  const Mesh mesh = build_box_mesh(mesh_config);
  ModelParams params = init_params(model_config, seed);
  ModelParams params_none = params;
  params_none.config.mode = ExchangeMode::None;
  if (params.config.mode == ExchangeMode::None)
    throw ConfigError("verify_consistency: the model config must name an exchange mode");

  DistributedGraph ref = build_distributed_graph(mesh, verify_partition(mesh, 1));
  attach_tgv_features(ref, mesh_config);
  const ForwardResult ref_run = run_forward_loss(ref, params);
  const auto ref_map = gather_outputs(ref, ref_run.outputs, nullptr);

  ConsistencyReport report;
  report.ref_loss = ref_run.loss;
  report.passed = true;
  for (const int64_t r : rank_counts) {
    ConsistencyRow row;
    row.ranks = r;
    DistributedGraph dg = build_distributed_graph(mesh, verify_partition(mesh, r));
    attach_tgv_features(dg, mesh_config);

    const ForwardResult cons = run_forward_loss(dg, params);
    row.loss_consistent = cons.loss;
    row.rel_loss_dev_consistent = rel_diff(cons.loss, ref_run.loss);
    bool bitwise = false;
    const auto cons_map = gather_outputs(dg, cons.outputs, &bitwise);
    row.bitwise_coincident = bitwise;
    row.max_output_dev = max_rel_dev(cons_map, ref_map);

    const ForwardResult none = run_forward_loss(dg, params_none);
    row.loss_none = none.loss;
    row.rel_loss_dev_none = rel_diff(none.loss, ref_run.loss);

    if (row.rel_loss_dev_consistent > report.tol_output || row.max_output_dev > report.tol_output ||
        !row.bitwise_coincident)
      report.passed = false;
    report.rows.push_back(row);
  }
  return report;
}

GradientReport verify_gradients(const MeshConfig& mesh_config, int64_t ranks,
                                const GnnConfig& model_config, uint64_t seed) {
  const Mesh mesh = build_box_mesh(mesh_config);
  ModelParams params = init_params(model_config, seed);

  auto gradients_at = [&](int64_t r) {
    DistributedGraph dg = build_distributed_graph(mesh, verify_partition(mesh, r));
    attach_tgv_features(dg, mesh_config);
    RankRuntime rt(r);
    std::vector<ModelGrads> grads(static_cast<size_t>(r), make_grads(params));
    rt.run([&](RankComm& comm) {
      const size_t rr = static_cast<size_t>(comm.rank());
      const ReducedGraph& g = dg.graphs[rr];
      Tensor2D target(g.num_local, g.node_features.cols());
      std::memcpy(target.data(), g.node_features.data(),
                  sizeof(double) * static_cast<size_t>(target.size()));
      grads[rr] = compute_gradients(comm, params, g, dg.halos[rr], target, nullptr);
    });
    return grads[0];  // averaged gradients are identical on every rank
  };

  GradientReport rep;
  rep.ranks = ranks;
  ModelGrads g1 = gradients_at(1);
  ModelGrads gr = gradients_at(ranks);
  ModelGrads gr2 = gradients_at(ranks);

  // determinism: two repeated runs bitwise equal
  rep.deterministic = true;
  {
    std::vector<Tensor2D*> a, b;
    gr.for_each([&](const std::string&, Tensor2D& t) { a.push_back(&t); });
    gr2.for_each([&](const std::string&, Tensor2D& t) { b.push_back(&t); });
    for (size_t i = 0; i < a.size(); ++i)
      if (!(*a[i] == *b[i])) rep.deterministic = false;
  }

  // per-tensor relative deviation, normalized by the tensor's max |g| at R=1
  std::vector<Tensor2D*> t1, tr;
  g1.for_each([&](const std::string&, Tensor2D& t) { t1.push_back(&t); });
  gr.for_each([&](const std::string&, Tensor2D& t) { tr.push_back(&t); });
  for (size_t t = 0; t < t1.size(); ++t) {
    double mag = 0.0;
    for (int64_t i = 0; i < t1[t]->size(); ++i) mag = std::max(mag, std::abs(t1[t]->data()[i]));
    if (mag == 0.0) mag = 1.0;
    for (int64_t i = 0; i < t1[t]->size(); ++i)
      rep.max_rel_dev =
          std::max(rep.max_rel_dev, std::abs(tr[t]->data()[i] - t1[t]->data()[i]) / mag);
  }

  // finite-difference spot checks at R=1, restricted to parameters whose
  // gradient magnitude is large enough for the 1e-5 step to resolve
  DistributedGraph ref = build_distributed_graph(mesh, verify_partition(mesh, 1));
  attach_tgv_features(ref, mesh_config);
  const ReducedGraph& g = ref.graphs[0];
  Tensor2D target(g.num_local, g.node_features.cols());
  std::memcpy(target.data(), g.node_features.data(),
              sizeof(double) * static_cast<size_t>(target.size()));
  RankRuntime rt1(1);
  auto eval_loss = [&]() {
    double loss = 0.0;
    rt1.run([&](RankComm& comm) {
      Tensor2D y = gnn_forward(params, g, ref.halos[0], &comm, nullptr);
      loss = consistent_loss(comm, y, target, g.node_inv_degree).loss;
    });
    return loss;
  };

  std::vector<Tensor2D*> pt;
  params.for_each([&](const std::string&, Tensor2D& t) { pt.push_back(&t); });
  double gmax = 0.0;
  for (const Tensor2D* t : t1)
    for (int64_t i = 0; i < t->size(); ++i) gmax = std::max(gmax, std::abs(t->data()[i]));
  struct Slot {
    size_t tensor;
    int64_t index;
  };
  std::vector<Slot> eligible;
  for (size_t t = 0; t < t1.size(); ++t)
    for (int64_t i = 0; i < t1[t]->size(); ++i)
      if (std::abs(t1[t]->data()[i]) >= 1e-3 * gmax) eligible.push_back({t, i});
  Rng rng(seed ^ 0x5eedULL);
  const double h = 1e-5;
  const int64_t n_checks = std::min<int64_t>(10, static_cast<int64_t>(eligible.size()));
  for (int64_t c = 0; c < n_checks; ++c) {
    const Slot s = eligible[static_cast<size_t>(rng.next_u64() % eligible.size())];
    double& p = pt[s.tensor]->data()[s.index];
    const double save = p;
    p = save + h;
    const double lp = eval_loss();
    p = save - h;
    const double lm = eval_loss();
    p = save;
    const double fd = (lp - lm) / (2 * h);
    const double analytic = t1[s.tensor]->data()[s.index];
    rep.fd_max_rel_err = std::max(
        rep.fd_max_rel_err, std::abs(fd - analytic) / std::max(std::abs(fd), 1e-12));
    rep.fd_checked += 1;
  }
  return rep;
}

// ---------------------------------------------------------------------------
// weak scaling
// ---------------------------------------------------------------------------

int64_t choose_elements_for_loading(int64_t ranks, int64_t loading, int64_t poly_order) {
  int64_t best_e = -1;
  double best_err = 0.0;
  for (int64_t e = 1; e <= 96; ++e) {
    // partition feasibility: slab if R divides E, else balanced block factors
    bool feasible = e % ranks == 0 && ranks <= e;
    if (!feasible) {
      try {
        balanced_factors(ranks, e);
        feasible = true;
      } catch (const PartitionError&) {
        feasible = false;
      }
    }
    if (!feasible) continue;
    const int64_t n1d = e * poly_order + 1;
    const double per_rank = static_cast<double>(n1d * n1d * n1d) / static_cast<double>(ranks);
    const double err = std::abs(per_rank - static_cast<double>(loading));
    if (best_e < 0 || err < best_err) {
      best_e = e;
      best_err = err;
    }
  }
  if (best_e < 0)
    throw PartitionError("weak_scaling: no feasible mesh size for R=" + std::to_string(ranks));
  return best_e;
}

ScalingReport weak_scaling(const WeakScalingConfig& config) {
  if (config.rank_counts.empty()) throw ConfigError("weak_scaling: no rank counts given");
  if (config.timed_iters < 1) throw ConfigError("weak_scaling: timed_iters must be >= 1");
  ScalingReport report;
  report.config = config;

  for (const int64_t ranks : config.rank_counts) {
    MeshConfig mc;
    mc.poly_order = config.poly_order;
    mc.elements_per_axis = choose_elements_for_loading(ranks, config.loading, config.poly_order);
    const Mesh mesh = build_box_mesh(mc);
    const bool slab = mc.elements_per_axis % ranks == 0 && ranks <= mc.elements_per_axis;
    const PartitionMap part = slab ? partition_mesh(mesh, ranks, PartitionStrategy::Slab)
                                   : partition_mesh(mesh, ranks, PartitionStrategy::Block);
    DistributedGraph dg = build_distributed_graph(mesh, part);
    attach_tgv_features(dg, mc);
    const HaloStats stats = halo_stats(dg);

    int64_t total_local = 0;
    int64_t total_dir_edges = 0;
    for (const auto& g : dg.graphs) {
      total_local += g.num_local;
      total_dir_edges += g.num_edges();
    }

    for (const std::string& model : config.models) {
      const GnnConfig base = GnnConfig::preset(model, ExchangeMode::None);
      // live memory of one training step: edge hidden-state chain plus the
      // largest transient adjoint buffers, all doubles
      const double edge_bytes = static_cast<double>(total_dir_edges) *
                                static_cast<double>(base.hidden_dim) * 8.0;
      const double estimate = edge_bytes * (static_cast<double>(base.num_mp_layers) + 5.0);
      if (estimate > config.memory_budget_bytes)
        throw SizeError("weak_scaling: estimated working set " + std::to_string(estimate / 1e9) +
                        " GB exceeds the budget for model '" + model + "' at R=" +
                        std::to_string(ranks) + "; lower the loading or rank count");

      for (const ExchangeMode mode : config.modes) {
        const GnnConfig gc = GnnConfig::preset(model, mode);
        std::vector<ModelParams> pr(static_cast<size_t>(ranks), init_params(gc, config.seed));
        RankRuntime rt(ranks);
        TrainConfig tc;
        tc.iterations = config.warmup_iters + config.timed_iters;
        tc.audit_interval = 0;
        tc.seed = config.seed;
        const auto recs = train(rt, pr, dg, {}, tc);

        double ms = 0.0;
        uint64_t bytes_halo = 0, bytes_ar = 0, calls_halo = 0;
        for (int64_t it = config.warmup_iters; it < tc.iterations; ++it) {
          const auto& rec = recs[static_cast<size_t>(it)];
          ms += rec.wall_ms;
          bytes_halo += rec.bytes_halo;
          bytes_ar += rec.bytes_allreduce;
          calls_halo += rec.calls_halo;
        }
        ms /= static_cast<double>(config.timed_iters);
        bytes_halo /= static_cast<uint64_t>(config.timed_iters);
        bytes_ar /= static_cast<uint64_t>(config.timed_iters);
        calls_halo /= static_cast<uint64_t>(config.timed_iters);

        ScalingRow row;
        row.ranks = ranks;
        row.loading = config.loading;
        row.local_nodes = total_local;
        row.elements_per_axis = mc.elements_per_axis;
        row.model = model;
        row.mode = to_string(mode);
        row.strategy = slab ? "slab" : "block";
        row.halo_min = stats.halo_min;
        row.halo_max = stats.halo_max;
        row.halo_avg = stats.halo_avg;
        row.nbr_min = stats.nbr_min;
        row.nbr_max = stats.nbr_max;
        row.nbr_avg = stats.nbr_avg;
        row.iter_ms = ms;
        row.nodes_per_sec = static_cast<double>(total_local) / (ms / 1000.0);
        row.bytes_halo = bytes_halo;
        row.bytes_allreduce = bytes_ar;
        row.halo_calls = calls_halo / static_cast<uint64_t>(ranks);  // per rank, measured
        report.rows.push_back(row);
      }
    }
  }

  // efficiency vs the smallest rank count (same model and mode); relative
  // throughput vs mode=None (same ranks and model)
  const int64_t r_min = *std::min_element(config.rank_counts.begin(), config.rank_counts.end());
  for (auto& row : report.rows) {
    for (const auto& base : report.rows)
      if (base.ranks == r_min && base.model == row.model && base.mode == row.mode) {
        const double per_rank = row.nodes_per_sec / static_cast<double>(row.ranks);
        const double base_per_rank = base.nodes_per_sec / static_cast<double>(base.ranks);
        row.efficiency = per_rank / base_per_rank;
      }
    for (const auto& base : report.rows)
      if (base.ranks == row.ranks && base.model == row.model && base.mode == "none")
        row.rel_throughput = row.nodes_per_sec / base.nodes_per_sec;
  }
  return report;
}

// ---------------------------------------------------------------------------
// CSV / text rendering
// ---------------------------------------------------------------------------

namespace {

std::string fmt(double v) {
  std::ostringstream ss;
  ss.precision(17);
  ss << v;
  return ss.str();
}

}  // namespace

void write_consistency_csv(const std::string& path, const ConsistencyReport& report,
                           const std::vector<GradientReport>& grads) {
  std::vector<std::vector<std::string>> rows;
  for (const auto& r : report.rows)
    rows.push_back({"consistency", std::to_string(r.ranks), fmt(r.loss_consistent),
                    fmt(r.rel_loss_dev_consistent), fmt(r.loss_none), fmt(r.rel_loss_dev_none),
                    fmt(r.max_output_dev), r.bitwise_coincident ? "1" : "0", "", ""});
  for (const auto& g : grads)
    rows.push_back({"gradients", std::to_string(g.ranks), "", "", "", "", "", "",
                    fmt(g.max_rel_dev), fmt(g.fd_max_rel_err)});
  write_csv(path,
            {"kind", "ranks", "loss_consistent", "rel_loss_dev_consistent", "loss_none",
             "rel_loss_dev_none", "max_output_dev", "bitwise_coincident", "max_grad_dev",
             "fd_max_rel_err"},
            rows);
}

void write_scaling_csv(const std::string& path, const ScalingReport& report) {
  std::vector<std::vector<std::string>> rows;
  for (const auto& r : report.rows)
    rows.push_back({std::to_string(r.ranks), std::to_string(r.loading),
                    std::to_string(r.local_nodes), std::to_string(r.elements_per_axis), r.model,
                    r.mode, r.strategy, std::to_string(r.halo_min), std::to_string(r.halo_max),
                    fmt(r.halo_avg), std::to_string(r.nbr_min), std::to_string(r.nbr_max),
                    fmt(r.nbr_avg), fmt(r.iter_ms), fmt(r.nodes_per_sec), fmt(r.efficiency),
                    fmt(r.rel_throughput), std::to_string(r.bytes_halo),
                    std::to_string(r.bytes_allreduce), std::to_string(r.halo_calls)});
  write_csv(path,
            {"ranks", "loading", "local_nodes", "elements_per_axis", "model", "mode", "strategy",
             "halo_min", "halo_max", "halo_avg", "nbr_min", "nbr_max", "nbr_avg", "iter_ms",
             "nodes_per_sec", "efficiency", "rel_throughput", "bytes_halo", "bytes_allreduce",
             "halo_calls_per_iter"},
            rows);
}

std::string format_halo_stats(const HaloStats& stats) {
  std::ostringstream out;
  out << "Ranks: " << stats.rows.size() << "\n";
  out << "Graph nodes (min, max, avg): " << stats.local_min << ", " << stats.local_max << ", "
      << stats.local_avg << "\n";
  out << "Halo nodes  (min, max, avg): " << stats.halo_min << ", " << stats.halo_max << ", "
      << stats.halo_avg << "\n";
  out << "Neighbors   (min, max, avg): " << stats.nbr_min << ", " << stats.nbr_max << ", "
      << stats.nbr_avg << "\n";
  return out.str();
}

}  // namespace hgnn
