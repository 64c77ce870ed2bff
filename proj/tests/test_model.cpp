#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "fixtures.hpp"
#include "hgnn/model.hpp"

using namespace hgnn;
using namespace hgnn::testing;

namespace {

// Forward on every rank of a runtime; returns per-rank local outputs.
std::vector<Tensor2D> run_forward(const DistributedGraph& dg, const ModelParams& params) {
  RankRuntime rt(dg.num_ranks());
  std::vector<Tensor2D> ys(static_cast<size_t>(dg.num_ranks()));
  rt.run([&](RankComm& comm) {
    const size_t r = static_cast<size_t>(comm.rank());
    ys[r] = gnn_forward(params, dg.graphs[r], dg.halos[r], &comm, nullptr);
  });
  return ys;
}

double run_consistent_loss(const DistributedGraph& dg, const ModelParams& params) {
  RankRuntime rt(dg.num_ranks());
  std::vector<double> losses(static_cast<size_t>(dg.num_ranks()));
  rt.run([&](RankComm& comm) {
    const size_t r = static_cast<size_t>(comm.rank());
    const Tensor2D y = gnn_forward(params, dg.graphs[r], dg.halos[r], &comm, nullptr);
    Tensor2D target(dg.graphs[r].num_local, 3);
    std::memcpy(target.data(), dg.graphs[r].node_features.data(),
                sizeof(double) * static_cast<size_t>(target.size()));
    losses[r] = consistent_loss(comm, y, target, dg.graphs[r].node_inv_degree).loss;
  });
  for (const double l : losses) CHECK(l == losses[0]);  // identical scalar on all ranks
  return losses[0];
}

}  // namespace

TEST_CASE("encode") {
  GnnConfig cfg = GnnConfig::small_model(ExchangeMode::None);
  SUBCASE("zero parameters give zero hidden features") {
    ModelParams params = init_params(cfg, 0);
    params.for_each([](const std::string&, Tensor2D& t) { t.fill(0.0); });
    Tensor2D x(4, 3), e(5, 7);
    for (int64_t i = 0; i < x.size(); ++i) x.data()[i] = 1.0 + static_cast<double>(i);
    for (int64_t i = 0; i < e.size(); ++i) e.data()[i] = 0.5;
    const auto [xh, eh] = encode(params, x, e);
    for (int64_t i = 0; i < xh.size(); ++i) CHECK(xh.data()[i] == 0.0);
    for (int64_t i = 0; i < eh.size(); ++i) CHECK(eh.data()[i] == 0.0);
  }
  SUBCASE("row-wise map: permuting rows permutes outputs identically") {
    const ModelParams params = init_params(cfg, 3);
    Tensor2D x(6, 3);
    for (int64_t i = 0; i < x.size(); ++i) x.data()[i] = std::sin(0.7 * static_cast<double>(i));
    Tensor2D e(1, 7);
    const auto [xh, eh] = encode(params, x, e);
    Tensor2D xp(6, 3);
    const int perm[6] = {3, 0, 5, 1, 4, 2};
    for (int64_t i = 0; i < 6; ++i)
      std::memcpy(xp.row(i), x.row(perm[i]), sizeof(double) * 3);
    const auto [xhp, ehp] = encode(params, xp, e);
    for (int64_t i = 0; i < 6; ++i)
      for (int64_t c = 0; c < 8; ++c) CHECK(xhp.at(i, c) == xh.at(perm[i], c));
  }
  SUBCASE("dimension mismatch raises") {
    const ModelParams params = init_params(cfg, 0);
    Tensor2D bad(2, 4), e(1, 7);
    CHECK_THROWS_AS(encode(params, bad, e), ShapeError);
  }
}

TEST_CASE("nmp layer on the halo schematic: hand aggregates match the unpartitioned graph") {
  // Two p=1 elements on two ranks. Edge-update MLP forced to output 1 for
  // every edge: the aggregate at node i becomes sum of 1/d over incident
  // edges. Shared face nodes: local a = 1/2 + 1/2 + 1 = 2, synchronized
  // a* = 2 + 2 = 4 = the unpartitioned aggregate (4 incident edges).
  GnnConfig cfg = GnnConfig::small_model(ExchangeMode::NeighborAllToAll);
  cfg.hidden_dim = 1;
  cfg.num_mp_layers = 1;
  cfg.mlp_hidden_layers = 0;  // hidden_width = 1, no hidden blocks
  ModelParams params = init_params(cfg, 0);
  params.for_each([](const std::string& name, Tensor2D& t) {
    t.fill(0.0);
    (void)name;
  });
  // edge_update output projection bias = 1 -> e' = 1 on every edge
  params.layers[0].edge_update.p.biases.back().fill(1.0);

  MeshConfig mc;
  mc.elements_per_axis = 2;
  mc.poly_order = 1;
  const Mesh mesh = build_box_mesh(mc);

  // R=2 slab: 4 elements per rank; face nodes between slabs are shared
  DistributedGraph dg = build_distributed_graph(mesh, partition_mesh(mesh, 2, PartitionStrategy::Slab));
  attach_position_features(dg);
  DistributedGraph ref = build_distributed_graph(mesh, partition_mesh(mesh, 1, PartitionStrategy::Slab));
  attach_position_features(ref);

  // distributed aggregates via the layer trace
  RankRuntime rt(2);
  std::vector<NmpLayerTrace> traces(2);
  rt.run([&](RankComm& comm) {
    const size_t r = static_cast<size_t>(comm.rank());
    ForwardTrace trace;
    gnn_forward(params, dg.graphs[r], dg.halos[r], &comm, &trace);
    traces[r] = std::move(trace.layers[0]);
  });
  RankRuntime rt1(1);
  NmpLayerTrace ref_trace;
  rt1.run([&](RankComm& comm) {
    ForwardTrace trace;
    gnn_forward(params, ref.graphs[0], ref.halos[0], &comm, &trace);
    ref_trace = std::move(trace.layers[0]);
  });

  std::map<int64_t, double> ref_agg;
  for (int64_t i = 0; i < ref.graphs[0].num_local; ++i)
    ref_agg[ref.graphs[0].global_ids[static_cast<size_t>(i)]] = ref_trace.a_sync.at(i, 0);

  for (int r = 0; r < 2; ++r) {
    const auto& g = dg.graphs[static_cast<size_t>(r)];
    for (int64_t i = 0; i < g.num_local; ++i) {
      const double a_star = traces[static_cast<size_t>(r)].a_sync.at(i, 0);
      CHECK(a_star == ref_agg.at(g.global_ids[static_cast<size_t>(i)]));  // exact: 1/d is a power of two
      if (g.node_degree[static_cast<size_t>(i)] == 1) CHECK(a_star == ref_agg.at(g.global_ids[static_cast<size_t>(i)]));
    }
  }
}

TEST_CASE("edge with degree 2 contributes half per rank") {
  // direct check of the 1/d scaling in the aggregation
  const DistributedGraph dg = make_graph(2, 1, 2, PartitionStrategy::Slab);
  const auto& g = dg.graphs[0];
  for (int64_t e = 0; e < g.num_edges(); ++e) {
    if (g.edge_degree[static_cast<size_t>(e)] == 2)
      CHECK(g.edge_inv_degree[static_cast<size_t>(e)] == 0.5);
    else
      CHECK(g.edge_inv_degree[static_cast<size_t>(e)] == 1.0);
  }
}

TEST_CASE("forward consistency across partitionings") {
  const ModelParams params = init_params(GnnConfig::small_model(ExchangeMode::NeighborAllToAll), 0);
  const DistributedGraph ref = make_graph(2, 2, 1);
  const auto y_ref = run_forward(ref, params);
  const auto ref_map = gather_by_gid(ref, y_ref);

  SUBCASE("R=4 equals R=1 within 1e-12; coincident outputs bitwise equal") {
    const DistributedGraph dg = make_graph(2, 2, 4, PartitionStrategy::Block);
    const auto ys = run_forward(dg, params);
    bool bitwise = false;
    const auto map4 = gather_by_gid(dg, ys, &bitwise);
    CHECK(bitwise);
    CHECK(max_rel_deviation(map4, ref_map) < 1e-12);
  }

  SUBCASE("mode None deviates at coincident nodes") {
    ModelParams none = params;
    none.config.mode = ExchangeMode::None;
    const DistributedGraph dg = make_graph(2, 2, 4, PartitionStrategy::Block);
    const auto ys = run_forward(dg, none);
    const auto map_none = gather_by_gid(dg, ys);
    CHECK(max_rel_deviation(map_none, ref_map) > 1e-8);
  }

  SUBCASE("R=1 reduces to the standard layer: none and na2a agree bitwise") {
    ModelParams none = params;
    none.config.mode = ExchangeMode::None;
    const auto y_none = run_forward(ref, none);
    CHECK(y_none[0] == y_ref[0]);
  }

  SUBCASE("replacing 1/d_ij by 1 breaks consistency (negative control)") {
    DistributedGraph dg = make_graph(2, 2, 4, PartitionStrategy::Block);
    for (auto& g : dg.graphs) std::fill(g.edge_inv_degree.begin(), g.edge_inv_degree.end(), 1.0);
    const auto ys = run_forward(dg, params);
    const auto broken = gather_by_gid(dg, ys);
    CHECK(max_rel_deviation(broken, ref_map) > 1e-10);
  }
}

TEST_CASE("permutation invariance: relabeling local nodes permutes outputs bitwise") {
  const ModelParams params = init_params(GnnConfig::small_model(ExchangeMode::NeighborAllToAll), 1);
  DistributedGraph dg = make_graph(2, 1, 1);
  const auto y0 = run_forward(dg, params)[0];

  // reversal permutation of the single rank's local nodes
  ReducedGraph& g = dg.graphs[0];
  const int64_t n = g.num_local;
  std::vector<int32_t> perm(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) perm[static_cast<size_t>(i)] = static_cast<int32_t>(n - 1 - i);

  ReducedGraph pg = g;
  for (int64_t i = 0; i < n; ++i) {
    const int64_t pi = perm[static_cast<size_t>(i)];
    pg.global_ids[static_cast<size_t>(pi)] = g.global_ids[static_cast<size_t>(i)];
    pg.node_degree[static_cast<size_t>(pi)] = g.node_degree[static_cast<size_t>(i)];
    pg.node_inv_degree[static_cast<size_t>(pi)] = g.node_inv_degree[static_cast<size_t>(i)];
    for (int c = 0; c < 3; ++c) {
      pg.positions.at(pi, c) = g.positions.at(i, c);
      pg.node_features.at(pi, c) = g.node_features.at(i, c);
    }
  }
  for (size_t e = 0; e < pg.edge_src.size(); ++e) {
    pg.edge_src[e] = perm[static_cast<size_t>(g.edge_src[e])];
    pg.edge_dst[e] = perm[static_cast<size_t>(g.edge_dst[e])];
  }
  pg.build_csr();
  init_edge_features(pg);

  DistributedGraph pdg;
  pdg.graphs.push_back(std::move(pg));
  pdg.halos = dg.halos;
  const auto y1 = run_forward(pdg, params)[0];
  for (int64_t i = 0; i < n; ++i)
    for (int64_t c = 0; c < y0.cols(); ++c)
      CHECK(y1.at(perm[static_cast<size_t>(i)], c) == y0.at(i, c));
}

TEST_CASE("standard loss") {
  SUBCASE("zero for identical inputs") {
    Tensor2D y(3, 2);
    y.fill(0.4);
    CHECK(standard_loss(y, y) == 0.0);
  }
  SUBCASE("hand value (1+4)/2") {
    Tensor2D y(2, 1), t(2, 1);
    y.at(0, 0) = 1.0;
    y.at(1, 0) = 3.0;
    t.at(0, 0) = 0.0;
    t.at(1, 0) = 1.0;
    CHECK(standard_loss(y, t) == 2.5);
  }
  SUBCASE("shape mismatch raises") {
    Tensor2D y(2, 1), t(1, 1);
    CHECK_THROWS_AS(standard_loss(y, t), ShapeError);
  }
}

TEST_CASE("consistent loss") {
  SUBCASE("hand example: overlapping node with degree 2 gives 14/3") {
    RankRuntime rt(2);
    std::vector<double> losses(2);
    rt.run([&](RankComm& comm) {
      Tensor2D y(2, 1), t(2, 1);
      std::vector<double> inv;
      if (comm.rank() == 0) {
        y.at(0, 0) = 1.0;  // node gid 0, error^2 = 1
        y.at(1, 0) = 2.0;  // node gid 1 (shared), error^2 = 4
        inv = {1.0, 0.5};
      } else {
        y.at(0, 0) = 2.0;  // node gid 1 (shared)
        y.at(1, 0) = 3.0;  // node gid 2, error^2 = 9
        inv = {0.5, 1.0};
      }
      const ConsistentLoss l = consistent_loss(comm, y, t, inv);
      losses[static_cast<size_t>(comm.rank())] = l.loss;
      CHECK(l.n_eff == 3.0);
      CHECK(l.s_local == (comm.rank() == 0 ? 3.0 : 11.0));
    });
    CHECK(losses[0] == losses[1]);
    CHECK(losses[0] == doctest::Approx(14.0 / 3.0).epsilon(1e-15));
  }

  SUBCASE("zero when targets match everywhere") {
    RankRuntime rt(2);
    rt.run([&](RankComm& comm) {
      Tensor2D y(3, 2);
      y.fill(1.5);
      const std::vector<double> inv(3, 1.0);
      CHECK(consistent_loss(comm, y, y, inv).loss == 0.0);
    });
  }

  SUBCASE("equals the standard loss at R=1, bitwise") {
    RankRuntime rt(1);
    rt.run([&](RankComm& comm) {
      Rng rng(5);
      Tensor2D y(17, 3), t(17, 3);
      for (int64_t i = 0; i < y.size(); ++i) {
        y.data()[i] = rng.uniform(-1, 1);
        t.data()[i] = rng.uniform(-1, 1);
      }
      const std::vector<double> inv(17, 1.0);
      CHECK(consistent_loss(comm, y, t, inv).loss == standard_loss(y, t));
    });
  }

  SUBCASE("degree array length mismatch is an integrity error") {
    RankRuntime rt(1);
    CHECK_THROWS_AS(rt.run([&](RankComm& comm) {
                      Tensor2D y(3, 1);
                      const std::vector<double> inv(2, 1.0);
                      consistent_loss(comm, y, y, inv);
                    }),
                    IntegrityError);
  }

  SUBCASE("partitioned consistent loss equals the R=1 standard loss within 1e-12") {
    const ModelParams params =
        init_params(GnnConfig::small_model(ExchangeMode::NeighborAllToAll), 0);
    const DistributedGraph ref = make_graph(2, 2, 1);
    double ref_loss = run_consistent_loss(ref, params);
    for (const int64_t r : {2L, 4L, 8L}) {
      const DistributedGraph dg = make_graph(2, 2, r);
      const double loss = run_consistent_loss(dg, params);
      CHECK(std::abs(loss - ref_loss) <= 1e-12 * std::abs(ref_loss));
    }
  }
}

TEST_CASE("full-model gradients match central finite differences") {
  const GnnConfig cfg = GnnConfig::small_model(ExchangeMode::NeighborAllToAll);
  ModelParams params = init_params(cfg, 0);
  const DistributedGraph dg = make_graph(2, 1, 1);
  const auto& g = dg.graphs[0];

  Tensor2D target(g.num_local, 3);  // autoencoding target
  std::memcpy(target.data(), g.node_features.data(),
              sizeof(double) * static_cast<size_t>(target.size()));

  RankRuntime rt(1);
  ModelGrads grads = make_grads(params);
  rt.run([&](RankComm& comm) {
    grads = compute_gradients(comm, params, g, dg.halos[0], target, nullptr);
  });

  auto eval_loss = [&]() {
    double loss = 0;
    rt.run([&](RankComm& comm) {
      const Tensor2D y = gnn_forward(params, g, dg.halos[0], &comm, nullptr);
      loss = consistent_loss(comm, y, target, g.node_inv_degree).loss;
    });
    return loss;
  };

  std::vector<Tensor2D*> pt;
  std::vector<Tensor2D*> gt;
  params.for_each([&](const std::string&, Tensor2D& t) { pt.push_back(&t); });
  grads.for_each([&](const std::string&, Tensor2D& t) { gt.push_back(&t); });
  const double h = 1e-5;
  int checked = 0;
  for (size_t t = 0; t < pt.size(); ++t) {
    for (int64_t i = 0; i < pt[t]->size(); i += 17) {  // sampled sweep over all tensors
      double& p = pt[t]->data()[i];
      const double save = p;
      p = save + h;
      const double lp = eval_loss();
      p = save - h;
      const double lm = eval_loss();
      p = save;
      const double fd = (lp - lm) / (2 * h);
      const double an = gt[t]->data()[i];
      CHECK(std::abs(fd - an) <= 1e-6 * std::max(1.0, std::abs(fd)));
      ++checked;
    }
  }
  CHECK(checked > 100);
}

TEST_CASE("training") {
  const GnnConfig cfg = GnnConfig::small_model(ExchangeMode::NeighborAllToAll);
  TrainConfig tc;
  tc.iterations = 5;
  tc.adam.lr = 1e-3;

  SUBCASE("R=1 train loop equals a hand-rolled single-model loop bitwise") {
    const DistributedGraph dg = make_graph(2, 1, 1);
    std::vector<ModelParams> pr{init_params(cfg, 0)};
    RankRuntime rt(1);
    const auto recs = train(rt, pr, dg, {}, tc);
    REQUIRE(recs.size() == 5);

    // manual: forward + standard loss + backward + adam
    ModelParams manual = init_params(cfg, 0);
    manual.config.mode = ExchangeMode::None;
    const auto& g = dg.graphs[0];
    Tensor2D target(g.num_local, 3);
    std::memcpy(target.data(), g.node_features.data(),
                sizeof(double) * static_cast<size_t>(target.size()));
    AdamState adam;
    std::vector<double> manual_losses;
    for (int it = 0; it < 5; ++it) {
      ForwardTrace trace;
      const Tensor2D y = gnn_forward(manual, g, dg.halos[0], nullptr, &trace);
      manual_losses.push_back(standard_loss(y, target));
      const Tensor2D dy = standard_loss_backward(y, target);
      ModelGrads grads = gnn_backward(manual, g, dg.halos[0], nullptr, trace, dy);
      std::vector<Tensor2D*> ps;
      std::vector<const Tensor2D*> gs;
      manual.for_each([&](const std::string&, Tensor2D& t) { ps.push_back(&t); });
      grads.for_each([&](const std::string&, Tensor2D& t) { gs.push_back(&t); });
      adam_step(ps, gs, adam, tc.adam);
    }
    for (int it = 0; it < 5; ++it) CHECK(recs[static_cast<size_t>(it)].loss == manual_losses[static_cast<size_t>(it)]);

    std::vector<const Tensor2D*> ta, tb;
    pr[0].for_each([&](const std::string&, const Tensor2D& t) { ta.push_back(&t); });
    manual.for_each([&](const std::string&, const Tensor2D& t) { tb.push_back(&t); });
    for (size_t i = 0; i < ta.size(); ++i) CHECK(*ta[i] == *tb[i]);
  }

  SUBCASE("R=4 loss trace tracks R=1 within 1e-8 per iteration") {
    TrainConfig tc20 = tc;
    tc20.iterations = 20;
    const DistributedGraph ref = make_graph(2, 2, 1);
    std::vector<ModelParams> p1{init_params(cfg, 0)};
    RankRuntime rt1(1);
    const auto rec1 = train(rt1, p1, ref, {}, tc20);

    const DistributedGraph dg = make_graph(2, 2, 4);
    std::vector<ModelParams> p4(4, init_params(cfg, 0));
    RankRuntime rt4(4);
    const auto rec4 = train(rt4, p4, dg, {}, tc20);

    for (int64_t it = 0; it < tc20.iterations; ++it) {
      const double a = rec1[static_cast<size_t>(it)].loss;
      const double b = rec4[static_cast<size_t>(it)].loss;
      CHECK(std::abs(a - b) <= 1e-8 * std::max(1.0, std::abs(a)));
    }
  }

  SUBCASE("parameter divergence is detected by the audit") {
    const DistributedGraph dg = make_graph(2, 1, 2, PartitionStrategy::Slab);
    std::vector<ModelParams> pr(2, init_params(cfg, 0));
    pr[1].node_decoder.p.biases.back().at(0, 0) += 1e-9;  // corrupt one rank
    RankRuntime rt(2);
    TrainConfig tca = tc;
    tca.iterations = 1;
    tca.audit_interval = 1;
    CHECK_THROWS_AS(train(rt, pr, dg, {}, tca), DivergenceError);
  }

  SUBCASE("halo exchange calls per iteration = 2M; loss AllReduce count matches") {
    const DistributedGraph dg = make_graph(2, 1, 2, PartitionStrategy::Slab);
    std::vector<ModelParams> pr(2, init_params(cfg, 0));
    RankRuntime rt(2);
    TrainConfig tc1 = tc;
    tc1.iterations = 1;
    tc1.audit_interval = 0;
    train(rt, pr, dg, {}, tc1);
    const CommReport rep = rt.report();
    for (int r = 0; r < 2; ++r) {
      CHECK(rep.get(r, CollectiveKind::NeighborAllToAll).calls ==
            static_cast<uint64_t>(2 * cfg.num_mp_layers));
      // AR(S), AR(N), AR(seed), AR(grads)
      CHECK(rep.get(r, CollectiveKind::AllReduce).calls == 4);
    }
  }

  SUBCASE("missing runtime with exchange mode is a configuration error") {
    const DistributedGraph dg = make_graph(2, 1, 1);
    const ModelParams params = init_params(cfg, 0);
    CHECK_THROWS_AS(gnn_forward(params, dg.graphs[0], dg.halos[0], nullptr, nullptr), ConfigError);
  }
}
