#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "hgnn/comm.hpp"
#include "hgnn/graph.hpp"
#include "hgnn/nn.hpp"

namespace hgnn {

// Encode-process-decode GNN over a reduced distributed graph. All MLPs are
// applied row-wise; the only cross-rank interactions are the halo exchange
// inside each message passing layer and the AllReduce calls of the loss and
// gradient averaging.

struct GnnConfig {
  std::string name = "custom";
  int64_t hidden_dim = 8;        // N_H
  int64_t num_mp_layers = 4;     // M
  int64_t mlp_hidden_layers = 2;
  int64_t in_node_dim = 3;       // F_x
  int64_t in_edge_dim = 7;       // F_e
  int64_t out_dim = 3;           // F_y
  ExchangeMode mode = ExchangeMode::NeighborAllToAll;

  static GnnConfig small_model(ExchangeMode mode);
  static GnnConfig large_model(ExchangeMode mode);
  static GnnConfig preset(const std::string& name, ExchangeMode mode);

  // Hash over the architecture fields (mode excluded: parameters do not
  // depend on the exchange implementation). Binds checkpoints to a config.
  uint64_t config_hash() const;
  void validate() const;
};

struct MpLayerParams {
  Mlp edge_update;  // (3*N_H -> N_H)
  Mlp node_update;  // (2*N_H -> N_H)
};

struct MpLayerGrads {
  MlpParams edge_update, node_update;
};

struct ModelParams {
  GnnConfig config;
  Mlp node_encoder, edge_encoder;  // output layernorm + skip projection
  std::vector<MpLayerParams> layers;
  Mlp node_decoder;  // skip projection, no layernorm

  void for_each(const std::function<void(const std::string&, Tensor2D&)>& fn);
  void for_each(const std::function<void(const std::string&, const Tensor2D&)>& fn) const;
};

struct ModelGrads {
  MlpParams node_encoder, edge_encoder;
  std::vector<MpLayerGrads> layers;
  MlpParams node_decoder;

  void for_each(const std::function<void(const std::string&, Tensor2D&)>& fn);
};

// Seeded deterministic initialization; identical seeds give bitwise-identical
// parameters.
ModelParams init_params(const GnnConfig& config, uint64_t seed);
ModelGrads make_grads(const ModelParams& params);
int64_t param_count(const ModelParams& params);

// ---------------------------------------------------------------------------
// forward / backward
// ---------------------------------------------------------------------------

// Checkpointed trace: layer boundary tensors are pinned, MLP internals are
// recomputed during the adjoint pass.
struct NmpLayerTrace {
  std::shared_ptr<const Tensor2D> x_in, e_in;
  Tensor2D a_sync;  // aggregates after exchange + synchronization
};

struct ForwardTrace {
  std::shared_ptr<const Tensor2D> x0, e0;  // encoder outputs
  std::vector<NmpLayerTrace> layers;
  std::shared_ptr<const Tensor2D> x_final;
};

// Node/edge encoders, applied to every row (halo rows included; their values
// are scratch until the first exchange). No communication.
std::pair<Tensor2D, Tensor2D> encode(const ModelParams& params, const Tensor2D& node_feats,
                                     const Tensor2D& edge_feats);

// One consistent NMP layer: edge update, degree-scaled local aggregation,
// halo exchange of the aggregates (mode != None), synchronization in
// ascending owner-rank order, node update on local rows. comm may be null
// when mode == None.
std::pair<Tensor2D, Tensor2D> nmp_layer_forward(const MpLayerParams& layer,
                                                const ReducedGraph& graph, const HaloMap& halo,
                                                RankComm* comm, ExchangeMode mode,
                                                const std::shared_ptr<const Tensor2D>& x,
                                                const std::shared_ptr<const Tensor2D>& e,
                                                NmpLayerTrace* trace);

// Row-wise decoder over local rows only; halo rows are discarded.
Tensor2D decode(const ModelParams& params, const Tensor2D& x);

// Full forward pass, Y_r over local rows. All ranks must call collectively
// when mode != None.
Tensor2D gnn_forward(const ModelParams& params, const ReducedGraph& graph, const HaloMap& halo,
                     RankComm* comm, ForwardTrace* trace);

// Reverse pass through decode, the M layers (including exchange adjoints) and
// the encoders. d_output has num_local rows.
ModelGrads gnn_backward(const ModelParams& params, const ReducedGraph& graph, const HaloMap& halo,
                        RankComm* comm, const ForwardTrace& trace, const Tensor2D& d_output);

// ---------------------------------------------------------------------------
// losses
// ---------------------------------------------------------------------------

// Mean squared error over all entries (Eq. of the unpartitioned loss).
double standard_loss(const Tensor2D& y, const Tensor2D& target);
Tensor2D standard_loss_backward(const Tensor2D& y, const Tensor2D& target);

struct ConsistentLoss {
  double loss = 0.0;
  double n_eff = 0.0;    // effective (unpartitioned) node count
  double s_local = 0.0;  // this rank's degree-scaled squared-error sum
};

// Degree-scaled MSE with two AllReduce calls; returns the identical global
// loss on every rank. y/target cover local rows only.
ConsistentLoss consistent_loss(RankComm& comm, const Tensor2D& y_local,
                               const Tensor2D& target_local,
                               const std::vector<double>& node_inv_degree);

// Output adjoint matching the data-parallel convention: the backward
// AllReduce scales the seed by R, and the later gradient averaging divides by
// R, so the averaged gradients equal the true gradient of the global loss.
Tensor2D consistent_loss_backward(RankComm& comm, const Tensor2D& y_local,
                                  const Tensor2D& target_local,
                                  const std::vector<double>& node_inv_degree, double n_eff);

// ---------------------------------------------------------------------------
// training
// ---------------------------------------------------------------------------

struct TrainConfig {
  AdamConfig adam;
  int64_t iterations = 1;
  uint64_t seed = 0;
  int64_t audit_interval = 50;  // parameter-equality audit period (0 = off)
};

struct IterationRecord {
  int64_t iteration = 0;
  double loss = 0.0;
  double wall_ms = 0.0;
  uint64_t bytes_halo = 0;       // across ranks, this iteration
  uint64_t bytes_allreduce = 0;  // across ranks, this iteration
  uint64_t calls_halo = 0;       // exchange collective calls across ranks, this iteration
};

// Forward + consistent loss + backward + gradient AllReduce-average + Adam,
// all inside the calling rank's body. Returns the global loss.
double train_step(RankComm& comm, ModelParams& params, const ReducedGraph& graph,
                  const HaloMap& halo, const Tensor2D& target_local, AdamState& adam,
                  const AdamConfig& adam_cfg);

// Gradient of the consistent loss averaged across ranks (no parameter
// update); what Eq.-3 style verification compares between rank counts.
ModelGrads compute_gradients(RankComm& comm, const ModelParams& params, const ReducedGraph& graph,
                             const HaloMap& halo, const Tensor2D& target_local, double* loss_out);

// Raises DivergenceError if parameter bytes differ across ranks.
void audit_params(RankComm& comm, const ModelParams& params);

// Runs the full training loop on a runtime. per_rank_params must hold one
// entry per rank (normally identical copies). targets_local holds each
// rank's target rows; empty targets mean autoencoding (target = X_r).
std::vector<IterationRecord> train(RankRuntime& runtime, std::vector<ModelParams>& per_rank_params,
                                   const DistributedGraph& dg,
                                   const std::vector<Tensor2D>& targets_local,
                                   const TrainConfig& cfg);

}  // namespace hgnn
