#include "hgnn/model.hpp"

#include <chrono>
#include <cstring>

#include "hgnn/error.hpp"
#include "hgnn/kernels.hpp"

namespace hgnn {

namespace k = kernels;

// ---------------------------------------------------------------------------
// configuration / parameters
// ---------------------------------------------------------------------------

GnnConfig GnnConfig::small_model(ExchangeMode mode) {
  GnnConfig c;
  c.name = "small";
  c.hidden_dim = 8;
  c.num_mp_layers = 4;
  c.mlp_hidden_layers = 2;
  c.mode = mode;
  return c;
}

GnnConfig GnnConfig::large_model(ExchangeMode mode) {
  GnnConfig c;
  c.name = "large";
  c.hidden_dim = 32;
  c.num_mp_layers = 4;
  c.mlp_hidden_layers = 5;
  c.mode = mode;
  return c;
}

GnnConfig GnnConfig::preset(const std::string& name, ExchangeMode mode) {
  if (name == "small") return small_model(mode);
  if (name == "large") return large_model(mode);
  throw ConfigError("unknown model preset '" + name + "' (expected small|large)");
}

void GnnConfig::validate() const {
  if (hidden_dim < 1) throw ConfigError("GnnConfig: hidden_dim must be >= 1");
  if (num_mp_layers < 0) throw ConfigError("GnnConfig: num_mp_layers must be >= 0");
  if (mlp_hidden_layers < 0) throw ConfigError("GnnConfig: mlp_hidden_layers must be >= 0");
  if (in_node_dim < 1 || in_edge_dim < 1 || out_dim < 1)
    throw ConfigError("GnnConfig: feature dimensions must be >= 1");
}

uint64_t GnnConfig::config_hash() const {
  uint64_t h = 1469598103934665603ull;
  auto mix = [&h](int64_t v) {
    for (int b = 0; b < 8; ++b) {
      h ^= static_cast<uint64_t>(v >> (8 * b)) & 0xffu;
      h *= 1099511628211ull;
    }
  };
  mix(hidden_dim);
  mix(num_mp_layers);
  mix(mlp_hidden_layers);
  mix(in_node_dim);
  mix(in_edge_dim);
  mix(out_dim);
  return h;
}

namespace {

MlpSpec encoder_spec(int64_t in, int64_t hidden, int64_t k) {
  MlpSpec s;
  s.in_dim = in;
  s.out_dim = hidden;
  s.hidden_width = hidden;
  s.num_hidden_layers = k;
  s.use_residual = true;
  s.use_output_layernorm = true;
  s.use_skip_projection = true;
  return s;
}

MlpSpec processor_spec(int64_t in, int64_t hidden, int64_t k) {
  MlpSpec s;
  s.in_dim = in;
  s.out_dim = hidden;
  s.hidden_width = hidden;
  s.num_hidden_layers = k;
  s.use_residual = true;
  return s;
}

MlpSpec decoder_spec(int64_t hidden, int64_t out, int64_t k) {
  MlpSpec s;
  s.in_dim = hidden;
  s.out_dim = out;
  s.hidden_width = hidden;
  s.num_hidden_layers = k;
  s.use_residual = true;
  s.use_skip_projection = true;
  return s;
}

}  // namespace

ModelParams init_params(const GnnConfig& config, uint64_t seed) {
  config.validate();
  Rng rng(seed);
  ModelParams p;
  p.config = config;
  const int64_t h = config.hidden_dim;
  const int64_t k = config.mlp_hidden_layers;
  p.node_encoder = make_mlp(encoder_spec(config.in_node_dim, h, k), rng);
  p.edge_encoder = make_mlp(encoder_spec(config.in_edge_dim, h, k), rng);
  for (int64_t m = 0; m < config.num_mp_layers; ++m) {
    MpLayerParams layer;
    layer.edge_update = make_mlp(processor_spec(3 * h, h, k), rng);
    layer.node_update = make_mlp(processor_spec(2 * h, h, k), rng);
    p.layers.push_back(std::move(layer));
  }
  p.node_decoder = make_mlp(decoder_spec(h, config.out_dim, k), rng);
  return p;
}

void ModelParams::for_each(const std::function<void(const std::string&, Tensor2D&)>& fn) {
  auto scoped = [&fn](const std::string& prefix, MlpParams& mp) {
    mp.for_each([&](const std::string& name, Tensor2D& t) { fn(prefix + "." + name, t); });
  };
  scoped("node_encoder", node_encoder.p);
  scoped("edge_encoder", edge_encoder.p);
  for (size_t m = 0; m < layers.size(); ++m) {
    scoped("layer" + std::to_string(m) + ".edge_update", layers[m].edge_update.p);
    scoped("layer" + std::to_string(m) + ".node_update", layers[m].node_update.p);
  }
  scoped("node_decoder", node_decoder.p);
}

void ModelParams::for_each(const std::function<void(const std::string&, const Tensor2D&)>& fn) const {
  const_cast<ModelParams*>(this)->for_each(
      [&](const std::string& name, Tensor2D& t) { fn(name, t); });
}

void ModelGrads::for_each(const std::function<void(const std::string&, Tensor2D&)>& fn) {
  auto scoped = [&fn](const std::string& prefix, MlpParams& mp) {
    mp.for_each([&](const std::string& name, Tensor2D& t) { fn(prefix + "." + name, t); });
  };
  scoped("node_encoder", node_encoder);
  scoped("edge_encoder", edge_encoder);
  for (size_t m = 0; m < layers.size(); ++m) {
    scoped("layer" + std::to_string(m) + ".edge_update", layers[m].edge_update);
    scoped("layer" + std::to_string(m) + ".node_update", layers[m].node_update);
  }
  scoped("node_decoder", node_decoder);
}

ModelGrads make_grads(const ModelParams& params) {
  ModelGrads g;
  g.node_encoder = make_grads(params.node_encoder);
  g.edge_encoder = make_grads(params.edge_encoder);
  for (const auto& layer : params.layers)
    g.layers.push_back({make_grads(layer.edge_update), make_grads(layer.node_update)});
  g.node_decoder = make_grads(params.node_decoder);
  return g;
}

int64_t param_count(const ModelParams& params) {
  int64_t n = 0;
  params.for_each([&](const std::string&, const Tensor2D& t) { n += t.size(); });
  return n;
}

// ---------------------------------------------------------------------------
// forward
// ---------------------------------------------------------------------------

namespace {

RowFiller tensor_filler(const Tensor2D& t) {
  return [&t](int64_t row0, int64_t len, double* dst) {
    std::memcpy(dst, t.row(row0), sizeof(double) * static_cast<size_t>(len * t.cols()));
  };
}

// concat(x[src], x[dst], e) rows for the edge-update MLP
RowFiller edge_concat_filler(const ReducedGraph& g, const Tensor2D& x, const Tensor2D& e) {
  const int64_t h = x.cols();
  return [&g, &x, &e, h](int64_t row0, int64_t len, double* dst) {
    for (int64_t t = 0; t < len; ++t) {
      const int64_t edge = row0 + t;
      double* out = dst + t * 3 * h;
      std::memcpy(out, x.row(g.edge_src[static_cast<size_t>(edge)]), sizeof(double) * static_cast<size_t>(h));
      std::memcpy(out + h, x.row(g.edge_dst[static_cast<size_t>(edge)]), sizeof(double) * static_cast<size_t>(h));
      std::memcpy(out + 2 * h, e.row(edge), sizeof(double) * static_cast<size_t>(h));
    }
  };
}

// concat(a_sync, x) rows for the node-update MLP (local rows only)
RowFiller node_concat_filler(const Tensor2D& a_sync, const Tensor2D& x) {
  const int64_t h = x.cols();
  return [&a_sync, &x, h](int64_t row0, int64_t len, double* dst) {
    for (int64_t t = 0; t < len; ++t) {
      double* out = dst + t * 2 * h;
      std::memcpy(out, a_sync.row(row0 + t), sizeof(double) * static_cast<size_t>(h));
      std::memcpy(out + h, x.row(row0 + t), sizeof(double) * static_cast<size_t>(h));
    }
  };
}

}  // namespace

std::pair<Tensor2D, Tensor2D> encode(const ModelParams& params, const Tensor2D& node_feats,
                                     const Tensor2D& edge_feats) {
  if (node_feats.cols() != params.config.in_node_dim)
    throw ShapeError("encode: node feature width mismatch");
  if (edge_feats.cols() != params.config.in_edge_dim)
    throw ShapeError("encode: edge feature width mismatch");
  return {mlp_forward(params.node_encoder, node_feats), mlp_forward(params.edge_encoder, edge_feats)};
}

std::pair<Tensor2D, Tensor2D> nmp_layer_forward(const MpLayerParams& layer,
                                                const ReducedGraph& graph, const HaloMap& halo,
                                                RankComm* comm, ExchangeMode mode,
                                                const std::shared_ptr<const Tensor2D>& x,
                                                const std::shared_ptr<const Tensor2D>& e,
                                                NmpLayerTrace* trace) {
  const int64_t h = x->cols();
  const int64_t rows = graph.rows();
  const int64_t ne = graph.num_edges();
  if (x->rows() != rows) throw ShapeError("nmp_layer: node tensor must cover local+halo rows");
  if (mode != ExchangeMode::None && comm == nullptr)
    throw ConfigError("nmp_layer: exchange mode requires a rank runtime");

  // edge update
  Tensor2D e2;
  mlp_forward_rows(layer.edge_update, ne, edge_concat_filler(graph, *x, *e), e2);

  // degree-scaled local aggregation; halo rows have no incident edges
  Tensor2D a(rows, h);
  k::scatter_rows_csr(e2.data(), graph.in_offsets.data(), graph.in_edges.data(),
                      graph.edge_inv_degree.data(), a.data(), rows, h);

  // halo exchange + synchronization of the aggregates
  Tensor2D a_sync;
  if (mode != ExchangeMode::None) {
    halo_exchange(*comm, mode, halo, a);
    a_sync = a;
    for (const auto& grp : halo.sync_groups) {
      double* out = a_sync.row(grp.local_node);
      for (int64_t c = 0; c < h; ++c) out[c] = 0.0;
      for (const int32_t slot : grp.slots) {
        const double* src = slot < 0 ? a.row(grp.local_node) : a.row(slot);
        for (int64_t c = 0; c < h; ++c) out[c] += src[c];
      }
    }
  } else {
    a_sync = a;
  }

  // node update on local rows; halo rows of the hidden state are scratch
  Tensor2D x2_local;
  mlp_forward_rows(layer.node_update, graph.num_local, node_concat_filler(a_sync, *x), x2_local);
  Tensor2D x2(rows, h);
  std::memcpy(x2.data(), x2_local.data(),
              sizeof(double) * static_cast<size_t>(graph.num_local * h));

  if (trace) {
    trace->x_in = x;
    trace->e_in = e;
    trace->a_sync = std::move(a_sync);
  }
  return {std::move(x2), std::move(e2)};
}

Tensor2D decode(const ModelParams& params, const Tensor2D& x) {
  return mlp_forward(params.node_decoder, x);
}

Tensor2D gnn_forward(const ModelParams& params, const ReducedGraph& graph, const HaloMap& halo,
                     RankComm* comm, ForwardTrace* trace) {
  const GnnConfig& cfg = params.config;
  if (graph.node_features.rows() != graph.rows() || graph.node_features.cols() != cfg.in_node_dim)
    throw UninitializedError("gnn_forward: node features not populated");
  if (graph.edge_features.rows() != graph.num_edges() ||
      graph.edge_features.cols() != cfg.in_edge_dim)
    throw UninitializedError("gnn_forward: edge features not populated");

  auto [x0, e0] = encode(params, graph.node_features, graph.edge_features);
  auto x = std::make_shared<const Tensor2D>(std::move(x0));
  auto e = std::make_shared<const Tensor2D>(std::move(e0));
  if (trace) {
    trace->x0 = x;
    trace->e0 = e;
    trace->layers.resize(params.layers.size());
  }
  for (size_t m = 0; m < params.layers.size(); ++m) {
    auto [x2, e2] = nmp_layer_forward(params.layers[m], graph, halo, comm, cfg.mode, x, e,
                                      trace ? &trace->layers[m] : nullptr);
    x = std::make_shared<const Tensor2D>(std::move(x2));
    e = std::make_shared<const Tensor2D>(std::move(e2));
  }
  if (trace) trace->x_final = x;

  // decode local rows only
  Tensor2D y;
  mlp_forward_rows(params.node_decoder, graph.num_local, tensor_filler(*x), y);
  return y;
}

// ---------------------------------------------------------------------------
// backward
// ---------------------------------------------------------------------------

namespace {

// Adjoint of one NMP layer. On entry dx/de hold the adjoints of the layer
// outputs (dx: rows x H with zero halo rows); on exit they hold the adjoints
// of the layer inputs.
void nmp_layer_backward(const MpLayerParams& layer, MpLayerGrads& lg, const ReducedGraph& graph,
                        const HaloMap& halo, RankComm* comm, ExchangeMode mode,
                        const NmpLayerTrace& tr, Tensor2D& dx, Tensor2D& de) {
  const int64_t h = tr.x_in->cols();
  const int64_t rows = graph.rows();
  const int64_t nl = graph.num_local;
  const int64_t ne = graph.num_edges();

  // node update backward (local rows)
  Tensor2D d_out_local(nl, h);
  std::memcpy(d_out_local.data(), dx.data(), sizeof(double) * static_cast<size_t>(nl * h));
  Tensor2D d_a_star(rows, h);
  Tensor2D dx_from_node(nl, h);
  mlp_backward_rows(
      layer.node_update, nl, node_concat_filler(tr.a_sync, *tr.x_in), d_out_local,
      [&](int64_t row0, int64_t len, const double* d_in) {
        for (int64_t t = 0; t < len; ++t) {
          std::memcpy(d_a_star.row(row0 + t), d_in + t * 2 * h, sizeof(double) * static_cast<size_t>(h));
          std::memcpy(dx_from_node.row(row0 + t), d_in + t * 2 * h + h,
                      sizeof(double) * static_cast<size_t>(h));
        }
      },
      lg.node_update);

  // synchronization + exchange adjoints
  Tensor2D d_a = std::move(d_a_star);  // identity for interior nodes; halo rows zero
  if (mode != ExchangeMode::None) {
    for (const auto& grp : halo.sync_groups) {
      const double* v = d_a.row(grp.local_node);
      for (const int32_t slot : grp.slots)
        if (slot >= 0) std::memcpy(d_a.row(slot), v, sizeof(double) * static_cast<size_t>(h));
    }
    halo_exchange_adjoint(*comm, mode, halo, d_a);
  }

  // aggregation backward folded into the edge adjoint
#pragma omp parallel for schedule(static)
  for (int64_t edge = 0; edge < ne; ++edge) {
    const double s = graph.edge_inv_degree[static_cast<size_t>(edge)];
    const double* src = d_a.row(graph.edge_dst[static_cast<size_t>(edge)]);
    double* dst = de.row(edge);
    for (int64_t c = 0; c < h; ++c) dst[c] += s * src[c];
  }

  // edge update backward
  Tensor2D d_x_src(ne, h), d_x_dst(ne, h), de_next(ne, h);
  mlp_backward_rows(
      layer.edge_update, ne, edge_concat_filler(graph, *tr.x_in, *tr.e_in), de,
      [&](int64_t row0, int64_t len, const double* d_in) {
        for (int64_t t = 0; t < len; ++t) {
          const double* row = d_in + t * 3 * h;
          std::memcpy(d_x_src.row(row0 + t), row, sizeof(double) * static_cast<size_t>(h));
          std::memcpy(d_x_dst.row(row0 + t), row + h, sizeof(double) * static_cast<size_t>(h));
          std::memcpy(de_next.row(row0 + t), row + 2 * h, sizeof(double) * static_cast<size_t>(h));
        }
      },
      lg.edge_update);
  de = std::move(de_next);

  // input-node adjoint: sender slots, receiver slots, node-update slot
  Tensor2D dx_prev(rows, h);
  k::scatter_rows_csr(d_x_src.data(), graph.out_offsets.data(), graph.out_edges.data(), nullptr,
                      dx_prev.data(), rows, h);
  Tensor2D dx_dst(rows, h);
  k::scatter_rows_csr(d_x_dst.data(), graph.in_offsets.data(), graph.in_edges.data(), nullptr,
                      dx_dst.data(), rows, h);
  k::add_inplace(dx_prev.data(), dx_dst.data(), rows * h);
  k::add_inplace(dx_prev.data(), dx_from_node.data(), nl * h);  // local prefix
  dx = std::move(dx_prev);
}

}  // namespace

ModelGrads gnn_backward(const ModelParams& params, const ReducedGraph& graph, const HaloMap& halo,
                        RankComm* comm, const ForwardTrace& trace, const Tensor2D& d_output) {
  const GnnConfig& cfg = params.config;
  const int64_t h = cfg.hidden_dim;
  const int64_t rows = graph.rows();
  const int64_t nl = graph.num_local;
  if (d_output.rows() != nl || d_output.cols() != cfg.out_dim)
    throw ShapeError("gnn_backward: output adjoint must cover local rows");

  ModelGrads grads = make_grads(params);

  // decoder
  Tensor2D dx(rows, h);
  mlp_backward_rows(
      params.node_decoder, nl, tensor_filler(*trace.x_final), d_output,
      [&](int64_t row0, int64_t len, const double* d_in) {
        std::memcpy(dx.row(row0), d_in, sizeof(double) * static_cast<size_t>(len * h));
      },
      grads.node_decoder);

  // message passing layers in reverse
  Tensor2D de(graph.num_edges(), h);  // edge features are discarded after the last layer
  for (int64_t m = static_cast<int64_t>(params.layers.size()) - 1; m >= 0; --m)
    nmp_layer_backward(params.layers[static_cast<size_t>(m)], grads.layers[static_cast<size_t>(m)],
                       graph, halo, comm, cfg.mode, trace.layers[static_cast<size_t>(m)], dx, de);

  // encoders (halo rows carry zero adjoints; their gradient contribution is zero)
  mlp_backward_rows(
      params.node_encoder, rows, tensor_filler(graph.node_features), dx,
      [](int64_t, int64_t, const double*) {}, grads.node_encoder);
  mlp_backward_rows(
      params.edge_encoder, graph.num_edges(), tensor_filler(graph.edge_features), de,
      [](int64_t, int64_t, const double*) {}, grads.edge_encoder);
  return grads;
}

// ---------------------------------------------------------------------------
// losses
// ---------------------------------------------------------------------------

double standard_loss(const Tensor2D& y, const Tensor2D& target) {
  if (!y.same_shape(target)) throw ShapeError("standard_loss: shape mismatch");
  double total = 0.0;
  for (int64_t i = 0; i < y.rows(); ++i) {
    const double* yi = y.row(i);
    const double* ti = target.row(i);
    double row = 0.0;
    for (int64_t j = 0; j < y.cols(); ++j) {
      const double d = yi[j] - ti[j];
      row += d * d;
    }
    total += row;
  }
  return total / (static_cast<double>(y.rows()) * static_cast<double>(y.cols()));
}

Tensor2D standard_loss_backward(const Tensor2D& y, const Tensor2D& target) {
  if (!y.same_shape(target)) throw ShapeError("standard_loss_backward: shape mismatch");
  Tensor2D d(y.rows(), y.cols());
  const double scale = 2.0 / (static_cast<double>(y.rows()) * static_cast<double>(y.cols()));
  for (int64_t i = 0; i < y.size(); ++i) d.data()[i] = scale * (y.data()[i] - target.data()[i]);
  return d;
}

ConsistentLoss consistent_loss(RankComm& comm, const Tensor2D& y_local,
                               const Tensor2D& target_local,
                               const std::vector<double>& node_inv_degree) {
  if (!y_local.same_shape(target_local)) throw ShapeError("consistent_loss: shape mismatch");
  if (static_cast<int64_t>(node_inv_degree.size()) != y_local.rows())
    throw IntegrityError("consistent_loss: node degree array does not match local rows");
  ConsistentLoss out;
  double s = 0.0;
  double n = 0.0;
  for (int64_t i = 0; i < y_local.rows(); ++i) {
    const double* yi = y_local.row(i);
    const double* ti = target_local.row(i);
    double row = 0.0;
    for (int64_t j = 0; j < y_local.cols(); ++j) {
      const double d = yi[j] - ti[j];
      row += d * d;
    }
    s += node_inv_degree[static_cast<size_t>(i)] * row;
    n += node_inv_degree[static_cast<size_t>(i)];
  }
  out.s_local = s;
  const double s_tot = comm.all_reduce_sum(s);
  out.n_eff = comm.all_reduce_sum(n);
  out.loss = s_tot / (out.n_eff * static_cast<double>(y_local.cols()));
  return out;
}

Tensor2D consistent_loss_backward(RankComm& comm, const Tensor2D& y_local,
                                  const Tensor2D& target_local,
                                  const std::vector<double>& node_inv_degree, double n_eff) {
  if (!y_local.same_shape(target_local))
    throw ShapeError("consistent_loss_backward: shape mismatch");
  // Backward of the loss AllReduce: every rank contributes the same local
  // seed, so the reduced seed is R times it; the gradient averaging divides
  // by R again.
  const double seed =
      comm.all_reduce_sum(1.0 / (n_eff * static_cast<double>(y_local.cols())));
  Tensor2D d(y_local.rows(), y_local.cols());
  for (int64_t i = 0; i < y_local.rows(); ++i) {
    const double c = 2.0 * seed * node_inv_degree[static_cast<size_t>(i)];
    const double* yi = y_local.row(i);
    const double* ti = target_local.row(i);
    double* di = d.row(i);
    for (int64_t j = 0; j < y_local.cols(); ++j) di[j] = c * (yi[j] - ti[j]);
  }
  return d;
}

// ---------------------------------------------------------------------------
// training
// ---------------------------------------------------------------------------

namespace {

int64_t grads_total_size(ModelGrads& g) {
  int64_t n = 0;
  g.for_each([&](const std::string&, Tensor2D& t) { n += t.size(); });
  return n;
}

// AllReduce-average the gradients across ranks through one flat buffer.
void average_gradients(RankComm& comm, ModelGrads& grads) {
  Tensor2D flat(1, grads_total_size(grads));
  int64_t off = 0;
  grads.for_each([&](const std::string&, Tensor2D& t) {
    std::memcpy(flat.data() + off, t.data(), sizeof(double) * static_cast<size_t>(t.size()));
    off += t.size();
  });
  comm.all_reduce_sum(flat);
  const double inv_r = 1.0 / static_cast<double>(comm.num_ranks());
  off = 0;
  grads.for_each([&](const std::string&, Tensor2D& t) {
    for (int64_t i = 0; i < t.size(); ++i) t.data()[i] = flat.data()[off + i] * inv_r;
    off += t.size();
  });
}

Tensor2D local_rows(const Tensor2D& t, int64_t n) {
  Tensor2D out(n, t.cols());
  std::memcpy(out.data(), t.data(), sizeof(double) * static_cast<size_t>(n * t.cols()));
  return out;
}

uint64_t fnv1a(const void* data, size_t bytes, uint64_t h) {
  const unsigned char* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < bytes; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace

void audit_params(RankComm& comm, const ModelParams& params) {
  uint64_t h = 1469598103934665603ull;
  params.for_each([&](const std::string&, const Tensor2D& t) {
    h = fnv1a(t.data(), sizeof(double) * static_cast<size_t>(t.size()), h);
  });
  const auto all = comm.all_gather_u64(h);
  for (size_t r = 1; r < all.size(); ++r)
    if (all[r] != all[0])
      throw DivergenceError("parameter divergence: rank " + std::to_string(r) +
                            " differs from rank 0");
}

ModelGrads compute_gradients(RankComm& comm, const ModelParams& params, const ReducedGraph& graph,
                             const HaloMap& halo, const Tensor2D& target_local, double* loss_out) {
  ForwardTrace trace;
  const Tensor2D y = gnn_forward(params, graph, halo, &comm, &trace);
  const ConsistentLoss loss = consistent_loss(comm, y, target_local, graph.node_inv_degree);
  const Tensor2D dy =
      consistent_loss_backward(comm, y, target_local, graph.node_inv_degree, loss.n_eff);
  ModelGrads grads = gnn_backward(params, graph, halo, &comm, trace, dy);
  average_gradients(comm, grads);
  if (loss_out) *loss_out = loss.loss;
  return grads;
}

double train_step(RankComm& comm, ModelParams& params, const ReducedGraph& graph,
                  const HaloMap& halo, const Tensor2D& target_local, AdamState& adam,
                  const AdamConfig& adam_cfg) {
  double loss = 0.0;
  ModelGrads grads = compute_gradients(comm, params, graph, halo, target_local, &loss);
  std::vector<Tensor2D*> ps;
  std::vector<const Tensor2D*> gs;
  params.for_each([&](const std::string&, Tensor2D& t) { ps.push_back(&t); });
  grads.for_each([&](const std::string&, Tensor2D& t) { gs.push_back(&t); });
  adam_step(ps, gs, adam, adam_cfg);
  return loss;
}

std::vector<IterationRecord> train(RankRuntime& runtime, std::vector<ModelParams>& per_rank_params,
                                   const DistributedGraph& dg,
                                   const std::vector<Tensor2D>& targets_local,
                                   const TrainConfig& cfg) {
  const int64_t num_ranks = runtime.num_ranks();
  if (static_cast<int64_t>(per_rank_params.size()) != num_ranks)
    throw ConfigError("train: need one ModelParams per rank");
  if (dg.num_ranks() != num_ranks) throw ConfigError("train: graph/runtime rank count mismatch");
  if (!targets_local.empty() && static_cast<int64_t>(targets_local.size()) != num_ranks)
    throw ConfigError("train: need one target per rank (or none for autoencoding)");
  if (cfg.iterations < 1) throw ConfigError("train: iterations must be >= 1");

  std::vector<IterationRecord> records(static_cast<size_t>(cfg.iterations));
  runtime.run([&](RankComm& comm) {
    const int32_t r = comm.rank();
    ModelParams& params = per_rank_params[static_cast<size_t>(r)];
    const ReducedGraph& graph = dg.graphs[static_cast<size_t>(r)];
    const HaloMap& halo = dg.halos[static_cast<size_t>(r)];
    const Tensor2D target = targets_local.empty()
                                ? local_rows(graph.node_features, graph.num_local)
                                : targets_local[static_cast<size_t>(r)];
    AdamState adam;
    CommReport prev;
    if (r == 0) prev = runtime.report();
    for (int64_t it = 0; it < cfg.iterations; ++it) {
      const auto t0 = std::chrono::steady_clock::now();
      const double loss = train_step(comm, params, graph, halo, target, adam, cfg.adam);
      if (cfg.audit_interval > 0 &&
          ((it + 1) % cfg.audit_interval == 0 || it + 1 == cfg.iterations))
        audit_params(comm, params);
      if (r == 0) {
        const auto t1 = std::chrono::steady_clock::now();
        const CommReport now = runtime.report();
        auto bytes_delta = [&](CollectiveKind kind) {
          return now.total(kind).bytes - prev.total(kind).bytes;
        };
        auto calls_delta = [&](CollectiveKind kind) {
          return now.total(kind).calls - prev.total(kind).calls;
        };
        IterationRecord& rec = records[static_cast<size_t>(it)];
        rec.iteration = it;
        rec.loss = loss;
        rec.wall_ms = std::chrono::duration<double, std::milli>(t1 - t0).count();
        rec.bytes_halo =
            bytes_delta(CollectiveKind::AllToAll) + bytes_delta(CollectiveKind::NeighborAllToAll);
        rec.bytes_allreduce = bytes_delta(CollectiveKind::AllReduce);
        rec.calls_halo =
            calls_delta(CollectiveKind::AllToAll) + calls_delta(CollectiveKind::NeighborAllToAll);
        prev = now;
      }
    }
  });
  return records;
}

}  // namespace hgnn
