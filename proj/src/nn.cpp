#include "hgnn/nn.hpp"

#include <cmath>
#include <cstring>

#include "hgnn/error.hpp"
#include "hgnn/kernels.hpp"

namespace hgnn {

namespace k = kernels;

namespace {
constexpr int64_t kMlpChunk = 16384;
}

// ---------------------------------------------------------------------------
// spec / params
// ---------------------------------------------------------------------------

void MlpSpec::validate() const {
  if (in_dim < 1 || out_dim < 1) throw ConfigError("MlpSpec: in/out dims must be positive");
  if (hidden_width < 0 || num_hidden_layers < 0) throw ConfigError("MlpSpec: negative layer spec");
  if (single_linear() && (num_hidden_layers != 0 || use_output_layernorm || use_skip_projection))
    throw ConfigError("MlpSpec: single linear layer takes no hidden/layernorm/skip options");
}

int64_t MlpSpec::param_count() const {
  if (single_linear()) return in_dim * out_dim + out_dim;
  int64_t n = in_dim * hidden_width + hidden_width;                         // input projection
  n += num_hidden_layers * (hidden_width * hidden_width + hidden_width);    // hidden blocks
  n += hidden_width * out_dim + out_dim;                                    // output projection
  if (use_skip_projection) n += in_dim * out_dim;
  if (use_output_layernorm) n += 2 * out_dim;
  return n;
}

void MlpParams::for_each(const std::function<void(const std::string&, Tensor2D&)>& fn) {
  for (size_t i = 0; i < weights.size(); ++i) {
    fn("w" + std::to_string(i), weights[i]);
    fn("b" + std::to_string(i), biases[i]);
  }
  if (!skip_weight.empty()) fn("skip", skip_weight);
  if (!ln_gamma.empty()) fn("ln_g", ln_gamma);
  if (!ln_beta.empty()) fn("ln_b", ln_beta);
}

void MlpParams::for_each(const std::function<void(const std::string&, const Tensor2D&)>& fn) const {
  const_cast<MlpParams*>(this)->for_each(
      [&](const std::string& name, Tensor2D& t) { fn(name, t); });
}

namespace {

Tensor2D uniform_init(int64_t rows, int64_t cols, double bound, Rng& rng) {
  Tensor2D t(rows, cols);
  for (int64_t i = 0; i < t.size(); ++i) t.data()[i] = rng.uniform(-bound, bound);
  return t;
}

double glorot_bound(int64_t in, int64_t out) {
  return std::sqrt(6.0 / static_cast<double>(in + out));
}

// Weight and bias both drawn uniform(-a, a). A bias of zeros would make the
// projection of an all-zero input row constant, which degenerates the output
// layernorm (zero row variance).
void push_linear(MlpParams& p, int64_t in, int64_t out, Rng& rng) {
  const double a = glorot_bound(in, out);
  p.weights.push_back(uniform_init(in, out, a, rng));
  p.biases.push_back(uniform_init(1, out, a, rng));
}

}  // namespace

Mlp make_mlp(const MlpSpec& spec, Rng& rng) {
  spec.validate();
  Mlp m;
  m.spec = spec;
  if (spec.single_linear()) {
    push_linear(m.p, spec.in_dim, spec.out_dim, rng);
    return m;
  }
  push_linear(m.p, spec.in_dim, spec.hidden_width, rng);
  for (int64_t j = 0; j < spec.num_hidden_layers; ++j)
    push_linear(m.p, spec.hidden_width, spec.hidden_width, rng);
  push_linear(m.p, spec.hidden_width, spec.out_dim, rng);
  if (spec.use_skip_projection)
    m.p.skip_weight =
        uniform_init(spec.in_dim, spec.out_dim, glorot_bound(spec.in_dim, spec.out_dim), rng);
  if (spec.use_output_layernorm) {
    m.p.ln_gamma = Tensor2D(1, spec.out_dim);
    m.p.ln_gamma.fill(1.0);
    m.p.ln_beta = Tensor2D(1, spec.out_dim);
  }
  return m;
}

MlpParams make_grads(const Mlp& m) {
  MlpParams g;
  for (const auto& w : m.p.weights) g.weights.emplace_back(w.rows(), w.cols());
  for (const auto& b : m.p.biases) g.biases.emplace_back(b.rows(), b.cols());
  if (!m.p.skip_weight.empty()) g.skip_weight = Tensor2D(m.p.skip_weight.rows(), m.p.skip_weight.cols());
  if (!m.p.ln_gamma.empty()) {
    g.ln_gamma = Tensor2D(1, m.p.ln_gamma.cols());
    g.ln_beta = Tensor2D(1, m.p.ln_beta.cols());
  }
  return g;
}

int64_t param_count(const Mlp& m) {
  int64_t n = 0;
  m.p.for_each([&](const std::string&, const Tensor2D& t) { n += t.size(); });
  return n;
}

// ---------------------------------------------------------------------------
// forward / backward
// ---------------------------------------------------------------------------

namespace {

// Forward for one row chunk; optionally keeps per-stage intermediates for the
// adjoint pass. hidden[j] is the residual stream after block j (hidden[0] is
// the input projection output); pre[j]/normed[j] are the pre-layernorm and
// pre-activation values of block j+1.
struct ChunkWork {
  Tensor2D in;
  std::vector<Tensor2D> hidden;
  std::vector<Tensor2D> pre;
  std::vector<Tensor2D> normed;
  Tensor2D y_pre;  // output before the affine layernorm
  std::vector<double> ones, zeros;
};

void chunk_forward(const Mlp& m, int64_t len, ChunkWork& w, double* out_rows, bool keep) {
  const MlpSpec& s = m.spec;
  if (s.single_linear()) {
    k::matmul_nn(w.in.data(), m.p.weights[0].data(), out_rows, len, s.in_dim, s.out_dim);
    k::add_bias(out_rows, m.p.biases[0].data(), len, s.out_dim);
    return;
  }
  const int64_t h = s.hidden_width;
  w.ones.assign(static_cast<size_t>(h), 1.0);
  w.zeros.assign(static_cast<size_t>(h), 0.0);
  w.hidden.assign(1, Tensor2D(len, h));
  k::matmul_nn(w.in.data(), m.p.weights[0].data(), w.hidden[0].data(), len, s.in_dim, h);
  k::add_bias(w.hidden[0].data(), m.p.biases[0].data(), len, h);
  if (keep) {
    w.pre.clear();
    w.normed.clear();
  }
  for (int64_t j = 0; j < s.num_hidden_layers; ++j) {
    Tensor2D u(len, h);
    k::matmul_nn(w.hidden.back().data(), m.p.weights[1 + j].data(), u.data(), len, h, h);
    k::add_bias(u.data(), m.p.biases[1 + j].data(), len, h);
    Tensor2D t(len, h);
    if (s.use_hidden_layernorm)
      k::layernorm(u.data(), w.ones.data(), w.zeros.data(), t.data(), len, h, kLayerNormEps);
    else
      t = u;
    Tensor2D act(len, h);
    k::elu(t.data(), act.data(), len * h);
    if (s.use_residual) k::add_inplace(act.data(), w.hidden.back().data(), len * h);
    if (keep) {
      w.pre.push_back(std::move(u));
      w.normed.push_back(std::move(t));
      w.hidden.push_back(std::move(act));
    } else {
      w.hidden.back() = std::move(act);
    }
  }
  double* y = out_rows;
  if (s.use_output_layernorm) {
    w.y_pre = Tensor2D(len, s.out_dim);
    y = w.y_pre.data();
  }
  k::matmul_nn(w.hidden.back().data(), m.p.weights.back().data(), y, len, h, s.out_dim);
  k::add_bias(y, m.p.biases.back().data(), len, s.out_dim);
  if (s.use_skip_projection) {
    Tensor2D sk(len, s.out_dim);
    k::matmul_nn(w.in.data(), m.p.skip_weight.data(), sk.data(), len, s.in_dim, s.out_dim);
    k::add_inplace(y, sk.data(), len * s.out_dim);
  }
  if (s.use_output_layernorm)
    k::layernorm(y, m.p.ln_gamma.data(), m.p.ln_beta.data(), out_rows, len, s.out_dim,
                 kLayerNormEps);
}

}  // namespace

void mlp_forward_rows(const Mlp& m, int64_t n_rows, const RowFiller& fill, Tensor2D& out) {
  const MlpSpec& s = m.spec;
  if (out.rows() != n_rows || out.cols() != s.out_dim) out = Tensor2D(n_rows, s.out_dim);
  ChunkWork w;
  for (int64_t row0 = 0; row0 < n_rows; row0 += kMlpChunk) {
    const int64_t len = std::min(kMlpChunk, n_rows - row0);
    if (w.in.rows() != len) w.in = Tensor2D(len, s.in_dim);
    fill(row0, len, w.in.data());
    chunk_forward(m, len, w, out.row(row0), /*keep=*/false);
  }
}

void mlp_backward_rows(const Mlp& m, int64_t n_rows, const RowFiller& fill, const Tensor2D& d_out,
                       const RowSink& sink, MlpParams& grads) {
  const MlpSpec& s = m.spec;
  if (d_out.rows() != n_rows || d_out.cols() != s.out_dim)
    throw ShapeError("mlp_backward_rows: output adjoint shape mismatch");
  ChunkWork w;
  Tensor2D d_in;
  for (int64_t row0 = 0; row0 < n_rows; row0 += kMlpChunk) {
    const int64_t len = std::min(kMlpChunk, n_rows - row0);
    if (w.in.rows() != len) w.in = Tensor2D(len, s.in_dim);
    if (d_in.rows() != len) d_in = Tensor2D(len, s.in_dim);
    fill(row0, len, w.in.data());

    if (s.single_linear()) {
      const double* dy = d_out.row(row0);
      k::matmul_tn_acc(w.in.data(), dy, grads.weights[0].data(), len, s.in_dim, s.out_dim);
      k::colsum_acc(dy, grads.biases[0].data(), len, s.out_dim);
      k::matmul_nt(dy, m.p.weights[0].data(), d_in.data(), len, s.out_dim, s.in_dim);
      sink(row0, len, d_in.data());
      continue;
    }

    Tensor2D scratch_out(len, s.out_dim);
    chunk_forward(m, len, w, scratch_out.data(), /*keep=*/true);
    const int64_t h = s.hidden_width;

    // output layernorm
    Tensor2D d_y(len, s.out_dim);
    if (s.use_output_layernorm) {
      k::layernorm_backward(w.y_pre.data(), m.p.ln_gamma.data(), d_out.row(row0), d_y.data(),
                            grads.ln_gamma.data(), grads.ln_beta.data(), len, s.out_dim,
                            kLayerNormEps);
    } else {
      std::memcpy(d_y.data(), d_out.row(row0), sizeof(double) * len * s.out_dim);
    }

    // output projection
    k::matmul_tn_acc(w.hidden.back().data(), d_y.data(), grads.weights.back().data(), len, h,
                     s.out_dim);
    k::colsum_acc(d_y.data(), grads.biases.back().data(), len, s.out_dim);
    Tensor2D d_h(len, h);
    k::matmul_nt(d_y.data(), m.p.weights.back().data(), d_h.data(), len, s.out_dim, h);

    // skip projection feeds the input adjoint directly
    if (s.use_skip_projection) {
      k::matmul_tn_acc(w.in.data(), d_y.data(), grads.skip_weight.data(), len, s.in_dim,
                       s.out_dim);
      k::matmul_nt(d_y.data(), m.p.skip_weight.data(), d_in.data(), len, s.out_dim, s.in_dim);
    } else {
      d_in.fill(0.0);
    }

    // hidden blocks, reverse order
    Tensor2D d_t(len, h), d_u(len, h), d_prev(len, h);
    std::vector<double> ln_scratch(static_cast<size_t>(2 * h), 0.0);
    for (int64_t j = s.num_hidden_layers - 1; j >= 0; --j) {
      d_t.fill(0.0);
      k::elu_backward_acc(w.normed[j].data(), d_h.data(), d_t.data(), len * h);
      if (s.use_hidden_layernorm) {
        std::fill(ln_scratch.begin(), ln_scratch.end(), 0.0);  // discarded (no affine params)
        k::layernorm_backward(w.pre[j].data(), w.ones.data(), d_t.data(), d_u.data(),
                              ln_scratch.data(), ln_scratch.data() + h, len, h, kLayerNormEps);
      } else {
        std::swap(d_u, d_t);
      }
      k::matmul_tn_acc(w.hidden[j].data(), d_u.data(), grads.weights[1 + j].data(), len, h, h);
      k::colsum_acc(d_u.data(), grads.biases[1 + j].data(), len, h);
      k::matmul_nt(d_u.data(), m.p.weights[1 + j].data(), d_prev.data(), len, h, h);
      if (s.use_residual) k::add_inplace(d_prev.data(), d_h.data(), len * h);
      std::swap(d_h, d_prev);
    }

    // input projection
    k::matmul_tn_acc(w.in.data(), d_h.data(), grads.weights[0].data(), len, s.in_dim, h);
    k::colsum_acc(d_h.data(), grads.biases[0].data(), len, h);
    Tensor2D d_in_proj(len, s.in_dim);
    k::matmul_nt(d_h.data(), m.p.weights[0].data(), d_in_proj.data(), len, h, s.in_dim);
    k::add_inplace(d_in.data(), d_in_proj.data(), len * s.in_dim);

    sink(row0, len, d_in.data());
  }
}

Tensor2D mlp_forward(const Mlp& m, const Tensor2D& input) {
  if (input.cols() != m.spec.in_dim) throw ShapeError("mlp_forward: input dim mismatch");
  Tensor2D out;
  mlp_forward_rows(
      m, input.rows(),
      [&](int64_t row0, int64_t len, double* dst) {
        std::memcpy(dst, input.row(row0), sizeof(double) * len * input.cols());
      },
      out);
  return out;
}

Tensor2D mlp_backward(const Mlp& m, const Tensor2D& input, const Tensor2D& d_out,
                      MlpParams& grads) {
  if (input.cols() != m.spec.in_dim) throw ShapeError("mlp_backward: input dim mismatch");
  Tensor2D d_in(input.rows(), input.cols());
  mlp_backward_rows(
      m, input.rows(),
      [&](int64_t row0, int64_t len, double* dst) {
        std::memcpy(dst, input.row(row0), sizeof(double) * len * input.cols());
      },
      d_out,
      [&](int64_t row0, int64_t len, const double* d) {
        std::memcpy(d_in.row(row0), d, sizeof(double) * len * input.cols());
      },
      grads);
  return d_in;
}

std::pair<Tensor2D, MlpTape> mlp_forward_taped(const Mlp& m, std::shared_ptr<const Tensor2D> input) {
  MlpTape tape{&m, input};
  return {mlp_forward(m, *input), std::move(tape)};
}

std::pair<Tensor2D, MlpParams> mlp_backward_taped(const MlpTape& tape, const Tensor2D& d_out) {
  MlpParams grads = make_grads(*tape.mlp);
  Tensor2D d_in = mlp_backward(*tape.mlp, *tape.input, d_out, grads);
  return {std::move(d_in), std::move(grads)};
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

void adam_step(std::vector<Tensor2D*> tensors, std::vector<const Tensor2D*> grads,
               AdamState& state, const AdamConfig& cfg) {
  if (tensors.size() != grads.size()) throw OptimizerError("adam_step: tensor/grad count mismatch");
  if (state.m.empty()) {
    for (const Tensor2D* t : tensors) {
      state.m.emplace_back(t->rows(), t->cols());
      state.v.emplace_back(t->rows(), t->cols());
    }
  }
  if (state.m.size() != tensors.size()) throw OptimizerError("adam_step: state size mismatch");
  state.step += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (size_t t = 0; t < tensors.size(); ++t) {
    Tensor2D& p = *tensors[t];
    const Tensor2D& g = *grads[t];
    if (!p.same_shape(g)) throw OptimizerError("adam_step: gradient shape mismatch");
    Tensor2D& m = state.m[t];
    Tensor2D& v = state.v[t];
    for (int64_t i = 0; i < p.size(); ++i) {
      const double gi = g.data()[i];
      if (!std::isfinite(gi)) throw OptimizerError("adam_step: non-finite gradient");
      m.data()[i] = cfg.beta1 * m.data()[i] + (1.0 - cfg.beta1) * gi;
      v.data()[i] = cfg.beta2 * v.data()[i] + (1.0 - cfg.beta2) * gi * gi;
      const double mhat = m.data()[i] / bc1;
      const double vhat = v.data()[i] / bc2;
      p.data()[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
}

}  // namespace hgnn
