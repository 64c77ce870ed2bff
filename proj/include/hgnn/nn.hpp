#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "hgnn/rng.hpp"
#include "hgnn/tensor.hpp"

namespace hgnn {

// Shape of one multilayer perceptron.
//
// Structure (hidden_width > 0):
//   h   = x * W_in + b_in                          (in_dim -> hidden_width)
//   h   = h + ELU(LN0(h * W_j + b_j))  j = 1..num_hidden_layers  (residual blocks)
//   y   = h * W_out + b_out                        (hidden_width -> out_dim)
//   y  += x * W_skip          if use_skip_projection (bias-free)
//   y   = LayerNorm(y)        if use_output_layernorm (affine scale/shift)
//
// LN0 is parameter-free (no scale/shift) layer normalization, applied after
// each hidden linear before the ELU when use_hidden_layernorm is set; it
// keeps the residual stream bounded without adding trainable parameters.
// hidden_width == 0 degenerates to a single linear layer in_dim -> out_dim.
struct MlpSpec {
  int64_t in_dim = 0;
  int64_t out_dim = 0;
  int64_t hidden_width = 0;
  int64_t num_hidden_layers = 0;
  bool use_residual = true;
  bool use_hidden_layernorm = true;
  bool use_output_layernorm = false;
  bool use_skip_projection = false;

  bool single_linear() const { return hidden_width == 0; }
  int64_t param_count() const;
  void validate() const;

  static MlpSpec single(int64_t in, int64_t out) {
    return MlpSpec{in, out, 0, 0, false, false, false, false};
  }
};

// Parameter storage for one MLP. Gradients use the same container, shape
// congruent with the parameters they correspond to.
struct MlpParams {
  // linears[0] = input projection (absent for single_linear),
  // linears[1..k] = hidden blocks, linears.back() = output projection.
  std::vector<Tensor2D> weights;  // each in x out
  std::vector<Tensor2D> biases;   // each 1 x out
  Tensor2D skip_weight;           // in_dim x out_dim when used, else empty
  Tensor2D ln_gamma, ln_beta;     // 1 x out_dim when used, else empty

  void for_each(const std::function<void(const std::string&, Tensor2D&)>& fn);
  void for_each(const std::function<void(const std::string&, const Tensor2D&)>& fn) const;
};

struct Mlp {
  MlpSpec spec;
  MlpParams p;
};

constexpr double kLayerNormEps = 1e-12;

// Glorot-uniform init for every linear (bound sqrt(6/(fan_in+fan_out))),
// zero biases, unit gamma / zero beta.
Mlp make_mlp(const MlpSpec& spec, Rng& rng);

// Zero-filled gradient container congruent with m.p.
MlpParams make_grads(const Mlp& m);

int64_t param_count(const Mlp& m);

// Fills a row chunk [row0, row0+len) of the MLP input, len x in_dim,
// row-major into dst. Lets callers stream gathered/concatenated inputs
// without materializing them.
using RowFiller = std::function<void(int64_t row0, int64_t len, double* dst)>;

// Receives the input adjoint for a row chunk (len x in_dim).
using RowSink = std::function<void(int64_t row0, int64_t len, const double* d_in)>;

// Forward pass over n_rows independent rows. Internally chunked so peak
// scratch stays bounded regardless of n_rows.
void mlp_forward_rows(const Mlp& m, int64_t n_rows, const RowFiller& fill, Tensor2D& out);

// Reverse pass. Recomputes forward intermediates chunk by chunk (inputs are
// re-supplied by `fill`, which must reproduce the forward values exactly),
// accumulates parameter gradients into `grads`, and hands input adjoints to
// `sink` in ascending chunk order.
void mlp_backward_rows(const Mlp& m, int64_t n_rows, const RowFiller& fill, const Tensor2D& d_out,
                       const RowSink& sink, MlpParams& grads);

// Tensor-to-tensor convenience wrappers.
Tensor2D mlp_forward(const Mlp& m, const Tensor2D& input);
Tensor2D mlp_backward(const Mlp& m, const Tensor2D& input, const Tensor2D& d_out,
                      MlpParams& grads);

// Tape form of the same pair: the tape pins the input (checkpoint), the
// adjoint pass recomputes everything else.
struct MlpTape {
  const Mlp* mlp = nullptr;
  std::shared_ptr<const Tensor2D> input;
};

std::pair<Tensor2D, MlpTape> mlp_forward_taped(const Mlp& m, std::shared_ptr<const Tensor2D> input);
std::pair<Tensor2D, MlpParams> mlp_backward_taped(const MlpTape& tape, const Tensor2D& d_out);

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<Tensor2D> m, v;  // one pair per parameter tensor, flat order
  int64_t step = 0;
};

// One bias-corrected Adam update applied tensor-by-tensor in a fixed order.
// `tensors`/`grads` must list shape-congruent pairs. Throws OptimizerError on
// non-finite gradients or state/shape mismatch.
void adam_step(std::vector<Tensor2D*> tensors, std::vector<const Tensor2D*> grads,
               AdamState& state, const AdamConfig& cfg);

}  // namespace hgnn
