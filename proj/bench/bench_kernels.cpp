// Compares the OpenMP kernels against the serial reference implementations
// and reports per-kernel timings. The two paths are bitwise identical by
// construction; this target measures the speedup and re-checks equality.

#include <chrono>
#include <cstdio>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "hgnn/kernels.hpp"
#include "hgnn/nn.hpp"
#include "hgnn/rng.hpp"

using namespace hgnn;
namespace k = hgnn::kernels;
namespace ks = hgnn::kernels::serial;

namespace {

double now_ms() {
  return std::chrono::duration<double, std::milli>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

template <typename F>
double time_best_of(int reps, F&& fn) {
  double best = 1e300;
  for (int r = 0; r < reps; ++r) {
    const double t0 = now_ms();
    fn();
    best = std::min(best, now_ms() - t0);
  }
  return best;
}

void report(const char* name, const std::string& size, double serial_ms, double omp_ms,
            bool equal) {
  std::printf("%-22s %-16s serial %9.3f ms   omp %9.3f ms   speedup %5.2fx   %s\n", name,
              size.c_str(), serial_ms, omp_ms, serial_ms / omp_ms, equal ? "match" : "MISMATCH");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"serial vs OpenMP kernel benchmark"};
  int64_t rows = 200000;
  int reps = 5;
  app.add_option("--rows", rows, "row count for the edge-sized kernels");
  app.add_option("--reps", reps, "repetitions (best time wins)");
  CLI11_PARSE(app, argc, argv);

  Rng rng(0);
  const int64_t in_dim = 24, hid = 8;
  std::vector<double> a(static_cast<size_t>(rows * in_dim));
  for (auto& v : a) v = rng.uniform(-1, 1);
  std::vector<double> w(static_cast<size_t>(in_dim * hid));
  for (auto& v : w) v = rng.uniform(-1, 1);
  std::vector<double> c1(static_cast<size_t>(rows * hid)), c2(c1);

  {
    const double ts = time_best_of(reps, [&] { ks::matmul_nn(a.data(), w.data(), c2.data(), rows, in_dim, hid); });
    const double tp = time_best_of(reps, [&] { k::matmul_nn(a.data(), w.data(), c1.data(), rows, in_dim, hid); });
    report("matmul_nn", std::to_string(rows) + "x24x8", ts, tp, c1 == c2);
  }

  {
    std::vector<double> gamma(static_cast<size_t>(hid), 1.0), beta(static_cast<size_t>(hid), 0.0);
    std::vector<double> y1(static_cast<size_t>(rows * hid)), y2(y1);
    const double ts = time_best_of(reps, [&] {
      ks::layernorm(c2.data(), gamma.data(), beta.data(), y2.data(), rows, hid, 1e-12);
    });
    const double tp = time_best_of(reps, [&] {
      k::layernorm(c1.data(), gamma.data(), beta.data(), y1.data(), rows, hid, 1e-12);
    });
    report("layernorm", std::to_string(rows) + "x8", ts, tp, y1 == y2);
  }

  {
    std::vector<double> y1(a.size()), y2(a.size());
    const double ts = time_best_of(reps, [&] { ks::elu(a.data(), y2.data(), static_cast<int64_t>(a.size())); });
    const double tp = time_best_of(reps, [&] { k::elu(a.data(), y1.data(), static_cast<int64_t>(a.size())); });
    report("elu", std::to_string(a.size()), ts, tp, y1 == y2);
  }

  {
    // synthetic scatter: rows edges onto rows/6 nodes
    const int64_t n_nodes = std::max<int64_t>(1, rows / 6);
    std::vector<int32_t> dst(static_cast<size_t>(rows));
    for (auto& d : dst) d = static_cast<int32_t>(rng.next_u64() % n_nodes);
    std::vector<int32_t> offsets(static_cast<size_t>(n_nodes + 1), 0);
    for (const auto d : dst) offsets[static_cast<size_t>(d) + 1]++;
    for (int64_t i = 0; i < n_nodes; ++i)
      offsets[static_cast<size_t>(i + 1)] += offsets[static_cast<size_t>(i)];
    std::vector<int32_t> ids(static_cast<size_t>(rows));
    std::vector<int32_t> cur(offsets.begin(), offsets.end() - 1);
    for (int64_t e = 0; e < rows; ++e)
      ids[static_cast<size_t>(cur[static_cast<size_t>(dst[static_cast<size_t>(e)])]++)] =
          static_cast<int32_t>(e);
    std::vector<double> scale(static_cast<size_t>(rows), 0.5);
    std::vector<double> o1(static_cast<size_t>(n_nodes * hid)), o2(o1);
    const double ts = time_best_of(reps, [&] {
      ks::scatter_rows_csr(c2.data(), offsets.data(), ids.data(), scale.data(), o2.data(), n_nodes, hid);
    });
    const double tp = time_best_of(reps, [&] {
      k::scatter_rows_csr(c1.data(), offsets.data(), ids.data(), scale.data(), o1.data(), n_nodes, hid);
    });
    report("scatter_rows_csr", std::to_string(rows) + "->" + std::to_string(n_nodes), ts, tp,
           o1 == o2);
  }

  {
    // end-to-end MLP forward + backward on edge-sized input (the dominant
    // kernels of one message passing layer)
    Rng prng(1);
    const Mlp mlp = make_mlp(MlpSpec{in_dim, hid, hid, 2, true, true, false, false}, prng);
    Tensor2D input(rows, in_dim);
    for (int64_t i = 0; i < input.size(); ++i) input.data()[i] = rng.uniform(-1, 1);
    Tensor2D dy(rows, hid);
    for (int64_t i = 0; i < dy.size(); ++i) dy.data()[i] = rng.uniform(-1, 1);
    const double tf = time_best_of(reps, [&] { mlp_forward(mlp, input); });
    const double tb = time_best_of(reps, [&] {
      MlpParams grads = make_grads(mlp);
      mlp_backward(mlp, input, dy, grads);
    });
    std::printf("%-22s %-16s forward %8.3f ms   backward %8.3f ms   (omp path)\n", "mlp fwd/bwd",
                (std::to_string(rows) + "x24").c_str(), tf, tb);
  }

  return 0;
}
