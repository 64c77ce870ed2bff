// halo-gnn: mesh generation, partitioning, training, verification and
// benchmarking for the consistent distributed GNN simulator.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "hgnn/harness.hpp"
#include "hgnn/io.hpp"
#include "json.hpp"

using namespace hgnn;
namespace fs = std::filesystem;

namespace {

std::vector<int64_t> parse_rank_list(const std::string& s) {
  std::vector<int64_t> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (tok.empty()) continue;
    out.push_back(std::stoll(tok));
  }
  if (out.empty()) throw ConfigError("empty rank list");
  return out;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (!tok.empty()) out.push_back(tok);
  }
  return out;
}

// HALO_GNN_RANKS overrides any --ranks value (harness scripting hook).
std::string apply_rank_env(std::string ranks_flag) {
  if (const char* env = std::getenv("HALO_GNN_RANKS")) {
    if (*env) return env;
  }
  return ranks_flag;
}

PartitionStrategy strategy_from_string(const std::string& s) {
  if (s == "slab") return PartitionStrategy::Slab;
  if (s == "block") return PartitionStrategy::Block;
  throw ConfigError("unknown strategy '" + s + "' (expected slab|block)");
}

struct TrainCli {
  std::string mesh_file;
  int64_t elements = 4;
  int64_t order = 3;
  std::string ranks = "1";
  std::string strategy = "block";
  std::string model = "small";
  std::string mode = "na2a";
  double lr = 1e-3;
  int64_t iterations = 100;
  uint64_t seed = 0;
  std::string trace_out;
  std::string checkpoint_out;
  std::string targets_file;
  std::string config_file;
};

// config file values fill in; explicitly passed flags win
void merge_train_config(TrainCli& cli, const CLI::App* cmd) {
  if (cli.config_file.empty()) return;
  std::ifstream in(cli.config_file);
  if (!in) throw ConfigError("cannot open config file " + cli.config_file);
  nlohmann::json j;
  in >> j;
  auto flag_given = [&](const std::string& name) { return cmd->count(name) > 0; };
  if (j.contains("model") && !flag_given("--model")) cli.model = j["model"].get<std::string>();
  if (j.contains("mode") && !flag_given("--mode")) cli.mode = j["mode"].get<std::string>();
  if (j.contains("lr") && !flag_given("--lr")) cli.lr = j["lr"].get<double>();
  if (j.contains("iterations") && !flag_given("--iterations"))
    cli.iterations = j["iterations"].get<int64_t>();
  if (j.contains("seed") && !flag_given("--seed")) cli.seed = j["seed"].get<uint64_t>();
  if (j.contains("ranks") && !flag_given("--ranks"))
    cli.ranks = std::to_string(j["ranks"].get<int64_t>());
  if (j.contains("strategy") && !flag_given("--strategy"))
    cli.strategy = j["strategy"].get<std::string>();
  if (j.contains("mesh")) {
    const auto& m = j["mesh"];
    if (m.is_string() && !flag_given("--mesh")) {
      cli.mesh_file = m.get<std::string>();
    } else if (m.is_object()) {
      if (m.contains("elements") && !flag_given("--elements"))
        cli.elements = m["elements"].get<int64_t>();
      if (m.contains("order") && !flag_given("--order")) cli.order = m["order"].get<int64_t>();
    }
  }
}

int run_mesh(int64_t elements, int64_t order, const std::string& out, bool embed,
             const std::vector<double>& dmin, const std::vector<double>& dmax) {
  MeshConfig cfg;
  cfg.elements_per_axis = elements;
  cfg.poly_order = order;
  if (dmin.size() == 3) cfg.domain_min = {dmin[0], dmin[1], dmin[2]};
  if (dmax.size() == 3) cfg.domain_max = {dmax[0], dmax[1], dmax[2]};
  const Mesh mesh = build_box_mesh(cfg);
  save_mesh_json(out, mesh, embed);
  std::cout << "mesh: E=" << elements << " p=" << order << " elements=" << mesh.num_elements()
            << " unique_nodes=" << cfg.unique_nodes() << " -> " << out << "\n";
  return 0;
}

int run_partition(const std::string& mesh_file, const std::string& ranks_flag,
                  const std::string& strategy, const std::string& out_dir,
                  const std::string& format) {
  const Mesh mesh = load_mesh_json(mesh_file);
  const auto ranks = parse_rank_list(apply_rank_env(ranks_flag));
  if (ranks.size() != 1) throw ConfigError("partition expects a single rank count");
  const PartitionMap part = partition_mesh(mesh, ranks[0], strategy_from_string(strategy));
  const DistributedGraph dg = build_distributed_graph(mesh, part);
  fs::create_directories(out_dir);
  for (int64_t r = 0; r < dg.num_ranks(); ++r) {
    std::ostringstream name;
    name << out_dir << "/rank_" << r << (format == "bin" ? ".bin" : ".json");
    if (format == "bin")
      save_graph_binary(name.str(), dg.graphs[static_cast<size_t>(r)],
                        dg.halos[static_cast<size_t>(r)]);
    else
      save_graph_json(name.str(), dg.graphs[static_cast<size_t>(r)],
                      dg.halos[static_cast<size_t>(r)]);
  }
  std::cout << format_halo_stats(halo_stats(dg));
  std::cout << "wrote " << dg.num_ranks() << " graph files to " << out_dir << "\n";
  return 0;
}

int run_train(const TrainCli& cli) {
  MeshConfig cfg;
  Mesh mesh;
  if (!cli.mesh_file.empty()) {
    mesh = load_mesh_json(cli.mesh_file);
    cfg = mesh.config;
  } else {
    cfg.elements_per_axis = cli.elements;
    cfg.poly_order = cli.order;
    mesh = build_box_mesh(cfg);
  }
  const auto ranks = parse_rank_list(apply_rank_env(cli.ranks));
  if (ranks.size() != 1) throw ConfigError("train expects a single rank count");
  const int64_t r = ranks[0];
  const PartitionMap part = r == 1 ? partition_mesh(mesh, 1, PartitionStrategy::Slab)
                                   : partition_mesh(mesh, r, strategy_from_string(cli.strategy));
  DistributedGraph dg = build_distributed_graph(mesh, part);
  attach_tgv_features(dg, cfg);

  const GnnConfig gc = GnnConfig::preset(cli.model, exchange_mode_from_string(cli.mode));
  std::vector<ModelParams> params(static_cast<size_t>(r), init_params(gc, cli.seed));

  std::vector<Tensor2D> targets;
  if (!cli.targets_file.empty()) {
    const Tensor2D by_gid = load_targets(cli.targets_file);
    for (const auto& g : dg.graphs) {
      Tensor2D t(g.num_local, by_gid.cols());
      for (int64_t i = 0; i < g.num_local; ++i) {
        const int64_t gid = g.global_ids[static_cast<size_t>(i)];
        if (gid >= by_gid.rows()) throw ConfigError("target file too small for this mesh");
        std::memcpy(t.row(i), by_gid.row(gid), sizeof(double) * static_cast<size_t>(by_gid.cols()));
      }
      targets.push_back(std::move(t));
    }
  }

  TrainConfig tc;
  tc.adam.lr = cli.lr;
  tc.iterations = cli.iterations;
  tc.seed = cli.seed;
  RankRuntime rt(r);
  const auto records = train(rt, params, dg, targets, tc);

  std::cout << "train: model=" << cli.model << " mode=" << cli.mode << " R=" << r
            << " iterations=" << cli.iterations << " seed=" << cli.seed << "\n";
  std::cout << "final loss " << records.back().loss << "\n";

  if (!cli.trace_out.empty()) {
    std::vector<std::vector<std::string>> rows;
    for (const auto& rec : records) {
      std::ostringstream loss;
      loss.precision(17);
      loss << rec.loss;
      rows.push_back({std::to_string(rec.iteration), loss.str(), std::to_string(rec.wall_ms),
                      std::to_string(rec.bytes_halo), std::to_string(rec.bytes_allreduce)});
    }
    write_csv(cli.trace_out, {"iteration", "loss", "wall_ms", "bytes_halo", "bytes_allreduce"},
              rows);
    std::cout << "trace -> " << cli.trace_out << "\n";
  }
  if (!cli.checkpoint_out.empty()) {
    save_checkpoint(cli.checkpoint_out, params[0]);
    std::cout << "checkpoint -> " << cli.checkpoint_out << "\n";
  }
  return 0;
}

int run_verify(int64_t elements, int64_t order, const std::string& ranks_flag,
               const std::string& model, const std::string& mode, uint64_t seed,
               const std::string& out) {
  MeshConfig cfg;
  cfg.elements_per_axis = elements;
  cfg.poly_order = order;
  const GnnConfig gc = GnnConfig::preset(model, exchange_mode_from_string(mode));
  if (gc.mode == ExchangeMode::None)
    throw ConfigError("verify needs an exchange mode (a2a or na2a)");

  auto rank_list = parse_rank_list(apply_rank_env(ranks_flag));
  std::vector<int64_t> multi;
  for (const int64_t r : rank_list)
    if (r > 1) multi.push_back(r);

  const ConsistencyReport rep = verify_consistency(cfg, multi, gc, seed);
  std::vector<GradientReport> grads;
  bool grads_ok = true;
  for (const int64_t r : multi) {
    grads.push_back(verify_gradients(cfg, r, gc, seed));
    const auto& gr = grads.back();
    if (gr.max_rel_dev > 1e-10 || gr.fd_max_rel_err > 1e-6 || !gr.deterministic) grads_ok = false;
  }

  std::cout << "verify: E=" << elements << " p=" << order << " model=" << model
            << " mode=" << mode << " seed=" << seed << "\n";
  std::cout << "R=1 reference loss " << rep.ref_loss << "\n";
  for (const auto& row : rep.rows)
    std::cout << "R=" << row.ranks << "  loss_dev=" << row.rel_loss_dev_consistent
              << "  output_dev=" << row.max_output_dev
              << "  bitwise=" << (row.bitwise_coincident ? "yes" : "no")
              << "  loss_dev(none)=" << row.rel_loss_dev_none << "\n";
  for (const auto& gr : grads)
    std::cout << "R=" << gr.ranks << "  grad_dev=" << gr.max_rel_dev
              << "  fd_err=" << gr.fd_max_rel_err << " (" << gr.fd_checked << " spots)"
              << "  deterministic=" << (gr.deterministic ? "yes" : "no") << "\n";

  if (!out.empty()) {
    write_consistency_csv(out, rep, grads);
    std::cout << "report -> " << out << "\n";
  }
  const bool ok = rep.passed && grads_ok;
  std::cout << (ok ? "PASS" : "FAIL") << "\n";
  return ok ? 0 : 1;
}

int run_bench(int64_t loading, const std::string& ranks_flag, const std::string& models,
              const std::string& modes, int64_t order, int64_t iters, int64_t warmup,
              uint64_t seed, const std::string& out) {
  WeakScalingConfig cfg;
  cfg.loading = loading;
  cfg.rank_counts = parse_rank_list(apply_rank_env(ranks_flag));
  cfg.models = split_list(models);
  cfg.modes.clear();
  for (const auto& m : split_list(modes)) cfg.modes.push_back(exchange_mode_from_string(m));
  cfg.poly_order = order;
  cfg.timed_iters = iters;
  cfg.warmup_iters = warmup;
  cfg.seed = seed;

  const ScalingReport rep = weak_scaling(cfg);
  if (!out.empty()) {
    write_scaling_csv(out, rep);
    std::cout << "report -> " << out << "\n";
  }
  for (const auto& row : rep.rows)
    std::cout << "R=" << row.ranks << " model=" << row.model << " mode=" << row.mode
              << " nodes=" << row.local_nodes << " iter_ms=" << row.iter_ms
              << " nodes/s=" << row.nodes_per_sec << " eff=" << row.efficiency
              << " rel=" << row.rel_throughput << " halo_bytes=" << row.bytes_halo << "\n";
  return 0;
}

int run_report(const std::string& in) {
  std::cout << render_csv(in);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"consistent distributed GNN simulator for spectral-element meshes"};
  app.require_subcommand(1);

  // mesh
  auto* mesh_cmd = app.add_subcommand("mesh", "generate a structured box mesh");
  int64_t elements = 4, order = 3;
  std::string mesh_out = "mesh.json";
  bool embed = false;
  std::vector<double> dmin, dmax;
  mesh_cmd->add_option("--elements", elements, "elements per axis (E)")->required();
  mesh_cmd->add_option("--order", order, "polynomial order (p)")->required();
  mesh_cmd->add_option("--out", mesh_out, "output mesh JSON");
  mesh_cmd->add_flag("--embed-positions", embed, "embed node positions in the dump");
  mesh_cmd->add_option("--domain-min", dmin, "domain lower corner (3 values)")->expected(3);
  mesh_cmd->add_option("--domain-max", dmax, "domain upper corner (3 values)")->expected(3);

  // partition
  auto* part_cmd = app.add_subcommand("partition", "partition a mesh into rank graphs");
  std::string part_mesh, part_ranks = "2", part_strategy = "slab", part_out = "graphs",
              part_format = "json";
  part_cmd->add_option("--mesh", part_mesh, "mesh JSON file")->required();
  part_cmd->add_option("--ranks", part_ranks, "rank count");
  part_cmd->add_option("--strategy", part_strategy, "slab|block");
  part_cmd->add_option("--out", part_out, "output directory");
  part_cmd->add_option("--format", part_format, "json|bin");

  // train
  auto* train_cmd = app.add_subcommand("train", "train on the Taylor-Green autoencoding task");
  TrainCli tcli;
  train_cmd->add_option("--mesh", tcli.mesh_file, "mesh JSON file (instead of --elements/--order)");
  train_cmd->add_option("--elements", tcli.elements, "elements per axis");
  train_cmd->add_option("--order", tcli.order, "polynomial order");
  train_cmd->add_option("--ranks", tcli.ranks, "rank count");
  train_cmd->add_option("--strategy", tcli.strategy, "slab|block");
  train_cmd->add_option("--model", tcli.model, "small|large");
  train_cmd->add_option("--mode", tcli.mode, "none|a2a|na2a");
  train_cmd->add_option("--lr", tcli.lr, "learning rate");
  train_cmd->add_option("--iterations", tcli.iterations, "training iterations");
  train_cmd->add_option("--seed", tcli.seed, "rng seed");
  train_cmd->add_option("--trace", tcli.trace_out, "loss trace CSV output");
  train_cmd->add_option("--checkpoint", tcli.checkpoint_out, "checkpoint output file");
  train_cmd->add_option("--targets", tcli.targets_file, "per-node target table (by global id)");
  train_cmd->add_option("--config", tcli.config_file, "JSON config file (flags win)");

  // verify
  auto* verify_cmd = app.add_subcommand("verify", "verify output/gradient consistency");
  int64_t v_elements = 4, v_order = 3;
  std::string v_ranks = "1,2,4,8", v_model = "small", v_mode = "na2a", v_out;
  uint64_t v_seed = 0;
  verify_cmd->add_option("--elements", v_elements, "elements per axis");
  verify_cmd->add_option("--order", v_order, "polynomial order");
  verify_cmd->add_option("--ranks", v_ranks, "comma-separated rank counts");
  verify_cmd->add_option("--model", v_model, "small|large");
  verify_cmd->add_option("--mode", v_mode, "a2a|na2a");
  verify_cmd->add_option("--seed", v_seed, "rng seed");
  verify_cmd->add_option("--out", v_out, "CSV report output");

  // bench
  auto* bench_cmd = app.add_subcommand("bench", "weak-scaling benchmark with byte accounting");
  int64_t b_loading = 8192, b_order = 5, b_iters = 2, b_warmup = 1;
  std::string b_ranks = "2,4,8", b_models = "small", b_modes = "none,a2a,na2a", b_out = "bench.csv";
  uint64_t b_seed = 0;
  bench_cmd->add_option("--loading", b_loading, "target local nodes per rank");
  bench_cmd->add_option("--ranks", b_ranks, "comma-separated rank counts");
  bench_cmd->add_option("--model", b_models, "comma-separated model presets");
  bench_cmd->add_option("--mode", b_modes, "comma-separated exchange modes");
  bench_cmd->add_option("--order", b_order, "polynomial order");
  bench_cmd->add_option("--iters", b_iters, "timed iterations per configuration");
  bench_cmd->add_option("--warmup", b_warmup, "warmup iterations per configuration");
  bench_cmd->add_option("--seed", b_seed, "rng seed");
  bench_cmd->add_option("--out", b_out, "CSV report output");

  // report
  auto* report_cmd = app.add_subcommand("report", "render a CSV report as text");
  std::string r_in;
  report_cmd->add_option("--in", r_in, "CSV file produced by verify/bench/train")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (mesh_cmd->parsed()) return run_mesh(elements, order, mesh_out, embed, dmin, dmax);
    if (part_cmd->parsed())
      return run_partition(part_mesh, part_ranks, part_strategy, part_out, part_format);
    if (train_cmd->parsed()) {
      merge_train_config(tcli, train_cmd);
      return run_train(tcli);
    }
    if (verify_cmd->parsed())
      return run_verify(v_elements, v_order, v_ranks, v_model, v_mode, v_seed, v_out);
    if (bench_cmd->parsed())
      return run_bench(b_loading, b_ranks, b_models, b_modes, b_order, b_iters, b_warmup, b_seed,
                       b_out);
    if (report_cmd->parsed()) return run_report(r_in);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const PartitionError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
