#pragma once

#include <string>
#include <utility>
#include <vector>

#include "hgnn/comm.hpp"
#include "hgnn/graph.hpp"
#include "hgnn/mesh.hpp"
#include "hgnn/model.hpp"

namespace hgnn {

// Mesh dump: JSON {config, gll_1d, per-element {origin, global_ids}}.
// Positions are recomputable from the config and are embedded only on
// request.
void save_mesh_json(const std::string& path, const Mesh& mesh, bool embed_positions);
Mesh load_mesh_json(const std::string& path);

// Per-rank graph dump. JSON for small graphs, little-endian binary for large
// ones; sections [header: rank, num_local, num_halo, N_e, F_x, F_e]
// [global_ids][positions][adjacency][degrees][halo map]. Node/edge features
// are not stored (recomputable).
void save_graph_json(const std::string& path, const ReducedGraph& graph, const HaloMap& halo);
void save_graph_binary(const std::string& path, const ReducedGraph& graph, const HaloMap& halo);
std::pair<ReducedGraph, HaloMap> load_graph(const std::string& path);  // sniffs the format

// Checkpoint: binary header {magic, version, config hash}, then named tensors
// (name length, name, rows, cols, data). Round-trips bit-exactly.
void save_checkpoint(const std::string& path, const ModelParams& params);
void load_checkpoint(const std::string& path, ModelParams& params);  // shapes must already match

// Per-node target table keyed by global id: binary {magic, n_nodes, width,
// doubles}. Used by `train --targets`.
void save_targets(const std::string& path, const Tensor2D& by_gid);
Tensor2D load_targets(const std::string& path);

// CSV helpers. Rows are written verbatim, comma-joined.
void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows);
void write_comm_report_csv(const std::string& path, const CommReport& report);

// Plain-text rendering of any CSV produced by the tools (column-aligned).
std::string render_csv(const std::string& path);

}  // namespace hgnn
