#include "hgnn/io.hpp"

#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "hgnn/error.hpp"
#include "json.hpp"

namespace hgnn {

using nlohmann::json;

namespace {

json dump_config(const MeshConfig& c) {
  return json{{"elements_per_axis", c.elements_per_axis},
              {"poly_order", c.poly_order},
              {"domain_min", c.domain_min},
              {"domain_max", c.domain_max}};
}

MeshConfig parse_config(const json& j) {
  MeshConfig c;
  c.elements_per_axis = j.at("elements_per_axis").get<int64_t>();
  c.poly_order = j.at("poly_order").get<int64_t>();
  c.domain_min = j.at("domain_min").get<std::array<double, 3>>();
  c.domain_max = j.at("domain_max").get<std::array<double, 3>>();
  return c;
}

json open_json(const std::string& path, const char* expected_type) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw IoError(path + ": " + e.what());
  }
  if (j.value("type", "") != expected_type)
    throw IoError(path + ": not a " + std::string(expected_type) + " file");
  return j;
}

template <typename T>
void write_pod(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw IoError("unexpected end of file");
  return v;
}

template <typename T>
void write_vec(std::ostream& out, const std::vector<T>& v) {
  write_pod<int64_t>(out, static_cast<int64_t>(v.size()));
  out.write(reinterpret_cast<const char*>(v.data()), sizeof(T) * v.size());
}

template <typename T>
std::vector<T> read_vec(std::istream& in) {
  const int64_t n = read_pod<int64_t>(in);
  if (n < 0) throw IoError("corrupt length field");
  std::vector<T> v(static_cast<size_t>(n));
  in.read(reinterpret_cast<char*>(v.data()), sizeof(T) * v.size());
  if (!in) throw IoError("unexpected end of file");
  return v;
}

constexpr char kGraphMagic[9] = "HGNNGRB1";
constexpr char kCkptMagic[9] = "HGNNCKP1";
constexpr char kTargetMagic[9] = "HGNNTGT1";

}  // namespace

// ---------------------------------------------------------------------------
// mesh
// ---------------------------------------------------------------------------

void save_mesh_json(const std::string& path, const Mesh& mesh, bool embed_positions) {
  json j;
  j["type"] = "halo-gnn-mesh";
  j["version"] = 1;
  j["config"] = dump_config(mesh.config);
  j["gll_1d"] = mesh.gll_1d;
  json elems = json::array();
  for (int64_t e = 0; e < mesh.num_elements(); ++e) {
    json elem;
    elem["origin"] = mesh.element_origins[static_cast<size_t>(e)];
    elem["global_ids"] = mesh.global_ids[static_cast<size_t>(e)];
    if (embed_positions) {
      json pos = json::array();
      for (const auto& p : mesh.node_positions[static_cast<size_t>(e)]) pos.push_back(p);
      elem["positions"] = std::move(pos);
    }
    elems.push_back(std::move(elem));
  }
  j["elements"] = std::move(elems);
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << j.dump() << "\n";
}

Mesh load_mesh_json(const std::string& path) {
  const json j = open_json(path, "halo-gnn-mesh");
  Mesh mesh;
  mesh.config = parse_config(j.at("config"));
  mesh.config.validate();
  mesh.gll_1d = j.at("gll_1d").get<std::vector<double>>();
  const auto& elems = j.at("elements");
  if (static_cast<int64_t>(elems.size()) != mesh.config.num_elements())
    throw IoError(path + ": element count does not match config");
  const int64_t p = mesh.config.poly_order;
  const int64_t q = p + 1;
  const int64_t e_axis = mesh.config.elements_per_axis;
  int64_t e = 0;
  for (const auto& elem : elems) {
    mesh.element_origins.push_back(elem.at("origin").get<std::array<double, 3>>());
    mesh.global_ids.push_back(elem.at("global_ids").get<std::vector<int64_t>>());
    if (static_cast<int64_t>(mesh.global_ids.back().size()) != q * q * q)
      throw IoError(path + ": wrong node count in element");
    if (elem.contains("positions")) {
      mesh.node_positions.push_back(elem.at("positions").get<std::vector<std::array<double, 3>>>());
    } else {
      // recompute canonically from the lattice
      std::vector<std::array<double, 3>> pos(static_cast<size_t>(q * q * q));
      const int64_t ex = e % e_axis, ey = (e / e_axis) % e_axis, ez = e / (e_axis * e_axis);
      for (int64_t k = 0; k < q; ++k)
        for (int64_t jj = 0; jj < q; ++jj)
          for (int64_t i = 0; i < q; ++i)
            pos[static_cast<size_t>(i + jj * q + k * q * q)] = lattice_position(
                mesh.config, mesh.gll_1d, ex * p + i, ey * p + jj, ez * p + k);
      mesh.node_positions.push_back(std::move(pos));
    }
    ++e;
  }
  return mesh;
}

// ---------------------------------------------------------------------------
// graph
// ---------------------------------------------------------------------------

namespace {

void finalize_loaded_graph(ReducedGraph& g, HaloMap& h) {
  g.node_inv_degree.resize(g.node_degree.size());
  for (size_t i = 0; i < g.node_degree.size(); ++i)
    g.node_inv_degree[i] = 1.0 / static_cast<double>(g.node_degree[i]);
  g.edge_inv_degree.resize(g.edge_degree.size());
  for (size_t i = 0; i < g.edge_degree.size(); ++i)
    g.edge_inv_degree[i] = 1.0 / static_cast<double>(g.edge_degree[i]);
  g.build_csr();
  (void)h;
}

}  // namespace

void save_graph_json(const std::string& path, const ReducedGraph& graph, const HaloMap& halo) {
  json j;
  j["type"] = "halo-gnn-graph";
  j["version"] = 1;
  j["rank"] = graph.rank;
  j["num_local"] = graph.num_local;
  j["num_halo"] = graph.num_halo;
  j["num_edges"] = graph.num_edges();
  j["f_x"] = 3;
  j["f_e"] = 7;
  j["global_ids"] = graph.global_ids;
  json pos = json::array();
  for (int64_t i = 0; i < graph.rows(); ++i)
    pos.push_back(std::array<double, 3>{graph.positions.at(i, 0), graph.positions.at(i, 1),
                                        graph.positions.at(i, 2)});
  j["positions"] = std::move(pos);
  j["adjacency"] = json{{"src", graph.edge_src}, {"dst", graph.edge_dst}};
  j["node_degree"] = graph.node_degree;
  j["edge_degree"] = graph.edge_degree;
  json hj;
  hj["neighbors"] = halo.neighbors;
  hj["send_masks"] = halo.send_masks;
  hj["recv_masks"] = halo.recv_masks;
  hj["halo_to_local"] = halo.halo_to_local;
  hj["max_buffer_rows"] = halo.max_buffer_rows;
  json groups = json::array();
  for (const auto& grp : halo.sync_groups)
    groups.push_back(json{{"node", grp.local_node}, {"slots", grp.slots}});
  hj["sync_groups"] = std::move(groups);
  j["halo"] = std::move(hj);
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  out << j.dump() << "\n";
}

void save_graph_binary(const std::string& path, const ReducedGraph& graph, const HaloMap& halo) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out.write(kGraphMagic, 8);
  write_pod<int64_t>(out, graph.rank);
  write_pod<int64_t>(out, graph.num_local);
  write_pod<int64_t>(out, graph.num_halo);
  write_pod<int64_t>(out, graph.num_edges());
  write_pod<int64_t>(out, 3);  // F_x
  write_pod<int64_t>(out, 7);  // F_e
  write_vec(out, graph.global_ids);
  std::vector<double> pos(static_cast<size_t>(graph.rows() * 3));
  std::memcpy(pos.data(), graph.positions.data(), sizeof(double) * pos.size());
  write_vec(out, pos);
  write_vec(out, graph.edge_src);
  write_vec(out, graph.edge_dst);
  write_vec(out, graph.node_degree);
  write_vec(out, graph.edge_degree);
  write_pod<int64_t>(out, static_cast<int64_t>(halo.neighbors.size()));
  for (size_t n = 0; n < halo.neighbors.size(); ++n) {
    write_pod<int32_t>(out, halo.neighbors[n]);
    write_vec(out, halo.send_masks[n]);
    write_vec(out, halo.recv_masks[n]);
  }
  write_vec(out, halo.halo_to_local);
  write_pod<int64_t>(out, halo.max_buffer_rows);
  write_pod<int64_t>(out, static_cast<int64_t>(halo.sync_groups.size()));
  for (const auto& grp : halo.sync_groups) {
    write_pod<int32_t>(out, grp.local_node);
    write_vec(out, grp.slots);
  }
}

std::pair<ReducedGraph, HaloMap> load_graph(const std::string& path) {
  std::ifstream probe(path, std::ios::binary);
  if (!probe) throw IoError("cannot open " + path);
  char magic[8] = {};
  probe.read(magic, 8);
  ReducedGraph g;
  HaloMap h;
  if (probe && std::memcmp(magic, kGraphMagic, 8) == 0) {
    std::ifstream in(path, std::ios::binary);
    in.seekg(8);
    g.rank = static_cast<int32_t>(read_pod<int64_t>(in));
    g.num_local = read_pod<int64_t>(in);
    g.num_halo = read_pod<int64_t>(in);
    const int64_t ne = read_pod<int64_t>(in);
    read_pod<int64_t>(in);  // F_x
    read_pod<int64_t>(in);  // F_e
    g.global_ids = read_vec<int64_t>(in);
    const auto pos = read_vec<double>(in);
    g.positions = Tensor2D(g.rows(), 3);
    if (static_cast<int64_t>(pos.size()) != g.rows() * 3) throw IoError(path + ": bad positions");
    std::memcpy(g.positions.data(), pos.data(), sizeof(double) * pos.size());
    g.edge_src = read_vec<int32_t>(in);
    g.edge_dst = read_vec<int32_t>(in);
    if (static_cast<int64_t>(g.edge_src.size()) != ne) throw IoError(path + ": bad adjacency");
    g.node_degree = read_vec<int32_t>(in);
    g.edge_degree = read_vec<int32_t>(in);
    const int64_t n_nbr = read_pod<int64_t>(in);
    h.rank = g.rank;
    for (int64_t n = 0; n < n_nbr; ++n) {
      h.neighbors.push_back(read_pod<int32_t>(in));
      h.send_masks.push_back(read_vec<int32_t>(in));
      h.recv_masks.push_back(read_vec<int32_t>(in));
    }
    h.halo_to_local = read_vec<int32_t>(in);
    h.max_buffer_rows = read_pod<int64_t>(in);
    const int64_t n_groups = read_pod<int64_t>(in);
    for (int64_t t = 0; t < n_groups; ++t) {
      HaloMap::SyncGroup grp;
      grp.local_node = read_pod<int32_t>(in);
      grp.slots = read_vec<int32_t>(in);
      h.sync_groups.push_back(std::move(grp));
    }
  } else {
    const json j = open_json(path, "halo-gnn-graph");
    g.rank = j.at("rank").get<int32_t>();
    g.num_local = j.at("num_local").get<int64_t>();
    g.num_halo = j.at("num_halo").get<int64_t>();
    g.global_ids = j.at("global_ids").get<std::vector<int64_t>>();
    const auto pos = j.at("positions").get<std::vector<std::array<double, 3>>>();
    g.positions = Tensor2D(g.rows(), 3);
    for (int64_t i = 0; i < g.rows(); ++i)
      for (int c = 0; c < 3; ++c) g.positions.at(i, c) = pos[static_cast<size_t>(i)][static_cast<size_t>(c)];
    g.edge_src = j.at("adjacency").at("src").get<std::vector<int32_t>>();
    g.edge_dst = j.at("adjacency").at("dst").get<std::vector<int32_t>>();
    g.node_degree = j.at("node_degree").get<std::vector<int32_t>>();
    g.edge_degree = j.at("edge_degree").get<std::vector<int32_t>>();
    const auto& hj = j.at("halo");
    h.rank = g.rank;
    h.neighbors = hj.at("neighbors").get<std::vector<int32_t>>();
    h.send_masks = hj.at("send_masks").get<std::vector<std::vector<int32_t>>>();
    h.recv_masks = hj.at("recv_masks").get<std::vector<std::vector<int32_t>>>();
    h.halo_to_local = hj.at("halo_to_local").get<std::vector<int32_t>>();
    h.max_buffer_rows = hj.at("max_buffer_rows").get<int64_t>();
    for (const auto& grp : hj.at("sync_groups")) {
      HaloMap::SyncGroup sg;
      sg.local_node = grp.at("node").get<int32_t>();
      sg.slots = grp.at("slots").get<std::vector<int32_t>>();
      h.sync_groups.push_back(std::move(sg));
    }
  }
  if (static_cast<int64_t>(g.global_ids.size()) != g.rows())
    throw IoError(path + ": global_ids length mismatch");
  if (static_cast<int64_t>(g.node_degree.size()) != g.num_local)
    throw IoError(path + ": node_degree length mismatch");
  finalize_loaded_graph(g, h);
  return {std::move(g), std::move(h)};
}

// ---------------------------------------------------------------------------
// checkpoint
// ---------------------------------------------------------------------------

void save_checkpoint(const std::string& path, const ModelParams& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out.write(kCkptMagic, 8);
  write_pod<uint32_t>(out, 1);
  write_pod<uint64_t>(out, params.config.config_hash());
  uint32_t count = 0;
  params.for_each([&](const std::string&, const Tensor2D&) { ++count; });
  write_pod<uint32_t>(out, count);
  params.for_each([&](const std::string& name, const Tensor2D& t) {
    write_pod<uint32_t>(out, static_cast<uint32_t>(name.size()));
    out.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_pod<int64_t>(out, t.rows());
    write_pod<int64_t>(out, t.cols());
    out.write(reinterpret_cast<const char*>(t.data()),
              static_cast<std::streamsize>(sizeof(double) * static_cast<size_t>(t.size())));
  });
}

void load_checkpoint(const std::string& path, ModelParams& params) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  char magic[8] = {};
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kCkptMagic, 8) != 0)
    throw IoError(path + ": not a checkpoint file");
  const uint32_t version = read_pod<uint32_t>(in);
  if (version != 1) throw IoError(path + ": unsupported checkpoint version");
  const uint64_t hash = read_pod<uint64_t>(in);
  if (hash != params.config.config_hash())
    throw IoError(path + ": checkpoint was written for a different model configuration");
  const uint32_t count = read_pod<uint32_t>(in);
  std::map<std::string, Tensor2D> tensors;
  for (uint32_t t = 0; t < count; ++t) {
    const uint32_t len = read_pod<uint32_t>(in);
    std::string name(len, '\0');
    in.read(name.data(), len);
    const int64_t rows = read_pod<int64_t>(in);
    const int64_t cols = read_pod<int64_t>(in);
    Tensor2D tensor(rows, cols);
    in.read(reinterpret_cast<char*>(tensor.data()),
            static_cast<std::streamsize>(sizeof(double) * static_cast<size_t>(tensor.size())));
    if (!in) throw IoError(path + ": truncated checkpoint");
    tensors.emplace(std::move(name), std::move(tensor));
  }
  params.for_each([&](const std::string& name, Tensor2D& t) {
    const auto it = tensors.find(name);
    if (it == tensors.end()) throw IoError(path + ": missing tensor " + name);
    if (!t.same_shape(it->second)) throw IoError(path + ": shape mismatch for " + name);
    t = it->second;
  });
}

// ---------------------------------------------------------------------------
// targets
// ---------------------------------------------------------------------------

void save_targets(const std::string& path, const Tensor2D& by_gid) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path);
  out.write(kTargetMagic, 8);
  write_pod<int64_t>(out, by_gid.rows());
  write_pod<int64_t>(out, by_gid.cols());
  out.write(reinterpret_cast<const char*>(by_gid.data()),
            static_cast<std::streamsize>(sizeof(double) * static_cast<size_t>(by_gid.size())));
}

Tensor2D load_targets(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  char magic[8] = {};
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kTargetMagic, 8) != 0)
    throw IoError(path + ": not a target file");
  const int64_t rows = read_pod<int64_t>(in);
  const int64_t cols = read_pod<int64_t>(in);
  Tensor2D t(rows, cols);
  in.read(reinterpret_cast<char*>(t.data()),
          static_cast<std::streamsize>(sizeof(double) * static_cast<size_t>(t.size())));
  if (!in) throw IoError(path + ": truncated target file");
  return t;
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const std::vector<std::vector<std::string>>& rows) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path);
  for (size_t c = 0; c < header.size(); ++c) out << (c ? "," : "") << header[c];
  out << "\n";
  for (const auto& row : rows) {
    for (size_t c = 0; c < row.size(); ++c) out << (c ? "," : "") << row[c];
    out << "\n";
  }
}

void write_comm_report_csv(const std::string& path, const CommReport& report) {
  std::vector<std::vector<std::string>> rows;
  const char* names[3] = {"allreduce", "a2a", "na2a"};
  for (int64_t r = 0; r < report.num_ranks; ++r)
    for (int kind = 0; kind < 3; ++kind) {
      const auto& c = report.per_rank[static_cast<size_t>(r)][static_cast<size_t>(kind)];
      rows.push_back({std::to_string(r), names[kind], std::to_string(c.calls),
                      std::to_string(c.bytes)});
    }
  write_csv(path, {"rank", "collective", "calls", "bytes"}, rows);
}

std::string render_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  std::vector<std::vector<std::string>> table;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    table.push_back(std::move(cells));
  }
  if (table.empty()) return "";
  std::vector<size_t> width;
  for (const auto& row : table) {
    if (width.size() < row.size()) width.resize(row.size(), 0);
    for (size_t c = 0; c < row.size(); ++c) width[c] = std::max(width[c], row[c].size());
  }
  std::ostringstream out;
  for (size_t r = 0; r < table.size(); ++r) {
    for (size_t c = 0; c < table[r].size(); ++c) {
      out << table[r][c];
      if (c + 1 < table[r].size())
        out << std::string(width[c] - table[r][c].size() + 2, ' ');
    }
    out << "\n";
    if (r == 0) {
      size_t total = 0;
      for (const size_t w : width) total += w + 2;
      out << std::string(total > 2 ? total - 2 : total, '-') << "\n";
    }
  }
  return out.str();
}

}  // namespace hgnn
