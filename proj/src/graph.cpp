#include "imold/graph.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

namespace imold {

using nlohmann::json;

std::string to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::val: return "val";
    case Split::test: return "test";
  }
  return "?";
}

std::string to_string(ShiftKind s) { return s == ShiftKind::covariate ? "covariate" : "concept"; }

std::string to_string(TaskKind k) {
  switch (k) {
    case TaskKind::binary: return "binary";
    case TaskKind::multilabel: return "multilabel";
    case TaskKind::regression: return "regression";
  }
  return "?";
}

Split parse_split(const std::string& s) {
  if (s == "train") return Split::train;
  if (s == "val") return Split::val;
  if (s == "test") return Split::test;
  throw ValidationError("unknown split '" + s + "'");
}

ShiftKind parse_shift_kind(const std::string& s) {
  if (s == "covariate") return ShiftKind::covariate;
  if (s == "concept") return ShiftKind::concept_shift;
  throw ValidationError("unknown shift kind '" + s + "'");
}

TaskKind parse_task_kind(const std::string& s) {
  if (s == "binary") return TaskKind::binary;
  if (s == "multilabel") return TaskKind::multilabel;
  if (s == "regression") return TaskKind::regression;
  throw ValidationError("unknown task kind '" + s + "'");
}

const std::vector<std::string>& DatasetSplit::ids(Split s) const {
  switch (s) {
    case Split::train: return train;
    case Split::val: return val;
    case Split::test: return test;
  }
  return train;
}

std::vector<Graph> Dataset::subset(Split s) const {
  std::vector<Graph> out;
  for (const Graph& g : graphs) {
    if (g.split == s) out.push_back(g);
  }
  return out;
}

int Dataset::node_type_count() const {
  int t = 0;
  for (const Graph& g : graphs) {
    for (int v : g.node_types) t = std::max(t, v + 1);
  }
  return t;
}

void validate_graph(const Graph& g, const TaskDescriptor& task) {
  auto fail = [&g](const std::string& what) {
    throw ValidationError("graph '" + g.id + "': " + what);
  };
  if (g.id.empty()) fail("empty id");
  if (g.num_nodes <= 0) fail("num_nodes must be positive");
  if (static_cast<int>(g.node_types.size()) != g.num_nodes) {
    fail("node_types has " + std::to_string(g.node_types.size()) + " entries, expected " +
         std::to_string(g.num_nodes));
  }
  for (int t : g.node_types) {
    if (t < 0) fail("negative node type");
  }
  std::set<std::array<int, 2>> seen;
  for (const auto& e : g.edges) {
    if (e[0] < 0 || e[1] < 0 || e[0] >= g.num_nodes || e[1] >= g.num_nodes) {
      fail("edge [" + std::to_string(e[0]) + "," + std::to_string(e[1]) +
           "] out of range for num_nodes " + std::to_string(g.num_nodes));
    }
    if (e[0] == e[1]) fail("self-loop on node " + std::to_string(e[0]));
    if (e[0] > e[1]) fail("edge endpoints must satisfy u < v");
    if (!seen.insert(e).second) {
      fail("duplicate edge [" + std::to_string(e[0]) + "," + std::to_string(e[1]) + "]");
    }
  }
  const bool multi = task.kind == TaskKind::multilabel;
  if (multi != g.label_is_array) fail("label form does not match task " + to_string(task.kind));
  if (static_cast<int>(g.label.size()) != task.num_tasks) {
    fail("label arity " + std::to_string(g.label.size()) + " != task arity " +
         std::to_string(task.num_tasks));
  }
  for (const auto& y : g.label) {
    if (!y) {
      if (!multi) fail("missing label");
      continue;
    }
    if (!std::isfinite(*y)) fail("non-finite label");
    if (task.kind != TaskKind::regression && *y != 0.0 && *y != 1.0) {
      fail("classification label must be 0 or 1");
    }
  }
}

TaskDescriptor infer_task(std::span<const Graph> graphs) {
  if (graphs.empty()) throw ContractError("infer_task: empty dataset");
  if (graphs.front().label_is_array) {
    return {TaskKind::multilabel, static_cast<int>(graphs.front().label.size())};
  }
  bool binary = true;
  for (const Graph& g : graphs) {
    for (const auto& y : g.label) {
      if (y && *y != 0.0 && *y != 1.0) binary = false;
    }
  }
  return {binary ? TaskKind::binary : TaskKind::regression, 1};
}

namespace {

const std::set<std::string> kRequiredKeys = {"id", "num_nodes", "node_types", "edges", "label",
                                             "split"};

Graph graph_from_json(const json& j) {
  if (!j.is_object()) throw ParseError("expected a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (!kRequiredKeys.contains(key) && key != "env") {
      throw ParseError("unexpected key '" + key + "'");
    }
  }
  for (const auto& key : kRequiredKeys) {
    if (!j.contains(key)) throw ParseError("missing key '" + key + "'");
  }
  Graph g;
  g.id = j.at("id").get<std::string>();
  g.num_nodes = j.at("num_nodes").get<int>();
  g.node_types = j.at("node_types").get<std::vector<int>>();
  for (const auto& e : j.at("edges")) {
    if (!e.is_array() || e.size() != 2) throw ParseError("edge must be a pair");
    g.edges.push_back({e[0].get<int>(), e[1].get<int>()});
  }
  const json& label = j.at("label");
  if (label.is_array()) {
    g.label_is_array = true;
    for (const auto& y : label) {
      if (y.is_null()) {
        g.label.emplace_back(std::nullopt);
      } else if (y.is_number()) {
        g.label.emplace_back(y.get<double>());
      } else {
        throw ParseError("label entries must be numbers or null");
      }
    }
  } else if (label.is_number()) {
    g.label.emplace_back(label.get<double>());
  } else {
    throw ParseError("label must be a number or an array");
  }
  if (j.contains("env") && !j.at("env").is_null()) g.env = j.at("env").get<std::string>();
  g.split = parse_split(j.at("split").get<std::string>());
  return g;
}

}  // namespace

Dataset read_dataset(std::istream& in, std::optional<TaskKind> task_override) {
  Dataset ds;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      ds.graphs.push_back(graph_from_json(json::parse(line)));
    } catch (const json::exception& e) {
      throw ParseError("line " + std::to_string(lineno) + ": " + e.what());
    } catch (const ParseError& e) {
      throw ParseError("line " + std::to_string(lineno) + ": " + e.what());
    } catch (const ValidationError& e) {
      throw ParseError("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  if (ds.graphs.empty()) throw ContractError("empty dataset");

  ds.task = infer_task(ds.graphs);
  if (task_override) {
    if (*task_override == TaskKind::multilabel && ds.task.kind != TaskKind::multilabel) {
      throw ValidationError("task override multilabel needs array labels");
    }
    if (*task_override != TaskKind::multilabel && ds.task.kind == TaskKind::multilabel) {
      throw ValidationError("array labels need a multilabel task");
    }
    ds.task.kind = *task_override;
  }

  std::unordered_set<std::string> ids;
  for (const Graph& g : ds.graphs) {
    validate_graph(g, ds.task);
    if (!ids.insert(g.id).second) throw ValidationError("graph '" + g.id + "': duplicate id");
    switch (g.split) {
      case Split::train: ds.split.train.push_back(g.id); break;
      case Split::val: ds.split.val.push_back(g.id); break;
      case Split::test: ds.split.test.push_back(g.id); break;
    }
  }
  return ds;
}

Dataset load_dataset(const std::filesystem::path& path, std::optional<TaskKind> task_override) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open dataset " + path.string());
  return read_dataset(in, task_override);
}

std::string graph_to_json_line(const Graph& g) {
  json j;
  j["id"] = g.id;
  j["num_nodes"] = g.num_nodes;
  j["node_types"] = g.node_types;
  json edges = json::array();
  for (const auto& e : g.edges) edges.push_back({e[0], e[1]});
  j["edges"] = std::move(edges);
  if (g.label_is_array) {
    json label = json::array();
    for (const auto& y : g.label) label.push_back(y ? json(*y) : json(nullptr));
    j["label"] = std::move(label);
  } else {
    j["label"] = g.label.at(0).value();
  }
  if (g.env) j["env"] = *g.env;
  j["split"] = to_string(g.split);
  return j.dump();
}

void write_dataset(std::ostream& out, std::span<const Graph> graphs) {
  for (const Graph& g : graphs) out << graph_to_json_line(g) << '\n';
}

void save_dataset(const std::filesystem::path& path, std::span<const Graph> graphs) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot write " + path.string());
  write_dataset(out, graphs);
}

GraphBatch make_batch(std::span<const Graph* const> graphs, int num_tasks) {
  if (graphs.empty()) throw ContractError("make_batch: no graphs");
  GraphBatch b;
  const Index count = static_cast<Index>(graphs.size());
  b.labels = Matrix::Zero(count, num_tasks);
  b.mask = Matrix::Zero(count, num_tasks);
  b.offsets.push_back(0);
  std::vector<Eigen::Triplet<double>> triplets;
  for (Index gi = 0; gi < count; ++gi) {
    const Graph& g = *graphs[static_cast<std::size_t>(gi)];
    if (static_cast<int>(g.label.size()) != num_tasks) {
      throw ContractError("make_batch: graph '" + g.id + "' label arity mismatch");
    }
    const Index base = b.offsets.back();
    b.node_types.insert(b.node_types.end(), g.node_types.begin(), g.node_types.end());
    for (const auto& e : g.edges) {
      const Index u = base + e[0];
      const Index v = base + e[1];
      b.edges.push_back({u, v});
      triplets.emplace_back(u, v, 1.0);
      triplets.emplace_back(v, u, 1.0);
    }
    b.offsets.push_back(base + g.num_nodes);
    for (int k = 0; k < num_tasks; ++k) {
      const auto& y = g.label[static_cast<std::size_t>(k)];
      if (y) {
        b.labels(gi, k) = *y;
        b.mask(gi, k) = 1.0;
      }
    }
    b.ids.push_back(g.id);
    b.envs.push_back(g.env);
    b.splits.push_back(g.split);
    b.label_is_array.push_back(g.label_is_array);
  }
  b.adjacency.resize(b.total_nodes(), b.total_nodes());
  b.adjacency.setFromTriplets(triplets.begin(), triplets.end());
  return b;
}

std::vector<Graph> unbatch(const GraphBatch& batch) {
  std::vector<Graph> out;
  std::size_t edge = 0;
  for (Index gi = 0; gi < batch.size(); ++gi) {
    const Index lo = batch.offsets[static_cast<std::size_t>(gi)];
    const Index hi = batch.offsets[static_cast<std::size_t>(gi) + 1];
    Graph g;
    const auto i = static_cast<std::size_t>(gi);
    g.id = batch.ids[i];
    g.env = batch.envs[i];
    g.split = batch.splits[i];
    g.label_is_array = batch.label_is_array[i];
    g.num_nodes = static_cast<int>(hi - lo);
    g.node_types.assign(batch.node_types.begin() + lo, batch.node_types.begin() + hi);
    while (edge < batch.edges.size() && batch.edges[edge][0] < hi) {
      const auto& e = batch.edges[edge++];
      g.edges.push_back({static_cast<int>(e[0] - lo), static_cast<int>(e[1] - lo)});
    }
    for (Index k = 0; k < batch.labels.cols(); ++k) {
      if (batch.mask(gi, k) != 0.0) {
        g.label.emplace_back(batch.labels(gi, k));
      } else {
        g.label.emplace_back(std::nullopt);
      }
    }
    out.push_back(std::move(g));
  }
  return out;
}

namespace {

std::vector<GraphBatch> cut(std::span<const Graph> graphs, const std::vector<std::size_t>& order,
                            int batch_size, int num_tasks) {
  std::vector<GraphBatch> out;
  std::vector<const Graph*> members;
  for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(batch_size)) {
    members.clear();
    const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(batch_size));
    for (std::size_t i = start; i < stop; ++i) members.push_back(&graphs[order[i]]);
    out.push_back(make_batch(members, num_tasks));
  }
  return out;
}

}  // namespace

std::vector<GraphBatch> make_batches(std::span<const Graph> graphs, int batch_size,
                                     std::uint64_t seed, int num_tasks) {
  if (batch_size < 2) throw ContractError("make_batches: batch_size must be >= 2");
  std::vector<std::size_t> order(graphs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  return cut(graphs, order, batch_size, num_tasks);
}

std::vector<GraphBatch> make_ordered_batches(std::span<const Graph> graphs, int batch_size,
                                             int num_tasks) {
  if (batch_size < 1) throw ContractError("make_ordered_batches: batch_size must be >= 1");
  std::vector<std::size_t> order(graphs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  return cut(graphs, order, batch_size, num_tasks);
}

}  // namespace imold
