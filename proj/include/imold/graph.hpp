#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "imold/autodiff.hpp"

namespace imold {

enum class Split { train, val, test };
enum class ShiftKind { covariate, concept_shift };
enum class TaskKind { binary, multilabel, regression };

std::string to_string(Split s);
std::string to_string(ShiftKind s);
std::string to_string(TaskKind k);
Split parse_split(const std::string& s);
ShiftKind parse_shift_kind(const std::string& s);
TaskKind parse_task_kind(const std::string& s);

struct TaskDescriptor {
  TaskKind kind = TaskKind::binary;
  int num_tasks = 1;  // K; 1 unless multilabel

  bool operator==(const TaskDescriptor&) const = default;
};

// Undirected, node-typed graph. Edges are stored once with u < v.
struct Graph {
  std::string id;
  int num_nodes = 0;
  std::vector<int> node_types;
  std::vector<std::array<int, 2>> edges;
  // One entry for binary/regression; K entries (nullopt = missing) for multilabel.
  std::vector<std::optional<double>> label;
  bool label_is_array = false;
  std::optional<std::string> env;
  Split split = Split::train;

  bool operator==(const Graph&) const = default;
};

struct DatasetSplit {
  std::vector<std::string> train;
  std::vector<std::string> val;
  std::vector<std::string> test;
  // Not carried by the file format; set by the synthetic generator.
  std::optional<ShiftKind> shift_kind;

  const std::vector<std::string>& ids(Split s) const;
};

struct Dataset {
  std::vector<Graph> graphs;
  DatasetSplit split;
  TaskDescriptor task;

  // Graphs of one split, in file order.
  std::vector<Graph> subset(Split s) const;
  // 1 + largest node type present.
  int node_type_count() const;
};

// Throws ValidationError naming the graph id.
void validate_graph(const Graph& g, const TaskDescriptor& task);

// Infers the task from labels: arrays -> multilabel(K); numbers all in {0,1}
// -> binary; otherwise regression.
TaskDescriptor infer_task(std::span<const Graph> graphs);

// JSON Lines reader. Throws ParseError (with 1-based line number) on malformed
// lines, ValidationError on invariant violations, ContractError on an empty
// dataset. `task_override` replaces inference but is still validated.
Dataset read_dataset(std::istream& in, std::optional<TaskKind> task_override = std::nullopt);
Dataset load_dataset(const std::filesystem::path& path,
                     std::optional<TaskKind> task_override = std::nullopt);

std::string graph_to_json_line(const Graph& g);
void write_dataset(std::ostream& out, std::span<const Graph> graphs);
void save_dataset(const std::filesystem::path& path, std::span<const Graph> graphs);

// Several graphs laid out as one disjoint graph.
struct GraphBatch {
  std::vector<int> node_types;             // concatenated
  std::vector<std::array<Index, 2>> edges;  // offset per graph, u < v
  std::vector<Index> offsets;              // B+1 node boundaries
  Matrix labels;                           // B x K, 0 where missing
  Matrix mask;                             // B x K, 1 observed / 0 missing
  SparseMatrix adjacency;                  // symmetric, both directions

  // Per-graph metadata so the batch can be taken apart again.
  std::vector<std::string> ids;
  std::vector<std::optional<std::string>> envs;
  std::vector<Split> splits;
  std::vector<bool> label_is_array;

  Index size() const { return static_cast<Index>(offsets.size()) - 1; }
  Index total_nodes() const { return offsets.empty() ? 0 : offsets.back(); }
};

GraphBatch make_batch(std::span<const Graph* const> graphs, int num_tasks);
std::vector<Graph> unbatch(const GraphBatch& batch);

// Shuffles graph order with a seeded RNG and cuts it into batches of
// batch_size; the last batch may be smaller. Throws ContractError when
// batch_size < 2.
std::vector<GraphBatch> make_batches(std::span<const Graph> graphs, int batch_size,
                                     std::uint64_t seed, int num_tasks);
// Same, without shuffling (evaluation order).
std::vector<GraphBatch> make_ordered_batches(std::span<const Graph> graphs, int batch_size,
                                             int num_tasks);

}  // namespace imold
