#include "imold/harness.hpp"

#include <cmath>
#include <fstream>
#include <random>
#include <set>
#include <sstream>

#include "imold/optim.hpp"

namespace imold {

using nlohmann::json;

namespace {

constexpr const char* kCheckpointFormat = "imold-checkpoint";
constexpr int kCheckpointVersion = 1;

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

json matrix_to_json(const Matrix& m) {
  std::vector<double> data;
  data.reserve(static_cast<std::size_t>(m.size()));
  for (Index i = 0; i < m.rows(); ++i) {
    for (Index j = 0; j < m.cols(); ++j) data.push_back(m(i, j));
  }
  return {{"shape", {m.rows(), m.cols()}}, {"data", data}};
}

Matrix matrix_from_json(const json& j, Index rows, Index cols, const std::string& name) {
  const auto shape = j.at("shape").get<std::vector<Index>>();
  if (shape.size() != 2 || shape[0] != rows || shape[1] != cols) {
    throw CheckpointError("parameter '" + name + "' has the wrong shape");
  }
  const auto data = j.at("data").get<std::vector<double>>();
  if (static_cast<Index>(data.size()) != rows * cols) {
    throw CheckpointError("parameter '" + name + "' has the wrong element count");
  }
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i) {
    for (Index k = 0; k < cols; ++k) m(i, k) = data[static_cast<std::size_t>(i * cols + k)];
  }
  if (!m.allFinite()) throw CheckpointError("parameter '" + name + "' is not finite");
  return m;
}

json ablation_to_json(const Ablation& a) {
  return {{"no_vq", a.no_vq}, {"no_r", a.no_r}, {"no_inv", a.no_inv}, {"no_reg", a.no_reg},
          {"no_cmt", a.no_cmt}};
}

Ablation ablation_from_json(const json& j) {
  Ablation a;
  auto set_flag = [&a](const std::string& name, bool on) {
    if (name == "no_vq") a.no_vq = on;
    else if (name == "no_r") a.no_r = on;
    else if (name == "no_inv") a.no_inv = on;
    else if (name == "no_reg") a.no_reg = on;
    else if (name == "no_cmt") a.no_cmt = on;
    else throw ValidationError("unknown ablation flag '" + name + "'");
  };
  if (j.is_array()) {
    for (const auto& f : j) set_flag(f.get<std::string>(), true);
  } else {
    for (const auto& [k, v] : j.items()) set_flag(k, v.get<bool>());
  }
  return a;
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

double sample_std(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size() - 1));
}

bool better(double candidate, double incumbent, bool higher) {
  return higher ? candidate > incumbent : candidate < incumbent;
}

}  // namespace

// ---- configuration ------------------------------------------------------------

void RunConfig::validate() const {
  model.validate();
  if (batch_size < 2) throw ValidationError("batch_size must be >= 2");
  if (!(lr > 0.0)) throw ValidationError("lr must be positive");
  if (max_epochs < 0) throw ValidationError("max_epochs must be >= 0");
  if (seeds.empty()) throw ValidationError("seeds must not be empty");
  static const std::set<std::string> metrics = {"auto", "accuracy", "roc_auc", "ap", "mae"};
  if (!metrics.contains(select_metric)) {
    throw ValidationError("unknown select_metric '" + select_metric + "'");
  }
}

RunConfig run_config_from_json(const json& j) {
  static const std::set<std::string> known = {
      "dataset",   "task",       "mode",          "ablation",   "lambda_inv", "lambda_reg",
      "lambda_cmt", "gamma",     "eta",           "codebook_size", "hidden_dim", "num_layers",
      "mlp_hidden", "node_type_count", "batch_size", "lr",      "max_epochs", "seeds",
      "select_metric"};
  if (!j.is_object()) throw ValidationError("config must be a JSON object");
  for (const auto& [k, _] : j.items()) {
    if (!known.contains(k)) throw ValidationError("unknown config key '" + k + "'");
  }
  RunConfig c;
  try {
    c.dataset = j.value("dataset", c.dataset);
    if (j.contains("task") && !j.at("task").is_null()) {
      c.task_override = parse_task_kind(j.at("task").get<std::string>());
    }
    if (j.contains("mode")) c.model.mode = parse_mode(j.at("mode").get<std::string>());
    if (j.contains("ablation")) c.model.ablation = ablation_from_json(j.at("ablation"));
    c.model.lambda_inv = j.value("lambda_inv", c.model.lambda_inv);
    c.model.lambda_reg = j.value("lambda_reg", c.model.lambda_reg);
    c.model.lambda_cmt = j.value("lambda_cmt", c.model.lambda_cmt);
    c.model.gamma = j.value("gamma", c.model.gamma);
    c.model.eta = j.value("eta", c.model.eta);
    c.model.codebook_size = j.value("codebook_size", c.model.codebook_size);
    c.model.gin.hidden_dim = j.value("hidden_dim", c.model.gin.hidden_dim);
    c.model.gin.num_layers = j.value("num_layers", c.model.gin.num_layers);
    c.model.gin.mlp_hidden = j.value("mlp_hidden", c.model.gin.mlp_hidden);
    // 0 = infer from the dataset.
    c.model.gin.node_type_count = j.value("node_type_count", 0);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.lr = j.value("lr", c.lr);
    c.max_epochs = j.value("max_epochs", c.max_epochs);
    if (j.contains("seeds")) c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    c.select_metric = j.value("select_metric", c.select_metric);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }
  if (c.batch_size < 2) throw ValidationError("batch_size must be >= 2");
  if (c.seeds.empty()) throw ValidationError("seeds must not be empty");
  return c;
}

json to_json(const RunConfig& c) {
  const ModelConfig& m = c.model;
  json j = {{"dataset", c.dataset},
            {"mode", to_string(m.mode)},
            {"ablation", ablation_to_json(m.ablation)},
            {"lambda_inv", m.lambda_inv},
            {"lambda_reg", m.lambda_reg},
            {"lambda_cmt", m.lambda_cmt},
            {"gamma", m.gamma},
            {"eta", m.eta},
            {"codebook_size", m.codebook_size},
            {"hidden_dim", m.gin.hidden_dim},
            {"num_layers", m.gin.num_layers},
            {"mlp_hidden", m.gin.mlp_hidden},
            {"node_type_count", m.gin.node_type_count},
            {"batch_size", c.batch_size},
            {"lr", c.lr},
            {"max_epochs", c.max_epochs},
            {"seeds", c.seeds},
            {"select_metric", c.select_metric}};
  j["task"] = c.task_override ? json(to_string(*c.task_override)) : json(nullptr);
  return j;
}

std::string resolve_metric(const std::string& select_metric, const TaskDescriptor& task) {
  if (select_metric == "auto") {
    switch (task.kind) {
      case TaskKind::binary: return "roc_auc";
      case TaskKind::multilabel: return "ap";
      case TaskKind::regression: return "mae";
    }
  }
  const bool classification = task.kind != TaskKind::regression;
  if ((select_metric == "accuracy" || select_metric == "roc_auc") &&
      task.kind != TaskKind::binary) {
    throw ValidationError(select_metric + " needs a binary task");
  }
  if (select_metric == "ap" && !classification) throw ValidationError("ap needs a classification task");
  if (select_metric == "mae" && classification) throw ValidationError("mae needs a regression task");
  return select_metric;
}

bool metric_higher_is_better(const std::string& metric) { return metric != "mae"; }

RunConfig bind_to_dataset(RunConfig config, const Dataset& data) {
  config.model.task = data.task;
  const int present = std::max(1, data.node_type_count());
  int& types = config.model.gin.node_type_count;
  if (types == 0) {
    types = present;
  } else if (present > types) {
    throw ValidationError("dataset uses node types beyond node_type_count " +
                          std::to_string(types));
  }
  config.validate();
  resolve_metric(config.select_metric, data.task);
  return config;
}

// ---- results --------------------------------------------------------------------

json to_json(const RunResult& r) {
  json seeds = json::array();
  for (const SeedResult& s : r.seeds) {
    json curve = json::array();
    for (const EpochRecord& e : s.curve) {
      curve.push_back({{"epoch", e.epoch},
                       {"pred", e.loss.pred},
                       {"inv", e.loss.inv},
                       {"reg", e.loss.reg},
                       {"cmt", e.loss.cmt},
                       {"total", e.loss.total},
                       {"val", e.val},
                       {"val_loss", e.val_loss},
                       {"test", e.test}});
    }
    seeds.push_back({{"seed", s.seed},
                     {"best_epoch", s.best_epoch},
                     {"best_val_metric", s.best_val_metric},
                     {"test_metric_at_best_val", s.test_metric_at_best_val},
                     {"train_metric_at_best_val", s.train_metric_at_best_val},
                     {"curve", curve}});
  }
  return {{"metric", r.metric},
          {"seeds", seeds},
          {"aggregate", {{"test_mean", r.test_mean}, {"test_std", r.test_std},
                         {"train_mean", r.train_mean}}}};
}

json to_json(const EvalReport& r) {
  json per_task = json::array();
  for (const auto& v : r.per_task) per_task.push_back(v ? json(*v) : json(nullptr));
  return {{"metric", r.metric}, {"value", r.value}, {"per_task", per_task},
          {"n_samples", r.n_samples}};
}

// ---- checkpoints ------------------------------------------------------------------

json checkpoint_to_json(const Checkpoint& c) {
  json params = json::object();
  c.state.for_each_param(
      [&params](const std::string& name, const Matrix& m) { params[name] = matrix_to_json(m); });
  const Codebook& b = c.state.codebook;
  json book = {{"codes", matrix_to_json(b.codes)},
               {"counts", std::vector<double>(b.counts.data(), b.counts.data() + b.counts.size())},
               {"sums", matrix_to_json(b.sums)},
               {"eta", b.eta},
               {"usage", b.usage},
               {"initialized", b.initialized}};
  return {{"format", kCheckpointFormat},
          {"version", kCheckpointVersion},
          {"config", to_json(c.config)},
          {"task", {{"kind", to_string(c.config.model.task.kind)},
                    {"num_tasks", c.config.model.task.num_tasks}}},
          {"seed", c.seed},
          {"epoch", c.epoch},
          {"rng", c.rng_state},
          {"params", params},
          {"codebook", book}};
}

Checkpoint checkpoint_from_json(const json& j) {
  try {
    if (!j.is_object() || j.value("format", std::string()) != kCheckpointFormat) {
      throw CheckpointError("not an imold checkpoint");
    }
    if (j.at("version").get<int>() != kCheckpointVersion) {
      throw CheckpointError("unsupported checkpoint version");
    }
    Checkpoint c;
    c.config = run_config_from_json(j.at("config"));
    c.config.model.task.kind = parse_task_kind(j.at("task").at("kind").get<std::string>());
    c.config.model.task.num_tasks = j.at("task").at("num_tasks").get<int>();
    c.config.validate();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.epoch = j.at("epoch").get<int>();
    c.rng_state = j.at("rng").get<std::string>();
    c.state = ModelState::init(c.config.model, 0);
    const json& params = j.at("params");
    std::size_t expected = 0;
    c.state.for_each_param([&](const std::string& name, Matrix& m) {
      ++expected;
      if (!params.contains(name)) throw CheckpointError("missing parameter '" + name + "'");
      m = matrix_from_json(params.at(name), m.rows(), m.cols(), name);
    });
    if (params.size() != expected) throw CheckpointError("unexpected extra parameters");

    const json& book = j.at("codebook");
    Codebook& b = c.state.codebook;
    b.codes = matrix_from_json(book.at("codes"), b.size(), b.dim(), "codebook.codes");
    b.sums = matrix_from_json(book.at("sums"), b.size(), b.dim(), "codebook.sums");
    const auto counts = book.at("counts").get<std::vector<double>>();
    if (static_cast<Index>(counts.size()) != b.size()) throw CheckpointError("codebook counts size");
    b.counts = Eigen::Map<const Vector>(counts.data(), b.size());
    b.eta = book.at("eta").get<double>();
    b.usage = book.at("usage").get<std::vector<std::int64_t>>();
    if (static_cast<Index>(b.usage.size()) != b.size()) throw CheckpointError("codebook usage size");
    b.initialized = book.at("initialized").get<bool>();
    return c;
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("malformed checkpoint: ") + e.what());
  } catch (const CheckpointError&) {
    throw;
  } catch (const Error& e) {
    throw CheckpointError(std::string("invalid checkpoint: ") + e.what());
  }
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot write " + path.string());
  out << checkpoint_to_json(c).dump() << '\n';
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw CheckpointError(std::string("corrupted checkpoint: ") + e.what());
  }
  return checkpoint_from_json(j);
}

// ---- evaluation -------------------------------------------------------------------

Predictions predict(const ModelState& state, const ModelConfig& model,
                    std::span<const Graph> graphs, int batch_size) {
  Predictions p;
  const int k = model.task.num_tasks;
  const Index n = static_cast<Index>(graphs.size());
  p.logits.resize(n, k);
  p.labels.resize(n, k);
  p.mask.resize(n, k);
  Index row = 0;
  for (const GraphBatch& b : make_ordered_batches(graphs, batch_size, k)) {
    ad::Tape tape;
    ad::ParamBinder bind(tape, false);
    ForwardPass f = forward(state, model, b, bind, 0, false);
    p.logits.middleRows(row, b.size()) = f.logits.value();
    p.labels.middleRows(row, b.size()) = b.labels;
    p.mask.middleRows(row, b.size()) = b.mask;
    row += b.size();
  }
  return p;
}

double prediction_loss(const Predictions& p, TaskKind kind) {
  const double n = p.mask.sum();
  if (n <= 0.0) throw ContractError("prediction_loss: no observed labels");
  const Matrix& x = p.logits;
  Matrix per;
  if (kind == TaskKind::regression) {
    per = (x - p.labels).array().square();
  } else {
    per = x.array().max(0.0) - x.array() * p.labels.array() + (-x.array().abs()).exp().log1p();
  }
  return per.cwiseProduct(p.mask).sum() / n;
}

EvalReport compute_metric(const std::string& metric, const Predictions& p) {
  EvalReport r;
  r.metric = metric;
  r.n_samples = p.logits.rows();
  if (metric == "accuracy") {
    r.value = accuracy(p.logits.col(0), p.labels.col(0));
  } else if (metric == "roc_auc") {
    r.value = roc_auc(p.logits.col(0), p.labels.col(0));
  } else if (metric == "ap") {
    ApResult ap = average_precision(p.logits, p.labels, p.mask);
    r.value = ap.mean;
    r.per_task = ap.per_task;
  } else if (metric == "mae") {
    r.value = mae(p.logits.col(0), p.labels.col(0));
  } else {
    throw ContractError("unknown metric '" + metric + "'");
  }
  return r;
}

namespace {

void check_compatible(const Checkpoint& ckpt, const Dataset& data) {
  if (!(ckpt.config.model.task == data.task)) {
    throw CheckpointError("checkpoint task " + to_string(ckpt.config.model.task.kind) + "(" +
                          std::to_string(ckpt.config.model.task.num_tasks) +
                          ") does not match dataset task " + to_string(data.task.kind) + "(" +
                          std::to_string(data.task.num_tasks) + ")");
  }
  if (data.node_type_count() > ckpt.config.model.gin.node_type_count) {
    throw CheckpointError("dataset node types exceed the checkpoint's embedding table");
  }
}

}  // namespace

std::vector<EvalReport> evaluate_all(const Checkpoint& ckpt, const Dataset& data, Split split) {
  check_compatible(ckpt, data);
  const auto graphs = data.subset(split);
  if (graphs.empty()) throw ContractError("split " + to_string(split) + " is empty");
  const Predictions p = predict(ckpt.state, ckpt.config.model, graphs, ckpt.config.batch_size);
  std::vector<std::string> names;
  switch (data.task.kind) {
    case TaskKind::binary: names = {"roc_auc", "accuracy", "ap"}; break;
    case TaskKind::multilabel: names = {"ap"}; break;
    case TaskKind::regression: names = {"mae"}; break;
  }
  std::vector<EvalReport> out;
  for (const auto& name : names) {
    try {
      out.push_back(compute_metric(name, p));
    } catch (const MetricError&) {
      // e.g. a single-class split; the metric is undefined there.
    }
  }
  return out;
}

EvalReport evaluate(const Checkpoint& ckpt, const Dataset& data, Split split) {
  check_compatible(ckpt, data);
  const auto graphs = data.subset(split);
  if (graphs.empty()) throw ContractError("split " + to_string(split) + " is empty");
  const Predictions p = predict(ckpt.state, ckpt.config.model, graphs, ckpt.config.batch_size);
  return compute_metric(resolve_metric(ckpt.config.select_metric, data.task), p);
}

void export_embeddings(const Checkpoint& ckpt, const Dataset& data, std::ostream& out) {
  check_compatible(ckpt, data);
  const int k = data.task.num_tasks;
  auto row_vec = [](const Matrix& m, Index i) {
    std::vector<double> v(static_cast<std::size_t>(m.cols()));
    for (Index c = 0; c < m.cols(); ++c) v[static_cast<std::size_t>(c)] = m(i, c);
    return v;
  };
  for (const GraphBatch& b : make_ordered_batches(data.graphs, ckpt.config.batch_size, k)) {
    ad::Tape tape;
    ad::ParamBinder bind(tape, false);
    ForwardPass f = forward(ckpt.state, ckpt.config.model, b, bind, 0, false);
    for (Index i = 0; i < b.size(); ++i) {
      const auto gi = static_cast<std::size_t>(i);
      json line = {{"id", b.ids[gi]},
                   {"split", to_string(b.splits[gi])},
                   {"env", b.envs[gi] ? json(*b.envs[gi]) : json(nullptr)},
                   {"z_inv", row_vec(f.z_inv.value(), i)},
                   {"z_spu", row_vec(f.z_spu.value(), i)},
                   {"z", row_vec(f.z.value(), i)}};
      out << line.dump() << '\n';
    }
  }
}

// ---- training -------------------------------------------------------------------------

SeedResult train_seed(const RunConfig& config, const Dataset& data, std::uint64_t seed,
                      Checkpoint* best, const TrainHooks& hooks) {
  const RunConfig c = bind_to_dataset(config, data);
  const ModelConfig& model = c.model;
  const std::string metric = resolve_metric(c.select_metric, data.task);
  const bool higher = metric_higher_is_better(metric);
  const int k = data.task.num_tasks;

  const auto train_graphs = data.subset(Split::train);
  const auto val_graphs = data.subset(Split::val);
  const auto test_graphs = data.subset(Split::test);
  if (train_graphs.size() < 2) throw ContractError("training split needs at least two graphs");
  if (val_graphs.empty()) throw ContractError("validation split is empty");
  if (test_graphs.empty()) throw ContractError("test split is empty");

  ModelState state = ModelState::init(model, seed);
  std::mt19937_64 rng(splitmix64(seed));
  Adam adam(AdamOptions{c.lr});
  const bool quantizes = model.vq_mode() != VqMode::no_vq;
  if (quantizes) {
    initialize_codebook(state, make_ordered_batches(train_graphs, c.batch_size, k).front());
  }

  SeedResult result;
  result.seed = seed;
  auto snapshot = [&](int epoch) {
    if (!best) return;
    best->config = c;
    best->state = state;
    best->seed = seed;
    best->epoch = epoch;
    std::ostringstream os;
    os << rng;
    best->rng_state = os.str();
  };
  ModelState best_state = state;
  bool have_best = false;
  double best_val_loss = 0.0;

  for (int epoch = 1; epoch <= c.max_epochs; ++epoch) {
    const auto batches = make_batches(train_graphs, c.batch_size, rng(), k);
    LossBreakdown sum;
    int steps = 0;
    for (std::size_t bi = 0; bi < batches.size(); ++bi) {
      const GraphBatch& batch = batches[bi];
      if (batch.size() < 2) continue;
      ad::Tape tape;
      ad::ParamBinder bind(tape, true);
      ForwardPass f = forward(state, model, batch, bind, rng(), true);
      const LossBreakdown lb = f.breakdown();
      if (!std::isfinite(lb.total)) {
        std::ostringstream os;
        os << "non-finite loss at seed " << seed << " epoch " << epoch << " batch " << bi
           << ": pred=" << lb.pred << " inv=" << lb.inv << " reg=" << lb.reg
           << " cmt=" << lb.cmt << " total=" << lb.total;
        throw NumericError(os.str());
      }
      tape.backward(f.total);
      adam.begin_step();
      state.for_each_param([&](const std::string& name, Matrix& p) {
        if (const Matrix* g = bind.grad(p)) {
          if (!g->allFinite()) throw NumericError("non-finite gradient for " + name);
          adam.update(name, p, *g);
        }
      });
      if (quantizes) ema_update(state.codebook, f.nodes.value(), f.assignments);
      sum.pred += lb.pred;
      sum.inv += lb.inv;
      sum.reg += lb.reg;
      sum.cmt += lb.cmt;
      sum.total += lb.total;
      ++steps;
    }
    EpochRecord rec;
    rec.epoch = epoch;
    if (steps > 0) {
      const double n = steps;
      rec.loss = {sum.pred / n, sum.inv / n, sum.reg / n, sum.cmt / n, sum.total / n};
    }
    const Predictions val_pred = predict(state, model, val_graphs, c.batch_size);
    rec.val = compute_metric(metric, val_pred).value;
    rec.val_loss = prediction_loss(val_pred, data.task.kind);
    rec.test = compute_metric(metric, predict(state, model, test_graphs, c.batch_size)).value;
    result.curve.push_back(rec);
    if (hooks.on_epoch) hooks.on_epoch(seed, rec);
    const bool tie = rec.val == result.best_val_metric && rec.val_loss < best_val_loss;
    if (!have_best || better(rec.val, result.best_val_metric, higher) || tie) {
      best_val_loss = rec.val_loss;
      have_best = true;
      result.best_epoch = epoch;
      result.best_val_metric = rec.val;
      result.test_metric_at_best_val = rec.test;
      best_state = state;
      snapshot(epoch);
    }
  }
  if (!have_best) {
    result.best_val_metric =
        compute_metric(metric, predict(state, model, val_graphs, c.batch_size)).value;
    result.test_metric_at_best_val =
        compute_metric(metric, predict(state, model, test_graphs, c.batch_size)).value;
    snapshot(0);
  }
  result.train_metric_at_best_val =
      compute_metric(metric, predict(best_state, model, train_graphs, c.batch_size)).value;
  return result;
}

RunResult train(const RunConfig& config, const Dataset& data,
                const std::optional<std::filesystem::path>& out_dir, const TrainHooks& hooks) {
  const RunConfig bound = bind_to_dataset(config, data);
  RunResult r;
  r.metric = resolve_metric(bound.select_metric, data.task);
  if (out_dir) std::filesystem::create_directories(*out_dir);
  std::vector<double> tests, trains;
  for (std::uint64_t seed : bound.seeds) {
    Checkpoint best;
    SeedResult s = train_seed(bound, data, seed, &best, hooks);
    if (out_dir) {
      save_checkpoint(*out_dir / ("checkpoint_seed" + std::to_string(seed) + ".json"), best);
    }
    tests.push_back(s.test_metric_at_best_val);
    trains.push_back(s.train_metric_at_best_val);
    r.seeds.push_back(std::move(s));
  }
  r.test_mean = mean_of(tests);
  r.test_std = sample_std(tests);
  r.train_mean = mean_of(trains);
  if (out_dir) {
    std::ofstream out(*out_dir / "result.json", std::ios::binary);
    if (!out) throw ValidationError("cannot write result.json");
    out << to_json(r).dump(2) << '\n';
  }
  return r;
}

}  // namespace imold
