#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "imold/harness.hpp"
#include "imold/optim.hpp"
#include "imold/synth.hpp"

using namespace imold;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

Dataset tiny_dataset(std::uint64_t seed = 0) {
  SynthSpec spec;
  spec.n_train = 24;
  spec.n_val = 8;
  spec.n_test = 8;
  spec.base_min = 6;
  spec.base_max = 8;
  spec.seed = seed;
  return generate(spec);
}

RunConfig tiny_config() {
  RunConfig c;
  c.model.gin = GinConfig{2, 8, 0, 0};
  c.model.codebook_size = 8;
  c.batch_size = 8;
  c.max_epochs = 3;
  c.seeds = {0, 1};
  c.select_metric = "accuracy";
  return c;
}

fs::path temp_dir(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("imold_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

}  // namespace

TEST_CASE("adam update matches the closed form of the first steps") {
  Matrix p = Matrix::Constant(1, 1, 1.0);
  Matrix g = Matrix::Constant(1, 1, 0.5);
  Adam adam(AdamOptions{0.1});
  adam.begin_step();
  adam.update("p", p, g);
  // First step moves by lr * g / (|g| + eps') = lr (bias-corrected moments).
  CHECK(p(0, 0) == doctest::Approx(1.0 - 0.1 * 0.5 / (0.5 + 1e-8)).epsilon(1e-12));
  adam.begin_step();
  adam.update("p", p, g);
  CHECK(p(0, 0) == doctest::Approx(1.0 - 2 * 0.1 * 0.5 / (0.5 + 1e-8)).epsilon(1e-12));
}

TEST_CASE("run config parsing") {
  RunConfig c = run_config_from_json(json::parse(R"({"mode":"imold","ablation":["no_inv"],
      "lambda_inv":0.2,"codebook_size":10,"seeds":[3,4],"batch_size":16})"));
  CHECK(c.model.ablation.no_inv);
  CHECK(c.model.lambda_inv == 0.2);
  CHECK(c.seeds == std::vector<std::uint64_t>{3, 4});
  CHECK(run_config_from_json(to_json(c)).seeds == c.seeds);
  CHECK(to_json(run_config_from_json(to_json(c))) == to_json(c));
  CHECK_THROWS_AS(run_config_from_json(json::parse(R"({"lamda_inv":0.2})")), ValidationError);
  CHECK_THROWS_AS(run_config_from_json(json::parse(R"({"batch_size":1})")), ValidationError);
  CHECK_THROWS_AS(run_config_from_json(json::parse(R"({"mode":"magic"})")), ValidationError);
  CHECK_THROWS_AS(run_config_from_json(json::parse(R"({"lr":"fast"})")), ValidationError);
  RunConfig bad;
  bad.model.gamma = 1.5;
  CHECK_THROWS_AS(bad.validate(), ValidationError);
}

TEST_CASE("metric selection by task") {
  CHECK(resolve_metric("auto", {TaskKind::binary, 1}) == "roc_auc");
  CHECK(resolve_metric("auto", {TaskKind::multilabel, 3}) == "ap");
  CHECK(resolve_metric("auto", {TaskKind::regression, 1}) == "mae");
  CHECK(resolve_metric("accuracy", {TaskKind::binary, 1}) == "accuracy");
  CHECK_THROWS_AS(resolve_metric("mae", {TaskKind::binary, 1}), ValidationError);
  CHECK(!metric_higher_is_better("mae"));
  CHECK(metric_higher_is_better("roc_auc"));
}

TEST_CASE("same config and seed give byte-identical results and checkpoints") {
  const Dataset data = tiny_dataset();
  const RunConfig c = tiny_config();
  fs::path a = temp_dir("det_a"), b = temp_dir("det_b");
  train(c, data, a);
  train(c, data, b);
  for (const char* f : {"result.json", "checkpoint_seed0.json", "checkpoint_seed1.json"}) {
    CAPTURE(f);
    CHECK(slurp(a / f) == slurp(b / f));
  }
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST_CASE("the stored test metric is reproduced from the saved checkpoint") {
  const Dataset data = tiny_dataset(1);
  for (Mode mode : {Mode::imold, Mode::erm, Mode::erm_rvq}) {
    RunConfig c = tiny_config();
    c.model.mode = mode;
    c.select_metric = "auto";
    fs::path dir = temp_dir("eval");
    RunResult r = train(c, data, dir);
    for (const SeedResult& s : r.seeds) {
      Checkpoint ck = load_checkpoint(dir / ("checkpoint_seed" + std::to_string(s.seed) + ".json"));
      CHECK(ck.epoch == s.best_epoch);
      EvalReport test = evaluate(ck, data, Split::test);
      CHECK(test.metric == "roc_auc");
      CHECK(test.value == s.test_metric_at_best_val);
      CHECK(evaluate(ck, data, Split::val).value == s.best_val_metric);
      CHECK(evaluate(ck, data, Split::train).value == s.train_metric_at_best_val);
    }
    fs::remove_all(dir);
  }
}

TEST_CASE("loss curves satisfy the total identity") {
  const Dataset data = tiny_dataset(2);
  RunConfig c = tiny_config();
  c.seeds = {0};
  RunResult r = train(c, data);
  const ModelConfig& m = c.model;
  for (const EpochRecord& e : r.seeds[0].curve) {
    const double want =
        e.loss.pred + m.lambda_inv * e.loss.inv + m.lambda_reg * e.loss.reg + m.lambda_cmt * e.loss.cmt;
    CHECK(std::abs(e.loss.total - want) <= 1e-12 * std::max(1.0, std::abs(want)));
  }
}

TEST_CASE("checkpoint round trip and corruption") {
  const Dataset data = tiny_dataset(3);
  RunConfig c = tiny_config();
  c.seeds = {5};
  c.max_epochs = 1;
  Checkpoint best;
  train_seed(c, data, 5, &best);
  const json j = checkpoint_to_json(best);
  CHECK(checkpoint_to_json(checkpoint_from_json(j)) == j);

  json missing = j;
  missing.erase("params");
  CHECK_THROWS_AS(checkpoint_from_json(missing), CheckpointError);
  json wrong = j;
  wrong["format"] = "something-else";
  CHECK_THROWS_AS(checkpoint_from_json(wrong), CheckpointError);
  json shape = j;
  shape["params"]["classifier.w"]["shape"] = {3, 3};
  CHECK_THROWS_AS(checkpoint_from_json(shape), CheckpointError);

  fs::path dir = temp_dir("corrupt");
  std::ofstream(dir / "bad.json") << "{\"format\": \"imold-checkpoint\", \"vers";
  CHECK_THROWS_AS(load_checkpoint(dir / "bad.json"), CheckpointError);
  CHECK_THROWS_AS(load_checkpoint(dir / "absent.json"), CheckpointError);
  fs::remove_all(dir);
}

TEST_CASE("checkpoints refuse incompatible datasets") {
  const Dataset data = tiny_dataset(4);
  RunConfig c = tiny_config();
  c.max_epochs = 1;
  Checkpoint best;
  train_seed(c, data, 0, &best);

  Dataset regression = data;
  regression.task = {TaskKind::regression, 1};
  CHECK_THROWS_AS(evaluate(best, regression, Split::test), CheckpointError);

  Dataset wider = data;
  wider.graphs[0].node_types[0] = 40;
  CHECK_THROWS_AS(evaluate(best, wider, Split::test), CheckpointError);
}

TEST_CASE("embedding export") {
  const Dataset data = tiny_dataset(5);
  RunConfig c = tiny_config();
  c.max_epochs = 2;
  Checkpoint best;
  train_seed(c, data, 0, &best);
  std::ostringstream a, b;
  export_embeddings(best, data, a);
  export_embeddings(best, data, b);
  CHECK(a.str() == b.str());

  std::istringstream in(a.str());
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    json j = json::parse(line);
    CHECK(j.at("id") == data.graphs[n].id);
    CHECK(j.at("split") == to_string(data.graphs[n].split));
    CHECK(j.at("env") == *data.graphs[n].env);
    const auto zi = j.at("z_inv").get<std::vector<double>>();
    const auto zs = j.at("z_spu").get<std::vector<double>>();
    const auto z = j.at("z").get<std::vector<double>>();
    REQUIRE(zi.size() == 8);
    for (std::size_t k = 0; k < z.size(); ++k) CHECK(std::abs(zi[k] + zs[k] - z[k]) <= 1e-9);
    ++n;
  }
  CHECK(n == data.graphs.size());
}

TEST_CASE("regression and multilabel tasks train end to end") {
  SynthSpec spec;
  spec.n_train = 16;
  spec.n_val = 6;
  spec.n_test = 6;
  spec.base_min = 6;
  spec.base_max = 7;
  Dataset reg = generate(spec);
  std::mt19937_64 rng(1);
  for (Graph& g : reg.graphs) g.label = {std::uniform_real_distribution<double>(-2, 2)(rng)};
  reg.task = {TaskKind::regression, 1};
  RunConfig c = tiny_config();
  c.select_metric = "auto";
  c.seeds = {0};
  RunResult r = train(c, reg);
  CHECK(r.metric == "mae");
  CHECK(std::isfinite(r.test_mean));

  Dataset ml = generate(spec);
  for (std::size_t i = 0; i < ml.graphs.size(); ++i) {
    Graph& g = ml.graphs[i];
    g.label_is_array = true;
    const double y = *g.label[0];
    g.label = {y, i % 3 == 0 ? std::optional<double>() : std::optional<double>(1.0 - y)};
  }
  ml.task = {TaskKind::multilabel, 2};
  RunResult m = train(c, ml);
  CHECK(m.metric == "ap");
  CHECK(m.test_mean >= 0.0);
  CHECK(m.test_mean <= 1.0);
}

TEST_CASE("bind_to_dataset fills node types and rejects mismatches") {
  const Dataset data = tiny_dataset();
  RunConfig c = tiny_config();
  RunConfig bound = bind_to_dataset(c, data);
  CHECK(bound.model.gin.node_type_count == data.node_type_count());
  CHECK(bound.model.task == data.task);
  c.model.gin.node_type_count = 2;
  CHECK_THROWS_AS(bind_to_dataset(c, data), ValidationError);
}
