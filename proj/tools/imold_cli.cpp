// Command-line front end: data generation, training, evaluation, embedding
// export and gradient checks.
//
// Exit codes: 0 success, 1 validation / contract error, 2 numeric failure.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "imold/errors.hpp"
#include "imold/gradcheck.hpp"
#include "imold/harness.hpp"
#include "imold/synth.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace imold;

namespace {

json read_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

int cmd_gen_data(const fs::path& spec_path, const fs::path& out) {
  const SynthSpec spec = synth_spec_from_json(read_json(spec_path));
  const Dataset data = generate(spec);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  save_dataset(out, data.graphs);
  std::cout << json{{"graphs", data.graphs.size()},
                    {"train", data.split.train.size()},
                    {"val", data.split.val.size()},
                    {"test", data.split.test.size()},
                    {"shift_kind", to_string(spec.shift_kind)},
                    {"out", out.string()}}
                   .dump()
            << '\n';
  return 0;
}

int cmd_train(const fs::path& config_path, const fs::path& out_dir) {
  RunConfig config = run_config_from_json(read_json(config_path));
  if (config.dataset.empty()) throw ValidationError("config: dataset path is required");
  fs::path data_path = config.dataset;
  if (data_path.is_relative() && !fs::exists(data_path)) {
    data_path = config_path.parent_path() / data_path;
  }
  const Dataset data = load_dataset(data_path, config.task_override);
  config = bind_to_dataset(config, data);
  config.validate();

  TrainHooks hooks;
  hooks.on_epoch = [](std::uint64_t seed, const EpochRecord& e) {
    std::cerr << "seed " << seed << " epoch " << e.epoch << " loss " << e.loss.total
              << " (pred " << e.loss.pred << " inv " << e.loss.inv << " reg " << e.loss.reg
              << " cmt " << e.loss.cmt << ") val " << e.val << " test " << e.test << '\n';
  };
  const RunResult result = train(config, data, out_dir, hooks);
  for (const SeedResult& s : result.seeds) {
    std::cout << json{{"seed", s.seed},
                      {"metric", result.metric},
                      {"best_epoch", s.best_epoch},
                      {"best_val_metric", s.best_val_metric},
                      {"test_metric_at_best_val", s.test_metric_at_best_val}}
                     .dump()
              << '\n';
  }
  std::cout << json{{"metric", result.metric},
                    {"test_mean", result.test_mean},
                    {"test_std", result.test_std},
                    {"train_mean", result.train_mean}}
                   .dump()
            << '\n';
  return 0;
}

int cmd_eval(const fs::path& ckpt_path, const fs::path& data_path, const std::string& split) {
  const Checkpoint ckpt = load_checkpoint(ckpt_path);
  const Dataset data = load_dataset(data_path, ckpt.config.model.task.kind);
  const Split s = parse_split(split);
  const EvalReport main = evaluate(ckpt, data, s);
  json others = json::array();
  for (const EvalReport& r : evaluate_all(ckpt, data, s)) {
    if (r.metric != main.metric) others.push_back(to_json(r));
  }
  json out = to_json(main);
  out["split"] = split;
  out["other_metrics"] = others;
  std::cout << out.dump() << '\n';
  return 0;
}

int cmd_export(const fs::path& ckpt_path, const fs::path& data_path, const fs::path& out) {
  const Checkpoint ckpt = load_checkpoint(ckpt_path);
  const Dataset data = load_dataset(data_path, ckpt.config.model.task.kind);
  if (out.has_parent_path()) fs::create_directories(out.parent_path());
  std::ofstream os(out, std::ios::binary);
  if (!os) throw ValidationError("cannot write " + out.string());
  export_embeddings(ckpt, data, os);
  std::cout << json{{"lines", data.graphs.size()}, {"out", out.string()}}.dump() << '\n';
  return 0;
}

bool report(const std::string& suite, const std::vector<GradCheckEntry>& entries) {
  bool ok = true;
  for (const GradCheckEntry& e : entries) {
    std::cout << (e.passed() ? "ok   " : "FAIL ") << suite << ' ' << e.name
              << " max_rel_error=" << e.max_rel_error << " tol=" << e.tolerance << '\n';
    ok = ok && e.passed();
  }
  return ok;
}

int cmd_gradcheck(bool full) {
  bool ok = report("primitive", primitive_gradchecks());
  ok = report("model/imold", model_gradchecks(make_toy_model(11))) && ok;
  if (full) {
    ok = report("model/erm", model_gradchecks(make_toy_model(11, Mode::erm))) && ok;
    ok = report("model/erm_rvq", model_gradchecks(make_toy_model(11, Mode::erm_rvq))) && ok;
    const std::pair<const char*, Ablation> ablations[] = {
        {"no_vq", {.no_vq = true}},   {"no_r", {.no_r = true}},
        {"no_inv", {.no_inv = true}}, {"no_reg", {.no_reg = true}},
        {"no_cmt", {.no_cmt = true}},
    };
    for (const auto& [name, abl] : ablations) {
      ok = report(std::string("model/") + name,
                  model_gradchecks(make_toy_model(11, Mode::imold, abl))) && ok;
    }
    ok = report("model/multilabel",
                model_gradchecks(make_toy_model(11, Mode::imold, {}, {TaskKind::multilabel, 3}))) &&
         ok;
    ok = report("model/regression",
                model_gradchecks(make_toy_model(11, Mode::imold, {}, {TaskKind::regression, 1}))) &&
         ok;
  }
  std::cout << (ok ? "gradcheck passed" : "gradcheck FAILED") << '\n';
  return ok ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"imold: invariant molecular representation learning"};
  app.require_subcommand(1);

  fs::path spec_path, out_path, config_path, ckpt_path, data_path;
  std::string split = "test";
  bool full = false;

  auto* gen = app.add_subcommand("gen-data", "generate a synthetic OOD dataset");
  gen->add_option("--spec", spec_path, "generator config (JSON)")->required();
  gen->add_option("--out", out_path, "output JSONL path")->required();

  auto* tr = app.add_subcommand("train", "train every seed in a run config");
  tr->add_option("--config", config_path, "run config (JSON)")->required();
  tr->add_option("--out", out_path, "output directory")->required();

  auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on one split");
  ev->add_option("--checkpoint", ckpt_path)->required();
  ev->add_option("--data", data_path)->required();
  ev->add_option("--split", split)->check(CLI::IsMember({"train", "val", "test"}));

  auto* ex = app.add_subcommand("export", "write z_inv / z_spu / z per graph as JSONL");
  ex->add_option("--checkpoint", ckpt_path)->required();
  ex->add_option("--data", data_path)->required();
  ex->add_option("--out", out_path)->required();

  auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient checks");
  gc->add_flag("--full", full, "also check ERM, ablations, multilabel and regression");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*gen) return cmd_gen_data(spec_path, out_path);
    if (*tr) return cmd_train(config_path, out_path);
    if (*ev) return cmd_eval(ckpt_path, data_path, split);
    if (*ex) return cmd_export(ckpt_path, data_path, out_path);
    if (*gc) return cmd_gradcheck(full);
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return 2;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const json::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
