#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include <json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Run {
  int code;
  std::string out;
};

Run run_cli(const std::string& args, const fs::path& dir) {
  const fs::path out = dir / "stdout.txt";
  const std::string cmd = std::string("\"") + IMOLD_CLI_PATH + "\" " + args + " > \"" +
                          out.string() + "\" 2> \"" + (dir / "stderr.txt").string() + "\"";
  const int status = std::system(cmd.c_str());
  std::ifstream in(out);
  std::ostringstream os;
  os << in.rdbuf();
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, os.str()};
}

fs::path fresh_dir(const std::string& name) {
  fs::path p = fs::temp_directory_path() / ("imold_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

void write(const fs::path& p, const std::string& s) { std::ofstream(p) << s; }

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

}  // namespace

TEST_CASE("cli: generate, train, evaluate and export") {
  const fs::path dir = fresh_dir("flow");
  write(dir / "spec.json", R"({"n_train":24,"n_val":8,"n_test":8,"base_min":6,"base_max":8,"seed":3})");
  const std::string d = "\"" + dir.string() + "\"";
  Run gen = run_cli("gen-data --spec " + d + "/spec.json --out " + d + "/data.jsonl", dir);
  REQUIRE(gen.code == 0);

  write(dir / "run.json", R"({"dataset":"data.jsonl","hidden_dim":8,"codebook_size":8,
      "batch_size":8,"max_epochs":2,"seeds":[0]})");
  Run tr = run_cli("train --config " + d + "/run.json --out " + d + "/out", dir);
  REQUIRE(tr.code == 0);
  const json result = json::parse(slurp(dir / "out" / "result.json"));
  CHECK(result.at("metric") == "roc_auc");

  Run ev = run_cli("eval --checkpoint " + d + "/out/checkpoint_seed0.json --data " + d +
                       "/data.jsonl --split test",
                   dir);
  REQUIRE(ev.code == 0);
  const json report = json::parse(ev.out);
  CHECK(report.at("value").get<double>() ==
        result.at("seeds").at(0).at("test_metric_at_best_val").get<double>());

  Run ex = run_cli("export --checkpoint " + d + "/out/checkpoint_seed0.json --data " + d +
                       "/data.jsonl --out " + d + "/emb.jsonl",
                   dir);
  REQUIRE(ex.code == 0);
  std::istringstream lines(slurp(dir / "emb.jsonl"));
  std::string line;
  int n = 0;
  while (std::getline(lines, line)) ++n;
  CHECK(n == 40);
  fs::remove_all(dir);
}

TEST_CASE("cli: contract errors exit with 1") {
  const fs::path dir = fresh_dir("errors");
  const std::string d = "\"" + dir.string() + "\"";
  CHECK(run_cli("", dir).code == 1);
  CHECK(run_cli("frobnicate", dir).code == 1);
  CHECK(run_cli("eval --checkpoint " + d + "/none.json --data " + d + "/none.jsonl", dir).code == 1);

  write(dir / "bad_spec.json", R"({"n_trian":10})");
  CHECK(run_cli("gen-data --spec " + d + "/bad_spec.json --out " + d + "/x.jsonl", dir).code == 1);

  write(dir / "data.jsonl", R"({"id":"a","num_nodes":2,"node_types":[0,1],"edges":[[0,5]],"label":1})");
  write(dir / "run.json", R"({"dataset":"data.jsonl","max_epochs":1})");
  CHECK(run_cli("train --config " + d + "/run.json --out " + d + "/out", dir).code == 1);

  write(dir / "typo.json", R"({"dataset":"data.jsonl","max_epoch":1})");
  CHECK(run_cli("train --config " + d + "/typo.json --out " + d + "/out", dir).code == 1);
  fs::remove_all(dir);
}

TEST_CASE("cli: non-finite training loss exits with 2") {
  const fs::path dir = fresh_dir("numeric");
  const std::string d = "\"" + dir.string() + "\"";
  std::ostringstream data;
  const char* splits[] = {"train", "train", "train", "train", "val", "val", "test", "test"};
  for (int i = 0; i < 8; ++i) {
    data << R"({"id":"g)" << i << R"(","num_nodes":3,"node_types":[0,1,)" << i % 2
         << R"(],"edges":[[0,1],[1,2]],"label":)" << (i % 2 ? "1e300" : "-1e300")
         << R"(,"split":")" << splits[i] << "\"}\n";
  }
  write(dir / "data.jsonl", data.str());
  write(dir / "run.json", R"({"dataset":"data.jsonl","hidden_dim":4,"codebook_size":4,
      "batch_size":4,"max_epochs":1})");
  CHECK(run_cli("train --config " + d + "/run.json --out " + d + "/out", dir).code == 2);
  fs::remove_all(dir);
}

TEST_CASE("cli: gradcheck passes") {
  const fs::path dir = fresh_dir("gradcheck");
  Run r = run_cli("gradcheck --full", dir);
  CHECK(r.code == 0);
  CHECK(r.out.find("FAIL") == std::string::npos);
  fs::remove_all(dir);
}
