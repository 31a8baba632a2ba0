#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "dgcount/checkpoint.hpp"
#include "dgcount/config.hpp"

namespace fs = std::filesystem;
using namespace dgcount;

namespace {

struct Result {
  int status = -1;
  std::string out;
};

Result run(const std::string& args) {
  const std::string cmd = std::string(DGCOUNT_CLI_PATH) + " " + args + " 2>&1";
  Result r;
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  char buf[4096];
  while (std::fgets(buf, sizeof buf, pipe)) r.out += buf;
  const int st = pclose(pipe);
  r.status = WIFEXITED(st) ? WEXITSTATUS(st) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

std::size_t lines(const fs::path& p) {
  std::ifstream is(p);
  std::size_t n = 0;
  for (std::string l; std::getline(is, l);) n += !l.empty();
  return n;
}

struct Workspace {
  fs::path root;
  fs::path config;
  Workspace() {
    root = fs::temp_directory_path() / ("dgcount_cli_" + std::to_string(::getpid()));
    fs::remove_all(root);
    fs::create_directories(root);
    TrainConfig c = desk_preset();
    c.data.height = c.data.width = 32;
    c.data.per_style = 4;
    c.data.test_per_style = 3;
    c.data.max_heads = 10;
    c.crop = 24;
    c.model.widths = {2, 3, 4};
    c.model.feature_channels = 4;
    c.memory_m = 5;
    c.memory_n = 3;
    c.optim.epochs = 2;
    c.optim.iterations = 2;
    c.output_dir = (root / "run").string();
    config = root / "tiny.json";
    std::ofstream(config) << to_json(c).dump(2);
  }
  ~Workspace() { fs::remove_all(root); }
};

}  // namespace

TEST_CASE("usage errors exit nonzero") {
  CHECK(run("").status != 0);
  CHECK(run("frobnicate").status != 0);
  CHECK(run("eval").status != 0);
  CHECK(run("--version").out.find(DGCOUNT_VERSION) != std::string::npos);
}

TEST_CASE("gradcheck passes and catches an injected fault") {
  auto ok = run("gradcheck --instances 2");
  CHECK(ok.status == 0);
  CHECK(ok.out.find("conv2d") != std::string::npos);
  CHECK(ok.out.find("full_objective") != std::string::npos);
  CHECK(ok.out.find("FAIL") == std::string::npos);

  auto bad = run("gradcheck --instances 2 --inject-fault matmul");
  CHECK(bad.status == 1);
  CHECK(bad.out.find("FAIL") != std::string::npos);
}

TEST_CASE("train writes a reproducible run directory") {
  Workspace ws;
  auto r = run("train -c " + ws.config.string());
  REQUIRE_MESSAGE(r.status == 0, r.out);
  const fs::path run_dir = ws.root / "run";
  for (const char* f : {"manifest.json", "final.ckpt", "losses.csv", "train_log.csv", "assignments.csv",
                        "report.json", "report.csv", "checkpoints/epoch_0000.ckpt", "checkpoints/epoch_0002.ckpt"})
    CHECK_MESSAGE(fs::exists(run_dir / f), f);
  // 2 epochs x 2 iterations x 3 sub-iterations, plus the header
  CHECK(lines(run_dir / "losses.csv") == 13);
  CHECK(slurp(run_dir / "losses.csv").rfind("step,L_den,L_rec_DI,L_rec_DS,L_orth,total", 0) == 0);
  auto manifest = nlohmann::json::parse(slurp(run_dir / "manifest.json"));
  CHECK(manifest.at("code_version") == DGCOUNT_VERSION);
  CHECK(manifest.contains("dataset_hash"));
  CHECK(load_checkpoint(run_dir / "final.ckpt").size() == load_checkpoint(run_dir / "checkpoints/epoch_0000.ckpt").size());

  // rerun from the manifest alone, into another directory
  auto again = run("train -c " + (run_dir / "manifest.json").string() + " -o " + (ws.root / "again").string());
  REQUIRE_MESSAGE(again.status == 0, again.out);
  CHECK(slurp(ws.root / "again" / "final.ckpt") == slurp(run_dir / "final.ckpt"));

  SUBCASE("eval and divide on the trained checkpoint") {
    auto e = run("eval -c " + ws.config.string() + " -k " + (run_dir / "final.ckpt").string() + " -o " +
                 (ws.root / "eval").string());
    REQUIRE_MESSAGE(e.status == 0, e.out);
    CHECK(lines(ws.root / "eval" / "eval.csv") == 3);
    CHECK(lines(ws.root / "eval" / "eval_images.csv") == 1 + 3 * 3 + 3);

    auto d = run("divide -c " + ws.config.string() + " -k " + (run_dir / "final.ckpt").string());
    CHECK(d.status == 0);
    CHECK(d.out.rfind("epoch,sample_id,label,agreement", 0) == 0);
  }

  SUBCASE("eval rejects a checkpoint of another shape") {
    TrainConfig other = config_from_json(nlohmann::json::parse(slurp(ws.config)));
    other.model.feature_channels = 6;
    const auto path = ws.root / "other.json";
    std::ofstream(path) << to_json(other).dump();
    auto e = run("eval -c " + path.string() + " -k " + (run_dir / "final.ckpt").string());
    CHECK(e.status == 2);
    CHECK(e.out.find("error") != std::string::npos);
  }
}

TEST_CASE("output root redirects relative output directories") {
  Workspace ws;
  TrainConfig c = config_from_json(nlohmann::json::parse(slurp(ws.config)));
  c.output_dir = "relative_run";
  c.optim.epochs = 1;
  const auto path = ws.root / "rel.json";
  std::ofstream(path) << to_json(c).dump();
  ::setenv("DGCOUNT_OUTPUT_ROOT", ws.root.c_str(), 1);
  auto r = run("train -c " + path.string());
  ::unsetenv("DGCOUNT_OUTPUT_ROOT");
  REQUIRE_MESSAGE(r.status == 0, r.out);
  CHECK(fs::exists(ws.root / "relative_run" / "final.ckpt"));
}

TEST_CASE("ablate and report") {
  Workspace ws;
  auto r = run("ablate -c " + ws.config.string() + " -s 1,2 -v full -v baseline -o " + (ws.root / "abl").string());
  REQUIRE_MESSAGE(r.status == 0, r.out);
  // 2 seeds x 2 variants x 2 domains
  CHECK(lines(ws.root / "abl" / "ablation.csv") == 9);
  CHECK(run("ablate -c " + ws.config.string() + " -v nonsense").status == 2);

  auto rep = run("report " + (ws.root / "abl" / "ablation.csv").string());
  CHECK(rep.status == 0);
  CHECK(rep.out.find("full,unseen,2,") != std::string::npos);
  CHECK(rep.out.find("baseline,seen,2,") != std::string::npos);
}

TEST_CASE("zero epochs writes only the manifest and the initial checkpoint") {
  Workspace ws;
  TrainConfig c = config_from_json(nlohmann::json::parse(slurp(ws.config)));
  c.optim.epochs = 0;
  const auto path = ws.root / "zero.json";
  std::ofstream(path) << to_json(c).dump();
  auto r = run("train -c " + path.string());
  REQUIRE_MESSAGE(r.status == 0, r.out);
  std::vector<std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(ws.root / "run"))
    if (e.is_regular_file()) files.push_back(fs::relative(e.path(), ws.root / "run").string());
  std::sort(files.begin(), files.end());
  CHECK(files == std::vector<std::string>{"checkpoints/epoch_0000.ckpt", "manifest.json"});
}

TEST_CASE("bad inputs give named errors") {
  Workspace ws;
  auto j = nlohmann::json::parse(slurp(ws.config));
  j["optim"]["learning_rate_typo"] = 1;
  const auto path = ws.root / "typo.json";
  std::ofstream(path) << j.dump();
  auto r = run("train -c " + path.string());
  CHECK(r.status == 2);
  CHECK(r.out.find("learning_rate_typo") != std::string::npos);
  CHECK_FALSE(fs::exists(ws.root / "run"));

  const auto junk = ws.root / "junk.ckpt";
  std::ofstream(junk) << "not a checkpoint";
  auto e = run("eval -c " + ws.config.string() + " -k " + junk.string());
  CHECK(e.status == 2);
  CHECK(e.out.find("error") != std::string::npos);
}

TEST_CASE("ablate runs all seven variants on one dataset") {
  Workspace ws;
  TrainConfig c = config_from_json(nlohmann::json::parse(slurp(ws.config)));
  c.optim.epochs = 1;
  c.optim.iterations = 1;
  const auto path = ws.root / "one.json";
  std::ofstream(path) << to_json(c).dump();
  auto r = run("ablate -c " + path.string() + " -s 4 -o " + (ws.root / "abl").string());
  REQUIRE_MESSAGE(r.status == 0, r.out);
  std::ifstream is(ws.root / "abl" / "ablation.csv");
  std::string line;
  std::getline(is, line);
  std::set<std::string> variants, hashes;
  while (std::getline(is, line)) {
    std::stringstream ss(line);
    std::string variant, seed, domain, mae, mse, hash;
    std::getline(ss, variant, ',');
    std::getline(ss, seed, ',');
    std::getline(ss, domain, ',');
    std::getline(ss, mae, ',');
    std::getline(ss, mse, ',');
    std::getline(ss, hash, ',');
    variants.insert(variant);
    hashes.insert(hash);
  }
  CHECK(variants == std::set<std::string>{"full", "wo_rec", "wo_orth", "wo_hrr", "ssdd", "baseline_mldg", "baseline"});
  CHECK(hashes.size() == 1);
}
