// dgcount: train, evaluate and inspect the memory/meta-learning crowd counter.

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <sstream>

#include "dgcount/checkpoint.hpp"
#include "dgcount/config.hpp"
#include "dgcount/dataset_io.hpp"
#include "dgcount/experiment.hpp"
#include "dgcount/gradcheck.hpp"
#include "dgcount/losses.hpp"
#include "dgcount/memory.hpp"
#include "dgcount/meta_opt.hpp"
#include "dgcount/metrics.hpp"
#include "dgcount/rng.hpp"
#include "dgcount/subdomain.hpp"
#include "dgcount/tensor.hpp"

namespace fs = std::filesystem;
using namespace dgcount;
using nlohmann::json;

namespace {

// Relative output paths land under $DGCOUNT_OUTPUT_ROOT when it is set.
fs::path output_path(const std::string& dir) {
  fs::path p(dir);
  if (const char* root = std::getenv("DGCOUNT_OUTPUT_ROOT"); root && *root && p.is_relative()) {
    return fs::path(root) / p;
  }
  return p;
}

// A run manifest is accepted wherever a config is.
TrainConfig read_config(const std::string& path) {
  if (path.empty()) return desk_preset();
  std::ifstream is(path);
  if (!is) throw ValidationError("cannot read config " + path);
  json j;
  try {
    j = json::parse(is);
  } catch (const json::exception& e) {
    throw ValidationError(path + ": " + e.what());
  }
  if (j.is_object() && j.contains("manifest_version")) return config_from_json(j.at("config"));
  return config_from_json(j);
}

std::ofstream open_out(const fs::path& p) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream os(p);
  if (!os) throw ValidationError("cannot write " + p.string());
  os << std::setprecision(17);
  return os;
}

std::string epoch_name(int epoch) {
  std::ostringstream os;
  os << "epoch_" << std::setw(4) << std::setfill('0') << epoch << ".ckpt";
  return os.str();
}

void write_manifest(const TrainConfig& cfg, const synth::Dataset& data, const fs::path& out) {
  json m{{"manifest_version", 1},
         {"code_version", DGCOUNT_VERSION},
         {"seed", cfg.seed},
         {"dataset_hash", experiment::dataset_hash(data)},
         {"config", to_json(cfg)}};
  open_out(out / "manifest.json") << m.dump(2) << '\n';
}

void print_errors(const std::string& label, const metrics::EvalReport& r) {
  std::cout << std::fixed << std::setprecision(4) << label << ' ' << r.domain << " MAE " << r.errors.mae
            << " MSE " << r.errors.mse << '\n';
  std::cout.unsetf(std::ios::fixed);
}

// ---- train ----

int cmd_train(const std::string& config_path, const std::string& out_override) {
  TrainConfig cfg = read_config(config_path);
  if (!out_override.empty()) cfg.output_dir = out_override;
  const fs::path out = output_path(cfg.output_dir);
  fs::create_directories(out / "checkpoints");
  const auto data = synth::make_dataset(cfg.data);
  write_manifest(cfg, data, out);
  save_checkpoint(meta::init_params(cfg), out / "checkpoints" / epoch_name(0));
  if (cfg.optim.epochs == 0) {
    std::cout << "epochs = 0: wrote manifest and initial checkpoint to " << out.string() << '\n';
    return 0;
  }

  meta::TrainCallbacks cb;
  cb.on_epoch_end = [&](int epoch, const model::Params& p) {
    save_checkpoint(p, out / "checkpoints" / epoch_name(epoch + 1));
    std::cerr << "epoch " << epoch + 1 << '/' << cfg.optim.epochs << '\n';
  };
  auto result = experiment::run(cfg, data, cb);
  save_checkpoint(result.train.params, out / "final.ckpt");

  {
    auto os = open_out(out / "train_log.csv");
    meta::write_log_csv(os, result.train.log);
  }
  {
    auto os = open_out(out / "losses.csv");
    losses::write_loss_csv_header(os);
    for (std::size_t i = 0; i < result.train.log.size(); ++i)
      losses::write_loss_csv_row(os, i, result.train.log[i].meta_train);
  }
  {
    auto os = open_out(out / "assignments.csv");
    subdomain::write_assignment_csv_header(os);
    for (const auto& a : result.train.assignments) subdomain::write_assignment_csv(os, a);
  }
  json report{{"seen", metrics::report_json(result.seen)}, {"unseen", metrics::report_json(result.unseen)}};
  if (result.final) {
    report["separation"] = {{"initial_mean_abs_cosine", result.initial->mean_abs_cosine},
                            {"final_mean_abs_cosine", result.final->mean_abs_cosine},
                            {"final_silhouette", result.final->silhouette}};
  }
  open_out(out / "report.json") << report.dump(2) << '\n';
  {
    auto os = open_out(out / "report.csv");
    metrics::write_report_csv(os, result.seen);
    metrics::write_report_csv(os, result.unseen, false);
  }
  if (!data.seen_test.empty()) print_errors("final", result.seen);
  if (!data.test.empty()) print_errors("final", result.unseen);
  std::cout << "wrote " << out.string() << '\n';
  return 0;
}

// ---- eval ----

int cmd_eval(const std::vector<std::string>& checkpoints, const std::string& config_path,
             const std::vector<std::string>& data_dirs, const std::string& out_dir) {
  const TrainConfig cfg = read_config(config_path);
  std::vector<std::pair<std::string, std::vector<synth::CrowdSample>>> splits;
  if (data_dirs.empty()) {
    auto data = synth::make_dataset(cfg.data);
    splits.emplace_back("seen", std::move(data.seen_test));
    splits.emplace_back("unseen", std::move(data.test));
  } else {
    for (const auto& d : data_dirs) splits.emplace_back(fs::path(d).filename().string(), synth::import_split(d));
  }

  std::ostringstream table;
  table << std::setprecision(17) << "checkpoint,domain,images,mae,mse\n";
  std::vector<metrics::EvalReport> reports;
  for (const auto& ck : checkpoints) {
    auto params = load_checkpoint(ck);
    model::validate_params(params, cfg.model);
    for (const auto& [name, samples] : splits) {
      if (samples.empty()) continue;
      auto r = metrics::evaluate(params, cfg, samples, name);
      table << ck << ',' << name << ',' << samples.size() << ',' << r.errors.mae << ',' << r.errors.mse << '\n';
      print_errors(ck, r);
      reports.push_back(std::move(r));
    }
  }
  if (!out_dir.empty()) {
    const fs::path out = output_path(out_dir);
    open_out(out / "eval.csv") << table.str();
    auto os = open_out(out / "eval_images.csv");
    for (std::size_t i = 0; i < reports.size(); ++i) metrics::write_report_csv(os, reports[i], i == 0);
  } else {
    std::cout << table.str();
  }
  return 0;
}

// ---- ablate ----

std::vector<std::uint64_t> parse_seeds(const std::string& s) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    if (!tok.empty()) out.push_back(std::stoull(tok));
  }
  return out;
}

int cmd_ablate(const std::string& config_path, const std::string& seeds_arg,
               const std::vector<std::string>& only, const std::string& out_override) {
  TrainConfig base = read_config(config_path);
  if (!out_override.empty()) base.output_dir = out_override;
  const fs::path out = output_path(base.output_dir);
  auto seeds = seeds_arg.empty() ? std::vector<std::uint64_t>{base.seed} : parse_seeds(seeds_arg);

  std::vector<experiment::Variant> variants;
  if (only.empty()) {
    variants = experiment::ablation_variants();
  } else {
    for (const auto& n : only) variants.push_back(experiment::find_variant(n));
  }

  auto os = open_out(out / "ablation.csv");
  os << "variant,seed,domain,mae,mse,dataset_hash,initial_cosine,final_cosine\n";
  for (auto seed : seeds) {
    TrainConfig cfg = base;
    cfg.seed = seed;
    cfg.data.seed = seed;
    const auto data = synth::make_dataset(cfg.data);
    const auto hash = experiment::dataset_hash(data);
    for (const auto& v : variants) {
      const TrainConfig vc = experiment::with_variant(cfg, v);
      auto r = experiment::run(vc, data);
      for (const auto* rep : {&r.seen, &r.unseen}) {
        if (rep->images.empty()) continue;
        os << v.name << ',' << seed << ',' << rep->domain << ',' << rep->errors.mae << ',' << rep->errors.mse
           << ',' << hash << ',';
        if (r.final) os << r.initial->mean_abs_cosine << ',' << r.final->mean_abs_cosine;
        else os << ',';
        os << '\n';
        print_errors(v.name + " seed " + std::to_string(seed), *rep);
      }
      os.flush();
    }
  }
  std::cout << "wrote " << (out / "ablation.csv").string() << '\n';
  return 0;
}

// ---- divide ----

int cmd_divide(const std::string& checkpoint, const std::string& config_path, int epoch,
               const std::string& out_file) {
  const TrainConfig cfg = read_config(config_path);
  auto params = load_checkpoint(checkpoint);
  model::validate_params(params, cfg.model);
  const auto data = synth::make_dataset(cfg.data);
  const auto a = subdomain::divide(data.train, params, cfg.model, cfg.k, dgcount::Rng::derive(cfg.seed, 3), epoch,
                                   nullptr, meta::division_tap(cfg));
  std::ostringstream csv;
  subdomain::write_assignment_csv_header(csv);
  subdomain::write_assignment_csv(csv, a);
  if (out_file.empty()) {
    std::cout << csv.str();
  } else {
    open_out(output_path(out_file)) << csv.str();
  }
  return 0;
}

// ---- gradcheck ----

int cmd_gradcheck(int instances, std::uint64_t seed, const std::string& fault) {
  if (!fault.empty()) testing::set_backward_fault(fault, 1.01);
  const auto results = gradcheck::run_all(instances, seed);
  bool ok = true;
  std::cout << std::left << std::setw(22) << "suite" << std::setw(11) << "instances" << std::setw(16)
            << "max_rel_error" << "status\n";
  for (const auto& r : results) {
    std::cout << std::setw(22) << r.name << std::setw(11) << r.instances << std::setw(16) << std::setprecision(4)
              << r.max_error << (r.passed ? "PASS" : "FAIL") << '\n';
    ok = ok && r.passed;
  }
  std::cout << (ok ? "all suites passed\n" : "gradient check FAILED\n");
  return ok ? 0 : 1;
}

// ---- report ----

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string tok;
  while (std::getline(ss, tok, ',')) out.push_back(tok);
  return out;
}

int cmd_report(const std::vector<std::string>& inputs, const std::string& out_file) {
  struct Acc {
    int n = 0;
    double mae = 0, mae2 = 0, mse = 0;
  };
  std::map<std::pair<std::string, std::string>, Acc> groups;
  for (const auto& path : inputs) {
    std::ifstream is(path);
    if (!is) throw ValidationError("cannot read " + path);
    std::string line;
    if (!std::getline(is, line)) continue;
    const auto header = split_csv(line);
    auto col = [&](const char* name) {
      for (std::size_t i = 0; i < header.size(); ++i)
        if (header[i] == name) return static_cast<int>(i);
      return -1;
    };
    int key = col("variant");
    if (key < 0) key = col("checkpoint");
    const int dom = col("domain"), mae = col("mae"), mse = col("mse");
    if (mae < 0 || mse < 0) throw ValidationError(path + ": needs mae and mse columns");
    while (std::getline(is, line)) {
      if (line.empty()) continue;
      const auto f = split_csv(line);
      const std::string k = key >= 0 ? f.at(key) : fs::path(path).stem().string();
      auto& a = groups[{k, dom >= 0 ? f.at(dom) : "all"}];
      const double e = std::stod(f.at(mae));
      ++a.n;
      a.mae += e;
      a.mae2 += e * e;
      a.mse += std::stod(f.at(mse));
    }
  }
  std::ostringstream os;
  os << std::setprecision(6) << "name,domain,runs,mae_mean,mae_std,mse_mean\n";
  for (const auto& [k, a] : groups) {
    const double m = a.mae / a.n;
    const double var = a.n > 1 ? std::max(0.0, (a.mae2 - a.n * m * m) / (a.n - 1)) : 0.0;
    os << k.first << ',' << k.second << ',' << a.n << ',' << m << ',' << std::sqrt(var) << ',' << a.mse / a.n
       << '\n';
  }
  if (out_file.empty()) {
    std::cout << os.str();
  } else {
    open_out(output_path(out_file)) << os.str();
  }
  return 0;
}

// ---- gen-data ----

int cmd_gen_data(const std::string& config_path, const std::string& out_dir) {
  const TrainConfig cfg = read_config(config_path);
  const fs::path out = output_path(out_dir);
  const auto data = synth::make_dataset(cfg.data);
  synth::export_split(data.train, out / "train");
  synth::export_split(data.seen_test, out / "seen");
  synth::export_split(data.test, out / "unseen");
  std::cout << "wrote " << data.train.size() << " train, " << data.seen_test.size() << " seen, "
            << data.test.size() << " unseen samples to " << out.string() << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Domain-general crowd counting with memory disentanglement and meta-learning"};
  app.require_subcommand(1);
  app.set_version_flag("--version", DGCOUNT_VERSION);

  std::string config, out, seeds, checkpoint, fault;
  std::vector<std::string> checkpoints, data_dirs, variants, inputs;
  int epoch = 0, instances = 20;
  std::uint64_t gc_seed = 2024;

  auto* train = app.add_subcommand("train", "Train one model and write checkpoints, logs and a report");
  train->add_option("-c,--config", config, "JSON config or run manifest (default: desk preset)");
  train->add_option("-o,--out", out, "Output directory (overrides output_dir)");

  auto* eval = app.add_subcommand("eval", "Evaluate checkpoints on each domain split");
  eval->add_option("-k,--checkpoint", checkpoints, "Checkpoint file(s)")->required();
  eval->add_option("-c,--config", config, "Config matching the checkpoint shapes");
  eval->add_option("-d,--data", data_dirs, "Split directories written by gen-data");
  eval->add_option("-o,--out", out, "Write eval.csv and eval_images.csv here");

  auto* ablate = app.add_subcommand("ablate", "Run the ablation variants over shared seeds");
  ablate->add_option("-c,--config", config, "Base config");
  ablate->add_option("-s,--seeds", seeds, "Comma-separated seeds (default: the config seed)");
  ablate->add_option("-v,--variant", variants, "Restrict to these variants");
  ablate->add_option("-o,--out", out, "Output directory");

  auto* divide = app.add_subcommand("divide", "Dump the sub-domain assignment for a checkpoint");
  divide->add_option("-k,--checkpoint", checkpoint, "Checkpoint file")->required();
  divide->add_option("-c,--config", config, "Config");
  divide->add_option("-e,--epoch", epoch, "Epoch index used for the clustering seed");
  divide->add_option("-o,--out", out, "CSV file (default: stdout)");

  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference check of every op and the full objective");
  gradcheck->add_option("-n,--instances", instances, "Random instances per suite")->check(CLI::PositiveNumber);
  gradcheck->add_option("--seed", gc_seed, "Seed for the random instances");
  gradcheck->add_option("--inject-fault", fault, "Scale the upstream gradient of this op by 1.01");

  auto* report = app.add_subcommand("report", "Merge result CSVs into a summary table");
  report->add_option("inputs", inputs, "ablation.csv or eval.csv files")->required();
  report->add_option("-o,--out", out, "CSV file (default: stdout)");

  auto* gen = app.add_subcommand("gen-data", "Export the synthetic dataset as image/point files");
  gen->add_option("-c,--config", config, "Config");
  gen->add_option("-o,--out", out, "Output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) return cmd_train(config, out);
    if (*eval) return cmd_eval(checkpoints, config, data_dirs, out);
    if (*ablate) return cmd_ablate(config, seeds, variants, out);
    if (*divide) return cmd_divide(checkpoint, config, epoch, out);
    if (*gradcheck) return cmd_gradcheck(instances, gc_seed, fault);
    if (*report) return cmd_report(inputs, out);
    if (*gen) return cmd_gen_data(config, out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
