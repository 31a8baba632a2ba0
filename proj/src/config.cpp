#include "dgcount/config.hpp"

#include <fstream>
#include <set>

namespace dgcount {

using nlohmann::json;

TrainConfig desk_preset() { return TrainConfig{}; }

TrainConfig full_scale_preset() {
  TrainConfig c;
  c.data.height = 384;
  c.data.width = 384;
  c.crop = 320;
  c.model.widths = {64, 128, 256};
  c.model.feature_channels = 256;
  c.memory_m = 1024;
  c.memory_n = 256;
  c.optim.outer_lr = 1e-5;
  c.optim.epochs = 150;
  c.optim.iterations = 100;
  return c;
}

void validate(const TrainConfig& c) {
  auto fail = [](const std::string& field, const std::string& why) {
    throw ValidationError("config field '" + field + "': " + why);
  };
  if (c.data.n_styles < 2) fail("data.n_styles", "need at least 2 styles");
  if (c.data.per_style < 1) fail("data.per_style", "must be >= 1");
  if (c.data.test_per_style < 0) fail("data.test_per_style", "must be >= 0");
  std::set<int> held;
  for (int s : c.data.held_out_styles) {
    if (s < 0 || s >= c.data.n_styles) fail("data.held_out_styles", "style " + std::to_string(s) + " does not exist");
    if (!held.insert(s).second) fail("data.held_out_styles", "duplicate style " + std::to_string(s));
  }
  if (static_cast<int>(held.size()) >= c.data.n_styles) {
    fail("data.held_out_styles", "overlaps every training style");
  }
  if (c.data.min_heads < 0 || c.data.max_heads < c.data.min_heads) fail("data.min_heads", "bad head range");
  const std::size_t mult = c.model.input_multiple();
  if (c.data.height % mult || c.data.width % mult) fail("data.height", "must be divisible by " + std::to_string(mult));
  if (c.crop == 0 || c.crop % mult || c.crop > std::min(c.data.height, c.data.width)) {
    fail("data.crop", "must be a positive multiple of " + std::to_string(mult) + " within the image");
  }
  for (auto w : c.model.widths) {
    if (w == 0) fail("model.widths", "must be >= 1");
  }
  if (c.model.feature_channels == 0) fail("model.feature_channels", "must be >= 1");
  if (!(c.model.density_scale > 0.0)) fail("model.density_scale", "must be positive");
  if (c.memory_m < 1) fail("memory.m", "must be >= 1");
  if (c.memory_n < 1) fail("memory.n", "must be >= 1");
  if (!(c.memory_temperature > 0.0)) fail("memory.temperature", "must be positive");
  if (c.k < 1) fail("subdomains.k", "must be >= 1");
  const std::size_t n_train = static_cast<std::size_t>(c.data.n_styles - static_cast<int>(held.size())) *
                              static_cast<std::size_t>(c.data.per_style);
  if (c.k > n_train) fail("subdomains.k", "exceeds the number of training images");
  if (c.loss.lambda_rec < 0.0) fail("loss.lambda_rec", "must be nonnegative");
  if (c.loss.lambda_orth < 0.0) fail("loss.lambda_orth", "must be nonnegative");
  if (c.loss.hard_fraction < 0.0 || c.loss.hard_fraction > 1.0) fail("loss.hard_fraction", "must lie in [0, 1]");
  if (!(c.loss.temperature > 0.0)) fail("loss.temperature", "must be positive");
  if (c.optim.outer_lr < 0.0) fail("optim.outer_lr", "must be nonnegative");
  if (c.optim.inner_lr < 0.0) fail("optim.inner_lr", "must be nonnegative");
  if (c.optim.epochs < 0) fail("optim.epochs", "must be >= 0");
  if (c.optim.iterations < 1) fail("optim.iterations", "must be >= 1");
  if (!(c.optim.beta1 >= 0.0 && c.optim.beta1 < 1.0)) fail("optim.beta1", "must lie in [0, 1)");
  if (!(c.optim.beta2 >= 0.0 && c.optim.beta2 < 1.0)) fail("optim.beta2", "must lie in [0, 1)");
  if (!(c.optim.eps > 0.0)) fail("optim.eps", "must be positive");
}

json to_json(const TrainConfig& c) {
  const auto& a = c.ablation;
  return json{
      {"data",
       {{"n_styles", c.data.n_styles},
        {"per_style", c.data.per_style},
        {"test_per_style", c.data.test_per_style},
        {"held_out_styles", c.data.held_out_styles},
        {"height", c.data.height},
        {"width", c.data.width},
        {"min_heads", c.data.min_heads},
        {"max_heads", c.data.max_heads},
        {"seed", c.data.seed},
        {"crop", c.crop}}},
      {"model",
       {{"widths", c.model.widths},
        {"feature_channels", c.model.feature_channels},
        {"density_scale", c.model.density_scale}}},
      {"memory", {{"m", c.memory_m}, {"n", c.memory_n}, {"temperature", c.memory_temperature}}},
      {"subdomains", {{"k", c.k}}},
      {"loss",
       {{"lambda_rec", c.loss.lambda_rec},
        {"lambda_orth", c.loss.lambda_orth},
        {"hard_fraction", c.loss.hard_fraction},
        {"temperature", c.loss.temperature},
        {"symmetric_ce", c.loss.symmetric_ce}}},
      {"optim",
       {{"outer_lr", c.optim.outer_lr},
        {"inner_lr", c.optim.inner_lr},
        {"epochs", c.optim.epochs},
        {"iterations", c.optim.iterations},
        {"beta1", c.optim.beta1},
        {"beta2", c.optim.beta2},
        {"eps", c.optim.eps}}},
      {"seed", c.seed},
      {"ablation",
       {{"disable_rec", a.disable_rec},
        {"disable_orth", a.disable_orth},
        {"disable_hard_regions", a.disable_hard_regions},
        {"static_division", a.static_division},
        {"disable_meta", a.disable_meta},
        {"disable_ds_branch", a.disable_ds_branch},
        {"disable_memory", a.disable_memory}}},
      {"output_dir", c.output_dir},
  };
}

namespace {

// Reads keys of one JSON object, rejecting anything not explicitly consumed.
class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ValidationError("config section '" + name() + "' must be an object");
  }

  template <typename T>
  void read(const char* key, T& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      out = it->template get<T>();
    } catch (const json::exception&) {
      throw ValidationError("config field '" + qualified(key) + "' has the wrong type");
    }
  }

  Section sub(const char* key) {
    seen_.insert(key);
    static const json kEmpty = json::object();
    auto it = j_.find(key);
    return Section(it == j_.end() ? kEmpty : *it, qualified(key));
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) throw ValidationError("unknown config key '" + qualified(it.key()) + "'");
    }
  }

 private:
  std::string name() const { return path_.empty() ? "<root>" : path_; }
  std::string qualified(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

}  // namespace

TrainConfig config_from_json(const json& j) {
  TrainConfig c = desk_preset();
  Section root(j, "");
  {
    auto s = root.sub("data");
    s.read("n_styles", c.data.n_styles);
    s.read("per_style", c.data.per_style);
    s.read("test_per_style", c.data.test_per_style);
    s.read("held_out_styles", c.data.held_out_styles);
    s.read("height", c.data.height);
    s.read("width", c.data.width);
    s.read("min_heads", c.data.min_heads);
    s.read("max_heads", c.data.max_heads);
    s.read("seed", c.data.seed);
    s.read("crop", c.crop);
    s.finish();
  }
  {
    auto s = root.sub("model");
    s.read("widths", c.model.widths);
    s.read("feature_channels", c.model.feature_channels);
    s.read("density_scale", c.model.density_scale);
    s.finish();
  }
  {
    auto s = root.sub("memory");
    s.read("m", c.memory_m);
    s.read("n", c.memory_n);
    s.read("temperature", c.memory_temperature);
    s.finish();
  }
  {
    auto s = root.sub("subdomains");
    s.read("k", c.k);
    s.finish();
  }
  {
    auto s = root.sub("loss");
    s.read("lambda_rec", c.loss.lambda_rec);
    s.read("lambda_orth", c.loss.lambda_orth);
    s.read("hard_fraction", c.loss.hard_fraction);
    s.read("temperature", c.loss.temperature);
    s.read("symmetric_ce", c.loss.symmetric_ce);
    s.finish();
  }
  {
    auto s = root.sub("optim");
    s.read("outer_lr", c.optim.outer_lr);
    s.read("inner_lr", c.optim.inner_lr);
    s.read("epochs", c.optim.epochs);
    s.read("iterations", c.optim.iterations);
    s.read("beta1", c.optim.beta1);
    s.read("beta2", c.optim.beta2);
    s.read("eps", c.optim.eps);
    s.finish();
  }
  root.read("seed", c.seed);
  {
    auto s = root.sub("ablation");
    s.read("disable_rec", c.ablation.disable_rec);
    s.read("disable_orth", c.ablation.disable_orth);
    s.read("disable_hard_regions", c.ablation.disable_hard_regions);
    s.read("static_division", c.ablation.static_division);
    s.read("disable_meta", c.ablation.disable_meta);
    s.read("disable_ds_branch", c.ablation.disable_ds_branch);
    s.read("disable_memory", c.ablation.disable_memory);
    s.finish();
  }
  root.read("output_dir", c.output_dir);
  root.finish();
  validate(c);
  return c;
}

TrainConfig load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ValidationError("cannot read config " + path.string());
  json j;
  try {
    j = json::parse(is);
  } catch (const json::exception& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
  return config_from_json(j);
}

void save_config(const TrainConfig& cfg, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream(path) << to_json(cfg).dump(2) << '\n';
}

}  // namespace dgcount
