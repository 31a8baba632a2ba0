#include "dgcount/experiment.hpp"

#include <cstring>

namespace dgcount::experiment {

const std::vector<Variant>& ablation_variants() {
  static const std::vector<Variant> kVariants = [] {
    std::vector<Variant> v;
    v.push_back({"full", {}});
    AblationFlags f;
    f.disable_rec = true;
    v.push_back({"wo_rec", f});
    f = {};
    f.disable_orth = true;
    v.push_back({"wo_orth", f});
    f = {};
    f.disable_hard_regions = true;
    v.push_back({"wo_hrr", f});
    f = {};
    f.static_division = true;
    v.push_back({"ssdd", f});
    f = {};
    f.disable_memory = true;
    f.disable_ds_branch = true;
    v.push_back({"baseline_mldg", f});
    f.disable_meta = true;
    v.push_back({"baseline", f});
    return v;
  }();
  return kVariants;
}

const Variant& find_variant(const std::string& name) {
  for (const auto& v : ablation_variants())
    if (v.name == name) return v;
  throw ValidationError("unknown variant '" + name + "'");
}

TrainConfig with_variant(TrainConfig cfg, const Variant& v) {
  cfg.ablation = v.flags;
  return cfg;
}

namespace {

struct Fnv {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 0x100000001b3ULL;
    }
  }
  template <typename T>
  void value(const T& v) {
    bytes(&v, sizeof v);
  }
};

void hash_split(Fnv& f, const std::vector<synth::CrowdSample>& split) {
  f.value(split.size());
  for (const auto& s : split) {
    f.value(s.sample_id);
    f.value(s.style_id);
    for (const auto& p : s.points) {
      f.value(p.row);
      f.value(p.col);
    }
    const auto d = s.image.data();
    f.bytes(d.data(), d.size() * sizeof(double));
  }
}

}  // namespace

std::uint64_t dataset_hash(const synth::Dataset& ds) {
  Fnv f;
  hash_split(f, ds.train);
  hash_split(f, ds.seen_test);
  hash_split(f, ds.test);
  return f.h;
}

RunOutcome run(const TrainConfig& cfg, const synth::Dataset& data, const meta::TrainCallbacks& callbacks) {
  RunOutcome out;
  out.train = meta::train(cfg, data.train, {}, callbacks);
  if (!cfg.ablation.disable_ds_branch) {
    out.initial = metrics::separation_diagnostics(meta::init_params(cfg), cfg, data.train,
                                                  out.train.assignments.front());
    out.final = metrics::separation_diagnostics(out.train.params, cfg, data.train,
                                                out.train.final_assignment());
  }
  out.seen = metrics::evaluate(out.train.params, cfg, data.seen_test, "seen");
  out.unseen = metrics::evaluate(out.train.params, cfg, data.test, "unseen");
  return out;
}

}  // namespace dgcount::experiment
