#pragma once

#include <optional>
#include <string>
#include <vector>

#include "dgcount/config.hpp"
#include "dgcount/meta_opt.hpp"
#include "dgcount/metrics.hpp"
#include "dgcount/synth.hpp"

// Orchestration shared by the command-line tool and the acceptance suite.
namespace dgcount::experiment {

struct Variant {
  std::string name;
  AblationFlags flags;
};

// full, w/o L_rec, w/o L_orth, w/o HRR, SSDD, baseline+MLDG, baseline
const std::vector<Variant>& ablation_variants();
// Throws ValidationError for an unknown name.
const Variant& find_variant(const std::string& name);
TrainConfig with_variant(TrainConfig cfg, const Variant& v);

// FNV-1a over ids, points and pixels of every split.
std::uint64_t dataset_hash(const synth::Dataset& ds);

struct RunOutcome {
  meta::TrainResult train;
  metrics::EvalReport seen;    // fresh images of the training styles
  metrics::EvalReport unseen;  // held-out styles
  // Pooled f~/z~ separation on the training set at initialisation and after
  // training; empty for variants without the DS branch.
  std::optional<metrics::Diagnostics> initial;
  std::optional<metrics::Diagnostics> final;
};

RunOutcome run(const TrainConfig& cfg, const synth::Dataset& data,
               const meta::TrainCallbacks& callbacks = {});

}  // namespace dgcount::experiment
