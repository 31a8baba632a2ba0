#pragma once

#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "dgcount/config.hpp"
#include "dgcount/losses.hpp"
#include "dgcount/model.hpp"
#include "dgcount/subdomain.hpp"
#include "dgcount/synth.hpp"

namespace dgcount::meta {

// Gradient snapshot aligned by parameter name. `touched` lists parameters
// that took part in the graph; memory sets outside it are left alone by the
// update, so only the selected DSCM set moves.
struct Gradients {
  std::map<std::string, std::vector<double>> values;
  std::set<std::string> touched;
};

Gradients collect_grads(const model::Params& params);
Gradients zeros_like(const model::Params& params);
void zero_grads(model::Params& params);

enum class UpdateRule { kAdam, kSgd };

struct OptimizerState {
  UpdateRule rule = UpdateRule::kAdam;
  double lr = 1e-3;  // gamma
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::map<std::string, long> steps;  // per parameter, lazy for untouched banks
  std::map<std::string, std::vector<double>> m;
  std::map<std::string, std::vector<double>> v;
};

OptimizerState make_optimizer(const OptimizerConfig& cfg, UpdateRule rule = UpdateRule::kAdam);

// theta' = theta - alpha * grad, as fresh leaves detached from theta.
model::Params inner_step(const model::Params& theta, const Gradients& grads, double alpha);

// One optimizer step on theta with grads_mt + grads_me.
void meta_update(model::Params& theta, const Gradients& grads_mt, const Gradients& grads_me,
                 OptimizerState& state);

// Everything one forward pass of a training sample produces.
struct SampleForward {
  losses::LossParts parts;
  Tensor total;
  Tensor f, z, f_tilde, z_tilde;  // pixel matrices; z/z~ undefined without the DS branch
  Tensor density, target;
};

// Full objective for one (augmented) sample routed through sub-domain bank
// `label`.
SampleForward sample_forward(const synth::CrowdSample& sample, const model::Params& params,
                             const TrainConfig& cfg, int label);

struct SubIterationRecord {
  int epoch = 0;
  int iteration = 0;
  int meta_test_domain = 0;
  losses::LossRecord meta_train;
  losses::LossRecord meta_test;
};

struct Hooks {
  // Replace the meta-test gradients by zeros (used to check that the update
  // reduces to plain training on the meta-train loss).
  bool zero_meta_test_grads = false;
  // Called after each sub-iteration's backward passes, before the update.
  std::function<void(const Gradients& mt, const Gradients& me)> on_gradients;
};

// batch[k] is the sample drawn from sub-domain k. Cycles the meta-test role
// over all K entries, one update each. K = 1 uses the single sample for both
// stages.
std::vector<SubIterationRecord> run_iteration(const std::vector<synth::CrowdSample>& batch,
                                              model::Params& params, OptimizerState& state,
                                              const TrainConfig& cfg, const Hooks& hooks = {});

struct TrainResult {
  model::Params params;
  std::vector<SubIterationRecord> log;
  std::vector<subdomain::SubdomainAssignment> assignments;  // initial, then one per refresh
  const subdomain::SubdomainAssignment& final_assignment() const { return assignments.back(); }
};

model::Params init_params(const TrainConfig& cfg);

subdomain::EmbeddingTap division_tap(const TrainConfig& cfg);

struct TrainCallbacks {
  std::function<void(int epoch, const model::Params&)> on_epoch_end;
  std::function<void(const subdomain::SubdomainAssignment&)> on_division;
};

TrainResult train(const TrainConfig& cfg, const std::vector<synth::CrowdSample>& train_set,
                  const Hooks& hooks = {}, const TrainCallbacks& callbacks = {});

void write_log_csv(std::ostream& os, const std::vector<SubIterationRecord>& log);

}  // namespace dgcount::meta
