#include "dgcount/meta_opt.hpp"

#include <cmath>
#include <ostream>

#include "dgcount/memory.hpp"
#include "dgcount/ops.hpp"
#include "dgcount/rng.hpp"

namespace dgcount::meta {

namespace {

enum SeedStream : std::uint64_t { kModelSeed = 1, kMemorySeed = 2, kDivisionSeed = 3, kSamplingSeed = 4 };

bool is_memory_param(const std::string& name) { return name.rfind("memory.", 0) == 0; }

}  // namespace

Gradients collect_grads(const model::Params& params) {
  Gradients g;
  for (const auto& [name, t] : params) {
    if (t.has_grad()) {
      g.values.emplace(name, std::vector<double>(t.grad().begin(), t.grad().end()));
      g.touched.insert(name);
    } else {
      g.values.emplace(name, std::vector<double>(t.numel(), 0.0));
    }
  }
  return g;
}

Gradients zeros_like(const model::Params& params) {
  Gradients g;
  for (const auto& [name, t] : params) g.values.emplace(name, std::vector<double>(t.numel(), 0.0));
  return g;
}

void zero_grads(model::Params& params) {
  // Drop the buffers entirely so `touched` reflects only the next backward.
  for (auto& [name, t] : params) {
    t.release_grad();
  }
}

OptimizerState make_optimizer(const OptimizerConfig& cfg, UpdateRule rule) {
  OptimizerState s;
  s.rule = rule;
  s.lr = cfg.outer_lr;
  s.beta1 = cfg.beta1;
  s.beta2 = cfg.beta2;
  s.eps = cfg.eps;
  return s;
}

model::Params inner_step(const model::Params& theta, const Gradients& grads, double alpha) {
  model::Params out;
  for (const auto& [name, t] : theta) {
    auto it = grads.values.find(name);
    if (it == grads.values.end()) throw ContractError("inner_step: no gradient for '" + name + "'");
    if (it->second.size() != t.numel()) throw ContractError("inner_step: gradient size mismatch for '" + name + "'");
    std::vector<double> data(t.data().begin(), t.data().end());
    for (std::size_t i = 0; i < data.size(); ++i) data[i] -= alpha * it->second[i];
    out.emplace(name, Tensor::from_data(t.shape(), std::move(data), true));
  }
  return out;
}

void meta_update(model::Params& theta, const Gradients& grads_mt, const Gradients& grads_me,
                 OptimizerState& state) {
  for (auto& [name, t] : theta) {
    auto a = grads_mt.values.find(name);
    auto b = grads_me.values.find(name);
    if (a == grads_mt.values.end() || b == grads_me.values.end()) {
      throw ContractError("meta_update: parameter '" + name + "' missing from a gradient set");
    }
    if (a->second.size() != t.numel() || b->second.size() != t.numel()) {
      throw ContractError("meta_update: gradient size mismatch for '" + name + "'");
    }
    if (is_memory_param(name) && !grads_mt.touched.count(name) && !grads_me.touched.count(name)) {
      continue;
    }
    auto theta_data = t.mutable_data();
    const std::size_t n = theta_data.size();
    if (state.rule == UpdateRule::kSgd) {
      for (std::size_t i = 0; i < n; ++i) theta_data[i] -= state.lr * (a->second[i] + b->second[i]);
      continue;
    }
    auto& m = state.m[name];
    auto& v = state.v[name];
    if (m.empty()) {
      m.assign(n, 0.0);
      v.assign(n, 0.0);
    }
    const long step = ++state.steps[name];
    const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(step));
    const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(step));
    for (std::size_t i = 0; i < n; ++i) {
      const double g = a->second[i] + b->second[i];
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g;
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g * g;
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      theta_data[i] -= state.lr * m_hat / (std::sqrt(v_hat) + state.eps);
    }
  }
}

SampleForward sample_forward(const synth::CrowdSample& sample, const model::Params& params,
                             const TrainConfig& cfg, int label) {
  const auto& flags = cfg.ablation;
  const bool use_memory = !flags.disable_memory;
  const bool use_ds = !flags.disable_ds_branch;
  SampleForward out;

  Tensor backbone = model::encode(sample.image, params, cfg.model);
  const std::size_t h = backbone.dim(1), w = backbone.dim(2);
  out.f = model::to_pixels(model::di_unit(backbone, params));
  out.f_tilde = use_memory
                    ? memory::reencode(out.f, memory::dicm_from(params), cfg.memory_temperature).features
                    : out.f;
  out.density = model::estimate_density(model::from_pixels(out.f_tilde, h, w), params);
  out.target = model::density_target(sample.density, cfg.model);
  out.parts.density = losses::density_loss(out.density, out.target);

  const bool use_rec = use_memory && !flags.disable_rec;
  if (use_rec) {
    losses::HardRegionSet hard;
    if (!flags.disable_hard_regions) {
      hard = losses::hard_regions(out.density, out.target, cfg.loss.hard_fraction);
    }
    out.parts.rec_di = losses::rec_loss(out.f, out.f_tilde, hard, cfg.loss.temperature, cfg.loss.symmetric_ce);
  }
  if (use_ds) {
    out.z = model::to_pixels(model::ds_unit(backbone, params));
    if (use_memory) {
      const auto dscm = memory::dscm_from(params);
      out.z_tilde = memory::reencode(out.z, memory::select_bank(dscm, label), cfg.memory_temperature).features;
    } else {
      out.z_tilde = out.z;
    }
    if (use_rec) {
      out.parts.rec_ds = losses::rec_loss(out.z, out.z_tilde, {}, cfg.loss.temperature, cfg.loss.symmetric_ce);
    }
    if (!flags.disable_orth) out.parts.orth = losses::orth_loss(out.f_tilde, out.z_tilde, out.f, out.z);
  }
  out.total = losses::total_loss(out.parts, cfg.loss);
  return out;
}

namespace {

struct StageResult {
  Tensor loss;
  losses::LossRecord record;
};

// Mean of the per-sample objectives; the record averages the components.
StageResult stage_loss(const std::vector<const synth::CrowdSample*>& samples,
                       const std::vector<int>& labels, const model::Params& params,
                       const TrainConfig& cfg) {
  StageResult r;
  Tensor acc;
  const double inv = 1.0 / static_cast<double>(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    auto fwd = sample_forward(*samples[i], params, cfg, labels[i]);
    acc = acc.defined() ? ops::add(acc, fwd.total) : fwd.total;
    const auto rec = losses::record_of(fwd.parts, fwd.total);
    r.record.density += rec.density * inv;
    r.record.rec_di += rec.rec_di * inv;
    r.record.rec_ds += rec.rec_ds * inv;
    r.record.orth += rec.orth * inv;
    r.record.total += rec.total * inv;
  }
  r.loss = samples.size() == 1 ? acc : ops::scale(acc, inv);
  return r;
}

}  // namespace

std::vector<SubIterationRecord> run_iteration(const std::vector<synth::CrowdSample>& batch,
                                              model::Params& params, OptimizerState& state,
                                              const TrainConfig& cfg, const Hooks& hooks) {
  const std::size_t k = cfg.k;
  if (batch.size() != k) {
    throw ContractError("run_iteration: batch has " + std::to_string(batch.size()) +
                        " samples for " + std::to_string(k) + " sub-domains");
  }
  std::vector<SubIterationRecord> records;
  for (std::size_t test = 0; test < k; ++test) {
    std::vector<const synth::CrowdSample*> mt;
    std::vector<int> mt_labels;
    for (std::size_t d = 0; d < k; ++d) {
      if (d == test && k > 1) continue;
      mt.push_back(&batch[d]);
      mt_labels.push_back(static_cast<int>(d));
    }

    zero_grads(params);
    auto stage1 = stage_loss(mt, mt_labels, params, cfg);
    backward(stage1.loss);
    Gradients g_mt = collect_grads(params);

    SubIterationRecord rec;
    rec.meta_test_domain = static_cast<int>(test);
    rec.meta_train = stage1.record;

    Gradients g_me;
    if (cfg.ablation.disable_meta) {
      g_me = zeros_like(params);
    } else {
      model::Params theta_prime = inner_step(params, g_mt, cfg.optim.inner_lr);
      auto stage2 = stage_loss({&batch[test]}, {static_cast<int>(test)}, theta_prime, cfg);
      backward(stage2.loss);
      rec.meta_test = stage2.record;
      g_me = hooks.zero_meta_test_grads ? zeros_like(params) : collect_grads(theta_prime);
    }
    if (hooks.on_gradients) hooks.on_gradients(g_mt, g_me);
    meta_update(params, g_mt, g_me, state);
    records.push_back(rec);
  }
  zero_grads(params);
  return records;
}

model::Params init_params(const TrainConfig& cfg) {
  auto params = model::init_model_params(cfg.model, Rng::derive(cfg.seed, kModelSeed));
  // Adam moves the bias ~lr per step, far too slowly to climb to the target level from zero.
  // Start at the mean target density implied by the head-count range instead.
  const double mean_heads = 0.5 * (cfg.data.min_heads + cfg.data.max_heads);
  const double prior = cfg.model.density_scale * mean_heads /
                       static_cast<double>(cfg.data.height * cfg.data.width);
  for (auto& v : params.at("est.b").mutable_data()) v = prior;
  auto [dicm, dscm] = memory::init_banks(cfg.memory_m, cfg.memory_n, cfg.model.feature_channels,
                                         cfg.k, Rng::derive(cfg.seed, kMemorySeed));
  memory::store_banks(params, dicm, dscm);
  return params;
}

subdomain::EmbeddingTap division_tap(const TrainConfig& cfg) {
  const auto& f = cfg.ablation;
  if (f.static_division || f.disable_ds_branch || f.disable_memory) return subdomain::EmbeddingTap::kBackbone;
  return subdomain::EmbeddingTap::kDsUnit;
}

TrainResult train(const TrainConfig& cfg, const std::vector<synth::CrowdSample>& train_set,
                  const Hooks& hooks, const TrainCallbacks& callbacks) {
  validate(cfg);
  TrainResult result;
  result.params = init_params(cfg);
  const auto tap = division_tap(cfg);
  const std::uint64_t division_seed = Rng::derive(cfg.seed, kDivisionSeed);

  result.assignments.push_back(
      subdomain::divide(train_set, result.params, cfg.model, cfg.k, division_seed, 0, nullptr, tap));
  if (callbacks.on_division) callbacks.on_division(result.assignments.back());

  OptimizerState state = make_optimizer(cfg.optim);
  Rng sampler(Rng::derive(cfg.seed, kSamplingSeed));

  for (int epoch = 0; epoch < cfg.optim.epochs; ++epoch) {
    const auto& assignment = result.assignments.back();
    std::vector<std::vector<std::size_t>> by_label(cfg.k);
    for (std::size_t i = 0; i < train_set.size(); ++i) {
      by_label[static_cast<std::size_t>(assignment.label_of(train_set[i].sample_id))].push_back(i);
    }
    for (std::size_t d = 0; d < cfg.k; ++d) {
      if (by_label[d].empty()) throw ContractError("train: sub-domain " + std::to_string(d) + " is empty");
    }
    for (int it = 0; it < cfg.optim.iterations; ++it) {
      std::vector<synth::CrowdSample> batch;
      batch.reserve(cfg.k);
      for (std::size_t d = 0; d < cfg.k; ++d) {
        const auto& pool = by_label[d];
        const auto& src = train_set[pool[sampler.below(pool.size())]];
        auto aug = synth::augment(src, cfg.crop, sampler.next_u64());
        aug.subdomain_label = static_cast<int>(d);
        batch.push_back(std::move(aug));
      }
      auto recs = run_iteration(batch, result.params, state, cfg, hooks);
      for (auto& r : recs) {
        r.epoch = epoch;
        r.iteration = it;
        result.log.push_back(r);
      }
    }
    if (callbacks.on_epoch_end) callbacks.on_epoch_end(epoch, result.params);
    if (!cfg.ablation.static_division) {
      auto next = subdomain::divide(train_set, result.params, cfg.model, cfg.k, division_seed,
                                    epoch + 1, &result.assignments.back(), tap);
      result.assignments.push_back(std::move(next));
      if (callbacks.on_division) callbacks.on_division(result.assignments.back());
    }
  }
  return result;
}

void write_log_csv(std::ostream& os, const std::vector<SubIterationRecord>& log) {
  os << "epoch,iter,meta_test_domain,mt_L_den,mt_L_rec_DI,mt_L_rec_DS,mt_L_orth,mt_total,"
        "me_L_den,me_L_rec_DI,me_L_rec_DS,me_L_orth,me_total\n";
  for (const auto& r : log) {
    const auto& a = r.meta_train;
    const auto& b = r.meta_test;
    os << r.epoch << ',' << r.iteration << ',' << r.meta_test_domain << ',' << a.density << ','
       << a.rec_di << ',' << a.rec_ds << ',' << a.orth << ',' << a.total << ',' << b.density << ','
       << b.rec_di << ',' << b.rec_ds << ',' << b.orth << ',' << b.total << '\n';
  }
}

}  // namespace dgcount::meta
