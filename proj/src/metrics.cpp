#include "dgcount/metrics.hpp"

#include <cmath>
#include <limits>
#include <map>

#include <Eigen/Dense>

#include "dgcount/memory.hpp"

namespace dgcount::metrics {

CountErrors mae_mse(const std::vector<double>& predicted, const std::vector<double>& truth) {
  if (predicted.size() != truth.size()) throw ContractError("mae_mse: length mismatch");
  if (predicted.empty()) throw ContractError("mae_mse: empty input");
  double abs_sum = 0.0, sq_sum = 0.0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const double d = predicted[i] - truth[i];
    abs_sum += std::abs(d);
    sq_sum += d * d;
  }
  const double n = static_cast<double>(predicted.size());
  return {abs_sum / n, std::sqrt(sq_sum / n)};
}

EvalReport evaluate(const model::Params& params, const TrainConfig& cfg,
                    const std::vector<synth::CrowdSample>& samples, const std::string& domain) {
  EvalReport report;
  report.domain = domain;
  report.images.resize(samples.size());
  const bool use_memory = !cfg.ablation.disable_memory;
  Tensor dicm;
  if (use_memory) dicm = memory::dicm_from(params).vectors;
#pragma omp parallel for schedule(dynamic)
  for (long long i = 0; i < static_cast<long long>(samples.size()); ++i) {
    const auto& s = samples[static_cast<std::size_t>(i)];
    const double pred = use_memory
                            ? model::infer(s.image, params, dicm, cfg.model, cfg.memory_temperature)
                            : model::infer_without_memory(s.image, params, cfg.model);
    report.images[static_cast<std::size_t>(i)] = {s.sample_id, pred, static_cast<double>(s.points.size())};
  }
  if (!samples.empty()) {
    std::vector<double> p, t;
    for (const auto& r : report.images) {
      p.push_back(r.predicted);
      t.push_back(r.truth);
    }
    report.errors = mae_mse(p, t);
  }
  return report;
}

namespace {

double dist(const subdomain::Vector& a, const subdomain::Vector& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

subdomain::Vector pool_pixels(const Tensor& pixels) {
  const std::size_t n = pixels.dim(0), c = pixels.dim(1);
  subdomain::Vector v(c, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < c; ++j) v[j] += pixels[i * c + j];
  for (auto& x : v) x /= static_cast<double>(n);
  return v;
}

}  // namespace

double silhouette(const std::vector<subdomain::Vector>& points, const std::vector<int>& labels) {
  if (points.size() != labels.size()) throw ContractError("silhouette: length mismatch");
  std::map<int, std::vector<std::size_t>> clusters;
  for (std::size_t i = 0; i < labels.size(); ++i) clusters[labels[i]].push_back(i);
  if (clusters.size() < 2) return 0.0;
  double total = 0.0;
  std::size_t counted = 0;
  for (const auto& [label, members] : clusters) {
    if (members.size() < 2) continue;
    for (auto i : members) {
      double a = 0.0;
      for (auto j : members)
        if (j != i) a += dist(points[i], points[j]);
      a /= static_cast<double>(members.size() - 1);
      double b = std::numeric_limits<double>::infinity();
      for (const auto& [other, others] : clusters) {
        if (other == label) continue;
        double d = 0.0;
        for (auto j : others) d += dist(points[i], points[j]);
        b = std::min(b, d / static_cast<double>(others.size()));
      }
      const double denom = std::max(a, b);
      total += denom > 0.0 ? (b - a) / denom : 0.0;
      ++counted;
    }
  }
  return counted ? total / static_cast<double>(counted) : 0.0;
}

double cosine(const subdomain::Vector& a, const subdomain::Vector& b) {
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  const double denom = std::sqrt(aa) * std::sqrt(bb);
  return denom > 0.0 ? ab / denom : 0.0;
}

PooledFeatures pooled_features(const model::Params& params, const TrainConfig& cfg,
                               const std::vector<synth::CrowdSample>& samples,
                               const subdomain::SubdomainAssignment& assignment) {
  if (cfg.ablation.disable_ds_branch) throw ContractError("pooled_features: model has no DS branch");
  const bool use_memory = !cfg.ablation.disable_memory;
  PooledFeatures out;
  out.f_tilde.resize(samples.size());
  out.z_tilde.resize(samples.size());
  out.labels.resize(samples.size());
  out.sample_ids.resize(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    out.labels[i] = assignment.label_of(samples[i].sample_id);
    out.sample_ids[i] = samples[i].sample_id;
  }
  memory::MemoryBank dicm;
  memory::DomainSpecificMemory dscm;
  if (use_memory) {
    dicm = memory::dicm_from(params);
    dscm = memory::dscm_from(params);
  }
#pragma omp parallel for schedule(dynamic)
  for (long long ii = 0; ii < static_cast<long long>(samples.size()); ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    NoGradGuard guard;
    Tensor backbone = model::encode(samples[i].image, params, cfg.model);
    Tensor f = model::to_pixels(model::di_unit(backbone, params));
    Tensor z = model::to_pixels(model::ds_unit(backbone, params));
    if (use_memory) {
      f = memory::reencode(f, dicm, cfg.memory_temperature).features;
      z = memory::reencode(z, memory::select_bank(dscm, out.labels[i]), cfg.memory_temperature).features;
    }
    out.f_tilde[i] = pool_pixels(f);
    out.z_tilde[i] = pool_pixels(z);
  }
  return out;
}

std::optional<Diagnostics> separation_diagnostics(const model::Params& params, const TrainConfig& cfg,
                                                  const std::vector<synth::CrowdSample>& samples,
                                                  const subdomain::SubdomainAssignment& assignment) {
  if (cfg.ablation.disable_ds_branch || samples.empty()) return std::nullopt;
  const auto pooled = pooled_features(params, cfg, samples, assignment);
  Diagnostics d;
  d.silhouette = silhouette(pooled.z_tilde, pooled.labels);
  double acc = 0.0;
  for (std::size_t i = 0; i < samples.size(); ++i) acc += std::abs(cosine(pooled.f_tilde[i], pooled.z_tilde[i]));
  d.mean_abs_cosine = acc / static_cast<double>(samples.size());
  return d;
}

std::vector<std::pair<double, double>> pca_2d(const std::vector<subdomain::Vector>& points) {
  if (points.empty()) return {};
  const Eigen::Index n = static_cast<Eigen::Index>(points.size());
  const Eigen::Index d = static_cast<Eigen::Index>(points.front().size());
  Eigen::MatrixXd x(n, d);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < d; ++j) x(i, j) = points[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
  x.rowwise() -= x.colwise().mean();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(x.transpose() * x);
  // Eigenvalues ascend; the last columns are the leading components.
  const Eigen::VectorXd pc1 = eig.eigenvectors().col(d - 1);
  const Eigen::VectorXd pc2 = d > 1 ? Eigen::VectorXd(eig.eigenvectors().col(d - 2)) : Eigen::VectorXd::Zero(d);
  std::vector<std::pair<double, double>> out;
  for (Eigen::Index i = 0; i < n; ++i) out.emplace_back(x.row(i).dot(pc1), x.row(i).dot(pc2));
  return out;
}

nlohmann::json report_json(const EvalReport& report) {
  nlohmann::json images = nlohmann::json::array();
  for (const auto& r : report.images) {
    images.push_back({{"sample_id", r.sample_id}, {"predicted", r.predicted}, {"truth", r.truth}});
  }
  nlohmann::json j{{"domain", report.domain},
                   {"mae", report.errors.mae},
                   {"mse", report.errors.mse},
                   {"images", images}};
  if (report.diagnostics) {
    j["silhouette"] = report.diagnostics->silhouette;
    j["mean_abs_cosine"] = report.diagnostics->mean_abs_cosine;
  }
  return j;
}

void write_report_csv(std::ostream& os, const EvalReport& report, bool header) {
  if (header) os << "domain,sample_id,predicted,truth\n";
  for (const auto& r : report.images)
    os << report.domain << ',' << r.sample_id << ',' << r.predicted << ',' << r.truth << '\n';
}

void write_projection_csv(std::ostream& os, const std::vector<int>& sample_ids,
                          const std::vector<int>& labels,
                          const std::vector<std::pair<double, double>>& projection) {
  os << "sample_id,label,pc1,pc2\n";
  for (std::size_t i = 0; i < projection.size(); ++i)
    os << sample_ids[i] << ',' << labels[i] << ',' << projection[i].first << ','
       << projection[i].second << '\n';
}

}  // namespace dgcount::metrics
