#pragma once

#include <optional>
#include <ostream>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "dgcount/config.hpp"
#include "dgcount/model.hpp"
#include "dgcount/subdomain.hpp"
#include "dgcount/synth.hpp"

namespace dgcount::metrics {

struct CountErrors {
  double mae = 0.0;
  double mse = 0.0;  // root of the mean squared error, as crowd counting reports it
};

CountErrors mae_mse(const std::vector<double>& predicted, const std::vector<double>& truth);

struct ImageResult {
  int sample_id = 0;
  double predicted = 0.0;
  double truth = 0.0;
};

struct Diagnostics {
  double silhouette = 0.0;        // of pooled z~ grouped by sub-domain
  double mean_abs_cosine = 0.0;   // |cos(pooled f~, pooled z~)| averaged over images
};

struct EvalReport {
  std::string domain;
  std::vector<ImageResult> images;
  CountErrors errors;
  std::optional<Diagnostics> diagnostics;
};

// DI-branch inference on every sample; the DSCM sets are never read.
EvalReport evaluate(const model::Params& params, const TrainConfig& cfg,
                    const std::vector<synth::CrowdSample>& samples, const std::string& domain);

// Mean silhouette with Euclidean distance. Clusters with fewer than two
// members contribute no points.
double silhouette(const std::vector<subdomain::Vector>& points, const std::vector<int>& labels);

double cosine(const subdomain::Vector& a, const subdomain::Vector& b);

struct PooledFeatures {
  std::vector<subdomain::Vector> f_tilde;
  std::vector<subdomain::Vector> z_tilde;
  std::vector<int> labels;
  std::vector<int> sample_ids;
};

// Spatially pooled f~ and z~ per sample, with z~ re-encoded by the sample's
// assigned DSCM set. Requires the DS branch.
PooledFeatures pooled_features(const model::Params& params, const TrainConfig& cfg,
                               const std::vector<synth::CrowdSample>& samples,
                               const subdomain::SubdomainAssignment& assignment);

std::optional<Diagnostics> separation_diagnostics(const model::Params& params, const TrainConfig& cfg,
                                                  const std::vector<synth::CrowdSample>& samples,
                                                  const subdomain::SubdomainAssignment& assignment);

// First two principal components of the rows.
std::vector<std::pair<double, double>> pca_2d(const std::vector<subdomain::Vector>& points);

nlohmann::json report_json(const EvalReport& report);
// per-image rows: domain,sample_id,predicted,truth
void write_report_csv(std::ostream& os, const EvalReport& report, bool header = true);
// rows: sample_id,label,pc1,pc2
void write_projection_csv(std::ostream& os, const std::vector<int>& sample_ids,
                          const std::vector<int>& labels,
                          const std::vector<std::pair<double, double>>& projection);

}  // namespace dgcount::metrics
