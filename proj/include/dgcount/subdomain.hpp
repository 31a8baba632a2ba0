#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <ostream>
#include <vector>

#include "dgcount/model.hpp"
#include "dgcount/synth.hpp"

namespace dgcount::subdomain {

using Vector = std::vector<double>;

// Spatial mean of a [C x h x w] feature map.
Vector image_embedding(const Tensor& features);

struct KMeansResult {
  std::vector<int> labels;
  std::vector<Vector> centroids;
  std::vector<double> objective_history;  // SSE after every Lloyd update
  int iterations = 0;
};

// Squared-Euclidean Lloyd iterations from k-means++ seeds. An emptied
// cluster takes the point farthest from its own centroid.
KMeansResult kmeans(const std::vector<Vector>& points, std::size_t k, std::uint64_t seed,
                    int max_iters = 100);

double kmeans_objective(const std::vector<Vector>& points, const std::vector<int>& labels,
                        const std::vector<Vector>& centroids);

// Minimum-cost perfect matching on a square matrix; result[row] = column.
std::vector<int> hungarian_min_cost(const std::vector<std::vector<double>>& cost);

// Permutation pi with pi[new_label] = aligned label, maximising the number
// of samples whose aligned label equals their previous label.
std::vector<int> align_labels(const std::vector<int>& prev_labels,
                              const std::vector<int>& new_labels, std::size_t k);

struct SubdomainAssignment {
  std::map<int, int> labels;  // sample_id -> label in [0, K)
  std::vector<Vector> centroids;
  int epoch = 0;
  double agreement_with_previous = 1.0;  // 1.0 by convention on the first division

  int label_of(int sample_id) const;
  std::size_t k() const { return centroids.size(); }
};

// Which activation feeds the clustering. The DS unit output is the normal
// choice; the raw backbone is used by memory-free variants and by the
// static one-shot division.
enum class EmbeddingTap { kDsUnit, kBackbone };

std::vector<Vector> embed_dataset(const std::vector<synth::CrowdSample>& samples,
                                  const model::Params& params, const model::BackboneConfig& cfg,
                                  EmbeddingTap tap);

SubdomainAssignment divide(const std::vector<synth::CrowdSample>& samples,
                           const model::Params& params, const model::BackboneConfig& cfg,
                           std::size_t k, std::uint64_t seed, int epoch,
                           const SubdomainAssignment* prev, EmbeddingTap tap = EmbeddingTap::kDsUnit);

// CSV rows: epoch,sample_id,label,agreement
void write_assignment_csv_header(std::ostream& os);
void write_assignment_csv(std::ostream& os, const SubdomainAssignment& a);

}  // namespace dgcount::subdomain
