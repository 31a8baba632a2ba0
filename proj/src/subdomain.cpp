#include "dgcount/subdomain.hpp"

#include <algorithm>
#include <limits>

#include "dgcount/rng.hpp"

namespace dgcount::subdomain {

namespace {

double sq_dist(const Vector& a, const Vector& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return s;
}

int nearest(const Vector& x, const std::vector<Vector>& centroids) {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centroids.size(); ++c) {
    const double d = sq_dist(x, centroids[c]);
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(c);
    }
  }
  return best;
}

std::vector<Vector> plus_plus_seeds(const std::vector<Vector>& points, std::size_t k, Rng& rng) {
  const std::size_t n = points.size();
  std::vector<Vector> centers{points[rng.below(n)]};
  std::vector<double> d2(n);
  while (centers.size() < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (const auto& c : centers) best = std::min(best, sq_dist(points[i], c));
      d2[i] = best;
      total += best;
    }
    std::size_t pick = 0;
    if (total > 0.0) {
      const double r = rng.uniform() * total;
      double acc = 0.0;
      pick = n - 1;
      for (std::size_t i = 0; i < n; ++i) {
        acc += d2[i];
        if (r < acc && d2[i] > 0.0) {
          pick = i;
          break;
        }
      }
    } else {
      pick = centers.size();  // all points coincide with a center already
    }
    centers.push_back(points[pick]);
  }
  return centers;
}

std::vector<int> assign(const std::vector<Vector>& points, const std::vector<Vector>& centroids) {
  std::vector<int> labels(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) labels[i] = nearest(points[i], centroids);
  return labels;
}

void repair_empty(const std::vector<Vector>& points, const std::vector<Vector>& centroids,
                  std::vector<int>& labels) {
  const std::size_t k = centroids.size();
  std::vector<std::size_t> sizes(k, 0);
  for (int l : labels) ++sizes[static_cast<std::size_t>(l)];
  for (std::size_t c = 0; c < k; ++c) {
    if (sizes[c] > 0) continue;
    std::size_t far = points.size();
    double far_d = -1.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
      const auto l = static_cast<std::size_t>(labels[i]);
      if (sizes[l] < 2) continue;
      const double d = sq_dist(points[i], centroids[l]);
      if (d > far_d) {
        far_d = d;
        far = i;
      }
    }
    --sizes[static_cast<std::size_t>(labels[far])];
    labels[far] = static_cast<int>(c);
    sizes[c] = 1;
  }
}

std::vector<Vector> means(const std::vector<Vector>& points, const std::vector<int>& labels,
                          std::size_t k) {
  const std::size_t dim = points.front().size();
  std::vector<Vector> c(k, Vector(dim, 0.0));
  std::vector<std::size_t> counts(k, 0);
  for (std::size_t i = 0; i < points.size(); ++i) {
    const auto l = static_cast<std::size_t>(labels[i]);
    ++counts[l];
    for (std::size_t d = 0; d < dim; ++d) c[l][d] += points[i][d];
  }
  for (std::size_t l = 0; l < k; ++l)
    for (auto& v : c[l]) v /= static_cast<double>(counts[l]);
  return c;
}

}  // namespace

Vector image_embedding(const Tensor& features) {
  if (features.ndim() != 3) throw ShapeError("image_embedding: expected [C x h x w]");
  const std::size_t c = features.dim(0), area = features.dim(1) * features.dim(2);
  Vector out(c, 0.0);
  for (std::size_t ch = 0; ch < c; ++ch) {
    double s = 0.0;
    for (std::size_t i = 0; i < area; ++i) s += features[ch * area + i];
    out[ch] = s / static_cast<double>(area);
  }
  return out;
}

double kmeans_objective(const std::vector<Vector>& points, const std::vector<int>& labels,
                        const std::vector<Vector>& centroids) {
  double s = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i)
    s += sq_dist(points[i], centroids[static_cast<std::size_t>(labels[i])]);
  return s;
}

KMeansResult kmeans(const std::vector<Vector>& points, std::size_t k, std::uint64_t seed,
                    int max_iters) {
  if (k == 0) throw ContractError("kmeans: k must be >= 1");
  if (points.size() < k) {
    throw ContractError("kmeans: " + std::to_string(points.size()) + " points for k = " +
                        std::to_string(k));
  }
  for (const auto& p : points) {
    if (p.size() != points.front().size()) throw ContractError("kmeans: ragged input");
  }
  Rng rng(seed);
  KMeansResult r;
  r.centroids = plus_plus_seeds(points, k, rng);
  r.labels = assign(points, r.centroids);
  repair_empty(points, r.centroids, r.labels);
  for (int it = 0; it < std::max(1, max_iters); ++it) {
    r.centroids = means(points, r.labels, k);
    r.objective_history.push_back(kmeans_objective(points, r.labels, r.centroids));
    r.iterations = it + 1;
    auto next = assign(points, r.centroids);
    repair_empty(points, r.centroids, next);
    if (next == r.labels) break;
    r.labels = std::move(next);
  }
  return r;
}

int SubdomainAssignment::label_of(int sample_id) const {
  auto it = labels.find(sample_id);
  if (it == labels.end()) throw ContractError("no sub-domain label for sample " + std::to_string(sample_id));
  return it->second;
}

std::vector<Vector> embed_dataset(const std::vector<synth::CrowdSample>& samples,
                                  const model::Params& params, const model::BackboneConfig& cfg,
                                  EmbeddingTap tap) {
  std::vector<Vector> out(samples.size());
#pragma omp parallel for schedule(dynamic)
  for (long long i = 0; i < static_cast<long long>(samples.size()); ++i) {
    NoGradGuard guard;
    Tensor f = model::encode(samples[static_cast<std::size_t>(i)].image, params, cfg);
    if (tap == EmbeddingTap::kDsUnit) f = model::ds_unit(f, params);
    out[static_cast<std::size_t>(i)] = image_embedding(f);
  }
  return out;
}

SubdomainAssignment divide(const std::vector<synth::CrowdSample>& samples,
                           const model::Params& params, const model::BackboneConfig& cfg,
                           std::size_t k, std::uint64_t seed, int epoch,
                           const SubdomainAssignment* prev, EmbeddingTap tap) {
  const auto embeddings = embed_dataset(samples, params, cfg, tap);
  auto km = kmeans(embeddings, k, Rng::derive(seed, static_cast<std::uint64_t>(epoch)));

  SubdomainAssignment out;
  out.epoch = epoch;
  out.centroids = km.centroids;
  std::vector<int> labels = km.labels;
  if (prev != nullptr) {
    if (prev->k() != k) throw ContractError("divide: previous assignment has a different k");
    std::vector<int> prev_labels;
    prev_labels.reserve(samples.size());
    for (const auto& s : samples) prev_labels.push_back(prev->label_of(s.sample_id));
    const auto perm = align_labels(prev_labels, labels, k);
    for (auto& l : labels) l = perm[static_cast<std::size_t>(l)];
    for (std::size_t j = 0; j < k; ++j) out.centroids[static_cast<std::size_t>(perm[j])] = km.centroids[j];
    std::size_t same = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) same += labels[i] == prev_labels[i];
    out.agreement_with_previous =
        samples.empty() ? 1.0 : static_cast<double>(same) / static_cast<double>(samples.size());
  }
  for (std::size_t i = 0; i < samples.size(); ++i) out.labels[samples[i].sample_id] = labels[i];
  return out;
}

void write_assignment_csv_header(std::ostream& os) { os << "epoch,sample_id,label,agreement\n"; }

void write_assignment_csv(std::ostream& os, const SubdomainAssignment& a) {
  for (const auto& [id, label] : a.labels)
    os << a.epoch << ',' << id << ',' << label << ',' << a.agreement_with_previous << '\n';
}

}  // namespace dgcount::subdomain
