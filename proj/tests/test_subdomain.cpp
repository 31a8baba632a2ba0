#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <numeric>
#include <sstream>

#include "dgcount/memory.hpp"
#include "dgcount/subdomain.hpp"
#include "test_util.hpp"

using namespace dgcount;
using namespace dgcount::subdomain;

namespace {

std::vector<Vector> random_points(Rng& rng, std::size_t n, std::size_t d) {
  std::vector<Vector> p(n, Vector(d));
  for (auto& v : p)
    for (auto& x : v) x = rng.uniform(-1, 1);
  return p;
}

// Labels as a canonical partition: relabel by order of first appearance.
std::vector<int> canonical(const std::vector<int>& l) {
  std::map<int, int> m;
  std::vector<int> out;
  for (int x : l) out.push_back(m.emplace(x, static_cast<int>(m.size())).first->second);
  return out;
}

double sse(const std::vector<Vector>& pts, const std::vector<int>& labels, int k) {
  std::vector<Vector> c(k, Vector(pts[0].size(), 0.0));
  std::vector<int> n(k, 0);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    for (std::size_t j = 0; j < pts[i].size(); ++j) c[labels[i]][j] += pts[i][j];
    ++n[labels[i]];
  }
  double s = 0;
  for (std::size_t i = 0; i < pts.size(); ++i)
    for (std::size_t j = 0; j < pts[i].size(); ++j) {
      const double d = pts[i][j] - c[labels[i]][j] / n[labels[i]];
      s += d * d;
    }
  return s;
}

// Agreement count of labelling `a` with `b` after mapping b through perm.
int agreement(const std::vector<int>& a, const std::vector<int>& b, const std::vector<int>& perm) {
  int s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] == perm[b[i]];
  return s;
}

}  // namespace

TEST_CASE("image embedding is the spatial mean") {
  auto c = Tensor::create({3, 2, 2}, Init::constant(0.7));
  for (double v : image_embedding(c)) CHECK(v == doctest::Approx(0.7).epsilon(1e-15));
  auto one = Tensor::from_data({2, 1, 1}, {3, -4});
  CHECK(image_embedding(one) == Vector{3, -4});
  Rng rng(1);
  auto x = testutil::random({4, 3, 5}, rng, false);
  auto e = image_embedding(x);
  for (std::size_t ch = 0; ch < 4; ++ch) {
    double s = 0;
    for (std::size_t i = 0; i < 15; ++i) s += x[ch * 15 + i];
    CHECK(e[ch] == doctest::Approx(s / 15).epsilon(1e-14));
  }
}

TEST_CASE("kmeans on the four point example") {
  std::vector<Vector> pts{{0}, {0.1}, {10}, {10.1}};
  // Exhaustive search over all two-way partitions.
  double best = 1e300;
  std::vector<int> best_labels;
  for (int mask = 1; mask < 15; ++mask) {
    std::vector<int> l(4);
    for (int i = 0; i < 4; ++i) l[i] = (mask >> i) & 1;
    const double s = sse(pts, l, 2);
    if (s < best) best = s, best_labels = l;
  }
  auto r = kmeans(pts, 2, 3);
  CHECK(canonical(r.labels) == canonical(best_labels));
  auto c = r.centroids;
  std::sort(c.begin(), c.end());
  CHECK(c[0][0] == doctest::Approx(0.05));
  CHECK(c[1][0] == doctest::Approx(10.05));
}

TEST_CASE("kmeans edge cases") {
  Rng rng(2);
  auto pts = random_points(rng, 5, 2);
  auto r = kmeans(pts, 5, 1);
  CHECK(kmeans_objective(pts, r.labels, r.centroids) == doctest::Approx(0.0));
  CHECK(canonical(r.labels) == std::vector<int>{0, 1, 2, 3, 4});
  CHECK_THROWS_AS(kmeans(pts, 6, 1), ContractError);
  std::vector<Vector> dup(6, Vector{1.0, 1.0});
  auto d = kmeans(dup, 3, 1);
  for (int l : d.labels) CHECK((l >= 0 && l < 3));
}

TEST_CASE("lloyd objective never increases") {
  Rng rng(3);
  for (int t = 0; t < 50; ++t) {
    auto pts = random_points(rng, 10 + rng.below(40), 1 + rng.below(4));
    auto r = kmeans(pts, 2 + rng.below(4), rng.next_u64());
    for (std::size_t i = 1; i < r.objective_history.size(); ++i)
      CHECK(r.objective_history[i] <= r.objective_history[i - 1] + 1e-12);
    CHECK(kmeans_objective(pts, r.labels, r.centroids) == doctest::Approx(r.objective_history.back()));
  }
}

TEST_CASE("kmeans ignores sample order for a fixed seed") {
  Rng rng(4);
  // Well separated blobs so the partition is unambiguous.
  std::vector<Vector> pts;
  for (int b = 0; b < 3; ++b)
    for (int i = 0; i < 10; ++i) pts.push_back({b * 10.0 + rng.uniform(-1, 1), rng.uniform(-1, 1)});
  auto a = kmeans(pts, 3, 9);
  std::vector<std::size_t> perm(pts.size());
  std::iota(perm.begin(), perm.end(), 0);
  std::reverse(perm.begin(), perm.end());
  std::vector<Vector> shuffled;
  for (auto i : perm) shuffled.push_back(pts[i]);
  auto b = kmeans(shuffled, 3, 9);
  for (std::size_t i = 0; i < pts.size(); ++i)
    for (std::size_t j = 0; j < pts.size(); ++j)
      CHECK((a.labels[perm[i]] == a.labels[perm[j]]) == (b.labels[i] == b.labels[j]));
}

TEST_CASE("label alignment") {
  auto p = align_labels({0, 0, 1, 1}, {1, 1, 0, 0}, 2);
  CHECK(p == std::vector<int>{1, 0});
  CHECK(align_labels({0, 1, 2, 0}, {0, 1, 2, 0}, 3) == std::vector<int>{0, 1, 2});
}

TEST_CASE("alignment is optimal against all permutations") {
  Rng rng(5);
  for (int t = 0; t < 40; ++t) {
    const std::size_t k = 2 + rng.below(4), n = 1 + rng.below(40);
    std::vector<int> a(n), b(n);
    for (auto& x : a) x = static_cast<int>(rng.below(k));
    for (auto& x : b) x = static_cast<int>(rng.below(k));
    auto pi = align_labels(a, b, k);
    auto sorted = pi;
    std::sort(sorted.begin(), sorted.end());
    std::vector<int> id(k);
    std::iota(id.begin(), id.end(), 0);
    CHECK(sorted == id);
    int best = 0;
    do best = std::max(best, agreement(a, b, id));
    while (std::next_permutation(id.begin(), id.end()));
    CHECK(agreement(a, b, pi) == best);
  }
}

TEST_CASE("hungarian on a known matrix") {
  std::vector<std::vector<double>> c{{4, 1, 3}, {2, 0, 5}, {3, 2, 2}};
  auto r = hungarian_min_cost(c);
  double cost = 0;
  for (std::size_t i = 0; i < 3; ++i) cost += c[i][r[i]];
  CHECK(cost == 5.0);
}

TEST_CASE("division and alignment across epochs") {
  model::BackboneConfig cfg;
  cfg.widths = {2, 3, 4};
  cfg.feature_channels = 4;
  auto p = model::init_model_params(cfg, 1);
  synth::DatasetSpec spec;
  spec.per_style = 4;
  spec.height = spec.width = 16;
  spec.max_heads = 6;
  auto ds = synth::make_dataset(spec);
  auto a = divide(ds.train, p, cfg, 3, 7, 0, nullptr);
  CHECK(a.agreement_with_previous == 1.0);
  CHECK(a.labels.size() == ds.train.size());
  CHECK(a.k() == 3);
  auto same = divide(ds.train, p, cfg, 3, 7, 0, &a);
  CHECK(same.labels == a.labels);
  CHECK(same.agreement_with_previous == 1.0);

  // a different clustering seed may split differently, but the relabelling must be the best permutation
  auto raw = divide(ds.train, p, cfg, 3, 8, 1, nullptr);
  auto b = divide(ds.train, p, cfg, 3, 8, 1, &a);
  CHECK(b.epoch == 1);
  std::vector<int> perm{0, 1, 2};
  std::size_t best = 0;
  do {
    std::size_t agree = 0;
    for (const auto& s : ds.train) agree += perm[raw.label_of(s.sample_id)] == a.label_of(s.sample_id);
    best = std::max(best, agree);
  } while (std::next_permutation(perm.begin(), perm.end()));
  CHECK(b.agreement_with_previous == doctest::Approx(static_cast<double>(best) / ds.train.size()));
  CHECK_THROWS(a.label_of(-5));

  std::ostringstream os;
  write_assignment_csv_header(os);
  write_assignment_csv(os, b);
  CHECK(os.str().rfind("epoch,sample_id,label,agreement\n1,", 0) == 0);
}
