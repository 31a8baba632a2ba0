#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <numeric>
#include <set>

#include "dgcount/dataset_io.hpp"
#include "dgcount/synth.hpp"
#include "test_util.hpp"

using namespace dgcount;
using namespace dgcount::synth;

namespace {
double total(const Tensor& t) { return std::accumulate(t.data().begin(), t.data().end(), 0.0); }
}  // namespace

TEST_CASE("density map mass") {
  CHECK(total(density_map({}, 20, 20)) == 0.0);
  CHECK(total(density_map({{15, 15}}, 31, 31, 15)) == doctest::Approx(1.0).epsilon(1e-9));
  auto d = density_map({{0, 0}, {1, 2}, {10, 10}}, 20, 20);
  CHECK(std::abs(total(d) - 3.0) < 1e-6);
}

TEST_CASE("density map kernel shape") {
  // Interior head: the value at offset (dy,dx) is the normalised Gaussian.
  auto d = density_map({{15, 15}}, 31, 31, 15, 3.75);
  double norm = 0;
  for (int y = -7; y <= 7; ++y)
    for (int x = -7; x <= 7; ++x) norm += std::exp(-(x * x + y * y) / (2 * 3.75 * 3.75));
  CHECK(d[15 * 31 + 15] == doctest::Approx(1.0 / norm).epsilon(1e-12));
  CHECK(d[15 * 31 + 17] == doctest::Approx(std::exp(-4 / (2 * 3.75 * 3.75)) / norm).epsilon(1e-12));
  CHECK(d[15 * 31 + 23] == 0.0);
}

TEST_CASE("density map contract violations") {
  CHECK_THROWS_AS(density_map({{1, 1}}, 8, 8, 4), ContractError);
  CHECK_THROWS_AS(density_map({{1, 1}}, 8, 8, 5, 0.0), ContractError);
  CHECK_THROWS_AS(density_map({{8, 1}}, 8, 8), ContractError);
}

TEST_CASE("scene generation") {
  auto empty = generate_scene(default_style(0), 0, 32, 32, 1);
  CHECK(empty.points.empty());
  CHECK(total(empty.density) == 0.0);

  auto a = generate_scene(default_style(1), 12, 32, 32, 9);
  auto b = generate_scene(default_style(1), 12, 32, 32, 9);
  CHECK(testutil::values(a.image) == testutil::values(b.image));
  CHECK(a.points.size() == 12);

  // same head radius, different appearance
  auto c = generate_scene(default_style(0), 12, 32, 32, 9);
  CHECK(testutil::values(a.image) != testutil::values(c.image));
  CHECK(a.points == c.points);
  for (double v : a.image.data()) CHECK((v >= 0.0 && v <= 1.0));
}

TEST_CASE("augmentation") {
  auto s = generate_scene(default_style(0), 20, 32, 32, 4);
  auto id = augment(s, 32, 1, {FlipMode::kForceOff});
  CHECK(testutil::values(id.image) == testutil::values(s.image));
  CHECK(id.points == s.points);

  auto f = augment(s, 32, 1, {FlipMode::kForceOn});
  for (std::size_t i = 0; i < s.points.size(); ++i) {
    CHECK(f.points[i].row == s.points[i].row);
    CHECK(f.points[i].col == 31 - s.points[i].col);
  }
  CHECK(f.image[5] == s.image[31 - 5]);
  CHECK_THROWS_AS(augment(s, 33, 1), ContractError);
}

TEST_CASE("augmented density conserves surviving heads") {
  Rng rng(12);
  for (int t = 0; t < 200; ++t) {
    auto s = generate_scene(default_style(static_cast<int>(rng.below(6))), static_cast<int>(rng.below(30)), 40, 40,
                            rng.next_u64());
    auto a = augment(s, 16 + rng.below(25), rng.next_u64());
    CHECK(std::abs(total(a.density) - static_cast<double>(a.points.size())) < 1e-6);
    for (auto& p : a.points) CHECK((p.row >= 0 && p.col >= 0 && p.row < a.height() && p.col < a.width()));
  }
}

TEST_CASE("dataset splits") {
  DatasetSpec spec;
  spec.per_style = 6;
  spec.test_per_style = 4;
  spec.height = spec.width = 32;
  auto ds = make_dataset(spec);
  CHECK(ds.train.size() == 18);
  CHECK(ds.test.size() == 4);
  std::set<int> train_styles, ids;
  for (auto& s : ds.train) {
    train_styles.insert(s.style_id);
    ids.insert(s.sample_id);
  }
  CHECK(train_styles == std::set<int>{0, 1, 2});
  for (auto& s : ds.test) {
    CHECK(s.style_id == 3);
    CHECK(ids.insert(s.sample_id).second);
  }
  CHECK(ds.seen_test.size() == 12);
  for (auto& s : ds.seen_test) {
    CHECK(train_styles.count(s.style_id) == 1);
    CHECK(ids.insert(s.sample_id).second);
  }
  auto again = make_dataset(spec);
  CHECK(testutil::values(again.train[7].image) == testutil::values(ds.train[7].image));
}

TEST_CASE("styles are separable from image statistics") {
  // Nearest-centroid on (mean, std, mean |horizontal gradient|) should tell
  // the hand-picked styles apart.
  DatasetSpec spec;
  spec.per_style = 40;
  spec.held_out_styles = {};
  spec.n_styles = 4;
  auto ds = make_dataset(spec);
  auto feats = [](const CrowdSample& s) {
    const auto d = s.image.data();
    const std::size_t W = s.width();
    double m = 0, m2 = 0, g = 0;
    for (std::size_t i = 0; i < d.size(); ++i) {
      m += d[i];
      m2 += d[i] * d[i];
      if (i % W) g += std::abs(d[i] - d[i - 1]);
    }
    m /= d.size();
    return std::array<double, 3>{m, std::sqrt(m2 / d.size() - m * m), g / d.size()};
  };
  std::vector<std::array<double, 3>> centroid(4, {0, 0, 0});
  std::vector<int> count(4, 0);
  for (std::size_t i = 0; i < ds.train.size(); i += 2) {
    auto f = feats(ds.train[i]);
    for (int j = 0; j < 3; ++j) centroid[ds.train[i].style_id][j] += f[j];
    ++count[ds.train[i].style_id];
  }
  for (int s = 0; s < 4; ++s)
    for (int j = 0; j < 3; ++j) centroid[s][j] /= count[s];
  int correct = 0, n = 0;
  for (std::size_t i = 1; i < ds.train.size(); i += 2, ++n) {
    auto f = feats(ds.train[i]);
    int best = 0;
    double bd = 1e300;
    for (int s = 0; s < 4; ++s) {
      double d = 0;
      for (int j = 0; j < 3; ++j) d += (f[j] - centroid[s][j]) * (f[j] - centroid[s][j]);
      if (d < bd) bd = d, best = s;
    }
    correct += best == ds.train[i].style_id;
  }
  CHECK(static_cast<double>(correct) / n >= 0.9);
}

TEST_CASE("export and import round trip") {
  DatasetSpec spec;
  spec.per_style = 2;
  spec.test_per_style = 2;
  spec.height = spec.width = 16;
  spec.max_heads = 8;
  auto ds = make_dataset(spec);
  auto dir = std::filesystem::temp_directory_path() / "dgcount_split_test";
  std::filesystem::remove_all(dir);
  export_split(ds.train, dir);
  auto back = import_split(dir);
  REQUIRE(back.size() == ds.train.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    CHECK(back[i].sample_id == ds.train[i].sample_id);
    CHECK(back[i].style_id == ds.train[i].style_id);
    CHECK(back[i].points == ds.train[i].points);
    CHECK(testutil::values(back[i].density) == testutil::values(ds.train[i].density));
    for (std::size_t j = 0; j < back[i].image.numel(); ++j)
      CHECK(std::abs(back[i].image[j] - ds.train[i].image[j]) <= 0.5 / 65535.0 + 1e-12);
  }
  std::filesystem::remove_all(dir);
}
