#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <sstream>

#include "dgcount/memory.hpp"
#include "dgcount/meta_opt.hpp"
#include "dgcount/metrics.hpp"
#include "test_util.hpp"

using namespace dgcount;
using namespace dgcount::metrics;

namespace {
TrainConfig tiny() {
  TrainConfig c = desk_preset();
  c.data.height = c.data.width = 16;
  c.data.per_style = 3;
  c.data.test_per_style = 3;
  c.data.max_heads = 6;
  c.crop = 16;
  c.model.widths = {2, 3, 4};
  c.model.feature_channels = 4;
  c.memory_m = 4;
  c.memory_n = 3;
  return c;
}
}  // namespace

TEST_CASE("mae and root mse") {
  auto a = mae_mse({10, 20}, {12, 18});
  CHECK(a.mae == 2.0);
  CHECK(a.mse == 2.0);
  auto b = mae_mse({5, 6}, {5, 6});
  CHECK(b.mae == 0.0);
  CHECK(b.mse == 0.0);
  auto c = mae_mse({0, 3}, {0, 0});
  CHECK(c.mae == 1.5);
  CHECK(c.mse == doctest::Approx(std::sqrt(4.5)));
  CHECK_THROWS_AS(mae_mse({}, {}), ContractError);
  CHECK_THROWS_AS(mae_mse({1}, {1, 2}), ContractError);
}

TEST_CASE("evaluate matches a manual inference loop") {
  auto cfg = tiny();
  auto p = meta::init_params(cfg);
  auto ds = synth::make_dataset(cfg.data);
  auto rep = evaluate(p, cfg, ds.test, "unseen");
  std::vector<double> pred, truth;
  for (auto& s : ds.test) {
    pred.push_back(model::infer(s.image, p, p.at(memory::kDicmName), cfg.model));
    truth.push_back(static_cast<double>(s.points.size()));
  }
  auto e = mae_mse(pred, truth);
  CHECK(rep.errors.mae == e.mae);
  CHECK(rep.errors.mse == e.mse);
  CHECK(rep.images.size() == ds.test.size());

  auto doubled = ds.test;
  doubled.insert(doubled.end(), ds.test.begin(), ds.test.end());
  auto rep2 = evaluate(p, cfg, doubled, "unseen");
  CHECK(rep2.errors.mae == doctest::Approx(rep.errors.mae).epsilon(1e-14));
  CHECK(rep2.errors.mse == doctest::Approx(rep.errors.mse).epsilon(1e-14));
}

TEST_CASE("zero model predicts nothing") {
  auto cfg = tiny();
  auto p = meta::init_params(cfg);
  for (auto& [n, t] : p)
    for (auto& v : t.mutable_data()) v = 0.0;
  auto ds = synth::make_dataset(cfg.data);
  auto rep = evaluate(p, cfg, ds.test, "x");
  double mean = 0;
  for (auto& s : ds.test) mean += static_cast<double>(s.points.size()) / ds.test.size();
  CHECK(rep.errors.mae == doctest::Approx(mean));
}

TEST_CASE("silhouette") {
  std::vector<subdomain::Vector> pts{{0}, {0.1}, {10}, {10.1}};
  const double s = silhouette(pts, {0, 0, 1, 1});
  // Hand values: a = 0.1 for every point; b is the mean distance to the other pair.
  const double b0 = (10 + 10.1) / 2, b1 = (9.9 + 10) / 2;
  const double expect = ((b0 - 0.1) / b0 + (b1 - 0.1) / b1 + (b1 - 0.1) / b1 + (b0 - 0.1) / b0) / 4;
  CHECK(s == doctest::Approx(expect).epsilon(1e-14));

  std::vector<subdomain::Vector> far{{0, 0}, {0, 1e-9}, {1e6, 0}, {1e6, 1e-9}};
  CHECK(silhouette(far, {0, 0, 1, 1}) == doctest::Approx(1.0).epsilon(1e-9));
  Rng rng(1);
  std::vector<subdomain::Vector> mixed;
  std::vector<int> labels;
  for (int i = 0; i < 400; ++i) {
    mixed.push_back({rng.normal(), rng.normal()});
    labels.push_back(i % 2);
  }
  CHECK(std::abs(silhouette(mixed, labels)) < 0.05);
}

TEST_CASE("cosine and projection") {
  CHECK(cosine({1, 0}, {0, 2}) == 0.0);
  CHECK(cosine({1, 1}, {2, 2}) == doctest::Approx(1.0));
  std::vector<subdomain::Vector> line{{0, 0, 0}, {1, 1, 0}, {2, 2, 0}, {3, 3, 0.001}};
  auto pr = pca_2d(line);
  REQUIRE(pr.size() == 4);
  CHECK(std::abs(pr[3].first - pr[0].first) == doctest::Approx(3 * std::sqrt(2.0)).epsilon(1e-3));
}

TEST_CASE("separation diagnostics need the DS branch") {
  auto cfg = tiny();
  auto p = meta::init_params(cfg);
  auto ds = synth::make_dataset(cfg.data);
  auto a = subdomain::divide(ds.train, p, cfg.model, cfg.k, 1, 0, nullptr);
  auto d = separation_diagnostics(p, cfg, ds.train, a);
  REQUIRE(d.has_value());
  CHECK((d->mean_abs_cosine >= 0 && d->mean_abs_cosine <= 1));
  CHECK((d->silhouette >= -1 && d->silhouette <= 1));
  auto c = cfg;
  c.ablation.disable_ds_branch = true;
  CHECK_FALSE(separation_diagnostics(p, c, ds.train, a).has_value());
}

TEST_CASE("report writers") {
  EvalReport r;
  r.domain = "seen";
  r.images = {{1, 2.5, 3.0}};
  r.errors = {0.5, 0.5};
  auto j = report_json(r);
  CHECK(j["domain"] == "seen");
  CHECK(j["mae"] == 0.5);
  std::ostringstream os;
  write_report_csv(os, r);
  CHECK(os.str() == "domain,sample_id,predicted,truth\nseen,1,2.5,3\n");
}
