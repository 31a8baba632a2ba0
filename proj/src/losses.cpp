#include "dgcount/losses.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dgcount/ops.hpp"

namespace dgcount::losses {

bool HardRegionSet::contains(std::size_t i) const {
  return std::find(indices.begin(), indices.end(), i) != indices.end();
}

Tensor correlation_matrix(const Tensor& a, const Tensor& b, double temperature) {
  if (a.shape() != b.shape() || a.ndim() != 2) {
    throw ShapeError("correlation_matrix: need equal [n x C] inputs, got " + shape_str(a.shape()) +
                     " and " + shape_str(b.shape()));
  }
  Tensor r = ops::matmul(ops::l2_normalize_rows(a, kNormEps),
                         ops::transpose(ops::l2_normalize_rows(b, kNormEps)));
  return temperature == 1.0 ? r : ops::scale(r, 1.0 / temperature);
}

std::size_t hard_region_count(double fraction, std::size_t cells) {
  if (fraction < 0.0 || fraction > 1.0) throw ContractError("hard fraction must lie in [0, 1]");
  const double x = fraction * static_cast<double>(cells);
  const auto n = static_cast<std::size_t>(std::ceil(x - 1e-9 * std::max(1.0, x)));
  return std::min(n, cells);
}

HardRegionSet hard_regions(const Tensor& pred, const Tensor& gt, double fraction) {
  if (pred.shape() != gt.shape()) throw ShapeError("hard_regions: shape mismatch");
  const std::size_t n = pred.numel();
  const std::size_t take = hard_region_count(fraction, n);
  std::vector<double> err(n);
  for (std::size_t i = 0; i < n; ++i) err[i] = (pred[i] - gt[i]) * (pred[i] - gt[i]);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return err[x] > err[y]; });
  order.resize(take);
  return {std::move(order)};
}

namespace {

Tensor weighted_diag_nll(const Tensor& log_probs, const std::vector<double>& weights) {
  Tensor w = Tensor::from_data({weights.size()}, weights);
  return ops::scale(ops::sum(ops::mul(ops::diag(log_probs), w)), -1.0);
}

}  // namespace

Tensor rec_loss(const Tensor& pre, const Tensor& post, const HardRegionSet& hard,
                double temperature, bool symmetric) {
  if (pre.shape() != post.shape()) throw ShapeError("rec_loss: shape mismatch");
  Tensor r = correlation_matrix(post, pre, temperature);
  std::vector<double> weights(pre.dim(0), 1.0);
  for (auto i : hard.indices) weights.at(i) = 2.0;
  Tensor loss = weighted_diag_nll(ops::log_softmax(r, 1), weights);
  if (!symmetric) return loss;
  return ops::scale(ops::add(loss, weighted_diag_nll(ops::log_softmax(r, 0), weights)), 0.5);
}

Tensor orth_loss(const Tensor& f_tilde, const Tensor& z_tilde, const Tensor& f, const Tensor& z) {
  Tensor a = ops::sum(ops::square(ops::diag(correlation_matrix(f_tilde, z_tilde, 1.0))));
  Tensor b = ops::sum(ops::square(ops::diag(correlation_matrix(f, z, 1.0))));
  return ops::add(a, b);
}

Tensor density_loss(const Tensor& pred, const Tensor& gt) {
  return ops::mean(ops::square(ops::sub(pred, gt)));
}

Tensor total_loss(const LossParts& parts, const LossWeights& weights) {
  if (!parts.density.defined()) throw ContractError("total_loss: density term is required");
  Tensor total = parts.density;
  auto add_term = [&](const Tensor& t, double lambda) {
    if (t.defined() && lambda != 0.0) total = ops::add(total, ops::scale(t, lambda));
  };
  add_term(parts.rec_di, weights.lambda_rec);
  add_term(parts.rec_ds, weights.lambda_rec);
  add_term(parts.orth, weights.lambda_orth);
  return total;
}

LossRecord record_of(const LossParts& parts, const Tensor& total) {
  auto val = [](const Tensor& t) { return t.defined() ? t.item() : 0.0; };
  return {val(parts.density), val(parts.rec_di), val(parts.rec_ds), val(parts.orth), total.item()};
}

void write_loss_csv_header(std::ostream& os) { os << "step,L_den,L_rec_DI,L_rec_DS,L_orth,total\n"; }

void write_loss_csv_row(std::ostream& os, std::size_t step, const LossRecord& r) {
  os << step << ',' << r.density << ',' << r.rec_di << ',' << r.rec_ds << ',' << r.orth << ','
     << r.total << '\n';
}

}  // namespace dgcount::losses
