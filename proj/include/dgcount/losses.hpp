#pragma once

#include <cstddef>
#include <ostream>
#include <vector>

#include "dgcount/tensor.hpp"

namespace dgcount::losses {

struct LossWeights {
  double lambda_rec = 0.1;
  double lambda_orth = 0.01;
  double hard_fraction = 0.02;  // S
  double temperature = 1.0;     // tau for the reconstruction correlation
  bool symmetric_ce = false;    // average row- and column-wise cross entropy
};

struct HardRegionSet {
  std::vector<std::size_t> indices;  // flat cell indices, ranked by error
  bool contains(std::size_t i) const;
};

inline constexpr double kNormEps = 1e-8;

// Pixel rows L2-normalised, then R_ij = <a_i, b_j> / tau. Shapes [n x C].
Tensor correlation_matrix(const Tensor& a, const Tensor& b, double temperature);

// ceil(S * n), robust to S * n landing a hair above an integer.
std::size_t hard_region_count(double fraction, std::size_t cells);

// Cells ranked by squared error, descending, ties by lower index. Values
// are read only; nothing flows back through the selection.
HardRegionSet hard_regions(const Tensor& pred, const Tensor& gt, double fraction);

// sum_i (1 + [i in hard]) * -log softmax_row(corr(post, pre, tau))_ii
Tensor rec_loss(const Tensor& pre, const Tensor& post, const HardRegionSet& hard,
                double temperature, bool symmetric = false);

// sum_i corr(f~, z~)_ii^2 + corr(f, z)_ii^2 with tau = 1.
Tensor orth_loss(const Tensor& f_tilde, const Tensor& z_tilde, const Tensor& f, const Tensor& z);

// Mean squared difference.
Tensor density_loss(const Tensor& pred, const Tensor& gt);

// Undefined members count as zero (disabled terms).
struct LossParts {
  Tensor density;
  Tensor rec_di;
  Tensor rec_ds;
  Tensor orth;
};

Tensor total_loss(const LossParts& parts, const LossWeights& weights);

struct LossRecord {
  double density = 0.0, rec_di = 0.0, rec_ds = 0.0, orth = 0.0, total = 0.0;
};

LossRecord record_of(const LossParts& parts, const Tensor& total);

// CSV: step,L_den,L_rec_DI,L_rec_DS,L_orth,total
void write_loss_csv_header(std::ostream& os);
void write_loss_csv_row(std::ostream& os, std::size_t step, const LossRecord& r);

}  // namespace dgcount::losses
