#include <limits>

#include "dgcount/subdomain.hpp"

namespace dgcount::subdomain {

// Shortest augmenting path with row/column potentials, O(n^3).
std::vector<int> hungarian_min_cost(const std::vector<std::vector<double>>& cost) {
  const std::size_t n = cost.size();
  for (const auto& row : cost) {
    if (row.size() != n) throw ContractError("hungarian_min_cost: matrix must be square");
  }
  if (n == 0) return {};
  const double inf = std::numeric_limits<double>::infinity();
  // 1-based internally; column 0 is a virtual source.
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<std::size_t> match(n + 1, 0), way(n + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    match[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<bool> used(n + 1, false);
    do {
      used[j0] = true;
      const std::size_t i0 = match[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost[i0 - 1][j - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> result(n, -1);
  for (std::size_t j = 1; j <= n; ++j) result[match[j] - 1] = static_cast<int>(j - 1);
  return result;
}

std::vector<int> align_labels(const std::vector<int>& prev_labels,
                              const std::vector<int>& new_labels, std::size_t k) {
  if (prev_labels.size() != new_labels.size()) {
    throw ContractError("align_labels: labelings cover different sample sets");
  }
  if (k == 0) throw ContractError("align_labels: k must be >= 1");
  // agree[j][i] = #samples with new label j and previous label i
  std::vector<std::vector<double>> agree(k, std::vector<double>(k, 0.0));
  for (std::size_t s = 0; s < prev_labels.size(); ++s) {
    const int p = prev_labels[s], q = new_labels[s];
    if (p < 0 || q < 0 || static_cast<std::size_t>(p) >= k || static_cast<std::size_t>(q) >= k) {
      throw ContractError("align_labels: label out of range");
    }
    agree[static_cast<std::size_t>(q)][static_cast<std::size_t>(p)] += 1.0;
  }
  const double shift = static_cast<double>(prev_labels.size());
  std::vector<std::vector<double>> cost(k, std::vector<double>(k));
  for (std::size_t j = 0; j < k; ++j)
    for (std::size_t i = 0; i < k; ++i) cost[j][i] = shift - agree[j][i];
  return hungarian_min_cost(cost);
}

}  // namespace dgcount::subdomain
