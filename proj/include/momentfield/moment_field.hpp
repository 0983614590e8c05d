#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "momentfield/errors.hpp"
#include "momentfield/psd.hpp"
#include "momentfield/time_grid.hpp"

namespace momentfield {

inline constexpr std::size_t kDefaultMaxCells = 50'000'000;

enum class FieldProvenance { DeterministicSolve, McEstimate, ClosedForm };

/// The set of node pairs (i, j) a field is stored on: all of them, or,
/// when the full K^2 (N+1)^2 storage would bust the cap, the equal-time
/// diagonal plus a user-selected list, closed under the exchange
/// (i,j) -> (j,i).
class TimePairSet {
public:
  static TimePairSet full(int nodes) {
    TimePairSet s;
    s.nodes_ = nodes;
    s.full_ = true;
    return s;
  }

  static TimePairSet diagonal_plus(int nodes, const std::vector<std::pair<int, int>>& extra) {
    TimePairSet s;
    s.nodes_ = nodes;
    s.full_ = false;
    s.pairs_.reserve(static_cast<std::size_t>(nodes) + 2 * extra.size());
    for (int i = 0; i < nodes; ++i) s.pairs_.emplace_back(i, i);
    for (auto [i, j] : extra) {
      if (i < 0 || i >= nodes || j < 0 || j >= nodes)
        throw ValidationError("selected node pair (" + std::to_string(i) + "," +
                              std::to_string(j) + ") is outside the grid");
      s.pairs_.emplace_back(i, j);
      s.pairs_.emplace_back(j, i);
    }
    std::sort(s.pairs_.begin(), s.pairs_.end());
    s.pairs_.erase(std::unique(s.pairs_.begin(), s.pairs_.end()), s.pairs_.end());
    return s;
  }

  bool is_full() const { return full_; }
  int nodes() const { return nodes_; }

  std::size_t size() const {
    return full_ ? static_cast<std::size_t>(nodes_) * static_cast<std::size_t>(nodes_)
                 : pairs_.size();
  }

  /// Index of (i, j) in storage order, or npos when not stored.
  std::size_t index_of(int i, int j) const {
    if (full_) return static_cast<std::size_t>(i) * nodes_ + j;
    const auto it = std::lower_bound(pairs_.begin(), pairs_.end(), std::make_pair(i, j));
    if (it == pairs_.end() || *it != std::make_pair(i, j)) return npos;
    return static_cast<std::size_t>(it - pairs_.begin());
  }

  std::pair<int, int> pair_at(std::size_t idx) const {
    if (full_) return {static_cast<int>(idx) / nodes_, static_cast<int>(idx) % nodes_};
    return pairs_[idx];
  }

  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

private:
  int nodes_ = 0;
  bool full_ = true;
  std::vector<std::pair<int, int>> pairs_;  // sorted, exchange-closed
};

/// Picks the stored pair set for a field of K modes on the given grid:
/// full when K^2 (N+1)^2 fits in max_cells, otherwise diagonal plus the
/// requested extra pairs.
inline TimePairSet choose_pair_set(int K, const TimeGrid& grid, std::size_t max_cells,
                                   const std::vector<std::pair<int, int>>& extra = {}) {
  const std::size_t nodes = static_cast<std::size_t>(grid.nodes());
  const std::size_t cells = static_cast<std::size_t>(K) * K * nodes * nodes;
  if (cells <= max_cells) return TimePairSet::full(grid.nodes());
  TimePairSet partial = TimePairSet::diagonal_plus(grid.nodes(), extra);
  const std::size_t partial_cells = static_cast<std::size_t>(K) * K * partial.size();
  if (partial_cells > max_cells)
    throw CapacityError("even the reduced moment field needs " + std::to_string(partial_cells) +
                        " cells, cap is " + std::to_string(max_cells));
  return partial;
}

/// Discrete two-time field u_kl(t_i, t_j) of mode-pair coefficients.
/// Storage is row-major over (k, l, pair index).
class MomentField {
public:
  MomentField(int K, TimeGrid grid, TimePairSet pairs, FieldProvenance provenance)
      : K_(K),
        grid_(std::move(grid)),
        pairs_(std::move(pairs)),
        provenance_(provenance),
        values_(static_cast<std::size_t>(K) * K * pairs_.size(), 0.0) {}

  int modes() const { return K_; }
  const TimeGrid& grid() const { return grid_; }
  const TimePairSet& pairs() const { return pairs_; }
  FieldProvenance provenance() const { return provenance_; }
  std::size_t cells() const { return values_.size(); }

  double& at(int k, int l, std::size_t pair_idx) {
    return values_[(static_cast<std::size_t>(k) * K_ + l) * pairs_.size() + pair_idx];
  }
  double at(int k, int l, std::size_t pair_idx) const {
    return values_[(static_cast<std::size_t>(k) * K_ + l) * pairs_.size() + pair_idx];
  }

  bool has(int i, int j) const { return pairs_.index_of(i, j) != TimePairSet::npos; }

  double value(int k, int l, int i, int j) const {
    const std::size_t idx = pairs_.index_of(i, j);
    if (idx == TimePairSet::npos)
      throw DomainError("node pair (" + std::to_string(i) + "," + std::to_string(j) +
                        ") is not stored in this field");
    return at(k, l, idx);
  }

  /// Equal-time K x K slice at node i.
  Eigen::MatrixXd equal_time_slice(int i) const {
    Eigen::MatrixXd s(K_, K_);
    const std::size_t idx = pairs_.index_of(i, i);
    for (int k = 0; k < K_; ++k)
      for (int l = 0; l < K_; ++l) s(k, l) = at(k, l, idx);
    return s;
  }

  /// Full field reshaped as the (K * nodes) x (K * nodes) Gram matrix with
  /// row index (k, i). Only available for fully stored fields.
  Eigen::MatrixXd gram_matrix() const {
    if (!pairs_.is_full()) throw DomainError("Gram matrix needs the fully stored field");
    const int n = grid_.nodes();
    Eigen::MatrixXd g(K_ * n, K_ * n);
    for (int k = 0; k < K_; ++k)
      for (int l = 0; l < K_; ++l)
        for (int i = 0; i < n; ++i)
          for (int j = 0; j < n; ++j)
            g(k * n + i, l * n + j) = at(k, l, static_cast<std::size_t>(i) * n + j);
    return g;
  }

private:
  int K_;
  TimeGrid grid_;
  TimePairSet pairs_;
  FieldProvenance provenance_;
  std::vector<double> values_;
};

/// Max |u_kl(t_i,t_j) - u_lk(t_j,t_i)| over stored pairs. Exchange symmetry
/// holds bit-exactly for every field this library produces.
inline double exchange_symmetry_error(const MomentField& u) {
  double worst = 0.0;
  const auto& pairs = u.pairs();
  for (std::size_t idx = 0; idx < pairs.size(); ++idx) {
    const auto [i, j] = pairs.pair_at(idx);
    const std::size_t mirror = pairs.index_of(j, i);
    if (mirror == TimePairSet::npos) continue;
    for (int k = 0; k < u.modes(); ++k)
      for (int l = 0; l < u.modes(); ++l)
        worst = std::max(worst, std::abs(u.at(k, l, idx) - u.at(l, k, mirror)));
  }
  return worst;
}

/// Smallest relative eigenvalue ratio min_i lambda_min / lambda_max over
/// all equal-time slices. Second-moment fields must stay above -kPsdTol.
inline double equal_time_min_eig_ratio(const MomentField& u) {
  double worst = 0.0;
  for (int i = 0; i < u.grid().nodes(); ++i)
    worst = std::min(worst, min_eigenvalue_ratio(u.equal_time_slice(i)));
  return worst;
}

/// Relative min-eigenvalue of the full Gram matrix (fully stored fields).
inline double gram_min_eig_ratio(const MomentField& u) {
  return min_eigenvalue_ratio(u.gram_matrix());
}

}  // namespace momentfield
