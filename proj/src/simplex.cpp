#include "fadesched/simplex.hpp"

#include <cmath>
#include <limits>

#include "fadesched/errors.hpp"

namespace fadesched {

namespace {
constexpr double kPivotEps = 1e-12;
constexpr double kOptimalityEps = 1e-11;
constexpr std::size_t kDegenerateStreak = 50;
}  // namespace

DenseSimplex::DenseSimplex(std::size_t rows, std::size_t cols, std::vector<double> a,
                           std::vector<double> b, std::vector<double> c)
    : rows_(rows), cols_(cols), width_(cols + rows + 1) {
  if (a.size() != rows * cols || b.size() != rows || c.size() != cols) {
    fail(ErrorKind::Validation, "simplex: inconsistent dimensions");
  }
  tableau_.assign((rows_ + 1) * width_, 0.0);
  basis_.resize(rows_);
  for (std::size_t r = 0; r < rows_; ++r) {
    if (b[r] < 0.0) fail(ErrorKind::Validation, "simplex: right-hand side must be non-negative");
    for (std::size_t k = 0; k < cols_; ++k) at(r, k) = a[r * cols_ + k];
    at(r, cols_ + r) = 1.0;
    at(r, width_ - 1) = b[r];
    basis_[r] = cols_ + r;
  }
  for (std::size_t k = 0; k < cols_; ++k) at(rows_, k) = -c[k];
}

void DenseSimplex::pivot(std::size_t row, std::size_t col) {
  const double inv = 1.0 / at(row, col);
  double* prow = &tableau_[row * width_];
  for (std::size_t k = 0; k < width_; ++k) prow[k] *= inv;
  prow[col] = 1.0;
  for (std::size_t r = 0; r <= rows_; ++r) {
    if (r == row) continue;
    double* target = &tableau_[r * width_];
    const double factor = target[col];
    if (factor == 0.0) continue;
    for (std::size_t k = 0; k < width_; ++k) target[k] -= factor * prow[k];
    target[col] = 0.0;
  }
  basis_[row] = col;
}

LpResult DenseSimplex::solve(std::size_t max_pivots) {
  LpResult result;
  const std::size_t vars = cols_ + rows_;
  bool bland = false;
  std::size_t degenerate = 0;
  for (;;) {
    if (result.pivots >= max_pivots) {
      result.status = LpResult::Status::IterationLimit;
      break;
    }
    // entering column
    std::size_t enter = vars;
    double most_negative = -kOptimalityEps;
    for (std::size_t k = 0; k < vars; ++k) {
      const double reduced = at(rows_, k);
      if (reduced < most_negative) {
        enter = k;
        if (bland) break;
        most_negative = reduced;
      }
    }
    if (enter == vars) break;
    // leaving row: min ratio, ties by smallest basic index
    std::size_t leave = rows_;
    double best_ratio = std::numeric_limits<double>::infinity();
    for (std::size_t r = 0; r < rows_; ++r) {
      const double coef = at(r, enter);
      if (coef <= kPivotEps) continue;
      const double ratio = at(r, width_ - 1) / coef;
      if (ratio < best_ratio - 1e-15 ||
          (std::abs(ratio - best_ratio) <= 1e-15 && basis_[r] < basis_[leave])) {
        best_ratio = ratio;
        leave = r;
      }
    }
    if (leave == rows_) {
      result.status = LpResult::Status::Unbounded;
      break;
    }
    if (best_ratio <= 1e-15) {
      if (++degenerate >= kDegenerateStreak) bland = true;
    } else {
      degenerate = 0;
    }
    pivot(leave, enter);
    ++result.pivots;
  }
  result.x.assign(cols_, 0.0);
  for (std::size_t r = 0; r < rows_; ++r) {
    if (basis_[r] < cols_) result.x[basis_[r]] = at(r, width_ - 1);
  }
  result.dual.resize(rows_);
  for (std::size_t r = 0; r < rows_; ++r) result.dual[r] = std::max(0.0, at(rows_, cols_ + r));
  result.objective = at(rows_, width_ - 1);
  return result;
}

}  // namespace fadesched
