#pragma once

#include <cstddef>
#include <vector>

namespace fadesched {

/// Dense-tableau primal simplex for  max c'x  s.t.  Ax <= b, x >= 0  with
/// b >= 0 (the origin is feasible, so no phase one is needed). Pivots by the
/// largest reduced cost and falls back to Bland's rule after a run of
/// degenerate pivots, which rules out cycling.
struct LpResult {
  enum class Status { Optimal, Unbounded, IterationLimit };
  Status status = Status::Optimal;
  double objective = 0.0;
  std::vector<double> x;     // primal values
  std::vector<double> dual;  // one non-negative price per constraint row
  std::size_t pivots = 0;
};

class DenseSimplex {
 public:
  // `a` is row-major, rows x cols.
  DenseSimplex(std::size_t rows, std::size_t cols, std::vector<double> a, std::vector<double> b,
               std::vector<double> c);

  LpResult solve(std::size_t max_pivots = 1'000'000);

 private:
  double& at(std::size_t r, std::size_t c) { return tableau_[r * width_ + c]; }
  void pivot(std::size_t row, std::size_t col);

  std::size_t rows_;
  std::size_t cols_;
  std::size_t width_;                // cols + rows (slacks) + 1 (rhs)
  std::vector<double> tableau_;      // rows_ + 1 rows; last row is the objective
  std::vector<std::size_t> basis_;   // basic variable per row
};

}  // namespace fadesched
