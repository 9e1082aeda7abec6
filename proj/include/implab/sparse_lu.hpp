#pragma once

#include <Eigen/SparseCore>

#include "implab/grid.hpp"

namespace implab {

using SpMat = Eigen::SparseMatrix<Complex, Eigen::ColMajor, int>;

// UMFPACK factorization of a complex sparse matrix. Factor once, then solve()
// may be called concurrently from several threads.
class SparseLU {
 public:
  explicit SparseLU(const SpMat& A);
  ~SparseLU();
  SparseLU(const SparseLU&) = delete;
  SparseLU& operator=(const SparseLU&) = delete;

  void solve(const Complex* b, Complex* x) const;
  int size() const { return int(A_.rows()); }

 private:
  SpMat A_;
  void* numeric_ = nullptr;
};

}  // namespace implab
