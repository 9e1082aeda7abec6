#include "implab/sparse_lu.hpp"

#include <umfpack.h>

#include <string>

#include "implab/errors.hpp"

namespace implab {

namespace {
const double* packed(const Complex* p) { return reinterpret_cast<const double*>(p); }
double* packed(Complex* p) { return reinterpret_cast<double*>(p); }
}  // namespace

SparseLU::SparseLU(const SpMat& A) : A_(A) {
  A_.makeCompressed();
  const int n = int(A_.rows());
  double control[UMFPACK_CONTROL], info[UMFPACK_INFO];
  umfpack_zi_defaults(control);
  void* symbolic = nullptr;
  int status = umfpack_zi_symbolic(n, n, A_.outerIndexPtr(), A_.innerIndexPtr(), packed(A_.valuePtr()), nullptr,
                                   &symbolic, control, info);
  if (status != UMFPACK_OK) throw NumericalError("factorize", "symbolic analysis failed, status " + std::to_string(status));
  status = umfpack_zi_numeric(A_.outerIndexPtr(), A_.innerIndexPtr(), packed(A_.valuePtr()), nullptr, symbolic,
                              &numeric_, control, info);
  umfpack_zi_free_symbolic(&symbolic);
  if (status != UMFPACK_OK) {
    if (numeric_) umfpack_zi_free_numeric(&numeric_);
    throw NumericalError("factorize", "numeric factorization failed, status " + std::to_string(status));
  }
}

SparseLU::~SparseLU() {
  if (numeric_) umfpack_zi_free_numeric(&numeric_);
}

void SparseLU::solve(const Complex* b, Complex* x) const {
  double control[UMFPACK_CONTROL], info[UMFPACK_INFO];
  umfpack_zi_defaults(control);
  const int status = umfpack_zi_solve(UMFPACK_A, A_.outerIndexPtr(), A_.innerIndexPtr(), packed(A_.valuePtr()), nullptr,
                                      packed(x), nullptr, packed(b), nullptr, numeric_, control, info);
  if (status != UMFPACK_OK) throw NumericalError("solve", "triangular solve failed, status " + std::to_string(status));
}

}  // namespace implab
