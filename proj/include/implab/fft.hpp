#pragma once

#include "implab/grid.hpp"

namespace implab {

// Unnormalized in-place 3-D complex DFT of size M^3 (x-fastest storage).
// Plans are created under a global lock; execution is thread-safe.
class Fft3 {
 public:
  explicit Fft3(int M);
  ~Fft3();
  Fft3(const Fft3&) = delete;
  Fft3& operator=(const Fft3&) = delete;

  void forward(Complex* data) const;
  void backward(Complex* data) const;
  int size() const { return M_; }

 private:
  int M_;
  void* fwd_ = nullptr;
  void* bwd_ = nullptr;
};

}  // namespace implab
