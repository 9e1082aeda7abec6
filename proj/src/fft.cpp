#include "implab/fft.hpp"

#include <fftw3.h>

#include <mutex>
#include <vector>

namespace implab {

namespace {
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}
}  // namespace

Fft3::Fft3(int M) : M_(M) {
  std::lock_guard<std::mutex> lock(planner_mutex());
  std::vector<Complex> buf(std::size_t(M) * M * M);
  auto* p = reinterpret_cast<fftw_complex*>(buf.data());
  // FFTW's 3-D layout is row-major (last index fastest), which matches x-fastest
  // storage with the axes listed as (z, y, x).
  fwd_ = fftw_plan_dft_3d(M, M, M, p, p, FFTW_FORWARD, FFTW_ESTIMATE | FFTW_UNALIGNED);
  bwd_ = fftw_plan_dft_3d(M, M, M, p, p, FFTW_BACKWARD, FFTW_ESTIMATE | FFTW_UNALIGNED);
}

Fft3::~Fft3() {
  std::lock_guard<std::mutex> lock(planner_mutex());
  fftw_destroy_plan(static_cast<fftw_plan>(fwd_));
  fftw_destroy_plan(static_cast<fftw_plan>(bwd_));
}

void Fft3::forward(Complex* data) const {
  auto* p = reinterpret_cast<fftw_complex*>(data);
  fftw_execute_dft(static_cast<fftw_plan>(fwd_), p, p);
}

void Fft3::backward(Complex* data) const {
  auto* p = reinterpret_cast<fftw_complex*>(data);
  fftw_execute_dft(static_cast<fftw_plan>(bwd_), p, p);
}

}  // namespace implab
