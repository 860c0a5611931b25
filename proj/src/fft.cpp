#include "fft.hpp"

#include <cstring>
#include <mutex>
#include <stdexcept>

namespace afcmem::detail {

namespace {
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}
}  // namespace

fft_plan::fft_plan(std::size_t n, int sign) : n_(n) {
  if (n == 0) throw std::invalid_argument("fft size must be positive");
  std::lock_guard<std::mutex> lock(planner_mutex());
  in_ = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * n));
  out_ = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * n));
  if (!in_ || !out_) {
    fftw_free(in_);
    fftw_free(out_);
    throw std::bad_alloc();
  }
  plan_ = fftw_plan_dft_1d(static_cast<int>(n), in_, out_, sign, FFTW_ESTIMATE);
}

fft_plan::~fft_plan() {
  std::lock_guard<std::mutex> lock(planner_mutex());
  if (plan_) fftw_destroy_plan(plan_);
  fftw_free(in_);
  fftw_free(out_);
}

void fft_plan::execute(const std::vector<std::complex<double>>& in,
                       std::vector<std::complex<double>>& out) {
  if (in.size() != n_) throw std::invalid_argument("fft input size mismatch");
  std::memcpy(in_, in.data(), sizeof(fftw_complex) * n_);
  fftw_execute(plan_);
  out.resize(n_);
  std::memcpy(static_cast<void*>(out.data()), out_, sizeof(fftw_complex) * n_);
}

}  // namespace afcmem::detail
