#pragma once

#include <fftw3.h>

#include <complex>
#include <cstddef>
#include <memory>
#include <vector>

namespace afcmem::detail {

// Out-of-place complex DFT with an owned FFTW plan. sign -1 is forward (e^{-2 pi i kn/N}).
// Unnormalised in both directions.
class fft_plan {
 public:
  fft_plan(std::size_t n, int sign);
  ~fft_plan();
  fft_plan(const fft_plan&) = delete;
  fft_plan& operator=(const fft_plan&) = delete;

  std::size_t size() const { return n_; }
  void execute(const std::vector<std::complex<double>>& in, std::vector<std::complex<double>>& out);

 private:
  std::size_t n_;
  fftw_complex* in_ = nullptr;
  fftw_complex* out_ = nullptr;
  fftw_plan plan_ = nullptr;
};

}  // namespace afcmem::detail
