// SPDX-License-Identifier: MIT
#pragma once

/**
 * @file fft_util.hpp
 * @brief Internal RAII wrappers around FFTW plans.
 *
 * FFTW plan creation/destruction is not thread-safe; execution on distinct
 * buffers is. Every plan here owns its aligned buffers and is created under a
 * process-wide mutex, so Monte-Carlo workers can each hold their own plans.
 */

#include <complex>
#include <cstring>
#include <mutex>

#include <fftw3.h>

#include "anchorsense/common.hpp"

namespace asense::detail {

inline std::mutex& fftw_mutex() {
  static std::mutex m;
  return m;
}

/// One-dimensional complex transform with owned buffers.
class Fft1D {
 public:
  Fft1D(int n, int sign) : n_(n) {
    std::lock_guard<std::mutex> lock(fftw_mutex());
    in_ = fftw_alloc_complex(n);
    out_ = fftw_alloc_complex(n);
    plan_ = fftw_plan_dft_1d(n, in_, out_, sign, FFTW_ESTIMATE);
  }
  ~Fft1D() {
    std::lock_guard<std::mutex> lock(fftw_mutex());
    fftw_destroy_plan(plan_);
    fftw_free(in_);
    fftw_free(out_);
  }
  Fft1D(const Fft1D&) = delete;
  Fft1D& operator=(const Fft1D&) = delete;

  int size() const { return n_; }
  cplx* in() { return reinterpret_cast<cplx*>(in_); }
  const cplx* out() const { return reinterpret_cast<const cplx*>(out_); }

  void zero_input() { std::memset(in_, 0, sizeof(fftw_complex) * n_); }
  void execute() { fftw_execute(plan_); }

 private:
  int n_;
  fftw_complex* in_;
  fftw_complex* out_;
  fftw_plan plan_;
};

/// Two-dimensional complex transform (row-major n0 x n1) with owned buffers.
class Fft2D {
 public:
  Fft2D(int n0, int n1, int sign) : n0_(n0), n1_(n1) {
    // FFTW applies one sign to both axes; callers needing mixed signs remap
    // the affected axis at readout instead.
    std::lock_guard<std::mutex> lock(fftw_mutex());
    in_ = fftw_alloc_complex(static_cast<std::size_t>(n0) * n1);
    out_ = fftw_alloc_complex(static_cast<std::size_t>(n0) * n1);
    plan_ = fftw_plan_dft_2d(n0, n1, in_, out_, sign, FFTW_ESTIMATE);
  }
  ~Fft2D() {
    std::lock_guard<std::mutex> lock(fftw_mutex());
    fftw_destroy_plan(plan_);
    fftw_free(in_);
    fftw_free(out_);
  }
  Fft2D(const Fft2D&) = delete;
  Fft2D& operator=(const Fft2D&) = delete;

  cplx* in() { return reinterpret_cast<cplx*>(in_); }
  const cplx* out() const { return reinterpret_cast<const cplx*>(out_); }

  void zero_input() { std::memset(in_, 0, sizeof(fftw_complex) * n0_ * n1_); }
  void execute() { fftw_execute(plan_); }

 private:
  int n0_, n1_;
  fftw_complex* in_;
  fftw_complex* out_;
  fftw_plan plan_;
};

}  // namespace asense::detail
