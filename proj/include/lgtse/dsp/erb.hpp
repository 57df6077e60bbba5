#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "lgtse/common/error.hpp"
#include "lgtse/common/tensor.hpp"

namespace lgtse {

// Triangular filterbank on the ERB-rate scale, plus its generalized inverse.
//
// Band centres are spaced evenly in ERB rate between DC and Nyquist and then
// snapped to distinct STFT bins, so narrow low-frequency bands degenerate to
// single bins (identity region) while high bands merge several bins. The
// unprojection matrix U = P^T (P P^T)^-1 satisfies P U = I, which makes
// project(unproject(project(x))) == project(x) up to round-off.
class ErbFilterbank {
 public:
  ErbFilterbank(std::size_t n_bins, std::size_t n_bands, int sample_rate) {
    if (n_bands < 2 || n_bands >= n_bins)
      throw InvalidInputError("erb: need 2 <= bands < F");
    n_bins_ = n_bins;
    n_bands_ = n_bands;
    build(sample_rate);
  }

  static double hz_to_erb_rate(double hz) { return 21.4 * std::log10(1.0 + 0.00437 * hz); }
  static double erb_rate_to_hz(double e) { return (std::pow(10.0, e / 21.4) - 1.0) / 0.00437; }

  std::size_t bins() const { return n_bins_; }
  std::size_t bands() const { return n_bands_; }

  // (bands, F), rows nonnegative and summing to 1.
  const Tensor<double>& projection() const { return proj_; }
  // (F, bands), generalized inverse of the projection.
  const Tensor<double>& unprojection() const { return unproj_; }

  // x: (F, T) -> (bands, T)
  template <class T>
  Tensor<T> project(const Tensor<T>& x) const {
    return apply(proj_, x, "erb_project");
  }

  // x: (bands, T) -> (F, T)
  template <class T>
  Tensor<T> unproject(const Tensor<T>& x) const {
    return apply(unproj_, x, "erb_unproject");
  }

 private:
  template <class T>
  static Tensor<T> apply(const Tensor<double>& m, const Tensor<T>& x, const char* where) {
    if (x.rank() != 2 || x.dim(0) != m.dim(1))
      throw ShapeError(std::string(where) + ": expected (" + std::to_string(m.dim(1)) +
                       ", T), got " + x.shape_str());
    const std::size_t rows = m.dim(0), inner = m.dim(1), cols = x.dim(1);
    Tensor<T> out({rows, cols});
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t k = 0; k < inner; ++k) {
        const T w = static_cast<T>(m.at(r, k));
        if (w == T(0)) continue;
        const T* src = &x.at(k, 0);
        T* dst = &out.at(r, 0);
        for (std::size_t c = 0; c < cols; ++c) dst[c] += w * src[c];
      }
    }
    return out;
  }

  void build(int sample_rate) {
    const double nyquist = sample_rate / 2.0;
    const double bin_hz = nyquist / static_cast<double>(n_bins_ - 1);
    const std::size_t n_pts = n_bands_ + 2;

    // Even ERB-rate grid snapped to strictly increasing bin indices.
    std::vector<std::size_t> idx(n_pts);
    const double e_max = hz_to_erb_rate(nyquist);
    for (std::size_t i = 0; i < n_pts; ++i) {
      const double hz = erb_rate_to_hz(e_max * static_cast<double>(i) /
                                       static_cast<double>(n_pts - 1));
      idx[i] = static_cast<std::size_t>(hz / bin_hz + 0.5);
    }
    for (std::size_t i = 1; i < n_pts; ++i)
      idx[i] = std::max(idx[i], idx[i - 1] + 1);
    // Snap the top of the grid back inside [0, F) keeping strict order.
    if (idx[n_pts - 1] > n_bins_ - 1) {
      idx[n_pts - 1] = n_bins_ - 1;
      for (std::size_t i = n_pts - 1; i-- > 0;)
        idx[i] = std::min(idx[i], idx[i + 1] - 1);
    }

    proj_ = Tensor<double>({n_bands_, n_bins_});
    for (std::size_t b = 0; b < n_bands_; ++b) {
      const double lo = static_cast<double>(idx[b]);
      const double mid = static_cast<double>(idx[b + 1]);
      const double hi = static_cast<double>(idx[b + 2]);
      for (std::size_t f = 0; f < n_bins_; ++f) {
        const double x = static_cast<double>(f);
        double w = 0.0;
        if (x > lo && x < mid) w = (x - lo) / (mid - lo);
        else if (x == mid) w = 1.0;
        else if (x > mid && x < hi) w = (hi - x) / (hi - mid);
        proj_.at(b, f) = w;
      }
    }
    // Plateau extensions so edge bins (DC, Nyquist) are covered.
    for (std::size_t f = 0; f < idx[1]; ++f) proj_.at(0, f) = 1.0;
    for (std::size_t f = idx[n_bands_] + 1; f < n_bins_; ++f) proj_.at(n_bands_ - 1, f) = 1.0;

    // Row-normalise: each band is a convex combination of bins.
    for (std::size_t b = 0; b < n_bands_; ++b) {
      double s = 0.0;
      for (std::size_t f = 0; f < n_bins_; ++f) s += proj_.at(b, f);
      for (std::size_t f = 0; f < n_bins_; ++f) proj_.at(b, f) /= s;
    }

    build_unprojection();
  }

  // U = P^T (P P^T)^-1 via Cholesky of the small SPD Gram matrix.
  void build_unprojection() {
    const std::size_t n = n_bands_;
    Tensor<double> gram({n, n});
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j <= i; ++j) {
        double s = 0.0;
        for (std::size_t f = 0; f < n_bins_; ++f) s += proj_.at(i, f) * proj_.at(j, f);
        gram.at(i, j) = s;
        gram.at(j, i) = s;
      }

    Tensor<double> chol({n, n});
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j <= i; ++j) {
        double s = gram.at(i, j);
        for (std::size_t k = 0; k < j; ++k) s -= chol.at(i, k) * chol.at(j, k);
        if (i == j) {
          if (s <= 0.0) throw InvalidStateError("erb: filterbank rows are degenerate");
          chol.at(i, i) = std::sqrt(s);
        } else {
          chol.at(i, j) = s / chol.at(j, j);
        }
      }
    }

    // Solve G y = p_col for every column of P, then U = Y^T.
    unproj_ = Tensor<double>({n_bins_, n});
    std::vector<double> y(n);
    for (std::size_t f = 0; f < n_bins_; ++f) {
      for (std::size_t i = 0; i < n; ++i) {
        double s = proj_.at(i, f);
        for (std::size_t k = 0; k < i; ++k) s -= chol.at(i, k) * y[k];
        y[i] = s / chol.at(i, i);
      }
      for (std::size_t i = n; i-- > 0;) {
        double s = y[i];
        for (std::size_t k = i + 1; k < n; ++k) s -= chol.at(k, i) * y[k];
        y[i] = s / chol.at(i, i);
      }
      for (std::size_t b = 0; b < n; ++b) unproj_.at(f, b) = y[b];
    }
  }

  std::size_t n_bins_ = 0;
  std::size_t n_bands_ = 0;
  Tensor<double> proj_;
  Tensor<double> unproj_;
};

}  // namespace lgtse
