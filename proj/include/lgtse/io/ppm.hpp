#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "lgtse/common/error.hpp"
#include "lgtse/common/tensor.hpp"

namespace lgtse {

// Binary PPM spectrogram rendering with an inferno-like colormap. Rows of
// the magnitude tensor are frequency (drawn bottom-up), columns are frames.
namespace ppm {

namespace detail {

struct Rgb {
  unsigned char r, g, b;
};

inline Rgb colormap(double x) {
  x = std::clamp(x, 0.0, 1.0);
  // Piecewise-linear blend through black-purple-red-orange-yellow.
  static const double stops[5][3] = {
      {0.0, 0.0, 0.02}, {0.27, 0.0, 0.33}, {0.74, 0.21, 0.24}, {0.98, 0.55, 0.04}, {0.99, 1.0, 0.64}};
  const double pos = x * 4.0;
  const int i = std::min(3, static_cast<int>(pos));
  const double t = pos - i;
  auto lerp = [&](int c) {
    return stops[i][c] + t * (stops[i + 1][c] - stops[i][c]);
  };
  return Rgb{static_cast<unsigned char>(lerp(0) * 255.0 + 0.5),
             static_cast<unsigned char>(lerp(1) * 255.0 + 0.5),
             static_cast<unsigned char>(lerp(2) * 255.0 + 0.5)};
}

}  // namespace detail

// Writes 20*log10(mag) with the given dynamic range below the maximum.
template <class T>
void write_db_image(const std::filesystem::path& path, const Tensor<T>& magnitude,
                    double dyn_range_db = 80.0) {
  if (magnitude.rank() != 2) throw ShapeError("ppm: expected a 2-D magnitude tensor");
  const std::size_t rows = magnitude.dim(0), cols = magnitude.dim(1);

  double max_db = -1e30;
  Tensor<double> db({rows, cols});
  for (std::size_t i = 0; i < magnitude.size(); ++i) {
    db[i] = 20.0 * std::log10(static_cast<double>(magnitude[i]) + 1e-10);
    max_db = std::max(max_db, db[i]);
  }

  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("ppm: cannot open " + path.string());
  f << "P6\n" << cols << " " << rows << "\n255\n";
  for (std::size_t r = rows; r-- > 0;) {
    for (std::size_t c = 0; c < cols; ++c) {
      const double x = (db.at(r, c) - (max_db - dyn_range_db)) / dyn_range_db;
      const detail::Rgb p = detail::colormap(x);
      f.put(static_cast<char>(p.r));
      f.put(static_cast<char>(p.g));
      f.put(static_cast<char>(p.b));
    }
  }
  if (!f) throw IoError("ppm: failed writing " + path.string());
}

}  // namespace ppm
}  // namespace lgtse
