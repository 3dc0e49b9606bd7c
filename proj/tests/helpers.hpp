#pragma once

#include <vector>

#include "oracles.hpp"
#include "tadmm/linalg.hpp"

namespace testing_util {

inline tadmm::DenseMatrix to_dense(const oracle::Mat& m) {
  const std::size_t r = m.size(), c = r ? m[0].size() : 0;
  tadmm::DenseMatrix d(r, c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) d(i, j) = m[i][j];
  return d;
}

inline oracle::Mat to_rows(const tadmm::DenseMatrix& d) {
  oracle::Mat m = oracle::zeros(d.rows(), d.cols());
  for (std::size_t i = 0; i < d.rows(); ++i)
    for (std::size_t j = 0; j < d.cols(); ++j) m[i][j] = d(i, j);
  return m;
}

inline double rel_diff(double a, double b) {
  return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  double w = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) w = std::max(w, std::abs(a[i] - b[i]));
  return w;
}

}  // namespace testing_util
