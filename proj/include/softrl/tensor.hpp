// SPDX-License-Identifier: Apache-2.0
//
// Dense row-major matrix of doubles. Scalars are 1x1, row vectors 1xN.

#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

namespace softrl {

struct Tensor {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Tensor() = default;
  Tensor(int r, int c) : rows(r), cols(c), data(static_cast<std::size_t>(r) * c, 0.0) {
    if (r < 0 || c < 0) throw std::invalid_argument("Tensor: negative dimension");
  }

  static Tensor zeros(int r, int c) { return Tensor(r, c); }

  static Tensor full(int r, int c, double v) {
    Tensor t(r, c);
    std::fill(t.data.begin(), t.data.end(), v);
    return t;
  }

  static Tensor scalar(double v) {
    Tensor t(1, 1);
    t.data[0] = v;
    return t;
  }

  static Tensor row(std::initializer_list<double> vs) {
    Tensor t(1, static_cast<int>(vs.size()));
    int j = 0;
    for (double v : vs) t.data[j++] = v;
    return t;
  }

  static Tensor from_rows(int r, int c, std::initializer_list<double> vs) {
    if (static_cast<int>(vs.size()) != r * c)
      throw std::invalid_argument("Tensor::from_rows: size mismatch");
    Tensor t(r, c);
    int j = 0;
    for (double v : vs) t.data[j++] = v;
    return t;
  }

  static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rs) {
    const int r = static_cast<int>(rs.size());
    const int c = r > 0 ? static_cast<int>(rs.begin()->size()) : 0;
    Tensor t(r, c);
    int i = 0;
    for (const auto& rv : rs) {
      if (static_cast<int>(rv.size()) != c)
        throw std::invalid_argument("Tensor::from_rows: ragged rows");
      int j = 0;
      for (double v : rv) t.at(i, j++) = v;
      ++i;
    }
    return t;
  }

  int size() const { return rows * cols; }

  double& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
  double at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }

  double& operator[](int i) { return data[i]; }
  double operator[](int i) const { return data[i]; }

  bool same_shape(const Tensor& o) const { return rows == o.rows && cols == o.cols; }

  bool all_finite() const {
    for (double v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }

  void fill(double v) { std::fill(data.begin(), data.end(), v); }

  std::string shape_str() const {
    return std::to_string(rows) + "x" + std::to_string(cols);
  }
};

inline double dot(const Tensor& a, const Tensor& b) {
  double s = 0.0;
  for (int i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double max_abs(const Tensor& a) {
  double m = 0.0;
  for (double v : a.data) m = std::max(m, std::fabs(v));
  return m;
}

}  // namespace softrl
