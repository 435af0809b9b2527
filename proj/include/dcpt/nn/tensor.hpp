#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "dcpt/errors.hpp"

namespace dcpt::nn {

// Dense n-d array, row-major flattened. NCHW for activations,
// [out,in,kh,kw] for conv weights.
template <typename Scalar>
struct Tensor {
  std::vector<int> shape;
  Eigen::Array<Scalar, Eigen::Dynamic, 1> data;

  Tensor() = default;
  explicit Tensor(std::vector<int> s) : shape(std::move(s)) {
    data = Eigen::Array<Scalar, Eigen::Dynamic, 1>::Zero(numel_of(shape));
  }

  static Tensor zeros(std::vector<int> s) { return Tensor(std::move(s)); }

  static Tensor scalar(Scalar v) {
    Tensor t({1});
    t.data[0] = v;
    return t;
  }

  static long numel_of(const std::vector<int>& s) {
    long n = 1;
    for (int d : s) n *= d;
    return n;
  }

  long numel() const { return data.size(); }

  int dim(int i) const { return shape.at(static_cast<size_t>(i)); }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  bool all_finite() const { return data.isFinite().all(); }

  static std::string shape_str(const std::vector<int>& s) {
    std::string out = "[";
    for (size_t i = 0; i < s.size(); ++i) {
      if (i) out += ",";
      out += std::to_string(s[i]);
    }
    return out + "]";
  }
};

template <typename Scalar>
using ArrayX = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
using MatrixRM =
    Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

}  // namespace dcpt::nn
