#pragma once
// Dense row-major tensor over double. All internal compute is 64-bit; 32-bit
// precision exists only at file boundaries (dataset / checkpoint writers).

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "errors.hpp"
#include "rng.hpp"

namespace hqnoise {

using Shape = std::vector<int>;

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "(";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ")";
  return os.str();
}

inline size_t shape_numel(const Shape& s) {
  size_t n = 1;
  for (int d : s) {
    if (d <= 0) throw ShapeError("non-positive dimension in shape " + shape_str(s));
    n *= static_cast<size_t>(d);
  }
  return n;
}

class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape shape, double fill = 0.0)
      : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}

  static Tensor zeros_like(const Tensor& t) { return Tensor(t.shape_); }

  static Tensor full_like(const Tensor& t, double v) { return Tensor(t.shape_, v); }

  static Tensor randn(Shape shape, Rng& rng, double scale = 1.0) {
    Tensor t(std::move(shape));
    for (double& v : t.data_) v = scale * rng.normal();
    return t;
  }

  const Shape& shape() const { return shape_; }
  int ndim() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_[static_cast<size_t>(i)]; }
  size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  double& operator[](size_t i) { return data_[i]; }
  double operator[](size_t i) const { return data_[i]; }

  // 3-D accessors (C,H,W); the layer stack works on rank-3 tensors.
  double& at(int c, int y, int x) {
    return data_[(static_cast<size_t>(c) * shape_[1] + y) * shape_[2] + x];
  }
  const double& at(int c, int y, int x) const {
    return data_[(static_cast<size_t>(c) * shape_[1] + y) * shape_[2] + x];
  }

  // 4-D accessors (O,C,kh,kw) for convolution kernels.
  double& at(int o, int c, int y, int x) {
    return data_[((static_cast<size_t>(o) * shape_[1] + c) * shape_[2] + y) * shape_[3] + x];
  }
  const double& at(int o, int c, int y, int x) const {
    return data_[((static_cast<size_t>(o) * shape_[1] + c) * shape_[2] + y) * shape_[3] + x];
  }

  Tensor& operator+=(const Tensor& o) {
    require_same_shape(o, "operator+=");
    for (size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
  }
  Tensor& operator-=(const Tensor& o) {
    require_same_shape(o, "operator-=");
    for (size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
    return *this;
  }
  Tensor& operator*=(double s) {
    for (double& v : data_) v *= s;
    return *this;
  }
  Tensor& operator+=(double s) {
    for (double& v : data_) v += s;
    return *this;
  }

  friend Tensor operator+(Tensor a, const Tensor& b) { return a += b; }
  friend Tensor operator-(Tensor a, const Tensor& b) { return a -= b; }
  friend Tensor operator*(Tensor a, double s) { return a *= s; }
  friend Tensor operator*(double s, Tensor a) { return a *= s; }
  friend Tensor operator+(Tensor a, double s) { return a += s; }
  friend Tensor operator+(double s, Tensor a) { return a += s; }

  // y += alpha * x
  void axpy(double alpha, const Tensor& x) {
    require_same_shape(x, "axpy");
    for (size_t i = 0; i < data_.size(); ++i) data_[i] += alpha * x.data_[i];
  }

  double sum() const {
    double s = 0.0;
    for (double v : data_) s += v;
    return s;
  }

  double mean() const {
    if (data_.empty()) throw DataError("mean of empty tensor");
    return sum() / static_cast<double>(data_.size());
  }

  // Population standard deviation (divide by N).
  double std_pop() const {
    double mu = mean();
    double acc = 0.0;
    for (double v : data_) acc += (v - mu) * (v - mu);
    return std::sqrt(acc / static_cast<double>(data_.size()));
  }

  double min() const { return *std::min_element(data_.begin(), data_.end()); }
  double max() const { return *std::max_element(data_.begin(), data_.end()); }

  double dot(const Tensor& o) const {
    require_same_shape(o, "dot");
    double s = 0.0;
    for (size_t i = 0; i < data_.size(); ++i) s += data_[i] * o.data_[i];
    return s;
  }

  double norm() const { return std::sqrt(dot(*this)); }

  bool all_finite() const {
    for (double v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  void require_finite(const char* where) const {
    if (!all_finite()) throw DataError(std::string("non-finite values in ") + where);
  }

  void require_same_shape(const Tensor& o, const char* op) const {
    if (shape_ == o.shape_) return;
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(shape_) +
                     " vs " + shape_str(o.shape_));
  }

 private:
  Shape shape_;
  std::vector<double> data_;
};

// Channel concatenation of rank-3 tensors with matching spatial dims.
inline Tensor concat_channels(const Tensor& a, const Tensor& b) {
  if (a.ndim() != 3 || b.ndim() != 3)
    throw ShapeError("concat_channels expects rank-3 tensors");
  if (a.dim(1) != b.dim(1) || a.dim(2) != b.dim(2))
    throw ShapeError("concat_channels: spatial mismatch " + shape_str(a.shape()) +
                     " vs " + shape_str(b.shape()));
  Tensor out({a.dim(0) + b.dim(0), a.dim(1), a.dim(2)});
  std::copy(a.data(), a.data() + a.size(), out.data());
  std::copy(b.data(), b.data() + b.size(), out.data() + a.size());
  return out;
}

// Inverse of concat_channels for gradients: splits grad at channel c_a.
inline std::pair<Tensor, Tensor> split_channels(const Tensor& g, int c_a) {
  if (g.ndim() != 3 || c_a <= 0 || c_a >= g.dim(0))
    throw ShapeError("split_channels: bad split channel for " + shape_str(g.shape()));
  Tensor a({c_a, g.dim(1), g.dim(2)});
  Tensor b({g.dim(0) - c_a, g.dim(1), g.dim(2)});
  std::copy(g.data(), g.data() + a.size(), a.data());
  std::copy(g.data() + a.size(), g.data() + g.size(), b.data());
  return {std::move(a), std::move(b)};
}

}  // namespace hqnoise
