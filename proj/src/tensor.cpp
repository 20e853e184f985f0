#include "abc/tensor.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>

#include "abc/errors.hpp"

namespace abc {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapC = Eigen::Map<const RowMat>;
using Map = Eigen::Map<RowMat>;

MapC view(const Tensor& t) {
  return MapC(t.data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
}
Map view(Tensor& t) {
  return Map(t.data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
}

[[noreturn]] void shape_mismatch(const char* op, const Tensor& a, const Tensor& b) {
  throw ShapeError(std::string(op) + ": incompatible shapes " + a.shape_string() + " and " +
                   b.shape_string());
}

}  // namespace

Tensor::Tensor(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Tensor::Tensor(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols) {
    throw ShapeError("Tensor: data length " + std::to_string(data_.size()) + " does not match " +
                     std::to_string(rows) + "x" + std::to_string(cols));
  }
}

Tensor::Tensor(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ ? rows.begin()->size() : 0;
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) throw ShapeError("Tensor: ragged initializer");
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

Tensor Tensor::identity(std::size_t n) {
  Tensor t(n, n);
  for (std::size_t i = 0; i < n; ++i) t(i, i) = 1.0;
  return t;
}

std::string Tensor::shape_string() const {
  return std::to_string(rows_) + "x" + std::to_string(cols_);
}

bool Tensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Tensor Tensor::transposed() const {
  Tensor t(cols_, rows_);
  for (std::size_t r = 0; r < rows_; ++r)
    for (std::size_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
  return t;
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

Tensor& Tensor::operator+=(const Tensor& o) {
  if (!same_shape(o)) shape_mismatch("Tensor::operator+=", *this, o);
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
  return *this;
}

Tensor& Tensor::operator*=(double s) {
  for (double& v : data_) v *= s;
  return *this;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.rows()) shape_mismatch("matmul", a, b);
  Tensor out(a.rows(), b.cols());
  matmul_acc(a, b, out);
  return out;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  if (a.cols() != b.cols()) shape_mismatch("matmul_nt", a, b);
  Tensor out(a.rows(), b.rows());
  matmul_nt_acc(a, b, out);
  return out;
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
  if (a.rows() != b.rows()) shape_mismatch("matmul_tn", a, b);
  Tensor out(a.cols(), b.cols());
  matmul_tn_acc(a, b, out);
  return out;
}

void matmul_acc(const Tensor& a, const Tensor& b, Tensor& out) {
  if (a.cols() != b.rows() || out.rows() != a.rows() || out.cols() != b.cols())
    shape_mismatch("matmul_acc", a, b);
  if (a.empty() || b.empty()) return;
  view(out).noalias() += view(a) * view(b);
}

void matmul_nt_acc(const Tensor& a, const Tensor& b, Tensor& out) {
  if (a.cols() != b.cols() || out.rows() != a.rows() || out.cols() != b.rows())
    shape_mismatch("matmul_nt_acc", a, b);
  if (a.empty() || b.empty()) return;
  view(out).noalias() += view(a) * view(b).transpose();
}

void matmul_tn_acc(const Tensor& a, const Tensor& b, Tensor& out) {
  if (a.rows() != b.rows() || out.rows() != a.cols() || out.cols() != b.cols())
    shape_mismatch("matmul_tn_acc", a, b);
  if (a.empty() || b.empty()) return;
  view(out).noalias() += view(a).transpose() * view(b);
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) shape_mismatch("max_abs_diff", a, b);
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

double max_abs(const Tensor& a) {
  double m = 0.0;
  for (double v : a.values()) m = std::max(m, std::abs(v));
  return m;
}

Tensor permute_rows(const Tensor& x, std::span<const std::size_t> perm) {
  if (perm.size() != x.rows()) throw ShapeError("permute_rows: permutation length mismatch");
  Tensor out(x.rows(), x.cols());
  for (std::size_t i = 0; i < perm.size(); ++i) {
    auto src = x.row(perm[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

Tensor permute_symmetric(const Tensor& x, std::span<const std::size_t> perm) {
  if (x.rows() != x.cols() || perm.size() != x.rows())
    throw ShapeError("permute_symmetric: needs a square matrix and matching permutation");
  Tensor out(x.rows(), x.cols());
  for (std::size_t i = 0; i < perm.size(); ++i)
    for (std::size_t j = 0; j < perm.size(); ++j) out(i, j) = x(perm[i], perm[j]);
  return out;
}

}  // namespace abc
