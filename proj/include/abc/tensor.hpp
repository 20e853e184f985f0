#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace abc {

// Dense row-major 2-D array of doubles. The value type behind every matrix
// in the library: activations, parameters, gradients, kernels.
class Tensor {
 public:
  Tensor() = default;
  Tensor(std::size_t rows, std::size_t cols, double fill = 0.0);
  Tensor(std::size_t rows, std::size_t cols, std::vector<double> data);
  Tensor(std::initializer_list<std::initializer_list<double>> rows);

  static Tensor identity(std::size_t n);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& operator[](std::size_t i) { return data_[i]; }

  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }
  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  bool same_shape(const Tensor& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }
  std::string shape_string() const;
  bool all_finite() const;
  Tensor transposed() const;
  void fill(double v);

  Tensor& operator+=(const Tensor& o);
  Tensor& operator*=(double s);

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// a(n×k) · b(k×m)
Tensor matmul(const Tensor& a, const Tensor& b);
// a(n×k) · b(m×k)ᵀ
Tensor matmul_nt(const Tensor& a, const Tensor& b);
// a(k×n)ᵀ · b(k×m)
Tensor matmul_tn(const Tensor& a, const Tensor& b);

// out += a · b, out += a · bᵀ, out += aᵀ · b (shapes must already agree)
void matmul_acc(const Tensor& a, const Tensor& b, Tensor& out);
void matmul_nt_acc(const Tensor& a, const Tensor& b, Tensor& out);
void matmul_tn_acc(const Tensor& a, const Tensor& b, Tensor& out);

double max_abs_diff(const Tensor& a, const Tensor& b);
double max_abs(const Tensor& a);

// Rows reordered so that row i of the result is row perm[i] of x.
Tensor permute_rows(const Tensor& x, std::span<const std::size_t> perm);
// Rows and columns reordered: out(i, j) = x(perm[i], perm[j]).
Tensor permute_symmetric(const Tensor& x, std::span<const std::size_t> perm);

}  // namespace abc
