#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace tavi::numerics {

// Dense row-major tensor of doubles. Rank 1 and rank 2 cover everything the
// project needs; shape is kept generic so checkpoints stay self-describing.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape);
  Tensor(std::vector<std::size_t> shape, std::vector<double> values);

  static Tensor zeros(std::vector<std::size_t> shape) { return Tensor(std::move(shape)); }
  static Tensor full(std::vector<std::size_t> shape, double v);
  static Tensor vector(std::vector<double> values);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values);

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t numel() const { return values_.size(); }
  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  // Rank-2 accessors; throw on rank mismatch.
  std::size_t rows() const;
  std::size_t cols() const;
  double& at(std::size_t r, std::size_t c);
  double at(std::size_t r, std::size_t c) const;

  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }

  std::vector<double>& values() { return values_; }
  const std::vector<double>& values() const { return values_; }

  void fill(double v);
  // Throws NumericError naming `where` if any element is NaN or infinite.
  void ensure_finite(const char* where) const;

  std::string shape_str() const;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> values_;
};

// Shortest decimal representation that round-trips to the same double.
// Used for every CSV we write so re-runs are byte-identical.
std::string format_double(double v);

}  // namespace tavi::numerics
