#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace samlab::diff {

/// Dense row-major array of doubles. Rank 0 (scalar), 1 or 2 is all the
/// toy architecture needs.
class Tensor {
 public:
  Tensor() : shape_{}, data_(1, 0.0) {}
  Tensor(std::vector<std::size_t> shape, std::vector<double> data);
  explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0);

  static Tensor scalar(double value) { return Tensor({}, std::vector<double>{value}); }
  static Tensor vector(std::vector<double> values);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values);
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);

  const std::vector<std::size_t>& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  std::size_t dim(std::size_t axis) const;

  /// Rows and columns when the tensor is viewed as a matrix; a vector is a
  /// single row, a scalar is 1x1.
  std::size_t rows() const noexcept;
  std::size_t cols() const noexcept;

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  /// Only valid for a single-element tensor.
  double item() const;

  bool all_finite() const noexcept;
  bool same_shape(const Tensor& other) const noexcept { return shape_ == other.shape_; }
  std::string shape_string() const;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

/// Ordered, named parameter tensors with a flattening order fixed at
/// construction.
class ParamVector {
 public:
  struct Segment {
    std::string name;
    Tensor value;
    friend bool operator==(const Segment&, const Segment&) = default;
  };

  ParamVector() = default;
  explicit ParamVector(std::vector<Segment> segments) : segments_(std::move(segments)) {}

  void add(std::string name, Tensor value);

  const std::vector<Segment>& segments() const noexcept { return segments_; }
  std::size_t segment_count() const noexcept { return segments_.size(); }
  const Segment& segment(std::size_t i) const { return segments_.at(i); }
  Tensor& tensor(std::size_t i) { return segments_.at(i).value; }
  const Tensor& tensor(std::size_t i) const { return segments_.at(i).value; }
  const Tensor& tensor(const std::string& name) const;
  Tensor& tensor(const std::string& name);
  bool has(const std::string& name) const noexcept;

  /// Total number of scalar entries.
  std::size_t size() const noexcept;

  std::vector<double> flatten() const;
  /// Overwrites every entry from `flat`, which must have exactly size() values.
  void unflatten(std::span<const double> flat);
  /// A ParamVector with this layout and all entries zero.
  ParamVector zeros_like() const;

  double global_norm() const;
  double dot(const ParamVector& other) const;
  /// this += alpha * other
  void axpy(double alpha, const ParamVector& other);
  void scale(double alpha);

  bool congruent(const ParamVector& other) const noexcept;
  bool all_finite() const noexcept;

  friend bool operator==(const ParamVector&, const ParamVector&) = default;

 private:
  std::vector<Segment> segments_;
};

/// Gradients share the layout of the parameters they differentiate.
using Gradient = ParamVector;

}  // namespace samlab::diff
