#include "samlab/tensor.hpp"

#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>
#include <utility>

#include "samlab/errors.hpp"

namespace samlab::diff {

namespace {

std::size_t product(const std::vector<std::size_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_.size() > 2) {
    throw DimensionError("tensors of rank > 2 are not supported");
  }
  if (product(shape_) != data_.size()) {
    throw DimensionError("shape " + shape_string() + " does not match " +
                         std::to_string(data_.size()) + " values");
  }
}

Tensor::Tensor(std::vector<std::size_t> shape, double fill)
    : Tensor(shape, std::vector<double>(product(shape), fill)) {}

Tensor Tensor::vector(std::vector<double> values) {
  const std::size_t n = values.size();
  return Tensor({n}, std::move(values));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
  return Tensor({rows, cols}, std::move(values));
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.begin()->size();
  std::vector<double> values;
  values.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) {
      throw DimensionError("ragged matrix literal");
    }
    values.insert(values.end(), row.begin(), row.end());
  }
  return Tensor({r, c}, std::move(values));
}

std::size_t Tensor::dim(std::size_t axis) const {
  if (axis >= shape_.size()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " +
                         shape_string());
  }
  return shape_[axis];
}

std::size_t Tensor::rows() const noexcept { return shape_.size() == 2 ? shape_[0] : 1; }

std::size_t Tensor::cols() const noexcept {
  if (shape_.empty()) {
    return 1;
  }
  return shape_.back();
}

double Tensor::item() const {
  if (data_.size() != 1) {
    throw DimensionError("item() on tensor of shape " + shape_string());
  }
  return data_[0];
}

bool Tensor::all_finite() const noexcept {
  for (double x : data_) {
    if (!std::isfinite(x)) {
      return false;
    }
  }
  return true;
}

std::string Tensor::shape_string() const {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape_.size(); ++i) {
    out << (i ? "x" : "") << shape_[i];
  }
  out << ']';
  return out.str();
}

void ParamVector::add(std::string name, Tensor value) {
  if (has(name)) {
    throw ContractError("duplicate parameter segment '" + name + "'");
  }
  segments_.push_back({std::move(name), std::move(value)});
}

const Tensor& ParamVector::tensor(const std::string& name) const {
  for (const auto& s : segments_) {
    if (s.name == name) {
      return s.value;
    }
  }
  throw ContractError("no parameter segment '" + name + "'");
}

Tensor& ParamVector::tensor(const std::string& name) {
  return const_cast<Tensor&>(std::as_const(*this).tensor(name));
}

bool ParamVector::has(const std::string& name) const noexcept {
  for (const auto& s : segments_) {
    if (s.name == name) {
      return true;
    }
  }
  return false;
}

std::size_t ParamVector::size() const noexcept {
  std::size_t n = 0;
  for (const auto& s : segments_) {
    n += s.value.size();
  }
  return n;
}

std::vector<double> ParamVector::flatten() const {
  std::vector<double> flat;
  flat.reserve(size());
  for (const auto& s : segments_) {
    flat.insert(flat.end(), s.value.data().begin(), s.value.data().end());
  }
  return flat;
}

void ParamVector::unflatten(std::span<const double> flat) {
  if (flat.size() != size()) {
    throw DimensionError("unflatten: expected " + std::to_string(size()) + " values, got " +
                         std::to_string(flat.size()));
  }
  std::size_t offset = 0;
  for (auto& s : segments_) {
    auto dst = s.value.data();
    std::copy(flat.begin() + static_cast<std::ptrdiff_t>(offset),
              flat.begin() + static_cast<std::ptrdiff_t>(offset + dst.size()), dst.begin());
    offset += dst.size();
  }
}

ParamVector ParamVector::zeros_like() const {
  ParamVector out;
  for (const auto& s : segments_) {
    out.segments_.push_back({s.name, Tensor(s.value.shape(), 0.0)});
  }
  return out;
}

double ParamVector::global_norm() const { return std::sqrt(dot(*this)); }

double ParamVector::dot(const ParamVector& other) const {
  if (!congruent(other)) {
    throw DimensionError("dot of non-congruent parameter vectors");
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < segments_.size(); ++i) {
    const auto a = segments_[i].value.data();
    const auto b = other.segments_[i].value.data();
    for (std::size_t k = 0; k < a.size(); ++k) {
      acc += a[k] * b[k];
    }
  }
  return acc;
}

void ParamVector::axpy(double alpha, const ParamVector& other) {
  if (!congruent(other)) {
    throw DimensionError("axpy of non-congruent parameter vectors");
  }
  for (std::size_t i = 0; i < segments_.size(); ++i) {
    auto a = segments_[i].value.data();
    const auto b = other.segments_[i].value.data();
    for (std::size_t k = 0; k < a.size(); ++k) {
      a[k] += alpha * b[k];
    }
  }
}

void ParamVector::scale(double alpha) {
  for (auto& s : segments_) {
    for (double& x : s.value.data()) {
      x *= alpha;
    }
  }
}

bool ParamVector::congruent(const ParamVector& other) const noexcept {
  if (segments_.size() != other.segments_.size()) {
    return false;
  }
  for (std::size_t i = 0; i < segments_.size(); ++i) {
    if (!segments_[i].value.same_shape(other.segments_[i].value)) {
      return false;
    }
  }
  return true;
}

bool ParamVector::all_finite() const noexcept {
  for (const auto& s : segments_) {
    if (!s.value.all_finite()) {
      return false;
    }
  }
  return true;
}

}  // namespace samlab::diff
