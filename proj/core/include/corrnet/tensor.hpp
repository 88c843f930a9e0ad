#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "corrnet/error.hpp"

namespace corrnet {

using Shape = std::vector<std::size_t>;

std::size_t shape_product(const Shape& shape);
std::string shape_to_string(const Shape& shape);

/// Dense row-major tensor of doubles (last axis fastest).
///
/// The shape is fixed at construction. Rank-4 tensors follow the global
/// C x L x H x W layout; rank-5 tensors carry a leading batch axis
/// (N x C x L x H x W). A default-constructed tensor is "unset" and has no
/// shape; it is used for lazily allocated gradients.
class NDTensor {
 public:
  NDTensor() = default;
  explicit NDTensor(Shape shape);
  NDTensor(Shape shape, std::vector<double> data);

  static NDTensor full(Shape shape, double value);

  [[nodiscard]] bool is_set() const { return !shape_.empty(); }
  [[nodiscard]] const Shape& shape() const { return shape_; }
  [[nodiscard]] std::size_t rank() const { return shape_.size(); }
  [[nodiscard]] std::size_t dim(std::size_t axis) const;
  [[nodiscard]] std::size_t size() const { return data_.size(); }

  [[nodiscard]] std::span<double> data() { return data_; }
  [[nodiscard]] std::span<const double> data() const { return data_; }

  double& operator[](std::size_t flat) { return data_[flat]; }
  double operator[](std::size_t flat) const { return data_[flat]; }

  [[nodiscard]] std::size_t flat_index(std::span<const std::size_t> index) const;
  [[nodiscard]] Shape unravel(std::size_t flat) const;

  double& at(std::initializer_list<std::size_t> index);
  [[nodiscard]] double at(std::initializer_list<std::size_t> index) const;

  // In-place mutators. Only the optimizer and gradient accumulation use these.
  void fill(double value);
  void scale_(double factor);
  void add_(const NDTensor& other);
  void axpy_(double alpha, const NDTensor& other);

  [[nodiscard]] bool all_finite() const;

  friend bool operator==(const NDTensor& a, const NDTensor& b) = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

/// All-zero tensor. Throws ShapeError on an empty shape or a zero extent.
NDTensor zeros(const Shape& shape);

NDTensor elementwise(const std::function<double(double, double)>& op,
                     const NDTensor& a, const NDTensor& b);
NDTensor add(const NDTensor& a, const NDTensor& b);
NDTensor mul(const NDTensor& a, const NDTensor& b);

/// Index of the channel axis: 0 for C x L x H x W, 1 for batched tensors.
std::size_t channel_axis(const NDTensor& t);

/// Stacks b after a along the channel axis; all other axes must agree.
NDTensor concat_channels(const NDTensor& a, const NDTensor& b);

/// Channels [begin, end) along the channel axis.
NDTensor slice_channels(const NDTensor& x, std::size_t begin, std::size_t end);

enum class AxisRole { channel, time, height, width };

/// Maps the four clip roles onto tensor axes. The library uses the fixed
/// order C, L, H, W everywhere; the type exists so callers that receive
/// foreign layouts can validate and permute.
class TensorLayout4D {
 public:
  TensorLayout4D() = default;
  explicit TensorLayout4D(std::array<AxisRole, 4> roles);

  static TensorLayout4D canonical() { return TensorLayout4D{}; }

  [[nodiscard]] std::size_t axis_of(AxisRole role) const;
  [[nodiscard]] const std::array<AxisRole, 4>& roles() const { return roles_; }

  /// Reorders a rank-4 tensor in this layout into canonical C, L, H, W.
  [[nodiscard]] NDTensor to_canonical(const NDTensor& t) const;

 private:
  std::array<AxisRole, 4> roles_{AxisRole::channel, AxisRole::time,
                                 AxisRole::height, AxisRole::width};
};

}  // namespace corrnet
