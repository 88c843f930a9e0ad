#include "corrnet/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace corrnet {

std::size_t shape_product(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string shape_to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace {

void validate_shape(const Shape& shape) {
  if (shape.empty()) throw ShapeError("tensor shape must have at least one axis");
  for (auto e : shape) {
    if (e == 0) throw ShapeError("zero extent in shape " + shape_to_string(shape));
  }
}

void require_same_shape(const NDTensor& a, const NDTensor& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(what) + ": shape mismatch " +
                     shape_to_string(a.shape()) + " vs " + shape_to_string(b.shape()));
  }
}

}  // namespace

NDTensor::NDTensor(Shape shape) : shape_(std::move(shape)) {
  validate_shape(shape_);
  data_.assign(shape_product(shape_), 0.0);
}

NDTensor::NDTensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  validate_shape(shape_);
  if (data_.size() != shape_product(shape_)) {
    throw ShapeError("data length " + std::to_string(data_.size()) +
                     " does not match shape " + shape_to_string(shape_));
  }
}

NDTensor NDTensor::full(Shape shape, double value) {
  NDTensor t(std::move(shape));
  t.fill(value);
  return t;
}

std::size_t NDTensor::dim(std::size_t axis) const {
  if (axis >= shape_.size()) throw ShapeError("axis out of range");
  return shape_[axis];
}

std::size_t NDTensor::flat_index(std::span<const std::size_t> index) const {
  if (index.size() != shape_.size()) throw ShapeError("index rank mismatch");
  std::size_t flat = 0;
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= shape_[i]) throw ShapeError("index out of bounds");
    flat = flat * shape_[i] + index[i];
  }
  return flat;
}

Shape NDTensor::unravel(std::size_t flat) const {
  if (flat >= data_.size()) throw ShapeError("flat index out of bounds");
  Shape index(shape_.size());
  for (std::size_t i = shape_.size(); i-- > 0;) {
    index[i] = flat % shape_[i];
    flat /= shape_[i];
  }
  return index;
}

double& NDTensor::at(std::initializer_list<std::size_t> index) {
  return data_[flat_index(std::span<const std::size_t>(index.begin(), index.size()))];
}

double NDTensor::at(std::initializer_list<std::size_t> index) const {
  return data_[flat_index(std::span<const std::size_t>(index.begin(), index.size()))];
}

void NDTensor::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

void NDTensor::scale_(double factor) {
  for (auto& v : data_) v *= factor;
}

void NDTensor::add_(const NDTensor& other) {
  require_same_shape(*this, other, "add_");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
}

void NDTensor::axpy_(double alpha, const NDTensor& other) {
  require_same_shape(*this, other, "axpy_");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += alpha * other.data_[i];
}

bool NDTensor::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

NDTensor zeros(const Shape& shape) { return NDTensor(shape); }

NDTensor elementwise(const std::function<double(double, double)>& op,
                     const NDTensor& a, const NDTensor& b) {
  require_same_shape(a, b, "elementwise");
  NDTensor c(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) c[i] = op(a[i], b[i]);
  return c;
}

NDTensor add(const NDTensor& a, const NDTensor& b) {
  require_same_shape(a, b, "add");
  NDTensor c = a;
  c.add_(b);
  return c;
}

NDTensor mul(const NDTensor& a, const NDTensor& b) {
  require_same_shape(a, b, "mul");
  NDTensor c = a;
  for (std::size_t i = 0; i < c.size(); ++i) c[i] *= b[i];
  return c;
}

std::size_t channel_axis(const NDTensor& t) {
  if (t.rank() == 4) return 0;
  if (t.rank() == 5) return 1;
  throw ShapeError("expected a C x L x H x W or N x C x L x H x W tensor, got " +
                   shape_to_string(t.shape()));
}

NDTensor concat_channels(const NDTensor& a, const NDTensor& b) {
  if (!a.is_set() || !b.is_set()) throw ShapeError("concat_channels: unset operand");
  if (a.rank() != b.rank()) throw ShapeError("concat_channels: rank mismatch");
  const std::size_t ax = channel_axis(a);
  for (std::size_t i = 0; i < a.rank(); ++i) {
    if (i != ax && a.dim(i) != b.dim(i)) {
      throw ShapeError("concat_channels: mismatch on non-channel axis " +
                       shape_to_string(a.shape()) + " vs " + shape_to_string(b.shape()));
    }
  }
  Shape out_shape = a.shape();
  out_shape[ax] += b.dim(ax);
  NDTensor out(out_shape);

  const std::size_t outer = ax == 0 ? 1 : a.dim(0);
  const std::size_t a_block = a.size() / outer;
  const std::size_t b_block = b.size() / outer;
  auto dst = out.data().begin();
  for (std::size_t n = 0; n < outer; ++n) {
    dst = std::copy_n(a.data().begin() + n * a_block, a_block, dst);
    dst = std::copy_n(b.data().begin() + n * b_block, b_block, dst);
  }
  return out;
}

NDTensor slice_channels(const NDTensor& x, std::size_t begin, std::size_t end) {
  const std::size_t ax = channel_axis(x);
  if (begin >= end || end > x.dim(ax)) throw ShapeError("slice_channels: bad range");
  Shape out_shape = x.shape();
  out_shape[ax] = end - begin;
  NDTensor out(out_shape);

  const std::size_t outer = ax == 0 ? 1 : x.dim(0);
  const std::size_t plane = x.size() / outer / x.dim(ax);
  const std::size_t in_block = x.size() / outer;
  const std::size_t out_block = out.size() / outer;
  for (std::size_t n = 0; n < outer; ++n) {
    std::copy_n(x.data().begin() + n * in_block + begin * plane, out_block,
                out.data().begin() + n * out_block);
  }
  return out;
}

TensorLayout4D::TensorLayout4D(std::array<AxisRole, 4> roles) : roles_(roles) {
  std::array<int, 4> seen{};
  for (auto r : roles_) ++seen[static_cast<int>(r)];
  for (int s : seen) {
    if (s != 1) throw ShapeError("layout must use each of C, L, H, W exactly once");
  }
}

std::size_t TensorLayout4D::axis_of(AxisRole role) const {
  for (std::size_t i = 0; i < 4; ++i) {
    if (roles_[i] == role) return i;
  }
  throw InternalError("layout role missing");
}

NDTensor TensorLayout4D::to_canonical(const NDTensor& t) const {
  if (t.rank() != 4) throw ShapeError("to_canonical expects a rank-4 tensor");
  const std::array<std::size_t, 4> src_axis{axis_of(AxisRole::channel), axis_of(AxisRole::time),
                                            axis_of(AxisRole::height), axis_of(AxisRole::width)};
  Shape out_shape(4);
  for (std::size_t i = 0; i < 4; ++i) out_shape[i] = t.dim(src_axis[i]);
  NDTensor out(out_shape);
  std::array<std::size_t, 4> src{};
  std::size_t flat = 0;
  for (std::size_t c = 0; c < out_shape[0]; ++c) {
    for (std::size_t l = 0; l < out_shape[1]; ++l) {
      for (std::size_t h = 0; h < out_shape[2]; ++h) {
        for (std::size_t w = 0; w < out_shape[3]; ++w) {
          src[src_axis[0]] = c;
          src[src_axis[1]] = l;
          src[src_axis[2]] = h;
          src[src_axis[3]] = w;
          out[flat++] = t[t.flat_index(src)];
        }
      }
    }
  }
  return out;
}

}  // namespace corrnet
