#include <gtest/gtest.h>

#include <random>

#include "corrnet/tensor.hpp"
#include "oracles.hpp"

using namespace corrnet;

TEST(Zeros, ShapesAndValues) {
  const NDTensor a = zeros({2, 3});
  EXPECT_EQ(a.shape(), (Shape{2, 3}));
  EXPECT_EQ(a.size(), 6u);
  for (double v : a.data()) EXPECT_EQ(v, 0.0);

  const NDTensor b = zeros({1});
  ASSERT_EQ(b.size(), 1u);
  EXPECT_EQ(b[0], 0.0);

  EXPECT_EQ(zeros({4, 8, 16, 16}).size(), 8192u);
}

TEST(Zeros, RejectsEmptyOrZeroExtent) {
  EXPECT_THROW(zeros({}), ShapeError);
  EXPECT_THROW(zeros({3, 0}), ShapeError);
}

TEST(NDTensor, DataLengthMustMatchShape) {
  EXPECT_THROW(NDTensor({2, 2}, std::vector<double>(3)), ShapeError);
}

TEST(Elementwise, Examples) {
  const NDTensor a({2}, {1, 2}), b({2}, {3, 4});
  EXPECT_EQ(add(a, b), NDTensor({2}, {4, 6}));
  EXPECT_EQ(mul(NDTensor({2}, {2, 2}), NDTensor({2}, {0.5, 3})), NDTensor({2}, {1, 6}));
  EXPECT_EQ(elementwise([](double x, double y) { return x - y; }, b, a), NDTensor({2}, {2, 2}));
}

TEST(Elementwise, ShapeMismatchIsAnError) {
  EXPECT_THROW(add(NDTensor({2}), NDTensor({3})), ShapeError);
  EXPECT_THROW(add(NDTensor({2, 3}), NDTensor({3, 2})), ShapeError);
}

TEST(Elementwise, AddIsCommutativeWithZeroIdentity) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    std::uniform_int_distribution<std::size_t> ext(1, 5);
    const Shape s{ext(rng), ext(rng), ext(rng)};
    const NDTensor x = oracle::random_tensor(s, rng), y = oracle::random_tensor(s, rng);
    EXPECT_EQ(add(x, y), add(y, x));
    EXPECT_EQ(add(x, zeros(s)), x);
  }
}

TEST(Indexing, FlatIndexRoundTrips) {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    std::uniform_int_distribution<std::size_t> rank(1, 5), ext(1, 6);
    Shape s(rank(rng));
    for (auto& e : s) e = ext(rng);
    const NDTensor t(s);
    for (std::size_t flat = 0; flat < t.size(); ++flat) {
      const Shape idx = t.unravel(flat);
      EXPECT_EQ(t.flat_index(idx), flat);
    }
  }
}

TEST(Indexing, RowMajorLastAxisFastest) {
  NDTensor t({2, 3, 4});
  t.at({1, 2, 3}) = 7.0;
  EXPECT_EQ(t[1 * 12 + 2 * 4 + 3], 7.0);
  EXPECT_THROW(t.at({2, 0, 0}), ShapeError);
}

TEST(ConcatChannels, ShapeAndContents) {
  std::mt19937_64 rng(3);
  const NDTensor a = oracle::random_tensor({4, 2, 3, 3}, rng);
  const NDTensor b = oracle::random_tensor({5, 2, 3, 3}, rng);
  const NDTensor c = concat_channels(a, b);
  EXPECT_EQ(c.shape(), (Shape{9, 2, 3, 3}));
  EXPECT_EQ(slice_channels(c, 0, 4), a);
  EXPECT_EQ(slice_channels(c, 4, 9), b);
}

TEST(ConcatChannels, BatchedRoundTrip) {
  std::mt19937_64 rng(4);
  const NDTensor a = oracle::random_tensor({2, 3, 2, 2, 2}, rng);
  const NDTensor b = oracle::random_tensor({2, 1, 2, 2, 2}, rng);
  const NDTensor c = concat_channels(a, b);
  EXPECT_EQ(c.shape(), (Shape{2, 4, 2, 2, 2}));
  EXPECT_EQ(slice_channels(c, 0, 3), a);
  EXPECT_EQ(slice_channels(c, 3, 4), b);
}

TEST(ConcatChannels, RejectsMismatchAndUnset) {
  EXPECT_THROW(concat_channels(NDTensor({1, 2, 3, 3}), NDTensor({1, 2, 3, 4})), ShapeError);
  EXPECT_THROW(concat_channels(NDTensor({1, 2, 3, 3}), NDTensor()), ShapeError);
}

TEST(TensorLayout4D, RolesMustBeDistinct) {
  using R = AxisRole;
  EXPECT_THROW(TensorLayout4D({R::channel, R::channel, R::height, R::width}), ShapeError);
  const TensorLayout4D thwc({R::time, R::height, R::width, R::channel});
  EXPECT_EQ(thwc.axis_of(R::channel), 3u);
  EXPECT_EQ(thwc.axis_of(R::time), 0u);
}

TEST(TensorLayout4D, ToCanonicalPermutes) {
  using R = AxisRole;
  std::mt19937_64 rng(5);
  const NDTensor canon = oracle::random_tensor({2, 3, 4, 5}, rng);
  // Same data laid out as L x H x W x C.
  NDTensor lhwc({3, 4, 5, 2});
  for (std::size_t c = 0; c < 2; ++c)
    for (std::size_t l = 0; l < 3; ++l)
      for (std::size_t h = 0; h < 4; ++h)
        for (std::size_t w = 0; w < 5; ++w) lhwc.at({l, h, w, c}) = canon.at({c, l, h, w});
  const TensorLayout4D layout({R::time, R::height, R::width, R::channel});
  EXPECT_EQ(layout.to_canonical(lhwc), canon);
}
