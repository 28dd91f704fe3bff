/*
 * Copyright 2026 The GLOD-Desk Authors. All Rights Reserved.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#include <gtest/gtest.h>

#include "glod/conv.hpp"
#include "glod/gradcheck.hpp"
#include "test_util.hpp"

namespace glod {
namespace {

using V = Var<double>;

// Direct seven-loop convolution.
Tensor<double> naive_conv(const Tensor<double>& x, const Tensor<double>& w,
                          const Tensor<double>* b, const ConvSpec& s) {
  const std::size_t n = x.dim(0), cin = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const std::size_t cout = w.dim(0), cg = cin / s.groups, og = cout / s.groups;
  const std::size_t ho = (h + 2 * s.pad_h - s.dilation * (s.kernel_h - 1) - 1) / s.stride + 1;
  const std::size_t wo = (wd + 2 * s.pad_w - s.dilation * (s.kernel_w - 1) - 1) / s.stride + 1;
  Tensor<double> y({n, cout, ho, wo});
  for (std::size_t b0 = 0; b0 < n; ++b0)
    for (std::size_t o = 0; o < cout; ++o)
      for (std::size_t oy = 0; oy < ho; ++oy)
        for (std::size_t ox = 0; ox < wo; ++ox) {
          double acc = b ? (*b)[o] : 0.0;
          const std::size_t g = o / og;
          for (std::size_t c = 0; c < cg; ++c)
            for (std::size_t ky = 0; ky < s.kernel_h; ++ky)
              for (std::size_t kx = 0; kx < s.kernel_w; ++kx) {
                const long iy = long(oy * s.stride + ky * s.dilation) - long(s.pad_h);
                const long ix = long(ox * s.stride + kx * s.dilation) - long(s.pad_w);
                if (iy < 0 || ix < 0 || iy >= long(h) || ix >= long(wd)) continue;
                acc += x.at({b0, g * cg + c, std::size_t(iy), std::size_t(ix)}) *
                       w.at({o, c, ky, kx});
              }
          y.at({b0, o, oy, ox}) = acc;
        }
  return y;
}

struct Case {
  std::size_t cin, cout, k, pad, stride, dilation, groups;
};

const Case kCases[] = {
    {3, 4, 3, 1, 1, 1, 1}, {4, 6, 3, 0, 2, 1, 2}, {4, 4, 3, 1, 1, 1, 4},
    {4, 4, 7, 3, 1, 1, 4}, {5, 3, 1, 0, 1, 1, 1}, {3, 2, 3, 2, 1, 2, 1},
    {2, 8, 2, 0, 2, 1, 1}, {6, 6, 5, 2, 2, 1, 3},
};

ConvSpec spec_of(const Case& c) {
  ConvSpec s = ConvSpec::square(c.k, c.pad, c.stride);
  s.dilation = c.dilation;
  s.groups = c.groups;
  return s;
}

Tensor<double> run_conv(const Tensor<double>& x, const Tensor<double>& w, const Tensor<double>& b,
                        const ConvSpec& s) {
  Tape<double> tape(false);
  auto bv = tape.constant(b);
  return ops::conv2d(tape.constant(x), tape.constant(w), &bv, s).value();
}

TEST(Conv2d, IntegerInputsMatchNaiveExactly) {
  std::uint64_t seed = 100;
  for (const auto& c : kCases) {
    const auto s = spec_of(c);
    const auto x = test::integer_tensor({2, c.cin, 9, 8}, seed++);
    const auto w = test::integer_tensor({c.cout, c.cin / c.groups, c.k, c.k}, seed++);
    const auto b = test::integer_tensor({c.cout}, seed++);
    const auto got = run_conv(x, w, b, s);
    const auto want = naive_conv(x, w, &b, s);
    ASSERT_EQ(got.shape(), want.shape());
    EXPECT_EQ(got.storage(), want.storage()) << "k=" << c.k << " groups=" << c.groups;
  }
}

TEST(Conv2d, RealInputsMatchNaive) {
  std::uint64_t seed = 200;
  for (const auto& c : kCases) {
    const auto s = spec_of(c);
    const auto x = test::random_tensor({2, c.cin, 9, 8}, seed++);
    const auto w = test::random_tensor({c.cout, c.cin / c.groups, c.k, c.k}, seed++);
    const auto b = test::random_tensor({c.cout}, seed++);
    const auto got = run_conv(x, w, b, s);
    const auto want = naive_conv(x, w, &b, s);
    for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], want[i], 1e-12);
  }
}

TEST(Conv2d, FloatPathAgreesWithDouble) {
  const Case c{4, 6, 3, 1, 1, 1, 2};
  const auto s = spec_of(c);
  const auto x = test::random_tensor({1, 4, 8, 8}, 300);
  const auto w = test::random_tensor({6, 2, 3, 3}, 301);
  Tape<float> tape(false);
  const auto y = ops::conv2d(tape.constant(x.cast<float>()), tape.constant(w.cast<float>()),
                             static_cast<const Var<float>*>(nullptr), s)
                     .value();
  const auto want = naive_conv(x, w, nullptr, s);
  for (std::size_t i = 0; i < y.size(); ++i) EXPECT_NEAR(y[i], want[i], 1e-4);
}

TEST(Conv2d, GradientsMatchFiniteDifferences) {
  std::uint64_t seed = 400;
  for (const auto& c : kCases) {
    const auto s = spec_of(c);
    const auto w = test::random_tensor({c.cout, c.cin / c.groups, c.k, c.k}, seed++);
    const auto b = test::random_tensor({c.cout}, seed++);
    const auto x = test::random_tensor({1, c.cin, 7, 6}, seed++);
    const auto probe = test::random_tensor(naive_conv(x, w, &b, s).shape(), seed++);
    auto loss_x = [&](const V& xv) {
      auto bv = xv.tape().constant(b);
      auto y = ops::conv2d(xv, xv.tape().constant(w), &bv, s);
      return ops::sum(ops::mul(y, y.tape().constant(probe)));
    };
    auto rx = finite_diff_check(loss_x, x);
    EXPECT_LT(rx.max_rel_err, 1e-6) << rx.worst;
    auto loss_w = [&](const V& wv) {
      auto bv = wv.tape().constant(b);
      auto y = ops::conv2d(wv.tape().constant(x), wv, &bv, s);
      return ops::sum(ops::mul(y, y.tape().constant(probe)));
    };
    auto rw = finite_diff_check(loss_w, w);
    EXPECT_LT(rw.max_rel_err, 1e-6) << rw.worst;
    auto loss_b = [&](const V& bv) {
      auto y = ops::conv2d(bv.tape().constant(x), bv.tape().constant(w), &bv, s);
      return ops::sum(ops::mul(y, y.tape().constant(probe)));
    };
    auto rb = finite_diff_check(loss_b, b);
    EXPECT_LT(rb.max_rel_err, 1e-6) << rb.worst;
  }
}

TEST(Conv2d, ShapeErrorsAreDescriptive) {
  Tape<double> tape(false);
  auto x = tape.constant(Tensor<double>({1, 3, 4, 4}));
  auto w = tape.constant(Tensor<double>({4, 2, 3, 3}));
  try {
    ops::conv2d(x, w, static_cast<const V*>(nullptr), ConvSpec::square(3, 1));
    FAIL() << "expected ShapeError";
  } catch (const ShapeError& e) {
    EXPECT_NE(std::string(e.what()).find("input channels"), std::string::npos);
  }
  auto w2 = tape.constant(Tensor<double>({4, 3, 7, 7}));
  EXPECT_THROW(ops::conv2d(x, w2, static_cast<const V*>(nullptr), ConvSpec::square(7)),
               ShapeError);
}

TEST(PixelShuffle, MatchesIndexOracle) {
  const std::size_t r = 2;
  const auto x = test::random_tensor({2, 12, 3, 4}, 500);
  Tape<double> tape(false);
  const auto y = ops::pixel_shuffle(tape.constant(x), r).value();
  ASSERT_EQ(y.shape(), (Shape{2, 3, 6, 8}));
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t h = 0; h < 3; ++h)
        for (std::size_t w = 0; w < 4; ++w)
          for (std::size_t dy = 0; dy < r; ++dy)
            for (std::size_t dx = 0; dx < r; ++dx)
              EXPECT_EQ(y.at({n, c, h * r + dy, w * r + dx}),
                        x.at({n, c * r * r + dy * r + dx, h, w}));
}

TEST(PixelShuffle, UnshuffleIsInverse) {
  const auto x = test::random_tensor({1, 3, 8, 4}, 501);
  Tape<double> tape(false);
  auto packed = ops::pixel_unshuffle(tape.constant(x), 4);
  EXPECT_EQ(packed.value().shape(), (Shape{1, 48, 2, 1}));
  EXPECT_EQ(ops::pixel_shuffle(packed, 4).value(), x);
  EXPECT_THROW(ops::pixel_unshuffle(tape.constant(x), 3), ShapeError);
}

TEST(PixelShuffle, Gradients) {
  auto r = finite_diff_check(
      [](const V& v) {
        auto y = ops::pixel_shuffle(v, 2);
        return ops::sum(ops::mul(y, y.tape().constant(test::random_tensor(y.value().shape(), 7))));
      },
      test::random_tensor({1, 8, 2, 3}, 502));
  EXPECT_LT(r.max_rel_err, 1e-6);
}

TEST(Upsample, BilinearHalfPixelValues) {
  Tensor<double> x({1, 1, 1, 2}, std::vector<double>{0.0, 4.0});
  Tape<double> tape(false);
  const auto y = ops::bilinear_upsample(tape.constant(x), 2).value();
  ASSERT_EQ(y.shape(), (Shape{1, 1, 2, 4}));
  // Source coords for outputs 0..3: -0.25, 0.25, 0.75, 1.25 (clamped at the edges).
  const double want[4] = {0.0, 1.0, 3.0, 4.0};
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_DOUBLE_EQ(y.at({0, 0, 0, i}), want[i]);
    EXPECT_DOUBLE_EQ(y.at({0, 0, 1, i}), want[i]);
  }
  auto r = finite_diff_check(
      [](const V& v) {
        auto u = ops::bilinear_upsample(v, 2);
        return ops::sum(ops::mul(u, u.tape().constant(test::random_tensor(u.value().shape(), 8))));
      },
      test::random_tensor({1, 2, 3, 3}, 503));
  EXPECT_LT(r.max_rel_err, 1e-6);
}

TEST(MaxPool, SameWindowOracle) {
  const auto x = test::random_tensor({1, 2, 5, 6}, 504);
  for (std::size_t k : {1u, 3u, 5u}) {
    const auto y = ops::max_pool2d_same(x, k);
    const long r = long(k / 2);
    for (std::size_t c = 0; c < 2; ++c)
      for (long i = 0; i < 5; ++i)
        for (long j = 0; j < 6; ++j) {
          double best = -1e300;
          for (long a = i - r; a <= i + r; ++a)
            for (long b = j - r; b <= j + r; ++b)
              if (a >= 0 && b >= 0 && a < 5 && b < 6)
                best = std::max(best, x.at({0, c, std::size_t(a), std::size_t(b)}));
          EXPECT_EQ(y.at({0, c, std::size_t(i), std::size_t(j)}), best);
        }
  }
}

}  // namespace
}  // namespace glod
