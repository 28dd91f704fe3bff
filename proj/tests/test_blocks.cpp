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

#include "glod/blocks.hpp"
#include "glod/gradcheck.hpp"
#include "glod/gradsuite.hpp"
#include "test_util.hpp"

namespace glod {
namespace {

using V = Var<double>;

TEST(BatchNorm, TrainModeNormalizesAndUpdatesRunningStats) {
  const auto x = test::random_tensor({4, 3, 5, 5}, 1, 3.0);
  nn::BatchNorm2d<double> bn(3);
  Tape<double> tape(false);
  Context<double> ctx{tape, Mode::train};
  const auto y = bn(ctx, tape.constant(x)).value();
  for (std::size_t c = 0; c < 3; ++c) {
    double mean = 0, sq = 0, xmean = 0, xsq = 0;
    const double m = 4 * 25;
    for (std::size_t n = 0; n < 4; ++n)
      for (std::size_t i = 0; i < 25; ++i) {
        const double v = y.at({n, c, i / 5, i % 5});
        const double u = x.at({n, c, i / 5, i % 5});
        mean += v, sq += v * v, xmean += u, xsq += u * u;
      }
    mean /= m, xmean /= m;
    EXPECT_NEAR(mean, 0.0, 1e-12);
    EXPECT_NEAR(sq / m, 1.0, 1e-4);
    const double unbiased = (xsq / m - xmean * xmean) * m / (m - 1);
    EXPECT_NEAR(bn.stats.mean[c], 0.1 * xmean, 1e-12);
    EXPECT_NEAR(bn.stats.var[c], 0.9 + 0.1 * unbiased, 1e-10);
  }
}

TEST(BatchNorm, EvalModeUsesRunningStats) {
  nn::BatchNorm2d<double> bn(2);
  bn.stats.mean[0] = 1.0, bn.stats.var[0] = 4.0;
  bn.stats.mean[1] = -2.0, bn.stats.var[1] = 0.25;
  bn.gamma.value[1] = 3.0, bn.beta.value[1] = 0.5;
  Tensor<double> x({1, 2, 1, 1}, std::vector<double>{3.0, -1.0});
  Tape<double> tape(false);
  Context<double> ctx{tape, Mode::eval};
  const auto y = bn(ctx, tape.constant(x)).value();
  EXPECT_NEAR(y[0], 2.0 / std::sqrt(4.0 + 1e-5), 1e-12);
  EXPECT_NEAR(y[1], 3.0 * 1.0 / std::sqrt(0.25 + 1e-5) + 0.5, 1e-12);
  EXPECT_EQ(bn.stats.mean[0], 1.0);
}

TEST(BatchNorm, Gradients) {
  for (Mode mode : {Mode::train, Mode::eval}) {
    nn::BatchNorm2d<double> bn(3);
    bn.gamma.value = test::random_tensor({3}, 2);
    bn.beta.value = test::random_tensor({3}, 3);
    bn.stats.mean = test::random_tensor({3}, 4);
    const auto probe = test::random_tensor({2, 3, 3, 3}, 5);
    auto r = finite_diff_check(
        [&](const V& v) {
          auto saved = bn.stats;
          Context<double> ctx{v.tape(), mode};
          auto y = bn(ctx, v);
          bn.stats = saved;
          return ops::sum(ops::mul(y, v.tape().constant(probe)));
        },
        test::random_tensor({2, 3, 3, 3}, 6));
    EXPECT_LT(r.max_rel_err, 1e-6);
  }
}

TEST(LayerNorm, ValuesAndGradients) {
  nn::LayerNorm<double> ln(6);
  const auto x = test::random_tensor({3, 6}, 7, 2.0);
  Tape<double> tape(false);
  Context<double> ctx{tape};
  const auto y = ln(ctx, tape.constant(x)).value();
  for (std::size_t r = 0; r < 3; ++r) {
    double m = 0;
    for (std::size_t c = 0; c < 6; ++c) m += y.at({r, c});
    EXPECT_NEAR(m, 0.0, 1e-12);
  }
  ln.gamma.value = test::random_tensor({6}, 8);
  const auto probe = test::random_tensor({3, 6}, 9);
  auto res = finite_diff_check(
      [&](const V& v) {
        Context<double> c{v.tape()};
        return ops::sum(ops::mul(ln(c, v), v.tape().constant(probe)));
      },
      x);
  EXPECT_LT(res.max_rel_err, 1e-6);
}

TEST(AsymmetricFusion, ShapeAndRectification) {
  Rng rng(1);
  nn::AsymmetricFusion<double> m(5, 8, rng);
  Tape<double> tape(false);
  Context<double> ctx{tape};
  const auto y = m(ctx, tape.constant(test::random_tensor({2, 2, 6, 7}, 1)),
                   tape.constant(test::random_tensor({2, 3, 6, 7}, 2)))
                     .value();
  EXPECT_EQ(y.shape(), (Shape{2, 8, 6, 7}));
  for (double v : y.values()) EXPECT_GE(v, 0.0);
  EXPECT_THROW(m(ctx, tape.constant(Tensor<double>({1, 2, 6, 7})),
                 tape.constant(Tensor<double>({1, 3, 5, 7}))),
               ShapeError);
}

TEST(Cbam, AttentionMapsInUnitInterval) {
  Rng rng(2);
  nn::Cbam<double> m(8, 4, rng);
  Tape<double> tape(false);
  Context<double> ctx{tape};
  nn::CbamMaps<double> maps;
  const auto x = test::random_tensor({2, 8, 5, 6}, 3, 4.0);
  const auto y = m(ctx, tape.constant(x), &maps).value();
  EXPECT_EQ(y.shape(), x.shape());
  EXPECT_EQ(maps.channel.shape(), (Shape{2, 8, 1, 1}));
  EXPECT_EQ(maps.spatial.shape(), (Shape{2, 1, 5, 6}));
  for (double v : maps.channel.values()) EXPECT_TRUE(v > 0.0 && v < 1.0);
  for (double v : maps.spatial.values()) EXPECT_TRUE(v > 0.0 && v < 1.0);
  // Output is the input rescaled by both maps.
  for (std::size_t c = 0; c < 8; ++c)
    for (std::size_t i = 0; i < 30; ++i) {
      const double want = x.at({1, c, i / 6, i % 6}) * maps.channel.at({1, c, 0, 0}) *
                          maps.spatial.at({1, 0, i / 6, i % 6});
      EXPECT_NEAR(y.at({1, c, i / 6, i % 6}), want, 1e-12);
    }
  EXPECT_THROW(nn::Cbam<double>(8, 3, rng), ShapeError);
}

TEST(Highway, GateLimits) {
  Rng rng(3);
  nn::Highway<double> m(4, rng);
  EXPECT_EQ(m.gate.bias.value[0], -1.0);
  m.gate.weight.value.fill(0.0);
  const auto x = test::random_tensor({1, 4, 3, 3}, 4);
  const auto h = test::random_tensor({1, 4, 3, 3}, 5);
  for (double bias : {-60.0, 60.0}) {
    m.gate.bias.value.fill(bias);
    Tape<double> tape(false);
    Context<double> ctx{tape};
    const auto y = m(ctx, tape.constant(x), tape.constant(h)).value();
    const auto& want = bias < 0 ? x : h;
    for (std::size_t i = 0; i < y.size(); ++i) EXPECT_NEAR(y[i], want[i], 1e-12);
  }
}

TEST(UpConvMixer, DoublesResolutionAndQuartersWidth) {
  for (bool per_repeat : {false, true}) {
    Rng rng(4);
    nn::UpConvMixerConfig cfg;
    cfg.in_channels = 6;
    cfg.width = 16;
    cfg.repeats = 2;
    cfg.cbam_reduction = 4;
    cfg.cbam_per_repeat = per_repeat;
    nn::UpConvMixer<double> m(cfg, rng);
    EXPECT_EQ(m.cbam.size(), per_repeat ? 2u : 1u);
    Tape<double> tape(false);
    Context<double> ctx{tape};
    const auto y = m(ctx, tape.constant(test::random_tensor({2, 2, 4, 5}, 1)),
                     tape.constant(test::random_tensor({2, 4, 4, 5}, 2)))
                       .value();
    EXPECT_EQ(y.shape(), (Shape{2, 4, 8, 10}));
    EXPECT_TRUE(y.all_finite());
  }
  Rng rng(5);
  nn::UpConvMixerConfig bad;
  bad.in_channels = 4;
  bad.width = 10;
  EXPECT_THROW(nn::UpConvMixer<double>(bad, rng), ConfigError);
}

TEST(FusionBlock, ShapeAndResolutionCheck) {
  Rng rng(6);
  nn::FusionBlock<double> m(3, 5, 2, rng);
  Tape<double> tape(false);
  Context<double> ctx{tape};
  const auto y = m(ctx, tape.constant(test::random_tensor({1, 3, 4, 4}, 1)),
                   tape.constant(test::random_tensor({1, 5, 8, 8}, 2)))
                     .value();
  EXPECT_EQ(y.shape(), (Shape{1, 5, 8, 8}));
  EXPECT_THROW(m(ctx, tape.constant(Tensor<double>({1, 3, 4, 4})),
                 tape.constant(Tensor<double>({1, 5, 6, 8}))),
               ShapeError);
}

TEST(GradientSuite, EveryBlockMatchesFiniteDifferences) {
  const auto reports = run_gradient_suite(0);
  ASSERT_EQ(reports.size(), 8u);
  for (const auto& r : reports) {
    EXPECT_LT(r.result.max_rel_err, 1e-4) << r.block << " worst " << r.result.worst;
    EXPECT_GT(r.result.checked, 0u) << r.block;
    EXPECT_LT(r.result.skipped * 10, r.result.checked + r.result.skipped) << r.block;
  }
}

}  // namespace
}  // namespace glod
