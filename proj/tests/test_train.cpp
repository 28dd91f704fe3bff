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

#include <cmath>
#include <filesystem>
#include <random>
#include <sstream>

#include "glod/gradsuite.hpp"
#include "glod/train.hpp"

namespace glod {
namespace {

using Params = std::vector<std::pair<std::string, Parameter<double>*>>;

Parameter<double> make_param(std::vector<double> value, std::vector<double> grad) {
  Parameter<double> p;
  const Shape s{value.size()};
  p.value = Tensor<double>(s, std::move(value));
  p.grad = Tensor<double>(s, std::move(grad));
  return p;
}

TEST(AdamW, FirstStepMovesByLearningRate) {
  auto p = make_param({1.0, -2.0, 0.5}, {1.0, -3.0, 0.25});
  AdamWState<double> st;
  AdamWConfig cfg;
  cfg.weight_decay = 0;
  adamw_step<double>(Params{{"w", &p}}, st, cfg, 1e-3);
  // Bias-corrected first step is lr * g / (|g| + eps).
  EXPECT_NEAR(p.value[0], 1.0 - 1e-3 * 1.0 / (1.0 + 1e-8), 1e-15);
  EXPECT_NEAR(p.value[1], -2.0 + 1e-3 * 3.0 / (3.0 + 1e-8), 1e-15);
  EXPECT_NEAR(p.value[2], 0.5 - 1e-3 * 0.25 / (0.25 + 1e-8), 1e-15);
  EXPECT_EQ(st.step, 1u);
}

TEST(AdamW, ZeroGradientWithoutDecayLeavesParameters) {
  auto p = make_param({1.0, -2.0}, {0.0, 0.0});
  AdamWState<double> st;
  AdamWConfig cfg;
  cfg.weight_decay = 0;
  adamw_step<double>(Params{{"w", &p}}, st, cfg, 1e-2);
  EXPECT_EQ(p.value[0], 1.0);
  EXPECT_EQ(p.value[1], -2.0);
}

TEST(AdamW, DecoupledDecayWithZeroGradient) {
  auto p = make_param({1.0, -2.0}, {0.0, 0.0});
  AdamWState<double> st;
  AdamWConfig cfg;
  cfg.weight_decay = 0.1;
  adamw_step<double>(Params{{"w", &p}}, st, cfg, 1e-2);
  EXPECT_DOUBLE_EQ(p.value[0], 1.0 * (1 - 1e-3));
  EXPECT_DOUBLE_EQ(p.value[1], -2.0 * (1 - 1e-3));
}

TEST(AdamW, TwoStepsMatchHandComputation) {
  auto p = make_param({0.3}, {0.5});
  AdamWState<double> st;
  AdamWConfig cfg;
  const double lr = 0.01;
  adamw_step<double>(Params{{"w", &p}}, st, cfg, lr);
  p.grad[0] = -0.2;
  adamw_step<double>(Params{{"w", &p}}, st, cfg, lr);

  double w = 0.3, m = 0, v = 0;
  const double g[2] = {0.5, -0.2};
  for (int t = 1; t <= 2; ++t) {
    m = 0.9 * m + 0.1 * g[t - 1];
    v = 0.999 * v + 0.001 * g[t - 1] * g[t - 1];
    const double mh = m / (1 - std::pow(0.9, t)), vh = v / (1 - std::pow(0.999, t));
    w = w * (1 - lr * 0.01) - lr * mh / (std::sqrt(vh) + 1e-8);
  }
  EXPECT_NEAR(p.value[0], w, 1e-15);
}

TEST(AdamW, NonFiniteGradientNamesParameterAndChangesNothing) {
  auto a = make_param({1.0}, {0.5});
  auto b = make_param({2.0}, {std::nan("")});
  AdamWState<double> st;
  try {
    adamw_step<double>(Params{{"enc.a", &a}, {"head.b", &b}}, st, AdamWConfig{}, 1e-3);
    FAIL() << "expected NumericError";
  } catch (const NumericError& e) {
    EXPECT_NE(std::string(e.what()).find("head.b"), std::string::npos) << e.what();
  }
  EXPECT_EQ(a.value[0], 1.0);
  EXPECT_EQ(st.step, 0u);
}

TEST(CosineSchedule, EndpointsMidpointAndPeriod) {
  const double mx = 5e-5, mn = 1e-6;
  EXPECT_DOUBLE_EQ(cosine_warm_restart_lr(0, 100, mx, mn), mx);
  EXPECT_NEAR(cosine_warm_restart_lr(50, 100, mx, mn), 0.5 * (mx + mn), 1e-12);
  EXPECT_DOUBLE_EQ(cosine_warm_restart_lr(100, 100, mx, mn), mx);
  for (std::uint64_t t = 0; t < 100; ++t) {
    EXPECT_EQ(cosine_warm_restart_lr(t, 100, mx, mn), cosine_warm_restart_lr(t + 100, 100, mx, mn));
    if (t + 1 < 100)
      EXPECT_LE(cosine_warm_restart_lr(t + 1, 100, mx, mn), cosine_warm_restart_lr(t, 100, mx, mn));
  }
  EXPECT_THROW(cosine_warm_restart_lr(0, 0, mx, mn), ConfigError);
}

TEST(CosineSchedule, StepsPerCycle) {
  EXPECT_EQ(steps_per_cycle(170, 8, 10), 220u);  // ceil(170/8) = 22
  EXPECT_EQ(steps_per_cycle(16, 8, 3), 6u);
  EXPECT_EQ(steps_per_cycle(0, 8, 2), 2u);
  EXPECT_THROW(steps_per_cycle(10, 0, 1), ConfigError);
}

std::vector<Sample> toy_samples(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> px(0, 255);
  std::uniform_real_distribution<double> pos(3.0, 13.0), size(2.0, 6.0);
  std::vector<Sample> out;
  for (std::size_t i = 0; i < n; ++i) {
    Sample s;
    s.id = "toy" + std::to_string(i);
    s.image = Image(16, 16);
    for (auto& v : s.image.pixels) v = static_cast<std::uint8_t>(px(rng));
    for (std::size_t k = 0; k < 2; ++k)
      s.objects.push_back({k % toy_config().num_classes, pos(rng), pos(rng), size(rng), size(rng)});
    out.push_back(std::move(s));
  }
  return out;
}

TrainConfig toy_train(std::size_t micro, std::size_t accum) {
  TrainConfig c;
  c.micro_batch = micro;
  c.accum = accum;
  c.steps = 20;
  c.seed = 11;
  c.optim.lr = 1e-3;
  c.cycle_epochs = 2;
  c.neg_ratio = 0.1;
  return c;
}

template <class T>
std::vector<std::pair<std::string, Tensor<T>>> entries(Trainer<T>& t) {
  return t.checkpoint().entries;
}

TEST(Trainer, AccumulationMatchesLargerMicroBatch) {
  auto a_cfg = toy_train(1, 2), b_cfg = toy_train(2, 1);
  for (auto* c : {&a_cfg, &b_cfg}) {
    c->bn_mode = Mode::eval;
    c->augment = false;
  }
  const auto data = toy_samples(6, 3);
  Trainer<double> a(toy_config(), a_cfg, data), b(toy_config(), b_cfg, data);
  for (int s = 0; s < 3; ++s) {
    const auto la = a.step(), lb = b.step();
    EXPECT_NEAR(la.total, lb.total, 1e-9);
  }
  const auto ea = entries(a), eb = entries(b);
  ASSERT_EQ(ea.size(), eb.size());
  double worst = 0;
  for (std::size_t i = 0; i < ea.size(); ++i) {
    ASSERT_EQ(ea[i].first, eb[i].first);
    for (std::size_t j = 0; j < ea[i].second.size(); ++j)
      worst = std::max(worst, std::abs(ea[i].second[j] - eb[i].second[j]));
  }
  EXPECT_LE(worst, 1e-6);
}

TEST(Trainer, ResumeIsBitwiseIdentical) {
  const auto data = toy_samples(5, 4);
  const auto cfg = toy_train(2, 2);
  Trainer<float> straight(toy_config(), cfg, data);
  std::vector<double> losses;
  for (int s = 0; s < 20; ++s) losses.push_back(straight.step().total);

  Trainer<float> first(toy_config(), cfg, data);
  for (int s = 0; s < 10; ++s) first.step();
  std::stringstream buf;
  write_checkpoint(buf, first.checkpoint());
  Trainer<float> resumed(toy_config(), cfg, data);
  resumed.restore(read_checkpoint<float>(buf));
  EXPECT_EQ(resumed.step_count(), 10u);
  EXPECT_EQ(resumed.current_lr(), first.current_lr());
  for (int s = 10; s < 20; ++s) {
    const auto log = resumed.step();
    EXPECT_EQ(log.step, std::uint64_t(s));
    EXPECT_EQ(log.total, losses[s]) << "step " << s;
  }
  EXPECT_TRUE(entries(resumed) == entries(straight));
}

TEST(Trainer, SameSeedSameLosses) {
  const auto data = toy_samples(4, 5);
  Trainer<float> a(toy_config(), toy_train(2, 1), data), b(toy_config(), toy_train(2, 1), data);
  for (int s = 0; s < 5; ++s) EXPECT_EQ(a.step().total, b.step().total);
  auto other = toy_train(2, 1);
  other.seed = 12;
  Trainer<float> c(toy_config(), other, data);
  Trainer<float> d(toy_config(), toy_train(2, 1), data);
  EXPECT_NE(c.step().total, d.step().total);
}

TEST(Trainer, SampleOrderIsAPermutationPerEpoch) {
  const auto data = toy_samples(7, 6);
  Trainer<float> t(toy_config(), toy_train(1, 1), data);
  for (std::uint64_t epoch = 0; epoch < 3; ++epoch) {
    std::vector<int> seen(7, 0);
    for (std::uint64_t k = 0; k < 7; ++k) ++seen[t.sample_at(epoch * 7 + k)];
    for (int c : seen) EXPECT_EQ(c, 1);
  }
}

TEST(Trainer, LearningRateFollowsCycle) {
  const auto data = toy_samples(4, 7);
  auto cfg = toy_train(2, 1);  // cycle = 2 epochs * 2 steps
  cfg.lr_min = 1e-4;
  Trainer<float> t(toy_config(), cfg, data);
  EXPECT_EQ(t.cycle_length(), 4u);
  std::vector<double> lrs;
  for (int s = 0; s < 8; ++s) lrs.push_back(t.step().lr);
  EXPECT_DOUBLE_EQ(lrs[0], 1e-3);
  EXPECT_NEAR(lrs[2], 0.5 * (1e-3 + 1e-4), 1e-12);
  EXPECT_EQ(lrs[4], lrs[0]);
  EXPECT_EQ(lrs[5], lrs[1]);
}

TEST(Trainer, NonFiniteLossIsReported) {
  const auto data = toy_samples(2, 8);
  Trainer<float> t(toy_config(), toy_train(1, 1), data);
  auto params = t.net().registry().parameters();
  params.front().second->value.fill(std::nanf(""));
  EXPECT_THROW(t.step(), NumericError);
}

TEST(Trainer, RejectsInvalidConfigs) {
  const auto data = toy_samples(2, 9);
  auto bad = toy_train(0, 1);
  EXPECT_THROW(Trainer<float>(toy_config(), bad, data), ConfigError);
  bad = toy_train(1, 1);
  bad.lr_min = 1.0;
  EXPECT_THROW(Trainer<float>(toy_config(), bad, data), ConfigError);
  EXPECT_THROW(Trainer<float>(toy_config(), toy_train(1, 1), {}), ConfigError);
}

TEST(Trainer, RestoreNeedsTrainingCheckpoint) {
  const auto data = toy_samples(2, 10);
  Trainer<float> t(toy_config(), toy_train(1, 1), data);
  auto ck = make_checkpoint(t.net(), "");
  EXPECT_THROW(t.restore(ck), FormatError);
}

TEST(Trainer, RunTrainingWritesLogAndCheckpoint) {
  const auto dir = std::filesystem::temp_directory_path() / "glod_test_train_run";
  std::filesystem::remove_all(dir);
  auto cfg = toy_train(1, 1);
  cfg.steps = 3;
  cfg.checkpoint_every = 2;
  Trainer<float> t(toy_config(), cfg, toy_samples(3, 11));
  std::ostringstream log;
  write_log_header(log);
  run_training(t, log, dir);
  std::istringstream in(log.str());
  std::string line;
  std::getline(in, line);
  EXPECT_EQ(line, "step,lr,loss_total,loss_cls,loss_off,loss_size");
  int rows = 0;
  while (std::getline(in, line)) {
    EXPECT_EQ(std::count(line.begin(), line.end(), ','), 5);
    EXPECT_EQ(line.substr(0, line.find(',')), std::to_string(rows));
    ++rows;
  }
  EXPECT_EQ(rows, 3);
  const auto ck = load_checkpoint<float>((dir / "checkpoint.gckpt").string());
  EXPECT_NE(ck.config_text.find("train.step=3"), std::string::npos);
  EXPECT_FALSE(std::filesystem::exists(dir / "checkpoint.gckpt.tmp"));
  std::filesystem::remove_all(dir);
}

TEST(StepLog, RowFormat) {
  std::ostringstream os;
  write_log_row(os, {7, 5e-5, 1.5, 1.0, 0.25, 0.25});
  EXPECT_EQ(os.str(), "7,5e-05,1.5,1,0.25,0.25\n");
}

}  // namespace
}  // namespace glod
