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
#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <string>
#include <vector>

#include "glod/checkpoint.hpp"
#include "glod/data.hpp"
#include "glod/decode.hpp"
#include "glod/losses.hpp"
#include "glod/metrics.hpp"
#include "glod/model.hpp"
#include "glod/random.hpp"

namespace glod {

struct AdamWConfig {
  double lr = 5e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

/// Moments for a fixed, ordered parameter list.
template <class T>
struct AdamWState {
  std::vector<Tensor<T>> m, v;
  std::uint64_t step = 0;
};

/// One AdamW update with decoupled weight decay. All gradients are checked
/// before any parameter changes.
template <class T>
void adamw_step(const std::vector<std::pair<std::string, Parameter<T>*>>& params,
                AdamWState<T>& state, const AdamWConfig& cfg, double lr) {
  if (state.m.empty())
    for (const auto& [name, p] : params) {
      state.m.emplace_back(p->value.shape());
      state.v.emplace_back(p->value.shape());
    }
  GLOD_CHECK(state.m.size() == params.size(), ConfigError, "optimizer state covers ",
             state.m.size(), " tensors, model has ", params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& [name, p] = params[i];
    GLOD_CHECK(state.m[i].shape() == p->value.shape(), ShapeError, "optimizer moment for '", name,
               "' has shape ", to_string(state.m[i].shape()));
    GLOD_CHECK(p->grad.shape() == p->value.shape() && p->grad.all_finite(), NumericError,
               "non-finite gradient in parameter '", name, "'");
  }
  ++state.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, double(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, double(state.step));
  const T b1 = T(cfg.beta1), b2 = T(cfg.beta2);
  const T decay = T(1.0 - lr * cfg.weight_decay);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Parameter<T>& p = *params[i].second;
    T* w = p.value.data();
    const T* g = p.grad.data();
    T* m = state.m[i].data();
    T* v = state.v[i].data();
    for (std::size_t j = 0; j < p.value.size(); ++j) {
      m[j] = b1 * m[j] + (T(1) - b1) * g[j];
      v[j] = b2 * v[j] + (T(1) - b2) * g[j] * g[j];
      const double mh = double(m[j]) / bc1, vh = double(v[j]) / bc2;
      const double upd = lr * mh / (std::sqrt(vh) + cfg.eps);
      w[j] = static_cast<T>(double(w[j] * decay) - upd);
    }
  }
}

inline double cosine_warm_restart_lr(std::uint64_t step, std::uint64_t steps_per_cycle,
                                     double lr_max, double lr_min) {
  GLOD_CHECK(steps_per_cycle >= 1, ConfigError, "steps_per_cycle must be >= 1");
  const double t = double(step % steps_per_cycle);
  return lr_min +
         0.5 * (lr_max - lr_min) * (1.0 + std::cos(std::numbers::pi * t / double(steps_per_cycle)));
}

inline std::uint64_t steps_per_cycle(std::size_t train_images, std::size_t effective_batch,
                                     std::size_t cycle_epochs) {
  GLOD_CHECK(effective_batch >= 1 && cycle_epochs >= 1, ConfigError,
             "effective batch and cycle epochs must be >= 1");
  const std::size_t per_epoch = (std::max<std::size_t>(train_images, 1) + effective_batch - 1) /
                                effective_batch;
  return std::uint64_t(cycle_epochs * per_epoch);
}

struct TrainConfig {
  std::size_t micro_batch = 2;
  std::size_t accum = 4;
  std::uint64_t steps = 2000;
  std::uint64_t seed = 0;
  AdamWConfig optim;
  double lr_min = 0.0;
  std::size_t cycle_epochs = 10;
  std::uint64_t checkpoint_every = 0;  // 0: only at the end
  bool augment = true;
  AugmentationConfig augmentation;
  NormalizeConfig normalization;
  Mode bn_mode = Mode::train;
  double neg_ratio = 0.02;

  std::size_t effective_batch() const { return micro_batch * accum; }

  void validate() const {
    GLOD_CHECK(micro_batch >= 1 && accum >= 1, ConfigError, "micro-batch and accum must be >= 1");
    GLOD_CHECK(optim.lr > 0 && lr_min >= 0 && lr_min <= optim.lr, ConfigError,
               "need 0 <= lr_min <= lr and lr > 0");
    GLOD_CHECK(cycle_epochs >= 1, ConfigError, "cycle epochs must be >= 1");
  }
};

struct Sample {
  std::string id;
  Image image;
  std::vector<GroundTruthObject> objects;
};

inline std::vector<Sample> load_samples(const std::filesystem::path& root,
                                        const std::vector<std::string>& ids,
                                        const DatasetIndex& index) {
  std::vector<Sample> out;
  for (const auto& id : ids) out.push_back({id, load_ppm(image_path(root, id)), index.objects(id)});
  return out;
}

struct StepLog {
  std::uint64_t step = 0;
  double lr = 0, total = 0, cls = 0, off = 0, size = 0;
};

inline void write_log_header(std::ostream& os) {
  os << "step,lr,loss_total,loss_cls,loss_off,loss_size\n";
}

inline void write_log_row(std::ostream& os, const StepLog& s) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%llu,%.9g,%.9g,%.9g,%.9g,%.9g\n",
                static_cast<unsigned long long>(s.step), s.lr, s.total, s.cls, s.off, s.size);
  os << buf;
}

template <class T>
TargetConfig target_config(const GlodConfig& cfg, std::size_t h, std::size_t w, double neg_ratio) {
  TargetConfig t;
  t.num_classes = cfg.num_classes;
  t.output_stride = cfg.output_stride;
  t.image_h = h;
  t.image_w = w;
  t.neg_ratio = neg_ratio;
  return t;
}

/// Stacks normalized images into [N,3,H,W].
template <class T>
Tensor<T> make_batch(const std::vector<const Image*>& images, const NormalizeConfig& norm) {
  GLOD_CHECK(!images.empty(), ShapeError, "empty batch");
  const std::size_t h = images[0]->height, w = images[0]->width;
  Tensor<T> out({images.size(), 3, h, w});
  for (std::size_t i = 0; i < images.size(); ++i) {
    GLOD_CHECK(images[i]->height == h && images[i]->width == w, ShapeError,
               "images in a batch differ in size");
    const auto t = normalize<T>(*images[i], norm);
    std::copy(t.data(), t.data() + t.size(), out.data() + i * t.size());
  }
  return out;
}

/// Deterministic optimizer loop. Every random choice is derived from
/// (seed, step, position), so a run resumed from a checkpoint replays the
/// uninterrupted one exactly.
template <class T>
class Trainer {
 public:
  Trainer(const GlodConfig& model_cfg, const TrainConfig& cfg, std::vector<Sample> data)
      : cfg_(cfg), net_(model_cfg, derive_seed({cfg.seed, 0x6d6f64656cULL})), data_(std::move(data)) {
    cfg_.validate();
    GLOD_CHECK(!data_.empty(), ConfigError, "training set is empty");
    params_ = net_.registry().parameters();
    cycle_ = steps_per_cycle(data_.size(), cfg_.effective_batch(), cfg_.cycle_epochs);
  }

  GlodNet<T>& net() { return net_; }
  const TrainConfig& config() const { return cfg_; }
  std::uint64_t step_count() const { return state_.step; }
  std::uint64_t cycle_length() const { return cycle_; }
  double current_lr() const {
    return cosine_warm_restart_lr(state_.step, cycle_, cfg_.optim.lr, cfg_.lr_min);
  }

  /// Index of the k-th sample drawn since the start of training.
  std::size_t sample_at(std::uint64_t k) const {
    const std::size_t n = data_.size();
    const std::uint64_t epoch = k / n, pos = k % n;
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(derive_seed({cfg_.seed, 0x6f72646572ULL, epoch}));
    for (std::size_t i = n; i > 1; --i)
      std::swap(order[i - 1], order[std::uniform_int_distribution<std::size_t>(0, i - 1)(rng)]);
    return order[pos];
  }

  StepLog step() {
    const std::uint64_t s = state_.step;
    StepLog log;
    log.step = s;
    log.lr = current_lr();
    net_.registry().zero_grad();
    const T inv_accum = T(1) / T(cfg_.accum);
    for (std::size_t a = 0; a < cfg_.accum; ++a) {
      std::vector<Image> images;
      std::vector<DetectionTargets<T>> targets;
      for (std::size_t j = 0; j < cfg_.micro_batch; ++j) {
        const std::uint64_t k = (s * cfg_.accum + a) * cfg_.micro_batch + j;
        const std::size_t idx = sample_at(k);
        Image img = data_[idx].image;
        auto objs = data_[idx].objects;
        if (cfg_.augment)
          augment(img, objs, cfg_.augmentation, derive_seed({cfg_.seed, 0x617567ULL, k}));
        const auto tc = target_config<T>(net_.config(), img.height, img.width, cfg_.neg_ratio);
        targets.push_back(encode_targets<T>(objs, tc, derive_seed({cfg_.seed, idx, s})));
        images.push_back(std::move(img));
      }
      std::vector<const Image*> ptrs;
      for (const auto& im : images) ptrs.push_back(&im);
      Tape<T> tape;
      Context<T> ctx{tape, cfg_.bn_mode};
      auto head = net_(ctx, tape.input(make_batch<T>(ptrs, cfg_.normalization)));
      auto loss = total_loss<T>(head, targets);
      const double value = loss.total_value();
      GLOD_CHECK(std::isfinite(value), NumericError, "non-finite loss at step ", s);
      tape.backward(ops::scale(loss.total, inv_accum));
      log.total += value / double(cfg_.accum);
      log.cls += loss.cls / double(cfg_.accum);
      log.off += loss.off / double(cfg_.accum);
      log.size += loss.size / double(cfg_.accum);
    }
    adamw_step(params_, state_, cfg_.optim, log.lr);
    return log;
  }

  Checkpoint<T> checkpoint() {
    Checkpoint<T> ck = make_checkpoint(net_, "train.step=" + std::to_string(state_.step) + "\n");
    for (std::size_t i = 0; i < state_.m.size(); ++i) {
      ck.entries.emplace_back("optim.m." + params_[i].first, state_.m[i]);
      ck.entries.emplace_back("optim.v." + params_[i].first, state_.v[i]);
    }
    return ck;
  }

  void restore(const Checkpoint<T>& ck) {
    load_into(net_, ck);
    const auto kv = parse_key_values(ck.config_text);
    auto it = kv.find("train.step");
    GLOD_CHECK(it != kv.end(), FormatError, "checkpoint has no train.step; not a training checkpoint");
    state_.step = std::stoull(it->second);
    state_.m.clear();
    state_.v.clear();
    if (state_.step == 0) return;
    for (const auto& [name, p] : params_) {
      const Tensor<T>* m = ck.find("optim.m." + name);
      const Tensor<T>* v = ck.find("optim.v." + name);
      GLOD_CHECK(m && v, FormatError, "checkpoint lacks optimizer state for '", name, "'");
      state_.m.push_back(*m);
      state_.v.push_back(*v);
    }
  }

 private:
  TrainConfig cfg_;
  GlodNet<T> net_;
  std::vector<Sample> data_;
  std::vector<std::pair<std::string, Parameter<T>*>> params_;
  AdamWState<T> state_;
  std::uint64_t cycle_ = 1;
};

/// Writes `ck` via a temporary file so an interrupted write never replaces
/// the previous checkpoint.
template <class T>
void save_checkpoint_atomic(const std::filesystem::path& path, const Checkpoint<T>& ck) {
  const auto tmp = path.string() + ".tmp";
  save_checkpoint(tmp, ck);
  std::filesystem::rename(tmp, path);
}

/// Runs the trainer to cfg.steps, appending to `log` and checkpointing into
/// `out_dir`/checkpoint.gckpt on cadence and at the end.
template <class T>
void run_training(Trainer<T>& trainer, std::ostream& log, const std::filesystem::path& out_dir) {
  std::filesystem::create_directories(out_dir);
  const auto ck_path = out_dir / "checkpoint.gckpt";
  const auto every = trainer.config().checkpoint_every;
  while (trainer.step_count() < trainer.config().steps) {
    write_log_row(log, trainer.step());
    log.flush();
    if (every > 0 && trainer.step_count() % every == 0)
      save_checkpoint_atomic(ck_path, trainer.checkpoint());
  }
  save_checkpoint_atomic(ck_path, trainer.checkpoint());
}

/// Inference on one image: dense head maps in eval mode without a gradient tape.
template <class T>
HeadMaps<T> predict(GlodNet<T>& net, const Image& image, const NormalizeConfig& norm = {}) {
  Tape<T> tape(false);
  Context<T> ctx{tape, Mode::eval};
  auto out = net(ctx, tape.input(make_batch<T>({&image}, norm)));
  return out.maps(0);
}

struct EvalRun {
  EvalResult result;
  std::vector<std::vector<Detection>> detections;
};

/// Decodes every sample (multi-kernel when `merged`), evaluates mAP and
/// heatmap PSNR against encoded targets.
template <class T>
EvalRun evaluate_samples(GlodNet<T>& net, const std::vector<Sample>& samples,
                         const DecodeConfig& dcfg, bool merged, const NormalizeConfig& norm = {}) {
  DecodeConfig dc = dcfg;
  dc.output_stride = net.config().output_stride;
  EvalRun run;
  std::vector<std::vector<GroundTruthObject>> gts;
  std::vector<Tensor<T>> pred_maps, gt_maps;
  for (const auto& s : samples) {
    auto maps = predict(net, s.image, norm);
    run.detections.push_back(merged ? multi_kernel_decode(maps, dc) : nms(decode(maps, dc), dc.nms_iou));
    const auto tc = target_config<T>(net.config(), s.image.height, s.image.width, 0.0);
    gt_maps.push_back(encode_targets<T>(s.objects, tc, 0).heatmap);
    pred_maps.push_back(std::move(maps.heatmap));
    gts.push_back(s.objects);
  }
  run.result = evaluate<T>(run.detections, gts, net.config().num_classes, pred_maps, gt_maps);
  return run;
}

}  // namespace glod
