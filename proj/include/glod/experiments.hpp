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

#include <functional>
#include <string>
#include <vector>

#include "glod/data.hpp"
#include "glod/decode.hpp"
#include "glod/metrics.hpp"
#include "glod/train.hpp"

namespace glod {

// Fusion Block ablation: identical data, seed and initial weights (apart from
// the fusion blocks themselves), fusion on vs off.

struct FusionAblationConfig {
  std::size_t scenes = 200;
  std::uint64_t data_seed = 2024;
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  SceneSpec scene;
  GlodConfig model;
  TrainConfig train;
  DecodeConfig decode;

  FusionAblationConfig() {
    train.steps = 1000;
    train.micro_batch = 2;
    train.accum = 1;
    train.optim.lr = 5e-4;
  }
};

struct FusionAblationRow {
  std::uint64_t seed = 0;
  double map50_on = 0, map75_on = 0, map50_off = 0, map75_off = 0;

  bool fusion_not_worse() const { return map50_on >= map50_off && map75_on >= map75_off; }
};

inline std::pair<std::vector<Sample>, std::vector<Sample>> synthetic_split(std::size_t scenes,
                                                                           std::uint64_t seed,
                                                                           const SceneSpec& spec) {
  std::vector<Sample> all;
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < scenes; ++i) {
    Scene s = generate_scene(derive_seed({seed, i}), spec);
    all.push_back({image_id(i), std::move(s.image), std::move(s.objects)});
    ids.push_back(all.back().id);
  }
  const auto [train_ids, val_ids] = split_ids(ids, derive_seed({seed, 0x5eed}));
  std::pair<std::vector<Sample>, std::vector<Sample>> out;
  std::size_t t = 0;
  for (auto& s : all) {
    if (t < train_ids.size() && s.id == train_ids[t]) {
      out.first.push_back(std::move(s));
      ++t;
    } else {
      out.second.push_back(std::move(s));
    }
  }
  return out;
}

template <class T = float>
std::vector<FusionAblationRow> run_fusion_ablation(
    const FusionAblationConfig& cfg,
    const std::function<void(const std::string&)>& progress = nullptr) {
  const auto [train, val] = synthetic_split(cfg.scenes, cfg.data_seed, cfg.scene);
  std::vector<FusionAblationRow> rows;
  for (std::uint64_t seed : cfg.seeds) {
    FusionAblationRow row;
    row.seed = seed;
    for (bool fusion : {true, false}) {
      GlodConfig mc = cfg.model;
      mc.fusion = fusion;
      TrainConfig tc = cfg.train;
      tc.seed = seed;
      Trainer<T> trainer(mc, tc, train);
      while (trainer.step_count() < tc.steps) trainer.step();
      const auto run = evaluate_samples(trainer.net(), val, cfg.decode, false, tc.normalization);
      (fusion ? row.map50_on : row.map50_off) = run.result.map50;
      (fusion ? row.map75_on : row.map75_off) = run.result.map75;
      if (progress)
        progress("seed " + std::to_string(seed) + " fusion " + (fusion ? "on" : "off") +
                 " mAP50 " + std::to_string(run.result.map50) + " mAP75 " +
                 std::to_string(run.result.map75));
    }
    rows.push_back(row);
  }
  return rows;
}

inline void write_fusion_ablation_csv(std::ostream& os, const std::vector<FusionAblationRow>& rows) {
  os << "seed,map50_on,map75_on,map50_off,map75_off\n";
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%llu,%.6f,%.6f,%.6f,%.6f\n",
                  static_cast<unsigned long long>(r.seed), r.map50_on, r.map75_on, r.map50_off,
                  r.map75_off);
    os << buf;
  }
}

// Kernel-size sweep: post-NMS detection counts per class for each p, plus
// recall at IoU 0.5.

struct KernelRow {
  std::string label;  // "p=<p>" or "merged"
  std::vector<std::size_t> counts;  // per class
  double recall = 0;
};

inline double recall_at(const std::vector<std::vector<Detection>>& dets,
                        const std::vector<std::vector<GroundTruthObject>>& gts,
                        std::size_t num_classes, double tau = 0.5) {
  std::size_t tp = 0, total = 0;
  for (std::size_t c = 0; c < num_classes; ++c) {
    const auto m = detail::match_class(detail::of_class(dets, c), detail::of_class(gts, c), tau);
    total += m.num_gt;
    for (bool t : m.tp) tp += t ? 1 : 0;
  }
  GLOD_CHECK(total > 0, NumericError, "recall undefined: no ground-truth objects");
  return double(tp) / double(total);
}

template <class T>
std::vector<KernelRow> kernel_sweep(const std::vector<HeadMaps<T>>& maps,
                                    const std::vector<std::vector<GroundTruthObject>>& gts,
                                    const std::vector<std::size_t>& ps, const DecodeConfig& base,
                                    std::size_t num_classes) {
  std::vector<KernelRow> rows;
  auto summarize = [&](std::string label, const std::vector<std::vector<Detection>>& dets) {
    KernelRow r{std::move(label), std::vector<std::size_t>(num_classes, 0), 0.0};
    for (const auto& v : dets)
      for (const auto& d : v) ++r.counts[d.class_id];
    r.recall = recall_at(dets, gts, num_classes);
    rows.push_back(std::move(r));
  };
  for (std::size_t p : ps) {
    DecodeConfig c = base;
    c.p = p;
    std::vector<std::vector<Detection>> dets;
    for (const auto& m : maps) dets.push_back(nms(decode(m, c), c.nms_iou));
    summarize("p=" + std::to_string(p), dets);
  }
  std::vector<std::vector<Detection>> merged;
  for (const auto& m : maps) merged.push_back(multi_kernel_decode(m, base));
  summarize("merged", merged);
  return rows;
}

inline void write_kernel_csv(std::ostream& os, const std::vector<KernelRow>& rows) {
  if (rows.empty()) return;
  os << "kernel";
  for (std::size_t c = 0; c < rows[0].counts.size(); ++c) os << ",count_class" << c;
  os << ",total,recall50\n";
  char buf[64];
  for (const auto& r : rows) {
    os << r.label;
    std::size_t total = 0;
    for (auto n : r.counts) {
      os << ',' << n;
      total += n;
    }
    std::snprintf(buf, sizeof buf, "%.6f", r.recall);
    os << ',' << total << ',' << buf << '\n';
  }
}

}  // namespace glod
