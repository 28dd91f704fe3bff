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
#include <CLI11.hpp>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "glod/checkpoint.hpp"
#include "glod/data.hpp"
#include "glod/decode.hpp"
#include "glod/experiments.hpp"
#include "glod/gradsuite.hpp"
#include "glod/metrics.hpp"
#include "glod/train.hpp"

namespace fs = std::filesystem;
using namespace glod;

namespace {

using Real = float;

bool parse_on_off(const std::string& v) { return v == "on"; }

std::ofstream open_out(const fs::path& path, std::ios::openmode mode = std::ios::binary) {
  std::ofstream os(path, mode);
  GLOD_CHECK(os, Error, "cannot open ", path.string(), " for writing");
  return os;
}

DecodeConfig decode_config(const std::vector<std::size_t>& ps, double score, std::size_t stride) {
  DecodeConfig d;
  d.merge_ps = ps;
  d.p = ps.empty() ? 1 : ps.front();
  d.score_threshold = score;
  d.output_stride = stride;
  return d;
}

std::vector<Detection> run_decode(const HeadMaps<Real>& maps, const DecodeConfig& d) {
  return d.merge_ps.size() > 1 ? multi_kernel_decode(maps, d) : nms(decode(maps, d), d.nms_iou);
}

GlodNet<Real> load_model(const fs::path& path) {
  const auto ck = load_checkpoint<Real>(path.string());
  GlodNet<Real> net(config_from_text(ck.config_text), 0);
  load_into(net, ck);
  return net;
}

std::vector<Sample> load_split(const fs::path& root, const std::string& split) {
  const auto index = read_dataset_index(root);
  std::vector<std::string> ids;
  if (split == "train" || split == "all") ids.insert(ids.end(), index.train.begin(), index.train.end());
  if (split == "val" || split == "all") ids.insert(ids.end(), index.val.begin(), index.val.end());
  return load_samples(root, ids, index);
}

// Box outlines, 3 px wide, colour by class.
void draw_boxes(Image& img, const std::vector<Detection>& dets) {
  static const std::array<std::array<int, 3>, 6> palette{{
      {255, 0, 0}, {255, 255, 0}, {0, 255, 255}, {0, 128, 255}, {255, 0, 255}, {255, 255, 255}}};
  for (const auto& d : dets) {
    const auto& col = palette[d.class_id % palette.size()];
    const long x1 = std::lround(d.box.x1), y1 = std::lround(d.box.y1);
    const long x2 = std::lround(d.box.x2), y2 = std::lround(d.box.y2);
    auto put = [&](long x, long y) {
      if (x < 0 || y < 0 || x >= long(img.width) || y >= long(img.height)) return;
      for (std::size_t c = 0; c < 3; ++c) img.at(c, std::size_t(y), std::size_t(x)) = std::uint8_t(col[c]);
    };
    for (long t = 0; t < 3; ++t) {
      for (long x = x1 - t; x <= x2 + t; ++x) {
        put(x, y1 - t);
        put(x, y2 + t);
      }
      for (long y = y1 - t; y <= y2 + t; ++y) {
        put(x1 - t, y);
        put(x2 + t, y);
      }
    }
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"GLOD-Desk: center-point detector with a Swin encoder and UpConvMixer neck"};
  app.require_subcommand(1);

  // gen
  auto* gen = app.add_subcommand("gen", "Synthesize a dataset");
  std::string gen_out;
  std::uint64_t gen_seed = 0;
  std::size_t gen_images = 100, gen_size = 128;
  gen->add_option("--out", gen_out, "Output directory")->required();
  gen->add_option("--seed", gen_seed, "Random seed");
  gen->add_option("--images", gen_images, "Number of scenes");
  gen->add_option("--size", gen_size, "Image side in pixels");

  // train
  auto* train = app.add_subcommand("train", "Train a model");
  std::string tr_data, tr_out, tr_resume, tr_fusion = "on";
  TrainConfig tc;
  bool tr_no_augment = false;
  train->add_option("--data", tr_data, "Dataset directory")->required();
  train->add_option("--out", tr_out, "Output directory")->required();
  train->add_option("--seed", tc.seed, "Random seed");
  train->add_option("--steps", tc.steps, "Optimizer steps");
  train->add_option("--lr", tc.optim.lr, "Peak learning rate");
  train->add_option("--weight-decay", tc.optim.weight_decay, "Decoupled weight decay");
  train->add_option("--cycle-epochs", tc.cycle_epochs, "Epochs per cosine cycle");
  train->add_option("--micro-batch", tc.micro_batch, "Images per forward pass");
  train->add_option("--accum", tc.accum, "Micro-batches per optimizer step");
  train->add_option("--checkpoint-every", tc.checkpoint_every, "Checkpoint cadence in steps");
  train->add_option("--fusion", tr_fusion, "Fusion blocks")->check(CLI::IsMember({"on", "off"}));
  train->add_option("--resume", tr_resume, "Resume from a training checkpoint");
  train->add_flag("--no-augment", tr_no_augment, "Disable augmentation");

  // eval
  auto* eval = app.add_subcommand("eval", "Detections, mAP and PSNR for a dataset split");
  std::string ev_data, ev_ckpt, ev_out, ev_split = "val";
  std::vector<std::size_t> ev_ps{0, 1, 10, 20};
  double ev_score = 0.05;
  bool ev_dump = false;
  eval->add_option("--data", ev_data, "Dataset directory")->required();
  eval->add_option("--checkpoint", ev_ckpt, "Model checkpoint")->required();
  eval->add_option("--out", ev_out, "Output directory")->required();
  eval->add_option("--split", ev_split, "Split")->check(CLI::IsMember({"train", "val", "all"}));
  eval->add_option("--ps", ev_ps, "Peak kernel parameters (several: merged decode)")->delimiter(',');
  eval->add_option("--score-thresh", ev_score, "Score threshold");
  eval->add_flag("--dump-targets", ev_dump, "Write target and predicted heatmaps as GTEN");

  // decode
  auto* dec = app.add_subcommand("decode", "Detect objects in one image");
  std::string dc_ckpt, dc_image, dc_out;
  std::vector<std::size_t> dc_ps{0, 1, 10, 20};
  double dc_score = 0.3;
  dec->add_option("--checkpoint", dc_ckpt, "Model checkpoint")->required();
  dec->add_option("--image", dc_image, "Input PPM image")->required();
  dec->add_option("--out", dc_out, "Output directory")->required();
  dec->add_option("--ps", dc_ps, "Peak kernel parameters")->delimiter(',');
  dec->add_option("--score-thresh", dc_score, "Score threshold");

  // ablate-fusion
  auto* abf = app.add_subcommand("ablate-fusion", "Train with and without fusion blocks");
  FusionAblationConfig fa;
  std::string fa_out;
  abf->add_option("--seeds", fa.seeds, "Seeds")->delimiter(',');
  abf->add_option("--scenes", fa.scenes, "Synthetic scenes");
  abf->add_option("--data-seed", fa.data_seed, "Dataset seed");
  abf->add_option("--steps", fa.train.steps, "Steps per run");
  abf->add_option("--lr", fa.train.optim.lr, "Peak learning rate");
  abf->add_option("--micro-batch", fa.train.micro_batch, "Images per forward pass");
  abf->add_option("--accum", fa.train.accum, "Micro-batches per step");
  abf->add_option("--out", fa_out, "Output directory")->required();

  // ablate-kernel
  auto* abk = app.add_subcommand("ablate-kernel", "Detection counts per peak kernel");
  std::string ak_ckpt, ak_data, ak_out, ak_split = "val";
  std::vector<std::size_t> ak_ps{0, 1, 5, 10, 20};
  double ak_score = 0.05;
  abk->add_option("--checkpoint", ak_ckpt, "Model checkpoint")->required();
  abk->add_option("--data", ak_data, "Dataset directory")->required();
  abk->add_option("--out", ak_out, "Output directory")->required();
  abk->add_option("--split", ak_split, "Split")->check(CLI::IsMember({"train", "val", "all"}));
  abk->add_option("--ps", ak_ps, "Kernel parameters")->delimiter(',');
  abk->add_option("--score-thresh", ak_score, "Score threshold");

  // gradcheck
  auto* gc = app.add_subcommand("gradcheck", "Finite-difference gradient checks at real64");
  std::uint64_t gc_seed = 0;
  gc->add_option("--seed", gc_seed, "Random seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (*gen) {
      SceneSpec spec;
      spec.height = spec.width = gen_size;
      const auto index = generate_dataset(gen_out, gen_images, gen_seed, spec);
      std::cout << "wrote " << gen_images << " images (" << index.train.size() << " train, "
                << index.val.size() << " val) to " << gen_out << "\n";
    } else if (*train) {
      tc.augment = !tr_no_augment;
      const auto index = read_dataset_index(tr_data);
      auto samples = load_samples(tr_data, index.train, index);
      GlodConfig mc;
      mc.fusion = parse_on_off(tr_fusion);
      Trainer<Real> trainer(mc, tc, std::move(samples));
      fs::create_directories(tr_out);
      const bool resuming = !tr_resume.empty();
      if (resuming) trainer.restore(load_checkpoint<Real>(tr_resume));
      auto log = open_out(fs::path(tr_out) / "metrics.csv",
                          resuming ? std::ios::binary | std::ios::app : std::ios::binary);
      if (!resuming) write_log_header(log);
      run_training(trainer, log, tr_out);
      std::cout << "trained to step " << trainer.step_count() << "; checkpoint in " << tr_out << "\n";
    } else if (*eval) {
      auto net = load_model(ev_ckpt);
      const auto samples = load_split(ev_data, ev_split);
      GLOD_CHECK(!samples.empty(), Error, "split '", ev_split, "' is empty");
      const auto d = decode_config(ev_ps, ev_score, net.config().output_stride);
      fs::create_directories(ev_out);
      std::vector<std::vector<Detection>> dets;
      std::vector<std::vector<GroundTruthObject>> gts;
      std::vector<Tensor<Real>> pred_maps, gt_maps;
      std::vector<DetectionRecord> records;
      for (const auto& s : samples) {
        auto maps = predict(net, s.image);
        dets.push_back(run_decode(maps, d));
        for (const auto& det : dets.back()) records.push_back({s.id, det});
        const auto t = target_config<Real>(net.config(), s.image.height, s.image.width, 0.0);
        gt_maps.push_back(encode_targets<Real>(s.objects, t, 0).heatmap);
        if (ev_dump) {
          auto os = open_out(fs::path(ev_out) / (s.id + "_target.gten"));
          write_gten(os, gt_maps.back());
          auto op = open_out(fs::path(ev_out) / (s.id + "_heatmap.gten"));
          write_gten(op, maps.heatmap);
        }
        pred_maps.push_back(std::move(maps.heatmap));
        gts.push_back(s.objects);
      }
      const auto r = evaluate<Real>(dets, gts, net.config().num_classes, pred_maps, gt_maps);
      auto det_os = open_out(fs::path(ev_out) / "detections.tsv");
      write_detections(det_os, records);
      auto csv = open_out(fs::path(ev_out) / "metrics.csv");
      write_eval_csv(csv, r);
      write_eval_csv(std::cout, r);
    } else if (*dec) {
      auto net = load_model(dc_ckpt);
      Image img = load_ppm(dc_image);
      const auto maps = predict(net, img);
      const auto dets = run_decode(maps, decode_config(dc_ps, dc_score, net.config().output_stride));
      fs::create_directories(dc_out);
      std::vector<DetectionRecord> records;
      const std::string id = fs::path(dc_image).stem().string();
      for (const auto& det : dets) records.push_back({id, det});
      auto os = open_out(fs::path(dc_out) / "detections.tsv");
      write_detections(os, records);
      draw_boxes(img, dets);
      save_ppm(fs::path(dc_out) / "render.ppm", img);
      std::cout << dets.size() << " detections\n";
    } else if (*abf) {
      fs::create_directories(fa_out);
      const auto rows = run_fusion_ablation<Real>(fa, [](const std::string& s) { std::cout << s << std::endl; });
      auto os = open_out(fs::path(fa_out) / "fusion_ablation.csv");
      write_fusion_ablation_csv(os, rows);
      write_fusion_ablation_csv(std::cout, rows);
      std::size_t wins = 0;
      for (const auto& r : rows) wins += r.fusion_not_worse() ? 1 : 0;
      std::cout << "fusion >= no fusion (mAP50 and mAP75) in " << wins << " of " << rows.size()
                << " seeds\n";
    } else if (*abk) {
      auto net = load_model(ak_ckpt);
      const auto samples = load_split(ak_data, ak_split);
      std::vector<HeadMaps<Real>> maps;
      std::vector<std::vector<GroundTruthObject>> gts;
      for (const auto& s : samples) {
        maps.push_back(predict(net, s.image));
        gts.push_back(s.objects);
      }
      DecodeConfig d = decode_config({0, 1, 10, 20}, ak_score, net.config().output_stride);
      const auto rows = kernel_sweep(maps, gts, ak_ps, d, net.config().num_classes);
      fs::create_directories(ak_out);
      auto os = open_out(fs::path(ak_out) / "kernel_counts.csv");
      write_kernel_csv(os, rows);
      write_kernel_csv(std::cout, rows);
    } else if (*gc) {
      bool ok = true;
      for (const auto& r : run_gradient_suite(gc_seed)) {
        const bool pass = r.result.max_rel_err < 1e-4;
        ok = ok && pass;
        std::printf("%-26s max_rel_err %.3e  checked %zu  skipped %zu  %s\n", r.block.c_str(),
                    r.result.max_rel_err, r.result.checked, r.result.skipped, pass ? "ok" : "FAIL");
      }
      return ok ? 0 : 2;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
