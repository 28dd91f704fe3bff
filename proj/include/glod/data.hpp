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

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "glod/random.hpp"
#include "glod/targets.hpp"
#include "glod/tensor.hpp"

namespace glod {

/// 8-bit RGB image, planar [3,H,W].
struct Image {
  std::size_t height = 0, width = 0;
  std::vector<std::uint8_t> pixels;

  Image() = default;
  Image(std::size_t h, std::size_t w) : height(h), width(w), pixels(3 * h * w, 0) {}

  std::uint8_t& at(std::size_t c, std::size_t y, std::size_t x) {
    return pixels[(c * height + y) * width + x];
  }
  std::uint8_t at(std::size_t c, std::size_t y, std::size_t x) const {
    return pixels[(c * height + y) * width + x];
  }
  friend bool operator==(const Image&, const Image&) = default;
};

// Scene generation.

struct ClassStyle {
  std::string name;
  double frequency;
  std::size_t min_size, max_size;  // side lengths, pixels
  double max_aspect;               // long side / short side
  std::array<int, 3> color;
};

struct SceneSpec {
  std::size_t height = 128, width = 128;
  std::size_t min_objects = 6, max_objects = 18;
  std::size_t num_roads = 2;
  std::size_t road_width = 6;
  double road_band = 8;  // small vehicles sit within this distance of a road
  std::size_t output_stride = 4;  // centers of distinct objects fall in distinct cells
  int pixel_noise = 12;
  std::vector<ClassStyle> classes{
      {"small-vehicle", 0.70, 4, 8, 2.0, {230, 60, 50}},
      {"large-vehicle", 0.15, 10, 16, 2.5, {250, 220, 60}},
      {"building", 0.10, 18, 32, 1.6, {150, 150, 170}},
      {"container", 0.04, 8, 14, 3.0, {40, 120, 230}},
      {"rare-class", 0.01, 12, 20, 1.2, {240, 240, 240}},
  };

  void validate() const {
    GLOD_CHECK(!classes.empty(), ConfigError, "scene spec has no classes");
    GLOD_CHECK(min_objects <= max_objects, ConfigError, "min_objects > max_objects");
    GLOD_CHECK(output_stride >= 1 && height % output_stride == 0 && width % output_stride == 0,
               ConfigError, "image size not divisible by output stride");
    for (const auto& c : classes) {
      GLOD_CHECK(c.frequency >= 0 && c.min_size >= 2 && c.min_size <= c.max_size &&
                     c.max_aspect >= 1.0,
                 ConfigError, "invalid style for class '", c.name, "'");
      GLOD_CHECK(c.max_size + 2 <= std::min(height, width), ConfigError, "class '", c.name,
                 "' objects (", c.max_size, " px) do not fit a ", width, "x", height, " image");
    }
  }
};

struct Scene {
  Image image;
  std::vector<GroundTruthObject> objects;
};

namespace detail {

struct Segment {
  double x0, y0, x1, y1;
};

inline double point_segment_distance(double px, double py, const Segment& s, double* tx = nullptr,
                                     double* ty = nullptr) {
  const double dx = s.x1 - s.x0, dy = s.y1 - s.y0;
  const double len2 = dx * dx + dy * dy;
  double t = len2 > 0 ? ((px - s.x0) * dx + (py - s.y0) * dy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  const double qx = s.x0 + t * dx, qy = s.y0 + t * dy;
  if (tx) *tx = qx;
  if (ty) *ty = qy;
  return std::hypot(px - qx, py - qy);
}

inline std::uint8_t clamp_u8(int v) { return static_cast<std::uint8_t>(std::clamp(v, 0, 255)); }

}  // namespace detail

/// Deterministic synthetic aerial scene: textured ground, straight roads,
/// and non-overlapping class-coloured rectangles whose centers occupy
/// distinct output cells. Small vehicles cluster along roads.
inline Scene generate_scene(std::uint64_t seed, const SceneSpec& spec) {
  spec.validate();
  std::mt19937_64 rng(seed);
  auto uniform = [&](double a, double b) { return std::uniform_real_distribution<double>(a, b)(rng); };
  auto randint = [&](long a, long b) { return std::uniform_int_distribution<long>(a, b)(rng); };
  const double W = double(spec.width), H = double(spec.height);

  Scene scene;
  scene.image = Image(spec.height, spec.width);
  Image& img = scene.image;

  // Ground.
  const std::array<int, 3> ground{int(randint(60, 100)), int(randint(80, 120)), int(randint(50, 80))};
  for (std::size_t y = 0; y < spec.height; ++y)
    for (std::size_t x = 0; x < spec.width; ++x) {
      const int n = int(randint(-spec.pixel_noise, spec.pixel_noise));
      for (std::size_t c = 0; c < 3; ++c) img.at(c, y, x) = detail::clamp_u8(ground[c] + n);
    }

  // Roads: chords between two random border points.
  std::vector<detail::Segment> roads;
  auto border_point = [&](int side) -> std::pair<double, double> {
    switch (side) {
      case 0: return {uniform(0, W), 0.0};
      case 1: return {W, uniform(0, H)};
      case 2: return {uniform(0, W), H};
      default: return {0.0, uniform(0, H)};
    }
  };
  for (std::size_t r = 0; r < spec.num_roads; ++r) {
    const int a = int(randint(0, 3));
    const int b = (a + int(randint(1, 3))) % 4;
    const auto [x0, y0] = border_point(a);
    const auto [x1, y1] = border_point(b);
    roads.push_back({x0, y0, x1, y1});
  }
  const double half_road = double(spec.road_width) / 2;
  for (std::size_t y = 0; y < spec.height; ++y)
    for (std::size_t x = 0; x < spec.width; ++x)
      for (const auto& s : roads)
        if (detail::point_segment_distance(double(x) + 0.5, double(y) + 0.5, s) < half_road) {
          const int n = int(randint(-spec.pixel_noise / 2, spec.pixel_noise / 2));
          for (std::size_t c = 0; c < 3; ++c) img.at(c, y, x) = detail::clamp_u8(110 + n);
          break;
        }

  // Objects.
  std::vector<double> freq;
  for (const auto& c : spec.classes) freq.push_back(c.frequency);
  std::discrete_distribution<std::size_t> pick_class(freq.begin(), freq.end());
  const std::size_t count = std::size_t(randint(long(spec.min_objects), long(spec.max_objects)));
  struct Rect {
    long x0, y0, x1, y1;  // half-open
  };
  std::vector<Rect> placed;
  std::vector<bool> cell_used((spec.height / spec.output_stride) * (spec.width / spec.output_stride));
  const std::size_t cells_w = spec.width / spec.output_stride;

  for (std::size_t i = 0; i < count; ++i) {
    const std::size_t cls = pick_class(rng);
    const auto& st = spec.classes[cls];
    for (int attempt = 0; attempt < 100; ++attempt) {
      const double aspect = uniform(1.0, st.max_aspect);
      long a = randint(long(st.min_size), long(st.max_size));
      long b = std::max(2L, long(std::lround(double(a) / aspect)));
      if (randint(0, 1)) std::swap(a, b);
      double cx, cy;
      if (cls == 0 && !roads.empty()) {
        const auto& s = roads[std::size_t(randint(0, long(roads.size()) - 1))];
        const double t = uniform(0, 1);
        const double ang = uniform(0, 2 * M_PI), rad = uniform(0, spec.road_band);
        cx = s.x0 + t * (s.x1 - s.x0) + rad * std::cos(ang);
        cy = s.y0 + t * (s.y1 - s.y0) + rad * std::sin(ang);
      } else {
        cx = uniform(0, W);
        cy = uniform(0, H);
      }
      Rect r{long(std::floor(cx - double(a) / 2)), long(std::floor(cy - double(b) / 2)), 0, 0};
      r.x1 = r.x0 + a;
      r.y1 = r.y0 + b;
      if (r.x0 < 1 || r.y0 < 1 || r.x1 > long(spec.width) - 1 || r.y1 > long(spec.height) - 1)
        continue;
      const bool overlaps = std::any_of(placed.begin(), placed.end(), [&](const Rect& q) {
        return r.x0 < q.x1 + 1 && q.x0 < r.x1 + 1 && r.y0 < q.y1 + 1 && q.y0 < r.y1 + 1;
      });
      if (overlaps) continue;
      const double ocx = double(r.x0) + double(a) / 2, ocy = double(r.y0) + double(b) / 2;
      const std::size_t cell = std::size_t(ocy) / spec.output_stride * cells_w +
                               std::size_t(ocx) / spec.output_stride;
      if (cell_used[cell]) continue;
      cell_used[cell] = true;
      placed.push_back(r);
      scene.objects.push_back({cls, ocx, ocy, double(a), double(b)});
      // Body with a darker one-pixel rim and a class-specific texture.
      std::array<int, 3> col;
      for (std::size_t c = 0; c < 3; ++c) col[c] = st.color[c] + int(randint(-20, 20));
      for (long y = r.y0; y < r.y1; ++y)
        for (long x = r.x0; x < r.x1; ++x) {
          const bool rim = y == r.y0 || x == r.x0 || y == r.y1 - 1 || x == r.x1 - 1;
          const bool stripe = cls == 2 ? ((x + y) % 6 < 2) : cls == 3 ? ((x - r.x0) % 3 == 0) : false;
          const int shade = rim ? -60 : stripe ? -25 : 0;
          const int n = int(randint(-spec.pixel_noise, spec.pixel_noise));
          for (std::size_t c = 0; c < 3; ++c)
            img.at(c, std::size_t(y), std::size_t(x)) = detail::clamp_u8(col[c] + shade + n);
        }
      break;
    }
  }
  return scene;
}

// Augmentation.

struct AugmentationConfig {
  double p_greyscale = 0.25;
  double p_solarize = 0.25;
  int solarize_threshold = 192;
  double p_equalize = 0.25;
  double p_hflip = 0.25;
  double p_vflip = 0.25;

  void validate() const {
    GLOD_CHECK(solarize_threshold >= 0 && solarize_threshold <= 255, ConfigError,
               "solarize threshold must lie in [0,255]");
  }
};

inline std::uint8_t solarize_value(std::uint8_t v, int threshold = 192) {
  return int(v) < threshold ? v : static_cast<std::uint8_t>(255 - v);
}

inline void solarize(Image& img, int threshold = 192) {
  for (auto& v : img.pixels) v = solarize_value(v, threshold);
}

inline void greyscale(Image& img) {
  const std::size_t n = img.height * img.width;
  for (std::size_t i = 0; i < n; ++i) {
    const double l = 0.299 * img.pixels[i] + 0.587 * img.pixels[n + i] + 0.114 * img.pixels[2 * n + i];
    const auto v = detail::clamp_u8(int(std::lround(l)));
    img.pixels[i] = img.pixels[n + i] = img.pixels[2 * n + i] = v;
  }
}

/// Per-channel histogram equalization to a uniform CDF.
inline void equalize(Image& img) {
  const std::size_t n = img.height * img.width;
  for (std::size_t c = 0; c < 3; ++c) {
    std::uint8_t* ch = img.pixels.data() + c * n;
    std::array<std::size_t, 256> hist{};
    for (std::size_t i = 0; i < n; ++i) ++hist[ch[i]];
    std::array<std::size_t, 256> cdf{};
    std::size_t run = 0;
    for (std::size_t v = 0; v < 256; ++v) cdf[v] = run += hist[v];
    const std::size_t cdf_min = *std::find_if(cdf.begin(), cdf.end(), [](std::size_t x) { return x > 0; });
    if (n == cdf_min) continue;  // single-valued channel
    std::array<std::uint8_t, 256> lut{};
    for (std::size_t v = 0; v < 256; ++v) {
      const double num = cdf[v] > cdf_min ? double(cdf[v] - cdf_min) : 0.0;
      lut[v] = detail::clamp_u8(int(std::lround(num / double(n - cdf_min) * 255.0)));
    }
    for (std::size_t i = 0; i < n; ++i) ch[i] = lut[ch[i]];
  }
}

inline void hflip(Image& img, std::vector<GroundTruthObject>& objects) {
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < img.height; ++y) {
      auto* row = &img.at(c, y, 0);
      std::reverse(row, row + img.width);
    }
  for (auto& o : objects) o.cx = double(img.width) - o.cx;
}

inline void vflip(Image& img, std::vector<GroundTruthObject>& objects) {
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < img.height / 2; ++y)
      std::swap_ranges(&img.at(c, y, 0), &img.at(c, y, 0) + img.width,
                       &img.at(c, img.height - 1 - y, 0));
  for (auto& o : objects) o.cy = double(img.height) - o.cy;
}

/// Applies each enabled transform independently with its probability.
inline void augment(Image& img, std::vector<GroundTruthObject>& objects,
                    const AugmentationConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  std::mt19937_64 rng(seed);
  auto coin = [&](double p) { return std::uniform_real_distribution<double>(0, 1)(rng) < p; };
  // Draw all coins up front so the stream does not depend on outcomes.
  const bool g = coin(cfg.p_greyscale), s = coin(cfg.p_solarize), e = coin(cfg.p_equalize),
             h = coin(cfg.p_hflip), v = coin(cfg.p_vflip);
  if (g) greyscale(img);
  if (s) solarize(img, cfg.solarize_threshold);
  if (e) equalize(img);
  if (h) hflip(img, objects);
  if (v) vflip(img, objects);
}

// Normalization.

struct NormalizeConfig {
  std::array<double, 3> mean{0.485, 0.456, 0.406};
  std::array<double, 3> stddev{0.229, 0.224, 0.225};
};

/// [3,H,W] values in [0,255] -> (x/255 - mean) / std.
template <class T>
Tensor<T> normalize(const Tensor<T>& x, const NormalizeConfig& cfg = {}) {
  GLOD_CHECK(x.rank() == 3 && x.shape()[0] == 3, ShapeError,
             "normalize expects a [3,H,W] image, got ", to_string(x.shape()));
  Tensor<T> out(x.shape());
  const std::size_t plane = x.shape()[1] * x.shape()[2];
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t i = c * plane; i < (c + 1) * plane; ++i)
      out[i] = static_cast<T>((double(x[i]) / 255.0 - cfg.mean[c]) / cfg.stddev[c]);
  return out;
}

template <class T>
Tensor<T> denormalize(const Tensor<T>& x, const NormalizeConfig& cfg = {}) {
  GLOD_CHECK(x.rank() == 3 && x.shape()[0] == 3, ShapeError,
             "denormalize expects a [3,H,W] tensor, got ", to_string(x.shape()));
  Tensor<T> out(x.shape());
  const std::size_t plane = x.shape()[1] * x.shape()[2];
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t i = c * plane; i < (c + 1) * plane; ++i)
      out[i] = static_cast<T>((double(x[i]) * cfg.stddev[c] + cfg.mean[c]) * 255.0);
  return out;
}

template <class T>
Tensor<T> to_tensor(const Image& img) {
  Tensor<T> t({3, img.height, img.width});
  for (std::size_t i = 0; i < img.pixels.size(); ++i) t[i] = static_cast<T>(img.pixels[i]);
  return t;
}

template <class T>
Tensor<T> normalize(const Image& img, const NormalizeConfig& cfg = {}) {
  return normalize(to_tensor<T>(img), cfg);
}

// PPM (P6) I/O.

inline void write_ppm(std::ostream& os, const Image& img) {
  os << "P6\n" << img.width << ' ' << img.height << "\n255\n";
  const std::size_t n = img.height * img.width;
  std::vector<char> buf(3 * n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < 3; ++c) buf[3 * i + c] = static_cast<char>(img.pixels[c * n + i]);
  os.write(buf.data(), static_cast<std::streamsize>(buf.size()));
}

inline Image read_ppm(std::istream& is) {
  auto token = [&]() {
    std::string t;
    while (true) {
      const int ch = is.get();
      GLOD_CHECK(ch != EOF, FormatError, "truncated PPM header");
      if (ch == '#') {
        while (is.get() != '\n' && is) {
        }
        continue;
      }
      if (std::isspace(ch)) {
        if (!t.empty()) return t;
        continue;
      }
      t.push_back(char(ch));
    }
  };
  GLOD_CHECK(token() == "P6", FormatError, "not a binary PPM (P6)");
  const std::size_t w = std::stoul(token()), h = std::stoul(token());
  GLOD_CHECK(std::stoul(token()) == 255, FormatError, "PPM max value must be 255");
  Image img(h, w);
  std::vector<char> buf(3 * h * w);
  is.read(buf.data(), static_cast<std::streamsize>(buf.size()));
  GLOD_CHECK(is.gcount() == static_cast<std::streamsize>(buf.size()), FormatError,
             "truncated PPM pixel data");
  const std::size_t n = h * w;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < 3; ++c) img.pixels[c * n + i] = static_cast<std::uint8_t>(buf[3 * i + c]);
  return img;
}

inline void save_ppm(const std::filesystem::path& path, const Image& img) {
  std::ofstream os(path, std::ios::binary);
  GLOD_CHECK(os, Error, "cannot open ", path.string(), " for writing");
  write_ppm(os, img);
}

inline Image load_ppm(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  GLOD_CHECK(is, Error, "cannot open image ", path.string());
  return read_ppm(is);
}

// Dataset layout: {root}/images/{id}.ppm, {root}/annotations.tsv
// (image_id, class_id, cx, cy, w, h), {root}/split.tsv (image_id, train|val).

struct DatasetIndex {
  std::vector<std::string> train, val;
  std::map<std::string, std::vector<GroundTruthObject>> annotations;

  const std::vector<GroundTruthObject>& objects(const std::string& id) const {
    static const std::vector<GroundTruthObject> none;
    auto it = annotations.find(id);
    return it == annotations.end() ? none : it->second;
  }
};

/// Seeded shuffle, first round(train_fraction * n) ids go to train. Each
/// part keeps the input order.
inline std::pair<std::vector<std::string>, std::vector<std::string>> split_ids(
    const std::vector<std::string>& ids, std::uint64_t seed, double train_fraction = 0.85) {
  std::vector<std::size_t> order(ids.size());
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(seed);
  for (std::size_t i = order.size(); i > 1; --i)
    std::swap(order[i - 1], order[std::uniform_int_distribution<std::size_t>(0, i - 1)(rng)]);
  const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * double(ids.size())));
  std::vector<bool> is_train(ids.size(), false);
  for (std::size_t i = 0; i < n_train; ++i) is_train[order[i]] = true;
  std::pair<std::vector<std::string>, std::vector<std::string>> out;
  for (std::size_t i = 0; i < ids.size(); ++i) (is_train[i] ? out.first : out.second).push_back(ids[i]);
  return out;
}

inline std::string format_number(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

inline void write_annotations(std::ostream& os, const std::vector<std::string>& ids,
                              const DatasetIndex& index) {
  for (const auto& id : ids)
    for (const auto& o : index.objects(id))
      os << id << '\t' << o.class_id << '\t' << format_number(o.cx) << '\t' << format_number(o.cy)
         << '\t' << format_number(o.w) << '\t' << format_number(o.h) << '\n';
}

inline std::map<std::string, std::vector<GroundTruthObject>> read_annotations(std::istream& is) {
  std::map<std::string, std::vector<GroundTruthObject>> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, '\t')) f.push_back(field);
    GLOD_CHECK(f.size() == 6, FormatError, "annotations line ", lineno, ": expected 6 fields, got ",
               f.size());
    GroundTruthObject o;
    auto parse = [&](const std::string& s, auto& v, const char* what) {
      const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
      GLOD_CHECK(r.ec == std::errc() && r.ptr == s.data() + s.size(), FormatError,
                 "annotations line ", lineno, ": bad ", what, " '", s, "'");
    };
    parse(f[1], o.class_id, "class_id");
    parse(f[2], o.cx, "cx");
    parse(f[3], o.cy, "cy");
    parse(f[4], o.w, "w");
    parse(f[5], o.h, "h");
    GLOD_CHECK(o.w > 0 && o.h > 0, FormatError, "annotations line ", lineno,
               ": box size must be positive");
    out[f[0]].push_back(o);
  }
  return out;
}

namespace fs = std::filesystem;

inline void write_dataset_index(const fs::path& root, const DatasetIndex& index) {
  fs::create_directories(root / "images");
  {
    std::ofstream os(root / "annotations.tsv", std::ios::binary);
    GLOD_CHECK(os, Error, "cannot write ", (root / "annotations.tsv").string());
    std::vector<std::string> all = index.train;
    all.insert(all.end(), index.val.begin(), index.val.end());
    std::sort(all.begin(), all.end());
    write_annotations(os, all, index);
  }
  std::ofstream os(root / "split.tsv", std::ios::binary);
  GLOD_CHECK(os, Error, "cannot write ", (root / "split.tsv").string());
  for (const auto& id : index.train) os << id << "\ttrain\n";
  for (const auto& id : index.val) os << id << "\tval\n";
}

inline DatasetIndex read_dataset_index(const fs::path& root) {
  GLOD_CHECK(fs::is_directory(root), Error, "dataset directory ", root.string(), " not found");
  DatasetIndex index;
  {
    std::ifstream is(root / "split.tsv");
    GLOD_CHECK(is, Error, "missing ", (root / "split.tsv").string());
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
      ++lineno;
      if (line.empty()) continue;
      const auto tab = line.find('\t');
      GLOD_CHECK(tab != std::string::npos, FormatError, "split.tsv line ", lineno,
                 ": expected image_id<TAB>train|val");
      const std::string id = line.substr(0, tab), part = line.substr(tab + 1);
      GLOD_CHECK(part == "train" || part == "val", FormatError, "split.tsv line ", lineno,
                 ": unknown split '", part, "'");
      (part == "train" ? index.train : index.val).push_back(id);
    }
  }
  std::ifstream is(root / "annotations.tsv");
  GLOD_CHECK(is, Error, "missing ", (root / "annotations.tsv").string());
  index.annotations = read_annotations(is);
  return index;
}

inline fs::path image_path(const fs::path& root, const std::string& id) {
  return root / "images" / (id + ".ppm");
}

inline std::string image_id(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%06zu", i);
  return buf;
}

/// Generates `count` scenes, writes images, annotations and an 85/15 split.
inline DatasetIndex generate_dataset(const fs::path& root, std::size_t count, std::uint64_t seed,
                                     const SceneSpec& spec = {}) {
  fs::create_directories(root / "images");
  DatasetIndex index;
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < count; ++i) {
    const std::string id = image_id(i);
    Scene s = generate_scene(derive_seed({seed, i}), spec);
    save_ppm(image_path(root, id), s.image);
    if (!s.objects.empty()) index.annotations[id] = std::move(s.objects);
    ids.push_back(id);
  }
  std::tie(index.train, index.val) = split_ids(ids, derive_seed({seed, 0x5eed}));
  write_dataset_index(root, index);
  return index;
}

}  // namespace glod
