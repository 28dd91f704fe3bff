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
#include <cmath>
#include <cstdint>
#include <cstring>
#include <functional>
#include <istream>
#include <numeric>
#include <ostream>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include "glod/error.hpp"

namespace glod {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

inline std::string to_string(const Shape& shape) {
  std::string s = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + ")";
}

/// Dense row-major tensor. Feature maps are laid out channels-first,
/// [C,H,W] or [N,C,H,W].
template <class T>
class Tensor {
  static_assert(std::is_floating_point_v<T>);

 public:
  using value_type = T;

  Tensor() = default;

  explicit Tensor(Shape shape, T fill = T{0}) : shape_(std::move(shape)) {
    validate_extents();
    data_.assign(numel(shape_), fill);
  }

  Tensor(Shape shape, std::vector<T> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    validate_extents();
    GLOD_CHECK(data_.size() == numel(shape_), ShapeError, "tensor data length ",
               data_.size(), " does not match shape ", to_string(shape_));
  }

  static Tensor scalar(T v) { return Tensor({1}, v); }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::span<T> values() { return data_; }
  std::span<const T> values() const { return data_; }
  std::vector<T>& storage() { return data_; }
  const std::vector<T>& storage() const { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  /// Multi-index access, e.g. t.at({c, y, x}).
  T& at(std::initializer_list<std::size_t> idx) { return data_[offset(idx)]; }
  const T& at(std::initializer_list<std::size_t> idx) const {
    return data_[offset(idx)];
  }

  T item() const {
    GLOD_CHECK(data_.size() == 1, ShapeError, "item() on tensor of shape ",
               to_string(shape_));
    return data_[0];
  }

  Tensor reshaped(Shape shape) const {
    Tensor out = *this;
    out.reshape(std::move(shape));
    return out;
  }

  void reshape(Shape shape) {
    GLOD_CHECK(numel(shape) == data_.size(), ShapeError, "cannot reshape ",
               to_string(shape_), " to ", to_string(shape));
    shape_ = std::move(shape);
    validate_extents();
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  template <class U>
  Tensor<U> cast() const {
    return Tensor<U>(shape_, std::vector<U>(data_.begin(), data_.end()));
  }

  bool all_finite() const {
    return std::all_of(data_.begin(), data_.end(),
                       [](T v) { return std::isfinite(v); });
  }

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  void validate_extents() const {
    for (std::size_t i = 0; i < shape_.size(); ++i) {
      GLOD_CHECK(shape_[i] >= 1, ShapeError, "extent of dimension ", i,
                 " must be >= 1 in shape ", to_string(shape_));
    }
  }

  std::size_t offset(std::initializer_list<std::size_t> idx) const {
    GLOD_CHECK(idx.size() == shape_.size(), ShapeError, "index rank ",
               idx.size(), " != tensor rank ", shape_.size());
    std::size_t off = 0;
    std::size_t d = 0;
    for (std::size_t i : idx) {
      GLOD_CHECK(i < shape_[d], ShapeError, "index ", i, " out of range for dimension ", d,
                 " of ", to_string(shape_));
      off = off * shape_[d] + i;
      ++d;
    }
    return off;
  }

  Shape shape_;
  std::vector<T> data_;
};

/// Views a rank-3 [C,H,W] or rank-4 [N,C,H,W] shape as NCHW.
struct Nchw {
  std::size_t n, c, h, w;
};

inline Nchw as_nchw(const Shape& s, const char* what = "input") {
  if (s.size() == 3) return {1, s[0], s[1], s[2]};
  GLOD_CHECK(s.size() == 4, ShapeError, what, " must be rank 3 or 4, got ",
             to_string(s));
  return {s[0], s[1], s[2], s[3]};
}

inline Shape nchw_like(const Shape& like, std::size_t n, std::size_t c,
                       std::size_t h, std::size_t w) {
  if (like.size() == 3) return {c, h, w};
  return {n, c, h, w};
}

// ---------------------------------------------------------------------------
// GTEN v1 container: "GTEN", u8 version, u8 dtype (0 real32, 1 real64),
// u8 rank, rank x u32 LE extents, raw LE values.

namespace detail {

inline void write_u32le(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

inline std::uint32_t read_u32le(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  GLOD_CHECK(is.gcount() == 4, FormatError, "truncated u32");
  return std::uint32_t(b[0]) | (std::uint32_t(b[1]) << 8) |
         (std::uint32_t(b[2]) << 16) | (std::uint32_t(b[3]) << 24);
}

template <class U>
void write_le(std::ostream& os, U v) {
  using Bits = std::conditional_t<sizeof(U) == 4, std::uint32_t, std::uint64_t>;
  Bits bits;
  std::memcpy(&bits, &v, sizeof(U));
  unsigned char b[sizeof(U)];
  for (std::size_t i = 0; i < sizeof(U); ++i) b[i] = (bits >> (8 * i)) & 0xff;
  os.write(reinterpret_cast<const char*>(b), sizeof(U));
}

template <class U>
U read_le(std::istream& is) {
  using Bits = std::conditional_t<sizeof(U) == 4, std::uint32_t, std::uint64_t>;
  unsigned char b[sizeof(U)];
  is.read(reinterpret_cast<char*>(b), sizeof(U));
  GLOD_CHECK(is.gcount() == static_cast<std::streamsize>(sizeof(U)),
             FormatError, "truncated tensor payload");
  Bits bits = 0;
  for (std::size_t i = 0; i < sizeof(U); ++i) bits |= Bits(b[i]) << (8 * i);
  U v;
  std::memcpy(&v, &bits, sizeof(U));
  return v;
}

}  // namespace detail

template <class T>
void write_gten(std::ostream& os, const Tensor<T>& t) {
  os.write("GTEN", 4);
  const char header[3] = {1, std::is_same_v<T, double> ? char(1) : char(0),
                          static_cast<char>(t.rank())};
  os.write(header, 3);
  for (std::size_t e : t.shape()) detail::write_u32le(os, static_cast<std::uint32_t>(e));
  for (T v : t.values()) detail::write_le(os, v);
}

/// Reads a GTEN payload, converting the stored dtype to T.
template <class T>
Tensor<T> read_gten(std::istream& is) {
  char magic[4];
  is.read(magic, 4);
  GLOD_CHECK(is.gcount() == 4 && std::memcmp(magic, "GTEN", 4) == 0,
             FormatError, "bad GTEN magic");
  char header[3];
  is.read(header, 3);
  GLOD_CHECK(is.gcount() == 3, FormatError, "truncated GTEN header");
  GLOD_CHECK(header[0] == 1, FormatError, "unsupported GTEN version ",
             int(header[0]));
  const int dtype = header[1];
  GLOD_CHECK(dtype == 0 || dtype == 1, FormatError, "unknown GTEN dtype ",
             dtype);
  const auto rank = static_cast<unsigned char>(header[2]);
  Shape shape(rank);
  for (auto& e : shape) e = detail::read_u32le(is);
  std::vector<T> data(numel(shape));
  for (auto& v : data) {
    v = dtype == 0 ? static_cast<T>(detail::read_le<float>(is))
                   : static_cast<T>(detail::read_le<double>(is));
  }
  return Tensor<T>(std::move(shape), std::move(data));
}

}  // namespace glod
