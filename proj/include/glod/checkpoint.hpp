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

#include <cstring>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "glod/model.hpp"

namespace glod {

/// GCKPT v1: "GCKPT", u8 version, u32 config length, config text (key=value
/// lines), u32 entry count, then per entry u32 name length, name, GTEN payload.
template <class T>
struct Checkpoint {
  std::string config_text;
  std::vector<std::pair<std::string, Tensor<T>>> entries;

  const Tensor<T>* find(const std::string& name) const {
    for (const auto& [n, t] : entries)
      if (n == name) return &t;
    return nullptr;
  }
};

template <class T>
void write_checkpoint(std::ostream& os, const Checkpoint<T>& ck) {
  os.write("GCKPT", 5);
  const char version = 1;
  os.write(&version, 1);
  detail::write_u32le(os, static_cast<std::uint32_t>(ck.config_text.size()));
  os.write(ck.config_text.data(), static_cast<std::streamsize>(ck.config_text.size()));
  detail::write_u32le(os, static_cast<std::uint32_t>(ck.entries.size()));
  for (const auto& [name, t] : ck.entries) {
    detail::write_u32le(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_gten(os, t);
  }
}

template <class T>
Checkpoint<T> read_checkpoint(std::istream& is) {
  char magic[5];
  is.read(magic, 5);
  GLOD_CHECK(is.gcount() == 5 && std::memcmp(magic, "GCKPT", 5) == 0, FormatError,
             "bad GCKPT magic");
  char version = 0;
  is.read(&version, 1);
  GLOD_CHECK(version == 1, FormatError, "unsupported GCKPT version ", int(version));
  Checkpoint<T> ck;
  ck.config_text.resize(detail::read_u32le(is));
  is.read(ck.config_text.data(), static_cast<std::streamsize>(ck.config_text.size()));
  GLOD_CHECK(is.gcount() == static_cast<std::streamsize>(ck.config_text.size()), FormatError,
             "truncated GCKPT config block");
  const std::uint32_t count = detail::read_u32le(is);
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string name(detail::read_u32le(is), '\0');
    is.read(name.data(), static_cast<std::streamsize>(name.size()));
    GLOD_CHECK(is.gcount() == static_cast<std::streamsize>(name.size()), FormatError,
               "truncated GCKPT entry name");
    ck.entries.emplace_back(std::move(name), read_gten<T>(is));
  }
  return ck;
}

template <class T>
void save_checkpoint(const std::string& path, const Checkpoint<T>& ck) {
  std::ofstream os(path, std::ios::binary);
  GLOD_CHECK(os, Error, "cannot open ", path, " for writing");
  write_checkpoint(os, ck);
  GLOD_CHECK(os, Error, "write to ", path, " failed");
}

template <class T>
Checkpoint<T> load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  GLOD_CHECK(is, Error, "cannot open checkpoint ", path);
  return read_checkpoint<T>(is);
}

/// Snapshot of every registered parameter and buffer of `net`.
template <class T>
Checkpoint<T> make_checkpoint(GlodNet<T>& net, std::string extra_config = {}) {
  Checkpoint<T> ck;
  ck.config_text = to_text(net.config()) + extra_config;
  const auto reg = net.registry();
  for (const auto& e : reg.entries()) ck.entries.emplace_back(e.name, e.tensor());
  return ck;
}

/// Copies checkpoint tensors into `net`; every registered name must exist
/// with a matching shape.
template <class T, class U>
void load_into(GlodNet<T>& net, const Checkpoint<U>& ck) {
  const auto reg = net.registry();
  for (const auto& e : reg.entries()) {
    const Tensor<U>* src = ck.find(e.name);
    GLOD_CHECK(src != nullptr, FormatError, "checkpoint lacks entry '", e.name, "'");
    GLOD_CHECK(src->shape() == e.tensor().shape(), ShapeError, "checkpoint entry '", e.name,
               "' has shape ", to_string(src->shape()), ", model expects ",
               to_string(e.tensor().shape()));
    e.tensor() = src->template cast<T>();
  }
}

/// Number of learnable scalars stored in a checkpoint (running statistics
/// and optimizer state excluded).
template <class T>
std::size_t checkpoint_parameter_scalars(const Checkpoint<T>& ck) {
  std::size_t n = 0;
  auto ends_with = [](const std::string& s, const std::string& suf) {
    return s.size() >= suf.size() && s.compare(s.size() - suf.size(), suf.size(), suf) == 0;
  };
  for (const auto& [name, t] : ck.entries) {
    if (ends_with(name, ".running_mean") || ends_with(name, ".running_var")) continue;
    if (name.rfind("optim.", 0) == 0) continue;
    n += t.size();
  }
  return n;
}

}  // namespace glod
