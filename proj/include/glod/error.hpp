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

#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>

namespace glod {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Raised on inconsistent tensor extents. The message names the offending
/// dimension.
class ShapeError : public Error {
 public:
  using Error::Error;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Gradient or loss became non-finite.
class NumericError : public Error {
 public:
  using Error::Error;
};

namespace detail {

template <class... Args>
std::string concat(Args&&... args) {
  std::ostringstream os;
  (os << ... << std::forward<Args>(args));
  return os.str();
}

}  // namespace detail

#define GLOD_CHECK(cond, ErrType, ...)                       \
  do {                                                       \
    if (!(cond)) {                                           \
      throw ErrType(::glod::detail::concat(__VA_ARGS__));    \
    }                                                        \
  } while (0)

}  // namespace glod
