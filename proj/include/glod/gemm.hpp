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

#include <Eigen/Core>

namespace glod::detail {

/// C[m,n] = beta*C + A'[m,k] * B'[k,n], row-major, where A' = A or A^T and
/// B' = B or B^T. Thin wrapper over Eigen's GEMM kernels.
template <class T>
void gemm(bool trans_a, bool trans_b, int m, int n, int k, const T* a,
          const T* b, T beta, T* c) {
  using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using CMap = Eigen::Map<const Mat>;
  Eigen::Map<Mat> cm(c, m, n);
  if (beta == T{0}) {
    cm.setZero();
  } else if (beta != T{1}) {
    cm *= beta;
  }
  if (!trans_a && !trans_b) {
    cm.noalias() += CMap(a, m, k) * CMap(b, k, n);
  } else if (!trans_a && trans_b) {
    cm.noalias() += CMap(a, m, k) * CMap(b, n, k).transpose();
  } else if (trans_a && !trans_b) {
    cm.noalias() += CMap(a, k, m).transpose() * CMap(b, k, n);
  } else {
    cm.noalias() += CMap(a, k, m).transpose() * CMap(b, n, k).transpose();
  }
}

}  // namespace glod::detail
