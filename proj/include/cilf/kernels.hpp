/* Copyright 2026 The CILF Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");

You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#ifndef CILF_KERNELS_HPP_
#define CILF_KERNELS_HPP_

#include <cstddef>
#include <span>
#include <vector>

#include "cilf/data.hpp"
#include "cilf/model.hpp"

// Batch kernels with a serial reference and an OpenMP path. Both reduce
// per-window results in window order, so their outputs are bit-identical.
namespace cilf::kernels {

enum class Exec { serial, parallel };

// `noise` is window-major: noise[i * v_dim + d].
void forward_batch(Exec exec, const model::Network& net, const model::ModelParams& params,
                   std::span<const data::SceneWindow* const> windows,
                   std::span<const double> noise, model::MaskMode mode, double temperature,
                   std::vector<model::ForwardCache>& caches);

// grad_sum (params-sized) is overwritten with sum_i grad_i.
void backward_batch(Exec exec, const model::Network& net, const model::ModelParams& params,
                    std::span<const model::ForwardCache> caches,
                    std::span<const model::OutputGrads> upstream,
                    model::GradientRouting routing, std::span<double> grad_sum);

// Per-window mean and final L2 displacement for (n, steps, 2) row-major
// trajectories.
void displacement_errors(Exec exec, std::span<const double> preds, std::span<const double> gts,
                         std::size_t steps, std::span<double> mean_per_window,
                         std::span<double> final_per_window);

}  // namespace cilf::kernels

#endif  // CILF_KERNELS_HPP_
