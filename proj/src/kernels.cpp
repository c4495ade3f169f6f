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

#include "cilf/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <exception>

#include <omp.h>

#include "cilf/error.hpp"

namespace cilf::kernels {
namespace {

// Runs body(i) for i in [0, n); rethrows the first exception by index.
template <typename Body>
void for_each_index(Exec exec, std::size_t n, Body&& body) {
  if (exec == Exec::serial) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::vector<std::exception_ptr> errors(n);
  const auto count = static_cast<std::ptrdiff_t>(n);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < count; ++i) {
    try {
      body(static_cast<std::size_t>(i));
    } catch (...) {
      errors[static_cast<std::size_t>(i)] = std::current_exception();
    }
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace

void forward_batch(Exec exec, const model::Network& net, const model::ModelParams& params,
                   std::span<const data::SceneWindow* const> windows,
                   std::span<const double> noise, model::MaskMode mode, double temperature,
                   std::vector<model::ForwardCache>& caches) {
  const std::size_t v_dim = net.config().v_dim;
  if (noise.size() != windows.size() * v_dim) {
    throw ArgumentError("forward_batch: expected " + std::to_string(windows.size() * v_dim) +
                        " noise values, got " + std::to_string(noise.size()));
  }
  caches.resize(windows.size());
  for_each_index(exec, windows.size(), [&](std::size_t i) {
    net.forward(*windows[i], params, noise.subspan(i * v_dim, v_dim), mode, temperature,
                caches[i]);
  });
}

void backward_batch(Exec exec, const model::Network& net, const model::ModelParams& params,
                    std::span<const model::ForwardCache> caches,
                    std::span<const model::OutputGrads> upstream,
                    model::GradientRouting routing, std::span<double> grad_sum) {
  if (caches.size() != upstream.size()) throw ArgumentError("backward_batch: size mismatch");
  if (grad_sum.size() != params.size()) throw ArgumentError("backward_batch: gradient size");
  const std::size_t p = params.size();
  std::fill(grad_sum.begin(), grad_sum.end(), 0.0);
  if (exec == Exec::serial) {
    std::vector<double> local(p);
    for (std::size_t i = 0; i < caches.size(); ++i) {
      std::fill(local.begin(), local.end(), 0.0);
      net.backward(params, caches[i], upstream[i], routing, local);
      for (std::size_t e = 0; e < p; ++e) grad_sum[e] += local[e];
    }
    return;
  }
  std::vector<double> per_window(caches.size() * p, 0.0);
  for_each_index(exec, caches.size(), [&](std::size_t i) {
    net.backward(params, caches[i], upstream[i], routing,
                 std::span<double>(per_window).subspan(i * p, p));
  });
  for (std::size_t i = 0; i < caches.size(); ++i) {
    const double* src = per_window.data() + i * p;
    for (std::size_t e = 0; e < p; ++e) grad_sum[e] += src[e];
  }
}

void displacement_errors(Exec exec, std::span<const double> preds, std::span<const double> gts,
                         std::size_t steps, std::span<double> mean_per_window,
                         std::span<double> final_per_window) {
  if (steps == 0) throw ArgumentError("displacement_errors: zero steps");
  if (preds.size() != gts.size() || preds.size() % (2 * steps) != 0) {
    throw ArgumentError("displacement_errors: trajectory shapes do not match");
  }
  const std::size_t n = preds.size() / (2 * steps);
  if (mean_per_window.size() != n || final_per_window.size() != n) {
    throw ArgumentError("displacement_errors: output size mismatch");
  }
  for_each_index(exec, n, [&](std::size_t i) {
    const double* p = preds.data() + i * steps * 2;
    const double* g = gts.data() + i * steps * 2;
    double sum = 0.0;
    double last = 0.0;
    for (std::size_t t = 0; t < steps; ++t) {
      last = std::hypot(p[2 * t] - g[2 * t], p[2 * t + 1] - g[2 * t + 1]);
      sum += last;
    }
    mean_per_window[i] = sum / static_cast<double>(steps);
    final_per_window[i] = last;
  });
}

}  // namespace cilf::kernels
