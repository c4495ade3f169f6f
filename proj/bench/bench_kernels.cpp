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

// Serial vs OpenMP kernels on synthetic windows.

#include <benchmark/benchmark.h>

#include <vector>

#include "cilf/data.hpp"
#include "cilf/kernels.hpp"
#include "cilf/model.hpp"
#include "cilf/rng.hpp"
#include "cilf/synthetic.hpp"

namespace {

using cilf::kernels::Exec;

struct Fixture {
  cilf::model::Network net;
  cilf::model::ModelParams params;
  std::vector<cilf::data::SceneWindow> windows;
  std::vector<const cilf::data::SceneWindow*> ptrs;

  explicit Fixture(std::size_t n) : net(make_config()) {
    params = net.make_params();
    net.init_params(params, 1);
    cilf::synthetic::SyntheticSpec spec;
    spec.n_domains = 2;
    spec.scenes_per_domain = (n + 3) / 4 + 1;
    const auto ds = cilf::synthetic::generate_synthetic_domains(spec);
    for (const auto& scenes : ds.domains) {
      for (auto& w : cilf::data::window_scenes(scenes)) {
        if (windows.size() < n) windows.push_back(cilf::data::normalize_window(w).first);
      }
    }
    for (const auto& w : windows) ptrs.push_back(&w);
  }

  static cilf::model::ModelConfig make_config() {
    cilf::model::ModelConfig c;
    c.context_dim = 8;
    c.v_dim = 8;
    c.backbone = cilf::model::Backbone::neighbor_pool;
    return c;
  }
};

void BM_ForwardBackward(benchmark::State& state, Exec exec) {
  Fixture f(static_cast<std::size_t>(state.range(0)));
  cilf::Rng rng(3);
  std::vector<double> noise(f.windows.size() * f.net.config().v_dim);
  for (double& g : noise) g = rng.gumbel();
  std::vector<cilf::model::ForwardCache> caches;
  std::vector<cilf::model::OutputGrads> up(f.windows.size());
  for (auto& u : up) {
    u.causal = cilf::model::Matrix::Constant(2, cilf::data::kPredLen, 0.01);
    u.spurious = cilf::model::Matrix::Constant(2, cilf::data::kPredLen, 0.01);
  }
  std::vector<double> grad(f.params.size());
  for (auto _ : state) {
    cilf::kernels::forward_batch(exec, f.net, f.params, f.ptrs, noise,
                                 cilf::model::MaskMode::soft, 0.5, caches);
    cilf::kernels::backward_batch(exec, f.net, f.params, caches, up,
                                  cilf::model::GradientRouting::adversarial, grad);
    benchmark::DoNotOptimize(grad.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(f.windows.size()));
}

void BM_DisplacementErrors(benchmark::State& state, Exec exec) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const std::size_t steps = cilf::data::kPredLen;
  cilf::Rng rng(5);
  std::vector<double> a(n * steps * 2), b(n * steps * 2);
  for (double& v : a) v = rng.normal();
  for (double& v : b) v = rng.normal();
  std::vector<double> mean(n), last(n);
  for (auto _ : state) {
    cilf::kernels::displacement_errors(exec, a, b, steps, mean, last);
    benchmark::DoNotOptimize(mean.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}

}  // namespace

BENCHMARK_CAPTURE(BM_ForwardBackward, serial, Exec::serial)->Arg(32)->Arg(256);
BENCHMARK_CAPTURE(BM_ForwardBackward, parallel, Exec::parallel)->Arg(32)->Arg(256);
BENCHMARK_CAPTURE(BM_DisplacementErrors, serial, Exec::serial)->Arg(1024)->Arg(65536);
BENCHMARK_CAPTURE(BM_DisplacementErrors, parallel, Exec::parallel)->Arg(1024)->Arg(65536);

BENCHMARK_MAIN();
