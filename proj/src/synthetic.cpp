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

#include "cilf/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <ostream>

#include "cilf/error.hpp"
#include "cilf/rng.hpp"
#include "kv_util.hpp"
#include "text_util.hpp"

namespace cilf::synthetic {
namespace {

constexpr std::uint64_t kSharedStream = 0x5301;
constexpr std::uint64_t kDomainStream = 0x5302;
constexpr std::uint64_t kCausalStream = 0x5303;
constexpr std::uint64_t kNonCausalStream = 0x5304;
constexpr std::uint64_t kKinematicStream = 0x5305;

constexpr double kDt = 1.0 / data::kFrameRateHz;
constexpr double kNoiseStd = 0.1;
constexpr double kSpawnRange = 50.0;
constexpr double kNeighborSpread = 15.0;

std::string subset_name(std::size_t d) {
  std::string n = std::to_string(d);
  if (n.size() < 2) n.insert(0, 2 - n.size(), '0');
  return "domain-" + n;
}

std::vector<std::size_t> noncausal_dims(const SyntheticSpec& spec) {
  std::vector<std::size_t> out;
  for (std::size_t j = 0; j < spec.context_dim; ++j) {
    if (std::find(spec.causal_dims.begin(), spec.causal_dims.end(), j) ==
        spec.causal_dims.end()) {
      out.push_back(j);
    }
  }
  return out;
}

// Position after t seconds of constant speed and turn rate.
std::pair<double, double> ctrv(const KinematicState& s, double t) {
  if (std::abs(s.turn_rate) < 1e-12) {
    return {s.x + s.speed * t * std::cos(s.heading), s.y + s.speed * t * std::sin(s.heading)};
  }
  const double r = s.speed / s.turn_rate;
  const double h = s.heading + s.turn_rate * t;
  return {s.x + r * (std::sin(h) - std::sin(s.heading)),
          s.y - r * (std::cos(h) - std::cos(s.heading))};
}

DomainParams draw_domain(const SyntheticSpec& spec, std::size_t d,
                         const std::vector<double>& shared) {
  Rng rng(spec.seed, {kDomainStream, d});
  const std::size_t nc = spec.causal_dims.size();
  DomainParams p;
  p.subset = subset_name(d);
  p.drift.resize(2 * nc);
  for (std::size_t e = 0; e < p.drift.size(); ++e) {
    p.drift[e] = shared[e] + spec.heterogeneity * rng.normal();
  }
  p.causal_mean.resize(nc);
  for (double& m : p.causal_mean) m = spec.causal_shift * rng.normal();
  p.noncausal_mean.resize(spec.context_dim - nc);
  for (double& m : p.noncausal_mean) m = spec.noncausal_shift * rng.normal();
  p.noncausal_loading = spec.confounding * rng.uniform(0.8, 1.0);
  return p;
}

std::vector<data::Scene> draw_scenes(const SyntheticSpec& spec, std::size_t d,
                                     const DomainParams& p,
                                     std::vector<std::vector<KinematicState>>& states) {
  const std::size_t nc = spec.causal_dims.size();
  const auto non_causal = noncausal_dims(spec);
  const data::DomainId domain{spec.dataset, p.subset};
  std::vector<data::Scene> scenes(spec.scenes_per_domain);
  states.assign(spec.scenes_per_domain, {});
  for (std::size_t s = 0; s < spec.scenes_per_domain; ++s) {
    data::Scene& scene = scenes[s];
    std::string id = std::to_string(s);
    if (id.size() < 5) id.insert(0, 5 - id.size(), '0');
    scene.scene_id = "s" + id;
    scene.domain = domain;
    scene.context.assign(spec.context_dim, 0.0);

    Rng causal_rng(spec.seed, {kCausalStream, d, s, spec.causal_salt});
    const double latent = causal_rng.normal();
    std::vector<double> causal(nc);
    const double causal_resid = std::sqrt(1.0 - spec.latent_loading * spec.latent_loading);
    for (std::size_t j = 0; j < nc; ++j) {
      causal[j] =
          p.causal_mean[j] + spec.latent_loading * latent + causal_resid * causal_rng.normal();
      scene.context[spec.causal_dims[j]] = causal[j];
    }
    if (spec.context_noise > 0.0) {
      for (std::size_t j = 0; j < nc; ++j) {
        scene.context[spec.causal_dims[j]] += spec.context_noise * causal_rng.normal();
      }
    }
    Rng noncausal_rng(spec.seed, {kNonCausalStream, d, s, spec.noncausal_salt});
    const double load = p.noncausal_loading;
    const double resid = std::sqrt(std::max(0.0, 1.0 - load * load));
    for (std::size_t j = 0; j < non_causal.size(); ++j) {
      scene.context[non_causal[j]] =
          p.noncausal_mean[j] + load * latent + resid * noncausal_rng.normal();
    }

    double drift[2] = {0.0, 0.0};
    for (std::size_t j = 0; j < nc; ++j) {
      drift[0] += p.drift[2 * j] * causal[j];
      drift[1] += p.drift[2 * j + 1] * causal[j];
    }
    drift[0] *= spec.domain_drift_scale;
    drift[1] *= spec.domain_drift_scale;

    Rng kin(spec.seed, {kKinematicStream, d, s});
    const double cx = kin.uniform(-kSpawnRange, kSpawnRange);
    const double cy = kin.uniform(-kSpawnRange, kSpawnRange);
    const double noise_std = kNoiseStd * spec.noise_scale;
    for (std::size_t a = 0; a < spec.agents_per_scene; ++a) {
      KinematicState st;
      st.x = cx + (a == 0 ? 0.0 : kin.uniform(-kNeighborSpread, kNeighborSpread));
      st.y = cy + (a == 0 ? 0.0 : kin.uniform(-kNeighborSpread, kNeighborSpread));
      st.heading = kin.uniform(0.0, 2.0 * std::numbers::pi);
      st.speed = kin.uniform(5.0, 15.0);
      st.turn_rate = kin.uniform(-0.2, 0.2);
      states[s].push_back(st);

      data::AgentTrack track;
      track.agent_id = "a" + std::to_string(a);
      track.points.reserve(kSceneFrames);
      for (std::size_t f = 0; f < kSceneFrames; ++f) {
        auto [x, y] = ctrv(st, static_cast<double>(f) * kDt);
        if (f >= data::kObsLen) {
          const double t = static_cast<double>(f - data::kObsLen + 1) * kDt;
          x += drift[0] * t;
          y += drift[1] * t;
        }
        if (noise_std > 0.0) {
          x += kin.normal(0.0, noise_std);
          y += kin.normal(0.0, noise_std);
        }
        track.points.push_back({static_cast<std::int64_t>(f), x, y});
      }
      scene.tracks.push_back(std::move(track));
    }
  }
  return scenes;
}

}  // namespace

void SyntheticSpec::validate() const {
  if (n_domains < 2) throw ConfigError("synth.n_domains: must be >= 2");
  if (scenes_per_domain < 1) throw ConfigError("synth.scenes_per_domain: must be >= 1");
  if (agents_per_scene < 1) throw ConfigError("synth.agents_per_scene: must be >= 1");
  if (causal_dims.empty()) throw ConfigError("synth.causal_dims: must not be empty");
  std::vector<std::size_t> sorted = causal_dims;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    if (sorted[i] >= context_dim) {
      throw ConfigError("synth.causal_dims: index " + std::to_string(sorted[i]) +
                        " out of range for context_dim " + std::to_string(context_dim));
    }
    if (i > 0 && sorted[i] == sorted[i - 1]) {
      throw ConfigError("synth.causal_dims: duplicate index " + std::to_string(sorted[i]));
    }
  }
  const std::pair<const char*, double> scales[] = {
      {"domain_drift_scale", domain_drift_scale}, {"noise_scale", noise_scale},
      {"heterogeneity", heterogeneity},           {"causal_shift", causal_shift},
      {"noncausal_shift", noncausal_shift},       {"confounding", confounding},
      {"context_noise", context_noise}};
  for (const auto& [name, v] : scales) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
      throw ConfigError(std::string("synth.") + name + ": must be a finite value >= 0");
    }
  }
  if (confounding > 1.0) throw ConfigError("synth.confounding: must be <= 1");
  if (!(latent_loading >= 0.0 && latent_loading <= 1.0)) {
    throw ConfigError("synth.latent_loading: must be in [0, 1]");
  }
  if (dataset.empty() || dataset.find_first_of("/\\") != std::string::npos) {
    throw ConfigError("synth.dataset: must be a plain directory name");
  }
}

std::map<std::string, std::string> to_key_values(const SyntheticSpec& s) {
  using text::format_double;
  return {{"n_domains", std::to_string(s.n_domains)},
          {"scenes_per_domain", std::to_string(s.scenes_per_domain)},
          {"context_dim", std::to_string(s.context_dim)},
          {"causal_dims", kv::join_indices(s.causal_dims)},
          {"domain_drift_scale", format_double(s.domain_drift_scale)},
          {"noise_scale", format_double(s.noise_scale)},
          {"seed", std::to_string(s.seed)},
          {"agents_per_scene", std::to_string(s.agents_per_scene)},
          {"heterogeneity", format_double(s.heterogeneity)},
          {"causal_shift", format_double(s.causal_shift)},
          {"noncausal_shift", format_double(s.noncausal_shift)},
          {"confounding", format_double(s.confounding)},
          {"latent_loading", format_double(s.latent_loading)},
          {"context_noise", format_double(s.context_noise)},
          {"dataset", s.dataset},
          {"causal_salt", std::to_string(s.causal_salt)},
          {"noncausal_salt", std::to_string(s.noncausal_salt)}};
}

SyntheticSpec spec_from(const std::map<std::string, std::string>& m) {
  const std::string sec = "synth";
  SyntheticSpec s;
  s.n_domains = kv::get_size(m, sec, "n_domains", s.n_domains);
  s.scenes_per_domain = kv::get_size(m, sec, "scenes_per_domain", s.scenes_per_domain);
  s.context_dim = kv::get_size(m, sec, "context_dim", s.context_dim);
  s.causal_dims = kv::get_index_list(m, sec, "causal_dims", s.causal_dims);
  s.domain_drift_scale = kv::get_double(m, sec, "domain_drift_scale", s.domain_drift_scale);
  s.noise_scale = kv::get_double(m, sec, "noise_scale", s.noise_scale);
  s.seed = kv::get_u64(m, sec, "seed", s.seed);
  s.agents_per_scene = kv::get_size(m, sec, "agents_per_scene", s.agents_per_scene);
  s.heterogeneity = kv::get_double(m, sec, "heterogeneity", s.heterogeneity);
  s.causal_shift = kv::get_double(m, sec, "causal_shift", s.causal_shift);
  s.noncausal_shift = kv::get_double(m, sec, "noncausal_shift", s.noncausal_shift);
  s.confounding = kv::get_double(m, sec, "confounding", s.confounding);
  s.latent_loading = kv::get_double(m, sec, "latent_loading", s.latent_loading);
  s.context_noise = kv::get_double(m, sec, "context_noise", s.context_noise);
  s.dataset = kv::get_string(m, "dataset", s.dataset);
  s.causal_salt = kv::get_u64(m, sec, "causal_salt", s.causal_salt);
  s.noncausal_salt = kv::get_u64(m, sec, "noncausal_salt", s.noncausal_salt);
  return s;
}

SyntheticDataset generate_synthetic_domains(const SyntheticSpec& given) {
  given.validate();
  SyntheticSpec spec = given;
  std::sort(spec.causal_dims.begin(), spec.causal_dims.end());
  const std::size_t nc = spec.causal_dims.size();
  Rng shared_rng(spec.seed, {kSharedStream});
  // Unit-norm columns in random directions: every causal dim moves the
  // future by a comparable amount.
  std::vector<double> shared(2 * nc);
  for (std::size_t j = 0; j < nc; ++j) {
    const double angle = shared_rng.uniform(0.0, 2.0 * std::numbers::pi);
    shared[2 * j] = std::cos(angle);
    shared[2 * j + 1] = std::sin(angle);
  }

  SyntheticDataset out;
  out.truth.causal_dims = spec.causal_dims;
  out.truth.domain_params.resize(spec.n_domains);
  out.domains.resize(spec.n_domains);
  out.initial_states.resize(spec.n_domains);

  const auto n = static_cast<std::int64_t>(spec.n_domains);
#pragma omp parallel for schedule(static)
  for (std::int64_t i = 0; i < n; ++i) {
    const auto d = static_cast<std::size_t>(i);
    out.truth.domain_params[d] = draw_domain(spec, d, shared);
    out.domains[d] = draw_scenes(spec, d, out.truth.domain_params[d], out.initial_states[d]);
  }
  return out;
}

double planted_mask_precision(std::span<const double> mask, const PlantedGroundTruth& truth,
                              std::size_t k_count) {
  if (k_count == 0 || k_count > mask.size()) {
    throw ArgumentError("planted_mask_precision: k_count " + std::to_string(k_count) +
                        " not in [1, " + std::to_string(mask.size()) + "]");
  }
  std::vector<std::size_t> order(mask.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return mask[a] > mask[b]; });
  std::size_t hits = 0;
  for (std::size_t i = 0; i < k_count; ++i) {
    if (std::find(truth.causal_dims.begin(), truth.causal_dims.end(), order[i]) !=
        truth.causal_dims.end()) {
      ++hits;
    }
  }
  return static_cast<double>(hits) / static_cast<double>(k_count);
}

void write_ground_truth(std::ostream& out, const PlantedGroundTruth& truth) {
  out << "causal_dims = " << kv::join_indices(truth.causal_dims) << '\n';
  out << "domains = " << truth.domain_params.size() << '\n';
  for (std::size_t d = 0; d < truth.domain_params.size(); ++d) {
    const auto& p = truth.domain_params[d];
    const std::string pre = "domain." + std::to_string(d) + ".";
    out << pre << "subset = " << p.subset << '\n';
    out << pre << "drift = " << kv::join_doubles(p.drift) << '\n';
    out << pre << "causal_mean = " << kv::join_doubles(p.causal_mean) << '\n';
    out << pre << "noncausal_mean = " << kv::join_doubles(p.noncausal_mean) << '\n';
    out << pre << "noncausal_loading = " << text::format_double(p.noncausal_loading) << '\n';
  }
}

PlantedGroundTruth read_ground_truth(std::istream& in) {
  std::map<std::string, std::string> m;
  for (auto& [k, v] : text::parse_key_values(in)) m[k] = v;
  auto need = [&](const std::string& key) -> const std::string& {
    auto it = m.find(key);
    if (it == m.end()) throw ParseError("ground truth: missing key " + key);
    return it->second;
  };
  PlantedGroundTruth t;
  try {
    t.causal_dims = kv::get_index_list(m, "", "causal_dims", {});
  } catch (const ConfigError& e) {
    throw ParseError(std::string("ground truth: ") + e.what());
  }
  need("causal_dims");
  std::int64_t n = 0;
  if (!text::parse_int(need("domains"), n) || n < 0) {
    throw ParseError("ground truth: bad domain count");
  }
  for (std::int64_t d = 0; d < n; ++d) {
    const std::string pre = "domain." + std::to_string(d) + ".";
    DomainParams p;
    p.subset = need(pre + "subset");
    p.drift = kv::parse_doubles(pre + "drift", need(pre + "drift"));
    p.causal_mean = kv::parse_doubles(pre + "causal_mean", need(pre + "causal_mean"));
    p.noncausal_mean = kv::parse_doubles(pre + "noncausal_mean", need(pre + "noncausal_mean"));
    if (!text::parse_double(need(pre + "noncausal_loading"), p.noncausal_loading)) {
      throw ParseError("ground truth: bad " + pre + "noncausal_loading");
    }
    t.domain_params.push_back(std::move(p));
  }
  return t;
}

std::vector<std::filesystem::path> write_dataset(const SyntheticDataset& dataset,
                                                 const std::filesystem::path& out_dir,
                                                 const std::map<std::string, std::string>&
                                                     provenance) {
  std::vector<std::filesystem::path> written;
  for (const auto& scenes : dataset.domains) {
    if (scenes.empty()) continue;
    const data::DomainId& id = scenes.front().domain;
    const auto dir = out_dir / id.dataset;
    std::filesystem::create_directories(dir);
    const auto tracks = dir / (id.subset + ".csv");
    const auto contexts = dir / (id.subset + ".context.csv");
    std::ofstream t(tracks, std::ios::binary | std::ios::trunc);
    std::ofstream c(contexts, std::ios::binary | std::ios::trunc);
    if (!t || !c) throw IoError("cannot write " + dir.string());
    data::write_canonical_csv(t, scenes);
    data::write_context_csv(c, scenes);
    if (!t || !c) throw IoError("failed writing " + dir.string());
    written.push_back(tracks);
  }
  std::filesystem::create_directories(out_dir);
  const auto gt_path = out_dir / "ground_truth.txt";
  std::ofstream g(gt_path, std::ios::binary | std::ios::trunc);
  if (!g) throw IoError("cannot write " + gt_path.string());
  for (const auto& [k, v] : provenance) g << "# " << k << " = " << v << '\n';
  write_ground_truth(g, dataset.truth);
  if (!g) throw IoError("failed writing " + gt_path.string());
  return written;
}

}  // namespace cilf::synthetic
