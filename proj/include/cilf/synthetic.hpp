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


#ifndef CILF_SYNTHETIC_HPP_
#define CILF_SYNTHETIC_HPP_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "cilf/data.hpp"

namespace cilf::synthetic {

// Multi-domain generator with planted causal context dimensions.
//
// Every agent follows constant-turn-rate kinematics. Its future additionally
// drifts by domain_drift_scale * A_d * c, where c are the causal context dims
// of the scene and A_d = B + heterogeneity * D_d is a per-domain 2 x |causal|
// matrix whose shared part B has unit-norm columns. Non-causal dims never
// touch a trajectory; they carry a per-domain mean shift and share a latent
// draw with the causal dims.
struct SyntheticSpec {
  std::size_t n_domains = 3;
  std::size_t scenes_per_domain = 200;
  std::size_t context_dim = 8;
  std::vector<std::size_t> causal_dims = {0, 1, 2};
  double domain_drift_scale = 1.0;  // m/s per unit of context
  double noise_scale = 1.0;         // observation noise std = 0.1 m * noise_scale
  std::uint64_t seed = 0;

  std::size_t agents_per_scene = 2;
  double heterogeneity = 0.5;
  double causal_shift = 0.5;     // std of per-domain causal means
  double noncausal_shift = 2.0;  // std of per-domain non-causal means
  double confounding = 0.5;      // loading of the shared latent on non-causal dims
  double latent_loading = 0.5;   // loading of the shared latent on causal dims
  // Std of the error on recorded causal dims; the drift uses the exact values.
  double context_noise = 0.0;
  std::string dataset = "synthetic";
  // Salts for interventional checks: changing one redraws only that part.
  std::uint64_t causal_salt = 0;
  std::uint64_t noncausal_salt = 0;

  void validate() const;  // throws ConfigError naming the field
};

std::map<std::string, std::string> to_key_values(const SyntheticSpec& spec);
SyntheticSpec spec_from(const std::map<std::string, std::string>& kv);

struct DomainParams {
  std::string subset;
  std::vector<double> drift;             // 2 x |causal|, column-major
  std::vector<double> causal_mean;       // |causal|
  std::vector<double> noncausal_mean;    // context_dim - |causal|
  double noncausal_loading = 0.0;        // loading of the shared latent

  friend bool operator==(const DomainParams&, const DomainParams&) = default;
};

struct PlantedGroundTruth {
  std::vector<std::size_t> causal_dims;
  std::vector<DomainParams> domain_params;

  friend bool operator==(const PlantedGroundTruth&, const PlantedGroundTruth&) = default;
};

struct KinematicState {
  double x = 0.0;
  double y = 0.0;
  double heading = 0.0;
  double speed = 0.0;
  double turn_rate = 0.0;
};

struct SyntheticDataset {
  std::vector<std::vector<data::Scene>> domains;
  PlantedGroundTruth truth;
  // Initial state per domain, scene and agent (frame 0).
  std::vector<std::vector<std::vector<KinematicState>>> initial_states;
};

inline constexpr std::size_t kSceneFrames = data::kObsLen + data::kPredLen;

SyntheticDataset generate_synthetic_domains(const SyntheticSpec& spec);

// |top-k dims of mask ∩ causal| / k. Ties go to the lower index.
double planted_mask_precision(std::span<const double> mask, const PlantedGroundTruth& truth,
                              std::size_t k_count);

void write_ground_truth(std::ostream& out, const PlantedGroundTruth& truth);
PlantedGroundTruth read_ground_truth(std::istream& in);

// Writes <out>/<dataset>/<subset>.csv, the context sidecars and
// <out>/ground_truth.txt. Returns the written track files.
std::vector<std::filesystem::path> write_dataset(const SyntheticDataset& dataset,
                                                 const std::filesystem::path& out_dir,
                                                 const std::map<std::string, std::string>&
                                                     provenance = {});

}  // namespace cilf::synthetic

#endif  // CILF_SYNTHETIC_HPP_
