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

#ifndef CILF_CHECKPOINT_HPP_
#define CILF_CHECKPOINT_HPP_

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "cilf/model.hpp"

namespace cilf::checkpoint {

// Portable container of named f64 tensors plus string metadata.
//
// Layout (all integers u64 little-endian unless noted):
//   magic   8 bytes "CILFCKPT"
//   version u32 little-endian (currently 1)
//   n_meta, then n_meta x { key_len, key bytes, value_len, value bytes }
//   n_tensors, then n_tensors x { name_len, name bytes, rank, rank x dim,
//                                 prod(dims) x f64 little-endian }
// Values of a 2-D tensor are stored column-major.
struct TensorRecord {
  std::string name;
  std::vector<std::uint64_t> shape;
  std::vector<double> values;

  friend bool operator==(const TensorRecord&, const TensorRecord&) = default;
};

struct Container {
  std::map<std::string, std::string> metadata;
  std::vector<TensorRecord> tensors;

  const TensorRecord* find(const std::string& name) const;
  friend bool operator==(const Container&, const Container&) = default;
};

void write_container(std::ostream& out, const Container& container);
Container read_container(std::istream& in);
void save(const std::filesystem::path& path, const Container& container);
Container load(const std::filesystem::path& path);

// Model config goes under "model.<key>" metadata; tensors keep their names.
void put_model(Container& container, const model::ModelConfig& config,
               const model::ModelParams& params);
std::pair<model::ModelConfig, model::ModelParams> get_model(const Container& container);

}  // namespace cilf::checkpoint

#endif  // CILF_CHECKPOINT_HPP_
