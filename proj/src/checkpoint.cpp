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

#include "cilf/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "cilf/error.hpp"

namespace cilf::checkpoint {
namespace {

constexpr std::array<char, 8> kMagic = {'C', 'I', 'L', 'F', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;
// Guards against reading garbage lengths from a corrupt file.
constexpr std::uint64_t kMaxLength = std::uint64_t{1} << 34;

void put_u64(std::ostream& out, std::uint64_t v) {
  std::array<char, 8> b;
  for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(b.data(), 8);
}

void put_u32(std::ostream& out, std::uint32_t v) {
  std::array<char, 4> b;
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  out.write(b.data(), 4);
}

void put_string(std::ostream& out, const std::string& s) {
  put_u64(out, s.size());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

void read_exact(std::istream& in, char* dst, std::size_t n) {
  in.read(dst, static_cast<std::streamsize>(n));
  if (static_cast<std::size_t>(in.gcount()) != n) {
    throw ParseError("checkpoint: unexpected end of data");
  }
}

std::uint64_t get_u64(std::istream& in) {
  std::array<unsigned char, 8> b;
  read_exact(in, reinterpret_cast<char*>(b.data()), 8);
  std::uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

std::uint32_t get_u32(std::istream& in) {
  std::array<unsigned char, 4> b;
  read_exact(in, reinterpret_cast<char*>(b.data()), 4);
  std::uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

std::uint64_t get_length(std::istream& in) {
  const std::uint64_t n = get_u64(in);
  if (n > kMaxLength) throw ParseError("checkpoint: implausible length field");
  return n;
}

std::string get_string(std::istream& in) {
  std::string s(get_length(in), '\0');
  read_exact(in, s.data(), s.size());
  return s;
}

}  // namespace

const TensorRecord* Container::find(const std::string& name) const {
  for (const TensorRecord& t : tensors) {
    if (t.name == name) return &t;
  }
  return nullptr;
}

void write_container(std::ostream& out, const Container& c) {
  out.write(kMagic.data(), kMagic.size());
  put_u32(out, kVersion);
  put_u64(out, c.metadata.size());
  for (const auto& [k, v] : c.metadata) {
    put_string(out, k);
    put_string(out, v);
  }
  put_u64(out, c.tensors.size());
  for (const TensorRecord& t : c.tensors) {
    std::uint64_t count = 1;
    for (auto d : t.shape) count *= d;
    if (count != t.values.size()) {
      throw ArgumentError("checkpoint: tensor '" + t.name + "' shape does not match values");
    }
    put_string(out, t.name);
    put_u64(out, t.shape.size());
    for (auto d : t.shape) put_u64(out, d);
    for (double v : t.values) put_u64(out, std::bit_cast<std::uint64_t>(v));
  }
  if (!out) throw IoError("checkpoint: write failed");
}

Container read_container(std::istream& in) {
  std::array<char, 8> magic;
  read_exact(in, magic.data(), magic.size());
  if (magic != kMagic) throw ParseError("checkpoint: bad magic");
  const std::uint32_t version = get_u32(in);
  if (version != kVersion) {
    throw ParseError("checkpoint: unsupported version " + std::to_string(version));
  }
  Container c;
  const std::uint64_t n_meta = get_length(in);
  for (std::uint64_t i = 0; i < n_meta; ++i) {
    std::string k = get_string(in);
    c.metadata[std::move(k)] = get_string(in);
  }
  const std::uint64_t n_tensors = get_length(in);
  for (std::uint64_t i = 0; i < n_tensors; ++i) {
    TensorRecord t;
    t.name = get_string(in);
    const std::uint64_t rank = get_length(in);
    std::uint64_t count = 1;
    for (std::uint64_t r = 0; r < rank; ++r) {
      t.shape.push_back(get_length(in));
      count *= t.shape.back();
    }
    if (count > kMaxLength) throw ParseError("checkpoint: implausible tensor size");
    t.values.resize(count);
    for (auto& v : t.values) v = std::bit_cast<double>(get_u64(in));
    c.tensors.push_back(std::move(t));
  }
  return c;
}

void save(const std::filesystem::path& path, const Container& container) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
  write_container(out, container);
}

Container load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint '" + path.string() + "'");
  return read_container(in);
}

void put_model(Container& container, const model::ModelConfig& config,
               const model::ModelParams& params) {
  for (const auto& [k, v] : model::to_key_values(config)) {
    container.metadata["model." + k] = v;
  }
  for (std::size_t i = 0; i < params.tensors().size(); ++i) {
    const model::TensorInfo& info = params.tensors()[i];
    const auto begin = params.values().begin() + static_cast<std::ptrdiff_t>(info.offset);
    container.tensors.push_back(TensorRecord{
        info.name, {info.rows, info.cols}, std::vector<double>(begin, begin + static_cast<std::ptrdiff_t>(info.size()))});
  }
}

std::pair<model::ModelConfig, model::ModelParams> get_model(const Container& container) {
  std::map<std::string, std::string> kv;
  for (const auto& [k, v] : container.metadata) {
    if (k.rfind("model.", 0) == 0) kv[k.substr(6)] = v;
  }
  if (kv.empty()) throw ParseError("checkpoint: no model config");
  model::ModelConfig config = model::model_config_from(kv);
  const model::Network net(config);
  model::ModelParams params = net.make_params();
  for (const model::TensorInfo& info : params.tensors()) {
    const TensorRecord* rec = container.find(info.name);
    if (rec == nullptr) throw ParseError("checkpoint: missing tensor '" + info.name + "'");
    if (rec->shape != std::vector<std::uint64_t>{info.rows, info.cols}) {
      throw ParseError("checkpoint: tensor '" + info.name + "' has the wrong shape");
    }
    std::copy(rec->values.begin(), rec->values.end(),
              params.values().begin() + static_cast<std::ptrdiff_t>(info.offset));
  }
  return {std::move(config), std::move(params)};
}

}  // namespace cilf::checkpoint
