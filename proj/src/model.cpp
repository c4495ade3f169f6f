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

#include "cilf/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <tuple>

#include "cilf/error.hpp"
#include "cilf/rng.hpp"

namespace cilf::model {
namespace {

// Positions enter the encoders in units of 10 m; per-frame displacements
// (about 1 m at urban speeds) enter unscaled.
constexpr double kPositionScale = 0.1;
constexpr std::size_t kPointFeatures = 4;

Vector tanh_vec(const Vector& a) { return a.array().tanh().matrix(); }

Vector tanh_grad(const Vector& h, const Vector& g) {
  return (g.array() * (1.0 - h.array().square())).matrix();
}

void check_finite(const Vector& v, const char* what) {
  if (!v.allFinite()) throw NumericError(std::string("non-finite ") + what);
}

Vector point_features(std::span<const data::TrackPoint> pts, std::size_t t) {
  Vector u(kPointFeatures);
  u << pts[t].x * kPositionScale, pts[t].y * kPositionScale,
      t > 0 ? pts[t].x - pts[t - 1].x : 0.0, t > 0 ? pts[t].y - pts[t - 1].y : 0.0;
  return u;
}

std::string lowercase_bool(bool b) { return b ? "true" : "false"; }

std::size_t parse_size(const std::map<std::string, std::string>& kv, const char* key,
                       std::size_t fallback) {
  auto it = kv.find(key);
  if (it == kv.end()) return fallback;
  try {
    std::size_t pos = 0;
    const unsigned long long v = std::stoull(it->second, &pos);
    if (pos != it->second.size()) throw std::invalid_argument(key);
    return static_cast<std::size_t>(v);
  } catch (const std::exception&) {
    throw ConfigError(std::string("model.") + key + ": expected a non-negative integer");
  }
}

double parse_real(const std::map<std::string, std::string>& kv, const char* key,
                  double fallback) {
  auto it = kv.find(key);
  if (it == kv.end()) return fallback;
  try {
    std::size_t pos = 0;
    const double v = std::stod(it->second, &pos);
    if (pos != it->second.size()) throw std::invalid_argument(key);
    return v;
  } catch (const std::exception&) {
    throw ConfigError(std::string("model.") + key + ": expected a number");
  }
}

std::string format_real(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace

// --- config ----------------------------------------------------------------

std::size_t ModelConfig::k_count() const {
  return static_cast<std::size_t>(std::lround(k_ratio * static_cast<double>(v_dim)));
}

void ModelConfig::validate() const {
  if (ic_dim == 0 || v_dim == 0 || hidden_dim == 0 || projection_dim == 0) {
    throw ConfigError("model: ic_dim, v_dim, hidden_dim and projection_dim must be >= 1");
  }
  if (!(k_ratio > 0.0 && k_ratio < 1.0)) throw ConfigError("model: k_ratio must be in (0, 1)");
  if (k_count() < 1) throw ConfigError("model: round(k_ratio * v_dim) must be >= 1");
  if (!(gumbel_temperature > 0.0)) throw ConfigError("model: gumbel_temperature must be > 0");
  if (v_encoder == VEncoder::identity && v_dim != context_dim) {
    throw ConfigError("model: identity V encoder requires v_dim == context_dim (" +
                      std::to_string(v_dim) + " vs " + std::to_string(context_dim) + ")");
  }
  if (backbone == Backbone::neighbor_pool && pool_dim == 0) {
    throw ConfigError("model: neighbor_pool backbone requires pool_dim >= 1");
  }
}

std::string to_string(Backbone b) {
  return b == Backbone::vanilla_rnn ? "vanilla_rnn" : "neighbor_pool";
}

std::string to_string(VEncoder e) { return e == VEncoder::mlp ? "mlp" : "identity"; }

Backbone parse_backbone(const std::string& name) {
  if (name == "vanilla_rnn") return Backbone::vanilla_rnn;
  if (name == "neighbor_pool") return Backbone::neighbor_pool;
  throw ConfigError("model.backbone: unknown backbone '" + name + "'");
}

VEncoder parse_v_encoder(const std::string& name) {
  if (name == "mlp") return VEncoder::mlp;
  if (name == "identity") return VEncoder::identity;
  throw ConfigError("model.v_encoder: unknown encoder '" + name + "'");
}

std::string to_string(ParamGroup g) {
  switch (g) {
    case ParamGroup::backbone: return "backbone";
    case ParamGroup::v_branch: return "v_branch";
    case ParamGroup::mask: return "mask";
  }
  return "unknown";
}

std::map<std::string, std::string> to_key_values(const ModelConfig& c) {
  return {
      {"ic_dim", std::to_string(c.ic_dim)},
      {"v_dim", std::to_string(c.v_dim)},
      {"hidden_dim", std::to_string(c.hidden_dim)},
      {"k_ratio", format_real(c.k_ratio)},
      {"gumbel_temperature", format_real(c.gumbel_temperature)},
      {"projection_dim", std::to_string(c.projection_dim)},
      {"backbone", to_string(c.backbone)},
      {"max_neighbors", std::to_string(c.max_neighbors)},
      {"context_dim", std::to_string(c.context_dim)},
      {"pool_dim", std::to_string(c.pool_dim)},
      {"v_encoder", to_string(c.v_encoder)},
      {"uniform_mask", lowercase_bool(c.uniform_mask)},
  };
}

ModelConfig model_config_from(const std::map<std::string, std::string>& kv) {
  ModelConfig c;
  c.ic_dim = parse_size(kv, "ic_dim", c.ic_dim);
  c.v_dim = parse_size(kv, "v_dim", c.v_dim);
  c.hidden_dim = parse_size(kv, "hidden_dim", c.hidden_dim);
  c.k_ratio = parse_real(kv, "k_ratio", c.k_ratio);
  c.gumbel_temperature = parse_real(kv, "gumbel_temperature", c.gumbel_temperature);
  c.projection_dim = parse_size(kv, "projection_dim", c.projection_dim);
  if (auto it = kv.find("backbone"); it != kv.end()) c.backbone = parse_backbone(it->second);
  c.max_neighbors = parse_size(kv, "max_neighbors", c.max_neighbors);
  c.context_dim = parse_size(kv, "context_dim", c.context_dim);
  c.pool_dim = parse_size(kv, "pool_dim", c.pool_dim);
  if (auto it = kv.find("v_encoder"); it != kv.end()) c.v_encoder = parse_v_encoder(it->second);
  if (auto it = kv.find("uniform_mask"); it != kv.end()) {
    if (it->second != "true" && it->second != "false") {
      throw ConfigError("model.uniform_mask: expected true or false");
    }
    c.uniform_mask = it->second == "true";
  }
  c.validate();
  return c;
}

// --- params ----------------------------------------------------------------

std::size_t ModelParams::add_tensor(std::string name, ParamGroup group, std::size_t rows,
                                    std::size_t cols) {
  tensors_.push_back(TensorInfo{std::move(name), group, rows, cols, values_.size()});
  values_.resize(values_.size() + rows * cols, 0.0);
  return tensors_.size() - 1;
}

std::optional<std::size_t> ModelParams::find(std::string_view name) const {
  for (std::size_t i = 0; i < tensors_.size(); ++i) {
    if (tensors_[i].name == name) return i;
  }
  return std::nullopt;
}

std::size_t ModelParams::index_of(std::string_view name) const {
  if (auto i = find(name)) return *i;
  throw ArgumentError("no parameter tensor named '" + std::string(name) + "'");
}

std::vector<ParamGroup> ModelParams::element_groups() const {
  std::vector<ParamGroup> out(values_.size(), ParamGroup::backbone);
  for (const TensorInfo& t : tensors_) {
    std::fill_n(out.begin() + static_cast<std::ptrdiff_t>(t.offset), t.size(), t.group);
  }
  return out;
}

bool ModelParams::all_finite() const {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

FeatureBundle ForwardCache::features() const {
  return FeatureBundle{ic,
                       v_trace.v,
                       mask_trace.mask,
                       vc,
                       vn,
                       fuse_causal.fused,
                       fuse_spurious.fused,
                       projection};
}

// --- free mask functions ---------------------------------------------------

Vector gumbel_mask(const Vector& logits, std::span<const double> noise, std::size_t k_count,
                   double temperature, MaskMode mode, MaskTrace* trace) {
  if (!(temperature > 0.0)) throw ArgumentError("gumbel temperature must be > 0");
  const auto n = static_cast<std::size_t>(logits.size());
  if (noise.size() != n) {
    throw ArgumentError("gumbel noise has " + std::to_string(noise.size()) +
                        " entries, logits have " + std::to_string(n));
  }
  if (k_count < 1 || k_count > n) throw ArgumentError("k_count out of range");

  const Eigen::Map<const Vector> g(noise.data(), static_cast<Eigen::Index>(n));
  const Vector perturbed = logits + g;
  const Vector scaled = perturbed / temperature;
  const Vector shifted = scaled.array() - scaled.maxCoeff();
  Vector probs = shifted.array().exp();
  probs /= probs.sum();
  const Vector raw = static_cast<double>(k_count) * probs;

  Vector mask(static_cast<Eigen::Index>(n));
  if (mode == MaskMode::soft) {
    mask = raw.array().max(kMaskEpsilon).min(1.0 - kMaskEpsilon);
  } else {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k_count),
                      order.end(), [&](std::size_t a, std::size_t b) {
                        const auto ia = static_cast<Eigen::Index>(a);
                        const auto ib = static_cast<Eigen::Index>(b);
                        if (perturbed[ia] != perturbed[ib]) return perturbed[ia] > perturbed[ib];
                        return a < b;
                      });
    mask.setZero();
    for (std::size_t i = 0; i < k_count; ++i) {
      mask[static_cast<Eigen::Index>(order[i])] = 1.0;
    }
  }
  if (trace != nullptr) {
    trace->logits = logits;
    trace->probs = probs;
    trace->raw = raw;
    trace->mask = mask;
    trace->temperature = temperature;
    trace->k_count = k_count;
    trace->mode = mode;
  }
  return mask;
}

Vector gumbel_mask_backward(const MaskTrace& trace, const Vector& grad_mask) {
  // Entries clipped in soft mode pass no gradient.
  const Vector g_raw =
      (trace.raw.array() > kMaskEpsilon && trace.raw.array() < 1.0 - kMaskEpsilon)
          .select(grad_mask, 0.0);
  const Vector g_probs = static_cast<double>(trace.k_count) * g_raw;
  const double dot = trace.probs.dot(g_probs);
  const Vector g_scaled = (trace.probs.array() * (g_probs.array() - dot)).matrix();
  return g_scaled / trace.temperature;
}

std::pair<Vector, Vector> split_features(const Vector& v, const Vector& m) {
  if (v.size() != m.size()) {
    throw ArgumentError("split_features: v has " + std::to_string(v.size()) +
                        " entries, mask has " + std::to_string(m.size()));
  }
  Vector vc(v.size());
  Vector vn(v.size());
  for (Eigen::Index i = 0; i < v.size(); ++i) {
    // Compute the smaller part by multiplication, the larger by subtraction,
    // then re-derive the smaller part; both subtractions are then exact
    // (Sterbenz), so vc + vn reproduces v bit for bit.
    if (m[i] <= 0.5) {
      const double small = v[i] * m[i];
      vn[i] = v[i] - small;
      vc[i] = v[i] - vn[i];
    } else {
      const double small = v[i] * (1.0 - m[i]);
      vc[i] = v[i] - small;
      vn[i] = v[i] - vc[i];
    }
  }
  return {std::move(vc), std::move(vn)};
}

// --- network ---------------------------------------------------------------

Network::Network(ModelConfig config) : config_(std::move(config)) {
  config_.validate();
  const std::size_t h = config_.hidden_dim;
  const std::size_t ic = config_.ic_dim;
  const std::size_t v = config_.v_dim;
  ModelParams& p = prototype_;
  Layout& l = layout_;

  l.ic_w_in = p.add_tensor("ic.w_in", ParamGroup::backbone, h, kPointFeatures);
  l.ic_w_hh = p.add_tensor("ic.w_hh", ParamGroup::backbone, h, h);
  l.ic_b = p.add_tensor("ic.b", ParamGroup::backbone, h, 1);
  l.ic_w_out = p.add_tensor("ic.w_out", ParamGroup::backbone, ic, h);
  l.ic_w_skip = p.add_tensor("ic.w_skip", ParamGroup::backbone, ic, kPointFeatures);
  l.ic_b_out = p.add_tensor("ic.b_out", ParamGroup::backbone, ic, 1);

  if (config_.v_encoder == VEncoder::mlp) {
    std::size_t in = config_.context_dim;
    if (uses_pool()) {
      l.nb_w = p.add_tensor("v.nb_w", ParamGroup::v_branch, config_.pool_dim, kPointFeatures);
      l.nb_b = p.add_tensor("v.nb_b", ParamGroup::v_branch, config_.pool_dim, 1);
      in += config_.pool_dim;
    }
    l.v_w = p.add_tensor("v.w", ParamGroup::v_branch, v, in);
    l.v_b = p.add_tensor("v.b", ParamGroup::v_branch, v, 1);
  }
  l.proj_w = p.add_tensor("proj.w", ParamGroup::v_branch, config_.projection_dim, v);
  l.proj_b = p.add_tensor("proj.b", ParamGroup::v_branch, config_.projection_dim, 1);

  if (!config_.uniform_mask) {
    l.mask_w = p.add_tensor("mask.w", ParamGroup::mask, v, v);
    l.mask_b = p.add_tensor("mask.b", ParamGroup::mask, v, 1);
  }

  l.f1_w = p.add_tensor("fuse.f1_w", ParamGroup::backbone, ic, v + ic);
  l.f1_b = p.add_tensor("fuse.f1_b", ParamGroup::backbone, ic, 1);
  l.f2_w = p.add_tensor("fuse.f2_w", ParamGroup::backbone, ic, ic);
  l.f2_b = p.add_tensor("fuse.f2_b", ParamGroup::backbone, ic, 1);

  l.dec_w_init = p.add_tensor("dec.w_init", ParamGroup::backbone, h, ic);
  l.dec_b_init = p.add_tensor("dec.b_init", ParamGroup::backbone, h, 1);
  l.dec_w_hh = p.add_tensor("dec.w_hh", ParamGroup::backbone, h, h);
  l.dec_b_h = p.add_tensor("dec.b_h", ParamGroup::backbone, h, 1);
  l.dec_w_out = p.add_tensor("dec.w_out", ParamGroup::backbone, 2, h);
  l.dec_w_skip = p.add_tensor("dec.w_skip", ParamGroup::backbone, 2, ic);
  l.dec_b_out = p.add_tensor("dec.b_out", ParamGroup::backbone, 2, 1);
}

ModelParams Network::make_params() const { return prototype_; }

void Network::init_params(ModelParams& params, std::uint64_t seed) const {
  if (params.tensors().size() != prototype_.tensors().size()) {
    throw ArgumentError("init_params: parameter layout does not match the network");
  }
  Rng rng(seed, {0x1417});
  const Layout& l = layout_;
  const std::size_t weights[] = {l.ic_w_in,  l.ic_w_hh,    l.ic_w_out,   l.ic_w_skip,
                                 l.nb_w,     l.v_w,        l.proj_w,     l.mask_w,
                                 l.f2_w,     l.dec_w_init, l.dec_w_hh,   l.dec_w_out,
                                 l.dec_w_skip};
  std::fill(params.values().begin(), params.values().end(), 0.0);
  for (std::size_t idx : weights) {
    if (idx == Layout::kAbsent) continue;
    auto w = params.matrix(idx);
    if (w.size() == 0) continue;
    const double bound = 1.0 / std::sqrt(static_cast<double>(w.cols()));
    // Column-major fill order is part of the reproducibility contract.
    for (Eigen::Index j = 0; j < w.cols(); ++j) {
      for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = rng.uniform(-bound, bound);
    }
  }
}

void Network::check_window(const data::SceneWindow& window) const {
  if (window.ego_obs.size() != data::kObsLen) {
    throw ArgumentError("window has " + std::to_string(window.ego_obs.size()) +
                        " observed points, model expects " + std::to_string(data::kObsLen));
  }
  if (window.context.size() != config_.context_dim) {
    throw ArgumentError("window context has " + std::to_string(window.context.size()) +
                        " dims, model expects context_dim " +
                        std::to_string(config_.context_dim));
  }
  if (window.neighbors.size() > config_.max_neighbors) {
    throw ArgumentError("window has " + std::to_string(window.neighbors.size()) +
                        " neighbor slots, model allows " +
                        std::to_string(config_.max_neighbors));
  }
}

Vector Network::encode_ic(std::span<const data::TrackPoint> ego_obs, const ModelParams& params,
                          RnnTrace* trace) const {
  if (ego_obs.empty()) throw ArgumentError("encode_ic: empty observation");
  const auto steps = static_cast<Eigen::Index>(ego_obs.size());
  const auto h = static_cast<Eigen::Index>(config_.hidden_dim);
  RnnTrace local;
  RnnTrace& tr = trace != nullptr ? *trace : local;
  tr.inputs.resize(kPointFeatures, steps);
  for (Eigen::Index t = 0; t < steps; ++t) {
    tr.inputs.col(t) = point_features(ego_obs, static_cast<std::size_t>(t));
  }
  if (!tr.inputs.allFinite()) throw NumericError("encode_ic: non-finite input");

  const auto w_in = params.matrix(layout_.ic_w_in);
  const auto w_hh = params.matrix(layout_.ic_w_hh);
  const auto b = params.matrix(layout_.ic_b);
  tr.hidden.resize(h, steps + 1);
  tr.hidden.col(0).setZero();
  for (Eigen::Index t = 0; t < steps; ++t) {
    tr.hidden.col(t + 1) =
        (w_in * tr.inputs.col(t) + w_hh * tr.hidden.col(t) + b).array().tanh().matrix();
  }
  Vector ic = params.matrix(layout_.ic_w_out) * tr.hidden.col(steps) +
              params.matrix(layout_.ic_w_skip) * tr.inputs.col(steps - 1) +
              params.matrix(layout_.ic_b_out);
  check_finite(ic, "IC feature");
  return ic;
}

void Network::encode_ic_backward(const ModelParams& params, const RnnTrace& tr,
                                 const Vector& grad_ic, std::span<double> grad) const {
  const Eigen::Index steps = tr.inputs.cols();
  params.view(layout_.ic_w_out, grad).noalias() += grad_ic * tr.hidden.col(steps).transpose();
  params.view(layout_.ic_w_skip, grad).noalias() +=
      grad_ic * tr.inputs.col(steps - 1).transpose();
  params.view(layout_.ic_b_out, grad) += grad_ic;

  const auto w_hh = params.matrix(layout_.ic_w_hh);
  auto g_w_in = params.view(layout_.ic_w_in, grad);
  auto g_w_hh = params.view(layout_.ic_w_hh, grad);
  auto g_b = params.view(layout_.ic_b, grad);
  Vector g_h = params.matrix(layout_.ic_w_out).transpose() * grad_ic;
  for (Eigen::Index t = steps - 1; t >= 0; --t) {
    const Vector g_a = tanh_grad(tr.hidden.col(t + 1), g_h);
    g_w_in.noalias() += g_a * tr.inputs.col(t).transpose();
    g_w_hh.noalias() += g_a * tr.hidden.col(t).transpose();
    g_b += g_a;
    g_h.noalias() = w_hh.transpose() * g_a;
  }
}

Vector Network::encode_v(const data::SceneWindow& window, const ModelParams& params,
                         VTrace* trace) const {
  if (window.context.size() != config_.context_dim) {
    throw ArgumentError("encode_v: context has " + std::to_string(window.context.size()) +
                        " dims, expected " + std::to_string(config_.context_dim));
  }
  VTrace local;
  VTrace& tr = trace != nullptr ? *trace : local;
  const Eigen::Map<const Vector> context(window.context.data(),
                                         static_cast<Eigen::Index>(window.context.size()));
  if (!context.allFinite()) throw NumericError("encode_v: non-finite context");

  if (config_.v_encoder == VEncoder::identity) {
    tr.input = context;
    tr.v = context;
    tr.neighbor_inputs.resize(kPointFeatures, 0);
    tr.neighbor_hidden.resize(0, 0);
    return tr.v;
  }

  Eigen::Index pool_dim = 0;
  if (uses_pool()) {
    pool_dim = static_cast<Eigen::Index>(config_.pool_dim);
    const auto n_valid = static_cast<Eigen::Index>(window.valid_neighbor_count());
    tr.neighbor_inputs.resize(kPointFeatures, n_valid);
    Eigen::Index j = 0;
    for (const data::NeighborSlot& slot : window.neighbors) {
      if (!slot.valid) continue;
      if (slot.points.empty()) throw ArgumentError("encode_v: valid neighbor without points");
      tr.neighbor_inputs.col(j++) = point_features(slot.points, slot.points.size() - 1);
    }
    if (!tr.neighbor_inputs.allFinite()) throw NumericError("encode_v: non-finite neighbor");
    const auto w_nb = params.matrix(layout_.nb_w);
    const auto b_nb = params.matrix(layout_.nb_b);
    tr.neighbor_hidden = ((w_nb * tr.neighbor_inputs).colwise() + b_nb.col(0)).array().tanh();
  } else {
    tr.neighbor_inputs.resize(kPointFeatures, 0);
    tr.neighbor_hidden.resize(0, 0);
  }

  tr.input.resize(context.size() + pool_dim);
  tr.input.head(context.size()) = context;
  if (pool_dim > 0) {
    if (tr.neighbor_hidden.cols() > 0) {
      tr.input.tail(pool_dim) =
          tr.neighbor_hidden.rowwise().sum() / static_cast<double>(tr.neighbor_hidden.cols());
    } else {
      tr.input.tail(pool_dim).setZero();
    }
  }
  tr.v = tanh_vec(params.matrix(layout_.v_w) * tr.input + params.matrix(layout_.v_b));
  return tr.v;
}

void Network::encode_v_backward(const ModelParams& params, const VTrace& tr,
                                const Vector& grad_v, std::span<double> grad) const {
  if (config_.v_encoder == VEncoder::identity) return;
  const Vector g_a = tanh_grad(tr.v, grad_v);
  params.view(layout_.v_w, grad).noalias() += g_a * tr.input.transpose();
  params.view(layout_.v_b, grad) += g_a;
  if (!uses_pool() || tr.neighbor_hidden.cols() == 0) return;

  const auto pool_dim = static_cast<Eigen::Index>(config_.pool_dim);
  const Vector g_input = params.matrix(layout_.v_w).transpose() * g_a;
  const Vector g_pool =
      g_input.tail(pool_dim) / static_cast<double>(tr.neighbor_hidden.cols());
  const Matrix g_pre =
      (1.0 - tr.neighbor_hidden.array().square()).colwise() * g_pool.array();
  params.view(layout_.nb_w, grad).noalias() += g_pre * tr.neighbor_inputs.transpose();
  params.view(layout_.nb_b, grad) += g_pre.rowwise().sum();
}

Vector Network::project(const Vector& v, const ModelParams& params) const {
  if (v.size() != static_cast<Eigen::Index>(config_.v_dim)) {
    throw ArgumentError("project: v has wrong size");
  }
  check_finite(v, "V feature");
  return params.matrix(layout_.proj_w) * v + params.matrix(layout_.proj_b);
}

Vector Network::project_backward(const ModelParams& params, const Vector& v,
                                 const Vector& grad_p, std::span<double> grad) const {
  params.view(layout_.proj_w, grad).noalias() += grad_p * v.transpose();
  params.view(layout_.proj_b, grad) += grad_p;
  return params.matrix(layout_.proj_w).transpose() * grad_p;
}

Vector Network::mask_logits(const Vector& v, const ModelParams& params) const {
  if (config_.uniform_mask) throw ArgumentError("mask_logits: network uses a uniform mask");
  return params.matrix(layout_.mask_w) * v + params.matrix(layout_.mask_b);
}

Vector Network::generate_mask(const Vector& v, const ModelParams& params, double temperature,
                              std::span<const double> noise, MaskMode mode,
                              MaskTrace* trace) const {
  if (config_.uniform_mask) {
    Vector m = Vector::Constant(v.size(), 0.5);
    if (trace != nullptr) {
      *trace = MaskTrace{};
      trace->mask = m;
      trace->mode = mode;
    }
    return m;
  }
  return gumbel_mask(mask_logits(v, params), noise, config_.k_count(), temperature, mode,
                     trace);
}

Vector Network::mask_logits_backward(const ModelParams& params, const Vector& v,
                                     const Vector& grad_logits, std::span<double> grad,
                                     bool accumulate_params) const {
  if (accumulate_params) {
    params.view(layout_.mask_w, grad).noalias() += grad_logits * v.transpose();
    params.view(layout_.mask_b, grad) += grad_logits;
  }
  return params.matrix(layout_.mask_w).transpose() * grad_logits;
}

Vector Network::fuse(const Vector& branch, const Vector& ic, const ModelParams& params,
                     FuseTrace* trace) const {
  if (branch.size() != static_cast<Eigen::Index>(config_.v_dim) ||
      ic.size() != static_cast<Eigen::Index>(config_.ic_dim)) {
    throw ArgumentError("fuse: expected branch of " + std::to_string(config_.v_dim) +
                        " and ic of " + std::to_string(config_.ic_dim) + ", got " +
                        std::to_string(branch.size()) + " and " + std::to_string(ic.size()));
  }
  FuseTrace local;
  FuseTrace& tr = trace != nullptr ? *trace : local;
  tr.input.resize(branch.size() + ic.size());
  tr.input << branch, ic;
  tr.hidden = tanh_vec(params.matrix(layout_.f1_w) * tr.input + params.matrix(layout_.f1_b));
  tr.residual = tr.hidden + ic;
  tr.fused = params.matrix(layout_.f2_w) * tr.residual + params.matrix(layout_.f2_b);
  return tr.fused;
}

void Network::fuse_backward(const ModelParams& params, const FuseTrace& tr,
                            const Vector& grad_fused, std::span<double> grad,
                            Vector& grad_branch, Vector& grad_ic) const {
  const auto v = static_cast<Eigen::Index>(config_.v_dim);
  const auto ic = static_cast<Eigen::Index>(config_.ic_dim);
  params.view(layout_.f2_w, grad).noalias() += grad_fused * tr.residual.transpose();
  params.view(layout_.f2_b, grad) += grad_fused;
  const Vector g_res = params.matrix(layout_.f2_w).transpose() * grad_fused;
  const Vector g_a = tanh_grad(tr.hidden, g_res);
  params.view(layout_.f1_w, grad).noalias() += g_a * tr.input.transpose();
  params.view(layout_.f1_b, grad) += g_a;
  const Vector g_in = params.matrix(layout_.f1_w).transpose() * g_a;
  grad_branch = g_in.head(v);
  grad_ic = g_in.tail(ic) + g_res;
}

Matrix Network::decode(const Vector& fused, const ModelParams& params,
                       DecodeTrace* trace) const {
  check_finite(fused, "fused feature");
  const auto steps = static_cast<Eigen::Index>(data::kPredLen);
  const auto h = static_cast<Eigen::Index>(config_.hidden_dim);
  DecodeTrace local;
  DecodeTrace& tr = trace != nullptr ? *trace : local;
  tr.fused = fused;
  tr.hidden.resize(h, steps + 1);
  tr.pred.resize(2, steps);
  tr.hidden.col(0) =
      (params.matrix(layout_.dec_w_init) * fused + params.matrix(layout_.dec_b_init))
          .array()
          .tanh();
  const auto w_hh = params.matrix(layout_.dec_w_hh);
  const auto b_h = params.matrix(layout_.dec_b_h);
  const auto w_out = params.matrix(layout_.dec_w_out);
  const Vector base = params.matrix(layout_.dec_w_skip) * fused + params.matrix(layout_.dec_b_out);
  Eigen::Vector2d pos = Eigen::Vector2d::Zero();
  for (Eigen::Index t = 0; t < steps; ++t) {
    tr.hidden.col(t + 1) = (w_hh * tr.hidden.col(t) + b_h).array().tanh();
    pos += w_out * tr.hidden.col(t + 1) + base;
    tr.pred.col(t) = pos;
  }
  return tr.pred;
}

Vector Network::decode_backward(const ModelParams& params, const DecodeTrace& tr,
                                const Matrix& grad_pred, std::span<double> grad) const {
  const Eigen::Index steps = tr.pred.cols();
  // pred_t = sum_{s <= t} out_s, so d/d out_t is the suffix sum of d/d pred.
  Matrix g_out(2, steps);
  Eigen::Vector2d acc = Eigen::Vector2d::Zero();
  for (Eigen::Index t = steps - 1; t >= 0; --t) {
    acc += grad_pred.col(t);
    g_out.col(t) = acc;
  }
  const Eigen::Vector2d g_base = g_out.rowwise().sum();
  params.view(layout_.dec_w_skip, grad).noalias() += g_base * tr.fused.transpose();
  params.view(layout_.dec_b_out, grad) += g_base;
  params.view(layout_.dec_w_out, grad).noalias() +=
      g_out * tr.hidden.rightCols(steps).transpose();

  const auto w_hh = params.matrix(layout_.dec_w_hh);
  const auto w_out = params.matrix(layout_.dec_w_out);
  const auto h = static_cast<Eigen::Index>(config_.hidden_dim);
  Matrix g_pre(h, steps);
  Vector g_h = Vector::Zero(h);
  for (Eigen::Index t = steps - 1; t >= 0; --t) {
    g_h.noalias() += w_out.transpose() * g_out.col(t);
    g_pre.col(t) = tanh_grad(tr.hidden.col(t + 1), g_h);
    g_h.noalias() = w_hh.transpose() * g_pre.col(t);
  }
  params.view(layout_.dec_w_hh, grad).noalias() += g_pre * tr.hidden.leftCols(steps).transpose();
  params.view(layout_.dec_b_h, grad) += g_pre.rowwise().sum();

  const Vector g_init = tanh_grad(tr.hidden.col(0), g_h);
  params.view(layout_.dec_w_init, grad).noalias() += g_init * tr.fused.transpose();
  params.view(layout_.dec_b_init, grad) += g_init;
  return params.matrix(layout_.dec_w_init).transpose() * g_init +
         params.matrix(layout_.dec_w_skip).transpose() * g_base;
}

void Network::forward(const data::SceneWindow& window, const ModelParams& params,
                      std::span<const double> noise, MaskMode mode, double temperature,
                      ForwardCache& cache) const {
  check_window(window);
  cache.ic = encode_ic(window.ego_obs, params, &cache.ic_trace);
  const Vector& v = encode_v(window, params, &cache.v_trace);
  cache.projection = project(v, params);
  generate_mask(v, params, temperature, noise, mode, &cache.mask_trace);
  std::tie(cache.vc, cache.vn) = split_features(v, cache.mask_trace.mask);
  fuse(cache.vc, cache.ic, params, &cache.fuse_causal);
  fuse(cache.vn, cache.ic, params, &cache.fuse_spurious);
  fuse(Vector::Zero(v.size()), cache.ic, params, &cache.fuse_ic_only);
  decode(cache.fuse_causal.fused, params, &cache.dec_causal);
  decode(cache.fuse_spurious.fused, params, &cache.dec_spurious);
  decode(cache.fuse_ic_only.fused, params, &cache.dec_ic_only);
}

void Network::backward(const ModelParams& params, const ForwardCache& cache,
                       const OutputGrads& upstream, GradientRouting routing,
                       std::span<double> grad) const {
  if (grad.size() != params.size()) throw ArgumentError("backward: gradient buffer size");
  const auto v_dim = static_cast<Eigen::Index>(config_.v_dim);
  const Vector& v = cache.v_trace.v;
  const Vector& m = cache.mask_trace.mask;

  Vector g_ic = Vector::Zero(static_cast<Eigen::Index>(config_.ic_dim));
  Vector g_vc = Vector::Zero(v_dim);
  Vector g_vn = Vector::Zero(v_dim);
  Vector g_branch;
  Vector g_ic_part;
  auto through_branch = [&](const DecodeTrace& dec, const FuseTrace& fz, const Matrix& g_pred,
                            Vector* g_branch_out) {
    if (g_pred.size() == 0) return;
    const Vector g_fused = decode_backward(params, dec, g_pred, grad);
    fuse_backward(params, fz, g_fused, grad, g_branch, g_ic_part);
    g_ic += g_ic_part;
    if (g_branch_out != nullptr) *g_branch_out += g_branch;
  };
  through_branch(cache.dec_causal, cache.fuse_causal, upstream.causal, &g_vc);
  through_branch(cache.dec_spurious, cache.fuse_spurious, upstream.spurious, &g_vn);
  through_branch(cache.dec_ic_only, cache.fuse_ic_only, upstream.ic_only, nullptr);

  Vector g_v = Vector::Zero(v_dim);
  if (upstream.projection.size() > 0) {
    g_v += project_backward(params, v, upstream.projection, grad);
  }
  if (config_.uniform_mask) {
    g_v += 0.5 * (g_vc + g_vn);
  } else {
    g_v += (g_vc.array() * m.array() + g_vn.array() * (1.0 - m.array())).matrix();
    const Vector g_m_total = ((g_vc - g_vn).array() * v.array()).matrix();
    const Vector g_logits_total = gumbel_mask_backward(cache.mask_trace, g_m_total);
    if (routing == GradientRouting::adversarial) {
      g_v += mask_logits_backward(params, v, g_logits_total, grad, false);
      const Vector g_m_adv = ((g_vc + g_vn).array() * v.array()).matrix();
      const Vector g_logits_adv = gumbel_mask_backward(cache.mask_trace, g_m_adv);
      params.view(layout_.mask_w, grad).noalias() += g_logits_adv * v.transpose();
      params.view(layout_.mask_b, grad) += g_logits_adv;
    } else {
      g_v += mask_logits_backward(params, v, g_logits_total, grad, true);
    }
  }
  encode_v_backward(params, cache.v_trace, g_v, grad);
  encode_ic_backward(params, cache.ic_trace, g_ic, grad);
}

}  // namespace cilf::model
