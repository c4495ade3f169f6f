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

#ifndef CILF_MODEL_HPP_
#define CILF_MODEL_HPP_

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "cilf/data.hpp"

namespace cilf::model {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

enum class Backbone { vanilla_rnn, neighbor_pool };
enum class VEncoder { mlp, identity };
enum class MaskMode { soft, hard };

// Soft masks are clipped to [kMaskEpsilon, 1 - kMaskEpsilon].
inline constexpr double kMaskEpsilon = 1e-9;

struct ModelConfig {
  std::size_t ic_dim = 16;
  std::size_t v_dim = 8;
  std::size_t hidden_dim = 16;
  double k_ratio = 0.5;
  double gumbel_temperature = 0.5;
  std::size_t projection_dim = 4;
  Backbone backbone = Backbone::vanilla_rnn;
  std::size_t max_neighbors = 8;
  // Length of the per-scene context vector fed to the V encoder.
  std::size_t context_dim = 0;
  // Width of the per-neighbor embedding pooled by `neighbor_pool`.
  std::size_t pool_dim = 8;
  // `identity` makes V the raw context, so mask entries align with context
  // dimensions (requires v_dim == context_dim).
  VEncoder v_encoder = VEncoder::mlp;
  // Replaces the mask generator with a constant 0.5 mask (ERM ablation).
  bool uniform_mask = false;

  std::size_t k_count() const;
  void validate() const;  // throws ConfigError
};

std::map<std::string, std::string> to_key_values(const ModelConfig& config);
ModelConfig model_config_from(const std::map<std::string, std::string>& kv);
std::string to_string(Backbone b);
std::string to_string(VEncoder e);
Backbone parse_backbone(const std::string& name);
VEncoder parse_v_encoder(const std::string& name);

enum class ParamGroup { backbone = 0, v_branch = 1, mask = 2 };
inline constexpr std::size_t kParamGroupCount = 3;
std::string to_string(ParamGroup g);

struct TensorInfo {
  std::string name;
  ParamGroup group;
  std::size_t rows;
  std::size_t cols;
  std::size_t offset;

  std::size_t size() const { return rows * cols; }
  friend bool operator==(const TensorInfo&, const TensorInfo&) = default;
};

// Named tensors over one flat column-major buffer. Gradients share the layout.
class ModelParams {
 public:
  std::size_t add_tensor(std::string name, ParamGroup group, std::size_t rows,
                         std::size_t cols);

  const std::vector<TensorInfo>& tensors() const { return tensors_; }
  std::vector<double>& values() { return values_; }
  const std::vector<double>& values() const { return values_; }
  std::size_t size() const { return values_.size(); }

  std::optional<std::size_t> find(std::string_view name) const;
  std::size_t index_of(std::string_view name) const;  // throws ArgumentError

  Eigen::Map<Matrix> matrix(std::size_t tensor) {
    return view(tensor, std::span<double>(values_));
  }
  Eigen::Map<const Matrix> matrix(std::size_t tensor) const {
    return view(tensor, std::span<const double>(values_));
  }
  Eigen::Map<Matrix> view(std::size_t tensor, std::span<double> buffer) const {
    const TensorInfo& t = tensors_[tensor];
    return Eigen::Map<Matrix>(buffer.data() + t.offset, static_cast<Eigen::Index>(t.rows),
                              static_cast<Eigen::Index>(t.cols));
  }
  Eigen::Map<const Matrix> view(std::size_t tensor, std::span<const double> buffer) const {
    const TensorInfo& t = tensors_[tensor];
    return Eigen::Map<const Matrix>(buffer.data() + t.offset,
                                    static_cast<Eigen::Index>(t.rows),
                                    static_cast<Eigen::Index>(t.cols));
  }

  // Group of every flat element.
  std::vector<ParamGroup> element_groups() const;
  bool all_finite() const;

  friend bool operator==(const ModelParams&, const ModelParams&) = default;

 private:
  std::vector<TensorInfo> tensors_;
  std::vector<double> values_;
};

struct FeatureBundle {
  Vector ic;
  Vector v;
  Vector mask;
  Vector vc;
  Vector vn;
  Vector cf;
  Vector sf;
  Vector projection;
};

struct RnnTrace {
  Matrix inputs;  // 4 x T
  Matrix hidden;  // H x (T + 1), column 0 is the zero initial state
};

struct VTrace {
  Matrix neighbor_inputs;  // 4 x n_valid
  Matrix neighbor_hidden;  // pool_dim x n_valid
  Vector input;            // [context; pool]
  Vector v;
};

struct MaskTrace {
  Vector logits;
  Vector probs;  // softmax((logits + noise) / temperature)
  Vector raw;    // k_count * probs
  Vector mask;
  double temperature = 1.0;
  std::size_t k_count = 0;
  MaskMode mode = MaskMode::soft;
};

struct FuseTrace {
  Vector input;     // [branch; ic]
  Vector hidden;    // f1 output
  Vector residual;  // f1 output + ic
  Vector fused;
};

struct DecodeTrace {
  Vector fused;
  Matrix hidden;  // H x (T + 1)
  Matrix pred;    // 2 x T, column t is step t + 1
};

struct ForwardCache {
  RnnTrace ic_trace;
  Vector ic;
  VTrace v_trace;
  Vector projection;
  MaskTrace mask_trace;
  Vector vc;
  Vector vn;
  FuseTrace fuse_causal;
  FuseTrace fuse_spurious;
  FuseTrace fuse_ic_only;
  DecodeTrace dec_causal;
  DecodeTrace dec_spurious;
  DecodeTrace dec_ic_only;

  FeatureBundle features() const;
  const Matrix& pred_causal() const { return dec_causal.pred; }
  const Matrix& pred_spurious() const { return dec_spurious.pred; }
  const Matrix& pred_ic_only() const { return dec_ic_only.pred; }
};

// Upstream gradients of some scalar w.r.t. the forward outputs. Empty members
// are treated as zero.
struct OutputGrads {
  Matrix causal;
  Matrix spurious;
  Matrix ic_only;
  Vector projection;
};

enum class GradientRouting {
  // Every parameter receives the gradient of the scalar defined by the
  // upstream gradients.
  total,
  // As `total`, except the mask generator sees the spurious-branch term with
  // its sign flipped (minimises causal - spurious while the rest minimises
  // causal + spurious).
  adversarial,
};

// Gumbel top-k mask over `logits`. Soft mode returns
// clip(k * softmax((logits + noise) / temperature)); hard mode the top-k
// indicator of logits + noise.
Vector gumbel_mask(const Vector& logits, std::span<const double> noise,
                   std::size_t k_count, double temperature, MaskMode mode,
                   MaskTrace* trace = nullptr);
// Soft-mode vector-Jacobian product; used for both modes (straight-through).
Vector gumbel_mask_backward(const MaskTrace& trace, const Vector& grad_mask);

// vc = v * m, vn = v * (1 - m), with vc + vn == v exactly.
std::pair<Vector, Vector> split_features(const Vector& v, const Vector& m);

class Network {
 public:
  explicit Network(ModelConfig config);

  const ModelConfig& config() const { return config_; }

  ModelParams make_params() const;
  // Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, zero biases, zero f1.
  void init_params(ModelParams& params, std::uint64_t seed) const;
  // Throws ArgumentError when the window does not fit this network.
  void check_window(const data::SceneWindow& window) const;

  Vector encode_ic(std::span<const data::TrackPoint> ego_obs, const ModelParams& params,
                   RnnTrace* trace = nullptr) const;
  void encode_ic_backward(const ModelParams& params, const RnnTrace& trace,
                          const Vector& grad_ic, std::span<double> grad) const;

  Vector encode_v(const data::SceneWindow& window, const ModelParams& params,
                  VTrace* trace = nullptr) const;
  void encode_v_backward(const ModelParams& params, const VTrace& trace,
                         const Vector& grad_v, std::span<double> grad) const;

  Vector project(const Vector& v, const ModelParams& params) const;
  // Returns the gradient w.r.t. v.
  Vector project_backward(const ModelParams& params, const Vector& v,
                          const Vector& grad_p, std::span<double> grad) const;

  Vector mask_logits(const Vector& v, const ModelParams& params) const;
  Vector generate_mask(const Vector& v, const ModelParams& params, double temperature,
                       std::span<const double> noise, MaskMode mode,
                       MaskTrace* trace = nullptr) const;
  // Accumulates mask-generator parameter gradients from d/dlogits; returns
  // the gradient w.r.t. v through the logits.
  Vector mask_logits_backward(const ModelParams& params, const Vector& v,
                              const Vector& grad_logits, std::span<double> grad,
                              bool accumulate_params = true) const;

  Vector fuse(const Vector& branch, const Vector& ic, const ModelParams& params,
              FuseTrace* trace = nullptr) const;
  void fuse_backward(const ModelParams& params, const FuseTrace& trace,
                     const Vector& grad_fused, std::span<double> grad, Vector& grad_branch,
                     Vector& grad_ic) const;

  Matrix decode(const Vector& fused, const ModelParams& params,
                DecodeTrace* trace = nullptr) const;
  Vector decode_backward(const ModelParams& params, const DecodeTrace& trace,
                         const Matrix& grad_pred, std::span<double> grad) const;

  // `noise` holds v_dim Gumbel draws (ignored with a uniform mask).
  void forward(const data::SceneWindow& window, const ModelParams& params,
               std::span<const double> noise, MaskMode mode, double temperature,
               ForwardCache& cache) const;
  void forward(const data::SceneWindow& window, const ModelParams& params,
               std::span<const double> noise, MaskMode mode, ForwardCache& cache) const {
    forward(window, params, noise, mode, config_.gumbel_temperature, cache);
  }
  // Accumulates into `grad` (same layout as params).
  void backward(const ModelParams& params, const ForwardCache& cache,
                const OutputGrads& upstream, GradientRouting routing,
                std::span<double> grad) const;

 private:
  struct Layout {
    static constexpr std::size_t kAbsent = static_cast<std::size_t>(-1);
    std::size_t ic_w_in = kAbsent, ic_w_hh = kAbsent, ic_b = kAbsent;
    std::size_t ic_w_out = kAbsent, ic_w_skip = kAbsent, ic_b_out = kAbsent;
    std::size_t nb_w = kAbsent, nb_b = kAbsent;
    std::size_t v_w = kAbsent, v_b = kAbsent;
    std::size_t proj_w = kAbsent, proj_b = kAbsent;
    std::size_t mask_w = kAbsent, mask_b = kAbsent;
    std::size_t f1_w = kAbsent, f1_b = kAbsent, f2_w = kAbsent, f2_b = kAbsent;
    std::size_t dec_w_init = kAbsent, dec_b_init = kAbsent, dec_w_hh = kAbsent;
    std::size_t dec_b_h = kAbsent, dec_w_out = kAbsent, dec_w_skip = kAbsent;
    std::size_t dec_b_out = kAbsent;
  };

  bool uses_pool() const { return config_.backbone == Backbone::neighbor_pool; }

  ModelConfig config_;
  Layout layout_;
  ModelParams prototype_;
};

}  // namespace cilf::model

#endif  // CILF_MODEL_HPP_
