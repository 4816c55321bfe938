// Copyright 2026 The bvood Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace bvood::binio {
class Writer;
class Reader;
}  // namespace bvood::binio

/// Dense feed-forward networks with hand-written reverse-mode gradients.
namespace bvood::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class Activation : std::uint32_t { Identity = 0, Relu = 1, Sigmoid = 2 };

struct Layer {
  Matrix weights;  // out x in
  Vector bias;     // out
  Activation activation = Activation::Identity;

  Eigen::Index in() const { return weights.cols(); }
  Eigen::Index out() const { return weights.rows(); }
};

class Network {
 public:
  Network() = default;
  /// Throws DomainError if consecutive layer dimensions disagree.
  explicit Network(std::vector<Layer> layers);

  /// Glorot-uniform weights in +-sqrt(6/(fan_in+fan_out)), zero biases.
  /// `dims` lists layer widths from input to output; `activations` has one
  /// entry per layer (dims.size() - 1).
  static Network glorot(const std::vector<int>& dims, const std::vector<Activation>& activations,
                        std::uint64_t seed);

  Eigen::Index input_dim() const;
  Eigen::Index output_dim() const;
  std::size_t depth() const { return layers_.size(); }
  std::size_t parameter_count() const;

  const std::vector<Layer>& layers() const { return layers_; }
  Layer& layer(std::size_t i) { return layers_[i]; }
  const Layer& layer(std::size_t i) const { return layers_[i]; }

  bool all_finite() const;
  friend bool operator==(const Network& a, const Network& b);

 private:
  std::vector<Layer> layers_;
};

/// Parameter-shaped accumulator.
struct Gradients {
  std::vector<Matrix> weights;
  std::vector<Vector> bias;

  static Gradients zeros_like(const Network& net);
  void set_zero();
  void scale(double s);
  bool all_finite() const;
  double squared_norm() const;
};

/// Activations recorded by a taped forward pass: inputs[i] feeds layer i,
/// outputs[i] is its post-activation result. Columns are samples.
struct Tape {
  std::vector<Matrix> inputs;
  std::vector<Matrix> outputs;
};

/// Batched evaluation; each column of `batch` is one sample.
Matrix forward(const Network& net, const Matrix& batch);
Matrix forward(const Network& net, const Matrix& batch, Tape& tape);

/// Back-propagates `upstream` (d loss / d output, one column per sample)
/// through the taped pass. Parameter gradients are *added* to `grads`
/// (summed over the batch); returns d loss / d input.
Matrix backward(const Network& net, const Tape& tape, const Matrix& upstream, Gradients& grads);

struct ForwardBackward {
  Vector output;
  Gradients grads;
  Vector input_grad;
};

/// Single-sample forward and reverse pass: gradients of <output, upstream>.
/// Throws DomainError on dimension mismatch, NumericError on non-finite values.
ForwardBackward forward_backward(const Network& net, const Vector& input, const Vector& upstream);

/// Forward pass that evaluates only the listed rows of the final layer.
/// The hidden layers are computed in full.
Vector forward_rows(const Network& net, const Vector& input, std::span<const int> rows);

struct AdamState {
  std::vector<Matrix> m_weights, v_weights;
  std::vector<Vector> m_bias, v_bias;
  std::int64_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  static AdamState for_network(const Network& net);
};

/// Bias-corrected Adam update in place. Throws NumericError on a non-finite
/// gradient (parameters are left untouched in that case).
void adam_step(Network& net, const Gradients& grads, AdamState& state, double lr);

/// Loss head for gradient checks: returns the loss for `output` and writes
/// d loss / d output into `grad` when it is non-null.
using LossHead = std::function<double(const Vector& output, Vector* grad)>;

/// |a - n| / max(|a|, |n|, 1e-8)
double relative_error(double analytic, double numeric);

/// Central-difference check of every parameter of `net` at `input`.
/// Returns the largest relative error.
double grad_check(const Network& net, const Vector& input, const LossHead& loss, double h = 1e-4);

/// Generic central-difference check over raw parameter slots.
/// `analytic[i]` is the claimed derivative of `loss()` w.r.t. `*params[i]`.
double max_relative_error(std::span<double* const> params, std::span<const double> analytic,
                          const std::function<double()>& loss, double h = 1e-4);

/// Pointers to every parameter (layer by layer, weights column-major then bias).
std::vector<double*> parameter_slots(Network& net);
/// Flattens gradients in parameter_slots() order.
std::vector<double> flatten(const Gradients& grads);

/// True when some relu pre-activation lies within `tol` of its kink.
bool near_relu_kink(const Network& net, const Vector& input, double tol = 1e-6);

/// Weight file: "BVAE", u32 version, u32 layer count, then per layer
/// u32 rows, u32 cols, u32 activation, row-major weights and biases as
/// little-endian doubles.
void write(binio::Writer& out, const Network& net);
Network read(binio::Reader& in);
void save(const std::filesystem::path& path, const Network& net);
Network load(const std::filesystem::path& path);

inline constexpr std::uint32_t kWeightFormatVersion = 1;

}  // namespace bvood::nn
