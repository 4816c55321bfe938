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

#include "bvood/nn.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "bvood/binio.hpp"
#include "bvood/error.hpp"
#include "bvood/rng.hpp"

namespace bvood::nn {

namespace {

void apply_activation(Activation a, Matrix& z) {
  switch (a) {
    case Activation::Identity: break;
    case Activation::Relu: z = z.cwiseMax(0.0); break;
    case Activation::Sigmoid: z = (1.0 + (-z.array()).exp()).inverse().matrix(); break;
  }
}

// d loss / d pre-activation, given d loss / d output and the output itself.
void activation_backward(Activation a, const Matrix& out, Matrix& grad) {
  switch (a) {
    case Activation::Identity: break;
    case Activation::Relu: grad.array() *= (out.array() > 0.0).cast<double>(); break;
    case Activation::Sigmoid: grad.array() *= out.array() * (1.0 - out.array()); break;
  }
}

void check_dims(const Network& net, Eigen::Index rows, const char* what) {
  if (net.depth() == 0) throw DomainError("network has no layers");
  if (rows != net.input_dim()) {
    throw DomainError(std::string(what) + ": input has " + std::to_string(rows) + " rows, network expects " +
                      std::to_string(net.input_dim()));
  }
}

}  // namespace

Network::Network(std::vector<Layer> layers) : layers_(std::move(layers)) {
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& l = layers_[i];
    if (l.bias.size() != l.out()) throw DomainError("layer " + std::to_string(i) + ": bias size mismatch");
    if (i > 0 && l.in() != layers_[i - 1].out()) {
      throw DomainError("layer " + std::to_string(i) + " expects " + std::to_string(l.in()) +
                        " inputs but previous layer has " + std::to_string(layers_[i - 1].out()) + " outputs");
    }
  }
}

Network Network::glorot(const std::vector<int>& dims, const std::vector<Activation>& activations,
                        std::uint64_t seed) {
  if (dims.size() < 2 || activations.size() != dims.size() - 1) {
    throw DomainError("glorot: need one activation per layer");
  }
  Rng rng(seed);
  std::vector<Layer> layers;
  for (std::size_t i = 0; i + 1 < dims.size(); ++i) {
    if (dims[i] < 1 || dims[i + 1] < 1) throw DomainError("glorot: layer widths must be positive");
    const double limit = std::sqrt(6.0 / (dims[i] + dims[i + 1]));
    Layer l{Matrix(dims[i + 1], dims[i]), Vector::Zero(dims[i + 1]), activations[i]};
    for (Eigen::Index c = 0; c < l.weights.cols(); ++c)
      for (Eigen::Index r = 0; r < l.weights.rows(); ++r) l.weights(r, c) = rng.uniform(-limit, limit);
    layers.push_back(std::move(l));
  }
  return Network(std::move(layers));
}

Eigen::Index Network::input_dim() const { return layers_.empty() ? 0 : layers_.front().in(); }
Eigen::Index Network::output_dim() const { return layers_.empty() ? 0 : layers_.back().out(); }

std::size_t Network::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += static_cast<std::size_t>(l.weights.size() + l.bias.size());
  return n;
}

bool Network::all_finite() const {
  return std::all_of(layers_.begin(), layers_.end(),
                     [](const Layer& l) { return l.weights.allFinite() && l.bias.allFinite(); });
}

bool operator==(const Network& a, const Network& b) {
  if (a.layers_.size() != b.layers_.size()) return false;
  for (std::size_t i = 0; i < a.layers_.size(); ++i) {
    const auto &x = a.layers_[i], &y = b.layers_[i];
    if (x.activation != y.activation || x.weights.rows() != y.weights.rows() ||
        x.weights.cols() != y.weights.cols() || x.weights != y.weights || x.bias != y.bias) {
      return false;
    }
  }
  return true;
}

Gradients Gradients::zeros_like(const Network& net) {
  Gradients g;
  for (const auto& l : net.layers()) {
    g.weights.push_back(Matrix::Zero(l.out(), l.in()));
    g.bias.push_back(Vector::Zero(l.out()));
  }
  return g;
}

void Gradients::set_zero() {
  for (auto& w : weights) w.setZero();
  for (auto& b : bias) b.setZero();
}

void Gradients::scale(double s) {
  for (auto& w : weights) w *= s;
  for (auto& b : bias) b *= s;
}

bool Gradients::all_finite() const {
  return std::all_of(weights.begin(), weights.end(), [](const Matrix& m) { return m.allFinite(); }) &&
         std::all_of(bias.begin(), bias.end(), [](const Vector& v) { return v.allFinite(); });
}

double Gradients::squared_norm() const {
  double s = 0.0;
  for (const auto& w : weights) s += w.squaredNorm();
  for (const auto& b : bias) s += b.squaredNorm();
  return s;
}

Matrix forward(const Network& net, const Matrix& batch) {
  check_dims(net, batch.rows(), "forward");
  Matrix x = batch;
  for (const auto& l : net.layers()) {
    Matrix z = l.weights * x;
    z.colwise() += l.bias;
    apply_activation(l.activation, z);
    x = std::move(z);
  }
  if (!x.allFinite()) throw NumericError("forward: non-finite output");
  return x;
}

Matrix forward(const Network& net, const Matrix& batch, Tape& tape) {
  check_dims(net, batch.rows(), "forward");
  tape.inputs.resize(net.depth());
  tape.outputs.resize(net.depth());
  const Matrix* x = &batch;
  for (std::size_t i = 0; i < net.depth(); ++i) {
    const auto& l = net.layer(i);
    tape.inputs[i] = *x;
    Matrix& z = tape.outputs[i];
    z.noalias() = l.weights * tape.inputs[i];
    z.colwise() += l.bias;
    apply_activation(l.activation, z);
    x = &z;
  }
  if (!tape.outputs.back().allFinite()) throw NumericError("forward: non-finite output");
  return tape.outputs.back();
}

Matrix backward(const Network& net, const Tape& tape, const Matrix& upstream, Gradients& grads) {
  if (tape.outputs.size() != net.depth()) throw DomainError("backward: tape does not match network");
  if (upstream.rows() != net.output_dim() || upstream.cols() != tape.outputs.back().cols()) {
    throw DomainError("backward: upstream gradient shape mismatch");
  }
  Matrix delta = upstream;
  for (std::size_t k = net.depth(); k-- > 0;) {
    const auto& l = net.layer(k);
    activation_backward(l.activation, tape.outputs[k], delta);
    grads.weights[k].noalias() += delta * tape.inputs[k].transpose();
    grads.bias[k] += delta.rowwise().sum();
    Matrix next(l.in(), delta.cols());
    next.noalias() = l.weights.transpose() * delta;
    delta = std::move(next);
  }
  if (!grads.all_finite() || !delta.allFinite()) throw NumericError("backward: non-finite gradient");
  return delta;
}

ForwardBackward forward_backward(const Network& net, const Vector& input, const Vector& upstream) {
  Tape tape;
  ForwardBackward r;
  r.output = forward(net, input, tape);
  if (upstream.size() != r.output.size()) throw DomainError("forward_backward: upstream gradient size mismatch");
  r.grads = Gradients::zeros_like(net);
  r.input_grad = backward(net, tape, upstream, r.grads);
  return r;
}

Vector forward_rows(const Network& net, const Vector& input, std::span<const int> rows) {
  check_dims(net, input.size(), "forward_rows");
  Vector x = input;
  for (std::size_t i = 0; i + 1 < net.depth(); ++i) {
    const auto& l = net.layer(i);
    Matrix z = l.weights * x;
    z += l.bias;
    apply_activation(l.activation, z);
    x = z;
  }
  const auto& last = net.layers().back();
  Matrix out(static_cast<Eigen::Index>(rows.size()), 1);
  for (std::size_t j = 0; j < rows.size(); ++j) {
    const int r = rows[j];
    if (r < 0 || r >= last.out()) throw DomainError("forward_rows: row index out of range");
    out(static_cast<Eigen::Index>(j), 0) = last.weights.row(r).dot(x) + last.bias(r);
  }
  apply_activation(last.activation, out);
  if (!out.allFinite()) throw NumericError("forward: non-finite output");
  return out.col(0);
}

AdamState AdamState::for_network(const Network& net) {
  AdamState s;
  for (const auto& l : net.layers()) {
    s.m_weights.push_back(Matrix::Zero(l.out(), l.in()));
    s.v_weights.push_back(Matrix::Zero(l.out(), l.in()));
    s.m_bias.push_back(Vector::Zero(l.out()));
    s.v_bias.push_back(Vector::Zero(l.out()));
  }
  return s;
}

void adam_step(Network& net, const Gradients& grads, AdamState& state, double lr) {
  if (grads.weights.size() != net.depth() || state.m_weights.size() != net.depth()) {
    throw DomainError("adam_step: shape mismatch");
  }
  for (std::size_t i = 0; i < net.depth(); ++i) {
    if (grads.weights[i].rows() != net.layer(i).out() || grads.weights[i].cols() != net.layer(i).in() ||
        grads.bias[i].size() != net.layer(i).out()) {
      throw DomainError("adam_step: gradient shape mismatch at layer " + std::to_string(i));
    }
  }
  if (!grads.all_finite()) throw NumericError("adam_step: non-finite gradient");

  ++state.step;
  const double b1 = state.beta1, b2 = state.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  auto update = [&](auto& param, auto& m, auto& v, const auto& g) {
    m = b1 * m + (1.0 - b1) * g;
    v.array() = b2 * v.array() + (1.0 - b2) * g.array().square();
    param.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + state.epsilon);
  };
  for (std::size_t i = 0; i < net.depth(); ++i) {
    auto& l = net.layer(i);
    update(l.weights, state.m_weights[i], state.v_weights[i], grads.weights[i]);
    update(l.bias, state.m_bias[i], state.v_bias[i], grads.bias[i]);
  }
}

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-8});
  return std::abs(analytic - numeric) / denom;
}

std::vector<double*> parameter_slots(Network& net) {
  std::vector<double*> slots;
  slots.reserve(net.parameter_count());
  for (std::size_t i = 0; i < net.depth(); ++i) {
    auto& l = net.layer(i);
    for (Eigen::Index k = 0; k < l.weights.size(); ++k) slots.push_back(l.weights.data() + k);
    for (Eigen::Index k = 0; k < l.bias.size(); ++k) slots.push_back(l.bias.data() + k);
  }
  return slots;
}

std::vector<double> flatten(const Gradients& grads) {
  std::vector<double> out;
  for (std::size_t i = 0; i < grads.weights.size(); ++i) {
    out.insert(out.end(), grads.weights[i].data(), grads.weights[i].data() + grads.weights[i].size());
    out.insert(out.end(), grads.bias[i].data(), grads.bias[i].data() + grads.bias[i].size());
  }
  return out;
}

double max_relative_error(std::span<double* const> params, std::span<const double> analytic,
                          const std::function<double()>& loss, double h) {
  if (params.size() != analytic.size()) throw DomainError("max_relative_error: size mismatch");
  double worst = 0.0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    double& p = *params[i];
    const double saved = p;
    p = saved + h;
    const double up = loss();
    p = saved - h;
    const double down = loss();
    p = saved;
    worst = std::max(worst, relative_error(analytic[i], (up - down) / (2.0 * h)));
  }
  return worst;
}

double grad_check(const Network& net, const Vector& input, const LossHead& loss, double h) {
  Vector out = forward(net, Matrix(input)).col(0);
  Vector upstream(out.size());
  loss(out, &upstream);
  const auto fb = forward_backward(net, input, upstream);
  const auto analytic = flatten(fb.grads);

  Network probe = net;
  const auto slots = parameter_slots(probe);
  const Matrix x = input;
  return max_relative_error(slots, analytic, [&] { return loss(forward(probe, x).col(0), nullptr); }, h);
}

bool near_relu_kink(const Network& net, const Vector& input, double tol) {
  check_dims(net, input.size(), "near_relu_kink");
  Vector x = input;
  for (const auto& l : net.layers()) {
    Vector z = l.weights * x + l.bias;
    if (l.activation == Activation::Relu && (z.array().abs() < tol).any()) return true;
    Matrix zm = z;
    apply_activation(l.activation, zm);
    x = zm.col(0);
  }
  return false;
}

void write(binio::Writer& out, const Network& net) {
  out.bytes("BVAE");
  out.u32(kWeightFormatVersion);
  out.u32(static_cast<std::uint32_t>(net.depth()));
  for (const auto& l : net.layers()) {
    out.u32(static_cast<std::uint32_t>(l.out()));
    out.u32(static_cast<std::uint32_t>(l.in()));
    out.u32(static_cast<std::uint32_t>(l.activation));
    for (Eigen::Index r = 0; r < l.weights.rows(); ++r)
      for (Eigen::Index c = 0; c < l.weights.cols(); ++c) out.f64(l.weights(r, c));
    out.f64s(std::span(l.bias.data(), static_cast<std::size_t>(l.bias.size())));
  }
}

Network read(binio::Reader& in) {
  in.expect_magic("BVAE");
  const auto version = in.u32();
  if (version != kWeightFormatVersion) {
    throw FormatError(in.what() + ": unsupported weight format version " + std::to_string(version));
  }
  const auto count = in.u32();
  std::vector<Layer> layers;
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto rows = in.u32(), cols = in.u32(), act = in.u32();
    if (act > static_cast<std::uint32_t>(Activation::Sigmoid)) throw FormatError(in.what() + ": bad activation code");
    Layer l{Matrix(rows, cols), Vector(rows), static_cast<Activation>(act)};
    const auto w = in.f64s(static_cast<std::size_t>(rows) * cols);
    for (std::uint32_t r = 0; r < rows; ++r)
      for (std::uint32_t c = 0; c < cols; ++c) l.weights(r, c) = w[static_cast<std::size_t>(r) * cols + c];
    const auto b = in.f64s(rows);
    for (std::uint32_t r = 0; r < rows; ++r) l.bias(r) = b[r];
    layers.push_back(std::move(l));
  }
  try {
    return Network(std::move(layers));
  } catch (const DomainError& e) {
    throw FormatError(in.what() + ": " + e.what());
  }
}

void save(const std::filesystem::path& path, const Network& net) {
  binio::Writer w;
  write(w, net);
  w.save_with_checksum(path);
}

Network load(const std::filesystem::path& path) {
  auto r = binio::Reader::open_checked(path);
  Network net = read(r);
  r.expect_end();
  return net;
}

}  // namespace bvood::nn
