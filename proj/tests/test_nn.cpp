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


#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "bvood/error.hpp"
#include "bvood/nn.hpp"
#include "bvood/rng.hpp"

using namespace bvood;
using nn::Activation;
using nn::Matrix;
using nn::Vector;

namespace {

double dot_output(const nn::Network& net, const Vector& x, const Vector& upstream) {
  return nn::forward(net, Matrix(x)).col(0).dot(upstream);
}

// Worst relative error of forward_backward against central differences of upstream . f(x).
double fd_error(nn::Network net, const Vector& x, const Vector& upstream, double h = 1e-4) {
  const auto fb = nn::forward_backward(net, x, upstream);
  double worst = 0.0;
  auto compare = [&](double& p, double analytic) {
    const double keep = p;
    p = keep + h;
    const double up = dot_output(net, x, upstream);
    p = keep - h;
    const double down = dot_output(net, x, upstream);
    p = keep;
    const double numeric = (up - down) / (2.0 * h);
    const double denom = std::max({std::abs(numeric), std::abs(analytic), 1e-8});
    worst = std::max(worst, std::abs(numeric - analytic) / denom);
  };
  for (std::size_t l = 0; l < net.depth(); ++l) {
    auto& layer = net.layer(l);
    for (Eigen::Index i = 0; i < layer.weights.size(); ++i) compare(layer.weights.data()[i], fb.grads.weights[l].data()[i]);
    for (Eigen::Index i = 0; i < layer.bias.size(); ++i) compare(layer.bias[i], fb.grads.bias[l][i]);
  }
  return worst;
}

Vector random_vector(Rng& rng, Eigen::Index n) {
  Vector v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = rng.uniform(-1.0, 1.0);
  return v;
}

}  // namespace

TEST_CASE("identity layer passes values and gradients through") {
  nn::Layer l{Matrix::Identity(3, 3), Vector::Zero(3), Activation::Identity};
  const nn::Network net({l});
  const Vector x = Vector::LinSpaced(3, -1.0, 2.0);
  const Vector up = Vector::LinSpaced(3, 0.5, 1.5);
  const auto fb = nn::forward_backward(net, x, up);
  CHECK(fb.output.isApprox(x));
  CHECK(fb.input_grad.isApprox(up));
}

TEST_CASE("linear layer weight gradient is an outer product") {
  Rng rng(3);
  nn::Layer l{Matrix::Random(2, 4), Vector::Random(2), Activation::Identity};
  const nn::Network net({l});
  const Vector x = random_vector(rng, 4);
  const Vector up = random_vector(rng, 2);
  const auto fb = nn::forward_backward(net, x, up);
  const Matrix expected = up * x.transpose();
  CHECK((fb.grads.weights[0] - expected).cwiseAbs().maxCoeff() < 1e-14);
  CHECK((fb.grads.bias[0] - up).cwiseAbs().maxCoeff() < 1e-14);
  CHECK((fb.input_grad - l.weights.transpose() * up).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("random three-layer nets match central differences") {
  Rng rng(17);
  for (int trial = 0; trial < 5; ++trial) {
    const auto net = nn::Network::glorot({6, 5, 4, 3}, {Activation::Sigmoid, Activation::Relu, Activation::Identity},
                                         100 + trial);
    const Vector x = random_vector(rng, 6);
    if (nn::near_relu_kink(net, x, 1e-3)) continue;
    CHECK(fd_error(net, x, random_vector(rng, 3)) < 1e-4);
  }
}

TEST_CASE("batched backward sums per-sample gradients") {
  const auto net = nn::Network::glorot({3, 4, 2}, {Activation::Sigmoid, Activation::Identity}, 5);
  Rng rng(2);
  Matrix xb(3, 2);
  xb.col(0) = random_vector(rng, 3);
  xb.col(1) = random_vector(rng, 3);
  Matrix up(2, 2);
  up.col(0) = random_vector(rng, 2);
  up.col(1) = random_vector(rng, 2);
  nn::Tape tape;
  nn::forward(net, xb, tape);
  auto g = nn::Gradients::zeros_like(net);
  nn::backward(net, tape, up, g);
  const auto a = nn::forward_backward(net, xb.col(0), up.col(0));
  const auto b = nn::forward_backward(net, xb.col(1), up.col(1));
  for (std::size_t l = 0; l < net.depth(); ++l) {
    CHECK((g.weights[l] - a.grads.weights[l] - b.grads.weights[l]).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((g.bias[l] - a.grads.bias[l] - b.grads.bias[l]).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("forward_rows matches the full forward pass") {
  const auto net = nn::Network::glorot({5, 6, 4}, {Activation::Relu, Activation::Identity}, 9);
  Rng rng(4);
  const Vector x = random_vector(rng, 5);
  const Vector full = nn::forward(net, Matrix(x)).col(0);
  const std::vector<int> rows{3, 1};
  const Vector part = nn::forward_rows(net, x, rows);
  REQUIRE(part.size() == 2);
  CHECK(part[0] == doctest::Approx(full[3]).epsilon(1e-14));
  CHECK(part[1] == doctest::Approx(full[1]).epsilon(1e-14));
}

TEST_CASE("adam with zero gradient leaves parameters alone") {
  auto net = nn::Network::glorot({3, 2}, {Activation::Identity}, 1);
  const auto before = net;
  auto state = nn::AdamState::for_network(net);
  nn::adam_step(net, nn::Gradients::zeros_like(net), state, 0.01);
  CHECK(net == before);
  CHECK(state.step == 1);
}

TEST_CASE("adam first step moves by about lr") {
  nn::Layer l{Matrix::Constant(1, 1, 0.5), Vector::Zero(1), Activation::Identity};
  nn::Network net({l});
  auto state = nn::AdamState::for_network(net);
  auto g = nn::Gradients::zeros_like(net);
  g.weights[0](0, 0) = 0.3;
  const double lr = 0.01;
  nn::adam_step(net, g, state, lr);
  // m_hat = g, v_hat = g^2 at t = 1
  const double expected = 0.5 - lr * 0.3 / (std::sqrt(0.09) + state.epsilon);
  CHECK(net.layer(0).weights(0, 0) == doctest::Approx(expected).epsilon(1e-12));
  CHECK(net.layer(0).weights(0, 0) == doctest::Approx(0.5 - lr).epsilon(1e-6));
  CHECK(net.layer(0).bias[0] == 0.0);
}

TEST_CASE("adam descends against a constant gradient") {
  nn::Layer l{Matrix::Constant(1, 1, 0.0), Vector::Zero(1), Activation::Identity};
  nn::Network net({l});
  auto state = nn::AdamState::for_network(net);
  auto g = nn::Gradients::zeros_like(net);
  g.weights[0](0, 0) = -2.0;
  nn::adam_step(net, g, state, 0.05);
  const double first = net.layer(0).weights(0, 0);
  nn::adam_step(net, g, state, 0.05);
  CHECK(first > 0.0);
  CHECK(net.layer(0).weights(0, 0) > first);
}

TEST_CASE("grad_check on exact and degenerate cases") {
  auto squared = [](const Vector& target) {
    return nn::LossHead([target](const Vector& out, Vector* grad) {
      const Vector d = out - target;
      if (grad) *grad = 2.0 * d;
      return d.squaredNorm();
    });
  };
  const auto linear = nn::Network::glorot({4, 3}, {Activation::Identity}, 12);
  CHECK(nn::grad_check(linear, Vector::LinSpaced(4, -1, 1), squared(Vector::Ones(3))) < 1e-8);

  nn::Layer z{Matrix::Zero(2, 3), Vector::Zero(2), Activation::Identity};
  const nn::Network zero({z});
  CHECK(nn::grad_check(zero, Vector::Zero(3), squared(Vector::Zero(2))) == 0.0);

  const auto sig = nn::Network::glorot({5, 4, 3}, {Activation::Sigmoid, Activation::Sigmoid}, 21);
  CHECK(nn::grad_check(sig, Vector::LinSpaced(5, -2, 2), squared(Vector::Constant(3, 0.3))) < 1e-4);
}

TEST_CASE("network rejects mismatched layers") {
  nn::Layer a{Matrix::Zero(3, 2), Vector::Zero(3), Activation::Relu};
  nn::Layer b{Matrix::Zero(1, 4), Vector::Zero(1), Activation::Identity};
  CHECK_THROWS_AS(nn::Network({a, b}), DomainError);
}

TEST_CASE("weights roundtrip and corrupted magic") {
  const auto dir = std::filesystem::temp_directory_path() / "bvood_nn_test";
  std::filesystem::create_directories(dir);
  const auto path = dir / "net.bin";
  const auto net = nn::Network::glorot({7, 5, 2}, {Activation::Relu, Activation::Sigmoid}, 33);
  nn::save(path, net);
  CHECK(nn::load(path) == net);

  std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
  f.seekp(0);
  f.put('X');
  f.close();
  CHECK_THROWS_AS(nn::load(path), FormatError);
  std::filesystem::remove_all(dir);
}
