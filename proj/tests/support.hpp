#pragma once

#include <cmath>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "env.hpp"
#include "nn.hpp"
#include "random.hpp"

namespace support {

using advimit::Rng;
using advimit::nn::Matrix;
using advimit::nn::Network;
using advimit::nn::Vector;

inline advimit::env::EnvSpec grid_spec(std::vector<std::string> rows, double sticky = 0.0, int noop_min = 0,
                                       int noop_max = 0) {
  advimit::env::EnvSpec s;
  s.grid = std::move(rows);
  s.sticky_p = sticky;
  s.noop_min = noop_min;
  s.noop_max = noop_max;
  return s;
}

inline advimit::env::EnvSpec open5(double sticky = 0.0) {
  return grid_spec({"S....", ".....", ".....", ".....", "....G"}, sticky);
}

inline Matrix random_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng, double scale = 1.0) {
  Matrix m(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) m(i, j) = rng.uniform_real(-scale, scale);
  return m;
}

/// Replaces every parameter with a fresh uniform draw; biases included so that
/// gradients are not trivially zero.
inline void randomize(Network& net, Rng& rng, double scale = 0.8) {
  for (auto& layer : net.mutable_layers()) {
    auto w = layer.mutable_weights();
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = rng.uniform_real(-scale, scale);
    auto b = layer.mutable_bias();
    for (Eigen::Index i = 0; i < b.size(); ++i) b[i] = rng.uniform_real(-scale, scale);
  }
}

/// Largest |analytic - numeric| / max(|analytic|, |numeric|, floor) over all
/// parameters, numeric by central differences with step h.
inline double max_fd_error(Network& net, const std::function<double()>& loss,
                           const advimit::nn::GradientSet& analytic, double h = 1e-5, double floor = 1e-6) {
  double worst = 0.0;
  auto layers = net.mutable_layers();
  auto probe = [&](double* p, double a) {
    const double keep = *p;
    *p = keep + h;
    const double up = loss();
    *p = keep - h;
    const double down = loss();
    *p = keep;
    const double n = (up - down) / (2 * h);
    worst = std::max(worst, std::abs(a - n) / std::max({std::abs(a), std::abs(n), floor}));
  };
  for (std::size_t l = 0; l < layers.size(); ++l) {
    auto w = layers[l].mutable_weights();
    for (Eigen::Index i = 0; i < w.size(); ++i) probe(w.data() + i, analytic.layers[l].weights.data()[i]);
    auto b = layers[l].mutable_bias();
    for (Eigen::Index i = 0; i < b.size(); ++i) probe(b.data() + i, analytic.layers[l].bias[i]);
  }
  return worst;
}

inline std::vector<double> flat_parameters(const Network& net) {
  std::vector<double> out;
  for (const auto& l : net.layers()) {
    out.insert(out.end(), l.weights().data(), l.weights().data() + l.weights().size());
    out.insert(out.end(), l.bias().data(), l.bias().data() + l.bias().size());
  }
  return out;
}

}  // namespace support
