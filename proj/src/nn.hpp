#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "random.hpp"

namespace advimit::nn {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

enum class Activation { ReLU, Identity };
enum class Head { QValues, DuelingQValues, ActionLogits };
enum class ForwardMode { Deterministic, StochasticDropout };

const char* to_string(Activation a);
const char* to_string(Head h);

/// y = f(W x + b). Dimensions are fixed at construction; parameter values are
/// reachable mutably through fixed-size maps only.
class DenseLayer {
 public:
  DenseLayer(Matrix weights, Vector bias, Activation activation);

  /// Uniform in +-sqrt(6 / (fan_in + fan_out)), zero bias.
  static DenseLayer glorot(std::size_t in, std::size_t out, Activation activation, Rng& rng);

  std::size_t in_dim() const { return static_cast<std::size_t>(weights_.cols()); }
  std::size_t out_dim() const { return static_cast<std::size_t>(weights_.rows()); }
  Activation activation() const { return activation_; }

  const Matrix& weights() const { return weights_; }
  const Vector& bias() const { return bias_; }
  Eigen::Map<Matrix> mutable_weights() { return {weights_.data(), weights_.rows(), weights_.cols()}; }
  Eigen::Map<Vector> mutable_bias() { return {bias_.data(), bias_.size()}; }

  std::size_t parameter_count() const { return static_cast<std::size_t>(weights_.size() + bias_.size()); }

 private:
  Matrix weights_;
  Vector bias_;
  Activation activation_;
};

/// rate is the probability of dropping a unit. `layers` lists the indices of
/// the layers whose *input* is masked (index 0 is the raw observation).
struct DropoutSpec {
  double rate = 0.0;
  std::vector<std::size_t> layers;
};

struct NetworkShape {
  std::size_t input = 0;
  std::vector<std::size_t> hidden;
  /// Hidden width of each dueling stream; 0 means the streams are linear.
  std::size_t stream_hidden = 0;
  std::size_t actions = 0;
  Head head = Head::QValues;
  std::optional<DropoutSpec> dropout;
};

/// Feed-forward network with one of three heads.
///
/// Layer layout: for QValues and ActionLogits the layers form a single chain.
/// For DuelingQValues the first `trunk_length` layers are shared, followed by
/// the value stream and then the advantage stream, each `stream_length` long.
/// Dueling aggregation is Q = V + A - mean(A).
class Network {
 public:
  Network(Head head, std::vector<DenseLayer> layers, std::size_t trunk_length,
          std::optional<DropoutSpec> dropout = std::nullopt);

  static Network create(const NetworkShape& shape, Rng& rng);

  Head head() const { return head_; }
  std::size_t input_dim() const { return layers_.front().in_dim(); }
  std::size_t output_dim() const;
  std::size_t trunk_length() const { return trunk_length_; }
  std::size_t stream_length() const;

  const std::vector<DenseLayer>& layers() const { return layers_; }
  std::span<DenseLayer> mutable_layers() { return layers_; }
  const std::optional<DropoutSpec>& dropout() const { return dropout_; }

  std::size_t parameter_count() const;

 private:
  Head head_;
  std::vector<DenseLayer> layers_;
  std::size_t trunk_length_;
  std::optional<DropoutSpec> dropout_;
};

/// Bernoulli keep-masks, one (in_dim x batch) 0/1 matrix per entry of
/// DropoutSpec::layers, in the same order.
struct DropoutMasks {
  std::vector<Matrix> masks;
};

DropoutMasks sample_masks(const Network& net, std::size_t batch, Rng& rng);

/// Batched forward pass; columns of `inputs` are observations. Deterministic
/// mode scales masked inputs by (1 - rate); StochasticDropout draws fresh
/// masks from `rng` (required).
Matrix forward(const Network& net, const Matrix& inputs, ForwardMode mode, Rng* rng = nullptr);
Vector forward(const Network& net, const Vector& input, ForwardMode mode, Rng* rng = nullptr);

/// Forward pass under explicitly pinned masks.
Matrix forward_masked(const Network& net, const Matrix& inputs, const DropoutMasks& masks);

struct LayerGradient {
  Matrix weights;
  Vector bias;
};

struct GradientSet {
  std::vector<LayerGradient> layers;

  static GradientSet zeros_like(const Network& net);
  bool congruent_with(const Network& net) const;
  bool all_finite() const;
};

struct LossAndGrad {
  double loss = 0.0;
  GradientSet grads;
};

/// Mean negative log-likelihood of the advised actions under softmax(logits).
/// With `masks` the pass uses those dropout masks; without, deterministic mode.
LossAndGrad nll_loss_and_grad(const Network& net, const Matrix& states, std::span<const int> actions,
                              const DropoutMasks* masks = nullptr);

/// Mean squared error between Q(s, a) and the supplied targets.
LossAndGrad td_loss_and_grad(const Network& net, const Matrix& states, std::span<const int> actions,
                             std::span<const double> targets, const DropoutMasks* masks = nullptr);

Vector softmax(const Vector& logits);

/// Lowest index among the maxima.
int argmax(const Vector& values);

/// Adam moments and step count for one network.
class OptimizerState {
 public:
  OptimizerState(const Network& net, double learning_rate, double beta1 = 0.9, double beta2 = 0.999,
                 double epsilon = 1e-8);

  long step_count() const { return step_; }
  double learning_rate() const { return learning_rate_; }

  friend void optimizer_apply(OptimizerState& state, Network& net, const GradientSet& grads);

 private:
  double learning_rate_;
  double beta1_;
  double beta2_;
  double epsilon_;
  long step_ = 0;
  GradientSet first_;
  GradientSet second_;
};

/// One Adam update. Throws NumericalError on non-finite gradients.
void optimizer_apply(OptimizerState& state, Network& net, const GradientSet& grads);

// Checkpoints: text, parameters printed with 17 significant digits.
void save_network(std::ostream& out, const Network& net);
Network load_network(std::istream& in);
void save_network(const std::string& path, const Network& net);
Network load_network(const std::string& path);

}  // namespace advimit::nn
