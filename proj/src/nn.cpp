#include "nn.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "errors.hpp"
#include "text.hpp"

namespace advimit::nn {

const char* to_string(Activation a) { return a == Activation::ReLU ? "relu" : "identity"; }

const char* to_string(Head h) {
  switch (h) {
    case Head::QValues: return "q";
    case Head::DuelingQValues: return "dueling";
    case Head::ActionLogits: return "logits";
  }
  return "?";
}

DenseLayer::DenseLayer(Matrix weights, Vector bias, Activation activation)
    : weights_(std::move(weights)), bias_(std::move(bias)), activation_(activation) {
  if (weights_.rows() == 0 || weights_.cols() == 0)
    throw ConfigError("dense layer needs non-empty weights");
  if (bias_.size() != weights_.rows())
    throw ConfigError("dense layer bias length does not match output dimension");
}

DenseLayer DenseLayer::glorot(std::size_t in, std::size_t out, Activation activation, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(in + out));
  Matrix w(static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(in));
  for (Eigen::Index c = 0; c < w.cols(); ++c)
    for (Eigen::Index r = 0; r < w.rows(); ++r) w(r, c) = rng.uniform_real(-limit, limit);
  return DenseLayer(std::move(w), Vector::Zero(static_cast<Eigen::Index>(out)), activation);
}

Network::Network(Head head, std::vector<DenseLayer> layers, std::size_t trunk_length,
                 std::optional<DropoutSpec> dropout)
    : head_(head), layers_(std::move(layers)), trunk_length_(trunk_length), dropout_(std::move(dropout)) {
  if (layers_.empty()) throw ConfigError("network needs at least one layer");
  if (head_ == Head::DuelingQValues) {
    const std::size_t rest = layers_.size() - std::min(trunk_length_, layers_.size());
    if (trunk_length_ == 0 || trunk_length_ >= layers_.size() || rest % 2 != 0)
      throw ConfigError("dueling network needs a trunk and two equal-length streams");
  } else if (trunk_length_ != layers_.size()) {
    throw ConfigError("chain network trunk must span all layers");
  }

  auto check_chain = [&](std::size_t begin, std::size_t end, std::size_t in) {
    for (std::size_t i = begin; i < end; ++i) {
      if (layers_[i].in_dim() != in)
        throw ConfigError("layer " + std::to_string(i) + " expects input " + std::to_string(layers_[i].in_dim()) +
                          " but receives " + std::to_string(in));
      in = layers_[i].out_dim();
    }
    return in;
  };
  const std::size_t trunk_out = check_chain(0, trunk_length_, layers_.front().in_dim());
  if (head_ == Head::DuelingQValues) {
    const std::size_t s = stream_length();
    const std::size_t v_out = check_chain(trunk_length_, trunk_length_ + s, trunk_out);
    check_chain(trunk_length_ + s, layers_.size(), trunk_out);
    if (v_out != 1) throw ConfigError("dueling value stream must end in one unit");
    if (layers_[trunk_length_ + s - 1].activation() != Activation::Identity ||
        layers_.back().activation() != Activation::Identity)
      throw ConfigError("dueling streams must end in identity layers");
    if (dropout_) throw ConfigError("dropout is not supported on dueling networks");
  } else if (layers_.back().activation() != Activation::Identity) {
    throw ConfigError("output layer must use identity activation");
  }

  if (dropout_) {
    if (!(dropout_->rate >= 0.0 && dropout_->rate <= 1.0)) throw ConfigError("dropout rate must lie in [0, 1]");
    for (std::size_t idx : dropout_->layers)
      if (idx >= layers_.size()) throw ConfigError("dropout placement index out of range");
  }
}

Network Network::create(const NetworkShape& shape, Rng& rng) {
  if (shape.input == 0 || shape.actions == 0) throw ConfigError("network input and action counts must be positive");
  std::vector<DenseLayer> layers;
  std::size_t in = shape.input;
  for (std::size_t width : shape.hidden) {
    if (width == 0) throw ConfigError("hidden width must be positive");
    layers.push_back(DenseLayer::glorot(in, width, Activation::ReLU, rng));
    in = width;
  }
  if (shape.head == Head::DuelingQValues) {
    if (shape.hidden.empty()) throw ConfigError("dueling network needs at least one hidden layer");
    const std::size_t trunk = layers.size();
    for (std::size_t out : {std::size_t{1}, shape.actions}) {
      if (shape.stream_hidden > 0) {
        layers.push_back(DenseLayer::glorot(in, shape.stream_hidden, Activation::ReLU, rng));
        layers.push_back(DenseLayer::glorot(shape.stream_hidden, out, Activation::Identity, rng));
      } else {
        layers.push_back(DenseLayer::glorot(in, out, Activation::Identity, rng));
      }
    }
    return Network(shape.head, std::move(layers), trunk, shape.dropout);
  }
  layers.push_back(DenseLayer::glorot(in, shape.actions, Activation::Identity, rng));
  const std::size_t n = layers.size();
  return Network(shape.head, std::move(layers), n, shape.dropout);
}

std::size_t Network::output_dim() const { return layers_.back().out_dim(); }

std::size_t Network::stream_length() const {
  return head_ == Head::DuelingQValues ? (layers_.size() - trunk_length_) / 2 : 0;
}

std::size_t Network::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers_) n += l.parameter_count();
  return n;
}

DropoutMasks sample_masks(const Network& net, std::size_t batch, Rng& rng) {
  DropoutMasks out;
  if (!net.dropout()) return out;
  const double rate = net.dropout()->rate;
  for (std::size_t idx : net.dropout()->layers) {
    const auto& layer = net.layers()[idx];
    Matrix m(static_cast<Eigen::Index>(layer.in_dim()), static_cast<Eigen::Index>(batch));
    for (Eigen::Index c = 0; c < m.cols(); ++c)
      for (Eigen::Index r = 0; r < m.rows(); ++r) m(r, c) = rng.uniform() < rate ? 0.0 : 1.0;
    out.masks.push_back(std::move(m));
  }
  return out;
}

namespace {

// Per-layer cache for backprop: the (masked) input each layer saw and its
// pre-activation.
struct Trace {
  std::vector<Matrix> inputs;
  std::vector<Matrix> pre;
};

// Position of layer `idx` in the dropout placement list, or -1.
int dropout_slot(const Network& net, std::size_t idx) {
  if (!net.dropout()) return -1;
  const auto& l = net.dropout()->layers;
  const auto it = std::find(l.begin(), l.end(), idx);
  return it == l.end() ? -1 : static_cast<int>(it - l.begin());
}

Matrix apply_dropout(const Network& net, std::size_t idx, Matrix x, const DropoutMasks* masks) {
  const int slot = dropout_slot(net, idx);
  if (slot < 0) return x;
  if (masks) {
    const Matrix& m = masks->masks.at(static_cast<std::size_t>(slot));
    if (m.rows() != x.rows() || m.cols() != x.cols()) throw ConfigError("dropout mask shape mismatch");
    return x.cwiseProduct(m);
  }
  return x * (1.0 - net.dropout()->rate);
}

Matrix run_chain(const Network& net, std::size_t begin, std::size_t end, Matrix x, const DropoutMasks* masks,
                 Trace* trace) {
  for (std::size_t i = begin; i < end; ++i) {
    const auto& layer = net.layers()[i];
    x = apply_dropout(net, i, std::move(x), masks);
    Matrix z = (layer.weights() * x).colwise() + layer.bias();
    if (trace) {
      trace->inputs[i] = x;
      trace->pre[i] = z;
    }
    x = layer.activation() == Activation::ReLU ? Matrix(z.cwiseMax(0.0)) : std::move(z);
  }
  return x;
}

Matrix run(const Network& net, const Matrix& inputs, const DropoutMasks* masks, Trace* trace) {
  if (static_cast<std::size_t>(inputs.rows()) != net.input_dim())
    throw ConfigError("input dimension " + std::to_string(inputs.rows()) + " does not match network input " +
                      std::to_string(net.input_dim()));
  if (masks && net.dropout() && masks->masks.size() != net.dropout()->layers.size())
    throw ConfigError("dropout mask count mismatch");
  if (trace) {
    trace->inputs.assign(net.layers().size(), Matrix());
    trace->pre.assign(net.layers().size(), Matrix());
  }
  Matrix h = run_chain(net, 0, net.trunk_length(), inputs, masks, trace);
  if (net.head() != Head::DuelingQValues) return h;

  const std::size_t t = net.trunk_length();
  const std::size_t s = net.stream_length();
  const Matrix v = run_chain(net, t, t + s, h, masks, trace);
  Matrix a = run_chain(net, t + s, t + 2 * s, h, masks, trace);
  const Eigen::RowVectorXd mean = a.colwise().mean();
  a.rowwise() -= mean;
  a.rowwise() += v.row(0);
  return a;
}

// Backprop d(output of layer end-1) through layers [begin, end); returns
// d(input of layer begin) before that layer's dropout mask is undone.
Matrix back_chain(const Network& net, std::size_t begin, std::size_t end, Matrix dy, const Trace& trace,
                  const DropoutMasks* masks, GradientSet& grads) {
  for (std::size_t i = end; i-- > begin;) {
    const auto& layer = net.layers()[i];
    if (layer.activation() == Activation::ReLU)
      dy = dy.cwiseProduct((trace.pre[i].array() > 0.0).cast<double>().matrix());
    grads.layers[i].weights.noalias() += dy * trace.inputs[i].transpose();
    grads.layers[i].bias += dy.rowwise().sum();
    Matrix dx = layer.weights().transpose() * dy;
    const int slot = dropout_slot(net, i);
    if (slot >= 0) {
      if (masks)
        dx = dx.cwiseProduct(masks->masks[static_cast<std::size_t>(slot)]);
      else
        dx *= 1.0 - net.dropout()->rate;
    }
    dy = std::move(dx);
  }
  return dy;
}

GradientSet backward(const Network& net, const Trace& trace, const Matrix& d_out, const DropoutMasks* masks) {
  GradientSet grads = GradientSet::zeros_like(net);
  if (net.head() != Head::DuelingQValues) {
    back_chain(net, 0, net.layers().size(), d_out, trace, masks, grads);
    return grads;
  }
  const std::size_t t = net.trunk_length();
  const std::size_t s = net.stream_length();
  const Matrix dv = d_out.colwise().sum();
  Matrix da = d_out;
  const Eigen::RowVectorXd mean = d_out.colwise().mean();
  da.rowwise() -= mean;
  Matrix dh = back_chain(net, t, t + s, dv, trace, masks, grads);
  dh += back_chain(net, t + s, t + 2 * s, da, trace, masks, grads);
  back_chain(net, 0, t, std::move(dh), trace, masks, grads);
  return grads;
}

void check_actions(std::span<const int> actions, std::size_t n_actions, std::size_t batch) {
  if (actions.size() != batch) throw ConfigError("action count does not match batch size");
  for (int a : actions)
    if (a < 0 || static_cast<std::size_t>(a) >= n_actions)
      throw ConfigError("action index " + std::to_string(a) + " out of range");
}

}  // namespace

Matrix forward(const Network& net, const Matrix& inputs, ForwardMode mode, Rng* rng) {
  if (mode == ForwardMode::StochasticDropout) {
    if (!net.dropout()) throw ContractViolation("stochastic forward requires a dropout spec");
    if (!rng) throw ContractViolation("stochastic forward requires a random source");
    const DropoutMasks masks = sample_masks(net, static_cast<std::size_t>(inputs.cols()), *rng);
    return run(net, inputs, &masks, nullptr);
  }
  return run(net, inputs, nullptr, nullptr);
}

Vector forward(const Network& net, const Vector& input, ForwardMode mode, Rng* rng) {
  return forward(net, Matrix(input), mode, rng).col(0);
}

Matrix forward_masked(const Network& net, const Matrix& inputs, const DropoutMasks& masks) {
  return run(net, inputs, &masks, nullptr);
}

GradientSet GradientSet::zeros_like(const Network& net) {
  GradientSet g;
  g.layers.reserve(net.layers().size());
  for (const auto& l : net.layers())
    g.layers.push_back({Matrix::Zero(l.weights().rows(), l.weights().cols()), Vector::Zero(l.bias().size())});
  return g;
}

bool GradientSet::congruent_with(const Network& net) const {
  if (layers.size() != net.layers().size()) return false;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = net.layers()[i];
    if (layers[i].weights.rows() != l.weights().rows() || layers[i].weights.cols() != l.weights().cols() ||
        layers[i].bias.size() != l.bias().size())
      return false;
  }
  return true;
}

bool GradientSet::all_finite() const {
  return std::all_of(layers.begin(), layers.end(),
                     [](const LayerGradient& g) { return g.weights.allFinite() && g.bias.allFinite(); });
}

Vector softmax(const Vector& logits) {
  const Vector e = (logits.array() - logits.maxCoeff()).exp().matrix();
  return e / e.sum();
}

int argmax(const Vector& values) {
  int best = 0;
  for (Eigen::Index i = 1; i < values.size(); ++i)
    if (values[i] > values[best]) best = static_cast<int>(i);
  return best;
}

LossAndGrad nll_loss_and_grad(const Network& net, const Matrix& states, std::span<const int> actions,
                              const DropoutMasks* masks) {
  if (net.head() != Head::ActionLogits) throw ContractViolation("NLL loss requires a logits head");
  const auto n = static_cast<std::size_t>(states.cols());
  if (n == 0) throw ContractViolation("empty batch");
  check_actions(actions, net.output_dim(), n);

  Trace trace;
  const Matrix logits = run(net, states, masks, &trace);
  Matrix d_out(logits.rows(), logits.cols());
  double loss = 0.0;
  for (Eigen::Index c = 0; c < logits.cols(); ++c) {
    const double mx = logits.col(c).maxCoeff();
    const Vector e = (logits.col(c).array() - mx).exp().matrix();
    const double z = e.sum();
    const int a = actions[static_cast<std::size_t>(c)];
    loss += -(logits(a, c) - mx - std::log(z));
    d_out.col(c) = e / z;
    d_out(a, c) -= 1.0;
  }
  d_out /= static_cast<double>(n);
  return {loss / static_cast<double>(n), backward(net, trace, d_out, masks)};
}

LossAndGrad td_loss_and_grad(const Network& net, const Matrix& states, std::span<const int> actions,
                             std::span<const double> targets, const DropoutMasks* masks) {
  if (net.head() == Head::ActionLogits) throw ContractViolation("TD loss requires a Q-value head");
  const auto n = static_cast<std::size_t>(states.cols());
  if (n == 0) throw ContractViolation("empty batch");
  check_actions(actions, net.output_dim(), n);
  if (targets.size() != n) throw ConfigError("target count does not match batch size");

  Trace trace;
  const Matrix q = run(net, states, masks, &trace);
  Matrix d_out = Matrix::Zero(q.rows(), q.cols());
  double loss = 0.0;
  for (Eigen::Index c = 0; c < q.cols(); ++c) {
    const int a = actions[static_cast<std::size_t>(c)];
    const double residual = q(a, c) - targets[static_cast<std::size_t>(c)];
    loss += residual * residual;
    d_out(a, c) = 2.0 * residual / static_cast<double>(n);
  }
  return {loss / static_cast<double>(n), backward(net, trace, d_out, masks)};
}

OptimizerState::OptimizerState(const Network& net, double learning_rate, double beta1, double beta2, double epsilon)
    : learning_rate_(learning_rate),
      beta1_(beta1),
      beta2_(beta2),
      epsilon_(epsilon),
      first_(GradientSet::zeros_like(net)),
      second_(GradientSet::zeros_like(net)) {
  if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
}

void optimizer_apply(OptimizerState& state, Network& net, const GradientSet& grads) {
  if (!grads.congruent_with(net) || !state.first_.congruent_with(net))
    throw ConfigError("gradient shapes do not match the network");
  if (!grads.all_finite()) throw NumericalError("non-finite gradient entry");

  ++state.step_;
  const double b1 = state.beta1_;
  const double b2 = state.beta2_;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step_));
  const double lr = state.learning_rate_;
  const double eps = state.epsilon_;

  auto update = [&](auto param, auto& m, auto& v, const auto& g) {
    m = b1 * m + (1.0 - b1) * g;
    v = b2 * v + (1.0 - b2) * g.cwiseAbs2();
    param.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
  };
  auto layers = net.mutable_layers();
  for (std::size_t i = 0; i < layers.size(); ++i) {
    update(layers[i].mutable_weights(), state.first_.layers[i].weights, state.second_.layers[i].weights,
           grads.layers[i].weights);
    update(layers[i].mutable_bias(), state.first_.layers[i].bias, state.second_.layers[i].bias,
           grads.layers[i].bias);
  }
}

// --- checkpoints -----------------------------------------------------------

void save_network(std::ostream& out, const Network& net) {
  out << "advimit-network 1\n";
  out << "head " << to_string(net.head()) << "\n";
  out << "layers " << net.layers().size() << "\n";
  out << "trunk " << net.trunk_length() << "\n";
  if (net.dropout()) {
    out << "dropout " << text::format_double(net.dropout()->rate);
    for (std::size_t idx : net.dropout()->layers) out << ' ' << idx;
    out << "\n";
  } else {
    out << "dropout none\n";
  }
  for (const auto& l : net.layers())
    out << "layer " << l.in_dim() << ' ' << l.out_dim() << ' ' << to_string(l.activation()) << "\n";
  out << "params\n";
  for (const auto& l : net.layers()) {
    for (Eigen::Index r = 0; r < l.weights().rows(); ++r) {
      for (Eigen::Index c = 0; c < l.weights().cols(); ++c) {
        if (c) out << ' ';
        out << text::format_double(l.weights()(r, c));
      }
      out << "\n";
    }
    for (Eigen::Index r = 0; r < l.bias().size(); ++r) {
      if (r) out << ' ';
      out << text::format_double(l.bias()[r]);
    }
    out << "\n";
  }
}

namespace {

std::vector<std::string_view> expect_line(std::istream& in, std::string& line, std::string_view key) {
  if (!std::getline(in, line)) throw ConfigError("checkpoint truncated before '" + std::string(key) + "'");
  auto toks = text::split_ws(text::trim(line));
  if (toks.empty() || toks[0] != key)
    throw ConfigError("checkpoint: expected '" + std::string(key) + "', got '" + line + "'");
  return toks;
}

Head parse_head(std::string_view s) {
  if (s == "q") return Head::QValues;
  if (s == "dueling") return Head::DuelingQValues;
  if (s == "logits") return Head::ActionLogits;
  throw ConfigError("checkpoint: unknown head '" + std::string(s) + "'");
}

}  // namespace

Network load_network(std::istream& in) {
  std::string line;
  auto toks = expect_line(in, line, "advimit-network");
  if (toks.size() != 2 || toks[1] != "1") throw ConfigError("checkpoint: unsupported version");
  toks = expect_line(in, line, "head");
  if (toks.size() != 2) throw ConfigError("checkpoint: malformed head line");
  const Head head = parse_head(toks[1]);
  toks = expect_line(in, line, "layers");
  const auto n_layers = static_cast<std::size_t>(text::parse_long(toks.at(1), "layers"));
  toks = expect_line(in, line, "trunk");
  const auto trunk = static_cast<std::size_t>(text::parse_long(toks.at(1), "trunk"));
  std::optional<DropoutSpec> dropout;
  toks = expect_line(in, line, "dropout");
  if (toks.size() < 2) throw ConfigError("checkpoint: malformed dropout line");
  if (toks[1] != "none") {
    DropoutSpec d;
    d.rate = text::parse_double(toks[1], "dropout");
    for (std::size_t i = 2; i < toks.size(); ++i)
      d.layers.push_back(static_cast<std::size_t>(text::parse_long(toks[i], "dropout")));
    dropout = d;
  }
  struct Dims {
    std::size_t in, out;
    Activation act;
  };
  std::vector<Dims> dims;
  for (std::size_t i = 0; i < n_layers; ++i) {
    toks = expect_line(in, line, "layer");
    if (toks.size() != 4) throw ConfigError("checkpoint: malformed layer line");
    Activation act;
    if (toks[3] == "relu")
      act = Activation::ReLU;
    else if (toks[3] == "identity")
      act = Activation::Identity;
    else
      throw ConfigError("checkpoint: unknown activation '" + std::string(toks[3]) + "'");
    dims.push_back({static_cast<std::size_t>(text::parse_long(toks[1], "layer")),
                    static_cast<std::size_t>(text::parse_long(toks[2], "layer")), act});
  }
  expect_line(in, line, "params");

  auto read_row = [&](std::size_t expected) {
    if (!std::getline(in, line)) throw ConfigError("checkpoint truncated in parameters");
    const auto vals = text::split_ws(text::trim(line));
    if (vals.size() != expected) throw ConfigError("checkpoint: parameter row has wrong length");
    Vector row(static_cast<Eigen::Index>(expected));
    for (std::size_t i = 0; i < expected; ++i) row[static_cast<Eigen::Index>(i)] = text::parse_double(vals[i], "param");
    return row;
  };
  std::vector<DenseLayer> layers;
  for (const auto& d : dims) {
    Matrix w(static_cast<Eigen::Index>(d.out), static_cast<Eigen::Index>(d.in));
    for (std::size_t r = 0; r < d.out; ++r) w.row(static_cast<Eigen::Index>(r)) = read_row(d.in).transpose();
    Vector b = read_row(d.out);
    layers.emplace_back(std::move(w), std::move(b), d.act);
  }
  return Network(head, std::move(layers), trunk, dropout);
}

void save_network(const std::string& path, const Network& net) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write checkpoint " + path);
  save_network(out, net);
}

Network load_network(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read checkpoint " + path);
  return load_network(in);
}

}  // namespace advimit::nn
