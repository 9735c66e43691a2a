#include "dqn.hpp"

#include <cmath>
#include <fstream>

#include "errors.hpp"
#include "text.hpp"

namespace advimit::dqn {

ReplayMemory::ReplayMemory(std::size_t capacity, std::size_t initial_size)
    : capacity_(capacity), initial_size_(initial_size) {
  if (capacity == 0) throw ConfigError("replay capacity must be positive");
  if (initial_size > capacity) throw ConfigError("replay initial size exceeds capacity");
  buffer_.reserve(std::min<std::size_t>(capacity, 1 << 16));
}

void ReplayMemory::push(Transition t) {
  if (buffer_.size() < capacity_) {
    buffer_.push_back(std::move(t));
  } else {
    buffer_[next_] = std::move(t);
  }
  next_ = (next_ + 1) % capacity_;
}

const Transition& ReplayMemory::at(std::size_t i) const {
  if (i >= buffer_.size()) throw ContractViolation("replay index out of range");
  const std::size_t oldest = buffer_.size() < capacity_ ? 0 : next_;
  return buffer_[(oldest + i) % buffer_.size()];
}

std::vector<const Transition*> ReplayMemory::sample(std::size_t n, Rng& rng) const {
  if (buffer_.empty()) throw ContractViolation("sampling from empty replay memory");
  std::vector<const Transition*> out(n);
  for (auto& p : out) p = &buffer_[rng.uniform_index(buffer_.size())];
  return out;
}

EpsilonSchedule::EpsilonSchedule(double initial, double final, long decay_steps)
    : initial_(initial), final_(final), decay_steps_(decay_steps) {
  if (!(initial >= 0.0 && initial <= 1.0 && final >= 0.0 && final <= 1.0))
    throw ConfigError("epsilon values must lie in [0, 1]");
  if (final > initial) throw ConfigError("epsilon schedule must be non-increasing");
  if (decay_steps < 0) throw ConfigError("epsilon decay steps must be non-negative");
}

double EpsilonSchedule::value(long step) const {
  if (step >= decay_steps_) return final_;
  if (step <= 0) return initial_;
  const double frac = static_cast<double>(step) / static_cast<double>(decay_steps_);
  return initial_ + (final_ - initial_) * frac;
}

namespace {

nn::Network make_q_network(const AgentConfig& c, std::size_t obs, std::size_t actions, Rng& rng) {
  nn::NetworkShape shape;
  shape.input = obs;
  shape.hidden = c.hidden;
  shape.stream_hidden = c.stream_hidden;
  shape.actions = actions;
  shape.head = nn::Head::DuelingQValues;
  return nn::Network::create(shape, rng);
}

}  // namespace

StudentAgent::StudentAgent(const AgentConfig& config, std::size_t observation_size, std::size_t num_actions,
                           Rng& init_rng)
    : config_(config),
      num_actions_(num_actions),
      online_(make_q_network(config, observation_size, num_actions, init_rng)),
      target_(online_),
      optimizer_(online_, config.learning_rate),
      replay_(config.replay_capacity, config.replay_initial),
      schedule_(config.eps_initial, config.eps_final, config.eps_decay_steps) {
  if (config.minibatch == 0) throw ConfigError("minibatch must be positive");
  if (config.train_period <= 0) throw ConfigError("train_period must be positive");
  if (config.target_sync_period <= 0) throw ConfigError("target_sync_period must be positive");
  if (!(config.gamma >= 0.0 && config.gamma <= 1.0)) throw ConfigError("gamma must lie in [0, 1]");
}

nn::Vector StudentAgent::q_values(const Observation& s) const {
  return nn::forward(online_, s, nn::ForwardMode::Deterministic);
}

int StudentAgent::greedy_action(const Observation& s) const { return nn::argmax(q_values(s)); }

ActResult StudentAgent::act(const Observation& s, Rng& rng) const {
  const double eps = schedule_.value(steps_);
  if (rng.uniform() < eps) return {static_cast<int>(rng.uniform_index(num_actions_)), true};
  return {greedy_action(s), false};
}

std::vector<double> StudentAgent::compute_double_q_targets(std::span<const Transition* const> batch) const {
  if (batch.empty()) throw ContractViolation("empty batch");
  const auto n = static_cast<Eigen::Index>(batch.size());
  nn::Matrix next(static_cast<Eigen::Index>(online_.input_dim()), n);
  for (Eigen::Index i = 0; i < n; ++i) next.col(i) = batch[static_cast<std::size_t>(i)]->next_state;
  const nn::Matrix q_online = nn::forward(online_, next, nn::ForwardMode::Deterministic);
  const nn::Matrix q_target = nn::forward(target_, next, nn::ForwardMode::Deterministic);
  std::vector<double> y(batch.size());
  for (Eigen::Index i = 0; i < n; ++i) {
    const Transition& t = *batch[static_cast<std::size_t>(i)];
    if (t.terminal) {
      y[static_cast<std::size_t>(i)] = t.reward;
      continue;
    }
    const int a_star = nn::argmax(q_online.col(i));
    y[static_cast<std::size_t>(i)] = t.reward + config_.gamma * q_target(a_star, i);
  }
  return y;
}

void StudentAgent::sync_target() {
  target_ = online_;
  ++syncs_;
  last_sync_step_ = steps_;
}

std::optional<double> StudentAgent::train_step(Rng& rng) {
  ++steps_;
  std::optional<double> loss;
  if (steps_ % config_.train_period == 0 && replay_.ready() && replay_.size() > 0) {
    const auto batch = replay_.sample(config_.minibatch, rng);
    const auto targets = compute_double_q_targets(batch);
    nn::Matrix states(static_cast<Eigen::Index>(online_.input_dim()), static_cast<Eigen::Index>(batch.size()));
    std::vector<int> actions(batch.size());
    for (std::size_t i = 0; i < batch.size(); ++i) {
      states.col(static_cast<Eigen::Index>(i)) = batch[i]->state;
      actions[i] = batch[i]->action;
    }
    auto [value, grads] = nn::td_loss_and_grad(online_, states, actions, targets);
    if (!std::isfinite(value)) throw NumericalError("non-finite TD loss at step " + std::to_string(steps_));
    nn::optimizer_apply(optimizer_, online_, grads);
    loss = value;
  }
  if (steps_ % config_.target_sync_period == 0) sync_target();
  return loss;
}

void StudentAgent::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write agent checkpoint " + path);
  nn::save_network(out, online_);
  out << "agent-state\n";
  out << "steps " << steps_ << "\n";
  out << "epsilon " << text::format_double(epsilon()) << "\n";
  out << "last_sync " << last_sync_step_ << "\n";
}

}  // namespace advimit::dqn
