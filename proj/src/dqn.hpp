#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "env.hpp"
#include "nn.hpp"
#include "random.hpp"

namespace advimit::dqn {

using env::Observation;

struct Transition {
  Observation state;
  int action = 0;
  double reward = 0.0;
  Observation next_state;
  /// True only for MDP termination; time-limit truncation bootstraps.
  bool terminal = false;
};

/// Fixed-capacity ring buffer; the oldest transition is overwritten first.
class ReplayMemory {
 public:
  ReplayMemory(std::size_t capacity, std::size_t initial_size);

  void push(Transition t);
  std::size_t size() const { return buffer_.size(); }
  std::size_t capacity() const { return capacity_; }
  std::size_t initial_size() const { return initial_size_; }
  bool ready() const { return buffer_.size() >= initial_size_; }

  /// i-th transition counted from the oldest one still stored.
  const Transition& at(std::size_t i) const;

  /// Uniform sample with replacement.
  std::vector<const Transition*> sample(std::size_t n, Rng& rng) const;

 private:
  std::size_t capacity_;
  std::size_t initial_size_;
  std::vector<Transition> buffer_;
  std::size_t next_ = 0;
};

/// Linear decay from `initial` to `final` over `decay_steps`, constant after.
class EpsilonSchedule {
 public:
  EpsilonSchedule(double initial, double final, long decay_steps);
  double value(long step) const;

  double initial() const { return initial_; }
  double final() const { return final_; }
  long decay_steps() const { return decay_steps_; }

 private:
  double initial_;
  double final_;
  long decay_steps_;
};

struct AgentConfig {
  std::vector<std::size_t> hidden{128, 128};
  std::size_t stream_hidden = 64;
  double learning_rate = 6.25e-5;
  std::size_t minibatch = 32;
  long train_period = 4;
  long target_sync_period = 7500;
  double gamma = 0.99;
  std::size_t replay_capacity = 500000;
  std::size_t replay_initial = 50000;
  double eps_initial = 1.0;
  double eps_final = 0.01;
  long eps_decay_steps = 500000;
};

struct ActResult {
  int action = 0;
  bool explorative = false;
};

/// Dueling double-DQN student with uniform replay and a periodically synced
/// target network.
class StudentAgent {
 public:
  StudentAgent(const AgentConfig& config, std::size_t observation_size, std::size_t num_actions, Rng& init_rng);

  /// Epsilon-greedy at the current step; greedy ties go to the lowest action.
  ActResult act(const Observation& s, Rng& rng) const;
  int greedy_action(const Observation& s) const;
  nn::Vector q_values(const Observation& s) const;

  void observe(Transition t) { replay_.push(std::move(t)); }

  /// Advances the step counter; trains every train_period steps once the
  /// replay memory holds its initial size and syncs the target network every
  /// sync period. Returns the loss when a gradient step happened.
  std::optional<double> train_step(Rng& rng);

  std::vector<double> compute_double_q_targets(std::span<const Transition* const> batch) const;
  void sync_target();

  long steps() const { return steps_; }
  double epsilon() const { return schedule_.value(steps_); }
  long sync_count() const { return syncs_; }
  long last_sync_step() const { return last_sync_step_; }
  const AgentConfig& config() const { return config_; }
  const nn::Network& online() const { return online_; }
  const nn::Network& target() const { return target_; }
  nn::Network& mutable_online() { return online_; }
  nn::Network& mutable_target() { return target_; }
  const ReplayMemory& replay() const { return replay_; }

  /// Network checkpoint followed by a scalar-state section.
  void save(const std::string& path) const;

 private:
  AgentConfig config_;
  std::size_t num_actions_;
  nn::Network online_;
  nn::Network target_;
  nn::OptimizerState optimizer_;
  ReplayMemory replay_;
  EpsilonSchedule schedule_;
  long steps_ = 0;
  long syncs_ = 0;
  long last_sync_step_ = 0;
};

}  // namespace advimit::dqn
