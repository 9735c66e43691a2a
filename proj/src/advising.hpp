#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "env.hpp"
#include "nn.hpp"
#include "random.hpp"
#include "teacher.hpp"

namespace advimit::advising {

using env::Observation;

/// None: no advice. EA: early advising. AR: early advising plus reuse of
/// imitated advice in exploration steps.
enum class Mode { None, EA, AR };
enum class Source { Teacher, Imitation, Student };

const char* to_string(Mode m);
const char* to_string(Source s);
Mode parse_mode(std::string_view s);

struct AdvisingConfig {
  Mode mode = Mode::None;
  long budget = 10000;
  long dataset_size = 10000;    // dataset size that triggers cloner training
  long bc_iterations = 50000;   // minibatch steps of cloner training
  double reuse_threshold = 0.01;
  double reuse_probability = 0.5;
  long uncertainty_passes = 100;
  std::size_t bc_minibatch = 32;
  double bc_learning_rate = 1e-4;
  double dropout_rate = 0.2;
  std::vector<std::size_t> bc_hidden{128, 128};
};

/// Throws ConfigError naming the offending field.
void validate(const AdvisingConfig& cfg);

struct AdvicePair {
  Observation state;
  int action = 0;
};

/// Append-only store of collected advice.
class AdviceDataset {
 public:
  void add(AdvicePair pair) { pairs_.push_back(std::move(pair)); }
  std::size_t size() const { return pairs_.size(); }
  const std::vector<AdvicePair>& pairs() const { return pairs_; }
  bool trained() const { return trained_; }
  void mark_trained() { trained_ = true; }

 private:
  std::vector<AdvicePair> pairs_;
  bool trained_ = false;
};

struct AdvisingState {
  long budget_remaining = 0;
  bool reuse_allowed = false;
  long collected = 0;
  long reuses_attempted = 0;
  long reuses_correct = 0;
  long exploration_steps = 0;
  long uncertainty_evaluations = 0;
};

AdvisingState initial_state(const AdvisingConfig& cfg);

/// Dropout-regularized logits network imitating the teacher.
class BehavioralCloner {
 public:
  /// Hidden layers per cfg.bc_hidden with dropout on the output of every
  /// hidden layer.
  BehavioralCloner(std::size_t observation_size, std::size_t num_actions, const AdvisingConfig& cfg, Rng& init_rng);
  BehavioralCloner(nn::Network network, double learning_rate);

  bool trained() const { return trained_; }
  const nn::Network& network() const { return network_; }
  nn::Network& mutable_network() { return network_; }

  friend void train_cloner(BehavioralCloner& bc, AdviceDataset& data, const AdvisingConfig& cfg, Rng& rng);

 private:
  nn::Network network_;
  nn::OptimizerState optimizer_;
  bool trained_ = false;
};

/// Draws the episodic reuse coin: reuse is allowed iff u < reuse_probability.
void on_episode_start(AdvisingState& state, const AdvisingConfig& cfg, Rng& rng);

/// Spends one unit of budget on a genuine teacher query when any is left.
std::optional<int> maybe_collect(AdvisingState& state, const AdvisingConfig& cfg, const Observation& s,
                                 teacher::Teacher& teacher, const env::Environment& environment, long step,
                                 AdviceDataset& data);

/// bc_iterations minibatch NLL steps (sampling with replacement, fresh
/// dropout masks per minibatch). Fires once.
void train_cloner(BehavioralCloner& bc, AdviceDataset& data, const AdvisingConfig& cfg, Rng& rng);

/// Mean over actions of the across-pass variance of softmax probabilities
/// under `uncertainty_passes` stochastic dropout passes. Pass i is seeded by
/// derive_seed(seed, step, i).
double uncertainty(const BehavioralCloner& bc, const Observation& s, const AdvisingConfig& cfg, std::uint64_t seed,
                   long step);

/// Same statistic over explicitly supplied single-column masks, one per pass.
double uncertainty_over_masks(const BehavioralCloner& bc, const Observation& s,
                              std::span<const nn::DropoutMasks> passes);

/// Deterministic-mode argmax of the cloner's logits.
int generate(const BehavioralCloner& bc, const Observation& s);

struct Decision {
  int action = 0;
  Source source = Source::Student;
  std::optional<double> uncertainty;
};

/// Per-step priority: teacher advice, then imitation (AR only, explorative
/// step, trained cloner, reuse allowed, uncertainty strictly below the
/// threshold), then the student's own action.
Decision arbitrate(AdvisingState& state, const AdvisingConfig& cfg, const Observation& s,
                   std::optional<int> advised, int student_action, bool explorative, const BehavioralCloner& bc,
                   std::uint64_t uncertainty_seed, long step);

void record_reuse_outcome(AdvisingState& state, bool correct);

/// Owns the advising state for one run and sequences the per-step calls.
class Advisor {
 public:
  Advisor(AdvisingConfig cfg, std::size_t observation_size, std::size_t num_actions, std::uint64_t seed);

  /// Trains the cloner on the first step at which the dataset holds
  /// dataset_size pairs (AR only).
  void begin_step(long step);
  void on_episode_start();
  std::optional<int> maybe_collect(const Observation& s, teacher::Teacher& teacher,
                                   const env::Environment& environment, long step);
  Decision arbitrate(const Observation& s, std::optional<int> advised, int student_action, bool explorative,
                     long step);
  void record_reuse_outcome(bool correct) { advising::record_reuse_outcome(state_, correct); }

  const AdvisingConfig& config() const { return cfg_; }
  const AdvisingState& state() const { return state_; }
  const AdviceDataset& dataset() const { return data_; }
  const BehavioralCloner& cloner() const { return cloner_; }
  std::optional<long> trained_at_step() const { return trained_at_; }

 private:
  AdvisingConfig cfg_;
  AdvisingState state_;
  AdviceDataset data_;
  BehavioralCloner cloner_;
  Rng coin_rng_;
  Rng train_rng_;
  std::uint64_t uncertainty_seed_;
  std::optional<long> trained_at_;
};

}  // namespace advimit::advising
