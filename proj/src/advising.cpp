#include "advising.hpp"

#include <cmath>
#include <string>

#include "errors.hpp"

namespace advimit::advising {

const char* to_string(Mode m) {
  switch (m) {
    case Mode::None: return "none";
    case Mode::EA: return "ea";
    case Mode::AR: return "ar";
  }
  return "?";
}

const char* to_string(Source s) {
  switch (s) {
    case Source::Teacher: return "teacher";
    case Source::Imitation: return "imitation";
    case Source::Student: return "student";
  }
  return "?";
}

Mode parse_mode(std::string_view s) {
  if (s == "none" || s == "None" || s == "NONE") return Mode::None;
  if (s == "ea" || s == "EA") return Mode::EA;
  if (s == "ar" || s == "AR") return Mode::AR;
  throw ConfigError("unknown mode '" + std::string(s) + "' (expected none, ea or ar)");
}

void validate(const AdvisingConfig& cfg) {
  if (cfg.budget < 0) throw ConfigError("'budget' must be non-negative");
  if (cfg.dataset_size <= 0) throw ConfigError("'bc_dataset_size' must be positive");
  if (cfg.mode == Mode::AR && cfg.budget > 0 && cfg.dataset_size > cfg.budget)
    throw ConfigError("'bc_dataset_size' cannot exceed 'budget' when reusing advice");
  if (cfg.bc_iterations <= 0) throw ConfigError("'bc_iterations' must be positive");
  if (!(cfg.reuse_threshold > 0.0)) throw ConfigError("'reuse_threshold' must be positive");
  if (!(cfg.reuse_probability >= 0.0 && cfg.reuse_probability <= 1.0))
    throw ConfigError("'reuse_probability' must lie in [0, 1]");
  if (cfg.uncertainty_passes < 2) throw ConfigError("'uncertainty_passes' must be at least 2");
  if (cfg.bc_minibatch == 0) throw ConfigError("'bc_minibatch' must be positive");
  if (!(cfg.bc_learning_rate > 0.0)) throw ConfigError("'bc_learning_rate' must be positive");
  if (!(cfg.dropout_rate >= 0.0 && cfg.dropout_rate < 1.0)) throw ConfigError("'dropout_rate' must lie in [0, 1)");
  if (cfg.bc_hidden.empty()) throw ConfigError("'bc_hidden' needs at least one layer");
}

AdvisingState initial_state(const AdvisingConfig& cfg) {
  AdvisingState s;
  s.budget_remaining = cfg.budget;
  return s;
}

namespace {

nn::Network make_cloner_network(std::size_t obs, std::size_t actions, const AdvisingConfig& cfg, Rng& rng) {
  nn::NetworkShape shape;
  shape.input = obs;
  shape.hidden = cfg.bc_hidden;
  shape.actions = actions;
  shape.head = nn::Head::ActionLogits;
  nn::DropoutSpec dropout;
  dropout.rate = cfg.dropout_rate;
  for (std::size_t i = 1; i <= cfg.bc_hidden.size(); ++i) dropout.layers.push_back(i);
  shape.dropout = dropout;
  return nn::Network::create(shape, rng);
}

double probability_variance(const nn::Matrix& logits) {
  nn::Matrix probs(logits.rows(), logits.cols());
  for (Eigen::Index c = 0; c < logits.cols(); ++c) probs.col(c) = nn::softmax(logits.col(c));
  // shifted by the first pass so identical passes give exactly zero
  const nn::Matrix d = probs.colwise() - probs.col(0);
  const nn::Vector mean = d.rowwise().mean();
  const nn::Vector var = (d.colwise() - mean).cwiseAbs2().rowwise().mean();
  return var.mean();
}

}  // namespace

BehavioralCloner::BehavioralCloner(std::size_t observation_size, std::size_t num_actions, const AdvisingConfig& cfg,
                                   Rng& init_rng)
    : BehavioralCloner(make_cloner_network(observation_size, num_actions, cfg, init_rng), cfg.bc_learning_rate) {}

BehavioralCloner::BehavioralCloner(nn::Network network, double learning_rate)
    : network_(std::move(network)), optimizer_(network_, learning_rate) {
  if (network_.head() != nn::Head::ActionLogits) throw ConfigError("behavioral cloner needs a logits head");
  if (!network_.dropout()) throw ConfigError("behavioral cloner needs a dropout spec");
}

void on_episode_start(AdvisingState& state, const AdvisingConfig& cfg, Rng& rng) {
  state.reuse_allowed = rng.uniform() < cfg.reuse_probability;
}

std::optional<int> maybe_collect(AdvisingState& state, const AdvisingConfig& cfg, const Observation& s,
                                 teacher::Teacher& teacher, const env::Environment& environment, long step,
                                 AdviceDataset& data) {
  if (cfg.mode == Mode::None) throw ContractViolation("advice collection requires mode ea or ar");
  if (state.budget_remaining <= 0) return std::nullopt;
  const int a = teacher.advise(environment, s, step, /*shadow=*/false);
  data.add({s, a});
  --state.budget_remaining;
  ++state.collected;
  return a;
}

void train_cloner(BehavioralCloner& bc, AdviceDataset& data, const AdvisingConfig& cfg, Rng& rng) {
  if (cfg.dataset_size <= 0) throw ConfigError("'bc_dataset_size' must be positive");
  if (bc.trained_) throw ContractViolation("behavioral cloner is trained only once");
  if (data.size() == 0) throw ContractViolation("cannot train on an empty advice dataset");

  const auto& pairs = data.pairs();
  const auto dim = static_cast<Eigen::Index>(bc.network_.input_dim());
  nn::Matrix states(dim, static_cast<Eigen::Index>(cfg.bc_minibatch));
  std::vector<int> actions(cfg.bc_minibatch);
  for (long it = 0; it < cfg.bc_iterations; ++it) {
    for (std::size_t i = 0; i < cfg.bc_minibatch; ++i) {
      const auto& p = pairs[rng.uniform_index(pairs.size())];
      states.col(static_cast<Eigen::Index>(i)) = p.state;
      actions[i] = p.action;
    }
    const nn::DropoutMasks masks = nn::sample_masks(bc.network_, cfg.bc_minibatch, rng);
    auto [loss, grads] = nn::nll_loss_and_grad(bc.network_, states, actions, &masks);
    if (!std::isfinite(loss)) throw NumericalError("non-finite cloner loss at iteration " + std::to_string(it));
    nn::optimizer_apply(bc.optimizer_, bc.network_, grads);
  }
  bc.trained_ = true;
  data.mark_trained();
}

double uncertainty_over_masks(const BehavioralCloner& bc, const Observation& s,
                              std::span<const nn::DropoutMasks> passes) {
  if (!bc.trained()) throw ContractViolation("uncertainty consulted before the cloner was trained");
  if (passes.size() < 2) throw ContractViolation("uncertainty needs at least two passes");
  const auto m = static_cast<Eigen::Index>(passes.size());
  nn::DropoutMasks merged;
  const std::size_t slots = passes.front().masks.size();
  for (std::size_t k = 0; k < slots; ++k) {
    nn::Matrix col(passes.front().masks[k].rows(), m);
    for (Eigen::Index i = 0; i < m; ++i) {
      const auto& mk = passes[static_cast<std::size_t>(i)].masks.at(k);
      if (mk.cols() != 1 || mk.rows() != col.rows()) throw ConfigError("uncertainty pass mask has wrong shape");
      col.col(i) = mk.col(0);
    }
    merged.masks.push_back(std::move(col));
  }
  const nn::Matrix inputs = s.replicate(1, m);
  return probability_variance(nn::forward_masked(bc.network(), inputs, merged));
}

double uncertainty(const BehavioralCloner& bc, const Observation& s, const AdvisingConfig& cfg, std::uint64_t seed,
                   long step) {
  if (!bc.trained()) throw ContractViolation("uncertainty consulted before the cloner was trained");
  std::vector<nn::DropoutMasks> passes;
  passes.reserve(static_cast<std::size_t>(cfg.uncertainty_passes));
  for (long i = 0; i < cfg.uncertainty_passes; ++i) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(step), static_cast<std::uint64_t>(i)));
    passes.push_back(nn::sample_masks(bc.network(), 1, rng));
  }
  return uncertainty_over_masks(bc, s, passes);
}

int generate(const BehavioralCloner& bc, const Observation& s) {
  if (!bc.trained()) throw ContractViolation("generate called before the cloner was trained");
  return nn::argmax(nn::forward(bc.network(), s, nn::ForwardMode::Deterministic));
}

Decision arbitrate(AdvisingState& state, const AdvisingConfig& cfg, const Observation& s,
                   std::optional<int> advised, int student_action, bool explorative, const BehavioralCloner& bc,
                   std::uint64_t uncertainty_seed, long step) {
  if (explorative) ++state.exploration_steps;
  Decision d;
  if (advised) {
    d.action = *advised;
    d.source = Source::Teacher;
    return d;
  }
  if (cfg.mode == Mode::AR && explorative && bc.trained() && state.reuse_allowed) {
    d.uncertainty = uncertainty(bc, s, cfg, uncertainty_seed, step);
    ++state.uncertainty_evaluations;
    if (*d.uncertainty < cfg.reuse_threshold) {
      d.action = generate(bc, s);
      d.source = Source::Imitation;
      ++state.reuses_attempted;
      return d;
    }
  }
  d.action = student_action;
  d.source = Source::Student;
  return d;
}

void record_reuse_outcome(AdvisingState& state, bool correct) {
  if (correct) ++state.reuses_correct;
}

Advisor::Advisor(AdvisingConfig cfg, std::size_t observation_size, std::size_t num_actions, std::uint64_t seed)
    : cfg_(std::move(cfg)),
      state_(initial_state(cfg_)),
      cloner_([&] {
        validate(cfg_);
        Rng init(stream_seed(seed, "bc-init"));
        return BehavioralCloner(observation_size, num_actions, cfg_, init);
      }()),
      coin_rng_(stream_seed(seed, "reuse-coin")),
      train_rng_(stream_seed(seed, "bc-train")),
      uncertainty_seed_(stream_seed(seed, "uncertainty")) {}

void Advisor::begin_step(long step) {
  if (cfg_.mode != Mode::AR || cloner_.trained()) return;
  if (static_cast<long>(data_.size()) == cfg_.dataset_size) {
    train_cloner(cloner_, data_, cfg_, train_rng_);
    trained_at_ = step;
  }
}

void Advisor::on_episode_start() { advising::on_episode_start(state_, cfg_, coin_rng_); }

std::optional<int> Advisor::maybe_collect(const Observation& s, teacher::Teacher& teacher,
                                          const env::Environment& environment, long step) {
  if (cfg_.mode == Mode::None) return std::nullopt;
  return advising::maybe_collect(state_, cfg_, s, teacher, environment, step, data_);
}

Decision Advisor::arbitrate(const Observation& s, std::optional<int> advised, int student_action, bool explorative,
                            long step) {
  return advising::arbitrate(state_, cfg_, s, advised, student_action, explorative, cloner_, uncertainty_seed_, step);
}

}  // namespace advimit::advising
