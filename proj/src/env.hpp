#pragma once

#include <cstddef>
#include <iosfwd>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "random.hpp"

namespace advimit::env {

using Observation = Eigen::VectorXd;

struct StepResult {
  Observation observation;
  double reward = 0.0;
  bool terminal = false;
  bool truncated = false;
};

/// One branch of the exact transition model.
struct Outcome {
  double probability = 0.0;
  std::size_t next_state = 0;
  double reward = 0.0;
  bool terminal = false;
};

/// Episodic environment contract shared by the student, the teacher and the
/// harness. Besides simulation, every environment exposes its exact tabular
/// model so that optimal values can be computed by dynamic programming.
class Environment {
 public:
  virtual ~Environment() = default;

  virtual std::size_t num_actions() const = 0;
  virtual std::size_t observation_size() const = 0;
  virtual double discount() const = 0;
  virtual int max_steps() const = 0;
  virtual std::pair<double, double> reward_bounds() const = 0;

  virtual Observation reset(Rng& rng) = 0;
  /// Throws ContractViolation when no episode is active or the action is out of range.
  virtual StepResult step(int action, Rng& rng) = 0;
  virtual bool episode_active() const = 0;
  virtual int episode_steps() const = 0;

  /// Dense id of the current simulator state.
  virtual std::size_t state_id() const = 0;

  /// All simulator states with the observation emitted in each. Throws
  /// ConfigError when the state space exceeds the configured cap.
  virtual std::vector<std::pair<std::size_t, Observation>> enumerate_states() const = 0;
  virtual std::size_t num_states() const = 0;
  virtual bool is_terminal_state(std::size_t state) const = 0;
  virtual std::vector<Outcome> outcomes(std::size_t state, int action) const = 0;
  /// Exact distribution over the state reached by reset().
  virtual std::vector<std::pair<std::size_t, double>> initial_distribution() const = 0;

  /// New instance of the same environment with no active episode.
  virtual std::unique_ptr<Environment> fresh() const = 0;
};

/// Gridworld description. Cells: '#' wall, '.' free, 'S' start, 'G' goal,
/// 'H' hazard.
struct EnvSpec {
  std::string name = "grid";
  std::vector<std::string> grid;
  double gamma = 0.99;
  int max_steps = 100;
  double sticky_p = 0.0;
  int noop_min = 0;
  int noop_max = 0;
  double reward_step = 0.0;
  double reward_goal = 1.0;
  double reward_hazard = -1.0;
  double reward_min = -1.0;
  double reward_max = 1.0;
  std::size_t max_states = 100000;

  std::size_t rows() const { return grid.size(); }
  std::size_t cols() const { return grid.empty() ? 0 : grid.front().size(); }
};

/// Throws ConfigError naming the offending field.
void validate(const EnvSpec& spec);
EnvSpec parse_env_spec(std::istream& in);
EnvSpec load_env_spec(const std::string& path);
std::string to_text(const EnvSpec& spec);

enum Move : int { kUp = 0, kRight = 1, kDown = 2, kLeft = 3 };

/// Gridworld with sticky actions and a random number of no-op steps at reset.
///
/// Simulator state is (cell, previously executed action); the previous action
/// matters only when sticky_p > 0 and is not part of the observation. At reset
/// the previous action is drawn uniformly, then each no-op step repeats it
/// with probability sticky_p (moves into walls, goals and hazards are blocked
/// during no-ops). Observation: one-hot agent cell followed by wall, goal and
/// hazard layout channels, each rows*cols long.
class GridWorld final : public Environment {
 public:
  explicit GridWorld(EnvSpec spec);

  const EnvSpec& spec() const { return spec_; }

  std::size_t num_actions() const override { return 4; }
  std::size_t observation_size() const override { return 4 * spec_.rows() * spec_.cols(); }
  double discount() const override { return spec_.gamma; }
  int max_steps() const override { return spec_.max_steps; }
  std::pair<double, double> reward_bounds() const override { return {spec_.reward_min, spec_.reward_max}; }

  Observation reset(Rng& rng) override;
  StepResult step(int action, Rng& rng) override;
  bool episode_active() const override { return active_; }
  int episode_steps() const override { return steps_; }
  std::size_t state_id() const override;

  std::vector<std::pair<std::size_t, Observation>> enumerate_states() const override;
  std::size_t num_states() const override;
  bool is_terminal_state(std::size_t state) const override;
  std::vector<Outcome> outcomes(std::size_t state, int action) const override;
  std::vector<std::pair<std::size_t, double>> initial_distribution() const override;
  std::unique_ptr<Environment> fresh() const override;

  std::size_t num_cells() const { return cell_pos_.size(); }
  std::size_t current_cell() const { return cell_; }
  std::size_t cell_of_state(std::size_t state) const;
  /// Row-major grid coordinates of a dense cell index.
  std::pair<std::size_t, std::size_t> cell_coords(std::size_t cell) const;
  Observation observation_for_cell(std::size_t cell) const;
  /// Layout channels of this spec (the part of every observation after the
  /// position one-hot).
  const Eigen::VectorXd& layout_channels() const { return layout_; }

 private:
  bool sticky() const { return spec_.sticky_p > 0.0; }
  char cell_char(std::size_t cell) const;
  /// Target cell of moving from `cell` in `dir`; walls and edges block.
  std::size_t moved(std::size_t cell, int dir) const;

  EnvSpec spec_;
  std::vector<std::size_t> cell_pos_;  // dense cell -> r * cols + c
  std::vector<long> dense_of_;         // r * cols + c -> dense cell or -1
  std::size_t start_cell_ = 0;
  Eigen::VectorXd layout_;

  std::size_t cell_ = 0;
  int prev_ = 0;
  int steps_ = 0;
  bool active_ = false;
};

/// Single-state k-armed bandit; every pull ends the episode.
class BanditEnv final : public Environment {
 public:
  explicit BanditEnv(std::vector<double> arm_rewards, double gamma = 0.99);

  std::size_t num_actions() const override { return rewards_.size(); }
  std::size_t observation_size() const override { return 1; }
  double discount() const override { return gamma_; }
  int max_steps() const override { return 1; }
  std::pair<double, double> reward_bounds() const override;

  Observation reset(Rng& rng) override;
  StepResult step(int action, Rng& rng) override;
  bool episode_active() const override { return active_; }
  int episode_steps() const override { return active_ ? 0 : 1; }
  std::size_t state_id() const override { return 0; }

  std::vector<std::pair<std::size_t, Observation>> enumerate_states() const override;
  std::size_t num_states() const override { return 1; }
  bool is_terminal_state(std::size_t) const override { return false; }
  std::vector<Outcome> outcomes(std::size_t state, int action) const override;
  std::vector<std::pair<std::size_t, double>> initial_distribution() const override { return {{0, 1.0}}; }
  std::unique_ptr<Environment> fresh() const override;

 private:
  std::vector<double> rewards_;
  double gamma_;
  bool active_ = false;
};

/// GridWorld for spec files, or "bandit:r0,r1,..." for a bandit.
std::unique_ptr<Environment> make_environment(const std::string& spec_path);

}  // namespace advimit::env
