#include "env.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <fstream>
#include <istream>
#include <map>
#include <sstream>

#include "errors.hpp"
#include "text.hpp"

namespace advimit::env {

namespace {

constexpr int kRowDelta[4] = {-1, 0, 1, 0};
constexpr int kColDelta[4] = {0, 1, 0, -1};

bool blocks_drift(char c) { return c == '#' || c == 'G' || c == 'H'; }

}  // namespace

void validate(const EnvSpec& spec) {
  if (spec.grid.empty()) throw ConfigError("env spec: 'row' entries missing");
  const std::size_t width = spec.grid.front().size();
  if (width == 0) throw ConfigError("env spec: empty 'row'");
  std::size_t starts = 0;
  std::size_t goals = 0;
  for (const auto& row : spec.grid) {
    if (row.size() != width) throw ConfigError("env spec: 'row' entries differ in length");
    for (char c : row) {
      if (c != '#' && c != '.' && c != 'S' && c != 'G' && c != 'H')
        throw ConfigError(std::string("env spec: 'row' has unknown cell '") + c + "'");
      starts += c == 'S';
      goals += c == 'G';
    }
  }
  if (starts != 1) throw ConfigError("env spec: 'row' must contain exactly one S");
  if (goals == 0) throw ConfigError("env spec: 'row' must contain a goal G");
  if (!(spec.gamma >= 0.0 && spec.gamma <= 1.0)) throw ConfigError("env spec: 'gamma' must lie in [0, 1]");
  if (spec.max_steps <= 0) throw ConfigError("env spec: 'max_steps' must be positive");
  if (!(spec.sticky_p >= 0.0 && spec.sticky_p <= 1.0)) throw ConfigError("env spec: 'sticky_p' must lie in [0, 1]");
  if (spec.noop_min < 0 || spec.noop_max < spec.noop_min)
    throw ConfigError("env spec: 'noop_min'/'noop_max' must satisfy 0 <= min <= max");
  if (!(spec.reward_min <= spec.reward_max)) throw ConfigError("env spec: 'reward_min' exceeds 'reward_max'");
  for (auto [key, r] : {std::pair{"reward_step", spec.reward_step}, std::pair{"reward_goal", spec.reward_goal},
                        std::pair{"reward_hazard", spec.reward_hazard}})
    if (!std::isfinite(r) || r < spec.reward_min || r > spec.reward_max)
      throw ConfigError(std::string("env spec: '") + key + "' outside declared reward bounds");
  if (spec.max_states == 0) throw ConfigError("env spec: 'max_states' must be positive");

  // Every cell the start phase can reach must reach a goal without crossing a hazard.
  const std::size_t rows = spec.rows();
  auto at = [&](long r, long c) -> char {
    if (r < 0 || c < 0 || r >= static_cast<long>(rows) || c >= static_cast<long>(width)) return '#';
    return spec.grid[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
  };
  long sr = 0, sc = 0;
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < width; ++c)
      if (spec.grid[r][c] == 'S') sr = static_cast<long>(r), sc = static_cast<long>(c);

  std::vector<std::pair<long, long>> starts_set{{sr, sc}};
  if (spec.sticky_p > 0.0 && spec.noop_max > 0) {
    std::vector<char> seen(rows * width, 0);
    std::deque<std::pair<long, long>> q{{sr, sc}};
    seen[static_cast<std::size_t>(sr) * width + static_cast<std::size_t>(sc)] = 1;
    starts_set.clear();
    while (!q.empty()) {
      auto [r, c] = q.front();
      q.pop_front();
      starts_set.push_back({r, c});
      for (int d = 0; d < 4; ++d) {
        const long nr = r + kRowDelta[d], nc = c + kColDelta[d];
        if (blocks_drift(at(nr, nc))) continue;
        auto& s = seen[static_cast<std::size_t>(nr) * width + static_cast<std::size_t>(nc)];
        if (!s) s = 1, q.push_back({nr, nc});
      }
    }
  }
  // Reverse search from the goals through non-hazard, non-wall cells.
  std::vector<char> reaches(rows * width, 0);
  std::deque<std::pair<long, long>> q;
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < width; ++c)
      if (spec.grid[r][c] == 'G') reaches[r * width + c] = 1, q.push_back({long(r), long(c)});
  while (!q.empty()) {
    auto [r, c] = q.front();
    q.pop_front();
    for (int d = 0; d < 4; ++d) {
      const long nr = r + kRowDelta[d], nc = c + kColDelta[d];
      const char ch = at(nr, nc);
      if (ch == '#' || ch == 'H' || ch == 'G') continue;
      auto& s = reaches[static_cast<std::size_t>(nr) * width + static_cast<std::size_t>(nc)];
      if (!s) s = 1, q.push_back({nr, nc});
    }
  }
  for (auto [r, c] : starts_set)
    if (!reaches[static_cast<std::size_t>(r) * width + static_cast<std::size_t>(c)])
      throw ConfigError("env spec: no goal reachable from start cell (" + std::to_string(r) + ", " +
                        std::to_string(c) + ")");
}

EnvSpec parse_env_spec(std::istream& in) {
  EnvSpec spec;
  spec.grid.clear();
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto t = text::trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string_view::npos)
      throw ConfigError("env spec line " + std::to_string(line_no) + ": expected key = value");
    const std::string key(text::trim(t.substr(0, eq)));
    const auto value = text::trim(t.substr(eq + 1));
    if (key == "name") spec.name = std::string(value);
    else if (key == "row") spec.grid.emplace_back(value);
    else if (key == "gamma") spec.gamma = text::parse_double(value, key);
    else if (key == "max_steps") spec.max_steps = static_cast<int>(text::parse_long(value, key));
    else if (key == "sticky_p") spec.sticky_p = text::parse_double(value, key);
    else if (key == "noop_min") spec.noop_min = static_cast<int>(text::parse_long(value, key));
    else if (key == "noop_max") spec.noop_max = static_cast<int>(text::parse_long(value, key));
    else if (key == "reward_step") spec.reward_step = text::parse_double(value, key);
    else if (key == "reward_goal") spec.reward_goal = text::parse_double(value, key);
    else if (key == "reward_hazard") spec.reward_hazard = text::parse_double(value, key);
    else if (key == "reward_min") spec.reward_min = text::parse_double(value, key);
    else if (key == "reward_max") spec.reward_max = text::parse_double(value, key);
    else if (key == "max_states") spec.max_states = static_cast<std::size_t>(text::parse_long(value, key));
    else throw ConfigError("env spec: unknown key '" + key + "'");
  }
  validate(spec);
  return spec;
}

EnvSpec load_env_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read env spec " + path);
  return parse_env_spec(in);
}

std::string to_text(const EnvSpec& spec) {
  std::ostringstream out;
  out << "name = " << spec.name << "\n";
  out << "gamma = " << text::format_double(spec.gamma) << "\n";
  out << "max_steps = " << spec.max_steps << "\n";
  out << "sticky_p = " << text::format_double(spec.sticky_p) << "\n";
  out << "noop_min = " << spec.noop_min << "\n";
  out << "noop_max = " << spec.noop_max << "\n";
  out << "reward_step = " << text::format_double(spec.reward_step) << "\n";
  out << "reward_goal = " << text::format_double(spec.reward_goal) << "\n";
  out << "reward_hazard = " << text::format_double(spec.reward_hazard) << "\n";
  out << "reward_min = " << text::format_double(spec.reward_min) << "\n";
  out << "reward_max = " << text::format_double(spec.reward_max) << "\n";
  out << "max_states = " << spec.max_states << "\n";
  for (const auto& row : spec.grid) out << "row = " << row << "\n";
  return out.str();
}

// --- GridWorld ---------------------------------------------------------------

GridWorld::GridWorld(EnvSpec spec) : spec_(std::move(spec)) {
  validate(spec_);
  const std::size_t rows = spec_.rows(), cols = spec_.cols();
  dense_of_.assign(rows * cols, -1);
  layout_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(3 * rows * cols));
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      const std::size_t flat = r * cols + c;
      const char ch = spec_.grid[r][c];
      if (ch == '#') {
        layout_[static_cast<Eigen::Index>(flat)] = 1.0;
        continue;
      }
      if (ch == 'G') layout_[static_cast<Eigen::Index>(rows * cols + flat)] = 1.0;
      if (ch == 'H') layout_[static_cast<Eigen::Index>(2 * rows * cols + flat)] = 1.0;
      if (ch == 'S') start_cell_ = cell_pos_.size();
      dense_of_[flat] = static_cast<long>(cell_pos_.size());
      cell_pos_.push_back(flat);
    }
  }
}

char GridWorld::cell_char(std::size_t cell) const {
  const auto [r, c] = cell_coords(cell);
  return spec_.grid[r][c];
}

std::pair<std::size_t, std::size_t> GridWorld::cell_coords(std::size_t cell) const {
  const std::size_t flat = cell_pos_.at(cell);
  return {flat / spec_.cols(), flat % spec_.cols()};
}

std::size_t GridWorld::moved(std::size_t cell, int dir) const {
  const auto [r, c] = cell_coords(cell);
  const long nr = static_cast<long>(r) + kRowDelta[dir];
  const long nc = static_cast<long>(c) + kColDelta[dir];
  if (nr < 0 || nc < 0 || nr >= static_cast<long>(spec_.rows()) || nc >= static_cast<long>(spec_.cols())) return cell;
  const long d = dense_of_[static_cast<std::size_t>(nr) * spec_.cols() + static_cast<std::size_t>(nc)];
  return d < 0 ? cell : static_cast<std::size_t>(d);
}

Observation GridWorld::observation_for_cell(std::size_t cell) const {
  const std::size_t n = spec_.rows() * spec_.cols();
  Observation obs = Observation::Zero(static_cast<Eigen::Index>(4 * n));
  obs[static_cast<Eigen::Index>(cell_pos_.at(cell))] = 1.0;
  obs.tail(static_cast<Eigen::Index>(3 * n)) = layout_;
  return obs;
}

Observation GridWorld::reset(Rng& rng) {
  cell_ = start_cell_;
  steps_ = 0;
  prev_ = 0;
  active_ = true;
  const long noops = rng.uniform_int(spec_.noop_min, spec_.noop_max);
  if (sticky()) {
    prev_ = static_cast<int>(rng.uniform_index(4));
    for (long i = 0; i < noops; ++i) {
      if (rng.uniform() < spec_.sticky_p) {
        const std::size_t next = moved(cell_, prev_);
        if (!blocks_drift(cell_char(next))) cell_ = next;
      }
    }
  }
  return observation_for_cell(cell_);
}

StepResult GridWorld::step(int action, Rng& rng) {
  if (!active_) throw ContractViolation("step called on a finished episode");
  if (action < 0 || action >= 4) throw ContractViolation("action " + std::to_string(action) + " out of range");
  int executed = action;
  if (sticky() && rng.uniform() < spec_.sticky_p) executed = prev_;
  prev_ = executed;
  cell_ = moved(cell_, executed);
  ++steps_;

  StepResult result;
  const char ch = cell_char(cell_);
  if (ch == 'G') {
    result.reward = spec_.reward_goal;
    result.terminal = true;
  } else if (ch == 'H') {
    result.reward = spec_.reward_hazard;
    result.terminal = true;
  } else {
    result.reward = spec_.reward_step;
  }
  result.truncated = !result.terminal && steps_ >= spec_.max_steps;
  active_ = !(result.terminal || result.truncated);
  result.observation = observation_for_cell(cell_);
  return result;
}

std::size_t GridWorld::state_id() const { return sticky() ? cell_ * 4 + static_cast<std::size_t>(prev_) : cell_; }

std::size_t GridWorld::num_states() const { return sticky() ? cell_pos_.size() * 4 : cell_pos_.size(); }

std::size_t GridWorld::cell_of_state(std::size_t state) const {
  if (state >= num_states()) throw ContractViolation("state id " + std::to_string(state) + " out of range");
  return sticky() ? state / 4 : state;
}

std::vector<std::pair<std::size_t, Observation>> GridWorld::enumerate_states() const {
  const std::size_t n = num_states();
  if (n > spec_.max_states)
    throw ConfigError("state space of " + std::to_string(n) + " exceeds cap " + std::to_string(spec_.max_states));
  std::vector<std::pair<std::size_t, Observation>> out;
  out.reserve(n);
  for (std::size_t s = 0; s < n; ++s) out.emplace_back(s, observation_for_cell(cell_of_state(s)));
  return out;
}

bool GridWorld::is_terminal_state(std::size_t state) const {
  const char ch = cell_char(cell_of_state(state));
  return ch == 'G' || ch == 'H';
}

std::vector<Outcome> GridWorld::outcomes(std::size_t state, int action) const {
  if (action < 0 || action >= 4) throw ContractViolation("action out of range");
  const std::size_t cell = cell_of_state(state);
  auto branch = [&](int executed, double p) {
    const std::size_t next = moved(cell, executed);
    const char ch = cell_char(next);
    Outcome o;
    o.probability = p;
    o.next_state = sticky() ? next * 4 + static_cast<std::size_t>(executed) : next;
    o.terminal = ch == 'G' || ch == 'H';
    o.reward = ch == 'G' ? spec_.reward_goal : ch == 'H' ? spec_.reward_hazard : spec_.reward_step;
    return o;
  };
  if (!sticky()) return {branch(action, 1.0)};
  const int prev = static_cast<int>(state % 4);
  if (prev == action || spec_.sticky_p == 0.0) return {branch(action, 1.0)};
  if (spec_.sticky_p == 1.0) return {branch(prev, 1.0)};
  return {branch(action, 1.0 - spec_.sticky_p), branch(prev, spec_.sticky_p)};
}

std::vector<std::pair<std::size_t, double>> GridWorld::initial_distribution() const {
  if (!sticky()) return {{start_cell_, 1.0}};
  const std::size_t n = num_states();
  std::vector<double> dist(n, 0.0);
  for (std::size_t a = 0; a < 4; ++a) dist[start_cell_ * 4 + a] = 0.25;
  std::vector<double> mix(n, 0.0);
  const int k_count = spec_.noop_max - spec_.noop_min + 1;
  for (int k = 0; k <= spec_.noop_max; ++k) {
    if (k >= spec_.noop_min)
      for (std::size_t s = 0; s < n; ++s) mix[s] += dist[s] / k_count;
    std::vector<double> next(n, 0.0);
    for (std::size_t s = 0; s < n; ++s) {
      if (dist[s] == 0.0) continue;
      const std::size_t cell = s / 4;
      const int prev = static_cast<int>(s % 4);
      std::size_t moved_cell = moved(cell, prev);
      if (blocks_drift(cell_char(moved_cell))) moved_cell = cell;
      next[moved_cell * 4 + static_cast<std::size_t>(prev)] += dist[s] * spec_.sticky_p;
      next[s] += dist[s] * (1.0 - spec_.sticky_p);
    }
    dist.swap(next);
  }
  std::vector<std::pair<std::size_t, double>> out;
  for (std::size_t s = 0; s < n; ++s)
    if (mix[s] > 0.0) out.emplace_back(s, mix[s]);
  return out;
}

std::unique_ptr<Environment> GridWorld::fresh() const { return std::make_unique<GridWorld>(spec_); }

// --- BanditEnv ----------------------------------------------------------------

BanditEnv::BanditEnv(std::vector<double> arm_rewards, double gamma) : rewards_(std::move(arm_rewards)), gamma_(gamma) {
  if (rewards_.empty()) throw ConfigError("bandit needs at least one arm");
}

std::pair<double, double> BanditEnv::reward_bounds() const {
  const auto [lo, hi] = std::minmax_element(rewards_.begin(), rewards_.end());
  return {*lo, *hi};
}

Observation BanditEnv::reset(Rng&) {
  active_ = true;
  return Observation::Ones(1);
}

StepResult BanditEnv::step(int action, Rng&) {
  if (!active_) throw ContractViolation("step called on a finished episode");
  if (action < 0 || static_cast<std::size_t>(action) >= rewards_.size())
    throw ContractViolation("action " + std::to_string(action) + " out of range");
  active_ = false;
  return {Observation::Ones(1), rewards_[static_cast<std::size_t>(action)], true, false};
}

std::vector<std::pair<std::size_t, Observation>> BanditEnv::enumerate_states() const {
  return {{0, Observation::Ones(1)}};
}

std::vector<Outcome> BanditEnv::outcomes(std::size_t state, int action) const {
  if (state != 0 || action < 0 || static_cast<std::size_t>(action) >= rewards_.size())
    throw ContractViolation("bandit outcome query out of range");
  return {{1.0, 0, rewards_[static_cast<std::size_t>(action)], true}};
}

std::unique_ptr<Environment> BanditEnv::fresh() const { return std::make_unique<BanditEnv>(rewards_, gamma_); }

std::unique_ptr<Environment> make_environment(const std::string& spec_path) {
  constexpr std::string_view prefix = "bandit:";
  if (spec_path.rfind(prefix, 0) == 0) {
    std::vector<double> arms;
    for (auto tok : text::split(std::string_view(spec_path).substr(prefix.size()), ','))
      arms.push_back(text::parse_double(tok, "bandit"));
    return std::make_unique<BanditEnv>(std::move(arms));
  }
  return std::make_unique<GridWorld>(load_env_spec(spec_path));
}

}  // namespace advimit::env
