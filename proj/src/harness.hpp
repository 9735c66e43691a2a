#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "advising.hpp"
#include "dqn.hpp"
#include "env.hpp"

namespace advimit::harness {

/// Everything a run depends on. Keys marked "auto" in the text form are
/// resolved against t_max (default values scaled from a 3M-step session) or the
/// environment before the run starts.
struct RunConfig {
  std::string env = "envs/corridor.env";
  advising::Mode mode = advising::Mode::None;
  long t_max = 30000;
  std::uint64_t seed = 1;
  std::optional<long> eval_period;
  long eval_episodes = 10;
  std::string out;
  std::string teacher = "oracle";  // or checkpoint:<path>
  double oracle_tol = 1e-10;
  bool checkpoints = true;

  std::vector<std::size_t> hidden{128, 128};
  std::size_t stream_hidden = 64;
  double learning_rate = 6.25e-5;
  std::size_t minibatch = 32;
  long train_period = 4;
  std::optional<long> target_sync_period;
  std::optional<double> gamma;
  std::optional<long> replay_capacity;
  std::optional<long> replay_initial;
  double eps_initial = 1.0;
  double eps_final = 0.01;
  std::optional<long> eps_decay_steps;

  long budget = 10000;
  std::optional<long> bc_dataset_size;
  long bc_iterations = 50000;
  double reuse_threshold = 0.01;
  double reuse_probability = 0.5;
  long uncertainty_passes = 100;
  std::size_t bc_minibatch = 32;
  double bc_learning_rate = 1e-4;
  double dropout_rate = 0.2;
  std::vector<std::size_t> bc_hidden{128, 128};

  /// Throws ConfigError naming the key when it is unknown or the value is malformed.
  void set(std::string_view key, std::string_view value);
  std::string get(std::string_view key) const;
  static const std::vector<std::string>& keys();
};

/// Flat `key = value` lines; '#' starts a comment line.
RunConfig parse_config(std::istream& in);
RunConfig load_config(const std::string& path);
std::string to_text(const RunConfig& cfg);

/// Fills every "auto" key and validates.
RunConfig resolve(const RunConfig& cfg, double env_gamma);
dqn::AgentConfig agent_config(const RunConfig& resolved);
advising::AdvisingConfig advising_config(const RunConfig& resolved);

struct EvalPoint {
  long step = 0;
  double mean_return = 0.0;
  double std_return = 0.0;
  std::vector<double> returns;
};

struct EventRecord {
  long step = 0;
  long episode = 0;
  std::size_t state = 0;  // simulator state id before the action
  int action = 0;
  advising::Source source = advising::Source::Student;
  bool explorative = false;
  std::optional<double> uncertainty;
  long budget = 0;
  std::optional<int> shadow_action;
  bool reuse_allowed = false;
  double reward = 0.0;
};

struct RunReport {
  advising::Mode mode = advising::Mode::None;
  std::uint64_t seed = 0;
  std::vector<EvalPoint> evals;
  double final_score = 0.0;
  double auc_normalized = 0.0;
  double auc_raw = 0.0;
  long exploration_steps = 0;
  long advice_collected = 0;
  long reuses = 0;
  long reuses_correct = 0;
  long uncertainty_evaluations = 0;
  long episodes = 0;
  double wall_seconds = 0.0;
  std::vector<EventRecord> events;
  std::shared_ptr<const dqn::StudentAgent> student;
  /// Final advising state: dataset, cloner and counters.
  std::shared_ptr<const advising::Advisor> advisor;
};

struct Auc {
  double normalized = 0.0;
  double raw = 0.0;
};

/// Trapezoid integral of mean return over steps; `normalized` divides by the
/// step span.
Auc compute_auc(std::span<const EvalPoint> points);

using Policy = std::function<int(const env::Environment&, const env::Observation&)>;

/// Runs `episodes` episodes of a fixed policy in a fresh copy of `prototype`.
EvalPoint evaluate(const Policy& policy, const env::Environment& prototype, long episodes, Rng& rng, long step = 0);

/// Full training session; writes the run directory when cfg.out is set.
RunReport run_session(const RunConfig& cfg);

struct ReportRow {
  std::string mode;
  std::string seed;
  double final_score = 0.0;
  double auc_normalized = 0.0;
  double auc_raw = 0.0;
  double exploration_steps = 0.0;
  double advice_collected = 0.0;
  double reuses = 0.0;
  double reuses_correct = 0.0;
  double reuse_pct = 0.0;
  double correct_pct = 0.0;
};

ReportRow to_row(const RunReport& report);
std::string report_header();
std::string format_row(const ReportRow& row);
ReportRow parse_row(std::string_view line);

/// Per-run rows plus mean and population standard deviation rows.
struct Summary {
  std::vector<ReportRow> runs;
  ReportRow mean;
  ReportRow std;
};

/// Refuses reports whose configurations differ in anything but seed and out.
Summary aggregate(std::span<const ReportRow> rows, std::span<const std::string> config_texts);
std::string summary_csv(const Summary& summary);
/// Reads report.csv and config.txt from each run directory.
Summary aggregate_dirs(const std::vector<std::string>& run_dirs);

std::string events_csv(std::span<const EventRecord> events);
std::string eval_csv(std::span<const EvalPoint> evals);

}  // namespace advimit::harness
