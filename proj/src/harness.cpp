#include "harness.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <istream>
#include <map>
#include <sstream>

#include "errors.hpp"
#include "teacher.hpp"
#include "text.hpp"

namespace advimit::harness {

namespace fs = std::filesystem;

namespace {

constexpr double kReferenceSteps = 3'000'000.0;

std::string fmt(double v) { return text::format_double(v); }

std::string fmt_sizes(const std::vector<std::size_t>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

std::vector<std::size_t> parse_sizes(std::string_view value, std::string_view key) {
  std::vector<std::size_t> out;
  for (auto tok : text::split(value, ',')) {
    const long n = text::parse_long(tok, key);
    if (n <= 0) throw ConfigError("'" + std::string(key) + "' entries must be positive");
    out.push_back(static_cast<std::size_t>(n));
  }
  return out;
}

bool parse_bool(std::string_view v, std::string_view key) {
  v = text::trim(v);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("invalid boolean for '" + std::string(key) + "': '" + std::string(v) + "'");
}

struct Field {
  std::string name;
  std::function<void(RunConfig&, std::string_view)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename T>
Field long_field(std::string name, T RunConfig::*member) {
  return {name,
          [member, name](RunConfig& c, std::string_view v) { c.*member = static_cast<T>(text::parse_long(v, name)); },
          [member](const RunConfig& c) { return std::to_string(c.*member); }};
}

Field double_field(std::string name, double RunConfig::*member) {
  return {name, [member, name](RunConfig& c, std::string_view v) { c.*member = text::parse_double(v, name); },
          [member](const RunConfig& c) { return fmt(c.*member); }};
}

Field opt_long_field(std::string name, std::optional<long> RunConfig::*member) {
  return {name,
          [member, name](RunConfig& c, std::string_view v) {
            if (text::trim(v) == "auto")
              (c.*member).reset();
            else
              c.*member = text::parse_long(v, name);
          },
          [member](const RunConfig& c) { return (c.*member) ? std::to_string(*(c.*member)) : std::string("auto"); }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    std::vector<Field> f;
    f.push_back({"env", [](RunConfig& c, std::string_view v) { c.env = std::string(text::trim(v)); },
                 [](const RunConfig& c) { return c.env; }});
    f.push_back({"mode", [](RunConfig& c, std::string_view v) { c.mode = advising::parse_mode(text::trim(v)); },
                 [](const RunConfig& c) { return std::string(advising::to_string(c.mode)); }});
    f.push_back(long_field("t_max", &RunConfig::t_max));
    f.push_back({"seed",
                 [](RunConfig& c, std::string_view v) {
                   const long s = text::parse_long(v, "seed");
                   if (s < 0) throw ConfigError("'seed' must be non-negative");
                   c.seed = static_cast<std::uint64_t>(s);
                 },
                 [](const RunConfig& c) { return std::to_string(c.seed); }});
    f.push_back(opt_long_field("eval_period", &RunConfig::eval_period));
    f.push_back(long_field("eval_episodes", &RunConfig::eval_episodes));
    f.push_back({"out", [](RunConfig& c, std::string_view v) { c.out = std::string(text::trim(v)); },
                 [](const RunConfig& c) { return c.out; }});
    f.push_back({"teacher", [](RunConfig& c, std::string_view v) { c.teacher = std::string(text::trim(v)); },
                 [](const RunConfig& c) { return c.teacher; }});
    f.push_back(double_field("oracle_tol", &RunConfig::oracle_tol));
    f.push_back({"checkpoints", [](RunConfig& c, std::string_view v) { c.checkpoints = parse_bool(v, "checkpoints"); },
                 [](const RunConfig& c) { return std::string(c.checkpoints ? "true" : "false"); }});
    f.push_back({"hidden", [](RunConfig& c, std::string_view v) { c.hidden = parse_sizes(v, "hidden"); },
                 [](const RunConfig& c) { return fmt_sizes(c.hidden); }});
    f.push_back(long_field("stream_hidden", &RunConfig::stream_hidden));
    f.push_back(double_field("learning_rate", &RunConfig::learning_rate));
    f.push_back(long_field("minibatch", &RunConfig::minibatch));
    f.push_back(long_field("train_period", &RunConfig::train_period));
    f.push_back(opt_long_field("target_sync_period", &RunConfig::target_sync_period));
    f.push_back({"gamma",
                 [](RunConfig& c, std::string_view v) {
                   if (text::trim(v) == "auto")
                     c.gamma.reset();
                   else
                     c.gamma = text::parse_double(v, "gamma");
                 },
                 [](const RunConfig& c) { return c.gamma ? fmt(*c.gamma) : std::string("auto"); }});
    f.push_back(opt_long_field("replay_capacity", &RunConfig::replay_capacity));
    f.push_back(opt_long_field("replay_initial", &RunConfig::replay_initial));
    f.push_back(double_field("eps_initial", &RunConfig::eps_initial));
    f.push_back(double_field("eps_final", &RunConfig::eps_final));
    f.push_back(opt_long_field("eps_decay_steps", &RunConfig::eps_decay_steps));
    f.push_back(long_field("budget", &RunConfig::budget));
    f.push_back(opt_long_field("bc_dataset_size", &RunConfig::bc_dataset_size));
    f.push_back(long_field("bc_iterations", &RunConfig::bc_iterations));
    f.push_back(double_field("reuse_threshold", &RunConfig::reuse_threshold));
    f.push_back(double_field("reuse_probability", &RunConfig::reuse_probability));
    f.push_back(long_field("uncertainty_passes", &RunConfig::uncertainty_passes));
    f.push_back(long_field("bc_minibatch", &RunConfig::bc_minibatch));
    f.push_back(double_field("bc_learning_rate", &RunConfig::bc_learning_rate));
    f.push_back(double_field("dropout_rate", &RunConfig::dropout_rate));
    f.push_back({"bc_hidden", [](RunConfig& c, std::string_view v) { c.bc_hidden = parse_sizes(v, "bc_hidden"); },
                 [](const RunConfig& c) { return fmt_sizes(c.bc_hidden); }});
    return f;
  }();
  return table;
}

const Field& field(std::string_view key) {
  for (const auto& f : fields())
    if (f.name == key) return f;
  throw ConfigError("unknown config key '" + std::string(key) + "'");
}

long scaled(double reference_value, long t_max) {
  return std::max(1L, std::lround(reference_value * static_cast<double>(t_max) / kReferenceSteps));
}

double mean_of(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

double pop_std(const std::vector<double>& v) {
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return v.empty() ? 0.0 : std::sqrt(s / static_cast<double>(v.size()));
}

double pct(double num, double den) { return den > 0.0 ? 100.0 * num / den : 0.0; }

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << content;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

teacher::Teacher make_teacher(const RunConfig& cfg, const env::Environment& environment) {
  constexpr std::string_view prefix = "checkpoint:";
  if (cfg.teacher == "oracle") return teacher::Teacher::oracle(teacher::value_iteration(environment, cfg.oracle_tol));
  if (cfg.teacher.rfind(prefix, 0) == 0)
    return teacher::Teacher::checkpoint(nn::load_network(cfg.teacher.substr(prefix.size())));
  throw ConfigError("'teacher' must be 'oracle' or 'checkpoint:<path>'");
}

// Config lines other than seed and out, for homogeneity checks.
std::string config_signature(const std::string& config_text) {
  std::istringstream in(config_text);
  std::string line, sig;
  while (std::getline(in, line)) {
    const auto t = text::trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto key = text::trim(t.substr(0, t.find('=')));
    if (key == "seed" || key == "out") continue;
    sig += std::string(t) + "\n";
  }
  return sig;
}

}  // namespace

void RunConfig::set(std::string_view key, std::string_view value) { field(text::trim(key)).set(*this, value); }

std::string RunConfig::get(std::string_view key) const { return field(text::trim(key)).get(*this); }

const std::vector<std::string>& RunConfig::keys() {
  static const std::vector<std::string> k = [] {
    std::vector<std::string> out;
    for (const auto& f : fields()) out.push_back(f.name);
    return out;
  }();
  return k;
}

RunConfig parse_config(std::istream& in) {
  RunConfig cfg;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto t = text::trim(line);
    if (t.empty() || t.front() == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string_view::npos)
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    cfg.set(t.substr(0, eq), t.substr(eq + 1));
  }
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config " + path);
  return parse_config(in);
}

std::string to_text(const RunConfig& cfg) {
  std::string out;
  for (const auto& f : fields()) out += f.name + " = " + f.get(cfg) + "\n";
  return out;
}

RunConfig resolve(const RunConfig& cfg, double env_gamma) {
  RunConfig r = cfg;
  if (r.t_max <= 0) throw ConfigError("'t_max' must be positive");
  if (!r.eval_period) r.eval_period = scaled(25'000, r.t_max);
  if (!r.target_sync_period) r.target_sync_period = scaled(7'500, r.t_max);
  if (!r.replay_capacity) r.replay_capacity = scaled(500'000, r.t_max);
  if (!r.replay_initial) r.replay_initial = scaled(50'000, r.t_max);
  if (!r.eps_decay_steps) r.eps_decay_steps = scaled(500'000, r.t_max);
  if (!r.gamma) r.gamma = env_gamma;
  if (!r.bc_dataset_size) r.bc_dataset_size = std::max(1L, r.budget);

  if (*r.eval_period <= 0) throw ConfigError("'eval_period' must be positive");
  if (r.eval_episodes <= 0) throw ConfigError("'eval_episodes' must be positive");
  if (*r.replay_capacity <= 0) throw ConfigError("'replay_capacity' must be positive");
  if (*r.replay_initial < 0 || *r.replay_initial > *r.replay_capacity)
    throw ConfigError("'replay_initial' must lie in [0, replay_capacity]");
  if (r.minibatch == 0) throw ConfigError("'minibatch' must be positive");
  if (r.train_period <= 0) throw ConfigError("'train_period' must be positive");
  if (*r.target_sync_period <= 0) throw ConfigError("'target_sync_period' must be positive");
  if (!(r.learning_rate > 0.0)) throw ConfigError("'learning_rate' must be positive");
  if (!(*r.gamma >= 0.0 && *r.gamma <= 1.0)) throw ConfigError("'gamma' must lie in [0, 1]");
  if (!(r.eps_final >= 0.0 && r.eps_final <= r.eps_initial && r.eps_initial <= 1.0))
    throw ConfigError("'eps_initial'/'eps_final' must satisfy 0 <= final <= initial <= 1");
  if (*r.eps_decay_steps < 0) throw ConfigError("'eps_decay_steps' must be non-negative");
  if (!(r.oracle_tol > 0.0)) throw ConfigError("'oracle_tol' must be positive");
  if (r.hidden.empty()) throw ConfigError("'hidden' needs at least one layer");
  advising::validate(advising_config(r));
  return r;
}

dqn::AgentConfig agent_config(const RunConfig& r) {
  dqn::AgentConfig a;
  a.hidden = r.hidden;
  a.stream_hidden = r.stream_hidden;
  a.learning_rate = r.learning_rate;
  a.minibatch = r.minibatch;
  a.train_period = r.train_period;
  a.target_sync_period = r.target_sync_period.value_or(7500);
  a.gamma = r.gamma.value_or(0.99);
  a.replay_capacity = static_cast<std::size_t>(r.replay_capacity.value_or(500000));
  a.replay_initial = static_cast<std::size_t>(r.replay_initial.value_or(50000));
  a.eps_initial = r.eps_initial;
  a.eps_final = r.eps_final;
  a.eps_decay_steps = r.eps_decay_steps.value_or(500000);
  return a;
}

advising::AdvisingConfig advising_config(const RunConfig& r) {
  advising::AdvisingConfig a;
  a.mode = r.mode;
  a.budget = r.budget;
  a.dataset_size = r.bc_dataset_size.value_or(std::max(1L, r.budget));
  a.bc_iterations = r.bc_iterations;
  a.reuse_threshold = r.reuse_threshold;
  a.reuse_probability = r.reuse_probability;
  a.uncertainty_passes = r.uncertainty_passes;
  a.bc_minibatch = r.bc_minibatch;
  a.bc_learning_rate = r.bc_learning_rate;
  a.dropout_rate = r.dropout_rate;
  a.bc_hidden = r.bc_hidden;
  return a;
}

Auc compute_auc(std::span<const EvalPoint> points) {
  if (points.size() < 2) throw ConfigError("AUC needs at least two evaluation points");
  Auc auc;
  for (std::size_t i = 1; i < points.size(); ++i) {
    const double dx = static_cast<double>(points[i].step - points[i - 1].step);
    if (dx <= 0.0) throw ConfigError("AUC evaluation steps must be strictly increasing");
    auc.raw += 0.5 * dx * (points[i].mean_return + points[i - 1].mean_return);
  }
  auc.normalized = auc.raw / static_cast<double>(points.back().step - points.front().step);
  return auc;
}

EvalPoint evaluate(const Policy& policy, const env::Environment& prototype, long episodes, Rng& rng, long step) {
  if (episodes <= 0) throw ConfigError("'eval_episodes' must be positive");
  auto e = prototype.fresh();
  EvalPoint point;
  point.step = step;
  for (long ep = 0; ep < episodes; ++ep) {
    env::Observation obs = e->reset(rng);
    double ret = 0.0;
    while (e->episode_active()) {
      const auto r = e->step(policy(*e, obs), rng);
      ret += r.reward;
      obs = r.observation;
    }
    point.returns.push_back(ret);
  }
  point.mean_return = mean_of(point.returns);
  point.std_return = pop_std(point.returns);
  return point;
}

std::string events_csv(std::span<const EventRecord> events) {
  std::string out =
      "step,episode,state,action,source,explorative,uncertainty,budget,shadow_action,reuse_allowed,reward\n";
  out.reserve(events.size() * 48);
  for (const auto& e : events) {
    out += std::to_string(e.step) + ',' + std::to_string(e.episode) + ',' + std::to_string(e.state) + ',' +
           std::to_string(e.action) + ',' + advising::to_string(e.source) + ',' + (e.explorative ? "1" : "0") + ',' +
           (e.uncertainty ? fmt(*e.uncertainty) : std::string()) + ',' + std::to_string(e.budget) + ',' +
           (e.shadow_action ? std::to_string(*e.shadow_action) : std::string()) + ',' +
           (e.reuse_allowed ? "1" : "0") + ',' + fmt(e.reward) + '\n';
  }
  return out;
}

std::string eval_csv(std::span<const EvalPoint> evals) {
  std::string out = "step,mean_return,std_return,episodes\n";
  for (const auto& p : evals)
    out += std::to_string(p.step) + ',' + fmt(p.mean_return) + ',' + fmt(p.std_return) + ',' +
           std::to_string(p.returns.size()) + '\n';
  return out;
}

RunReport run_session(const RunConfig& raw_cfg) {
  const auto started = std::chrono::steady_clock::now();
  auto environment = env::make_environment(raw_cfg.env);
  const RunConfig cfg = resolve(raw_cfg, environment->discount());

  Rng env_rng(stream_seed(cfg.seed, "env"));
  Rng student_rng(stream_seed(cfg.seed, "student"));
  Rng init_rng(stream_seed(cfg.seed, "init"));
  const std::uint64_t eval_seed = stream_seed(cfg.seed, "eval");

  auto agent_ptr = std::make_shared<dqn::StudentAgent>(agent_config(cfg), environment->observation_size(),
                                                       environment->num_actions(), init_rng);
  dqn::StudentAgent& agent = *agent_ptr;
  auto advisor_ptr = std::make_shared<advising::Advisor>(advising_config(cfg), environment->observation_size(),
                                                         environment->num_actions(), stream_seed(cfg.seed, "advising"));
  advising::Advisor& advisor = *advisor_ptr;
  teacher::Teacher teacher = make_teacher(cfg, *environment);

  fs::path out_dir;
  if (!cfg.out.empty()) {
    out_dir = cfg.out;
    fs::create_directories(out_dir);
    if (cfg.checkpoints) fs::create_directories(out_dir / "checkpoints");
    write_file(out_dir / "config.txt", to_text(cfg));
  }

  RunReport report;
  report.mode = cfg.mode;
  report.seed = cfg.seed;
  report.events.reserve(static_cast<std::size_t>(cfg.t_max));

  const Policy greedy = [&agent](const env::Environment&, const env::Observation& s) {
    return agent.greedy_action(s);
  };
  auto run_eval = [&](long step) {
    Rng rng(derive_seed(eval_seed, static_cast<std::uint64_t>(step)));
    report.evals.push_back(evaluate(greedy, *environment, cfg.eval_episodes, rng, step));
    if (!out_dir.empty() && cfg.checkpoints)
      agent.save((out_dir / "checkpoints" / ("step_" + std::to_string(step) + ".ckpt")).string());
  };

  run_eval(0);
  env::Observation obs = environment->reset(env_rng);
  bool new_episode = true;
  long episode = 0;
  for (long t = 0; t < cfg.t_max; ++t) {
    try {
      advisor.begin_step(t);
      if (new_episode) {
        advisor.on_episode_start();
        new_episode = false;
      }
      const dqn::ActResult act = agent.act(obs, student_rng);
      const std::optional<int> advised = advisor.maybe_collect(obs, teacher, *environment, t);
      const advising::Decision d = advisor.arbitrate(obs, advised, act.action, act.explorative, t);

      EventRecord ev;
      ev.step = t;
      ev.episode = episode;
      ev.state = environment->state_id();
      ev.action = d.action;
      ev.source = d.source;
      ev.explorative = act.explorative;
      ev.uncertainty = d.uncertainty;
      ev.budget = advisor.state().budget_remaining;
      ev.reuse_allowed = advisor.state().reuse_allowed;
      if (d.source == advising::Source::Imitation) {
        ev.shadow_action = teacher.advise(*environment, obs, t, /*shadow=*/true);
        advisor.record_reuse_outcome(*ev.shadow_action == d.action);
      }

      env::StepResult res = environment->step(d.action, env_rng);
      ev.reward = res.reward;
      report.events.push_back(ev);
      agent.observe({obs, d.action, res.reward, res.observation, res.terminal});
      agent.train_step(student_rng);

      obs = std::move(res.observation);
      if (res.terminal || res.truncated) {
        obs = environment->reset(env_rng);
        new_episode = true;
        ++episode;
      }
      if ((t + 1) % *cfg.eval_period == 0 || t + 1 == cfg.t_max) run_eval(t + 1);
    } catch (const NumericalError& e) {
      throw NumericalError(std::string(e.what()) + " (seed " + std::to_string(cfg.seed) + ", step " +
                           std::to_string(t) + ", env stream " + std::to_string(stream_seed(cfg.seed, "env")) +
                           ", student stream " + std::to_string(stream_seed(cfg.seed, "student")) + ")");
    }
  }

  const Auc auc = compute_auc(report.evals);
  report.final_score = report.evals.back().mean_return;
  report.auc_normalized = auc.normalized;
  report.auc_raw = auc.raw;
  const auto& st = advisor.state();
  report.exploration_steps = st.exploration_steps;
  report.advice_collected = st.collected;
  report.reuses = st.reuses_attempted;
  report.reuses_correct = st.reuses_correct;
  report.uncertainty_evaluations = st.uncertainty_evaluations;
  report.episodes = episode;
  report.student = agent_ptr;
  report.advisor = advisor_ptr;
  report.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();

  if (!out_dir.empty()) {
    write_file(out_dir / "events.csv", events_csv(report.events));
    write_file(out_dir / "eval.csv", eval_csv(report.evals));
    write_file(out_dir / "report.csv", report_header() + format_row(to_row(report)));
    std::string log = "step,state,action,shadow\n";
    for (const auto& q : teacher.log())
      log += std::to_string(q.step) + ',' + std::to_string(q.state) + ',' + std::to_string(q.action) + ',' +
             (q.shadow ? "1" : "0") + '\n';
    write_file(out_dir / "teacher.csv", log);
    write_file(out_dir / "timing.txt", "wall_seconds = " + fmt(report.wall_seconds) + "\n");
  }
  return report;
}

ReportRow to_row(const RunReport& r) {
  ReportRow row;
  row.mode = advising::to_string(r.mode);
  row.seed = std::to_string(r.seed);
  row.final_score = r.final_score;
  row.auc_normalized = r.auc_normalized;
  row.auc_raw = r.auc_raw;
  row.exploration_steps = static_cast<double>(r.exploration_steps);
  row.advice_collected = static_cast<double>(r.advice_collected);
  row.reuses = static_cast<double>(r.reuses);
  row.reuses_correct = static_cast<double>(r.reuses_correct);
  row.reuse_pct = pct(row.reuses, row.exploration_steps);
  row.correct_pct = pct(row.reuses_correct, row.reuses);
  return row;
}

std::string report_header() {
  return "mode,seed,final,auc_normalized,auc_raw,exploration_steps,advice_collected,reuses,reuses_correct,"
         "reuse_pct,correct_pct\n";
}

std::string format_row(const ReportRow& r) {
  return r.mode + ',' + r.seed + ',' + fmt(r.final_score) + ',' + fmt(r.auc_normalized) + ',' + fmt(r.auc_raw) + ',' +
         fmt(r.exploration_steps) + ',' + fmt(r.advice_collected) + ',' + fmt(r.reuses) + ',' +
         fmt(r.reuses_correct) + ',' + fmt(r.reuse_pct) + ',' + fmt(r.correct_pct) + '\n';
}

ReportRow parse_row(std::string_view line) {
  const auto cols = text::split(text::trim(line), ',');
  if (cols.size() != 11) throw ConfigError("report row must have 11 columns");
  ReportRow r;
  r.mode = std::string(cols[0]);
  r.seed = std::string(cols[1]);
  double* nums[] = {&r.final_score, &r.auc_normalized, &r.auc_raw, &r.exploration_steps, &r.advice_collected,
                    &r.reuses,      &r.reuses_correct, &r.reuse_pct, &r.correct_pct};
  for (std::size_t i = 0; i < 9; ++i) *nums[i] = text::parse_double(cols[i + 2], "report");
  return r;
}

Summary aggregate(std::span<const ReportRow> rows, std::span<const std::string> config_texts) {
  if (rows.empty()) throw ConfigError("aggregate needs at least one report");
  if (!config_texts.empty()) {
    if (config_texts.size() != rows.size()) throw ConfigError("one config per report required");
    const std::string sig = config_signature(config_texts.front());
    for (const auto& c : config_texts)
      if (config_signature(c) != sig) throw ConfigError("reports come from heterogeneous configs");
  }
  for (const auto& r : rows)
    if (r.mode != rows.front().mode) throw ConfigError("reports come from heterogeneous configs");

  Summary s;
  s.runs.assign(rows.begin(), rows.end());
  auto stat = [&](double ReportRow::*m, double& mean, double& sd) {
    std::vector<double> v;
    for (const auto& r : rows) v.push_back(r.*m);
    mean = mean_of(v);
    sd = pop_std(v);
  };
  s.mean.mode = s.std.mode = rows.front().mode;
  s.mean.seed = "mean";
  s.std.seed = "std";
  for (auto m : {&ReportRow::final_score, &ReportRow::auc_normalized, &ReportRow::auc_raw,
                 &ReportRow::exploration_steps, &ReportRow::advice_collected, &ReportRow::reuses,
                 &ReportRow::reuses_correct, &ReportRow::reuse_pct, &ReportRow::correct_pct})
    stat(m, s.mean.*m, s.std.*m);
  s.mean.reuse_pct = pct(s.mean.reuses, s.mean.exploration_steps);
  s.mean.correct_pct = pct(s.mean.reuses_correct, s.mean.reuses);
  return s;
}

std::string summary_csv(const Summary& summary) {
  std::string out = report_header();
  for (const auto& r : summary.runs) out += format_row(r);
  out += format_row(summary.mean);
  out += format_row(summary.std);
  return out;
}

Summary aggregate_dirs(const std::vector<std::string>& run_dirs) {
  std::vector<ReportRow> rows;
  std::vector<std::string> configs;
  for (const auto& d : run_dirs) {
    const std::string report = read_file(fs::path(d) / "report.csv");
    const auto lines = text::split(text::trim(report), '\n');
    if (lines.size() != 2) throw ConfigError("report.csv in " + d + " must hold a header and one row");
    rows.push_back(parse_row(lines[1]));
    configs.push_back(read_file(fs::path(d) / "config.txt"));
  }
  return aggregate(rows, configs);
}

}  // namespace advimit::harness
