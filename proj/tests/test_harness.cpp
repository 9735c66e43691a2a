#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "errors.hpp"
#include "harness.hpp"
#include "support.hpp"

using namespace advimit;
using namespace advimit::harness;
namespace fs = std::filesystem;

namespace {

RunConfig corridor(advising::Mode mode, long budget = 50) {
  RunConfig c;
  c.env = "envs/corridor.env";
  c.mode = mode;
  c.t_max = 3000;
  c.eval_period = 500;
  c.eval_episodes = 3;
  c.hidden = {16};
  c.stream_hidden = 8;
  c.learning_rate = 1e-3;
  c.budget = budget;
  c.bc_iterations = 300;
  c.bc_hidden = {16};
  c.uncertainty_passes = 10;
  c.reuse_threshold = 0.05;
  c.checkpoints = false;
  return c;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::vector<std::vector<std::string>> csv_rows(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(text);
  std::string line;
  std::getline(in, line);
  while (std::getline(in, line)) {
    std::vector<std::string> cols;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) cols.push_back(cell);
    if (!line.empty() && line.back() == ',') cols.emplace_back();
    rows.push_back(cols);
  }
  return rows;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("advimit_test_" + name);
  fs::remove_all(p);
  return p;
}

EvalPoint point(long step, double mean) {
  EvalPoint p;
  p.step = step;
  p.mean_return = mean;
  return p;
}

ReportRow row_with(double final_score, double explore, double reuses) {
  ReportRow r;
  r.mode = "ar";
  r.seed = "1";
  r.final_score = final_score;
  r.exploration_steps = explore;
  r.reuses = reuses;
  return r;
}

}  // namespace

TEST_CASE("config text parses, resolves and round-trips") {
  std::istringstream in(
      "# comment\n"
      "env = envs/grid5.env\n"
      "mode = ar\n"
      "t_max = 30000\n"
      "\n"
      "hidden = 64, 32\n"
      "eval_period = auto\n"
      "gamma = 0.5\n");
  const RunConfig c = parse_config(in);
  CHECK(c.env == "envs/grid5.env");
  CHECK(c.mode == advising::Mode::AR);
  CHECK(c.hidden == std::vector<std::size_t>{64, 32});
  CHECK_FALSE(c.eval_period.has_value());
  CHECK(*c.gamma == 0.5);

  std::istringstream again(to_text(c));
  CHECK(to_text(parse_config(again)) == to_text(c));

  const RunConfig r = resolve(c, 0.9);
  CHECK(*r.eval_period == 250);
  CHECK(*r.target_sync_period == 75);
  CHECK(*r.replay_capacity == 5000);
  CHECK(*r.replay_initial == 500);
  CHECK(*r.eps_decay_steps == 5000);
  CHECK(*r.gamma == 0.5);
  CHECK(*r.bc_dataset_size == c.budget);
  RunConfig g = c;
  g.gamma.reset();
  CHECK(*resolve(g, 0.9).gamma == 0.9);
  g.t_max = 10;
  CHECK(*resolve(g, 0.9).eval_period == 1);
  g.budget = 0;
  CHECK(*resolve(g, 0.9).bc_dataset_size == 1);
}

TEST_CASE("config errors name the offending key or line") {
  auto message = [](const std::string& text) {
    std::istringstream in(text);
    try {
      parse_config(in);
    } catch (const ConfigError& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  CHECK(message("colour = red\n").find("colour") != std::string::npos);
  CHECK(message("t_max = many\n").find("t_max") != std::string::npos);
  CHECK(message("\n\njust words\n").find("line 3") != std::string::npos);
  CHECK(message("mode = sometimes\n").find("sometimes") != std::string::npos);
  CHECK(message("seed = -1\n").find("seed") != std::string::npos);
  RunConfig bad;
  bad.eval_episodes = 0;
  CHECK_THROWS_AS(resolve(bad, 0.9), ConfigError);
  bad = RunConfig();
  bad.mode = advising::Mode::AR;
  bad.budget = 10;
  bad.bc_dataset_size = 20;
  CHECK_THROWS_AS(resolve(bad, 0.9), ConfigError);
  CHECK_THROWS_AS(load_config("no/such/file.cfg"), IoError);
}

TEST_CASE("area under the curve") {
  SUBCASE("constant curve") {
    const std::vector<EvalPoint> p{point(0, 0.7), point(100, 0.7), point(300, 0.7)};
    CHECK(compute_auc(p).normalized == doctest::Approx(0.7).epsilon(1e-15));
    CHECK(compute_auc(p).raw == doctest::Approx(210.0).epsilon(1e-15));
  }
  SUBCASE("linear ramp from 0 to 1") {
    std::vector<EvalPoint> p;
    for (int i = 0; i <= 10; ++i) p.push_back(point(i * 50, i / 10.0));
    CHECK(compute_auc(p).normalized == doctest::Approx(0.5).epsilon(1e-14));
  }
  SUBCASE("uneven spacing by hand") {
    const std::vector<EvalPoint> p{point(0, 0), point(10, 1), point(30, 3)};
    CHECK(compute_auc(p).raw == doctest::Approx(45.0).epsilon(1e-15));
    CHECK(compute_auc(p).normalized == doctest::Approx(1.5).epsilon(1e-15));
  }
  SUBCASE("degenerate input") {
    const std::vector<EvalPoint> one{point(0, 1)};
    CHECK_THROWS_AS(compute_auc(one), ConfigError);
    const std::vector<EvalPoint> flat{point(0, 1), point(0, 2)};
    CHECK_THROWS_AS(compute_auc(flat), ConfigError);
  }
}

TEST_CASE("aggregation gives mean and population std") {
  const std::vector<ReportRow> rows{row_with(1, 10, 1), row_with(2, 10, 2), row_with(3, 10, 3)};
  const Summary s = aggregate(rows, {});
  CHECK(s.mean.final_score == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(s.std.final_score == doctest::Approx(std::sqrt(2.0 / 3.0)).epsilon(1e-12));
  CHECK(std::abs(s.std.final_score - 0.816497) < 1e-6);
  CHECK(s.mean.reuse_pct == doctest::Approx(20.0).epsilon(1e-14));
  CHECK(s.mean.seed == "mean");
  CHECK(s.std.seed == "std");

  std::vector<ReportRow> mixed = rows;
  mixed[1].mode = "ea";
  CHECK_THROWS_AS(aggregate(mixed, {}), ConfigError);
  const std::vector<std::string> cfgs{"t_max = 5\nseed = 1\nout = a\n", "t_max = 5\nseed = 2\nout = b\n",
                                      "t_max = 6\nseed = 3\nout = c\n"};
  CHECK_THROWS_AS(aggregate(rows, cfgs), ConfigError);
  const std::vector<std::string> same{cfgs[0], cfgs[1], "t_max = 5\nseed = 3\nout = c\n"};
  CHECK_NOTHROW(aggregate(rows, same));
}

TEST_CASE("reuse percentage is reuses over exploration steps") {
  RunReport r;
  r.mode = advising::Mode::AR;
  r.evals = {point(0, 0), point(1, 0)};
  r.exploration_steps = 326889;
  r.reuses = 67198;
  r.reuses_correct = 67198;
  const ReportRow row = to_row(r);
  CHECK(row.reuse_pct == doctest::Approx(20.557).epsilon(1e-4));
  CHECK(row.correct_pct == 100.0);
  const ReportRow back = parse_row(format_row(row));
  CHECK(back.reuse_pct == row.reuse_pct);
  CHECK(back.mode == "ar");
}

TEST_CASE("mode none leaves every advising counter at zero") {
  const RunReport r = run_session(corridor(advising::Mode::None));
  CHECK(r.advice_collected == 0);
  CHECK(r.reuses == 0);
  CHECK(r.uncertainty_evaluations == 0);
  for (const auto& e : r.events) CHECK(e.source == advising::Source::Student);
  CHECK(r.evals.front().step == 0);
  CHECK(r.evals.back().step == 3000);
  CHECK(r.evals.size() == 7);
}

TEST_CASE("early advising spends the budget on the first steps and never reuses") {
  const RunReport r = run_session(corridor(advising::Mode::EA, 50));
  CHECK(r.advice_collected == 50);
  CHECK(r.reuses == 0);
  for (const auto& e : r.events) {
    CHECK((e.source == advising::Source::Teacher) == (e.step < 50));
    CHECK(e.budget == std::max(0L, 50 - e.step - 1));
  }
}

TEST_CASE("sessions are reproducible and evaluation does not perturb training") {
  const RunReport a = run_session(corridor(advising::Mode::AR));
  const RunReport b = run_session(corridor(advising::Mode::AR));
  CHECK(events_csv(a.events) == events_csv(b.events));
  CHECK(eval_csv(a.evals) == eval_csv(b.evals));

  RunConfig sparse = corridor(advising::Mode::AR);
  sparse.eval_period = 1500;
  sparse.eval_episodes = 1;
  const RunReport c = run_session(sparse);
  CHECK(events_csv(a.events) == events_csv(c.events));
  CHECK(a.evals.back().mean_return == c.evals.back().mean_return);
}

TEST_CASE("zero evaluation episodes are refused") {
  env::GridWorld g(support::grid_spec({"S.G"}));
  Rng rng(1);
  const Policy right = [](const env::Environment&, const env::Observation&) { return 1; };
  CHECK_THROWS_AS(evaluate(right, g, 0, rng), ConfigError);
  CHECK(evaluate(right, g, 3, rng).mean_return == 1.0);
}

TEST_CASE("random-policy evaluation matches exact finite-horizon policy evaluation") {
  auto e = env::make_environment("envs/hazard_lane.env");
  const std::size_t n = e->num_states();
  const int actions = static_cast<int>(e->num_actions());
  Eigen::VectorXd v = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
  for (int k = 0; k < e->max_steps(); ++k) {
    Eigen::VectorXd next = Eigen::VectorXd::Zero(v.size());
    for (std::size_t s = 0; s < n; ++s) {
      if (e->is_terminal_state(s)) continue;
      for (int a = 0; a < actions; ++a)
        for (const auto& o : e->outcomes(s, a))
          next[static_cast<Eigen::Index>(s)] +=
              o.probability / actions * (o.reward + (o.terminal ? 0.0 : v[static_cast<Eigen::Index>(o.next_state)]));
    }
    v = next;
  }
  double exact = 0.0;
  for (const auto& [s, p] : e->initial_distribution()) exact += p * v[static_cast<Eigen::Index>(s)];

  Rng rng(21), act(22);
  const Policy random = [&act, actions](const env::Environment&, const env::Observation&) {
    return static_cast<int>(act.uniform_index(static_cast<std::size_t>(actions)));
  };
  const long episodes = 20000;
  const EvalPoint p = evaluate(random, *e, episodes, rng);
  const double se = p.std_return / std::sqrt(static_cast<double>(episodes));
  CHECK(std::abs(p.mean_return - exact) < 4 * se);
}

TEST_CASE("run directory files agree with each other") {
  RunConfig c = corridor(advising::Mode::AR);
  c.reuse_threshold = 0.2;
  c.checkpoints = true;
  const fs::path dir = scratch("rundir");
  c.out = dir.string();
  const RunReport r = run_session(c);
  for (const char* f : {"config.txt", "events.csv", "eval.csv", "report.csv", "teacher.csv", "timing.txt"})
    CHECK(fs::exists(dir / f));
  CHECK(fs::exists(dir / "checkpoints" / "step_0.ckpt"));
  CHECK(fs::exists(dir / "checkpoints" / "step_3000.ckpt"));

  long explore = 0, reuses = 0, correct = 0, advice = 0, uncertainty = 0;
  for (const auto& cols : csv_rows(slurp(dir / "events.csv"))) {
    REQUIRE(cols.size() == 11);
    explore += cols[5] == "1";
    advice += cols[4] == "teacher";
    uncertainty += !cols[6].empty();
    if (cols[4] == "imitation") {
      ++reuses;
      correct += cols[8] == cols[3];
      CHECK(cols[5] == "1");
      CHECK(cols[9] == "1");
    }
  }
  CHECK(explore == r.exploration_steps);
  CHECK(advice == r.advice_collected);
  CHECK(reuses == r.reuses);
  CHECK(correct == r.reuses_correct);
  CHECK(uncertainty == r.uncertainty_evaluations);
  CHECK(r.reuses > 0);

  const auto report = csv_rows(slurp(dir / "report.csv"));
  REQUIRE(report.size() == 1);
  CHECK(std::stod(report[0][5]) == explore);
  CHECK(std::stod(report[0][7]) == reuses);

  long genuine = 0, shadow = 0;
  for (const auto& cols : csv_rows(slurp(dir / "teacher.csv"))) (cols[3] == "1" ? shadow : genuine)++;
  CHECK(genuine == advice);
  CHECK(shadow == reuses);

  const auto evals = csv_rows(slurp(dir / "eval.csv"));
  REQUIRE(evals.size() == r.evals.size());
  CHECK(std::stod(evals.back()[1]) == r.final_score);

  const Summary s = aggregate_dirs({dir.string()});
  CHECK(s.runs.size() == 1);
  CHECK(s.mean.reuses == reuses);
  fs::remove_all(dir);
}

TEST_CASE("numeric failure reports seed and step") {
  RunConfig c = corridor(advising::Mode::None);
  c.learning_rate = 1e300;
  c.eval_period = 3000;
  try {
    run_session(c);
    FAIL("expected a numerical error");
  } catch (const NumericalError& e) {
    const std::string what = e.what();
    CHECK(what.find("seed 1") != std::string::npos);
    CHECK(what.find("step ") != std::string::npos);
  }
}
