#include <doctest.h>

#include <cmath>
#include <sstream>

#include "dqn.hpp"
#include "errors.hpp"
#include "harness.hpp"
#include "support.hpp"
#include "teacher.hpp"

using namespace advimit;
using namespace advimit::teacher;

TEST_CASE("bandit values are the arm rewards") {
  auto e = env::make_environment("bandit:0,1");
  const TabularQ t = value_iteration(*e, 1e-12);
  CHECK(t.q(0, 0) == 0.0);
  CHECK(t.q(0, 1) == 1.0);
}

TEST_CASE("three-cell corridor values by hand") {
  env::EnvSpec spec = support::grid_spec({"S.G"});
  spec.gamma = 0.9;
  env::GridWorld g(spec);
  const TabularQ t = value_iteration(g, 1e-12);
  // From the middle, right reaches the goal: 1. From the start, right then
  // right: 0 + 0.9 * 1. Left from the start bumps the edge: 0.9 * 0.9.
  CHECK(t.q(1, env::kRight) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(t.q(0, env::kRight) == doctest::Approx(0.9).epsilon(1e-12));
  CHECK(t.q(0, env::kLeft) == doctest::Approx(0.81).epsilon(1e-12));
  CHECK(t.q(1, env::kLeft) == doctest::Approx(0.81).epsilon(1e-12));
  CHECK(t.q(2, 0) == 0.0);
  Teacher oracle = Teacher::oracle(t);
  Rng rng(1);
  const auto obs = g.reset(rng);
  CHECK(oracle.advise(g, obs, 0, false) == env::kRight);
}

TEST_CASE("value iteration reaches a fixed point within tolerance, sticky dynamics included") {
  for (double sticky : {0.0, 0.25}) {
    env::GridWorld g(support::grid_spec({"S..#", ".H..", "...G"}, sticky, 0, 3));
    const double tol = 1e-10;
    const TabularQ t = value_iteration(g, tol);
    CHECK(t.residual < tol);
    CHECK(bellman_residual(g, t.q) < tol);
  }
}

TEST_CASE("state-space cap refuses the oracle") {
  env::EnvSpec spec = support::open5(0.25);
  spec.max_states = 50;
  env::GridWorld g(spec);
  CHECK_THROWS_AS(value_iteration(g, 1e-8), ConfigError);
}

TEST_CASE("greedy advice breaks ties toward the lowest action") {
  TabularQ t;
  t.q.resize(1, 3);
  t.q << 0.2, 0.9, 0.9;
  CHECK(t.greedy(0) == 1);
  CHECK_THROWS_AS(t.greedy(1), ContractViolation);
}

TEST_CASE("oracle rollouts achieve the optimal return") {
  SUBCASE("deterministic grid: exact") {
    env::EnvSpec spec = support::open5();
    spec.reward_step = -0.01;
    spec.gamma = 1.0;
    env::GridWorld g(spec);
    const TabularQ t = value_iteration(g, 1e-12);
    const Teacher oracle = Teacher::oracle(t);
    const harness::Policy pi = [&](const env::Environment& e, const env::Observation& s) {
      return oracle.peek(e, s);
    };
    Rng rng(1);
    const auto p = harness::evaluate(pi, g, 5, rng);
    CHECK(p.mean_return == doctest::Approx(optimal_start_value(g, t)).epsilon(1e-12));
    CHECK(p.mean_return == doctest::Approx(0.93).epsilon(1e-12));
  }
  SUBCASE("sticky grid: within the Monte-Carlo interval") {
    env::EnvSpec spec = support::grid_spec({"S....", ".HH..", ".....", "..H.G"}, 0.25, 0, 3);
    spec.gamma = 1.0;
    spec.reward_step = -0.02;
    spec.max_steps = 400;
    env::GridWorld g(spec);
    const TabularQ t = value_iteration(g, 1e-12);
    const Teacher oracle = Teacher::oracle(t);
    const harness::Policy pi = [&](const env::Environment& e, const env::Observation& s) {
      return oracle.peek(e, s);
    };
    Rng rng(2);
    const auto p = harness::evaluate(pi, g, 20000, rng);
    const double se = p.std_return / std::sqrt(20000.0);
    CHECK(std::abs(p.mean_return - optimal_start_value(g, t)) < 4 * se + 1e-12);
  }
}

TEST_CASE("advice is pure and logged once per call, shadow queries flagged") {
  env::GridWorld g(support::grid_spec({"S..", "..G"}));
  Teacher oracle = Teacher::oracle(value_iteration(g, 1e-12));
  Rng rng(3);
  const auto obs = g.reset(rng);
  const std::size_t id = g.state_id();
  const int a = oracle.advise(g, obs, 0, false);
  for (int i = 1; i < 10; ++i) CHECK(oracle.advise(g, obs, i, i % 2 == 0) == a);
  CHECK(g.state_id() == id);
  CHECK(oracle.log().size() == 10);
  CHECK(oracle.genuine_queries() == 6);
  CHECK(oracle.shadow_queries() == 4);
  CHECK(oracle.log()[2].shadow);
  CHECK(oracle.log()[0].state == static_cast<long>(id));
}

TEST_CASE("q tables export and import exactly") {
  env::GridWorld g(support::grid_spec({"S..", ".H.", "..G"}, 0.25));
  const TabularQ t = value_iteration(g, 1e-12);
  std::stringstream ss;
  export_table(ss, t);
  const TabularQ back = import_table(ss);
  CHECK(back.q == t.q);
  CHECK(back.residual == t.residual);
}

TEST_CASE("checkpoint teachers refuse logits networks and advise by argmax") {
  Rng rng(4);
  nn::NetworkShape shape{3, {4}, 0, 2, nn::Head::ActionLogits, std::nullopt};
  CHECK_THROWS_AS(Teacher::checkpoint(nn::Network::create(shape, rng)), ConfigError);
  shape.head = nn::Head::QValues;
  nn::Network q = nn::Network::create(shape, rng);
  q.mutable_layers()[1].mutable_weights().setZero();
  q.mutable_layers()[1].mutable_bias() << 0.0, 1.0;
  Teacher t = Teacher::checkpoint(q);
  env::BanditEnv e({0.0, 1.0});
  CHECK(t.advise(e, nn::Vector::Ones(3), 0, false) == 1);
  CHECK(t.log()[0].state == -1);
  CHECK_THROWS_AS(t.advise_state(0, 0, false), ContractViolation);
}

TEST_CASE("a checkpoint teacher from a converged student agrees with the oracle") {
  env::EnvSpec spec = support::open5();
  spec.gamma = 0.9;
  spec.reward_step = -0.01;
  spec.max_steps = 50;
  env::GridWorld g(spec);
  const TabularQ table = value_iteration(g, 1e-12);

  dqn::AgentConfig c;
  c.hidden = {64, 64};
  c.stream_hidden = 32;
  c.learning_rate = 1e-3;
  c.target_sync_period = 250;
  c.replay_capacity = 10000;
  c.replay_initial = 500;
  c.eps_decay_steps = 10000;
  Rng init(1), srng(2), erng(3);
  dqn::StudentAgent agent(c, g.observation_size(), 4, init);
  auto obs = g.reset(erng);
  for (int t = 0; t < 40000; ++t) {
    const auto a = agent.act(obs, srng);
    const auto r = g.step(a.action, erng);
    agent.observe({obs, a.action, r.reward, r.observation, r.terminal});
    agent.train_step(srng);
    obs = r.observation;
    if (r.terminal || r.truncated) obs = g.reset(erng);
  }
  const std::string path = "teacher_checkpoint_test.ckpt";
  agent.save(path);
  Teacher teacher = Teacher::checkpoint(nn::load_network(path));
  std::remove(path.c_str());

  // Several actions can be optimal; agreement means the advised action's Q* is maximal.
  int agree = 0, total = 0;
  for (const auto& [s, o] : g.enumerate_states()) {
    if (g.is_terminal_state(s)) continue;
    const int a = teacher.peek(g, o);
    agree += table.q(static_cast<Eigen::Index>(s), a) >= table.value(s) - 1e-9;
    ++total;
  }
  CHECK(agree >= 0.95 * total);
}
