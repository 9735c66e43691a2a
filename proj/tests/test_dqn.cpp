#include <doctest.h>

#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "dqn.hpp"
#include "env.hpp"
#include "errors.hpp"
#include "support.hpp"

using namespace advimit;
using namespace advimit::dqn;

namespace {

AgentConfig tiny_config() {
  AgentConfig c;
  c.hidden = {16};
  c.stream_hidden = 8;
  c.learning_rate = 1e-3;
  c.minibatch = 16;
  c.train_period = 1;
  c.target_sync_period = 100;
  c.replay_capacity = 1000;
  c.replay_initial = 100;
  c.eps_decay_steps = 5000;
  return c;
}

// Zeroes every weight so the dueling network outputs exactly `q` for any input.
void pin_q(nn::Network& net, const nn::Vector& q) {
  for (auto& l : net.mutable_layers()) {
    l.mutable_weights().setZero();
    l.mutable_bias().setZero();
  }
  const std::size_t s = net.stream_length();
  net.mutable_layers()[net.trunk_length() + s - 1].mutable_bias()[0] = q.mean();
  net.mutable_layers().back().mutable_bias() = q;
}

Transition transition(std::size_t dim, double reward, bool terminal) {
  return {nn::Vector::Ones(static_cast<Eigen::Index>(dim)), 0, reward,
          nn::Vector::Ones(static_cast<Eigen::Index>(dim)), terminal};
}

}  // namespace

TEST_CASE("replay memory overwrites the oldest transition first") {
  ReplayMemory m(3, 2);
  CHECK_FALSE(m.ready());
  for (int i = 0; i < 5; ++i) {
    Transition t = transition(1, i, false);
    m.push(t);
    CHECK(m.size() <= 3);
  }
  CHECK(m.ready());
  CHECK(m.at(0).reward == 2);
  CHECK(m.at(1).reward == 3);
  CHECK(m.at(2).reward == 4);
  CHECK_THROWS_AS(m.at(3), ContractViolation);
  CHECK_THROWS_AS(ReplayMemory(2, 3), ConfigError);
}

TEST_CASE("epsilon decays linearly and then stays constant") {
  EpsilonSchedule e(1.0, 0.01, 500000);
  CHECK(e.value(0) == 1.0);
  CHECK(e.value(250000) == doctest::Approx(0.505));
  CHECK(e.value(500000) == doctest::Approx(0.01));
  CHECK(e.value(3000000) == doctest::Approx(0.01));
  double prev = 2.0;
  for (long t = 0; t < 600000; t += 997) {
    CHECK(e.value(t) <= prev);
    prev = e.value(t);
  }
  CHECK(EpsilonSchedule(0.5, 0.1, 0).value(0) == doctest::Approx(0.1));
}

TEST_CASE("epsilon zero is always greedy") {
  AgentConfig c = tiny_config();
  c.eps_initial = c.eps_final = 0.0;
  Rng init(1), rng(2);
  StudentAgent agent(c, 3, 4, init);
  const nn::Vector s = nn::Vector::Ones(3);
  for (int i = 0; i < 1000; ++i) {
    const auto r = agent.act(s, rng);
    CHECK_FALSE(r.explorative);
    CHECK(r.action == agent.greedy_action(s));
  }
}

TEST_CASE("epsilon one samples actions uniformly and flags every step explorative") {
  AgentConfig c = tiny_config();
  c.eps_final = 1.0;
  Rng init(1), rng(3);
  StudentAgent agent(c, 3, 4, init);
  std::array<int, 4> counts{};
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const auto r = agent.act(nn::Vector::Ones(3), rng);
    CHECK(r.explorative);
    ++counts[static_cast<std::size_t>(r.action)];
  }
  for (int k : counts) CHECK(std::abs(k / double(n) - 0.25) < 0.01);
}

TEST_CASE("greedy ties go to the lowest action") {
  AgentConfig c = tiny_config();
  Rng init(1);
  StudentAgent agent(c, 3, 4, init);
  nn::Vector q(4);
  q << 1, 3, 3, 0;
  pin_q(agent.mutable_online(), q);
  CHECK((agent.q_values(nn::Vector::Ones(3)) - q).cwiseAbs().maxCoeff() < 1e-12);
  CHECK(agent.greedy_action(nn::Vector::Ones(3)) == 1);
}

TEST_CASE("double-q targets") {
  AgentConfig c = tiny_config();
  c.gamma = 0.99;
  Rng init(1);
  StudentAgent agent(c, 2, 4, init);
  nn::Vector online(4), target(4);
  online << 0, 0, 1, 0;
  target << 5, 0, 2, 0;
  pin_q(agent.mutable_online(), online);
  pin_q(agent.mutable_target(), target);

  SUBCASE("terminal transitions do not bootstrap") {
    const Transition t = transition(2, 1.0, true);
    const Transition* b[] = {&t};
    CHECK(agent.compute_double_q_targets(b)[0] == 1.0);
  }
  SUBCASE("the online argmax selects the target value") {
    const Transition t = transition(2, 0.0, false);
    const Transition* b[] = {&t};
    CHECK(agent.compute_double_q_targets(b)[0] == doctest::Approx(1.98).epsilon(1e-12));
  }
  SUBCASE("coincident networks reduce to the max target") {
    pin_q(agent.mutable_target(), online);
    const Transition t = transition(2, 0.5, false);
    const Transition* b[] = {&t};
    CHECK(agent.compute_double_q_targets(b)[0] == doctest::Approx(0.5 + 0.99 * online.maxCoeff()).epsilon(1e-12));
  }
}

TEST_CASE("no training happens below the replay threshold") {
  AgentConfig c = tiny_config();
  c.replay_initial = 50;
  Rng init(1), rng(2);
  StudentAgent agent(c, 2, 2, init);
  const auto before = support::flat_parameters(agent.online());
  for (int i = 0; i < 49; ++i) {
    agent.observe(transition(2, 1.0, true));
    CHECK_FALSE(agent.train_step(rng).has_value());
  }
  CHECK(support::flat_parameters(agent.online()) == before);
  agent.observe(transition(2, 1.0, true));
  CHECK(agent.train_step(rng).has_value());
}

TEST_CASE("target sync fires exactly at multiples of the default period") {
  AgentConfig c;  // defaults: sync every 7500, replay threshold 50000
  c.hidden = {4};
  c.stream_hidden = 0;
  Rng init(1), rng(2);
  StudentAgent agent(c, 2, 2, init);
  for (long t = 1; t <= 22500; ++t) {
    agent.train_step(rng);
    CHECK(agent.sync_count() == t / 7500);
  }
  CHECK(agent.last_sync_step() == 22500);
}

TEST_CASE("target network is frozen between syncs and equals the online network after one") {
  AgentConfig c = tiny_config();
  c.target_sync_period = 60;
  c.replay_initial = 10;
  Rng init(1), rng(2), data(3);
  StudentAgent agent(c, 3, 2, init);
  for (int i = 0; i < 10; ++i)
    agent.observe({support::random_matrix(3, 1, data).col(0), i % 2, data.uniform(),
                   support::random_matrix(3, 1, data).col(0), false});
  const auto frozen = support::flat_parameters(agent.target());
  for (int i = 0; i < 59; ++i) agent.train_step(rng);
  CHECK(support::flat_parameters(agent.target()) == frozen);
  CHECK(support::flat_parameters(agent.online()) != frozen);
  agent.train_step(rng);
  CHECK(support::flat_parameters(agent.target()) == support::flat_parameters(agent.online()));
  CHECK(agent.steps() - agent.last_sync_step() <= c.target_sync_period);
}

TEST_CASE("student learns the better bandit arm") {
  auto env = env::make_environment("bandit:0,1");
  Rng init(1), rng(2), env_rng(3);
  StudentAgent agent(tiny_config(), 1, 2, init);
  for (int t = 0; t < 20000; ++t) {
    const auto s = env->reset(env_rng);
    const auto a = agent.act(s, rng);
    const auto r = env->step(a.action, env_rng);
    agent.observe({s, a.action, r.reward, r.observation, r.terminal});
    agent.train_step(rng);
  }
  const nn::Vector q = agent.q_values(nn::Vector::Ones(1));
  CHECK(agent.greedy_action(nn::Vector::Ones(1)) == 1);
  CHECK(std::abs(q[1] - 1.0) < 0.05);
}

TEST_CASE("agent checkpoints carry the network and scalar state") {
  Rng init(1), rng(2);
  StudentAgent agent(tiny_config(), 3, 2, init);
  for (int i = 0; i < 7; ++i) agent.train_step(rng);
  const std::string path = "agent_checkpoint_test.ckpt";
  agent.save(path);
  const nn::Network back = nn::load_network(path);
  CHECK(support::flat_parameters(back) == support::flat_parameters(agent.online()));
  std::ifstream in(path);
  std::string text((std::istreambuf_iterator<char>(in)), {});
  CHECK(text.find("agent-state\nsteps 7\n") != std::string::npos);
  std::remove(path.c_str());
}
