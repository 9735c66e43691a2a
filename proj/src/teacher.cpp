#include "teacher.hpp"

#include <cmath>
#include <istream>
#include <ostream>
#include <string>

#include "errors.hpp"
#include "text.hpp"

namespace advimit::teacher {

int TabularQ::greedy(std::size_t state) const {
  if (state >= num_states()) throw ContractViolation("state " + std::to_string(state) + " is not in the table");
  return nn::argmax(q.row(static_cast<Eigen::Index>(state)).transpose());
}

namespace {

struct Model {
  std::vector<std::vector<std::vector<env::Outcome>>> outcomes;  // [state][action]
  std::vector<char> terminal;
};

Model build_model(const env::Environment& e) {
  const auto states = e.enumerate_states();  // enforces the state-space cap
  Model m;
  m.outcomes.resize(states.size());
  m.terminal.resize(states.size());
  for (std::size_t s = 0; s < states.size(); ++s) {
    m.terminal[s] = e.is_terminal_state(s);
    if (m.terminal[s]) continue;
    for (std::size_t a = 0; a < e.num_actions(); ++a) m.outcomes[s].push_back(e.outcomes(s, static_cast<int>(a)));
  }
  return m;
}

Eigen::MatrixXd backup(const Model& m, const Eigen::MatrixXd& q, double gamma) {
  const Eigen::Index n = q.rows();
  Eigen::VectorXd v(n);
  for (Eigen::Index s = 0; s < n; ++s) v[s] = m.terminal[static_cast<std::size_t>(s)] ? 0.0 : q.row(s).maxCoeff();
  Eigen::MatrixXd next = Eigen::MatrixXd::Zero(q.rows(), q.cols());
  for (Eigen::Index s = 0; s < n; ++s) {
    if (m.terminal[static_cast<std::size_t>(s)]) continue;
    for (Eigen::Index a = 0; a < q.cols(); ++a) {
      double acc = 0.0;
      for (const auto& o : m.outcomes[static_cast<std::size_t>(s)][static_cast<std::size_t>(a)])
        acc += o.probability * (o.reward + (o.terminal ? 0.0 : gamma * v[static_cast<Eigen::Index>(o.next_state)]));
      next(s, a) = acc;
    }
  }
  return next;
}

}  // namespace

TabularQ value_iteration(const env::Environment& environment, double tol, long max_sweeps) {
  if (!(tol > 0.0)) throw ConfigError("value iteration tolerance must be positive");
  const Model m = build_model(environment);
  const auto n = static_cast<Eigen::Index>(m.terminal.size());
  Eigen::MatrixXd q = Eigen::MatrixXd::Zero(n, static_cast<Eigen::Index>(environment.num_actions()));
  for (long sweep = 0; sweep < max_sweeps; ++sweep) {
    Eigen::MatrixXd next = backup(m, q, environment.discount());
    const double residual = (next - q).cwiseAbs().maxCoeff();
    q = std::move(next);
    if (residual < tol) return {q, residual};
  }
  throw NumericalError("value iteration did not converge within the sweep limit");
}

double bellman_residual(const env::Environment& environment, const Eigen::MatrixXd& q) {
  const Model m = build_model(environment);
  return (backup(m, q, environment.discount()) - q).cwiseAbs().maxCoeff();
}

double optimal_start_value(const env::Environment& environment, const TabularQ& table) {
  double v = 0.0;
  for (auto [s, p] : environment.initial_distribution()) v += p * table.value(s);
  return v;
}

void export_table(std::ostream& out, const TabularQ& table) {
  out << "# advimit-qtable states=" << table.num_states() << " actions=" << table.num_actions()
      << " residual=" << text::format_double(table.residual) << "\n";
  for (std::size_t s = 0; s < table.num_states(); ++s) {
    out << s;
    for (std::size_t a = 0; a < table.num_actions(); ++a)
      out << ' ' << text::format_double(table.q(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(a)));
    out << "\n";
  }
}

TabularQ import_table(std::istream& in) {
  std::string line;
  std::vector<std::vector<double>> rows;
  double residual = 0.0;
  while (std::getline(in, line)) {
    const auto t = text::trim(line);
    if (t.empty()) continue;
    if (t.front() == '#') {
      const auto pos = t.find("residual=");
      if (pos != std::string_view::npos) residual = text::parse_double(t.substr(pos + 9), "residual");
      continue;
    }
    const auto toks = text::split_ws(t);
    if (static_cast<std::size_t>(text::parse_long(toks.at(0), "state")) != rows.size())
      throw ConfigError("q-table rows must be listed in state order");
    std::vector<double> row;
    for (std::size_t i = 1; i < toks.size(); ++i) row.push_back(text::parse_double(toks[i], "q"));
    if (!rows.empty() && row.size() != rows.front().size()) throw ConfigError("q-table rows differ in length");
    rows.push_back(std::move(row));
  }
  if (rows.empty() || rows.front().empty()) throw ConfigError("empty q-table");
  TabularQ t;
  t.residual = residual;
  t.q.resize(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t s = 0; s < rows.size(); ++s)
    for (std::size_t a = 0; a < rows[s].size(); ++a)
      t.q(static_cast<Eigen::Index>(s), static_cast<Eigen::Index>(a)) = rows[s][a];
  return t;
}

Teacher::Teacher(Kind kind, std::optional<TabularQ> table, std::optional<nn::Network> network)
    : kind_(kind), table_(std::move(table)), network_(std::move(network)) {}

Teacher Teacher::oracle(TabularQ table) { return Teacher(Kind::Oracle, std::move(table), std::nullopt); }

Teacher Teacher::checkpoint(nn::Network network) {
  if (network.head() == nn::Head::ActionLogits) throw ConfigError("checkpoint teacher needs a Q-value network");
  return Teacher(Kind::Checkpoint, std::nullopt, std::move(network));
}

int Teacher::greedy_for_state(std::size_t state) const {
  if (kind_ != Kind::Oracle) throw ContractViolation("state-id advice requires an oracle teacher");
  return table_->greedy(state);
}

int Teacher::peek(const env::Environment& environment, const env::Observation& s) const {
  if (kind_ == Kind::Oracle) return greedy_for_state(environment.state_id());
  return nn::argmax(nn::forward(*network_, s, nn::ForwardMode::Deterministic));
}

int Teacher::advise(const env::Environment& environment, const env::Observation& s, long step, bool shadow) {
  const int a = peek(environment, s);
  const long state = kind_ == Kind::Oracle ? static_cast<long>(environment.state_id()) : -1;
  log_.push_back({step, state, a, shadow});
  if (!shadow) ++genuine_;
  return a;
}

int Teacher::advise_state(std::size_t state, long step, bool shadow) {
  const int a = greedy_for_state(state);
  log_.push_back({step, static_cast<long>(state), a, shadow});
  if (!shadow) ++genuine_;
  return a;
}

}  // namespace advimit::teacher
