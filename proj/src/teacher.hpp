#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "env.hpp"
#include "nn.hpp"

namespace advimit::teacher {

/// Optimal action values over the enumerated state space.
struct TabularQ {
  Eigen::MatrixXd q;  // states x actions; rows of terminal states are zero
  double residual = 0.0;

  std::size_t num_states() const { return static_cast<std::size_t>(q.rows()); }
  std::size_t num_actions() const { return static_cast<std::size_t>(q.cols()); }
  double value(std::size_t state) const { return q.row(static_cast<Eigen::Index>(state)).maxCoeff(); }
  /// Lowest-id maximizer.
  int greedy(std::size_t state) const;
};

/// Bellman optimality backups until the max-norm change drops below `tol`.
/// Sticky-action stochasticity is taken in expectation exactly.
TabularQ value_iteration(const env::Environment& environment, double tol, long max_sweeps = 1000000);

/// Max-norm difference between Q and one more Bellman backup of Q.
double bellman_residual(const env::Environment& environment, const Eigen::MatrixXd& q);

/// Expected discounted value of the start distribution under the optimal policy.
double optimal_start_value(const env::Environment& environment, const TabularQ& table);

/// "state q_0 q_1 ..." lines after a header.
void export_table(std::ostream& out, const TabularQ& table);
TabularQ import_table(std::istream& in);

struct QueryRecord {
  long step = 0;
  long state = -1;  // simulator state id; -1 for checkpoint teachers
  int action = 0;
  bool shadow = false;
};

/// The competent advice source: either an exact oracle over an enumerable
/// environment or a network loaded from a checkpoint.
class Teacher {
 public:
  enum class Kind { Oracle, Checkpoint };

  static Teacher oracle(TabularQ table);
  static Teacher checkpoint(nn::Network network);

  Kind kind() const { return kind_; }

  /// Greedy advice for the environment's current state. Shadow queries are
  /// for bookkeeping only and are flagged in the log.
  int advise(const env::Environment& environment, const env::Observation& s, long step, bool shadow);
  int advise_state(std::size_t state, long step, bool shadow);

  /// Greedy action without logging.
  int peek(const env::Environment& environment, const env::Observation& s) const;

  const std::vector<QueryRecord>& log() const { return log_; }
  long genuine_queries() const { return genuine_; }
  long shadow_queries() const { return static_cast<long>(log_.size()) - genuine_; }
  const std::optional<TabularQ>& table() const { return table_; }

 private:
  Teacher(Kind kind, std::optional<TabularQ> table, std::optional<nn::Network> network);
  int greedy_for_state(std::size_t state) const;

  Kind kind_;
  std::optional<TabularQ> table_;
  std::optional<nn::Network> network_;
  std::vector<QueryRecord> log_;
  long genuine_ = 0;
};

}  // namespace advimit::teacher
