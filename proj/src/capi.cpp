#include "advimit/advimit.h"

#include <cstring>
#include <exception>
#include <fstream>
#include <new>
#include <string>
#include <vector>

#include "env.hpp"
#include "errors.hpp"
#include "harness.hpp"
#include "nn.hpp"
#include "teacher.hpp"

struct advimit_config {
  advimit::harness::RunConfig cfg;
};

struct advimit_report {
  advimit::harness::RunReport report;
};

namespace {

thread_local std::string g_last_error;

advimit_status fail(advimit_status code, std::string message) {
  g_last_error = std::move(message);
  return code;
}

template <typename F>
advimit_status guarded(F&& body) {
  try {
    body();
    g_last_error.clear();
    return ADVIMIT_OK;
  } catch (const advimit::ConfigError& e) {
    return fail(ADVIMIT_E_USAGE, e.what());
  } catch (const advimit::NumericalError& e) {
    return fail(ADVIMIT_E_NUMERIC, e.what());
  } catch (const advimit::IoError& e) {
    return fail(ADVIMIT_E_IO, e.what());
  } catch (const advimit::ContractViolation& e) {
    return fail(ADVIMIT_E_CONTRACT, e.what());
  } catch (const std::bad_alloc&) {
    return fail(ADVIMIT_E_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(ADVIMIT_E_INTERNAL, e.what());
  } catch (...) {
    return fail(ADVIMIT_E_INTERNAL, "unknown error");
  }
}

advimit_status copy_out(const std::string& s, char* buf, std::size_t len, std::size_t* needed) {
  if (needed) *needed = s.size() + 1;
  if (!buf) return ADVIMIT_OK;
  if (len < s.size() + 1) return fail(ADVIMIT_E_USAGE, "buffer too small");
  std::memcpy(buf, s.c_str(), s.size() + 1);
  return ADVIMIT_OK;
}

#define REQUIRE_ARG(p)                                              \
  do {                                                              \
    if (!(p)) return fail(ADVIMIT_E_USAGE, "null argument: " #p);   \
  } while (0)

}  // namespace

extern "C" {

const char* advimit_last_error(void) { return g_last_error.c_str(); }

const char* advimit_version(void) { return "0.1.0"; }

advimit_status advimit_config_create(advimit_config** out) {
  REQUIRE_ARG(out);
  return guarded([&] { *out = new advimit_config{}; });
}

advimit_status advimit_config_load(const char* path, advimit_config** out) {
  REQUIRE_ARG(path);
  REQUIRE_ARG(out);
  return guarded([&] { *out = new advimit_config{advimit::harness::load_config(path)}; });
}

void advimit_config_free(advimit_config* cfg) { delete cfg; }

advimit_status advimit_config_set(advimit_config* cfg, const char* key, const char* value) {
  REQUIRE_ARG(cfg);
  REQUIRE_ARG(key);
  REQUIRE_ARG(value);
  return guarded([&] { cfg->cfg.set(key, value); });
}

advimit_status advimit_config_get(const advimit_config* cfg, const char* key, char* buf, size_t len,
                                  size_t* needed) {
  REQUIRE_ARG(cfg);
  REQUIRE_ARG(key);
  std::string value;
  const advimit_status st = guarded([&] { value = cfg->cfg.get(key); });
  if (st != ADVIMIT_OK) return st;
  return copy_out(value, buf, len, needed);
}

advimit_status advimit_config_text(const advimit_config* cfg, char* buf, size_t len, size_t* needed) {
  REQUIRE_ARG(cfg);
  return copy_out(advimit::harness::to_text(cfg->cfg), buf, len, needed);
}

advimit_status advimit_run(const advimit_config* cfg, advimit_report** out) {
  REQUIRE_ARG(cfg);
  REQUIRE_ARG(out);
  return guarded([&] { *out = new advimit_report{advimit::harness::run_session(cfg->cfg)}; });
}

void advimit_report_free(advimit_report* report) { delete report; }

advimit_status advimit_report_get_summary(const advimit_report* report, advimit_report_summary* out) {
  REQUIRE_ARG(report);
  REQUIRE_ARG(out);
  const auto& r = report->report;
  out->seed = r.seed;
  out->final_score = r.final_score;
  out->auc_normalized = r.auc_normalized;
  out->auc_raw = r.auc_raw;
  out->exploration_steps = r.exploration_steps;
  out->advice_collected = r.advice_collected;
  out->reuses = r.reuses;
  out->reuses_correct = r.reuses_correct;
  out->uncertainty_evaluations = r.uncertainty_evaluations;
  out->episodes = r.episodes;
  out->wall_seconds = r.wall_seconds;
  out->eval_points = r.evals.size();
  return ADVIMIT_OK;
}

advimit_status advimit_report_get_eval(const advimit_report* report, size_t index, long* step, double* mean_return,
                                       double* std_return) {
  REQUIRE_ARG(report);
  if (index >= report->report.evals.size()) return fail(ADVIMIT_E_USAGE, "evaluation index out of range");
  const auto& p = report->report.evals[index];
  if (step) *step = p.step;
  if (mean_return) *mean_return = p.mean_return;
  if (std_return) *std_return = p.std_return;
  return ADVIMIT_OK;
}

advimit_status advimit_report_row(const advimit_report* report, char* buf, size_t len, size_t* needed) {
  REQUIRE_ARG(report);
  return copy_out(advimit::harness::format_row(advimit::harness::to_row(report->report)), buf, len, needed);
}

advimit_status advimit_aggregate(const char* const* run_dirs, size_t count, const char* out_csv) {
  REQUIRE_ARG(run_dirs);
  REQUIRE_ARG(out_csv);
  return guarded([&] {
    std::vector<std::string> dirs(run_dirs, run_dirs + count);
    const auto summary = advimit::harness::aggregate_dirs(dirs);
    std::ofstream out(out_csv, std::ios::binary);
    if (!out) throw advimit::IoError(std::string("cannot write ") + out_csv);
    out << advimit::harness::summary_csv(summary);
  });
}

advimit_status advimit_teach_oracle(const char* env, double tol, const char* out_path, size_t* states,
                                    double* residual) {
  REQUIRE_ARG(env);
  REQUIRE_ARG(out_path);
  return guarded([&] {
    const auto e = advimit::env::make_environment(env);
    const auto table = advimit::teacher::value_iteration(*e, tol);
    std::ofstream out(out_path, std::ios::binary);
    if (!out) throw advimit::IoError(std::string("cannot write ") + out_path);
    advimit::teacher::export_table(out, table);
    if (states) *states = table.num_states();
    if (residual) *residual = table.residual;
  });
}

advimit_status advimit_teach_checkpoint(const char* env, const char* checkpoint, const char* out_path,
                                        double* agreement) {
  REQUIRE_ARG(env);
  REQUIRE_ARG(checkpoint);
  REQUIRE_ARG(out_path);
  return guarded([&] {
    const auto e = advimit::env::make_environment(env);
    const auto teacher = advimit::teacher::Teacher::checkpoint(advimit::nn::load_network(checkpoint));
    const auto table = advimit::teacher::value_iteration(*e, 1e-10);
    std::ofstream out(out_path, std::ios::binary);
    if (!out) throw advimit::IoError(std::string("cannot write ") + out_path);
    out << "state,action,oracle_action\n";
    std::size_t agree = 0, total = 0;
    for (const auto& [s, obs] : e->enumerate_states()) {
      if (e->is_terminal_state(s)) continue;
      const int a = teacher.peek(*e, obs);
      const int o = table.greedy(s);
      out << s << ',' << a << ',' << o << '\n';
      agree += a == o;
      ++total;
    }
    if (agreement) *agreement = total ? static_cast<double>(agree) / static_cast<double>(total) : 0.0;
  });
}

}  // extern "C"
