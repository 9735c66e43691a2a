#include <advimit/advimit.h>

#include <CLI11.hpp>

#include <algorithm>
#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

namespace fs = std::filesystem;

namespace {

struct ConfigHandle {
  advimit_config* ptr = nullptr;
  ~ConfigHandle() { advimit_config_free(ptr); }
};

struct ReportHandle {
  advimit_report* ptr = nullptr;
  ~ReportHandle() { advimit_report_free(ptr); }
};

int exit_code(advimit_status st) {
  switch (st) {
    case ADVIMIT_OK: return 0;
    case ADVIMIT_E_NUMERIC: return 2;
    default: return 1;
  }
}

int report_failure(advimit_status st) {
  std::cerr << "advimit: " << advimit_last_error() << "\n";
  return exit_code(st);
}

struct CommonFlags {
  std::string config;
  std::string mode;
  long seed = -1;
  std::string out;
  std::vector<std::string> sets;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config, "Config file (key = value lines)");
  cmd->add_option("--mode", f.mode, "none, ea or ar");
  cmd->add_option("--seed", f.seed, "Master seed");
  cmd->add_option("--out", f.out, "Output directory");
  cmd->add_option("--set", f.sets, "Override a config key, key=value (repeatable)");
}

advimit_status build_config(const CommonFlags& f, ConfigHandle& h) {
  advimit_status st = f.config.empty() ? advimit_config_create(&h.ptr) : advimit_config_load(f.config.c_str(), &h.ptr);
  if (st != ADVIMIT_OK) return st;
  for (const auto& kv : f.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) {
      std::cerr << "advimit: --set expects key=value, got '" << kv << "'\n";
      return ADVIMIT_E_USAGE;
    }
    st = advimit_config_set(h.ptr, kv.substr(0, eq).c_str(), kv.substr(eq + 1).c_str());
    if (st != ADVIMIT_OK) return st;
  }
  if (!f.mode.empty() && (st = advimit_config_set(h.ptr, "mode", f.mode.c_str())) != ADVIMIT_OK) return st;
  if (f.seed >= 0 && (st = advimit_config_set(h.ptr, "seed", std::to_string(f.seed).c_str())) != ADVIMIT_OK)
    return st;
  if (!f.out.empty() && (st = advimit_config_set(h.ptr, "out", f.out.c_str())) != ADVIMIT_OK) return st;
  return ADVIMIT_OK;
}

std::string get_key(const advimit_config* cfg, const char* key) {
  std::size_t needed = 0;
  advimit_config_get(cfg, key, nullptr, 0, &needed);
  std::string s(needed, '\0');
  advimit_config_get(cfg, key, s.data(), s.size(), &needed);
  s.resize(needed - 1);
  return s;
}

void print_summary(const advimit_report* r) {
  advimit_report_summary s{};
  advimit_report_get_summary(r, &s);
  std::printf("seed %llu  final %.4f  auc %.4f  explore %ld  advice %ld  reuses %ld (%ld correct)  %.1fs\n",
              static_cast<unsigned long long>(s.seed), s.final_score, s.auc_normalized, s.exploration_steps,
              s.advice_collected, s.reuses, s.reuses_correct, s.wall_seconds);
}

int cmd_train(const CommonFlags& f) {
  ConfigHandle cfg;
  if (auto st = build_config(f, cfg); st != ADVIMIT_OK) return report_failure(st);
  ReportHandle rep;
  if (auto st = advimit_run(cfg.ptr, &rep.ptr); st != ADVIMIT_OK) return report_failure(st);
  print_summary(rep.ptr);
  return 0;
}

int aggregate(const std::vector<std::string>& dirs, const std::string& out_csv) {
  std::vector<const char*> ptrs;
  for (const auto& d : dirs) ptrs.push_back(d.c_str());
  if (auto st = advimit_aggregate(ptrs.data(), ptrs.size(), out_csv.c_str()); st != ADVIMIT_OK)
    return report_failure(st);
  std::ifstream in(out_csv);
  std::cout << in.rdbuf();
  return 0;
}

int cmd_sweep(const CommonFlags& f, const std::string& seeds_arg, int jobs) {
  std::vector<long> seeds;
  std::stringstream ss(seeds_arg);
  for (std::string tok; std::getline(ss, tok, ',');) {
    try {
      seeds.push_back(std::stol(tok));
    } catch (const std::exception&) {
      std::cerr << "advimit: invalid value for '--seeds': '" << tok << "'\n";
      return 1;
    }
  }
  if (seeds.empty()) {
    std::cerr << "advimit: '--seeds' is empty\n";
    return 1;
  }
  ConfigHandle probe;
  if (auto st = build_config(f, probe); st != ADVIMIT_OK) return report_failure(st);
  const std::string base = f.out.empty() ? get_key(probe.ptr, "out") : f.out;
  if (base.empty()) {
    std::cerr << "advimit: sweep needs '--out'\n";
    return 1;
  }

  std::vector<std::string> dirs;
  for (long s : seeds) dirs.push_back((fs::path(base) / ("seed_" + std::to_string(s))).string());

  std::atomic<std::size_t> next{0};
  std::mutex io;
  int worst = 0;
  auto worker = [&] {
    for (std::size_t i; (i = next++) < seeds.size();) {
      CommonFlags mine = f;
      mine.seed = seeds[i];
      mine.out = dirs[i];
      ConfigHandle cfg;
      ReportHandle rep;
      advimit_status st = build_config(mine, cfg);
      if (st == ADVIMIT_OK) st = advimit_run(cfg.ptr, &rep.ptr);
      std::lock_guard lock(io);
      if (st != ADVIMIT_OK) {
        worst = std::max(worst, report_failure(st));
      } else {
        print_summary(rep.ptr);
      }
    }
  };
  const int n = std::clamp(jobs, 1, static_cast<int>(seeds.size()));
  std::vector<std::thread> pool;
  for (int i = 0; i < n; ++i) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
  if (worst != 0) return worst;
  return aggregate(dirs, (fs::path(base) / "aggregate.csv").string());
}

int cmd_teach(const std::string& env, const std::string& checkpoint, const std::string& out, double tol) {
  if (checkpoint.empty()) {
    std::size_t states = 0;
    double residual = 0.0;
    if (auto st = advimit_teach_oracle(env.c_str(), tol, out.c_str(), &states, &residual); st != ADVIMIT_OK)
      return report_failure(st);
    std::printf("oracle: %zu states, residual %.3g -> %s\n", states, residual, out.c_str());
    return 0;
  }
  double agreement = 0.0;
  if (auto st = advimit_teach_checkpoint(env.c_str(), checkpoint.c_str(), out.c_str(), &agreement);
      st != ADVIMIT_OK)
    return report_failure(st);
  std::printf("checkpoint teacher: %.2f%% agreement with the oracle -> %s\n", 100.0 * agreement, out.c_str());
  return 0;
}

int cmd_report(const std::vector<std::string>& inputs, std::string out) {
  std::vector<std::string> dirs;
  for (const auto& in : inputs) {
    if (fs::exists(fs::path(in) / "report.csv")) {
      dirs.push_back(in);
      continue;
    }
    std::vector<std::string> found;
    if (fs::is_directory(in))
      for (const auto& e : fs::directory_iterator(in))
        if (e.is_directory() && fs::exists(e.path() / "report.csv")) found.push_back(e.path().string());
    if (found.empty()) {
      std::cerr << "advimit: no report.csv under '" << in << "'\n";
      return 1;
    }
    std::sort(found.begin(), found.end());
    dirs.insert(dirs.end(), found.begin(), found.end());
    if (out.empty() && inputs.size() == 1) out = (fs::path(in) / "aggregate.csv").string();
  }
  if (out.empty()) {
    std::cerr << "advimit: report needs '--out'\n";
    return 1;
  }
  return aggregate(dirs, out);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Advice imitation and reuse experiments"};
  app.require_subcommand(1);
  app.set_version_flag("--version", advimit_version());

  CommonFlags train_flags;
  auto* train = app.add_subcommand("train", "Run one training session");
  add_common(train, train_flags);

  CommonFlags sweep_flags;
  std::string seeds = "1,2,3";
  int jobs = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  auto* sweep = app.add_subcommand("sweep", "Run one session per seed and aggregate");
  add_common(sweep, sweep_flags);
  sweep->add_option("--seeds", seeds, "Comma-separated seeds");
  sweep->add_option("--jobs", jobs, "Parallel runs");

  std::string teach_env, teach_ckpt, teach_out;
  double teach_tol = 1e-10;
  auto* teach = app.add_subcommand("teach", "Build and export a teacher");
  teach->add_option("--env", teach_env, "Environment spec path or bandit:r0,r1,...")->required();
  teach->add_option("--checkpoint", teach_ckpt, "Network checkpoint to use instead of the oracle");
  teach->add_option("--out", teach_out, "Output file")->required();
  teach->add_option("--tol", teach_tol, "Value-iteration tolerance");

  std::vector<std::string> report_inputs;
  std::string report_out;
  auto* report = app.add_subcommand("report", "Aggregate run directories into a CSV");
  report->add_option("dirs", report_inputs, "Run directories or sweep directories")->required();
  report->add_option("--out", report_out, "Output CSV");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  if (train->parsed()) return cmd_train(train_flags);
  if (sweep->parsed()) return cmd_sweep(sweep_flags, seeds, jobs);
  if (teach->parsed()) return cmd_teach(teach_env, teach_ckpt, teach_out, teach_tol);
  return cmd_report(report_inputs, report_out);
}
