// cresp: train / eval / probe / oracle-verify / sweep / export-repr
#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "cresp/config.hpp"
#include "cresp/runner.hpp"

namespace {

cresp::RunConfig load_config(const std::string& path) {
  if (path.empty()) return cresp::parse_config_text("");
  return cresp::parse_config(path);
}

int cmd_train(const std::string& config_path, const std::vector<uint64_t>& seeds, bool resume) {
  cresp::RunConfig cfg = load_config(config_path);
  if (!seeds.empty()) cfg.seeds = seeds;
  for (uint64_t seed : seeds.empty() ? cfg.seeds : seeds) {
    std::string resume_from;
    if (resume) {
      std::string dir = cresp::run_dir_for(cfg, cfg.objective, cfg.resolved_t_len(), seed);
      resume_from = dir + "/resume.ckpt";
    }
    cresp::TrainResult res = cresp::run_train(cfg, seed, resume_from);
    std::printf("train seed=%llu dir=%s steps=%lld final_test_return=%.6f\n",
                (unsigned long long)seed, res.run_dir.c_str(), (long long)res.steps_done,
                res.final_test_return);
  }
  return 0;
}

int cmd_eval(const std::string& config_path, const std::string& checkpoint, int episodes,
             uint64_t seed) {
  cresp::RunConfig cfg = load_config(config_path);
  cresp::EvalResult res = cresp::run_eval(cfg, checkpoint, seed, episodes);
  std::printf("eval checkpoint=%s episodes=%d mean_return=%.6f std_return=%.6f\n",
              checkpoint.c_str(), res.episodes, res.mean_return, res.std_return);
  return 0;
}

int cmd_probe(const std::string& config_path, const std::string& checkpoint,
              const std::vector<uint64_t>& probe_seeds, const std::string& out_csv) {
  cresp::RunConfig cfg = load_config(config_path);
  std::vector<uint64_t> seeds = probe_seeds.empty() ? std::vector<uint64_t>{1, 2, 3} : probe_seeds;
  auto rows = cresp::run_probe(cfg, checkpoint, seeds, out_csv);
  for (const auto& r : rows) {
    std::printf("probe objective=%s seed=%llu env_label_ce=%.6f latent_loss=%.6f\n",
                r.objective.c_str(), (unsigned long long)r.probe_seed, r.env_label_ce,
                r.latent_loss);
  }
  return 0;
}

int cmd_oracle_verify(int instances, const std::vector<int>& t_values, uint64_t seed,
                      const std::string& out_csv) {
  std::vector<int> ts = t_values.empty() ? std::vector<int>{1, 2, 3} : t_values;
  cresp::OracleVerifyResult res = cresp::run_oracle_verify(instances, ts, seed, out_csv);
  std::printf("oracle-verify pass=%d/%d\n", res.n_pass, res.n_total);
  return res.all_pass() ? 0 : 3;
}

int cmd_sweep(const std::string& config_path) {
  cresp::RunConfig cfg = load_config(config_path);
  cresp::SweepResult res = cresp::run_sweep(cfg);
  std::printf("sweep runs=%d failed=%d summary=%s\n", res.n_runs, res.n_failed,
              res.summary_csv.c_str());
  return res.n_failed == 0 ? 0 : 2;
}

int cmd_export_repr(const std::string& config_path, const std::string& checkpoint, int n,
                    uint64_t seed, const std::string& out_csv) {
  cresp::RunConfig cfg = load_config(config_path);
  cresp::run_export_repr(cfg, checkpoint, n, seed, out_csv);
  std::printf("export-repr n=%d out=%s\n", n, out_csv.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"characteristic-function reward-sequence representation lab"};
  app.require_subcommand(1);

  std::string config_path, checkpoint, out_csv;
  std::vector<uint64_t> seeds, probe_seeds;
  std::vector<int> t_values;
  bool resume = false;
  int episodes = 10, instances = 50, export_n = 2000;
  uint64_t seed = 1;

  auto* train = app.add_subcommand("train", "train one run per seed");
  train->add_option("config", config_path, "config file");
  train->add_option("--seed", seeds, "override [run] seeds");
  train->add_flag("--resume", resume, "continue from <run_dir>/resume.ckpt");

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on the test environments");
  eval->add_option("config", config_path, "config file");
  eval->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  eval->add_option("--episodes", episodes, "episodes per test environment");
  eval->add_option("--seed", seed, "evaluation seed");

  auto* probe = app.add_subcommand("probe", "linear-probe diagnostics for a checkpoint");
  probe->add_option("config", config_path, "config file");
  probe->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  probe->add_option("--probe-seeds", probe_seeds, "probe seeds (default 1 2 3)");
  probe->add_option("--out", out_csv, "output csv");

  auto* oracle = app.add_subcommand("oracle-verify", "audit the value-gap bound on random instances");
  oracle->add_option("--instances", instances, "instances per horizon");
  oracle->add_option("--T", t_values, "horizons (default 1 2 3)");
  oracle->add_option("--seed", seed, "instance seed");
  oracle->add_option("--out", out_csv, "output csv");

  auto* sweep = app.add_subcommand("sweep", "run the [sweep] grid from a config");
  sweep->add_option("config", config_path, "config file")->required();

  auto* exp = app.add_subcommand("export-repr", "dump latent representations to csv");
  exp->add_option("config", config_path, "config file");
  exp->add_option("--checkpoint", checkpoint, "checkpoint file")->required();
  exp->add_option("-n", export_n, "states to export");
  exp->add_option("--seed", seed, "rollout seed");
  exp->add_option("--out", out_csv, "output csv")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (train->parsed()) return cmd_train(config_path, seeds, resume);
    if (eval->parsed()) return cmd_eval(config_path, checkpoint, episodes, seed);
    if (probe->parsed()) return cmd_probe(config_path, checkpoint, probe_seeds, out_csv);
    if (oracle->parsed()) return cmd_oracle_verify(instances, t_values, seed, out_csv);
    if (sweep->parsed()) return cmd_sweep(config_path);
    if (exp->parsed()) return cmd_export_repr(config_path, checkpoint, export_n, seed, out_csv);
  } catch (const cresp::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
