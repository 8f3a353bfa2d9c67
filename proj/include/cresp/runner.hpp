#pragma once
#include <string>
#include <vector>

#include "cresp/config.hpp"
#include "cresp/probes.hpp"

namespace cresp {

struct TrainResult {
  std::string run_dir;
  int64_t steps_done = 0;
  std::vector<double> eval_steps;
  std::vector<double> eval_test_returns;  // mean test return per eval checkpoint
  double final_test_return = 0;
};

std::string run_dir_for(const RunConfig& cfg, Objective o, int t_len, uint64_t master_seed);

// Full training run into its run directory (resolved config echo, manifest,
// metrics.csv, resume/final checkpoints). `resume_from` restores a checkpoint
// and continues; metrics stay byte-identical with an uninterrupted run.
TrainResult run_train(const RunConfig& cfg, uint64_t master_seed, const std::string& resume_from = "");

struct EvalResult {
  double mean_return = 0;
  double std_return = 0;
  int episodes = 0;
};
EvalResult run_eval(const RunConfig& cfg, const std::string& checkpoint, uint64_t eval_seed,
                    int episodes_per_env);

struct ProbeRunResult {
  std::string objective;
  uint64_t probe_seed = 0;
  double env_label_ce = 0;
  double latent_loss = 0;
};
std::vector<ProbeRunResult> run_probe(const RunConfig& cfg, const std::string& checkpoint,
                                      const std::vector<uint64_t>& probe_seeds,
                                      const std::string& out_csv);

struct OracleVerifyResult {
  int n_total = 0;
  int n_pass = 0;
  bool all_pass() const { return n_total > 0 && n_pass == n_total; }
};
OracleVerifyResult run_oracle_verify(int instances, const std::vector<int>& t_values,
                                     uint64_t seed, const std::string& out_csv);

struct SweepResult {
  int n_runs = 0;
  int n_failed = 0;
  std::string summary_csv;
};
SweepResult run_sweep(const RunConfig& cfg);

void run_export_repr(const RunConfig& cfg, const std::string& checkpoint, int n, uint64_t seed,
                     const std::string& out_csv);

// master seed recorded in a run directory's manifest
uint64_t manifest_master_seed(const std::string& run_dir);

}  // namespace cresp
