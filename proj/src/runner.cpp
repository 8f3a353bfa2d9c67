#include "cresp/runner.hpp"

#include <cinttypes>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "cresp/tabular.hpp"

namespace cresp {
namespace fs = std::filesystem;

namespace {

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << text;
}

std::vector<Env*> raw_envs(const std::vector<std::unique_ptr<Env>>& envs) {
  std::vector<Env*> out;
  for (const auto& e : envs) out.push_back(e.get());
  return out;
}

std::vector<double> random_action(int dim, Rng& rng) {
  std::vector<double> a(static_cast<size_t>(dim));
  for (auto& v : a) v = rng.uniform(-1.0, 1.0);
  return a;
}

struct EvalStats {
  double mean = 0, stddev = 0;
};

EvalStats evaluate_policy(Agent& agent, const std::vector<std::unique_ptr<Env>>& envs,
                          int episodes_per_env, uint64_t master_seed, int64_t eval_idx) {
  std::vector<double> returns;
  Rng act_rng(Rng::derive(master_seed, "eval_act", static_cast<uint64_t>(eval_idx)));
  for (size_t e = 0; e < envs.size(); ++e) {
    for (int ep = 0; ep < episodes_per_env; ++ep) {
      const uint64_t ep_seed = Rng::derive(
          master_seed, "eval_episode",
          (static_cast<uint64_t>(eval_idx) << 32) ^ (static_cast<uint64_t>(e) << 16) ^ static_cast<uint64_t>(ep));
      Observation o = envs[e]->reset(ep_seed);
      double ret = 0;
      while (true) {
        auto a = agent.act(o, true, act_rng);
        auto sr = envs[e]->step(a);
        ret += sr.reward;
        o = sr.obs;
        if (sr.done) break;
      }
      returns.push_back(ret);
    }
  }
  EvalStats st;
  if (returns.empty()) return st;
  for (double r : returns) st.mean += r;
  st.mean /= static_cast<double>(returns.size());
  double var = 0;
  for (double r : returns) var += (r - st.mean) * (r - st.mean);
  st.stddev = std::sqrt(var / static_cast<double>(returns.size()));
  return st;
}

struct RunState {
  int64_t step = 0;
  int64_t eval_idx = 0;
  std::vector<uint64_t> ep_counter;
  std::vector<int> need_reset;
  std::vector<double> episode_return;
  std::vector<double> last_episode_return;
  std::vector<std::vector<double>> current_obs;
  double critic_sum = 0, aux_sum = 0;
  int64_t loss_count = 0;
  std::string metrics;
};

void save_run_state(CheckpointWriter& w, const RunState& st, const Rng& rollout_rng,
                    const std::vector<std::unique_ptr<Env>>& train_envs,
                    const std::vector<std::unique_ptr<Env>>& test_envs, const ReplayBuffer& buf) {
  auto& meta = w.section("run.meta");
  auto put = [&meta](const void* p, size_t n) { meta.write(reinterpret_cast<const char*>(p), static_cast<std::streamsize>(n)); };
  put(&st.step, sizeof st.step);
  put(&st.eval_idx, sizeof st.eval_idx);
  int64_t n = static_cast<int64_t>(st.ep_counter.size());
  put(&n, sizeof n);
  for (int64_t i = 0; i < n; ++i) {
    put(&st.ep_counter[static_cast<size_t>(i)], sizeof(uint64_t));
    int64_t nr = st.need_reset[static_cast<size_t>(i)];
    put(&nr, sizeof nr);
    put(&st.episode_return[static_cast<size_t>(i)], sizeof(double));
    put(&st.last_episode_return[static_cast<size_t>(i)], sizeof(double));
    int64_t olen = static_cast<int64_t>(st.current_obs[static_cast<size_t>(i)].size());
    put(&olen, sizeof olen);
    put(st.current_obs[static_cast<size_t>(i)].data(), sizeof(double) * static_cast<size_t>(olen));
  }
  put(&st.critic_sum, sizeof st.critic_sum);
  put(&st.aux_sum, sizeof st.aux_sum);
  put(&st.loss_count, sizeof st.loss_count);
  rollout_rng.save(w.section("run.rollout_rng"));
  auto& envs = w.section("run.envs");
  for (const auto& e : train_envs) e->save(envs);
  for (const auto& e : test_envs) e->save(envs);
  buf.save(w.section("run.replay"));
  w.section("run.metrics") << st.metrics;
}

void load_run_state(CheckpointReader& r, RunState& st, Rng& rollout_rng,
                    std::vector<std::unique_ptr<Env>>& train_envs,
                    std::vector<std::unique_ptr<Env>>& test_envs, ReplayBuffer& buf) {
  auto meta = r.open("run.meta");
  auto get = [&meta](void* p, size_t n) {
    if (!meta.read(reinterpret_cast<char*>(p), static_cast<std::streamsize>(n)))
      throw std::runtime_error("run checkpoint truncated");
  };
  get(&st.step, sizeof st.step);
  get(&st.eval_idx, sizeof st.eval_idx);
  int64_t n = 0;
  get(&n, sizeof n);
  if (n != static_cast<int64_t>(train_envs.size()))
    throw std::runtime_error("run checkpoint does not match the configured environment count");
  st.ep_counter.resize(static_cast<size_t>(n));
  st.need_reset.resize(static_cast<size_t>(n));
  st.episode_return.resize(static_cast<size_t>(n));
  st.last_episode_return.resize(static_cast<size_t>(n));
  st.current_obs.resize(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) {
    get(&st.ep_counter[static_cast<size_t>(i)], sizeof(uint64_t));
    int64_t nr = 0;
    get(&nr, sizeof nr);
    st.need_reset[static_cast<size_t>(i)] = static_cast<int>(nr);
    get(&st.episode_return[static_cast<size_t>(i)], sizeof(double));
    get(&st.last_episode_return[static_cast<size_t>(i)], sizeof(double));
    int64_t olen = 0;
    get(&olen, sizeof olen);
    st.current_obs[static_cast<size_t>(i)].resize(static_cast<size_t>(olen));
    get(st.current_obs[static_cast<size_t>(i)].data(), sizeof(double) * static_cast<size_t>(olen));
  }
  get(&st.critic_sum, sizeof st.critic_sum);
  get(&st.aux_sum, sizeof st.aux_sum);
  get(&st.loss_count, sizeof st.loss_count);
  auto rr = r.open("run.rollout_rng");
  rollout_rng.load(rr);
  auto envs = r.open("run.envs");
  for (auto& e : train_envs) e->load(envs);
  for (auto& e : test_envs) e->load(envs);
  auto rep = r.open("run.replay");
  buf.load(rep);
  auto m = r.open("run.metrics");
  std::stringstream ss;
  ss << m.rdbuf();
  st.metrics = ss.str();
}

}  // namespace

std::string run_dir_for(const RunConfig& cfg, Objective o, int t_len, uint64_t master_seed) {
  std::ostringstream os;
  os << cfg.out_dir << "/" << objective_name(o) << "_T" << t_len << "_s" << master_seed;
  return os.str();
}

uint64_t manifest_master_seed(const std::string& run_dir) {
  std::ifstream in(run_dir + "/manifest.txt");
  if (!in) throw std::runtime_error("cannot open manifest in " + run_dir);
  std::string line;
  while (std::getline(in, line)) {
    const std::string key = "master_seed = ";
    if (line.rfind(key, 0) == 0) return std::strtoull(line.c_str() + key.size(), nullptr, 10);
  }
  throw std::runtime_error("manifest in " + run_dir + " has no master_seed");
}

TrainResult run_train(const RunConfig& cfg, uint64_t master_seed, const std::string& resume_from) {
  EnvSpec spec = cfg.env;
  spec.seed = Rng::derive(master_seed, "env_family", 0);
  EnvFamily fam = spawn_family(spec, cfg.n_train, cfg.n_test);
  const int n_train = cfg.n_train;

  Agent agent(cfg.agent_config(Rng::derive(master_seed, "agent", 0)));
  ReplayBuffer buf(cfg.replay_capacity);
  Rng rollout_rng(Rng::derive(master_seed, "rollout", 0));

  const int t_len = agent.cfg().t_len;
  const std::string run_dir = run_dir_for(cfg, cfg.objective, t_len, master_seed);
  fs::create_directories(run_dir);

  RunState st;
  st.ep_counter.assign(static_cast<size_t>(n_train), 0);
  st.need_reset.assign(static_cast<size_t>(n_train), 1);
  st.episode_return.assign(static_cast<size_t>(n_train), 0.0);
  st.last_episode_return.assign(static_cast<size_t>(n_train), 0.0);
  st.current_obs.assign(static_cast<size_t>(n_train), {});
  st.metrics =
      "step,env_steps,objective,train_return,test_return_mean,test_return_std,"
      "sac_critic_loss,aux_loss,alpha\n";

  if (!resume_from.empty()) {
    CheckpointReader reader(resume_from);
    agent.load(reader);
    load_run_state(reader, st, rollout_rng, fam.train, fam.test, buf);
  }

  {
    RunConfig echo = cfg;
    echo.seeds = {master_seed};
    write_text(run_dir + "/config.cfg", render_config(echo));
    write_manifest(run_dir + "/manifest.txt",
                   {{"master_seed", std::to_string(master_seed)},
                    {"objective", objective_name(cfg.objective)},
                    {"reward_length", std::to_string(t_len)},
                    {"steps", std::to_string(cfg.steps)},
                    {"env_family_seed", std::to_string(spec.seed)},
                    {"seed_scheme", "derive(master, stream_name, index); streams: env_family, "
                                    "agent, rollout, episode, eval_episode, eval_act, probe"}},
                   {&agent.enc_store(), &agent.actor_store(), &agent.critic_store(), &agent.aux_store()});
  }

  const std::string metrics_path = run_dir + "/metrics.csv";
  write_text(metrics_path, st.metrics);
  std::ofstream metrics_out(metrics_path, std::ios::binary | std::ios::app);

  TrainResult result;
  result.run_dir = run_dir;

  auto write_checkpoint = [&](const std::string& name) {
    CheckpointWriter w;
    agent.save(w);
    save_run_state(w, st, rollout_rng, fam.train, fam.test, buf);
    w.write(run_dir + "/" + name);
  };

  while (st.step < cfg.steps) {
    st.step += 1;
    for (int e = 0; e < n_train; ++e) {
      auto& env = *fam.train[static_cast<size_t>(e)];
      if (st.need_reset[static_cast<size_t>(e)]) {
        const uint64_t ep_seed = Rng::derive(
            master_seed, "episode",
            (static_cast<uint64_t>(e) << 40) + st.ep_counter[static_cast<size_t>(e)]);
        st.ep_counter[static_cast<size_t>(e)] += 1;
        st.current_obs[static_cast<size_t>(e)] = env.reset(ep_seed).data;
        st.episode_return[static_cast<size_t>(e)] = 0;
        st.need_reset[static_cast<size_t>(e)] = 0;
      }
      Observation o{spec.obs_shape(), st.current_obs[static_cast<size_t>(e)]};
      std::vector<double> a = st.step <= cfg.init_steps
                                  ? random_action(spec.act_dim(), rollout_rng)
                                  : agent.act(o, false, rollout_rng);
      auto sr = env.step(a);
      buf.push(o, a, sr.reward, sr.obs, sr.done, e);
      st.episode_return[static_cast<size_t>(e)] += sr.reward;
      st.current_obs[static_cast<size_t>(e)] = sr.obs.data;
      if (sr.done) {
        st.last_episode_return[static_cast<size_t>(e)] = st.episode_return[static_cast<size_t>(e)];
        st.need_reset[static_cast<size_t>(e)] = 1;
      }
    }
    if (st.step > cfg.init_steps) {
      auto stats = agent.update(buf);
      st.critic_sum += stats.critic_loss;
      st.aux_sum += stats.aux_loss;
      st.loss_count += 1;
    }
    if (st.step % cfg.eval_every == 0 || st.step == cfg.steps) {
      EvalStats ev = evaluate_policy(agent, fam.test, cfg.eval_episodes, master_seed, st.eval_idx);
      st.eval_idx += 1;
      double train_ret = 0;
      for (double r : st.last_episode_return) train_ret += r;
      train_ret /= static_cast<double>(n_train);
      const double critic_avg = st.loss_count ? st.critic_sum / static_cast<double>(st.loss_count) : 0.0;
      const double aux_avg = st.loss_count ? st.aux_sum / static_cast<double>(st.loss_count) : 0.0;
      st.critic_sum = st.aux_sum = 0;
      st.loss_count = 0;
      std::ostringstream row;
      row << st.step << "," << st.step * n_train << "," << objective_name(cfg.objective) << ","
          << fmt_double(train_ret) << "," << fmt_double(ev.mean) << "," << fmt_double(ev.stddev)
          << "," << fmt_double(critic_avg) << "," << fmt_double(aux_avg) << ","
          << fmt_double(agent.alpha()) << "\n";
      st.metrics += row.str();
      metrics_out << row.str();
      metrics_out.flush();
      result.eval_steps.push_back(static_cast<double>(st.step));
      result.eval_test_returns.push_back(ev.mean);
    }
    if (st.step % cfg.checkpoint_every == 0 && st.step < cfg.steps) write_checkpoint("resume.ckpt");
  }

  write_checkpoint("final.ckpt");
  result.steps_done = st.step;
  result.final_test_return = result.eval_test_returns.empty() ? 0.0 : result.eval_test_returns.back();
  return result;
}

EvalResult run_eval(const RunConfig& cfg, const std::string& checkpoint, uint64_t eval_seed,
                    int episodes_per_env) {
  EnvSpec spec = cfg.env;
  spec.seed = Rng::derive(manifest_master_seed(fs::path(checkpoint).parent_path().string()),
                          "env_family", 0);
  EnvFamily fam = spawn_family(spec, cfg.n_train, cfg.n_test);
  Agent agent(cfg.agent_config(0));
  CheckpointReader reader(checkpoint);
  agent.load(reader);
  EvalStats ev = evaluate_policy(agent, fam.test.empty() ? fam.train : fam.test, episodes_per_env,
                                 eval_seed, 0);
  EvalResult out;
  out.mean_return = ev.mean;
  out.std_return = ev.stddev;
  out.episodes = episodes_per_env * static_cast<int>((fam.test.empty() ? fam.train : fam.test).size());
  return out;
}

std::vector<ProbeRunResult> run_probe(const RunConfig& cfg, const std::string& checkpoint,
                                      const std::vector<uint64_t>& probe_seeds,
                                      const std::string& out_csv) {
  const std::string run_dir = fs::path(checkpoint).parent_path().string();
  const uint64_t master_seed = manifest_master_seed(run_dir);
  EnvSpec spec = cfg.env;
  spec.seed = Rng::derive(master_seed, "env_family", 0);
  EnvFamily fam = spawn_family(spec, cfg.n_train, cfg.n_test);
  Agent agent(cfg.agent_config(0));
  CheckpointReader reader(checkpoint);
  agent.load(reader);

  std::vector<ProbeRunResult> rows;
  std::ostringstream csv;
  csv << "objective,probe_seed,env_label_ce,latent_loss\n";
  for (uint64_t ps : probe_seeds) {
    Rng rng(Rng::derive(master_seed, "probe", ps));
    ProbeDataset ds = collect_probe_dataset(agent, raw_envs(fam.train), cfg.probe_n, rng);
    ProbeRunResult r;
    r.objective = objective_name(cfg.objective);
    r.probe_seed = ps;
    r.env_label_ce = train_env_label_probe(ds, Rng::derive(master_seed, "probe_env", ps)).best_eval;
    r.latent_loss = train_latent_probe(ds, Rng::derive(master_seed, "probe_latent", ps)).best_eval;
    rows.push_back(r);
    csv << r.objective << "," << ps << "," << fmt_double(r.env_label_ce) << ","
        << fmt_double(r.latent_loss) << "\n";
  }
  if (!out_csv.empty()) write_text(out_csv, csv.str());
  return rows;
}

OracleVerifyResult run_oracle_verify(int instances, const std::vector<int>& t_values,
                                     uint64_t seed, const std::string& out_csv) {
  OracleVerifyResult res;
  std::ostringstream csv;
  csv << "instance,n_states,n_actions,n_rewards,gamma,T,n_blocks,min_gap,max_gap,bound,pass\n";
  Rng rng(Rng::derive(seed, "oracle_verify", 0));
  const double gammas[3] = {0.8, 0.9, 0.95};
  for (int i = 0; i < instances; ++i) {
    const int ns = 2 + static_cast<int>(rng.uniform_int(5));
    const int na = 1 + static_cast<int>(rng.uniform_int(3));
    const int nr = 1 + static_cast<int>(rng.uniform_int(3));
    const double gamma = gammas[i % 3];
    TabularPOMDP m = random_pomdp(rng, ns, na, nr, gamma);
    for (int t : t_values) {
      auto part = t_level_partition(m, t);
      GapAudit audit = theorem1_gap(m, t);
      res.n_total += 1;
      if (audit.pass) res.n_pass += 1;
      csv << i << "," << ns << "," << na << "," << nr << "," << fmt_double(gamma) << "," << t
          << "," << n_blocks(part) << "," << fmt_double(audit.min_gap) << ","
          << fmt_double(audit.max_gap) << "," << fmt_double(audit.bound) << ","
          << (audit.pass ? "true" : "false") << "\n";
    }
  }
  if (!out_csv.empty()) write_text(out_csv, csv.str());
  return res;
}

SweepResult run_sweep(const RunConfig& cfg) {
  SweepResult res;
  std::vector<Objective> objectives =
      cfg.sweep_objectives.empty() ? std::vector<Objective>{cfg.objective} : cfg.sweep_objectives;
  std::vector<int> t_values = cfg.sweep_t.empty() ? std::vector<int>{0} : cfg.sweep_t;
  fs::create_directories(cfg.out_dir);
  std::ostringstream csv;
  csv << "objective,T,seed,final_test_return,run_dir,status\n";
  for (Objective o : objectives) {
    for (int t : t_values) {
      for (uint64_t seed : cfg.seeds) {
        RunConfig sub = cfg;
        sub.objective = o;
        if (t > 0) sub.t_len = t;
        res.n_runs += 1;
        const int t_res = t > 0 ? t : sub.resolved_t_len();
        try {
          TrainResult tr = run_train(sub, seed);
          csv << objective_name(o) << "," << t_res << "," << seed << ","
              << fmt_double(tr.final_test_return) << "," << tr.run_dir << ",ok\n";
        } catch (const std::exception& ex) {
          res.n_failed += 1;
          csv << objective_name(o) << "," << t_res << "," << seed << ",nan,"
              << run_dir_for(sub, o, t_res, seed) << ",failed: " << ex.what() << "\n";
        }
      }
    }
  }
  res.summary_csv = cfg.out_dir + "/summary.csv";
  write_text(res.summary_csv, csv.str());
  return res;
}

void run_export_repr(const RunConfig& cfg, const std::string& checkpoint, int n, uint64_t seed,
                     const std::string& out_csv) {
  const std::string run_dir = fs::path(checkpoint).parent_path().string();
  const uint64_t master_seed = manifest_master_seed(run_dir);
  EnvSpec spec = cfg.env;
  spec.seed = Rng::derive(master_seed, "env_family", 0);
  EnvFamily fam = spawn_family(spec, cfg.n_train, cfg.n_test);
  Agent agent(cfg.agent_config(0));
  CheckpointReader reader(checkpoint);
  agent.load(reader);
  Rng rng(Rng::derive(seed, "export", 0));
  ProbeDataset ds = collect_probe_dataset(agent, raw_envs(fam.train), n, rng);
  std::ostringstream csv;
  csv << "env_id,latent_label";
  const size_t latent_dim = ds.latent_vec.empty() ? 0 : ds.latent_vec[0].size();
  for (size_t i = 0; i < latent_dim; ++i) csv << ",s" << i;
  const size_t repr_dim = ds.z.empty() ? 0 : ds.z[0].size();
  for (size_t i = 0; i < repr_dim; ++i) csv << ",z" << i;
  csv << "\n";
  for (size_t r = 0; r < ds.z.size(); ++r) {
    csv << ds.env_label[r] << "," << ds.latent_label[r];
    for (double v : ds.latent_vec[r]) csv << "," << fmt_double(v);
    for (double v : ds.z[r]) csv << "," << fmt_double(v);
    csv << "\n";
  }
  write_text(out_csv, csv.str());
}

}  // namespace cresp
