#include "cresp/config.hpp"

#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace cresp {
namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

double parse_double(const std::string& key, const std::string& v) {
  size_t pos = 0;
  double out = 0;
  try {
    out = std::stod(v, &pos);
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "': expected a number, got '" + v + "'");
  }
  if (pos != v.size()) throw ConfigError("key '" + key + "': expected a number, got '" + v + "'");
  return out;
}

int64_t parse_int(const std::string& key, const std::string& v) {
  size_t pos = 0;
  long long out = 0;
  try {
    out = std::stoll(v, &pos);
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "': expected an integer, got '" + v + "'");
  }
  if (pos != v.size()) throw ConfigError("key '" + key + "': expected an integer, got '" + v + "'");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("key '" + key + "': expected true/false, got '" + v + "'");
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

Objective parse_objective(const std::string& key, const std::string& v) {
  try {
    return objective_from_string(v);
  } catch (const std::exception&) {
    throw ConfigError("key '" + key + "': unknown objective '" + v + "'");
  }
}

}  // namespace

int RunConfig::resolved_t_len() const {
  if (t_len > 0) return t_len;
  return objective == Objective::CrespT ? 2 : 5;
}

PredictorKind RunConfig::resolved_predictor_for(Objective o) const {
  if (predictor_set) return predictor;
  return o == Objective::CrespT ? PredictorKind::Transformer : PredictorKind::Mlp;
}

PredictorKind RunConfig::resolved_predictor() const { return resolved_predictor_for(objective); }

AgentConfig RunConfig::agent_config_for(Objective o, int t_len_override, uint64_t agent_seed) const {
  AgentConfig a;
  a.enc.kind = encoder;
  a.enc.obs_shape = env.obs_shape();
  a.enc.repr_dim = repr_dim;
  a.enc.hidden = enc_hidden;
  a.act_dim = env.act_dim();
  a.hidden = hidden;
  a.gamma = env.gamma;
  a.lr = lr;
  a.batch = batch;
  a.aux_batch = aux_batch;
  a.tau = tau;
  a.critic_target_update_freq = critic_target_update_freq;
  a.actor_update_freq = actor_update_freq;
  a.init_temperature = init_temperature;
  a.init_steps = init_steps;
  a.objective = o;
  a.predictor = resolved_predictor_for(o);
  a.t_len = t_len_override > 0 ? t_len_override : (t_len > 0 ? t_len : (o == Objective::CrespT ? 2 : 5));
  a.kappa = kappa;
  a.lambda = lambda;
  a.pred_hidden = pred_hidden;
  a.d_model = d_model;
  a.n_heads = n_heads;
  a.d_ff = d_ff;
  a.dropout = dropout;
  a.augment = augment && env.family == Family::Grid;
  a.max_shift = max_shift;
  a.seed = agent_seed;
  return a;
}

AgentConfig RunConfig::agent_config(uint64_t agent_seed) const {
  return agent_config_for(objective, 0, agent_seed);
}

RunConfig parse_config_text(const std::string& text) {
  RunConfig cfg;
  using Handler = std::function<void(const std::string&, const std::string&)>;
  std::map<std::string, std::map<std::string, Handler>> table;

  auto& run = table["run"];
  run["out_dir"] = [&](const std::string&, const std::string& v) { cfg.out_dir = v; };
  run["steps"] = [&](const std::string& k, const std::string& v) { cfg.steps = parse_int(k, v); };
  run["eval_every"] = [&](const std::string& k, const std::string& v) { cfg.eval_every = parse_int(k, v); };
  run["eval_episodes"] = [&](const std::string& k, const std::string& v) { cfg.eval_episodes = static_cast<int>(parse_int(k, v)); };
  run["seeds"] = [&](const std::string& k, const std::string& v) {
    cfg.seeds.clear();
    for (const auto& s : split_list(v)) cfg.seeds.push_back(static_cast<uint64_t>(parse_int(k, s)));
    if (cfg.seeds.empty()) throw ConfigError("key 'seeds': empty list");
  };
  run["objective"] = [&](const std::string& k, const std::string& v) { cfg.objective = parse_objective(k, v); };
  run["checkpoint_every"] = [&](const std::string& k, const std::string& v) { cfg.checkpoint_every = parse_int(k, v); };
  run["probe_n"] = [&](const std::string& k, const std::string& v) { cfg.probe_n = static_cast<int>(parse_int(k, v)); };
  run["replay_capacity"] = [&](const std::string& k, const std::string& v) { cfg.replay_capacity = parse_int(k, v); };

  auto& env = table["env"];
  env["family"] = [&](const std::string& k, const std::string& v) {
    if (v == "grid") cfg.env.family = Family::Grid;
    else if (v == "pointmass") cfg.env.family = Family::Pointmass;
    else if (v == "tabular") cfg.env.family = Family::Tabular;
    else throw ConfigError("key '" + k + "': unknown family '" + v + "'");
  };
  env["distractor"] = [&](const std::string& k, const std::string& v) {
    if (v == "color_drift") cfg.env.distractor = DistractorKind::ColorDrift;
    else if (v == "pattern_markov") cfg.env.distractor = DistractorKind::PatternMarkov;
    else throw ConfigError("key '" + k + "': unknown distractor '" + v + "'");
  };
  env["gamma"] = [&](const std::string& k, const std::string& v) { cfg.env.gamma = parse_double(k, v); };
  env["episode_len"] = [&](const std::string& k, const std::string& v) { cfg.env.episode_len = static_cast<int>(parse_int(k, v)); };
  env["grid_size"] = [&](const std::string& k, const std::string& v) { cfg.env.grid_size = static_cast<int>(parse_int(k, v)); };
  env["stochastic_reward"] = [&](const std::string& k, const std::string& v) { cfg.env.stochastic_reward = parse_bool(k, v); };
  env["n_train"] = [&](const std::string& k, const std::string& v) { cfg.n_train = static_cast<int>(parse_int(k, v)); };
  env["n_test"] = [&](const std::string& k, const std::string& v) { cfg.n_test = static_cast<int>(parse_int(k, v)); };
  env["tab_states"] = [&](const std::string& k, const std::string& v) { cfg.env.tab_states = static_cast<int>(parse_int(k, v)); };
  env["tab_actions"] = [&](const std::string& k, const std::string& v) { cfg.env.tab_actions = static_cast<int>(parse_int(k, v)); };
  env["tab_rewards"] = [&](const std::string& k, const std::string& v) { cfg.env.tab_rewards = static_cast<int>(parse_int(k, v)); };
  env["tab_chain"] = [&](const std::string& k, const std::string& v) { cfg.env.tab_chain = static_cast<int>(parse_int(k, v)); };

  auto& agent = table["agent"];
  agent["lr"] = [&](const std::string& k, const std::string& v) { cfg.lr = parse_double(k, v); };
  agent["batch"] = [&](const std::string& k, const std::string& v) { cfg.batch = static_cast<int>(parse_int(k, v)); };
  agent["aux_batch"] = [&](const std::string& k, const std::string& v) { cfg.aux_batch = static_cast<int>(parse_int(k, v)); };
  agent["hidden"] = [&](const std::string& k, const std::string& v) { cfg.hidden = static_cast<int>(parse_int(k, v)); };
  agent["repr_dim"] = [&](const std::string& k, const std::string& v) { cfg.repr_dim = static_cast<int>(parse_int(k, v)); };
  agent["encoder"] = [&](const std::string& k, const std::string& v) {
    if (v == "mlp") cfg.encoder = EncoderKind::Mlp;
    else if (v == "conv") cfg.encoder = EncoderKind::Conv;
    else throw ConfigError("key '" + k + "': unknown encoder '" + v + "'");
  };
  agent["enc_hidden"] = [&](const std::string& k, const std::string& v) { cfg.enc_hidden = static_cast<int>(parse_int(k, v)); };
  agent["tau"] = [&](const std::string& k, const std::string& v) { cfg.tau = parse_double(k, v); };
  agent["critic_target_update_freq"] = [&](const std::string& k, const std::string& v) { cfg.critic_target_update_freq = static_cast<int>(parse_int(k, v)); };
  agent["actor_update_freq"] = [&](const std::string& k, const std::string& v) { cfg.actor_update_freq = static_cast<int>(parse_int(k, v)); };
  agent["init_temperature"] = [&](const std::string& k, const std::string& v) { cfg.init_temperature = parse_double(k, v); };
  agent["init_steps"] = [&](const std::string& k, const std::string& v) { cfg.init_steps = static_cast<int>(parse_int(k, v)); };
  agent["augment"] = [&](const std::string& k, const std::string& v) { cfg.augment = parse_bool(k, v); };
  agent["max_shift"] = [&](const std::string& k, const std::string& v) { cfg.max_shift = static_cast<int>(parse_int(k, v)); };

  auto& aux = table["aux"];
  aux["T"] = [&](const std::string& k, const std::string& v) { cfg.t_len = static_cast<int>(parse_int(k, v)); };
  aux["kappa"] = [&](const std::string& k, const std::string& v) { cfg.kappa = static_cast<int>(parse_int(k, v)); };
  aux["lambda"] = [&](const std::string& k, const std::string& v) { cfg.lambda = parse_double(k, v); };
  aux["predictor"] = [&](const std::string& k, const std::string& v) {
    cfg.predictor_set = true;
    if (v == "mlp") cfg.predictor = PredictorKind::Mlp;
    else if (v == "transformer") cfg.predictor = PredictorKind::Transformer;
    else throw ConfigError("key '" + k + "': unknown predictor '" + v + "'");
  };
  aux["pred_hidden"] = [&](const std::string& k, const std::string& v) { cfg.pred_hidden = static_cast<int>(parse_int(k, v)); };
  aux["d_model"] = [&](const std::string& k, const std::string& v) { cfg.d_model = static_cast<int>(parse_int(k, v)); };
  aux["n_heads"] = [&](const std::string& k, const std::string& v) { cfg.n_heads = static_cast<int>(parse_int(k, v)); };
  aux["d_ff"] = [&](const std::string& k, const std::string& v) { cfg.d_ff = static_cast<int>(parse_int(k, v)); };
  aux["dropout"] = [&](const std::string& k, const std::string& v) { cfg.dropout = parse_double(k, v); };

  auto& sweep = table["sweep"];
  sweep["objectives"] = [&](const std::string& k, const std::string& v) {
    cfg.sweep_objectives.clear();
    for (const auto& s : split_list(v)) cfg.sweep_objectives.push_back(parse_objective(k, s));
  };
  sweep["T_values"] = [&](const std::string& k, const std::string& v) {
    cfg.sweep_t.clear();
    for (const auto& s : split_list(v)) cfg.sweep_t.push_back(static_cast<int>(parse_int(k, s)));
  };

  std::string section = "run";
  std::istringstream in(text);
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    line_no += 1;
    std::string line = raw;
    size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("line " + std::to_string(line_no) + ": malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      if (!table.count(section)) throw ConfigError("unknown section [" + section + "]");
      continue;
    }
    size_t eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(line_no) + ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    std::string value = trim(line.substr(eq + 1));
    auto& handlers = table.at(section);
    auto it = handlers.find(key);
    if (it == handlers.end()) throw ConfigError("unknown key '" + key + "' in section [" + section + "]");
    it->second(key, value);
  }

  // constraint validation
  if (cfg.env.gamma < 0 || cfg.env.gamma >= 1) throw ConfigError("key 'gamma': must be in [0,1)");
  if (cfg.env.episode_len < 1) throw ConfigError("key 'episode_len': must be >= 1");
  if (cfg.env.grid_size < 3) throw ConfigError("key 'grid_size': must be >= 3");
  if (cfg.lr <= 0) throw ConfigError("key 'lr': must be positive");
  if (cfg.batch < 1) throw ConfigError("key 'batch': must be >= 1");
  if (cfg.aux_batch < 2) throw ConfigError("key 'aux_batch': must be >= 2");
  if (cfg.hidden < 1) throw ConfigError("key 'hidden': must be >= 1");
  if (cfg.repr_dim < 1) throw ConfigError("key 'repr_dim': must be >= 1");
  if (cfg.tau <= 0 || cfg.tau > 1) throw ConfigError("key 'tau': must be in (0,1]");
  if (cfg.critic_target_update_freq < 1) throw ConfigError("key 'critic_target_update_freq': must be >= 1");
  if (cfg.actor_update_freq < 1) throw ConfigError("key 'actor_update_freq': must be >= 1");
  if (cfg.init_temperature <= 0) throw ConfigError("key 'init_temperature': must be positive");
  if (cfg.init_steps < 0) throw ConfigError("key 'init_steps': must be >= 0");
  if (cfg.max_shift < 0) throw ConfigError("key 'max_shift': must be >= 0");
  if (cfg.t_len < 0) throw ConfigError("key 'T': must be >= 1");
  if (cfg.kappa < 1) throw ConfigError("key 'kappa': must be >= 1");
  if (cfg.lambda < 0) throw ConfigError("key 'lambda': must be >= 0");
  if (cfg.dropout < 0 || cfg.dropout >= 1) throw ConfigError("key 'dropout': must be in [0,1)");
  if (cfg.d_model < 1 || cfg.n_heads < 1 || cfg.d_model % cfg.n_heads != 0)
    throw ConfigError("key 'd_model': must be a positive multiple of n_heads");
  if (cfg.d_ff < 1) throw ConfigError("key 'd_ff': must be >= 1");
  if (cfg.pred_hidden < 1) throw ConfigError("key 'pred_hidden': must be >= 1");
  if (cfg.n_train < 1) throw ConfigError("key 'n_train': must be >= 1");
  if (cfg.n_test < 0) throw ConfigError("key 'n_test': must be >= 0");
  if (cfg.steps < 0) throw ConfigError("key 'steps': must be >= 0");
  if (cfg.eval_every < 1) throw ConfigError("key 'eval_every': must be >= 1");
  if (cfg.eval_episodes < 1) throw ConfigError("key 'eval_episodes': must be >= 1");
  if (cfg.checkpoint_every < 1) throw ConfigError("key 'checkpoint_every': must be >= 1");
  if (cfg.probe_n < 10) throw ConfigError("key 'probe_n': must be >= 10");
  if (cfg.replay_capacity < 1) throw ConfigError("key 'replay_capacity': must be >= 1");
  if (cfg.encoder == EncoderKind::Conv && cfg.env.obs_shape().size() != 3)
    throw ConfigError("key 'encoder': conv requires an image observation family");
  if (cfg.env.family == Family::Tabular &&
      (cfg.env.tab_states < 2 || cfg.env.tab_actions < 1 || cfg.env.tab_rewards < 1 || cfg.env.tab_chain < 2))
    throw ConfigError("key 'tab_states': tabular family needs >= 2 states, >= 1 action, >= 1 reward, >= 2 chain states");
  return cfg;
}

RunConfig parse_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

std::string render_config(const RunConfig& cfg) {
  std::ostringstream os;
  os.precision(17);
  auto family = [&]() {
    switch (cfg.env.family) {
      case Family::Grid: return "grid";
      case Family::Pointmass: return "pointmass";
      case Family::Tabular: return "tabular";
    }
    return "grid";
  };
  os << "[run]\n";
  os << "out_dir = " << cfg.out_dir << "\n";
  os << "steps = " << cfg.steps << "\n";
  os << "eval_every = " << cfg.eval_every << "\n";
  os << "eval_episodes = " << cfg.eval_episodes << "\n";
  os << "seeds = ";
  for (size_t i = 0; i < cfg.seeds.size(); ++i) os << (i ? "," : "") << cfg.seeds[i];
  os << "\n";
  os << "objective = " << objective_name(cfg.objective) << "\n";
  os << "checkpoint_every = " << cfg.checkpoint_every << "\n";
  os << "probe_n = " << cfg.probe_n << "\n";
  os << "replay_capacity = " << cfg.replay_capacity << "\n";
  os << "\n[env]\n";
  os << "family = " << family() << "\n";
  os << "distractor = " << (cfg.env.distractor == DistractorKind::ColorDrift ? "color_drift" : "pattern_markov") << "\n";
  os << "gamma = " << cfg.env.gamma << "\n";
  os << "episode_len = " << cfg.env.episode_len << "\n";
  os << "grid_size = " << cfg.env.grid_size << "\n";
  os << "stochastic_reward = " << (cfg.env.stochastic_reward ? "true" : "false") << "\n";
  os << "n_train = " << cfg.n_train << "\n";
  os << "n_test = " << cfg.n_test << "\n";
  os << "tab_states = " << cfg.env.tab_states << "\n";
  os << "tab_actions = " << cfg.env.tab_actions << "\n";
  os << "tab_rewards = " << cfg.env.tab_rewards << "\n";
  os << "tab_chain = " << cfg.env.tab_chain << "\n";
  os << "\n[agent]\n";
  os << "lr = " << cfg.lr << "\n";
  os << "batch = " << cfg.batch << "\n";
  os << "aux_batch = " << cfg.aux_batch << "\n";
  os << "hidden = " << cfg.hidden << "\n";
  os << "repr_dim = " << cfg.repr_dim << "\n";
  os << "encoder = " << (cfg.encoder == EncoderKind::Mlp ? "mlp" : "conv") << "\n";
  os << "enc_hidden = " << cfg.enc_hidden << "\n";
  os << "tau = " << cfg.tau << "\n";
  os << "critic_target_update_freq = " << cfg.critic_target_update_freq << "\n";
  os << "actor_update_freq = " << cfg.actor_update_freq << "\n";
  os << "init_temperature = " << cfg.init_temperature << "\n";
  os << "init_steps = " << cfg.init_steps << "\n";
  os << "augment = " << (cfg.augment ? "true" : "false") << "\n";
  os << "max_shift = " << cfg.max_shift << "\n";
  os << "\n[aux]\n";
  os << "T = " << cfg.resolved_t_len() << "\n";
  os << "kappa = " << cfg.kappa << "\n";
  os << "lambda = " << cfg.lambda << "\n";
  os << "predictor = " << (cfg.resolved_predictor() == PredictorKind::Mlp ? "mlp" : "transformer") << "\n";
  os << "pred_hidden = " << cfg.pred_hidden << "\n";
  os << "d_model = " << cfg.d_model << "\n";
  os << "n_heads = " << cfg.n_heads << "\n";
  os << "d_ff = " << cfg.d_ff << "\n";
  os << "dropout = " << cfg.dropout << "\n";
  if (!cfg.sweep_objectives.empty() || !cfg.sweep_t.empty()) {
    os << "\n[sweep]\n";
    if (!cfg.sweep_objectives.empty()) {
      os << "objectives = ";
      for (size_t i = 0; i < cfg.sweep_objectives.size(); ++i)
        os << (i ? "," : "") << objective_name(cfg.sweep_objectives[i]);
      os << "\n";
    }
    if (!cfg.sweep_t.empty()) {
      os << "T_values = ";
      for (size_t i = 0; i < cfg.sweep_t.size(); ++i) os << (i ? "," : "") << cfg.sweep_t[i];
      os << "\n";
    }
  }
  return os.str();
}

}  // namespace cresp
