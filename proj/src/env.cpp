#include "cresp/env.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <istream>
#include <ostream>
#include <stdexcept>

namespace cresp {
namespace {

void put_i64(std::ostream& os, int64_t v) { os.write(reinterpret_cast<const char*>(&v), sizeof v); }
int64_t get_i64(std::istream& is) {
  int64_t v = 0;
  if (!is.read(reinterpret_cast<char*>(&v), sizeof v)) throw std::runtime_error("env state truncated");
  return v;
}
void put_f64(std::ostream& os, double v) { os.write(reinterpret_cast<const char*>(&v), sizeof v); }
double get_f64(std::istream& is) {
  double v = 0;
  if (!is.read(reinterpret_cast<char*>(&v), sizeof v)) throw std::runtime_error("env state truncated");
  return v;
}
void put_vec(std::ostream& os, const std::vector<double>& v) {
  put_i64(os, static_cast<int64_t>(v.size()));
  for (double d : v) put_f64(os, d);
}
std::vector<double> get_vec(std::istream& is) {
  int64_t n = get_i64(is);
  if (n < 0 || n > (1 << 24)) throw std::runtime_error("env state corrupt");
  std::vector<double> v(static_cast<size_t>(n));
  for (auto& d : v) d = get_f64(is);
  return v;
}

double clampd(double v, double lo, double hi) { return std::min(hi, std::max(lo, v)); }

int move_delta(double a) {
  if (a > 0.5) return 1;
  if (a < -0.5) return -1;
  return 0;
}

// 6x6 orthogonal mixing from the family seed; inverse is the transpose.
std::vector<double> mixing_matrix(uint64_t family_seed) {
  Rng rng(Rng::derive(family_seed, "mixing", 0));
  const int n = 6;
  std::vector<double> m(n * n);
  for (auto& v : m) v = rng.normal();
  for (int pass = 0; pass < 2; ++pass) {
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < i; ++j) {
        double dot = 0;
        for (int k = 0; k < n; ++k) dot += m[i * n + k] * m[j * n + k];
        for (int k = 0; k < n; ++k) m[i * n + k] -= dot * m[j * n + k];
      }
      double norm = 0;
      for (int k = 0; k < n; ++k) norm += m[i * n + k] * m[i * n + k];
      norm = std::sqrt(norm);
      if (norm < 1e-8) throw std::runtime_error("mixing matrix degenerate");
      for (int k = 0; k < n; ++k) m[i * n + k] /= norm;
    }
  }
  return m;
}

}  // namespace

double EnvSpec::reward_bound() const {
  switch (family) {
    case Family::Grid: return stochastic_reward ? 1.1 : 1.0;
    case Family::Pointmass: return 1.0;
    case Family::Tabular: return 1.0;  // random_pomdp supports lie in [-1,1]
  }
  throw std::runtime_error("bad family");
}

std::vector<int> EnvSpec::obs_shape() const {
  switch (family) {
    case Family::Grid: return {3, grid_size, grid_size};
    case Family::Pointmass: return {6};
    case Family::Tabular: return {tab_states + tab_chain};
  }
  throw std::runtime_error("bad family");
}

int EnvSpec::act_dim() const {
  switch (family) {
    case Family::Grid: return 2;
    case Family::Pointmass: return 2;
    case Family::Tabular: return 1;
  }
  throw std::runtime_error("bad family");
}

int EnvSpec::latent_label_count() const {
  switch (family) {
    case Family::Grid: return grid_size * grid_size;
    case Family::Pointmass: return 0;
    case Family::Tabular: return tab_states;
  }
  throw std::runtime_error("bad family");
}

std::vector<double> train_betas(int n_train) {
  if (n_train < 1) throw std::invalid_argument("train_betas: n_train must be >= 1");
  std::vector<double> betas(static_cast<size_t>(n_train));
  if (n_train == 1) {
    betas[0] = 0.1;
  } else {
    for (int i = 0; i < n_train; ++i) betas[static_cast<size_t>(i)] = 0.1 + 0.1 * i / (n_train - 1);
  }
  return betas;
}

std::vector<double> pattern_image(uint64_t family_seed, int slot, int k, int grid_size) {
  Rng rng(Rng::derive(family_seed, "pattern", static_cast<uint64_t>(slot) * kPatternsPerEnv + static_cast<uint64_t>(k)));
  std::vector<double> img(static_cast<size_t>(2 * grid_size * grid_size));
  for (auto& v : img) v = rng.uniform();
  return img;
}

Observation render_observation(const EnvSpec& spec, const LatentState& s, const DistractorState& x) {
  Observation obs;
  obs.shape = spec.obs_shape();
  switch (spec.family) {
    case Family::Grid: {
      const int g = spec.grid_size, plane = g * g;
      obs.data.assign(static_cast<size_t>(3 * plane), 0.0);
      if (s.cell < 0 || s.cell >= plane) throw std::invalid_argument("render: grid cell out of range");
      obs.data[static_cast<size_t>(s.cell)] = 1.0;
      if (spec.distractor == DistractorKind::ColorDrift) {
        if (x.color.size() != 2) throw std::invalid_argument("render: expected 2 color channels");
        for (int c = 0; c < 2; ++c)
          for (int i = 0; i < plane; ++i) obs.data[static_cast<size_t>((c + 1) * plane + i)] = x.color[static_cast<size_t>(c)];
      } else {
        if (x.pattern_slot < 0 || x.pattern < 0) throw std::invalid_argument("render: missing pattern state");
        auto img = pattern_image(spec.seed, x.pattern_slot, x.pattern, g);
        std::copy(img.begin(), img.end(), obs.data.begin() + plane);
      }
      return obs;
    }
    case Family::Pointmass: {
      if (s.vec.size() != 4 || x.color.size() != 2) throw std::invalid_argument("render: bad pointmass state");
      auto m = mixing_matrix(spec.seed);
      double in[6] = {s.vec[0], s.vec[1], s.vec[2], s.vec[3], x.color[0], x.color[1]};
      obs.data.assign(6, 0.0);
      for (int i = 0; i < 6; ++i)
        for (int j = 0; j < 6; ++j) obs.data[static_cast<size_t>(i)] += m[static_cast<size_t>(i * 6 + j)] * in[j];
      return obs;
    }
    case Family::Tabular: {
      obs.data.assign(static_cast<size_t>(spec.tab_states + spec.tab_chain), 0.0);
      if (s.tab_state < 0 || s.tab_state >= spec.tab_states || x.chain_state < 0 || x.chain_state >= spec.tab_chain)
        throw std::invalid_argument("render: bad tabular state");
      obs.data[static_cast<size_t>(s.tab_state)] = 1.0;
      obs.data[static_cast<size_t>(spec.tab_states + x.chain_state)] = 1.0;
      return obs;
    }
  }
  throw std::runtime_error("bad family");
}

std::pair<LatentState, DistractorState> invert_observation(const EnvSpec& spec, const Observation& obs) {
  if (obs.shape != spec.obs_shape()) throw std::invalid_argument("invert: observation shape mismatch");
  LatentState s;
  DistractorState x;
  switch (spec.family) {
    case Family::Grid: {
      const int g = spec.grid_size, plane = g * g;
      int cell = -1;
      for (int i = 0; i < plane; ++i) {
        if (obs.data[static_cast<size_t>(i)] == 0.0) continue;
        if (obs.data[static_cast<size_t>(i)] != 1.0 || cell >= 0) throw std::invalid_argument("invert: latent channel is not one-hot");
        cell = i;
      }
      if (cell < 0) throw std::invalid_argument("invert: empty latent channel");
      s.cell = cell;
      if (spec.distractor == DistractorKind::ColorDrift) {
        x.color.resize(2);
        for (int c = 0; c < 2; ++c) {
          double v = obs.data[static_cast<size_t>((c + 1) * plane)];
          for (int i = 0; i < plane; ++i)
            if (obs.data[static_cast<size_t>((c + 1) * plane + i)] != v) throw std::invalid_argument("invert: color plane not constant");
          x.color[static_cast<size_t>(c)] = v;
        }
      } else {
        for (int slot = 0; slot < kMaxEnvSlots && x.pattern < 0; ++slot) {
          for (int k = 0; k < kPatternsPerEnv; ++k) {
            auto img = pattern_image(spec.seed, slot, k, g);
            if (std::memcmp(img.data(), obs.data.data() + plane, img.size() * sizeof(double)) == 0) {
              x.pattern_slot = slot;
              x.pattern = k;
              break;
            }
          }
        }
        if (x.pattern < 0) throw std::invalid_argument("invert: pattern not found in any slot");
      }
      return {s, x};
    }
    case Family::Pointmass: {
      auto m = mixing_matrix(spec.seed);
      double out[6] = {0, 0, 0, 0, 0, 0};
      for (int i = 0; i < 6; ++i)  // orthogonal: inverse = transpose
        for (int j = 0; j < 6; ++j) out[i] += m[static_cast<size_t>(j * 6 + i)] * obs.data[static_cast<size_t>(j)];
      s.vec.assign(out, out + 4);
      x.color.assign(out + 4, out + 6);
      return {s, x};
    }
    case Family::Tabular: {
      for (int i = 0; i < spec.tab_states; ++i)
        if (obs.data[static_cast<size_t>(i)] == 1.0) s.tab_state = i;
      for (int i = 0; i < spec.tab_chain; ++i)
        if (obs.data[static_cast<size_t>(spec.tab_states + i)] == 1.0) x.chain_state = i;
      if (s.tab_state < 0 || x.chain_state < 0) throw std::invalid_argument("invert: missing one-hot entries");
      return {s, x};
    }
  }
  throw std::runtime_error("bad family");
}

Env::Env(const EnvSpec& spec, int env_id, double beta, uint64_t distractor_seed)
    : spec_(spec), env_id_(env_id), beta_(beta), distractor_seed_(distractor_seed) {
  if (spec.gamma < 0 || spec.gamma >= 1) throw std::invalid_argument("env: gamma must be in [0,1)");
  if (spec.episode_len <= 0) throw std::invalid_argument("env: episode_len must be positive");
  if (beta < 0) throw std::invalid_argument("env: beta must be >= 0");
  if (spec.family == Family::Tabular) {
    Rng mrng(Rng::derive(spec.seed, "tabmodel", 0));
    model_ = std::make_shared<TabularPOMDP>(
        random_pomdp(mrng, spec.tab_states, spec.tab_actions, spec.tab_rewards, spec.gamma));
    Rng crng(Rng::derive(spec.seed, "tabchain", distractor_seed));
    chain_.resize(static_cast<size_t>(spec.tab_chain * spec.tab_chain));
    for (int i = 0; i < spec.tab_chain; ++i) {
      double total = 0;
      for (int j = 0; j < spec.tab_chain; ++j) {
        double w = crng.uniform() + 0.05;
        chain_[static_cast<size_t>(i * spec.tab_chain + j)] = w;
        total += w;
      }
      for (int j = 0; j < spec.tab_chain; ++j) chain_[static_cast<size_t>(i * spec.tab_chain + j)] /= total;
    }
  } else if (spec.family == Family::Pointmass) {
    mix_ = mixing_matrix(spec.seed);
  }
}

Observation Env::reset(uint64_t episode_seed) {
  latent_rng_ = Rng(Rng::derive(spec_.seed, "latent", episode_seed));
  uint64_t d = Rng::derive(spec_.seed, "distractor", distractor_seed_);
  distractor_rng_ = Rng(Rng::derive(d, "episode", episode_seed));
  t_ = 0;
  done_ = false;
  started_ = true;
  s_ = LatentState{};
  x_ = DistractorState{};
  switch (spec_.family) {
    case Family::Grid: {
      const int g = spec_.grid_size;
      const int goal = (g / 2) * g + g / 2;
      int cell = goal;
      while (cell == goal) cell = latent_rng_.uniform_int(g * g);
      s_.cell = cell;
      break;
    }
    case Family::Pointmass:
      s_.vec = {latent_rng_.uniform(-1, 1), latent_rng_.uniform(-1, 1), 0.0, 0.0};
      break;
    case Family::Tabular:
      s_.tab_state = latent_rng_.uniform_int(spec_.tab_states);
      break;
  }
  if (spec_.family == Family::Tabular) {
    x_.chain_state = distractor_rng_.uniform_int(spec_.tab_chain);
  } else if (spec_.distractor == DistractorKind::ColorDrift) {
    x_.color.resize(2);
    for (auto& c : x_.color) c = clampd(0.5 + distractor_rng_.uniform(-beta_, beta_), 0.0, 1.0);
  } else {
    x_.pattern_slot = env_id_;
    x_.pattern = distractor_rng_.uniform_int(kPatternsPerEnv);
  }
  return render_observation(spec_, s_, x_);
}

double Env::latent_step(const std::vector<double>& action) {
  switch (spec_.family) {
    case Family::Grid: {
      const int g = spec_.grid_size;
      const int goal = (g / 2) * g + g / 2;
      int r = s_.cell / g, c = s_.cell % g;
      c = std::clamp(c + move_delta(action[0]), 0, g - 1);
      r = std::clamp(r + move_delta(action[1]), 0, g - 1);
      s_.cell = r * g + c;
      double reward = s_.cell == goal ? 1.0 : 0.0;
      if (spec_.stochastic_reward) reward += 0.1 * (latent_rng_.uniform_int(3) - 1);
      return reward;
    }
    case Family::Pointmass: {
      double ax = clampd(action[0], -1, 1), ay = clampd(action[1], -1, 1);
      s_.vec[2] = clampd(s_.vec[2] + 0.1 * ax, -0.5, 0.5);
      s_.vec[3] = clampd(s_.vec[3] + 0.1 * ay, -0.5, 0.5);
      s_.vec[0] = clampd(s_.vec[0] + 0.1 * s_.vec[2], -1, 1);
      s_.vec[1] = clampd(s_.vec[1] + 0.1 * s_.vec[3], -1, 1);
      double dist = std::sqrt(s_.vec[0] * s_.vec[0] + s_.vec[1] * s_.vec[1]);
      return std::max(0.0, 1.0 - 2.0 * dist);
    }
    case Family::Tabular: {
      int na = spec_.tab_actions;
      int a = std::clamp(static_cast<int>((clampd(action[0], -1, 1) + 1.0) / 2.0 * na), 0, na - 1);
      double u = latent_rng_.uniform();
      int k = 0;
      double acc = 0;
      for (; k < static_cast<int>(model_->reward_support.size()); ++k) {
        acc += model_->rp(s_.tab_state, a, k);
        if (u < acc) break;
      }
      k = std::min(k, static_cast<int>(model_->reward_support.size()) - 1);
      double reward = model_->reward_support[static_cast<size_t>(k)];
      u = latent_rng_.uniform();
      acc = 0;
      int ns = model_->n_states - 1;
      for (int cand = 0; cand < model_->n_states; ++cand) {
        acc += model_->tp(s_.tab_state, a, cand);
        if (u < acc) { ns = cand; break; }
      }
      s_.tab_state = ns;
      return reward;
    }
  }
  throw std::runtime_error("bad family");
}

void Env::step_distractor() {
  if (spec_.family == Family::Tabular) {
    double u = distractor_rng_.uniform();
    double acc = 0;
    int nx = spec_.tab_chain;
    int next = nx - 1;
    for (int j = 0; j < nx; ++j) {
      acc += chain_[static_cast<size_t>(x_.chain_state * nx + j)];
      if (u < acc) { next = j; break; }
    }
    x_.chain_state = next;
  } else if (spec_.distractor == DistractorKind::ColorDrift) {
    for (auto& c : x_.color) {
      double prop = c + 0.03 * beta_ * distractor_rng_.normal();
      c = clampd(clampd(prop, c - beta_, c + beta_), 0.0, 1.0);
    }
  } else {
    double u = distractor_rng_.uniform();
    if (u >= kPatternStayProb) {
      int j = distractor_rng_.uniform_int(kPatternsPerEnv - 1);
      x_.pattern = j >= x_.pattern ? j + 1 : j;
    }
  }
}

StepResult Env::step(const std::vector<double>& action) {
  if (!started_) throw std::runtime_error("step before reset");
  if (done_) throw std::runtime_error("step after episode end");
  if (static_cast<int>(action.size()) != spec_.act_dim()) throw std::invalid_argument("step: action dimension mismatch");
  for (double a : action)
    if (!std::isfinite(a)) throw std::invalid_argument("step: non-finite action");
  StepResult out;
  out.reward = latent_step(action);
  step_distractor();
  t_ += 1;
  done_ = t_ >= spec_.episode_len;
  out.done = done_;
  out.obs = render_observation(spec_, s_, x_);
  return out;
}

int Env::latent_label() const {
  switch (spec_.family) {
    case Family::Grid: return s_.cell;
    case Family::Tabular: return s_.tab_state;
    default: return -1;
  }
}

std::vector<double> Env::latent_vec() const {
  switch (spec_.family) {
    case Family::Grid: {
      int g = spec_.grid_size;
      return {static_cast<double>(s_.cell / g), static_cast<double>(s_.cell % g)};
    }
    case Family::Pointmass: return s_.vec;
    case Family::Tabular: return {static_cast<double>(s_.tab_state)};
  }
  throw std::runtime_error("bad family");
}

const TabularPOMDP* Env::model() const { return model_.get(); }

void Env::save(std::ostream& os) const {
  put_i64(os, t_);
  put_i64(os, done_ ? 1 : 0);
  put_i64(os, started_ ? 1 : 0);
  put_i64(os, s_.cell);
  put_vec(os, s_.vec);
  put_i64(os, s_.tab_state);
  put_vec(os, x_.color);
  put_i64(os, x_.pattern_slot);
  put_i64(os, x_.pattern);
  put_i64(os, x_.chain_state);
  latent_rng_.save(os);
  distractor_rng_.save(os);
}

void Env::load(std::istream& is) {
  t_ = static_cast<int>(get_i64(is));
  done_ = get_i64(is) != 0;
  started_ = get_i64(is) != 0;
  s_.cell = static_cast<int>(get_i64(is));
  s_.vec = get_vec(is);
  s_.tab_state = static_cast<int>(get_i64(is));
  x_.color = get_vec(is);
  x_.pattern_slot = static_cast<int>(get_i64(is));
  x_.pattern = static_cast<int>(get_i64(is));
  x_.chain_state = static_cast<int>(get_i64(is));
  latent_rng_.load(is);
  distractor_rng_.load(is);
}

EnvFamily spawn_family(const EnvSpec& spec, int n_train, int n_test) {
  if (n_train < 1 || n_test < 0) throw std::invalid_argument("spawn_family: need n_train >= 1, n_test >= 0");
  if (n_train + n_test > kMaxEnvSlots)
    throw std::invalid_argument("spawn_family: more environments requested than distinct distractor configurations");
  EnvFamily fam;
  fam.spec = spec;
  auto betas = train_betas(n_train);
  for (int i = 0; i < n_train; ++i) {
    double beta = spec.distractor == DistractorKind::ColorDrift ? betas[static_cast<size_t>(i)] : 0.0;
    fam.train.push_back(std::make_unique<Env>(spec, i, beta, static_cast<uint64_t>(i)));
  }
  for (int j = 0; j < n_test; ++j) {
    int id = n_train + j;
    double beta = spec.distractor == DistractorKind::ColorDrift ? kTestBeta : 0.0;
    fam.test.push_back(std::make_unique<Env>(spec, id, beta, static_cast<uint64_t>(id)));
  }
  return fam;
}

}  // namespace cresp
