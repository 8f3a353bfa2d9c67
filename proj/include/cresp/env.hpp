#pragma once
#include <iosfwd>
#include <memory>
#include <vector>

#include "cresp/rng.hpp"
#include "cresp/tabular.hpp"

namespace cresp {

enum class Family { Grid, Pointmass, Tabular };
enum class DistractorKind { ColorDrift, PatternMarkov };

struct EnvSpec {
  Family family = Family::Grid;
  DistractorKind distractor = DistractorKind::ColorDrift;
  double gamma = 0.99;
  int episode_len = 100;
  uint64_t seed = 0;  // family seed: latent dynamics, mixing, pattern imagery
  int grid_size = 9;
  bool stochastic_reward = false;  // grid only: +-0.1 three-point reward noise
  // tabular family dimensions
  int tab_states = 6;
  int tab_actions = 3;
  int tab_rewards = 3;
  int tab_chain = 4;

  double reward_bound() const;
  std::vector<int> obs_shape() const;
  int act_dim() const;
  int latent_label_count() const;  // discrete latent cardinality (grid/tabular)
};

// Color drift half-widths for the training ladder; the unseen test width is
// strictly larger.
std::vector<double> train_betas(int n_train);
inline constexpr double kTestBeta = 0.5;
inline constexpr int kPatternsPerEnv = 8;
inline constexpr int kMaxEnvSlots = 64;
inline constexpr double kPatternStayProb = 0.7;

struct LatentState {
  int cell = -1;              // grid
  std::vector<double> vec;    // pointmass (px, py, vx, vy)
  int tab_state = -1;         // tabular
};

struct DistractorState {
  std::vector<double> color;  // color drift values in [0,1]
  int pattern_slot = -1;      // pattern env slot (identifies the pattern set)
  int pattern = -1;           // index within the slot's pattern set
  int chain_state = -1;       // tabular distractor chain
};

struct Observation {
  std::vector<int> shape;
  std::vector<double> data;
  int64_t numel() const { return static_cast<int64_t>(data.size()); }
};

struct StepResult {
  Observation obs;
  double reward = 0;
  bool done = false;
};

Observation render_observation(const EnvSpec& spec, const LatentState& s,
                               const DistractorState& x);
std::pair<LatentState, DistractorState> invert_observation(const EnvSpec& spec,
                                                           const Observation& obs);

// One interactive environment of a family. Latent draws come from a stream
// keyed only by (family seed, episode seed) so that every env of the family
// replays identical latent trajectories for the same episode seed; distractor
// draws are keyed additionally by the env's distractor seed.
class Env {
 public:
  Env(const EnvSpec& spec, int env_id, double beta, uint64_t distractor_seed);

  Observation reset(uint64_t episode_seed);
  StepResult step(const std::vector<double>& action);

  const EnvSpec& spec() const { return spec_; }
  int env_id() const { return env_id_; }
  double beta() const { return beta_; }
  int t() const { return t_; }
  bool done() const { return done_; }
  const LatentState& latent() const { return s_; }
  const DistractorState& distractor() const { return x_; }
  // latent class label for probes (grid cell / tabular state); -1 otherwise
  int latent_label() const;
  std::vector<double> latent_vec() const;
  const TabularPOMDP* model() const;  // tabular family only

  void save(std::ostream& os) const;
  void load(std::istream& is);

 private:
  void step_distractor();
  double latent_step(const std::vector<double>& action);  // returns reward

  EnvSpec spec_;
  int env_id_;
  double beta_;
  uint64_t distractor_seed_;
  std::shared_ptr<const TabularPOMDP> model_;        // tabular family
  std::vector<double> chain_;                        // [x][x'] distractor chain
  std::vector<double> mix_, mix_inv_;                // pointmass observation mixing
  Rng latent_rng_, distractor_rng_;
  LatentState s_;
  DistractorState x_;
  int t_ = 0;
  bool done_ = true;
  bool started_ = false;
};

struct EnvFamily {
  EnvSpec spec;
  std::vector<std::unique_ptr<Env>> train;
  std::vector<std::unique_ptr<Env>> test;
};

// n_train training envs (beta ladder / pattern slots) plus n_test unseen
// envs with disjoint distractor seeds and, for color drift, beta = kTestBeta.
EnvFamily spawn_family(const EnvSpec& spec, int n_train, int n_test);

// Deterministic pattern imagery shared by rendering and inversion.
std::vector<double> pattern_image(uint64_t family_seed, int slot, int k, int grid_size);

}  // namespace cresp
