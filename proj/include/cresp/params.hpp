#pragma once
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <unordered_map>
#include <vector>

#include "cresp/rng.hpp"
#include "cresp/tensor.hpp"

namespace cresp::nn {

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

// Flat store of named parameter slices plus per-slice Adam state. All model
// parameters (encoder, actor, critics, predictors, temperature) live in
// stores like this; updates pick which stores to watch on a tape.
class ParamStore {
 public:
  struct Slice {
    Tensor value;
    std::vector<double> m, v;
    int64_t steps = 0;
  };

  Tensor& add(const std::string& name, const Shape& shape, double init_scale, Rng* rng);
  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;
  bool has(const std::string& name) const { return map_.count(name) > 0; }
  const std::vector<std::string>& names() const { return order_; }
  int64_t total_params() const;

  // Register every slice as a leaf on the tape. Must be called per tape
  // before the forward pass whose gradients should reach this store.
  void watch(Tape& tape);

  // Gradient of one slice from the last backward on `tape`; zeros when the
  // loss did not reach it.
  std::vector<double> grad_of(const Tape& tape, const std::string& name) const;

  // One Adam step from the gradients on `tape` (bias-corrected; slices the
  // loss never reached see a zero gradient).
  void adam_step(const Tape& tape, const AdamConfig& cfg);

  void copy_values_from(const ParamStore& src);
  // target = (1 - tau) * target + tau * online, matched by name
  void polyak_from(const ParamStore& online, double tau);

  // FNV-1a over parameter bytes (values only); used to assert snapshots
  // don't change.
  uint64_t value_hash() const;

  void save(std::ostream& os) const;  // values + Adam state, bit-exact
  void load(std::istream& is);

 private:
  std::vector<std::string> order_;
  std::unordered_map<std::string, Slice> map_;
};

struct FdReport {
  double max_rel_err = 0;
  std::string worst_name;
  int64_t worst_coord = -1;
  int checked = 0;
};

// Central-difference gradient check of build_loss against backward().
// build_loss must be deterministic (freeze any noise before calling); it is
// invoked under a tape for the analytic pass and tape-free for probes. When
// the store holds more than max_coords scalars a random subset is checked.
FdReport finite_diff_check(const std::function<Tensor()>& build_loss, ParamStore& params,
                           double eps = 1e-5, int max_coords = 64, uint64_t seed = 12345);

}  // namespace cresp::nn
