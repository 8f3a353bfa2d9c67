#pragma once
#include <cstdint>
#include <iosfwd>
#include <string_view>
#include <vector>

namespace cresp {

// Deterministic xoshiro256++ generator. Self-contained so that stream state
// can be serialized bit-exactly into resume checkpoints; std:: distributions
// are implementation-defined and would break that.
class Rng {
 public:
  Rng() : Rng(0) {}
  explicit Rng(uint64_t seed);

  uint64_t next_u64();
  // uniform in [0, 1)
  double uniform();
  double uniform(double lo, double hi);
  // integer in [0, n)
  int64_t uniform_int(int64_t n);
  // standard normal via Box-Muller, two uniforms per draw (no cached spare,
  // keeps the stream position a pure function of the draw count)
  double normal();
  void fill_normal(double* dst, int64_t n);

  void save(std::ostream& os) const;
  void load(std::istream& is);

  // Stream seeding scheme: every random stream in the system is seeded as
  //   derive(master, stream_name, index)
  // where the name is hashed (FNV-1a) and mixed with the index through
  // splitmix64. Documented in the README and echoed into run manifests.
  static uint64_t derive(uint64_t master, std::string_view stream, uint64_t index = 0);
  static uint64_t splitmix64(uint64_t x);

 private:
  uint64_t s_[4];
};

}  // namespace cresp
