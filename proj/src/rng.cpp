#include "cresp/rng.hpp"

#include <cmath>
#include <istream>
#include <ostream>
#include <stdexcept>

namespace cresp {

uint64_t Rng::splitmix64(uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

Rng::Rng(uint64_t seed) {
  uint64_t x = seed;
  for (auto& w : s_) {
    x = splitmix64(x);
    w = x;
  }
  // xoshiro must not start in the all-zero state
  if ((s_[0] | s_[1] | s_[2] | s_[3]) == 0) s_[0] = 1;
}

static inline uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

uint64_t Rng::next_u64() {
  const uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
  const uint64_t t = s_[1] << 17;
  s_[2] ^= s_[0];
  s_[3] ^= s_[1];
  s_[1] ^= s_[2];
  s_[0] ^= s_[3];
  s_[2] ^= t;
  s_[3] = rotl(s_[3], 45);
  return result;
}

double Rng::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

int64_t Rng::uniform_int(int64_t n) {
  if (n <= 0) throw std::invalid_argument("Rng::uniform_int: n must be positive");
  // rejection-free modulo is fine here: n is tiny relative to 2^64
  return static_cast<int64_t>(next_u64() % static_cast<uint64_t>(n));
}

double Rng::normal() {
  double u1 = uniform();
  double u2 = uniform();
  // avoid log(0)
  if (u1 <= 0) u1 = 0x1.0p-53;
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
}

void Rng::fill_normal(double* dst, int64_t n) {
  for (int64_t i = 0; i < n; ++i) dst[i] = normal();
}

void Rng::save(std::ostream& os) const {
  os.write(reinterpret_cast<const char*>(s_), sizeof(s_));
}

void Rng::load(std::istream& is) {
  is.read(reinterpret_cast<char*>(s_), sizeof(s_));
  if (!is) throw std::runtime_error("Rng::load: truncated stream");
}

uint64_t Rng::derive(uint64_t master, std::string_view stream, uint64_t index) {
  uint64_t h = 0xcbf29ce484222325ull;  // FNV-1a over the stream name
  for (char c : stream) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ull;
  }
  uint64_t x = splitmix64(master ^ h);
  return splitmix64(x ^ index);
}

}  // namespace cresp
