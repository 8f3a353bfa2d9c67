#include "cresp/params.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <istream>
#include <ostream>
#include <stdexcept>

namespace cresp::nn {

Tensor& ParamStore::add(const std::string& name, const Shape& shape, double init_scale,
                        Rng* rng) {
  if (map_.count(name)) throw std::invalid_argument("ParamStore::add: duplicate slice " + name);
  Slice s;
  s.value = Tensor::zeros(shape);
  if (init_scale != 0.0) {
    if (!rng) throw std::invalid_argument("ParamStore::add: init_scale without rng for " + name);
    for (auto& x : *s.value.buf) x = rng->normal() * init_scale;
  }
  s.m.assign(s.value.numel(), 0.0);
  s.v.assign(s.value.numel(), 0.0);
  order_.push_back(name);
  return map_.emplace(name, std::move(s)).first->second.value;
}

Tensor& ParamStore::at(const std::string& name) {
  auto it = map_.find(name);
  if (it == map_.end()) throw std::invalid_argument("ParamStore: unknown slice " + name);
  return it->second.value;
}

const Tensor& ParamStore::at(const std::string& name) const {
  auto it = map_.find(name);
  if (it == map_.end()) throw std::invalid_argument("ParamStore: unknown slice " + name);
  return it->second.value;
}

int64_t ParamStore::total_params() const {
  int64_t n = 0;
  for (const auto& name : order_) n += map_.at(name).value.numel();
  return n;
}

void ParamStore::watch(Tape& tape) {
  for (const auto& name : order_) {
    auto& s = map_[name];
    s.value.node = tape.leaf(s.value.numel());
    s.value.tape_id = tape.id();
  }
}

std::vector<double> ParamStore::grad_of(const Tape& tape, const std::string& name) const {
  const auto& s = map_.at(name);
  std::vector<double> g(s.value.numel(), 0.0);
  if (s.value.tape_id == tape.id() && s.value.node >= 0) {
    const double* p = tape.grad(s.value.node);
    if (p) std::copy(p, p + g.size(), g.begin());
  }
  return g;
}

void ParamStore::adam_step(const Tape& tape, const AdamConfig& cfg) {
  for (const auto& name : order_) {
    auto& s = map_[name];
    if (s.value.tape_id != tape.id() || s.value.node < 0)
      throw std::runtime_error("adam_step: slice " + name + " was not watched on this tape");
    const double* g = tape.grad(s.value.node);
    s.steps += 1;
    const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(s.steps));
    const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(s.steps));
    double* w = s.value.data();
    const int64_t n = s.value.numel();
    for (int64_t i = 0; i < n; ++i) {
      const double gi = g ? g[i] : 0.0;
      s.m[i] = cfg.beta1 * s.m[i] + (1.0 - cfg.beta1) * gi;
      s.v[i] = cfg.beta2 * s.v[i] + (1.0 - cfg.beta2) * gi * gi;
      const double mh = s.m[i] / c1;
      const double vh = s.v[i] / c2;
      w[i] -= cfg.lr * mh / (std::sqrt(vh) + cfg.eps);
    }
  }
}

void ParamStore::copy_values_from(const ParamStore& src) {
  for (const auto& name : order_) {
    const auto& from = src.at(name);
    auto& to = map_[name].value;
    if (from.shape != to.shape)
      throw std::invalid_argument("copy_values_from: shape mismatch on " + name);
    *to.buf = *from.buf;
  }
}

void ParamStore::polyak_from(const ParamStore& online, double tau) {
  for (const auto& name : order_) {
    const auto& from = online.at(name);
    auto& to = map_[name].value;
    if (from.shape != to.shape)
      throw std::invalid_argument("polyak_from: shape mismatch on " + name);
    double* t = to.data();
    const double* o = from.data();
    for (int64_t i = 0; i < to.numel(); ++i) t[i] = (1.0 - tau) * t[i] + tau * o[i];
  }
}

uint64_t ParamStore::value_hash() const {
  uint64_t h = 0xcbf29ce484222325ull;
  auto mix = [&h](const void* p, size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 0x100000001b3ull;
    }
  };
  for (const auto& name : order_) {
    mix(name.data(), name.size());
    const auto& v = *map_.at(name).value.buf;
    mix(v.data(), v.size() * sizeof(double));
  }
  return h;
}

namespace {
void write_u32(std::ostream& os, uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); }
void write_i64(std::ostream& os, int64_t v) { os.write(reinterpret_cast<const char*>(&v), 8); }
uint32_t read_u32(std::istream& is) {
  uint32_t v;
  is.read(reinterpret_cast<char*>(&v), 4);
  return v;
}
int64_t read_i64(std::istream& is) {
  int64_t v;
  is.read(reinterpret_cast<char*>(&v), 8);
  return v;
}
}  // namespace

void ParamStore::save(std::ostream& os) const {
  write_u32(os, static_cast<uint32_t>(order_.size()));
  for (const auto& name : order_) {
    const auto& s = map_.at(name);
    write_u32(os, static_cast<uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_u32(os, static_cast<uint32_t>(s.value.shape.size()));
    for (int d : s.value.shape) write_i64(os, d);
    write_i64(os, s.steps);
    const auto dump = [&os](const std::vector<double>& v) {
      os.write(reinterpret_cast<const char*>(v.data()),
               static_cast<std::streamsize>(v.size() * sizeof(double)));
    };
    dump(*s.value.buf);
    dump(s.m);
    dump(s.v);
  }
}

void ParamStore::load(std::istream& is) {
  const uint32_t count = read_u32(is);
  if (!is) throw std::runtime_error("ParamStore::load: truncated header");
  for (uint32_t i = 0; i < count; ++i) {
    const uint32_t name_len = read_u32(is);
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    const uint32_t ndim = read_u32(is);
    Shape shape(ndim);
    for (auto& d : shape) d = static_cast<int>(read_i64(is));
    const int64_t steps = read_i64(is);
    const int64_t n = shape_numel(shape);
    Slice* s;
    if (map_.count(name)) {
      s = &map_[name];
      if (s->value.shape != shape)
        throw std::runtime_error("ParamStore::load: shape mismatch on " + name);
    } else {
      add(name, shape, 0.0, nullptr);
      s = &map_[name];
    }
    s->steps = steps;
    auto slurp = [&is, n](std::vector<double>& v) {
      v.resize(n);
      is.read(reinterpret_cast<char*>(v.data()),
              static_cast<std::streamsize>(n * sizeof(double)));
    };
    slurp(*s->value.buf);
    slurp(s->m);
    slurp(s->v);
    if (!is) throw std::runtime_error("ParamStore::load: truncated slice " + name);
  }
}

FdReport finite_diff_check(const std::function<Tensor()>& build_loss, ParamStore& params,
                           double eps, int max_coords, uint64_t seed) {
  Tape tape;
  std::vector<double> analytic;
  {
    TapeScope scope(tape);
    params.watch(tape);
    Tensor loss = build_loss();
    tape.backward(loss);
  }
  struct Coord {
    std::string name;
    int64_t idx;
    double an;
  };
  std::vector<Coord> coords;
  for (const auto& name : params.names()) {
    auto g = params.grad_of(tape, name);
    for (int64_t i = 0; i < static_cast<int64_t>(g.size()); ++i)
      coords.push_back({name, i, g[i]});
  }
  Rng rng(seed);
  if (static_cast<int>(coords.size()) > max_coords) {
    // Fisher-Yates prefix of max_coords entries
    for (int i = 0; i < max_coords; ++i) {
      const int64_t j = i + rng.uniform_int(static_cast<int64_t>(coords.size()) - i);
      std::swap(coords[i], coords[j]);
    }
    coords.resize(max_coords);
  }
  FdReport rep;
  rep.checked = static_cast<int>(coords.size());
  for (const auto& c : coords) {
    double* w = params.at(c.name).data() + c.idx;
    const double orig = *w;
    *w = orig + eps;
    const double up = build_loss().item();
    *w = orig - eps;
    const double dn = build_loss().item();
    *w = orig;
    const double fd = (up - dn) / (2.0 * eps);
    const double rel = std::fabs(fd - c.an) / std::max(1.0, std::fabs(c.an));
    if (rel > rep.max_rel_err) {
      rep.max_rel_err = rel;
      rep.worst_name = c.name;
      rep.worst_coord = c.idx;
    }
  }
  return rep;
}

}  // namespace cresp::nn
