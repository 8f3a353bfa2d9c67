#include "cresp/replay.hpp"

#include <istream>
#include <ostream>
#include <stdexcept>

namespace cresp {
namespace {

void put_i64(std::ostream& os, int64_t v) { os.write(reinterpret_cast<const char*>(&v), sizeof v); }
int64_t get_i64(std::istream& is) {
  int64_t v = 0;
  if (!is.read(reinterpret_cast<char*>(&v), sizeof v)) throw std::runtime_error("replay state truncated");
  return v;
}
void put_u64(std::ostream& os, uint64_t v) { os.write(reinterpret_cast<const char*>(&v), sizeof v); }
uint64_t get_u64(std::istream& is) {
  uint64_t v = 0;
  if (!is.read(reinterpret_cast<char*>(&v), sizeof v)) throw std::runtime_error("replay state truncated");
  return v;
}
void put_dvec(std::ostream& os, const std::vector<double>& v) {
  put_i64(os, static_cast<int64_t>(v.size()));
  os.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
}
std::vector<double> get_dvec(std::istream& is) {
  int64_t n = get_i64(is);
  if (n < 0 || n > (int64_t{1} << 32)) throw std::runtime_error("replay state corrupt");
  std::vector<double> v(static_cast<size_t>(n));
  if (n && !is.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double))))
    throw std::runtime_error("replay state truncated");
  return v;
}

}  // namespace

ReplayBuffer::ReplayBuffer(int64_t capacity) : capacity_(capacity) {
  if (capacity < 1) throw std::invalid_argument("replay: capacity must be positive");
}

void ReplayBuffer::push(const Observation& o, const std::vector<double>& a, double r,
                        const Observation& o2, bool done, int env_id) {
  if (obs_shape_.empty()) obs_shape_ = o.shape;
  if (o.shape != obs_shape_ || o2.shape != obs_shape_)
    throw std::invalid_argument("replay: observation shape changed between pushes");

  // continue the env's open episode only when o matches its last stored
  // observation; otherwise the previous episode was abandoned mid-way
  Episode* ep = nullptr;
  for (auto& cand : episodes_) {
    if (cand.env_id == env_id && cand.open) {
      if (!cand.obs.empty() && cand.obs.back() == o.data) {
        ep = &cand;
      } else {
        cand.open = false;
      }
      break;
    }
  }
  if (!ep) {
    Episode fresh;
    fresh.uid = next_uid_++;
    fresh.env_id = env_id;
    fresh.obs.push_back(o.data);
    episodes_.push_back(std::move(fresh));
    auto it = std::prev(episodes_.end());
    by_uid_[it->uid] = it;
    ep = &*it;
  }
  ep->act.push_back(a);
  ep->rew.push_back(r);
  ep->obs.push_back(o2.data);
  if (done) {
    ep->open = false;
    ep->done_flag = true;
  }
  push_order_.push_back(ep->uid);
  total_ += 1;
  while (total_ > capacity_) evict_one();
}

void ReplayBuffer::evict_one() {
  uint64_t uid = push_order_.front();
  push_order_.pop_front();
  auto it = by_uid_.at(uid);
  it->head += 1;
  total_ -= 1;
  if (it->live() == 0 && !it->open) {
    by_uid_.erase(uid);
    episodes_.erase(it);
  }
}

Transition ReplayBuffer::transition_at(const Episode& ep, int64_t i) const {
  Transition t;
  t.o = Observation{obs_shape_, ep.obs[static_cast<size_t>(i)]};
  t.o2 = Observation{obs_shape_, ep.obs[static_cast<size_t>(i + 1)]};
  t.a = ep.act[static_cast<size_t>(i)];
  t.r = ep.rew[static_cast<size_t>(i)];
  t.done = ep.done_flag && i + 1 == ep.len();
  t.env_id = ep.env_id;
  return t;
}

std::vector<Transition> ReplayBuffer::sample_transitions(int batch, Rng& rng) const {
  if (total_ == 0) throw std::runtime_error("replay: empty buffer");
  if (batch < 1) throw std::invalid_argument("replay: batch must be positive");
  std::vector<const Episode*> eps;
  std::vector<int64_t> cum;
  int64_t acc = 0;
  for (const auto& ep : episodes_) {
    if (ep.live() <= 0) continue;
    acc += ep.live();
    eps.push_back(&ep);
    cum.push_back(acc);
  }
  std::vector<Transition> out;
  out.reserve(static_cast<size_t>(batch));
  for (int b = 0; b < batch; ++b) {
    int64_t u = rng.uniform_int(acc);
    size_t lo = 0, hi = cum.size() - 1;
    while (lo < hi) {
      size_t mid = (lo + hi) / 2;
      if (u < cum[mid]) hi = mid; else lo = mid + 1;
    }
    int64_t base = lo == 0 ? 0 : cum[lo - 1];
    const Episode& ep = *eps[lo];
    out.push_back(transition_at(ep, ep.head + (u - base)));
  }
  return out;
}

int64_t ReplayBuffer::segment_count(int t_len) const {
  if (t_len < 1) throw std::invalid_argument("replay: segment length must be positive");
  int64_t acc = 0;
  for (const auto& ep : episodes_) acc += std::max<int64_t>(0, ep.live() - t_len + 1);
  return acc;
}

std::vector<TrajectorySegment> ReplayBuffer::sample_segments(int batch, int t_len, Rng& rng) const {
  if (t_len < 1) throw std::invalid_argument("replay: segment length must be positive");
  if (batch < 1) throw std::invalid_argument("replay: batch must be positive");
  std::vector<const Episode*> eps;
  std::vector<int64_t> cum;
  int64_t acc = 0;
  for (const auto& ep : episodes_) {
    int64_t starts = std::max<int64_t>(0, ep.live() - t_len + 1);
    if (starts == 0) continue;
    acc += starts;
    eps.push_back(&ep);
    cum.push_back(acc);
  }
  if (acc == 0) throw std::runtime_error("replay: no stored segment of requested length");
  std::vector<TrajectorySegment> out;
  out.reserve(static_cast<size_t>(batch));
  for (int b = 0; b < batch; ++b) {
    int64_t u = rng.uniform_int(acc);
    size_t lo = 0, hi = cum.size() - 1;
    while (lo < hi) {
      size_t mid = (lo + hi) / 2;
      if (u < cum[mid]) hi = mid; else lo = mid + 1;
    }
    int64_t base = lo == 0 ? 0 : cum[lo - 1];
    const Episode& ep = *eps[lo];
    int64_t start = ep.head + (u - base);
    TrajectorySegment seg;
    seg.env_id = ep.env_id;
    seg.o_start = Observation{obs_shape_, ep.obs[static_cast<size_t>(start)]};
    seg.o_next_T = Observation{obs_shape_, ep.obs[static_cast<size_t>(start + t_len)]};
    for (int64_t i = start; i < start + t_len; ++i) {
      seg.actions.push_back(ep.act[static_cast<size_t>(i)]);
      seg.rewards.push_back(ep.rew[static_cast<size_t>(i)]);
    }
    out.push_back(std::move(seg));
  }
  return out;
}

void ReplayBuffer::save(std::ostream& os) const {
  put_i64(os, capacity_);
  put_i64(os, total_);
  put_u64(os, next_uid_);
  put_i64(os, static_cast<int64_t>(obs_shape_.size()));
  for (int d : obs_shape_) put_i64(os, d);
  put_i64(os, static_cast<int64_t>(episodes_.size()));
  for (const auto& ep : episodes_) {
    put_u64(os, ep.uid);
    put_i64(os, ep.env_id);
    put_i64(os, ep.open ? 1 : 0);
    put_i64(os, ep.done_flag ? 1 : 0);
    put_i64(os, ep.head);
    put_i64(os, static_cast<int64_t>(ep.obs.size()));
    for (const auto& o : ep.obs) put_dvec(os, o);
    put_i64(os, static_cast<int64_t>(ep.act.size()));
    for (const auto& a : ep.act) put_dvec(os, a);
    put_dvec(os, ep.rew);
  }
  put_i64(os, static_cast<int64_t>(push_order_.size()));
  for (uint64_t uid : push_order_) put_u64(os, uid);
}

void ReplayBuffer::load(std::istream& is) {
  episodes_.clear();
  by_uid_.clear();
  push_order_.clear();
  capacity_ = get_i64(is);
  total_ = get_i64(is);
  next_uid_ = get_u64(is);
  obs_shape_.clear();
  int64_t nd = get_i64(is);
  for (int64_t i = 0; i < nd; ++i) obs_shape_.push_back(static_cast<int>(get_i64(is)));
  int64_t neps = get_i64(is);
  for (int64_t e = 0; e < neps; ++e) {
    Episode ep;
    ep.uid = get_u64(is);
    ep.env_id = static_cast<int>(get_i64(is));
    ep.open = get_i64(is) != 0;
    ep.done_flag = get_i64(is) != 0;
    ep.head = get_i64(is);
    int64_t nobs = get_i64(is);
    for (int64_t i = 0; i < nobs; ++i) ep.obs.push_back(get_dvec(is));
    int64_t nact = get_i64(is);
    for (int64_t i = 0; i < nact; ++i) ep.act.push_back(get_dvec(is));
    ep.rew = get_dvec(is);
    episodes_.push_back(std::move(ep));
    auto it = std::prev(episodes_.end());
    by_uid_[it->uid] = it;
  }
  int64_t norder = get_i64(is);
  for (int64_t i = 0; i < norder; ++i) push_order_.push_back(get_u64(is));
}

}  // namespace cresp
