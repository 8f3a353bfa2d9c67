#pragma once
#include <cstdint>
#include <deque>
#include <iosfwd>
#include <list>
#include <unordered_map>
#include <vector>

#include "cresp/env.hpp"
#include "cresp/rng.hpp"

namespace cresp {

struct Transition {
  Observation o, o2;
  std::vector<double> a;
  double r = 0;
  bool done = false;
  int env_id = 0;
};

struct TrajectorySegment {
  Observation o_start;
  Observation o_next_T;  // observation after the last segment action
  std::vector<std::vector<double>> actions;
  std::vector<double> rewards;  // r_{t+1} .. r_{t+T}
  int env_id = 0;
};

// FIFO transition store that keeps each observation exactly once per step and
// never lets a sampled segment cross an episode boundary.
class ReplayBuffer {
 public:
  explicit ReplayBuffer(int64_t capacity = 100000);

  void push(const Observation& o, const std::vector<double>& a, double r,
            const Observation& o2, bool done, int env_id);
  std::vector<Transition> sample_transitions(int batch, Rng& rng) const;
  std::vector<TrajectorySegment> sample_segments(int batch, int t_len, Rng& rng) const;

  int64_t size() const { return total_; }
  int64_t capacity() const { return capacity_; }
  int64_t segment_count(int t_len) const;

  void save(std::ostream& os) const;
  void load(std::istream& is);

 private:
  struct Episode {
    uint64_t uid = 0;
    int env_id = 0;
    bool open = true;
    bool done_flag = false;
    int64_t head = 0;  // evicted prefix length, in transitions
    std::vector<std::vector<double>> obs;  // len+1 entries once any push landed
    std::vector<std::vector<double>> act;
    std::vector<double> rew;
    int64_t len() const { return static_cast<int64_t>(rew.size()); }
    int64_t live() const { return len() - head; }
  };

  void evict_one();
  Transition transition_at(const Episode& ep, int64_t i) const;

  int64_t capacity_;
  int64_t total_ = 0;
  uint64_t next_uid_ = 1;
  std::vector<int> obs_shape_;
  std::list<Episode> episodes_;
  std::unordered_map<uint64_t, std::list<Episode>::iterator> by_uid_;
  std::deque<uint64_t> push_order_;  // one uid per stored transition, oldest first
};

}  // namespace cresp
