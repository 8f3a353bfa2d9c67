#include "cresp/tensor.hpp"

#include <Eigen/Core>

#include <atomic>
#include <cmath>
#include <cstring>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

namespace cresp::nn {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MMap = Eigen::Map<RowMat>;
using CMap = Eigen::Map<const RowMat>;

int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int d : s) n *= d;
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "(";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ")";
  return os.str();
}

static void require(bool ok, const std::string& msg) {
  if (!ok) throw std::invalid_argument(msg);
}

static void check_finite(const std::vector<double>& v, const char* op) {
  for (double x : v)
    if (!std::isfinite(x))
      throw std::runtime_error(std::string(op) + " produced a non-finite value");
}

int Tensor::rows() const {
  require(shape.size() == 2, "Tensor::rows on non-2D tensor " + shape_str(shape));
  return shape[0];
}

int Tensor::cols() const {
  require(shape.size() == 2, "Tensor::cols on non-2D tensor " + shape_str(shape));
  return shape[1];
}

double Tensor::item() const {
  require(numel() == 1, "Tensor::item on tensor " + shape_str(shape));
  return (*buf)[0];
}

// Thread-local freelist of exact-size buffers. Update steps allocate and drop
// the same few dozen shapes thousands of times; recycling them removes most
// allocator traffic. Buffers come back with stale contents, so zeros() clears
// and uninit() callers must overwrite fully.
namespace {

struct BufPool {
  std::unordered_map<int64_t, std::vector<std::vector<double>*>> free_lists;
  bool alive = true;
  ~BufPool() {
    alive = false;
    for (auto& [n, list] : free_lists)
      for (auto* p : list) delete p;
  }
};
thread_local BufPool g_buf_pool;

std::shared_ptr<std::vector<double>> pooled_buffer(int64_t n) {
  auto& bucket = g_buf_pool.free_lists[n];
  std::vector<double>* raw;
  if (bucket.empty()) {
    raw = new std::vector<double>(static_cast<size_t>(n));
  } else {
    raw = bucket.back();
    bucket.pop_back();
  }
  return std::shared_ptr<std::vector<double>>(raw, [](std::vector<double>* p) {
    if (!g_buf_pool.alive) {
      delete p;
      return;
    }
    auto& b = g_buf_pool.free_lists[static_cast<int64_t>(p->size())];
    if (b.size() < 128) {
      b.push_back(p);
    } else {
      delete p;
    }
  });
}

}  // namespace

Tensor Tensor::zeros(const Shape& s) {
  Tensor t = uninit(s);
  std::fill(t.buf->begin(), t.buf->end(), 0.0);
  return t;
}

Tensor Tensor::uninit(const Shape& s) {
  Tensor t;
  t.shape = s;
  t.buf = pooled_buffer(shape_numel(s));
  return t;
}

Tensor Tensor::full(const Shape& s, double v) {
  Tensor t = uninit(s);
  std::fill(t.buf->begin(), t.buf->end(), v);
  return t;
}

Tensor Tensor::from(const Shape& s, std::vector<double> values) {
  require(shape_numel(s) == static_cast<int64_t>(values.size()),
          "Tensor::from size mismatch for " + shape_str(s));
  Tensor t;
  t.shape = s;
  t.buf = std::make_shared<std::vector<double>>(std::move(values));
  return t;
}

Tensor Tensor::scalar(double v) { return from({1}, {v}); }

// ---- tape ------------------------------------------------------------------

static std::atomic<uint64_t> g_tape_serial{1};
static thread_local Tape* g_active = nullptr;

Tape* active_tape() { return g_active; }

TapeScope::TapeScope(Tape& t) : prev_(g_active) { g_active = &t; }
TapeScope::~TapeScope() { g_active = prev_; }

Tape::Tape() : id_(g_tape_serial.fetch_add(1)) {}

int Tape::leaf(int64_t out_size) {
  nodes_.push_back({out_size, nullptr});
  grads_.emplace_back();
  return static_cast<int>(nodes_.size()) - 1;
}

int Tape::record(int64_t out_size, BackFn back) {
  nodes_.push_back({out_size, std::move(back)});
  grads_.emplace_back();
  return static_cast<int>(nodes_.size()) - 1;
}

double* Tape::grad_buf(int node) {
  auto& g = grads_[node];
  if (!g) {
    g = pooled_buffer(nodes_[node].size);
    std::fill(g->begin(), g->end(), 0.0);
  }
  return g->data();
}

const double* Tape::grad(int node) const {
  if (node < 0 || node >= static_cast<int>(grads_.size())) return nullptr;
  return grads_[node] ? grads_[node]->data() : nullptr;
}

void Tape::backward(const Tensor& loss) {
  require(loss.node >= 0 && loss.tape_id == id_,
          "backward: loss is not tracked on this tape");
  require(loss.numel() == 1, "backward: loss must be scalar, got " + shape_str(loss.shape));
  grad_buf(loss.node)[0] = 1.0;
  for (int i = loss.node; i >= 0; --i) {
    if (!grads_[i] || !nodes_[i].back) continue;
    nodes_[i].back(grads_[i]->data(), *this);
  }
}

bool tracked(const Tensor& t) {
  return g_active && t.node >= 0 && t.tape_id == g_active->id();
}

// Attach the freshly computed output to the tape when any input is tracked.
static void track_out(Tensor& out, Tape::BackFn back, std::initializer_list<const Tensor*> ins) {
  if (!g_active) return;
  bool any = false;
  for (const Tensor* t : ins)
    if (tracked(*t)) any = true;
  if (!any) return;
  out.node = g_active->record(out.numel(), std::move(back));
  out.tape_id = g_active->id();
}

// ---- matmul family ---------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  require(a.shape.size() == 2 && b.shape.size() == 2 && a.shape[1] == b.shape[0],
          "matmul: incompatible shapes " + shape_str(a.shape) + " x " + shape_str(b.shape));
  const int m = a.shape[0], k = a.shape[1], n = b.shape[1];
  Tensor out = Tensor::uninit({m, n});
  MMap(out.data(), m, n).noalias() = CMap(a.data(), m, k) * CMap(b.data(), k, n);
  check_finite(*out.buf, "matmul");
  const bool ta = tracked(a), tb = tracked(b);
  const int na = a.node, nb = b.node;
  auto abuf = a.buf;
  auto bbuf = b.buf;
  track_out(out,
            [=](const double* g, Tape& t) {
              CMap G(g, m, n);
              if (ta) MMap(t.grad_buf(na), m, k).noalias() += G * CMap(bbuf->data(), k, n).transpose();
              if (tb) MMap(t.grad_buf(nb), k, n).noalias() += CMap(abuf->data(), m, k).transpose() * G;
            },
            {&a, &b});
  return out;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require(a.shape.size() == 2 && b.shape.size() == 2 && a.shape[1] == b.shape[1],
          "matmul_nt: incompatible shapes " + shape_str(a.shape) + " x " + shape_str(b.shape) + "^T");
  const int m = a.shape[0], k = a.shape[1], n = b.shape[0];
  Tensor out = Tensor::uninit({m, n});
  MMap(out.data(), m, n).noalias() = CMap(a.data(), m, k) * CMap(b.data(), n, k).transpose();
  check_finite(*out.buf, "matmul_nt");
  const bool ta = tracked(a), tb = tracked(b);
  const int na = a.node, nb = b.node;
  auto abuf = a.buf;
  auto bbuf = b.buf;
  track_out(out,
            [=](const double* g, Tape& t) {
              CMap G(g, m, n);
              if (ta) MMap(t.grad_buf(na), m, k).noalias() += G * CMap(bbuf->data(), n, k);
              if (tb) MMap(t.grad_buf(nb), n, k).noalias() += G.transpose() * CMap(abuf->data(), m, k);
            },
            {&a, &b});
  return out;
}

Tensor transpose(const Tensor& a) {
  require(a.shape.size() == 2, "transpose: need 2D, got " + shape_str(a.shape));
  const int m = a.shape[0], n = a.shape[1];
  Tensor out = Tensor::uninit({n, m});
  MMap(out.data(), n, m).noalias() = CMap(a.data(), m, n).transpose();
  const bool ta = tracked(a);
  const int na = a.node;
  track_out(out,
            [=](const double* g, Tape& t) {
              if (ta) MMap(t.grad_buf(na), m, n).noalias() += CMap(g, n, m).transpose();
            },
            {&a});
  return out;
}

// ---- broadcasting binary ops ------------------------------------------------

namespace {
enum class BMode { Same, Scalar, Row, Col };

BMode broadcast_mode(const char* op, const Tensor& a, const Tensor& b) {
  if (a.shape == b.shape) return BMode::Same;
  if (b.numel() == 1) return BMode::Scalar;
  if (a.shape.size() == 2 && b.shape.size() == 2) {
    if (b.shape[0] == 1 && b.shape[1] == a.shape[1]) return BMode::Row;
    if (b.shape[1] == 1 && b.shape[0] == a.shape[0]) return BMode::Col;
  }
  throw std::invalid_argument(std::string(op) + ": cannot broadcast " + shape_str(b.shape) +
                              " over " + shape_str(a.shape));
}

inline int64_t b_index(BMode m, int64_t i, int n) {
  switch (m) {
    case BMode::Same: return i;
    case BMode::Scalar: return 0;
    case BMode::Row: return i % n;
    case BMode::Col: return i / n;
  }
  return 0;
}

template <class F, class DA, class DB>
Tensor binary_op(const char* op, const Tensor& a, const Tensor& b, F f, DA dfa, DB dfb) {
  const BMode mode = broadcast_mode(op, a, b);
  const int n = a.shape.size() == 2 ? a.shape[1] : static_cast<int>(a.numel());
  Tensor out = Tensor::uninit(a.shape);
  const double* pa = a.data();
  const double* pb = b.data();
  double* po = out.data();
  const int64_t total = a.numel();
  for (int64_t i = 0; i < total; ++i) po[i] = f(pa[i], pb[b_index(mode, i, n)]);
  check_finite(*out.buf, op);
  const bool ta = tracked(a), tb = tracked(b);
  const int na = a.node, nb = b.node;
  auto abuf = a.buf;
  auto bbuf = b.buf;
  track_out(out,
            [=](const double* g, Tape& t) {
              const double* xa = abuf->data();
              const double* xb = bbuf->data();
              if (ta) {
                double* ga = t.grad_buf(na);
                for (int64_t i = 0; i < total; ++i)
                  ga[i] += dfa(xa[i], xb[b_index(mode, i, n)]) * g[i];
              }
              if (tb) {
                double* gb = t.grad_buf(nb);
                for (int64_t i = 0; i < total; ++i)
                  gb[b_index(mode, i, n)] += dfb(xa[i], xb[b_index(mode, i, n)]) * g[i];
              }
            },
            {&a, &b});
  return out;
}
}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_op(
      "add", a, b, [](double x, double y) { return x + y; },
      [](double, double) { return 1.0; }, [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_op(
      "sub", a, b, [](double x, double y) { return x - y; },
      [](double, double) { return 1.0; }, [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_op(
      "mul", a, b, [](double x, double y) { return x * y; },
      [](double, double y) { return y; }, [](double x, double) { return x; });
}

Tensor div_t(const Tensor& a, const Tensor& b) {
  return binary_op(
      "div", a, b, [](double x, double y) { return x / y; },
      [](double, double y) { return 1.0 / y; },
      [](double x, double y) { return -x / (y * y); });
}

// ---- unary ops ---------------------------------------------------------------

namespace {
template <class F, class DF>
Tensor unary_op(const char* op, const Tensor& a, F f, DF df) {
  Tensor out = Tensor::uninit(a.shape);
  const double* pa = a.data();
  double* po = out.data();
  const int64_t total = a.numel();
  for (int64_t i = 0; i < total; ++i) po[i] = f(pa[i]);
  check_finite(*out.buf, op);
  const bool ta = tracked(a);
  const int na = a.node;
  auto abuf = a.buf;
  auto obuf = out.buf;
  track_out(out,
            [=](const double* g, Tape& t) {
              if (!ta) return;
              double* ga = t.grad_buf(na);
              const double* xa = abuf->data();
              const double* y = obuf->data();
              for (int64_t i = 0; i < total; ++i) ga[i] += df(xa[i], y[i]) * g[i];
            },
            {&a});
  return out;
}
}  // namespace

Tensor neg(const Tensor& a) {
  return unary_op(
      "neg", a, [](double x) { return -x; }, [](double, double) { return -1.0; });
}

Tensor scale(const Tensor& a, double c) {
  return unary_op(
      "scale", a, [c](double x) { return c * x; }, [c](double, double) { return c; });
}

Tensor add_scalar(const Tensor& a, double c) {
  return unary_op(
      "add_scalar", a, [c](double x) { return x + c; }, [](double, double) { return 1.0; });
}

Tensor relu(const Tensor& a) {
  return unary_op(
      "relu", a, [](double x) { return x > 0 ? x : 0.0; },
      [](double x, double) { return x > 0 ? 1.0 : 0.0; });
}

Tensor tanh_t(const Tensor& a) {
  return unary_op(
      "tanh", a, [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

Tensor exp_t(const Tensor& a) {
  return unary_op(
      "exp", a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Tensor log_t(const Tensor& a) {
  return unary_op(
      "log", a, [](double x) { return std::log(x); },
      [](double x, double) { return 1.0 / x; });
}

Tensor sqrt_t(const Tensor& a) {
  return unary_op(
      "sqrt", a, [](double x) { return std::sqrt(x); },
      [](double, double y) { return 0.5 / y; });
}

Tensor abs_t(const Tensor& a) {
  return unary_op(
      "abs", a, [](double x) { return std::fabs(x); },
      [](double x, double) { return x > 0 ? 1.0 : (x < 0 ? -1.0 : 0.0); });
}

// ---- reductions ---------------------------------------------------------------

Tensor sum(const Tensor& a) {
  double acc = 0;
  for (int64_t i = 0; i < a.numel(); ++i) acc += a.data()[i];
  Tensor out = Tensor::scalar(acc);
  check_finite(*out.buf, "sum");
  const bool ta = tracked(a);
  const int na = a.node;
  const int64_t total = a.numel();
  track_out(out,
            [=](const double* g, Tape& t) {
              if (!ta) return;
              double* ga = t.grad_buf(na);
              for (int64_t i = 0; i < total; ++i) ga[i] += g[0];
            },
            {&a});
  return out;
}

Tensor mean(const Tensor& a) {
  require(a.numel() > 0, "mean of empty tensor");
  return scale(sum(a), 1.0 / static_cast<double>(a.numel()));
}

Tensor sum_axis(const Tensor& a, int axis) {
  require(a.shape.size() == 2 && (axis == 0 || axis == 1),
          "sum_axis: need 2D and axis 0/1, got " + shape_str(a.shape));
  const int m = a.shape[0], n = a.shape[1];
  Tensor out = Tensor::zeros(axis == 0 ? Shape{1, n} : Shape{m, 1});
  const double* pa = a.data();
  double* po = out.data();
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < n; ++j) po[axis == 0 ? j : i] += pa[static_cast<int64_t>(i) * n + j];
  check_finite(*out.buf, "sum_axis");
  const bool ta = tracked(a);
  const int na = a.node;
  track_out(out,
            [=](const double* g, Tape& t) {
              if (!ta) return;
              double* ga = t.grad_buf(na);
              for (int i = 0; i < m; ++i)
                for (int j = 0; j < n; ++j)
                  ga[static_cast<int64_t>(i) * n + j] += g[axis == 0 ? j : i];
            },
            {&a});
  return out;
}

Tensor mean_axis(const Tensor& a, int axis) {
  const double d = axis == 0 ? a.shape[0] : a.shape[1];
  return scale(sum_axis(a, axis), 1.0 / d);
}

// ---- shape ops ----------------------------------------------------------------

Tensor reshape(const Tensor& a, const Shape& s) {
  require(shape_numel(s) == a.numel(),
          "reshape: " + shape_str(a.shape) + " -> " + shape_str(s) + " changes element count");
  Tensor out = Tensor::uninit(s);
  std::memcpy(out.data(), a.data(), sizeof(double) * static_cast<size_t>(a.numel()));
  const bool ta = tracked(a);
  const int na = a.node;
  const int64_t total = a.numel();
  track_out(out,
            [=](const double* g, Tape& t) {
              if (!ta) return;
              double* ga = t.grad_buf(na);
              for (int64_t i = 0; i < total; ++i) ga[i] += g[i];
            },
            {&a});
  return out;
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  require(!parts.empty(), "concat_cols: empty input");
  const int m = parts[0].rows();
  int n = 0;
  for (const auto& p : parts) {
    require(p.rows() == m, "concat_cols: row mismatch " + shape_str(p.shape));
    n += p.cols();
  }
  Tensor out = Tensor::uninit({m, n});
  int off = 0;
  for (const auto& p : parts) {
    const int w = p.cols();
    for (int i = 0; i < m; ++i)
      std::memcpy(out.data() + static_cast<int64_t>(i) * n + off,
                  p.data() + static_cast<int64_t>(i) * w, sizeof(double) * w);
    off += w;
  }
  struct Piece {
    bool tr;
    int node;
    int off, w;
  };
  std::vector<Piece> pieces;
  off = 0;
  bool any = false;
  for (const auto& p : parts) {
    pieces.push_back({tracked(p), p.node, off, p.cols()});
    any = any || tracked(p);
    off += p.cols();
  }
  if (g_active && any) {
    out.node = g_active->record(out.numel(), [=](const double* g, Tape& t) {
      for (const auto& pc : pieces) {
        if (!pc.tr) continue;
        double* gp = t.grad_buf(pc.node);
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < pc.w; ++j)
            gp[static_cast<int64_t>(i) * pc.w + j] += g[static_cast<int64_t>(i) * n + pc.off + j];
      }
    });
    out.tape_id = g_active->id();
  }
  return out;
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  require(!parts.empty(), "concat_rows: empty input");
  const int n = parts[0].cols();
  int m = 0;
  for (const auto& p : parts) {
    require(p.cols() == n, "concat_rows: col mismatch " + shape_str(p.shape));
    m += p.rows();
  }
  Tensor out = Tensor::uninit({m, n});
  int off = 0;
  for (const auto& p : parts) {
    std::memcpy(out.data() + static_cast<int64_t>(off) * n, p.data(),
                sizeof(double) * p.numel());
    off += p.rows();
  }
  struct Piece {
    bool tr;
    int node;
    int off, h;
  };
  std::vector<Piece> pieces;
  off = 0;
  bool any = false;
  for (const auto& p : parts) {
    pieces.push_back({tracked(p), p.node, off, p.rows()});
    any = any || tracked(p);
    off += p.rows();
  }
  if (g_active && any) {
    out.node = g_active->record(out.numel(), [=](const double* g, Tape& t) {
      for (const auto& pc : pieces) {
        if (!pc.tr) continue;
        double* gp = t.grad_buf(pc.node);
        for (int64_t i = 0; i < static_cast<int64_t>(pc.h) * n; ++i)
          gp[i] += g[static_cast<int64_t>(pc.off) * n + i];
      }
    });
    out.tape_id = g_active->id();
  }
  return out;
}

Tensor slice_cols(const Tensor& a, int c0, int c1) {
  require(a.shape.size() == 2 && 0 <= c0 && c0 < c1 && c1 <= a.shape[1],
          "slice_cols: bad range on " + shape_str(a.shape));
  const int m = a.shape[0], n = a.shape[1], w = c1 - c0;
  Tensor out = Tensor::uninit({m, w});
  for (int i = 0; i < m; ++i)
    std::memcpy(out.data() + static_cast<int64_t>(i) * w,
                a.data() + static_cast<int64_t>(i) * n + c0, sizeof(double) * w);
  const bool ta = tracked(a);
  const int na = a.node;
  track_out(out,
            [=](const double* g, Tape& t) {
              if (!ta) return;
              double* ga = t.grad_buf(na);
              for (int i = 0; i < m; ++i)
                for (int j = 0; j < w; ++j)
                  ga[static_cast<int64_t>(i) * n + c0 + j] += g[static_cast<int64_t>(i) * w + j];
            },
            {&a});
  return out;
}

Tensor gather_rows(const Tensor& a, const std::vector<int>& idx) {
  require(a.shape.size() == 2, "gather_rows: need 2D, got " + shape_str(a.shape));
  const int m = a.shape[0], n = a.shape[1];
  for (int i : idx) require(0 <= i && i < m, "gather_rows: index out of range");
  const int r = static_cast<int>(idx.size());
  Tensor out = Tensor::uninit({r, n});
  for (int i = 0; i < r; ++i)
    std::memcpy(out.data() + static_cast<int64_t>(i) * n,
                a.data() + static_cast<int64_t>(idx[i]) * n, sizeof(double) * n);
  const bool ta = tracked(a);
  const int na = a.node;
  track_out(out,
            [=, indices = idx](const double* g, Tape& t) {
              if (!ta) return;
              double* ga = t.grad_buf(na);
              for (int i = 0; i < r; ++i)
                for (int j = 0; j < n; ++j)
                  ga[static_cast<int64_t>(indices[i]) * n + j] += g[static_cast<int64_t>(i) * n + j];
            },
            {&a});
  return out;
}

Tensor tile_rows(const Tensor& a, int times) {
  require(a.shape.size() == 2 && times >= 1, "tile_rows: need 2D and times >= 1");
  const int m = a.shape[0], n = a.shape[1];
  Tensor out = Tensor::uninit({m * times, n});
  for (int rep = 0; rep < times; ++rep)
    std::memcpy(out.data() + static_cast<int64_t>(rep) * m * n, a.data(),
                sizeof(double) * a.numel());
  const bool ta = tracked(a);
  const int na = a.node;
  const int64_t block = static_cast<int64_t>(m) * n;
  track_out(out,
            [=](const double* g, Tape& t) {
              if (!ta) return;
              double* ga = t.grad_buf(na);
              for (int rep = 0; rep < times; ++rep)
                for (int64_t i = 0; i < block; ++i) ga[i] += g[rep * block + i];
            },
            {&a});
  return out;
}

Tensor repeat_rows_interleave(const Tensor& a, int times) {
  require(a.shape.size() == 2 && times >= 1, "repeat_rows_interleave: need 2D and times >= 1");
  const int m = a.shape[0], n = a.shape[1];
  Tensor out = Tensor::uninit({m * times, n});
  for (int i = 0; i < m; ++i)
    for (int rep = 0; rep < times; ++rep)
      std::memcpy(out.data() + (static_cast<int64_t>(i) * times + rep) * n,
                  a.data() + static_cast<int64_t>(i) * n, sizeof(double) * n);
  const bool ta = tracked(a);
  const int na = a.node;
  track_out(out,
            [=](const double* g, Tape& t) {
              if (!ta) return;
              double* ga = t.grad_buf(na);
              for (int i = 0; i < m; ++i)
                for (int rep = 0; rep < times; ++rep)
                  for (int j = 0; j < n; ++j)
                    ga[static_cast<int64_t>(i) * n + j] +=
                        g[(static_cast<int64_t>(i) * times + rep) * n + j];
            },
            {&a});
  return out;
}

// ---- row-wise nonlinearities ----------------------------------------------------

Tensor softmax_rows(const Tensor& a) {
  require(a.shape.size() == 2, "softmax: need 2D, got " + shape_str(a.shape));
  const int m = a.shape[0], n = a.shape[1];
  Tensor out = Tensor::uninit({m, n});
  for (int i = 0; i < m; ++i) {
    const double* x = a.data() + static_cast<int64_t>(i) * n;
    double* y = out.data() + static_cast<int64_t>(i) * n;
    double mx = x[0];
    for (int j = 1; j < n; ++j) mx = std::max(mx, x[j]);
    double z = 0;
    for (int j = 0; j < n; ++j) {
      y[j] = std::exp(x[j] - mx);
      z += y[j];
    }
    for (int j = 0; j < n; ++j) y[j] /= z;
  }
  check_finite(*out.buf, "softmax");
  const bool ta = tracked(a);
  const int na = a.node;
  auto obuf = out.buf;
  track_out(out,
            [=](const double* g, Tape& t) {
              if (!ta) return;
              double* ga = t.grad_buf(na);
              const double* y = obuf->data();
              for (int i = 0; i < m; ++i) {
                const int64_t off = static_cast<int64_t>(i) * n;
                double dot = 0;
                for (int j = 0; j < n; ++j) dot += g[off + j] * y[off + j];
                for (int j = 0; j < n; ++j) ga[off + j] += y[off + j] * (g[off + j] - dot);
              }
            },
            {&a});
  return out;
}

Tensor log_softmax_rows(const Tensor& a) {
  require(a.shape.size() == 2, "log_softmax: need 2D, got " + shape_str(a.shape));
  const int m = a.shape[0], n = a.shape[1];
  Tensor out = Tensor::uninit({m, n});
  for (int i = 0; i < m; ++i) {
    const double* x = a.data() + static_cast<int64_t>(i) * n;
    double* y = out.data() + static_cast<int64_t>(i) * n;
    double mx = x[0];
    for (int j = 1; j < n; ++j) mx = std::max(mx, x[j]);
    double z = 0;
    for (int j = 0; j < n; ++j) z += std::exp(x[j] - mx);
    const double lse = mx + std::log(z);
    for (int j = 0; j < n; ++j) y[j] = x[j] - lse;
  }
  check_finite(*out.buf, "log_softmax");
  const bool ta = tracked(a);
  const int na = a.node;
  auto obuf = out.buf;
  track_out(out,
            [=](const double* g, Tape& t) {
              if (!ta) return;
              double* ga = t.grad_buf(na);
              const double* y = obuf->data();
              for (int i = 0; i < m; ++i) {
                const int64_t off = static_cast<int64_t>(i) * n;
                double gs = 0;
                for (int j = 0; j < n; ++j) gs += g[off + j];
                for (int j = 0; j < n; ++j) ga[off + j] += g[off + j] - std::exp(y[off + j]) * gs;
              }
            },
            {&a});
  return out;
}

Tensor layer_norm_rows(const Tensor& a, double eps) {
  require(a.shape.size() == 2, "layer_norm: need 2D, got " + shape_str(a.shape));
  const int m = a.shape[0], n = a.shape[1];
  Tensor out = Tensor::uninit({m, n});
  auto inv_std = pooled_buffer(m);
  for (int i = 0; i < m; ++i) {
    const double* x = a.data() + static_cast<int64_t>(i) * n;
    double* y = out.data() + static_cast<int64_t>(i) * n;
    double mu = 0;
    for (int j = 0; j < n; ++j) mu += x[j];
    mu /= n;
    double var = 0;
    for (int j = 0; j < n; ++j) var += (x[j] - mu) * (x[j] - mu);
    var /= n;
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[i] = is;
    for (int j = 0; j < n; ++j) y[j] = (x[j] - mu) * is;
  }
  check_finite(*out.buf, "layer_norm");
  const bool ta = tracked(a);
  const int na = a.node;
  auto obuf = out.buf;
  track_out(out,
            [=](const double* g, Tape& t) {
              if (!ta) return;
              double* ga = t.grad_buf(na);
              const double* y = obuf->data();
              for (int i = 0; i < m; ++i) {
                const int64_t off = static_cast<int64_t>(i) * n;
                double gmean = 0, gydot = 0;
                for (int j = 0; j < n; ++j) {
                  gmean += g[off + j];
                  gydot += g[off + j] * y[off + j];
                }
                gmean /= n;
                gydot /= n;
                const double is = (*inv_std)[i];
                for (int j = 0; j < n; ++j)
                  ga[off + j] += is * (g[off + j] - gmean - y[off + j] * gydot);
              }
            },
            {&a});
  return out;
}

// ---- attention -------------------------------------------------------------------

Tensor scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                            int batch, int len, int heads) {
  require(q.shape.size() == 2 && q.shape == k.shape && q.shape == v.shape,
          "attention: q/k/v shapes must match, got " + shape_str(q.shape) + " " +
              shape_str(k.shape) + " " + shape_str(v.shape));
  const int d = q.shape[1];
  require(q.shape[0] == batch * len, "attention: rows != batch*len");
  require(d % heads == 0, "attention: dim not divisible by heads");
  const int dh = d / heads;
  const double inv = 1.0 / std::sqrt(static_cast<double>(dh));

  Tensor out = Tensor::uninit({batch * len, d});
  auto probs =
      pooled_buffer(static_cast<int64_t>(batch) * heads * len * len);

  auto qbuf = q.buf, kbuf = k.buf, vbuf = v.buf;
  auto at = [&](const std::vector<double>& b, int bi, int ti, int h, int j) {
    return b[(static_cast<int64_t>(bi) * len + ti) * d + h * dh + j];
  };
  for (int bi = 0; bi < batch; ++bi) {
    for (int h = 0; h < heads; ++h) {
      double* S = probs->data() + (static_cast<int64_t>(bi) * heads + h) * len * len;
      for (int i = 0; i < len; ++i) {
        double mx = -1e300;
        for (int j = 0; j < len; ++j) {
          double s = 0;
          for (int e = 0; e < dh; ++e) s += at(*qbuf, bi, i, h, e) * at(*kbuf, bi, j, h, e);
          s *= inv;
          S[i * len + j] = s;
          mx = std::max(mx, s);
        }
        double z = 0;
        for (int j = 0; j < len; ++j) {
          S[i * len + j] = std::exp(S[i * len + j] - mx);
          z += S[i * len + j];
        }
        for (int j = 0; j < len; ++j) S[i * len + j] /= z;
        for (int e = 0; e < dh; ++e) {
          double acc = 0;
          for (int j = 0; j < len; ++j) acc += S[i * len + j] * at(*vbuf, bi, j, h, e);
          out.data()[(static_cast<int64_t>(bi) * len + i) * d + h * dh + e] = acc;
        }
      }
    }
  }
  check_finite(*out.buf, "scaled_dot_attention");

  const bool tq = tracked(q), tk = tracked(k), tv = tracked(v);
  const int nq = q.node, nk = k.node, nv = v.node;
  track_out(out,
            [=](const double* g, Tape& t) {
              double* gq = tq ? t.grad_buf(nq) : nullptr;
              double* gk = tk ? t.grad_buf(nk) : nullptr;
              double* gv = tv ? t.grad_buf(nv) : nullptr;
              std::vector<double> ds(static_cast<size_t>(len) * len);
              auto gat = [&](const double* b, int bi, int ti, int h, int j) {
                return b[(static_cast<int64_t>(bi) * len + ti) * d + h * dh + j];
              };
              for (int bi = 0; bi < batch; ++bi) {
                for (int h = 0; h < heads; ++h) {
                  const double* S = probs->data() + (static_cast<int64_t>(bi) * heads + h) * len * len;
                  // dV += S^T gO ; dS = gO V^T
                  for (int i = 0; i < len; ++i) {
                    for (int j = 0; j < len; ++j) {
                      double acc = 0;
                      for (int e = 0; e < dh; ++e)
                        acc += gat(g, bi, i, h, e) * gat(vbuf->data(), bi, j, h, e);
                      ds[i * len + j] = acc;
                    }
                  }
                  if (gv) {
                    for (int j = 0; j < len; ++j)
                      for (int e = 0; e < dh; ++e) {
                        double acc = 0;
                        for (int i = 0; i < len; ++i) acc += S[i * len + j] * gat(g, bi, i, h, e);
                        gv[(static_cast<int64_t>(bi) * len + j) * d + h * dh + e] += acc;
                      }
                  }
                  // softmax backward rows: dA = S o (dS - rowdot)
                  for (int i = 0; i < len; ++i) {
                    double dot = 0;
                    for (int j = 0; j < len; ++j) dot += ds[i * len + j] * S[i * len + j];
                    for (int j = 0; j < len; ++j)
                      ds[i * len + j] = S[i * len + j] * (ds[i * len + j] - dot);
                  }
                  if (gq) {
                    for (int i = 0; i < len; ++i)
                      for (int e = 0; e < dh; ++e) {
                        double acc = 0;
                        for (int j = 0; j < len; ++j)
                          acc += ds[i * len + j] * gat(kbuf->data(), bi, j, h, e);
                        gq[(static_cast<int64_t>(bi) * len + i) * d + h * dh + e] += acc * inv;
                      }
                  }
                  if (gk) {
                    for (int j = 0; j < len; ++j)
                      for (int e = 0; e < dh; ++e) {
                        double acc = 0;
                        for (int i = 0; i < len; ++i)
                          acc += ds[i * len + j] * gat(qbuf->data(), bi, i, h, e);
                        gk[(static_cast<int64_t>(bi) * len + j) * d + h * dh + e] += acc * inv;
                      }
                  }
                }
              }
            },
            {&q, &k, &v});
  return out;
}

// ---- conv support -------------------------------------------------------------------

Tensor im2col(const Tensor& x, int c, int h, int w, int k, int stride, int pad) {
  require(x.shape.size() == 2 && x.shape[1] == c * h * w,
          "im2col: input " + shape_str(x.shape) + " does not match c*h*w");
  require(stride >= 1 && k >= 1 && pad >= 0, "im2col: bad geometry");
  const int b = x.shape[0];
  const int oh = (h + 2 * pad - k) / stride + 1;
  const int ow = (w + 2 * pad - k) / stride + 1;
  require(oh >= 1 && ow >= 1, "im2col: kernel larger than padded input");
  const int pcols = c * k * k;
  Tensor out = Tensor::uninit({b * oh * ow, pcols});
  for (int bi = 0; bi < b; ++bi) {
    const double* xb = x.data() + static_cast<int64_t>(bi) * c * h * w;
    for (int oy = 0; oy < oh; ++oy)
      for (int ox = 0; ox < ow; ++ox) {
        double* row = out.data() +
                      (static_cast<int64_t>(bi) * oh * ow + static_cast<int64_t>(oy) * ow + ox) * pcols;
        for (int ci = 0; ci < c; ++ci)
          for (int ky = 0; ky < k; ++ky)
            for (int kx = 0; kx < k; ++kx) {
              const int iy = oy * stride - pad + ky;
              const int ix = ox * stride - pad + kx;
              row[(ci * k + ky) * k + kx] =
                  (iy >= 0 && iy < h && ix >= 0 && ix < w)
                      ? xb[(static_cast<int64_t>(ci) * h + iy) * w + ix]
                      : 0.0;
            }
      }
  }
  const bool tx = tracked(x);
  const int nx = x.node;
  track_out(out,
            [=](const double* g, Tape& t) {
              if (!tx) return;
              double* gx = t.grad_buf(nx);
              for (int bi = 0; bi < b; ++bi) {
                double* gb = gx + static_cast<int64_t>(bi) * c * h * w;
                for (int oy = 0; oy < oh; ++oy)
                  for (int ox = 0; ox < ow; ++ox) {
                    const double* row =
                        g + (static_cast<int64_t>(bi) * oh * ow + static_cast<int64_t>(oy) * ow + ox) * pcols;
                    for (int ci = 0; ci < c; ++ci)
                      for (int ky = 0; ky < k; ++ky)
                        for (int kx = 0; kx < k; ++kx) {
                          const int iy = oy * stride - pad + ky;
                          const int ix = ox * stride - pad + kx;
                          if (iy >= 0 && iy < h && ix >= 0 && ix < w)
                            gb[(static_cast<int64_t>(ci) * h + iy) * w + ix] +=
                                row[(ci * k + ky) * k + kx];
                        }
                  }
              }
            },
            {&x});
  return out;
}

Tensor cols_to_nchw(const Tensor& x, int batch, int p, int c) {
  require(x.shape.size() == 2 && x.shape[0] == batch * p && x.shape[1] == c,
          "cols_to_nchw: input " + shape_str(x.shape) + " does not match batch*p x c");
  Tensor out = Tensor::uninit({batch, c * p});
  for (int bi = 0; bi < batch; ++bi)
    for (int pi = 0; pi < p; ++pi)
      for (int ci = 0; ci < c; ++ci)
        out.data()[static_cast<int64_t>(bi) * c * p + static_cast<int64_t>(ci) * p + pi] =
            x.data()[(static_cast<int64_t>(bi) * p + pi) * c + ci];
  const bool tx = tracked(x);
  const int nx = x.node;
  track_out(out,
            [=](const double* g, Tape& t) {
              if (!tx) return;
              double* gx = t.grad_buf(nx);
              for (int bi = 0; bi < batch; ++bi)
                for (int pi = 0; pi < p; ++pi)
                  for (int ci = 0; ci < c; ++ci)
                    gx[(static_cast<int64_t>(bi) * p + pi) * c + ci] +=
                        g[static_cast<int64_t>(bi) * c * p + static_cast<int64_t>(ci) * p + pi];
            },
            {&x});
  return out;
}

}  // namespace cresp::nn
