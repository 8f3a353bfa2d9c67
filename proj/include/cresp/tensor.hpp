#pragma once
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

namespace cresp::nn {

using Shape = std::vector<int>;

int64_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

class Tape;

// Dense double tensor, row-major. `node >= 0` means the value is tracked on
// the tape with serial `tape_id`; anything else is a constant for autodiff.
struct Tensor {
  Shape shape;
  std::shared_ptr<std::vector<double>> buf;
  int node = -1;
  uint64_t tape_id = 0;

  Tensor() = default;

  int64_t numel() const { return buf ? static_cast<int64_t>(buf->size()) : 0; }
  int rows() const;
  int cols() const;
  double* data() { return buf->data(); }
  const double* data() const { return buf->data(); }
  double item() const;

  static Tensor zeros(const Shape& s);
  // Pool-backed buffer with unspecified contents; only for outputs whose
  // every element is written before use.
  static Tensor uninit(const Shape& s);
  static Tensor full(const Shape& s, double v);
  static Tensor from(const Shape& s, std::vector<double> values);
  static Tensor scalar(double v);
};

// Reverse-mode tape. One tape per update step, one per worker thread; ops
// record onto the thread's active tape (see TapeScope).
class Tape {
 public:
  Tape();
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  uint64_t id() const { return id_; }
  int size() const { return static_cast<int>(nodes_.size()); }

  using BackFn = std::function<void(const double* gout, Tape& tape)>;

  int leaf(int64_t out_size);
  int record(int64_t out_size, BackFn back);

  // Accumulation buffer for a node's gradient, allocated (zeroed) on demand.
  double* grad_buf(int node);
  // nullptr when the node was never reached by backward.
  const double* grad(int node) const;
  int64_t node_size(int node) const { return nodes_[node].size; }

  // loss must be a tracked scalar on this tape.
  void backward(const Tensor& loss);

 private:
  struct NodeRec {
    int64_t size;
    BackFn back;
  };
  uint64_t id_;
  std::vector<NodeRec> nodes_;
  std::vector<std::shared_ptr<std::vector<double>>> grads_;
};

Tape* active_tape();

struct TapeScope {
  explicit TapeScope(Tape& t);
  ~TapeScope();

 private:
  Tape* prev_;
};

// True when `t` is tracked on the active tape.
bool tracked(const Tensor& t);

// ---- primitives -----------------------------------------------------------
// Every op validates shapes (errors name the op and both shapes) and checks
// the output for NaN/Inf.

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor matmul_nt(const Tensor& a, const Tensor& b);  // a * b^T
Tensor transpose(const Tensor& a);

// binary ops broadcast b over a when b is scalar, a row (1,n) or a col (m,1)
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div_t(const Tensor& a, const Tensor& b);

Tensor neg(const Tensor& a);
Tensor scale(const Tensor& a, double c);
Tensor add_scalar(const Tensor& a, double c);

Tensor relu(const Tensor& a);
Tensor tanh_t(const Tensor& a);
Tensor exp_t(const Tensor& a);
Tensor log_t(const Tensor& a);
Tensor sqrt_t(const Tensor& a);
Tensor abs_t(const Tensor& a);

Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor sum_axis(const Tensor& a, int axis);   // 2D; axis 0 -> (1,n), axis 1 -> (m,1)
Tensor mean_axis(const Tensor& a, int axis);

Tensor reshape(const Tensor& a, const Shape& s);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor slice_cols(const Tensor& a, int c0, int c1);
Tensor gather_rows(const Tensor& a, const std::vector<int>& idx);
Tensor tile_rows(const Tensor& a, int times);              // [a; a; ...]
Tensor repeat_rows_interleave(const Tensor& a, int times); // each row repeated

Tensor softmax_rows(const Tensor& a);
Tensor log_softmax_rows(const Tensor& a);
Tensor layer_norm_rows(const Tensor& a, double eps = 1e-5);  // normalize only

// q, k, v: (batch*len, dim) with dim divisible by heads; full attention.
Tensor scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                            int batch, int len, int heads);

// x: (batch, c*h*w) -> (batch*oh*ow, c*k*k) patches for stride/pad conv
Tensor im2col(const Tensor& x, int c, int h, int w, int k, int stride, int pad);
// x: (batch*p, c) -> (batch, c*p); p = oh*ow. Rearranges conv output back to
// channel-major rows so the next im2col can consume it.
Tensor cols_to_nchw(const Tensor& x, int batch, int p, int c);

}  // namespace cresp::nn
