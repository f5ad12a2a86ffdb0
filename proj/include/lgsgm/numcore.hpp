#pragma once

// Dense row-major matrices with a reverse-mode differentiation tape.
//
// Every tensor is two dimensional (rows x cols); vectors are 1 x n rows and
// scalars are 1 x 1. Operations record themselves on the tape that is active
// on the calling thread (see TapeScope) whenever at least one input requires
// a gradient. With no active tape the same functions run as plain math, which
// is how evaluation code uses them.

#include <array>
#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "lgsgm/errors.hpp"

namespace lgsgm::num {

using Shape = std::array<std::size_t, 2>;

std::string shape_str(const Shape& s);

struct TensorData {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> value;
  std::vector<double> grad;  // empty until a backward pass touches it
  bool requires_grad = false;
};

// Shared handle to tensor storage. Copies alias the same storage; use clone()
// for an independent copy.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::size_t rows, std::size_t cols, bool requires_grad = false);
  static Tensor full(std::size_t rows, std::size_t cols, double v, bool requires_grad = false);
  // Throws NumericError if any value is non-finite.
  static Tensor from(std::size_t rows, std::size_t cols, std::vector<double> values,
                     bool requires_grad = false);
  static Tensor row(std::vector<double> values, bool requires_grad = false);
  static Tensor scalar(double v, bool requires_grad = false);

  bool defined() const { return static_cast<bool>(d_); }
  std::size_t rows() const { return d_->rows; }
  std::size_t cols() const { return d_->cols; }
  std::size_t size() const { return d_->value.size(); }
  Shape shape() const { return {d_->rows, d_->cols}; }

  std::span<const double> values() const { return d_->value; }
  // Direct write access, for parameter updates and test setup only. Writes
  // made while a tape holds the tensor invalidate that tape's gradients.
  std::span<double> mutable_values() { return d_->value; }
  double at(std::size_t r, std::size_t c) const { return d_->value[r * d_->cols + c]; }
  double item() const;

  bool requires_grad() const { return d_->requires_grad; }
  void set_requires_grad(bool on) { d_->requires_grad = on; }

  bool has_grad() const { return !d_->grad.empty() || d_->value.empty(); }
  std::span<const double> grad() const { return d_->grad; }
  std::span<double> mutable_grad();
  // Allocates (if needed) and zero-fills the gradient buffer.
  void zero_grad();

  Tensor clone() const;
  bool same(const Tensor& other) const { return d_ == other.d_; }
  bool all_finite() const;

  TensorData* data() const { return d_.get(); }

 private:
  explicit Tensor(std::shared_ptr<TensorData> d) : d_(std::move(d)) {}
  std::shared_ptr<TensorData> d_;
};

// Ordered record of executed operations. Backward replays it in reverse.
//
// A tape may be consumed by backward() exactly once; a second call throws
// ContractError. Build a fresh tape for every forward pass.
class Tape {
 public:
  using BackwardFn = std::function<void()>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  void record(const char* op, std::vector<Tensor> inputs, Tensor output, BackwardFn fn);

  // Sets d(output)/dt on every requires_grad tensor reachable on this tape.
  // Gradient buffers of those tensors are reset first, so the result is the
  // exact derivative and not an accumulation.
  void backward(const Tensor& scalar_output);

  std::size_t size() const { return entries_.size(); }
  bool consumed() const { return consumed_; }

  // Name and position of the first recorded op whose output holds a
  // non-finite value, or empty when everything is finite.
  std::string first_non_finite() const;

 private:
  struct Entry {
    const char* op;
    std::vector<Tensor> inputs;
    Tensor output;
    BackwardFn fn;
  };
  std::vector<Entry> entries_;
  bool consumed_ = false;
};

// Makes `tape` the active tape on this thread for the scope's lifetime.
class TapeScope {
 public:
  explicit TapeScope(Tape& tape);
  ~TapeScope();
  TapeScope(const TapeScope&) = delete;
  TapeScope& operator=(const TapeScope&) = delete;

 private:
  Tape* previous_;
};

Tape* active_tape();

// Convenience wrapper: backward(tape, loss).
inline void backward(Tape& tape, const Tensor& scalar_output) { tape.backward(scalar_output); }

enum class Activation { kIdentity, kSigmoid, kRelu, kTanh, kSwish };

Activation parse_activation(const std::string& name);
const char* activation_name(Activation a);

// Linear algebra.
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& x);

// Elementwise, identical shapes.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double c);
Tensor add_scalar(const Tensor& x, double c);

// x (n x c) plus a bias row (1 x c) added to every row. The only broadcast.
Tensor add_row(const Tensor& x, const Tensor& bias);
// Row i of x (n x c) multiplied by w(i, 0), w is n x 1.
Tensor scale_rows(const Tensor& x, const Tensor& w);

Tensor sigmoid(const Tensor& x);
Tensor relu(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor swish(const Tensor& x);
Tensor activate(const Tensor& x, Activation a);

// Reductions. Sums accumulate each reduced lane in ascending value order so
// that the result depends only on the multiset of terms, not their order.
Tensor sum(const Tensor& x);        // -> 1 x 1
Tensor mean(const Tensor& x);       // -> 1 x 1, ContractError when empty
Tensor sum_rows(const Tensor& x);   // over axis 0 -> 1 x cols
Tensor mean_rows(const Tensor& x);  // over axis 0 -> 1 x cols, ContractError when rows == 0

struct MaxResult {
  Tensor values;                   // axis 0: 1 x cols, axis 1: rows x 1
  std::vector<std::size_t> index;  // argmax per lane, lowest index wins ties
};
// Gradient flows to the argmax element only. ContractError on an empty axis.
MaxResult max_axis(const Tensor& x, int axis);

// Structural ops.
Tensor concat_cols(std::span<const Tensor> parts);
Tensor concat_rows(std::span<const Tensor> parts);
Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t count);
Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t count);
Tensor gather_rows(const Tensor& x, std::span<const std::size_t> index);
Tensor pick(const Tensor& x, std::size_t r, std::size_t c);  // -> 1 x 1

// Cosine similarity of two same-shape tensors viewed as flat vectors,
// clamped to [-1, 1]. NumericError when either norm is zero.
Tensor cosine(const Tensor& a, const Tensor& b);

// Column-wise batch normalisation over the rows of x.
struct BatchNormState {
  Tensor running_mean;  // 1 x c, not trainable
  Tensor running_var;   // 1 x c, not trainable
  double momentum = 0.1;
  double eps = 1e-5;
};
// training == true normalises with the batch statistics (biased variance)
// and folds them into the running statistics (unbiased variance);
// otherwise the running statistics are used as constants.
Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  BatchNormState& state, bool training);

}  // namespace lgsgm::num
