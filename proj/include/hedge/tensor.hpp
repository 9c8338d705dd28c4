#pragma once

#include <cstddef>
#include <functional>
#include <memory>
#include <vector>

#include "hedge/common.hpp"

namespace hedge::ad {

namespace detail {

struct TensorImpl {
  std::vector<std::size_t> shape;
  std::vector<double> value;
  std::vector<double> grad;  // sized like value iff requires_grad
  bool requires_grad = false;
};

}  // namespace detail

// Dense 64-bit float tensor, row-major. Copies are shallow handles onto the
// same storage; ops below build new tensors and record backward rules on the
// thread's active tape.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(std::vector<std::size_t> shape, bool requires_grad = false);
  static Tensor full(std::vector<std::size_t> shape, double v, bool requires_grad = false);
  static Tensor from_data(std::vector<std::size_t> shape, std::vector<double> data,
                          bool requires_grad = false);
  static Tensor scalar(double v, bool requires_grad = false);

  bool defined() const { return impl_ != nullptr; }
  const std::vector<std::size_t>& shape() const { return impl_->shape; }
  std::size_t rank() const { return impl_->shape.size(); }
  std::size_t dim(std::size_t i) const { return impl_->shape[i]; }
  std::size_t numel() const { return impl_->value.size(); }

  bool requires_grad() const { return impl_->requires_grad; }
  // marks the tensor as a gradient sink and allocates a zeroed grad buffer
  void enable_grad();

  std::vector<double>& value() { return impl_->value; }
  const std::vector<double>& value() const { return impl_->value; }
  std::vector<double>& grad();
  const std::vector<double>& grad() const;
  void zero_grad();

  // single-element access
  double item() const;
  double at(std::size_t i) const { return impl_->value[i]; }
  double at(std::size_t i, std::size_t j) const {
    return impl_->value[i * impl_->shape[1] + j];
  }

  std::shared_ptr<detail::TensorImpl> impl() const { return impl_; }

 private:
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl) : impl_(std::move(impl)) {}
  std::shared_ptr<detail::TensorImpl> impl_;
};

// Wengert list. Ops append one node per recorded operation; backward() seeds
// the loss gradient and replays nodes in reverse, which visits every node
// exactly once and meets the inputs-before-node order by construction.
class Tape {
 public:
  static Tape& active();  // thread-local instance

  void record(std::shared_ptr<detail::TensorImpl> out, std::function<void()> back);
  void clear();
  std::size_t size() const { return nodes_.size(); }

  static bool grad_enabled();

  // RAII: disables recording for pure inference / numeric probing
  struct NoGrad {
    NoGrad();
    ~NoGrad();
    NoGrad(const NoGrad&) = delete;
    NoGrad& operator=(const NoGrad&) = delete;

   private:
    bool prev_;
  };

  struct Node {
    std::shared_ptr<detail::TensorImpl> out;
    std::function<void()> back;
  };
  const std::vector<Node>& nodes() const { return nodes_; }

 private:
  std::vector<Node> nodes_;
};

// Populates grads of every requires_grad ancestor of `loss` on the active
// tape. Interior buffers are reset per call; leaf grads accumulate (+=), so
// repeated calls without zero_grad() sum gradient passes.
void backward(const Tensor& loss);

// ---- operations -----------------------------------------------------------

// [m,k]x[k,n] -> [m,n]; also [k]x[k,n] -> [n] and [m,k]x[k] -> [m]
Tensor matmul(const Tensor& a, const Tensor& b);

// elementwise; shapes must match, or one side is scalar / a trailing-axis
// suffix of the other
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);

Tensor scale(const Tensor& x, double c);
Tensor add_scalar(const Tensor& x, double c);

Tensor sigmoid(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor relu(const Tensor& x);

// concatenation along the last axis: [H]+[H'] -> [H+H'], [T,D]+[T,D'] -> [T,D+D']
Tensor concat(const Tensor& a, const Tensor& b);

// max-subtraction stabilized softmax over live positions; masked slots get
// exactly zero weight
Tensor softmax_masked(const Tensor& scores, const Mask& mask);
// row-wise variant for [T,T] attention score matrices with key-side masking
Tensor softmax_rows_masked(const Tensor& scores, const Mask& key_mask);

Tensor sum(const Tensor& x);  // -> scalar [1]

Tensor row(const Tensor& x, std::size_t t);              // [T,D] -> [D]
Tensor stack_rows(const std::vector<Tensor>& rows);      // T x [D] -> [T,D]
Tensor take_rows(const Tensor& x, std::size_t n);        // first n rows
Tensor pad_rows(const Tensor& x, std::size_t t_total);   // zero rows appended
Tensor mask_rows(const Tensor& x, const Mask& mask);     // zero masked rows
Tensor slice_last(const Tensor& x, std::size_t start, std::size_t len);
Tensor transpose(const Tensor& x);                       // [m,n] -> [n,m]
Tensor reshape(const Tensor& x, std::vector<std::size_t> shape);

// per-row normalization over the last axis with learned gain and bias
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps = 1e-5);

// column-wise max over rows, ties to the first row: [T,F] -> [F]
Tensor max_rows(const Tensor& x);

// valid 1-D convolution over the first `length` rows of seq; w is the
// flattened filter bank [window*D, F], b is [F] -> [length-window+1, F]
Tensor conv1d_valid(const Tensor& seq, const Tensor& w, const Tensor& b,
                    std::size_t window, std::size_t length);

// row gather with mask zeroing; grads scatter into `table` when trainable
Tensor gather_rows(const Tensor& table, const std::vector<int>& ids, const Mask& mask);

// mean over examples of -(w1*y*ln p + w0*(1-y)*ln(1-p)), p clamped to
// [1e-7, 1-1e-7]; probs is [B], labels in {0,1}
Tensor weighted_bce_mean(const Tensor& probs, const std::vector<int>& labels,
                         double w0, double w1);

// ---- verification ----------------------------------------------------------

// Max over coordinates of |analytic - central difference| /
// max(1e-8, |analytic| + |numeric|). f must be deterministic in x.
double grad_check(const std::function<Tensor(const Tensor&)>& f, Tensor x, double eps);

}  // namespace hedge::ad
