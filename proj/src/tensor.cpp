#include "hedge/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace hedge::ad {

namespace {

std::size_t shape_numel(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

thread_local bool g_grad_enabled = true;

constexpr double kBceLo = 1e-7;
constexpr double kBceHi = 1.0 - 1e-7;

}  // namespace

// ---- Tensor -----------------------------------------------------------------

Tensor Tensor::zeros(std::vector<std::size_t> shape, bool requires_grad) {
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->shape = std::move(shape);
  impl->value.assign(shape_numel(impl->shape), 0.0);
  Tensor t(std::move(impl));
  if (requires_grad) t.enable_grad();
  return t;
}

Tensor Tensor::full(std::vector<std::size_t> shape, double v, bool requires_grad) {
  Tensor t = zeros(std::move(shape), requires_grad);
  std::fill(t.value().begin(), t.value().end(), v);
  return t;
}

Tensor Tensor::from_data(std::vector<std::size_t> shape, std::vector<double> data,
                         bool requires_grad) {
  if (shape_numel(shape) != data.size())
    throw DimensionError("from_data: shape " + shape_str(shape) + " does not hold " +
                         std::to_string(data.size()) + " values");
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->shape = std::move(shape);
  impl->value = std::move(data);
  Tensor t(std::move(impl));
  if (requires_grad) t.enable_grad();
  return t;
}

Tensor Tensor::scalar(double v, bool requires_grad) {
  return from_data({1}, {v}, requires_grad);
}

void Tensor::enable_grad() {
  if (!impl_->requires_grad) {
    impl_->requires_grad = true;
    impl_->grad.assign(impl_->value.size(), 0.0);
  }
}

std::vector<double>& Tensor::grad() {
  if (!impl_->requires_grad)
    throw ContractError("grad(): tensor does not track gradients");
  return impl_->grad;
}

const std::vector<double>& Tensor::grad() const {
  if (!impl_->requires_grad)
    throw ContractError("grad(): tensor does not track gradients");
  return impl_->grad;
}

void Tensor::zero_grad() {
  if (impl_->requires_grad) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

double Tensor::item() const {
  if (numel() != 1)
    throw ContractError("item(): tensor has " + std::to_string(numel()) + " elements");
  return impl_->value[0];
}

// ---- Tape -------------------------------------------------------------------

Tape& Tape::active() {
  thread_local Tape tape;
  return tape;
}

void Tape::record(std::shared_ptr<detail::TensorImpl> out, std::function<void()> back) {
  nodes_.push_back(Node{std::move(out), std::move(back)});
}

void Tape::clear() { nodes_.clear(); }

bool Tape::grad_enabled() { return g_grad_enabled; }

Tape::NoGrad::NoGrad() : prev_(g_grad_enabled) { g_grad_enabled = false; }
Tape::NoGrad::~NoGrad() { g_grad_enabled = prev_; }

void backward(const Tensor& loss) {
  if (loss.numel() != 1)
    throw ContractError("backward: loss must be scalar, got shape " +
                        shape_str(loss.shape()));
  if (!loss.requires_grad()) return;  // constant: nothing reachable

  auto& tape = Tape::active();
  // interior accumulation buffers start fresh each pass; leaves keep theirs,
  // which is what makes repeated backward calls additive
  for (const auto& node : tape.nodes())
    std::fill(node.out->grad.begin(), node.out->grad.end(), 0.0);
  loss.impl()->grad[0] += 1.0;
  const auto& nodes = tape.nodes();
  for (auto it = nodes.rbegin(); it != nodes.rend(); ++it) it->back();
}

// ---- op helpers -------------------------------------------------------------

namespace {

using Impl = std::shared_ptr<detail::TensorImpl>;

bool should_record(std::initializer_list<const Tensor*> inputs) {
  if (!Tape::grad_enabled()) return false;
  for (const auto* t : inputs)
    if (t->requires_grad()) return true;
  return false;
}

// returns output shape for an elementwise pair; the smaller operand must be
// scalar or a trailing suffix of the larger one, and flat-index modulo its
// numel then addresses it
std::vector<std::size_t> broadcast_shape(const Tensor& a, const Tensor& b,
                                         const char* opname) {
  const auto& sa = a.shape();
  const auto& sb = b.shape();
  if (sa == sb) return sa;
  auto suffix_of = [](const std::vector<std::size_t>& small,
                      const std::vector<std::size_t>& big) {
    if (small.size() > big.size()) return false;
    return std::equal(small.rbegin(), small.rend(), big.rbegin());
  };
  if (b.numel() == 1 || suffix_of(sb, sa)) return sa;
  if (a.numel() == 1 || suffix_of(sa, sb)) return sb;
  throw DimensionError(std::string(opname) + ": shapes " + shape_str(sa) + " and " +
                       shape_str(sb) + " are not broadcastable");
}

Tensor make_output(std::vector<std::size_t> shape,
                   std::initializer_list<const Tensor*> inputs) {
  Tensor out = Tensor::zeros(std::move(shape));
  if (should_record(inputs)) out.enable_grad();
  return out;
}

}  // namespace

// ---- elementwise ------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  Tensor out = make_output(broadcast_shape(a, b, "add"), {&a, &b});
  const auto& av = a.value();
  const auto& bv = b.value();
  auto& ov = out.value();
  const std::size_t na = av.size(), nb = bv.size();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i % na] + bv[i % nb];
  if (out.requires_grad()) {
    Impl ai = a.impl(), bi = b.impl(), oi = out.impl();
    Tape::active().record(oi, [ai, bi, oi, na, nb] {
      const auto& g = oi->grad;
      if (ai->requires_grad)
        for (std::size_t i = 0; i < g.size(); ++i) ai->grad[i % na] += g[i];
      if (bi->requires_grad)
        for (std::size_t i = 0; i < g.size(); ++i) bi->grad[i % nb] += g[i];
    });
  }
  return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  Tensor out = make_output(broadcast_shape(a, b, "sub"), {&a, &b});
  const auto& av = a.value();
  const auto& bv = b.value();
  auto& ov = out.value();
  const std::size_t na = av.size(), nb = bv.size();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i % na] - bv[i % nb];
  if (out.requires_grad()) {
    Impl ai = a.impl(), bi = b.impl(), oi = out.impl();
    Tape::active().record(oi, [ai, bi, oi, na, nb] {
      const auto& g = oi->grad;
      if (ai->requires_grad)
        for (std::size_t i = 0; i < g.size(); ++i) ai->grad[i % na] += g[i];
      if (bi->requires_grad)
        for (std::size_t i = 0; i < g.size(); ++i) bi->grad[i % nb] -= g[i];
    });
  }
  return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
  Tensor out = make_output(broadcast_shape(a, b, "mul"), {&a, &b});
  const auto& av = a.value();
  const auto& bv = b.value();
  auto& ov = out.value();
  const std::size_t na = av.size(), nb = bv.size();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i % na] * bv[i % nb];
  if (out.requires_grad()) {
    Impl ai = a.impl(), bi = b.impl(), oi = out.impl();
    Tape::active().record(oi, [ai, bi, oi, na, nb] {
      const auto& g = oi->grad;
      if (ai->requires_grad)
        for (std::size_t i = 0; i < g.size(); ++i)
          ai->grad[i % na] += g[i] * bi->value[i % nb];
      if (bi->requires_grad)
        for (std::size_t i = 0; i < g.size(); ++i)
          bi->grad[i % nb] += g[i] * ai->value[i % na];
    });
  }
  return out;
}

Tensor scale(const Tensor& x, double c) {
  Tensor out = make_output(x.shape(), {&x});
  const auto& xv = x.value();
  auto& ov = out.value();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = xv[i] * c;
  if (out.requires_grad()) {
    Impl xi = x.impl(), oi = out.impl();
    Tape::active().record(oi, [xi, oi, c] {
      for (std::size_t i = 0; i < oi->grad.size(); ++i) xi->grad[i] += oi->grad[i] * c;
    });
  }
  return out;
}

Tensor add_scalar(const Tensor& x, double c) {
  Tensor out = make_output(x.shape(), {&x});
  const auto& xv = x.value();
  auto& ov = out.value();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = xv[i] + c;
  if (out.requires_grad()) {
    Impl xi = x.impl(), oi = out.impl();
    Tape::active().record(oi, [xi, oi] {
      for (std::size_t i = 0; i < oi->grad.size(); ++i) xi->grad[i] += oi->grad[i];
    });
  }
  return out;
}

// ---- activations ------------------------------------------------------------

Tensor sigmoid(const Tensor& x) {
  Tensor out = make_output(x.shape(), {&x});
  const auto& xv = x.value();
  auto& ov = out.value();
  for (std::size_t i = 0; i < ov.size(); ++i) {
    const double v = xv[i];
    if (v >= 0.0) {
      ov[i] = 1.0 / (1.0 + std::exp(-v));
    } else {
      const double e = std::exp(v);
      ov[i] = e / (1.0 + e);
    }
  }
  if (out.requires_grad()) {
    Impl xi = x.impl(), oi = out.impl();
    Tape::active().record(oi, [xi, oi] {
      for (std::size_t i = 0; i < oi->grad.size(); ++i) {
        const double s = oi->value[i];
        xi->grad[i] += oi->grad[i] * s * (1.0 - s);
      }
    });
  }
  return out;
}

Tensor tanh(const Tensor& x) {
  Tensor out = make_output(x.shape(), {&x});
  const auto& xv = x.value();
  auto& ov = out.value();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = std::tanh(xv[i]);
  if (out.requires_grad()) {
    Impl xi = x.impl(), oi = out.impl();
    Tape::active().record(oi, [xi, oi] {
      for (std::size_t i = 0; i < oi->grad.size(); ++i) {
        const double t = oi->value[i];
        xi->grad[i] += oi->grad[i] * (1.0 - t * t);
      }
    });
  }
  return out;
}

Tensor relu(const Tensor& x) {
  Tensor out = make_output(x.shape(), {&x});
  const auto& xv = x.value();
  auto& ov = out.value();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = xv[i] > 0.0 ? xv[i] : 0.0;
  if (out.requires_grad()) {
    Impl xi = x.impl(), oi = out.impl();
    Tape::active().record(oi, [xi, oi] {
      for (std::size_t i = 0; i < oi->grad.size(); ++i)
        if (xi->value[i] > 0.0) xi->grad[i] += oi->grad[i];
    });
  }
  return out;
}

// ---- matmul -----------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() > 2 || b.rank() > 2 || a.rank() == 0 || b.rank() == 0)
    throw DimensionError("matmul: unsupported ranks for shapes " + shape_str(a.shape()) +
                         " x " + shape_str(b.shape()));
  const bool a_vec = a.rank() == 1;
  const bool b_vec = b.rank() == 1;
  const std::size_t m = a_vec ? 1 : a.dim(0);
  const std::size_t k = a_vec ? a.dim(0) : a.dim(1);
  const std::size_t kb = b.dim(0);
  const std::size_t n = b_vec ? 1 : b.dim(1);
  if (k != kb)
    throw DimensionError("matmul: inner dimensions disagree, " + shape_str(a.shape()) +
                         " x " + shape_str(b.shape()));

  std::vector<std::size_t> out_shape;
  if (a_vec && b_vec) out_shape = {1};
  else if (a_vec) out_shape = {n};
  else if (b_vec) out_shape = {m};
  else out_shape = {m, n};

  Tensor out = make_output(std::move(out_shape), {&a, &b});
  const double* av = a.value().data();
  const double* bv = b.value().data();
  double* ov = out.value().data();
  for (std::size_t i = 0; i < m; ++i) {
    double* orow = ov + i * n;
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double s = av[i * k + kk];
      const double* brow = bv + kk * n;
      for (std::size_t j = 0; j < n; ++j) orow[j] += s * brow[j];
    }
  }

  if (out.requires_grad()) {
    Impl ai = a.impl(), bi = b.impl(), oi = out.impl();
    Tape::active().record(oi, [ai, bi, oi, m, k, n] {
      const double* g = oi->grad.data();
      if (ai->requires_grad) {
        // dA = dC * B^T
        double* da = ai->grad.data();
        const double* bv = bi->value.data();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t kk = 0; kk < k; ++kk) {
            const double* grow = g + i * n;
            const double* brow = bv + kk * n;
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) acc += grow[j] * brow[j];
            da[i * k + kk] += acc;
          }
      }
      if (bi->requires_grad) {
        // dB = A^T * dC
        double* db = bi->grad.data();
        const double* av = ai->value.data();
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t kk = 0; kk < k; ++kk) {
            const double s = av[i * k + kk];
            const double* grow = g + i * n;
            double* brow = db + kk * n;
            for (std::size_t j = 0; j < n; ++j) brow[j] += s * grow[j];
          }
      }
    });
  }
  return out;
}

// ---- shape ops ---------------------------------------------------------------

Tensor concat(const Tensor& a, const Tensor& b) {
  if (a.rank() != b.rank() || a.rank() < 1 || a.rank() > 2)
    throw DimensionError("concat: incompatible ranks " + shape_str(a.shape()) + " + " +
                         shape_str(b.shape()));
  if (a.rank() == 2 && a.dim(0) != b.dim(0))
    throw DimensionError("concat: row counts differ, " + shape_str(a.shape()) + " + " +
                         shape_str(b.shape()));
  const std::size_t rows = a.rank() == 2 ? a.dim(0) : 1;
  const std::size_t da = a.rank() == 2 ? a.dim(1) : a.dim(0);
  const std::size_t db = b.rank() == 2 ? b.dim(1) : b.dim(0);
  std::vector<std::size_t> shape =
      a.rank() == 2 ? std::vector<std::size_t>{rows, da + db}
                    : std::vector<std::size_t>{da + db};

  Tensor out = make_output(std::move(shape), {&a, &b});
  auto& ov = out.value();
  const auto& av = a.value();
  const auto& bv = b.value();
  for (std::size_t r = 0; r < rows; ++r) {
    std::copy(av.begin() + r * da, av.begin() + (r + 1) * da,
              ov.begin() + r * (da + db));
    std::copy(bv.begin() + r * db, bv.begin() + (r + 1) * db,
              ov.begin() + r * (da + db) + da);
  }
  if (out.requires_grad()) {
    Impl ai = a.impl(), bi = b.impl(), oi = out.impl();
    Tape::active().record(oi, [ai, bi, oi, rows, da, db] {
      const auto& g = oi->grad;
      for (std::size_t r = 0; r < rows; ++r) {
        if (ai->requires_grad)
          for (std::size_t j = 0; j < da; ++j)
            ai->grad[r * da + j] += g[r * (da + db) + j];
        if (bi->requires_grad)
          for (std::size_t j = 0; j < db; ++j)
            bi->grad[r * db + j] += g[r * (da + db) + da + j];
      }
    });
  }
  return out;
}

Tensor row(const Tensor& x, std::size_t t) {
  if (x.rank() != 2) throw DimensionError("row: need rank-2, got " + shape_str(x.shape()));
  if (t >= x.dim(0))
    throw DimensionError("row: index " + std::to_string(t) + " out of " +
                         std::to_string(x.dim(0)));
  const std::size_t d = x.dim(1);
  Tensor out = make_output({d}, {&x});
  std::copy(x.value().begin() + t * d, x.value().begin() + (t + 1) * d,
            out.value().begin());
  if (out.requires_grad()) {
    Impl xi = x.impl(), oi = out.impl();
    Tape::active().record(oi, [xi, oi, t, d] {
      for (std::size_t j = 0; j < d; ++j) xi->grad[t * d + j] += oi->grad[j];
    });
  }
  return out;
}

Tensor stack_rows(const std::vector<Tensor>& rows) {
  if (rows.empty()) throw ContractError("stack_rows: empty row list");
  const std::size_t d = rows[0].numel();
  bool any_grad = false;
  for (const auto& r : rows) {
    if (r.rank() != 1 || r.numel() != d)
      throw DimensionError("stack_rows: rows must all be length " + std::to_string(d));
    any_grad = any_grad || r.requires_grad();
  }
  Tensor out = Tensor::zeros({rows.size(), d});
  if (Tape::grad_enabled() && any_grad) out.enable_grad();
  auto& ov = out.value();
  for (std::size_t t = 0; t < rows.size(); ++t)
    std::copy(rows[t].value().begin(), rows[t].value().end(), ov.begin() + t * d);
  if (out.requires_grad()) {
    std::vector<Impl> ins;
    ins.reserve(rows.size());
    for (const auto& r : rows) ins.push_back(r.impl());
    Impl oi = out.impl();
    Tape::active().record(oi, [ins, oi, d] {
      for (std::size_t t = 0; t < ins.size(); ++t)
        if (ins[t]->requires_grad)
          for (std::size_t j = 0; j < d; ++j) ins[t]->grad[j] += oi->grad[t * d + j];
    });
  }
  return out;
}

Tensor take_rows(const Tensor& x, std::size_t n) {
  if (x.rank() != 2)
    throw DimensionError("take_rows: need rank-2, got " + shape_str(x.shape()));
  if (n == 0 || n > x.dim(0))
    throw DimensionError("take_rows: cannot take " + std::to_string(n) + " of " +
                         std::to_string(x.dim(0)) + " rows");
  const std::size_t d = x.dim(1);
  Tensor out = make_output({n, d}, {&x});
  std::copy(x.value().begin(), x.value().begin() + n * d, out.value().begin());
  if (out.requires_grad()) {
    Impl xi = x.impl(), oi = out.impl();
    Tape::active().record(oi, [xi, oi, n, d] {
      for (std::size_t i = 0; i < n * d; ++i) xi->grad[i] += oi->grad[i];
    });
  }
  return out;
}

Tensor pad_rows(const Tensor& x, std::size_t t_total) {
  if (x.rank() != 2)
    throw DimensionError("pad_rows: need rank-2, got " + shape_str(x.shape()));
  if (t_total < x.dim(0))
    throw DimensionError("pad_rows: target " + std::to_string(t_total) +
                         " smaller than " + std::to_string(x.dim(0)));
  const std::size_t d = x.dim(1), n = x.dim(0);
  Tensor out = make_output({t_total, d}, {&x});
  std::copy(x.value().begin(), x.value().end(), out.value().begin());
  if (out.requires_grad()) {
    Impl xi = x.impl(), oi = out.impl();
    Tape::active().record(oi, [xi, oi, n, d] {
      for (std::size_t i = 0; i < n * d; ++i) xi->grad[i] += oi->grad[i];
    });
  }
  return out;
}

Tensor mask_rows(const Tensor& x, const Mask& mask) {
  if (x.rank() != 2)
    throw DimensionError("mask_rows: need rank-2, got " + shape_str(x.shape()));
  if (mask.size() != x.dim(0))
    throw DimensionError("mask_rows: mask length " + std::to_string(mask.size()) +
                         " vs " + std::to_string(x.dim(0)) + " rows");
  const std::size_t d = x.dim(1);
  Tensor out = make_output(x.shape(), {&x});
  auto& ov = out.value();
  const auto& xv = x.value();
  for (std::size_t t = 0; t < mask.size(); ++t)
    if (mask[t])
      std::copy(xv.begin() + t * d, xv.begin() + (t + 1) * d, ov.begin() + t * d);
  if (out.requires_grad()) {
    Impl xi = x.impl(), oi = out.impl();
    Mask m = mask;
    Tape::active().record(oi, [xi, oi, m, d] {
      for (std::size_t t = 0; t < m.size(); ++t)
        if (m[t])
          for (std::size_t j = 0; j < d; ++j)
            xi->grad[t * d + j] += oi->grad[t * d + j];
    });
  }
  return out;
}

Tensor slice_last(const Tensor& x, std::size_t start, std::size_t len) {
  if (x.rank() < 1 || x.rank() > 2)
    throw DimensionError("slice_last: need rank 1 or 2, got " + shape_str(x.shape()));
  const std::size_t d = x.shape().back();
  if (start + len > d)
    throw DimensionError("slice_last: [" + std::to_string(start) + "," +
                         std::to_string(start + len) + ") out of " + std::to_string(d));
  const std::size_t rows = x.rank() == 2 ? x.dim(0) : 1;
  std::vector<std::size_t> shape =
      x.rank() == 2 ? std::vector<std::size_t>{rows, len} : std::vector<std::size_t>{len};
  Tensor out = make_output(std::move(shape), {&x});
  auto& ov = out.value();
  const auto& xv = x.value();
  for (std::size_t r = 0; r < rows; ++r)
    std::copy(xv.begin() + r * d + start, xv.begin() + r * d + start + len,
              ov.begin() + r * len);
  if (out.requires_grad()) {
    Impl xi = x.impl(), oi = out.impl();
    Tape::active().record(oi, [xi, oi, rows, d, start, len] {
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < len; ++j)
          xi->grad[r * d + start + j] += oi->grad[r * len + j];
    });
  }
  return out;
}

Tensor transpose(const Tensor& x) {
  if (x.rank() != 2)
    throw DimensionError("transpose: need rank-2, got " + shape_str(x.shape()));
  const std::size_t m = x.dim(0), n = x.dim(1);
  Tensor out = make_output({n, m}, {&x});
  auto& ov = out.value();
  const auto& xv = x.value();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) ov[j * m + i] = xv[i * n + j];
  if (out.requires_grad()) {
    Impl xi = x.impl(), oi = out.impl();
    Tape::active().record(oi, [xi, oi, m, n] {
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) xi->grad[i * n + j] += oi->grad[j * m + i];
    });
  }
  return out;
}

Tensor reshape(const Tensor& x, std::vector<std::size_t> shape) {
  if (shape_numel(shape) != x.numel())
    throw DimensionError("reshape: " + shape_str(x.shape()) + " to " + shape_str(shape) +
                         " changes element count");
  Tensor out = make_output(std::move(shape), {&x});
  out.value() = x.value();
  if (out.requires_grad()) {
    Impl xi = x.impl(), oi = out.impl();
    Tape::active().record(oi, [xi, oi] {
      for (std::size_t i = 0; i < oi->grad.size(); ++i) xi->grad[i] += oi->grad[i];
    });
  }
  return out;
}

// ---- reductions & softmax ----------------------------------------------------

Tensor sum(const Tensor& x) {
  Tensor out = make_output({1}, {&x});
  double acc = 0.0;
  for (double v : x.value()) acc += v;
  out.value()[0] = acc;
  if (out.requires_grad()) {
    Impl xi = x.impl(), oi = out.impl();
    Tape::active().record(oi, [xi, oi] {
      const double g = oi->grad[0];
      for (auto& gv : xi->grad) gv += g;
    });
  }
  return out;
}

Tensor softmax_masked(const Tensor& scores, const Mask& mask) {
  if (scores.rank() != 1)
    throw DimensionError("softmax_masked: need rank-1 scores, got " +
                         shape_str(scores.shape()));
  if (mask.size() != scores.numel())
    throw DimensionError("softmax_masked: mask length " + std::to_string(mask.size()) +
                         " vs " + std::to_string(scores.numel()) + " scores");
  if (mask_count(mask) == 0)
    throw InvalidMaskError("softmax_masked: no live position in mask");

  const std::size_t n = scores.numel();
  Tensor out = make_output({n}, {&scores});
  const auto& sv = scores.value();
  auto& ov = out.value();
  double mx = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < n; ++i)
    if (mask[i]) mx = std::max(mx, sv[i]);
  double z = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (mask[i]) {
      ov[i] = std::exp(sv[i] - mx);
      z += ov[i];
    }
  }
  for (std::size_t i = 0; i < n; ++i)
    if (mask[i]) ov[i] /= z;

  if (out.requires_grad()) {
    Impl si = scores.impl(), oi = out.impl();
    Mask m = mask;
    Tape::active().record(oi, [si, oi, m] {
      double dot = 0.0;
      for (std::size_t i = 0; i < m.size(); ++i)
        if (m[i]) dot += oi->grad[i] * oi->value[i];
      for (std::size_t i = 0; i < m.size(); ++i)
        if (m[i]) si->grad[i] += oi->value[i] * (oi->grad[i] - dot);
    });
  }
  return out;
}

Tensor softmax_rows_masked(const Tensor& scores, const Mask& key_mask) {
  if (scores.rank() != 2)
    throw DimensionError("softmax_rows_masked: need rank-2 scores, got " +
                         shape_str(scores.shape()));
  const std::size_t rows = scores.dim(0), cols = scores.dim(1);
  if (key_mask.size() != cols)
    throw DimensionError("softmax_rows_masked: mask length " +
                         std::to_string(key_mask.size()) + " vs " +
                         std::to_string(cols) + " keys");
  if (mask_count(key_mask) == 0)
    throw InvalidMaskError("softmax_rows_masked: no live key");

  Tensor out = make_output(scores.shape(), {&scores});
  const auto& sv = scores.value();
  auto& ov = out.value();
  for (std::size_t r = 0; r < rows; ++r) {
    const double* srow = sv.data() + r * cols;
    double* orow = ov.data() + r * cols;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < cols; ++j)
      if (key_mask[j]) mx = std::max(mx, srow[j]);
    double z = 0.0;
    for (std::size_t j = 0; j < cols; ++j) {
      if (key_mask[j]) {
        orow[j] = std::exp(srow[j] - mx);
        z += orow[j];
      }
    }
    for (std::size_t j = 0; j < cols; ++j)
      if (key_mask[j]) orow[j] /= z;
  }

  if (out.requires_grad()) {
    Impl si = scores.impl(), oi = out.impl();
    Mask m = key_mask;
    Tape::active().record(oi, [si, oi, m, rows, cols] {
      for (std::size_t r = 0; r < rows; ++r) {
        const double* g = oi->grad.data() + r * cols;
        const double* w = oi->value.data() + r * cols;
        double* ds = si->grad.data() + r * cols;
        double dot = 0.0;
        for (std::size_t j = 0; j < cols; ++j)
          if (m[j]) dot += g[j] * w[j];
        for (std::size_t j = 0; j < cols; ++j)
          if (m[j]) ds[j] += w[j] * (g[j] - dot);
      }
    });
  }
  return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
  if (x.rank() < 1 || x.rank() > 2)
    throw DimensionError("layer_norm: need rank 1 or 2, got " + shape_str(x.shape()));
  const std::size_t d = x.shape().back();
  if (gain.numel() != d || bias.numel() != d)
    throw DimensionError("layer_norm: gain/bias must be length " + std::to_string(d));
  const std::size_t rows = x.rank() == 2 ? x.dim(0) : 1;

  Tensor out = make_output(x.shape(), {&x, &gain, &bias});
  const auto& xv = x.value();
  const auto& gv = gain.value();
  const auto& bv = bias.value();
  auto& ov = out.value();
  std::vector<double> mean(rows), inv_std(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    const double* xr = xv.data() + r * d;
    double mu = 0.0;
    for (std::size_t j = 0; j < d; ++j) mu += xr[j];
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (std::size_t j = 0; j < d; ++j) var += (xr[j] - mu) * (xr[j] - mu);
    var /= static_cast<double>(d);
    const double is = 1.0 / std::sqrt(var + eps);
    mean[r] = mu;
    inv_std[r] = is;
    double* orow = ov.data() + r * d;
    for (std::size_t j = 0; j < d; ++j) orow[j] = (xr[j] - mu) * is * gv[j] + bv[j];
  }

  if (out.requires_grad()) {
    Impl xi = x.impl(), gi = gain.impl(), bi = bias.impl(), oi = out.impl();
    Tape::active().record(oi, [xi, gi, bi, oi, rows, d, mean, inv_std] {
      for (std::size_t r = 0; r < rows; ++r) {
        const double* g = oi->grad.data() + r * d;
        const double* xr = xi->value.data() + r * d;
        const double mu = mean[r], is = inv_std[r];
        if (gi->requires_grad || bi->requires_grad) {
          for (std::size_t j = 0; j < d; ++j) {
            const double xhat = (xr[j] - mu) * is;
            if (gi->requires_grad) gi->grad[j] += g[j] * xhat;
            if (bi->requires_grad) bi->grad[j] += g[j];
          }
        }
        if (xi->requires_grad) {
          // dxhat_j = g_j * gain_j; dx from the usual three-term rule
          double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
          for (std::size_t j = 0; j < d; ++j) {
            const double dxhat = g[j] * gi->value[j];
            const double xhat = (xr[j] - mu) * is;
            sum_dxhat += dxhat;
            sum_dxhat_xhat += dxhat * xhat;
          }
          const double dn = static_cast<double>(d);
          for (std::size_t j = 0; j < d; ++j) {
            const double dxhat = g[j] * gi->value[j];
            const double xhat = (xr[j] - mu) * is;
            xi->grad[r * d + j] +=
                is * (dxhat - sum_dxhat / dn - xhat * sum_dxhat_xhat / dn);
          }
        }
      }
    });
  }
  return out;
}

Tensor max_rows(const Tensor& x) {
  if (x.rank() != 2)
    throw DimensionError("max_rows: need rank-2, got " + shape_str(x.shape()));
  const std::size_t rows = x.dim(0), cols = x.dim(1);
  Tensor out = make_output({cols}, {&x});
  const auto& xv = x.value();
  auto& ov = out.value();
  std::vector<std::size_t> arg(cols, 0);
  for (std::size_t j = 0; j < cols; ++j) {
    double best = xv[j];
    for (std::size_t r = 1; r < rows; ++r) {
      if (xv[r * cols + j] > best) {
        best = xv[r * cols + j];
        arg[j] = r;
      }
    }
    ov[j] = best;
  }
  if (out.requires_grad()) {
    Impl xi = x.impl(), oi = out.impl();
    Tape::active().record(oi, [xi, oi, arg, cols] {
      for (std::size_t j = 0; j < cols; ++j)
        xi->grad[arg[j] * cols + j] += oi->grad[j];
    });
  }
  return out;
}

Tensor conv1d_valid(const Tensor& seq, const Tensor& w, const Tensor& b,
                    std::size_t window, std::size_t length) {
  if (seq.rank() != 2 || w.rank() != 2 || b.rank() != 1)
    throw DimensionError("conv1d_valid: bad ranks");
  const std::size_t d = seq.dim(1);
  const std::size_t f = w.dim(1);
  if (w.dim(0) != window * d)
    throw DimensionError("conv1d_valid: filter bank " + shape_str(w.shape()) +
                         " does not match window " + std::to_string(window) + " x dim " +
                         std::to_string(d));
  if (b.numel() != f) throw DimensionError("conv1d_valid: bias length vs filter count");
  if (length < window || length > seq.dim(0))
    throw DimensionError("conv1d_valid: length " + std::to_string(length) +
                         " incompatible with window " + std::to_string(window) +
                         " and " + std::to_string(seq.dim(0)) + " rows");

  const std::size_t n_out = length - window + 1;
  Tensor out = make_output({n_out, f}, {&seq, &w, &b});
  const auto& sv = seq.value();
  const auto& wv = w.value();
  const auto& bv = b.value();
  auto& ov = out.value();
  for (std::size_t t = 0; t < n_out; ++t) {
    double* orow = ov.data() + t * f;
    std::copy(bv.begin(), bv.end(), orow);
    for (std::size_t u = 0; u < window * d; ++u) {
      const double s = sv[t * d + u];  // rows t..t+window-1 flattened
      const double* wrow = wv.data() + u * f;
      for (std::size_t j = 0; j < f; ++j) orow[j] += s * wrow[j];
    }
  }

  if (out.requires_grad()) {
    Impl si = seq.impl(), wi = w.impl(), bi = b.impl(), oi = out.impl();
    Tape::active().record(oi, [si, wi, bi, oi, window, d, f, n_out] {
      for (std::size_t t = 0; t < n_out; ++t) {
        const double* g = oi->grad.data() + t * f;
        if (bi->requires_grad)
          for (std::size_t j = 0; j < f; ++j) bi->grad[j] += g[j];
        for (std::size_t u = 0; u < window * d; ++u) {
          if (wi->requires_grad) {
            const double s = si->value[t * d + u];
            double* wrow = wi->grad.data() + u * f;
            for (std::size_t j = 0; j < f; ++j) wrow[j] += s * g[j];
          }
          if (si->requires_grad) {
            const double* wrow = wi->value.data() + u * f;
            double acc = 0.0;
            for (std::size_t j = 0; j < f; ++j) acc += wrow[j] * g[j];
            si->grad[t * d + u] += acc;
          }
        }
      }
    });
  }
  return out;
}

Tensor gather_rows(const Tensor& table, const std::vector<int>& ids, const Mask& mask) {
  if (table.rank() != 2)
    throw DimensionError("gather_rows: table must be rank-2, got " +
                         shape_str(table.shape()));
  if (ids.size() != mask.size())
    throw DimensionError("gather_rows: ids/mask length mismatch");
  const std::size_t v = table.dim(0), d = table.dim(1);
  for (std::size_t t = 0; t < ids.size(); ++t)
    if (mask[t] && (ids[t] < 0 || static_cast<std::size_t>(ids[t]) >= v))
      throw ContractError("gather_rows: id " + std::to_string(ids[t]) +
                          " outside table of " + std::to_string(v) + " rows");

  Tensor out = make_output({ids.size(), d}, {&table});
  auto& ov = out.value();
  const auto& tv = table.value();
  for (std::size_t t = 0; t < ids.size(); ++t)
    if (mask[t])
      std::copy(tv.begin() + ids[t] * d, tv.begin() + (ids[t] + 1) * d,
                ov.begin() + t * d);

  if (out.requires_grad()) {
    Impl ti = table.impl(), oi = out.impl();
    std::vector<int> idv = ids;
    Mask m = mask;
    Tape::active().record(oi, [ti, oi, idv, m, d] {
      for (std::size_t t = 0; t < idv.size(); ++t)
        if (m[t])
          for (std::size_t j = 0; j < d; ++j)
            ti->grad[idv[t] * d + j] += oi->grad[t * d + j];
    });
  }
  return out;
}

Tensor weighted_bce_mean(const Tensor& probs, const std::vector<int>& labels,
                         double w0, double w1) {
  if (probs.rank() != 1 || probs.numel() != labels.size())
    throw DimensionError("weighted_bce_mean: probs " + shape_str(probs.shape()) +
                         " vs " + std::to_string(labels.size()) + " labels");
  const std::size_t n = labels.size();
  if (n == 0) throw ContractError("weighted_bce_mean: empty batch");

  Tensor out = make_output({1}, {&probs});
  const auto& pv = probs.value();
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double p = std::min(kBceHi, std::max(kBceLo, pv[i]));
    acc += labels[i] ? -w1 * std::log(p) : -w0 * std::log(1.0 - p);
  }
  out.value()[0] = acc / static_cast<double>(n);

  if (out.requires_grad()) {
    Impl pi = probs.impl(), oi = out.impl();
    std::vector<int> y = labels;
    Tape::active().record(oi, [pi, oi, y, w0, w1, n] {
      const double g = oi->grad[0] / static_cast<double>(n);
      for (std::size_t i = 0; i < n; ++i) {
        const double p = pi->value[i];
        if (p <= kBceLo || p >= kBceHi) continue;  // clamped region is flat
        pi->grad[i] += g * (y[i] ? -w1 / p : w0 / (1.0 - p));
      }
    });
  }
  return out;
}

// ---- gradient checking ---------------------------------------------------------

double grad_check(const std::function<Tensor(const Tensor&)>& f, Tensor x, double eps) {
  if (eps <= 0.0) throw ContractError("grad_check: eps must be positive");
  x.enable_grad();
  auto& tape = Tape::active();

  tape.clear();
  Tensor y = f(x);
  if (y.numel() != 1)
    throw ContractError("grad_check: f must return a scalar, got shape " +
                        shape_str(y.shape()));
  x.zero_grad();
  backward(y);
  std::vector<double> analytic = x.grad();
  tape.clear();

  auto eval = [&]() {
    Tape::NoGrad ng;
    return f(x).item();
  };

  double max_rel = 0.0;
  for (std::size_t i = 0; i < x.numel(); ++i) {
    const double orig = x.value()[i];
    x.value()[i] = orig + eps;
    const double fp = eval();
    x.value()[i] = orig - eps;
    const double fm = eval();
    x.value()[i] = orig;
    const double numeric = (fp - fm) / (2.0 * eps);
    const double rel = std::abs(analytic[i] - numeric) /
                       std::max(1e-8, std::abs(analytic[i]) + std::abs(numeric));
    if (std::isnan(rel)) return rel;
    max_rel = std::max(max_rel, rel);
  }
  return max_rel;
}

}  // namespace hedge::ad
