#include "lgsgm/numcore.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace lgsgm::num {

namespace {

thread_local Tape* g_active_tape = nullptr;

double sigmoid_scalar(double x) {
  if (x >= 0) {
    const double z = std::exp(-x);
    return 1.0 / (1.0 + z);
  }
  const double z = std::exp(x);
  return z / (1.0 + z);
}

// Sum in ascending value order; the result is a function of the multiset.
double canonical_sum(std::vector<double>& terms) {
  std::sort(terms.begin(), terms.end());
  double acc = 0.0;
  for (double t : terms) acc += t;
  return acc;
}

bool needs_record(std::initializer_list<const Tensor*> inputs) {
  if (g_active_tape == nullptr) return false;
  for (const Tensor* t : inputs) {
    if (t->requires_grad()) return true;
  }
  return false;
}

bool needs_record(std::span<const Tensor> inputs) {
  if (g_active_tape == nullptr) return false;
  for (const Tensor& t : inputs) {
    if (t.requires_grad()) return true;
  }
  return false;
}

// Gradient buffer of t when it participates in differentiation, else null.
std::vector<double>* grad_of(TensorData* t) {
  return t->requires_grad ? &t->grad : nullptr;
}

void check_defined(const Tensor& t, const char* op) {
  if (!t.defined()) throw ContractError(std::string(op) + ": undefined tensor");
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  check_defined(a, op);
  check_defined(b, op);
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

template <typename Fwd, typename Deriv>
Tensor unary_map(const Tensor& x, const char* op, Fwd fwd, Deriv deriv) {
  check_defined(x, op);
  Tensor out = Tensor::zeros(x.rows(), x.cols());
  auto ov = out.mutable_values();
  auto xv = x.values();
  for (std::size_t i = 0; i < xv.size(); ++i) ov[i] = fwd(xv[i]);
  if (needs_record({&x})) {
    out.set_requires_grad(true);
    TensorData* xd = x.data();
    TensorData* od = out.data();
    g_active_tape->record(op, {x}, out, [xd, od, deriv]() {
      auto* gx = grad_of(xd);
      if (gx == nullptr) return;
      for (std::size_t i = 0; i < od->value.size(); ++i) {
        (*gx)[i] += od->grad[i] * deriv(xd->value[i], od->value[i]);
      }
    });
  }
  return out;
}

}  // namespace

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[" << s[0] << "x" << s[1] << "]";
  return os.str();
}

// ---------------------------------------------------------------- Tensor

Tensor Tensor::zeros(std::size_t rows, std::size_t cols, bool requires_grad) {
  auto d = std::make_shared<TensorData>();
  d->rows = rows;
  d->cols = cols;
  d->value.assign(rows * cols, 0.0);
  d->requires_grad = requires_grad;
  return Tensor(std::move(d));
}

Tensor Tensor::full(std::size_t rows, std::size_t cols, double v, bool requires_grad) {
  Tensor t = zeros(rows, cols, requires_grad);
  std::fill(t.d_->value.begin(), t.d_->value.end(), v);
  return t;
}

Tensor Tensor::from(std::size_t rows, std::size_t cols, std::vector<double> values,
                    bool requires_grad) {
  if (values.size() != rows * cols) {
    throw DimensionError("tensor: " + std::to_string(values.size()) + " values for shape " +
                         shape_str({rows, cols}));
  }
  for (double v : values) {
    if (!std::isfinite(v)) throw NumericError("tensor: non-finite value");
  }
  auto d = std::make_shared<TensorData>();
  d->rows = rows;
  d->cols = cols;
  d->value = std::move(values);
  d->requires_grad = requires_grad;
  return Tensor(std::move(d));
}

Tensor Tensor::row(std::vector<double> values, bool requires_grad) {
  const std::size_t n = values.size();
  return from(1, n, std::move(values), requires_grad);
}

Tensor Tensor::scalar(double v, bool requires_grad) { return from(1, 1, {v}, requires_grad); }

double Tensor::item() const {
  if (size() != 1) throw ContractError("item: tensor " + shape_str(shape()) + " is not a scalar");
  return d_->value[0];
}

std::span<double> Tensor::mutable_grad() {
  if (d_->grad.size() != d_->value.size()) d_->grad.assign(d_->value.size(), 0.0);
  return d_->grad;
}

void Tensor::zero_grad() { d_->grad.assign(d_->value.size(), 0.0); }

Tensor Tensor::clone() const {
  auto d = std::make_shared<TensorData>(*d_);
  return Tensor(std::move(d));
}

bool Tensor::all_finite() const {
  return std::all_of(d_->value.begin(), d_->value.end(), [](double v) { return std::isfinite(v); });
}

// ---------------------------------------------------------------- Tape

void Tape::record(const char* op, std::vector<Tensor> inputs, Tensor output, BackwardFn fn) {
  if (consumed_) throw ContractError("tape: recording onto a consumed tape");
  entries_.push_back(Entry{op, std::move(inputs), std::move(output), std::move(fn)});
}

void Tape::backward(const Tensor& scalar_output) {
  if (consumed_) throw ContractError("backward: tape already consumed");
  if (!scalar_output.defined() || scalar_output.size() != 1) {
    throw ContractError("backward: output must be a scalar, got " +
                        (scalar_output.defined() ? shape_str(scalar_output.shape()) : "undefined"));
  }
  const auto on_tape = std::any_of(entries_.begin(), entries_.end(),
                                   [&](const Entry& e) { return e.output.same(scalar_output); });
  if (!on_tape) throw ContractError("backward: output was not produced on this tape");

  for (auto& e : entries_) {
    for (auto& in : e.inputs) {
      if (in.requires_grad()) in.zero_grad();
    }
    e.output.zero_grad();
  }
  scalar_output.data()->grad[0] = 1.0;
  for (auto it = entries_.rbegin(); it != entries_.rend(); ++it) it->fn();
  consumed_ = true;
}

std::string Tape::first_non_finite() const {
  for (std::size_t i = 0; i < entries_.size(); ++i) {
    for (const auto& in : entries_[i].inputs) {
      if (!in.all_finite()) {
        return std::string("input of op #") + std::to_string(i) + " (" + entries_[i].op + ", " +
               shape_str(in.shape()) + ")";
      }
    }
    if (!entries_[i].output.all_finite()) {
      return std::string("output of op #") + std::to_string(i) + " (" + entries_[i].op + ", " +
             shape_str(entries_[i].output.shape()) + ")";
    }
  }
  return {};
}

TapeScope::TapeScope(Tape& tape) : previous_(g_active_tape) { g_active_tape = &tape; }
TapeScope::~TapeScope() { g_active_tape = previous_; }

Tape* active_tape() { return g_active_tape; }

Activation parse_activation(const std::string& name) {
  if (name == "identity" || name == "none") return Activation::kIdentity;
  if (name == "sigmoid") return Activation::kSigmoid;
  if (name == "relu") return Activation::kRelu;
  if (name == "tanh") return Activation::kTanh;
  if (name == "swish") return Activation::kSwish;
  throw ConfigError("unknown activation '" + name + "'");
}

const char* activation_name(Activation a) {
  switch (a) {
    case Activation::kIdentity: return "identity";
    case Activation::kSigmoid: return "sigmoid";
    case Activation::kRelu: return "relu";
    case Activation::kTanh: return "tanh";
    case Activation::kSwish: return "swish";
  }
  return "?";
}

// ---------------------------------------------------------------- ops

Tensor matmul(const Tensor& a, const Tensor& b) {
  check_defined(a, "matmul");
  check_defined(b, "matmul");
  if (a.cols() != b.rows()) {
    throw DimensionError("matmul: inner dimensions disagree " + shape_str(a.shape()) + " x " +
                         shape_str(b.shape()));
  }
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  Tensor out = Tensor::zeros(m, n);
  auto av = a.values();
  auto bv = b.values();
  auto ov = out.mutable_values();
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = av[i * k + p];
      for (std::size_t j = 0; j < n; ++j) ov[i * n + j] += aip * bv[p * n + j];
    }
  }
  if (needs_record({&a, &b})) {
    out.set_requires_grad(true);
    TensorData* ad = a.data();
    TensorData* bd = b.data();
    TensorData* od = out.data();
    g_active_tape->record("matmul", {a, b}, out, [ad, bd, od, m, k, n]() {
      const auto& g = od->grad;
      if (auto* ga = grad_of(ad)) {
        // dA = dC * B^T
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t p = 0; p < k; ++p) {
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) acc += g[i * n + j] * bd->value[p * n + j];
            (*ga)[i * k + p] += acc;
          }
        }
      }
      if (auto* gb = grad_of(bd)) {
        // dB = A^T * dC
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t p = 0; p < k; ++p) {
            const double aip = ad->value[i * k + p];
            for (std::size_t j = 0; j < n; ++j) (*gb)[p * n + j] += aip * g[i * n + j];
          }
        }
      }
    });
  }
  return out;
}

Tensor transpose(const Tensor& x) {
  check_defined(x, "transpose");
  const std::size_t r = x.rows(), c = x.cols();
  Tensor out = Tensor::zeros(c, r);
  auto ov = out.mutable_values();
  auto xv = x.values();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) ov[j * r + i] = xv[i * c + j];
  if (needs_record({&x})) {
    out.set_requires_grad(true);
    TensorData* xd = x.data();
    TensorData* od = out.data();
    g_active_tape->record("transpose", {x}, out, [xd, od, r, c]() {
      auto* gx = grad_of(xd);
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) (*gx)[i * c + j] += od->grad[j * r + i];
    });
  }
  return out;
}

namespace {

template <typename F, typename Da, typename Db>
Tensor binary_map(const Tensor& a, const Tensor& b, const char* op, F f, Da da, Db db) {
  check_same_shape(a, b, op);
  Tensor out = Tensor::zeros(a.rows(), a.cols());
  auto ov = out.mutable_values();
  auto av = a.values();
  auto bv = b.values();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = f(av[i], bv[i]);
  if (needs_record({&a, &b})) {
    out.set_requires_grad(true);
    TensorData* ad = a.data();
    TensorData* bd = b.data();
    TensorData* od = out.data();
    g_active_tape->record(op, {a, b}, out, [ad, bd, od, da, db]() {
      auto* ga = grad_of(ad);
      auto* gb = grad_of(bd);
      for (std::size_t i = 0; i < od->value.size(); ++i) {
        const double g = od->grad[i];
        if (ga) (*ga)[i] += g * da(ad->value[i], bd->value[i]);
        if (gb) (*gb)[i] += g * db(ad->value[i], bd->value[i]);
      }
    });
  }
  return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary_map(
      a, b, "add", [](double x, double y) { return x + y; }, [](double, double) { return 1.0; },
      [](double, double) { return 1.0; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary_map(
      a, b, "sub", [](double x, double y) { return x - y; }, [](double, double) { return 1.0; },
      [](double, double) { return -1.0; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary_map(
      a, b, "mul", [](double x, double y) { return x * y; }, [](double, double y) { return y; },
      [](double x, double) { return x; });
}

Tensor scale(const Tensor& x, double c) {
  return unary_map(
      x, "scale", [c](double v) { return c * v; }, [c](double, double) { return c; });
}

Tensor add_scalar(const Tensor& x, double c) {
  return unary_map(
      x, "add_scalar", [c](double v) { return v + c; }, [](double, double) { return 1.0; });
}

Tensor add_row(const Tensor& x, const Tensor& bias) {
  check_defined(x, "add_row");
  check_defined(bias, "add_row");
  if (bias.rows() != 1 || bias.cols() != x.cols()) {
    throw DimensionError("add_row: bias " + shape_str(bias.shape()) + " does not fit " +
                         shape_str(x.shape()));
  }
  const std::size_t r = x.rows(), c = x.cols();
  Tensor out = Tensor::zeros(r, c);
  auto ov = out.mutable_values();
  auto xv = x.values();
  auto bv = bias.values();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) ov[i * c + j] = xv[i * c + j] + bv[j];
  if (needs_record({&x, &bias})) {
    out.set_requires_grad(true);
    TensorData* xd = x.data();
    TensorData* bd = bias.data();
    TensorData* od = out.data();
    g_active_tape->record("add_row", {x, bias}, out, [xd, bd, od, r, c]() {
      if (auto* gx = grad_of(xd)) {
        for (std::size_t i = 0; i < r * c; ++i) (*gx)[i] += od->grad[i];
      }
      if (auto* gb = grad_of(bd)) {
        for (std::size_t i = 0; i < r; ++i)
          for (std::size_t j = 0; j < c; ++j) (*gb)[j] += od->grad[i * c + j];
      }
    });
  }
  return out;
}

Tensor scale_rows(const Tensor& x, const Tensor& w) {
  check_defined(x, "scale_rows");
  check_defined(w, "scale_rows");
  if (w.cols() != 1 || w.rows() != x.rows()) {
    throw DimensionError("scale_rows: weights " + shape_str(w.shape()) + " do not fit " +
                         shape_str(x.shape()));
  }
  const std::size_t r = x.rows(), c = x.cols();
  Tensor out = Tensor::zeros(r, c);
  auto ov = out.mutable_values();
  auto xv = x.values();
  auto wv = w.values();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) ov[i * c + j] = wv[i] * xv[i * c + j];
  if (needs_record({&x, &w})) {
    out.set_requires_grad(true);
    TensorData* xd = x.data();
    TensorData* wd = w.data();
    TensorData* od = out.data();
    g_active_tape->record("scale_rows", {x, w}, out, [xd, wd, od, r, c]() {
      auto* gx = grad_of(xd);
      auto* gw = grad_of(wd);
      for (std::size_t i = 0; i < r; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < c; ++j) {
          const double g = od->grad[i * c + j];
          if (gx) (*gx)[i * c + j] += g * wd->value[i];
          acc += g * xd->value[i * c + j];
        }
        if (gw) (*gw)[i] += acc;
      }
    });
  }
  return out;
}

Tensor sigmoid(const Tensor& x) {
  return unary_map(x, "sigmoid", sigmoid_scalar,
                   [](double, double y) { return y * (1.0 - y); });
}

Tensor relu(const Tensor& x) {
  return unary_map(
      x, "relu", [](double v) { return v > 0.0 ? v : 0.0; },
      [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor tanh(const Tensor& x) {
  return unary_map(
      x, "tanh", [](double v) { return std::tanh(v); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor swish(const Tensor& x) {
  return unary_map(
      x, "swish", [](double v) { return v * sigmoid_scalar(v); },
      [](double v, double) {
        const double s = sigmoid_scalar(v);
        return s + v * s * (1.0 - s);
      });
}

Tensor activate(const Tensor& x, Activation a) {
  switch (a) {
    case Activation::kIdentity: return x;
    case Activation::kSigmoid: return sigmoid(x);
    case Activation::kRelu: return relu(x);
    case Activation::kTanh: return tanh(x);
    case Activation::kSwish: return swish(x);
  }
  return x;
}

Tensor sum(const Tensor& x) {
  check_defined(x, "sum");
  std::vector<double> terms(x.values().begin(), x.values().end());
  Tensor out = Tensor::scalar(canonical_sum(terms));
  if (needs_record({&x})) {
    out.set_requires_grad(true);
    TensorData* xd = x.data();
    TensorData* od = out.data();
    g_active_tape->record("sum", {x}, out, [xd, od]() {
      auto* gx = grad_of(xd);
      for (double& g : *gx) g += od->grad[0];
    });
  }
  return out;
}

Tensor mean(const Tensor& x) {
  check_defined(x, "mean");
  if (x.size() == 0) throw ContractError("mean: empty reduction");
  return scale(sum(x), 1.0 / static_cast<double>(x.size()));
}

Tensor sum_rows(const Tensor& x) {
  check_defined(x, "sum_rows");
  const std::size_t r = x.rows(), c = x.cols();
  Tensor out = Tensor::zeros(1, c);
  auto ov = out.mutable_values();
  auto xv = x.values();
  std::vector<double> lane(r);
  for (std::size_t j = 0; j < c; ++j) {
    for (std::size_t i = 0; i < r; ++i) lane[i] = xv[i * c + j];
    ov[j] = canonical_sum(lane);
  }
  if (needs_record({&x})) {
    out.set_requires_grad(true);
    TensorData* xd = x.data();
    TensorData* od = out.data();
    g_active_tape->record("sum_rows", {x}, out, [xd, od, r, c]() {
      auto* gx = grad_of(xd);
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) (*gx)[i * c + j] += od->grad[j];
    });
  }
  return out;
}

Tensor mean_rows(const Tensor& x) {
  check_defined(x, "mean_rows");
  if (x.rows() == 0) throw ContractError("mean_rows: empty reduction");
  return scale(sum_rows(x), 1.0 / static_cast<double>(x.rows()));
}

MaxResult max_axis(const Tensor& x, int axis) {
  check_defined(x, "max_axis");
  if (axis != 0 && axis != 1) throw ContractError("max_axis: axis must be 0 or 1");
  const std::size_t r = x.rows(), c = x.cols();
  const std::size_t lanes = axis == 0 ? c : r;
  const std::size_t len = axis == 0 ? r : c;
  if (len == 0) throw ContractError("max_axis: empty reduction over axis " + std::to_string(axis));
  auto xv = x.values();
  auto flat = [&](std::size_t lane, std::size_t k) {
    return axis == 0 ? k * c + lane : lane * c + k;
  };
  MaxResult res;
  res.values = axis == 0 ? Tensor::zeros(1, c) : Tensor::zeros(r, 1);
  res.index.resize(lanes);
  auto ov = res.values.mutable_values();
  for (std::size_t lane = 0; lane < lanes; ++lane) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < len; ++k) {
      if (xv[flat(lane, k)] > xv[flat(lane, best)]) best = k;
    }
    res.index[lane] = best;
    ov[lane] = xv[flat(lane, best)];
  }
  if (needs_record({&x})) {
    res.values.set_requires_grad(true);
    TensorData* xd = x.data();
    TensorData* od = res.values.data();
    std::vector<std::size_t> src(lanes);
    for (std::size_t lane = 0; lane < lanes; ++lane) src[lane] = flat(lane, res.index[lane]);
    g_active_tape->record("max_axis", {x}, res.values, [xd, od, src]() {
      auto* gx = grad_of(xd);
      for (std::size_t lane = 0; lane < src.size(); ++lane) (*gx)[src[lane]] += od->grad[lane];
    });
  }
  return res;
}

Tensor concat_cols(std::span<const Tensor> parts) {
  if (parts.empty()) throw ContractError("concat_cols: no inputs");
  const std::size_t r = parts[0].rows();
  std::size_t total = 0;
  for (const auto& p : parts) {
    check_defined(p, "concat_cols");
    if (p.rows() != r) {
      throw DimensionError("concat_cols: row counts differ " + shape_str(parts[0].shape()) +
                           " vs " + shape_str(p.shape()));
    }
    total += p.cols();
  }
  Tensor out = Tensor::zeros(r, total);
  auto ov = out.mutable_values();
  std::size_t offset = 0;
  for (const auto& p : parts) {
    auto pv = p.values();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < p.cols(); ++j) ov[i * total + offset + j] = pv[i * p.cols() + j];
    offset += p.cols();
  }
  if (needs_record(parts)) {
    out.set_requires_grad(true);
    std::vector<Tensor> inputs(parts.begin(), parts.end());
    std::vector<TensorData*> pd;
    for (const auto& p : parts) pd.push_back(p.data());
    TensorData* od = out.data();
    g_active_tape->record("concat_cols", std::move(inputs), out, [pd, od, r, total]() {
      std::size_t off = 0;
      for (TensorData* p : pd) {
        if (auto* gp = grad_of(p)) {
          for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < p->cols; ++j) (*gp)[i * p->cols + j] += od->grad[i * total + off + j];
        }
        off += p->cols;
      }
    });
  }
  return out;
}

Tensor concat_rows(std::span<const Tensor> parts) {
  if (parts.empty()) throw ContractError("concat_rows: no inputs");
  const std::size_t c = parts[0].cols();
  std::size_t total = 0;
  for (const auto& p : parts) {
    check_defined(p, "concat_rows");
    if (p.cols() != c) {
      throw DimensionError("concat_rows: column counts differ " + shape_str(parts[0].shape()) +
                           " vs " + shape_str(p.shape()));
    }
    total += p.rows();
  }
  std::vector<double> values;
  values.reserve(total * c);
  for (const auto& p : parts) values.insert(values.end(), p.values().begin(), p.values().end());
  Tensor out = Tensor::zeros(total, c);
  std::copy(values.begin(), values.end(), out.mutable_values().begin());
  if (needs_record(parts)) {
    out.set_requires_grad(true);
    std::vector<Tensor> inputs(parts.begin(), parts.end());
    std::vector<TensorData*> pd;
    for (const auto& p : parts) pd.push_back(p.data());
    TensorData* od = out.data();
    g_active_tape->record("concat_rows", std::move(inputs), out, [pd, od]() {
      std::size_t off = 0;
      for (TensorData* p : pd) {
        if (auto* gp = grad_of(p)) {
          for (std::size_t i = 0; i < p->value.size(); ++i) (*gp)[i] += od->grad[off + i];
        }
        off += p->value.size();
      }
    });
  }
  return out;
}

Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t count) {
  check_defined(x, "slice_rows");
  if (begin + count > x.rows()) {
    throw DimensionError("slice_rows: rows [" + std::to_string(begin) + ", " +
                         std::to_string(begin + count) + ") out of " + shape_str(x.shape()));
  }
  const std::size_t c = x.cols();
  Tensor out = Tensor::zeros(count, c);
  auto xv = x.values();
  std::copy(xv.begin() + static_cast<std::ptrdiff_t>(begin * c),
            xv.begin() + static_cast<std::ptrdiff_t>((begin + count) * c), out.mutable_values().begin());
  if (needs_record({&x})) {
    out.set_requires_grad(true);
    TensorData* xd = x.data();
    TensorData* od = out.data();
    g_active_tape->record("slice_rows", {x}, out, [xd, od, begin, c]() {
      auto* gx = grad_of(xd);
      for (std::size_t i = 0; i < od->value.size(); ++i) (*gx)[begin * c + i] += od->grad[i];
    });
  }
  return out;
}

Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t count) {
  check_defined(x, "slice_cols");
  if (begin + count > x.cols()) {
    throw DimensionError("slice_cols: cols [" + std::to_string(begin) + ", " +
                         std::to_string(begin + count) + ") out of " + shape_str(x.shape()));
  }
  const std::size_t r = x.rows(), c = x.cols();
  Tensor out = Tensor::zeros(r, count);
  auto ov = out.mutable_values();
  auto xv = x.values();
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < count; ++j) ov[i * count + j] = xv[i * c + begin + j];
  if (needs_record({&x})) {
    out.set_requires_grad(true);
    TensorData* xd = x.data();
    TensorData* od = out.data();
    g_active_tape->record("slice_cols", {x}, out, [xd, od, begin, count, r, c]() {
      auto* gx = grad_of(xd);
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < count; ++j) (*gx)[i * c + begin + j] += od->grad[i * count + j];
    });
  }
  return out;
}

Tensor gather_rows(const Tensor& x, std::span<const std::size_t> index) {
  check_defined(x, "gather_rows");
  const std::size_t c = x.cols();
  for (std::size_t id : index) {
    if (id >= x.rows()) {
      throw DimensionError("gather_rows: index " + std::to_string(id) + " out of range for " +
                           shape_str(x.shape()));
    }
  }
  Tensor out = Tensor::zeros(index.size(), c);
  auto ov = out.mutable_values();
  auto xv = x.values();
  for (std::size_t i = 0; i < index.size(); ++i)
    for (std::size_t j = 0; j < c; ++j) ov[i * c + j] = xv[index[i] * c + j];
  if (needs_record({&x})) {
    out.set_requires_grad(true);
    TensorData* xd = x.data();
    TensorData* od = out.data();
    std::vector<std::size_t> idx(index.begin(), index.end());
    g_active_tape->record("gather_rows", {x}, out, [xd, od, idx, c]() {
      auto* gx = grad_of(xd);
      for (std::size_t i = 0; i < idx.size(); ++i)
        for (std::size_t j = 0; j < c; ++j) (*gx)[idx[i] * c + j] += od->grad[i * c + j];
    });
  }
  return out;
}

Tensor pick(const Tensor& x, std::size_t r, std::size_t c) {
  check_defined(x, "pick");
  if (r >= x.rows() || c >= x.cols()) {
    throw DimensionError("pick: (" + std::to_string(r) + ", " + std::to_string(c) +
                         ") out of " + shape_str(x.shape()));
  }
  const std::size_t flat = r * x.cols() + c;
  Tensor out = Tensor::scalar(x.values()[flat]);
  if (needs_record({&x})) {
    out.set_requires_grad(true);
    TensorData* xd = x.data();
    TensorData* od = out.data();
    g_active_tape->record("pick", {x}, out, [xd, od, flat]() { (*grad_of(xd))[flat] += od->grad[0]; });
  }
  return out;
}

Tensor cosine(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "cosine");
  auto av = a.values();
  auto bv = b.values();
  std::vector<double> aa(av.size()), bb(av.size()), ab(av.size());
  for (std::size_t i = 0; i < av.size(); ++i) {
    aa[i] = av[i] * av[i];
    bb[i] = bv[i] * bv[i];
    ab[i] = av[i] * bv[i];
  }
  const double sa = canonical_sum(aa), sb = canonical_sum(bb);
  if (sa == 0.0 || sb == 0.0) throw NumericError("cosine: zero-norm vector");
  const double na = std::sqrt(sa), nb = std::sqrt(sb);
  const double dot = canonical_sum(ab);
  // One square root over the product keeps cosine(a, a) exactly 1.
  const double cos = std::clamp(dot / std::sqrt(sa * sb), -1.0, 1.0);
  Tensor out = Tensor::scalar(cos);
  if (needs_record({&a, &b})) {
    out.set_requires_grad(true);
    TensorData* ad = a.data();
    TensorData* bd = b.data();
    TensorData* od = out.data();
    g_active_tape->record("cosine", {a, b}, out, [ad, bd, od, na, nb, cos]() {
      const double g = od->grad[0];
      auto* ga = grad_of(ad);
      auto* gb = grad_of(bd);
      for (std::size_t i = 0; i < ad->value.size(); ++i) {
        const double x = ad->value[i], y = bd->value[i];
        if (ga) (*ga)[i] += g * (y / (na * nb) - cos * x / (na * na));
        if (gb) (*gb)[i] += g * (x / (na * nb) - cos * y / (nb * nb));
      }
    });
  }
  return out;
}

Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, BatchNormState& state,
                  bool training) {
  check_defined(x, "batch_norm");
  const std::size_t n = x.rows(), c = x.cols();
  for (const Tensor* p : std::initializer_list<const Tensor*>{&gamma, &beta, &state.running_mean, &state.running_var}) {
    check_defined(*p, "batch_norm");
    if (p->rows() != 1 || p->cols() != c) {
      throw DimensionError("batch_norm: parameter " + shape_str(p->shape()) + " does not fit " +
                           shape_str(x.shape()));
    }
  }
  auto xv = x.values();
  std::vector<double> mu(c, 0.0), var(c, 0.0);
  if (training && n > 0) {
    for (std::size_t j = 0; j < c; ++j) {
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) s += xv[i * c + j];
      mu[j] = s / static_cast<double>(n);
      double v = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double d = xv[i * c + j] - mu[j];
        v += d * d;
      }
      var[j] = v / static_cast<double>(n);
    }
    auto rm = state.running_mean.mutable_values();
    auto rv = state.running_var.mutable_values();
    const double unbias = n > 1 ? static_cast<double>(n) / static_cast<double>(n - 1) : 1.0;
    for (std::size_t j = 0; j < c; ++j) {
      rm[j] = (1.0 - state.momentum) * rm[j] + state.momentum * mu[j];
      rv[j] = (1.0 - state.momentum) * rv[j] + state.momentum * var[j] * unbias;
    }
  } else if (!training) {
    auto rm = state.running_mean.values();
    auto rv = state.running_var.values();
    std::copy(rm.begin(), rm.end(), mu.begin());
    std::copy(rv.begin(), rv.end(), var.begin());
  }
  std::vector<double> inv_std(c);
  for (std::size_t j = 0; j < c; ++j) inv_std[j] = 1.0 / std::sqrt(var[j] + state.eps);

  Tensor out = Tensor::zeros(n, c);
  std::vector<double> xhat(n * c);
  auto ov = out.mutable_values();
  auto gv = gamma.values();
  auto bv = beta.values();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < c; ++j) {
      xhat[i * c + j] = (xv[i * c + j] - mu[j]) * inv_std[j];
      ov[i * c + j] = gv[j] * xhat[i * c + j] + bv[j];
    }
  }
  if (needs_record({&x, &gamma, &beta})) {
    out.set_requires_grad(true);
    TensorData* xd = x.data();
    TensorData* gd = gamma.data();
    TensorData* bd = beta.data();
    TensorData* od = out.data();
    g_active_tape->record(
        "batch_norm", {x, gamma, beta}, out,
        [xd, gd, bd, od, n, c, training, xhat = std::move(xhat), inv_std = std::move(inv_std)]() {
          const auto& g = od->grad;
          for (std::size_t j = 0; j < c; ++j) {
            double sum_dy = 0.0, sum_dy_xhat = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
              sum_dy += g[i * c + j];
              sum_dy_xhat += g[i * c + j] * xhat[i * c + j];
            }
            if (auto* gg = grad_of(gd)) (*gg)[j] += sum_dy_xhat;
            if (auto* gb = grad_of(bd)) (*gb)[j] += sum_dy;
            if (auto* gx = grad_of(xd)) {
              const double gam = gd->value[j];
              if (training) {
                const double nn = static_cast<double>(n);
                for (std::size_t i = 0; i < n; ++i) {
                  (*gx)[i * c + j] += gam * inv_std[j] / nn *
                                      (nn * g[i * c + j] - sum_dy - xhat[i * c + j] * sum_dy_xhat);
                }
              } else {
                for (std::size_t i = 0; i < n; ++i) (*gx)[i * c + j] += gam * inv_std[j] * g[i * c + j];
              }
            }
          }
        });
  }
  return out;
}

}  // namespace lgsgm::num
