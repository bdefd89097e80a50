#include "relcat/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace relcat::ag {

Parameter::Parameter(std::string n, Matrix v) : name(std::move(n)), value(std::move(v)) {}

void Parameter::zero_grad() {
  if (!grad.empty()) grad.fill(0.0);
}

const Matrix& Var::value() const { return tape_->value(id_); }

Var Tape::constant(Matrix value) {
  nodes_.push_back(Node{std::move(value), nullptr, {}, {}, false});
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

Var Tape::param(Parameter& p) {
  Node node;
  node.external = &p.value;
  node.needs_grad = recording_;
  nodes_.push_back(std::move(node));
  const int id = static_cast<int>(nodes_.size() - 1);
  if (recording_) {
    Parameter* target = &p;
    nodes_.back().backward = [this, id, target] {
      if (target->grad.empty()) target->grad = Matrix(target->value.rows(), target->value.cols());
      target->grad.add_inplace(grad(id));
    };
  }
  return Var(this, id);
}

const Matrix& Tape::value(int id) const {
  const Node& n = nodes_[static_cast<std::size_t>(id)];
  return n.external ? *n.external : n.value;
}

Matrix& Tape::grad(int id) {
  Node& n = nodes_[static_cast<std::size_t>(id)];
  if (n.grad.empty()) {
    const Matrix& v = n.external ? *n.external : n.value;
    n.grad = Matrix(v.rows(), v.cols());
  }
  return n.grad;
}

Var Tape::push(Matrix value, bool needs_grad, std::function<void()> backward) {
  Node node;
  node.value = std::move(value);
  node.needs_grad = recording_ && needs_grad;
  if (node.needs_grad) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<int>(nodes_.size() - 1));
}

void Tape::backward(Var loss) {
  if (loss.tape() != this) throw std::invalid_argument("backward: var from another tape");
  if (loss.rows() != 1 || loss.cols() != 1)
    throw std::invalid_argument("backward: loss must be 1 x 1");
  if (!recording_) throw std::logic_error("backward on a non-recording tape");
  grad(loss.id())(0, 0) = 1.0;
  for (int id = loss.id(); id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.backward && !n.grad.empty()) n.backward();
  }
}

namespace {

Tape& same_tape(Var a, Var b) {
  if (a.tape() == nullptr || a.tape() != b.tape())
    throw std::invalid_argument("operands belong to different tapes");
  return *a.tape();
}

bool needs(Var v) { return v.tape()->needs_grad(v.id()); }

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (!a.same_shape(b)) throw std::invalid_argument(std::string(op) + ": shape mismatch");
}

template <typename F>
Var unary(Var x, Matrix out, F grad_fn) {
  Tape& t = *x.tape();
  const int xi = x.id();
  Tape* tp = &t;
  const int oi = static_cast<int>(t.size());
  return t.push(std::move(out), needs(x), [tp, xi, oi, grad_fn] {
    const Matrix& g = tp->grad(oi);
    const Matrix& xv = tp->value(xi);
    const Matrix& ov = tp->value(oi);
    Matrix& gx = tp->grad(xi);
    for (std::size_t i = 0; i < g.size(); ++i)
      gx.data()[i] += g.data()[i] * grad_fn(xv.data()[i], ov.data()[i]);
  });
}

}  // namespace

Var matmul(Var a, Var b) {
  Tape& t = same_tape(a, b);
  Matrix out;
  relcat::matmul(a.value(), b.value(), out);
  const int ai = a.id(), bi = b.id(), oi = static_cast<int>(t.size());
  const bool na = needs(a), nb = needs(b);
  Tape* tp = &t;
  return t.push(std::move(out), na || nb, [tp, ai, bi, oi, na, nb] {
    const Matrix& g = tp->grad(oi);
    if (na) relcat::matmul_a_bt(g, tp->value(bi), tp->grad(ai), true);
    if (nb) relcat::matmul_at_b(tp->value(ai), g, tp->grad(bi), true);
  });
}

Var transpose(Var a) {
  Tape& t = *a.tape();
  const int ai = a.id(), oi = static_cast<int>(t.size());
  Tape* tp = &t;
  return t.push(relcat::transpose(a.value()), needs(a),
                [tp, ai, oi] { tp->grad(ai).add_inplace(relcat::transpose(tp->grad(oi))); });
}

Var add(Var a, Var b) {
  Tape& t = same_tape(a, b);
  require_same_shape(a.value(), b.value(), "add");
  Matrix out = a.value();
  out.add_inplace(b.value());
  const int ai = a.id(), bi = b.id(), oi = static_cast<int>(t.size());
  const bool na = needs(a), nb = needs(b);
  Tape* tp = &t;
  return t.push(std::move(out), na || nb, [tp, ai, bi, oi, na, nb] {
    const Matrix& g = tp->grad(oi);
    if (na) tp->grad(ai).add_inplace(g);
    if (nb) tp->grad(bi).add_inplace(g);
  });
}

Var sub(Var a, Var b) {
  Tape& t = same_tape(a, b);
  require_same_shape(a.value(), b.value(), "sub");
  Matrix out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] -= b.value().data()[i];
  const int ai = a.id(), bi = b.id(), oi = static_cast<int>(t.size());
  const bool na = needs(a), nb = needs(b);
  Tape* tp = &t;
  return t.push(std::move(out), na || nb, [tp, ai, bi, oi, na, nb] {
    const Matrix& g = tp->grad(oi);
    if (na) tp->grad(ai).add_inplace(g);
    if (nb) {
      Matrix& gb = tp->grad(bi);
      for (std::size_t i = 0; i < g.size(); ++i) gb.data()[i] -= g.data()[i];
    }
  });
}

Var mul(Var a, Var b) {
  Tape& t = same_tape(a, b);
  require_same_shape(a.value(), b.value(), "mul");
  Matrix out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] *= b.value().data()[i];
  const int ai = a.id(), bi = b.id(), oi = static_cast<int>(t.size());
  const bool na = needs(a), nb = needs(b);
  Tape* tp = &t;
  return t.push(std::move(out), na || nb, [tp, ai, bi, oi, na, nb] {
    const Matrix& g = tp->grad(oi);
    const Matrix& av = tp->value(ai);
    const Matrix& bv = tp->value(bi);
    if (na) {
      Matrix& ga = tp->grad(ai);
      for (std::size_t i = 0; i < g.size(); ++i) ga.data()[i] += g.data()[i] * bv.data()[i];
    }
    if (nb) {
      Matrix& gb = tp->grad(bi);
      for (std::size_t i = 0; i < g.size(); ++i) gb.data()[i] += g.data()[i] * av.data()[i];
    }
  });
}

Var add_bias(Var x, Var bias) {
  Tape& t = same_tape(x, bias);
  const Matrix& xv = x.value();
  const Matrix& bv = bias.value();
  if (bv.rows() != 1 || bv.cols() != xv.cols())
    throw std::invalid_argument("add_bias: bias must be 1 x cols");
  Matrix out = xv;
  for (std::size_t i = 0; i < out.rows(); ++i) {
    auto r = out.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) r[j] += bv(0, j);
  }
  const int xi = x.id(), bi = bias.id(), oi = static_cast<int>(t.size());
  const bool nx = needs(x), nb = needs(bias);
  Tape* tp = &t;
  return t.push(std::move(out), nx || nb, [tp, xi, bi, oi, nx, nb] {
    const Matrix& g = tp->grad(oi);
    if (nx) tp->grad(xi).add_inplace(g);
    if (nb) {
      Matrix& gb = tp->grad(bi);
      for (std::size_t i = 0; i < g.rows(); ++i) {
        auto r = g.row(i);
        for (std::size_t j = 0; j < r.size(); ++j) gb(0, j) += r[j];
      }
    }
  });
}

Var scale(Var x, double s) {
  Matrix out = x.value();
  for (double& v : out.values()) v *= s;
  return unary(x, std::move(out), [s](double, double) { return s; });
}

Var add_scalar(Var x, double s) {
  Matrix out = x.value();
  for (double& v : out.values()) v += s;
  return unary(x, std::move(out), [](double, double) { return 1.0; });
}

Var scale_by(Var x, Var s) {
  Tape& t = same_tape(x, s);
  if (s.rows() != 1 || s.cols() != 1) throw std::invalid_argument("scale_by: s must be 1 x 1");
  const double sv = s.value()(0, 0);
  Matrix out = x.value();
  for (double& v : out.values()) v *= sv;
  const int xi = x.id(), si = s.id(), oi = static_cast<int>(t.size());
  const bool nx = needs(x), ns = needs(s);
  Tape* tp = &t;
  return t.push(std::move(out), nx || ns, [tp, xi, si, oi, nx, ns] {
    const Matrix& g = tp->grad(oi);
    const Matrix& xv = tp->value(xi);
    const double sc = tp->value(si)(0, 0);
    if (nx) {
      Matrix& gx = tp->grad(xi);
      for (std::size_t i = 0; i < g.size(); ++i) gx.data()[i] += g.data()[i] * sc;
    }
    if (ns) {
      double acc = 0.0;
      for (std::size_t i = 0; i < g.size(); ++i) acc += g.data()[i] * xv.data()[i];
      tp->grad(si)(0, 0) += acc;
    }
  });
}

Var exp(Var x) {
  Matrix out = x.value();
  for (double& v : out.values()) v = std::exp(v);
  return unary(x, std::move(out), [](double, double y) { return y; });
}

Var square(Var x) {
  Matrix out = x.value();
  for (double& v : out.values()) v = v * v;
  return unary(x, std::move(out), [](double xv, double) { return 2.0 * xv; });
}

Var relu(Var x) {
  Matrix out = x.value();
  for (double& v : out.values()) v = v > 0.0 ? v : 0.0;
  return unary(x, std::move(out), [](double xv, double) { return xv > 0.0 ? 1.0 : 0.0; });
}

Var gelu(Var x) {
  constexpr double kInvSqrt2 = 0.70710678118654752440;
  constexpr double kInvSqrt2Pi = 0.39894228040143267794;
  Matrix out = x.value();
  for (double& v : out.values()) v = 0.5 * v * (1.0 + std::erf(v * kInvSqrt2));
  return unary(x, std::move(out), [](double xv, double) {
    return 0.5 * (1.0 + std::erf(xv * kInvSqrt2)) + xv * kInvSqrt2Pi * std::exp(-0.5 * xv * xv);
  });
}

Var leaky_relu(Var x, double slope) {
  Matrix out = x.value();
  for (double& v : out.values()) v = v > 0.0 ? v : slope * v;
  return unary(x, std::move(out), [slope](double xv, double) { return xv > 0.0 ? 1.0 : slope; });
}

Var sum_all(Var x) {
  Tape& t = *x.tape();
  double s = 0.0;
  for (double v : x.value().values()) s += v;
  const int xi = x.id(), oi = static_cast<int>(t.size());
  Tape* tp = &t;
  return t.push(Matrix(1, 1, s), needs(x), [tp, xi, oi] {
    const double g = tp->grad(oi)(0, 0);
    for (double& v : tp->grad(xi).values()) v += g;
  });
}

Var mean_all(Var x) {
  const double n = static_cast<double>(x.value().size());
  return scale(sum_all(x), n > 0 ? 1.0 / n : 0.0);
}

Var rowwise_dot(Var a, Var b) {
  Tape& t = same_tape(a, b);
  require_same_shape(a.value(), b.value(), "rowwise_dot");
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  Matrix out(av.rows(), 1);
  for (std::size_t i = 0; i < av.rows(); ++i) out(i, 0) = relcat::dot(av.row(i), bv.row(i));
  const int ai = a.id(), bi = b.id(), oi = static_cast<int>(t.size());
  const bool na = needs(a), nb = needs(b);
  Tape* tp = &t;
  return t.push(std::move(out), na || nb, [tp, ai, bi, oi, na, nb] {
    const Matrix& g = tp->grad(oi);
    const Matrix& av = tp->value(ai);
    const Matrix& bv = tp->value(bi);
    for (std::size_t i = 0; i < g.rows(); ++i) {
      const double gi = g(i, 0);
      if (na) {
        auto ga = tp->grad(ai).row(i);
        auto br = bv.row(i);
        for (std::size_t j = 0; j < ga.size(); ++j) ga[j] += gi * br[j];
      }
      if (nb) {
        auto gb = tp->grad(bi).row(i);
        auto ar = av.row(i);
        for (std::size_t j = 0; j < gb.size(); ++j) gb[j] += gi * ar[j];
      }
    }
  });
}

Var mul_col(Var x, Var w) {
  Tape& t = same_tape(x, w);
  const Matrix& xv = x.value();
  const Matrix& wv = w.value();
  if (wv.rows() != xv.rows() || wv.cols() != 1) throw std::invalid_argument("mul_col: w must be rows x 1");
  Matrix out = xv;
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (double& v : out.row(i)) v *= wv(i, 0);
  const int xi = x.id(), wi = w.id(), oi = static_cast<int>(t.size());
  const bool nx = needs(x), nw = needs(w);
  Tape* tp = &t;
  return t.push(std::move(out), nx || nw, [tp, xi, wi, oi, nx, nw] {
    const Matrix& g = tp->grad(oi);
    const Matrix& xv = tp->value(xi);
    const Matrix& wv = tp->value(wi);
    for (std::size_t i = 0; i < g.rows(); ++i) {
      auto gr = g.row(i);
      if (nx) {
        auto gx = tp->grad(xi).row(i);
        for (std::size_t j = 0; j < gr.size(); ++j) gx[j] += gr[j] * wv(i, 0);
      }
      if (nw) tp->grad(wi)(i, 0) += relcat::dot(gr, xv.row(i));
    }
  });
}

Var layer_norm(Var x, double eps) {
  Tape& t = *x.tape();
  const Matrix& xv = x.value();
  const std::size_t n = xv.rows(), d = xv.cols();
  Matrix out(n, d);
  std::vector<double> inv_std(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto r = xv.row(i);
    double mu = 0.0;
    for (double v : r) mu += v;
    mu /= static_cast<double>(d);
    double var = 0.0;
    for (double v : r) var += (v - mu) * (v - mu);
    var /= static_cast<double>(d);
    inv_std[i] = 1.0 / std::sqrt(var + eps);
    auto o = out.row(i);
    for (std::size_t j = 0; j < d; ++j) o[j] = (r[j] - mu) * inv_std[i];
  }
  const int xi = x.id(), oi = static_cast<int>(t.size());
  Tape* tp = &t;
  return t.push(std::move(out), needs(x), [tp, xi, oi, inv_std = std::move(inv_std)] {
    const Matrix& g = tp->grad(oi);
    const Matrix& y = tp->value(oi);
    Matrix& gx = tp->grad(xi);
    const std::size_t d = g.cols();
    for (std::size_t i = 0; i < g.rows(); ++i) {
      auto gr = g.row(i);
      auto yr = y.row(i);
      double mg = 0.0, mgy = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        mg += gr[j];
        mgy += gr[j] * yr[j];
      }
      mg /= static_cast<double>(d);
      mgy /= static_cast<double>(d);
      auto gxr = gx.row(i);
      for (std::size_t j = 0; j < d; ++j) gxr[j] += inv_std[i] * (gr[j] - mg - yr[j] * mgy);
    }
  });
}

Var layer_norm(Var x, Var gamma, Var beta, double eps) {
  Var normalized = layer_norm(x, eps);
  Tape& t = *x.tape();
  const std::size_t d = x.cols();
  if (gamma.rows() != 1 || gamma.cols() != d || beta.rows() != 1 || beta.cols() != d)
    throw std::invalid_argument("layer_norm: gamma/beta must be 1 x cols");
  Matrix out = normalized.value();
  for (std::size_t i = 0; i < out.rows(); ++i) {
    auto r = out.row(i);
    for (std::size_t j = 0; j < d; ++j) r[j] = r[j] * gamma.value()(0, j) + beta.value()(0, j);
  }
  const int yi = normalized.id(), gi = gamma.id(), bi = beta.id(), oi = static_cast<int>(t.size());
  const bool ny = needs(normalized), ng = needs(gamma), nb = needs(beta);
  Tape* tp = &t;
  return t.push(std::move(out), ny || ng || nb, [tp, yi, gi, bi, oi, ny, ng, nb] {
    const Matrix& g = tp->grad(oi);
    const Matrix& y = tp->value(yi);
    const Matrix& gam = tp->value(gi);
    for (std::size_t i = 0; i < g.rows(); ++i) {
      auto gr = g.row(i);
      auto yr = y.row(i);
      if (ny) {
        auto gyr = tp->grad(yi).row(i);
        for (std::size_t j = 0; j < gr.size(); ++j) gyr[j] += gr[j] * gam(0, j);
      }
      if (ng) {
        Matrix& gg = tp->grad(gi);
        for (std::size_t j = 0; j < gr.size(); ++j) gg(0, j) += gr[j] * yr[j];
      }
      if (nb) {
        Matrix& gb = tp->grad(bi);
        for (std::size_t j = 0; j < gr.size(); ++j) gb(0, j) += gr[j];
      }
    }
  });
}

Var l2_normalize_rows(Var x, double min_norm) {
  Tape& t = *x.tape();
  const Matrix& xv = x.value();
  Matrix out = xv;
  std::vector<double> norms(xv.rows());
  std::vector<std::uint8_t> clamped(xv.rows(), 0);
  for (std::size_t i = 0; i < xv.rows(); ++i) {
    norms[i] = l2_norm(xv.row(i));
    if (norms[i] <= min_norm) {
      if (min_norm <= 0.0) throw std::domain_error("l2_normalize_rows: zero-norm row");
      norms[i] = min_norm;
      clamped[i] = 1;
    }
    for (double& v : out.row(i)) v /= norms[i];
  }
  const int xi = x.id(), oi = static_cast<int>(t.size());
  Tape* tp = &t;
  return t.push(std::move(out), needs(x),
                [tp, xi, oi, norms = std::move(norms), clamped = std::move(clamped)] {
                  const Matrix& g = tp->grad(oi);
                  const Matrix& y = tp->value(oi);
                  Matrix& gx = tp->grad(xi);
                  for (std::size_t i = 0; i < g.rows(); ++i) {
                    const double gy = clamped[i] ? 0.0 : dot(g.row(i), y.row(i));
                    auto gr = g.row(i);
                    auto yr = y.row(i);
                    auto gxr = gx.row(i);
                    for (std::size_t j = 0; j < gr.size(); ++j) gxr[j] += (gr[j] - yr[j] * gy) / norms[i];
                  }
                });
}

Var masked_softmax_rows(Var scores, std::span<const std::uint8_t> mask) {
  Tape& t = *scores.tape();
  const Matrix& s = scores.value();
  if (mask.size() != s.size()) throw std::invalid_argument("masked_softmax_rows: mask size");
  Matrix out(s.rows(), s.cols());
  for (std::size_t i = 0; i < s.rows(); ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < s.cols(); ++j)
      if (mask[i * s.cols() + j]) mx = std::max(mx, s(i, j));
    if (mx == -std::numeric_limits<double>::infinity()) continue;
    double denom = 0.0;
    for (std::size_t j = 0; j < s.cols(); ++j)
      if (mask[i * s.cols() + j]) {
        out(i, j) = std::exp(s(i, j) - mx);
        denom += out(i, j);
      }
    for (std::size_t j = 0; j < s.cols(); ++j) out(i, j) /= denom;
  }
  const int si = scores.id(), oi = static_cast<int>(t.size());
  Tape* tp = &t;
  return t.push(std::move(out), needs(scores), [tp, si, oi] {
    const Matrix& g = tp->grad(oi);
    const Matrix& y = tp->value(oi);
    Matrix& gs = tp->grad(si);
    for (std::size_t i = 0; i < g.rows(); ++i) {
      const double gy = dot(g.row(i), y.row(i));
      for (std::size_t j = 0; j < g.cols(); ++j) gs(i, j) += y(i, j) * (g(i, j) - gy);
    }
  });
}

Var concat_cols(std::span<const Var> parts) {
  if (parts.empty()) throw std::invalid_argument("concat_cols: no parts");
  Tape& t = *parts[0].tape();
  const std::size_t n = parts[0].rows();
  std::size_t total = 0;
  bool any = false;
  std::vector<int> ids;
  std::vector<std::size_t> offsets;
  for (const Var& p : parts) {
    if (p.tape() != &t || p.rows() != n) throw std::invalid_argument("concat_cols: mismatch");
    offsets.push_back(total);
    total += p.cols();
    ids.push_back(p.id());
    any = any || needs(p);
  }
  Matrix out(n, total);
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Matrix& pv = parts[k].value();
    for (std::size_t i = 0; i < n; ++i) {
      auto src = pv.row(i);
      std::copy(src.begin(), src.end(), out.row(i).begin() + static_cast<long>(offsets[k]));
    }
  }
  const int oi = static_cast<int>(t.size());
  Tape* tp = &t;
  return t.push(std::move(out), any, [tp, oi, ids = std::move(ids), offsets = std::move(offsets)] {
    const Matrix& g = tp->grad(oi);
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (!tp->needs_grad(ids[k])) continue;
      Matrix& gp = tp->grad(ids[k]);
      for (std::size_t i = 0; i < g.rows(); ++i) {
        auto dst = gp.row(i);
        auto src = g.row(i);
        for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[offsets[k] + j];
      }
    }
  });
}

Var concat_cols(Var a, Var b) {
  const Var parts[2] = {a, b};
  return concat_cols(std::span<const Var>(parts, 2));
}

Var slice_cols(Var x, std::size_t start, std::size_t count) {
  Tape& t = *x.tape();
  const Matrix& xv = x.value();
  if (start + count > xv.cols()) throw std::invalid_argument("slice_cols: out of range");
  Matrix out(xv.rows(), count);
  for (std::size_t i = 0; i < xv.rows(); ++i)
    for (std::size_t j = 0; j < count; ++j) out(i, j) = xv(i, start + j);
  const int xi = x.id(), oi = static_cast<int>(t.size());
  Tape* tp = &t;
  return t.push(std::move(out), needs(x), [tp, xi, oi, start, count] {
    const Matrix& g = tp->grad(oi);
    Matrix& gx = tp->grad(xi);
    for (std::size_t i = 0; i < g.rows(); ++i)
      for (std::size_t j = 0; j < count; ++j) gx(i, start + j) += g(i, j);
  });
}

Var gather_rows(Var x, std::span<const int> rows) {
  Tape& t = *x.tape();
  const Matrix& xv = x.value();
  for (int r : rows)
    if (r < 0 || static_cast<std::size_t>(r) >= xv.rows())
      throw std::out_of_range("gather_rows: index out of range");
  Matrix out = relcat::gather_rows(xv, rows);
  const int xi = x.id(), oi = static_cast<int>(t.size());
  Tape* tp = &t;
  return t.push(std::move(out), needs(x),
                [tp, xi, oi, idx = std::vector<int>(rows.begin(), rows.end())] {
                  const Matrix& g = tp->grad(oi);
                  Matrix& gx = tp->grad(xi);
                  for (std::size_t i = 0; i < idx.size(); ++i) {
                    auto dst = gx.row(static_cast<std::size_t>(idx[i]));
                    auto src = g.row(i);
                    for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
                  }
                });
}

Var edge_mean(Var x, std::span<const int> src, std::span<const int> dst, std::size_t num_dst) {
  Tape& t = *x.tape();
  const Matrix& xv = x.value();
  if (src.size() != dst.size()) throw std::invalid_argument("edge_mean: src/dst length");
  std::vector<double> count(num_dst, 0.0);
  Matrix out(num_dst, xv.cols());
  for (std::size_t e = 0; e < src.size(); ++e) {
    const auto s = static_cast<std::size_t>(src[e]);
    const auto d = static_cast<std::size_t>(dst[e]);
    if (s >= xv.rows() || d >= num_dst) throw std::out_of_range("edge_mean: edge endpoint");
    count[d] += 1.0;
    auto o = out.row(d);
    auto r = xv.row(s);
    for (std::size_t j = 0; j < o.size(); ++j) o[j] += r[j];
  }
  for (std::size_t d = 0; d < num_dst; ++d)
    if (count[d] > 0)
      for (double& v : out.row(d)) v /= count[d];
  const int xi = x.id(), oi = static_cast<int>(t.size());
  Tape* tp = &t;
  return t.push(std::move(out), needs(x),
                [tp, xi, oi, s = std::vector<int>(src.begin(), src.end()),
                 d = std::vector<int>(dst.begin(), dst.end()), count = std::move(count)] {
                  const Matrix& g = tp->grad(oi);
                  Matrix& gx = tp->grad(xi);
                  for (std::size_t e = 0; e < s.size(); ++e) {
                    const auto di = static_cast<std::size_t>(d[e]);
                    auto gr = g.row(di);
                    auto o = gx.row(static_cast<std::size_t>(s[e]));
                    for (std::size_t j = 0; j < o.size(); ++j) o[j] += gr[j] / count[di];
                  }
                });
}

Var edge_gatv2(Var src_proj, Var dst_proj, Var msg, Var att, std::span<const int> src,
               std::span<const int> dst, std::size_t num_dst, double slope,
               std::vector<double>* attention) {
  Tape& t = same_tape(src_proj, dst_proj);
  same_tape(src_proj, msg);
  same_tape(src_proj, att);
  const Matrix& sp = src_proj.value();
  const Matrix& dp = dst_proj.value();
  const Matrix& mv = msg.value();
  const Matrix& av = att.value();
  const std::size_t hd = sp.cols();
  if (dp.cols() != hd || av.rows() != hd || av.cols() != 1 || mv.rows() != sp.rows() ||
      dp.rows() != num_dst || src.size() != dst.size())
    throw std::invalid_argument("edge_gatv2: shape mismatch");
  const std::size_t ne = src.size();
  std::vector<double> score(ne);
  std::vector<double> z(hd);
  std::vector<double> dmax(num_dst, -std::numeric_limits<double>::infinity());
  for (std::size_t e = 0; e < ne; ++e) {
    auto s = sp.row(static_cast<std::size_t>(src[e]));
    auto d = dp.row(static_cast<std::size_t>(dst[e]));
    double acc = 0.0;
    for (std::size_t j = 0; j < hd; ++j) {
      const double zj = s[j] + d[j];
      acc += av(j, 0) * (zj > 0.0 ? zj : slope * zj);
    }
    score[e] = acc;
    auto di = static_cast<std::size_t>(dst[e]);
    dmax[di] = std::max(dmax[di], acc);
  }
  std::vector<double> denom(num_dst, 0.0);
  std::vector<double> alpha(ne);
  for (std::size_t e = 0; e < ne; ++e) {
    auto di = static_cast<std::size_t>(dst[e]);
    alpha[e] = std::exp(score[e] - dmax[di]);
    denom[di] += alpha[e];
  }
  Matrix out(num_dst, mv.cols());
  for (std::size_t e = 0; e < ne; ++e) {
    auto di = static_cast<std::size_t>(dst[e]);
    alpha[e] /= denom[di];
    auto o = out.row(di);
    auto m = mv.row(static_cast<std::size_t>(src[e]));
    for (std::size_t j = 0; j < o.size(); ++j) o[j] += alpha[e] * m[j];
  }
  if (attention) *attention = alpha;
  const int si = src_proj.id(), di_ = dst_proj.id(), mi = msg.id(), ai = att.id();
  const int oi = static_cast<int>(t.size());
  const bool any = needs(src_proj) || needs(dst_proj) || needs(msg) || needs(att);
  Tape* tp = &t;
  return t.push(
      std::move(out), any,
      [tp, si, di_, mi, ai, oi, slope, num_dst, alpha = std::move(alpha),
       s = std::vector<int>(src.begin(), src.end()), d = std::vector<int>(dst.begin(), dst.end())] {
        const Matrix& g = tp->grad(oi);
        const Matrix& spv = tp->value(si);
        const Matrix& dpv = tp->value(di_);
        const Matrix& mvv = tp->value(mi);
        const Matrix& avv = tp->value(ai);
        const std::size_t hd = spv.cols();
        const std::size_t ne = s.size();
        std::vector<double> galpha(ne);
        std::vector<double> weighted(num_dst, 0.0);
        for (std::size_t e = 0; e < ne; ++e) {
          auto dd = static_cast<std::size_t>(d[e]);
          galpha[e] = dot(g.row(dd), mvv.row(static_cast<std::size_t>(s[e])));
          weighted[dd] += alpha[e] * galpha[e];
        }
        if (tp->needs_grad(mi)) {
          Matrix& gm = tp->grad(mi);
          for (std::size_t e = 0; e < ne; ++e) {
            auto gr = g.row(static_cast<std::size_t>(d[e]));
            auto o = gm.row(static_cast<std::size_t>(s[e]));
            for (std::size_t j = 0; j < o.size(); ++j) o[j] += alpha[e] * gr[j];
          }
        }
        const bool ns = tp->needs_grad(si), nd = tp->needs_grad(di_), na = tp->needs_grad(ai);
        if (!(ns || nd || na)) return;
        for (std::size_t e = 0; e < ne; ++e) {
          auto dd = static_cast<std::size_t>(d[e]);
          auto ss = static_cast<std::size_t>(s[e]);
          const double gscore = alpha[e] * (galpha[e] - weighted[dd]);
          if (gscore == 0.0) continue;
          auto sr = spv.row(ss);
          auto dr = dpv.row(dd);
          for (std::size_t j = 0; j < hd; ++j) {
            const double zj = sr[j] + dr[j];
            if (na) tp->grad(ai)(j, 0) += gscore * (zj > 0.0 ? zj : slope * zj);
            const double gz = gscore * avv(j, 0) * (zj > 0.0 ? 1.0 : slope);
            if (ns) tp->grad(si)(ss, j) += gz;
            if (nd) tp->grad(di_)(dd, j) += gz;
          }
        }
      });
}

Var multi_head_attention(Var qkv, std::size_t batch, std::size_t seq_len, std::size_t heads,
                         std::span<const int> lengths) {
  Tape& t = *qkv.tape();
  const Matrix& x = qkv.value();
  if (x.rows() != batch * seq_len || x.cols() % 3 != 0 || lengths.size() != batch)
    throw std::invalid_argument("multi_head_attention: shape mismatch");
  const std::size_t hidden = x.cols() / 3;
  if (hidden % heads != 0) throw std::invalid_argument("multi_head_attention: heads");
  const std::size_t dh = hidden / heads;
  const double sc = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<double> probs(batch * heads * seq_len * seq_len, 0.0);
  Matrix out(batch * seq_len, hidden);
  for (std::size_t b = 0; b < batch; ++b) {
    const auto len = static_cast<std::size_t>(lengths[b]);
    if (len == 0 || len > seq_len) throw std::invalid_argument("multi_head_attention: length");
    for (std::size_t h = 0; h < heads; ++h) {
      const std::size_t qo = h * dh, ko = hidden + h * dh, vo = 2 * hidden + h * dh;
      for (std::size_t i = 0; i < seq_len; ++i) {
        const double* q = x.data() + (b * seq_len + i) * x.cols() + qo;
        double* p = probs.data() + ((b * heads + h) * seq_len + i) * seq_len;
        double mx = -std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < len; ++j) {
          const double* k = x.data() + (b * seq_len + j) * x.cols() + ko;
          double s = 0.0;
          for (std::size_t c = 0; c < dh; ++c) s += q[c] * k[c];
          p[j] = s * sc;
          mx = std::max(mx, p[j]);
        }
        double denom = 0.0;
        for (std::size_t j = 0; j < len; ++j) {
          p[j] = std::exp(p[j] - mx);
          denom += p[j];
        }
        double* o = out.data() + (b * seq_len + i) * hidden + h * dh;
        for (std::size_t j = 0; j < len; ++j) {
          p[j] /= denom;
          const double* v = x.data() + (b * seq_len + j) * x.cols() + vo;
          for (std::size_t c = 0; c < dh; ++c) o[c] += p[j] * v[c];
        }
      }
    }
  }
  const int xi = qkv.id(), oi = static_cast<int>(t.size());
  Tape* tp = &t;
  return t.push(
      std::move(out), needs(qkv),
      [tp, xi, oi, batch, seq_len, heads, hidden, dh, sc, probs = std::move(probs),
       lens = std::vector<int>(lengths.begin(), lengths.end())] {
        const Matrix& g = tp->grad(oi);
        const Matrix& x = tp->value(xi);
        Matrix& gx = tp->grad(xi);
        const std::size_t w = x.cols();
        std::vector<double> gp(seq_len);
        for (std::size_t b = 0; b < batch; ++b) {
          const auto len = static_cast<std::size_t>(lens[b]);
          for (std::size_t h = 0; h < heads; ++h) {
            const std::size_t qo = h * dh, ko = hidden + h * dh, vo = 2 * hidden + h * dh;
            for (std::size_t i = 0; i < seq_len; ++i) {
              const double* go = g.data() + (b * seq_len + i) * hidden + h * dh;
              const double* p = probs.data() + ((b * heads + h) * seq_len + i) * seq_len;
              double row_dot = 0.0;
              for (std::size_t j = 0; j < len; ++j) {
                const double* v = x.data() + (b * seq_len + j) * w + vo;
                double* gv = gx.data() + (b * seq_len + j) * w + vo;
                double acc = 0.0;
                for (std::size_t c = 0; c < dh; ++c) {
                  acc += go[c] * v[c];
                  gv[c] += p[j] * go[c];
                }
                gp[j] = acc;
                row_dot += p[j] * acc;
              }
              const double* q = x.data() + (b * seq_len + i) * w + qo;
              double* gq = gx.data() + (b * seq_len + i) * w + qo;
              for (std::size_t j = 0; j < len; ++j) {
                const double ds = p[j] * (gp[j] - row_dot) * sc;
                if (ds == 0.0) continue;
                const double* k = x.data() + (b * seq_len + j) * w + ko;
                double* gk = gx.data() + (b * seq_len + j) * w + ko;
                for (std::size_t c = 0; c < dh; ++c) {
                  gq[c] += ds * k[c];
                  gk[c] += ds * q[c];
                }
              }
            }
          }
        }
      });
}

Var masked_mean_pool(Var x, std::size_t batch, std::size_t seq_len, std::span<const int> lengths) {
  Tape& t = *x.tape();
  const Matrix& xv = x.value();
  if (xv.rows() != batch * seq_len || lengths.size() != batch)
    throw std::invalid_argument("masked_mean_pool: shape mismatch");
  Matrix out(batch, xv.cols());
  for (std::size_t b = 0; b < batch; ++b) {
    const auto len = static_cast<std::size_t>(lengths[b]);
    auto o = out.row(b);
    for (std::size_t i = 0; i < len; ++i) {
      auto r = xv.row(b * seq_len + i);
      for (std::size_t j = 0; j < o.size(); ++j) o[j] += r[j];
    }
    for (double& v : o) v /= static_cast<double>(len);
  }
  const int xi = x.id(), oi = static_cast<int>(t.size());
  Tape* tp = &t;
  return t.push(std::move(out), needs(x),
                [tp, xi, oi, seq_len, lens = std::vector<int>(lengths.begin(), lengths.end())] {
                  const Matrix& g = tp->grad(oi);
                  Matrix& gx = tp->grad(xi);
                  for (std::size_t b = 0; b < lens.size(); ++b) {
                    const auto len = static_cast<std::size_t>(lens[b]);
                    auto gr = g.row(b);
                    for (std::size_t i = 0; i < len; ++i) {
                      auto r = gx.row(b * seq_len + i);
                      for (std::size_t j = 0; j < r.size(); ++j)
                        r[j] += gr[j] / static_cast<double>(len);
                    }
                  }
                });
}

Var symmetric_diagonal_cross_entropy(Var sims) {
  Tape& t = *sims.tape();
  const Matrix& s = sims.value();
  const std::size_t n = s.rows();
  if (n == 0 || s.cols() != n) throw std::invalid_argument("cross entropy: need square matrix");
  Matrix prow(n, n), pcol(n, n);
  double loss = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) mx = std::max(mx, s(i, j));
    double denom = 0.0;
    for (std::size_t j = 0; j < n; ++j) denom += (prow(i, j) = std::exp(s(i, j) - mx));
    for (std::size_t j = 0; j < n; ++j) prow(i, j) /= denom;
    loss -= s(i, i) - mx - std::log(denom);
  }
  for (std::size_t j = 0; j < n; ++j) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n; ++i) mx = std::max(mx, s(i, j));
    double denom = 0.0;
    for (std::size_t i = 0; i < n; ++i) denom += (pcol(i, j) = std::exp(s(i, j) - mx));
    for (std::size_t i = 0; i < n; ++i) pcol(i, j) /= denom;
    loss -= s(j, j) - mx - std::log(denom);
  }
  loss /= static_cast<double>(n);
  const int si = sims.id(), oi = static_cast<int>(t.size());
  Tape* tp = &t;
  return t.push(Matrix(1, 1, loss), needs(sims),
                [tp, si, oi, n, prow = std::move(prow), pcol = std::move(pcol)] {
                  const double g = tp->grad(oi)(0, 0) / static_cast<double>(n);
                  Matrix& gs = tp->grad(si);
                  for (std::size_t i = 0; i < n; ++i)
                    for (std::size_t j = 0; j < n; ++j) {
                      const double delta = i == j ? 2.0 : 0.0;
                      gs(i, j) += g * (prow(i, j) + pcol(i, j) - delta);
                    }
                });
}

void round_to_float32(Matrix& m) {
  for (double& v : m.values()) v = static_cast<double>(static_cast<float>(v));
}

void Adam::step(std::span<Parameter* const> params, double learning_rate) {
  ++step_;
  const double bc1 = 1.0 - std::pow(options_.beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(options_.beta2, static_cast<double>(step_));
  for (Parameter* p : params) {
    if (p->grad.empty()) continue;
    if (p->adam_m.empty()) {
      p->adam_m = Matrix(p->value.rows(), p->value.cols());
      p->adam_v = Matrix(p->value.rows(), p->value.cols());
    }
    double* w = p->value.data();
    const double* g = p->grad.data();
    double* m = p->adam_m.data();
    double* v = p->adam_v.data();
    for (std::size_t i = 0; i < p->value.size(); ++i) {
      m[i] = options_.beta1 * m[i] + (1.0 - options_.beta1) * g[i];
      v[i] = options_.beta2 * v[i] + (1.0 - options_.beta2) * g[i] * g[i];
      const double update = (m[i] / bc1) / (std::sqrt(v[i] / bc2) + options_.eps);
      w[i] -= learning_rate * (update + options_.weight_decay * w[i]);
    }
    if (options_.round_to_float32) round_to_float32(p->value);
    p->zero_grad();
  }
}

}  // namespace relcat::ag
