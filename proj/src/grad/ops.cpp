#include "boed/grad/ops.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <string>

#include "boed/errors.hpp"

namespace boed::grad {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapC = Eigen::Map<const RowMat>;
using Map = Eigen::Map<RowMat>;

MapC as_mat(const Tensor& t) { return MapC(t.data(), t.rows(), t.cols()); }
Map as_mat(Tensor& t) { return Map(t.data(), t.rows(), t.cols()); }

[[noreturn]] void shape_error(const char* op, const Tensor& a, const Tensor& b) {
  throw ConfigError(std::string(op) + ": shape mismatch " + a.shape_string() + " vs " +
                    b.shape_string());
}

struct Broadcast {
  std::size_t rows, cols;
  std::size_t a_rs, a_cs, b_rs, b_cs;  // strides (0 when broadcast)
};

Broadcast broadcast_shapes(const char* op, const Tensor& a, const Tensor& b) {
  const std::size_t ar = a.rows(), ac = a.cols(), br = b.rows(), bc = b.cols();
  if ((ar != br && ar != 1 && br != 1) || (ac != bc && ac != 1 && bc != 1)) shape_error(op, a, b);
  Broadcast s{};
  s.rows = std::max(ar, br);
  s.cols = std::max(ac, bc);
  s.a_cs = ac == 1 ? 0 : 1;
  s.a_rs = ar == 1 ? 0 : ac;
  s.b_cs = bc == 1 ? 0 : 1;
  s.b_rs = br == 1 ? 0 : bc;
  return s;
}

// Sum `g` (out shape) down into `target` (operand shape), scaled elementwise by
// `weight(i, j)` evaluated on the output grid.
template <class W>
void accumulate_broadcast(Tensor& target, const Tensor& g, const Broadcast& s, bool is_a,
                          W weight) {
  const std::size_t rs = is_a ? s.a_rs : s.b_rs;
  const std::size_t cs = is_a ? s.a_cs : s.b_cs;
  double* t = target.data();
  const double* gd = g.data();
  for (std::size_t i = 0; i < s.rows; ++i) {
    for (std::size_t j = 0; j < s.cols; ++j) {
      t[i * rs + j * cs] += gd[i * s.cols + j] * weight(i, j);
    }
  }
}

template <class F>
Tensor broadcast_apply(const Tensor& a, const Tensor& b, const Broadcast& s, F f) {
  Tensor out(s.rows, s.cols);
  const double* ad = a.data();
  const double* bd = b.data();
  double* o = out.data();
  for (std::size_t i = 0; i < s.rows; ++i) {
    for (std::size_t j = 0; j < s.cols; ++j) {
      o[i * s.cols + j] = f(ad[i * s.a_rs + j * s.a_cs], bd[i * s.b_rs + j * s.b_cs]);
    }
  }
  return out;
}

template <class F, class D>
Var unary(const char* op, Var a, F f, D dfdx) {
  const Tensor& av = a.value();
  Tensor out(av.shape(), std::vector<double>(av.size()));
  for (std::size_t i = 0; i < av.size(); ++i) out[i] = f(av[i]);
  const std::size_t ai = a.id();
  return a.tape()->record(op, std::move(out), {a}, [ai, dfdx](Tape& tp, std::size_t self) {
    if (!tp.needs_grad(ai)) return;
    const Tensor& x = tp.value(ai);
    const Tensor& y = tp.value(self);
    const Tensor& g = tp.out_grad(self);
    Tensor& ga = tp.grad_ref(ai);
    for (std::size_t i = 0; i < x.size(); ++i) ga[i] += g[i] * dfdx(x[i], y[i]);
  });
}

void require_same_tape(Var a, Var b, const char* op) {
  if (!a.valid() || a.tape() != b.tape()) {
    throw ContractViolation(std::string(op) + ": operands on different tapes");
  }
}

}  // namespace

double logsumexp(std::span<const double> x) {
  if (x.empty()) return -std::numeric_limits<double>::infinity();
  const double m = *std::max_element(x.begin(), x.end());
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double v : x) s += std::exp(v - m);
  return m + std::log(s);
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double softplus(double x) {
  if (x > 0) return x + std::log1p(std::exp(-x));
  return std::log1p(std::exp(x));
}

double logit(double p) { return std::log(p) - std::log1p(-p); }

Var matmul(Var a, Var b) {
  require_same_tape(a, b, "matmul");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.cols() != bv.rows()) shape_error("matmul", av, bv);
  Tensor out(av.rows(), bv.cols());
  as_mat(out).noalias() = as_mat(av) * as_mat(bv);
  const std::size_t ai = a.id(), bi = b.id();
  return a.tape()->record("matmul", std::move(out), {a, b}, [ai, bi](Tape& tp, std::size_t self) {
    const Tensor& g = tp.out_grad(self);
    if (tp.needs_grad(ai)) as_mat(tp.grad_ref(ai)).noalias() += as_mat(g) * as_mat(tp.value(bi)).transpose();
    if (tp.needs_grad(bi)) as_mat(tp.grad_ref(bi)).noalias() += as_mat(tp.value(ai)).transpose() * as_mat(g);
  });
}

Var matmul_nt(Var a, Var b) {
  require_same_tape(a, b, "matmul_nt");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (av.cols() != bv.cols()) shape_error("matmul_nt", av, bv);
  Tensor out(av.rows(), bv.rows());
  as_mat(out).noalias() = as_mat(av) * as_mat(bv).transpose();
  const std::size_t ai = a.id(), bi = b.id();
  return a.tape()->record("matmul_nt", std::move(out), {a, b},
                          [ai, bi](Tape& tp, std::size_t self) {
                            const Tensor& g = tp.out_grad(self);
                            if (tp.needs_grad(ai)) as_mat(tp.grad_ref(ai)).noalias() += as_mat(g) * as_mat(tp.value(bi));
                            if (tp.needs_grad(bi)) as_mat(tp.grad_ref(bi)).noalias() += as_mat(g).transpose() * as_mat(tp.value(ai));
                          });
}

Var affine(Var x, Var w, Var b) {
  require_same_tape(x, w, "affine");
  require_same_tape(x, b, "affine");
  const Tensor& xv = x.value();
  const Tensor& wv = w.value();
  const Tensor& bv = b.value();
  if (xv.cols() != wv.rows()) shape_error("affine", xv, wv);
  if (bv.rows() != 1 || bv.cols() != wv.cols()) shape_error("affine(bias)", wv, bv);
  Tensor out(xv.rows(), wv.cols());
  auto o = as_mat(out);
  o.noalias() = as_mat(xv) * as_mat(wv);
  o.rowwise() += as_mat(bv).row(0);
  const std::size_t xi = x.id(), wi = w.id(), bi = b.id();
  return x.tape()->record("affine", std::move(out), {x, w, b},
                          [xi, wi, bi](Tape& tp, std::size_t self) {
                            const Tensor& g = tp.out_grad(self);
                            if (tp.needs_grad(xi)) as_mat(tp.grad_ref(xi)).noalias() += as_mat(g) * as_mat(tp.value(wi)).transpose();
                            if (tp.needs_grad(wi)) as_mat(tp.grad_ref(wi)).noalias() += as_mat(tp.value(xi)).transpose() * as_mat(g);
                            if (tp.needs_grad(bi)) as_mat(tp.grad_ref(bi)).row(0) += as_mat(g).colwise().sum();
                          });
}

Var add(Var a, Var b) {
  require_same_tape(a, b, "add");
  const Broadcast s = broadcast_shapes("add", a.value(), b.value());
  Tensor out = broadcast_apply(a.value(), b.value(), s, [](double x, double y) { return x + y; });
  const std::size_t ai = a.id(), bi = b.id();
  return a.tape()->record("add", std::move(out), {a, b}, [ai, bi, s](Tape& tp, std::size_t self) {
    const Tensor& g = tp.out_grad(self);
    auto one = [](std::size_t, std::size_t) { return 1.0; };
    if (tp.needs_grad(ai)) accumulate_broadcast(tp.grad_ref(ai), g, s, true, one);
    if (tp.needs_grad(bi)) accumulate_broadcast(tp.grad_ref(bi), g, s, false, one);
  });
}

Var sub(Var a, Var b) {
  require_same_tape(a, b, "sub");
  const Broadcast s = broadcast_shapes("sub", a.value(), b.value());
  Tensor out = broadcast_apply(a.value(), b.value(), s, [](double x, double y) { return x - y; });
  const std::size_t ai = a.id(), bi = b.id();
  return a.tape()->record("sub", std::move(out), {a, b}, [ai, bi, s](Tape& tp, std::size_t self) {
    const Tensor& g = tp.out_grad(self);
    if (tp.needs_grad(ai)) accumulate_broadcast(tp.grad_ref(ai), g, s, true, [](std::size_t, std::size_t) { return 1.0; });
    if (tp.needs_grad(bi)) accumulate_broadcast(tp.grad_ref(bi), g, s, false, [](std::size_t, std::size_t) { return -1.0; });
  });
}

Var mul(Var a, Var b) {
  require_same_tape(a, b, "mul");
  const Broadcast s = broadcast_shapes("mul", a.value(), b.value());
  Tensor out = broadcast_apply(a.value(), b.value(), s, [](double x, double y) { return x * y; });
  const std::size_t ai = a.id(), bi = b.id();
  return a.tape()->record("mul", std::move(out), {a, b}, [ai, bi, s](Tape& tp, std::size_t self) {
    const Tensor& g = tp.out_grad(self);
    const double* av = tp.value(ai).data();
    const double* bv = tp.value(bi).data();
    if (tp.needs_grad(ai)) {
      accumulate_broadcast(tp.grad_ref(ai), g, s, true,
                           [&](std::size_t i, std::size_t j) { return bv[i * s.b_rs + j * s.b_cs]; });
    }
    if (tp.needs_grad(bi)) {
      accumulate_broadcast(tp.grad_ref(bi), g, s, false,
                           [&](std::size_t i, std::size_t j) { return av[i * s.a_rs + j * s.a_cs]; });
    }
  });
}

Var div(Var a, Var b) {
  require_same_tape(a, b, "div");
  const Broadcast s = broadcast_shapes("div", a.value(), b.value());
  Tensor out = broadcast_apply(a.value(), b.value(), s, [](double x, double y) { return x / y; });
  const std::size_t ai = a.id(), bi = b.id();
  return a.tape()->record("div", std::move(out), {a, b}, [ai, bi, s](Tape& tp, std::size_t self) {
    const Tensor& g = tp.out_grad(self);
    const double* av = tp.value(ai).data();
    const double* bv = tp.value(bi).data();
    if (tp.needs_grad(ai)) {
      accumulate_broadcast(tp.grad_ref(ai), g, s, true,
                           [&](std::size_t i, std::size_t j) { return 1.0 / bv[i * s.b_rs + j * s.b_cs]; });
    }
    if (tp.needs_grad(bi)) {
      accumulate_broadcast(tp.grad_ref(bi), g, s, false, [&](std::size_t i, std::size_t j) {
        const double y = bv[i * s.b_rs + j * s.b_cs];
        return -av[i * s.a_rs + j * s.a_cs] / (y * y);
      });
    }
  });
}

Var minimum(Var a, Var b) {
  require_same_tape(a, b, "minimum");
  const Broadcast s = broadcast_shapes("minimum", a.value(), b.value());
  Tensor out = broadcast_apply(a.value(), b.value(), s, [](double x, double y) { return std::min(x, y); });
  const std::size_t ai = a.id(), bi = b.id();
  return a.tape()->record("minimum", std::move(out), {a, b}, [ai, bi, s](Tape& tp, std::size_t self) {
    const Tensor& g = tp.out_grad(self);
    const double* av = tp.value(ai).data();
    const double* bv = tp.value(bi).data();
    // Ties route the gradient to the first operand.
    auto a_wins = [&](std::size_t i, std::size_t j) {
      return av[i * s.a_rs + j * s.a_cs] <= bv[i * s.b_rs + j * s.b_cs];
    };
    if (tp.needs_grad(ai)) accumulate_broadcast(tp.grad_ref(ai), g, s, true, [&](std::size_t i, std::size_t j) { return a_wins(i, j) ? 1.0 : 0.0; });
    if (tp.needs_grad(bi)) accumulate_broadcast(tp.grad_ref(bi), g, s, false, [&](std::size_t i, std::size_t j) { return a_wins(i, j) ? 0.0 : 1.0; });
  });
}

Var neg(Var a) { return scale(a, -1.0); }

Var scale(Var a, double s) {
  return unary("scale", a, [s](double x) { return s * x; }, [s](double, double) { return s; });
}

Var add_scalar(Var a, double s) {
  return unary("add_scalar", a, [s](double x) { return x + s; }, [](double, double) { return 1.0; });
}

Var tanh(Var a) {
  return unary("tanh", a, [](double x) { return std::tanh(x); },
               [](double, double y) { return 1.0 - y * y; });
}

Var relu(Var a) {
  return unary("relu", a, [](double x) { return x > 0 ? x : 0.0; },
               [](double x, double) { return x > 0 ? 1.0 : 0.0; });
}

Var sigmoid(Var a) {
  return unary("sigmoid", a, [](double x) { return sigmoid(x); },
               [](double, double y) { return y * (1.0 - y); });
}

Var softplus(Var a) {
  return unary("softplus", a, [](double x) { return softplus(x); },
               [](double x, double) { return sigmoid(x); });
}

Var exp(Var a) {
  return unary("exp", a, [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(Var a) {
  return unary("log", a, [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var square(Var a) {
  return unary("square", a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var sum(Var a) {
  const Tensor& av = a.value();
  double s = 0.0;
  for (double v : av.span()) s += v;
  const std::size_t ai = a.id();
  return a.tape()->record("sum", Tensor::scalar(s), {a}, [ai](Tape& tp, std::size_t self) {
    if (!tp.needs_grad(ai)) return;
    const double g = tp.out_grad(self)[0];
    Tensor& ga = tp.grad_ref(ai);
    for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g;
  });
}

Var mean(Var a) {
  const double n = static_cast<double>(a.value().size());
  if (n == 0) throw ConfigError("mean of empty tensor");
  return scale(sum(a), 1.0 / n);
}

Var sum(Var a, int axis) {
  const Tensor& av = a.value();
  const std::size_t r = av.rows(), c = av.cols();
  if (axis != 0 && axis != 1) throw ConfigError("sum: axis must be 0 or 1");
  Tensor out = axis == 0 ? Tensor(1, c) : Tensor(r, 1);
  if (axis == 0) {
    as_mat(out) = as_mat(av).colwise().sum();
  } else {
    as_mat(out) = as_mat(av).rowwise().sum();
  }
  const std::size_t ai = a.id();
  return a.tape()->record("sum_axis", std::move(out), {a}, [ai, axis](Tape& tp, std::size_t self) {
    if (!tp.needs_grad(ai)) return;
    const Tensor& g = tp.out_grad(self);
    auto ga = as_mat(tp.grad_ref(ai));
    if (axis == 0) {
      ga.rowwise() += as_mat(g).row(0);
    } else {
      ga.colwise() += as_mat(g).col(0);
    }
  });
}

Var mean(Var a, int axis) {
  const double n = static_cast<double>(axis == 0 ? a.value().rows() : a.value().cols());
  return scale(sum(a, axis), 1.0 / n);
}

Var logsumexp(Var a, int axis) {
  const Tensor& av = a.value();
  if (axis != 0 && axis != 1) throw ConfigError("logsumexp: axis must be 0 or 1");
  const std::size_t r = av.rows(), c = av.cols();
  const std::size_t outer = axis == 1 ? r : c;
  const std::size_t inner = axis == 1 ? c : r;
  Tensor out = axis == 0 ? Tensor(1, c) : Tensor(r, 1);
  auto at = [&](std::size_t o, std::size_t i) { return axis == 1 ? av(o, i) : av(i, o); };
  for (std::size_t o = 0; o < outer; ++o) {
    double m = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < inner; ++i) m = std::max(m, at(o, i));
    double s = 0.0;
    if (std::isfinite(m)) {
      for (std::size_t i = 0; i < inner; ++i) s += std::exp(at(o, i) - m);
      out[o] = m + std::log(s);
    } else {
      out[o] = m;
    }
  }
  const std::size_t ai = a.id();
  return a.tape()->record("logsumexp", std::move(out), {a}, [ai, axis](Tape& tp, std::size_t self) {
    if (!tp.needs_grad(ai)) return;
    const Tensor& x = tp.value(ai);
    const Tensor& y = tp.value(self);
    const Tensor& g = tp.out_grad(self);
    Tensor& ga = tp.grad_ref(ai);
    for (std::size_t i = 0; i < x.rows(); ++i) {
      for (std::size_t j = 0; j < x.cols(); ++j) {
        const std::size_t o = axis == 1 ? i : j;
        ga(i, j) += g[o] * std::exp(x(i, j) - y[o]);
      }
    }
  });
}

Var log_softmax(Var a) { return sub(a, logsumexp(a, 1)); }

Var concat(const std::vector<Var>& parts, int axis) {
  if (parts.empty()) throw ConfigError("concat of zero tensors");
  if (axis != 0 && axis != 1) throw ConfigError("concat: axis must be 0 or 1");
  std::size_t rows = 0, cols = 0;
  for (const Var& p : parts) {
    require_same_tape(parts[0], p, "concat");
    const Tensor& v = p.value();
    if (axis == 1) {
      if (&p != &parts[0] && v.rows() != rows) shape_error("concat", parts[0].value(), v);
      rows = v.rows();
      cols += v.cols();
    } else {
      if (&p != &parts[0] && v.cols() != cols) shape_error("concat", parts[0].value(), v);
      cols = v.cols();
      rows += v.rows();
    }
  }
  Tensor out(rows, cols);
  std::vector<std::size_t> ids;
  std::vector<std::size_t> starts;
  std::size_t at = 0;
  for (const Var& p : parts) {
    const Tensor& v = p.value();
    if (axis == 1) {
      as_mat(out).block(0, at, rows, v.cols()) = as_mat(v);
      starts.push_back(at);
      at += v.cols();
    } else {
      as_mat(out).block(at, 0, v.rows(), cols) = as_mat(v);
      starts.push_back(at);
      at += v.rows();
    }
    ids.push_back(p.id());
  }
  Tape* tape = parts[0].tape();
  return tape->record("concat", std::move(out), parts,
                      [ids, starts, axis](Tape& tp, std::size_t self) {
                        const Tensor& g = tp.out_grad(self);
                        for (std::size_t k = 0; k < ids.size(); ++k) {
                          if (!tp.needs_grad(ids[k])) continue;
                          Tensor& gp = tp.grad_ref(ids[k]);
                          if (axis == 1) {
                            as_mat(gp) += as_mat(g).block(0, starts[k], gp.rows(), gp.cols());
                          } else {
                            as_mat(gp) += as_mat(g).block(starts[k], 0, gp.rows(), gp.cols());
                          }
                        }
                      });
}

Var slice(Var a, int axis, std::size_t begin, std::size_t end) {
  const Tensor& av = a.value();
  const std::size_t lim = axis == 1 ? av.cols() : av.rows();
  if ((axis != 0 && axis != 1) || begin > end || end > lim) {
    throw ConfigError("slice [" + std::to_string(begin) + "," + std::to_string(end) +
                      ") out of range for " + av.shape_string());
  }
  const std::size_t n = end - begin;
  Tensor out = axis == 1 ? Tensor(av.rows(), n) : Tensor(n, av.cols());
  if (axis == 1) {
    as_mat(out) = as_mat(av).block(0, begin, av.rows(), n);
  } else {
    as_mat(out) = as_mat(av).block(begin, 0, n, av.cols());
  }
  const std::size_t ai = a.id();
  return a.tape()->record("slice", std::move(out), {a}, [ai, axis, begin, n](Tape& tp, std::size_t self) {
    if (!tp.needs_grad(ai)) return;
    const Tensor& g = tp.out_grad(self);
    Tensor& ga = tp.grad_ref(ai);
    if (axis == 1) {
      as_mat(ga).block(0, begin, ga.rows(), n) += as_mat(g);
    } else {
      as_mat(ga).block(begin, 0, n, ga.cols()) += as_mat(g);
    }
  });
}

Var segment_sum(Var x, std::span<const std::size_t> offsets) {
  const Tensor& xv = x.value();
  if (offsets.empty() || offsets.front() != 0 || offsets.back() != xv.rows()) {
    throw ContractViolation("segment_sum: offsets do not cover the input rows");
  }
  const std::size_t nseg = offsets.size() - 1;
  const std::size_t d = xv.cols();
  Tensor out(nseg, d);
  for (std::size_t s = 0; s < nseg; ++s) {
    if (offsets[s + 1] < offsets[s]) throw ContractViolation("segment_sum: offsets not sorted");
    for (std::size_t r = offsets[s]; r < offsets[s + 1]; ++r) {
      for (std::size_t j = 0; j < d; ++j) out(s, j) += xv(r, j);
    }
  }
  std::vector<std::size_t> off(offsets.begin(), offsets.end());
  const std::size_t xi = x.id();
  return x.tape()->record("segment_sum", std::move(out), {x}, [xi, off](Tape& tp, std::size_t self) {
    if (!tp.needs_grad(xi)) return;
    const Tensor& g = tp.out_grad(self);
    Tensor& gx = tp.grad_ref(xi);
    for (std::size_t s = 0; s + 1 < off.size(); ++s) {
      for (std::size_t r = off[s]; r < off[s + 1]; ++r) {
        for (std::size_t j = 0; j < gx.cols(); ++j) gx(r, j) += g(s, j);
      }
    }
  });
}

Var segment_attention(Var q, Var k, Var v, std::span<const std::size_t> offsets,
                      std::size_t heads) {
  require_same_tape(q, k, "segment_attention");
  require_same_tape(q, v, "segment_attention");
  const Tensor& qv = q.value();
  const Tensor& kv = k.value();
  const Tensor& vv = v.value();
  if (!qv.same_shape(kv) || !qv.same_shape(vv)) shape_error("segment_attention", qv, kv);
  const std::size_t d = qv.cols();
  if (heads == 0 || d % heads != 0) throw ConfigError("segment_attention: width not divisible by heads");
  if (offsets.empty() || offsets.front() != 0 || offsets.back() != qv.rows()) {
    throw ContractViolation("segment_attention: offsets do not cover the input rows");
  }
  const std::size_t dh = d / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  Tensor out(qv.rows(), d);
  // Attention weights are kept for the backward pass, one block per (segment, head).
  auto weights = std::make_shared<std::vector<double>>();
  std::size_t total = 0;
  for (std::size_t s = 0; s + 1 < offsets.size(); ++s) {
    const std::size_t n = offsets[s + 1] - offsets[s];
    total += n * n * heads;
  }
  weights->resize(total);
  std::size_t w_at = 0;
  for (std::size_t s = 0; s + 1 < offsets.size(); ++s) {
    const std::size_t r0 = offsets[s];
    const std::size_t n = offsets[s + 1] - r0;
    if (n == 0) continue;
    for (std::size_t h = 0; h < heads; ++h) {
      const std::size_t c0 = h * dh;
      auto Q = as_mat(qv).block(r0, c0, n, dh);
      auto K = as_mat(kv).block(r0, c0, n, dh);
      auto V = as_mat(vv).block(r0, c0, n, dh);
      Map A(weights->data() + w_at, n, n);
      A.noalias() = (Q * K.transpose()) * inv_sqrt;
      for (std::size_t i = 0; i < n; ++i) {
        const double m = A.row(i).maxCoeff();
        A.row(i) = (A.row(i).array() - m).exp();
        A.row(i) /= A.row(i).sum();
      }
      as_mat(out).block(r0, c0, n, dh).noalias() = A * V;
      w_at += n * n;
    }
  }
  std::vector<std::size_t> off(offsets.begin(), offsets.end());
  const std::size_t qi = q.id(), ki = k.id(), vi = v.id();
  return q.tape()->record(
      "segment_attention", std::move(out), {q, k, v},
      [qi, ki, vi, off, heads, dh, inv_sqrt, weights](Tape& tp, std::size_t self) {
        const Tensor& g = tp.out_grad(self);
        const bool gq = tp.needs_grad(qi), gk = tp.needs_grad(ki), gv = tp.needs_grad(vi);
        std::size_t w_at = 0;
        RowMat dA, dS;
        for (std::size_t s = 0; s + 1 < off.size(); ++s) {
          const std::size_t r0 = off[s];
          const std::size_t n = off[s + 1] - r0;
          if (n == 0) continue;
          for (std::size_t h = 0; h < heads; ++h) {
            const std::size_t c0 = h * dh;
            MapC A(weights->data() + w_at, n, n);
            auto G = as_mat(g).block(r0, c0, n, dh);
            auto Q = as_mat(tp.value(qi)).block(r0, c0, n, dh);
            auto K = as_mat(tp.value(ki)).block(r0, c0, n, dh);
            auto V = as_mat(tp.value(vi)).block(r0, c0, n, dh);
            if (gv) as_mat(tp.grad_ref(vi)).block(r0, c0, n, dh).noalias() += A.transpose() * G;
            if (gq || gk) {
              dA.noalias() = G * V.transpose();
              dS = A.array() * (dA.array().colwise() - (dA.array() * A.array()).rowwise().sum());
              dS *= inv_sqrt;
              if (gq) as_mat(tp.grad_ref(qi)).block(r0, c0, n, dh).noalias() += dS * K;
              if (gk) as_mat(tp.grad_ref(ki)).block(r0, c0, n, dh).noalias() += dS.transpose() * Q;
            }
            w_at += n * n;
          }
        }
      });
}

Var gather_rows(Var table, std::span<const std::size_t> index) {
  const Tensor& tv = table.value();
  Tensor out(index.size(), tv.cols());
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= tv.rows()) throw ConfigError("gather_rows: index out of range");
    std::copy_n(tv.data() + index[i] * tv.cols(), tv.cols(), out.data() + i * tv.cols());
  }
  std::vector<std::size_t> idx(index.begin(), index.end());
  const std::size_t ti = table.id();
  return table.tape()->record("gather_rows", std::move(out), {table}, [ti, idx](Tape& tp, std::size_t self) {
    if (!tp.needs_grad(ti)) return;
    const Tensor& g = tp.out_grad(self);
    Tensor& gt = tp.grad_ref(ti);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      for (std::size_t j = 0; j < gt.cols(); ++j) gt(idx[i], j) += g(i, j);
    }
  });
}

Var pick(Var a, std::span<const std::size_t> index) {
  const Tensor& av = a.value();
  if (index.size() != av.rows()) throw ConfigError("pick: one index per row required");
  Tensor out(av.rows(), 1);
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= av.cols()) throw ConfigError("pick: index out of range");
    out[i] = av(i, index[i]);
  }
  std::vector<std::size_t> idx(index.begin(), index.end());
  const std::size_t ai = a.id();
  return a.tape()->record("pick", std::move(out), {a}, [ai, idx](Tape& tp, std::size_t self) {
    if (!tp.needs_grad(ai)) return;
    const Tensor& g = tp.out_grad(self);
    Tensor& ga = tp.grad_ref(ai);
    for (std::size_t i = 0; i < idx.size(); ++i) ga(i, idx[i]) += g[i];
  });
}

}  // namespace boed::grad
