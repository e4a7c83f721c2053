#include "nfer/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "nfer/householder.hpp"
#include "nfer/numerics.hpp"

namespace nfer::ad {

const Mat& Var::value() const { return tape->value(id); }
const Mat& Var::grad() const { return tape->grad(id); }

Var Tape::constant(Mat value) { return record(std::move(value), false, nullptr); }

Var Tape::leaf(Mat value) { return record(std::move(value), true, nullptr); }

Var Tape::record(Mat value, bool requires_grad, BackwardFn fn) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  n.backward = std::move(fn);
  nodes_.push_back(std::move(n));
  return Var{this, nodes_.size() - 1};
}

Mat& Tape::grad_buffer(std::size_t id) {
  Node& n = nodes_[id];
  if (!n.has_grad) {
    n.grad = Mat(n.value.rows(), n.value.cols());
    n.has_grad = true;
  }
  return n.grad;
}

const Mat& Tape::grad(std::size_t id) { return grad_buffer(id); }

void Tape::accumulate(std::size_t id, const Mat& g) {
  if (!nodes_[id].requires_grad) return;
  grad_buffer(id) += g;
}

void Tape::backward(Var root) {
  if (root.tape != this) throw std::invalid_argument("backward: variable belongs to another tape");
  if (value(root.id).rows() != 1 || value(root.id).cols() != 1) {
    throw std::invalid_argument("backward: root must be 1x1, got " + value(root.id).shape_str());
  }
  for (auto& n : nodes_) {
    n.has_grad = false;
    n.grad = Mat();
  }
  grad_buffer(root.id)(0, 0) = 1.0;
  for (std::size_t i = root.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.has_grad || !n.backward) continue;
    n.backward(*this, n.grad);
  }
}

namespace {

Tape& tape_of(Var a, Var b) {
  if (a.tape != b.tape || a.tape == nullptr) throw std::invalid_argument("autodiff: operands on different tapes");
  return *a.tape;
}

bool any_grad(Tape& t, std::initializer_list<Var> vs) {
  return std::any_of(vs.begin(), vs.end(), [&](Var v) { return t.requires_grad(v.id); });
}

Mat column_sums(const Mat& g) {
  Mat s(1, g.cols());
  for (std::size_t r = 0; r < g.rows(); ++r) kernels::axpy(s.data(), 1.0, g.row(r).data(), g.cols());
  return s;
}

}  // namespace

Var matmul(Var a, Var b) {
  Tape& t = tape_of(a, b);
  Mat out = nfer::matmul(a.value(), b.value());
  const std::size_t ia = a.id, ib = b.id;
  return t.record(std::move(out), any_grad(t, {a, b}), [ia, ib](Tape& tp, const Mat& g) {
    if (tp.requires_grad(ia)) tp.accumulate(ia, nfer::matmul_nt(g, tp.value(ib)));
    if (tp.requires_grad(ib)) tp.accumulate(ib, nfer::matmul_tn(tp.value(ia), g));
  });
}

Var matmul_nt(Var a, Var b) {
  Tape& t = tape_of(a, b);
  Mat out = nfer::matmul_nt(a.value(), b.value());
  const std::size_t ia = a.id, ib = b.id;
  return t.record(std::move(out), any_grad(t, {a, b}), [ia, ib](Tape& tp, const Mat& g) {
    if (tp.requires_grad(ia)) tp.accumulate(ia, nfer::matmul(g, tp.value(ib)));
    if (tp.requires_grad(ib)) tp.accumulate(ib, nfer::matmul_tn(g, tp.value(ia)));
  });
}

Var matmul_tn(Var a, Var b) {
  Tape& t = tape_of(a, b);
  Mat out = nfer::matmul_tn(a.value(), b.value());
  const std::size_t ia = a.id, ib = b.id;
  return t.record(std::move(out), any_grad(t, {a, b}), [ia, ib](Tape& tp, const Mat& g) {
    if (tp.requires_grad(ia)) tp.accumulate(ia, nfer::matmul_nt(tp.value(ib), g));
    if (tp.requires_grad(ib)) tp.accumulate(ib, nfer::matmul(tp.value(ia), g));
  });
}

Var add(Var a, Var b) {
  Tape& t = tape_of(a, b);
  Mat out = a.value() + b.value();
  const std::size_t ia = a.id, ib = b.id;
  return t.record(std::move(out), any_grad(t, {a, b}), [ia, ib](Tape& tp, const Mat& g) {
    tp.accumulate(ia, g);
    tp.accumulate(ib, g);
  });
}

Var add_row(Var a, Var bias) {
  Tape& t = tape_of(a, bias);
  Mat out = add_row_broadcast(a.value(), bias.value());
  const std::size_t ia = a.id, ib = bias.id;
  return t.record(std::move(out), any_grad(t, {a, bias}), [ia, ib](Tape& tp, const Mat& g) {
    tp.accumulate(ia, g);
    if (tp.requires_grad(ib)) tp.accumulate(ib, column_sums(g));
  });
}

Var scale(Var a, double s) {
  Tape& t = *a.tape;
  Mat out = a.value() * s;
  const std::size_t ia = a.id;
  return t.record(std::move(out), t.requires_grad(ia), [ia, s](Tape& tp, const Mat& g) { tp.accumulate(ia, g * s); });
}

Var layer_norm(Var x, Var gamma, Var beta, double eps) {
  Tape& t = tape_of(x, gamma);
  tape_of(x, beta);
  const Mat& xv = x.value();
  const std::size_t n = xv.rows(), d = xv.cols();
  if (gamma.value().rows() != 1 || gamma.value().cols() != d || !gamma.value().same_shape(beta.value())) {
    throw std::invalid_argument("layer_norm: gain/shift must be 1x" + std::to_string(d));
  }
  Mat xhat(n, d);
  std::vector<double> inv_std(n);
  for (std::size_t r = 0; r < n; ++r) {
    auto row = xv.row(r);
    double mean = 0;
    for (double v : row) mean += v;
    mean /= static_cast<double>(d);
    double var = 0;
    for (double v : row) var += (v - mean) * (v - mean);
    var /= static_cast<double>(d);
    inv_std[r] = 1.0 / std::sqrt(var + eps);
    for (std::size_t c = 0; c < d; ++c) xhat(r, c) = (row[c] - mean) * inv_std[r];
  }
  Mat out(n, d);
  const Mat& gv = gamma.value();
  const Mat& bv = beta.value();
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < d; ++c) out(r, c) = gv(0, c) * xhat(r, c) + bv(0, c);

  const std::size_t ix = x.id, ig = gamma.id, ib = beta.id;
  return t.record(std::move(out), any_grad(t, {x, gamma, beta}),
                  [ix, ig, ib, xhat = std::move(xhat), inv_std = std::move(inv_std)](Tape& tp, const Mat& g) {
                    const std::size_t n = g.rows(), d = g.cols();
                    if (tp.requires_grad(ig)) {
                      Mat dg(1, d);
                      for (std::size_t r = 0; r < n; ++r)
                        for (std::size_t c = 0; c < d; ++c) dg(0, c) += g(r, c) * xhat(r, c);
                      tp.accumulate(ig, dg);
                    }
                    if (tp.requires_grad(ib)) tp.accumulate(ib, column_sums(g));
                    if (!tp.requires_grad(ix)) return;
                    const Mat& gam = tp.value(ig);
                    Mat& dx = tp.grad_buffer(ix);
                    std::vector<double> dxhat(d);
                    for (std::size_t r = 0; r < n; ++r) {
                      double mean_dxhat = 0, mean_dxhat_xhat = 0;
                      for (std::size_t c = 0; c < d; ++c) {
                        dxhat[c] = g(r, c) * gam(0, c);
                        mean_dxhat += dxhat[c];
                        mean_dxhat_xhat += dxhat[c] * xhat(r, c);
                      }
                      mean_dxhat /= static_cast<double>(d);
                      mean_dxhat_xhat /= static_cast<double>(d);
                      for (std::size_t c = 0; c < d; ++c) {
                        dx(r, c) += inv_std[r] * (dxhat[c] - mean_dxhat - xhat(r, c) * mean_dxhat_xhat);
                      }
                    }
                  });
}

Var softmax_rows(Var a) {
  Tape& t = *a.tape;
  Mat out = nfer::softmax_rows(a.value());
  const std::size_t ia = a.id;
  const std::size_t self = t.size();
  return t.record(std::move(out), t.requires_grad(ia), [ia, self](Tape& tp, const Mat& g) {
    const Mat& y = tp.value(self);
    Mat& dx = tp.grad_buffer(ia);
    for (std::size_t r = 0; r < y.rows(); ++r) {
      const double s = kernels::dot(g.row(r).data(), y.row(r).data(), y.cols());
      for (std::size_t c = 0; c < y.cols(); ++c) dx(r, c) += y(r, c) * (g(r, c) - s);
    }
  });
}

Var gelu(Var a) {
  Tape& t = *a.tape;
  Mat out = a.value();
  for (double& v : out.flat()) v = 0.5 * v * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0));
  const std::size_t ia = a.id;
  return t.record(std::move(out), t.requires_grad(ia), [ia](Tape& tp, const Mat& g) {
    const Mat& x = tp.value(ia);
    Mat& dx = tp.grad_buffer(ia);
    constexpr double inv_sqrt_2pi = 0.3989422804014327;
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double v = x.flat()[i];
      const double cdf = 0.5 * (1.0 + std::erf(v * std::numbers::sqrt2 / 2.0));
      const double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
      dx.flat()[i] += g.flat()[i] * (cdf + v * pdf);
    }
  });
}

Var relu(Var a) {
  Tape& t = *a.tape;
  Mat out = a.value();
  for (double& v : out.flat()) v = v > 0 ? v : 0.0;
  const std::size_t ia = a.id;
  return t.record(std::move(out), t.requires_grad(ia), [ia](Tape& tp, const Mat& g) {
    const Mat& x = tp.value(ia);
    Mat& dx = tp.grad_buffer(ia);
    for (std::size_t i = 0; i < x.size(); ++i)
      if (x.flat()[i] > 0) dx.flat()[i] += g.flat()[i];
  });
}

Var sigmoid(Var a) {
  Tape& t = *a.tape;
  Mat out = a.value();
  for (double& v : out.flat()) v = nfer::sigmoid(v);
  const std::size_t ia = a.id;
  const std::size_t self = t.size();
  return t.record(std::move(out), t.requires_grad(ia), [ia, self](Tape& tp, const Mat& g) {
    const Mat& y = tp.value(self);
    Mat& dx = tp.grad_buffer(ia);
    for (std::size_t i = 0; i < y.size(); ++i) {
      const double s = y.flat()[i];
      dx.flat()[i] += g.flat()[i] * s * (1.0 - s);
    }
  });
}

Var mask_cols(Var a, std::size_t begin, std::size_t end) {
  Tape& t = *a.tape;
  if (begin > end || end > a.cols()) throw std::invalid_argument("mask_cols: column range out of bounds");
  Mat out = a.value();
  for (std::size_t r = 0; r < out.rows(); ++r)
    for (std::size_t c = 0; c < out.cols(); ++c)
      if (c < begin || c >= end) out(r, c) = 0.0;
  const std::size_t ia = a.id;
  return t.record(std::move(out), t.requires_grad(ia), [ia, begin, end](Tape& tp, const Mat& g) {
    Mat& dx = tp.grad_buffer(ia);
    for (std::size_t r = 0; r < g.rows(); ++r)
      for (std::size_t c = begin; c < end; ++c) dx(r, c) += g(r, c);
  });
}

Var householder_apply(Var x, Var vectors, double guard) {
  Tape& t = tape_of(x, vectors);
  const Mat& vs = vectors.value();
  if (vs.cols() != x.cols()) {
    throw std::invalid_argument("householder_apply: vectors are " + vs.shape_str() + ", input is " + x.value().shape_str());
  }
  const std::size_t m = vs.rows();
  std::vector<double> norm2(m);
  std::vector<bool> active(m);
  for (std::size_t i = 0; i < m; ++i) {
    norm2[i] = kernels::dot(vs.row(i).data(), vs.row(i).data(), vs.cols());
    active[i] = std::sqrt(norm2[i]) >= guard;
  }
  // inputs[i] is the matrix entering reflection i.
  std::vector<Mat> inputs;
  inputs.reserve(m);
  Mat cur = x.value();
  for (std::size_t i = 0; i < m; ++i) {
    inputs.push_back(cur);
    if (active[i]) reflect_rows(cur, vs.row(i), norm2[i]);
  }
  const std::size_t ix = x.id, iv = vectors.id;
  return t.record(std::move(cur), any_grad(t, {x, vectors}),
                  [ix, iv, norm2 = std::move(norm2), active = std::move(active), inputs = std::move(inputs)](Tape& tp, const Mat& g_out) {
                    const Mat& vs = tp.value(iv);
                    const std::size_t d = vs.cols();
                    const bool want_v = tp.requires_grad(iv);
                    Mat g = g_out;
                    Mat dv(vs.rows(), d);
                    for (std::size_t i = vs.rows(); i-- > 0;) {
                      if (!active[i]) continue;
                      const auto v = vs.row(i);
                      const double s = norm2[i];
                      if (want_v) {
                        const Mat& xin = inputs[i];
                        // a = X v, b = G v
                        std::vector<double> a(xin.rows()), b(g.rows());
                        double ab = 0;
                        for (std::size_t r = 0; r < xin.rows(); ++r) {
                          a[r] = kernels::dot(xin.row(r).data(), v.data(), d);
                          b[r] = kernels::dot(g.row(r).data(), v.data(), d);
                          ab += a[r] * b[r];
                        }
                        // dv = -(2/s)(X^T b + G^T a) + (4/s^2)(a.b) v
                        auto out = dv.row(i);
                        for (std::size_t r = 0; r < xin.rows(); ++r) {
                          kernels::axpy(out.data(), -2.0 / s * b[r], xin.row(r).data(), d);
                          kernels::axpy(out.data(), -2.0 / s * a[r], g.row(r).data(), d);
                        }
                        kernels::axpy(out.data(), 4.0 / (s * s) * ab, v.data(), d);
                      }
                      // Reflections are symmetric: dL/dX_in = G H_i.
                      reflect_rows(g, v, s);
                    }
                    tp.accumulate(ix, g);
                    if (want_v) tp.accumulate(iv, dv);
                  });
}

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_rows: no inputs");
  Tape& t = *parts.front().tape;
  const std::size_t cols = parts.front().cols();
  std::size_t rows = 0;
  bool rg = false;
  for (const Var& p : parts) {
    tape_of(parts.front(), p);
    if (p.cols() != cols) throw std::invalid_argument("concat_rows: column mismatch");
    rows += p.rows();
    rg = rg || t.requires_grad(p.id);
  }
  Mat out(rows, cols);
  std::vector<std::size_t> ids, offsets;
  std::size_t off = 0;
  for (const Var& p : parts) {
    std::copy(p.value().data(), p.value().data() + p.value().size(), out.data() + off * cols);
    ids.push_back(p.id);
    offsets.push_back(off);
    off += p.rows();
  }
  return t.record(std::move(out), rg, [ids, offsets](Tape& tp, const Mat& g) {
    for (std::size_t k = 0; k < ids.size(); ++k) {
      if (!tp.requires_grad(ids[k])) continue;
      const std::size_t r = tp.value(ids[k]).rows();
      tp.accumulate(ids[k], row_block(g, offsets[k], offsets[k] + r));
    }
  });
}

Var select_row(Var a, std::size_t row) {
  Tape& t = *a.tape;
  if (row >= a.rows()) throw std::invalid_argument("select_row: row out of range");
  Mat out = row_block(a.value(), row, row + 1);
  const std::size_t ia = a.id;
  return t.record(std::move(out), t.requires_grad(ia), [ia, row](Tape& tp, const Mat& g) {
    Mat& dx = tp.grad_buffer(ia);
    kernels::axpy(dx.row(row).data(), 1.0, g.data(), g.cols());
  });
}

Var reshape(Var a, std::size_t rows, std::size_t cols) {
  Tape& t = *a.tape;
  if (rows * cols != a.value().size()) throw std::invalid_argument("reshape: element count mismatch");
  std::vector<double> data(a.value().flat().begin(), a.value().flat().end());
  const std::size_t ia = a.id;
  return t.record(Mat(rows, cols, std::move(data)), t.requires_grad(ia), [ia](Tape& tp, const Mat& g) {
    Mat& dx = tp.grad_buffer(ia);
    kernels::axpy(dx.data(), 1.0, g.data(), g.size());
  });
}

Var cross_entropy(Var logits, std::size_t label) {
  Tape& t = *logits.tape;
  if (logits.rows() != 1) throw std::invalid_argument("cross_entropy: logits must be a row vector");
  const double loss = cross_entropy_loss(logits.value().row(0), label);
  const std::size_t il = logits.id;
  return t.record(Mat(1, 1, loss), t.requires_grad(il), [il, label](Tape& tp, const Mat& g) {
    Mat p = nfer::softmax_rows(tp.value(il));
    p(0, label) -= 1.0;
    tp.accumulate(il, p * g(0, 0));
  });
}

Var binary_cross_entropy(Var score, int label) {
  Tape& t = *score.tape;
  if (score.rows() != 1 || score.cols() != 1) throw std::invalid_argument("binary_cross_entropy: score must be 1x1");
  const double loss = nfer::binary_cross_entropy(score.value()(0, 0), label);
  const std::size_t is = score.id;
  return t.record(Mat(1, 1, loss), t.requires_grad(is), [is, label](Tape& tp, const Mat& g) {
    const double s = tp.value(is)(0, 0);
    if (s < kBceClamp || s > 1.0 - kBceClamp) return;  // clamped: flat
    const double d = label == 1 ? -1.0 / s : 1.0 / (1.0 - s);
    tp.accumulate(is, Mat(1, 1, g(0, 0) * d));
  });
}

}  // namespace nfer::ad
