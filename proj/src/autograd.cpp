#include "scp/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "scp/error.hpp"
#include "scp/kernels.hpp"

namespace scp::ag {

namespace {

void check_finite(const char* op, std::span<const double> xs, const char* what) {
  for (double x : xs) {
    if (!std::isfinite(x)) {
      throw NonFiniteError(std::string(op) + " produced a non-finite " + what);
    }
  }
}

void require_same_shape(const char* op, Var a, Var b) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + a.shape().str() + " vs " +
                         b.shape().str());
  }
}

Tape& tape_of(Var v) {
  if (v.tape == nullptr) throw ContractError("variable is not attached to a tape");
  return *v.tape;
}

// Accumulates into an input's gradient only when that input participates.
template <typename F>
void if_grad(Tape& t, Var v, F&& f) {
  if (t.requires_grad(v.id)) f(t.grad(v.id));
}

}  // namespace

// ---- Var / Tape -----------------------------------------------------------

const Tensor& Var::value() const { return tape->value(id); }
bool Var::requires_grad() const { return tape->requires_grad(id); }

double Var::item() const {
  const auto& v = value();
  if (v.size() != 1) throw ContractError("item() on non-scalar tensor " + v.shape().str());
  return v[0];
}

Var Tape::leaf(Tensor& t, bool requires_grad) {
  Node n;
  n.op = "leaf";
  n.value = &t;
  n.requires_grad = requires_grad;
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Tape::constant(Tensor t) {
  Node n;
  n.op = "constant";
  n.owned = std::make_unique<Tensor>(std::move(t));
  n.value = n.owned.get();
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Tape::input(Tensor t) {
  Node n;
  n.op = "input";
  n.owned = std::make_unique<Tensor>(std::move(t));
  n.value = n.owned.get();
  n.requires_grad = true;
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Tape::record(const char* op, Tensor value, std::vector<Var> inputs, BackwardFn backward) {
  check_finite(op, value.data(), "value");
  Node n;
  n.op = op;
  n.owned = std::make_unique<Tensor>(std::move(value));
  n.value = n.owned.get();
  for (const auto& in : inputs) {
    if (in.tape != this) throw ContractError(std::string(op) + ": input from another tape");
    n.requires_grad = n.requires_grad || nodes_[in.id].requires_grad;
  }
  if (n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

std::span<double> Tape::grad(std::uint32_t id) {
  auto& n = nodes_[id];
  n.reached = true;
  return n.value->grad();
}

void Tape::backward(Var loss) {
  if (loss.tape != this) throw ContractError("backward: loss recorded on another tape");
  if (loss.value().size() != 1) {
    throw ContractError("backward requires a scalar loss, got " + loss.shape().str());
  }
  if (!nodes_[loss.id].requires_grad) return;
  grad(loss.id)[0] += 1.0;
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    auto& n = nodes_[i];
    if (!n.reached || !n.backward) continue;
    std::span<const double> g = n.value->grad();
    check_finite(n.op, g, "gradient");
    n.backward(*this, *n.value, g);
  }
}

// ---- matrix ops -----------------------------------------------------------

Var matmul(Var a, Var b) {
  auto& t = tape_of(a);
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) {
    throw DimensionError("matmul: inner dimensions differ, " + a.shape().str() + " x " +
                         b.shape().str());
  }
  Tensor out(Shape{m, n});
  kernels::gemm_nn(m, n, k, a.value().data(), b.value().data(), out.data(), false);
  return t.record("matmul", std::move(out), {a, b},
                  [a, b, m, n, k](Tape& tp, const Tensor&, std::span<const double> g) {
                    if_grad(tp, a, [&](std::span<double> ga) {
                      kernels::gemm_nt(m, k, n, g, tp.value(b.id).data(), ga, true);
                    });
                    if_grad(tp, b, [&](std::span<double> gb) {
                      kernels::gemm_tn(k, n, m, tp.value(a.id).data(), g, gb, true);
                    });
                  });
}

Var add(Var a, Var b) {
  require_same_shape("add", a, b);
  Tensor out(a.shape());
  const auto &x = a.value(), &y = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + y[i];
  return tape_of(a).record("add", std::move(out), {a, b},
                           [a, b](Tape& tp, const Tensor&, std::span<const double> g) {
                             if_grad(tp, a, [&](std::span<double> ga) {
                               for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                             });
                             if_grad(tp, b, [&](std::span<double> gb) {
                               for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
                             });
                           });
}

Var sub(Var a, Var b) {
  require_same_shape("sub", a, b);
  Tensor out(a.shape());
  const auto &x = a.value(), &y = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] - y[i];
  return tape_of(a).record("sub", std::move(out), {a, b},
                           [a, b](Tape& tp, const Tensor&, std::span<const double> g) {
                             if_grad(tp, a, [&](std::span<double> ga) {
                               for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                             });
                             if_grad(tp, b, [&](std::span<double> gb) {
                               for (std::size_t i = 0; i < g.size(); ++i) gb[i] -= g[i];
                             });
                           });
}

Var mul(Var a, Var b) {
  require_same_shape("mul", a, b);
  Tensor out(a.shape());
  const auto &x = a.value(), &y = b.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * y[i];
  return tape_of(a).record("mul", std::move(out), {a, b},
                           [a, b](Tape& tp, const Tensor&, std::span<const double> g) {
                             const auto &x = tp.value(a.id), &y = tp.value(b.id);
                             if_grad(tp, a, [&](std::span<double> ga) {
                               for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * y[i];
                             });
                             if_grad(tp, b, [&](std::span<double> gb) {
                               for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * x[i];
                             });
                           });
}

Var scale(Var a, double s) {
  Tensor out(a.shape());
  const auto& x = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = s * x[i];
  return tape_of(a).record("scale", std::move(out), {a},
                           [a, s](Tape& tp, const Tensor&, std::span<const double> g) {
                             auto ga = tp.grad(a.id);
                             for (std::size_t i = 0; i < g.size(); ++i) ga[i] += s * g[i];
                           });
}

Var add_scalar(Var a, double s) {
  Tensor out(a.shape());
  const auto& x = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + s;
  return tape_of(a).record("add_scalar", std::move(out), {a},
                           [a](Tape& tp, const Tensor&, std::span<const double> g) {
                             auto ga = tp.grad(a.id);
                             for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
                           });
}

Var add_bias(Var x, Var bias) {
  const std::size_t m = x.rows(), n = x.cols();
  if (bias.value().size() != n) {
    throw DimensionError("add_bias: bias " + bias.shape().str() + " does not match " +
                         x.shape().str());
  }
  Tensor out(x.shape());
  const auto &xv = x.value(), &bv = bias.value();
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t c = 0; c < n; ++c) out[r * n + c] = xv[r * n + c] + bv[c];
  return tape_of(x).record("add_bias", std::move(out), {x, bias},
                           [x, bias, m, n](Tape& tp, const Tensor&, std::span<const double> g) {
                             if_grad(tp, x, [&](std::span<double> gx) {
                               for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
                             });
                             if_grad(tp, bias, [&](std::span<double> gb) {
                               for (std::size_t r = 0; r < m; ++r)
                                 for (std::size_t c = 0; c < n; ++c) gb[c] += g[r * n + c];
                             });
                           });
}

Var sigmoid(Var x) {
  Tensor out(x.shape());
  const auto& xv = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-xv[i]));
  return tape_of(x).record("sigmoid", std::move(out), {x},
                           [x](Tape& tp, const Tensor& y, std::span<const double> g) {
                             auto gx = tp.grad(x.id);
                             for (std::size_t i = 0; i < g.size(); ++i)
                               gx[i] += g[i] * y[i] * (1.0 - y[i]);
                           });
}

Var tanh(Var x) {
  Tensor out(x.shape());
  const auto& xv = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(xv[i]);
  return tape_of(x).record("tanh", std::move(out), {x},
                           [x](Tape& tp, const Tensor& y, std::span<const double> g) {
                             auto gx = tp.grad(x.id);
                             for (std::size_t i = 0; i < g.size(); ++i)
                               gx[i] += g[i] * (1.0 - y[i] * y[i]);
                           });
}

Var relu(Var x) {
  Tensor out(x.shape());
  const auto& xv = x.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = xv[i] > 0.0 ? xv[i] : 0.0;
  return tape_of(x).record("relu", std::move(out), {x},
                           [x](Tape& tp, const Tensor&, std::span<const double> g) {
                             const auto& xv = tp.value(x.id);
                             auto gx = tp.grad(x.id);
                             for (std::size_t i = 0; i < g.size(); ++i)
                               if (xv[i] > 0.0) gx[i] += g[i];
                           });
}

Var concat_cols(const std::vector<Var>& parts) {
  if (parts.empty()) throw ContractError("concat_cols: no inputs");
  const std::size_t m = parts[0].rows();
  std::vector<std::size_t> offsets;
  std::size_t n = 0;
  for (const auto& p : parts) {
    if (p.rows() != m) {
      throw DimensionError("concat_cols: row mismatch " + parts[0].shape().str() + " vs " +
                           p.shape().str());
    }
    offsets.push_back(n);
    n += p.cols();
  }
  Tensor out(Shape{m, n});
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const auto& v = parts[k].value();
    const std::size_t w = v.cols();
    for (std::size_t r = 0; r < m; ++r)
      std::copy_n(v.data().begin() + r * w, w, out.data().begin() + r * n + offsets[k]);
  }
  return tape_of(parts[0])
      .record("concat_cols", std::move(out), parts,
              [parts, offsets, m, n](Tape& tp, const Tensor&, std::span<const double> g) {
                for (std::size_t k = 0; k < parts.size(); ++k) {
                  if_grad(tp, parts[k], [&](std::span<double> gp) {
                    const std::size_t w = gp.size() / m;
                    for (std::size_t r = 0; r < m; ++r)
                      for (std::size_t c = 0; c < w; ++c) gp[r * w + c] += g[r * n + offsets[k] + c];
                  });
                }
              });
}

Var slice_cols(Var x, std::size_t start, std::size_t count) {
  const std::size_t m = x.rows(), n = x.cols();
  if (count == 0 || start + count > n) {
    throw DimensionError("slice_cols: columns [" + std::to_string(start) + ", " +
                         std::to_string(start + count) + ") out of range for " + x.shape().str());
  }
  Tensor out(Shape{m, count});
  const auto& v = x.value();
  for (std::size_t r = 0; r < m; ++r)
    std::copy_n(v.data().begin() + r * n + start, count, out.data().begin() + r * count);
  return tape_of(x).record(
      "slice_cols", std::move(out), {x},
      [x, start, count, m, n](Tape& tp, const Tensor&, std::span<const double> g) {
        auto gx = tp.grad(x.id);
        for (std::size_t r = 0; r < m; ++r)
          for (std::size_t c = 0; c < count; ++c) gx[r * n + start + c] += g[r * count + c];
      });
}

Var concat_rows(const std::vector<Var>& parts) {
  if (parts.empty()) throw ContractError("concat_rows: no inputs");
  const std::size_t n = parts[0].cols();
  std::size_t m = 0;
  for (const auto& p : parts) {
    if (p.cols() != n) {
      throw DimensionError("concat_rows: column mismatch " + parts[0].shape().str() + " vs " +
                           p.shape().str());
    }
    m += p.rows();
  }
  Tensor out(Shape{m, n});
  std::size_t off = 0;
  for (const auto& p : parts) {
    const auto& v = p.value();
    std::copy(v.data().begin(), v.data().end(), out.data().begin() + off);
    off += v.size();
  }
  return tape_of(parts[0])
      .record("concat_rows", std::move(out), parts,
              [parts](Tape& tp, const Tensor&, std::span<const double> g) {
                std::size_t off = 0;
                for (const auto& p : parts) {
                  const std::size_t len = p.value().size();
                  if_grad(tp, p, [&](std::span<double> gp) {
                    for (std::size_t i = 0; i < len; ++i) gp[i] += g[off + i];
                  });
                  off += len;
                }
              });
}

Var gather_rows(Var table, std::span<const std::size_t> ids) {
  const std::size_t v = table.rows(), e = table.cols();
  if (ids.empty()) throw ContractError("gather_rows: empty index list");
  Tensor out(Shape{ids.size(), e});
  const auto& tv = table.value();
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= v) {
      throw DimensionError("gather_rows: index " + std::to_string(ids[i]) + " out of range for " +
                           table.shape().str());
    }
    std::copy_n(tv.data().begin() + ids[i] * e, e, out.data().begin() + i * e);
  }
  std::vector<std::size_t> idx(ids.begin(), ids.end());
  return tape_of(table).record(
      "gather_rows", std::move(out), {table},
      [table, idx = std::move(idx), e](Tape& tp, const Tensor&, std::span<const double> g) {
        auto gt = tp.grad(table.id);
        for (std::size_t i = 0; i < idx.size(); ++i)
          for (std::size_t c = 0; c < e; ++c) gt[idx[i] * e + c] += g[i * e + c];
      });
}

Var reshape(Var x, Shape shape) {
  Tensor out = x.value();
  out.reshape(std::move(shape));
  return tape_of(x).record("reshape", std::move(out), {x},
                           [x](Tape& tp, const Tensor&, std::span<const double> g) {
                             auto gx = tp.grad(x.id);
                             for (std::size_t i = 0; i < g.size(); ++i) gx[i] += g[i];
                           });
}

Var sum(Var x) {
  double s = 0.0;
  for (double v : x.value().data()) s += v;
  return tape_of(x).record("sum", Tensor::scalar(s), {x},
                           [x](Tape& tp, const Tensor&, std::span<const double> g) {
                             auto gx = tp.grad(x.id);
                             for (auto& v : gx) v += g[0];
                           });
}

Var softmax_rows(Var x) {
  const std::size_t m = x.rows(), n = x.cols();
  Tensor out(x.shape());
  const auto& xv = x.value();
  for (std::size_t r = 0; r < m; ++r) {
    const double* in = xv.data().data() + r * n;
    double* o = out.data().data() + r * n;
    const double mx = *std::max_element(in, in + n);
    double z = 0.0;
    for (std::size_t c = 0; c < n; ++c) z += (o[c] = std::exp(in[c] - mx));
    for (std::size_t c = 0; c < n; ++c) o[c] /= z;
  }
  return tape_of(x).record("softmax", std::move(out), {x},
                           [x, m, n](Tape& tp, const Tensor& y, std::span<const double> g) {
                             auto gx = tp.grad(x.id);
                             for (std::size_t r = 0; r < m; ++r) {
                               double dot = 0.0;
                               for (std::size_t c = 0; c < n; ++c) dot += g[r * n + c] * y[r * n + c];
                               for (std::size_t c = 0; c < n; ++c)
                                 gx[r * n + c] += y[r * n + c] * (g[r * n + c] - dot);
                             }
                           });
}

Var log_softmax_rows(Var x) {
  const std::size_t m = x.rows(), n = x.cols();
  Tensor out(x.shape());
  const auto& xv = x.value();
  for (std::size_t r = 0; r < m; ++r) {
    const double* in = xv.data().data() + r * n;
    double* o = out.data().data() + r * n;
    const double mx = *std::max_element(in, in + n);
    double z = 0.0;
    for (std::size_t c = 0; c < n; ++c) z += std::exp(in[c] - mx);
    const double lse = mx + std::log(z);
    for (std::size_t c = 0; c < n; ++c) o[c] = in[c] - lse;
  }
  return tape_of(x).record("log_softmax", std::move(out), {x},
                           [x, m, n](Tape& tp, const Tensor& y, std::span<const double> g) {
                             auto gx = tp.grad(x.id);
                             for (std::size_t r = 0; r < m; ++r) {
                               double gs = 0.0;
                               for (std::size_t c = 0; c < n; ++c) gs += g[r * n + c];
                               for (std::size_t c = 0; c < n; ++c)
                                 gx[r * n + c] += g[r * n + c] - std::exp(y[r * n + c]) * gs;
                             }
                           });
}

Var cross_entropy_rows(Var logits, Var target, std::span<const double> weights) {
  require_same_shape("cross_entropy", logits, target);
  const std::size_t m = logits.rows(), n = logits.cols();
  if (weights.size() != m) {
    throw DimensionError("cross_entropy: " + std::to_string(weights.size()) + " weights for " +
                         std::to_string(m) + " rows");
  }
  static const double kLogFloor = std::log(1e-12);
  const auto &z = logits.value(), &t = target.value();
  std::vector<double> probs(m * n), logp(m * n);
  double loss = 0.0;
  for (std::size_t r = 0; r < m; ++r) {
    const double* zr = z.data().data() + r * n;
    const double mx = *std::max_element(zr, zr + n);
    double s = 0.0;
    for (std::size_t c = 0; c < n; ++c) s += std::exp(zr[c] - mx);
    const double lse = mx + std::log(s);
    for (std::size_t c = 0; c < n; ++c) {
      probs[r * n + c] = std::exp(zr[c] - lse);
      logp[r * n + c] = std::max(zr[c] - lse, kLogFloor);
    }
    if (weights[r] == 0.0) continue;
    double tsum = 0.0, row = 0.0;
    for (std::size_t c = 0; c < n; ++c) {
      const double tc = t[r * n + c];
      if (tc < -1e-12) throw ContractError("cross_entropy: negative target entry");
      tsum += tc;
      row -= tc * logp[r * n + c];
    }
    if (std::abs(tsum - 1.0) > 1e-6) {
      throw ContractError("cross_entropy: target row " + std::to_string(r) + " sums to " +
                          std::to_string(tsum) + ", not a distribution");
    }
    loss += weights[r] * row;
  }
  std::vector<double> w(weights.begin(), weights.end());
  return tape_of(logits).record(
      "cross_entropy", Tensor::scalar(loss), {logits, target},
      [logits, target, m, n, w = std::move(w), probs = std::move(probs),
       logp = std::move(logp)](Tape& tp, const Tensor&, std::span<const double> g) {
        const auto& t = tp.value(target.id);
        if_grad(tp, logits, [&](std::span<double> gz) {
          for (std::size_t r = 0; r < m; ++r) {
            if (w[r] == 0.0) continue;
            const double s = g[0] * w[r];
            double tmass = 0.0;
            for (std::size_t c = 0; c < n; ++c)
              if (logp[r * n + c] > kLogFloor) tmass += t[r * n + c];
            for (std::size_t c = 0; c < n; ++c) {
              const double unfloored = logp[r * n + c] > kLogFloor ? t[r * n + c] : 0.0;
              gz[r * n + c] += s * (probs[r * n + c] * tmass - unfloored);
            }
          }
        });
        if_grad(tp, target, [&](std::span<double> gt) {
          for (std::size_t r = 0; r < m; ++r) {
            if (w[r] == 0.0) continue;
            const double s = g[0] * w[r];
            for (std::size_t c = 0; c < n; ++c) gt[r * n + c] -= s * logp[r * n + c];
          }
        });
      });
}

Var cross_entropy(Var logits, std::span<const double> target) {
  auto& t = tape_of(logits);
  Var tv = t.constant(Tensor(logits.shape(), std::vector<double>(target.begin(), target.end())));
  const double one = 1.0;
  return cross_entropy_rows(logits, tv, std::span<const double>(&one, 1));
}

// ---- sequence-model ops ---------------------------------------------------

Var gru_gates(Var gx, Var gh, Var h) {
  const std::size_t b = h.rows(), hid = h.cols();
  if (gx.rows() != b || gh.rows() != b || gx.cols() != 3 * hid || gh.cols() != 3 * hid) {
    throw DimensionError("gru_gates: gx " + gx.shape().str() + ", gh " + gh.shape().str() +
                         ", h " + h.shape().str());
  }
  const auto &xv = gx.value(), &hv = gh.value(), &prev = h.value();
  auto saved = std::make_shared<std::vector<double>>(3 * b * hid);  // r, z, n
  Tensor out(h.shape());
  for (std::size_t i = 0; i < b; ++i) {
    const double* xr = xv.data().data() + i * 3 * hid;
    const double* hr = hv.data().data() + i * 3 * hid;
    double* sv = saved->data() + i * 3 * hid;
    for (std::size_t c = 0; c < hid; ++c) {
      const double r = 1.0 / (1.0 + std::exp(-(xr[c] + hr[c])));
      const double z = 1.0 / (1.0 + std::exp(-(xr[hid + c] + hr[hid + c])));
      const double n = std::tanh(xr[2 * hid + c] + r * hr[2 * hid + c]);
      sv[c] = r;
      sv[hid + c] = z;
      sv[2 * hid + c] = n;
      out[i * hid + c] = (1.0 - z) * n + z * prev[i * hid + c];
    }
  }
  return tape_of(h).record(
      "gru_gates", std::move(out), {gx, gh, h},
      [gx, gh, h, saved, b, hid](Tape& tp, const Tensor&, std::span<const double> g) {
        const auto &hv = tp.value(gh.id), &prev = tp.value(h.id);
        std::vector<double> dx(3 * b * hid), dh(3 * b * hid);
        for (std::size_t i = 0; i < b; ++i) {
          const double* sv = saved->data() + i * 3 * hid;
          for (std::size_t c = 0; c < hid; ++c) {
            const double r = sv[c], z = sv[hid + c], n = sv[2 * hid + c];
            const double go = g[i * hid + c];
            const double da_n = go * (1.0 - z) * (1.0 - n * n);
            const double da_z = go * (prev[i * hid + c] - n) * z * (1.0 - z);
            const double da_r = da_n * hv[i * 3 * hid + 2 * hid + c] * r * (1.0 - r);
            const std::size_t base = i * 3 * hid;
            dx[base + c] = da_r;
            dh[base + c] = da_r;
            dx[base + hid + c] = da_z;
            dh[base + hid + c] = da_z;
            dx[base + 2 * hid + c] = da_n;
            dh[base + 2 * hid + c] = da_n * r;
          }
        }
        if_grad(tp, gx, [&](std::span<double> gg) {
          for (std::size_t k = 0; k < dx.size(); ++k) gg[k] += dx[k];
        });
        if_grad(tp, gh, [&](std::span<double> gg) {
          for (std::size_t k = 0; k < dh.size(); ++k) gg[k] += dh[k];
        });
        if_grad(tp, h, [&](std::span<double> gg) {
          for (std::size_t k = 0; k < b * hid; ++k) gg[k] += g[k] * saved->data()[(k / hid) * 3 * hid + hid + k % hid];
        });
      });
}

Var blend_rows(Var fresh, Var held, std::span<const std::uint8_t> keep) {
  require_same_shape("blend_rows", fresh, held);
  const std::size_t m = fresh.rows(), n = fresh.cols();
  if (keep.size() != m) throw DimensionError("blend_rows: mask length does not match rows");
  Tensor out(fresh.shape());
  const auto &a = fresh.value(), &b = held.value();
  for (std::size_t r = 0; r < m; ++r) {
    const auto& src = keep[r] ? a : b;
    std::copy_n(src.data().begin() + r * n, n, out.data().begin() + r * n);
  }
  std::vector<std::uint8_t> k(keep.begin(), keep.end());
  return tape_of(fresh).record(
      "blend_rows", std::move(out), {fresh, held},
      [fresh, held, k = std::move(k), n](Tape& tp, const Tensor&, std::span<const double> g) {
        for (int side = 0; side < 2; ++side) {
          const Var v = side == 0 ? fresh : held;
          if_grad(tp, v, [&](std::span<double> gv) {
            for (std::size_t r = 0; r < k.size(); ++r) {
              if ((k[r] != 0) != (side == 0)) continue;
              for (std::size_t c = 0; c < n; ++c) gv[r * n + c] += g[r * n + c];
            }
          });
        }
      });
}

Var additive_scores(Var keys, Var query, Var w, std::size_t len) {
  const std::size_t b = query.rows(), a = query.cols();
  if (keys.cols() != a || keys.rows() != b * len || w.value().size() != a) {
    throw DimensionError("additive_scores: keys " + keys.shape().str() + ", query " +
                         query.shape().str() + ", w " + w.shape().str());
  }
  const auto &kv = keys.value(), &qv = query.value(), &wv = w.value();
  auto act = std::make_shared<std::vector<double>>(b * len * a);
  Tensor out(Shape{b, len});
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t j = 0; j < len; ++j) {
      const std::size_t row = i * len + j;
      double s = 0.0;
      for (std::size_t c = 0; c < a; ++c) {
        const double h = std::tanh(kv[row * a + c] + qv[i * a + c]);
        (*act)[row * a + c] = h;
        s += h * wv[c];
      }
      out[row] = s;
    }
  }
  return tape_of(keys).record(
      "additive_scores", std::move(out), {keys, query, w},
      [keys, query, w, act, b, len, a](Tape& tp, const Tensor&, std::span<const double> g) {
        const auto& wv = tp.value(w.id);
        std::vector<double> pre(b * len * a);
        for (std::size_t row = 0; row < b * len; ++row)
          for (std::size_t c = 0; c < a; ++c) {
            const double h = (*act)[row * a + c];
            pre[row * a + c] = g[row] * wv[c] * (1.0 - h * h);
          }
        if_grad(tp, keys, [&](std::span<double> gk) {
          for (std::size_t i = 0; i < pre.size(); ++i) gk[i] += pre[i];
        });
        if_grad(tp, query, [&](std::span<double> gq) {
          for (std::size_t i = 0; i < b; ++i)
            for (std::size_t j = 0; j < len; ++j)
              for (std::size_t c = 0; c < a; ++c) gq[i * a + c] += pre[(i * len + j) * a + c];
        });
        if_grad(tp, w, [&](std::span<double> gw) {
          for (std::size_t row = 0; row < b * len; ++row)
            for (std::size_t c = 0; c < a; ++c) gw[c] += g[row] * (*act)[row * a + c];
        });
      });
}

Var masked_softmax_rows(Var x, std::span<const std::uint8_t> mask) {
  const std::size_t m = x.rows(), n = x.cols();
  if (mask.size() != m * n) throw DimensionError("masked_softmax: mask size mismatch");
  Tensor out(x.shape());
  const auto& xv = x.value();
  for (std::size_t r = 0; r < m; ++r) {
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < n; ++c)
      if (mask[r * n + c]) mx = std::max(mx, xv[r * n + c]);
    if (!std::isfinite(mx)) {
      throw ContractError("masked_softmax: row " + std::to_string(r) + " is fully masked");
    }
    double z = 0.0;
    for (std::size_t c = 0; c < n; ++c)
      if (mask[r * n + c]) z += (out[r * n + c] = std::exp(xv[r * n + c] - mx));
    for (std::size_t c = 0; c < n; ++c) out[r * n + c] /= z;
  }
  return tape_of(x).record("masked_softmax", std::move(out), {x},
                           [x, m, n](Tape& tp, const Tensor& y, std::span<const double> g) {
                             auto gx = tp.grad(x.id);
                             for (std::size_t r = 0; r < m; ++r) {
                               double dot = 0.0;
                               for (std::size_t c = 0; c < n; ++c) dot += g[r * n + c] * y[r * n + c];
                               for (std::size_t c = 0; c < n; ++c)
                                 gx[r * n + c] += y[r * n + c] * (g[r * n + c] - dot);
                             }
                           });
}

Var attend(Var weights, Var states) {
  const std::size_t b = weights.rows(), len = weights.cols(), h = states.cols();
  if (states.rows() != b * len) {
    throw DimensionError("attend: weights " + weights.shape().str() + " vs states " +
                         states.shape().str());
  }
  Tensor out(Shape{b, h});
  const auto &wv = weights.value(), &sv = states.value();
  for (std::size_t i = 0; i < b; ++i)
    for (std::size_t j = 0; j < len; ++j) {
      const double a = wv[i * len + j];
      if (a == 0.0) continue;
      const double* srow = sv.data().data() + (i * len + j) * h;
      double* orow = out.data().data() + i * h;
      for (std::size_t c = 0; c < h; ++c) orow[c] += a * srow[c];
    }
  return tape_of(weights).record(
      "attend", std::move(out), {weights, states},
      [weights, states, b, len, h](Tape& tp, const Tensor&, std::span<const double> g) {
        const auto &wv = tp.value(weights.id), &sv = tp.value(states.id);
        if_grad(tp, weights, [&](std::span<double> gw) {
          for (std::size_t i = 0; i < b; ++i)
            for (std::size_t j = 0; j < len; ++j) {
              double s = 0.0;
              for (std::size_t c = 0; c < h; ++c) s += g[i * h + c] * sv[(i * len + j) * h + c];
              gw[i * len + j] += s;
            }
        });
        if_grad(tp, states, [&](std::span<double> gs) {
          for (std::size_t i = 0; i < b; ++i)
            for (std::size_t j = 0; j < len; ++j) {
              const double a = wv[i * len + j];
              for (std::size_t c = 0; c < h; ++c) gs[(i * len + j) * h + c] += a * g[i * h + c];
            }
        });
      });
}

Var stack_time(const std::vector<Var>& steps) {
  if (steps.empty()) throw ContractError("stack_time: no steps");
  const std::size_t b = steps[0].rows(), h = steps[0].cols(), len = steps.size();
  Tensor out(Shape{b * len, h});
  for (std::size_t t = 0; t < len; ++t) {
    if (steps[t].shape() != steps[0].shape()) {
      throw DimensionError("stack_time: step shapes differ " + steps[0].shape().str() + " vs " +
                           steps[t].shape().str());
    }
    const auto& v = steps[t].value();
    for (std::size_t i = 0; i < b; ++i)
      std::copy_n(v.data().begin() + i * h, h, out.data().begin() + (i * len + t) * h);
  }
  return tape_of(steps[0]).record(
      "stack_time", std::move(out), steps,
      [steps, b, h, len](Tape& tp, const Tensor&, std::span<const double> g) {
        for (std::size_t t = 0; t < len; ++t) {
          if_grad(tp, steps[t], [&](std::span<double> gs) {
            for (std::size_t i = 0; i < b; ++i)
              for (std::size_t c = 0; c < h; ++c) gs[i * h + c] += g[(i * len + t) * h + c];
          });
        }
      });
}

Var unfold_windows(Var x, std::size_t batch, std::size_t len, std::size_t width) {
  const std::size_t e = x.cols();
  if (x.rows() != batch * len || width == 0 || width > len) {
    throw DimensionError("unfold_windows: cannot take width " + std::to_string(width) +
                         " windows of " + x.shape().str() + " as " + std::to_string(batch) +
                         " sequences of length " + std::to_string(len));
  }
  const std::size_t nw = len - width + 1;
  Tensor out(Shape{batch * nw, width * e});
  const auto& xv = x.value();
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t p = 0; p < nw; ++p)
      std::copy_n(xv.data().begin() + (b * len + p) * e, width * e,
                  out.data().begin() + (b * nw + p) * width * e);
  return tape_of(x).record(
      "unfold_windows", std::move(out), {x},
      [x, batch, len, width, e, nw](Tape& tp, const Tensor&, std::span<const double> g) {
        auto gx = tp.grad(x.id);
        for (std::size_t b = 0; b < batch; ++b)
          for (std::size_t p = 0; p < nw; ++p)
            for (std::size_t i = 0; i < width * e; ++i)
              gx[(b * len + p) * e + i] += g[(b * nw + p) * width * e + i];
      });
}

Var masked_max_groups(Var x, std::span<const std::uint8_t> valid, std::size_t group) {
  const std::size_t rows = x.rows(), f = x.cols();
  if (group == 0 || rows % group != 0 || valid.size() != rows) {
    throw DimensionError("masked_max_groups: " + x.shape().str() + " with group " +
                         std::to_string(group));
  }
  const std::size_t b = rows / group;
  Tensor out(Shape{b, f});
  std::vector<std::size_t> arg(b * f);
  const auto& xv = x.value();
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t c = 0; c < f; ++c) {
      double best = -std::numeric_limits<double>::infinity();
      std::size_t best_row = rows;
      for (std::size_t j = 0; j < group; ++j) {
        const std::size_t row = i * group + j;
        if (!valid[row]) continue;
        if (xv[row * f + c] > best) {
          best = xv[row * f + c];
          best_row = row;
        }
      }
      if (best_row == rows) {
        throw ContractError("masked_max_groups: group " + std::to_string(i) + " has no valid row");
      }
      out[i * f + c] = best;
      arg[i * f + c] = best_row;
    }
  }
  return tape_of(x).record("masked_max", std::move(out), {x},
                           [x, arg = std::move(arg), f](Tape& tp, const Tensor&,
                                                        std::span<const double> g) {
                             auto gx = tp.grad(x.id);
                             for (std::size_t k = 0; k < arg.size(); ++k)
                               gx[arg[k] * f + k % f] += g[k];
                           });
}

Var cosine_distance_sum(Var emb, const std::vector<CosineTerm>& terms) {
  const std::size_t d = emb.cols();
  const auto& ev = emb.value();
  struct Saved {
    double dot, na, nb, cos;
  };
  std::vector<Saved> saved;
  saved.reserve(terms.size());
  double total = 0.0;
  for (const auto& t : terms) {
    if (t.row >= emb.rows() || t.target.size() != d) {
      throw DimensionError("cosine_distance_sum: term does not fit " + emb.shape().str());
    }
    double dot = 0.0, na = 0.0, nb = 0.0;
    for (std::size_t c = 0; c < d; ++c) {
      const double b = ev[t.row * d + c];
      dot += t.target[c] * b;
      na += t.target[c] * t.target[c];
      nb += b * b;
    }
    if (na == 0.0 || nb == 0.0) throw ContractError("cosine_distance_sum: zero vector");
    // sqrt(na * nb) keeps identical vectors at distance exactly 0.
    const double cos = dot / std::sqrt(na * nb);
    saved.push_back({dot, std::sqrt(na), std::sqrt(nb), cos});
    total += t.weight * (1.0 - cos);
  }
  return tape_of(emb).record(
      "cosine_distance", Tensor::scalar(total), {emb},
      [emb, terms, saved = std::move(saved), d](Tape& tp, const Tensor&,
                                                std::span<const double> g) {
        const auto& ev = tp.value(emb.id);
        auto ge = tp.grad(emb.id);
        for (std::size_t k = 0; k < terms.size(); ++k) {
          const auto& t = terms[k];
          const auto& s = saved[k];
          const double cos = s.cos;
          // d cos / d b = a / (|a||b|) - cos * b / |b|^2
          for (std::size_t c = 0; c < d; ++c) {
            const double b = ev[t.row * d + c];
            const double dcos = t.target[c] / (s.na * s.nb) - cos * b / (s.nb * s.nb);
            ge[t.row * d + c] -= g[0] * t.weight * dcos;
          }
        }
      });
}

}  // namespace scp::ag
