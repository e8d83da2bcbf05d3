#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "camue/numerics/matrix.hpp"

namespace camue {

using Rng = std::mt19937_64;

/// A named learnable matrix. The tape never mutates it; gradients live on the
/// tape and are fetched with Tape::grad_of.
struct Parameter {
  std::string name;
  DenseMatrix value;
};

/// Handle to a value recorded on a Tape.
struct Var {
  std::size_t id = std::numeric_limits<std::size_t>::max();
};

/// Reverse-mode tape for one forward/backward pass. Sparse operands passed to
/// spmm must outlive the tape.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var constant(DenseMatrix value) { return push(std::move(value), false, nullptr); }

  /// Leaf for a parameter. Repeated calls with the same parameter return the same Var.
  Var param(const Parameter& p) {
    if (auto it = param_ids_.find(&p); it != param_ids_.end()) return Var{it->second};
    Var v = push(p.value, true, &p);
    param_ids_.emplace(&p, v.id);
    return v;
  }

  const DenseMatrix& value(Var v) const { return nodes_.at(v.id).value; }
  bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }

  /// Gradient accumulated into v by the last backward(); zeros if none flowed.
  DenseMatrix grad(Var v) const {
    const Node& n = nodes_.at(v.id);
    if (n.grad.empty() && !n.value.empty()) return DenseMatrix(n.value.rows(), n.value.cols());
    return n.grad;
  }

  /// Gradient for a parameter; zeros of the parameter's shape if it never entered the tape.
  DenseMatrix grad_of(const Parameter& p) const {
    auto it = param_ids_.find(&p);
    if (it == param_ids_.end()) return DenseMatrix(p.value.rows(), p.value.cols());
    return grad(Var{it->second});
  }

  std::size_t num_ops() const noexcept { return ops_.size(); }

  /// Names of operations in the order the last backward() visited them.
  const std::vector<std::string>& backward_trace() const noexcept { return trace_; }

  // ---- operations -------------------------------------------------------

  Var matmul(Var a, Var b) {
    DenseMatrix out = camue::matmul(value(a), value(b));
    return record("matmul", std::move(out), {a, b}, [this, a, b](const DenseMatrix& g) {
      if (requires_grad(a)) axpy(grad_ref(a), matmul_nt(g, value(b)));
      if (requires_grad(b)) axpy(grad_ref(b), matmul_tn(value(a), g));
    });
  }

  /// a·b for a constant sparse a; gradient flows only into b.
  Var spmm(const SparseMatrix& a, Var b) {
    DenseMatrix out = camue::spmm(a, value(b));
    const SparseMatrix* ap = &a;
    return record("spmm", std::move(out), {b}, [this, ap, b](const DenseMatrix& g) {
      if (requires_grad(b)) axpy(grad_ref(b), spmm_tn(*ap, g));
    });
  }

  /// Σ_r s_r·A_r·x·W_r + x·W_self, with s the 1×R attention row. Computed as
  /// one stacked GEMM rather than R+1 small ones; the A_r must outlive the tape.
  Var relational_mix(std::span<const SparseMatrix> adj, Var attention, Var x, std::span<const Var> weights,
                     Var self_weight) {
    const std::size_t R = adj.size();
    const DenseMatrix& xv = value(x);
    const DenseMatrix& sv = value(attention);
    const DenseMatrix& wself = value(self_weight);
    const std::size_t n = xv.rows(), din = xv.cols(), dout = wself.cols();
    if (sv.rows() != 1 || sv.cols() != R || weights.size() != R) {
      throw ShapeError("relational_mix: " + std::to_string(R) + " relations, " + std::to_string(weights.size()) +
                       " weights, attention " + sv.shape_string());
    }
    if (wself.rows() != din) {
      throw ShapeError("relational_mix: self weight " + wself.shape_string() + " for input " + xv.shape_string());
    }
    for (std::size_t r = 0; r < R; ++r) {
      if (adj[r].rows() != n || adj[r].cols() != n) {
        throw ShapeError("relational_mix: relation " + std::to_string(r) + " is " + adj[r].shape_string() +
                         " for input " + xv.shape_string());
      }
      detail::require_same_shape(value(weights[r]), wself, "relational_mix");
    }
    std::vector<double> s(sv.data().begin(), sv.data().end());
    std::vector<Var> inputs{attention, x, self_weight};
    inputs.insert(inputs.end(), weights.begin(), weights.end());
    std::vector<Var> ws(weights.begin(), weights.end());
    const std::size_t width = (R + 1) * (din <= dout ? din : dout);

    // Scatter helpers between a stacked block layout and the per-relation weights.
    auto stacked_weights = [&, this](bool rows) {
      DenseMatrix out = rows ? DenseMatrix((R + 1) * din, dout) : DenseMatrix(din, (R + 1) * dout);
      for (std::size_t r = 0; r <= R; ++r) {
        const DenseMatrix& w = r < R ? value(ws[r]) : wself;
        const double f = r < R ? s[r] : 1.0;
        for (std::size_t i = 0; i < din; ++i)
          for (std::size_t j = 0; j < dout; ++j) (rows ? out(r * din + i, j) : out(i, r * dout + j)) = f * w(i, j);
      }
      return out;
    };
    auto gather_grads = [this, R, din, dout, s, ws, attention, self_weight](const DenseMatrix& blocks, bool rows) {
      for (std::size_t r = 0; r <= R; ++r) {
        const Var target = r < R ? ws[r] : self_weight;
        auto block = [&](std::size_t i, std::size_t j) { return rows ? blocks(r * din + i, j) : blocks(i, r * dout + j); };
        if (r < R && requires_grad(attention)) {
          const DenseMatrix& w = value(target);
          double dot = 0.0;
          for (std::size_t i = 0; i < din; ++i)
            for (std::size_t j = 0; j < dout; ++j) dot += w(i, j) * block(i, j);
          grad_ref(attention)(0, r) += dot;
        }
        if (requires_grad(target)) {
          DenseMatrix& g = grad_ref(target);
          const double f = r < R ? s[r] : 1.0;
          for (std::size_t i = 0; i < din; ++i)
            for (std::size_t j = 0; j < dout; ++j) g(i, j) += f * block(i, j);
        }
      }
    };

    if (din <= dout) {
      // Aggregate first: [A_1 x | … | A_R x | x] · [s_1 W_1; …; s_R W_R; W_self].
      auto cat = std::make_shared<DenseMatrix>(n, width);
      for (std::size_t r = 0; r < R; ++r)
        detail::spmm_accumulate(adj[r], xv.data().data(), din, cat->data().data() + r * din, width, din);
      for (std::size_t i = 0; i < n; ++i) std::copy_n(xv.row(i).data(), din, cat->row(i).data() + R * din);
      auto wstack = std::make_shared<DenseMatrix>(stacked_weights(true));
      DenseMatrix out = camue::matmul(*cat, *wstack);
      return record("relational_mix", std::move(out), inputs,
                    [this, adj, x, din, width, R, cat, wstack, gather_grads](const DenseMatrix& g) {
                      gather_grads(camue::matmul_tn(*cat, g), true);
                      if (!requires_grad(x)) return;
                      const DenseMatrix dcat = camue::matmul_nt(g, *wstack);
                      DenseMatrix& gx = grad_ref(x);
                      for (std::size_t i = 0; i < gx.rows(); ++i) {
                        const double* src = dcat.row(i).data() + R * din;
                        double* dst = gx.row(i).data();
                        for (std::size_t j = 0; j < din; ++j) dst[j] += src[j];
                      }
                      for (std::size_t r = 0; r < R; ++r)
                        detail::spmm_tn_accumulate(adj[r], dcat.data().data() + r * din, width, gx.data().data(), din,
                                                   din);
                    });
    }
    // Project first: m = x · [s_1 W_1 | … | s_R W_R | W_self]; out = Σ_r A_r m_r + m_self.
    auto wcat = std::make_shared<DenseMatrix>(stacked_weights(false));
    const DenseMatrix m = camue::matmul(xv, *wcat);
    DenseMatrix out(n, dout);
    for (std::size_t i = 0; i < n; ++i) std::copy_n(m.row(i).data() + R * dout, dout, out.row(i).data());
    for (std::size_t r = 0; r < R; ++r)
      detail::spmm_accumulate(adj[r], m.data().data() + r * dout, width, out.data().data(), dout, dout);
    return record("relational_mix", std::move(out), inputs,
                  [this, adj, x, dout, width, R, wcat, gather_grads](const DenseMatrix& g) {
                    DenseMatrix dm(g.rows(), width);
                    for (std::size_t r = 0; r < R; ++r)
                      detail::spmm_tn_accumulate(adj[r], g.data().data(), dout, dm.data().data() + r * dout, width,
                                                 dout);
                    for (std::size_t i = 0; i < g.rows(); ++i)
                      std::copy_n(g.row(i).data(), dout, dm.row(i).data() + R * dout);
                    gather_grads(camue::matmul_tn(value(x), dm), false);
                    if (requires_grad(x)) axpy(grad_ref(x), camue::matmul_nt(dm, *wcat));
                  });
  }

  Var add(Var a, Var b) {
    detail::require_same_shape(value(a), value(b), "add");
    DenseMatrix out = value(a);
    axpy(out, value(b));
    return record("add", std::move(out), {a, b}, [this, a, b](const DenseMatrix& g) {
      if (requires_grad(a)) axpy(grad_ref(a), g);
      if (requires_grad(b)) axpy(grad_ref(b), g);
    });
  }

  /// x + bias broadcast over rows; bias is 1×cols.
  Var add_bias(Var x, Var bias) {
    const DenseMatrix& xv = value(x);
    const DenseMatrix& bv = value(bias);
    if (bv.rows() != 1 || bv.cols() != xv.cols()) {
      throw ShapeError("add_bias: bias " + bv.shape_string() + " does not fit " + xv.shape_string());
    }
    DenseMatrix out = xv;
    for (std::size_t i = 0; i < out.rows(); ++i) {
      auto row = out.row(i);
      for (std::size_t j = 0; j < row.size(); ++j) row[j] += bv(0, j);
    }
    return record("add_bias", std::move(out), {x, bias}, [this, x, bias](const DenseMatrix& g) {
      if (requires_grad(x)) axpy(grad_ref(x), g);
      if (requires_grad(bias)) {
        DenseMatrix& gb = grad_ref(bias);
        for (std::size_t i = 0; i < g.rows(); ++i)
          for (std::size_t j = 0; j < g.cols(); ++j) gb(0, j) += g(i, j);
      }
    });
  }

  Var relu(Var x) {
    DenseMatrix out = value(x);
    for (double& v : out.data()) v = v <= 0.0 ? 0.0 : v;  // NaN passes through
    return record("relu", std::move(out), {x}, [this, x](const DenseMatrix& g) {
      if (!requires_grad(x)) return;
      DenseMatrix& gx = grad_ref(x);
      auto in = value(x).data();
      auto gi = g.data();
      auto go = gx.data();
      for (std::size_t i = 0; i < in.size(); ++i)
        if (in[i] > 0.0) go[i] += gi[i];
    });
  }

  /// Inverted dropout. Identity when !training or rate == 0.
  Var dropout(Var x, double rate, bool training, Rng& rng) {
    if (!(rate >= 0.0 && rate < 1.0)) {
      throw ConfigError("dropout rate must lie in [0, 1), got " + std::to_string(rate));
    }
    if (!training || rate == 0.0) return x;
    const double keep_scale = 1.0 / (1.0 - rate);
    // Two keep decisions per 64-bit draw, each against a 32-bit threshold.
    const auto threshold = static_cast<std::uint64_t>((1.0 - rate) * 4294967296.0);
    DenseMatrix mask(value(x).rows(), value(x).cols());
    auto md = mask.data();
    for (std::size_t i = 0; i < md.size(); i += 2) {
      const std::uint64_t bits = rng();
      md[i] = (bits & 0xffffffffu) < threshold ? keep_scale : 0.0;
      if (i + 1 < md.size()) md[i + 1] = (bits >> 32) < threshold ? keep_scale : 0.0;
    }
    DenseMatrix out = value(x);
    for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] *= mask.data()[i];
    return record("dropout", std::move(out), {x}, [this, x, mask = std::move(mask)](const DenseMatrix& g) {
      if (!requires_grad(x)) return;
      auto go = grad_ref(x).data();
      for (std::size_t i = 0; i < go.size(); ++i) go[i] += g.data()[i] * mask.data()[i];
    });
  }

  /// Softmax of each row, shifted by the row maximum.
  Var row_softmax(Var x) {
    const DenseMatrix& xv = value(x);
    if (xv.cols() == 0) throw ShapeError("row_softmax: matrix has no columns");
    DenseMatrix out(xv.rows(), xv.cols());
    for (std::size_t i = 0; i < xv.rows(); ++i) {
      auto in = xv.row(i);
      auto o = out.row(i);
      const double mx = *std::max_element(in.begin(), in.end());
      double z = 0.0;
      for (std::size_t j = 0; j < in.size(); ++j) z += (o[j] = std::exp(in[j] - mx));
      for (double& v : o) v /= z;
    }
    const std::size_t out_id = nodes_.size();
    return record("row_softmax", std::move(out), {x}, [this, x, out_id](const DenseMatrix& g) {
      if (!requires_grad(x)) return;
      const DenseMatrix& y = nodes_[out_id].value;
      DenseMatrix& gx = grad_ref(x);
      for (std::size_t i = 0; i < y.rows(); ++i) {
        double dot = 0.0;
        for (std::size_t j = 0; j < y.cols(); ++j) dot += g(i, j) * y(i, j);
        for (std::size_t j = 0; j < y.cols(); ++j) gx(i, j) += y(i, j) * (g(i, j) - dot);
      }
    });
  }

  Var scale(Var x, double factor) {
    DenseMatrix out = value(x);
    for (double& v : out.data()) v *= factor;
    return record("scale", std::move(out), {x}, [this, x, factor](const DenseMatrix& g) {
      if (requires_grad(x)) axpy(grad_ref(x), g, factor);
    });
  }

  /// bound·tanh(x/bound): identity near zero, saturating smoothly at ±bound.
  Var soft_clip(Var x, double bound) {
    if (!(bound > 0.0)) throw ConfigError("soft_clip bound must be positive");
    DenseMatrix out = value(x);
    for (double& v : out.data()) v = bound * std::tanh(v / bound);
    const std::size_t out_id = nodes_.size();
    return record("soft_clip", std::move(out), {x}, [this, x, bound, out_id](const DenseMatrix& g) {
      if (!requires_grad(x)) return;
      auto y = nodes_[out_id].value.data();
      auto go = grad_ref(x).data();
      for (std::size_t i = 0; i < go.size(); ++i) {
        const double t = y[i] / bound;
        go[i] += g.data()[i] * (1.0 - t * t);
      }
    });
  }

  Var add_scalar(Var x, double c) {
    DenseMatrix out = value(x);
    for (double& v : out.data()) v += c;
    return record("add_scalar", std::move(out), {x}, [this, x](const DenseMatrix& g) {
      if (requires_grad(x)) axpy(grad_ref(x), g);
    });
  }

  /// s(r, c) · x, with s a (small) learnable matrix.
  Var scale_by_entry(Var s, std::size_t r, std::size_t c, Var x) {
    const DenseMatrix& sv = value(s);
    if (r >= sv.rows() || c >= sv.cols()) throw ShapeError("scale_by_entry: index outside " + sv.shape_string());
    const double factor = sv(r, c);
    DenseMatrix out = value(x);
    for (double& v : out.data()) v *= factor;
    return record("scale_by_entry", std::move(out), {s, x}, [this, s, r, c, x](const DenseMatrix& g) {
      if (requires_grad(x)) axpy(grad_ref(x), g, value(s)(r, c));
      if (requires_grad(s)) {
        double dot = 0.0;
        auto xv = value(x).data();
        for (std::size_t i = 0; i < xv.size(); ++i) dot += g.data()[i] * xv[i];
        grad_ref(s)(r, c) += dot;
      }
    });
  }

  /// Row i of x multiplied by w(i, 0).
  Var scale_rows(Var w, Var x) {
    const DenseMatrix& wv = value(w);
    const DenseMatrix& xv = value(x);
    if (wv.cols() != 1 || wv.rows() != xv.rows()) {
      throw ShapeError("scale_rows: weights " + wv.shape_string() + " do not fit " + xv.shape_string());
    }
    DenseMatrix out = xv;
    for (std::size_t i = 0; i < out.rows(); ++i)
      for (double& v : out.row(i)) v *= wv(i, 0);
    return record("scale_rows", std::move(out), {w, x}, [this, w, x](const DenseMatrix& g) {
      const DenseMatrix& wv = value(w);
      const DenseMatrix& xv = value(x);
      if (requires_grad(x)) {
        DenseMatrix& gx = grad_ref(x);
        for (std::size_t i = 0; i < gx.rows(); ++i)
          for (std::size_t j = 0; j < gx.cols(); ++j) gx(i, j) += wv(i, 0) * g(i, j);
      }
      if (requires_grad(w)) {
        DenseMatrix& gw = grad_ref(w);
        for (std::size_t i = 0; i < xv.rows(); ++i) {
          double dot = 0.0;
          for (std::size_t j = 0; j < xv.cols(); ++j) dot += g(i, j) * xv(i, j);
          gw(i, 0) += dot;
        }
      }
    });
  }

  /// Column c of x as an n×1 matrix.
  Var column(Var x, std::size_t c) {
    const DenseMatrix& xv = value(x);
    if (c >= xv.cols()) throw ShapeError("column: index " + std::to_string(c) + " outside " + xv.shape_string());
    DenseMatrix out(xv.rows(), 1);
    for (std::size_t i = 0; i < xv.rows(); ++i) out(i, 0) = xv(i, c);
    return record("column", std::move(out), {x}, [this, x, c](const DenseMatrix& g) {
      if (!requires_grad(x)) return;
      DenseMatrix& gx = grad_ref(x);
      for (std::size_t i = 0; i < gx.rows(); ++i) gx(i, c) += g(i, 0);
    });
  }

  /// Sum of all entries as a 1×1 matrix.
  Var sum(Var x) {
    DenseMatrix out(1, 1, camue::sum(value(x)));
    return record("sum", std::move(out), {x}, [this, x](const DenseMatrix& g) {
      if (!requires_grad(x)) return;
      for (double& v : grad_ref(x).data()) v += g(0, 0);
    });
  }

  /// Mean softmax cross-entropy over the rows listed in mask; returns 1×1.
  Var cross_entropy(Var logits, std::span<const int> labels, std::span<const std::size_t> mask) {
    const DenseMatrix& z = value(logits);
    if (mask.empty()) throw ConfigError("no supervised nodes");
    if (labels.size() != z.rows()) {
      throw ShapeError("cross_entropy: " + std::to_string(labels.size()) + " labels for " + z.shape_string() +
                       " logits");
    }
    const std::size_t classes = z.cols();
    DenseMatrix probs(mask.size(), classes);
    std::vector<std::size_t> rows(mask.begin(), mask.end());
    std::vector<int> targets(mask.size());
    double loss = 0.0;
    for (std::size_t k = 0; k < mask.size(); ++k) {
      const std::size_t i = mask[k];
      if (i >= z.rows()) throw ShapeError("cross_entropy: masked row " + std::to_string(i) + " out of range");
      const int y = labels[i];
      if (y < 0 || static_cast<std::size_t>(y) >= classes) {
        throw ConfigError("cross_entropy: label " + std::to_string(y) + " of node " + std::to_string(i) +
                          " outside [0, " + std::to_string(classes) + ")");
      }
      targets[k] = y;
      auto row = z.row(i);
      const double mx = *std::max_element(row.begin(), row.end());
      double total = 0.0;
      for (std::size_t j = 0; j < classes; ++j) total += (probs(k, j) = std::exp(row[j] - mx));
      for (std::size_t j = 0; j < classes; ++j) probs(k, j) /= total;
      loss -= (row[static_cast<std::size_t>(y)] - mx) - std::log(total);
    }
    loss /= static_cast<double>(mask.size());
    return record("cross_entropy", DenseMatrix(1, 1, loss), {logits},
                  [this, logits, probs = std::move(probs), rows = std::move(rows),
                   targets = std::move(targets)](const DenseMatrix& g) {
                    if (!requires_grad(logits)) return;
                    DenseMatrix& gz = grad_ref(logits);
                    const double w = g(0, 0) / static_cast<double>(rows.size());
                    for (std::size_t k = 0; k < rows.size(); ++k) {
                      for (std::size_t j = 0; j < probs.cols(); ++j) {
                        const double onehot = static_cast<int>(j) == targets[k] ? 1.0 : 0.0;
                        gz(rows[k], j) += w * (probs(k, j) - onehot);
                      }
                    }
                  });
  }

  /// Runs every recorded backward rule in reverse order, seeding `loss` (1×1) with 1.
  void backward(Var loss) {
    const DenseMatrix& lv = value(loss);
    if (lv.rows() != 1 || lv.cols() != 1) throw ShapeError("backward: loss must be 1x1, got " + lv.shape_string());
    for (Node& n : nodes_) n.grad = DenseMatrix();
    trace_.clear();
    if (!requires_grad(loss)) return;
    grad_ref(loss)(0, 0) = 1.0;
    for (std::size_t k = ops_.size(); k-- > 0;) {
      const Op& op = ops_[k];
      const Node& out = nodes_[op.output];
      trace_.push_back(op.name);
      if (out.grad.empty()) continue;
      op.backward(out.grad);
    }
  }

 private:
  struct Node {
    DenseMatrix value;
    DenseMatrix grad;
    bool requires_grad = false;
    const Parameter* param = nullptr;
  };

  struct Op {
    std::string name;
    std::size_t output;
    std::function<void(const DenseMatrix&)> backward;
  };

  Var push(DenseMatrix value, bool requires_grad, const Parameter* p) {
    nodes_.push_back(Node{std::move(value), DenseMatrix(), requires_grad, p});
    return Var{nodes_.size() - 1};
  }

  DenseMatrix& grad_ref(Var v) {
    Node& n = nodes_[v.id];
    if (n.grad.empty()) n.grad = DenseMatrix(n.value.rows(), n.value.cols());
    return n.grad;
  }

  Var record(std::string name, DenseMatrix out, std::initializer_list<Var> inputs,
             std::function<void(const DenseMatrix&)> backward) {
    return record(std::move(name), std::move(out), std::span<const Var>(inputs.begin(), inputs.size()),
                  std::move(backward));
  }

  Var record(std::string name, DenseMatrix out, std::span<const Var> inputs,
             std::function<void(const DenseMatrix&)> backward) {
#ifndef NDEBUG
    if (!out.all_finite()) throw NumericError(name + " produced a non-finite value");
#endif
    bool needs = false;
    for (Var in : inputs) needs = needs || requires_grad(in);
    Var v = push(std::move(out), needs, nullptr);
    if (needs) ops_.push_back(Op{std::move(name), v.id, std::move(backward)});
    return v;
  }

  std::vector<Node> nodes_;
  std::vector<Op> ops_;
  std::unordered_map<const Parameter*, std::size_t> param_ids_;
  std::vector<std::string> trace_;
};

}  // namespace camue
