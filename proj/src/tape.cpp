#include "archdiff/tape.hpp"

#include <cmath>
#include <utility>

#include "archdiff/errors.hpp"

namespace archdiff {

namespace {

inline double sigmoid_stable(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

inline void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b)) {
        throw DimensionError(std::string(op) + ": shape mismatch (" + std::to_string(a.rows) +
                             "x" + std::to_string(a.cols) + " vs " + std::to_string(b.rows) +
                             "x" + std::to_string(b.cols) + ")");
    }
}

}  // namespace

VarPtr make_leaf(Tensor value, bool requires_grad) {
    auto v = std::make_shared<Var>();
    v->grad = Tensor(value.rows, value.cols);
    v->value = std::move(value);
    v->requires_grad = requires_grad;
    return v;
}

VarPtr Tape::record(Tensor value, std::vector<VarPtr> parents,
                    std::function<void(const Var&)> backward_fn, const char* op) {
    if (!value.all_finite()) {
        throw NumericError(std::string(op) + ": non-finite output");
    }
    bool needs = false;
    for (const auto& p : parents) needs = needs || p->requires_grad;
    if (!needs) {
        return make_leaf(std::move(value), false);
    }
    auto v = std::make_shared<Var>();
    v->grad = Tensor(value.rows, value.cols);
    v->value = std::move(value);
    v->requires_grad = true;
    v->parents = std::move(parents);
    v->backward_fn = std::move(backward_fn);
    record_.push_back(v);
    owned_.insert(v.get());
    backward_done_ = false;
    return v;
}

VarPtr Tape::matmul(const VarPtr& a, const VarPtr& b) {
    if (a->value.cols != b->value.rows) throw DimensionError("matmul: inner dimensions differ");
    const int n = a->value.rows, k = a->value.cols, m = b->value.cols;
    Tensor out(n, m);
    for (int i = 0; i < n; ++i) {
        for (int kk = 0; kk < k; ++kk) {
            const double av = a->value.at(i, kk);
            if (av == 0.0) continue;
            for (int j = 0; j < m; ++j) out.at(i, j) += av * b->value.at(kk, j);
        }
    }
    return record(std::move(out), {a, b},
                  [n, k, m](const Var& o) {
                      const auto& pa = o.parents[0];
                      const auto& pb = o.parents[1];
                      if (pa->requires_grad) {
                          for (int i = 0; i < n; ++i)
                              for (int j = 0; j < m; ++j) {
                                  const double g = o.grad.at(i, j);
                                  if (g == 0.0) continue;
                                  for (int kk = 0; kk < k; ++kk)
                                      pa->grad.at(i, kk) += g * pb->value.at(kk, j);
                              }
                      }
                      if (pb->requires_grad) {
                          for (int i = 0; i < n; ++i)
                              for (int kk = 0; kk < k; ++kk) {
                                  const double av = pa->value.at(i, kk);
                                  if (av == 0.0) continue;
                                  for (int j = 0; j < m; ++j)
                                      pb->grad.at(kk, j) += av * o.grad.at(i, j);
                              }
                      }
                  },
                  "matmul");
}

VarPtr Tape::transpose(const VarPtr& a) {
    const int n = a->value.rows, m = a->value.cols;
    Tensor out(m, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j) out.at(j, i) = a->value.at(i, j);
    return record(std::move(out), {a},
                  [n, m](const Var& o) {
                      const auto& p = o.parents[0];
                      if (!p->requires_grad) return;
                      for (int i = 0; i < n; ++i)
                          for (int j = 0; j < m; ++j) p->grad.at(i, j) += o.grad.at(j, i);
                  },
                  "transpose");
}

VarPtr Tape::add(const VarPtr& a, const VarPtr& b) {
    check_same_shape(a->value, b->value, "add");
    Tensor out = a->value;
    for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] += b->value.data[i];
    return record(std::move(out), {a, b},
                  [](const Var& o) {
                      for (int s = 0; s < 2; ++s) {
                          const auto& p = o.parents[s];
                          if (!p->requires_grad) continue;
                          for (std::size_t i = 0; i < o.grad.numel(); ++i)
                              p->grad.data[i] += o.grad.data[i];
                      }
                  },
                  "add");
}

VarPtr Tape::sub(const VarPtr& a, const VarPtr& b) {
    check_same_shape(a->value, b->value, "sub");
    Tensor out = a->value;
    for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] -= b->value.data[i];
    return record(std::move(out), {a, b},
                  [](const Var& o) {
                      const auto& pa = o.parents[0];
                      const auto& pb = o.parents[1];
                      for (std::size_t i = 0; i < o.grad.numel(); ++i) {
                          if (pa->requires_grad) pa->grad.data[i] += o.grad.data[i];
                          if (pb->requires_grad) pb->grad.data[i] -= o.grad.data[i];
                      }
                  },
                  "sub");
}

VarPtr Tape::mul(const VarPtr& a, const VarPtr& b) {
    check_same_shape(a->value, b->value, "mul");
    Tensor out = a->value;
    for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] *= b->value.data[i];
    return record(std::move(out), {a, b},
                  [](const Var& o) {
                      const auto& pa = o.parents[0];
                      const auto& pb = o.parents[1];
                      for (std::size_t i = 0; i < o.grad.numel(); ++i) {
                          if (pa->requires_grad) pa->grad.data[i] += o.grad.data[i] * pb->value.data[i];
                          if (pb->requires_grad) pb->grad.data[i] += o.grad.data[i] * pa->value.data[i];
                      }
                  },
                  "mul");
}

VarPtr Tape::scale(const VarPtr& a, double c) {
    Tensor out = a->value;
    for (double& v : out.data) v *= c;
    return record(std::move(out), {a},
                  [c](const Var& o) {
                      const auto& p = o.parents[0];
                      if (!p->requires_grad) return;
                      for (std::size_t i = 0; i < o.grad.numel(); ++i)
                          p->grad.data[i] += c * o.grad.data[i];
                  },
                  "scale");
}

VarPtr Tape::add_rowvec(const VarPtr& a, const VarPtr& b) {
    if (b->value.rows != 1 || b->value.cols != a->value.cols) {
        throw DimensionError("add_rowvec: bias must be {1, cols}");
    }
    const int n = a->value.rows, m = a->value.cols;
    Tensor out = a->value;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < m; ++j) out.at(i, j) += b->value.at(0, j);
    return record(std::move(out), {a, b},
                  [n, m](const Var& o) {
                      const auto& pa = o.parents[0];
                      const auto& pb = o.parents[1];
                      if (pa->requires_grad) {
                          for (std::size_t i = 0; i < o.grad.numel(); ++i)
                              pa->grad.data[i] += o.grad.data[i];
                      }
                      if (pb->requires_grad) {
                          for (int i = 0; i < n; ++i)
                              for (int j = 0; j < m; ++j) pb->grad.at(0, j) += o.grad.at(i, j);
                      }
                  },
                  "add_rowvec");
}

VarPtr Tape::relu(const VarPtr& a) {
    Tensor out = a->value;
    for (double& v : out.data) v = v > 0.0 ? v : 0.0;
    return record(std::move(out), {a},
                  [](const Var& o) {
                      const auto& p = o.parents[0];
                      if (!p->requires_grad) return;
                      for (std::size_t i = 0; i < o.grad.numel(); ++i)
                          if (p->value.data[i] > 0.0) p->grad.data[i] += o.grad.data[i];
                  },
                  "relu");
}

VarPtr Tape::swish(const VarPtr& a) {
    Tensor out = a->value;
    for (double& v : out.data) v = v * sigmoid_stable(v);
    return record(std::move(out), {a},
                  [](const Var& o) {
                      const auto& p = o.parents[0];
                      if (!p->requires_grad) return;
                      for (std::size_t i = 0; i < o.grad.numel(); ++i) {
                          const double x = p->value.data[i];
                          const double s = sigmoid_stable(x);
                          p->grad.data[i] += o.grad.data[i] * s * (1.0 + x * (1.0 - s));
                      }
                  },
                  "swish");
}

VarPtr Tape::sigmoid(const VarPtr& a) {
    Tensor out = a->value;
    for (double& v : out.data) v = sigmoid_stable(v);
    return record(std::move(out), {a},
                  [](const Var& o) {
                      const auto& p = o.parents[0];
                      if (!p->requires_grad) return;
                      for (std::size_t i = 0; i < o.grad.numel(); ++i) {
                          const double y = o.value.data[i];
                          p->grad.data[i] += o.grad.data[i] * y * (1.0 - y);
                      }
                  },
                  "sigmoid");
}

VarPtr Tape::abs(const VarPtr& a) {
    Tensor out = a->value;
    for (double& v : out.data) v = std::fabs(v);
    return record(std::move(out), {a},
                  [](const Var& o) {
                      const auto& p = o.parents[0];
                      if (!p->requires_grad) return;
                      for (std::size_t i = 0; i < o.grad.numel(); ++i) {
                          const double x = p->value.data[i];
                          const double s = x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0);
                          p->grad.data[i] += o.grad.data[i] * s;
                      }
                  },
                  "abs");
}

VarPtr Tape::recip(const VarPtr& a) {
    Tensor out = a->value;
    for (double& v : out.data) v = 1.0 / v;
    return record(std::move(out), {a},
                  [](const Var& o) {
                      const auto& p = o.parents[0];
                      if (!p->requires_grad) return;
                      for (std::size_t i = 0; i < o.grad.numel(); ++i) {
                          const double y = o.value.data[i];
                          p->grad.data[i] -= o.grad.data[i] * y * y;
                      }
                  },
                  "recip");
}

VarPtr Tape::exp(const VarPtr& a) {
    Tensor out = a->value;
    for (double& v : out.data) v = std::exp(v);
    return record(std::move(out), {a},
                  [](const Var& o) {
                      const auto& p = o.parents[0];
                      if (!p->requires_grad) return;
                      for (std::size_t i = 0; i < o.grad.numel(); ++i)
                          p->grad.data[i] += o.grad.data[i] * o.value.data[i];
                  },
                  "exp");
}

VarPtr Tape::log(const VarPtr& a) {
    Tensor out = a->value;
    for (double& v : out.data) {
        if (v <= 0.0) throw NumericError("log: non-positive input");
        v = std::log(v);
    }
    return record(std::move(out), {a},
                  [](const Var& o) {
                      const auto& p = o.parents[0];
                      if (!p->requires_grad) return;
                      for (std::size_t i = 0; i < o.grad.numel(); ++i)
                          p->grad.data[i] += o.grad.data[i] / p->value.data[i];
                  },
                  "log");
}

VarPtr Tape::softmax_masked(const VarPtr& scores, const Tensor& mask) {
    check_same_shape(scores->value, mask, "softmax_masked");
    const int n = scores->value.rows, m = scores->value.cols;
    Tensor out(n, m);
    for (int i = 0; i < n; ++i) {
        double mx = -1e300;
        for (int j = 0; j < m; ++j) mx = std::max(mx, scores->value.at(i, j) + mask.at(i, j));
        if (mx <= -1e8) throw NumericError("softmax_masked: row fully masked");
        double z = 0.0;
        for (int j = 0; j < m; ++j) {
            const double e = std::exp(scores->value.at(i, j) + mask.at(i, j) - mx);
            out.at(i, j) = e;
            z += e;
        }
        for (int j = 0; j < m; ++j) out.at(i, j) /= z;
    }
    return record(std::move(out), {scores},
                  [n, m](const Var& o) {
                      const auto& p = o.parents[0];
                      if (!p->requires_grad) return;
                      for (int i = 0; i < n; ++i) {
                          double dot = 0.0;
                          for (int j = 0; j < m; ++j) dot += o.grad.at(i, j) * o.value.at(i, j);
                          for (int j = 0; j < m; ++j)
                              p->grad.at(i, j) += o.value.at(i, j) * (o.grad.at(i, j) - dot);
                      }
                  },
                  "softmax_masked");
}

VarPtr Tape::sum_all(const VarPtr& a) {
    double s = 0.0;
    for (double v : a->value.data) s += v;
    return record(Tensor::scalar(s), {a},
                  [](const Var& o) {
                      const auto& p = o.parents[0];
                      if (!p->requires_grad) return;
                      const double g = o.grad.data[0];
                      for (double& gv : p->grad.data) gv += g;
                  },
                  "sum_all");
}

VarPtr Tape::mean_all(const VarPtr& a) {
    double s = 0.0;
    for (double v : a->value.data) s += v;
    const double inv = 1.0 / static_cast<double>(a->value.numel());
    return record(Tensor::scalar(s * inv), {a},
                  [inv](const Var& o) {
                      const auto& p = o.parents[0];
                      if (!p->requires_grad) return;
                      const double g = o.grad.data[0] * inv;
                      for (double& gv : p->grad.data) gv += g;
                  },
                  "mean_all");
}

VarPtr Tape::dropout(const VarPtr& a, double p, Rng& rng) {
    if (p <= 0.0) return a;
    if (p >= 1.0) throw UsageError("dropout: rate must be < 1");
    const double keep_scale = 1.0 / (1.0 - p);
    Tensor mask(a->value.rows, a->value.cols);
    for (double& v : mask.data) v = rng.uniform() >= p ? keep_scale : 0.0;
    Tensor out = a->value;
    for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] *= mask.data[i];
    return record(std::move(out), {a},
                  [mask](const Var& o) {
                      const auto& par = o.parents[0];
                      if (!par->requires_grad) return;
                      for (std::size_t i = 0; i < o.grad.numel(); ++i)
                          par->grad.data[i] += o.grad.data[i] * mask.data[i];
                  },
                  "dropout");
}

VarPtr Tape::concat_cols(const std::vector<VarPtr>& parts) {
    if (parts.empty()) throw UsageError("concat_cols: no inputs");
    const int n = parts[0]->value.rows;
    int total = 0;
    for (const auto& p : parts) {
        if (p->value.rows != n) throw DimensionError("concat_cols: row count mismatch");
        total += p->value.cols;
    }
    Tensor out(n, total);
    int off = 0;
    for (const auto& p : parts) {
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < p->value.cols; ++j) out.at(i, off + j) = p->value.at(i, j);
        off += p->value.cols;
    }
    return record(std::move(out), parts,
                  [n](const Var& o) {
                      int off2 = 0;
                      for (const auto& p : o.parents) {
                          if (p->requires_grad) {
                              for (int i = 0; i < n; ++i)
                                  for (int j = 0; j < p->value.cols; ++j)
                                      p->grad.at(i, j) += o.grad.at(i, off2 + j);
                          }
                          off2 += p->value.cols;
                      }
                  },
                  "concat_cols");
}

VarPtr Tape::make_diag(const VarPtr& a) {
    if (a->value.cols != 1) throw DimensionError("make_diag: input must be a column vector");
    const int n = a->value.rows;
    Tensor out(n, n);
    for (int i = 0; i < n; ++i) out.at(i, i) = a->value.at(i, 0);
    return record(std::move(out), {a},
                  [n](const Var& o) {
                      const auto& p = o.parents[0];
                      if (!p->requires_grad) return;
                      for (int i = 0; i < n; ++i) p->grad.at(i, 0) += o.grad.at(i, i);
                  },
                  "make_diag");
}

VarPtr Tape::mul_const(const VarPtr& a, const Tensor& m) {
    check_same_shape(a->value, m, "mul_const");
    Tensor out = a->value;
    for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] *= m.data[i];
    return record(std::move(out), {a},
                  [m](const Var& o) {
                      const auto& p = o.parents[0];
                      if (!p->requires_grad) return;
                      for (std::size_t i = 0; i < o.grad.numel(); ++i)
                          p->grad.data[i] += o.grad.data[i] * m.data[i];
                  },
                  "mul_const");
}

VarPtr Tape::add_const(const VarPtr& a, const Tensor& m) {
    check_same_shape(a->value, m, "add_const");
    Tensor out = a->value;
    for (std::size_t i = 0; i < out.numel(); ++i) out.data[i] += m.data[i];
    return record(std::move(out), {a},
                  [](const Var& o) {
                      const auto& p = o.parents[0];
                      if (!p->requires_grad) return;
                      for (std::size_t i = 0; i < o.grad.numel(); ++i)
                          p->grad.data[i] += o.grad.data[i];
                  },
                  "add_const");
}

VarPtr Tape::mse(const VarPtr& pred, const Tensor& target) {
    check_same_shape(pred->value, target, "mse");
    double s = 0.0;
    for (std::size_t i = 0; i < target.numel(); ++i) {
        const double d = pred->value.data[i] - target.data[i];
        s += d * d;
    }
    const double inv = 1.0 / static_cast<double>(target.numel());
    return record(Tensor::scalar(s * inv), {pred},
                  [target, inv](const Var& o) {
                      const auto& p = o.parents[0];
                      if (!p->requires_grad) return;
                      const double g = o.grad.data[0];
                      for (std::size_t i = 0; i < target.numel(); ++i)
                          p->grad.data[i] += g * 2.0 * (p->value.data[i] - target.data[i]) * inv;
                  },
                  "mse");
}

void Tape::backward(const VarPtr& loss) {
    if (loss->value.rows != 1 || loss->value.cols != 1) {
        throw UsageError("backward: loss must be scalar");
    }
    if (owned_.find(loss.get()) == owned_.end()) {
        throw UsageError("backward: tensor is detached from this tape");
    }
    if (backward_done_) {
        throw UsageError("backward: tape already consumed; rebuild the forward pass");
    }
    backward_done_ = true;
    loss->grad.data[0] = 1.0;
    for (auto it = record_.rbegin(); it != record_.rend(); ++it) {
        (*it)->backward_fn(**it);
    }
}

void Tape::clear() {
    record_.clear();
    owned_.clear();
    backward_done_ = false;
}

}  // namespace archdiff
