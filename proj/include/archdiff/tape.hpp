#pragma once

#include <functional>
#include <memory>
#include <string>
#include <unordered_set>
#include <vector>

#include "archdiff/rng.hpp"
#include "archdiff/tensor.hpp"

namespace archdiff {

struct Var;
using VarPtr = std::shared_ptr<Var>;

// A node in the computation graph. Leaves (parameters, inputs) have no
// backward function; op outputs carry a closure that scatters the incoming
// gradient to their parents.
struct Var {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    std::vector<VarPtr> parents;
    std::function<void(const Var&)> backward_fn;

    void zero_grad() { grad.fill(0.0); }
};

VarPtr make_leaf(Tensor value, bool requires_grad);
inline VarPtr constant(Tensor value) { return make_leaf(std::move(value), false); }

// Ordered record of executed differentiable operations. Ops append their
// output in execution order, which is a topological order by construction;
// backward() walks it in reverse. One backward pass per forward pass.
// A Tape and its tensors form a single-threaded unit.
class Tape {
  public:
    VarPtr matmul(const VarPtr& a, const VarPtr& b);
    VarPtr transpose(const VarPtr& a);
    VarPtr add(const VarPtr& a, const VarPtr& b);
    VarPtr sub(const VarPtr& a, const VarPtr& b);
    VarPtr mul(const VarPtr& a, const VarPtr& b);
    VarPtr scale(const VarPtr& a, double c);
    VarPtr add_rowvec(const VarPtr& a, const VarPtr& b);  // a {n,m} + b {1,m} per row
    VarPtr relu(const VarPtr& a);
    VarPtr swish(const VarPtr& a);  // x * sigmoid(x)
    VarPtr sigmoid(const VarPtr& a);
    VarPtr abs(const VarPtr& a);
    VarPtr recip(const VarPtr& a);
    VarPtr exp(const VarPtr& a);
    VarPtr log(const VarPtr& a);
    // Row-wise softmax of scores + mask; mask entries are 0 or -1e9 and a
    // fully masked row is a numeric error.
    VarPtr softmax_masked(const VarPtr& scores, const Tensor& mask);
    VarPtr sum_all(const VarPtr& a);
    VarPtr mean_all(const VarPtr& a);
    // Train-mode inverted dropout: Bernoulli keep mask scaled by 1/(1-p).
    VarPtr dropout(const VarPtr& a, double p, Rng& rng);
    VarPtr concat_cols(const std::vector<VarPtr>& parts);
    VarPtr make_diag(const VarPtr& a);  // {n,1} -> {n,n}
    VarPtr mul_const(const VarPtr& a, const Tensor& m);
    VarPtr add_const(const VarPtr& a, const Tensor& m);
    // mean of squared error against a constant target
    VarPtr mse(const VarPtr& pred, const Tensor& target);

    // Populates grads of every recorded node and reachable leaf that
    // requires gradients, including input leaves. loss must be a {1,1} node
    // produced by this tape.
    void backward(const VarPtr& loss);

    void clear();
    std::size_t size() const { return record_.size(); }

  private:
    VarPtr record(Tensor value, std::vector<VarPtr> parents,
                  std::function<void(const Var&)> backward_fn, const char* op);

    std::vector<VarPtr> record_;
    std::unordered_set<const Var*> owned_;
    bool backward_done_ = false;
};

// Accumulates out.grad-weighted contributions into a parent if it wants them.
inline bool wants_grad(const VarPtr& v) { return v && v->requires_grad; }

}  // namespace archdiff
