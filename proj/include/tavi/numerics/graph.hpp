#pragma once

#include <functional>
#include <string>
#include <vector>

#include "tavi/numerics/params.hpp"
#include "tavi/numerics/tensor.hpp"

namespace tavi::numerics {

class Graph;

// Lightweight handle into a Graph's tape.
struct Var {
  Graph* graph = nullptr;
  int id = -1;

  const Tensor& value() const;
  const Tensor& grad() const;
};

// Reverse-mode tape. Forward ops append nodes; backward() walks the tape in
// reverse, accumulating gradients into tracked leaves and bound ParamSet
// entries. A graph is consumed by backward(); a second backward() without a
// fresh forward pass raises StaleGraphError. Every op checks its output for
// non-finite values and raises NumericError instead of propagating them.
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  // Constant leaf; no gradient is tracked through it.
  Var input(Tensor v);
  // Gradient-tracked leaf (not tied to a ParamSet).
  Var leaf(Tensor v);
  // Leaf bound to params.value(name); backward() adds into params.grad(name).
  Var param(ParamSet& params, const std::string& name);

  // loss must be a single-element tensor.
  void backward(Var loss);

  const Tensor& value(int id) const { return nodes_[id].value; }
  // Gradient of the node; zeros if backward never reached it.
  const Tensor& grad(int id);

  std::size_t size() const { return nodes_.size(); }

  // Tape plumbing used by the op implementations; not part of the public
  // surface callers should touch.
  Var make_node(Tensor value, std::vector<int> args,
                std::function<void(Graph&, int)> backprop, const char* opname);
  void accumulate(int id, const Tensor& g, double factor = 1.0);
  bool requires_grad(int id) const { return nodes_[id].requires_grad; }

 private:
  struct Node {
    Tensor value;
    Tensor grad;  // empty until backward touches it
    bool requires_grad = false;
    std::vector<int> args;
    std::function<void(Graph&, int)> backprop;
    ParamSet* bound_params = nullptr;
    std::string bound_name;
  };

  std::vector<Node> nodes_;
  bool consumed_ = false;
};

// Forward ops. Shapes follow the comments; every op throws ShapeError on a
// mismatch. Matrices are rank-2, vectors rank-1.
Var matmul(Var a, Var b);        // [m,k] x [k,n] -> [m,n]
Var matmul_nt(Var a, Var b);     // [m,k] x [n,k]^T -> [m,n]
Var add(Var a, Var b);           // same shape
Var sub(Var a, Var b);           // same shape
Var mul(Var a, Var b);           // elementwise, same shape
Var add_rowvec(Var a, Var b);    // [m,n] + broadcast [n]
Var scale(Var a, double c);
Var add_const(Var a, double c);
Var relu(Var a);
Var tanh(Var a);
Var exp(Var a);
Var log(Var a);                  // input must be strictly positive
Var sqrt(Var a);                 // backward clamps the slope near zero
Var sum(Var a);                  // -> [1]
Var mean(Var a);                 // -> [1]
Var row_dot(Var a, Var b);       // paired rows: [m,n],[m,n] -> [m]
Var row_l2_norm(Var a);          // [m,n] -> [m]; backward clamps near zero
Var row_l2_normalize(Var a);     // [m,n] -> [m,n], rows scaled to unit norm
Var logsumexp_rows(Var a);       // [m,n] -> [m], max-shifted for stability
Var concat_cols(Var a, Var b);   // [m,p],[m,q] -> [m,p+q]
Var diag(Var a);                 // [m,m] -> [m]
Var reshape(Var a, std::vector<std::size_t> shape);

}  // namespace tavi::numerics
