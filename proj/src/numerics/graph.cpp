#include "tavi/numerics/graph.hpp"

#include <algorithm>
#include <cmath>

#include "tavi/errors.hpp"

namespace tavi::numerics {

namespace {

// Raw accumulate kernels, C += op(A, B). Row-major, ikj loop order.
void mm_acc(const double* a, const double* b, double* c,
            std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* ai = a + i * k;
    double* ci = c + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      double av = ai[p];
      if (av == 0.0) continue;
      const double* bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

// C += A * B^T with A [m,k], B [n,k].
void mm_nt_acc(const double* a, const double* b, double* c,
               std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* ai = a + i * k;
    double* ci = c + i * n;
    for (std::size_t j = 0; j < n; ++j) {
      const double* bj = b + j * k;
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += ai[p] * bj[p];
      ci[j] += acc;
    }
  }
}

// C += A^T * B with A [m,k], B [m,n], C [k,n].
void mm_tn_acc(const double* a, const double* b, double* c,
               std::size_t m, std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const double* ai = a + i * k;
    const double* bi = b + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      double av = ai[p];
      if (av == 0.0) continue;
      double* cp = c + p * n;
      for (std::size_t j = 0; j < n; ++j) cp[j] += av * bi[j];
    }
  }
}

void require_rank2(const Tensor& t, const char* op) {
  if (t.rank() != 2) throw ShapeError(std::string(op) + ": expected rank-2, got " + t.shape_str());
}

void require_same_graph(Var a, Var b, const char* op) {
  if (a.graph == nullptr || a.graph != b.graph) {
    throw ConfigError(std::string(op) + ": operands from different graphs");
  }
}

constexpr double kNormFloor = 1e-12;

}  // namespace

const Tensor& Var::value() const { return graph->value(id); }
const Tensor& Var::grad() const { return graph->grad(id); }

Var Graph::input(Tensor v) {
  v.ensure_finite("input");
  Node n;
  n.value = std::move(v);
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

Var Graph::leaf(Tensor v) {
  Var out = input(std::move(v));
  nodes_[out.id].requires_grad = true;
  return out;
}

Var Graph::param(ParamSet& params, const std::string& name) {
  Var out = input(params.value(name));
  nodes_[out.id].requires_grad = true;
  nodes_[out.id].bound_params = &params;
  nodes_[out.id].bound_name = name;
  return out;
}

Var Graph::make_node(Tensor value, std::vector<int> args,
                     std::function<void(Graph&, int)> backprop, const char* opname) {
  value.ensure_finite(opname);
  Node n;
  n.value = std::move(value);
  n.args = std::move(args);
  for (int a : n.args) {
    if (nodes_[a].requires_grad) n.requires_grad = true;
  }
  if (n.requires_grad) n.backprop = std::move(backprop);
  nodes_.push_back(std::move(n));
  return Var{this, static_cast<int>(nodes_.size()) - 1};
}

void Graph::accumulate(int id, const Tensor& g, double factor) {
  Node& n = nodes_[id];
  if (!n.requires_grad) return;
  if (n.grad.numel() == 0) n.grad = Tensor(n.value.shape());
  if (!n.grad.same_shape(g)) throw ShapeError("accumulate: gradient shape mismatch");
  for (std::size_t i = 0; i < g.numel(); ++i) n.grad[i] += factor * g[i];
}

const Tensor& Graph::grad(int id) {
  Node& n = nodes_[id];
  if (n.grad.numel() == 0) n.grad = Tensor(n.value.shape());
  return n.grad;
}

void Graph::backward(Var loss) {
  if (loss.graph != this) throw ConfigError("backward: loss from another graph");
  if (consumed_) {
    throw StaleGraphError("backward: graph already consumed; rerun the forward pass");
  }
  consumed_ = true;
  Node& ln = nodes_[loss.id];
  if (ln.value.numel() != 1) throw ShapeError("backward: loss must be a single element");
  if (ln.grad.numel() == 0) ln.grad = Tensor(ln.value.shape());
  ln.grad.fill(1.0);
  for (int i = loss.id; i >= 0; --i) {
    Node& n = nodes_[i];
    if (!n.requires_grad || n.grad.numel() == 0) continue;
    if (n.backprop) n.backprop(*this, i);
    if (n.bound_params != nullptr) {
      Tensor& pg = n.bound_params->grad(n.bound_name);
      for (std::size_t j = 0; j < pg.numel(); ++j) pg[j] += n.grad[j];
    }
  }
}

Var matmul(Var a, Var b) {
  require_same_graph(a, b, "matmul");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_rank2(av, "matmul");
  require_rank2(bv, "matmul");
  if (av.cols() != bv.rows()) {
    throw ShapeError("matmul: " + av.shape_str() + " x " + bv.shape_str());
  }
  std::size_t m = av.rows(), k = av.cols(), n = bv.cols();
  Tensor out({m, n});
  mm_acc(av.values().data(), bv.values().data(), out.values().data(), m, k, n);
  int ai = a.id, bi = b.id;
  return a.graph->make_node(
      std::move(out), {ai, bi},
      [ai, bi, m, k, n](Graph& g, int self) {
        const Tensor& gy = g.grad(self);
        const Tensor& av2 = g.value(ai);
        const Tensor& bv2 = g.value(bi);
        if (g.requires_grad(ai)) {
          Tensor ga({m, k});
          mm_nt_acc(gy.values().data(), bv2.values().data(), ga.values().data(), m, n, k);
          g.accumulate(ai, ga);
        }
        if (g.requires_grad(bi)) {
          Tensor gb({k, n});
          mm_tn_acc(av2.values().data(), gy.values().data(), gb.values().data(), m, k, n);
          g.accumulate(bi, gb);
        }
      },
      "matmul");
}

Var matmul_nt(Var a, Var b) {
  require_same_graph(a, b, "matmul_nt");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_rank2(av, "matmul_nt");
  require_rank2(bv, "matmul_nt");
  if (av.cols() != bv.cols()) {
    throw ShapeError("matmul_nt: " + av.shape_str() + " x " + bv.shape_str() + "^T");
  }
  std::size_t m = av.rows(), k = av.cols(), n = bv.rows();
  Tensor out({m, n});
  mm_nt_acc(av.values().data(), bv.values().data(), out.values().data(), m, k, n);
  int ai = a.id, bi = b.id;
  return a.graph->make_node(
      std::move(out), {ai, bi},
      [ai, bi, m, k, n](Graph& g, int self) {
        const Tensor& gy = g.grad(self);  // [m,n]
        const Tensor& av2 = g.value(ai);
        const Tensor& bv2 = g.value(bi);
        if (g.requires_grad(ai)) {
          Tensor ga({m, k});
          mm_acc(gy.values().data(), bv2.values().data(), ga.values().data(), m, n, k);
          g.accumulate(ai, ga);
        }
        if (g.requires_grad(bi)) {
          Tensor gb({n, k});
          mm_tn_acc(gy.values().data(), av2.values().data(), gb.values().data(), m, n, k);
          g.accumulate(bi, gb);
        }
      },
      "matmul_nt");
}

namespace {

Var binary_elementwise(Var a, Var b, const char* op,
                       double (*fwd)(double, double),
                       void (*bwd)(Graph&, int, int, int)) {
  require_same_graph(a, b, op);
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  if (!av.same_shape(bv)) {
    throw ShapeError(std::string(op) + ": shape mismatch " + av.shape_str() + " vs " + bv.shape_str());
  }
  Tensor out(av.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = fwd(av[i], bv[i]);
  int ai = a.id, bi = b.id;
  return a.graph->make_node(std::move(out), {ai, bi},
                            [ai, bi, bwd](Graph& g, int self) { bwd(g, self, ai, bi); }, op);
}

}  // namespace

Var add(Var a, Var b) {
  return binary_elementwise(
      a, b, "add", [](double x, double y) { return x + y; },
      [](Graph& g, int self, int ai, int bi) {
        const Tensor& gy = g.grad(self);
        g.accumulate(ai, gy);
        g.accumulate(bi, gy);
      });
}

Var sub(Var a, Var b) {
  return binary_elementwise(
      a, b, "sub", [](double x, double y) { return x - y; },
      [](Graph& g, int self, int ai, int bi) {
        const Tensor& gy = g.grad(self);
        g.accumulate(ai, gy);
        g.accumulate(bi, gy, -1.0);
      });
}

Var mul(Var a, Var b) {
  return binary_elementwise(
      a, b, "mul", [](double x, double y) { return x * y; },
      [](Graph& g, int self, int ai, int bi) {
        const Tensor& gy = g.grad(self);
        const Tensor& av = g.value(ai);
        const Tensor& bv = g.value(bi);
        if (g.requires_grad(ai)) {
          Tensor ga(av.shape());
          for (std::size_t i = 0; i < ga.numel(); ++i) ga[i] = gy[i] * bv[i];
          g.accumulate(ai, ga);
        }
        if (g.requires_grad(bi)) {
          Tensor gb(bv.shape());
          for (std::size_t i = 0; i < gb.numel(); ++i) gb[i] = gy[i] * av[i];
          g.accumulate(bi, gb);
        }
      });
}

Var add_rowvec(Var a, Var b) {
  require_same_graph(a, b, "add_rowvec");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_rank2(av, "add_rowvec");
  if (bv.rank() != 1 || bv.numel() != av.cols()) {
    throw ShapeError("add_rowvec: " + av.shape_str() + " + " + bv.shape_str());
  }
  std::size_t m = av.rows(), n = av.cols();
  Tensor out({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) out.at(i, j) = av.at(i, j) + bv[j];
  }
  int ai = a.id, bi = b.id;
  return a.graph->make_node(
      std::move(out), {ai, bi},
      [ai, bi, m, n](Graph& g, int self) {
        const Tensor& gy = g.grad(self);
        g.accumulate(ai, gy);
        if (g.requires_grad(bi)) {
          Tensor gb({n});
          for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = 0; j < n; ++j) gb[j] += gy.at(i, j);
          }
          g.accumulate(bi, gb);
        }
      },
      "add_rowvec");
}

namespace {

Var unary_elementwise(Var a, const char* op, double (*fwd)(double),
                      double (*dfdx)(double x, double y)) {
  const Tensor& av = a.value();
  Tensor out(av.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = fwd(av[i]);
  int ai = a.id;
  return a.graph->make_node(
      std::move(out), {ai},
      [ai, dfdx](Graph& g, int self) {
        const Tensor& gy = g.grad(self);
        const Tensor& av2 = g.value(ai);
        const Tensor& yv = g.value(self);
        Tensor ga(av2.shape());
        for (std::size_t i = 0; i < ga.numel(); ++i) ga[i] = gy[i] * dfdx(av2[i], yv[i]);
        g.accumulate(ai, ga);
      },
      op);
}

}  // namespace

Var scale(Var a, double c) {
  const Tensor& av = a.value();
  Tensor out(av.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = c * av[i];
  int ai = a.id;
  return a.graph->make_node(
      std::move(out), {ai},
      [ai, c](Graph& g, int self) { g.accumulate(ai, g.grad(self), c); }, "scale");
}

Var add_const(Var a, double c) {
  const Tensor& av = a.value();
  Tensor out(av.shape());
  for (std::size_t i = 0; i < out.numel(); ++i) out[i] = av[i] + c;
  int ai = a.id;
  return a.graph->make_node(
      std::move(out), {ai},
      [ai](Graph& g, int self) { g.accumulate(ai, g.grad(self)); }, "add_const");
}

Var relu(Var a) {
  return unary_elementwise(
      a, "relu", [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var tanh(Var a) {
  return unary_elementwise(
      a, "tanh", [](double x) { return std::tanh(x); },
      [](double, double y) { return 1.0 - y * y; });
}

Var exp(Var a) {
  return unary_elementwise(
      a, "exp", [](double x) { return std::exp(x); },
      [](double, double y) { return y; });
}

Var log(Var a) {
  for (double x : a.value().values()) {
    if (!(x > 0.0)) throw NumericError("log: input must be strictly positive");
  }
  return unary_elementwise(
      a, "log", [](double x) { return std::log(x); },
      [](double x, double) { return 1.0 / x; });
}

Var sqrt(Var a) {
  for (double x : a.value().values()) {
    if (x < 0.0) throw NumericError("sqrt: negative input");
  }
  return unary_elementwise(
      a, "sqrt", [](double x) { return std::sqrt(x); },
      [](double, double y) { return 0.5 / std::max(y, kNormFloor); });
}

Var sum(Var a) {
  const Tensor& av = a.value();
  double s = 0.0;
  for (double x : av.values()) s += x;
  int ai = a.id;
  return a.graph->make_node(
      Tensor({1}, {s}), {ai},
      [ai](Graph& g, int self) {
        double gy = g.grad(self)[0];
        Tensor ga(g.value(ai).shape());
        ga.fill(gy);
        g.accumulate(ai, ga);
      },
      "sum");
}

Var mean(Var a) {
  const Tensor& av = a.value();
  if (av.numel() == 0) throw ShapeError("mean: empty tensor");
  double s = 0.0;
  for (double x : av.values()) s += x;
  s /= static_cast<double>(av.numel());
  int ai = a.id;
  return a.graph->make_node(
      Tensor({1}, {s}), {ai},
      [ai](Graph& g, int self) {
        const Tensor& av2 = g.value(ai);
        double gy = g.grad(self)[0] / static_cast<double>(av2.numel());
        Tensor ga(av2.shape());
        ga.fill(gy);
        g.accumulate(ai, ga);
      },
      "mean");
}

Var row_dot(Var a, Var b) {
  require_same_graph(a, b, "row_dot");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_rank2(av, "row_dot");
  if (!av.same_shape(bv)) {
    throw ShapeError("row_dot: shape mismatch " + av.shape_str() + " vs " + bv.shape_str());
  }
  std::size_t m = av.rows(), n = av.cols();
  Tensor out({m});
  for (std::size_t i = 0; i < m; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) acc += av.at(i, j) * bv.at(i, j);
    out[i] = acc;
  }
  int ai = a.id, bi = b.id;
  return a.graph->make_node(
      std::move(out), {ai, bi},
      [ai, bi, m, n](Graph& g, int self) {
        const Tensor& gy = g.grad(self);
        const Tensor& av2 = g.value(ai);
        const Tensor& bv2 = g.value(bi);
        if (g.requires_grad(ai)) {
          Tensor ga({m, n});
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) ga.at(i, j) = gy[i] * bv2.at(i, j);
          g.accumulate(ai, ga);
        }
        if (g.requires_grad(bi)) {
          Tensor gb({m, n});
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < n; ++j) gb.at(i, j) = gy[i] * av2.at(i, j);
          g.accumulate(bi, gb);
        }
      },
      "row_dot");
}

Var row_l2_norm(Var a) {
  const Tensor& av = a.value();
  require_rank2(av, "row_l2_norm");
  std::size_t m = av.rows(), n = av.cols();
  Tensor out({m});
  for (std::size_t i = 0; i < m; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) acc += av.at(i, j) * av.at(i, j);
    out[i] = std::sqrt(acc);
  }
  int ai = a.id;
  return a.graph->make_node(
      std::move(out), {ai},
      [ai, m, n](Graph& g, int self) {
        const Tensor& gy = g.grad(self);
        const Tensor& av2 = g.value(ai);
        const Tensor& yv = g.value(self);
        Tensor ga({m, n});
        for (std::size_t i = 0; i < m; ++i) {
          double inv = gy[i] / std::max(yv[i], kNormFloor);
          for (std::size_t j = 0; j < n; ++j) ga.at(i, j) = inv * av2.at(i, j);
        }
        g.accumulate(ai, ga);
      },
      "row_l2_norm");
}

Var row_l2_normalize(Var a) {
  const Tensor& av = a.value();
  require_rank2(av, "row_l2_normalize");
  std::size_t m = av.rows(), n = av.cols();
  Tensor out({m, n});
  for (std::size_t i = 0; i < m; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) acc += av.at(i, j) * av.at(i, j);
    double r = std::sqrt(acc);
    if (r < kNormFloor) throw NumericError("row_l2_normalize: zero row");
    for (std::size_t j = 0; j < n; ++j) out.at(i, j) = av.at(i, j) / r;
  }
  int ai = a.id;
  return a.graph->make_node(
      std::move(out), {ai},
      [ai, m, n](Graph& g, int self) {
        const Tensor& gy = g.grad(self);
        const Tensor& av2 = g.value(ai);
        const Tensor& yv = g.value(self);
        Tensor ga({m, n});
        for (std::size_t i = 0; i < m; ++i) {
          double r = 0.0;
          for (std::size_t j = 0; j < n; ++j) r += av2.at(i, j) * av2.at(i, j);
          r = std::sqrt(r);
          double dot = 0.0;
          for (std::size_t j = 0; j < n; ++j) dot += yv.at(i, j) * gy.at(i, j);
          for (std::size_t j = 0; j < n; ++j) {
            ga.at(i, j) = (gy.at(i, j) - yv.at(i, j) * dot) / r;
          }
        }
        g.accumulate(ai, ga);
      },
      "row_l2_normalize");
}

Var logsumexp_rows(Var a) {
  const Tensor& av = a.value();
  require_rank2(av, "logsumexp_rows");
  std::size_t m = av.rows(), n = av.cols();
  Tensor out({m});
  for (std::size_t i = 0; i < m; ++i) {
    double mx = av.at(i, 0);
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, av.at(i, j));
    double acc = 0.0;
    for (std::size_t j = 0; j < n; ++j) acc += std::exp(av.at(i, j) - mx);
    out[i] = mx + std::log(acc);
  }
  int ai = a.id;
  return a.graph->make_node(
      std::move(out), {ai},
      [ai, m, n](Graph& g, int self) {
        const Tensor& gy = g.grad(self);
        const Tensor& av2 = g.value(ai);
        const Tensor& yv = g.value(self);
        Tensor ga({m, n});
        for (std::size_t i = 0; i < m; ++i) {
          for (std::size_t j = 0; j < n; ++j) {
            ga.at(i, j) = gy[i] * std::exp(av2.at(i, j) - yv[i]);
          }
        }
        g.accumulate(ai, ga);
      },
      "logsumexp_rows");
}

Var concat_cols(Var a, Var b) {
  require_same_graph(a, b, "concat_cols");
  const Tensor& av = a.value();
  const Tensor& bv = b.value();
  require_rank2(av, "concat_cols");
  require_rank2(bv, "concat_cols");
  if (av.rows() != bv.rows()) {
    throw ShapeError("concat_cols: row mismatch " + av.shape_str() + " vs " + bv.shape_str());
  }
  std::size_t m = av.rows(), p = av.cols(), q = bv.cols();
  Tensor out({m, p + q});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < p; ++j) out.at(i, j) = av.at(i, j);
    for (std::size_t j = 0; j < q; ++j) out.at(i, p + j) = bv.at(i, j);
  }
  int ai = a.id, bi = b.id;
  return a.graph->make_node(
      std::move(out), {ai, bi},
      [ai, bi, m, p, q](Graph& g, int self) {
        const Tensor& gy = g.grad(self);
        if (g.requires_grad(ai)) {
          Tensor ga({m, p});
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < p; ++j) ga.at(i, j) = gy.at(i, j);
          g.accumulate(ai, ga);
        }
        if (g.requires_grad(bi)) {
          Tensor gb({m, q});
          for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < q; ++j) gb.at(i, j) = gy.at(i, p + j);
          g.accumulate(bi, gb);
        }
      },
      "concat_cols");
}

Var diag(Var a) {
  const Tensor& av = a.value();
  require_rank2(av, "diag");
  if (av.rows() != av.cols()) throw ShapeError("diag: matrix must be square, got " + av.shape_str());
  std::size_t m = av.rows();
  Tensor out({m});
  for (std::size_t i = 0; i < m; ++i) out[i] = av.at(i, i);
  int ai = a.id;
  return a.graph->make_node(
      std::move(out), {ai},
      [ai, m](Graph& g, int self) {
        const Tensor& gy = g.grad(self);
        Tensor ga({m, m});
        for (std::size_t i = 0; i < m; ++i) ga.at(i, i) = gy[i];
        g.accumulate(ai, ga);
      },
      "diag");
}

Var reshape(Var a, std::vector<std::size_t> shape) {
  const Tensor& av = a.value();
  Tensor out(std::move(shape), av.values());
  int ai = a.id;
  return a.graph->make_node(
      std::move(out), {ai},
      [ai](Graph& g, int self) {
        const Tensor& gy = g.grad(self);
        Tensor ga(g.value(ai).shape(), gy.values());
        g.accumulate(ai, ga);
      },
      "reshape");
}

}  // namespace tavi::numerics
