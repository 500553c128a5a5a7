#include "hjcl/graph.hpp"

#include <cmath>
#include <sstream>
#include <utility>

namespace hjcl {

namespace {

std::string shape_str(const Matrix& m) {
  std::ostringstream os;
  os << m.rows() << "x" << m.cols();
  return os.str();
}

[[noreturn]] void shape_fail(const char* op, const Matrix& a) {
  throw ShapeError(std::string(op) + ": bad shape (" + shape_str(a) + ")");
}

[[noreturn]] void shape_fail(const char* op, const Matrix& a, const Matrix& b) {
  throw ShapeError(std::string(op) + ": shape mismatch (" + shape_str(a) + ") vs (" +
                   shape_str(b) + ")");
}

void require_same_graph(const char* op, const Tensor& a, const Tensor& b) {
  if (&a.graph() != &b.graph()) {
    throw std::logic_error(std::string(op) + ": operands belong to different graphs");
  }
}

}  // namespace

// ---- Tensor ---------------------------------------------------------------

Graph& Tensor::graph() const {
  if (!graph_) throw std::logic_error("use of default-constructed Tensor");
  return *graph_;
}

const Matrix& Tensor::value() const { return graph().value_of(id_); }
Eigen::Index Tensor::rows() const { return value().rows(); }
Eigen::Index Tensor::cols() const { return value().cols(); }
bool Tensor::requires_grad() const { return graph().node_requires_grad(id_); }

double Tensor::item() const {
  const Matrix& v = value();
  if (v.rows() != 1 || v.cols() != 1) shape_fail("item", v);
  return v(0, 0);
}

// ---- Graph ------------------------------------------------------------------

bool Adjoints::wants(int id) const { return graph_.node_requires_grad(id); }

Tensor Graph::leaf(Matrix value, bool requires_grad) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  nodes_.push_back(std::move(n));
  return Tensor(this, static_cast<int>(nodes_.size()) - 1);
}

Tensor Graph::scalar(double value) {
  Matrix m(1, 1);
  m(0, 0) = value;
  return leaf(std::move(m), false);
}

Tensor Graph::make(Matrix value, const char* op, std::vector<int> inputs, BackwardFn backward) {
  Node n;
  n.value = std::move(value);
  n.op = op;
  for (int i : inputs) {
    n.requires_grad = n.requires_grad || nodes_[static_cast<std::size_t>(i)].requires_grad;
  }
  n.inputs = std::move(inputs);
  if (n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Tensor(this, static_cast<int>(nodes_.size()) - 1);
}

void Graph::backward(const Tensor& loss) {
  if (&loss.graph() != this) throw std::logic_error("backward: loss from another graph");
  const Matrix& lv = loss.value();
  if (lv.rows() != 1 || lv.cols() != 1) shape_fail("backward", lv);
  if (!nodes_[static_cast<std::size_t>(loss.id_)].requires_grad) return;

  std::vector<Matrix> slots(nodes_.size());
  slots[static_cast<std::size_t>(loss.id_)] = Matrix::Ones(1, 1);
  Adjoints adj(*this, slots);
  for (int id = loss.id_; id >= 0; --id) {
    Node& node = nodes_[static_cast<std::size_t>(id)];
    Matrix& slot = slots[static_cast<std::size_t>(id)];
    if (slot.size() == 0 || !node.backward) continue;
    node.backward(*this, slot, adj);
  }
  for (std::size_t id = 0; id < nodes_.size(); ++id) {
    Node& node = nodes_[id];
    const Matrix& slot = slots[id];
    if (!node.requires_grad || slot.size() == 0) continue;
    if (node.grad.size() == 0) {
      node.grad = slot;
    } else {
      node.grad += slot;
    }
  }
}

void Graph::zero_grad() {
  for (Node& n : nodes_) n.grad.resize(0, 0);
}

void Graph::clear() { nodes_.clear(); }

const Matrix& Tensor::grad() const {
  Graph& g = graph();
  Graph::Node& n = g.nodes_[static_cast<std::size_t>(id_)];
  if (!n.requires_grad) {
    throw std::logic_error(std::string("grad(): node '") + n.op + "' does not require gradients");
  }
  if (n.grad.size() == 0) n.grad = Matrix::Zero(n.value.rows(), n.value.cols());
  return n.grad;
}

bool Tensor::has_grad() const {
  return graph().nodes_[static_cast<std::size_t>(id_)].grad.size() != 0;
}

std::optional<std::string> Graph::first_nonfinite() const {
  for (std::size_t id = 0; id < nodes_.size(); ++id) {
    if (!nodes_[id].value.allFinite()) {
      return std::string(nodes_[id].op) + "#" + std::to_string(id) + " (" +
             shape_str(nodes_[id].value) + ")";
    }
  }
  return std::nullopt;
}

// ---- ops --------------------------------------------------------------------

namespace {
int id_of(const Tensor& t) { return t.id(); }
}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_same_graph("matmul", a, b);
  Graph& g = a.graph();
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (av.cols() != bv.rows()) shape_fail("matmul", av, bv);
  const int ia = id_of(a), ib = id_of(b);
  return g.make(av * bv, "matmul", {ia, ib},
                [ia, ib](Graph& g, const Matrix& out, Adjoints& adj) {
                  if (adj.wants(ia)) adj.add(ia, out * g.value_of(ib).transpose());
                  if (adj.wants(ib)) adj.add(ib, g.value_of(ia).transpose() * out);
                });
}

Tensor transpose(const Tensor& a) {
  Graph& g = a.graph();
  const int ia = id_of(a);
  return g.make(a.value().transpose(), "transpose", {ia},
                [ia](Graph&, const Matrix& out, Adjoints& adj) {
                  if (adj.wants(ia)) adj.add(ia, out.transpose());
                });
}

Tensor operator+(const Tensor& a, const Tensor& b) {
  require_same_graph("add", a, b);
  Graph& g = a.graph();
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (av.rows() != bv.rows() || av.cols() != bv.cols()) shape_fail("add", av, bv);
  const int ia = id_of(a), ib = id_of(b);
  return g.make(av + bv, "add", {ia, ib}, [ia, ib](Graph&, const Matrix& out, Adjoints& adj) {
    if (adj.wants(ia)) adj.add(ia, out);
    if (adj.wants(ib)) adj.add(ib, out);
  });
}

Tensor operator-(const Tensor& a, const Tensor& b) {
  require_same_graph("sub", a, b);
  Graph& g = a.graph();
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (av.rows() != bv.rows() || av.cols() != bv.cols()) shape_fail("sub", av, bv);
  const int ia = id_of(a), ib = id_of(b);
  return g.make(av - bv, "sub", {ia, ib}, [ia, ib](Graph&, const Matrix& out, Adjoints& adj) {
    if (adj.wants(ia)) adj.add(ia, out);
    if (adj.wants(ib)) adj.add(ib, -out);
  });
}

Tensor operator*(double c, const Tensor& a) {
  Graph& g = a.graph();
  const int ia = id_of(a);
  return g.make(c * a.value(), "scalar_mul", {ia},
                [ia, c](Graph&, const Matrix& out, Adjoints& adj) {
                  if (adj.wants(ia)) adj.add(ia, c * out);
                });
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
  require_same_graph("hadamard", a, b);
  Graph& g = a.graph();
  const Matrix& av = a.value();
  const Matrix& bv = b.value();
  if (av.rows() != bv.rows() || av.cols() != bv.cols()) shape_fail("hadamard", av, bv);
  const int ia = id_of(a), ib = id_of(b);
  return g.make(av.cwiseProduct(bv), "hadamard", {ia, ib},
                [ia, ib](Graph& g, const Matrix& out, Adjoints& adj) {
                  if (adj.wants(ia)) adj.add(ia, out.cwiseProduct(g.value_of(ib)));
                  if (adj.wants(ib)) adj.add(ib, out.cwiseProduct(g.value_of(ia)));
                });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_rows: no operands");
  Graph& g = parts.front().graph();
  Eigen::Index rows = 0;
  const Eigen::Index cols = parts.front().cols();
  std::vector<int> ids;
  ids.reserve(parts.size());
  for (const Tensor& p : parts) {
    require_same_graph("concat_rows", parts.front(), p);
    if (p.cols() != cols) shape_fail("concat_rows", parts.front().value(), p.value());
    rows += p.rows();
    ids.push_back(id_of(p));
  }
  Matrix out(rows, cols);
  Eigen::Index at = 0;
  for (const Tensor& p : parts) {
    out.middleRows(at, p.rows()) = p.value();
    at += p.rows();
  }
  auto input_ids = ids;
  return g.make(std::move(out), "concat_rows", std::move(ids),
                [input_ids](Graph& g, const Matrix& out, Adjoints& adj) {
                  Eigen::Index at = 0;
                  for (int id : input_ids) {
                    const Eigen::Index r = g.value_of(id).rows();
                    if (adj.wants(id)) adj.add(id, out.middleRows(at, r));
                    at += r;
                  }
                });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ShapeError("concat_cols: no operands");
  Graph& g = parts.front().graph();
  Eigen::Index cols = 0;
  const Eigen::Index rows = parts.front().rows();
  std::vector<int> ids;
  ids.reserve(parts.size());
  for (const Tensor& p : parts) {
    require_same_graph("concat_cols", parts.front(), p);
    if (p.rows() != rows) shape_fail("concat_cols", parts.front().value(), p.value());
    cols += p.cols();
    ids.push_back(id_of(p));
  }
  Matrix out(rows, cols);
  Eigen::Index at = 0;
  for (const Tensor& p : parts) {
    out.middleCols(at, p.cols()) = p.value();
    at += p.cols();
  }
  auto input_ids = ids;
  return g.make(std::move(out), "concat_cols", std::move(ids),
                [input_ids](Graph& g, const Matrix& out, Adjoints& adj) {
                  Eigen::Index at = 0;
                  for (int id : input_ids) {
                    const Eigen::Index c = g.value_of(id).cols();
                    if (adj.wants(id)) adj.add(id, out.middleCols(at, c));
                    at += c;
                  }
                });
}

Tensor gather_rows(const Tensor& a, std::vector<int> rows) {
  Graph& g = a.graph();
  const Matrix& av = a.value();
  if (rows.empty()) throw ShapeError("gather_rows: empty row list");
  for (int r : rows) {
    if (r < 0 || r >= av.rows()) {
      throw ShapeError("gather_rows: row " + std::to_string(r) + " out of range (" +
                       std::to_string(av.rows()) + " rows)");
    }
  }
  Matrix out(static_cast<Eigen::Index>(rows.size()), av.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = av.row(rows[i]);
  const int ia = id_of(a);
  auto idx = rows;
  return g.make(std::move(out), "gather_rows", {ia},
                [ia, idx](Graph& g, const Matrix& out, Adjoints& adj) {
                  if (!adj.wants(ia)) return;
                  Matrix d = Matrix::Zero(g.value_of(ia).rows(), g.value_of(ia).cols());
                  for (std::size_t i = 0; i < idx.size(); ++i) {
                    d.row(idx[i]) += out.row(static_cast<Eigen::Index>(i));
                  }
                  adj.add(ia, d);
                });
}

Tensor mean_rows(const Tensor& a, std::vector<int> rows) {
  Graph& g = a.graph();
  const Matrix& av = a.value();
  if (rows.empty()) throw ShapeError("mean_rows: empty row subset");
  for (int r : rows) {
    if (r < 0 || r >= av.rows()) {
      throw ShapeError("mean_rows: row " + std::to_string(r) + " out of range (" +
                       std::to_string(av.rows()) + " rows)");
    }
  }
  Matrix out = Matrix::Zero(1, av.cols());
  for (int r : rows) out += av.row(r);
  out /= static_cast<double>(rows.size());
  const int ia = id_of(a);
  auto idx = rows;
  return g.make(std::move(out), "mean_rows", {ia},
                [ia, idx](Graph& g, const Matrix& out, Adjoints& adj) {
                  if (!adj.wants(ia)) return;
                  Matrix d = Matrix::Zero(g.value_of(ia).rows(), g.value_of(ia).cols());
                  const double w = 1.0 / static_cast<double>(idx.size());
                  for (int r : idx) d.row(r) += w * out.row(0);
                  adj.add(ia, d);
                });
}

Tensor flatten_to_row(const Tensor& a) {
  Graph& g = a.graph();
  const Matrix& av = a.value();
  Matrix out(1, av.rows() * av.cols());
  for (Eigen::Index i = 0; i < av.rows(); ++i) {
    for (Eigen::Index j = 0; j < av.cols(); ++j) out(0, i * av.cols() + j) = av(i, j);
  }
  const int ia = id_of(a);
  return g.make(std::move(out), "flatten_to_row", {ia},
                [ia](Graph& g, const Matrix& out, Adjoints& adj) {
                  if (!adj.wants(ia)) return;
                  const Eigen::Index r = g.value_of(ia).rows();
                  const Eigen::Index c = g.value_of(ia).cols();
                  Matrix d(r, c);
                  for (Eigen::Index i = 0; i < r; ++i) {
                    for (Eigen::Index j = 0; j < c; ++j) d(i, j) = out(0, i * c + j);
                  }
                  adj.add(ia, d);
                });
}

Tensor row_softmax(const Tensor& a) {
  Graph& g = a.graph();
  const Matrix& av = a.value();
  if (av.cols() < 1) shape_fail("row_softmax", av);
  Matrix out(av.rows(), av.cols());
  for (Eigen::Index i = 0; i < av.rows(); ++i) {
    const double m = av.row(i).maxCoeff();
    Eigen::RowVectorXd e = (av.row(i).array() - m).exp().matrix();
    out.row(i) = e / e.sum();
  }
  const int ia = id_of(a);
  // self is the id the node below receives (captured before make pushes it).
  return g.make(std::move(out), "row_softmax", {ia},
                [ia, self = g.size()](Graph& g, const Matrix& out, Adjoints& adj) {
                  if (!adj.wants(ia)) return;
                  const Matrix& y = g.value_of(self);
                  Matrix d(y.rows(), y.cols());
                  for (Eigen::Index i = 0; i < y.rows(); ++i) {
                    const double dot = out.row(i).dot(y.row(i));
                    d.row(i) = y.row(i).cwiseProduct((out.row(i).array() - dot).matrix());
                  }
                  adj.add(ia, d);
                });
}

namespace {

template <class Fwd, class Bwd>
Tensor elementwise(const Tensor& a, const char* op, Fwd fwd, Bwd bwd) {
  Graph& g = a.graph();
  const int ia = id_of(a);
  Matrix out = a.value().unaryExpr(fwd);
  return g.make(std::move(out), op, {ia},
                [ia, bwd](Graph& g, const Matrix& out, Adjoints& adj) {
                  if (!adj.wants(ia)) return;
                  adj.add(ia, out.cwiseProduct(g.value_of(ia).unaryExpr(bwd)));
                });
}

}  // namespace

Tensor exp(const Tensor& a) {
  return elementwise(
      a, "exp", [](double x) { return std::exp(x); }, [](double x) { return std::exp(x); });
}

Tensor log(const Tensor& a) {
  return elementwise(
      a, "log", [](double x) { return std::log(x); }, [](double x) { return 1.0 / x; });
}

Tensor softplus(const Tensor& a) {
  return elementwise(
      a, "softplus",
      [](double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); },
      [](double x) { return 1.0 / (1.0 + std::exp(-x)); });
}

Tensor sigmoid(const Tensor& a) {
  return elementwise(
      a, "sigmoid", [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
      [](double x) {
        const double s = 1.0 / (1.0 + std::exp(-x));
        return s * (1.0 - s);
      });
}

Tensor leaky_relu(const Tensor& a, double negative_slope) {
  // Derivative at exactly 0 is taken as 1.
  return elementwise(
      a, "leaky_relu",
      [negative_slope](double x) { return x >= 0.0 ? x : negative_slope * x; },
      [negative_slope](double x) { return x >= 0.0 ? 1.0 : negative_slope; });
}

Tensor sum_all(const Tensor& a) {
  Graph& g = a.graph();
  const int ia = id_of(a);
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  return g.make(std::move(out), "sum_all", {ia},
                [ia](Graph& g, const Matrix& out, Adjoints& adj) {
                  if (!adj.wants(ia)) return;
                  adj.add(ia, Matrix::Constant(g.value_of(ia).rows(), g.value_of(ia).cols(),
                                               out(0, 0)));
                });
}

Tensor log_sum_exp(const Tensor& a) {
  Graph& g = a.graph();
  const Matrix& av = a.value();
  if (av.size() == 0) shape_fail("log_sum_exp", av);
  const double m = av.maxCoeff();
  const double s = (av.array() - m).exp().sum();
  Matrix out(1, 1);
  out(0, 0) = m + std::log(s);
  const int ia = id_of(a);
  return g.make(std::move(out), "log_sum_exp", {ia},
                [ia, self = g.size()](Graph& g, const Matrix& out, Adjoints& adj) {
                  if (!adj.wants(ia)) return;
                  const double lse = g.value_of(self)(0, 0);
                  adj.add(ia, out(0, 0) * (g.value_of(ia).array() - lse).exp().matrix());
                });
}

Tensor row_l2_normalize(const Tensor& a) {
  Graph& g = a.graph();
  const Matrix& av = a.value();
  std::vector<double> norms(static_cast<std::size_t>(av.rows()));
  Matrix out(av.rows(), av.cols());
  for (Eigen::Index i = 0; i < av.rows(); ++i) {
    const double n = av.row(i).norm();
    if (n == 0.0) {
      throw NumericError("row_l2_normalize: zero-norm row " + std::to_string(i));
    }
    norms[static_cast<std::size_t>(i)] = n;
    out.row(i) = av.row(i) / n;
  }
  const int ia = id_of(a);
  return g.make(std::move(out), "row_l2_normalize", {ia},
                [ia, norms, self = g.size()](Graph& g, const Matrix& out, Adjoints& adj) {
                  if (!adj.wants(ia)) return;
                  const Matrix& y = g.value_of(self);
                  Matrix d(y.rows(), y.cols());
                  for (Eigen::Index i = 0; i < y.rows(); ++i) {
                    const double dot = out.row(i).dot(y.row(i));
                    d.row(i) = (out.row(i) - dot * y.row(i)) / norms[static_cast<std::size_t>(i)];
                  }
                  adj.add(ia, d);
                });
}

Tensor scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& v) {
  if (q.cols() != k.cols()) shape_fail("scaled_dot_attention", q.value(), k.value());
  if (k.rows() != v.rows()) shape_fail("scaled_dot_attention", k.value(), v.value());
  const double scale = 1.0 / std::sqrt(static_cast<double>(k.cols()));
  return matmul(row_softmax(scale * matmul(q, transpose(k))), v);
}

Tensor cosine_similarity(const Tensor& u, const Tensor& v) {
  if (u.rows() != 1 || v.rows() != 1 || u.cols() != v.cols()) {
    shape_fail("cosine_similarity", u.value(), v.value());
  }
  return matmul(row_l2_normalize(u), transpose(row_l2_normalize(v)));
}

}  // namespace hjcl
