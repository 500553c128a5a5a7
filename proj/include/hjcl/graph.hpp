#pragma once

#include <Eigen/Dense>

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "hjcl/errors.hpp"

namespace hjcl {

using Matrix = Eigen::MatrixXd;

class Graph;

// Handle to one node of a Graph. Cheap to copy; valid until the owning
// graph is destroyed or cleared.
class Tensor {
 public:
  Tensor() = default;

  bool valid() const { return graph_ != nullptr; }
  int id() const { return id_; }
  Eigen::Index rows() const;
  Eigen::Index cols() const;
  const Matrix& value() const;
  bool requires_grad() const;

  // Accumulated gradient of the last backward() calls. Throws if the node
  // does not require gradients.
  const Matrix& grad() const;
  bool has_grad() const;

  // Value of a 1x1 tensor.
  double item() const;

  Graph& graph() const;

 private:
  friend class Graph;
  Tensor(Graph* graph, int id) : graph_(graph), id_(id) {}
  Graph* graph_ = nullptr;
  int id_ = -1;
};

// Scratch adjoint store used during one backward sweep.
class Adjoints {
 public:
  bool wants(int id) const;

  template <class Delta>
  void add(int id, const Delta& delta) {
    Matrix& slot = slots_[static_cast<std::size_t>(id)];
    if (slot.size() == 0) {
      slot = delta;
    } else {
      slot += delta;
    }
  }

 private:
  friend class Graph;
  Adjoints(const Graph& g, std::vector<Matrix>& slots) : graph_(g), slots_(slots) {}
  const Graph& graph_;
  std::vector<Matrix>& slots_;
};

using BackwardFn = std::function<void(Graph&, const Matrix& out_adj, Adjoints& adj)>;

// Reverse-mode tape over dense double matrices. Nodes are created in
// topological order by construction; backward() sweeps ids in reverse and
// visits each node once. One graph is confined to a single thread for its
// build/forward/backward lifetime.
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Tensor leaf(Matrix value, bool requires_grad = false);
  Tensor scalar(double value);  // 1x1 constant

  // Seeds d(loss)/d(loss) = 1 and accumulates d(loss)/d(node) into the
  // grad slot of every gradient-requiring ancestor. Calling backward again
  // without zero_grad() adds another full pass on top (grads accumulate).
  void backward(const Tensor& loss);

  void zero_grad();
  void clear();

  int size() const { return static_cast<int>(nodes_.size()); }

  // First node holding a non-finite value, as "op#id (rxc)". Used for
  // diagnostics when a loss comes out non-finite.
  std::optional<std::string> first_nonfinite() const;

  // Node construction; used by the op free functions.
  Tensor make(Matrix value, const char* op, std::vector<int> inputs, BackwardFn backward);

  const Matrix& value_of(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  bool node_requires_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].requires_grad; }
  const char* op_of(int id) const { return nodes_[static_cast<std::size_t>(id)].op; }

 private:
  friend class Tensor;

  struct Node {
    Matrix value;
    Matrix grad;  // empty until populated by backward
    bool requires_grad = false;
    const char* op = "leaf";
    std::vector<int> inputs;
    BackwardFn backward;
  };

  std::vector<Node> nodes_;
};

// ---- op set -------------------------------------------------------------
// All ops are shape-strict: no broadcasting, mismatches throw ShapeError
// naming the op and both operand shapes.

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor operator+(const Tensor& a, const Tensor& b);
Tensor operator-(const Tensor& a, const Tensor& b);
Tensor operator*(double c, const Tensor& a);
inline Tensor operator*(const Tensor& a, double c) { return c * a; }
Tensor hadamard(const Tensor& a, const Tensor& b);

Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor gather_rows(const Tensor& a, std::vector<int> rows);
Tensor mean_rows(const Tensor& a, std::vector<int> rows);
Tensor flatten_to_row(const Tensor& a);  // row-major (n x d) -> (1 x nd)

Tensor row_softmax(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor softplus(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor leaky_relu(const Tensor& a, double negative_slope);

Tensor sum_all(const Tensor& a);      // 1x1
Tensor log_sum_exp(const Tensor& a);  // 1x1, stable, over all entries

// Rows rescaled to unit L2 norm. Throws NumericError on a zero-norm row.
Tensor row_l2_normalize(const Tensor& a);

// Composites built from the primitives above.
Tensor scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& v);
Tensor cosine_similarity(const Tensor& u, const Tensor& v);  // two 1xd rows -> 1x1

}  // namespace hjcl
