#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "skelrep/params.hpp"
#include "skelrep/tensor.hpp"

namespace skelrep {

using NodeId = int;

enum class Op : std::uint8_t {
  input,
  parameter,
  matmul,
  add,
  hadamard,
  concat,
  slice,
  tanh_fn,
  sigmoid_fn,
  sum,
  mean,
  scale,
  frobenius_sq,
  sqrt_fn,
  log_softmax,
};

const char* op_name(Op op);

// Dynamic computation graph with reverse-mode differentiation over 64-bit
// reals. Shapes are fixed at construction; values are re-evaluated in place,
// so a graph built once can be re-bound and re-run with zero allocation.
// Nodes are evaluated in creation order (operands always precede users),
// each exactly once per forward().
class Graph {
 public:
  explicit Graph(const ParameterStore* store = nullptr) : store_(store) {}

  // --- structure -----------------------------------------------------------
  NodeId input(std::vector<std::size_t> shape, std::string label = {});
  NodeId constant(Tensor t, std::string label = {});
  NodeId parameter(std::string_view name);  // one node per name, cached

  // C = op_a(A) * op_b(B); a transpose flag reads the operand transposed.
  NodeId matmul(NodeId a, NodeId b, bool transpose_a = false, bool transpose_b = false);
  NodeId add(NodeId a, NodeId b);
  NodeId hadamard(NodeId a, NodeId b);
  NodeId concat(const std::vector<NodeId>& parts);  // rank-1 operands
  // Flat (row-major) range [offset, offset+count) of a. Output is rank-1
  // unless an explicit shape with the same element count is given, which is
  // how reshapes are expressed.
  NodeId slice(NodeId a, std::size_t offset, std::size_t count,
               std::vector<std::size_t> shape = {});
  NodeId tanh(NodeId a);
  NodeId sigmoid(NodeId a);
  NodeId sum(NodeId a);
  NodeId mean(NodeId a);
  NodeId scale(NodeId a, double c);
  NodeId frobenius_sq(NodeId a);
  NodeId sqrt(NodeId a);
  NodeId log_softmax(NodeId a);

  void set_label(NodeId n, std::string label);

  // --- execution -----------------------------------------------------------
  void bind(NodeId input_node, const double* data, std::size_t n);
  void bind(NodeId input_node, const Tensor& t);
  void bind(NodeId input_node, std::span<const double> data);

  // Evaluates every node in creation order. Throws on unbound inputs, and on
  // NaN/Inf when finite checks are enabled (reporting the node path).
  void forward();
  // Reverse sweep from a scalar root: zeroes adjoints, seeds root with 1,
  // accumulates into operand adjoints. Values are left untouched.
  void backward(NodeId root);

  Tensor value(NodeId n) const;
  double scalar(NodeId n) const;  // value of a [1]-shaped node
  Tensor adjoint(NodeId n) const;

  // When set, parameter adjoints are accumulated straight into this flat
  // buffer (ParameterStore layout) instead of per-node tensors. The caller
  // zeroes the buffer; backward() only adds.
  void set_param_grad_sink(double* flat);
  // Adds parameter adjoints into `flat` (no sink configured).
  void add_param_grads_to(std::vector<double>& flat) const;

  void set_check_finite(bool on) { check_finite_ = on; }

  std::size_t node_count() const { return nodes_.size(); }
  // How many graph nodes reference this parameter (0 or 1 by construction).
  int param_use_count(std::string_view name) const;
  const std::vector<std::size_t>& shape(NodeId n) const;
  const ParameterStore* store() const { return store_; }

 private:
  struct Node {
    Op op;
    NodeId a = -1, b = -1;
    std::vector<NodeId> srcs;  // concat
    std::vector<std::size_t> shape;
    std::vector<double> val;   // empty for parameter (value lives in the store)
    std::vector<double> adj;
    bool ta = false, tb = false;
    std::size_t off = 0, cnt = 0;
    double c = 0;
    int pindex = -1;
    std::size_t poffset = 0;
    bool bound = false;
    std::string label;
  };

  const ParameterStore* store_;
  std::vector<Node> nodes_;
  std::unordered_map<std::string, NodeId> param_nodes_;
  double* grad_sink_ = nullptr;
  bool check_finite_ = true;
  // Nodes reachable from the last backward root; lazily rebuilt per root.
  std::vector<char> needed_;
  NodeId needed_root_ = -1;

  NodeId push(Node n);
  void check(NodeId n) const;
  const double* vptr(NodeId n) const;
  double* aptr(NodeId n);
  std::size_t nsize(NodeId n) const;
  std::size_t nrows(NodeId n) const;
  std::size_t ncols(NodeId n) const;
  void eval(Node& n, NodeId id);
  void backprop(Node& n);
  [[noreturn]] void fail_nonfinite(NodeId id) const;
  void rebuild_needed(NodeId root);
};

// C[M,N] (+)= op_ta(A)[M,K] * op_tb(B)[K,N]; row-major, fixed summation order.
void gemm(bool ta, bool tb, std::size_t M, std::size_t N, std::size_t K, const double* A,
          const double* B, double* C, bool accumulate);

// --- finite-difference gradient checking -----------------------------------

// A deterministic scalar objective over a parameter store. value() must return
// bit-identical results for identical parameters.
class LossFn {
 public:
  virtual ~LossFn() = default;
  virtual double value(const ParameterStore& p) = 0;
  // Returns the value and fills flat analytic gradients (store layout).
  virtual double value_and_grad(const ParameterStore& p, std::vector<double>& grad) = 0;
};

struct GradCheckReport {
  double max_rel_err = 0;
  std::size_t coords = 0;
  std::size_t worst_flat_index = 0;
  std::string worst_param;
  double analytic_at_worst = 0, numeric_at_worst = 0;
};

// Central differences at `eps` on `min_coords` sampled coordinates (all of
// them when the store is smaller). Relative error uses denominator
// max(|analytic|, |numeric|, 1e-8, 1e-6 ||g||_inf); the gradient-scale floor
// keeps near-zero coordinates from scoring forward rounding noise as error.
// Throws if value() drifts between calls.
GradCheckReport grad_check(LossFn& f, ParameterStore& params, double eps = 1e-5,
                           std::size_t min_coords = 200, std::uint64_t seed = 20240901);

// LossFn over a graph built once from a builder; parameter perturbations are
// visible through the store, so re-evaluation is just forward().
class GraphLoss : public LossFn {
 public:
  using Builder = std::function<NodeId(Graph&)>;
  GraphLoss(const ParameterStore* store, Builder b) : store_(store), builder_(std::move(b)) {}
  double value(const ParameterStore& p) override;
  double value_and_grad(const ParameterStore& p, std::vector<double>& grad) override;

 private:
  const ParameterStore* store_;
  Builder builder_;
  std::unique_ptr<Graph> g_;
  NodeId root_ = -1;
  void ensure(const ParameterStore& p);
};

}  // namespace skelrep
