#include "skelrep/graph.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <memory>
#include <stdexcept>

namespace skelrep {

const char* op_name(Op op) {
  switch (op) {
    case Op::input: return "input";
    case Op::parameter: return "parameter";
    case Op::matmul: return "matmul";
    case Op::add: return "add";
    case Op::hadamard: return "hadamard";
    case Op::concat: return "concat";
    case Op::slice: return "slice";
    case Op::tanh_fn: return "tanh";
    case Op::sigmoid_fn: return "sigmoid";
    case Op::sum: return "sum";
    case Op::mean: return "mean";
    case Op::scale: return "scale";
    case Op::frobenius_sq: return "frobenius_sq";
    case Op::sqrt_fn: return "sqrt";
    case Op::log_softmax: return "log_softmax";
  }
  return "?";
}

// Eight-lane dot product: fixed combination order keeps results bit-stable
// while still vectorizing without reassociation licenses.
static inline double dot8(const double* a, const double* b, std::size_t n) {
  double s0 = 0, s1 = 0, s2 = 0, s3 = 0, s4 = 0, s5 = 0, s6 = 0, s7 = 0;
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    s0 += a[i] * b[i];
    s1 += a[i + 1] * b[i + 1];
    s2 += a[i + 2] * b[i + 2];
    s3 += a[i + 3] * b[i + 3];
    s4 += a[i + 4] * b[i + 4];
    s5 += a[i + 5] * b[i + 5];
    s6 += a[i + 6] * b[i + 6];
    s7 += a[i + 7] * b[i + 7];
  }
  double s = ((s0 + s1) + (s2 + s3)) + ((s4 + s5) + (s6 + s7));
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

void gemm(bool ta, bool tb, std::size_t M, std::size_t N, std::size_t K, const double* A,
          const double* B, double* C, bool accumulate) {
  if (!accumulate) std::fill(C, C + M * N, 0.0);
  if (!ta && !tb) {
    // A[M,K] * B[K,N]
    if (N == 1) {
      for (std::size_t i = 0; i < M; ++i) C[i] += dot8(A + i * K, B, K);
      return;
    }
    for (std::size_t i = 0; i < M; ++i) {
      const double* Ai = A + i * K;
      double* Ci = C + i * N;
      for (std::size_t k = 0; k < K; ++k) {
        double a = Ai[k];
        const double* Bk = B + k * N;
        for (std::size_t j = 0; j < N; ++j) Ci[j] += a * Bk[j];
      }
    }
  } else if (ta && !tb) {
    // A stored [K,M]; C[i,j] += sum_k A[k,i] B[k,j]
    if (N == 1) {
      for (std::size_t k = 0; k < K; ++k) {
        const double* Ak = A + k * M;
        double bk = B[k];
        for (std::size_t i = 0; i < M; ++i) C[i] += Ak[i] * bk;
      }
      return;
    }
    for (std::size_t k = 0; k < K; ++k) {
      const double* Ak = A + k * M;
      const double* Bk = B + k * N;
      for (std::size_t i = 0; i < M; ++i) {
        double a = Ak[i];
        double* Ci = C + i * N;
        for (std::size_t j = 0; j < N; ++j) Ci[j] += a * Bk[j];
      }
    }
  } else if (!ta && tb) {
    // B stored [N,K]; C[i,j] += dot(A row i, B row j)
    if (K == 1) {  // outer product, the hot backward case for matvec kernels
      for (std::size_t i = 0; i < M; ++i) {
        double a = A[i];
        double* Ci = C + i * N;
        for (std::size_t j = 0; j < N; ++j) Ci[j] += a * B[j];
      }
      return;
    }
    for (std::size_t i = 0; i < M; ++i)
      for (std::size_t j = 0; j < N; ++j) C[i * N + j] += dot8(A + i * K, B + j * K, K);
  } else {
    // A stored [K,M], B stored [N,K]; C[i,j] += sum_k A[k,i] B[j,k]
    for (std::size_t i = 0; i < M; ++i)
      for (std::size_t j = 0; j < N; ++j) {
        double s = 0;
        for (std::size_t k = 0; k < K; ++k) s += A[k * M + i] * B[j * K + k];
        C[i * N + j] += s;
      }
  }
}

void Graph::check(NodeId n) const {
  if (n < 0 || static_cast<std::size_t>(n) >= nodes_.size())
    throw std::invalid_argument("graph: node id out of range");
}

NodeId Graph::push(Node n) {
  nodes_.push_back(std::move(n));
  return static_cast<NodeId>(nodes_.size() - 1);
}

NodeId Graph::input(std::vector<std::size_t> shape, std::string label) {
  Node n;
  n.op = Op::input;
  n.val.assign(Tensor::count(shape), 0.0);
  n.shape = std::move(shape);
  n.label = std::move(label);
  return push(std::move(n));
}

NodeId Graph::constant(Tensor t, std::string label) {
  NodeId id = input(t.shape, std::move(label));
  nodes_[id].val = t.v;
  nodes_[id].bound = true;
  return id;
}

NodeId Graph::parameter(std::string_view name) {
  if (!store_) throw std::logic_error("graph: no parameter store attached");
  auto it = param_nodes_.find(std::string(name));
  if (it != param_nodes_.end()) return it->second;
  int idx = store_->index_of(name);
  if (idx < 0) throw std::invalid_argument("graph: unknown parameter " + std::string(name));
  Node n;
  n.op = Op::parameter;
  n.pindex = idx;
  n.poffset = store_->offset(idx);
  n.shape = store_->tensor(idx).shape;
  n.label = std::string(name);
  NodeId id = push(std::move(n));
  param_nodes_.emplace(std::string(name), id);
  return id;
}

std::size_t Graph::nsize(NodeId n) const {
  std::size_t s = 1;
  for (auto d : nodes_[n].shape) s *= d;
  return s;
}
std::size_t Graph::nrows(NodeId n) const { return nodes_[n].shape[0]; }
std::size_t Graph::ncols(NodeId n) const {
  return nodes_[n].shape.size() == 2 ? nodes_[n].shape[1] : 1;
}

const double* Graph::vptr(NodeId n) const {
  const Node& nd = nodes_[n];
  return nd.op == Op::parameter ? store_->tensor(nd.pindex).v.data() : nd.val.data();
}

double* Graph::aptr(NodeId n) {
  Node& nd = nodes_[n];
  if (nd.op == Op::parameter && grad_sink_) return grad_sink_ + nd.poffset;
  if (nd.adj.empty()) nd.adj.assign(nsize(n), 0.0);
  return nd.adj.data();
}

NodeId Graph::matmul(NodeId a, NodeId b, bool ta, bool tb) {
  check(a);
  check(b);
  std::size_t am = ta ? ncols(a) : nrows(a), ak = ta ? nrows(a) : ncols(a);
  std::size_t bk = tb ? ncols(b) : nrows(b), bn = tb ? nrows(b) : ncols(b);
  if (ak != bk)
    throw std::invalid_argument("matmul: inner dimension mismatch " + std::to_string(ak) + " vs " +
                                std::to_string(bk));
  Node n;
  n.op = Op::matmul;
  n.a = a;
  n.b = b;
  n.ta = ta;
  n.tb = tb;
  n.shape = bn == 1 ? std::vector<std::size_t>{am} : std::vector<std::size_t>{am, bn};
  n.val.assign(am * bn, 0.0);
  return push(std::move(n));
}

NodeId Graph::add(NodeId a, NodeId b) {
  check(a);
  check(b);
  if (nodes_[a].shape != nodes_[b].shape) throw std::invalid_argument("add: shape mismatch");
  Node n;
  n.op = Op::add;
  n.a = a;
  n.b = b;
  n.shape = nodes_[a].shape;
  n.val.assign(nsize(a), 0.0);
  return push(std::move(n));
}

NodeId Graph::hadamard(NodeId a, NodeId b) {
  check(a);
  check(b);
  if (nodes_[a].shape != nodes_[b].shape) throw std::invalid_argument("hadamard: shape mismatch");
  Node n;
  n.op = Op::hadamard;
  n.a = a;
  n.b = b;
  n.shape = nodes_[a].shape;
  n.val.assign(nsize(a), 0.0);
  return push(std::move(n));
}

NodeId Graph::concat(const std::vector<NodeId>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat: no operands");
  std::size_t total = 0;
  for (NodeId p : parts) {
    check(p);
    if (nodes_[p].shape.size() != 1) throw std::invalid_argument("concat: operands must be rank-1");
    total += nsize(p);
  }
  Node n;
  n.op = Op::concat;
  n.srcs = parts;
  n.shape = {total};
  n.val.assign(total, 0.0);
  return push(std::move(n));
}

NodeId Graph::slice(NodeId a, std::size_t offset, std::size_t count,
                    std::vector<std::size_t> shape) {
  check(a);
  if (offset + count > nsize(a)) throw std::invalid_argument("slice: range out of bounds");
  if (count == 0) throw std::invalid_argument("slice: empty range");
  if (shape.empty()) shape = {count};
  if (Tensor::count(shape) != count) throw std::invalid_argument("slice: shape/count mismatch");
  Node n;
  n.op = Op::slice;
  n.a = a;
  n.off = offset;
  n.cnt = count;
  n.shape = std::move(shape);
  n.val.assign(count, 0.0);
  return push(std::move(n));
}

NodeId Graph::tanh(NodeId a) {
  check(a);
  Node n;
  n.op = Op::tanh_fn;
  n.a = a;
  n.shape = nodes_[a].shape;
  n.val.assign(nsize(a), 0.0);
  return push(std::move(n));
}

NodeId Graph::sigmoid(NodeId a) {
  check(a);
  Node n;
  n.op = Op::sigmoid_fn;
  n.a = a;
  n.shape = nodes_[a].shape;
  n.val.assign(nsize(a), 0.0);
  return push(std::move(n));
}

NodeId Graph::sum(NodeId a) {
  check(a);
  Node n;
  n.op = Op::sum;
  n.a = a;
  n.shape = {1};
  n.val.assign(1, 0.0);
  return push(std::move(n));
}

NodeId Graph::mean(NodeId a) {
  check(a);
  Node n;
  n.op = Op::mean;
  n.a = a;
  n.shape = {1};
  n.val.assign(1, 0.0);
  return push(std::move(n));
}

NodeId Graph::scale(NodeId a, double c) {
  check(a);
  Node n;
  n.op = Op::scale;
  n.a = a;
  n.c = c;
  n.shape = nodes_[a].shape;
  n.val.assign(nsize(a), 0.0);
  return push(std::move(n));
}

NodeId Graph::frobenius_sq(NodeId a) {
  check(a);
  Node n;
  n.op = Op::frobenius_sq;
  n.a = a;
  n.shape = {1};
  n.val.assign(1, 0.0);
  return push(std::move(n));
}

NodeId Graph::sqrt(NodeId a) {
  check(a);
  Node n;
  n.op = Op::sqrt_fn;
  n.a = a;
  n.shape = nodes_[a].shape;
  n.val.assign(nsize(a), 0.0);
  return push(std::move(n));
}

NodeId Graph::log_softmax(NodeId a) {
  check(a);
  if (nodes_[a].shape.size() != 1) throw std::invalid_argument("log_softmax: rank-1 input only");
  Node n;
  n.op = Op::log_softmax;
  n.a = a;
  n.shape = nodes_[a].shape;
  n.val.assign(nsize(a), 0.0);
  return push(std::move(n));
}

void Graph::set_label(NodeId n, std::string label) {
  check(n);
  nodes_[n].label = std::move(label);
}

void Graph::bind(NodeId input_node, const double* data, std::size_t n) {
  check(input_node);
  Node& nd = nodes_[input_node];
  if (nd.op != Op::input) throw std::invalid_argument("bind: not an input node");
  if (n != nd.val.size()) throw std::invalid_argument("bind: size mismatch");
  std::memcpy(nd.val.data(), data, n * sizeof(double));
  nd.bound = true;
}

void Graph::bind(NodeId input_node, const Tensor& t) { bind(input_node, t.v.data(), t.v.size()); }
void Graph::bind(NodeId input_node, std::span<const double> d) {
  bind(input_node, d.data(), d.size());
}

void Graph::fail_nonfinite(NodeId id) const {
  const Node& n = nodes_[id];
  std::string path = "node #" + std::to_string(id) + " (" + op_name(n.op) + ")";
  if (!n.label.empty()) path += " '" + n.label + "'";
  for (NodeId p : {n.a, n.b}) {
    if (p < 0) continue;
    path += " <- #" + std::to_string(p) + " (" + std::string(op_name(nodes_[p].op)) + ")";
    if (!nodes_[p].label.empty()) path += " '" + nodes_[p].label + "'";
  }
  throw std::runtime_error("graph: non-finite value at " + path);
}

void Graph::eval(Node& n, NodeId id) {
  switch (n.op) {
    case Op::input:
      if (!n.bound) throw std::runtime_error("graph: unbound input node #" + std::to_string(id) +
                                             (n.label.empty() ? "" : " '" + n.label + "'"));
      break;
    case Op::parameter:
      break;
    case Op::matmul: {
      std::size_t m = n.ta ? ncols(n.a) : nrows(n.a);
      std::size_t k = n.ta ? nrows(n.a) : ncols(n.a);
      std::size_t nn = n.tb ? nrows(n.b) : ncols(n.b);
      gemm(n.ta, n.tb, m, nn, k, vptr(n.a), vptr(n.b), n.val.data(), false);
      break;
    }
    case Op::add: {
      const double* a = vptr(n.a);
      const double* b = vptr(n.b);
      for (std::size_t i = 0; i < n.val.size(); ++i) n.val[i] = a[i] + b[i];
      break;
    }
    case Op::hadamard: {
      const double* a = vptr(n.a);
      const double* b = vptr(n.b);
      for (std::size_t i = 0; i < n.val.size(); ++i) n.val[i] = a[i] * b[i];
      break;
    }
    case Op::concat: {
      std::size_t off = 0;
      for (NodeId p : n.srcs) {
        std::size_t cnt = nsize(p);
        std::memcpy(n.val.data() + off, vptr(p), cnt * sizeof(double));
        off += cnt;
      }
      break;
    }
    case Op::slice:
      std::memcpy(n.val.data(), vptr(n.a) + n.off, n.cnt * sizeof(double));
      break;
    case Op::tanh_fn: {
      const double* a = vptr(n.a);
      for (std::size_t i = 0; i < n.val.size(); ++i) n.val[i] = std::tanh(a[i]);
      break;
    }
    case Op::sigmoid_fn: {
      const double* a = vptr(n.a);
      for (std::size_t i = 0; i < n.val.size(); ++i) n.val[i] = 1.0 / (1.0 + std::exp(-a[i]));
      break;
    }
    case Op::sum: {
      const double* a = vptr(n.a);
      double s = 0;
      for (std::size_t i = 0, e = nsize(n.a); i < e; ++i) s += a[i];
      n.val[0] = s;
      break;
    }
    case Op::mean: {
      const double* a = vptr(n.a);
      double s = 0;
      std::size_t e = nsize(n.a);
      for (std::size_t i = 0; i < e; ++i) s += a[i];
      n.val[0] = s / static_cast<double>(e);
      break;
    }
    case Op::scale: {
      const double* a = vptr(n.a);
      for (std::size_t i = 0; i < n.val.size(); ++i) n.val[i] = n.c * a[i];
      break;
    }
    case Op::frobenius_sq: {
      const double* a = vptr(n.a);
      double s = 0;
      for (std::size_t i = 0, e = nsize(n.a); i < e; ++i) s += a[i] * a[i];
      n.val[0] = s;
      break;
    }
    case Op::sqrt_fn: {
      const double* a = vptr(n.a);
      for (std::size_t i = 0; i < n.val.size(); ++i) {
        if (a[i] < 0) throw std::runtime_error("graph: sqrt of negative value at node #" +
                                               std::to_string(id));
        n.val[i] = std::sqrt(a[i]);
      }
      break;
    }
    case Op::log_softmax: {
      const double* a = vptr(n.a);
      std::size_t e = n.val.size();
      double mx = a[0];
      for (std::size_t i = 1; i < e; ++i) mx = std::max(mx, a[i]);
      double z = 0;
      for (std::size_t i = 0; i < e; ++i) z += std::exp(a[i] - mx);
      double lz = std::log(z) + mx;
      for (std::size_t i = 0; i < e; ++i) n.val[i] = a[i] - lz;
      break;
    }
  }
}

void Graph::forward() {
  for (std::size_t id = 0; id < nodes_.size(); ++id) {
    Node& n = nodes_[id];
    eval(n, static_cast<NodeId>(id));
    if (check_finite_) {
      const double* v = vptr(static_cast<NodeId>(id));
      for (std::size_t i = 0, e = nsize(static_cast<NodeId>(id)); i < e; ++i)
        if (!std::isfinite(v[i])) fail_nonfinite(static_cast<NodeId>(id));
    }
  }
}

void Graph::rebuild_needed(NodeId root) {
  needed_.assign(nodes_.size(), 0);
  std::vector<NodeId> stack{root};
  while (!stack.empty()) {
    NodeId id = stack.back();
    stack.pop_back();
    if (needed_[id]) continue;
    needed_[id] = 1;
    const Node& n = nodes_[id];
    if (n.a >= 0) stack.push_back(n.a);
    if (n.b >= 0) stack.push_back(n.b);
    for (NodeId p : n.srcs) stack.push_back(p);
  }
  needed_root_ = root;
}

void Graph::backprop(Node& n) {
  const double* g = n.adj.data();
  switch (n.op) {
    case Op::input:
    case Op::parameter:
      break;
    case Op::matmul: {
      std::size_t m = n.ta ? ncols(n.a) : nrows(n.a);
      std::size_t k = n.ta ? nrows(n.a) : ncols(n.a);
      std::size_t nn = n.tb ? nrows(n.b) : ncols(n.b);
      const double* A = vptr(n.a);
      const double* B = vptr(n.b);
      double* dA = aptr(n.a);
      double* dB = aptr(n.b);
      if (!n.ta)
        gemm(false, !n.tb, m, k, nn, g, B, dA, true);
      else
        gemm(n.tb, true, k, m, nn, B, g, dA, true);
      if (!n.tb)
        gemm(!n.ta, false, k, nn, m, A, g, dB, true);
      else
        gemm(true, n.ta, nn, k, m, g, A, dB, true);
      break;
    }
    case Op::add: {
      double* da = aptr(n.a);
      double* db = aptr(n.b);
      for (std::size_t i = 0; i < n.val.size(); ++i) {
        da[i] += g[i];
        db[i] += g[i];
      }
      break;
    }
    case Op::hadamard: {
      const double* a = vptr(n.a);
      const double* b = vptr(n.b);
      double* da = aptr(n.a);
      double* db = aptr(n.b);
      for (std::size_t i = 0; i < n.val.size(); ++i) {
        da[i] += g[i] * b[i];
        db[i] += g[i] * a[i];
      }
      break;
    }
    case Op::concat: {
      std::size_t off = 0;
      for (NodeId p : n.srcs) {
        double* dp = aptr(p);
        std::size_t cnt = nsize(p);
        for (std::size_t i = 0; i < cnt; ++i) dp[i] += g[off + i];
        off += cnt;
      }
      break;
    }
    case Op::slice: {
      double* da = aptr(n.a);
      for (std::size_t i = 0; i < n.cnt; ++i) da[n.off + i] += g[i];
      break;
    }
    case Op::tanh_fn: {
      double* da = aptr(n.a);
      for (std::size_t i = 0; i < n.val.size(); ++i) da[i] += g[i] * (1.0 - n.val[i] * n.val[i]);
      break;
    }
    case Op::sigmoid_fn: {
      double* da = aptr(n.a);
      for (std::size_t i = 0; i < n.val.size(); ++i)
        da[i] += g[i] * n.val[i] * (1.0 - n.val[i]);
      break;
    }
    case Op::sum: {
      double* da = aptr(n.a);
      double g0 = g[0];
      for (std::size_t i = 0, e = nsize(n.a); i < e; ++i) da[i] += g0;
      break;
    }
    case Op::mean: {
      double* da = aptr(n.a);
      std::size_t e = nsize(n.a);
      double g0 = g[0] / static_cast<double>(e);
      for (std::size_t i = 0; i < e; ++i) da[i] += g0;
      break;
    }
    case Op::scale: {
      double* da = aptr(n.a);
      for (std::size_t i = 0; i < n.val.size(); ++i) da[i] += n.c * g[i];
      break;
    }
    case Op::frobenius_sq: {
      const double* a = vptr(n.a);
      double* da = aptr(n.a);
      double g2 = 2.0 * g[0];
      for (std::size_t i = 0, e = nsize(n.a); i < e; ++i) da[i] += g2 * a[i];
      break;
    }
    case Op::sqrt_fn: {
      double* da = aptr(n.a);
      // Subgradient 0 at the kink (y == 0).
      for (std::size_t i = 0; i < n.val.size(); ++i)
        if (n.val[i] > 0) da[i] += g[i] * 0.5 / n.val[i];
      break;
    }
    case Op::log_softmax: {
      double* da = aptr(n.a);
      std::size_t e = n.val.size();
      double gsum = 0;
      for (std::size_t i = 0; i < e; ++i) gsum += g[i];
      for (std::size_t i = 0; i < e; ++i) da[i] += g[i] - std::exp(n.val[i]) * gsum;
      break;
    }
  }
}

void Graph::backward(NodeId root) {
  check(root);
  if (nsize(root) != 1) throw std::invalid_argument("backward: root must be scalar");
  if (needed_root_ != root) rebuild_needed(root);

  for (std::size_t id = 0; id < nodes_.size(); ++id) {
    if (!needed_[id]) continue;
    Node& n = nodes_[id];
    if (n.op == Op::parameter && grad_sink_) continue;  // caller owns the sink
    if (n.adj.empty())
      n.adj.assign(nsize(static_cast<NodeId>(id)), 0.0);
    else
      std::fill(n.adj.begin(), n.adj.end(), 0.0);
  }
  nodes_[root].adj.assign(1, 1.0);

  for (NodeId id = root; id >= 0; --id) {
    if (!needed_[id]) continue;
    Node& n = nodes_[id];
    if (n.op == Op::input || n.op == Op::parameter) continue;
    backprop(n);
  }
}

Tensor Graph::value(NodeId n) const {
  check(n);
  const Node& nd = nodes_[n];
  if (nd.op == Op::parameter) return store_->tensor(nd.pindex);
  Tensor t;
  t.shape = nd.shape;
  t.v = nd.val;
  return t;
}

double Graph::scalar(NodeId n) const {
  check(n);
  if (nsize(n) != 1) throw std::invalid_argument("scalar: node is not scalar");
  return vptr(n)[0];
}

Tensor Graph::adjoint(NodeId n) const {
  check(n);
  const Node& nd = nodes_[n];
  if (nd.op == Op::parameter && grad_sink_)
    throw std::logic_error("adjoint: parameter adjoints live in the external sink");
  Tensor t;
  t.shape = nd.shape;
  t.v = nd.adj.empty() ? std::vector<double>(nsize(n), 0.0) : nd.adj;
  return t;
}

void Graph::set_param_grad_sink(double* flat) { grad_sink_ = flat; }

void Graph::add_param_grads_to(std::vector<double>& flat) const {
  if (grad_sink_) throw std::logic_error("add_param_grads_to: sink already configured");
  flat.resize(store_ ? store_->flat_size() : 0, 0.0);
  for (const auto& [name, id] : param_nodes_) {
    const Node& n = nodes_[id];
    if (n.adj.empty()) continue;
    for (std::size_t i = 0; i < n.adj.size(); ++i) flat[n.poffset + i] += n.adj[i];
  }
}

int Graph::param_use_count(std::string_view name) const {
  return param_nodes_.count(std::string(name)) ? 1 : 0;
}

const std::vector<std::size_t>& Graph::shape(NodeId n) const {
  check(n);
  return nodes_[n].shape;
}

// --- grad check -------------------------------------------------------------

GradCheckReport grad_check(LossFn& f, ParameterStore& params, double eps, std::size_t min_coords,
                           std::uint64_t seed) {
  double v1 = f.value(params);
  double v2 = f.value(params);
  if (std::memcmp(&v1, &v2, sizeof(double)) != 0)
    throw std::runtime_error("grad_check: loss is not deterministic (value drift)");

  std::vector<double> g;
  f.value_and_grad(params, g);
  if (g.size() != params.flat_size())
    throw std::runtime_error("grad_check: gradient size mismatch");

  const std::size_t n = params.flat_size();
  std::size_t count = std::min(min_coords, n);
  std::vector<std::size_t> coords(n);
  for (std::size_t i = 0; i < n; ++i) coords[i] = i;
  if (count < n) {
    Rng rng(seed);
    for (std::size_t i = 0; i < count; ++i) {
      std::size_t j = i + rng.uniform_int(n - i);
      std::swap(coords[i], coords[j]);
    }
    coords.resize(count);
  }

  // Coordinates far below the gradient's overall scale carry only forward
  // rounding noise (~|f| ulp / eps), so the denominator floors at a fraction
  // of ||g||_inf rather than judging them against their own magnitude.
  double gmax = 0;
  for (double x : g) gmax = std::max(gmax, std::abs(x));
  const double floor = std::max(1e-8, 1e-6 * gmax);

  GradCheckReport rep;
  rep.coords = coords.size();
  (void)v1;
  for (std::size_t c : coords) {
    double x0 = params.get_flat(c);
    params.set_flat(c, x0 + eps);
    double vp = f.value(params);
    params.set_flat(c, x0 - eps);
    double vm = f.value(params);
    params.set_flat(c, x0);
    double num = (vp - vm) / (2.0 * eps);
    double rel = std::abs(g[c] - num) / std::max({std::abs(g[c]), std::abs(num), floor});
    if (rel >= rep.max_rel_err) {
      rep.max_rel_err = rel;
      rep.worst_flat_index = c;
      rep.analytic_at_worst = g[c];
      rep.numeric_at_worst = num;
      auto [e, k] = params.entry_at(c);
      rep.worst_param = params.name(e) + "[" + std::to_string(k) + "]";
    }
  }
  return rep;
}

void GraphLoss::ensure(const ParameterStore& p) {
  if (&p != store_) throw std::logic_error("GraphLoss: store mismatch");
  if (!g_) {
    g_ = std::make_unique<Graph>(store_);
    root_ = builder_(*g_);
  }
}

double GraphLoss::value(const ParameterStore& p) {
  ensure(p);
  g_->forward();
  return g_->scalar(root_);
}

double GraphLoss::value_and_grad(const ParameterStore& p, std::vector<double>& grad) {
  ensure(p);
  g_->forward();
  g_->backward(root_);
  grad.assign(store_->flat_size(), 0.0);
  g_->add_param_grads_to(grad);
  return g_->scalar(root_);
}

}  // namespace skelrep
