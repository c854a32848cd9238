#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "sphnet/tensor.hpp"

namespace sphnet {

class Tape;

// Lightweight handle to a node on a tape.
struct Var {
    Tape* tape = nullptr;
    int id = -1;
    bool valid() const { return tape != nullptr && id >= 0; }
};

// Wengert tape: an append-only record of primitive tensor operations. Nodes are
// created in topological order by construction, so reverse iteration is a valid
// backward schedule. Single-threaded per tape.
class Tape {
  public:
    Var leaf(Tensor value, bool requires_grad = false);
    Var constant(Tensor value) { return leaf(std::move(value), false); }

    const Tensor& value(Var v) const;
    // Accumulated adjoint of a node; valid after backward(). Zero tensor if the
    // node was never reached.
    const Tensor& grad(Var v) const;

    // Reverse pass from a scalar loss node. Seeds the loss adjoint with 1 and
    // accumulates adjoints into every grad-requiring ancestor.
    void backward(Var loss);

    std::size_t node_count() const { return nodes_.size(); }

    struct Node {
        Tensor value;
        Tensor grad;  // allocated lazily during backward
        bool requires_grad = false;
        int inputs[3] = {-1, -1, -1};
        int n_inputs = 0;
        // Propagates this node's adjoint to its inputs.
        std::function<void(Tape&, const Node&)> backprop;
    };

    Node& node(int id) { return nodes_[static_cast<std::size_t>(id)]; }
    const Node& node(int id) const { return nodes_[static_cast<std::size_t>(id)]; }
    Var push(Node n);
    void accumulate_grad(int id, const Tensor& g);
    Tensor& grad_buffer(int id);  // allocates (zeros) on first use

  private:
    std::vector<Node> nodes_;
};

// ---- primitive operations (all differentiable through the tape) ----

Var matmul(Var a, Var b);                 // [m×k]·[k×n] -> [m×n]
Var add(Var a, Var b);                    // same shape
Var sub(Var a, Var b);                    // same shape
Var mul(Var a, Var b);                    // elementwise, same shape
Var add_row(Var m, Var row);              // [r×c] + [c], row broadcast
Var scale(Var a, double s);
Var transpose(Var a);                     // 2-D
Var softmax_rows(Var a);                  // stable (row-max subtraction)
Var layer_norm(Var x, Var gamma, Var beta, double eps);
Var gelu(Var a);                          // exact erf form
Var relu(Var a);
Var mean_rows(Var a);                     // [r×c] -> [1×c]
Var mean_all(Var a);                      // -> [1]
Var sum_all(Var a);                       // -> [1]
Var concat_cols(const std::vector<Var>& parts);  // [r×c_i] -> [r×Σc_i]

// Value-level counterparts used by both forward code and tests.
Tensor matmul_values(const Tensor& a, const Tensor& b);
Tensor softmax_rows_values(const Tensor& a);
Tensor layer_norm_values(const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps);

// ---- parameter store ----

// Ordered, named collection of tensors; houses every learnable of a model.
// Iteration order is insertion order, which fixes checkpoint layout, Adam state
// alignment and grad_check probe indexing.
class ParamStore {
  public:
    Tensor& add(const std::string& name, Tensor t);
    bool has(const std::string& name) const;
    Tensor& get(const std::string& name);
    const Tensor& get(const std::string& name) const;
    std::size_t size() const { return items_.size(); }
    std::size_t total_elements() const;
    const std::vector<std::pair<std::string, Tensor>>& items() const { return items_; }
    std::vector<std::pair<std::string, Tensor>>& items() { return items_; }

  private:
    std::vector<std::pair<std::string, Tensor>> items_;
};

// ---- gradient checking ----

// Builds the scalar loss from parameter leaves placed on the given tape, in
// ParamStore insertion order.
using LossBuilder = std::function<Var(Tape&, const std::vector<Var>&)>;

// Compares tape gradients against central finite differences on probe_count
// randomly selected parameter entries; returns the worst relative error.
double grad_check(const LossBuilder& build, const ParamStore& params, int probe_count,
                  std::uint64_t seed = 0x5eedULL, double step = 1e-5);

}  // namespace sphnet
