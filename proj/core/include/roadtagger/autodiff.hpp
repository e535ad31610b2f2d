#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "roadtagger/tensor.hpp"

namespace roadtagger {

// Trainable tensor with a gradient accumulator and Adam state.
struct Parameter {
    std::string name;
    Tensor value;
    Tensor grad;
    Tensor adam_m, adam_v;  // sized lazily by the optimizer

    void zero_grad() { grad.fill(0.0); }
};

// Owns parameters in creation order; addresses are stable.
class ParamStore {
public:
    Parameter& create(std::string name, Tensor init);
    Parameter* find(const std::string& name);
    const std::vector<std::unique_ptr<Parameter>>& items() const { return items_; }

    void zero_grads();
    std::size_t total_size() const;

    // Value snapshot in creation order, for best-checkpoint selection.
    std::vector<Tensor> state() const;
    void set_state(const std::vector<Tensor>& state);

private:
    std::vector<std::unique_ptr<Parameter>> items_;
};

// Glorot-uniform draw, deterministic per seed. 1-D shapes (biases) use
// fan_in = fan_out = length.
Tensor glorot_uniform(std::vector<int> shape, std::uint64_t seed);

// Handle to a node on a Tape.
struct Var {
    int id = -1;
    bool valid() const { return id >= 0; }
};

// Reverse-mode tape. Records one forward pass; rebuilt each step. Every op
// validates shapes and rejects non-finite outputs. backward() accumulates
// into Parameter::grad for every parameter leaf touched by the pass.
class Tape {
public:
    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var input(Tensor value);     // differentiable leaf
    Var constant(Tensor value);  // gradient-free leaf
    Var param(Parameter& p);     // leaf bound to a parameter; cached per tape

    Var matmul(Var a, Var b);
    Var add(Var a, Var b);  // same shape, or row-vector b broadcast over rows of a
    Var sub(Var a, Var b);
    Var mul(Var a, Var b);  // elementwise
    Var scale(Var a, double c);
    Var sigmoid(Var a);
    Var tanh(Var a);
    Var relu(Var a);
    Var concat_cols(const std::vector<Var>& parts);
    Var slice_chunk(Var a, int chunk, int chunk_count);  // split of the last axis
    Var softmax_rows(Var a);
    Var cross_entropy(Var logits, const std::vector<int>& classes);  // rows x 1
    Var mean_rows(Var a, const std::vector<std::vector<int>>& groups);
    Var row_sum(Var a);  // rows x cols -> rows x 1
    Var stop_gradient(Var a);

    const Tensor& value(Var v) const;
    // Gradient w.r.t. any node, valid after backward(); zeros if untouched.
    Tensor grad(Var v) const;

    void backward(Var loss);

    int node_count() const { return static_cast<int>(nodes_.size()); }

private:
    struct Node {
        Tensor value;
        Tensor grad;  // empty until needed
        bool needs_grad = false;
        Parameter* bound = nullptr;
        std::function<void()> backprop;
    };

    Var emplace(Tensor value, bool needs_grad, const char* op);
    Tensor& grad_buf(int id);
    bool needs(Var v) const { return nodes_[v.id].needs_grad; }
    void check(Var v, const char* op) const;

    // deque keeps value() references stable while later ops are recorded
    std::deque<Node> nodes_;
    std::vector<std::pair<Parameter*, int>> param_nodes_;
    bool ran_backward_ = false;
};

}  // namespace roadtagger
