#pragma once

#include <functional>
#include <string>
#include <vector>

#include "gnnpp/kernels.hpp"
#include "gnnpp/tensor.hpp"

namespace gnnpp {

// Named trainable tensors with matching gradient slots.
class ParameterStore {
  public:
    int add(const std::string& name, Tensor init);
    int find(const std::string& name) const;  // -1 when absent
    int count() const { return static_cast<int>(values_.size()); }
    std::size_t total_values() const;

    const std::string& name(int id) const { return names_[static_cast<std::size_t>(id)]; }
    Tensor& value(int id) { return values_[static_cast<std::size_t>(id)]; }
    const Tensor& value(int id) const { return values_[static_cast<std::size_t>(id)]; }
    Tensor& grad(int id) { return grads_[static_cast<std::size_t>(id)]; }
    const Tensor& grad(int id) const { return grads_[static_cast<std::size_t>(id)]; }

    void zero_grads();

  private:
    std::vector<std::string> names_;
    std::vector<Tensor> values_;
    std::vector<Tensor> grads_;
};

// Gradient accumulator with one slot per parameter. Separate buffers let
// parallel workers accumulate without touching shared state; buffers are
// then reduced in a fixed order so results do not depend on thread count.
class GradBuffer {
  public:
    explicit GradBuffer(const ParameterStore& store);
    Tensor& grad(int param_id) { return grads_[static_cast<std::size_t>(param_id)]; }
    const Tensor& grad(int param_id) const { return grads_[static_cast<std::size_t>(param_id)]; }
    int count() const { return static_cast<int>(grads_.size()); }
    void zero();
    void add_from(const GradBuffer& other);
    bool all_finite() const;

  private:
    std::vector<Tensor> grads_;
};

// Reverse-mode tape over Tensor values. Build the forward graph through the
// op methods, call backward(root) once, then read gradients. Parameter
// leaves alias the store's values and write their gradients into the bound
// GradBuffer, so one buffer can accumulate across several tapes.
class Tape {
  public:
    Tape() = default;
    Tape(const ParameterStore* store, GradBuffer* buf) : store_(store), buf_(buf) {}

    int constant(Tensor value);
    int param(int param_id);

    const Tensor& val(int id) const;
    Tensor& grad(int id);

    int matmul(int a, int b);
    int add(int a, int b);
    int add_bias(int x, int bias);
    int dense(int x, int w, int bias) { return add_bias(matmul(x, w), bias); }
    int unary(kernels::Unary op, int x);
    int scale(int x, double c);
    int add_scalar(int x, double c);
    int concat_cols(int a, int b);
    int slice_cols(int x, int col_lo, int col_hi);
    // idx and plan must outlive the tape
    int gather(int x, const std::vector<int>* idx, const kernels::ScatterPlan* plan);
    int segment_softmax(int scores, const std::vector<int>* offsets);
    int segment_mean_sorted(int x, const std::vector<int>* offsets);
    // plan groups input rows by output segment; seg_of_row maps each input
    // row to its segment (used for the backward broadcast)
    int segment_sum(int x, const kernels::ScatterPlan* plan, const std::vector<int>* seg_of_row);
    int head_scale(int alpha, int v);
    int head_dot(int a, int x);
    // scalar node: mean closed-form Gaussian CRPS over rows of mu/sigma
    int crps_gaussian_mean(int mu, int sigma, const std::vector<double>* y);

    void backward(int root, double seed = 1.0);
    // throws NumericError when any node value or gradient is non-finite
    void check_finite(const std::string& where) const;
    int size() const { return static_cast<int>(nodes_.size()); }

  private:
    struct Node {
        Tensor val;
        Tensor grad;
        const Tensor* vext = nullptr;
        Tensor* gext = nullptr;
        std::function<void()> back;
    };

    int push(Tensor val, std::function<void()> back);
    Node& node(int id) { return nodes_[static_cast<std::size_t>(id)]; }
    const Node& node(int id) const { return nodes_[static_cast<std::size_t>(id)]; }

    const ParameterStore* store_ = nullptr;
    GradBuffer* buf_ = nullptr;
    std::vector<Node> nodes_;
};

}  // namespace gnnpp
