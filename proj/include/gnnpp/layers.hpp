#pragma once

#include <string>
#include <vector>

#include "gnnpp/autodiff.hpp"
#include "gnnpp/graph.hpp"
#include "gnnpp/rng.hpp"

namespace gnnpp {

// U(-1/sqrt(fan_in), +1/sqrt(fan_in)), row-major (in_dim, out_dim)
Tensor dense_init(int in_dim, int out_dim, Rng& rng);
Tensor zeros_init(int rows, int cols);
// N(0, 1) scaled by 0.05
Tensor embedding_init(int n_rows, int n_cols, Rng& rng);

struct GatConfig {
    int in_dim = 0;
    int out_dim = 0;
    int heads = 1;
    int edge_dim = 1;
    double negative_slope = 0.2;  // baked into the leaky_relu kernel

    void validate() const;
};

// Multi-head attention over the forecast graph. Edge scores follow the
// dynamic-attention form a_h' * leaky_relu(W_h [x_dst ‖ x_src ‖ edge]),
// with W stored split (wt for dst, ws for src, we for the edge attribute).
// Each head carries an out_dim-wide value transform of the source node;
// heads are concatenated, mixed down to out_dim, and a learned transform
// of the node's own features is added.
class GatLayer {
  public:
    static GatLayer create(ParameterStore& ps, const std::string& prefix, const GatConfig& cfg,
                           Rng& rng);
    static GatLayer bind(const ParameterStore& ps, const std::string& prefix,
                         const GatConfig& cfg);

    // x is a tape node of shape (n_nodes, in_dim); the graph must outlive
    // the tape. attn_out, when given, receives the (n_edges, heads) weights.
    int forward(Tape& tape, const ForecastGraph& g, int x, Tensor* attn_out = nullptr) const;

    const GatConfig& config() const { return cfg_; }

  private:
    GatConfig cfg_;
    int wt_ = -1, ws_ = -1, we_ = -1, b_score_ = -1, attn_ = -1;
    int value_ = -1, w_mix_ = -1, b_mix_ = -1, w_self_ = -1, b_self_ = -1;
};

struct StackConfig {
    int in_dim = 0;
    int hidden = 0;
    int heads = 1;
    int k_blocks = 1;

    void validate() const;
};

// K residual attention blocks: H_{k+1} = skip(H_k) + gat_k(H_k), ELU
// between blocks. The first block projects the skip path when in_dim and
// hidden differ.
class GnnStack {
  public:
    static GnnStack create(ParameterStore& ps, const std::string& prefix, const StackConfig& cfg,
                           Rng& rng);
    static GnnStack bind(const ParameterStore& ps, const std::string& prefix,
                         const StackConfig& cfg);

    int forward(Tape& tape, const ForecastGraph& g, int x) const;

    const StackConfig& config() const { return cfg_; }

  private:
    StackConfig cfg_;
    std::vector<GatLayer> blocks_;
    int w_proj_ = -1;
};

struct DeepSetConfig {
    int in_dim = 0;
    int width = 0;  // 0 means in_dim

    int inner_width() const { return width > 0 ? width : in_dim; }
    void validate() const;
};

// Permutation-invariant head: (mu, sigma) = rho(mean_n ds_phi(h_n)) per
// station. ds_phi is three dense+ELU layers, rho one dense+ELU plus a
// linear pair output; sigma passes through softplus with a 1e-12 floor.
// The mean pool uses a value-sorted pairwise sum, so the output is exactly
// invariant under member permutation and full-set duplication.
class DeepSetHead {
  public:
    static DeepSetHead create(ParameterStore& ps, const std::string& prefix,
                              const DeepSetConfig& cfg, Rng& rng);
    static DeepSetHead bind(const ParameterStore& ps, const std::string& prefix,
                            const DeepSetConfig& cfg);

    // h: (n_nodes, in_dim); offsets group node rows into per-station
    // segments and must outlive the tape. Returns (n_stations, 2).
    int forward(Tape& tape, int h, const std::vector<int>* station_offsets) const;

    // bias of the final linear layer, exposed for climatological priming
    int final_bias_param() const { return rho_b_[1]; }

    const DeepSetConfig& config() const { return cfg_; }

  private:
    DeepSetConfig cfg_;
    int phi_w_[3] = {-1, -1, -1}, phi_b_[3] = {-1, -1, -1};
    int rho_w_[2] = {-1, -1}, rho_b_[2] = {-1, -1};
};

}  // namespace gnnpp
