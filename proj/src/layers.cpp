#include "gnnpp/layers.hpp"

#include <cmath>

namespace gnnpp {

namespace {

int find_or_throw(const ParameterStore& ps, const std::string& name) {
    const int id = ps.find(name);
    if (id < 0) throw LookupError("parameter '" + name + "' not found in store");
    return id;
}

}  // namespace

Tensor dense_init(int in_dim, int out_dim, Rng& rng) {
    Tensor t(in_dim, out_dim);
    const double bound = 1.0 / std::sqrt(static_cast<double>(in_dim));
    for (double& x : t.v) x = rng.uniform(-bound, bound);
    return t;
}

Tensor zeros_init(int rows, int cols) { return Tensor(rows, cols); }

Tensor embedding_init(int n_rows, int n_cols, Rng& rng) {
    Tensor t(n_rows, n_cols);
    for (double& x : t.v) x = 0.05 * rng.gaussian();
    return t;
}

void GatConfig::validate() const {
    if (in_dim < 1) throw ConfigError("attention layer needs in_dim >= 1");
    if (out_dim < 1) throw ConfigError("attention layer needs out_dim >= 1");
    if (heads < 1) throw ConfigError("attention layer needs at least one head");
    if (edge_dim < 1) throw ConfigError("attention layer needs edge_dim >= 1");
    if (negative_slope != 0.2)
        throw ConfigError("attention scoring is fixed to negative slope 0.2");
}

GatLayer GatLayer::create(ParameterStore& ps, const std::string& prefix, const GatConfig& cfg,
                          Rng& rng) {
    cfg.validate();
    GatLayer l;
    l.cfg_ = cfg;
    const int ha = cfg.heads * cfg.out_dim;
    l.wt_ = ps.add(prefix + ".wt", dense_init(cfg.in_dim, ha, rng));
    l.ws_ = ps.add(prefix + ".ws", dense_init(cfg.in_dim, ha, rng));
    l.we_ = ps.add(prefix + ".we", dense_init(cfg.edge_dim, ha, rng));
    l.b_score_ = ps.add(prefix + ".b_score", zeros_init(1, ha));
    Tensor attn_vec = dense_init(cfg.out_dim, cfg.heads, rng);  // bound 1/sqrt(out_dim)
    attn_vec.n_rows = cfg.heads;
    attn_vec.n_cols = cfg.out_dim;
    l.attn_ = ps.add(prefix + ".attn", std::move(attn_vec));
    l.value_ = ps.add(prefix + ".value", dense_init(cfg.in_dim, ha, rng));
    l.w_mix_ = ps.add(prefix + ".w_mix", dense_init(ha, cfg.out_dim, rng));
    l.b_mix_ = ps.add(prefix + ".b_mix", zeros_init(1, cfg.out_dim));
    l.w_self_ = ps.add(prefix + ".w_self", dense_init(cfg.in_dim, cfg.out_dim, rng));
    l.b_self_ = ps.add(prefix + ".b_self", zeros_init(1, cfg.out_dim));
    return l;
}

GatLayer GatLayer::bind(const ParameterStore& ps, const std::string& prefix,
                        const GatConfig& cfg) {
    cfg.validate();
    GatLayer l;
    l.cfg_ = cfg;
    l.wt_ = find_or_throw(ps, prefix + ".wt");
    l.ws_ = find_or_throw(ps, prefix + ".ws");
    l.we_ = find_or_throw(ps, prefix + ".we");
    l.b_score_ = find_or_throw(ps, prefix + ".b_score");
    l.attn_ = find_or_throw(ps, prefix + ".attn");
    l.value_ = find_or_throw(ps, prefix + ".value");
    l.w_mix_ = find_or_throw(ps, prefix + ".w_mix");
    l.b_mix_ = find_or_throw(ps, prefix + ".b_mix");
    l.w_self_ = find_or_throw(ps, prefix + ".w_self");
    l.b_self_ = find_or_throw(ps, prefix + ".b_self");
    return l;
}

int GatLayer::forward(Tape& tape, const ForecastGraph& g, int x, Tensor* attn_out) const {
    require_shape(tape.val(x), g.n_nodes(), cfg_.in_dim, "attention layer input");
    const int pt = tape.dense(x, tape.param(wt_), tape.param(b_score_));
    const int ps = tape.matmul(x, tape.param(ws_));
    const int edge = tape.constant(g.edge_features);
    const int pe = tape.matmul(edge, tape.param(we_));
    const int zd = tape.gather(pt, &g.edge_dst, &g.in_plan);
    const int zs = tape.gather(ps, &g.edge_src, &g.src_plan);
    const int z = tape.add(tape.add(zd, zs), pe);
    const int act = tape.unary(kernels::Unary::LeakyRelu02, z);
    const int scores = tape.head_dot(tape.param(attn_), act);
    const int alpha = tape.segment_softmax(scores, &g.in_plan.offsets);
    if (attn_out) *attn_out = tape.val(alpha);
    const int pv = tape.matmul(x, tape.param(value_));
    const int mv = tape.gather(pv, &g.edge_src, &g.src_plan);
    const int msg = tape.head_scale(alpha, mv);
    const int agg = tape.segment_sum(msg, &g.in_plan, &g.edge_dst);
    const int mixed = tape.dense(agg, tape.param(w_mix_), tape.param(b_mix_));
    const int self = tape.dense(x, tape.param(w_self_), tape.param(b_self_));
    return tape.add(mixed, self);
}

void StackConfig::validate() const {
    if (in_dim < 1) throw ConfigError("stack needs in_dim >= 1");
    if (hidden < 1) throw ConfigError("stack needs hidden >= 1");
    if (heads < 1) throw ConfigError("stack needs at least one head");
    if (k_blocks < 1) throw ConfigError("stack needs at least one block");
}

GnnStack GnnStack::create(ParameterStore& ps, const std::string& prefix, const StackConfig& cfg,
                          Rng& rng) {
    cfg.validate();
    GnnStack st;
    st.cfg_ = cfg;
    if (cfg.in_dim != cfg.hidden)
        st.w_proj_ = ps.add(prefix + ".proj", dense_init(cfg.in_dim, cfg.hidden, rng));
    for (int k = 0; k < cfg.k_blocks; ++k) {
        GatConfig gc;
        gc.in_dim = k == 0 ? cfg.in_dim : cfg.hidden;
        gc.out_dim = cfg.hidden;
        gc.heads = cfg.heads;
        st.blocks_.push_back(
            GatLayer::create(ps, prefix + ".block" + std::to_string(k), gc, rng));
    }
    return st;
}

GnnStack GnnStack::bind(const ParameterStore& ps, const std::string& prefix,
                        const StackConfig& cfg) {
    cfg.validate();
    GnnStack st;
    st.cfg_ = cfg;
    if (cfg.in_dim != cfg.hidden) st.w_proj_ = find_or_throw(ps, prefix + ".proj");
    for (int k = 0; k < cfg.k_blocks; ++k) {
        GatConfig gc;
        gc.in_dim = k == 0 ? cfg.in_dim : cfg.hidden;
        gc.out_dim = cfg.hidden;
        gc.heads = cfg.heads;
        st.blocks_.push_back(GatLayer::bind(ps, prefix + ".block" + std::to_string(k), gc));
    }
    return st;
}

int GnnStack::forward(Tape& tape, const ForecastGraph& g, int x) const {
    int h = x;
    for (std::size_t k = 0; k < blocks_.size(); ++k) {
        const int skip = (k == 0 && w_proj_ >= 0) ? tape.matmul(h, tape.param(w_proj_)) : h;
        h = tape.add(skip, blocks_[k].forward(tape, g, h));
        if (k + 1 < blocks_.size()) h = tape.unary(kernels::Unary::Elu, h);
    }
    return h;
}

void DeepSetConfig::validate() const {
    if (in_dim < 1) throw ConfigError("deep set head needs in_dim >= 1");
    if (width < 0) throw ConfigError("deep set head width must be non-negative");
}

DeepSetHead DeepSetHead::create(ParameterStore& ps, const std::string& prefix,
                                const DeepSetConfig& cfg, Rng& rng) {
    cfg.validate();
    DeepSetHead h;
    h.cfg_ = cfg;
    const int w = cfg.inner_width();
    const int dims[4] = {cfg.in_dim, w, w, w};
    for (int i = 0; i < 3; ++i) {
        h.phi_w_[i] = ps.add(prefix + ".phi" + std::to_string(i) + ".w",
                             dense_init(dims[i], dims[i + 1], rng));
        h.phi_b_[i] =
            ps.add(prefix + ".phi" + std::to_string(i) + ".b", zeros_init(1, dims[i + 1]));
    }
    h.rho_w_[0] = ps.add(prefix + ".rho0.w", dense_init(w, w, rng));
    h.rho_b_[0] = ps.add(prefix + ".rho0.b", zeros_init(1, w));
    h.rho_w_[1] = ps.add(prefix + ".rho1.w", dense_init(w, 2, rng));
    h.rho_b_[1] = ps.add(prefix + ".rho1.b", zeros_init(1, 2));
    return h;
}

DeepSetHead DeepSetHead::bind(const ParameterStore& ps, const std::string& prefix,
                              const DeepSetConfig& cfg) {
    cfg.validate();
    DeepSetHead h;
    h.cfg_ = cfg;
    for (int i = 0; i < 3; ++i) {
        h.phi_w_[i] = find_or_throw(ps, prefix + ".phi" + std::to_string(i) + ".w");
        h.phi_b_[i] = find_or_throw(ps, prefix + ".phi" + std::to_string(i) + ".b");
    }
    h.rho_w_[0] = find_or_throw(ps, prefix + ".rho0.w");
    h.rho_b_[0] = find_or_throw(ps, prefix + ".rho0.b");
    h.rho_w_[1] = find_or_throw(ps, prefix + ".rho1.w");
    h.rho_b_[1] = find_or_throw(ps, prefix + ".rho1.b");
    return h;
}

int DeepSetHead::forward(Tape& tape, int h, const std::vector<int>* station_offsets) const {
    require_shape(tape.val(h), tape.val(h).n_rows, cfg_.in_dim, "deep set input");
    int z = h;
    for (int i = 0; i < 3; ++i)
        z = tape.unary(kernels::Unary::Elu,
                       tape.dense(z, tape.param(phi_w_[i]), tape.param(phi_b_[i])));
    const int pooled = tape.segment_mean_sorted(z, station_offsets);
    const int r = tape.unary(kernels::Unary::Elu,
                             tape.dense(pooled, tape.param(rho_w_[0]), tape.param(rho_b_[0])));
    const int out = tape.dense(r, tape.param(rho_w_[1]), tape.param(rho_b_[1]));
    const int mu = tape.slice_cols(out, 0, 1);
    const int sigma = tape.add_scalar(
        tape.unary(kernels::Unary::Softplus, tape.slice_cols(out, 1, 2)), 1e-12);
    return tape.concat_cols(mu, sigma);
}

}  // namespace gnnpp
